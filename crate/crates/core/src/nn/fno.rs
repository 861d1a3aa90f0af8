use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{uniform, Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{numel, Activation, SpectralPlan, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnoConfig {
    pub width: usize,
    /// Retained modes per spatial axis; the last axis is Hermitian-reduced.
    pub modes: Vec<usize>,
    #[serde(default = "one")]
    pub n_blocks: usize,
    /// Hidden widths of the lifting network (empty: a single affine map).
    #[serde(default)]
    pub lifting_hidden: Vec<usize>,
    /// Hidden widths of the projection network.
    #[serde(default = "default_projection")]
    pub projection_hidden: Vec<usize>,
    /// Append one normalized coordinate channel per spatial axis.
    #[serde(default)]
    pub coord_features: bool,
    #[serde(default = "default_act")]
    pub activation: Activation,
}

fn one() -> usize {
    1
}

fn default_projection() -> Vec<usize> {
    vec![128]
}

fn default_act() -> Activation {
    Activation::Silu
}

impl FnoConfig {
    pub fn new(width: usize, modes: &[usize], n_blocks: usize) -> Self {
        Self {
            width,
            modes: modes.to_vec(),
            n_blocks,
            lifting_hidden: Vec::new(),
            projection_hidden: vec![2 * width],
            coord_features: false,
            activation: default_act(),
        }
    }

    fn lifted_in(&self, c_in: usize, rank: usize) -> usize {
        c_in + if self.coord_features { rank } else { 0 }
    }

    /// Retained extent per axis for the given spatial extents.
    pub fn mode_shape(&self, extents: &[usize]) -> Vec<usize> {
        let r = extents.len();
        (0..r)
            .map(|a| {
                if a + 1 == r {
                    self.modes[a]
                } else {
                    (2 * self.modes[a]).min(extents[a])
                }
            })
            .collect()
    }

    fn affine_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// `(lifting, blocks, projection)` scalar counts.
    pub fn count(&self, c_in: usize, c_out: usize, extents: &[usize]) -> (usize, usize, usize) {
        let d = self.width;
        let mut lift = vec![self.lifted_in(c_in, extents.len())];
        lift.extend(&self.lifting_hidden);
        lift.push(d);
        let mut proj = vec![d];
        proj.extend(&self.projection_hidden);
        proj.push(c_out);
        let m: usize = self.mode_shape(extents).iter().product();
        let block = 2 * d * d * m + d * d + d;
        (
            Self::affine_count(&lift),
            self.n_blocks * block,
            Self::affine_count(&proj),
        )
    }
}

#[derive(Clone, Debug)]
struct ChannelAffine {
    w: ParamId,
    b: ParamId,
}

impl ChannelAffine {
    fn new(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        Self {
            w: store.add(
                format!("{name}/weight"),
                uniform(&[n_out, n_in], bound, rng),
            ),
            b: store.add(format!("{name}/bias"), uniform(&[n_out], bound, rng)),
        }
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        tape.channel_affine(p[self.w], p[self.b], x)
    }
}

#[derive(Clone, Debug)]
struct Block {
    r_re: ParamId,
    r_im: ParamId,
    local: ChannelAffine,
}

/// Fourier neural operator on channels-first fields `[B, C, S...]`.
#[derive(Clone, Debug)]
pub struct Fno {
    c_in: usize,
    c_out: usize,
    extents: Vec<usize>,
    modes: Vec<usize>,
    coord_features: bool,
    act: Activation,
    lifting: Vec<ChannelAffine>,
    blocks: Vec<Block>,
    projection: Vec<ChannelAffine>,
}

impl Fno {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &FnoConfig,
        c_in: usize,
        c_out: usize,
        extents: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if cfg.modes.len() != extents.len() {
            return Err(Error::InvalidConfig(format!(
                "{prefix}: {} mode counts for {} spatial axes",
                cfg.modes.len(),
                extents.len()
            )));
        }
        if cfg.width == 0 || c_in == 0 || c_out == 0 {
            return Err(Error::InvalidConfig(format!(
                "{prefix}: zero channel width"
            )));
        }
        // Validates the mode counts against the resolution.
        SpectralPlan::new(extents, &cfg.modes)?;
        let d = cfg.width;
        let mut lift = vec![cfg.lifted_in(c_in, extents.len())];
        lift.extend(&cfg.lifting_hidden);
        lift.push(d);
        let lifting = lift
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                ChannelAffine::new(
                    store,
                    &format!("{prefix}/lifting/layer{i}"),
                    w[0],
                    w[1],
                    rng,
                )
            })
            .collect();
        let mut rshape = vec![d, d];
        rshape.extend(cfg.mode_shape(extents));
        let scale = 1.0 / (d * d) as f64;
        let blocks = (0..cfg.n_blocks)
            .map(|i| {
                let name = format!("{prefix}/blocks/block{i}");
                let r_re = Tensor::from_fn(&rshape, |_| scale * rng.gen::<f64>());
                let r_im = Tensor::from_fn(&rshape, |_| scale * rng.gen::<f64>());
                Block {
                    r_re: store.add(format!("{name}/spectral_re"), r_re),
                    r_im: store.add(format!("{name}/spectral_im"), r_im),
                    local: ChannelAffine::new(store, &format!("{name}/local"), d, d, rng),
                }
            })
            .collect();
        let mut proj = vec![d];
        proj.extend(&cfg.projection_hidden);
        proj.push(c_out);
        let projection = proj
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                ChannelAffine::new(
                    store,
                    &format!("{prefix}/projection/layer{i}"),
                    w[0],
                    w[1],
                    rng,
                )
            })
            .collect();
        Ok(Self {
            c_in,
            c_out,
            extents: extents.to_vec(),
            modes: cfg.modes.clone(),
            coord_features: cfg.coord_features,
            act: cfg.activation,
            lifting,
            blocks,
            projection,
        })
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    fn coords(&self, batch: usize) -> Tensor {
        let r = self.extents.len();
        let mut shape = vec![batch, r];
        shape.extend(&self.extents);
        let ext = self.extents.clone();
        Tensor::from_fn(&shape, |ix| {
            let a = ix[1];
            let n = ext[a];
            if n > 1 {
                ix[2 + a] as f64 / (n - 1) as f64
            } else {
                0.0
            }
        })
    }

    /// `Q(blocks(P(v)))` for `v[B, c_in, S...]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, v: Var) -> Result<Var> {
        let vs = tape.value(v).shape().to_vec();
        if vs.len() != 2 + self.extents.len() || vs[1] != self.c_in || vs[2..] != self.extents[..] {
            let mut want = vec![0, self.c_in];
            want.extend(&self.extents);
            return Err(Error::shape("fno_forward", &vs, &want));
        }
        let mut h = v;
        if self.coord_features {
            let c = tape.constant(self.coords(vs[0]));
            h = tape.concat(&[h, c], 1)?;
        }
        let last = self.lifting.len() - 1;
        for (i, l) in self.lifting.iter().enumerate() {
            h = l.forward(tape, p, h)?;
            if i < last {
                h = tape.activation(h, self.act);
            }
        }
        for b in &self.blocks {
            h = self.block_forward(tape, p, b, h)?;
        }
        let last = self.projection.len() - 1;
        for (i, l) in self.projection.iter().enumerate() {
            h = l.forward(tape, p, h)?;
            if i < last {
                h = tape.activation(h, self.act);
            }
        }
        Ok(h)
    }

    fn block_forward(&self, tape: &mut Tape, p: &Bound, b: &Block, z: Var) -> Result<Var> {
        let s = tape.spectral_conv(z, p[b.r_re], p[b.r_im], &self.modes)?;
        let w = b.local.forward(tape, p, z)?;
        let h = tape.add(s, w)?;
        Ok(tape.activation(h, self.act))
    }

    /// Number of spatial points per field.
    pub fn spatial_len(&self) -> usize {
        numel(&self.extents)
    }
}

/// One Fourier layer `act(K z + W z + b)` built from explicit weights, for
/// checks that need to set `R` and `W` by hand.
pub fn fno_layer_forward(
    tape: &mut Tape,
    z: Var,
    r_re: Var,
    r_im: Var,
    w: Var,
    bias: Option<Var>,
    modes: &[usize],
    act: Activation,
) -> Result<Var> {
    let rank = tape.value(z).rank();
    let s = tape.spectral_conv(z, r_re, r_im, modes)?;
    let mut l = tape.channel_mix(w, z)?;
    if let Some(b) = bias {
        let n = tape.value(b).len();
        let mut bs = vec![n];
        bs.extend(std::iter::repeat(1).take(rank - 2));
        let b = tape.reshape(b, &bs)?;
        l = tape.add(l, b)?;
    }
    let h = tape.add(s, l)?;
    Ok(tape.activation(h, act))
}
