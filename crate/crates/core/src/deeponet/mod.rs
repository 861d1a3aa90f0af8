//! Hybrid DeepONet: a branch network over spatial fields, a trunk network
//! over normalized times, merged by a broadcast Hadamard product.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Bound, Fno, FnoConfig, Kan, KanConfig, Mlp, MlpConfig, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BranchConfig {
    Fno(FnoConfig),
    Kan(KanConfig),
    Mlp(MlpConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrunkConfig {
    Kan(KanConfig),
    Mlp(MlpConfig),
}

/// How an MLP or KAN branch consumes the field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchLayout {
    /// Channels on the trailing axis, every cell a batch entry.
    #[default]
    Channels,
    /// Channels times the `y` axis on the trailing axis, every `(z, x)` row a batch entry.
    ChannelsByRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub branch: BranchConfig,
    pub trunk: TrunkConfig,
    pub n_c_in: usize,
    pub n_c_out: usize,
    pub n_t: usize,
    /// `(N_x, N_y, N_z)`.
    pub extents: [usize; 3],
    #[serde(default)]
    pub layout: BranchLayout,
    /// Declared trunk output width; must equal `n_t` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunk_out: Option<usize>,
    /// Declared branch output channels; must equal `n_t * n_c_out` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch_out: Option<usize>,
}

impl ModelConfig {
    pub fn branch_channels(&self) -> usize {
        self.n_t * self.n_c_out
    }

    /// Spatial axes with extent above one (at least one axis is kept).
    pub fn active_axes(&self) -> Vec<usize> {
        let a: Vec<usize> = (0..3).filter(|&i| self.extents[i] > 1).collect();
        if a.is_empty() {
            vec![0]
        } else {
            a
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_c_in == 0 || self.n_c_out == 0 || self.n_t == 0 {
            return bad("n_c_in, n_c_out and n_t must be positive".into());
        }
        if self.extents.contains(&0) {
            return bad(format!(
                "spatial extents {:?} must be positive",
                self.extents
            ));
        }
        if let Some(w) = self.trunk_out {
            if w != self.n_t {
                return bad(format!(
                    "trunk output width {w} must equal N_t = {}",
                    self.n_t
                ));
            }
        }
        if let Some(w) = self.branch_out {
            if w != self.branch_channels() {
                return bad(format!(
                    "branch output channels {w} must equal N_t * N_c_out = {}",
                    self.branch_channels()
                ));
            }
        }
        if let BranchConfig::Fno(f) = &self.branch {
            if f.modes.len() != 3 {
                return bad(format!(
                    "FNO needs one mode count per axis (x, y, z), got {:?}",
                    f.modes
                ));
            }
        }
        Ok(())
    }

    fn fno_geometry(&self, f: &FnoConfig) -> (Vec<usize>, FnoConfig) {
        let axes = self.active_axes();
        let extents = axes.iter().map(|&a| self.extents[a]).collect();
        let mut f = f.clone();
        f.modes = axes.iter().map(|&a| f.modes[a]).collect();
        (extents, f)
    }

    /// Input and output widths of an MLP or KAN branch under the layout.
    fn pointwise_widths(&self) -> (usize, usize) {
        match self.layout {
            BranchLayout::Channels => (self.n_c_in, self.branch_channels()),
            BranchLayout::ChannelsByRow => (
                self.n_c_in * self.extents[1],
                self.branch_channels() * self.extents[1],
            ),
        }
    }
}

#[derive(Clone, Debug)]
enum Branch {
    Fno(Fno),
    Kan(Kan),
    Mlp(Mlp),
}

#[derive(Clone, Debug)]
enum Trunk {
    Kan(Kan),
    Mlp(Mlp),
}

#[derive(Clone, Debug)]
pub struct HybridModel {
    cfg: ModelConfig,
    params: ParamStore,
    branch: Branch,
    trunk: Trunk,
}

/// Deterministic construction: the same seed gives bit-identical parameters.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<HybridModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let (bi, bo) = cfg.pointwise_widths();
    let branch = match &cfg.branch {
        BranchConfig::Fno(f) => {
            let (extents, f) = cfg.fno_geometry(f);
            Branch::Fno(Fno::new(
                &mut params,
                "branch",
                &f,
                cfg.n_c_in,
                cfg.branch_channels(),
                &extents,
                &mut rng,
            )?)
        }
        BranchConfig::Kan(k) => Branch::Kan(Kan::new(&mut params, "branch", k, bi, bo, &mut rng)?),
        BranchConfig::Mlp(m) => Branch::Mlp(Mlp::new(&mut params, "branch", m, bi, bo, &mut rng)?),
    };
    let trunk = match &cfg.trunk {
        TrunkConfig::Kan(k) => Trunk::Kan(Kan::new(
            &mut params,
            "trunk",
            k,
            cfg.n_t,
            cfg.n_t,
            &mut rng,
        )?),
        TrunkConfig::Mlp(m) => Trunk::Mlp(Mlp::new(
            &mut params,
            "trunk",
            m,
            cfg.n_t,
            cfg.n_t,
            &mut rng,
        )?),
    };
    Ok(HybridModel {
        cfg: cfg.clone(),
        params,
        branch,
        trunk,
    })
}

impl HybridModel {
    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn output_shape(&self, n_s: usize) -> Vec<usize> {
        let [x, y, z] = self.cfg.extents;
        vec![n_s, self.cfg.n_c_out, self.cfg.n_t, x, y, z]
    }

    fn check_inputs(&self, v: &Tensor, xi: &Tensor) -> Result<usize> {
        let c = &self.cfg;
        let [x, y, z] = c.extents;
        let want = [v.shape().first().copied().unwrap_or(0), c.n_c_in, x, y, z];
        if v.shape() != want {
            return Err(Error::shape("hybrid_forward (v)", v.shape(), &want));
        }
        let n_s = want[0];
        if xi.shape() != [n_s, c.n_t] {
            return Err(Error::shape(
                "hybrid_forward (xi)",
                xi.shape(),
                &[n_s, c.n_t],
            ));
        }
        Ok(n_s)
    }

    /// Branch output reshaped to `[N_s, N_c_out, N_t, N_x, N_y, N_z]`.
    pub fn branch_forward(&self, tape: &mut Tape, p: &Bound, v: Var) -> Result<Var> {
        let c = &self.cfg;
        let [nx, ny, nz] = c.extents;
        let n_s = tape.value(v).shape()[0];
        let o = c.branch_channels();
        let out = match &self.branch {
            Branch::Fno(f) => {
                let mut shape = vec![n_s, c.n_c_in];
                shape.extend(c.active_axes().iter().map(|&a| c.extents[a]));
                let h = tape.reshape(v, &shape)?;
                f.forward(tape, p, h)?
            }
            Branch::Kan(_) | Branch::Mlp(_) => {
                let run = |tape: &mut Tape, h: Var| match &self.branch {
                    Branch::Kan(k) => k.forward(tape, p, h),
                    Branch::Mlp(m) => m.forward(tape, p, h),
                    Branch::Fno(_) => unreachable!(),
                };
                match c.layout {
                    BranchLayout::Channels => {
                        let h = tape.permute(v, &[0, 4, 2, 3, 1])?;
                        let h = run(tape, h)?;
                        tape.permute(h, &[0, 4, 2, 3, 1])?
                    }
                    BranchLayout::ChannelsByRow => {
                        let h = tape.permute(v, &[0, 4, 2, 1, 3])?;
                        let h = tape.reshape(h, &[n_s, nz, nx, c.n_c_in * ny])?;
                        let h = run(tape, h)?;
                        let h = tape.reshape(h, &[n_s, nz, nx, o, ny])?;
                        tape.permute(h, &[0, 3, 2, 4, 1])?
                    }
                }
            }
        };
        tape.reshape(out, &[n_s, c.n_c_out, c.n_t, nx, ny, nz])
    }

    /// Trunk output `[N_s, N_t]`.
    pub fn trunk_forward(&self, tape: &mut Tape, p: &Bound, xi: Var) -> Result<Var> {
        match &self.trunk {
            Trunk::Kan(k) => k.forward(tape, p, xi),
            Trunk::Mlp(m) => m.forward(tape, p, xi),
        }
    }

    /// Batched forward of all samples at once.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, v: Var, xi: Var) -> Result<Var> {
        let n_s = self.check_inputs(tape.value(v), tape.value(xi))?;
        let b = self.branch_forward(tape, p, v)?;
        let t = self.trunk_forward(tape, p, xi)?;
        let t = tape.reshape(t, &[n_s, 1, self.cfg.n_t, 1, 1, 1])?;
        tape.mul(b, t)
    }

    /// Values only.
    pub fn predict(&self, v: &Tensor, xi: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let p = self.params.bind(&mut tape);
        let (vv, xv) = (tape.constant(v.clone()), tape.constant(xi.clone()));
        let y = self.forward(&mut tape, &p, vv, xv)?;
        Ok(tape.value(y).clone())
    }

    /// The sample loop as written: each sample runs through branch, trunk
    /// and merge on its own, and the results are stacked.
    pub fn predict_per_sample(&self, v: &Tensor, xi: &Tensor) -> Result<Tensor> {
        let n_s = self.check_inputs(v, xi)?;
        let mut outs = Vec::with_capacity(n_s);
        for i in 0..n_s {
            let mut tape = Tape::inference();
            let p = self.params.bind(&mut tape);
            let vi = tape.constant(v.select_axis0(&[i]));
            let xv = tape.constant(xi.select_axis0(&[i]));
            let b = self.branch_forward(&mut tape, &p, vi)?;
            let t = self.trunk_forward(&mut tape, &p, xv)?;
            let b = tape.value(b).index_axis0(0);
            let t = tape.value(t).index_axis0(0);
            outs.push(merge_hadamard(&b, &t)?);
        }
        Tensor::stack(&outs)
    }
}

/// `out[c, tau, x, y, z] = b[c, tau, x, y, z] * t[tau]`.
pub fn merge_hadamard(b: &Tensor, t: &Tensor) -> Result<Tensor> {
    if b.rank() != 5 || t.rank() != 1 || b.shape()[1] != t.len() {
        return Err(Error::shape("merge_hadamard", b.shape(), t.shape()));
    }
    b.mul(&t.reshape(&[1, t.len(), 1, 1, 1])?)
}

/// Report times normalized to `[0, 1]`, one row per sample.
pub fn normalized_times(times: &[f64], n_s: usize) -> Tensor {
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| {
            (a.min(t), b.max(t))
        });
    let span = hi - lo;
    let row: Vec<f64> = times
        .iter()
        .map(|&t| if span > 0.0 { (t - lo) / span } else { 0.0 })
        .collect();
    let data = (0..n_s).flat_map(|_| row.iter().copied()).collect();
    Tensor::new(&[n_s, times.len()], data).unwrap()
}

#[cfg(test)]
mod tests;
