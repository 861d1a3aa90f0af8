use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bspline::Basis;
use super::params::{uniform, Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Activation, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KanConfig {
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Number of grid intervals on `[-grid_bound, grid_bound]`.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_bound")]
    pub grid_bound: f64,
    #[serde(default = "default_base")]
    pub base_activation: Activation,
    /// Extra per-edge multiplier on the spline term.
    #[serde(default)]
    pub scaler: bool,
}

fn default_grid() -> usize {
    8
}

fn default_order() -> usize {
    3
}

fn default_bound() -> f64 {
    1.0
}

fn default_base() -> Activation {
    Activation::Silu
}

impl Default for KanConfig {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            grid: default_grid(),
            order: default_order(),
            grid_bound: default_bound(),
            base_activation: default_base(),
            scaler: false,
        }
    }
}

impl KanConfig {
    pub fn new(hidden: &[usize], grid: usize, order: usize) -> Self {
        Self {
            hidden: hidden.to_vec(),
            grid,
            order,
            ..Self::default()
        }
    }

    pub fn sizes(&self, n_in: usize, n_out: usize) -> Vec<usize> {
        let mut s = vec![n_in];
        s.extend(&self.hidden);
        s.push(n_out);
        s
    }

    /// Scalars per edge: spline coefficients, base weight, optional scaler.
    pub fn per_edge(&self) -> usize {
        self.grid + self.order + 1 + usize::from(self.scaler)
    }

    pub fn count(&self, n_in: usize, n_out: usize) -> usize {
        let s = self.sizes(n_in, n_out);
        s.windows(2).map(|w| w[0] * w[1]).sum::<usize>() * self.per_edge()
    }

    fn basis(&self) -> Result<Basis> {
        if self.grid == 0 || !(self.grid_bound > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "KAN grid needs intervals > 0 and bound > 0 (got {} on {})",
                self.grid, self.grid_bound
            )));
        }
        Basis::uniform_extended(-self.grid_bound, self.grid_bound, self.grid, self.order)
    }
}

/// One KAN layer: `out_o = sum_j w_base[o,j] act(x_j) + s[o,j] sum_i c[o,j,i] B_i(clamp(x_j))`.
#[derive(Clone, Debug)]
pub struct KanLayer {
    n_in: usize,
    n_out: usize,
    basis: Basis,
    base_act: Activation,
    base_w: ParamId,
    coef: ParamId,
    scaler: Option<ParamId>,
}

impl KanLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &KanConfig,
        n_in: usize,
        n_out: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::InvalidConfig(format!("{prefix}: zero KAN width")));
        }
        let basis = cfg.basis()?;
        let nb = basis.len();
        let fan = 1.0 / (n_in as f64).sqrt();
        let base_w = store.add(
            format!("{prefix}/base_weight"),
            uniform(&[n_out, n_in], fan, rng),
        );
        let coef = store.add(
            format!("{prefix}/spline_weight"),
            uniform(&[n_out, n_in, nb], 0.1 * fan, rng),
        );
        let scaler = cfg.scaler.then(|| {
            store.add(
                format!("{prefix}/spline_scaler"),
                Tensor::ones(&[n_out, n_in]),
            )
        });
        Ok(Self {
            n_in,
            n_out,
            basis,
            base_act: cfg.base_activation,
            base_w,
            coef,
            scaler,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn base_weight(&self) -> ParamId {
        self.base_w
    }

    pub fn spline_weight(&self) -> ParamId {
        self.coef
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let xs = tape.value(x).shape().to_vec();
        if xs.last() != Some(&self.n_in) {
            return Err(Error::shape("kan_layer_forward", &xs, &[self.n_in]));
        }
        let a = tape.activation(x, self.base_act);
        let base = tape.matmul_t(a, p[self.base_w])?;

        let nb = self.basis.len();
        let xv = tape.value(x);
        let mut vals = vec![0.0; xv.len() * nb];
        let mut ders = vec![0.0; xv.len() * nb];
        for ((&xi, v), d) in xv
            .data()
            .iter()
            .zip(vals.chunks_exact_mut(nb))
            .zip(ders.chunks_exact_mut(nb))
        {
            self.basis.eval_into(xi, v, Some(d));
        }
        let mut bshape = xs.clone();
        bshape.push(nb);
        let b = tape.basis_expand(x, Tensor::new(&bshape, vals)?, Tensor::new(&bshape, ders)?)?;
        let mut flat = xs.clone();
        *flat.last_mut().unwrap() = self.n_in * nb;
        let b = tape.reshape(b, &flat)?;
        let mut coef = p[self.coef];
        if let Some(s) = self.scaler {
            let s = tape.reshape(p[s], &[self.n_out, self.n_in, 1])?;
            coef = tape.mul(coef, s)?;
        }
        let coef = tape.reshape(coef, &[self.n_out, self.n_in * nb])?;
        let spline = tape.matmul_t(b, coef)?;
        tape.add(base, spline)
    }
}

/// Stack of KAN layers.
#[derive(Clone, Debug)]
pub struct Kan {
    layers: Vec<KanLayer>,
}

impl Kan {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &KanConfig,
        n_in: usize,
        n_out: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let sizes = cfg.sizes(n_in, n_out);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| KanLayer::new(store, &format!("{prefix}/layer{i}"), cfg, w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[KanLayer] {
        &self.layers
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for l in &self.layers {
            h = l.forward(tape, p, h)?;
        }
        Ok(h)
    }
}
