use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{uniform, Bound, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Activation, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Hidden layer widths; input and output widths come from the context.
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default = "default_act")]
    pub activation: Activation,
    #[serde(default = "identity")]
    pub out_activation: Activation,
    #[serde(default = "yes")]
    pub bias: bool,
}

fn default_act() -> Activation {
    Activation::Tanh
}

fn identity() -> Activation {
    Activation::Identity
}

fn yes() -> bool {
    true
}

impl MlpConfig {
    pub fn new(hidden: &[usize], activation: Activation) -> Self {
        Self {
            hidden: hidden.to_vec(),
            activation,
            out_activation: Activation::Identity,
            bias: true,
        }
    }

    pub fn sizes(&self, n_in: usize, n_out: usize) -> Vec<usize> {
        let mut s = vec![n_in];
        s.extend(&self.hidden);
        s.push(n_out);
        s
    }

    pub fn count(&self, n_in: usize, n_out: usize) -> usize {
        let s = self.sizes(n_in, n_out);
        s.windows(2)
            .map(|w| w[0] * w[1] + if self.bias { w[1] } else { 0 })
            .sum()
    }
}

#[derive(Clone, Debug)]
struct Linear {
    w: ParamId,
    b: Option<ParamId>,
}

/// Alternating affine maps and activations acting on the trailing axis.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
    sizes: Vec<usize>,
    act: Activation,
    out_act: Activation,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &MlpConfig,
        n_in: usize,
        n_out: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let sizes = cfg.sizes(n_in, n_out);
        if sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "{prefix}: zero layer width in {sizes:?}"
            )));
        }
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let wt = store.add(
                    format!("{prefix}/layer{i}/weight"),
                    uniform(&[w[1], w[0]], bound, rng),
                );
                let b = cfg.bias.then(|| {
                    store.add(
                        format!("{prefix}/layer{i}/bias"),
                        uniform(&[w[1]], bound, rng),
                    )
                });
                Linear { w: wt, b }
            })
            .collect();
        Ok(Self {
            layers,
            sizes,
            act: cfg.activation,
            out_act: cfg.out_activation,
        })
    }

    pub fn n_in(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_out(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let xs = tape.value(x).shape();
        if xs.last() != Some(&self.n_in()) {
            return Err(Error::shape("mlp_forward", xs, &self.sizes[..1]));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = tape.matmul_t(h, p[l.w])?;
            if let Some(b) = l.b {
                h = tape.add(h, p[b])?;
            }
            h = tape.activation(h, if i == last { self.out_act } else { self.act });
        }
        Ok(h)
    }

    /// Plain weights, for code that works outside the tape.
    pub fn params(&self, store: &ParamStore) -> MlpParams {
        MlpParams {
            weights: self.layers.iter().map(|l| store.get(l.w).clone()).collect(),
            biases: self
                .layers
                .iter()
                .map(|l| l.b.map(|b| store.get(b).clone()))
                .collect(),
            activation: self.act,
            out_activation: self.out_act,
        }
    }
}

/// Explicit MLP weights: `weights[l]` is `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Option<Tensor>>,
    pub activation: Activation,
    pub out_activation: Activation,
}

impl MlpParams {
    pub fn n_in(&self) -> usize {
        self.weights[0].shape()[1]
    }

    pub fn n_out(&self) -> usize {
        self.weights.last().unwrap().shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.matmul_t(w)?;
            if let Some(b) = b {
                h = h.add(b)?;
            }
            let act = if i == last {
                self.out_activation
            } else {
                self.activation
            };
            if act != Activation::Identity {
                h = h.map(|v| act.apply(v));
            }
        }
        Ok(h)
    }

    pub fn count(&self) -> usize {
        self.weights.iter().map(Tensor::len).sum::<usize>()
            + self.biases.iter().flatten().map(Tensor::len).sum::<usize>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(hidden: &[usize], act: Activation, n_in: usize, n_out: usize) -> (ParamStore, Mlp) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new(
            &mut store,
            "mlp",
            &MlpConfig::new(hidden, act),
            n_in,
            n_out,
            &mut rng,
        )
        .unwrap();
        (store, m)
    }

    fn run(store: &ParamStore, m: &Mlp, x: Tensor) -> Tensor {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let xv = tape.constant(x);
        let y = m.forward(&mut tape, &p, xv).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn identity_layer() {
        let (mut store, m) = build(&[], Activation::Identity, 3, 3);
        store.set(store.find("mlp/layer0/weight").unwrap(), Tensor::eye(3));
        store.set(store.find("mlp/layer0/bias").unwrap(), Tensor::zeros(&[3]));
        let x = Tensor::new(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(run(&store, &m, x.clone()), x);
    }

    #[test]
    fn one_hidden_unit_tanh() {
        let (mut store, m) = build(&[1], Activation::Tanh, 2, 1);
        store.set(
            store.find("mlp/layer0/weight").unwrap(),
            Tensor::ones(&[1, 2]),
        );
        store.set(store.find("mlp/layer0/bias").unwrap(), Tensor::zeros(&[1]));
        store.set(
            store.find("mlp/layer1/weight").unwrap(),
            Tensor::ones(&[1, 1]),
        );
        store.set(store.find("mlp/layer1/bias").unwrap(), Tensor::zeros(&[1]));
        let y = run(&store, &m, Tensor::ones(&[1, 2]));
        assert!((y.item() - 0.96403).abs() < 1e-5);
        assert!((y.item() - 2f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn batch_shape_contract() {
        let (store, m) = build(&[8], Activation::Silu, 4, 5);
        let y = run(&store, &m, Tensor::ones(&[7, 3, 4]));
        assert_eq!(y.shape(), &[7, 3, 5]);
    }

    #[test]
    fn width_mismatch() {
        let (store, m) = build(&[8], Activation::Silu, 4, 5);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.constant(Tensor::ones(&[2, 3]));
        assert!(matches!(
            m.forward(&mut tape, &p, x),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn hand_count() {
        assert_eq!(MlpConfig::new(&[16], Activation::Tanh).count(80, 20), 1636);
        let (store, _) = build(&[16], Activation::Tanh, 80, 20);
        assert_eq!(store.count(), 1636);
    }

    #[test]
    fn plain_forward_matches_tape() {
        let (store, m) = build(&[6, 5], Activation::Tanh, 3, 2);
        let x = Tensor::from_fn(&[4, 3], |i| (i[0] as f64 - 1.5) * 0.3 + i[1] as f64 * 0.1);
        assert_eq!(m.params(&store).forward(&x).unwrap(), run(&store, &m, x));
    }

    #[test]
    fn gradients() {
        for seed in 0..5 {
            let mut store = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Mlp::new(
                &mut store,
                "m",
                &MlpConfig::new(&[5], Activation::Silu),
                3,
                2,
                &mut rng,
            )
            .unwrap();
            let x = uniform(&[4, 3], 1.0, &mut rng);
            check_gradients(store.values(), 1e-4, |t, v| {
                let p = Bound(v.to_vec());
                let xv = t.constant(x.clone());
                let y = m.forward(t, &p, xv)?;
                let y = t.mul(y, y)?;
                Ok(t.sum(y))
            })
            .unwrap();
        }
    }
}
