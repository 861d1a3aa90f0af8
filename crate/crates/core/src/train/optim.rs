//! AdamW with decoupled weight decay and the cosine schedule.

use crate::nn::ParamStore;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// `lr0 / 2 * (1 + cos(π epoch / total))`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64) -> f64 {
    if total_epochs == 0 {
        return lr0;
    }
    let e = epoch.min(total_epochs) as f64;
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * e / total_epochs as f64).cos())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(params: &ParamStore, weight_decay: f64) -> Self {
        let zeros = || {
            params
                .values()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect()
        };
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Checks every gradient first; on a shape mismatch or a non-finite
    /// entry nothing is modified.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::shape("adamw_step", &[params.len()], &[grads.len()]));
        }
        for (id, g) in params.ids().zip(grads) {
            if g.shape() != params.get(id).shape() {
                return Err(Error::shape(
                    "adamw_step",
                    params.get(id).shape(),
                    g.shape(),
                ));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(params.name(id).to_string()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        let decay = 1.0 - lr * self.weight_decay;
        let ids: Vec<_> = params.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let g = grads[k].data();
            let mut m = std::mem::replace(&mut self.m[k], Tensor::scalar(0.0)).into_vec();
            let mut v = std::mem::replace(&mut self.v[k], Tensor::scalar(0.0)).into_vec();
            let mut p = params.get(id).data().to_vec();
            for i in 0..p.len() {
                p[i] *= decay;
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
            let shape = grads[k].shape();
            self.m[k] = Tensor::new(shape, m)?;
            self.v[k] = Tensor::new(shape, v)?;
            params.set(id, Tensor::new(shape, p)?);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(v));
        s.add("b", Tensor::new(&[2], vec![1.0, -2.0]).unwrap());
        s
    }

    #[test]
    fn schedule() {
        assert_eq!(cosine_lr(0, 10, 0.3), 0.3);
        assert!(cosine_lr(10, 10, 0.3).abs() < 1e-17);
        assert!((cosine_lr(5, 10, 0.3) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_no_decay_is_a_no_op() {
        let mut p = store(0.7);
        let before = p.values().to_vec();
        let mut opt = AdamW::new(&p, 0.0);
        let g: Vec<Tensor> = p
            .values()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        for _ in 0..3 {
            opt.step(&mut p, &g, 0.1).unwrap();
        }
        assert_eq!(p.values(), &before[..]);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = store(0.7);
        let mut opt = AdamW::new(&p, 0.0);
        let g = vec![Tensor::scalar(1.0), Tensor::zeros(&[2])];
        let lr = 1e-3;
        opt.step(&mut p, &g, lr).unwrap();
        // m̂ = v̂ = 1 after bias correction
        let want = 0.7 - lr / (1.0 + 1e-8);
        assert!((p.values()[0].item() - want).abs() < 1e-12);
    }

    #[test]
    fn decoupled_decay_shrinks_geometrically() {
        let mut p = store(2.0);
        let mut opt = AdamW::new(&p, 0.5);
        let g: Vec<Tensor> = p
            .values()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        for k in 1..=4 {
            opt.step(&mut p, &g, 0.1).unwrap();
            assert!((p.values()[0].item() - 2.0 * 0.95f64.powi(k)).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut p = store(1.0);
        let before = p.values().to_vec();
        let mut opt = AdamW::new(&p, 0.1);
        let nan = vec![Tensor::scalar(f64::NAN), Tensor::zeros(&[2])];
        assert!(matches!(
            opt.step(&mut p, &nan, 0.1),
            Err(Error::NonFiniteGradient(n)) if n == "w"
        ));
        assert!(opt.step(&mut p, &[Tensor::scalar(1.0)], 0.1).is_err());
        assert_eq!(p.values(), &before[..]);
        assert_eq!(opt.step, 0);
    }
}
