//! Gaussian random fields with covariance (-Δ + 9I)^-2 on the unit square.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Spectral synthesis on the Dirichlet sine basis `2 sin(mπx) sin(nπy)`,
/// evaluated on grid nodes `x_i = i / (N - 1)`; modes `1..=N` per axis.
#[derive(Clone, Debug)]
pub struct GrfSampler {
    nx: usize,
    ny: usize,
    /// `[M, N]` with `√2 sin(mπx_i)` rows.
    sx: Tensor,
    sy: Tensor,
    /// `[Mx, My]` square roots of the covariance eigenvalues.
    sqrt_eig: Tensor,
}

pub const GRF_SHIFT: f64 = 9.0;

pub fn grf_eigenvalue(m: usize, n: usize) -> f64 {
    let mu = std::f64::consts::PI.powi(2) * ((m * m + n * n) as f64) + GRF_SHIFT;
    mu.powi(-2)
}

fn sine_rows(n: usize) -> Tensor {
    Tensor::from_fn(&[n, n], |ix| {
        let x = ix[1] as f64 / (n - 1) as f64;
        2f64.sqrt() * (std::f64::consts::PI * (ix[0] + 1) as f64 * x).sin()
    })
}

impl GrfSampler {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidConfig(format!(
                "random field extents must be at least 4, got {nx}x{ny}"
            )));
        }
        let sqrt_eig = Tensor::from_fn(&[nx, ny], |ix| grf_eigenvalue(ix[0] + 1, ix[1] + 1).sqrt());
        Ok(GrfSampler {
            nx,
            ny,
            sx: sine_rows(nx),
            sy: sine_rows(ny),
            sqrt_eig,
        })
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> Tensor {
        let xi: Vec<f64> = (0..self.nx * self.ny)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let xi = Tensor::from_parts(vec![self.nx, self.ny], xi);
        let c = xi.mul(&self.sqrt_eig).expect("same shape");
        // g = Sx^T C Sy
        let cs = c.matmul(&self.sy).expect("inner extents agree");
        self.sx
            .permute(&[1, 0])
            .and_then(|st| st.matmul(&cs))
            .expect("inner extents agree")
    }
}

pub fn sample_grf(nx: usize, ny: usize, seed: u64) -> Result<Tensor> {
    let s = GrfSampler::new(nx, ny)?;
    Ok(s.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

pub const K_HIGH: f64 = 12.0;
pub const K_LOW: f64 = 4.0;

pub fn grf_to_permeability(g: &Tensor) -> Tensor {
    g.map(|v| if v >= 0.0 { K_HIGH } else { K_LOW })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_zero_on_boundary() {
        let a = sample_grf(12, 9, 3).unwrap();
        let b = sample_grf(12, 9, 3).unwrap();
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), sample_grf(12, 9, 4).unwrap().data());
        for j in 0..9 {
            assert!(a.at(&[0, j]).abs() < 1e-12);
        }
        assert!(sample_grf(3, 8, 0).is_err());
    }

    #[test]
    fn mean_is_zero_and_centre_variance_matches_eigen_sum() {
        let n = 17;
        let s = GrfSampler::new(n, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (c, q) = (8, 5);
        let (mut sum, mut sq, mut qsum, mut qsq) = (0.0, 0.0, 0.0, 0.0);
        let draws = 5000;
        for _ in 0..draws {
            let g = s.sample(&mut rng);
            let v = g.at(&[c, c]);
            sum += v;
            sq += v * v;
            let w = g.at(&[q, 11]);
            qsum += w;
            qsq += w * w;
        }
        let var = sq / draws as f64 - (sum / draws as f64).powi(2);
        let x = c as f64 / (n - 1) as f64;
        let mut oracle = 0.0;
        for m in 1..=n {
            for k in 1..=n {
                let phi = 2.0
                    * (std::f64::consts::PI * m as f64 * x).sin()
                    * (std::f64::consts::PI * k as f64 * x).sin();
                oracle += grf_eigenvalue(m, k) * phi * phi;
            }
        }
        assert!((var - oracle).abs() / oracle < 0.1, "{var} vs {oracle}");
        for (s1, s2) in [(sum, sq), (qsum, qsq)] {
            let mean = s1 / draws as f64;
            let sd = (s2 / draws as f64 - mean * mean).sqrt();
            assert!(mean.abs() < 3.0 * sd / (draws as f64).sqrt());
        }
    }

    #[test]
    fn threshold_codomain_and_symmetry() {
        let g = sample_grf(16, 16, 1).unwrap();
        let k = grf_to_permeability(&g);
        assert!(k.data().iter().all(|&v| v == K_LOW || v == K_HIGH));
        let flipped = grf_to_permeability(&g.scale(-1.0));
        for ((a, b), gv) in k.data().iter().zip(flipped.data()).zip(g.data()) {
            if *gv != 0.0 {
                assert_ne!(a, b);
            }
        }
        let z = grf_to_permeability(&Tensor::zeros(&[4, 4]));
        assert!(z.data().iter().all(|&v| v == K_HIGH));
    }
}
