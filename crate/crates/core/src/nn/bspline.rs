//! B-spline bases on arbitrary nondecreasing knot vectors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Knot vector plus polynomial degree.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    knots: Vec<f64>,
    order: usize,
}

impl Basis {
    pub fn new(knots: Vec<f64>, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::DegenerateKnots("order must be at least 1".into()));
        }
        if knots.len() < order + 2 {
            return Err(Error::DegenerateKnots(format!(
                "{} knots cannot carry a degree-{order} basis",
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::DegenerateKnots("knots must be nondecreasing".into()));
        }
        let b = Self { knots, order };
        let (lo, hi) = b.domain();
        if !(lo < hi) {
            return Err(Error::DegenerateKnots(format!(
                "empty evaluation domain [{lo}, {hi}]"
            )));
        }
        Ok(b)
    }

    /// `intervals` equal intervals on `[lo, hi]`, extended by `order` knots per side.
    pub fn uniform_extended(lo: f64, hi: f64, intervals: usize, order: usize) -> Result<Self> {
        let h = (hi - lo) / intervals as f64;
        let knots = (0..intervals + 2 * order + 1)
            .map(|j| lo + (j as f64 - order as f64) * h)
            .collect();
        Self::new(knots, order)
    }

    /// Open-uniform (clamped) knots: end knots repeated `order + 1` times.
    pub fn clamped(lo: f64, hi: f64, intervals: usize, order: usize) -> Result<Self> {
        let h = (hi - lo) / intervals as f64;
        let mut knots = vec![lo; order];
        knots.extend((0..=intervals).map(|j| {
            if j == intervals {
                hi
            } else {
                lo + j as f64 * h
            }
        }));
        knots.extend(std::iter::repeat(hi).take(order));
        Self::new(knots, order)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len() - self.order - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.order], self.knots[self.len()])
    }

    pub fn clamp(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        x.clamp(lo, hi)
    }

    /// Knot span `mu` with `t[mu] <= x < t[mu+1]`; the right end belongs
    /// to the last nonempty span.
    fn span(&self, x: f64) -> usize {
        let t = &self.knots;
        let n = self.len();
        let mut lo = self.order;
        let mut hi = n;
        if x >= t[n] {
            let mut mu = n - 1;
            while t[mu] == t[mu + 1] {
                mu -= 1;
            }
            return mu;
        }
        if x <= t[lo] {
            let mut mu = lo;
            while t[mu] == t[mu + 1] {
                mu += 1;
            }
            return mu;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < t[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Writes all basis values (and optionally derivatives) at `x`, which
    /// is clamped into the domain first. Returns `true` if `x` was inside.
    pub fn eval_into(&self, x: f64, vals: &mut [f64], ders: Option<&mut [f64]>) -> bool {
        let k = self.order;
        let t = &self.knots;
        let inside = {
            let (lo, hi) = self.domain();
            x >= lo && x <= hi
        };
        let x = self.clamp(x);
        let mu = self.span(x);
        vals.iter_mut().for_each(|v| *v = 0.0);
        let mut n = [0.0f64; 16];
        let mut left = [0.0f64; 16];
        let mut right = [0.0f64; 16];
        let mut lower = [0.0f64; 16];
        assert!(k < 15, "spline order {k} too large");
        n[0] = 1.0;
        for j in 1..=k {
            if j == k {
                lower[..k].copy_from_slice(&n[..k]);
            }
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        let first = mu - k;
        vals[first..=mu].copy_from_slice(&n[..=k]);
        if let Some(d) = ders {
            d.iter_mut().for_each(|v| *v = 0.0);
            if inside {
                let kf = k as f64;
                for i in 0..=k {
                    let g = first + i;
                    let mut s = 0.0;
                    if i >= 1 {
                        let den = t[g + k] - t[g];
                        if den > 0.0 {
                            s += lower[i - 1] / den;
                        }
                    }
                    if i < k {
                        let den = t[g + k + 1] - t[g + 1];
                        if den > 0.0 {
                            s -= lower[i] / den;
                        }
                    }
                    d[g] = kf * s;
                }
            }
        }
        inside
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        self.eval_into(x, &mut v, None);
        v
    }

    /// Basis matrix `points x len`.
    pub fn matrix(&self, xs: &[f64]) -> Tensor {
        let nb = self.len();
        let mut data = vec![0.0; xs.len() * nb];
        for (row, &x) in data.chunks_exact_mut(nb).zip(xs) {
            self.eval_into(x, row, None);
        }
        Tensor::new(&[xs.len(), nb], data).unwrap()
    }
}

/// Cox–de Boor basis matrix (points × basis functions) for a knot vector.
pub fn bspline_basis(xs: &[f64], knots: &[f64], order: usize) -> Result<Tensor> {
    Ok(Basis::new(knots.to_vec(), order)?.matrix(xs))
}

/// A univariate spline: basis plus one coefficient per basis function.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineSpec {
    pub basis: Basis,
    pub coeffs: Vec<f64>,
}

impl SplineSpec {
    pub fn new(basis: Basis, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::shape(
                "spline coefficients",
                &[basis.len()],
                &[coeffs.len()],
            ));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.basis.order;
        let mut v = vec![0.0; self.basis.len()];
        self.basis.eval_into(x, &mut v, None);
        let mu = self.basis.span(self.basis.clamp(x));
        (mu - k..=mu).map(|i| v[i] * self.coeffs[i]).sum()
    }
}
