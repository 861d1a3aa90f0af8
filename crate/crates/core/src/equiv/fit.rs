//! Least-squares fits of univariate functions.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nn::{Basis, SplineSpec};
use crate::tensor::Activation;

/// Fitting points per knot interval.
pub const FIT_POINTS_PER_INTERVAL: usize = 32;
/// Points per knot interval used to measure the sup error.
pub const CHECK_POINTS_PER_INTERVAL: usize = 128;
/// Singular-value ratio beyond which a fit counts as ill-conditioned.
pub const MAX_CONDITION: f64 = 1e12;

/// A spline fit of a univariate function on `interval`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineFit {
    pub spline: SplineSpec,
    pub interval: (f64, f64),
    /// Max deviation over a dense grid on `interval`.
    pub sup_error: f64,
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            if i == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / n as f64
            }
        })
        .collect()
}

/// Minimum-norm least squares: Householder QR, then the SVD of the square
/// factor `R`. Returns the solution and whether singular values below
/// `s_max / MAX_CONDITION` had to be truncated. Requires `rows >= cols`.
pub(crate) fn lstsq(a: DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, bool) {
    let n = a.ncols();
    debug_assert!(a.nrows() >= n);
    let qr = a.qr();
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let svd = qr.r().svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let s = &svd.singular_values;
    let smax = s.max();
    let cut = smax / MAX_CONDITION;
    let ill = smax == 0.0 || s.min() <= cut;
    let mut c = u.tr_mul(&qtb.rows(0, n));
    for (c, &si) in c.iter_mut().zip(s.iter()) {
        *c = if si > cut { *c / si } else { 0.0 };
    }
    (vt.tr_mul(&c), ill)
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::DegenerateKnots(format!("fit interval [{lo}, {hi}]")));
    }
    Ok(())
}

/// Least-squares spline with `m` clamped B-spline basis functions of degree
/// `order` fitted to `f` on `[lo, hi]`.
pub fn fit_spline(
    f: impl Fn(f64) -> f64,
    (lo, hi): (f64, f64),
    m: usize,
    order: usize,
) -> Result<SplineFit> {
    check_interval(lo, hi)?;
    if m <= order + 1 {
        return Err(Error::DegenerateKnots(format!(
            "{m} basis functions cannot carry a degree-{order} fit (need more than {})",
            order + 1
        )));
    }
    let intervals = m - order;
    let basis = Basis::clamped(lo, hi, intervals, order)?;
    let xs = grid(lo, hi, intervals * FIT_POINTS_PER_INTERVAL);
    let a = basis.matrix(&xs);
    let a = DMatrix::from_row_slice(xs.len(), m, a.data());
    let b = DVector::from_iterator(xs.len(), xs.iter().map(|&x| f(x)));
    let (c, ill) = lstsq(a, &b);
    if ill {
        warn!("spline fit on [{lo}, {hi}] with m = {m} is ill-conditioned");
    }
    let spline = SplineSpec::new(basis, c.iter().copied().collect())?;
    let sup_error = grid(lo, hi, intervals * CHECK_POINTS_PER_INTERVAL)
        .into_iter()
        .map(|x| (f(x) - spline.eval(x)).abs())
        .fold(0.0, f64::max);
    Ok(SplineFit {
        spline,
        interval: (lo, hi),
        sup_error,
    })
}

/// [`fit_spline`] applied to an activation.
pub fn fit_activation_spline(
    act: Activation,
    interval: (f64, f64),
    m: usize,
    order: usize,
) -> Result<SplineFit> {
    fit_spline(|x| act.apply(x), interval, m, order)
}

/// `sum_k amps[k] * act(scale * (x - shifts[k])) + constant`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitSum {
    pub act: Activation,
    pub scale: f64,
    pub shifts: Vec<f64>,
    pub amps: Vec<f64>,
    pub constant: f64,
    pub sup_error: f64,
    /// The least-squares system needed the truncated (regularized) solve.
    pub regularized: bool,
}

impl UnitSum {
    pub fn eval(&self, x: f64) -> f64 {
        self.shifts
            .iter()
            .zip(&self.amps)
            .map(|(&b, &a)| a * self.act.apply(self.scale * (x - b)))
            .sum::<f64>()
            + self.constant
    }
}

/// Fits `budget` shifted activation units to `f` on `[lo, hi]`. Shifts sit
/// on a uniform grid with spacing `h` and every unit reads `(x - b) / h`.
pub fn fit_units(
    f: impl Fn(f64) -> f64,
    (lo, hi): (f64, f64),
    budget: usize,
    act: Activation,
) -> Result<UnitSum> {
    check_interval(lo, hi)?;
    if budget < 2 {
        return Err(Error::InvalidConfig(format!(
            "unit budget {budget} is below 2"
        )));
    }
    let h = (hi - lo) / (budget - 1) as f64;
    let shifts: Vec<f64> = (0..budget).map(|k| lo + k as f64 * h).collect();
    let scale = 1.0 / h;
    let xs = grid(lo, hi, budget * FIT_POINTS_PER_INTERVAL);
    let a = DMatrix::from_fn(xs.len(), budget + 1, |r, c| {
        if c == budget {
            1.0
        } else {
            act.apply(scale * (xs[r] - shifts[c]))
        }
    });
    let b = DVector::from_iterator(xs.len(), xs.iter().map(|&x| f(x)));
    let (c, regularized) = lstsq(a, &b);
    if regularized {
        warn!("unit fit on [{lo}, {hi}] with budget {budget} is ill-conditioned; using truncated solve");
    }
    let mut u = UnitSum {
        act,
        scale,
        shifts,
        amps: c.iter().take(budget).copied().collect(),
        constant: c[budget],
        sup_error: 0.0,
        regularized,
    };
    u.sup_error = grid(lo, hi, budget * CHECK_POINTS_PER_INTERVAL)
        .into_iter()
        .map(|x| (f(x) - u.eval(x)).abs())
        .fold(0.0, f64::max);
    Ok(u)
}
