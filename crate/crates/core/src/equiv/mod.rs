//! Constructive MLP <-> KAN conversions and their uniform-convergence study.
//!
//! Both directions work with a single hidden layer of width `n_H` on a box
//! `K = prod [lo_j, hi_j]`. Sup errors are estimated on Sobol points of `K`
//! plus its corners.

mod fit;
pub mod sobol;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{MlpParams, SplineSpec};
use crate::tensor::{Activation, Tensor};

pub use fit::{fit_activation_spline, fit_spline, fit_units, SplineFit, UnitSum};
pub use sobol::{sample_box, Sobol};

pub const DEFAULT_SAMPLES: usize = 10_000;
/// Sup errors at this level are floating-point noise.
pub const ROUNDING_FLOOR: f64 = 1e-12;
/// Relative widening of the outer-function fit range in [`kan_to_mlp`].
const OUTER_PAD: f64 = 0.05;
/// Points per input used to bound non-affine edges over their interval.
const RANGE_POINTS: usize = 2000;

/// A univariate KAN edge function.
#[derive(Clone)]
pub enum Univariate {
    Affine {
        slope: f64,
        offset: f64,
    },
    /// `scale * spline(x)`.
    Spline {
        scale: f64,
        spline: SplineSpec,
    },
    Func(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Univariate {
    pub fn func(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Univariate::Func(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Univariate::Affine { slope, offset } => slope * x + offset,
            Univariate::Spline { scale, spline } => scale * spline.eval(x),
            Univariate::Func(f) => f(x),
        }
    }

    /// Range over `[lo, hi]`; exact for affine edges, sampled otherwise.
    pub fn range(&self, lo: f64, hi: f64) -> (f64, f64) {
        match self {
            Univariate::Affine { .. } => {
                let (a, b) = (self.eval(lo), self.eval(hi));
                (a.min(b), a.max(b))
            }
            _ => (0..=RANGE_POINTS)
                .map(|i| self.eval(lo + (hi - lo) * i as f64 / RANGE_POINTS as f64))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
                    (a.min(y), b.max(y))
                }),
        }
    }
}

impl fmt::Debug for Univariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Univariate::Affine { slope, offset } => write!(f, "Affine({slope} x + {offset})"),
            Univariate::Spline { scale, spline } => {
                write!(f, "Spline({scale} x {} coefficients)", spline.coeffs.len())
            }
            Univariate::Func(_) => write!(f, "Func"),
        }
    }
}

/// `f(w) = bias + sum_i outer[i]( sum_j inner[i][j](w_j) )`.
#[derive(Clone, Debug)]
pub struct ExplicitKan {
    pub inner: Vec<Vec<Univariate>>,
    pub outer: Vec<Univariate>,
    pub bias: f64,
}

impl ExplicitKan {
    pub fn new(inner: Vec<Vec<Univariate>>, outer: Vec<Univariate>, bias: f64) -> Result<Self> {
        let n = inner.first().map_or(0, Vec::len);
        if inner.is_empty()
            || n == 0
            || inner.iter().any(|r| r.len() != n)
            || outer.len() != inner.len()
        {
            return Err(Error::InvalidConfig(
                "KAN needs an n_H x n inner table and n_H outer functions".into(),
            ));
        }
        Ok(Self { inner, outer, bias })
    }

    pub fn n_in(&self) -> usize {
        self.inner[0].len()
    }

    pub fn width(&self) -> usize {
        self.outer.len()
    }

    pub fn eval(&self, w: &[f64]) -> f64 {
        self.bias
            + self
                .inner
                .iter()
                .zip(&self.outer)
                .map(|(row, psi)| psi.eval(row.iter().zip(w).map(|(phi, &x)| phi.eval(x)).sum()))
                .sum::<f64>()
    }

    /// Range of the inner sum feeding `outer[i]` over the box.
    pub fn inner_range(&self, i: usize, bounds: &[(f64, f64)]) -> (f64, f64) {
        self.inner[i]
            .iter()
            .zip(bounds)
            .map(|(phi, &(lo, hi))| phi.range(lo, hi))
            .fold((0.0, 0.0), |(a, b), (l, h)| (a + l, b + h))
    }
}

/// Single-output, single-hidden-layer MLP `c + sum_i v_i act(w_i . x + d_i)`.
struct Shallow<'a> {
    w: &'a Tensor,
    d: Vec<f64>,
    v: &'a [f64],
    c: f64,
    act: Activation,
}

impl<'a> Shallow<'a> {
    fn new(p: &'a MlpParams) -> Result<Self> {
        if p.weights.len() != 2 || p.n_out() != 1 || p.out_activation != Activation::Identity {
            return Err(Error::InvalidConfig(
                "expected one hidden layer and a single linear output".into(),
            ));
        }
        let w = &p.weights[0];
        let n_h = w.shape()[0];
        let d = p.biases[0]
            .as_ref()
            .map_or(vec![0.0; n_h], |b| b.data().to_vec());
        let c = p.biases[1].as_ref().map_or(0.0, |b| b.data()[0]);
        Ok(Self {
            w,
            d,
            v: p.weights[1].data(),
            c,
            act: p.activation,
        })
    }

    fn n_in(&self) -> usize {
        self.w.shape()[1]
    }

    fn width(&self) -> usize {
        self.w.shape()[0]
    }

    /// Pre-activation interval of neuron `i` over the box, by interval arithmetic.
    fn pre_range(&self, i: usize, bounds: &[(f64, f64)]) -> (f64, f64) {
        let n = self.n_in();
        let row = &self.w.data()[i * n..(i + 1) * n];
        row.iter()
            .zip(bounds)
            .fold((self.d[i], self.d[i]), |(a, b), (&wij, &(lo, hi))| {
                let (p, q) = (wij * lo, wij * hi);
                (a + p.min(q), b + p.max(q))
            })
    }
}

fn check_bounds(bounds: &[(f64, f64)], n: usize) -> Result<()> {
    if bounds.len() != n
        || bounds
            .iter()
            .any(|&(lo, hi)| !(lo <= hi && lo.is_finite() && hi.is_finite()))
    {
        return Err(Error::InvalidConfig(format!(
            "need {n} finite intervals for K, got {bounds:?}"
        )));
    }
    Ok(())
}

/// Degenerate (zero-width) ranges are widened so a fit interval exists.
fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Result of [`mlp_to_kan`].
#[derive(Clone, Debug)]
pub struct MlpToKan {
    pub kan: ExplicitKan,
    /// Spline fit used by each outer function.
    pub fits: Vec<SplineFit>,
    /// Pre-activation interval of each hidden neuron over `K`.
    pub ranges: Vec<(f64, f64)>,
    /// `sum_i |v_i| * sup_error_i`.
    pub bound: f64,
    /// `n_H >= 2n + 1`; reported, not enforced.
    pub width_hypothesis: bool,
}

/// Builds the KAN with affine inner edges `w_ij x + d_i / n` and outer edges
/// `v_i S(u)`, where `S` is a degree-`order` spline with `m` basis functions
/// fitted to the activation.
///
/// Each neuron gets its own fit over its pre-activation interval unless
/// `fit_interval` is given, in which case one shared fit is used and every
/// interval must lie inside it.
pub fn mlp_to_kan(
    p: &MlpParams,
    m: usize,
    order: usize,
    bounds: &[(f64, f64)],
    fit_interval: Option<(f64, f64)>,
) -> Result<MlpToKan> {
    let s = Shallow::new(p)?;
    let n = s.n_in();
    check_bounds(bounds, n)?;
    let ranges: Vec<(f64, f64)> = (0..s.width()).map(|i| s.pre_range(i, bounds)).collect();
    let fits = match fit_interval {
        Some((lo, hi)) => {
            if let Some(&(rl, rh)) = ranges.iter().find(|&&(rl, rh)| rl < lo || rh > hi) {
                return Err(Error::DomainNotCovered {
                    lo: rl,
                    hi: rh,
                    fit_lo: lo,
                    fit_hi: hi,
                });
            }
            vec![fit_activation_spline(s.act, (lo, hi), m, order)?; s.width()]
        }
        None => ranges
            .iter()
            .map(|&r| fit_activation_spline(s.act, widen(r), m, order))
            .collect::<Result<_>>()?,
    };
    let inner = (0..s.width())
        .map(|i| {
            (0..n)
                .map(|j| Univariate::Affine {
                    slope: s.w.data()[i * n + j],
                    offset: s.d[i] / n as f64,
                })
                .collect()
        })
        .collect();
    let outer = fits
        .iter()
        .zip(s.v)
        .map(|(f, &v)| Univariate::Spline {
            scale: v,
            spline: f.spline.clone(),
        })
        .collect();
    let bound = fits
        .iter()
        .zip(s.v)
        .map(|(f, v)| v.abs() * f.sup_error)
        .sum();
    Ok(MlpToKan {
        kan: ExplicitKan::new(inner, outer, s.c)?,
        fits,
        ranges,
        bound,
        width_hypothesis: s.width() > 2 * n,
    })
}

/// Result of [`kan_to_mlp`].
#[derive(Clone, Debug)]
pub struct KanToMlp {
    pub mlp: MlpParams,
    pub inner_fits: Vec<Vec<UnitSum>>,
    pub outer_fits: Vec<UnitSum>,
    /// Fits that needed the truncated least-squares fallback.
    pub regularized: usize,
}

/// Approximates every edge of `k` by `budget` shifted `act` units and
/// assembles the two-hidden-layer MLP
/// `x -> act(W1 x + b1) -> act(W2 h + b2) -> w3 . h + c`.
///
/// Layer 1 holds one unit per (outer index, input, shift); layer 2 one unit
/// per (outer index, shift). Outer functions are fitted over the inner-sum
/// range widened by 5% per side.
pub fn kan_to_mlp(
    k: &ExplicitKan,
    budget: usize,
    act: Activation,
    bounds: &[(f64, f64)],
) -> Result<KanToMlp> {
    let (n, n_h) = (k.n_in(), k.width());
    check_bounds(bounds, n)?;
    if budget < 2 {
        return Err(Error::InvalidConfig(format!(
            "unit budget {budget} is below 2"
        )));
    }
    let mut inner_fits = Vec::with_capacity(n_h);
    let mut outer_fits = Vec::with_capacity(n_h);
    for i in 0..n_h {
        let row = k.inner[i]
            .iter()
            .zip(bounds)
            .map(|(phi, &b)| fit_units(|x| phi.eval(x), widen(b), budget, act))
            .collect::<Result<Vec<_>>>()?;
        inner_fits.push(row);
        let (lo, hi) = widen(k.inner_range(i, bounds));
        let pad = OUTER_PAD * (hi - lo);
        let psi = &k.outer[i];
        outer_fits.push(fit_units(
            |u| psi.eval(u),
            (lo - pad, hi + pad),
            budget,
            act,
        )?);
    }
    let (u1, u2) = (n_h * n * budget, n_h * budget);
    let mut w1 = vec![0.0; u1 * n];
    let mut b1 = vec![0.0; u1];
    let mut w2 = vec![0.0; u2 * u1];
    let mut b2 = vec![0.0; u2];
    let mut w3 = vec![0.0; u2];
    let mut c = k.bias;
    for i in 0..n_h {
        let shift: f64 = inner_fits[i].iter().map(|f| f.constant).sum();
        let g = &outer_fits[i];
        c += g.constant;
        for (q, (&beta, &alpha)) in g.shifts.iter().zip(&g.amps).enumerate() {
            let r = i * budget + q;
            w3[r] = alpha;
            b2[r] = g.scale * (shift - beta);
            for (j, f) in inner_fits[i].iter().enumerate() {
                for (kk, &a) in f.amps.iter().enumerate() {
                    w2[r * u1 + (i * n + j) * budget + kk] = g.scale * a;
                }
            }
        }
        for (j, f) in inner_fits[i].iter().enumerate() {
            for (kk, &b) in f.shifts.iter().enumerate() {
                let r = (i * n + j) * budget + kk;
                w1[r * n + j] = f.scale;
                b1[r] = -f.scale * b;
            }
        }
    }
    let regularized = inner_fits
        .iter()
        .flatten()
        .chain(&outer_fits)
        .filter(|f| f.regularized)
        .count();
    let mlp = MlpParams {
        weights: vec![
            Tensor::new(&[u1, n], w1)?,
            Tensor::new(&[u2, u1], w2)?,
            Tensor::new(&[1, u2], w3)?,
        ],
        biases: vec![
            Some(Tensor::new(&[u1], b1)?),
            Some(Tensor::new(&[u2], b2)?),
            Some(Tensor::new(&[1], vec![c])?),
        ],
        activation: act,
        out_activation: Activation::Identity,
    };
    Ok(KanToMlp {
        mlp,
        inner_fits,
        outer_fits,
        regularized,
    })
}

/// Evaluates a single-output MLP at every point.
pub fn mlp_eval(p: &MlpParams, pts: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.n_in();
    let x = Tensor::new(&[pts.len(), n], pts.iter().flatten().copied().collect())?;
    Ok(p.forward(&x)?.into_vec())
}

/// `max |a - b|` over paired values.
pub fn sup_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Least-squares slope of `log err` against `log capacity`.
pub fn loglog_slope(capacity: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = capacity.iter().map(|c| c.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Random single-hidden-layer MLP with entries drawn from `U(-1, 1)`.
pub fn random_shallow_mlp(n: usize, n_h: usize, act: Activation, seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw =
        |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    MlpParams {
        weights: vec![
            Tensor::new(&[n_h, n], draw(n_h * n)).unwrap(),
            Tensor::new(&[1, n_h], draw(n_h)).unwrap(),
        ],
        biases: vec![
            Some(Tensor::new(&[n_h], draw(n_h)).unwrap()),
            Some(Tensor::new(&[1], draw(1)).unwrap()),
        ],
        activation: act,
        out_activation: Activation::Identity,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    MlpToKan,
    KanToMlp,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::MlpToKan => "mlp_to_kan",
            Direction::KanToMlp => "kan_to_mlp",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "mlp_to_kan" => Ok(Direction::MlpToKan),
            "kan_to_mlp" => Ok(Direction::KanToMlp),
            _ => Err(Error::InvalidConfig(format!("unknown direction `{s}`"))),
        }
    }
}

/// The fixed network a convergence study approximates.
#[derive(Clone, Debug)]
pub enum Target {
    /// Converted by [`mlp_to_kan`] with splines of the given degree.
    Mlp { params: MlpParams, order: usize },
    /// Converted by [`kan_to_mlp`] with units of the given activation.
    Kan { kan: ExplicitKan, act: Activation },
}

impl Target {
    pub fn direction(&self) -> Direction {
        match self {
            Target::Mlp { .. } => Direction::MlpToKan,
            Target::Kan { .. } => Direction::KanToMlp,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivReport {
    pub direction: Direction,
    /// Spline basis size `m` or unit budget per univariate function.
    pub capacity: Vec<usize>,
    pub sup_error: Vec<f64>,
    /// `sum_i |v_i| * spline error` per capacity (MLP -> KAN only).
    pub bound: Vec<Option<f64>>,
    pub eps: f64,
    pub samples: usize,
    /// `n_H >= 2n + 1` for the target.
    pub width_hypothesis: bool,
}

impl EquivReport {
    /// Errors never increase with capacity (ties allowed); errors below
    /// [`ROUNDING_FLOOR`] count as converged.
    pub fn monotone(&self) -> bool {
        self.sup_error
            .windows(2)
            .all(|w| w[1] <= w[0] || w[1] <= ROUNDING_FLOOR)
    }

    pub fn pass(&self) -> bool {
        self.monotone() && self.sup_error.last().is_some_and(|&e| e < self.eps)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("direction,capacity,sup_error,bound\n");
        for ((c, e), b) in self.capacity.iter().zip(&self.sup_error).zip(&self.bound) {
            let b = b.map_or(String::new(), |b| format!("{b:e}"));
            s.push_str(&format!("{},{c},{e:e},{b}\n", self.direction));
        }
        s
    }

    pub fn verdict(&self) -> String {
        let last = self.sup_error.last().copied().unwrap_or(f64::NAN);
        let mut v = format!(
            "{}: {} over capacities {:?}; final sup error {last:.3e} vs eps {:e}; {}",
            self.direction,
            if self.pass() { "PASS" } else { "FAIL" },
            self.capacity,
            self.eps,
            if self.monotone() {
                "non-increasing"
            } else {
                "not monotone"
            },
        );
        if !self.width_hypothesis {
            v.push_str(" (hidden width below 2n+1)");
        }
        v
    }
}

/// Sweeps capacity for a fixed target and records sup errors over `samples`
/// Sobol points of `bounds` plus its corners.
pub fn convergence_study(
    target: &Target,
    sweep: &[usize],
    bounds: &[(f64, f64)],
    eps: f64,
    samples: usize,
) -> Result<EquivReport> {
    if sweep.is_empty() || sweep.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(format!(
            "sweep {sweep:?} must be nonempty and ascending"
        )));
    }
    let pts = sample_box(bounds, samples)?;
    let mut sup_error = Vec::with_capacity(sweep.len());
    let mut bound = Vec::with_capacity(sweep.len());
    let width_hypothesis;
    match target {
        Target::Mlp { params, order } => {
            let exact = mlp_eval(params, &pts)?;
            width_hypothesis = params.weights[0].shape()[0] > 2 * params.n_in();
            for &m in sweep {
                let conv = mlp_to_kan(params, m, *order, bounds, None)?;
                let approx: Vec<f64> = pts.iter().map(|p| conv.kan.eval(p)).collect();
                sup_error.push(sup_deviation(&exact, &approx));
                bound.push(Some(conv.bound));
            }
        }
        Target::Kan { kan, act } => {
            check_bounds(bounds, kan.n_in())?;
            let exact: Vec<f64> = pts.iter().map(|p| kan.eval(p)).collect();
            width_hypothesis = kan.width() > 2 * kan.n_in();
            for &b in sweep {
                let conv = kan_to_mlp(kan, b, *act, bounds)?;
                sup_error.push(sup_deviation(&exact, &mlp_eval(&conv.mlp, &pts)?));
                bound.push(None);
            }
        }
    }
    Ok(EquivReport {
        direction: target.direction(),
        capacity: sweep.to_vec(),
        sup_error,
        bound,
        eps,
        samples,
        width_hypothesis,
    })
}

#[cfg(test)]
mod tests;
