//! Multidimensional real-input FFTs.
//!
//! The forward transform is unnormalized and the inverse carries the
//! `1/prod(N)` factor. The Hermitian-reduced axis is the last transformed
//! axis; it stores `N/2 + 1` bins.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{numel, Tensor};
use crate::error::{Error, Result};

type C64 = Complex<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexTensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn at(&self, idx: &[usize]) -> (f64, f64) {
        let st = super::strides(&self.shape);
        let off: usize = idx.iter().zip(&st).map(|(i, s)| i * s).sum();
        (self.re[off], self.im[off])
    }

    /// Sum of squared magnitudes, with every non-self-conjugate bin of the
    /// reduced axis counted twice so it equals the full-spectrum energy.
    pub fn full_energy(&self, reduced_axis: usize, n: usize) -> f64 {
        let outer: usize = self.shape[..reduced_axis].iter().product();
        let nb = self.shape[reduced_axis];
        let inner: usize = self.shape[reduced_axis + 1..].iter().product();
        let mut e = 0.0;
        for o in 0..outer {
            for k in 0..nb {
                let w = if k == 0 || (n % 2 == 0 && k == n / 2) {
                    1.0
                } else {
                    2.0
                };
                let base = (o * nb + k) * inner;
                for i in base..base + inner {
                    e += w * (self.re[i] * self.re[i] + self.im[i] * self.im[i]);
                }
            }
        }
        e
    }

    fn to_complex(&self) -> Vec<C64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| C64::new(r, i))
            .collect()
    }
}

/// Applies `f` to every line along `axis`; `f` maps a line of length
/// `shape[axis]` to a line of length `new_len`.
fn map_lines<T: Copy + Default, U: Copy + Default>(
    buf: &[T],
    shape: &[usize],
    axis: usize,
    new_len: usize,
    mut f: impl FnMut(&mut Vec<T>, &mut Vec<U>),
) -> Vec<U> {
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![U::default(); outer * new_len * inner];
    let mut line = vec![T::default(); n];
    let mut res = vec![U::default(); new_len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            for (k, v) in line.iter_mut().enumerate() {
                *v = buf[base + k * inner];
            }
            f(&mut line, &mut res);
            let obase = o * new_len * inner + i;
            for (k, v) in res.iter().enumerate() {
                out[obase + k * inner] = *v;
            }
        }
    }
    out
}

fn sorted_axes(axes: &[usize], rank: usize) -> Result<Vec<usize>> {
    let mut ax = axes.to_vec();
    ax.sort_unstable();
    ax.dedup();
    if ax.is_empty() {
        return Err(Error::AxisOutOfRange { axis: 0, rank });
    }
    if let Some(&bad) = ax.iter().find(|&&a| a >= rank) {
        return Err(Error::AxisOutOfRange { axis: bad, rank });
    }
    Ok(ax)
}

/// Real-to-complex transform over `axes`; the largest listed axis is reduced.
pub fn rfft_nd(t: &Tensor, axes: &[usize]) -> Result<ComplexTensor> {
    let ax = sorted_axes(axes, t.rank())?;
    let h = *ax.last().unwrap();
    let n = t.shape()[h];
    let nb = n / 2 + 1;
    let r2c = RealFftPlanner::<f64>::new().plan_fft_forward(n);
    let mut shape = t.shape().to_vec();
    let mut buf = map_lines(
        t.data(),
        &shape,
        h,
        nb,
        |line: &mut Vec<f64>, out: &mut Vec<C64>| {
            r2c.process(line, out).expect("r2c length");
        },
    );
    shape[h] = nb;
    let mut planner = FftPlanner::<f64>::new();
    for &a in &ax[..ax.len() - 1] {
        let fft = planner.plan_fft_forward(shape[a]);
        buf = map_lines(
            &buf,
            &shape,
            a,
            shape[a],
            |line: &mut Vec<C64>, out: &mut Vec<C64>| {
                fft.process(line);
                out.copy_from_slice(line);
            },
        );
    }
    Ok(ComplexTensor {
        shape,
        re: buf.iter().map(|c| c.re).collect(),
        im: buf.iter().map(|c| c.im).collect(),
    })
}

/// Inverse of [`rfft_nd`]; `out_extents` are the real extents of the
/// transformed axes in ascending axis order.
pub fn irfft_nd(c: &ComplexTensor, axes: &[usize], out_extents: &[usize]) -> Result<Tensor> {
    let ax = sorted_axes(axes, c.shape.len())?;
    if out_extents.len() != ax.len() {
        return Err(Error::shape("irfft_nd", &ax, out_extents));
    }
    let h = *ax.last().unwrap();
    let n = *out_extents.last().unwrap();
    if c.shape[h] != n / 2 + 1 {
        return Err(Error::shape("irfft_nd", &c.shape, out_extents));
    }
    let mut shape = c.shape.clone();
    let mut buf = c.to_complex();
    let mut planner = FftPlanner::<f64>::new();
    for (&a, &na) in ax[..ax.len() - 1].iter().zip(out_extents) {
        if shape[a] != na {
            return Err(Error::shape("irfft_nd", &c.shape, out_extents));
        }
        let fft = planner.plan_fft_inverse(na);
        buf = map_lines(
            &buf,
            &shape,
            a,
            na,
            |line: &mut Vec<C64>, out: &mut Vec<C64>| {
                fft.process(line);
                out.copy_from_slice(line);
            },
        );
    }
    let c2r = RealFftPlanner::<f64>::new().plan_fft_inverse(n);
    let real = map_lines(
        &buf,
        &shape,
        h,
        n,
        |line: &mut Vec<C64>, out: &mut Vec<f64>| {
            c2r_line(c2r.as_ref(), line, out, n);
        },
    );
    shape[h] = n;
    let scale = 1.0 / out_extents.iter().product::<usize>() as f64;
    Ok(Tensor::from_parts(
        shape,
        real.into_iter().map(|v| v * scale).collect(),
    ))
}

fn c2r_line(c2r: &dyn ComplexToReal<f64>, line: &mut [C64], out: &mut [f64], n: usize) {
    line[0].im = 0.0;
    if n % 2 == 0 {
        line[n / 2].im = 0.0;
    }
    c2r.process(line, out).expect("c2r length");
}

/// Truncated real FFT over the trailing `extents.len()` axes of a field
/// stack, restricted to the retained low modes.
///
/// Non-reduced axes keep `{k < m} ∪ {k >= N - m}` (all `N` when `2m >= N`);
/// the reduced axis keeps its first `m` bins.
pub struct SpectralPlan {
    extents: Vec<usize>,
    kept: Vec<Vec<usize>>,
    m_last: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<(Vec<usize>, Vec<usize>), Arc<SpectralPlan>>> =
        RefCell::new(HashMap::new());
}

impl SpectralPlan {
    pub fn new(extents: &[usize], modes: &[usize]) -> Result<Self> {
        let r = extents.len();
        let bad = || Error::ModesExceedResolution {
            modes: modes.to_vec(),
            extents: extents.to_vec(),
        };
        if r == 0 || modes.len() != r || extents.contains(&0) || modes.contains(&0) {
            return Err(bad());
        }
        let n_last = extents[r - 1];
        if modes[r - 1] > n_last / 2 + 1 {
            return Err(bad());
        }
        let mut kept = Vec::with_capacity(r - 1);
        for a in 0..r - 1 {
            let (n, m) = (extents[a], modes[a]);
            if m > n {
                return Err(bad());
            }
            kept.push(if 2 * m >= n {
                (0..n).collect()
            } else {
                (0..m).chain(n - m..n).collect()
            });
        }
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        Ok(Self {
            extents: extents.to_vec(),
            kept,
            m_last: modes[r - 1],
            r2c: rp.plan_fft_forward(n_last),
            c2r: rp.plan_fft_inverse(n_last),
            fwd: extents[..r - 1]
                .iter()
                .map(|&n| cp.plan_fft_forward(n))
                .collect(),
            inv: extents[..r - 1]
                .iter()
                .map(|&n| cp.plan_fft_inverse(n))
                .collect(),
        })
    }

    /// Shared per-thread plan for a given geometry.
    pub fn cached(extents: &[usize], modes: &[usize]) -> Result<Arc<Self>> {
        let key = (extents.to_vec(), modes.to_vec());
        if let Some(p) = PLANS.with(|m| m.borrow().get(&key).cloned()) {
            return Ok(p);
        }
        let p = Arc::new(Self::new(extents, modes)?);
        PLANS.with(|m| m.borrow_mut().insert(key, Arc::clone(&p)));
        Ok(p)
    }

    /// Retained extent per axis.
    pub fn mode_shape(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.kept.iter().map(|k| k.len()).collect();
        s.push(self.m_last);
        s
    }

    pub fn n_modes(&self) -> usize {
        numel(&self.mode_shape())
    }

    pub fn spatial_len(&self) -> usize {
        numel(&self.extents)
    }

    /// Weight `c_k / prod(N)` of each retained mode in the inverse transform.
    pub fn adjoint_weights(&self) -> Vec<f64> {
        let n_last = *self.extents.last().unwrap();
        let inner = self.m_last;
        let total = self.spatial_len() as f64;
        (0..self.n_modes())
            .map(|i| {
                let k = i % inner;
                let self_conj = k == 0 || (n_last % 2 == 0 && k == n_last / 2);
                if self_conj {
                    1.0 / total
                } else {
                    2.0 / total
                }
            })
            .collect()
    }

    /// Forward truncated transform of `fields` stacked fields.
    pub fn forward(&self, x: &[f64], fields: usize) -> (Vec<f64>, Vec<f64>) {
        let s = self.spatial_len();
        let m = self.n_modes();
        assert_eq!(x.len(), fields * s);
        let r = self.extents.len();
        let n_last = self.extents[r - 1];
        let nb = n_last / 2 + 1;
        let mut re = Vec::with_capacity(fields * m);
        let mut im = Vec::with_capacity(fields * m);
        let mut line = vec![0.0; n_last];
        let mut spec = vec![C64::default(); nb];
        for f in 0..fields {
            let src = &x[f * s..(f + 1) * s];
            let mut buf = Vec::with_capacity(s / n_last * self.m_last);
            for row in src.chunks_exact(n_last) {
                line.copy_from_slice(row);
                self.r2c.process(&mut line, &mut spec).expect("r2c length");
                buf.extend_from_slice(&spec[..self.m_last]);
            }
            let mut shape = self.extents.clone();
            shape[r - 1] = self.m_last;
            for a in (0..r - 1).rev() {
                let kept = &self.kept[a];
                let fft = &self.fwd[a];
                buf = map_lines(
                    &buf,
                    &shape,
                    a,
                    kept.len(),
                    |l: &mut Vec<C64>, o: &mut Vec<C64>| {
                        fft.process(l);
                        for (dst, &k) in o.iter_mut().zip(kept) {
                            *dst = l[k];
                        }
                    },
                );
                shape[a] = kept.len();
            }
            re.extend(buf.iter().map(|c| c.re));
            im.extend(buf.iter().map(|c| c.im));
        }
        (re, im)
    }

    /// Inverse of the truncated transform (zero-filling discarded modes),
    /// including the `1/prod(N)` factor.
    pub fn inverse(&self, re: &[f64], im: &[f64], fields: usize) -> Vec<f64> {
        let s = self.spatial_len();
        let m = self.n_modes();
        assert_eq!(re.len(), fields * m);
        let r = self.extents.len();
        let n_last = self.extents[r - 1];
        let nb = n_last / 2 + 1;
        let scale = 1.0 / s as f64;
        let mut out = Vec::with_capacity(fields * s);
        let mut spec = vec![C64::default(); nb];
        let mut line = vec![0.0; n_last];
        for f in 0..fields {
            let mut buf: Vec<C64> = re[f * m..(f + 1) * m]
                .iter()
                .zip(&im[f * m..(f + 1) * m])
                .map(|(&a, &b)| C64::new(a, b))
                .collect();
            let mut shape = self.mode_shape();
            for a in 0..r - 1 {
                let kept = &self.kept[a];
                let fft = &self.inv[a];
                let n = self.extents[a];
                buf = map_lines(&buf, &shape, a, n, |l: &mut Vec<C64>, o: &mut Vec<C64>| {
                    o.iter_mut().for_each(|v| *v = C64::default());
                    for (v, &k) in l.iter().zip(kept) {
                        o[k] = *v;
                    }
                    fft.process(o);
                });
                shape[a] = n;
            }
            for row in buf.chunks_exact(self.m_last) {
                spec[..self.m_last].copy_from_slice(row);
                spec[self.m_last..]
                    .iter_mut()
                    .for_each(|v| *v = C64::default());
                c2r_line(self.c2r.as_ref(), &mut spec, &mut line, n_last);
                out.extend(line.iter().map(|v| v * scale));
            }
        }
        out
    }
}
