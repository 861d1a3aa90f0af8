//! Steady Darcy flow `-∇·(k ∇p) = f` on the unit square with `p = 0` on the
//! boundary, discretised node-wise with harmonic face permeabilities.

use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-8,
            max_iter: 20_000,
        }
    }
}

/// Five-point operator on the interior nodes of an `nx x ny` node grid.
struct Operator {
    mx: usize,
    my: usize,
    /// Coupling to `(i+1, j)` and `(i, j+1)` in interior numbering; boundary
    /// couplings only enter the diagonal.
    east: Vec<f64>,
    north: Vec<f64>,
    diag: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl Operator {
    fn new(k: &Tensor) -> Result<Self> {
        let (nx, ny) = (k.shape()[0], k.shape()[1]);
        let (hx2, hy2) = (((nx - 1) as f64).powi(2), ((ny - 1) as f64).powi(2));
        let (mx, my) = (nx - 2, ny - 2);
        let kk = |i: usize, j: usize| k.data()[i * ny + j];
        let mut east = vec![0.0; mx * my];
        let mut north = vec![0.0; mx * my];
        let mut diag = vec![0.0; mx * my];
        for a in 0..mx {
            for b in 0..my {
                let (i, j) = (a + 1, b + 1);
                let c = kk(i, j);
                let e = harmonic(c, kk(i + 1, j)) * hx2;
                let w = harmonic(c, kk(i - 1, j)) * hx2;
                let n = harmonic(c, kk(i, j + 1)) * hy2;
                let s = harmonic(c, kk(i, j - 1)) * hy2;
                let r = a * my + b;
                diag[r] = e + w + n + s;
                east[r] = e;
                north[r] = n;
            }
        }
        Ok(Operator {
            mx,
            my,
            east,
            north,
            diag,
        })
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let my = self.my;
        for a in 0..self.mx {
            for b in 0..my {
                let r = a * my + b;
                let mut v = self.diag[r] * x[r];
                if a + 1 < self.mx {
                    v -= self.east[r] * x[r + my];
                }
                if a > 0 {
                    v -= self.east[r - my] * x[r - my];
                }
                if b + 1 < my {
                    v -= self.north[r] * x[r + 1];
                }
                if b > 0 {
                    v -= self.north[r - 1] * x[r - 1];
                }
                y[r] = v;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_k(k: &Tensor) -> Result<()> {
    if k.rank() != 2 || k.shape()[0] < 3 || k.shape()[1] < 3 {
        return Err(Error::InvalidConfig(format!(
            "permeability must be a 2D grid of at least 3x3 nodes, got {:?}",
            k.shape()
        )));
    }
    if let Some(&bad) = k.data().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NonPositivePermeability(bad));
    }
    Ok(())
}

pub fn solve_darcy(k: &Tensor, f: f64) -> Result<Tensor> {
    solve_darcy_with(k, f, CgOptions::default()).map(|(p, _)| p)
}

/// Jacobi-preconditioned conjugate gradients; returns the node field and the
/// iteration count.
pub fn solve_darcy_with(k: &Tensor, f: f64, opts: CgOptions) -> Result<(Tensor, usize)> {
    check_k(k)?;
    let (nx, ny) = (k.shape()[0], k.shape()[1]);
    let op = Operator::new(k)?;
    let n = op.mx * op.my;
    let rhs = vec![f; n];
    let bnorm = dot(&rhs, &rhs).sqrt();
    let mut x = vec![0.0; n];
    let mut p_out = vec![0.0; nx * ny];
    if bnorm == 0.0 {
        return Ok((Tensor::from_parts(vec![nx, ny], p_out), 0));
    }
    let mut r = rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&op.diag).map(|(r, d)| r / d).collect();
    let mut d = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut it = 0;
    loop {
        let rel = dot(&r, &r).sqrt() / bnorm;
        if rel < opts.tol {
            // guard against drift of the recursive residual
            op.apply(&x, &mut q);
            for ((ri, bi), qi) in r.iter_mut().zip(&rhs).zip(&q) {
                *ri = bi - qi;
            }
            if dot(&r, &r).sqrt() / bnorm < opts.tol {
                break;
            }
            for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&op.diag) {
                *zi = ri / di;
            }
            d.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        if it >= opts.max_iter {
            return Err(Error::CgNoConvergence {
                iterations: it,
                residual: rel,
            });
        }
        op.apply(&d, &mut q);
        let alpha = rz / dot(&d, &q);
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * q[i];
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&op.diag) {
            *zi = ri / di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (di, zi) in d.iter_mut().zip(&z) {
            *di = zi + beta * *di;
        }
        it += 1;
    }
    for a in 0..op.mx {
        for b in 0..op.my {
            p_out[(a + 1) * ny + b + 1] = x[a * op.my + b];
        }
    }
    Ok((Tensor::from_parts(vec![nx, ny], p_out), it))
}

/// `‖A p - f‖ / ‖f‖` over interior nodes.
pub fn darcy_residual(k: &Tensor, p: &Tensor, f: f64) -> Result<f64> {
    check_k(k)?;
    if p.shape() != k.shape() {
        return Err(Error::shape("darcy_residual", k.shape(), p.shape()));
    }
    let op = Operator::new(k)?;
    let ny = k.shape()[1];
    let mut x = vec![0.0; op.mx * op.my];
    for a in 0..op.mx {
        for b in 0..op.my {
            x[a * op.my + b] = p.data()[(a + 1) * ny + b + 1];
        }
    }
    let mut q = vec![0.0; x.len()];
    op.apply(&x, &mut q);
    let num: f64 = q.iter().map(|v| (v - f).powi(2)).sum::<f64>().sqrt();
    Ok(num / (f.abs() * (x.len() as f64).sqrt()))
}
