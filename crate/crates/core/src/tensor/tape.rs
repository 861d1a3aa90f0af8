use std::sync::Arc;

use super::activation::Activation;
use super::fft::SpectralPlan;
use super::linalg::{gemm, GemmOp};
use super::ops::{self, BinaryKind};
use super::{numel, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Constant,
    Binary(BinaryKind, Var, Var),
    Matmul {
        a: Var,
        b: Var,
        transpose_b: bool,
    },
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    Reshape {
        x: Var,
    },
    Act {
        x: Var,
        act: Activation,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
    Scale {
        x: Var,
        c: f64,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
        sizes: Vec<usize>,
    },
    ChannelMix {
        w: Var,
        x: Var,
        b: Option<Var>,
    },
    BasisExpand {
        x: Var,
        dvals: Option<Tensor>,
    },
    Spectral(Box<SpectralRec>),
}

struct SpectralRec {
    z: Var,
    r_re: Var,
    r_im: Var,
    plan: Arc<SpectralPlan>,
    batch: usize,
    c_in: usize,
    c_out: usize,
    x_re: Vec<f64>,
    x_im: Vec<f64>,
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Reverse-mode recording of primitive applications.
///
/// Every op returns a new [`Var`]; inputs always precede outputs, so the
/// node list is already in topological order. `backward` may run once.
pub struct Tape {
    nodes: Vec<Node>,
    record: bool,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            record: true,
            consumed: false,
        }
    }

    /// A tape that evaluates values only; leaves never require gradients.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            record: false,
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad: needs_grad && self.record,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable input (a trainable parameter or a checked input).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    pub fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let v = ops::binary(kind, self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Binary(kind, a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).scale(c);
        let ng = self.needs(x);
        self.push(v, Op::Scale { x, c }, ng)
    }

    /// `[..., k] x [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(
            v,
            Op::Matmul {
                a,
                b,
                transpose_b: false,
            },
            ng,
        ))
    }

    /// `[..., k] x [n, k]^T`; the layout of an `out x in` weight matrix.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(
            v,
            Op::Matmul {
                a,
                b,
                transpose_b: true,
            },
            ng,
        ))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let v = self.value(x).permute(perm)?;
        let ng = self.needs(x);
        Ok(self.push(
            v,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            ng,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        let ng = self.needs(x);
        Ok(self.push(v, Op::Reshape { x }, ng))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return x;
        }
        let xv = self.value(x);
        let v = Tensor::from_parts(xv.shape().to_vec(), act.apply_all(xv.data()));
        let ng = self.needs(x);
        self.push(v, Op::Act { x, act }, ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        let ng = self.needs(x);
        self.push(v, Op::Sum { x }, ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).mean());
        let ng = self.needs(x);
        self.push(v, Op::Mean { x }, ng)
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let vals: Vec<Tensor> = xs.iter().map(|&x| self.value(x).clone()).collect();
        let v = Tensor::concat(&vals, axis)?;
        let sizes = vals.iter().map(|t| t.shape()[axis]).collect();
        let ng = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(
            v,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
                sizes,
            },
            ng,
        ))
    }

    /// Pointwise channel mixing: `W[O, C]` applied to `x[B, C, S...]`.
    pub fn channel_mix(&mut self, w: Var, x: Var) -> Result<Var> {
        self.channel_mix_bias(w, None, x)
    }

    /// `channel_mix` plus a per-output-channel bias `b[O]`.
    pub fn channel_affine(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        self.channel_mix_bias(w, Some(b), x)
    }

    fn channel_mix_bias(&mut self, w: Var, bias: Option<Var>, x: Var) -> Result<Var> {
        let (wv, xv) = (self.value(w), self.value(x));
        if wv.rank() != 2 || xv.rank() < 2 || wv.shape()[1] != xv.shape()[1] {
            return Err(Error::shape("channel_mix", wv.shape(), xv.shape()));
        }
        let (o, c, b) = (wv.shape()[0], wv.shape()[1], xv.shape()[0]);
        if let Some(bv) = bias.map(|v| self.value(v)) {
            if bv.shape() != [o] {
                return Err(Error::shape("channel_affine", wv.shape(), bv.shape()));
            }
        }
        let s = numel(&xv.shape()[2..]);
        let mut out = Vec::with_capacity(b * o * s);
        for _ in 0..b {
            match bias {
                Some(bv) => {
                    for &v in self.value(bv).data() {
                        out.extend(std::iter::repeat(v).take(s));
                    }
                }
                None => out.resize(out.len() + o * s, 0.0),
            }
        }
        let beta = if bias.is_some() { 1.0 } else { 0.0 };
        for bi in 0..b {
            gemm(
                o,
                c,
                s,
                1.0,
                wv.data(),
                GemmOp::N,
                &xv.data()[bi * c * s..(bi + 1) * c * s],
                GemmOp::N,
                beta,
                &mut out[bi * o * s..(bi + 1) * o * s],
            );
        }
        let mut shape = xv.shape().to_vec();
        shape[1] = o;
        let ng = self.needs(w) || self.needs(x) || bias.is_some_and(|v| self.needs(v));
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::ChannelMix { w, x, b: bias },
            ng,
        ))
    }

    /// Expands every element of `x` into a trailing basis axis.
    ///
    /// `vals[..., i]` are basis values at `x[...]` and `dvals` their
    /// derivatives with respect to `x`; both are computed by the caller.
    pub fn basis_expand(&mut self, x: Var, vals: Tensor, dvals: Tensor) -> Result<Var> {
        let xs = self.value(x).shape();
        let ok = vals.shape() == dvals.shape()
            && vals.rank() == xs.len() + 1
            && &vals.shape()[..xs.len()] == xs;
        if !ok {
            return Err(Error::shape("basis_expand", xs, vals.shape()));
        }
        let ng = self.needs(x);
        let dvals = if ng { Some(dvals) } else { None };
        Ok(self.push(vals, Op::BasisExpand { x, dvals }, ng))
    }

    /// Truncated spectral convolution over the trailing spatial axes of
    /// `z[B, C, S...]` with complex weights `R[C, O, K...]`.
    pub fn spectral_conv(&mut self, z: Var, r_re: Var, r_im: Var, modes: &[usize]) -> Result<Var> {
        let zs = self.value(z).shape().to_vec();
        if zs.len() < 3 {
            return Err(Error::shape("spectral_conv", &zs, modes));
        }
        let (batch, c_in) = (zs[0], zs[1]);
        let extents = &zs[2..];
        let plan = SpectralPlan::cached(extents, modes)?;
        let ms = plan.mode_shape();
        let rs = self.value(r_re).shape().to_vec();
        let ok = rs.len() == 2 + ms.len()
            && rs[0] == c_in
            && rs[2..] == ms[..]
            && self.value(r_im).shape() == &rs[..];
        if !ok {
            return Err(Error::shape("spectral_conv", &rs, &ms));
        }
        let c_out = rs[1];
        let m = plan.n_modes();
        let (x_re, x_im) = plan.forward(self.value(z).data(), batch * c_in);
        let (wr, wi) = (self.value(r_re).data(), self.value(r_im).data());
        let mut y_re = vec![0.0; batch * c_out * m];
        let mut y_im = vec![0.0; batch * c_out * m];
        for b in 0..batch {
            for c in 0..c_in {
                let xo = (b * c_in + c) * m;
                for o in 0..c_out {
                    let ro = (c * c_out + o) * m;
                    let yo = (b * c_out + o) * m;
                    for k in 0..m {
                        let (xr, xi) = (x_re[xo + k], x_im[xo + k]);
                        let (rr, ri) = (wr[ro + k], wi[ro + k]);
                        y_re[yo + k] += xr * rr - xi * ri;
                        y_im[yo + k] += xr * ri + xi * rr;
                    }
                }
            }
        }
        let y = plan.inverse(&y_re, &y_im, batch * c_out);
        let mut shape = zs.clone();
        shape[1] = c_out;
        let ng = self.needs(z) || self.needs(r_re) || self.needs(r_im);
        let rec = SpectralRec {
            z,
            r_re,
            r_im,
            plan,
            batch,
            c_in,
            c_out,
            x_re: if ng { x_re } else { Vec::new() },
            x_im: if ng { x_im } else { Vec::new() },
        };
        Ok(self.push(
            Tensor::from_parts(shape, y),
            Op::Spectral(Box::new(rec)),
            ng,
        ))
    }

    /// Reverse accumulation from a one-element `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let ls = self.value(loss);
        if ls.len() != 1 {
            return Err(Error::NotScalar(ls.shape().to_vec()));
        }
        self.consumed = true;
        let n = self.nodes.len();
        let mut acc: Vec<Option<Vec<f64>>> = vec![None; n];
        acc[loss.0] = Some(vec![1.0]);
        let mut out: Vec<Option<Tensor>> = vec![None; n];
        for i in (0..=loss.0).rev() {
            let Some(g) = acc[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let g = Tensor::from_parts(node.value.shape().to_vec(), g);
            for (v, gi) in self.local_grads(i, &g)? {
                if !self.nodes[v.0].needs_grad {
                    continue;
                }
                match &mut acc[v.0] {
                    Some(a) => a.iter_mut().zip(gi.data()).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(gi.into_vec()),
                }
            }
            if matches!(node.op, Op::Leaf) {
                out[i] = Some(g);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn local_grads(&self, i: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let need = |v: Var| self.nodes[v.0].needs_grad;
        let mut res = Vec::new();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Binary(kind, a, b) => {
                let (av, bv) = (val(*a), val(*b));
                match kind {
                    BinaryKind::Add => {
                        res.push((*a, ops::sum_to_shape(g, av.shape())));
                        res.push((*b, ops::sum_to_shape(g, bv.shape())));
                    }
                    BinaryKind::Sub => {
                        res.push((*a, ops::sum_to_shape(g, av.shape())));
                        if need(*b) {
                            res.push((*b, ops::sum_to_shape(&g.scale(-1.0), bv.shape())));
                        }
                    }
                    BinaryKind::Mul => {
                        if need(*a) {
                            res.push((*a, ops::sum_to_shape(&g.mul(bv)?, av.shape())));
                        }
                        if need(*b) {
                            res.push((*b, ops::sum_to_shape(&g.mul(av)?, bv.shape())));
                        }
                    }
                    BinaryKind::Div => {
                        if need(*a) {
                            res.push((*a, ops::sum_to_shape(&g.div(bv)?, av.shape())));
                        }
                        if need(*b) {
                            let gb = g.mul(&node.value)?.div(bv)?.scale(-1.0);
                            res.push((*b, ops::sum_to_shape(&gb, bv.shape())));
                        }
                    }
                }
            }
            Op::Matmul { a, b, transpose_b } => {
                let (av, bv) = (val(*a), val(*b));
                let k = *av.shape().last().unwrap();
                let m = av.len() / k.max(1);
                let n = *g.shape().last().unwrap();
                if need(*a) {
                    let ga = if *transpose_b {
                        g.matmul(bv)?
                    } else {
                        g.matmul_t(bv)?
                    };
                    res.push((*a, ga));
                }
                if need(*b) {
                    let mut gb = vec![0.0; k * n];
                    if *transpose_b {
                        gemm(
                            n,
                            m,
                            k,
                            1.0,
                            g.data(),
                            GemmOp::T,
                            av.data(),
                            GemmOp::N,
                            0.0,
                            &mut gb,
                        );
                    } else {
                        gemm(
                            k,
                            m,
                            n,
                            1.0,
                            av.data(),
                            GemmOp::T,
                            g.data(),
                            GemmOp::N,
                            0.0,
                            &mut gb,
                        );
                    }
                    res.push((*b, Tensor::from_parts(bv.shape().to_vec(), gb)));
                }
            }
            Op::Permute { x, perm } => {
                res.push((*x, g.permute(&ops::invert_perm(perm))?));
            }
            Op::Reshape { x } => {
                res.push((*x, g.reshape(val(*x).shape())?));
            }
            Op::Act { x, act } => {
                let xv = val(*x);
                let d = act.backprop(xv.data(), node.value.data(), g.data());
                res.push((*x, Tensor::from_parts(xv.shape().to_vec(), d)));
            }
            Op::Sum { x } => {
                res.push((*x, Tensor::full(val(*x).shape(), g.item())));
            }
            Op::Mean { x } => {
                let xv = val(*x);
                res.push((*x, Tensor::full(xv.shape(), g.item() / xv.len() as f64)));
            }
            Op::Scale { x, c } => {
                res.push((*x, g.scale(*c)));
            }
            Op::Concat { xs, axis, sizes } => {
                for (x, part) in xs.iter().zip(ops::split(g, *axis, sizes)) {
                    res.push((*x, part));
                }
            }
            Op::ChannelMix { w, x, b: bias } => {
                let (wv, xv) = (val(*w), val(*x));
                let (o, c, b) = (wv.shape()[0], wv.shape()[1], xv.shape()[0]);
                let s = numel(&xv.shape()[2..]);
                if let Some(bv) = bias.filter(|&v| need(v)) {
                    let mut gb = vec![0.0; o];
                    for (k, row) in g.data().chunks_exact(s).enumerate() {
                        gb[k % o] += row.iter().sum::<f64>();
                    }
                    res.push((bv, Tensor::from_parts(vec![o], gb)));
                }
                if need(*w) {
                    let mut gw = vec![0.0; o * c];
                    for bi in 0..b {
                        gemm(
                            o,
                            s,
                            c,
                            1.0,
                            &g.data()[bi * o * s..(bi + 1) * o * s],
                            GemmOp::N,
                            &xv.data()[bi * c * s..(bi + 1) * c * s],
                            GemmOp::T,
                            1.0,
                            &mut gw,
                        );
                    }
                    res.push((*w, Tensor::from_parts(vec![o, c], gw)));
                }
                if need(*x) {
                    let mut gx = vec![0.0; b * c * s];
                    for bi in 0..b {
                        gemm(
                            c,
                            o,
                            s,
                            1.0,
                            wv.data(),
                            GemmOp::T,
                            &g.data()[bi * o * s..(bi + 1) * o * s],
                            GemmOp::N,
                            0.0,
                            &mut gx[bi * c * s..(bi + 1) * c * s],
                        );
                    }
                    res.push((*x, Tensor::from_parts(xv.shape().to_vec(), gx)));
                }
            }
            Op::BasisExpand { x, dvals } => {
                let dv = dvals
                    .as_ref()
                    .expect("basis derivatives kept when recording");
                let nb = *dv.shape().last().unwrap();
                let gx: Vec<f64> = g
                    .data()
                    .chunks_exact(nb)
                    .zip(dv.data().chunks_exact(nb))
                    .map(|(gr, dr)| gr.iter().zip(dr).map(|(a, b)| a * b).sum())
                    .collect();
                res.push((*x, Tensor::from_parts(val(*x).shape().to_vec(), gx)));
            }
            Op::Spectral(rec) => res.extend(spectral_backward(rec, g, |v| val(v), |v| need(v))),
        }
        Ok(res)
    }
}

fn spectral_backward<'a>(
    rec: &SpectralRec,
    g: &Tensor,
    val: impl Fn(Var) -> &'a Tensor,
    need: impl Fn(Var) -> bool,
) -> Vec<(Var, Tensor)> {
    let SpectralRec {
        plan,
        batch,
        c_in,
        c_out,
        ..
    } = rec;
    let (batch, c_in, c_out) = (*batch, *c_in, *c_out);
    let m = plan.n_modes();
    let (g_re, g_im) = plan.forward(g.data(), batch * c_out);
    let mut res = Vec::new();
    let rv = val(rec.r_re);
    let (wr, wi) = (rv.data(), val(rec.r_im).data());
    if need(rec.z) {
        let mut gx_re = vec![0.0; batch * c_in * m];
        let mut gx_im = vec![0.0; batch * c_in * m];
        for b in 0..batch {
            for c in 0..c_in {
                let xo = (b * c_in + c) * m;
                for o in 0..c_out {
                    let ro = (c * c_out + o) * m;
                    let go = (b * c_out + o) * m;
                    for k in 0..m {
                        // conj(R) * G
                        let (rr, ri) = (wr[ro + k], wi[ro + k]);
                        let (gr, gi) = (g_re[go + k], g_im[go + k]);
                        gx_re[xo + k] += rr * gr + ri * gi;
                        gx_im[xo + k] += rr * gi - ri * gr;
                    }
                }
            }
        }
        let gz = plan.inverse(&gx_re, &gx_im, batch * c_in);
        res.push((rec.z, Tensor::from_parts(val(rec.z).shape().to_vec(), gz)));
    }
    if need(rec.r_re) || need(rec.r_im) {
        let w = plan.adjoint_weights();
        let mut gr_re = vec![0.0; c_in * c_out * m];
        let mut gr_im = vec![0.0; c_in * c_out * m];
        for b in 0..batch {
            for c in 0..c_in {
                let xo = (b * c_in + c) * m;
                for o in 0..c_out {
                    let ro = (c * c_out + o) * m;
                    let go = (b * c_out + o) * m;
                    for k in 0..m {
                        // w * G * conj(X)
                        let (xr, xi) = (rec.x_re[xo + k], rec.x_im[xo + k]);
                        let (gr, gi) = (g_re[go + k], g_im[go + k]);
                        gr_re[ro + k] += w[k] * (gr * xr + gi * xi);
                        gr_im[ro + k] += w[k] * (gi * xr - gr * xi);
                    }
                }
            }
        }
        res.push((rec.r_re, Tensor::from_parts(rv.shape().to_vec(), gr_re)));
        res.push((rec.r_im, Tensor::from_parts(rv.shape().to_vec(), gr_im)));
    }
    res
}
