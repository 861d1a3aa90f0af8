//! Dense row-major tensors, a reverse-mode tape, and real-input FFTs.
//!
//! [`Tensor`] is an immutable value (data behind an `Arc`), so cloning is
//! cheap and tensors can be shared across threads. All differentiable work
//! happens on a [`Tape`], which records primitive applications and replays
//! them backwards once.

mod activation;
mod fft;
pub mod gradcheck;
mod linalg;
mod ops;
mod tape;

use std::fmt;
use std::sync::Arc;

pub use activation::{fast_exp, Activation};
pub use fft::{irfft_nd, rfft_nd, ComplexTensor, SpectralPlan};
pub use linalg::{gemm, GemmOp};
pub use ops::{broadcast_shape, BinaryKind};
pub use tape::{Gradients, Tape, Var};

use crate::error::{Error, Result};

/// Number of elements for a shape. The empty shape is a scalar.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut st = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        st[i] = st[i + 1] * shape[i + 1];
    }
    st
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.data.len();
        if n <= 16 {
            write!(f, "Tensor{:?} {:?}", self.shape, &self.data[..])
        } else {
            write!(
                f,
                "Tensor{:?} [{:?} ... ({} values)]",
                self.shape,
                &self.data[..4],
                n
            )
        }
    }
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::ElementCountMismatch {
                from: vec![data.len()],
                from_len: data.len(),
                to: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
        })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Self {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_parts(vec![], vec![v])
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Self::from_parts(shape.to_vec(), vec![v; numel(shape)])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn eye(n: usize) -> Self {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 1.0;
        }
        Self::from_parts(vec![n, n], d)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let n = numel(shape);
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Self::from_parts(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        Arc::try_unwrap(self.data).unwrap_or_else(|a| (*a).clone())
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(
            self.data.len(),
            1,
            "item() on tensor of shape {:?}",
            self.shape
        );
        self.data[0]
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.shape.len());
        let st = strides(&self.shape);
        let off: usize = idx.iter().zip(&st).map(|(i, s)| i * s).sum();
        self.data[off]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&x| f(x)).collect(),
        )
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|x| a * x)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn binary(&self, kind: BinaryKind, other: &Tensor) -> Result<Tensor> {
        ops::binary(kind, self, other)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryKind::Add, other)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryKind::Sub, other)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryKind::Mul, other)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryKind::Div, other)
    }

    /// `[..., k] x [k, n] -> [..., n]`.
    pub fn matmul(&self, b: &Tensor) -> Result<Tensor> {
        linalg::matmul(self, b, false)
    }

    /// `[..., k] x [n, k]^T -> [..., n]`.
    pub fn matmul_t(&self, b: &Tensor) -> Result<Tensor> {
        linalg::matmul(self, b, true)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.len() {
            return Err(Error::ElementCountMismatch {
                from: self.shape.clone(),
                from_len: self.len(),
                to: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    /// Physically reorders the data so the result is row-major in the new axis order.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        ops::permute(self, perm)
    }

    /// Sums over all axes except `keep`; returns one value per index of `keep`.
    pub fn sum_except_axis(&self, keep: usize) -> Result<Vec<f64>> {
        if keep >= self.rank() {
            return Err(Error::AxisOutOfRange {
                axis: keep,
                rank: self.rank(),
            });
        }
        let outer: usize = self.shape[..keep].iter().product();
        let n = self.shape[keep];
        let inner: usize = self.shape[keep + 1..].iter().product();
        let mut out = vec![0.0; n];
        for o in 0..outer {
            for (c, acc) in out.iter_mut().enumerate() {
                let base = (o * n + c) * inner;
                *acc += self.data[base..base + inner].iter().sum::<f64>();
            }
        }
        Ok(out)
    }

    /// Selects index `i` along axis 0.
    pub fn index_axis0(&self, i: usize) -> Tensor {
        assert!(!self.shape.is_empty() && i < self.shape[0]);
        let inner = numel(&self.shape[1..]);
        Self::from_parts(
            self.shape[1..].to_vec(),
            self.data[i * inner..(i + 1) * inner].to_vec(),
        )
    }

    /// Selects indices `idx` along axis 0 (gather).
    pub fn select_axis0(&self, idx: &[usize]) -> Tensor {
        let inner = numel(&self.shape[1..]);
        let mut data = Vec::with_capacity(idx.len() * inner);
        for &i in idx {
            data.extend_from_slice(&self.data[i * inner..(i + 1) * inner]);
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Self::from_parts(shape, data)
    }

    /// Selects indices along an arbitrary axis.
    pub fn select(&self, axis: usize, idx: &[usize]) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * idx.len() * inner);
        for o in 0..outer {
            for &i in idx {
                assert!(i < n, "select index {i} out of range {n}");
                let base = (o * n + i) * inner;
                data.extend_from_slice(&self.data[base..base + inner]);
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = idx.len();
        Ok(Self::from_parts(shape, data))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or(Error::EmptyData)?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape("stack", &first.shape, &t.shape));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self::from_parts(shape, data))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(items: &[Tensor], axis: usize) -> Result<Tensor> {
        ops::concat(items, axis)
    }
}
