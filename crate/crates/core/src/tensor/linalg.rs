use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GemmOp {
    N,
    T,
}

/// `c = alpha * op(a) * op(b) + beta * c` for row-major buffers.
///
/// `op(a)` is `m x k` and `op(b)` is `k x n`; the stored layouts are the
/// untransposed or transposed row-major matrices accordingly.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    ta: GemmOp,
    b: &[f64],
    tb: GemmOp,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match ta {
        GemmOp::N => (k as isize, 1),
        GemmOp::T => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        GemmOp::N => (n as isize, 1),
        GemmOp::T => (1, k as isize),
    };
    // SAFETY: the strides above describe exactly the asserted buffer sizes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor, transpose_b: bool) -> Result<Tensor> {
    if a.rank() < 1 || b.rank() != 2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let k = *a.shape().last().unwrap();
    let (bk, n) = if transpose_b {
        (b.shape()[1], b.shape()[0])
    } else {
        (b.shape()[0], b.shape()[1])
    };
    if k != bk {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let m = a.len() / k.max(1);
    let mut out = vec![0.0; m * n];
    if k > 0 {
        let tb = if transpose_b { GemmOp::T } else { GemmOp::N };
        gemm(
            m,
            k,
            n,
            1.0,
            a.data(),
            GemmOp::N,
            b.data(),
            tb,
            0.0,
            &mut out,
        );
    }
    let mut shape = a.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Ok(Tensor::from_parts(shape, out))
}
