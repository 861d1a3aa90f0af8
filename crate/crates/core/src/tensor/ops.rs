use log::warn;

use super::{numel, strides, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

/// NumPy-style broadcast shape with trailing-axis alignment.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() {
            1
        } else {
            a[i - (rank - a.len())]
        };
        let db = if i < rank - b.len() {
            1
        } else {
            b[i - (rank - b.len())]
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside the broadcast shape `out` (0 on broadcast axes).
fn aligned_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let lead = out.len() - shape.len();
    let st = strides(shape);
    (0..out.len())
        .map(|i| {
            if i < lead || shape[i - lead] == 1 {
                0
            } else {
                st[i - lead]
            }
        })
        .collect()
}

/// Collapses the iteration space into as few (extent, stride_a, stride_b) axes as possible.
fn coalesce(out: &[usize], sa: &[usize], sb: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut dims: Vec<(usize, usize, usize)> = Vec::new();
    for i in 0..out.len() {
        if out[i] == 1 {
            continue;
        }
        let cur = (out[i], sa[i], sb[i]);
        if let Some(last) = dims.last_mut() {
            if last.1 == cur.1 * cur.0 && last.2 == cur.2 * cur.0 {
                *last = (last.0 * cur.0, cur.1, cur.2);
                continue;
            }
        }
        dims.push(cur);
    }
    dims
}

pub(crate) fn binary(kind: BinaryKind, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let out = match kind {
        BinaryKind::Add => binary_with(a, b, |x, y| x + y)?,
        BinaryKind::Sub => binary_with(a, b, |x, y| x - y)?,
        BinaryKind::Mul => binary_with(a, b, |x, y| x * y)?,
        BinaryKind::Div => binary_with(a, b, |x, y| x / y)?,
    };
    if kind == BinaryKind::Div && out.data().iter().any(|x| !x.is_finite()) {
        warn!("division produced non-finite values");
    }
    Ok(out)
}

fn binary_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64 + Copy) -> Result<Tensor> {
    let out_shape = broadcast_shape(a.shape(), b.shape())
        .ok_or_else(|| Error::shape("elementwise", a.shape(), b.shape()))?;
    let (ad, bd) = (a.data(), b.data());
    if a.shape() == b.shape() {
        let out = ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor::from_parts(out_shape, out));
    }
    let sa = aligned_strides(a.shape(), &out_shape);
    let sb = aligned_strides(b.shape(), &out_shape);
    let dims = coalesce(&out_shape, &sa, &sb);
    let mut out = Vec::with_capacity(numel(&out_shape));
    if dims.is_empty() {
        out.push(f(ad[0], bd[0]));
    } else {
        let (n, ia, ib) = *dims.last().unwrap();
        walk_outer(&dims[..dims.len() - 1], |oa, ob| match (ia, ib) {
            (1, 1) => out.extend(
                ad[oa..oa + n]
                    .iter()
                    .zip(&bd[ob..ob + n])
                    .map(|(&x, &y)| f(x, y)),
            ),
            (1, 0) => out.extend(ad[oa..oa + n].iter().map(|&x| f(x, bd[ob]))),
            (0, 1) => out.extend(bd[ob..ob + n].iter().map(|&y| f(ad[oa], y))),
            _ => out.extend((0..n).map(|k| f(ad[oa + k * ia], bd[ob + k * ib]))),
        });
    }
    Ok(Tensor::from_parts(out_shape, out))
}

/// Visits the outer axes of a coalesced iteration space in row-major order,
/// passing the starting offsets into both operands.
fn walk_outer(outer: &[(usize, usize, usize)], mut visit: impl FnMut(usize, usize)) {
    let count: usize = outer.iter().map(|d| d.0).product();
    let mut idx = vec![0usize; outer.len()];
    let (mut oa, mut ob) = (0usize, 0usize);
    for _ in 0..count {
        visit(oa, ob);
        for ax in (0..outer.len()).rev() {
            idx[ax] += 1;
            oa += outer[ax].1;
            ob += outer[ax].2;
            if idx[ax] < outer[ax].0 {
                break;
            }
            oa -= outer[ax].1 * outer[ax].0;
            ob -= outer[ax].2 * outer[ax].0;
            idx[ax] = 0;
        }
    }
}

/// Reduces a gradient of the broadcast shape back onto `target` by summing broadcast axes.
pub(crate) fn sum_to_shape(g: &Tensor, target: &[usize]) -> Tensor {
    if g.shape() == target {
        return g.clone();
    }
    let st = aligned_strides(target, g.shape());
    let dense = strides(g.shape());
    let dims = coalesce(g.shape(), &st, &dense);
    let mut acc = vec![0.0; numel(target)];
    let gd = g.data();
    if dims.is_empty() {
        acc[0] = gd[0];
        return Tensor::from_parts(target.to_vec(), acc);
    }
    let (n, it, _) = *dims.last().unwrap();
    walk_outer(&dims[..dims.len() - 1], |ot, og| {
        let run = &gd[og..og + n];
        match it {
            0 => acc[ot] += run.iter().sum::<f64>(),
            1 => acc[ot..ot + n]
                .iter_mut()
                .zip(run)
                .for_each(|(a, &v)| *a += v),
            _ => run
                .iter()
                .enumerate()
                .for_each(|(k, &v)| acc[ot + k * it] += v),
        }
    });
    Tensor::from_parts(target.to_vec(), acc)
}

pub(crate) fn check_perm(perm: &[usize], rank: usize) -> Result<()> {
    let mut seen = vec![false; rank];
    if perm.len() != rank {
        return Err(Error::InvalidPermutation(perm.to_vec()));
    }
    for &p in perm {
        if p >= rank || seen[p] {
            return Err(Error::InvalidPermutation(perm.to_vec()));
        }
        seen[p] = true;
    }
    Ok(())
}

pub(crate) fn invert_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

pub(crate) fn permute(t: &Tensor, perm: &[usize]) -> Result<Tensor> {
    check_perm(perm, t.rank())?;
    let in_shape = t.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return Ok(t.clone());
    }
    let in_st = strides(in_shape);
    let src_st: Vec<usize> = perm.iter().map(|&p| in_st[p]).collect();
    let ones = vec![0usize; out_shape.len()];
    // Reuse the coalescing loop with the destination as a contiguous stream.
    let dims = coalesce(&out_shape, &src_st, &ones);
    let src = t.data();
    let mut out = Vec::with_capacity(t.len());
    if dims.is_empty() {
        out.push(src[0]);
    } else {
        let (inner_n, inner_s, _) = *dims.last().unwrap();
        let outer = &dims[..dims.len() - 1];
        let outer_count: usize = outer.iter().map(|d| d.0).product();
        let mut idx = vec![0usize; outer.len()];
        let mut off = 0usize;
        for _ in 0..outer_count {
            if inner_s == 1 {
                out.extend_from_slice(&src[off..off + inner_n]);
            } else {
                out.extend((0..inner_n).map(|k| src[off + k * inner_s]));
            }
            for ax in (0..outer.len()).rev() {
                idx[ax] += 1;
                off += outer[ax].1;
                if idx[ax] < outer[ax].0 {
                    break;
                }
                off -= outer[ax].1 * outer[ax].0;
                idx[ax] = 0;
            }
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

pub(crate) fn concat(items: &[Tensor], axis: usize) -> Result<Tensor> {
    let first = items.first().ok_or(Error::EmptyData)?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::AxisOutOfRange { axis, rank });
    }
    let mut out_shape = first.shape().to_vec();
    out_shape[axis] = 0;
    for t in items {
        let ok = t.rank() == rank
            && t.shape()
                .iter()
                .enumerate()
                .all(|(i, &d)| i == axis || d == first.shape()[i]);
        if !ok {
            return Err(Error::shape("concat", first.shape(), t.shape()));
        }
        out_shape[axis] += t.shape()[axis];
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(numel(&out_shape));
    for o in 0..outer {
        for t in items {
            let seg = t.shape()[axis] * inner;
            data.extend_from_slice(&t.data()[o * seg..(o + 1) * seg]);
        }
    }
    Ok(Tensor::from_parts(out_shape, data))
}

/// Splits a gradient of a concatenation back into per-input pieces.
pub(crate) fn split(g: &Tensor, axis: usize, sizes: &[usize]) -> Vec<Tensor> {
    let shape = g.shape();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let total = shape[axis];
    let mut starts = Vec::with_capacity(sizes.len());
    let mut acc = 0;
    for &s in sizes {
        starts.push(acc);
        acc += s;
    }
    sizes
        .iter()
        .zip(&starts)
        .map(|(&s, &st)| {
            let mut data = Vec::with_capacity(outer * s * inner);
            for o in 0..outer {
                let base = (o * total + st) * inner;
                data.extend_from_slice(&g.data()[base..base + s * inner]);
            }
            let mut sh = shape.to_vec();
            sh[axis] = s;
            Tensor::from_parts(sh, data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn add_componentwise() {
        let r = t(&[2], &[1., 2.]).add(&t(&[2], &[3., 4.])).unwrap();
        assert_eq!(r.data(), &[4., 6.]);
    }

    #[test]
    fn broadcast_ones_times_matrix() {
        let ones = Tensor::ones(&[2, 3, 1]);
        let x = Tensor::from_fn(&[3, 5], |i| (i[0] * 5 + i[1]) as f64);
        let r = ones.mul(&x).unwrap();
        assert_eq!(r.shape(), &[2, 3, 5]);
        for b in 0..2 {
            assert_eq!(r.index_axis0(b).data(), x.data());
        }
    }

    #[test]
    fn div_self_is_ones() {
        let x = Tensor::from_fn(&[4, 3], |i| 1.0 + (i[0] * 3 + i[1]) as f64);
        let r = x.div(&x).unwrap();
        assert!(r.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn div_by_zero_is_non_finite_not_error() {
        let r = t(&[2], &[1., 0.]).div(&t(&[2], &[0., 0.])).unwrap();
        assert!(r.data()[0].is_infinite());
        assert!(r.data()[1].is_nan());
    }

    #[test]
    fn incompatible_broadcast_rejected() {
        let e = Tensor::ones(&[2, 3]).add(&Tensor::ones(&[4])).unwrap_err();
        assert!(matches!(e, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn permute_transpose() {
        let x = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let p = x.permute(&[1, 0]).unwrap();
        assert_eq!(p.shape(), &[3, 2]);
        assert_eq!(p.data(), &[1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn reshape_is_row_major() {
        let x = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let r = x.reshape(&[3, 2]).unwrap();
        assert_eq!(r.at(&[0, 1]), 2.0);
        assert_eq!(r.at(&[1, 0]), 3.0);
        assert_eq!(r.at(&[2, 1]), 6.0);
        assert!(matches!(
            x.reshape(&[4, 2]),
            Err(Error::ElementCountMismatch { .. })
        ));
    }

    #[test]
    fn invalid_permutations() {
        let x = Tensor::ones(&[2, 3, 4]);
        assert!(matches!(
            x.permute(&[0, 0, 1]),
            Err(Error::InvalidPermutation(_))
        ));
        assert!(matches!(
            x.permute(&[0, 1]),
            Err(Error::InvalidPermutation(_))
        ));
        assert!(matches!(
            x.permute(&[0, 1, 3]),
            Err(Error::InvalidPermutation(_))
        ));
    }

    #[test]
    fn sum_to_shape_reduces_broadcast_axes() {
        let g = Tensor::ones(&[2, 3, 5]);
        let r = sum_to_shape(&g, &[3, 1]);
        assert_eq!(r.shape(), &[3, 1]);
        assert!(r.data().iter().all(|&v| v == 10.0));
    }

    #[test]
    fn concat_and_split_roundtrip() {
        let a = Tensor::from_fn(&[2, 1, 3], |i| (i[0] * 3 + i[2]) as f64);
        let b = Tensor::from_fn(&[2, 2, 3], |i| 100.0 + (i[0] * 6 + i[1] * 3 + i[2]) as f64);
        let c = Tensor::concat(&[a.clone(), b.clone()], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3, 3]);
        assert_eq!(c.at(&[1, 0, 2]), a.at(&[1, 0, 2]));
        assert_eq!(c.at(&[1, 2, 1]), b.at(&[1, 1, 1]));
        let parts = split(&c, 1, &[1, 2]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
