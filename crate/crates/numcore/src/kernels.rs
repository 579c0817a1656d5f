//! Raw loops shared by the tensor and graph code.

use crate::error::{NumError, Result};
use crate::scalar::Scalar;

/// `out[m×n] += a[m×k] · b[k×n]` with arbitrary row/column strides for the
/// operands, so transposed views need no copy.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<S: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[S],
    (a_rs, a_cs): (usize, usize),
    b: &[S],
    (b_rs, b_cs): (usize, usize),
    out: &mut [S],
) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * a_rs + p * a_cs];
            if av == S::zero() {
                continue;
            }
            let b_off = p * b_rs;
            if b_cs == 1 {
                let brow = &b[b_off..b_off + n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            } else {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += av * b[b_off + j * b_cs];
                }
            }
        }
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Numpy-style broadcast of two shapes.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(NumError::shape(
                    "broadcast",
                    format!("{a:?} incompatible with {b:?}"),
                ))
            }
        };
    }
    Ok(out)
}

/// For every flat index of `out_shape`, the flat index of the broadcast
/// source element of shape `in_shape`.
pub(crate) fn broadcast_map(out_shape: &[usize], in_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let offset = rank - in_shape.len();
    let mut in_strides = vec![0usize; rank];
    let mut stride = 1;
    for i in (0..in_shape.len()).rev() {
        if in_shape[i] != 1 {
            in_strides[i + offset] = stride;
        }
        stride *= in_shape[i];
    }
    let total = numel(out_shape);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..total {
        map.push(src);
        for d in (0..rank).rev() {
            idx[d] += 1;
            src += in_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            src -= in_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

/// Sums a gradient of the broadcast shape back down to `in_shape`.
pub(crate) fn reduce_to<S: Scalar>(grad: &[S], out_shape: &[usize], in_shape: &[usize]) -> Vec<S> {
    if out_shape == in_shape {
        return grad.to_vec();
    }
    let map = broadcast_map(out_shape, in_shape);
    let mut acc = vec![S::zero(); numel(in_shape)];
    for (g, &src) in grad.iter().zip(&map) {
        acc[src] += *g;
    }
    acc
}

/// Splits `shape` around `axis` into (outer, axis length, inner) extents.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

pub(crate) fn permute_data<S: Scalar>(data: &[S], shape: &[usize], axes: &[usize]) -> (Vec<S>, Vec<usize>) {
    let rank = shape.len();
    let new_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let mut strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let src_strides: Vec<usize> = axes.iter().map(|&a| strides[a]).collect();
    let total = data.len();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..total {
        out.push(data[src]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            src += src_strides[d];
            if idx[d] < new_shape[d] {
                break;
            }
            src -= src_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    (out, new_shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape(&[2, 3, 4], &[4]).unwrap(), vec![2, 3, 4]);
        assert_eq!(broadcast_shape(&[2, 1, 4], &[3, 1]).unwrap(), vec![2, 3, 4]);
        assert!(broadcast_shape(&[2, 3], &[4]).is_err());
    }

    #[test]
    fn broadcast_map_matches_naive_indexing() {
        let out = [2, 3, 4];
        let inp = [3, 1];
        let map = broadcast_map(&out, &inp);
        for (flat, &src) in map.iter().enumerate() {
            let j = (flat / 4) % 3;
            assert_eq!(src, j);
        }
    }

    #[test]
    fn permute_swaps_axes() {
        let data: Vec<f64> = (0..6).map(|v| v as f64).collect();
        let (out, shape) = permute_data(&data, &[2, 3], &[1, 0]);
        assert_eq!(shape, vec![3, 2]);
        assert_eq!(out, vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }
}
