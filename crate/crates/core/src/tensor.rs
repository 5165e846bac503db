//! Row-major dense tensors stored as flat vectors.

use crate::linalg::{c64, CMat};

/// Applies `mat` (shape `new × dims[axis]`) along `axis` of a row-major tensor.
pub fn mode_apply(data: &[c64], dims: &[usize], axis: usize, mat: &CMat) -> Vec<c64> {
    assert_eq!(mat.ncols(), dims[axis]);
    assert_eq!(data.len(), dims.iter().product::<usize>());
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let (old, new) = (dims[axis], mat.nrows());
    let mut out = vec![c64::new(0.0, 0.0); outer * new * inner];
    for o in 0..outer {
        for a in 0..new {
            let dst = (o * new + a) * inner;
            for b in 0..old {
                let w = mat[(a, b)];
                if w == c64::new(0.0, 0.0) {
                    continue;
                }
                let src = (o * old + b) * inner;
                for i in 0..inner {
                    out[dst + i] += w * data[src + i];
                }
            }
        }
    }
    out
}

/// Applies the same matrix along every axis.
pub fn apply_all_axes(data: &[c64], rank: usize, dim: usize, mat: &CMat) -> Vec<c64> {
    let mut dims = vec![dim; rank];
    let mut cur = data.to_vec();
    for axis in 0..rank {
        cur = mode_apply(&cur, &dims, axis, mat);
        dims[axis] = mat.nrows();
    }
    cur
}

/// Decodes a flat row-major index into a multi-index over `rank` axes of size `dim`.
pub fn unflatten(mut flat: usize, rank: usize, dim: usize, out: &mut [usize]) {
    for j in (0..rank).rev() {
        out[j] = flat % dim;
        flat /= dim;
    }
}

pub fn flatten(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, from_real_rows};

    #[test]
    fn mode_apply_matches_matrix_product() {
        // 2x3 tensor, apply along axis 1 then axis 0
        let data: Vec<c64> = (0..6).map(|i| c(i as f64, 0.0)).collect();
        let a = from_real_rows(&[&[1.0, 0.0, 2.0], &[0.0, 1.0, 0.0]]);
        let out = mode_apply(&data, &[2, 3], 1, &a);
        assert_eq!(out, vec![c(4.0, 0.0), c(1.0, 0.0), c(13.0, 0.0), c(4.0, 0.0)]);
        let b = from_real_rows(&[&[1.0, 1.0]]);
        let out0 = mode_apply(&data, &[2, 3], 0, &b);
        assert_eq!(out0, vec![c(3.0, 0.0), c(5.0, 0.0), c(7.0, 0.0)]);
    }

    #[test]
    fn flatten_roundtrip() {
        let mut idx = [0usize; 3];
        for flat in 0..64 {
            unflatten(flat, 3, 4, &mut idx);
            assert_eq!(flatten(&idx, 4), flat);
        }
    }
}
