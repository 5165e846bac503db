//! Thin helpers over `faer` for the small dense complex matrices used everywhere.

use faer::linalg::solvers::DenseSolveCore;
use faer::Side;

use crate::error::{Error, Result};

pub use faer::c64;

pub type CMat = faer::Mat<c64>;

#[inline]
pub fn c(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Builds a matrix from row slices. Panics on ragged input.
pub fn from_rows(rows: &[Vec<c64>]) -> CMat {
    let r = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    assert!(rows.iter().all(|row| row.len() == cols), "ragged rows");
    CMat::from_fn(r, cols, |i, j| rows[i][j])
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMat {
    let r = rows.len();
    let cols = rows.first().map_or(0, |x| x.len());
    CMat::from_fn(r, cols, |i, j| c(rows[i][j], 0.0))
}

pub fn diag(values: &[c64]) -> CMat {
    let n = values.len();
    CMat::from_fn(n, n, |i, j| if i == j { values[i] } else { c64::new(0.0, 0.0) })
}

pub fn diagonal(a: &CMat) -> Vec<c64> {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).collect()
}

pub fn conj(a: &CMat) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].conj())
}

pub fn transpose(a: &CMat) -> CMat {
    CMat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)])
}

pub fn adjoint(a: &CMat) -> CMat {
    CMat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn scale(a: &CMat, s: c64) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn scale_re(a: &CMat, s: f64) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

/// Kronecker product with row-major block layout: `(a ⊗ b)[i*p + k, j*q + l] = a[i,j] b[k,l]`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (p, q) = (b.nrows(), b.ncols());
    CMat::from_fn(a.nrows() * p, a.ncols() * q, |r, s| {
        a[(r / p, s / q)] * b[(r % p, s % q)]
    })
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn mean_abs(a: &CMat) -> f64 {
    let n = a.nrows() * a.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm();
        }
    }
    s / n as f64
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

pub fn frobenius(a: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// ‖A − A†‖_max.
pub fn hermitian_defect(a: &CMat) -> f64 {
    max_abs_diff(a, &adjoint(a))
}

pub fn hermitian_part(a: &CMat) -> CMat {
    let ah = adjoint(a);
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + ah[(i, j)]) * 0.5)
}

pub fn column(a: &CMat, j: usize) -> Vec<c64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn mat_vec(a: &CMat, v: &[c64]) -> Vec<c64> {
    assert_eq!(a.ncols(), v.len());
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * v[j]).sum())
        .collect()
}

pub fn vec_norm(v: &[c64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Σ conj(a_i) b_i.
pub fn inner(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Eigenvalues and right eigenvectors (columns) of a general complex matrix.
pub fn eig(a: &CMat) -> Result<(Vec<c64>, CMat)> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            what: "eigendecomposition",
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let evd = a
        .eigen()
        .map_err(|e| Error::Linalg(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let values = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn eigenvalues(a: &CMat) -> Result<Vec<c64>> {
    a.eigenvalues()
        .map_err(|e| Error::Linalg(format!("eigenvalue computation failed: {e:?}")))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eig(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let h = hermitian_part(a);
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("Hermitian eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let values = (0..h.nrows()).map(|i| s[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

/// Full singular value decomposition, singular values descending.
pub fn svd(a: &CMat) -> Result<Svd> {
    let dec = a
        .svd()
        .map_err(|e| Error::Linalg(format!("SVD failed: {e:?}")))?;
    let s = dec.S();
    let k = a.nrows().min(a.ncols());
    Ok(Svd {
        u: dec.U().to_owned(),
        s: (0..k).map(|i| s[i].re).collect(),
        v: dec.V().to_owned(),
    })
}

/// Thin singular value decomposition, singular values descending.
pub fn thin_svd(a: &CMat) -> Result<Svd> {
    let dec = a
        .thin_svd()
        .map_err(|e| Error::Linalg(format!("SVD failed: {e:?}")))?;
    let s = dec.S();
    let k = a.nrows().min(a.ncols());
    Ok(Svd {
        u: dec.U().to_owned(),
        s: (0..k).map(|i| s[i].re).collect(),
        v: dec.V().to_owned(),
    })
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values()
        .map_err(|e| Error::Linalg(format!("SVD failed: {e:?}")))
}

/// 2-norm condition number; infinite for singular or empty input.
pub fn condition_number(a: &CMat) -> Result<f64> {
    let s = singular_values(a)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        _ => Ok(f64::INFINITY),
    }
}

/// Pseudoinverse discarding singular values below `rcond · σ_max`.
pub fn pinv(a: &CMat, rcond: f64) -> Result<CMat> {
    let dec = thin_svd(a)?;
    let cutoff = dec.s.first().copied().unwrap_or(0.0) * rcond;
    let rank = dec.s.iter().take_while(|&&s| s > cutoff && s > 0.0).count();
    Ok(pinv_rank(&dec, rank))
}

/// Pseudoinverse from a precomputed SVD truncated to the leading `rank` triplets.
pub fn pinv_rank(dec: &Svd, rank: usize) -> CMat {
    let (m, n) = (dec.u.nrows(), dec.v.nrows());
    CMat::from_fn(n, m, |i, j| {
        let mut acc = c64::new(0.0, 0.0);
        for k in 0..rank {
            acc += dec.v[(i, k)] * dec.u[(j, k)].conj() / dec.s[k];
        }
        acc
    })
}

/// Inverse with a condition guard; matrices with condition above `max_condition` are rejected.
pub fn inverse_checked(a: &CMat, what: &'static str, max_condition: f64) -> Result<CMat> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            what,
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let cond = condition_number(a)?;
    if !cond.is_finite() || cond > max_condition {
        return Err(Error::Singular { what, condition: cond });
    }
    Ok(a.partial_piv_lu().inverse())
}

pub fn inverse(a: &CMat, what: &'static str) -> Result<CMat> {
    inverse_checked(a, what, 1e14)
}

/// Permutation as an index map `p`, materialized as the matrix with `P[p[j], j] = 1`.
pub fn permutation_matrix(p: &[usize]) -> CMat {
    let n = p.len();
    let mut m = zeros(n, n);
    for (j, &i) in p.iter().enumerate() {
        m[(i, j)] = c(1.0, 0.0);
    }
    m
}

/// `P^T A P` for the index map `p` (entry (i,j) becomes `A[p[i], p[j]]`).
pub fn permute_similarity(a: &CMat, p: &[usize]) -> CMat {
    CMat::from_fn(p.len(), p.len(), |i, j| a[(p[i], p[j])])
}

/// Diagonal balancing (Parlett-Reinsch, powers of two) returning the balanced matrix.
pub fn balance(a: &CMat) -> CMat {
    let n = a.nrows();
    let mut b = a.clone();
    let radix = 2.0f64;
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut col = 0.0;
            let mut row = 0.0;
            for j in 0..n {
                if j != i {
                    col += b[(j, i)].norm();
                    row += b[(i, j)].norm();
                }
            }
            if col == 0.0 || row == 0.0 {
                continue;
            }
            let total = col + row;
            let mut f = 1.0;
            let mut g = row / radix;
            while col < g {
                f *= radix;
                col *= radix * radix;
            }
            g = row * radix;
            while col > g {
                f /= radix;
                col /= radix * radix;
            }
            if (col + row) / f < 0.95 * total {
                converged = false;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
    }
    b
}
