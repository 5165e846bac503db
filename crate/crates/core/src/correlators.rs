//! Forward model: spectral decomposition of the transfer matrix and density-like n-point functions.

use crate::error::{Error, Result};
use crate::linalg::{self, c, c64, CMat};
use crate::model::{self, TransferMatrix, REAL_TOL};

/// Minimal relative eigenvalue gap accepted by [`spectral_decompose`].
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Largest eigenvector condition number accepted as diagonalizable.
pub const MAX_EIGENVECTOR_CONDITION: f64 = 1e12;

/// Default cap on the number of tensor entries produced by [`sample`].
pub const DEFAULT_MAX_ENTRIES: usize = 1 << 24;

/// Transfer-matrix eigenvalues together with `M = X⁻¹(conj(R)⊗R)X`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralData {
    pub d: usize,
    pub poles: Vec<c64>,
    pub m: CMat,
    pub kappa: usize,
    pub density: f64,
}

impl SpectralData {
    /// Assembles spectral data from poles and `M` already in canonical order.
    pub fn from_parts(d: usize, poles: Vec<c64>, m: CMat) -> Result<Self> {
        if m.nrows() != poles.len() || m.ncols() != poles.len() {
            return Err(Error::DimensionMismatch {
                what: "M versus pole count",
                expected: poles.len(),
                found: m.nrows(),
            });
        }
        let order = model::order_poles(&poles, REAL_TOL)?;
        if order.perm.iter().enumerate().any(|(i, &p)| i != p) {
            return Err(Error::InvalidArgument(
                "poles are not in canonical order".into(),
            ));
        }
        let density = m[(0, 0)].re;
        Ok(Self {
            d,
            poles,
            m,
            kappa: order.kappa,
            density,
        })
    }

    pub fn order(&self) -> usize {
        self.poles.len()
    }

    /// Relative defect of the `Ξ conj(M) Ξ = M` symmetry.
    pub fn symmetry_defect(&self) -> f64 {
        model::xi_symmetry_defect(&self.m, self.kappa).unwrap_or(f64::INFINITY)
    }
}

/// Uniformly sampled n-point function on an `(n−1)`-dimensional grid, `l_{n−1}` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationTensor {
    pub n: usize,
    pub n_samples: usize,
    pub delta_tau: f64,
    pub amputated: bool,
    pub values: Vec<c64>,
}

impl CorrelationTensor {
    pub fn new(
        n: usize,
        n_samples: usize,
        delta_tau: f64,
        amputated: bool,
        values: Vec<c64>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("correlator order {n} < 2")));
        }
        if n_samples == 0 {
            return Err(Error::InvalidArgument("N must be positive".into()));
        }
        if !(delta_tau > 0.0 && delta_tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "delta_tau must be positive, got {delta_tau}"
            )));
        }
        let expected = grid_size(n_samples, n - 1).ok_or(Error::ResourceLimit {
            requested: usize::MAX,
            cap: usize::MAX,
        })?;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "correlation tensor values",
                expected,
                found: values.len(),
            });
        }
        Ok(Self {
            n,
            n_samples,
            delta_tau,
            amputated,
            values,
        })
    }

    pub fn rank(&self) -> usize {
        self.n - 1
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.n_samples; self.n - 1]
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &l| acc * self.n_samples + l)
    }

    pub fn get(&self, idx: &[usize]) -> c64 {
        self.values[self.flat_index(idx)]
    }

    /// Largest `|Im|` relative to `1 + |Re|` over all entries.
    pub fn max_relative_imag(&self) -> f64 {
        self.values
            .iter()
            .map(|z| z.im.abs() / (1.0 + z.re.abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|z| z.im == 0.0)
    }

    pub fn mean_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub(crate) fn grid_size(n_samples: usize, axes: usize) -> Option<usize> {
    let mut total = 1usize;
    for _ in 0..axes {
        total = total.checked_mul(n_samples)?;
    }
    Some(total)
}

/// Relative sup-norm distance `max|a − b| / max|b|`.
pub fn relative_sup_distance(a: &[c64], b: &[c64]) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Diagonalizes `T`, orders the poles canonically and forms `M = X⁻¹(conj(R)⊗R)X`.
///
/// The eigenvector basis is chosen so that `conj(X) = Λ X Ξ`, which makes
/// `Ξ conj(M) Ξ = M` hold up to rounding.
pub fn spectral_decompose(t: &TransferMatrix, r: &CMat) -> Result<SpectralData> {
    let d = t.d();
    if r.nrows() != d || r.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "R versus transfer matrix",
            expected: d,
            found: r.nrows(),
        });
    }
    let (values, vectors) = linalg::eig(t.matrix())?;
    let order = model::order_poles(&values, REAL_TOL)?;
    let mut poles: Vec<c64> = order.perm.iter().map(|&i| values[i]).collect();
    for p in poles.iter_mut().take(order.kappa) {
        p.im = 0.0;
    }
    for k in (order.kappa..poles.len()).step_by(2) {
        let mean = (poles[k] + poles[k + 1].conj()) * 0.5;
        poles[k] = mean;
        poles[k + 1] = mean.conj();
    }

    let scale = poles.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if poles.len() > 1 {
        let mut gap = f64::INFINITY;
        for i in 0..poles.len() {
            for j in 0..i {
                gap = gap.min((poles[i] - poles[j]).norm());
            }
        }
        let rel = if scale > 0.0 { gap / scale } else { 0.0 };
        if rel < DEGENERACY_TOL {
            return Err(Error::DegenerateSpectrum { gap: rel });
        }
    }

    let lam = model::lambda_map(d);
    let n = d * d;
    let mut x = linalg::zeros(n, n);
    let mut k = 0;
    while k < n {
        let src = linalg::column(&vectors, order.perm[k]);
        if k < order.kappa {
            let v = hermitian_eigenvector(&src, &lam);
            for i in 0..n {
                x[(i, k)] = v[i];
            }
            k += 1;
        } else {
            let v = phase_fixed(&src);
            for i in 0..n {
                x[(i, k)] = v[i];
                x[(i, k + 1)] = v[lam[i]].conj();
            }
            k += 2;
        }
    }

    let cond = linalg::condition_number(&x)?;
    if !cond.is_finite() || cond > MAX_EIGENVECTOR_CONDITION {
        return Err(Error::NonDiagonalizable { condition: cond });
    }
    let xinv = linalg::inverse_checked(&x, "eigenvector basis", f64::INFINITY)?;
    let rr = linalg::kron(&linalg::conj(r), r);
    let m = &xinv * &rr * &x;
    let density = m[(0, 0)].re;
    Ok(SpectralData {
        d,
        poles,
        m,
        kappa: order.kappa,
        density,
    })
}

/// Unit vector with its first significant component real and positive.
fn phase_fixed(v: &[c64]) -> Vec<c64> {
    let norm = linalg::vec_norm(v);
    let big = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pivot = v
        .iter()
        .find(|z| z.norm() > 1e-8 * big)
        .copied()
        .unwrap_or(c(1.0, 0.0));
    let phase = pivot.conj() / pivot.norm();
    v.iter().map(|z| z * phase / norm).collect()
}

/// Rescales an eigenvector of a real eigenvalue so that `Λ conj(v) = v`
/// (the reshaped matrix is Hermitian), with a deterministic sign.
fn hermitian_eigenvector(v: &[c64], lam: &[usize]) -> Vec<c64> {
    let norm = linalg::vec_norm(v);
    let u: Vec<c64> = v.iter().map(|z| z / norm).collect();
    let swapped: Vec<c64> = lam.iter().map(|&i| u[i].conj()).collect();
    let overlap = linalg::inner(&u, &swapped);
    let beta = if overlap.norm() > 0.0 {
        (overlap / overlap.norm()).sqrt()
    } else {
        c(1.0, 0.0)
    };
    let w: Vec<c64> = u.iter().map(|z| z * beta).collect();
    let mut h: Vec<c64> = (0..w.len())
        .map(|i| (w[i] + w[lam[i]].conj()) * 0.5)
        .collect();
    let hn = linalg::vec_norm(&h);
    let big = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let sign = h
        .iter()
        .find(|z| z.re.abs() > 1e-8 * big)
        .map_or(1.0, |z| z.re.signum());
    for z in &mut h {
        *z *= sign / hn;
    }
    h
}

/// `M_{1,k_{n−1}} M_{k_{n−1},k_{n−2}} ⋯ M_{k_1,1}` for zero-based indices.
pub fn chain_residue(m: &CMat, idx: &[usize]) -> Result<c64> {
    let order = m.nrows();
    if let Some(&bad) = idx.iter().find(|&&k| k >= order) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            bound: order,
        });
    }
    let mut prev = 0usize;
    let mut acc = c(1.0, 0.0);
    for &k in idx {
        acc *= m[(k, prev)];
        prev = k;
    }
    Ok(acc * m[(0, prev)])
}

/// Residue `ρ_{k_1..k_{n−1}}` for a zero-based multi-index.
pub fn residue(sd: &SpectralData, idx: &[usize]) -> Result<c64> {
    chain_residue(&sd.m, idx)
}

/// Full residue tensor of order `n` (`k_{n−1}` fastest).
pub fn residue_tensor(m: &CMat, n: usize) -> Result<Vec<c64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("correlator order {n} < 2")));
    }
    let k = m.nrows();
    let total = grid_size(k, n - 1).ok_or(Error::ResourceLimit {
        requested: usize::MAX,
        cap: DEFAULT_MAX_ENTRIES,
    })?;
    if total > DEFAULT_MAX_ENTRIES {
        return Err(Error::ResourceLimit {
            requested: total,
            cap: DEFAULT_MAX_ENTRIES,
        });
    }
    let mut idx = vec![0usize; n - 1];
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        for j in (0..n - 1).rev() {
            idx[j] = rem % k;
            rem /= k;
        }
        out.push(chain_residue(m, &idx)?);
    }
    Ok(out)
}

/// `Σ_idx ρ_idx Π_j f_j(k_j)` evaluated as a matrix chain with per-axis diagonal weights.
fn chain_eval(m: &CMat, weights: &[Vec<c64>]) -> c64 {
    let k = m.nrows();
    let mut v: Vec<c64> = (0..k).map(|i| m[(i, 0)]).collect();
    for (j, w) in weights.iter().enumerate() {
        for i in 0..k {
            v[i] *= w[i];
        }
        if j + 1 < weights.len() {
            v = linalg::mat_vec(m, &v);
        }
    }
    (0..k).map(|i| m[(0, i)] * v[i]).sum()
}

/// `C^{(n)}(τ_1..τ_{n−1})` for an arbitrary pole list and chain matrix.
pub fn correlate_chain(poles: &[c64], m: &CMat, taus: &[f64]) -> Result<c64> {
    if taus.is_empty() {
        return Err(Error::InvalidArgument("need at least one time argument".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative time argument {t}")));
    }
    let weights: Vec<Vec<c64>> = taus
        .iter()
        .map(|&t| poles.iter().map(|&l| (l * t).exp()).collect())
        .collect();
    Ok(chain_eval(m, &weights))
}

/// `C^{(n)}(τ)` with `n = taus.len() + 1`.
pub fn correlate(sd: &SpectralData, taus: &[f64]) -> Result<c64> {
    correlate_chain(&sd.poles, &sd.m, taus)
}

/// Samples a chain model on the uniform grid `l·Δτ`, `l = 0..N−1` per axis.
pub fn sample_chain(
    poles: &[c64],
    m: &CMat,
    n: usize,
    n_samples: usize,
    delta_tau: f64,
    max_entries: usize,
) -> Result<CorrelationTensor> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("correlator order {n} < 2")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    if !(delta_tau > 0.0 && delta_tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "delta_tau must be positive, got {delta_tau}"
        )));
    }
    let total = grid_size(n_samples, n - 1).ok_or(Error::ResourceLimit {
        requested: usize::MAX,
        cap: max_entries,
    })?;
    if total > max_entries {
        return Err(Error::ResourceLimit {
            requested: total,
            cap: max_entries,
        });
    }
    let k = poles.len();
    let table: Vec<Vec<c64>> = (0..n_samples)
        .map(|l| {
            let t = l as f64 * delta_tau;
            poles.iter().map(|&p| (p * t).exp()).collect()
        })
        .collect();
    let row0: Vec<c64> = (0..k).map(|i| m[(0, i)]).collect();

    // prefixes[p] = E(l_j) M ⋯ E(l_1) M e_1 for the grid prefix p
    let mut prefixes: Vec<Vec<c64>> = vec![(0..k).map(|i| m[(i, 0)]).collect()];
    let mut first = true;
    for _axis in 0..n - 2 {
        let mut next = Vec::with_capacity(prefixes.len() * n_samples);
        for p in &prefixes {
            let u = if first { p.clone() } else { linalg::mat_vec(m, p) };
            for row in &table {
                next.push(u.iter().zip(row).map(|(a, b)| a * b).collect());
            }
        }
        first = false;
        prefixes = next;
    }
    let mut values = Vec::with_capacity(total);
    for p in &prefixes {
        let u = if first { p.clone() } else { linalg::mat_vec(m, p) };
        for row in &table {
            let mut acc = c(0.0, 0.0);
            for i in 0..k {
                acc += row0[i] * (u[i] * row[i]);
            }
            values.push(acc);
        }
    }
    CorrelationTensor::new(n, n_samples, delta_tau, false, values)
}

/// Samples `C^{(n)}` of `sd` on the grid `l·Δτ`.
pub fn sample(sd: &SpectralData, n: usize, n_samples: usize, delta_tau: f64) -> Result<CorrelationTensor> {
    sample_chain(&sd.poles, &sd.m, n, n_samples, delta_tau, DEFAULT_MAX_ENTRIES)
}

/// Subtracts `density²` from a 2-point tensor, removing the stationary contribution.
pub fn amputate(ct: &CorrelationTensor, density: f64) -> Result<CorrelationTensor> {
    if ct.n != 2 {
        return Err(Error::InvalidArgument(format!(
            "only 2-point functions can be amputated (n = {})",
            ct.n
        )));
    }
    if ct.amputated {
        return Err(Error::AlreadyAmputated);
    }
    let shift = density * density;
    Ok(CorrelationTensor {
        values: ct.values.iter().map(|z| z - shift).collect(),
        amputated: true,
        ..ct.clone()
    })
}

/// Laplace transform `Σ_idx ρ_idx / Π_j (λ_{k_j} − s_j)`.
pub fn laplace_eval(sd: &SpectralData, s: &[c64]) -> Result<c64> {
    if s.is_empty() {
        return Err(Error::InvalidArgument("need at least one Laplace variable".into()));
    }
    let mut weights = Vec::with_capacity(s.len());
    for &sj in s {
        let mut w = Vec::with_capacity(sd.poles.len());
        for &l in &sd.poles {
            let dist = (l - sj).norm();
            if dist <= 1e-12 {
                return Err(Error::AtPole { distance: dist });
            }
            w.push(c(1.0, 0.0) / (l - sj));
        }
        weights.push(w);
    }
    Ok(chain_eval(&sd.m, &weights))
}
