//! cMPS variational data, transfer matrices, gauge and symmetry operations.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{self, c, c64, CMat};

/// Default realness tolerance: `|Im λ| ≤ REAL_TOL · (1 + |λ|)` classifies λ as real.
pub const REAL_TOL: f64 = 1e-9;

/// Tolerance for locating conjugate partners: `|λ' − conj λ| < PAIR_TOL · (1 + |λ|)`.
pub const PAIR_TOL: f64 = 1e-8;

/// Relative tolerance on `Q + Q† + R†R = 0` accepted by [`k_from_qr`].
pub const GAUGE_TOL: f64 = 1e-10;

/// A translation-invariant cMPS given by its `d × d` matrices `Q` and `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cmps {
    q: CMat,
    r: CMat,
}

impl Cmps {
    pub fn new(q: CMat, r: CMat) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::DimensionMismatch {
                what: "Q (not square)",
                expected: q.nrows(),
                found: q.ncols(),
            });
        }
        if r.nrows() != r.ncols() || r.nrows() != q.nrows() {
            return Err(Error::DimensionMismatch {
                what: "R versus Q",
                expected: q.nrows(),
                found: if r.nrows() != q.nrows() { r.nrows() } else { r.ncols() },
            });
        }
        if q.nrows() == 0 {
            return Err(Error::InvalidArgument("bond dimension must be positive".into()));
        }
        Ok(Self { q, r })
    }

    /// Builds the state from a Hermitian `K` and `R` via `Q = −iK − ½R†R`.
    pub fn from_kr(k: &AuxiliaryHamiltonian, r: CMat) -> Result<Self> {
        let q = q_from_kr(k, &r)?;
        Self::new(q, r)
    }

    pub fn d(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &CMat {
        &self.q
    }

    pub fn r(&self) -> &CMat {
        &self.r
    }

    pub fn into_parts(self) -> (CMat, CMat) {
        (self.q, self.r)
    }

    /// ‖Q + Q† + R†R‖_max.
    pub fn gauge_residual(&self) -> f64 {
        gauge_residual(&self.q, &self.r)
    }
}

/// Hermitian generator `K` of the auxiliary system.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryHamiltonian {
    k: CMat,
}

impl AuxiliaryHamiltonian {
    /// Accepts `k` if `‖K − K†‖_max ≤ 1e−12 · ‖K‖_max`.
    pub fn new(k: CMat) -> Result<Self> {
        if k.nrows() != k.ncols() {
            return Err(Error::DimensionMismatch {
                what: "K (not square)",
                expected: k.nrows(),
                found: k.ncols(),
            });
        }
        let defect = linalg::hermitian_defect(&k);
        if defect > 1e-12 * linalg::max_abs(&k) {
            return Err(Error::NotHermitian { defect });
        }
        Ok(Self {
            k: linalg::hermitian_part(&k),
        })
    }

    /// Keeps only the Hermitian part `(K + K†)/2`.
    pub fn from_hermitian_part(k: &CMat) -> Self {
        Self {
            k: linalg::hermitian_part(k),
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.k
    }

    pub fn d(&self) -> usize {
        self.k.nrows()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(linalg::hermitian_eig(&self.k)?.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    t: CMat,
    d: usize,
}

impl TransferMatrix {
    pub fn new(t: CMat, d: usize) -> Result<Self> {
        if t.nrows() != d * d || t.ncols() != d * d {
            return Err(Error::DimensionMismatch {
                what: "transfer matrix",
                expected: d * d,
                found: t.nrows(),
            });
        }
        Ok(Self { t, d })
    }

    pub fn matrix(&self) -> &CMat {
        &self.t
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn eigenvalues(&self) -> Result<Vec<c64>> {
        linalg::eigenvalues(&self.t)
    }

    /// Eigenvalues in the canonical pole order.
    pub fn ordered_eigenvalues(&self) -> Result<Vec<c64>> {
        let vals = self.eigenvalues()?;
        let order = order_poles(&vals, REAL_TOL)?;
        Ok(order.perm.iter().map(|&i| vals[i]).collect())
    }

    /// `T − s·1`.
    pub fn shifted(&self, s: f64) -> Self {
        let mut t = self.t.clone();
        for i in 0..t.nrows() {
            t[(i, i)] -= c(s, 0.0);
        }
        Self { t, d: self.d }
    }
}

/// Index maps for the swap `Λ_d` and the conjugation pairing `Ξ_{d,κ}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymmetryMaps {
    pub d: usize,
    pub kappa: usize,
    pub lambda: Vec<usize>,
    pub xi: Vec<usize>,
}

impl SymmetryMaps {
    pub fn new(d: usize, kappa: usize) -> Result<Self> {
        let n = d * d;
        Ok(Self {
            d,
            kappa,
            lambda: lambda_map(d),
            xi: xi_map(n, kappa)?,
        })
    }

    pub fn lambda_matrix(&self) -> CMat {
        linalg::permutation_matrix(&self.lambda)
    }

    pub fn xi_matrix(&self) -> CMat {
        linalg::permutation_matrix(&self.xi)
    }
}

/// `Λ_d` as an index map: `a·d + b ↦ b·d + a`.
pub fn lambda_map(d: usize) -> Vec<usize> {
    (0..d * d).map(|i| (i % d) * d + i / d).collect()
}

/// `Ξ_{n,κ}` as an index map: identity on the first κ indices, then adjacent swaps.
pub fn xi_map(n: usize, kappa: usize) -> Result<Vec<usize>> {
    if kappa > n || (n - kappa) % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot pair {} complex poles (n = {n}, kappa = {kappa})",
            n.saturating_sub(kappa)
        )));
    }
    Ok((0..n)
        .map(|i| {
            if i < kappa {
                i
            } else if (i - kappa) % 2 == 0 {
                i + 1
            } else {
                i - 1
            }
        })
        .collect())
}

/// `P conj(A) P` for an involutive index map `p`.
pub fn conj_permuted(a: &CMat, p: &[usize]) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(p[i], p[j])].conj())
}

/// Relative defect `‖Ξ conj(M) Ξ − M‖_max / ‖M‖_max`.
pub fn xi_symmetry_defect(m: &CMat, kappa: usize) -> Result<f64> {
    let xi = xi_map(m.nrows(), kappa)?;
    let scale = linalg::max_abs(m);
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(linalg::max_abs_diff(&conj_permuted(m, &xi), m) / scale)
}

pub fn is_real(z: c64, tol: f64) -> bool {
    z.im.abs() <= tol * (1.0 + z.norm())
}

/// Result of sorting a conjugation-closed pole set into canonical order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoleOrder {
    /// `perm[k]` is the input index placed at position `k`.
    pub perm: Vec<usize>,
    pub kappa: usize,
}

/// Canonical ordering: real poles by descending real part (stationary first),
/// then conjugate pairs by descending real part with the positive imaginary part first.
pub fn order_poles(values: &[c64], real_tol: f64) -> Result<PoleOrder> {
    let n = values.len();
    if n == 0 {
        return Ok(PoleOrder {
            perm: Vec::new(),
            kappa: 0,
        });
    }
    let mut reals: Vec<usize> = (0..n).filter(|&i| is_real(values[i], real_tol)).collect();
    let mut upper: Vec<usize> = (0..n)
        .filter(|&i| !is_real(values[i], real_tol) && values[i].im > 0.0)
        .collect();
    let mut lower: Vec<usize> = (0..n)
        .filter(|&i| !is_real(values[i], real_tol) && values[i].im < 0.0)
        .collect();
    if upper.len() != lower.len() {
        return Err(Error::NotConjugateClosed(format!(
            "{} poles above and {} below the real axis",
            upper.len(),
            lower.len()
        )));
    }
    reals.sort_by(|&a, &b| values[b].re.total_cmp(&values[a].re));
    upper.sort_by(|&a, &b| {
        values[b]
            .re
            .total_cmp(&values[a].re)
            .then(values[b].im.total_cmp(&values[a].im))
    });

    let max_re = values.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    match reals.first() {
        Some(&i) if values[i].re >= max_re - real_tol * (1.0 + values[i].norm()) => {}
        _ => {
            return Err(Error::NotConjugateClosed(
                "the pole with the largest real part is not real".into(),
            ))
        }
    }

    let mut perm = reals.clone();
    for &u in &upper {
        let target = values[u].conj();
        let (pos, dist) = lower
            .iter()
            .enumerate()
            .map(|(p, &l)| (p, (values[l] - target).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("lower half nonempty");
        if dist > PAIR_TOL * (1.0 + values[u].norm()) {
            return Err(Error::NotConjugateClosed(format!(
                "pole {} has no conjugate partner (closest at distance {dist:.3e})",
                values[u]
            )));
        }
        perm.push(u);
        perm.push(lower.remove(pos));
    }
    Ok(PoleOrder {
        perm,
        kappa: reals.len(),
    })
}

/// `T = conj(Q)⊗1 + 1⊗Q + conj(R)⊗R`.
pub fn build_transfer(state: &Cmps) -> TransferMatrix {
    let d = state.d();
    let id = linalg::identity(d);
    let t = linalg::kron(&linalg::conj(state.q()), &id)
        + linalg::kron(&id, state.q())
        + linalg::kron(&linalg::conj(state.r()), state.r());
    TransferMatrix { t, d }
}

pub fn gauge_residual(q: &CMat, r: &CMat) -> f64 {
    let g = q + linalg::adjoint(q) + linalg::adjoint(r) * r;
    linalg::max_abs(&g)
}

/// `Q = −iK − ½R†R`.
pub fn q_from_kr(k: &AuxiliaryHamiltonian, r: &CMat) -> Result<CMat> {
    let km = k.matrix();
    if r.nrows() != km.nrows() || r.ncols() != km.ncols() {
        return Err(Error::DimensionMismatch {
            what: "R versus K",
            expected: km.nrows(),
            found: r.nrows(),
        });
    }
    let rr = linalg::adjoint(r) * r;
    Ok(CMat::from_fn(km.nrows(), km.ncols(), |i, j| {
        c(0.0, -1.0) * km[(i, j)] - rr[(i, j)] * 0.5
    }))
}

/// What [`k_from_qr`] does when the gauge condition does not hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GaugePolicy {
    #[default]
    Reject,
    /// Return the Hermitian part of `i(Q + ½R†R)` and log a warning.
    Project,
}

/// `K = i(Q + ½R†R)` on the gauge manifold `Q + Q† + R†R = 0`.
pub fn k_from_qr(q: &CMat, r: &CMat, policy: GaugePolicy) -> Result<AuxiliaryHamiltonian> {
    if q.nrows() != r.nrows() || q.ncols() != r.ncols() || q.nrows() != q.ncols() {
        return Err(Error::DimensionMismatch {
            what: "Q versus R",
            expected: q.nrows(),
            found: r.nrows(),
        });
    }
    let rr = linalg::adjoint(r) * r;
    let residual = gauge_residual(q, r);
    let scale = linalg::max_abs(q) + linalg::max_abs(&rr);
    if residual > GAUGE_TOL * scale {
        match policy {
            GaugePolicy::Reject => return Err(Error::GaugeViolation { residual }),
            GaugePolicy::Project => {
                warn!("projecting onto the gauge manifold, residual {residual:.3e}")
            }
        }
    }
    let k = CMat::from_fn(q.nrows(), q.ncols(), |i, j| {
        c(0.0, 1.0) * (q[(i, j)] + rr[(i, j)] * 0.5)
    });
    Ok(AuxiliaryHamiltonian::from_hermitian_part(&k))
}

/// `(G⁻¹QG, G⁻¹RG)`.
pub fn gauge_transform(state: &Cmps, g: &CMat) -> Result<Cmps> {
    if g.nrows() != state.d() || g.ncols() != state.d() {
        return Err(Error::DimensionMismatch {
            what: "gauge matrix",
            expected: state.d(),
            found: g.nrows(),
        });
    }
    let gi = linalg::inverse(g, "gauge matrix")?;
    let q = &gi * state.q() * g;
    let r = &gi * state.r() * g;
    Cmps::new(q, r)
}

/// Shifts `Q` by a real multiple of the identity so that `max Re λ(T) = 0`.
pub fn stationarize(state: &Cmps) -> Result<Cmps> {
    let t = build_transfer(state);
    let top = t
        .eigenvalues()?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    // T(Q − c·1, R) = T(Q, R) − 2c·1
    let shift = 0.5 * top;
    let mut q = state.q().clone();
    for i in 0..q.nrows() {
        q[(i, i)] -= c(shift, 0.0);
    }
    Cmps::new(q, state.r().clone())
}

/// Shifts a transfer matrix so that its largest real part is zero.
pub fn stationarize_transfer(t: &TransferMatrix) -> Result<TransferMatrix> {
    let top = t
        .eigenvalues()?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(t.shifted(top))
}
