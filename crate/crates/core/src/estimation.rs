//! Pole and residue estimation from uniformly sampled sums of damped exponentials.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::correlators::CorrelationTensor;
use crate::error::{Error, Result};
use crate::linalg::{self, c, c64, CMat};
use crate::tensor;

/// Largest per-axis Vandermonde condition number accepted by [`solve_residues`].
pub const MAX_VANDERMONDE_CONDITION: f64 = 1e13;

/// Default relative singular-value threshold for [`estimate_order`] on noiseless data.
pub const DEFAULT_ORDER_THRESHOLD: f64 = 1e-8;

/// Default factor by which Prony estimators overestimate the model order.
pub const DEFAULT_OVERESTIMATE: f64 = 1.5;

/// Hankel matrices `C1[j,k] = C_{j+k}` and `C2[j,k] = C_{j+k+1}`, both `(N−P) × P`.
#[derive(Clone, Debug)]
pub struct HankelPair {
    pub c1: CMat,
    pub c2: CMat,
    pub n: usize,
    pub p: usize,
}

pub fn build_hankel(samples: &[c64], p: usize) -> Result<HankelPair> {
    let n = samples.len();
    if p == 0 || p >= n {
        return Err(Error::InvalidArgument(format!(
            "pencil parameter P = {p} outside 1..={}",
            n.saturating_sub(1)
        )));
    }
    let rows = n - p;
    let c1 = CMat::from_fn(rows, p, |j, k| samples[j + k]);
    let c2 = CMat::from_fn(rows, p, |j, k| samples[j + k + 1]);
    Ok(HankelPair { c1, c2, n, p })
}

/// Default pencil parameter `round(0.4 N)` clamped to `[order + 1, N − order − 1]`.
pub fn default_pencil(n: usize, order: usize) -> Result<usize> {
    if n < 2 * order + 2 {
        return Err(Error::InvalidArgument(format!(
            "{n} samples cannot support a pencil of order {order} (need at least {})",
            2 * order + 2
        )));
    }
    let p = (0.4 * n as f64).round() as usize;
    Ok(p.clamp(order + 1, n - order - 1))
}

/// Number of singular values of `C1` above `rel_threshold · σ_1`.
pub fn estimate_order(hp: &HankelPair, rel_threshold: f64) -> Result<usize> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "relative threshold {rel_threshold} outside (0, 1)"
        )));
    }
    let s = linalg::singular_values(&hp.c1)?;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok(s.iter().filter(|&&x| x > rel_threshold * top).count())
}

/// Exponentiated poles `μ_k` and poles `λ_k = ln(μ_k)/Δτ` (principal branch).
#[derive(Clone, Debug, PartialEq)]
pub struct PoleEstimate {
    pub mus: Vec<c64>,
    pub lambdas: Vec<c64>,
    pub order: usize,
    pub delta_tau: f64,
}

impl PoleEstimate {
    pub fn from_mus(mus: Vec<c64>, delta_tau: f64) -> Self {
        let lambdas = mus.iter().map(|m| m.ln() / delta_tau).collect();
        let order = mus.len();
        Self {
            mus,
            lambdas,
            order,
            delta_tau,
        }
    }

    pub fn from_lambdas(lambdas: Vec<c64>, delta_tau: f64) -> Self {
        let mus = lambdas.iter().map(|l| (l * delta_tau).exp()).collect();
        let order = lambdas.len();
        Self {
            mus,
            lambdas,
            order,
            delta_tau,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PronyVariant {
    /// Least-squares solve of the Hankel recurrence with `a_order = 1`.
    Solve,
    /// Smallest right singular vector of the `(order+1)`-column Hankel matrix.
    Kernel,
}

/// Roots of `Σ_l a_l z^l` (coefficients in ascending degree) via balanced companion matrix.
pub fn polynomial_roots(coeffs: &[c64]) -> Result<Vec<c64>> {
    let deg = coeffs.len().saturating_sub(1);
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[deg];
    let scale = coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if lead.norm() <= 1e-14 * scale || !lead.is_finite() {
        return Err(Error::RootFinding(format!(
            "leading coefficient {lead} vanishes relative to {scale:.3e}"
        )));
    }
    let mut comp = linalg::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = c(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let balanced = linalg::balance(&comp);
    let roots = linalg::eigenvalues(&balanced)
        .map_err(|e| Error::RootFinding(format!("companion eigenvalues: {e}")))?;
    if roots.iter().any(|z| !z.is_finite()) {
        return Err(Error::RootFinding("non-finite root".into()));
    }
    Ok(roots)
}

/// Prony's method on `samples` for a fixed model `order`.
pub fn prony_poles(
    samples: &[c64],
    order: usize,
    delta_tau: f64,
    variant: PronyVariant,
) -> Result<PoleEstimate> {
    check_delta_tau(delta_tau)?;
    let n = samples.len();
    if order == 0 {
        return Err(Error::InvalidArgument("model order must be positive".into()));
    }
    if n < 2 * order {
        return Err(Error::InvalidArgument(format!(
            "Prony of order {order} needs at least {} samples, got {n}",
            2 * order
        )));
    }
    let rows = n - order;
    let coeffs = match variant {
        PronyVariant::Solve => {
            let h = CMat::from_fn(rows, order, |j, l| samples[j + l]);
            let rhs: Vec<c64> = (0..rows).map(|j| -samples[j + order]).collect();
            let dec = linalg::thin_svd(&h)?;
            let top = dec.s.first().copied().unwrap_or(0.0);
            if top == 0.0 {
                return Err(Error::ZeroSignal);
            }
            let cond = top / dec.s[order - 1];
            if !cond.is_finite() || cond > 1e14 {
                return Err(Error::IllConditioned {
                    what: "Prony Hankel system",
                    condition: cond,
                });
            }
            let pinv = linalg::pinv_rank(&dec, order);
            let mut a = linalg::mat_vec(&pinv, &rhs);
            a.push(c(1.0, 0.0));
            a
        }
        PronyVariant::Kernel => {
            let h = CMat::from_fn(rows, order + 1, |j, l| samples[j + l]);
            let dec = linalg::svd(&h)?;
            let top = dec.s.first().copied().unwrap_or(0.0);
            if top == 0.0 {
                return Err(Error::ZeroSignal);
            }
            let cond = top / dec.s[order - 1];
            if !cond.is_finite() || cond > 1e14 {
                return Err(Error::IllConditioned {
                    what: "Prony kernel (null space is not one-dimensional)",
                    condition: cond,
                });
            }
            linalg::column(&dec.v, order)
        }
    };
    let mus = polynomial_roots(&coeffs)?;
    Ok(PoleEstimate::from_mus(mus, delta_tau))
}

fn check_delta_tau(delta_tau: f64) -> Result<()> {
    if !(delta_tau > 0.0 && delta_tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "delta_tau must be positive, got {delta_tau}"
        )));
    }
    Ok(())
}

fn check_pencil(hp: &HankelPair, order: usize) -> Result<()> {
    if order == 0 {
        return Err(Error::InvalidArgument("model order must be positive".into()));
    }
    if hp.p <= order || hp.n - hp.p <= order {
        return Err(Error::InvalidArgument(format!(
            "pencil needs N − P > order and P > order (N = {}, P = {}, order = {order})",
            hp.n, hp.p
        )));
    }
    Ok(())
}

fn numerical_rank(s: &[f64], rows: usize, cols: usize) -> usize {
    let top = s.first().copied().unwrap_or(0.0);
    let tol = top * rows.max(cols) as f64 * f64::EPSILON;
    s.iter().filter(|&&x| x > tol).count()
}

/// Matrix pencil: nonzero eigenvalues of `pinv(C1) C2` with `C1` truncated to rank `order`.
pub fn mpm_poles(hp: &HankelPair, order: usize, delta_tau: f64) -> Result<PoleEstimate> {
    check_delta_tau(delta_tau)?;
    check_pencil(hp, order)?;
    let dec = linalg::thin_svd(&hp.c1)?;
    let rank = numerical_rank(&dec.s, hp.c1.nrows(), hp.c1.ncols());
    if rank < order {
        return Err(Error::RankDeficient { rank, order });
    }
    // Σ_r⁻¹ U_r† C2 V_r shares the nonzero spectrum of pinv_r(C1) C2
    let ur = dec.u.subcols(0, order).to_owned();
    let vr = dec.v.subcols(0, order).to_owned();
    let mut reduced = linalg::adjoint(&ur) * &hp.c2 * &vr;
    for i in 0..order {
        let inv = 1.0 / dec.s[i];
        for j in 0..order {
            reduced[(i, j)] *= inv;
        }
    }
    let mus = linalg::eigenvalues(&reduced)?;
    Ok(PoleEstimate::from_mus(mus, delta_tau))
}

/// State-space matrix pencil with two rank-`order` SVD truncations.
pub fn ssmpm_poles(hp: &HankelPair, order: usize, delta_tau: f64) -> Result<PoleEstimate> {
    check_delta_tau(delta_tau)?;
    check_pencil(hp, order)?;
    let p = hp.p;
    let rows = hp.c1.nrows();
    let joint = CMat::from_fn(rows, 2 * p, |i, j| {
        if j < p {
            hp.c1[(i, j)]
        } else {
            hp.c2[(i, j - p)]
        }
    });
    let dec = linalg::thin_svd(&joint)?;
    let rank = numerical_rank(&dec.s, rows, 2 * p);
    if rank < order {
        return Err(Error::RankDeficient { rank, order });
    }
    // C1 ≈ A V1†, C2 ≈ A V2†, so the pencil acts on conj(V1), conj(V2)
    let b = CMat::from_fn(p, 2 * order, |i, j| {
        if j < order {
            dec.v[(i, j)].conj()
        } else {
            dec.v[(p + i, j - order)].conj()
        }
    });
    let dec2 = linalg::svd(&b)?;
    let vh = linalg::adjoint(&dec2.v);
    let e1 = CMat::from_fn(order, order, |i, j| vh[(i, j)]);
    let e2 = CMat::from_fn(order, order, |i, j| vh[(i, order + j)]);
    let e1_inv = match linalg::inverse_checked(&e1, "filtered pencil block", 1e13) {
        Ok(inv) => inv,
        Err(err) => {
            warn!("ss-MPM: {err}; falling back to the pseudoinverse");
            linalg::pinv(&e1, 1e-13)?
        }
    };
    let mus = linalg::eigenvalues(&(e1_inv * e2))?;
    Ok(PoleEstimate::from_mus(mus, delta_tau))
}

/// Sums an n-point tensor over all but one axis and adds the per-axis results.
pub fn project_average(ct: &CorrelationTensor) -> Result<Vec<c64>> {
    if ct.n < 3 {
        return Err(Error::InvalidArgument(format!(
            "projection averaging needs n ≥ 3, got {}",
            ct.n
        )));
    }
    let rank = ct.n - 1;
    let n = ct.n_samples;
    let mut out = vec![c(0.0, 0.0); n];
    let mut idx = vec![0usize; rank];
    for (flat, v) in ct.values.iter().enumerate() {
        tensor::unflatten(flat, rank, n, &mut idx);
        for &l in &idx {
            out[l] += v;
        }
    }
    Ok(out)
}

/// Poles with the residue tensor of an n-point function.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidueModel {
    pub poles: Vec<c64>,
    /// Shape `order^(n−1)`, row-major with `k_{n−1}` fastest.
    pub residues: Vec<c64>,
    pub n: usize,
    pub rms_fit_error: f64,
    /// Condition estimate of the Kronecker-Vandermonde design (1 for exact models).
    pub condition: f64,
}

impl ResidueModel {
    pub fn order(&self) -> usize {
        self.poles.len()
    }

    pub fn get(&self, idx: &[usize]) -> c64 {
        self.residues[tensor::flatten(idx, self.order())]
    }

    /// Evaluates the model on the grid `l·Δτ`, `l = 0..N−1` per axis.
    pub fn evaluate_grid(&self, n_samples: usize, delta_tau: f64) -> Result<CorrelationTensor> {
        let v = vandermonde(&self.poles, n_samples, delta_tau);
        let values = tensor::apply_all_axes(&self.residues, self.n - 1, self.order(), &v);
        CorrelationTensor::new(self.n, n_samples, delta_tau, false, values)
    }

    /// Restricts the model to a subset of pole indices (in the given order).
    pub fn select(&self, keep: &[usize]) -> ResidueModel {
        let k = self.order();
        let rank = self.n - 1;
        let m = keep.len();
        let total = m.pow(rank as u32);
        let mut idx = vec![0usize; rank];
        let mut src = vec![0usize; rank];
        let residues = (0..total)
            .map(|flat| {
                tensor::unflatten(flat, rank, m, &mut idx);
                for j in 0..rank {
                    src[j] = keep[idx[j]];
                }
                self.residues[tensor::flatten(&src, k)]
            })
            .collect();
        ResidueModel {
            poles: keep.iter().map(|&i| self.poles[i]).collect(),
            residues,
            n: self.n,
            rms_fit_error: self.rms_fit_error,
            condition: self.condition,
        }
    }
}

/// `V[l, k] = exp(λ_k l Δτ)`.
pub fn vandermonde(lambdas: &[c64], n_samples: usize, delta_tau: f64) -> CMat {
    CMat::from_fn(n_samples, lambdas.len(), |l, k| {
        (lambdas[k] * (l as f64 * delta_tau)).exp()
    })
}

/// Least-squares residues for known poles: the Kronecker-Vandermonde system is solved
/// axis by axis with the per-axis pseudoinverse.
pub fn solve_residues(poles: &PoleEstimate, ct: &CorrelationTensor) -> Result<ResidueModel> {
    if poles.lambdas.is_empty() {
        return Err(Error::InvalidArgument("no poles supplied".into()));
    }
    let rel = (poles.delta_tau - ct.delta_tau).abs() / ct.delta_tau;
    if rel > 1e-12 {
        return Err(Error::DeltaTauMismatch {
            left: poles.delta_tau,
            right: ct.delta_tau,
        });
    }
    let rank = ct.n - 1;
    let k = poles.lambdas.len();
    if ct.n_samples < k {
        return Err(Error::InvalidArgument(format!(
            "{} samples per axis cannot determine {k} residues",
            ct.n_samples
        )));
    }
    let v = vandermonde(&poles.lambdas, ct.n_samples, ct.delta_tau);
    let dec = linalg::thin_svd(&v)?;
    let axis_cond = dec.s[0] / dec.s[k - 1];
    if !axis_cond.is_finite() || axis_cond > MAX_VANDERMONDE_CONDITION {
        return Err(Error::IllConditioned {
            what: "Vandermonde design",
            condition: axis_cond,
        });
    }
    let vp = linalg::pinv_rank(&dec, k);
    let residues = tensor::apply_all_axes(&ct.values, rank, ct.n_samples, &vp);
    let fitted = tensor::apply_all_axes(&residues, rank, k, &v);
    let sq: f64 = fitted
        .iter()
        .zip(&ct.values)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let rms = (sq / ct.values.len() as f64).sqrt();
    Ok(ResidueModel {
        poles: poles.lambdas.clone(),
        residues,
        n: ct.n,
        rms_fit_error: rms,
        condition: axis_cond.powi(rank as i32),
    })
}

/// Greedy conjugate pairing: each pole is matched with the partner (possibly itself)
/// minimizing `|λ_a − conj(λ_b)|`; pairs are replaced by their symmetrized average.
pub fn conjugate_symmetrize(lambdas: &[c64]) -> Vec<c64> {
    let n = lambdas.len();
    let mut candidates = Vec::with_capacity(n * (n + 1) / 2);
    for a in 0..n {
        for b in a..n {
            candidates.push(((lambdas[a] - lambdas[b].conj()).norm(), a, b));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used = vec![false; n];
    let mut out = lambdas.to_vec();
    for (_, a, b) in candidates {
        if used[a] || used[b] {
            continue;
        }
        used[a] = true;
        used[b] = true;
        if a == b {
            out[a] = c(lambdas[a].re, 0.0);
        } else {
            let mean = (lambdas[a] + lambdas[b].conj()) * 0.5;
            out[a] = mean;
            out[b] = mean.conj();
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Prony,
    PronyKernel,
    Mpm,
    #[default]
    Ssmpm,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prony" => Ok(Estimator::Prony),
            "prony-kernel" => Ok(Estimator::PronyKernel),
            "mpm" => Ok(Estimator::Mpm),
            "ssmpm" => Ok(Estimator::Ssmpm),
            other => Err(Error::InvalidArgument(format!("unknown estimator '{other}'"))),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Prony => "prony",
            Estimator::PronyKernel => "prony-kernel",
            Estimator::Mpm => "mpm",
            Estimator::Ssmpm => "ssmpm",
        })
    }
}

/// Settings for [`estimate_poles`].
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub estimator: Estimator,
    /// Fixed model order; estimated from the Hankel spectrum when `None`.
    pub order: Option<usize>,
    pub pencil: Option<usize>,
    pub order_threshold: f64,
    /// Prony candidate count relative to the model order.
    pub overestimate: f64,
    /// Apply [`conjugate_symmetrize`] to the result.
    pub symmetrize: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::Ssmpm,
            order: None,
            pencil: None,
            order_threshold: DEFAULT_ORDER_THRESHOLD,
            overestimate: DEFAULT_OVERESTIMATE,
            symmetrize: true,
        }
    }
}

/// Full pole-estimation step for a 2-point-like signal: order selection, estimator,
/// spurious-pole pruning (Prony) and conjugate symmetrization.
pub fn estimate_poles(signal: &[c64], delta_tau: f64, cfg: &EstimatorConfig) -> Result<PoleEstimate> {
    let n = signal.len();
    let order = match cfg.order {
        Some(o) => o,
        None => {
            let p = cfg
                .pencil
                .unwrap_or_else(|| ((0.4 * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1)));
            let hp = build_hankel(signal, p)?;
            let o = estimate_order(&hp, cfg.order_threshold)?;
            debug!("estimated model order {o}");
            o
        }
    };
    let raw = match cfg.estimator {
        Estimator::Mpm | Estimator::Ssmpm => {
            let p = match cfg.pencil {
                Some(p) => p,
                None => default_pencil(n, order)?,
            };
            let hp = build_hankel(signal, p)?;
            if cfg.estimator == Estimator::Mpm {
                mpm_poles(&hp, order, delta_tau)?
            } else {
                ssmpm_poles(&hp, order, delta_tau)?
            }
        }
        Estimator::Prony | Estimator::PronyKernel => {
            let variant = if cfg.estimator == Estimator::Prony {
                PronyVariant::Solve
            } else {
                PronyVariant::Kernel
            };
            let candidates = ((cfg.overestimate.max(1.0) * order as f64).ceil() as usize)
                .min(n / 2)
                .max(order);
            let est = if candidates > order {
                match prony_poles(signal, candidates, delta_tau, variant) {
                    Ok(e) => prune_by_residue(e, signal, order)?,
                    Err(err) => {
                        debug!("overestimated Prony failed ({err}); using order {order}");
                        prony_poles(signal, order, delta_tau, variant)?
                    }
                }
            } else {
                prony_poles(signal, order, delta_tau, variant)?
            };
            est
        }
    };
    if cfg.symmetrize {
        Ok(PoleEstimate::from_lambdas(
            conjugate_symmetrize(&raw.lambdas),
            delta_tau,
        ))
    } else {
        Ok(raw)
    }
}

/// Gauss-Newton polish of poles and residues against a 1-D signal, in the variables
/// `(ρ_k, λ_k)` of `s_l = Σ ρ_k exp(λ_k l Δτ)`. Steps are halved until the residual
/// decreases; the input is returned unchanged when no step helps.
pub fn refine_poles(est: &PoleEstimate, signal: &[c64], max_iter: usize) -> Result<PoleEstimate> {
    check_delta_tau(est.delta_tau)?;
    let n = signal.len();
    let k = est.lambdas.len();
    if k == 0 || n < 2 * k {
        return Err(Error::InvalidArgument(format!(
            "{n} samples cannot refine {k} poles"
        )));
    }
    let dt = est.delta_tau;
    let fit = |lambdas: &[c64]| -> Result<(Vec<c64>, f64)> {
        let v = vandermonde(lambdas, n, dt);
        let dec = linalg::thin_svd(&v)?;
        let rho = linalg::mat_vec(
            &linalg::pinv_rank(&dec, numerical_rank(&dec.s, n, k)),
            signal,
        );
        let model = linalg::mat_vec(&v, &rho);
        let cost = model.iter().zip(signal).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((rho, cost))
    };
    let mut lambdas = est.lambdas.clone();
    let (mut rho, mut cost) = fit(&lambdas)?;
    let start = cost;
    for _ in 0..max_iter {
        let v = vandermonde(&lambdas, n, dt);
        let residual: Vec<c64> = (0..n)
            .map(|l| signal[l] - (0..k).map(|j| v[(l, j)] * rho[j]).sum::<c64>())
            .collect();
        let mut jac = CMat::from_fn(n, 2 * k, |l, j| {
            if j < k {
                v[(l, j)]
            } else {
                let q = j - k;
                rho[q] * v[(l, q)] * (l as f64 * dt)
            }
        });
        let scales: Vec<f64> = (0..2 * k)
            .map(|j| {
                let norm = (0..n).map(|l| jac[(l, j)].norm_sqr()).sum::<f64>().sqrt();
                if norm > 0.0 { norm } else { 1.0 }
            })
            .collect();
        for j in 0..2 * k {
            for l in 0..n {
                jac[(l, j)] /= scales[j];
            }
        }
        let dec = linalg::thin_svd(&jac)?;
        let step = linalg::mat_vec(
            &linalg::pinv_rank(&dec, numerical_rank(&dec.s, n, 2 * k)),
            &residual,
        );
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<c64> = (0..k)
                .map(|q| lambdas[q] + step[k + q] * (t / scales[k + q]))
                .collect();
            let (trial_rho, trial_cost) = fit(&trial)?;
            if trial_cost < cost {
                accepted = true;
                lambdas = trial;
                rho = trial_rho;
                let gain = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                cost = trial_cost;
                if gain < 1e-6 {
                    t = 0.0;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted || t == 0.0 || cost == 0.0 {
            break;
        }
    }
    debug!("pole refinement: residual {:.3e} -> {:.3e}", start.sqrt(), cost.sqrt());
    Ok(PoleEstimate::from_lambdas(lambdas, dt))
}

/// Keeps the `order` candidates carrying the largest fitted residues.
pub fn prune_by_residue(est: PoleEstimate, signal: &[c64], order: usize) -> Result<PoleEstimate> {
    if est.order <= order {
        return Ok(est);
    }
    let ct = CorrelationTensor::new(2, signal.len(), est.delta_tau, false, signal.to_vec())?;
    let v = vandermonde(&est.lambdas, signal.len(), est.delta_tau);
    let dec = linalg::thin_svd(&v)?;
    let pinv = linalg::pinv_rank(&dec, numerical_rank(&dec.s, v.nrows(), v.ncols()));
    let rho = linalg::mat_vec(&pinv, &ct.values);
    let mut idx: Vec<usize> = (0..est.order).collect();
    idx.sort_by(|&a, &b| rho[b].norm().total_cmp(&rho[a].norm()).then(a.cmp(&b)));
    idx.truncate(order);
    idx.sort_unstable();
    Ok(PoleEstimate::from_mus(
        idx.iter().map(|&i| est.mus[i]).collect(),
        est.delta_tau,
    ))
}
