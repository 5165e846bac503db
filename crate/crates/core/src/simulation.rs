//! Random cMPS ensembles, noise and perturbation models, Monte Carlo benchmarks and
//! block-structure analysis.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlators::{self, CorrelationTensor, SpectralData};
use crate::error::{Error, Result};
use crate::estimation::{self, Estimator, EstimatorConfig};
use crate::linalg::{self, c, c64, CMat};
use crate::model::{self, build_transfer, AuxiliaryHamiltonian, Cmps, TransferMatrix};
use crate::reconstruction::{self, MdModel, Quality, ReconstructConfig};

/// Relative imaginary part below which a tensor is treated as a real signal.
pub const REAL_SIGNAL_TOL: f64 = 1e-10;

/// Environment variable capping the number of benchmark worker threads.
pub const THREADS_ENV: &str = "CMPS_TOMO_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// `Q` and `R` drawn directly.
    #[serde(rename = "naive_QR")]
    NaiveQr,
    /// `K` and `R` drawn and scaled by `η`.
    #[serde(rename = "refined_KR")]
    RefinedKr,
}

impl std::str::FromStr for EnsembleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" | "naive_QR" => Ok(EnsembleMode::NaiveQr),
            "refined" | "refined_KR" => Ok(EnsembleMode::RefinedKr),
            other => Err(Error::InvalidArgument(format!("unknown ensemble mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub d: usize,
    pub mode: EnsembleMode,
    pub mu: f64,
    pub sigma: f64,
    pub eta: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn refined(d: usize, sigma: f64, eta: f64, seed: u64) -> Self {
        Self {
            d,
            mode: EnsembleMode::RefinedKr,
            mu: 0.0,
            sigma,
            eta,
            seed,
        }
    }

    pub fn naive(d: usize, sigma: f64, seed: u64) -> Self {
        Self {
            d,
            mode: EnsembleMode::NaiveQr,
            mu: 0.0,
            sigma,
            eta: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("bond dimension d must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidArgument("mu must be finite".into()));
        }
        if self.mode == EnsembleMode::RefinedKr && !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Generator for trial `stream` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, d: usize, mu: f64, sigma: f64) -> CMat {
    let normal = Normal::new(mu, sigma).expect("validated parameters");
    let mut out = linalg::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let re = normal.sample(rng);
            let im = normal.sample(rng);
            out[(i, j)] = c(re, im);
        }
    }
    out
}

/// Draws one state of the ensemble from `rng` and shifts it to stationarity.
pub fn random_cmps_with<R: Rng + ?Sized>(spec: &EnsembleSpec, rng: &mut R) -> Result<Cmps> {
    spec.validate()?;
    let d = spec.d;
    let state = match spec.mode {
        EnsembleMode::NaiveQr => {
            let q = gaussian_matrix(rng, d, spec.mu, spec.sigma);
            let r = gaussian_matrix(rng, d, spec.mu, spec.sigma);
            Cmps::new(q, r)?
        }
        EnsembleMode::RefinedKr => {
            let a = gaussian_matrix(rng, d, spec.mu, spec.sigma);
            let b = gaussian_matrix(rng, d, spec.mu, spec.sigma);
            let k = linalg::scale_re(&linalg::hermitian_part(&a), spec.eta);
            let r = linalg::scale_re(&b, spec.eta);
            Cmps::from_kr(&AuxiliaryHamiltonian::new(k)?, r)?
        }
    };
    model::stationarize(&state)
}

pub fn random_cmps(spec: &EnsembleSpec) -> Result<Cmps> {
    random_cmps_with(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}

/// Hermitian `(A + A†)/2` with Gaussian `A`, as used for `K` in the refined ensemble.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize, sigma: f64) -> CMat {
    linalg::hermitian_part(&gaussian_matrix(rng, d, 0.0, sigma))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr: f64,
    pub seed: u64,
}

/// White Gaussian noise with standard deviation `mean|values| / snr`.
pub fn add_noise_with<R: Rng + ?Sized>(
    ct: &CorrelationTensor,
    snr: f64,
    rng: &mut R,
) -> Result<CorrelationTensor> {
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!("SNR must be positive, got {snr}")));
    }
    if snr.is_infinite() {
        return Ok(ct.clone());
    }
    let std = ct.mean_abs() / snr;
    if std == 0.0 {
        return Ok(ct.clone());
    }
    let mut out = ct.clone();
    if ct.max_relative_imag() <= REAL_SIGNAL_TOL {
        let normal = Normal::new(0.0, std).expect("finite std");
        for z in &mut out.values {
            z.re += normal.sample(rng);
        }
    } else {
        let normal = Normal::new(0.0, std / 2f64.sqrt()).expect("finite std");
        for z in &mut out.values {
            z.re += normal.sample(rng);
            z.im += normal.sample(rng);
        }
    }
    Ok(out)
}

pub fn add_noise(ct: &CorrelationTensor, ns: &NoiseSpec) -> Result<CorrelationTensor> {
    add_noise_with(ct, ns.snr, &mut ChaCha8Rng::seed_from_u64(ns.seed))
}

/// `M + ε Δ` with `Δ = (Δ₀ + Ξ conj(Δ₀) Ξ)/2`, first row of `Δ` zero.
pub fn perturb_m_with<R: Rng + ?Sized>(m: &CMat, kappa: usize, eps: f64, rng: &mut R) -> Result<CMat> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "M must be square",
            expected: n,
            found: m.ncols(),
        });
    }
    let xi = model::xi_map(n, kappa)?;
    let std = linalg::mean_abs(m) / 2f64.sqrt();
    let mut delta0 = linalg::zeros(n, n);
    if std > 0.0 {
        let normal = Normal::new(0.0, std).expect("finite std");
        for i in 0..n {
            for j in 0..n {
                let re = normal.sample(rng);
                let im = normal.sample(rng);
                delta0[(i, j)] = c(re, im);
            }
        }
    }
    let mirrored = model::conj_permuted(&delta0, &xi);
    let mut out = m.clone();
    for i in 1..n {
        for j in 0..n {
            out[(i, j)] += (delta0[(i, j)] + mirrored[(i, j)]) * (0.5 * eps);
        }
    }
    Ok(out)
}

pub fn perturb_m(m: &CMat, kappa: usize, eps: f64, seed: u64) -> Result<CMat> {
    perturb_m_with(m, kappa, eps, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `ℛ = conj(R)⊗R − ½ conj(R†R)⊗1 − ½ 1⊗R†R`.
fn dissipator(r: &CMat) -> CMat {
    let id = linalg::identity(r.nrows());
    let rr = linalg::adjoint(r) * r;
    linalg::kron(&linalg::conj(r), r)
        - linalg::scale_re(&linalg::kron(&linalg::conj(&rr), &id), 0.5)
        - linalg::scale_re(&linalg::kron(&id, &rr), 0.5)
}

/// Transfer matrix with a second, unobserved field of strength `eps`, shifted to stationarity.
pub fn additional_field_transfer(k: &CMat, r1: &CMat, r2: &CMat, eps: f64) -> Result<TransferMatrix> {
    let d = k.nrows();
    for (what, m) in [("K", k), ("R1", r1), ("R2", r2)] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                what: match what {
                    "K" => "K must be square",
                    "R1" => "R1 versus K",
                    _ => "R2 versus K",
                },
                expected: d,
                found: m.nrows(),
            });
        }
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be nonnegative, got {eps}")));
    }
    let id = linalg::identity(d);
    let i = c(0.0, 1.0);
    let t = linalg::scale(&linalg::kron(&linalg::conj(k), &id), i)
        - linalg::scale(&linalg::kron(&id, k), i)
        + dissipator(r1)
        + linalg::scale_re(&dissipator(r2), eps);
    model::stationarize_transfer(&TransferMatrix::new(t, d)?)
}

/// Mean and maximal relative pole errors after greedy minimal-distance matching.
pub fn pole_error(truth: &[c64], estimate: &[c64], exclude_stationary: bool) -> Result<(f64, f64)> {
    let mut truth = truth.to_vec();
    let mut estimate = estimate.to_vec();
    if exclude_stationary && !truth.is_empty() {
        let stat = (0..truth.len())
            .max_by(|&a, &b| truth[a].re.total_cmp(&truth[b].re))
            .expect("nonempty");
        let pole = truth.remove(stat);
        if estimate.len() == truth.len() + 1 {
            let nearest = (0..estimate.len())
                .min_by(|&a, &b| (estimate[a] - pole).norm().total_cmp(&(estimate[b] - pole).norm()))
                .expect("nonempty");
            estimate.remove(nearest);
        }
    }
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            what: "pole counts",
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    if truth.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = truth.len();
    let mut pairs = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pairs.push(((truth[i] - estimate[j]).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut done_t = vec![false; n];
    let mut done_e = vec![false; n];
    let mut errors = Vec::with_capacity(n);
    for (dist, i, j) in pairs {
        if done_t[i] || done_e[j] {
            continue;
        }
        done_t[i] = true;
        done_e[j] = true;
        let scale = truth[i].norm();
        errors.push(if scale > 0.0 { dist / scale } else if dist == 0.0 { 0.0 } else { f64::INFINITY });
    }
    let mean = errors.iter().sum::<f64>() / n as f64;
    let max = errors.iter().cloned().fold(0.0, f64::max);
    Ok((mean, max))
}

/// `Δτ = fraction · π / max|Im λ|`, falling back to the fastest decay for real spectra.
pub fn nyquist_delta_tau(poles: &[c64], fraction: f64) -> f64 {
    let omega = poles.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let scale = poles.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if omega > 1e-3 * scale && omega > 0.0 {
        fraction * std::f64::consts::PI / omega
    } else if scale > 0.0 {
        fraction / scale
    } else {
        fraction
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    NoiseSnr,
    PerturbM,
    AdditionalField,
}

impl std::str::FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise_snr" | "noise-snr" => Ok(BenchmarkKind::NoiseSnr),
            "perturb_M" | "perturb_m" | "perturb-m" => Ok(BenchmarkKind::PerturbM),
            "additional_field" | "additional-field" => Ok(BenchmarkKind::AdditionalField),
            other => Err(Error::InvalidArgument(format!("unknown benchmark '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// Samples of the amputated 2-point function (noise benchmark).
    pub n_samples: usize,
    /// Fixed sampling interval; chosen per state from the poles when `None`.
    pub delta_tau: Option<f64>,
    pub nyquist_fraction: f64,
    pub estimator: Estimator,
    pub pencil: Option<usize>,
    /// Relative error bound for both success criteria.
    pub criterion: f64,
    /// Redraws allowed when a state has a degenerate or non-diagonalizable spectrum.
    pub max_redraws: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            delta_tau: None,
            nyquist_fraction: 0.8,
            estimator: Estimator::Ssmpm,
            pencil: None,
            criterion: 0.1,
            max_redraws: 20,
        }
    }
}

/// Outcome of a single trial: mean and max relative errors, or a failed reconstruction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    pub mean_error: f64,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPoint {
    #[serde(with = "nonfinite")]
    pub grid_value: f64,
    pub trials: usize,
    pub rate_mean_criterion: f64,
    pub rate_max_criterion: f64,
    /// Trials whose reconstruction raised an error (counted as failures).
    pub failures: usize,
    /// 10%, 50% and 90% quantiles of the per-trial mean error.
    pub error_quantiles: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub kind: BenchmarkKind,
    pub master_seed: u64,
    pub ensemble: EnsembleSpec,
    pub config: BenchmarkConfig,
    pub points: Vec<BenchmarkPoint>,
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid_value,rate_mean_criterion,rate_max_criterion,trials\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.grid_value, p.rate_mean_criterion, p.rate_max_criterion, p.trials
            ));
        }
        out
    }
}

/// Serializes non-finite floats as strings ("inf", "-inf", "nan").
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Draws states until the spectral decomposition succeeds.
fn draw_spectral<R: Rng + ?Sized>(
    spec: &EnsembleSpec,
    rng: &mut R,
    max_redraws: usize,
) -> Result<(Cmps, SpectralData)> {
    let mut last = None;
    for _ in 0..=max_redraws {
        let state = random_cmps_with(spec, rng)?;
        match correlators::spectral_decompose(&build_transfer(&state), state.r()) {
            Ok(sd) => return Ok((state, sd)),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one draw"))
}

fn permissive_config(compute_k: bool) -> ReconstructConfig {
    ReconstructConfig {
        pairing_tol: f64::INFINITY,
        kronecker_threshold: f64::INFINITY,
        compute_k,
        ..ReconstructConfig::default()
    }
}

/// Noise benchmark trial: poles of the noisy amputated 2-point function.
pub fn noise_trial<R: Rng + ?Sized>(
    spec: &EnsembleSpec,
    cfg: &BenchmarkConfig,
    snr: f64,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let (_, sd) = draw_spectral(spec, rng, cfg.max_redraws)?;
    let dt = cfg
        .delta_tau
        .unwrap_or_else(|| nyquist_delta_tau(&sd.poles, cfg.nyquist_fraction));
    let c2 = correlators::amputate(&correlators::sample(&sd, 2, cfg.n_samples, dt)?, sd.density)?;
    let noisy = add_noise_with(&c2, snr, rng)?;
    let est_cfg = EstimatorConfig {
        estimator: cfg.estimator,
        order: Some(sd.order() - 1),
        pencil: cfg.pencil,
        ..EstimatorConfig::default()
    };
    let est = estimation::estimate_poles(&noisy.values, dt, &est_cfg)?;
    let (mean_error, max_error) = pole_error(&sd.poles, &est.lambdas, true)?;
    Ok(TrialOutcome {
        mean_error,
        max_error,
    })
}

/// Perturbed-M trial: spectrum of the transfer matrix rebuilt from `M + εΔ`.
pub fn perturb_trial<R: Rng + ?Sized>(
    spec: &EnsembleSpec,
    cfg: &BenchmarkConfig,
    eps: f64,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let (_, sd) = draw_spectral(spec, rng, cfg.max_redraws)?;
    let mut md = MdModel::from_spectral(&sd)?;
    md.m = perturb_m_with(&md.m, md.kappa, eps, rng)?;
    let rc = reconstruction::cmps_from_md(&md, &permissive_config(false), &mut Quality::default())?;
    let rebuilt = build_transfer(&rc.cmps()?).eigenvalues()?;
    let (mean_error, max_error) = pole_error(&sd.poles, &rebuilt, true)?;
    Ok(TrialOutcome {
        mean_error,
        max_error,
    })
}

/// Additional-field trial: eigenvalue differences of `K` reconstructed under a
/// single-field assumption.
pub fn additional_field_trial<R: Rng + ?Sized>(
    spec: &EnsembleSpec,
    cfg: &BenchmarkConfig,
    eps: f64,
    rng: &mut R,
) -> Result<TrialOutcome> {
    spec.validate()?;
    let d = spec.d;
    let mut last = None;
    for _ in 0..=cfg.max_redraws {
        let k = linalg::scale_re(&random_hermitian(rng, d, spec.sigma), spec.eta);
        let r1 = linalg::scale_re(&gaussian_matrix(rng, d, spec.mu, spec.sigma), spec.eta);
        let r2 = linalg::scale_re(&gaussian_matrix(rng, d, spec.mu, spec.sigma), spec.eta);
        let t = additional_field_transfer(&k, &r1, &r2, eps)?;
        let sd = match correlators::spectral_decompose(&t, &r1) {
            Ok(sd) => sd,
            Err(e) => {
                last = Some(e);
                continue;
            }
        };
        let truth = reconstruction::k_differences(&k)?;
        let md = MdModel::from_spectral(&sd)?;
        let rc = reconstruction::cmps_from_md(&md, &permissive_config(true), &mut Quality::default())?;
        let krec = rc.k.expect("K requested");
        let found = reconstruction::k_differences(&krec)?;
        return Ok(k_difference_error(&truth, &found));
    }
    Err(last.expect("at least one draw"))
}

/// Relative errors of consecutive eigenvalue gaps; the reversed order is also tried
/// because `K` and `−conj(K)` produce identical correlators.
pub fn k_difference_error(truth: &[f64], found: &[f64]) -> TrialOutcome {
    let gaps = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).collect::<Vec<f64>>();
    let t = gaps(truth);
    if t.is_empty() {
        return TrialOutcome {
            mean_error: 0.0,
            max_error: 0.0,
        };
    }
    let f = gaps(found);
    let score = |g: &[f64]| {
        let errs: Vec<f64> = t.iter().zip(g).map(|(a, b)| ((b - a) / a).abs()).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let max = errs.iter().cloned().fold(0.0, f64::max);
        TrialOutcome {
            mean_error: mean,
            max_error: max,
        }
    };
    let forward = score(&f);
    let reversed: Vec<f64> = f.iter().rev().cloned().collect();
    let backward = score(&reversed);
    if backward.max_error < forward.max_error {
        backward
    } else {
        forward
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(grid_value: f64, outcomes: &[Result<TrialOutcome>], criterion: f64) -> BenchmarkPoint {
    let trials = outcomes.len();
    let mut ok_mean = 0usize;
    let mut ok_max = 0usize;
    let mut failures = 0usize;
    let mut errors = Vec::with_capacity(trials);
    for o in outcomes {
        match o {
            Ok(t) => {
                if t.mean_error < criterion {
                    ok_mean += 1;
                }
                if t.max_error < criterion {
                    ok_max += 1;
                }
                errors.push(t.mean_error);
            }
            Err(e) => {
                debug!("trial failed: {e}");
                failures += 1;
                errors.push(f64::INFINITY);
            }
        }
    }
    errors.sort_by(f64::total_cmp);
    BenchmarkPoint {
        grid_value,
        trials,
        rate_mean_criterion: ok_mean as f64 / trials as f64,
        rate_max_criterion: ok_max as f64 / trials as f64,
        failures,
        error_quantiles: [0.1, 0.5, 0.9].iter().map(|&q| quantile(&errors, q)).collect(),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))
        })?;
        if n == 0 {
            return Err(Error::InvalidArgument(format!("{THREADS_ENV} must be positive")));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Runs `trials` seeded trials per grid value. Trial `t` uses the same random stream at
/// every grid value, so differences between grid points reflect the parameter only.
pub fn run_benchmark(
    kind: BenchmarkKind,
    grid: &[f64],
    trials: usize,
    spec: &EnsembleSpec,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("benchmark grid is empty".into()));
    }
    spec.validate()?;
    if kind == BenchmarkKind::NoiseSnr {
        if let Some(&bad) = grid.iter().find(|&&g| !(g > 0.0)) {
            return Err(Error::InvalidArgument(format!("SNR grid value {bad} is not positive")));
        }
        if cfg.n_samples < 2 * spec.d * spec.d {
            return Err(Error::InvalidArgument(format!(
                "{} samples are too few for {} poles",
                cfg.n_samples,
                spec.d * spec.d - 1
            )));
        }
    } else if let Some(&bad) = grid.iter().find(|&&g| !(g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon grid value {bad} is invalid")));
    }
    if !(cfg.criterion > 0.0) {
        return Err(Error::InvalidArgument("criterion must be positive".into()));
    }
    let pool = thread_pool()?;
    let points = grid
        .iter()
        .map(|&g| {
            let outcomes: Vec<Result<TrialOutcome>> = pool.install(|| {
                (0..trials)
                    .into_par_iter()
                    .map(|t| {
                        let mut rng = trial_rng(spec.seed, t as u64);
                        match kind {
                            BenchmarkKind::NoiseSnr => noise_trial(spec, cfg, g, &mut rng),
                            BenchmarkKind::PerturbM => perturb_trial(spec, cfg, g, &mut rng),
                            BenchmarkKind::AdditionalField => {
                                additional_field_trial(spec, cfg, g, &mut rng)
                            }
                        }
                    })
                    .collect()
            });
            summarize(g, &outcomes, cfg.criterion)
        })
        .collect();
    Ok(BenchmarkReport {
        kind,
        master_seed: spec.seed,
        ensemble: spec.clone(),
        config: cfg.clone(),
        points,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub visible: Vec<usize>,
    pub hidden: Vec<usize>,
    /// Visible indices followed by hidden ones.
    pub permutation: Vec<usize>,
}

/// Visible block: indices reachable from index 0 and reaching it along chains of
/// entries `|M_{ij}| > tol · max|M|`.
pub fn detect_blocks(m: &CMat, tol: f64) -> BlockPartition {
    let n = m.nrows();
    let cut = tol * linalg::max_abs(m);
    // A residue chain steps a → b through the factor M_{b,a}.
    let edge = |a: usize, b: usize| m[(b, a)].norm() > cut;
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        if n > 0 {
            seen[0] = true;
        }
        while let Some(a) = stack.pop() {
            for b in 0..n {
                let linked = if forward { edge(a, b) } else { edge(b, a) };
                if linked && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen
    };
    let from = reach(true);
    let to = reach(false);
    let visible: Vec<usize> = (0..n).filter(|&i| from[i] && to[i]).collect();
    let hidden: Vec<usize> = (0..n).filter(|&i| !(from[i] && to[i])).collect();
    let permutation = visible.iter().chain(&hidden).cloned().collect();
    BlockPartition {
        visible,
        hidden,
        permutation,
    }
}

/// Restricts a model to a subset of pole indices.
pub fn restrict_spectral(sd: &SpectralData, keep: &[usize]) -> Result<SpectralData> {
    let poles: Vec<c64> = keep.iter().map(|&i| sd.poles[i]).collect();
    let m = CMat::from_fn(keep.len(), keep.len(), |i, j| sd.m[(keep[i], keep[j])]);
    SpectralData::from_parts(sd.d, poles, m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub d: usize,
    pub phi: f64,
    pub chi: f64,
    /// Conjugate pairs found in the spectra of the normalized `Q` and `R`.
    pub q_pairs: usize,
    pub r_pairs: usize,
    pub expected_pairs: usize,
    /// Cluster sizes of the spectrum of `M`, in descending order of modulus.
    pub m_multiplicities: Vec<usize>,
    pub simple_eigenvalues: usize,
    pub degenerate_pairs: usize,
    pub blocks: usize,
    pub partition: BlockPartition,
    /// For each degenerate pair, whether one member lies in each block.
    pub pairs_split_across_blocks: Vec<bool>,
}

fn count_conjugate_pairs(values: &[c64], tol: f64) -> usize {
    let scale = values.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut used = vec![false; values.len()];
    let mut pairs = 0;
    for i in 0..values.len() {
        if used[i] || values[i].im.abs() <= tol * scale {
            continue;
        }
        if let Some(j) = (i + 1..values.len())
            .find(|&j| !used[j] && (values[j] - values[i].conj()).norm() <= tol * scale)
        {
            used[i] = true;
            used[j] = true;
            pairs += 1;
        }
    }
    pairs
}

fn clusters(values: &[c64], tol: f64) -> Vec<Vec<usize>> {
    let scale = values.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        match out
            .iter_mut()
            .find(|cl| (values[cl[0]] - v).norm() <= tol * scale)
        {
            Some(cl) => cl.push(i),
            None => out.push(vec![i]),
        }
    }
    out.sort_by(|a, b| values[b[0]].norm().total_cmp(&values[a[0]].norm()));
    out
}

/// Pairing, degeneracy and block structure of a state's `Q`, `R` and `M`.
pub fn analyze_ll_structure(state: &Cmps, tol: f64) -> Result<StructureReport> {
    let d = state.d();
    let r = state.r();
    let q = state.q();
    let det: c64 = linalg::eigenvalues(r)?.iter().product();
    let phi = if det.norm() > 0.0 { det.arg() / d as f64 } else { 0.0 };
    let chi = linalg::eigenvalues(q)?.iter().map(|z| z.im).sum::<f64>() / d as f64;
    let qn = {
        let mut m = q.clone();
        for i in 0..d {
            m[(i, i)] -= c(0.0, chi);
        }
        m
    };
    let rn = linalg::scale(r, c64::from_polar(1.0, -phi));
    let q_pairs = count_conjugate_pairs(&linalg::eigenvalues(&qn)?, tol);
    let r_pairs = count_conjugate_pairs(&linalg::eigenvalues(&rn)?, tol);

    let normalized = model::stationarize(&Cmps::new(qn, rn.clone())?)?;
    let sd = correlators::spectral_decompose(&build_transfer(&normalized), &rn)?;
    let m_values = linalg::eigenvalues(&sd.m)?;
    let groups = clusters(&m_values, tol);
    let partition = detect_blocks(&sd.m, tol);
    let blocks = if partition.hidden.is_empty() { 1 } else { 2 };

    let block_values = |idx: &[usize]| -> Result<Vec<c64>> {
        if idx.is_empty() {
            return Ok(Vec::new());
        }
        linalg::eigenvalues(&CMat::from_fn(idx.len(), idx.len(), |i, j| sd.m[(idx[i], idx[j])]))
    };
    let visible_values = block_values(&partition.visible)?;
    let hidden_values = block_values(&partition.hidden)?;
    let scale = m_values.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let count_near = |set: &[c64], v: c64| set.iter().filter(|z| (*z - v).norm() <= tol.sqrt() * scale).count();
    let pairs_split_across_blocks = groups
        .iter()
        .filter(|g| g.len() == 2)
        .map(|g| {
            let v = m_values[g[0]];
            count_near(&visible_values, v) == 1 && count_near(&hidden_values, v) == 1
        })
        .collect();

    Ok(StructureReport {
        d,
        phi,
        chi,
        q_pairs,
        r_pairs,
        expected_pairs: d / 2,
        simple_eigenvalues: groups.iter().filter(|g| g.len() == 1).count(),
        degenerate_pairs: groups.iter().filter(|g| g.len() == 2).count(),
        m_multiplicities: groups.iter().map(|g| g.len()).collect(),
        blocks,
        partition,
        pairs_split_across_blocks,
    })
}
