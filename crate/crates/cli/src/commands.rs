use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde_json::json;

use cmps_core::correlators::{self, SpectralData};
use cmps_core::estimation::EstimatorConfig;
use cmps_core::io::{self, CmpsFile, MdFile};
use cmps_core::model::build_transfer;
use cmps_core::reconstruction::{self, MdModel, ReconstructConfig};
use cmps_core::simulation::{self, BenchmarkConfig, EnsembleMode, EnsembleSpec, NoiseSpec};
use cmps_core::Error;

use crate::{
    AnalyzeArgs, BenchmarkArgs, Cli, Command, CorrelateArgs, GenerateArgs, NoiseArgs, PredictArgs,
    ReconstructArgs, ValidateArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_io() => 1,
            CliError::Core(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn positive(flag: &str, value: f64) -> CliResult {
    if value > 0.0 && !value.is_nan() {
        Ok(())
    } else {
        Err(usage(format!("{flag} must be positive, got {value}")))
    }
}

fn positive_count(flag: &str, value: usize) -> CliResult {
    if value > 0 {
        Ok(())
    } else {
        Err(usage(format!("{flag} must be positive")))
    }
}

fn out_path(cli: &Cli) -> CliResult<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| usage("--out is required for this command"))
}

pub fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Correlate(a) => correlate(cli, a),
        Command::Noise(a) => noise(cli, a),
        Command::Reconstruct(a) => reconstruct(cli, a),
        Command::Predict(a) => predict(cli, a),
        Command::Benchmark(a) => benchmark(cli, a),
        Command::Analyze(a) => analyze(cli, a),
        Command::Validate(a) => validate(a),
    }
}

fn generate(cli: &Cli, a: &GenerateArgs) -> CliResult {
    let e = &a.ensemble;
    positive_count("--d", e.d)?;
    positive("--sigma", e.sigma)?;
    if matches!(e.mode, crate::ModeArg::Refined) {
        positive("--eta", e.eta)?;
    }
    if !e.mu.is_finite() {
        return Err(usage("--mu must be finite"));
    }
    let out = out_path(cli)?;
    let spec = EnsembleSpec {
        d: e.d,
        mode: e.mode.into(),
        mu: e.mu,
        sigma: e.sigma,
        eta: e.eta,
        seed: cli.seed,
    };
    let state = simulation::random_cmps(&spec)?;
    let meta = json!({ "ensemble": spec });
    io::write_json(out, &CmpsFile::from_state(&state, None, meta))?;
    match correlators::spectral_decompose(&build_transfer(&state), state.r()) {
        Ok(sd) => print_pole_table(&sd)?,
        Err(err) => warn!("no pole table: {err}"),
    }
    Ok(())
}

fn print_pole_table(sd: &SpectralData) -> CliResult {
    println!("{:>4} {:>24} {:>24} {:>24}", "k", "Re", "Im", "|rho2|");
    for (k, p) in sd.poles.iter().enumerate() {
        let rho = correlators::residue(sd, &[k])?;
        println!("{:>4} {:>24.15e} {:>24.15e} {:>24.15e}", k + 1, p.re, p.im, rho.norm());
    }
    Ok(())
}

fn spectral_of(path: &Path) -> CliResult<SpectralData> {
    let (state, _) = io::read_cmps(path)?;
    Ok(correlators::spectral_decompose(&build_transfer(&state), state.r())?)
}

fn correlate(cli: &Cli, a: &CorrelateArgs) -> CliResult {
    if a.n < 2 {
        return Err(usage(format!("--n must be at least 2, got {}", a.n)));
    }
    positive_count("--samples", a.samples)?;
    if let Some(dt) = a.delta_tau {
        positive("--delta-tau", dt)?;
    }
    positive("--nyquist-fraction", a.nyquist_fraction)?;
    if a.amputate && a.n != 2 {
        return Err(usage("--amputate applies to 2-point functions only"));
    }
    let out = out_path(cli)?;
    let sd = spectral_of(&a.input)?;
    let dt = a
        .delta_tau
        .unwrap_or_else(|| simulation::nyquist_delta_tau(&sd.poles, a.nyquist_fraction));
    let mut ct = correlators::sample(&sd, a.n, a.samples, dt)?;
    if a.amputate {
        ct = correlators::amputate(&ct, sd.density)?;
    }
    io::write_tensor(out, &ct)?;
    info!("wrote {}-point function, N = {}, delta_tau = {dt}", a.n, a.samples);
    Ok(())
}

fn noise(cli: &Cli, a: &NoiseArgs) -> CliResult {
    positive("--snr", a.snr)?;
    let out = out_path(cli)?;
    let ct = io::read_tensor(&a.input)?;
    let noisy = simulation::add_noise(
        &ct,
        &NoiseSpec {
            snr: a.snr,
            seed: cli.seed,
        },
    )?;
    io::write_tensor(out, &noisy)?;
    Ok(())
}

fn reconstruct(cli: &Cli, a: &ReconstructArgs) -> CliResult {
    if let Some(o) = a.order {
        positive_count("--order", o)?;
    }
    if let Some(p) = a.pencil {
        positive_count("--pencil", p)?;
    }
    if !(a.order_threshold > 0.0 && a.order_threshold < 1.0) {
        return Err(usage("--order-threshold must lie in (0, 1)"));
    }
    positive("--overestimate", a.overestimate)?;
    positive("--match-tol", a.match_tol)?;
    positive("--pairing-tol", a.pairing_tol)?;
    positive("--kronecker-threshold", a.kronecker_threshold)?;
    let out = out_path(cli)?;

    let c3 = io::read_tensor(&a.c3)?;
    let c2 = a.c2.as_deref().map(io::read_tensor).transpose()?;
    let cfg = ReconstructConfig {
        estimator: EstimatorConfig {
            estimator: a.estimator.into(),
            order: a.order,
            pencil: a.pencil,
            order_threshold: a.order_threshold,
            overestimate: a.overestimate,
            symmetrize: true,
        },
        match_tol: a.match_tol,
        pairing_tol: a.pairing_tol,
        kronecker_threshold: a.kronecker_threshold,
        block_tolerant: a.block_tolerant,
        compute_k: !a.no_k,
        refine_poles: !a.no_refine,
    };
    let rec = if a.md_only {
        reconstruction::reconstruct_md(&c3, c2.as_ref(), &cfg)?
    } else {
        reconstruction::reconstruct(&c3, c2.as_ref(), &cfg)?
    };

    if a.md_only {
        io::write_md(out, &rec.md)?;
    } else {
        let rc = rec.cmps.as_ref().expect("full reconstruction");
        let meta = json!({ "source": a.c3.display().to_string() });
        io::write_json(out, &CmpsFile::from_reconstruction(rc, &rec.quality, meta))?;
    }
    if let Some(p) = &a.md_out {
        io::write_md(p, &rec.md)?;
    }

    let check3 = reconstruction::consistency_check(&rec.md, &c3, 1e-6)?;
    let check2 = c2
        .as_ref()
        .map(|c| reconstruction::consistency_check(&rec.md, c, 1e-6))
        .transpose()?;
    println!("poles: {}", rec.md.order());
    for (k, p) in rec.md.poles.iter().enumerate() {
        println!("{:>4} {:>24.15e} {:>24.15e}", k + 1, p.re, p.im);
    }
    println!("symmetry defect: {:.3e}", rec.quality.symmetry_defect);
    if let Some(kd) = rec.quality.kronecker_defect {
        println!("Kronecker defect: {kd:.3e}");
    }
    println!("rms fit error: {:.3e}", rec.quality.rms_fit_error);
    println!("3-point relative deviation: {:.3e}", check3.relative_sup);
    if let Some(report_path) = &a.report {
        let report = json!({
            "estimator": cfg.estimator.estimator,
            "order": rec.md.order(),
            "pencil": cfg.estimator.pencil,
            "poles": rec.md.poles.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            "Mhat11": rec.md.mhat11,
            "quality": rec.quality,
            "residue_condition": rec.rm3.condition,
            "consistency_3pt": check3,
            "consistency_2pt": check2,
            "unknown_entries": rec.md.unknown.len(),
        });
        io::write_json(report_path, &report)?;
    }
    Ok(())
}

fn load_model(path: &Path) -> CliResult<MdModel> {
    let value: serde_json::Value = io::read_json(path)?;
    if value.get("Q").is_some() && value.get("R").is_some() {
        let file: CmpsFile = serde_json::from_value(value).map_err(Error::from)?;
        let state = file.to_state()?;
        let sd = correlators::spectral_decompose(&build_transfer(&state), state.r())?;
        Ok(MdModel::from_spectral(&sd)?)
    } else {
        let file: MdFile = serde_json::from_value(value).map_err(Error::from)?;
        Ok(file.to_model()?)
    }
}

fn predict(cli: &Cli, a: &PredictArgs) -> CliResult {
    if a.n < 2 {
        return Err(usage(format!("--n must be at least 2, got {}", a.n)));
    }
    if cli.out.is_none() && a.compare.is_none() {
        return Err(usage("predict needs --out or --compare"));
    }
    let md = load_model(&a.model)?;
    let reference = a.compare.as_deref().map(io::read_tensor).transpose()?;
    let samples = match (a.samples, &reference) {
        (Some(n), _) => n,
        (None, Some(r)) => r.n_samples,
        (None, None) => return Err(usage("--samples is required without --compare")),
    };
    positive_count("--samples", samples)?;
    let dt = match (a.delta_tau, &reference) {
        (Some(dt), _) => dt,
        (None, Some(r)) => r.delta_tau,
        (None, None) => return Err(usage("--delta-tau is required without --compare")),
    };
    positive("--delta-tau", dt)?;
    let amputate = a.amputate || reference.as_ref().is_some_and(|r| r.amputated);
    if amputate && a.n != 2 {
        return Err(usage("--amputate applies to 2-point functions only"));
    }
    let predicted = reconstruction::predict_tensor(&md, a.n, samples, dt, amputate)?;
    if let Some(out) = &cli.out {
        io::write_tensor(out, &predicted)?;
    }
    if let Some(r) = &reference {
        if r.n != a.n {
            return Err(Error::GridMismatch(format!(
                "comparison tensor is {}-point, prediction is {}-point",
                r.n, a.n
            ))
            .into());
        }
        if r.n_samples != samples || (r.delta_tau - dt).abs() > 1e-12 * dt {
            return Err(Error::GridMismatch(format!(
                "comparison grid N = {}, delta_tau = {} differs from N = {samples}, delta_tau = {dt}",
                r.n_samples, r.delta_tau
            ))
            .into());
        }
        let report = reconstruction::consistency_check(&md, r, a.threshold)?;
        println!("relative sup-norm deviation: {:.6e}", report.relative_sup);
        println!("relative rms deviation: {:.6e}", report.relative_rms);
        println!("pass: {}", report.pass);
    }
    Ok(())
}

fn benchmark(cli: &Cli, a: &BenchmarkArgs) -> CliResult {
    positive_count("--d", a.d)?;
    positive_count("--trials", a.trials)?;
    positive_count("--samples", a.samples)?;
    positive("--criterion", a.criterion)?;
    positive("--nyquist-fraction", a.nyquist_fraction)?;
    if let Some(dt) = a.delta_tau {
        positive("--delta-tau", dt)?;
    }
    let kind: simulation::BenchmarkKind = a.kind.into();
    let noise_kind = kind == simulation::BenchmarkKind::NoiseSnr;
    for &g in &a.grid {
        if noise_kind {
            positive("--grid (SNR)", g)?;
        } else if !(g >= 0.0 && g.is_finite()) {
            return Err(usage(format!("--grid values must be finite and nonnegative, got {g}")));
        }
    }
    let mode: EnsembleMode = a
        .mode
        .map(Into::into)
        .unwrap_or(if noise_kind { EnsembleMode::RefinedKr } else { EnsembleMode::NaiveQr });
    let refined = mode == EnsembleMode::RefinedKr;
    let sigma = a.sigma.unwrap_or(if refined { 0.01 } else { 1.0 });
    let eta = a.eta.unwrap_or(if refined { 0.1 } else { 1.0 });
    positive("--sigma", sigma)?;
    positive("--eta", eta)?;
    let out = out_path(cli)?;
    let spec = EnsembleSpec {
        d: a.d,
        mode,
        mu: 0.0,
        sigma,
        eta,
        seed: cli.seed,
    };
    let cfg = BenchmarkConfig {
        n_samples: a.samples,
        delta_tau: a.delta_tau,
        nyquist_fraction: a.nyquist_fraction,
        estimator: a.estimator.into(),
        pencil: a.pencil,
        criterion: a.criterion,
        ..BenchmarkConfig::default()
    };
    let report = simulation::run_benchmark(kind, &a.grid, a.trials, &spec, &cfg)?;
    io::write_json(out, &report)?;
    let csv: PathBuf = a.csv.clone().unwrap_or_else(|| out.with_extension("csv"));
    std::fs::write(&csv, report.to_csv()).map_err(Error::from)?;
    println!("{:>14} {:>10} {:>10} {:>8}", "grid", "p(mean)", "p(max)", "trials");
    for p in &report.points {
        println!(
            "{:>14} {:>10.4} {:>10.4} {:>8}",
            p.grid_value, p.rate_mean_criterion, p.rate_max_criterion, p.trials
        );
    }
    Ok(())
}

fn analyze(cli: &Cli, a: &AnalyzeArgs) -> CliResult {
    positive("--tol", a.tol)?;
    let (state, _) = io::read_cmps(&a.input)?;
    let report = simulation::analyze_ll_structure(&state, a.tol)?;
    println!(
        "blocks: {}, degenerate pairs: {}",
        report.blocks, report.degenerate_pairs
    );
    println!(
        "conjugate pairs in Q: {}, in R: {} (expected {})",
        report.q_pairs, report.r_pairs, report.expected_pairs
    );
    println!("phi = {:.6e}, chi = {:.6e}", report.phi, report.chi);
    if !report.partition.hidden.is_empty() {
        println!(
            "visible: {:?}, hidden: {:?}",
            report.partition.visible, report.partition.hidden
        );
    }
    if let Some(out) = &cli.out {
        io::write_json(out, &report)?;
    }
    Ok(())
}

fn validate(a: &ValidateArgs) -> CliResult {
    let mut first_error = None;
    for path in &a.files {
        match io::validate_file(path) {
            Ok(kind) => println!("{}: valid {kind}", path.display()),
            Err(e) => {
                println!("{}: invalid ({e})", path.display());
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        None => Ok(()),
        Some(e) if e.is_io() => Err(e.into()),
        Some(e) => Err(Error::Format(e.to_string()).into()),
    }
}
