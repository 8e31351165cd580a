//! Config-driven experiment orchestration.
//!
//! `run_experiment` validates a parsed config, applies CLI overrides, fans
//! the work out to a worker pool and writes CSV reports plus a run manifest
//! (seed, config hash, version) into the output directory. All reductions
//! are deterministic, so a rerun with the same config and seed produces
//! byte-identical CSVs at any thread count.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::certificates::{
    check_certificate, run_chain, solve_threshold, Certificate, CertificateInputs,
    CertificateKind, DecayPair, ThresholdQuery,
};
use crate::config::{Command, ExperimentConfig};
use crate::error::{Error, Result};
use crate::integrators::{em_sde_path, em_sdepca_path, gbm_exact_path, Scheme};
use crate::lyapunov::{assumption_margin, SamplingConfig};
use crate::model::{GridSpec, SystemSpec};
use crate::moments::{
    em_linear_second_moment, estimate_pth_moment, gbm_moment_series, sdepca_exact_second_moment,
    EmRecursion,
};
use crate::paths::{aggregate_increments, generate_increments, IncrementPlan};
use crate::report::{
    certificate_row, emit_report, fmt_f64, lyapunov_row, threshold_row, trajectory_rows,
    write_moment_series, CERTIFICATE_HEADER, CHAIN_HEADER, CONVERGENCE_HEADER, THRESHOLD_HEADER,
    TRAJECTORY_HEADER,
};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n_paths: Option<u64>,
    pub threads: Option<usize>,
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    /// Human-readable one-liners (verdicts, margins, thresholds).
    pub notes: Vec<String>,
}

/// Hex SHA-256 of the canonical config serialization.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = crate::config::serialize_config(cfg);
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run one experiment end to end.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let mut cfg = config.clone();
    if let Some(dir) = &opts.out_dir {
        cfg.output.dir = dir.display().to_string();
    }
    if let Some(seed) = opts.seed {
        cfg.mc.seed = seed;
    }
    if let Some(n) = opts.n_paths {
        cfg.mc.n_paths = n;
    }
    if let Some(t) = opts.threads {
        cfg.mc.threads = t;
    }

    let out_dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&out_dir)?;

    let summary = if cfg.mc.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.mc.threads)
            .build()
            .map_err(|e| Error::Validation(format!("cannot build worker pool: {e}")))?;
        pool.install(|| dispatch(&cfg, &out_dir))?
    } else {
        dispatch(&cfg, &out_dir)?
    };

    let manifest = out_dir.join("manifest.txt");
    let mut text = String::new();
    text.push_str(&format!("command = {}\n", cfg.command.name()));
    text.push_str(&format!("config_hash = {}\n", config_hash(&cfg)));
    text.push_str(&format!("seed = {}\n", cfg.mc.seed));
    text.push_str(&format!("n_paths = {}\n", cfg.mc.n_paths));
    text.push_str(&format!("threads = {}\n", cfg.mc.threads));
    text.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    std::fs::write(&manifest, text)?;

    Ok(RunSummary {
        files: summary.0,
        manifest,
        notes: summary.1,
    })
}

fn dispatch(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    match cfg.command {
        Command::Simulate => simulate(cfg, out_dir),
        Command::Certify => certify(cfg, out_dir),
        Command::Threshold => threshold(cfg, out_dir),
        Command::Convergence => convergence(cfg, out_dir),
        Command::Lyapunov => lyapunov_cmd(cfg, out_dir),
        Command::Chain => chain_cmd(cfg, out_dir),
    }
}

fn build_grid(cfg: &ExperimentConfig) -> Result<GridSpec> {
    GridSpec::new(cfg.grid.tau, cfg.grid.m_sub, cfg.grid.horizon)
}

fn assumed_pair(cfg: &ExperimentConfig) -> Result<DecayPair> {
    let cert = cfg
        .certificate
        .as_ref()
        .ok_or_else(|| Error::Validation("this command needs a [certificate] section".into()))?;
    match (cert.assumed_m, cert.assumed_gamma) {
        (Some(m), Some(g)) => DecayPair::new(m, g),
        _ => Err(Error::Validation(
            "assumed_m and assumed_gamma are required here".into(),
        )),
    }
}

fn simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let spec = cfg.system.build()?;
    let grid = build_grid(cfg)?;
    let x0 = cfg.x0_vector();
    let mut files = Vec::new();
    let mut notes = Vec::new();

    for (scheme, name) in [(Scheme::EmSde, "em_sde"), (Scheme::EmSdepca, "em_sdepca")] {
        let series =
            estimate_pth_moment(&spec, scheme, &x0, &grid, cfg.mc.p, cfg.mc.n_paths, cfg.mc.seed)?;
        if let Some(idx) = series.unstable_from {
            notes.push(format!(
                "{name}: series unstable from t = {} (diverged paths)",
                grid.t(idx)
            ));
        }
        let path = out_dir.join(format!("moments_{name}.csv"));
        write_moment_series(&path, &series)?;
        files.push(path);
    }

    if let Some((a, b, c, d)) = spec.scalar_linear_coeffs() {
        if (cfg.mc.p - 2.0).abs() < 1e-12 {
            let x0s = x0[0];
            let pairs = [
                ("oracle_em_sde", em_linear_second_moment(EmRecursion::Sde, a, b, c, d, &grid, x0s)?),
                (
                    "oracle_em_sdepca",
                    em_linear_second_moment(EmRecursion::Sdepca, a, b, c, d, &grid, x0s)?,
                ),
                ("oracle_sdepca_exact", sdepca_exact_second_moment(a, b, c, d, &grid, x0s)?),
            ];
            for (name, series) in pairs {
                let path = out_dir.join(format!("{name}.csv"));
                write_moment_series(&path, &series)?;
                files.push(path);
            }
        }
        let gbm = gbm_moment_series(a + c, b + d, cfg.mc.p, x0[0], &grid)?;
        let path = out_dir.join("oracle_sde_moment.csv");
        write_moment_series(&path, &gbm)?;
        files.push(path);
    }

    if cfg.output.dump_paths > 0 {
        for (name, delayed) in [("em_sde", false), ("em_sdepca", true)] {
            let mut rows = Vec::new();
            for path_id in 0..cfg.output.dump_paths {
                let plan = IncrementPlan {
                    seed: cfg.mc.seed,
                    path_id,
                    n_steps: grid.n_steps(),
                    h: grid.h(),
                    m_bm: spec.brownian_dim(),
                };
                let incs = generate_increments(&plan)?;
                let traj = if delayed {
                    em_sdepca_path(&spec, &x0, &grid, &incs)?
                } else {
                    em_sde_path(&spec, &x0, &grid, &incs)?
                };
                rows.extend(trajectory_rows(path_id, &traj));
            }
            let path = out_dir.join(format!("paths_{name}.csv"));
            emit_report(&path, &TRAJECTORY_HEADER, &rows)?;
            files.push(path);
        }
    }
    Ok((files, notes))
}

fn certificate_inputs_from_config(
    cfg: &ExperimentConfig,
    kind: CertificateKind,
    delta: f64,
    pair: DecayPair,
) -> Result<CertificateInputs> {
    let spec = cfg.system.build()?;
    let grid = build_grid(cfg)?;
    let (p, k) = (cfg.mc.p, spec.k_lip());
    match kind {
        CertificateKind::Q1 => CertificateInputs::q1(p, k, grid.tau(), delta, pair),
        CertificateKind::Q2 => CertificateInputs::q2(p, k, grid.h(), pair),
        CertificateKind::Q3 => CertificateInputs::q3(p, k, grid.tau(), delta, pair),
        CertificateKind::Q4 => CertificateInputs::q4(p, k, grid.tau(), grid.h(), pair),
    }
}

fn certify(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let cert_cfg = cfg
        .certificate
        .as_ref()
        .ok_or_else(|| Error::Validation("certify needs a [certificate] section".into()))?;
    let kind: CertificateKind = cert_cfg.kind.parse()?;
    let pair = assumed_pair(cfg)?;
    let inputs = certificate_inputs_from_config(cfg, kind, cert_cfg.delta, pair)?;
    let cert = check_certificate(&inputs)?;
    let path = out_dir.join("certificates.csv");
    emit_report(&path, &CERTIFICATE_HEADER, &[certificate_row(&cert)])?;
    let note = format!(
        "{} verdict: {}",
        kind.name(),
        if cert.verdict { "pass" } else { "fail" }
    );
    Ok((vec![path], vec![note]))
}

fn threshold(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let cert_cfg = cfg
        .certificate
        .as_ref()
        .ok_or_else(|| Error::Validation("threshold needs a [certificate] section".into()))?;
    let kind: CertificateKind = cert_cfg.kind.parse()?;
    let pair = assumed_pair(cfg)?;
    let spec = cfg.system.build()?;
    let grid = build_grid(cfg)?;
    let (p, k_lip) = (cfg.mc.p, spec.k_lip());

    let mut rows = Vec::new();
    let mut notes = Vec::new();
    match kind {
        CertificateKind::Q1 | CertificateKind::Q3 => {
            let deltas = cert_cfg
                .delta_grid
                .clone()
                .unwrap_or_else(|| vec![cert_cfg.delta]);
            for delta in deltas {
                let query = match kind {
                    CertificateKind::Q1 => ThresholdQuery::Q1 { p, k_lip, delta, assumed: pair },
                    _ => ThresholdQuery::Q3 { p, k_lip, delta, assumed: pair },
                };
                let thr = solve_threshold(&query)?;
                notes.push(format!(
                    "{} threshold at delta = {delta}: tau* = {}",
                    kind.name(),
                    crate::report::fmt_ln_value(thr.ln_value)
                ));
                rows.push(threshold_row(&thr, p, k_lip, Some(delta), pair.log_m(), pair.gamma()));
            }
        }
        CertificateKind::Q2 => {
            let thr = solve_threshold(&ThresholdQuery::Q2 { p, k_lip, assumed: pair })?;
            notes.push(format!(
                "Q2 threshold: h* = {}",
                crate::report::fmt_ln_value(thr.ln_value)
            ));
            rows.push(threshold_row(&thr, p, k_lip, None, pair.log_m(), pair.gamma()));
        }
        CertificateKind::Q4 => {
            let thr = solve_threshold(&ThresholdQuery::Q4 {
                p,
                k_lip,
                ln_tau: grid.tau().ln(),
                assumed: pair,
            })?;
            notes.push(format!(
                "Q4 threshold at tau = {}: h* = {}",
                grid.tau(),
                crate::report::fmt_ln_value(thr.ln_value)
            ));
            rows.push(threshold_row(&thr, p, k_lip, None, pair.log_m(), pair.gamma()));
        }
    }
    let path = out_dir.join("thresholds.csv");
    emit_report(&path, &THRESHOLD_HEADER, &rows)?;
    Ok((vec![path], notes))
}

/// One data point of the coupled strong-error study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongErrorPoint {
    pub p: f64,
    pub h: f64,
    pub mean_err_p: f64,
}

/// Coupled-path strong error study between the exact scalar sampler and the
/// explicit scheme, with fitted log-log slopes per moment order.
#[derive(Debug, Clone)]
pub struct StrongErrorStudy {
    pub points: Vec<StrongErrorPoint>,
    /// (p, slope of ln mean_err_p against ln h).
    pub slopes: Vec<(f64, f64)>,
}

const STUDY_CHUNK: u64 = 256;

/// Run the coupled study on dy = alpha y dt + beta y dw over t in [0, 1]:
/// a single fine Brownian path per path id is aggregated onto each coarser
/// grid h = 2^{-k}, k in min_exponent..=max_exponent, so the scheme and the
/// exact sampler see the same randomness at every level.
pub fn strong_error_study(
    alpha: f64,
    beta: f64,
    x0: f64,
    min_exponent: u32,
    max_exponent: u32,
    p_values: &[f64],
    n_paths: u64,
    seed: u64,
) -> Result<StrongErrorStudy> {
    use rayon::prelude::*;

    if min_exponent > max_exponent || max_exponent > 26 {
        return Err(Error::Validation(format!(
            "bad exponent range {min_exponent}..={max_exponent}"
        )));
    }
    if p_values.is_empty() || p_values.iter().any(|&p| !(p.is_finite() && p >= 1.0)) {
        return Err(Error::Validation("p_values must all be >= 1".into()));
    }
    if n_paths < 2 {
        return Err(Error::Validation("need at least 2 paths".into()));
    }
    let spec = SystemSpec::scalar_linear(alpha, beta, 0.0, 0.0)?;
    let levels: Vec<u32> = (min_exponent..=max_exponent).collect();
    let fine_steps = 1usize << max_exponent;
    let fine_h = 1.0 / fine_steps as f64;
    let x0v = nalgebra::DVector::from_vec(vec![x0]);

    let n_chunks = n_paths.div_ceil(STUDY_CHUNK);
    let chunk_sums: Vec<Result<Vec<f64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * STUDY_CHUNK;
            let hi = ((chunk + 1) * STUDY_CHUNK).min(n_paths);
            let mut sums = vec![0.0; levels.len() * p_values.len()];
            for path_id in lo..hi {
                let plan = IncrementPlan {
                    seed,
                    path_id,
                    n_steps: fine_steps,
                    h: fine_h,
                    m_bm: 1,
                };
                let fine = generate_increments(&plan)?;
                for (li, k) in levels.iter().enumerate() {
                    let grid = GridSpec::new(1.0, 1usize << k, 1.0)?;
                    let incs = aggregate_increments(&fine, 1usize << (max_exponent - k))?;
                    let em = em_sde_path(&spec, &x0v, &grid, &incs)?;
                    let exact = gbm_exact_path(alpha, beta, x0, &grid, &incs)?;
                    let n = grid.n_steps();
                    let err = (em.state(n)[0] - exact.state(n)[0]).abs();
                    for (pi, &p) in p_values.iter().enumerate() {
                        sums[li * p_values.len() + pi] += err.powf(p);
                    }
                }
            }
            Ok(sums)
        })
        .collect();

    let mut sums = vec![0.0; levels.len() * p_values.len()];
    for chunk in chunk_sums {
        for (acc, v) in sums.iter_mut().zip(chunk?) {
            *acc += v;
        }
    }

    let mut points = Vec::new();
    let mut slopes = Vec::new();
    for (pi, &p) in p_values.iter().enumerate() {
        let mut ln_h = Vec::new();
        let mut ln_e = Vec::new();
        for (li, k) in levels.iter().enumerate() {
            let h = 1.0 / (1u64 << k) as f64;
            let mean = sums[li * p_values.len() + pi] / n_paths as f64;
            points.push(StrongErrorPoint { p, h, mean_err_p: mean });
            ln_h.push(h.ln());
            ln_e.push(mean.ln());
        }
        let n = ln_h.len() as f64;
        let hbar = ln_h.iter().sum::<f64>() / n;
        let ebar = ln_e.iter().sum::<f64>() / n;
        let sxx: f64 = ln_h.iter().map(|x| (x - hbar) * (x - hbar)).sum();
        let sxy: f64 = ln_h
            .iter()
            .zip(&ln_e)
            .map(|(x, y)| (x - hbar) * (y - ebar))
            .sum();
        slopes.push((p, sxy / sxx));
    }
    Ok(StrongErrorStudy { points, slopes })
}

fn convergence(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let spec = cfg.system.build()?;
    let (a, b, c, d) = spec.scalar_linear_coeffs().ok_or_else(|| {
        Error::Unsupported("the convergence study needs a scalar linear system".into())
    })?;
    let conv = cfg.convergence.clone().unwrap_or_default();
    let study = strong_error_study(
        a + c,
        b + d,
        cfg.x0_vector()[0],
        conv.min_exponent,
        conv.max_exponent,
        &conv.p_values,
        cfg.mc.n_paths,
        cfg.mc.seed,
    )?;
    let mut rows = Vec::new();
    for point in &study.points {
        let slope = study
            .slopes
            .iter()
            .find(|(p, _)| *p == point.p)
            .map(|(_, s)| *s)
            .unwrap_or(f64::NAN);
        rows.push(vec![
            fmt_f64(point.p),
            fmt_f64(point.h),
            fmt_f64(point.mean_err_p),
            fmt_f64(slope),
        ]);
    }
    let path = out_dir.join("convergence.csv");
    emit_report(&path, &CONVERGENCE_HEADER, &rows)?;
    let notes = study
        .slopes
        .iter()
        .map(|(p, s)| format!("p = {p}: fitted strong-error slope {s:.4} (expected {})", p / 2.0))
        .collect();
    Ok((vec![path], notes))
}

fn lyapunov_cmd(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let spec = cfg.system.build()?;
    let report = assumption_margin(&spec, cfg.mc.p, &SamplingConfig::default())?;
    let path = out_dir.join("certificates.csv");
    emit_report(&path, &CERTIFICATE_HEADER, &[lyapunov_row(&report, spec.k_lip())])?;
    let notes = vec![format!(
        "margin lambda = {} ({}); certified rate lambda*p/2 = {}",
        report.lambda,
        report.method.name(),
        0.5 * report.lambda * report.p
    )];
    Ok((vec![path], notes))
}

fn chain_cmd(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    let spec = cfg.system.build()?;
    let cert_cfg = cfg
        .certificate
        .as_ref()
        .ok_or_else(|| Error::Validation("chain needs a [certificate] section".into()))?;
    let start = match (cert_cfg.assumed_m, cert_cfg.assumed_gamma) {
        (Some(m), Some(g)) => DecayPair::new(m, g)?,
        _ => {
            // derive the starting envelope from the margin test
            let report = assumption_margin(&spec, cfg.mc.p, &SamplingConfig::default())?;
            if report.lambda <= 0.0 {
                return Err(Error::NoCertificate(format!(
                    "margin test found lambda = {} <= 0; no starting envelope",
                    report.lambda
                )));
            }
            DecayPair::new(1.0, 0.5 * report.lambda * cfg.mc.p)?
        }
    };
    let report = run_chain(cfg.mc.p, spec.k_lip(), start, cert_cfg.delta, cert_cfg.safety)?;

    let mut rows = Vec::new();
    for stage in &report.stages {
        let mut row = certificate_row(&stage.certificate);
        row.push(fmt_f64(report.ln_tau));
        row.push(fmt_f64(report.ln_h));
        row.push(fmt_f64(report.ln_substeps));
        rows.push(row);
    }
    let path = out_dir.join("chain.csv");
    emit_report(&path, &CHAIN_HEADER, &rows)?;
    let mut notes = vec![format!(
        "chain {}: ln tau = {:.6e}, ln h = {:.6e}",
        if report.all_pass { "closed (all four pass)" } else { "incomplete" },
        report.ln_tau,
        report.ln_h
    )];
    notes.push(format!(
        "closing envelope: log M = {:.6e}, gamma = {:.6e}",
        report.closing.log_m(),
        report.closing.gamma()
    ));
    if !report.all_pass {
        return Err(Error::NoCertificate("chain did not close".into()));
    }
    Ok((vec![path], notes))
}

/// Re-exported handle for acceptance tests: evaluate a certificate directly
/// from config-level primitives.
pub fn certify_once(
    cfg: &ExperimentConfig,
    kind: CertificateKind,
    delta: f64,
    pair: DecayPair,
) -> Result<Certificate> {
    let inputs = certificate_inputs_from_config(cfg, kind, delta, pair)?;
    check_certificate(&inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{
        CertificateConfig, Command, GridConfig, McConfig, OutputConfig, SystemConfig,
    };
    use tempfile::tempdir;

    fn base_config(command: Command, dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            command,
            system: SystemConfig::ScalarLinear { a: -1.0, b: 0.5, c: 0.2, d: 0.1 },
            x0: vec![1.0],
            grid: GridConfig { tau: 0.5, m_sub: 5, horizon: 1.0 },
            mc: McConfig { n_paths: 500, seed: 42, p: 2.0, threads: 0 },
            certificate: Some(CertificateConfig {
                kind: "Q1".into(),
                delta: 0.5,
                delta_grid: None,
                assumed_m: Some(1.0),
                assumed_gamma: Some(1.75),
                safety: 0.5,
            }),
            convergence: None,
            output: OutputConfig { dir: dir.display().to_string(), dump_paths: 2 },
        }
    }

    #[test]
    fn simulate_writes_moments_oracles_and_manifest() {
        let dir = tempdir().unwrap();
        let cfg = base_config(Command::Simulate, dir.path());
        let summary = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let names: Vec<String> = summary
            .files
            .iter()
            .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for expected in [
            "moments_em_sde.csv",
            "moments_em_sdepca.csv",
            "oracle_em_sde.csv",
            "oracle_em_sdepca.csv",
            "oracle_sdepca_exact.csv",
            "oracle_sde_moment.csv",
            "paths_em_sde.csv",
            "paths_em_sdepca.csv",
        ] {
            assert!(names.contains(&expected.to_string()), "missing {expected}");
        }
        let manifest = std::fs::read_to_string(&summary.manifest).unwrap();
        assert!(manifest.contains("command = simulate"));
        assert!(manifest.contains("seed = 42"));
        assert!(manifest.contains("config_hash = "));
    }

    #[test]
    fn certify_writes_one_row_and_reports_fail_as_data() {
        let dir = tempdir().unwrap();
        let cfg = base_config(Command::Certify, dir.path());
        // tau = 0.5 >> tau*: the verdict is fail but the run succeeds
        let summary = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let text = std::fs::read_to_string(&summary.files[0]).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("Q1"));
        assert!(text.contains("fail"));
        assert!(summary.notes.iter().any(|n| n.contains("fail")));
    }

    #[test]
    fn threshold_sweeps_delta_grid() {
        let dir = tempdir().unwrap();
        let mut cfg = base_config(Command::Threshold, dir.path());
        cfg.certificate.as_mut().unwrap().delta_grid = Some(vec![0.25, 0.5, 0.75]);
        let summary = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let text = std::fs::read_to_string(&summary.files[0]).unwrap();
        assert_eq!(text.lines().count(), 4); // header + 3 deltas
    }

    #[test]
    fn chain_runs_from_derived_start() {
        let dir = tempdir().unwrap();
        let mut cfg = base_config(Command::Chain, dir.path());
        // pure plain system: margin gives the starting envelope
        cfg.system = SystemConfig::ScalarLinear { a: -1.0, b: 0.5, c: 0.0, d: 0.0 };
        cfg.certificate.as_mut().unwrap().assumed_m = None;
        cfg.certificate.as_mut().unwrap().assumed_gamma = None;
        let summary = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let text = std::fs::read_to_string(&summary.files[0]).unwrap();
        assert_eq!(text.lines().count(), 5); // header + Q2,Q3,Q4,Q1
        assert_eq!(text.matches("pass").count(), 4);
    }

    #[test]
    fn reruns_are_byte_identical_across_thread_counts() {
        let mut outputs = Vec::new();
        for threads in [1usize, 4, 8] {
            let dir = tempdir().unwrap();
            let mut cfg = base_config(Command::Simulate, dir.path());
            cfg.mc.threads = threads;
            let summary = run_experiment(&cfg, &RunOptions::default()).unwrap();
            let mut bytes = Vec::new();
            for f in &summary.files {
                bytes.push((
                    f.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(f).unwrap(),
                ));
            }
            outputs.push(bytes);
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[0], outputs[2]);
    }

    #[test]
    fn overrides_take_effect() {
        let dir = tempdir().unwrap();
        let cfg = base_config(Command::Certify, dir.path());
        let other = tempdir().unwrap();
        let opts = RunOptions {
            out_dir: Some(other.path().join("nested")),
            seed: Some(7),
            n_paths: Some(100),
            threads: Some(2),
        };
        let summary = run_experiment(&cfg, &opts).unwrap();
        assert!(summary.manifest.starts_with(other.path()));
        let manifest = std::fs::read_to_string(&summary.manifest).unwrap();
        assert!(manifest.contains("seed = 7"));
        assert!(manifest.contains("n_paths = 100"));
    }

    #[test]
    fn strong_error_slopes_near_half_order() {
        let study = strong_error_study(-1.0, 0.5, 1.0, 4, 7, &[2.0], 2000, 11).unwrap();
        let (_, slope) = study.slopes[0];
        assert!(
            (slope - 1.0).abs() < 0.3,
            "p=2 slope {slope} too far from 1.0"
        );
    }
}
