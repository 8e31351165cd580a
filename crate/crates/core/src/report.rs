//! Deterministic CSV reports.
//!
//! All reports are UTF-8, comma-separated with a header row, '.' decimal
//! separator, newline-terminated, and written in one deterministic pass, so
//! a rerun with the same inputs produces byte-identical files.

use std::path::Path;

use crate::certificates::{Certificate, Threshold};
use crate::error::{Error, Result};
use crate::integrators::Trajectory;
use crate::lyapunov::LyapunovReport;
use crate::moments::MomentSeries;

/// Canonical float formatting for CSV cells: shortest round-trip scientific
/// notation (`8.35e-1`), deterministic for a given bit pattern.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Render a positive value carried as a natural log, even when the plain
/// value over- or underflows f64: `format_ln_value(2500.0)` is a decimal
/// scientific literal with exponent ~1085.
pub fn fmt_ln_value(ln: f64) -> String {
    if ln == f64::NEG_INFINITY {
        return "0e0".into();
    }
    if !ln.is_finite() {
        return "inf".into();
    }
    if ln.abs() < 700.0 {
        return fmt_f64(ln.exp());
    }
    let log10 = ln / std::f64::consts::LN_10;
    let exp10 = log10.floor();
    let mantissa = 10f64.powf(log10 - exp10);
    format!("{mantissa:.6}e{}", exp10 as i64)
}

/// Write a generic CSV report: rows must match the header arity.
pub fn emit_report(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Validation(format!(
                "row {i} has {} cells, schema has {}",
                row.len(),
                header.len()
            )));
        }
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub const MOMENT_HEADER: [&str; 5] = ["t", "value", "half_width", "n_paths", "p"];

pub fn moment_rows(series: &MomentSeries) -> Vec<Vec<String>> {
    series
        .times
        .iter()
        .zip(series.values.iter().zip(&series.half_widths))
        .map(|(t, (v, hw))| {
            vec![
                fmt_f64(*t),
                fmt_f64(*v),
                fmt_f64(*hw),
                series.n_paths.to_string(),
                fmt_f64(series.p),
            ]
        })
        .collect()
}

pub fn write_moment_series(path: &Path, series: &MomentSeries) -> Result<()> {
    emit_report(path, &MOMENT_HEADER, &moment_rows(series))
}

pub const TRAJECTORY_HEADER: [&str; 5] = ["path_id", "step", "t", "component", "value"];

pub fn trajectory_rows(path_id: u64, traj: &Trajectory) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (step, state) in traj.states().iter().enumerate() {
        let t = traj.grid().t(step);
        for (component, value) in state.iter().enumerate() {
            rows.push(vec![
                path_id.to_string(),
                step.to_string(),
                fmt_f64(t),
                component.to_string(),
                fmt_f64(*value),
            ]);
        }
    }
    rows
}

pub const CERTIFICATE_HEADER: [&str; 12] = [
    "kind",
    "p",
    "K",
    "tau",
    "h",
    "delta",
    "verdict",
    "lhs_log",
    "rhs_log",
    "n_hat",
    "implied_M_log",
    "implied_gamma",
];

fn verdict_str(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

fn opt_ln_plain(ln: Option<f64>) -> String {
    match ln {
        Some(v) => fmt_ln_value(v),
        None => String::new(),
    }
}

pub fn certificate_row(cert: &Certificate) -> Vec<String> {
    let n_hat = match (cert.n_hat, cert.ln_n_hat) {
        (Some(n), _) => n.to_string(),
        (None, Some(ln)) => fmt_ln_value(ln),
        (None, None) => String::new(),
    };
    vec![
        cert.inputs.kind.name().to_string(),
        fmt_f64(cert.inputs.p),
        fmt_f64(cert.inputs.k_lip),
        opt_ln_plain(cert.inputs.ln_tau),
        opt_ln_plain(cert.inputs.ln_h),
        cert.inputs.delta.map(fmt_f64).unwrap_or_default(),
        verdict_str(cert.verdict).to_string(),
        fmt_f64(cert.lhs_log),
        fmt_f64(cert.rhs_log),
        n_hat,
        cert.implied.map(|p| fmt_f64(p.log_m())).unwrap_or_default(),
        cert.implied.map(|p| fmt_f64(p.gamma())).unwrap_or_default(),
    ]
}

/// The margin report as a certificate-schema row with kind = LYAP: the
/// decisive inequality is max Q < 0, and a positive margin implies the
/// envelope (M = 1, gamma = lambda p / 2).
pub fn lyapunov_row(report: &LyapunovReport, k_lip: f64) -> Vec<String> {
    let pass = report.lambda > 0.0;
    vec![
        "LYAP".to_string(),
        fmt_f64(report.p),
        fmt_f64(k_lip),
        String::new(),
        String::new(),
        String::new(),
        verdict_str(pass).to_string(),
        fmt_f64(-report.lambda), // max Q over the unit sphere
        fmt_f64(0.0),
        report.n_samples.to_string(),
        if pass { fmt_f64(0.0) } else { String::new() },
        if pass {
            fmt_f64(0.5 * report.lambda * report.p)
        } else {
            String::new()
        },
    ]
}

pub const THRESHOLD_HEADER: [&str; 10] = [
    "kind",
    "p",
    "K",
    "delta",
    "assumed_M_log",
    "assumed_gamma",
    "threshold",
    "ln_threshold",
    "min_substeps",
    "ln_substeps",
];

pub fn threshold_row(
    thr: &Threshold,
    p: f64,
    k_lip: f64,
    delta: Option<f64>,
    assumed_log_m: f64,
    assumed_gamma: f64,
) -> Vec<String> {
    vec![
        thr.kind.name().to_string(),
        fmt_f64(p),
        fmt_f64(k_lip),
        delta.map(fmt_f64).unwrap_or_default(),
        fmt_f64(assumed_log_m),
        fmt_f64(assumed_gamma),
        fmt_ln_value(thr.ln_value),
        fmt_f64(thr.ln_value),
        thr.min_substeps.map(|m| m.to_string()).unwrap_or_default(),
        thr.ln_substeps.map(fmt_f64).unwrap_or_default(),
    ]
}

pub const CONVERGENCE_HEADER: [&str; 4] = ["p", "h", "mean_err_p", "fitted_slope"];

pub const CHAIN_HEADER: [&str; 15] = [
    "kind",
    "p",
    "K",
    "tau",
    "h",
    "delta",
    "verdict",
    "lhs_log",
    "rhs_log",
    "n_hat",
    "implied_M_log",
    "implied_gamma",
    "ln_tau",
    "ln_h",
    "ln_substeps",
];

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn header_only_for_empty_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        emit_report(&path, &["a", "b"], &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n");
    }

    #[test]
    fn duplicate_emission_is_byte_identical() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("dup.csv");
        let rows = vec![vec![fmt_f64(0.1), fmt_f64(-2.5e-3)]];
        emit_report(&path, &["x", "y"], &rows).unwrap();
        let first = std::fs::read(&path).unwrap();
        emit_report(&path, &["x", "y"], &rows).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn three_rows_make_four_lines() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("three.csv");
        let series = MomentSeries::new(
            vec![0.0, 0.5, 1.0],
            vec![1.0, 0.5, 0.25],
            vec![0.0, 0.01, 0.01],
            100,
            2.0,
        )
        .unwrap();
        write_moment_series(&path, &series).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.ends_with('\n'));
        assert!(text.starts_with("t,value,half_width,n_paths,p\n"));
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let err = emit_report(&path, &["a", "b"], &[vec!["1".into()]]);
        assert!(err.is_err());
    }

    #[test]
    fn ln_formatting_spans_the_exponent_range() {
        assert_eq!(fmt_ln_value(f64::NEG_INFINITY), "0e0");
        assert_eq!(fmt_ln_value(0.0), "1e0");
        // ln = 2500 corresponds to ~3.67e1085, far beyond f64
        let s = fmt_ln_value(2500.0);
        assert!(s.ends_with("e1085"), "got {s}");
        // deep underflow region
        let s = fmt_ln_value(-2500.0);
        assert!(s.ends_with("e-1086"), "got {s}");
        // representable values agree with plain formatting
        assert_eq!(fmt_ln_value(0.5f64.ln()), fmt_f64(0.5));
    }
}
