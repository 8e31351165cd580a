//! Experiment definitions as flat key-value files with section headers.
//!
//! The format is line-based and diffable: `[section]` headers, `key = value`
//! pairs, `#` comments. Vectors and matrices are bracketed row lists, e.g.
//! `a = [[-1.0, 0.0], [0.0, -2.0]]`. Parsing is strict (unknown sections,
//! unknown keys and duplicate keys are errors) and serialization is
//! canonical, so a canonically formatted config round-trips byte for byte.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{ScalarMap, SystemSpec};
use nalgebra::{DMatrix, DVector};

/// Which experiment a config describes; must agree with the CLI subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Certify,
    Threshold,
    Convergence,
    Lyapunov,
    Chain,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Certify => "certify",
            Command::Threshold => "threshold",
            Command::Convergence => "convergence",
            Command::Lyapunov => "lyapunov",
            Command::Chain => "chain",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Command::Simulate),
            "certify" => Ok(Command::Certify),
            "threshold" => Ok(Command::Threshold),
            "convergence" => Ok(Command::Convergence),
            "lyapunov" => Ok(Command::Lyapunov),
            "chain" => Ok(Command::Chain),
            other => Err(Error::Validation(format!("unknown command {other:?}"))),
        }
    }
}

/// The coefficient system as written in a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemConfig {
    ScalarLinear {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
    },
    Linear {
        a: Vec<Vec<f64>>,
        bs: Vec<Vec<Vec<f64>>>,
        c: Vec<Vec<f64>>,
        ds: Vec<Vec<Vec<f64>>>,
    },
    ScalarNonlinear {
        f: ScalarMap,
        g: ScalarMap,
        u1: ScalarMap,
        u2: ScalarMap,
    },
}

impl SystemConfig {
    /// Materialize the validated system.
    pub fn build(&self) -> Result<SystemSpec> {
        match self {
            SystemConfig::ScalarLinear { a, b, c, d } => SystemSpec::scalar_linear(*a, *b, *c, *d),
            SystemConfig::Linear { a, bs, c, ds } => {
                let to_mat = |rows: &Vec<Vec<f64>>| -> Result<DMatrix<f64>> {
                    let nr = rows.len();
                    if nr == 0 {
                        return Err(Error::Validation("empty matrix literal".into()));
                    }
                    let nc = rows[0].len();
                    if rows.iter().any(|r| r.len() != nc) {
                        return Err(Error::Shape("ragged matrix literal".into()));
                    }
                    Ok(DMatrix::from_row_slice(
                        nr,
                        nc,
                        &rows.iter().flatten().copied().collect::<Vec<_>>(),
                    ))
                };
                SystemSpec::linear(
                    to_mat(a)?,
                    bs.iter().map(to_mat).collect::<Result<Vec<_>>>()?,
                    to_mat(c)?,
                    ds.iter().map(to_mat).collect::<Result<Vec<_>>>()?,
                )
            }
            SystemConfig::ScalarNonlinear { f, g, u1, u2 } => {
                SystemSpec::scalar_nonlinear(*f, *g, *u1, *u2)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub tau: f64,
    pub m_sub: usize,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: u64,
    pub seed: u64,
    pub p: f64,
    /// Worker threads; 0 means the process-global default.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateConfig {
    pub kind: String,
    pub delta: f64,
    /// Optional grid of delta values for threshold sweeps.
    pub delta_grid: Option<Vec<f64>>,
    /// Assumed envelope (M, gamma); optional for `chain`, which can derive
    /// the starting envelope from the margin test.
    pub assumed_m: Option<f64>,
    pub assumed_gamma: Option<f64>,
    /// Margin factor below solved thresholds used by `chain`.
    pub safety: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    /// Step sizes run over h = 2^{-k} for k in min_exponent..=max_exponent.
    pub min_exponent: u32,
    pub max_exponent: u32,
    pub p_values: Vec<f64>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            min_exponent: 4,
            max_exponent: 9,
            p_values: vec![2.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    /// Number of sample trajectories to dump per scheme (0 = none).
    pub dump_paths: u64,
}

/// A full experiment definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub system: SystemConfig,
    pub x0: Vec<f64>,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub certificate: Option<CertificateConfig>,
    pub convergence: Option<ConvergenceConfig>,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn x0_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.x0.clone())
    }
}

// ---------------------------------------------------------------------------
// value-level parsing
// ---------------------------------------------------------------------------

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Validation(format!("key {key}: cannot parse {s:?} as a number")))
}

fn parse_u64(key: &str, s: &str) -> Result<u64> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| Error::Validation(format!("key {key}: cannot parse {s:?} as an integer")))
}

/// Split a bracketed list at its top-level commas.
fn split_top_level(inner: &str) -> Result<Vec<&str>> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, ch) in inner.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Validation("unbalanced brackets".into()))?;
            }
            ',' if depth == 0 => {
                parts.push(inner[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::Validation("unbalanced brackets".into()));
    }
    let last = inner[start..].trim();
    if !last.is_empty() {
        parts.push(last);
    }
    Ok(parts)
}

fn strip_brackets<'a>(key: &str, s: &'a str) -> Result<&'a str> {
    let s = s.trim();
    if !(s.starts_with('[') && s.ends_with(']')) {
        return Err(Error::Validation(format!(
            "key {key}: expected a bracketed list, got {s:?}"
        )));
    }
    Ok(&s[1..s.len() - 1])
}

fn parse_vector(key: &str, s: &str) -> Result<Vec<f64>> {
    split_top_level(strip_brackets(key, s)?)?
        .into_iter()
        .map(|v| parse_f64(key, v))
        .collect()
}

fn parse_matrix(key: &str, s: &str) -> Result<Vec<Vec<f64>>> {
    let rows = split_top_level(strip_brackets(key, s)?)?;
    let rows: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|r| parse_vector(key, r))
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Validation(format!("key {key}: empty matrix")));
    }
    Ok(rows)
}

fn parse_scalar_map(key: &str, s: &str) -> Result<ScalarMap> {
    let s = s.trim();
    if s == "zero" {
        return Ok(ScalarMap::Zero);
    }
    let (name, rest) = s
        .split_once('(')
        .ok_or_else(|| Error::Validation(format!("key {key}: bad map literal {s:?}")))?;
    let args = rest
        .strip_suffix(')')
        .ok_or_else(|| Error::Validation(format!("key {key}: bad map literal {s:?}")))?;
    let vals: Vec<f64> = split_top_level(args)?
        .into_iter()
        .map(|v| parse_f64(key, v))
        .collect::<Result<_>>()?;
    match (name.trim(), vals.as_slice()) {
        ("linear", [a]) => Ok(ScalarMap::Linear(*a)),
        ("sin", [amp, freq]) => Ok(ScalarMap::Sin { amp: *amp, freq: *freq }),
        ("tanh", [amp, freq]) => Ok(ScalarMap::Tanh { amp: *amp, freq: *freq }),
        _ => Err(Error::Validation(format!(
            "key {key}: unknown map {s:?} (use zero, linear(a), sin(amp, freq), tanh(amp, freq))"
        ))),
    }
}

// ---------------------------------------------------------------------------
// file-level parsing
// ---------------------------------------------------------------------------

struct RawConfig {
    /// (section, key, value) triples, duplicate-checked.
    entries: Vec<(String, String, String)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') {
                let name = line
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| {
                        Error::Validation(format!("line {}: malformed section header", lineno + 1))
                    })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Validation(format!("line {}: expected key = value", lineno + 1))
            })?;
            if section.is_empty() {
                return Err(Error::Validation(format!(
                    "line {}: key outside of any [section]",
                    lineno + 1
                )));
            }
            let key = key.trim().to_string();
            if !seen.insert((section.clone(), key.clone())) {
                return Err(Error::Validation(format!(
                    "duplicate key {key:?} in section [{section}]"
                )));
            }
            entries.push((section.clone(), key, value.trim().to_string()));
        }
        Ok(RawConfig { entries })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        let idx = self
            .entries
            .iter()
            .position(|(s, k, _)| s == section && k == key)?;
        Some(self.entries.remove(idx).2)
    }

    fn require(&mut self, section: &str, key: &str) -> Result<String> {
        self.take(section, key)
            .ok_or_else(|| Error::Validation(format!("missing key {key:?} in section [{section}]")))
    }

    fn has_section(&self, section: &str) -> bool {
        self.entries.iter().any(|(s, _, _)| s == section)
    }
}

/// Parse an experiment config from its textual form.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut raw = RawConfig::parse(text)?;

    let command = Command::parse(&raw.require("experiment", "command")?)?;

    let kind = raw.require("system", "kind")?;
    let system = match kind.as_str() {
        "scalar-linear" => SystemConfig::ScalarLinear {
            a: parse_f64("a", &raw.require("system", "a")?)?,
            b: parse_f64("b", &raw.require("system", "b")?)?,
            c: parse_f64("c", &raw.require("system", "c")?)?,
            d: parse_f64("d", &raw.require("system", "d")?)?,
        },
        "linear" => {
            let a = parse_matrix("a", &raw.require("system", "a")?)?;
            let c = parse_matrix("c", &raw.require("system", "c")?)?;
            let mut bs = Vec::new();
            let mut ds = Vec::new();
            for i in 1.. {
                let (bk, dk) = (format!("b{i}"), format!("d{i}"));
                match (raw.take("system", &bk), raw.take("system", &dk)) {
                    (Some(b), Some(d)) => {
                        bs.push(parse_matrix(&bk, &b)?);
                        ds.push(parse_matrix(&dk, &d)?);
                    }
                    (None, None) => break,
                    _ => {
                        return Err(Error::Validation(format!(
                            "diffusion matrices must come in pairs; {bk}/{dk} is incomplete"
                        )))
                    }
                }
            }
            if bs.is_empty() {
                return Err(Error::Validation(
                    "linear systems need at least b1 and d1".into(),
                ));
            }
            SystemConfig::Linear { a, bs, c, ds }
        }
        "scalar-nonlinear" => SystemConfig::ScalarNonlinear {
            f: parse_scalar_map("f", &raw.require("system", "f")?)?,
            g: parse_scalar_map("g", &raw.require("system", "g")?)?,
            u1: parse_scalar_map("u1", &raw.require("system", "u1")?)?,
            u2: parse_scalar_map("u2", &raw.require("system", "u2")?)?,
        },
        other => {
            return Err(Error::Validation(format!(
                "unknown system kind {other:?} (scalar-linear, linear, scalar-nonlinear)"
            )))
        }
    };
    let x0 = parse_vector("x0", &raw.require("system", "x0")?)?;

    let grid = GridConfig {
        tau: parse_f64("tau", &raw.require("grid", "tau")?)?,
        m_sub: parse_u64("m_sub", &raw.require("grid", "m_sub")?)? as usize,
        horizon: parse_f64("horizon", &raw.require("grid", "horizon")?)?,
    };

    let mc = McConfig {
        n_paths: parse_u64("n_paths", &raw.require("mc", "n_paths")?)?,
        seed: parse_u64("seed", &raw.require("mc", "seed")?)?,
        p: parse_f64("p", &raw.require("mc", "p")?)?,
        threads: raw
            .take("mc", "threads")
            .map(|v| parse_u64("threads", &v))
            .transpose()?
            .unwrap_or(0) as usize,
    };

    let certificate = if raw.has_section("certificate") {
        Some(CertificateConfig {
            kind: raw.require("certificate", "kind")?,
            delta: parse_f64("delta", &raw.require("certificate", "delta")?)?,
            delta_grid: raw
                .take("certificate", "delta_grid")
                .map(|v| parse_vector("delta_grid", &v))
                .transpose()?,
            assumed_m: raw
                .take("certificate", "assumed_m")
                .map(|v| parse_f64("assumed_m", &v))
                .transpose()?,
            assumed_gamma: raw
                .take("certificate", "assumed_gamma")
                .map(|v| parse_f64("assumed_gamma", &v))
                .transpose()?,
            safety: raw
                .take("certificate", "safety")
                .map(|v| parse_f64("safety", &v))
                .transpose()?
                .unwrap_or(0.5),
        })
    } else {
        None
    };

    let convergence = if raw.has_section("convergence") {
        Some(ConvergenceConfig {
            min_exponent: parse_u64("min_exponent", &raw.require("convergence", "min_exponent")?)?
                as u32,
            max_exponent: parse_u64("max_exponent", &raw.require("convergence", "max_exponent")?)?
                as u32,
            p_values: parse_vector("p_values", &raw.require("convergence", "p_values")?)?,
        })
    } else {
        None
    };

    let output = OutputConfig {
        dir: raw.require("output", "dir")?,
        dump_paths: raw
            .take("output", "dump_paths")
            .map(|v| parse_u64("dump_paths", &v))
            .transpose()?
            .unwrap_or(0),
    };

    if let Some((section, key, _)) = raw.entries.first() {
        return Err(Error::Validation(format!(
            "unknown key {key:?} in section [{section}]"
        )));
    }

    Ok(ExperimentConfig {
        command,
        system,
        x0,
        grid,
        mc,
        certificate,
        convergence,
        output,
    })
}

// ---------------------------------------------------------------------------
// canonical serialization
// ---------------------------------------------------------------------------

fn fmt_vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_matrix(m: &[Vec<f64>]) -> String {
    let rows: Vec<String> = m.iter().map(|r| fmt_vector(r)).collect();
    format!("[{}]", rows.join(", "))
}

fn fmt_scalar_map(m: &ScalarMap) -> String {
    match m {
        ScalarMap::Zero => "zero".into(),
        ScalarMap::Linear(a) => format!("linear({a})"),
        ScalarMap::Sin { amp, freq } => format!("sin({amp}, {freq})"),
        ScalarMap::Tanh { amp, freq } => format!("tanh({amp}, {freq})"),
    }
}

/// Canonical textual form; `parse_config` of the output reproduces the same
/// config, and serializing a parsed canonical file is byte-identical.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "[experiment]").unwrap();
    writeln!(w, "command = {}", cfg.command.name()).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "[system]").unwrap();
    match &cfg.system {
        SystemConfig::ScalarLinear { a, b, c, d } => {
            writeln!(w, "kind = scalar-linear").unwrap();
            writeln!(w, "a = {a}").unwrap();
            writeln!(w, "b = {b}").unwrap();
            writeln!(w, "c = {c}").unwrap();
            writeln!(w, "d = {d}").unwrap();
        }
        SystemConfig::Linear { a, bs, c, ds } => {
            writeln!(w, "kind = linear").unwrap();
            writeln!(w, "a = {}", fmt_matrix(a)).unwrap();
            writeln!(w, "c = {}", fmt_matrix(c)).unwrap();
            for (i, (b, d)) in bs.iter().zip(ds).enumerate() {
                writeln!(w, "b{} = {}", i + 1, fmt_matrix(b)).unwrap();
                writeln!(w, "d{} = {}", i + 1, fmt_matrix(d)).unwrap();
            }
        }
        SystemConfig::ScalarNonlinear { f, g, u1, u2 } => {
            writeln!(w, "kind = scalar-nonlinear").unwrap();
            writeln!(w, "f = {}", fmt_scalar_map(f)).unwrap();
            writeln!(w, "g = {}", fmt_scalar_map(g)).unwrap();
            writeln!(w, "u1 = {}", fmt_scalar_map(u1)).unwrap();
            writeln!(w, "u2 = {}", fmt_scalar_map(u2)).unwrap();
        }
    }
    writeln!(w, "x0 = {}", fmt_vector(&cfg.x0)).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "[grid]").unwrap();
    writeln!(w, "tau = {}", cfg.grid.tau).unwrap();
    writeln!(w, "m_sub = {}", cfg.grid.m_sub).unwrap();
    writeln!(w, "horizon = {}", cfg.grid.horizon).unwrap();
    writeln!(w).unwrap();
    writeln!(w, "[mc]").unwrap();
    writeln!(w, "n_paths = {}", cfg.mc.n_paths).unwrap();
    writeln!(w, "seed = {}", cfg.mc.seed).unwrap();
    writeln!(w, "p = {}", cfg.mc.p).unwrap();
    writeln!(w, "threads = {}", cfg.mc.threads).unwrap();
    if let Some(cert) = &cfg.certificate {
        writeln!(w).unwrap();
        writeln!(w, "[certificate]").unwrap();
        writeln!(w, "kind = {}", cert.kind).unwrap();
        writeln!(w, "delta = {}", cert.delta).unwrap();
        if let Some(grid) = &cert.delta_grid {
            writeln!(w, "delta_grid = {}", fmt_vector(grid)).unwrap();
        }
        if let Some(m) = cert.assumed_m {
            writeln!(w, "assumed_m = {m}").unwrap();
        }
        if let Some(g) = cert.assumed_gamma {
            writeln!(w, "assumed_gamma = {g}").unwrap();
        }
        writeln!(w, "safety = {}", cert.safety).unwrap();
    }
    if let Some(conv) = &cfg.convergence {
        writeln!(w).unwrap();
        writeln!(w, "[convergence]").unwrap();
        writeln!(w, "min_exponent = {}", conv.min_exponent).unwrap();
        writeln!(w, "max_exponent = {}", conv.max_exponent).unwrap();
        writeln!(w, "p_values = {}", fmt_vector(&conv.p_values)).unwrap();
    }
    writeln!(w).unwrap();
    writeln!(w, "[output]").unwrap();
    writeln!(w, "dir = {}", cfg.output.dir).unwrap();
    writeln!(w, "dump_paths = {}", cfg.output.dump_paths).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_config() -> ExperimentConfig {
        ExperimentConfig {
            command: Command::Simulate,
            system: SystemConfig::ScalarLinear { a: -1.0, b: 0.5, c: 0.2, d: 0.1 },
            x0: vec![1.0],
            grid: GridConfig { tau: 0.1, m_sub: 10, horizon: 2.0 },
            mc: McConfig { n_paths: 1000, seed: 42, p: 2.0, threads: 0 },
            certificate: Some(CertificateConfig {
                kind: "Q1".into(),
                delta: 0.5,
                delta_grid: None,
                assumed_m: Some(1.0),
                assumed_gamma: Some(1.75),
                safety: 0.5,
            }),
            convergence: None,
            output: OutputConfig { dir: "out".into(), dump_paths: 0 },
        }
    }

    #[test]
    fn round_trip_is_identity_on_canonical_text() {
        let cfg = sample_config();
        let text = serialize_config(&cfg);
        let parsed = parse_config(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(serialize_config(&parsed), text);
    }

    #[test]
    fn parses_linear_matrices_and_comments() {
        let text = "\
# a two-dimensional system
[experiment]
command = lyapunov

[system]
kind = linear
a = [[-1.0, 0.0], [0.0, -2.0]]
c = [[0.0, 0.0], [0.0, 0.0]]
b1 = [[0.3, 0.0], [0.0, 0.3]]
d1 = [[0.0, 0.0], [0.0, 0.0]]
x0 = [1.0, 1.0]

[grid]
tau = 0.1
m_sub = 10
horizon = 2.0

[mc]
n_paths = 100
seed = 7
p = 2.0

[output]
dir = results
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.command, Command::Lyapunov);
        let spec = cfg.system.build().unwrap();
        assert_eq!(spec.dim(), 2);
        assert_eq!(cfg.mc.threads, 0);
        assert_eq!(cfg.output.dump_paths, 0);
        let again = parse_config(&serialize_config(&cfg)).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn parses_nonlinear_catalogue() {
        let text = "\
[experiment]
command = simulate

[system]
kind = scalar-nonlinear
f = tanh(0.5, 1.0)
g = sin(0.3, 2.0)
u1 = zero
u2 = linear(0.1)
x0 = [0.5]

[grid]
tau = 0.5
m_sub = 5
horizon = 1.0

[mc]
n_paths = 10
seed = 1
p = 2.0

[output]
dir = out
";
        let cfg = parse_config(text).unwrap();
        match cfg.system {
            SystemConfig::ScalarNonlinear { f, g, u1, u2 } => {
                assert_eq!(f, ScalarMap::Tanh { amp: 0.5, freq: 1.0 });
                assert_eq!(g, ScalarMap::Sin { amp: 0.3, freq: 2.0 });
                assert_eq!(u1, ScalarMap::Zero);
                assert_eq!(u2, ScalarMap::Linear(0.1));
            }
            other => panic!("wrong system {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_config("command = simulate\n").is_err()); // key outside section
        let base = serialize_config(&sample_config());
        assert!(parse_config(&base.replace("kind = scalar-linear", "kind = cubic")).is_err());
        assert!(parse_config(&(base.clone() + "\n[mystery]\nx = 1\n")).is_err());
        let dup = base.replace("seed = 42", "seed = 42\nseed = 43");
        assert!(parse_config(&dup).is_err());
        let bad_num = base.replace("tau = 0.1", "tau = much");
        assert!(parse_config(&bad_num).is_err());
    }

    proptest! {
        #[test]
        fn scalar_configs_round_trip(
            a in -3.0f64..3.0,
            b in -2.0f64..2.0,
            n_paths in 2u64..100_000,
            seed in 0u64..u64::MAX,
            tau in prop::sample::select(vec![0.1f64, 0.25, 0.5, 1.0]),
            m_sub in 1usize..64,
        ) {
            let mut cfg = sample_config();
            cfg.system = SystemConfig::ScalarLinear { a, b, c: 0.0, d: 0.0 };
            cfg.grid = GridConfig { tau, m_sub, horizon: 4.0 * tau };
            cfg.mc.n_paths = n_paths;
            cfg.mc.seed = seed;
            let parsed = parse_config(&serialize_config(&cfg)).unwrap();
            prop_assert_eq!(parsed, cfg);
        }
    }
}
