//! pth-moment estimation and exact moment oracles.
//!
//! Monte Carlo estimates carry 99% confidence half-widths and are reduced in
//! a fixed chunk order, so results are independent of the worker count. For
//! scalar linear systems the module also provides deterministic oracles: the
//! exact second-moment recursions of both explicit schemes, closed-form
//! point evaluation of those recursions at arbitrary step indices, and the
//! continuous-time second moment of the delayed equation solved as a linear
//! ODE per delay block.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrators::{gbm_exact_partial, integrate_partial, Scheme};
use crate::model::{GridSpec, SystemSpec};
use crate::paths::{generate_increments, IncrementPlan};

/// Two-sided 99% normal quantile used for confidence half-widths.
const Z99: f64 = 2.5758293035489004;

/// Paths per reduction chunk; fixed so the merge order (and hence the
/// floating-point result) does not depend on the thread count.
const CHUNK_PATHS: u64 = 1024;

/// A time-indexed estimate (or exact evaluation) of E|X(t)|^p.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// 99% confidence half-widths; zero for exact oracles.
    pub half_widths: Vec<f64>,
    /// Number of Monte Carlo paths; zero for exact oracles.
    pub n_paths: u64,
    pub p: f64,
    /// First grid index at which some path had diverged; values from this
    /// index on are NaN and excluded from fits.
    pub unstable_from: Option<usize>,
}

impl MomentSeries {
    pub fn new(
        times: Vec<f64>,
        values: Vec<f64>,
        half_widths: Vec<f64>,
        n_paths: u64,
        p: f64,
    ) -> Result<Self> {
        if p < 2.0 {
            return Err(Error::Domain(format!("moment order p must be >= 2, got {p}")));
        }
        if times.len() != values.len() || times.len() != half_widths.len() {
            return Err(Error::Shape("series columns must have equal length".into()));
        }
        Ok(MomentSeries {
            times,
            values,
            half_widths,
            n_paths,
            p,
            unstable_from: None,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// An exponential envelope fitted to a moment series:
/// value(t) <= m * |x0|^p * exp(-gamma t) on the fitted window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub m: f64,
    /// Decay rate; positive means the moments decay.
    pub gamma: f64,
    /// Time window the fit used.
    pub window: (f64, f64),
    /// Largest absolute log-residual over the window.
    pub residual: f64,
    pub n_points: usize,
}

struct ChunkAccum {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    first_divergence: Option<usize>,
}

fn accumulate_path(
    states: &[DVector<f64>],
    p: f64,
    acc: &mut ChunkAccum,
    diverged: Option<usize>,
) {
    for (n, s) in states.iter().enumerate() {
        let v = s.norm().powf(p);
        acc.sum[n] += v;
        acc.sumsq[n] += v * v;
    }
    if let Some(step) = diverged {
        acc.first_divergence = Some(match acc.first_divergence {
            Some(old) => old.min(step),
            None => step,
        });
    }
}

/// Estimate E|X_n|^p over `n_paths` independent paths of the given scheme.
///
/// Diverged paths do not abort the estimate: the series is marked unstable
/// from the first divergence time on (values NaN from that index).
pub fn estimate_pth_moment(
    spec: &SystemSpec,
    scheme: Scheme,
    x0: &DVector<f64>,
    grid: &GridSpec,
    p: f64,
    n_paths: u64,
    seed: u64,
) -> Result<MomentSeries> {
    if p < 2.0 {
        return Err(Error::Domain(format!("moment order p must be >= 2, got {p}")));
    }
    if n_paths < 2 {
        return Err(Error::Validation("need at least 2 paths".into()));
    }
    let gbm_coeffs = match scheme {
        Scheme::ExactGbm => {
            let (a, b, c, d) = spec.scalar_linear_coeffs().ok_or_else(|| {
                Error::Unsupported("exact sampler needs a scalar linear system".into())
            })?;
            Some((a + c, b + d))
        }
        _ => None,
    };
    if x0.len() != spec.dim() {
        return Err(Error::Shape(format!(
            "x0 has length {}, system dimension is {}",
            x0.len(),
            spec.dim()
        )));
    }
    let n_points = grid.n_steps() + 1;
    let n_chunks = n_paths.div_ceil(CHUNK_PATHS);

    let chunk_results: Vec<Result<ChunkAccum>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK_PATHS;
            let hi = ((chunk + 1) * CHUNK_PATHS).min(n_paths);
            let mut acc = ChunkAccum {
                sum: vec![0.0; n_points],
                sumsq: vec![0.0; n_points],
                first_divergence: None,
            };
            for path_id in lo..hi {
                let plan = IncrementPlan {
                    seed,
                    path_id,
                    n_steps: grid.n_steps(),
                    h: grid.h(),
                    m_bm: spec.brownian_dim(),
                };
                let incs = generate_increments(&plan)?;
                let (states, diverged) = match scheme {
                    Scheme::EmSde => integrate_partial(spec, x0, grid, &incs, false)?,
                    Scheme::EmSdepca => integrate_partial(spec, x0, grid, &incs, true)?,
                    Scheme::ExactGbm => {
                        let (alpha, beta) = gbm_coeffs.unwrap();
                        gbm_exact_partial(alpha, beta, x0[0], grid, &incs)
                    }
                };
                accumulate_path(&states, p, &mut acc, diverged);
            }
            Ok(acc)
        })
        .collect();

    // merge in chunk order: bit-stable for any thread count
    let mut sum = vec![0.0; n_points];
    let mut sumsq = vec![0.0; n_points];
    let mut first_divergence: Option<usize> = None;
    for res in chunk_results {
        let acc = res?;
        for n in 0..n_points {
            sum[n] += acc.sum[n];
            sumsq[n] += acc.sumsq[n];
        }
        first_divergence = match (first_divergence, acc.first_divergence) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }

    let nf = n_paths as f64;
    let mut values = Vec::with_capacity(n_points);
    let mut half_widths = Vec::with_capacity(n_points);
    for n in 0..n_points {
        if first_divergence.is_some_and(|s| n >= s) {
            values.push(f64::NAN);
            half_widths.push(f64::NAN);
            continue;
        }
        let mean = sum[n] / nf;
        let var = ((sumsq[n] - sum[n] * sum[n] / nf) / (nf - 1.0)).max(0.0);
        values.push(mean);
        half_widths.push(Z99 * (var / nf).sqrt());
    }
    // all paths start at x0, so the t=0 value is exact by construction
    values[0] = x0.norm().powf(p);
    half_widths[0] = 0.0;

    let mut series = MomentSeries::new(
        (0..n_points).map(|n| grid.t(n)).collect(),
        values,
        half_widths,
        n_paths,
        p,
    )?;
    series.unstable_from = first_divergence;
    Ok(series)
}

/// Least-squares exponential envelope on the log scale.
///
/// Uses points past a burn-in of 10% of the horizon whose relative
/// confidence half-width is below 50%; nonpositive or unstable values are
/// excluded. The envelope constant absorbs the largest positive residual, so
/// m * |x0|^p * exp(-gamma t) dominates the series on the whole window.
pub fn fit_decay_rate(series: &MomentSeries) -> Result<DecayFit> {
    if series.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    let x0p = series.values[0];
    if !(x0p.is_finite() && x0p > 0.0) {
        return Err(Error::InsufficientData(
            "series starts at zero; no envelope is defined".into(),
        ));
    }
    let t_end = *series.times.last().unwrap();
    let burn = 0.1 * t_end;
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for i in 0..series.len() {
        if series.unstable_from.is_some_and(|s| i >= s) {
            break;
        }
        let (t, v, hw) = (series.times[i], series.values[i], series.half_widths[i]);
        if t < burn - 1e-12 || !v.is_finite() || v <= 0.0 {
            continue;
        }
        if hw.is_finite() && v > 0.0 && hw / v >= 0.5 {
            continue;
        }
        ts.push(t);
        ys.push(v.ln());
    }
    if ts.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "only {} usable points, need at least 5",
            ts.len()
        )));
    }
    let n = ts.len() as f64;
    let tbar = ts.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, y) in ts.iter().zip(&ys) {
        sxx += (t - tbar) * (t - tbar);
        sxy += (t - tbar) * (y - ybar);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("degenerate time window".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * tbar;
    let mut max_resid = f64::NEG_INFINITY;
    let mut max_abs = 0.0f64;
    for (t, y) in ts.iter().zip(&ys) {
        let r = y - (intercept + slope * t);
        max_resid = max_resid.max(r);
        max_abs = max_abs.max(r.abs());
    }
    Ok(DecayFit {
        m: (intercept + max_resid).exp() / x0p,
        gamma: -slope,
        window: (ts[0], *ts.last().unwrap()),
        residual: max_abs,
        n_points: ts.len(),
    })
}

/// Which explicit scheme an exact second-moment recursion describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmRecursion {
    Sde,
    Sdepca,
}

/// Exact second moment of the explicit schemes for the scalar linear system
/// (a, b, c, d). Deterministic recursion, no sampling; p = 2 only.
///
/// Plain scheme: E Y_{n+1}^2 = E Y_n^2 * ((1+(a+c)h)^2 + (b+d)^2 h).
/// Delayed scheme: propagate (E u^2, E uv, E v^2) with u the current state
/// and v the state at the enclosing block start; at block boundaries the
/// frozen state is refreshed, making all three entries equal.
pub fn em_linear_second_moment(
    kind: EmRecursion,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    grid: &GridSpec,
    x0: f64,
) -> Result<MomentSeries> {
    for v in [a, b, c, d, x0] {
        if !v.is_finite() {
            return Err(Error::Validation("coefficients and x0 must be finite".into()));
        }
    }
    let h = grid.h();
    let n_points = grid.n_steps() + 1;
    let mut values = Vec::with_capacity(n_points);
    match kind {
        EmRecursion::Sde => {
            let rho = (1.0 + (a + c) * h).powi(2) + (b + d) * (b + d) * h;
            let mut v = x0 * x0;
            values.push(v);
            for _ in 0..grid.n_steps() {
                v *= rho;
                values.push(v);
            }
        }
        EmRecursion::Sdepca => {
            let (mut u2, mut uv, mut v2) = (x0 * x0, x0 * x0, x0 * x0);
            values.push(u2);
            let g = 1.0 + a * h;
            for n in 0..grid.n_steps() {
                let u2n = g * g * u2
                    + 2.0 * g * c * h * uv
                    + c * c * h * h * v2
                    + h * (b * b * u2 + 2.0 * b * d * uv + d * d * v2);
                let uvn = g * uv + c * h * v2;
                u2 = u2n;
                uv = uvn;
                if (n + 1) % grid.m_sub() == 0 {
                    uv = u2;
                    v2 = u2;
                }
                values.push(u2);
            }
        }
    }
    MomentSeries::new(
        (0..n_points).map(|n| grid.t(n)).collect(),
        values,
        vec![0.0; n_points],
        0,
        2.0,
    )
}

/// ln E Y_n^2 for the plain scheme on the scalar linear system with folded
/// coefficients (a_eff, b_eff), evaluated at an arbitrary (possibly huge)
/// step count. The one-step factor is handled as a deviation from 1, so the
/// result stays accurate even when h is far below machine epsilon.
pub fn em_sde_second_moment_ln(a_eff: f64, b_eff: f64, h: f64, n: f64, x0: f64) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Validation(format!("h must be positive, got {h}")));
    }
    if n < 0.0 {
        return Err(Error::Validation(format!("step count must be >= 0, got {n}")));
    }
    // rho = (1 + a h)^2 + b^2 h = 1 + (2a + b^2) h + a^2 h^2
    let delta = (2.0 * a_eff + b_eff * b_eff) * h + a_eff * a_eff * h * h;
    if delta <= -1.0 {
        return Err(Error::Domain(
            "one-step factor is nonpositive; no log-domain value".into(),
        ));
    }
    Ok(2.0 * x0.abs().ln() + n * delta.ln_1p())
}

/// ln E X_{km+l}^2 for the delayed scheme on the scalar linear system
/// (a, b, c, d) with step h and m_sub substeps per block, at block index k
/// (fractional values admitted for k beyond integer range) and offset l.
///
/// Works in deviation form: the per-step transition is I + E with E = O(h),
/// the within-block products (I + S_j) are accumulated on the deviations
/// S_{j+1} = S_j + E + E S_j, and the block-boundary refresh makes the
/// per-block map rank one, so E X^2 factors exactly as
/// x0^2 * sigma^k * rho_l with sigma, rho_l read off row sums of S.
pub fn em_sdepca_second_moment_ln(
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    h: f64,
    m_sub: usize,
    k: f64,
    l: usize,
    x0: f64,
) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Validation(format!("h must be positive, got {h}")));
    }
    if m_sub == 0 || m_sub > 10_000_000 {
        return Err(Error::Validation(format!("m_sub out of range: {m_sub}")));
    }
    if l >= m_sub {
        return Err(Error::Validation(format!("offset {l} must be < m_sub {m_sub}")));
    }
    if k < 0.0 {
        return Err(Error::Validation(format!("block index must be >= 0, got {k}")));
    }
    // per-step deviation E: rows of the (E u^2, E uv, E v^2) map minus identity
    let e = [
        [
            2.0 * a * h + a * a * h * h + b * b * h,
            2.0 * c * h + 2.0 * a * c * h * h + 2.0 * b * d * h,
            c * c * h * h + d * d * h,
        ],
        [0.0, a * h, c * h],
        [0.0, 0.0, 0.0],
    ];
    let mut s = [[0.0f64; 3]; 3];
    let mut drho_l = 0.0; // row-0 sum of S_l
    for j in 0..m_sub {
        if j == l {
            drho_l = s[0][0] + s[0][1] + s[0][2];
        }
        // S <- S + E + E*S
        let mut next = s;
        for r in 0..3 {
            for cidx in 0..3 {
                let mut acc = s[r][cidx] + e[r][cidx];
                for t in 0..3 {
                    acc += e[r][t] * s[t][cidx];
                }
                next[r][cidx] = acc;
            }
        }
        s = next;
    }
    if l == 0 {
        drho_l = 0.0;
    }
    let dsigma = s[0][0] + s[0][1] + s[0][2];
    if dsigma <= -1.0 || drho_l <= -1.0 {
        return Err(Error::Domain(
            "block factor is nonpositive; no log-domain value".into(),
        ));
    }
    Ok(2.0 * x0.abs().ln() + k * dsigma.ln_1p() + drho_l.ln_1p())
}

fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += a[i][k] * b[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Matrix exponential of a 3x3 by scaling-and-squaring with a Taylor series;
/// comfortably below the 1e-10 error budget for the moderate norms the
/// moment ODE produces.
fn expm3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let norm = m
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.25 && squarings < 64 {
        squarings += 1;
        scale *= 0.5;
    }
    let a = {
        let mut a = *m;
        for row in a.iter_mut() {
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
        a
    };
    // Taylor sum_{k=0..20} A^k / k!
    let mut result = [[0.0; 3]; 3];
    for (i, row) in result.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut term = result;
    for k in 1..=20 {
        term = matmul3(&term, &a);
        let inv = 1.0 / k as f64;
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul3(&result, &result);
    }
    result
}

/// Exact second moment of the continuous delayed equation with scalar linear
/// coefficients, on a block-aligned grid.
///
/// Within each delay block the triple (E x^2, E xv, E v^2), with v the state
/// frozen at the block start, satisfies a constant linear ODE; it is advanced
/// by one matrix exponential per substep and the frozen state is refreshed at
/// block boundaries.
pub fn sdepca_exact_second_moment(
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    grid: &GridSpec,
    x0: f64,
) -> Result<MomentSeries> {
    for v in [a, b, c, d, x0] {
        if !v.is_finite() {
            return Err(Error::Validation("coefficients and x0 must be finite".into()));
        }
    }
    let h = grid.h();
    let generator = [
        [2.0 * a + b * b, 2.0 * c + 2.0 * b * d, d * d],
        [0.0, a, c],
        [0.0, 0.0, 0.0],
    ];
    let step = expm3(&{
        let mut m = generator;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= h;
            }
        }
        m
    });
    let n_points = grid.n_steps() + 1;
    let mut state = [x0 * x0, x0 * x0, x0 * x0];
    let mut values = Vec::with_capacity(n_points);
    values.push(state[0]);
    for n in 0..grid.n_steps() {
        let mut next = [0.0; 3];
        for (i, row) in step.iter().enumerate() {
            next[i] = row[0] * state[0] + row[1] * state[1] + row[2] * state[2];
        }
        state = next;
        if (n + 1) % grid.m_sub() == 0 {
            state = [state[0], state[0], state[0]];
        }
        values.push(state[0]);
    }
    MomentSeries::new(
        (0..n_points).map(|n| grid.t(n)).collect(),
        values,
        vec![0.0; n_points],
        0,
        2.0,
    )
}

/// Closed-form pth moment of geometric Brownian motion:
/// E|y(t)|^p = |x0|^p exp(p (alpha + (p-1) beta^2 / 2) t).
pub fn gbm_moment(alpha: f64, beta: f64, p: f64, x0: f64, t: f64) -> f64 {
    x0.abs().powf(p) * (p * (alpha + 0.5 * (p - 1.0) * beta * beta) * t).exp()
}

/// The closed-form moment on a grid, packaged as an exact series.
pub fn gbm_moment_series(
    alpha: f64,
    beta: f64,
    p: f64,
    x0: f64,
    grid: &GridSpec,
) -> Result<MomentSeries> {
    let n_points = grid.n_steps() + 1;
    let times: Vec<f64> = (0..n_points).map(|n| grid.t(n)).collect();
    let values = times.iter().map(|&t| gbm_moment(alpha, beta, p, x0, t)).collect();
    MomentSeries::new(times, values, vec![0.0; n_points], 0, p)
}
