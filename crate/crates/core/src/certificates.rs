//! Explicit stability-transfer certificates.
//!
//! Four certificate kinds move a pth-moment exponential decay envelope
//! between the four systems:
//!
//! * Q1: delayed equation -> plain equation (small delay `tau`)
//! * Q2: plain equation -> its explicit scheme (small step `h`)
//! * Q3: explicit plain scheme -> explicit delayed scheme (small `tau`)
//! * Q4: explicit delayed scheme -> delayed equation (small step `h`)
//!
//! Every constant is kept in the natural-log domain and every decisive
//! inequality is evaluated with log-sum-exp: the constants contain double
//! exponentials like e^{C3 T} that overflow `f64` for desk-scale inputs.
//! Verdicts are strict: a certificate passes iff its decisive inequality
//! holds strictly.
//!
//! The admissible block count n-hat is reported as an exact integer while it
//! fits; past 2^62 the integer is dropped and the evaluation continues with
//! the product n-hat * tau, whose limit is exact to f64 resolution there.

use crate::error::{Error, Result};
use crate::logspace::{ln_pow2, log_diff_exp, log_expm1, log_sum_exp};

const LN_N_HAT_INT_LIMIT: f64 = 62.0 * std::f64::consts::LN_2;

/// A decay envelope M * |x0|^p * e^{-gamma t}, with M carried in log domain
/// so certified envelopes with astronomically large constants stay exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayPair {
    log_m: f64,
    gamma: f64,
}

impl DecayPair {
    pub fn new(m: f64, gamma: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Validation(format!(
                "envelope constant M must be positive and finite, got {m}"
            )));
        }
        Self::from_log(m.ln(), gamma)
    }

    pub fn from_log(log_m: f64, gamma: f64) -> Result<Self> {
        if !log_m.is_finite() {
            return Err(Error::Validation(format!("log M must be finite, got {log_m}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Validation(format!(
                "decay rate must be positive and finite, got {gamma}"
            )));
        }
        Ok(DecayPair { log_m, gamma })
    }

    pub fn log_m(&self) -> f64 {
        self.log_m
    }

    /// Plain-domain M; may overflow to infinity for certified envelopes.
    pub fn m(&self) -> f64 {
        self.log_m.exp()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// ln of the envelope value at time t for |x0| = 1.
    pub fn ln_envelope(&self, t: f64) -> f64 {
        self.log_m - self.gamma * t
    }
}

// ---------------------------------------------------------------------------
// explicit constants, log domain
// ---------------------------------------------------------------------------

fn validate_pk(p: f64, k_lip: f64) -> Result<()> {
    if !(p.is_finite() && p >= 2.0) {
        return Err(Error::Domain(format!("moment order p must be >= 2, got {p}")));
    }
    if !(k_lip.is_finite() && k_lip >= 0.0) {
        return Err(Error::Validation(format!(
            "Lipschitz constant must be >= 0, got {k_lip}"
        )));
    }
    Ok(())
}

/// ln C1(K, p, tau) = ln( 2^{2p-1} K^p [tau^{p/2} + (p(p-1)/2)^{p/2}] ).
fn ln_c1(p: f64, k: f64, ln_tau: f64) -> f64 {
    let bracket = log_sum_exp(0.5 * p * ln_tau, 0.5 * p * (0.5 * p * (p - 1.0)).ln());
    ln_pow2(2.0 * p - 1.0) + p * k.ln() + bracket
}

/// ln C2 = ln( 2^{p-1} C1 / p ).
fn ln_c2(p: f64, k: f64, ln_tau: f64) -> f64 {
    ln_pow2(p - 1.0) + ln_c1(p, k, ln_tau) - p.ln()
}

/// C3(p, K) = [4p - 1 + 2^{p-1} + 2(p-1)(2p-1+2^{p-1}) K] K, polynomial in
/// (p, K) and kept in the plain domain.
fn c3(p: f64, k: f64) -> f64 {
    let two_pm1 = (ln_pow2(p - 1.0)).exp();
    (4.0 * p - 1.0 + two_pm1 + 2.0 * (p - 1.0) * (2.0 * p - 1.0 + two_pm1) * k) * k
}

/// ln H1(T, p, K) = 2pK[1 + (p-1)K] T; H3 is the same expression.
fn ln_h1(p: f64, k: f64, t: f64) -> f64 {
    2.0 * p * k * (1.0 + (p - 1.0) * k) * t
}

/// ln H4(T, K, tau, p) = ln( C2 (e^{C3 T} - 1) ).
fn ln_h4(p: f64, k: f64, ln_tau: f64, t: f64) -> f64 {
    ln_c2(p, k, ln_tau) + log_expm1(c3(p, k) * t)
}

/// ln H6(T, p, K) = ln( [1+4(p-1)K] 2^{2p} K^{p+1} e^{KT[5p-1+4(p-1)(2p-1)K]} T ).
fn ln_h6(p: f64, k: f64, t: f64) -> f64 {
    (1.0 + 4.0 * (p - 1.0) * k).ln()
        + ln_pow2(2.0 * p)
        + (p + 1.0) * k.ln()
        + k * t * (5.0 * p - 1.0 + 4.0 * (p - 1.0) * (2.0 * p - 1.0) * k)
        + t.ln()
}

/// ln H7(T, K, p) = ln( 2^{2p-1} K^p [T^{p/2} + (p(p-1)/2)^{p/2}] e^{2pK[1+(p-1)K]T} ).
fn ln_h7(p: f64, k: f64, t: f64) -> f64 {
    let bracket = log_sum_exp(0.5 * p * t.ln(), 0.5 * p * (0.5 * p * (p - 1.0)).ln());
    ln_pow2(2.0 * p - 1.0) + p * k.ln() + bracket + 2.0 * p * k * (1.0 + (p - 1.0) * k) * t
}

/// ln H8(T, K, p) = ln(H6 + H7) at the same horizon.
fn ln_h8(p: f64, k: f64, t: f64) -> f64 {
    log_sum_exp(ln_h6(p, k, t), ln_h7(p, k, t))
}

/// ln H9(T, p, K) = ln( [1+4(p-1)K] 2^{2p+1} K^{p+1} e^{2KT(3p-1+(p-1)(5p-4)K)} T ).
fn ln_h9(p: f64, k: f64, t: f64) -> f64 {
    (1.0 + 4.0 * (p - 1.0) * k).ln()
        + ln_pow2(2.0 * p + 1.0)
        + (p + 1.0) * k.ln()
        + 2.0 * k * t * (3.0 * p - 1.0 + (p - 1.0) * (5.0 * p - 4.0) * k)
        + t.ln()
}

/// Every explicit constant at the given (p, K, tau, T), in log domain (C3 is
/// polynomial and stored plainly). For K = 0 the power-of-K constants are
/// zero, i.e. their logs are -inf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantTable {
    pub p: f64,
    pub k_lip: f64,
    pub tau: f64,
    pub horizon: f64,
    pub log_c1: f64,
    pub log_c2: f64,
    pub c3: f64,
    pub log_h1: f64,
    pub log_h3: f64,
    pub log_h4: f64,
    pub log_h6: f64,
    pub log_h7: f64,
    pub log_h8: f64,
    pub log_h9: f64,
}

/// Evaluate the full constant table.
pub fn constant_table(p: f64, k_lip: f64, tau: f64, horizon: f64) -> Result<ConstantTable> {
    validate_pk(p, k_lip)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Validation(format!("tau must be positive, got {tau}")));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Validation(format!("T must be positive, got {horizon}")));
    }
    let ln_tau = tau.ln();
    Ok(ConstantTable {
        p,
        k_lip,
        tau,
        horizon,
        log_c1: ln_c1(p, k_lip, ln_tau),
        log_c2: ln_c2(p, k_lip, ln_tau),
        c3: c3(p, k_lip),
        log_h1: ln_h1(p, k_lip, horizon),
        log_h3: ln_h1(p, k_lip, horizon),
        log_h4: ln_h4(p, k_lip, ln_tau, horizon),
        log_h6: ln_h6(p, k_lip, horizon),
        log_h7: ln_h7(p, k_lip, horizon),
        log_h8: ln_h8(p, k_lip, horizon),
        log_h9: ln_h9(p, k_lip, horizon),
    })
}

// ---------------------------------------------------------------------------
// certificates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    /// Delayed equation -> plain equation, condition on tau.
    Q1,
    /// Plain equation -> explicit plain scheme, condition on h.
    Q2,
    /// Explicit plain scheme -> explicit delayed scheme, condition on tau.
    Q3,
    /// Explicit delayed scheme -> delayed equation, condition on h.
    Q4,
}

impl CertificateKind {
    pub fn name(&self) -> &'static str {
        match self {
            CertificateKind::Q1 => "Q1",
            CertificateKind::Q2 => "Q2",
            CertificateKind::Q3 => "Q3",
            CertificateKind::Q4 => "Q4",
        }
    }
}

impl std::str::FromStr for CertificateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "Q1" => Ok(CertificateKind::Q1),
            "Q2" => Ok(CertificateKind::Q2),
            "Q3" => Ok(CertificateKind::Q3),
            "Q4" => Ok(CertificateKind::Q4),
            other => Err(Error::Validation(format!("unknown certificate kind {other:?}"))),
        }
    }
}

/// Validated inputs for one certificate check. `tau` and `h` are carried in
/// log domain so chained certificates can operate below the smallest
/// positive `f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateInputs {
    pub kind: CertificateKind,
    pub p: f64,
    pub k_lip: f64,
    pub ln_tau: Option<f64>,
    pub ln_h: Option<f64>,
    pub delta: Option<f64>,
    pub assumed: DecayPair,
}

fn validate_delta(delta: f64) -> Result<f64> {
    if !(delta.is_finite() && delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(delta)
}

fn ln_of_positive(name: &str, v: f64) -> Result<f64> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Validation(format!("{name} must be positive, got {v}")));
    }
    Ok(v.ln())
}

fn validate_ln(name: &str, ln_v: f64) -> Result<f64> {
    if !ln_v.is_finite() {
        return Err(Error::Validation(format!("ln {name} must be finite, got {ln_v}")));
    }
    Ok(ln_v)
}

impl CertificateInputs {
    pub fn q1(p: f64, k_lip: f64, tau: f64, delta: f64, assumed: DecayPair) -> Result<Self> {
        Self::q1_ln(p, k_lip, ln_of_positive("tau", tau)?, delta, assumed)
    }

    pub fn q1_ln(p: f64, k_lip: f64, ln_tau: f64, delta: f64, assumed: DecayPair) -> Result<Self> {
        validate_pk(p, k_lip)?;
        Ok(CertificateInputs {
            kind: CertificateKind::Q1,
            p,
            k_lip,
            ln_tau: Some(validate_ln("tau", ln_tau)?),
            ln_h: None,
            delta: Some(validate_delta(delta)?),
            assumed,
        })
    }

    pub fn q2(p: f64, k_lip: f64, h: f64, assumed: DecayPair) -> Result<Self> {
        Self::q2_ln(p, k_lip, ln_of_positive("h", h)?, assumed)
    }

    pub fn q2_ln(p: f64, k_lip: f64, ln_h: f64, assumed: DecayPair) -> Result<Self> {
        validate_pk(p, k_lip)?;
        Ok(CertificateInputs {
            kind: CertificateKind::Q2,
            p,
            k_lip,
            ln_tau: None,
            ln_h: Some(validate_ln("h", ln_h)?),
            delta: None,
            assumed,
        })
    }

    pub fn q3(p: f64, k_lip: f64, tau: f64, delta: f64, assumed: DecayPair) -> Result<Self> {
        Self::q3_ln(p, k_lip, ln_of_positive("tau", tau)?, delta, assumed)
    }

    pub fn q3_ln(p: f64, k_lip: f64, ln_tau: f64, delta: f64, assumed: DecayPair) -> Result<Self> {
        validate_pk(p, k_lip)?;
        Ok(CertificateInputs {
            kind: CertificateKind::Q3,
            p,
            k_lip,
            ln_tau: Some(validate_ln("tau", ln_tau)?),
            ln_h: None,
            delta: Some(validate_delta(delta)?),
            assumed,
        })
    }

    pub fn q4(p: f64, k_lip: f64, tau: f64, h: f64, assumed: DecayPair) -> Result<Self> {
        Self::q4_ln(
            p,
            k_lip,
            ln_of_positive("tau", tau)?,
            ln_of_positive("h", h)?,
            assumed,
        )
    }

    pub fn q4_ln(p: f64, k_lip: f64, ln_tau: f64, ln_h: f64, assumed: DecayPair) -> Result<Self> {
        validate_pk(p, k_lip)?;
        let ln_tau = validate_ln("tau", ln_tau)?;
        let ln_h = validate_ln("h", ln_h)?;
        if ln_h > ln_tau + 1e-12 {
            return Err(Error::Validation(
                "step size h must not exceed the delay tau (h = tau/m, m >= 1)".into(),
            ));
        }
        Ok(CertificateInputs {
            kind: CertificateKind::Q4,
            p,
            k_lip,
            ln_tau: Some(ln_tau),
            ln_h: Some(ln_h),
            delta: None,
            assumed,
        })
    }
}

/// Outcome of a certificate check: the decisive inequality in log domain,
/// the admissible block count, and (on pass) the implied envelope of the
/// target system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub inputs: CertificateInputs,
    pub verdict: bool,
    /// ln of the left-hand side of the decisive inequality.
    pub lhs_log: f64,
    /// ln of the right-hand side.
    pub rhs_log: f64,
    /// The admissible block count, exact while it fits below 2^62.
    pub n_hat: Option<u64>,
    /// ln of the block count, whenever a block count applies (Q1/Q3/Q4).
    pub ln_n_hat: Option<f64>,
    /// The certificate's working horizon: n_hat * tau for Q1/Q3/Q4, T for Q2.
    pub block_horizon: f64,
    /// Implied decay envelope for the target system; present iff the
    /// verdict is a pass.
    pub implied: Option<DecayPair>,
}

/// Smallest admissible block count for horizon `a` (in time units) and the
/// given delay. `ceil_convention` selects ceil(a/tau) (Q1) versus
/// floor(a/tau) + 1 (Q3/Q4). Past 2^62 blocks the integer is dropped and the
/// product n_hat * tau collapses to `a`, which is exact at f64 resolution.
fn n_hat_blocks(a: f64, ln_tau: f64, ceil_convention: bool) -> (Option<u64>, Option<f64>, f64) {
    let tau = ln_tau.exp();
    if a <= 0.0 {
        // any positive block count is admissible; take one block
        return (Some(1), Some(0.0), tau);
    }
    let ln_ratio = a.ln() - ln_tau;
    if ln_ratio > LN_N_HAT_INT_LIMIT {
        return (None, Some(ln_ratio), a);
    }
    let ratio = a / tau;
    let n = if ceil_convention {
        ratio.ceil().max(1.0)
    } else {
        ratio.floor().max(0.0) + 1.0
    };
    (Some(n as u64), Some(n.ln()), n * tau)
}

/// ln of 2pK(1+(p-1)K), the moment-growth rate entering H1/H3.
fn growth_rate(p: f64, k: f64) -> f64 {
    2.0 * p * k * (1.0 + (p - 1.0) * k)
}

/// Evaluate a certificate: verdict, decisive inequality in log domain, and
/// the implied envelope on pass.
pub fn check_certificate(inputs: &CertificateInputs) -> Result<Certificate> {
    let p = inputs.p;
    let k = inputs.k_lip;
    let pair = inputs.assumed;
    match inputs.kind {
        CertificateKind::Q1 => {
            let ln_tau = inputs.ln_tau.unwrap();
            let delta = inputs.delta.unwrap();
            let tau = ln_tau.exp();
            // a = ln(2^{p-1} M1 / delta) / gamma1
            let a = (ln_pow2(p - 1.0) + pair.log_m() - delta.ln()) / pair.gamma();
            let (n_hat, ln_n_hat, n_tau) = n_hat_blocks(a, ln_tau, true);
            // decisive: delta + 2^{p-1} C2 tau^{p/2} (e^{C3 (a + tau)} - 1) < 1.
            // a.max(0) keeps the horizon an upper bound for n_tau when the
            // assumed envelope is below the delta floor already at t = 0.
            let x = c3(p, k) * (a.max(0.0) + tau);
            let ln_term = ln_pow2(p - 1.0) + ln_c2(p, k, ln_tau) + 0.5 * p * ln_tau + log_expm1(x);
            let lhs_log = log_sum_exp(delta.ln(), ln_term);
            let verdict = lhs_log < 0.0;
            let implied = implied_from_contraction(verdict, lhs_log, n_tau, p, k)?;
            Ok(Certificate {
                inputs: *inputs,
                verdict,
                lhs_log,
                rhs_log: 0.0,
                n_hat,
                ln_n_hat,
                block_horizon: n_tau,
                implied,
            })
        }
        CertificateKind::Q3 => {
            let ln_tau = inputs.ln_tau.unwrap();
            let delta = inputs.delta.unwrap();
            let tau = ln_tau.exp();
            let a = (ln_pow2(p - 1.0) + pair.log_m() - delta.ln()) / pair.gamma();
            let (n_hat, ln_n_hat, n_tau) = n_hat_blocks(a, ln_tau, false);
            // decisive: 2^{p-1} H4(2(a + tau), K, tau, p) tau^{p/2} + delta < 1
            let horizon = 2.0 * (a.max(0.0) + tau);
            let ln_term = ln_pow2(p - 1.0) + ln_h4(p, k, ln_tau, horizon) + 0.5 * p * ln_tau;
            let lhs_log = log_sum_exp(delta.ln(), ln_term);
            let verdict = lhs_log < 0.0;
            let implied = implied_from_contraction(verdict, lhs_log, n_tau, p, k)?;
            Ok(Certificate {
                inputs: *inputs,
                verdict,
                lhs_log,
                rhs_log: 0.0,
                n_hat,
                ln_n_hat,
                block_horizon: n_tau,
                implied,
            })
        }
        CertificateKind::Q4 => {
            let ln_tau = inputs.ln_tau.unwrap();
            let ln_h = inputs.ln_h.unwrap();
            let a = 4.0 * ((p - 1.0) * 3.0f64.ln() + pair.log_m()) / pair.gamma();
            let (n_hat, ln_n_hat, n_tau) = n_hat_blocks(a, ln_tau, false);
            let x = pair.gamma() * n_tau;
            // decisive: 3^{p-1} H8(2 n_tau) h^{p/2} + e^{-3x/4} < e^{-x/2}
            let ln_term = (p - 1.0) * 3.0f64.ln() + ln_h8(p, k, 2.0 * n_tau) + 0.5 * p * ln_h;
            let lhs_log = log_sum_exp(ln_term, -0.75 * x);
            let rhs_log = -0.5 * x;
            let verdict = lhs_log < rhs_log;
            let implied = if verdict {
                Some(DecayPair::from_log(
                    ln_h1(p, k, n_tau) + 0.5 * pair.gamma() * n_tau,
                    0.5 * pair.gamma(),
                )?)
            } else {
                None
            };
            Ok(Certificate {
                inputs: *inputs,
                verdict,
                lhs_log,
                rhs_log,
                n_hat,
                ln_n_hat,
                block_horizon: n_tau,
                implied,
            })
        }
        CertificateKind::Q2 => {
            let ln_h = inputs.ln_h.unwrap();
            let horizon = 1.0 + 4.0 * (ln_pow2(p - 1.0) + pair.log_m()) / pair.gamma();
            if !(horizon.is_finite() && horizon > 0.0) {
                return Err(Error::UnrepresentableCertificate(format!(
                    "effective horizon T = {horizon} is not positive"
                )));
            }
            let x = pair.gamma() * horizon;
            // decisive: 2^{p-1} H9(2T) h^{p/2} + e^{-3x/4} < e^{-x/2}
            let ln_term = ln_pow2(p - 1.0) + ln_h9(p, k, 2.0 * horizon) + 0.5 * p * ln_h;
            let lhs_log = log_sum_exp(ln_term, -0.75 * x);
            let rhs_log = -0.5 * x;
            let verdict = lhs_log < rhs_log;
            let implied = if verdict {
                Some(DecayPair::from_log(
                    0.5 * pair.gamma() * horizon + growth_rate(p, k) * horizon,
                    0.5 * pair.gamma(),
                )?)
            } else {
                None
            };
            Ok(Certificate {
                inputs: *inputs,
                verdict,
                lhs_log,
                rhs_log,
                n_hat: None,
                ln_n_hat: None,
                block_horizon: horizon,
                implied,
            })
        }
    }
}

/// Implied envelope for the contraction-style certificates (Q1/Q3): the rate
/// is taken at the inequality boundary, gamma = -ln R / (n_hat tau), and the
/// constant absorbs the moment growth over one block horizon.
fn implied_from_contraction(
    verdict: bool,
    lhs_log: f64,
    n_tau: f64,
    p: f64,
    k: f64,
) -> Result<Option<DecayPair>> {
    if !verdict {
        return Ok(None);
    }
    if !(n_tau.is_finite() && n_tau > 0.0) {
        return Err(Error::UnrepresentableCertificate(format!(
            "block horizon {n_tau} is not positive"
        )));
    }
    let gamma = -lhs_log / n_tau;
    let log_m = (gamma + growth_rate(p, k)) * n_tau;
    Ok(Some(DecayPair::from_log(log_m, gamma)?))
}

// ---------------------------------------------------------------------------
// threshold solvers
// ---------------------------------------------------------------------------

/// What to solve for: the largest admissible tau (Q1/Q3) or h (Q4/Q2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdQuery {
    Q1 { p: f64, k_lip: f64, delta: f64, assumed: DecayPair },
    Q2 { p: f64, k_lip: f64, assumed: DecayPair },
    Q3 { p: f64, k_lip: f64, delta: f64, assumed: DecayPair },
    Q4 { p: f64, k_lip: f64, ln_tau: f64, assumed: DecayPair },
}

/// A solved threshold. The log value is authoritative: thresholds from
/// chained certificates routinely sit below the smallest positive `f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub kind: CertificateKind,
    pub ln_value: f64,
    /// exp(ln_value); 0.0 when the threshold underflows the plain domain.
    pub value: f64,
    /// For Q4: the smallest substep count m with tau/m <= h*, exact while it
    /// fits below 2^62.
    pub min_substeps: Option<u64>,
    /// For Q4: ln of that substep count.
    pub ln_substeps: Option<f64>,
}

/// Relative tolerance of the tau bisection (in ln units).
const BISECT_TOL: f64 = 1e-7;

fn inputs_for(query: &ThresholdQuery, ln_param: f64) -> Result<CertificateInputs> {
    match *query {
        ThresholdQuery::Q1 { p, k_lip, delta, assumed } => {
            CertificateInputs::q1_ln(p, k_lip, ln_param, delta, assumed)
        }
        ThresholdQuery::Q3 { p, k_lip, delta, assumed } => {
            CertificateInputs::q3_ln(p, k_lip, ln_param, delta, assumed)
        }
        ThresholdQuery::Q2 { p, k_lip, assumed } => CertificateInputs::q2_ln(p, k_lip, ln_param, assumed),
        ThresholdQuery::Q4 { p, k_lip, ln_tau, assumed } => {
            CertificateInputs::q4_ln(p, k_lip, ln_tau, ln_param.min(ln_tau), assumed)
        }
    }
}

/// Solve the threshold parameter. Q4/Q2 use the closed form (h enters the
/// decisive inequality only through h^{p/2}); Q1/Q3 verify monotonicity on a
/// coarse scan and then bisect ln tau to relative tolerance 1e-6.
pub fn solve_threshold(query: &ThresholdQuery) -> Result<Threshold> {
    match *query {
        ThresholdQuery::Q2 { p, k_lip, assumed } => {
            validate_pk(p, k_lip)?;
            let horizon = 1.0 + 4.0 * (ln_pow2(p - 1.0) + assumed.log_m()) / assumed.gamma();
            if !(horizon.is_finite() && horizon > 0.0) {
                return Err(Error::UnrepresentableCertificate(format!(
                    "effective horizon T = {horizon} is not positive"
                )));
            }
            let x = assumed.gamma() * horizon;
            let budget = log_diff_exp(-0.5 * x, -0.75 * x);
            let ln_h = (2.0 / p) * (budget - (ln_pow2(p - 1.0) + ln_h9(p, k_lip, 2.0 * horizon)));
            Ok(Threshold {
                kind: CertificateKind::Q2,
                ln_value: ln_h,
                value: ln_h.exp(),
                min_substeps: None,
                ln_substeps: None,
            })
        }
        ThresholdQuery::Q4 { p, k_lip, ln_tau, assumed } => {
            validate_pk(p, k_lip)?;
            validate_ln("tau", ln_tau)?;
            let a = 4.0 * ((p - 1.0) * 3.0f64.ln() + assumed.log_m()) / assumed.gamma();
            let (_, _, n_tau) = n_hat_blocks(a, ln_tau, false);
            let x = assumed.gamma() * n_tau;
            let budget = log_diff_exp(-0.5 * x, -0.75 * x);
            let ln_h =
                (2.0 / p) * (budget - ((p - 1.0) * 3.0f64.ln() + ln_h8(p, k_lip, 2.0 * n_tau)));
            let ln_m_real = (ln_tau - ln_h).max(0.0);
            let (min_substeps, ln_substeps) = if ln_m_real <= LN_N_HAT_INT_LIMIT {
                let m = (ln_m_real.exp().ceil()).max(1.0);
                (Some(m as u64), m.ln())
            } else {
                (None, ln_m_real)
            };
            Ok(Threshold {
                kind: CertificateKind::Q4,
                ln_value: ln_h,
                value: ln_h.exp(),
                min_substeps,
                ln_substeps: Some(ln_substeps),
            })
        }
        ThresholdQuery::Q1 { .. } | ThresholdQuery::Q3 { .. } => {
            let kind = match query {
                ThresholdQuery::Q1 { .. } => CertificateKind::Q1,
                _ => CertificateKind::Q3,
            };
            let condition = |ln_tau: f64| -> Result<(f64, bool)> {
                let cert = check_certificate(&inputs_for(query, ln_tau)?)?;
                Ok((cert.lhs_log, cert.verdict))
            };
            // bracket the crossing by exponential search on ln tau
            let mut lo;
            let mut hi;
            let (_, pass_at_zero) = condition(0.0)?;
            if pass_at_zero {
                lo = 0.0;
                let mut step = 1.0;
                loop {
                    let cand = lo + step;
                    if cand > 1.0e6 {
                        return Err(Error::NoCertificate(
                            "condition passes for every delay in range; no finite threshold".into(),
                        ));
                    }
                    if !condition(cand)?.1 {
                        hi = cand;
                        break;
                    }
                    lo = cand;
                    step *= 2.0;
                }
            } else {
                hi = 0.0;
                let mut step = 1.0;
                loop {
                    let cand = hi - step;
                    if cand < -1.0e15 {
                        return Err(Error::NoCertificate(
                            "condition fails for every delay in range; no positive threshold".into(),
                        ));
                    }
                    if condition(cand)?.1 {
                        lo = cand;
                        break;
                    }
                    hi = cand;
                    step *= 2.0;
                }
            }
            // coarse monotonicity scan across the bracket before trusting bisection
            let mut table = Vec::with_capacity(17);
            for i in 0..17 {
                let ln_tau = lo + (hi - lo) * i as f64 / 16.0;
                let (lhs, _) = condition(ln_tau)?;
                table.push((ln_tau, lhs));
            }
            if table.windows(2).any(|w| w[1].1 < w[0].1 - 1e-9) {
                return Err(Error::MonotonicityScan { table });
            }
            while hi - lo > BISECT_TOL {
                let mid = 0.5 * (lo + hi);
                if condition(mid)?.1 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let ln_value = 0.5 * (lo + hi);
            Ok(Threshold {
                kind,
                ln_value,
                value: ln_value.exp(),
                min_substeps: None,
                ln_substeps: None,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// chain composition
// ---------------------------------------------------------------------------

/// One stage of the four-certificate cycle.
#[derive(Debug, Clone)]
pub struct ChainStage {
    pub certificate: Certificate,
    /// The threshold solve that selected this stage's parameter, when one ran.
    pub threshold: Option<Threshold>,
}

/// Result of composing Q2 -> Q3 -> Q4 -> Q1 from a starting envelope of the
/// plain equation, feeding each implied envelope into the next certificate.
#[derive(Debug, Clone)]
pub struct ChainReport {
    pub p: f64,
    pub k_lip: f64,
    pub start: DecayPair,
    /// Shared delay (log domain) used by Q3, Q4 and Q1.
    pub ln_tau: f64,
    /// Shared step size (log domain) used by Q2, Q3 and Q4: h = tau / m.
    pub ln_h: f64,
    /// ln of the substep count m.
    pub ln_substeps: f64,
    /// Stages in execution order Q2, Q3, Q4, Q1.
    pub stages: Vec<ChainStage>,
    /// Envelope the cycle returns for the plain equation.
    pub closing: DecayPair,
    pub all_pass: bool,
}

/// Compose the full cycle. `delta` feeds both contraction certificates;
/// `safety` (in (0,1)) is the margin applied below every solved threshold.
///
/// The delay is shrunk geometrically until the closing Q1 certificate
/// accepts it; the implied envelopes converge as tau -> 0, so this
/// terminates after a few rounds.
pub fn run_chain(
    p: f64,
    k_lip: f64,
    start: DecayPair,
    delta: f64,
    safety: f64,
) -> Result<ChainReport> {
    validate_pk(p, k_lip)?;
    validate_delta(delta)?;
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::Validation(format!("safety factor must be in (0,1), got {safety}")));
    }
    let ln_safety = safety.ln();

    let thr2 = solve_threshold(&ThresholdQuery::Q2 { p, k_lip, assumed: start })?;
    let thr3_pair_source = {
        // Q2's implied envelope does not depend on h, so any passing h works here
        let probe = check_certificate(&CertificateInputs::q2_ln(
            p,
            k_lip,
            thr2.ln_value + ln_safety,
            start,
        )?)?;
        if !probe.verdict {
            return Err(Error::NoCertificate("Q2 fails just below its own threshold".into()));
        }
        probe.implied.unwrap()
    };
    let pair_em_plain = thr3_pair_source;

    let thr3 = solve_threshold(&ThresholdQuery::Q3 { p, k_lip, delta, assumed: pair_em_plain })?;
    let mut ln_tau = thr3.ln_value + ln_safety;

    for _round in 0..200 {
        let cert3 = check_certificate(&CertificateInputs::q3_ln(
            p,
            k_lip,
            ln_tau,
            delta,
            pair_em_plain,
        )?)?;
        if !cert3.verdict {
            return Err(Error::NoCertificate(
                "Q3 unexpectedly fails below its threshold".into(),
            ));
        }
        let pair_em_delayed = cert3.implied.unwrap();

        let thr4 = solve_threshold(&ThresholdQuery::Q4 {
            p,
            k_lip,
            ln_tau,
            assumed: pair_em_delayed,
        })?;
        // one step size h = tau/m serving Q2, Q3 and Q4
        let ln_h_target = thr2.ln_value.min(thr4.ln_value) + ln_safety;
        let ln_m_real = (ln_tau - ln_h_target).max(0.0);
        let (ln_h, ln_m) = if ln_m_real <= LN_N_HAT_INT_LIMIT {
            let m = ln_m_real.exp().ceil().max(1.0);
            (ln_tau - m.ln(), m.ln())
        } else {
            (ln_tau - ln_m_real, ln_m_real)
        };

        let cert4 =
            check_certificate(&CertificateInputs::q4_ln(p, k_lip, ln_tau, ln_h, pair_em_delayed)?)?;
        if !cert4.verdict {
            return Err(Error::NoCertificate(
                "Q4 unexpectedly fails below its threshold".into(),
            ));
        }
        let pair_delayed = cert4.implied.unwrap();

        let cert1 =
            check_certificate(&CertificateInputs::q1_ln(p, k_lip, ln_tau, delta, pair_delayed)?)?;
        if cert1.verdict {
            let cert2 = check_certificate(&CertificateInputs::q2_ln(p, k_lip, ln_h, start)?)?;
            let closing = cert1.implied.unwrap();
            let all_pass =
                cert2.verdict && cert3.verdict && cert4.verdict && cert1.verdict;
            return Ok(ChainReport {
                p,
                k_lip,
                start,
                ln_tau,
                ln_h,
                ln_substeps: ln_m,
                stages: vec![
                    ChainStage { certificate: cert2, threshold: Some(thr2) },
                    ChainStage { certificate: cert3, threshold: Some(thr3) },
                    ChainStage { certificate: cert4, threshold: Some(thr4) },
                    ChainStage { certificate: cert1, threshold: None },
                ],
                closing,
                all_pass,
            });
        }
        // shrink the delay to what the closing certificate would accept
        let thr1 = solve_threshold(&ThresholdQuery::Q1 { p, k_lip, delta, assumed: pair_delayed })?;
        ln_tau = thr1.ln_value.min(ln_tau) + ln_safety;
    }
    Err(Error::NoCertificate(
        "chain did not converge to a delay acceptable to all four certificates".into(),
    ))
}
