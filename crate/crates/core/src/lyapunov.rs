//! Drift-criterion margin test for the folded (plain-equation) coefficients
//! F = f + u1, G = g + u2.
//!
//! The margin lambda is the largest constant with
//! |y|^2 (2 y'F(y) + |G(y)|^2) - (2-p) |y'G(y)|^2 <= -lambda |y|^4 for all y;
//! a positive margin certifies the pth-moment envelope |x0|^p e^{-lambda p t / 2},
//! which feeds the certificate chain as the pair (M = 1, gamma = lambda p / 2).
//! For linear systems the left side is degree-4 homogeneous, so the margin is
//! found on the unit sphere; scalar linear systems have a closed form.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::SystemSpec;
use crate::paths::standard_normal_draw;

/// How the margin was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginMethod {
    ScalarClosedForm,
    SphereGrid,
    RandomSphere,
}

impl MarginMethod {
    pub fn name(&self) -> &'static str {
        match self {
            MarginMethod::ScalarClosedForm => "scalar-closed-form",
            MarginMethod::SphereGrid => "sphere-grid",
            MarginMethod::RandomSphere => "random-sphere",
        }
    }
}

/// Sphere-search effort knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    /// Deterministic grid resolution (d = 2).
    pub grid_points: usize,
    /// Random unit-vector probes (d >= 3; also mixed into d = 2).
    pub probes: u64,
    /// Seed for the probe stream.
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { grid_points: 2048, probes: 10_000, seed: 0x5eed }
    }
}

/// Margin report: the certified lambda, the unit vector attaining it, and
/// how hard the search worked. The worst point is carried so the margin can
/// be re-checked independently via [`quadratic_form`].
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub p: f64,
    pub lambda: f64,
    pub worst_point: DVector<f64>,
    pub n_samples: u64,
    pub method: MarginMethod,
}

/// The homogeneous form Q(y) = |y|^2 (2 y'F + |G|^2) - (2-p) |y'G|^2 with the
/// folded coefficients. The margin is -max Q over the unit sphere.
pub fn quadratic_form(spec: &SystemSpec, p: f64, y: &DVector<f64>) -> Result<f64> {
    if p < 2.0 {
        return Err(Error::Domain(format!("p must be >= 2, got {p}")));
    }
    let (drift, diffusion) = spec.eval_coefficients(y, y)?;
    let y_norm_sq = y.norm_squared();
    let y_dot_f = y.dot(&drift);
    let g_fro_sq = diffusion.iter().map(|v| v * v).sum::<f64>();
    let mut ytg_sq = 0.0;
    for j in 0..diffusion.ncols() {
        let col = diffusion.column(j);
        let dot = y.iter().zip(col.iter()).map(|(a, b)| a * b).sum::<f64>();
        ytg_sq += dot * dot;
    }
    Ok(y_norm_sq * (2.0 * y_dot_f + g_fro_sq) - (2.0 - p) * ytg_sq)
}

fn unit_probe(spec_dim: usize, seed: u64, probe_id: u64) -> Option<DVector<f64>> {
    let v = DVector::from_fn(spec_dim, |i, _| {
        standard_normal_draw(seed, probe_id, 0, i as u64)
    });
    let n = v.norm();
    if n > 1e-12 {
        Some(v / n)
    } else {
        None
    }
}

/// Local pattern search on the sphere starting from `start`.
fn refine_on_sphere(
    spec: &SystemSpec,
    p: f64,
    start: DVector<f64>,
    evals: &mut u64,
) -> Result<(DVector<f64>, f64)> {
    let d = start.len();
    let mut best = start;
    let mut best_q = quadratic_form(spec, p, &best)?;
    *evals += 1;
    let mut step = 0.1;
    while step > 1e-10 {
        let mut improved = false;
        for i in 0..d {
            for sign in [1.0, -1.0] {
                let mut cand = best.clone();
                cand[i] += sign * step;
                let n = cand.norm();
                if n < 1e-12 {
                    continue;
                }
                cand /= n;
                let q = quadratic_form(spec, p, &cand)?;
                *evals += 1;
                if q > best_q {
                    best_q = q;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((best, best_q))
}

/// Compute the margin lambda for the folded coefficients of `spec`.
///
/// Scalar linear systems use the closed form
/// lambda = -(2 a_eff + (p-1) b_eff^2); other linear systems maximize the
/// quadratic form over the unit sphere (valid by homogeneity) with a
/// deterministic grid (d = 2) or random probes plus local refinement.
/// Nonlinear systems are not supported: without homogeneity a sphere search
/// does not bound the form globally.
pub fn assumption_margin(
    spec: &SystemSpec,
    p: f64,
    sampling: &SamplingConfig,
) -> Result<LyapunovReport> {
    if p < 2.0 {
        return Err(Error::Domain(format!("p must be >= 2, got {p}")));
    }
    if !spec.is_linear() {
        return Err(Error::Unsupported(
            "margin test requires a linear system (degree-4 homogeneity)".into(),
        ));
    }
    if let Some((a, b, c, d)) = spec.scalar_linear_coeffs() {
        let a_eff = a + c;
        let b_eff = b + d;
        let lambda = -(2.0 * a_eff + (p - 1.0) * b_eff * b_eff);
        return Ok(LyapunovReport {
            p,
            lambda,
            worst_point: DVector::from_vec(vec![1.0]),
            n_samples: 1,
            method: MarginMethod::ScalarClosedForm,
        });
    }

    let d = spec.dim();
    let mut evals: u64 = 0;
    let mut best: Option<(DVector<f64>, f64)> = None;
    let consider = |cand: DVector<f64>, q: f64, best: &mut Option<(DVector<f64>, f64)>| {
        if best.as_ref().is_none_or(|(_, bq)| q > *bq) {
            *best = Some((cand, q));
        }
    };

    let method = if d == 2 {
        // antipodal symmetry: Q(-y) = Q(y), half circle suffices
        for i in 0..sampling.grid_points.max(8) {
            let theta = std::f64::consts::PI * i as f64 / sampling.grid_points.max(8) as f64;
            let cand = DVector::from_vec(vec![theta.cos(), theta.sin()]);
            let q = quadratic_form(spec, p, &cand)?;
            evals += 1;
            consider(cand, q, &mut best);
        }
        MarginMethod::SphereGrid
    } else {
        MarginMethod::RandomSphere
    };
    for probe in 0..sampling.probes {
        if let Some(cand) = unit_probe(d, sampling.seed, probe) {
            let q = quadratic_form(spec, p, &cand)?;
            evals += 1;
            consider(cand, q, &mut best);
        }
    }
    let (start, _) = best.ok_or_else(|| Error::Validation("no usable sphere samples".into()))?;
    let (worst_point, max_q) = refine_on_sphere(spec, p, start, &mut evals)?;
    Ok(LyapunovReport {
        p,
        lambda: -max_q,
        worst_point,
        n_samples: evals,
        method,
    })
}

/// The generator of |y|^p along the folded dynamics:
/// p|y|^{p-2} y'F + (p/2)|y|^{p-2} |G|^2 + (p(p-2)/2)|y|^{p-4} |y'G|^2.
///
/// Under a margin lambda this is bounded by -(lambda p / 2) |y|^p.
pub fn generator_value(spec: &SystemSpec, p: f64, y: &DVector<f64>) -> Result<f64> {
    if p < 2.0 {
        return Err(Error::Domain(format!("p must be >= 2, got {p}")));
    }
    let norm = y.norm();
    if norm == 0.0 {
        if p < 4.0 {
            return Err(Error::Domain(
                "generator of |y|^p is singular at y = 0 for p < 4".into(),
            ));
        }
        return Ok(0.0);
    }
    let (drift, diffusion) = spec.eval_coefficients(y, y)?;
    let y_dot_f = y.dot(&drift);
    let g_fro_sq = diffusion.iter().map(|v| v * v).sum::<f64>();
    let mut ytg_sq = 0.0;
    for j in 0..diffusion.ncols() {
        let col = diffusion.column(j);
        let dot = y.iter().zip(col.iter()).map(|(a, b)| a * b).sum::<f64>();
        ytg_sq += dot * dot;
    }
    let mut value = p * norm.powf(p - 2.0) * y_dot_f + 0.5 * p * norm.powf(p - 2.0) * g_fro_sq;
    if p != 2.0 {
        value += 0.5 * p * (p - 2.0) * norm.powf(p - 4.0) * ytg_sq;
    }
    Ok(value)
}

/// The certified envelope |x0|^p e^{-lambda p t / 2} at time t.
pub fn lyapunov_decay_bound(lambda: f64, p: f64, x0: &DVector<f64>, t: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::NoCertificate(format!(
            "margin must be positive to certify decay, got {lambda}"
        )));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Validation(format!("time must be >= 0, got {t}")));
    }
    Ok(x0.norm().powf(p) * (-0.5 * lambda * p * t).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScalarMap;
    use crate::moments::gbm_moment;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn scalar(a: f64, b: f64) -> SystemSpec {
        SystemSpec::scalar_linear(a, b, 0.0, 0.0).unwrap()
    }

    #[test]
    fn scalar_closed_form_margins() {
        let spec = scalar(-1.0, 0.5);
        let r2 = assumption_margin(&spec, 2.0, &SamplingConfig::default()).unwrap();
        assert_relative_eq!(r2.lambda, 1.75, max_relative = 1e-14);
        assert_eq!(r2.method, MarginMethod::ScalarClosedForm);
        let r3 = assumption_margin(&spec, 3.0, &SamplingConfig::default()).unwrap();
        assert_relative_eq!(r3.lambda, 1.5, max_relative = 1e-14);
        // folded coefficients: delayed parts count toward a_eff, b_eff
        let folded = SystemSpec::scalar_linear(-1.2, 0.3, 0.2, 0.2).unwrap();
        let r = assumption_margin(&folded, 2.0, &SamplingConfig::default()).unwrap();
        assert_relative_eq!(r.lambda, 1.75, max_relative = 1e-14);
    }

    #[test]
    fn zero_system_has_zero_margin() {
        let spec = scalar(0.0, 0.0);
        let r = assumption_margin(&spec, 2.0, &SamplingConfig::default()).unwrap();
        assert_relative_eq!(r.lambda, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn diagonal_two_dim_margin_matches_hand_maximum() {
        // Q on the unit circle is c^2 (2a1 + b1^2) + s^2 (2a2 + b2^2) for p=2,
        // so the margin is -max(2a1+b1^2, 2a2+b2^2) = 1.75 here
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.3]);
        let z = DMatrix::zeros(2, 2);
        let spec = SystemSpec::linear(a, vec![b], z.clone(), vec![z]).unwrap();
        let r = assumption_margin(&spec, 2.0, &SamplingConfig::default()).unwrap();
        assert_relative_eq!(r.lambda, 1.75, max_relative = 1e-9);
        assert_eq!(r.method, MarginMethod::SphereGrid);
        // the worst point attains the reported margin
        let q = quadratic_form(&spec, 2.0, &r.worst_point).unwrap();
        assert_relative_eq!(q, -r.lambda, epsilon = 1e-12);
    }

    #[test]
    fn grid_refinement_is_stable() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.7, -0.4, -1.5]);
        let b = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.4]);
        let z = DMatrix::zeros(2, 2);
        let spec = SystemSpec::linear(a, vec![b], z.clone(), vec![z]).unwrap();
        let coarse = SamplingConfig { grid_points: 1024, probes: 2000, seed: 1 };
        let fine = SamplingConfig { grid_points: 2048, probes: 2000, seed: 1 };
        let l1 = assumption_margin(&spec, 2.0, &coarse).unwrap().lambda;
        let l2 = assumption_margin(&spec, 2.0, &fine).unwrap().lambda;
        assert!(
            (l1 - l2).abs() <= 1e-3 * l1.abs().max(1.0),
            "margin moved from {l1} to {l2} on refinement"
        );
    }

    #[test]
    fn three_dim_probe_search_matches_diagonal_maximum() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, -3.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.2]);
        let z = DMatrix::zeros(3, 3);
        let spec = SystemSpec::linear(a, vec![b], z.clone(), vec![z]).unwrap();
        let r = assumption_margin(&spec, 2.0, &SamplingConfig::default()).unwrap();
        assert_eq!(r.method, MarginMethod::RandomSphere);
        assert_relative_eq!(r.lambda, 1.75, max_relative = 1e-7);
    }

    #[test]
    fn generator_hand_values_and_homogeneity() {
        let spec = scalar(-1.0, 0.5);
        let y1 = DVector::from_vec(vec![1.0]);
        // 2*(-1) + 0.25 = -1.75 = -(lambda p / 2) |y|^2 with lambda = 1.75
        assert_relative_eq!(generator_value(&spec, 2.0, &y1).unwrap(), -1.75, max_relative = 1e-14);

        // diffusion-free generator is 2 y'F(y)
        let drift_only = scalar(-0.7, 0.0);
        let y = DVector::from_vec(vec![1.7]);
        assert_relative_eq!(
            generator_value(&drift_only, 2.0, &y).unwrap(),
            2.0 * 1.7 * (-0.7 * 1.7),
            max_relative = 1e-14
        );

        // degree-p homogeneity for linear systems
        for p in [2.0, 3.0, 4.5] {
            let v = generator_value(&spec, p, &y1).unwrap();
            let s = 2.3f64;
            let vs = generator_value(&spec, p, &DVector::from_vec(vec![s])).unwrap();
            assert_relative_eq!(vs, s.powf(p) * v, max_relative = 1e-12);
        }
    }

    #[test]
    fn generator_respects_margin_at_random_points() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.4, -0.3, -2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.3]);
        let z = DMatrix::zeros(2, 2);
        let spec = SystemSpec::linear(a, vec![b], z.clone(), vec![z]).unwrap();
        for p in [2.0, 3.0] {
            let report = assumption_margin(&spec, p, &SamplingConfig::default()).unwrap();
            for i in 0..1000u64 {
                let y = unit_probe(2, 777, i).unwrap() * (0.1 + (i % 7) as f64);
                let lv = generator_value(&spec, p, &y).unwrap();
                let bound = -0.5 * report.lambda * p * y.norm().powf(p);
                assert!(
                    lv <= bound + 1e-10,
                    "generator {lv} above bound {bound} at p={p}"
                );
            }
        }
    }

    #[test]
    fn generator_domain_errors() {
        let spec = scalar(-1.0, 0.5);
        let zero = DVector::from_vec(vec![0.0]);
        assert!(matches!(
            generator_value(&spec, 2.0, &zero),
            Err(Error::Domain(_))
        ));
        assert_eq!(generator_value(&spec, 4.0, &zero).unwrap(), 0.0);
    }

    #[test]
    fn nonlinear_systems_are_rejected() {
        let spec = SystemSpec::scalar_nonlinear(
            ScalarMap::Tanh { amp: 0.5, freq: 1.0 },
            ScalarMap::Zero,
            ScalarMap::Zero,
            ScalarMap::Zero,
        )
        .unwrap();
        assert!(matches!(
            assumption_margin(&spec, 2.0, &SamplingConfig::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn decay_bound_examples() {
        let x0 = DVector::from_vec(vec![1.0]);
        let b = lyapunov_decay_bound(1.75, 2.0, &x0, 2.0).unwrap();
        assert_relative_eq!(b, (-3.5f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(b, gbm_moment(-1.0, 0.5, 2.0, 1.0, 2.0), max_relative = 1e-14);
        assert_relative_eq!(
            lyapunov_decay_bound(1.75, 2.0, &x0, 0.0).unwrap(),
            1.0,
            max_relative = 1e-15
        );
        assert!(matches!(
            lyapunov_decay_bound(0.0, 2.0, &x0, 1.0),
            Err(Error::NoCertificate(_))
        ));
    }

    #[test]
    fn scalar_rate_is_tight_against_the_exact_moment() {
        // lambda p / 2 equals the exact moment decay rate for scalar systems
        for (a, b, p) in [(-1.0, 0.5, 2.0), (-1.0, 0.5, 3.0), (-2.0, 0.3, 4.0)] {
            let spec = scalar(a, b);
            let r = assumption_margin(&spec, p, &SamplingConfig::default()).unwrap();
            let exact_rate = -p * (a + 0.5 * (p - 1.0) * b * b);
            if exact_rate > 0.0 {
                assert_relative_eq!(0.5 * r.lambda * p, exact_rate, max_relative = 1e-12);
            }
        }
    }
}
