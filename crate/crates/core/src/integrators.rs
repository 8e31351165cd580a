//! The four discrete/continuous dynamical systems: explicit one-step schemes
//! for the plain equation and the delayed equation, plus an exact sampler for
//! the scalar linear case used as a ground-truth oracle.
//!
//! Both explicit schemes run through one stepping kernel that differs only in
//! which past state feeds the delayed maps, so the documented coincidences
//! (no delay maps, or one substep per delay interval) hold bitwise.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{GridSpec, SystemSpec};
use crate::paths::IncrementTable;

/// A state beyond this norm aborts the path with [`Error::Diverged`] so that
/// unstable parameter scans terminate cleanly instead of spreading infinities.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Which dynamical system produced a trajectory / moment estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Explicit scheme for the plain equation: the delayed maps see the
    /// current state.
    EmSde,
    /// Explicit scheme for the delayed equation: the delayed maps see the
    /// state frozen at the enclosing block start.
    EmSdepca,
    /// Exact sampler for the scalar linear plain equation (geometric
    /// Brownian motion), exact in distribution at grid points.
    ExactGbm,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::EmSde => "em-sde",
            Scheme::EmSdepca => "em-sdepca",
            Scheme::ExactGbm => "exact-gbm",
        }
    }
}

/// A discrete sample path on the grid; `states[n]` approximates the state at
/// t_n = n*h and `states[0]` is the initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: GridSpec,
    scheme: Scheme,
    states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn state(&self, n: usize) -> &DVector<f64> {
        &self.states[n]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.states.len()).map(|n| self.grid.t(n))
    }
}

fn validate_inputs(
    spec: &SystemSpec,
    x0: &DVector<f64>,
    grid: &GridSpec,
    increments: &IncrementTable,
) -> Result<()> {
    if x0.len() != spec.dim() {
        return Err(Error::Shape(format!(
            "x0 has length {}, system dimension is {}",
            x0.len(),
            spec.dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("x0 has a nonfinite component".into()));
    }
    if increments.m_bm() != spec.brownian_dim() {
        return Err(Error::Shape(format!(
            "increment table has {} components, system has {}",
            increments.m_bm(),
            spec.brownian_dim()
        )));
    }
    if increments.n_steps() < grid.n_steps() {
        return Err(Error::Shape(format!(
            "increment table has {} steps, grid needs {}",
            increments.n_steps(),
            grid.n_steps()
        )));
    }
    let rel = (increments.h() - grid.h()).abs() / grid.h();
    if rel > 1e-9 {
        return Err(Error::Validation(format!(
            "increment step {} does not match grid step {}",
            increments.h(),
            grid.h()
        )));
    }
    Ok(())
}

/// Run the explicit scheme, stopping at the first nonfinite or oversized
/// state. Returns the states produced so far (always including x0) and the
/// index of the first bad step, if any.
pub(crate) fn integrate_partial(
    spec: &SystemSpec,
    x0: &DVector<f64>,
    grid: &GridSpec,
    increments: &IncrementTable,
    delayed_is_block_start: bool,
) -> Result<(Vec<DVector<f64>>, Option<usize>)> {
    validate_inputs(spec, x0, grid, increments)?;
    let d = spec.dim();
    let h = grid.h();
    let n_steps = grid.n_steps();
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0.clone());
    let mut next = DVector::zeros(d);
    let mut coeff = DVector::zeros(d);
    for n in 0..n_steps {
        let delayed_idx = if delayed_is_block_start {
            grid.block_start(n)
        } else {
            n
        };
        {
            let x = &states[n];
            let xd = &states[delayed_idx];
            next.copy_from(x);
            spec.drift_into(x, xd, &mut coeff);
            next.axpy(h, &coeff, 1.0);
            let dw = increments.step(n);
            for i in 0..spec.brownian_dim() {
                spec.diffusion_column_into(i, x, xd, &mut coeff);
                next.axpy(dw[i], &coeff, 1.0);
            }
        }
        if next.iter().any(|v| !v.is_finite()) || next.norm() > DIVERGENCE_THRESHOLD {
            return Ok((states, Some(n + 1)));
        }
        states.push(next.clone());
    }
    Ok((states, None))
}

/// Explicit one-step path for the plain equation:
/// X_{n+1} = X_n + (f(X_n)+u1(X_n)) h + (g(X_n)+u2(X_n)) dW_n.
pub fn em_sde_path(
    spec: &SystemSpec,
    x0: &DVector<f64>,
    grid: &GridSpec,
    increments: &IncrementTable,
) -> Result<Trajectory> {
    let (states, diverged) = integrate_partial(spec, x0, grid, increments, false)?;
    match diverged {
        Some(step) => Err(Error::Diverged { step }),
        None => Ok(Trajectory {
            grid: *grid,
            scheme: Scheme::EmSde,
            states,
        }),
    }
}

/// Explicit one-step path for the delayed equation: the delayed maps are
/// frozen at the enclosing block start,
/// X_{n+1} = X_n + (f(X_n)+u1(X_{block(n)})) h + (g(X_n)+u2(X_{block(n)})) dW_n.
///
/// With one substep per delay interval this is the same arithmetic as
/// [`em_sde_path`], hence bitwise identical output.
pub fn em_sdepca_path(
    spec: &SystemSpec,
    x0: &DVector<f64>,
    grid: &GridSpec,
    increments: &IncrementTable,
) -> Result<Trajectory> {
    let (states, diverged) = integrate_partial(spec, x0, grid, increments, true)?;
    match diverged {
        Some(step) => Err(Error::Diverged { step }),
        None => Ok(Trajectory {
            grid: *grid,
            scheme: Scheme::EmSdepca,
            states,
        }),
    }
}

/// Exact sampler for dy = alpha*y dt + beta*y dw at the grid points, driven
/// by the same increments as the discrete schemes:
/// y(t_n) = x0 * exp((alpha - beta^2/2) t_n + beta W(t_n)).
pub fn gbm_exact_path(
    alpha: f64,
    beta: f64,
    x0: f64,
    grid: &GridSpec,
    increments: &IncrementTable,
) -> Result<Trajectory> {
    for (name, v) in [("alpha", alpha), ("beta", beta), ("x0", x0)] {
        if !v.is_finite() {
            return Err(Error::Validation(format!("{name} must be finite")));
        }
    }
    if increments.m_bm() != 1 {
        return Err(Error::Shape(
            "exact sampler needs a one-component increment table".into(),
        ));
    }
    if increments.n_steps() < grid.n_steps() {
        return Err(Error::Shape(format!(
            "increment table has {} steps, grid needs {}",
            increments.n_steps(),
            grid.n_steps()
        )));
    }
    let (states, diverged) = gbm_exact_partial(alpha, beta, x0, grid, increments);
    match diverged {
        Some(step) => Err(Error::Diverged { step }),
        None => Ok(Trajectory {
            grid: *grid,
            scheme: Scheme::ExactGbm,
            states,
        }),
    }
}

pub(crate) fn gbm_exact_partial(
    alpha: f64,
    beta: f64,
    x0: f64,
    grid: &GridSpec,
    increments: &IncrementTable,
) -> (Vec<DVector<f64>>, Option<usize>) {
    let drift = alpha - 0.5 * beta * beta;
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    states.push(DVector::from_vec(vec![x0]));
    let mut w = 0.0;
    for n in 0..grid.n_steps() {
        w += increments.step(n)[0];
        let t = grid.t(n + 1);
        let y = x0 * (drift * t + beta * w).exp();
        if !y.is_finite() || y.abs() > DIVERGENCE_THRESHOLD {
            return (states, Some(n + 1));
        }
        states.push(DVector::from_vec(vec![y]));
    }
    (states, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemSpec;
    use crate::paths::{generate_increments, IncrementPlan, IncrementTable};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn zero_increments(n_steps: usize, m_bm: usize, h: f64) -> IncrementTable {
        IncrementTable::from_values(n_steps, m_bm, h, vec![0.0; n_steps * m_bm]).unwrap()
    }

    fn scalar_x0(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    #[test]
    fn origin_is_equilibrium_for_every_scheme() {
        let spec = SystemSpec::scalar_linear(-1.0, 0.5, 0.2, 0.1).unwrap();
        let grid = GridSpec::new(0.5, 4, 2.0).unwrap();
        let plan = IncrementPlan { seed: 3, path_id: 0, n_steps: grid.n_steps(), h: grid.h(), m_bm: 1 };
        let incs = generate_increments(&plan).unwrap();
        for traj in [
            em_sde_path(&spec, &scalar_x0(0.0), &grid, &incs).unwrap(),
            em_sdepca_path(&spec, &scalar_x0(0.0), &grid, &incs).unwrap(),
            gbm_exact_path(-0.8, 0.6, 0.0, &grid, &incs).unwrap(),
        ] {
            assert!(traj.states().iter().all(|s| s.norm() == 0.0));
        }
    }

    #[test]
    fn one_step_hand_evaluation() {
        let spec = SystemSpec::scalar_linear(-1.0, 0.5, 0.0, 0.0).unwrap();
        let grid = GridSpec::new(0.1, 1, 0.1).unwrap();
        let incs = IncrementTable::from_values(1, 1, 0.1, vec![0.2]).unwrap();
        let traj = em_sde_path(&spec, &scalar_x0(1.0), &grid, &incs).unwrap();
        // 1 + (-1)(0.1) + 0.5*0.2 = 1.0
        assert_relative_eq!(traj.state(1)[0], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn zero_diffusion_matches_deterministic_euler() {
        let spec = SystemSpec::scalar_linear(-1.0, 0.0, 0.0, 0.0).unwrap();
        let grid = GridSpec::new(0.1, 1, 4.0).unwrap();
        let incs = zero_increments(grid.n_steps(), 1, grid.h());
        let traj = em_sde_path(&spec, &scalar_x0(1.0), &grid, &incs).unwrap();
        for n in 0..=grid.n_steps() {
            let expected = (1.0 - grid.h()).powi(n as i32);
            assert_relative_eq!(traj.state(n)[0], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn delayed_argument_frozen_within_block() {
        // pure delayed drift: X_{n+1} = X_n - h * X_{block(n)}
        let spec = SystemSpec::scalar_linear(0.0, 0.0, -1.0, 0.0).unwrap();
        let grid = GridSpec::new(1.0, 2, 1.0).unwrap();
        let incs = zero_increments(grid.n_steps(), 1, grid.h());
        let traj = em_sdepca_path(&spec, &scalar_x0(1.0), &grid, &incs).unwrap();
        assert_relative_eq!(traj.state(1)[0], 0.5, max_relative = 1e-15);
        assert_relative_eq!(traj.state(2)[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn schemes_coincide_bitwise_without_delay_maps() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.2, -0.7]);
        let b = DMatrix::from_row_slice(2, 2, &[0.4, 0.0, 0.1, 0.3]);
        let z = DMatrix::from_row_slice(2, 2, &[0.0; 4]);
        let spec = SystemSpec::linear(a, vec![b], z.clone(), vec![z]).unwrap();
        let grid = GridSpec::new(0.4, 4, 2.0).unwrap();
        let plan = IncrementPlan { seed: 11, path_id: 5, n_steps: grid.n_steps(), h: grid.h(), m_bm: 1 };
        let incs = generate_increments(&plan).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let sde = em_sde_path(&spec, &x0, &grid, &incs).unwrap();
        let pca = em_sdepca_path(&spec, &x0, &grid, &incs).unwrap();
        for (u, v) in sde.states().iter().zip(pca.states()) {
            for (a, b) in u.iter().zip(v.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn schemes_coincide_bitwise_with_one_substep() {
        let spec = SystemSpec::scalar_linear(-1.0, 0.5, 0.2, 0.1).unwrap();
        let grid = GridSpec::new(0.25, 1, 2.0).unwrap();
        let plan = IncrementPlan { seed: 7, path_id: 9, n_steps: grid.n_steps(), h: grid.h(), m_bm: 1 };
        let incs = generate_increments(&plan).unwrap();
        let sde = em_sde_path(&spec, &scalar_x0(0.7), &grid, &incs).unwrap();
        let pca = em_sdepca_path(&spec, &scalar_x0(0.7), &grid, &incs).unwrap();
        for (u, v) in sde.states().iter().zip(pca.states()) {
            assert_eq!(u[0].to_bits(), v[0].to_bits());
        }
    }

    #[test]
    fn linear_paths_scale_linearly_in_x0() {
        let spec = SystemSpec::scalar_linear(-1.0, 0.5, 0.2, 0.1).unwrap();
        let grid = GridSpec::new(0.5, 5, 3.0).unwrap();
        let plan = IncrementPlan { seed: 21, path_id: 2, n_steps: grid.n_steps(), h: grid.h(), m_bm: 1 };
        let incs = generate_increments(&plan).unwrap();
        let base = em_sdepca_path(&spec, &scalar_x0(1.0), &grid, &incs).unwrap();
        let scaled = em_sdepca_path(&spec, &scalar_x0(-3.5), &grid, &incs).unwrap();
        for (u, v) in base.states().iter().zip(scaled.states()) {
            assert_relative_eq!(-3.5 * u[0], v[0], max_relative = 1e-10);
        }
    }

    #[test]
    fn divergence_reports_first_bad_step() {
        // deterministic blowup: X_{n+1} = 6 X_n crosses 1e12 at step 16
        let spec = SystemSpec::scalar_linear(5.0, 0.0, 0.0, 0.0).unwrap();
        let grid = GridSpec::new(1.0, 1, 20.0).unwrap();
        let incs = zero_increments(grid.n_steps(), 1, grid.h());
        match em_sde_path(&spec, &scalar_x0(1.0), &grid, &incs) {
            Err(Error::Diverged { step }) => assert_eq!(step, 16),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn gbm_exact_degenerate_cases() {
        let grid = GridSpec::new(0.5, 8, 2.0).unwrap();
        let incs = {
            let plan = IncrementPlan { seed: 1, path_id: 0, n_steps: grid.n_steps(), h: grid.h(), m_bm: 1 };
            generate_increments(&plan).unwrap()
        };
        // beta = 0: deterministic exponential regardless of the noise
        let traj = gbm_exact_path(-0.7, 0.0, 2.0, &grid, &incs).unwrap();
        for (n, s) in traj.states().iter().enumerate() {
            assert_relative_eq!(s[0], 2.0 * (-0.7 * grid.t(n)).exp(), max_relative = 1e-13);
        }
        // alpha = beta = 0: constant path
        let traj = gbm_exact_path(0.0, 0.0, 3.0, &grid, &incs).unwrap();
        assert!(traj.states().iter().all(|s| s[0] == 3.0));
    }

    #[test]
    fn strong_error_halves_per_refinement() {
        // two-level ratio check for the pathwise error against the exact
        // sampler; the full slope study lives in the acceptance suite
        let (alpha, beta, x0) = (-1.0, 0.5, 1.0);
        let spec = SystemSpec::scalar_linear(alpha, beta, 0.0, 0.0).unwrap();
        let n_paths = 4000u64;
        let mut mse = [0.0, 0.0];
        for (lvl, m) in [32usize, 64].iter().enumerate() {
            let grid = GridSpec::new(1.0, *m, 1.0).unwrap();
            for path in 0..n_paths {
                let plan = IncrementPlan { seed: 77, path_id: path, n_steps: 64, h: 1.0 / 64.0, m_bm: 1 };
                let fine = generate_increments(&plan).unwrap();
                let incs = crate::paths::aggregate_increments(&fine, 64 / m).unwrap();
                let em = em_sde_path(&spec, &scalar_x0(x0), &grid, &incs).unwrap();
                let exact = gbm_exact_path(alpha, beta, x0, &grid, &incs).unwrap();
                let e = em.state(grid.n_steps())[0] - exact.state(grid.n_steps())[0];
                mse[lvl] += e * e;
            }
        }
        let ratio = mse[0] / mse[1]; // expect ~2 for strong order 1/2
        assert!(
            ratio > 1.5 && ratio < 2.7,
            "mean-square error ratio {ratio} not consistent with order 1/2"
        );
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let spec = SystemSpec::scalar_linear(-1.0, 0.5, 0.0, 0.0).unwrap();
        let grid = GridSpec::new(0.5, 2, 1.0).unwrap();
        let incs = zero_increments(1, 1, grid.h()); // too short
        assert!(matches!(
            em_sde_path(&spec, &scalar_x0(1.0), &grid, &incs),
            Err(Error::Shape(_))
        ));
        let incs = zero_increments(grid.n_steps(), 2, grid.h()); // wrong m_bm
        assert!(matches!(
            em_sde_path(&spec, &scalar_x0(1.0), &grid, &incs),
            Err(Error::Shape(_))
        ));
        let incs = zero_increments(grid.n_steps(), 1, 0.1); // wrong h
        assert!(matches!(
            em_sde_path(&spec, &scalar_x0(1.0), &grid, &incs),
            Err(Error::Validation(_))
        ));
    }
}
