//! Coefficient systems and the simulation grid.
//!
//! A system is the quadruple of maps (f, g, u1, u2): `f` and `u1` feed the
//! drift, `g` and `u2` the diffusion, and the `u` maps see the state frozen
//! at the last multiple of the delay `tau`. All four maps must vanish at the
//! origin and share a global Lipschitz constant `K`; construction certifies
//! both so the rest of the crate can rely on them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance for the vanish-at-origin check.
const ORIGIN_TOL: f64 = 1e-14;

/// Scalar coefficient maps with a certified global slope bound.
///
/// Restricting nonlinearities to this catalogue keeps the Lipschitz
/// constant checkable; arbitrary callables are rejected by design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarMap {
    /// x -> 0
    Zero,
    /// x -> a*x
    Linear(f64),
    /// x -> amp * sin(freq * x), slope bound |amp*freq|
    Sin { amp: f64, freq: f64 },
    /// x -> amp * tanh(freq * x), slope bound |amp*freq|
    Tanh { amp: f64, freq: f64 },
}

impl ScalarMap {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ScalarMap::Zero => 0.0,
            ScalarMap::Linear(a) => a * x,
            ScalarMap::Sin { amp, freq } => amp * (freq * x).sin(),
            ScalarMap::Tanh { amp, freq } => amp * (freq * x).tanh(),
        }
    }

    /// Global Lipschitz constant of the map (the slope bound).
    pub fn slope_bound(&self) -> f64 {
        match *self {
            ScalarMap::Zero => 0.0,
            ScalarMap::Linear(a) => a.abs(),
            ScalarMap::Sin { amp, freq } | ScalarMap::Tanh { amp, freq } => (amp * freq).abs(),
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            ScalarMap::Zero => true,
            ScalarMap::Linear(a) => a.is_finite(),
            ScalarMap::Sin { amp, freq } | ScalarMap::Tanh { amp, freq } => {
                amp.is_finite() && freq.is_finite()
            }
        }
    }
}

/// The coefficient data behind a [`SystemSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientKind {
    /// f(x) = A x, g(x) has columns B_i x, u1(x) = C x, u2(x) has columns D_i x.
    Linear {
        a: DMatrix<f64>,
        bs: Vec<DMatrix<f64>>,
        c: DMatrix<f64>,
        ds: Vec<DMatrix<f64>>,
    },
    /// Scalar state, one Brownian component, maps from the bounded-slope catalogue.
    ScalarNonlinear {
        f: ScalarMap,
        g: ScalarMap,
        u1: ScalarMap,
        u2: ScalarMap,
    },
}

/// An immutable coefficient system together with its certified Lipschitz
/// constant. Safe to share across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    d: usize,
    m_bm: usize,
    kind: CoefficientKind,
    k_lip: f64,
}

impl SystemSpec {
    /// Build a linear system from the drift matrix `a`, diffusion matrices
    /// `bs` (one per Brownian component), delayed-drift matrix `c` and
    /// delayed-diffusion matrices `ds`.
    pub fn linear(
        a: DMatrix<f64>,
        bs: Vec<DMatrix<f64>>,
        c: DMatrix<f64>,
        ds: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let d = a.nrows();
        if d == 0 {
            return Err(Error::Validation("state dimension must be >= 1".into()));
        }
        if bs.is_empty() {
            return Err(Error::Validation(
                "need at least one diffusion matrix (m_bm >= 1)".into(),
            ));
        }
        if bs.len() != ds.len() {
            return Err(Error::Shape(format!(
                "diffusion matrix counts differ: {} B's vs {} D's",
                bs.len(),
                ds.len()
            )));
        }
        let named = [("A", &a), ("C", &c)]
            .into_iter()
            .chain(bs.iter().map(|m| ("B", m)))
            .chain(ds.iter().map(|m| ("D", m)));
        for (name, m) in named {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Shape(format!(
                    "matrix {} must be {d}x{d}, got {}x{}",
                    name,
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("matrix {name} has a nonfinite entry")));
            }
        }
        let m_bm = bs.len();
        let mut spec = SystemSpec {
            d,
            m_bm,
            kind: CoefficientKind::Linear { a, bs, c, ds },
            k_lip: 0.0,
        };
        spec.k_lip = spec.lipschitz_bound();
        spec.check_origin()?;
        Ok(spec)
    }

    /// Scalar linear system dx = (a x + c x_delayed) dt + (b x + d x_delayed) dw.
    pub fn scalar_linear(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let one = |v: f64| DMatrix::from_row_slice(1, 1, &[v]);
        Self::linear(one(a), vec![one(b)], one(c), vec![one(d)])
    }

    /// Scalar system with catalogue maps (state dimension 1, one Brownian
    /// component).
    pub fn scalar_nonlinear(
        f: ScalarMap,
        g: ScalarMap,
        u1: ScalarMap,
        u2: ScalarMap,
    ) -> Result<Self> {
        for (name, m) in [("f", &f), ("g", &g), ("u1", &u1), ("u2", &u2)] {
            if !m.is_finite() {
                return Err(Error::Validation(format!("map {name} has a nonfinite parameter")));
            }
        }
        let mut spec = SystemSpec {
            d: 1,
            m_bm: 1,
            kind: CoefficientKind::ScalarNonlinear { f, g, u1, u2 },
            k_lip: 0.0,
        };
        spec.k_lip = spec.lipschitz_bound();
        spec.check_origin()?;
        Ok(spec)
    }

    fn check_origin(&self) -> Result<()> {
        let zero = DVector::zeros(self.d);
        let (drift, diffusion) = self.eval_coefficients(&zero, &zero)?;
        if drift.norm() > ORIGIN_TOL || diffusion.norm() > ORIGIN_TOL {
            return Err(Error::Validation(
                "coefficient maps do not vanish at the origin".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of Brownian components.
    pub fn brownian_dim(&self) -> usize {
        self.m_bm
    }

    pub fn kind(&self) -> &CoefficientKind {
        &self.kind
    }

    /// The certified common Lipschitz constant.
    pub fn k_lip(&self) -> f64 {
        self.k_lip
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, CoefficientKind::Linear { .. })
    }

    /// The smallest K this artifact certifies for all four maps.
    ///
    /// Linear systems: max of the spectral norms of A and C and of the
    /// column-wise bounds sqrt(sum_i ||B_i||_2^2), sqrt(sum_i ||D_i||_2^2)
    /// (the diffusion maps are measured in the Frobenius norm, for which the
    /// column-wise spectral bound is an upper Lipschitz estimate, exact in
    /// the scalar case). Catalogue systems: max of the four slope bounds.
    pub fn lipschitz_bound(&self) -> f64 {
        match &self.kind {
            CoefficientKind::Linear { a, bs, c, ds } => {
                let col_bound = |ms: &Vec<DMatrix<f64>>| {
                    ms.iter()
                        .map(|m| spectral_norm(m).powi(2))
                        .sum::<f64>()
                        .sqrt()
                };
                spectral_norm(a)
                    .max(spectral_norm(c))
                    .max(col_bound(bs))
                    .max(col_bound(ds))
            }
            CoefficientKind::ScalarNonlinear { f, g, u1, u2 } => f
                .slope_bound()
                .max(g.slope_bound())
                .max(u1.slope_bound())
                .max(u2.slope_bound()),
        }
    }

    /// Evaluate drift = f(x) + u1(x_delayed) and diffusion = g(x) + u2(x_delayed)
    /// (a d x m_bm matrix).
    pub fn eval_coefficients(
        &self,
        x: &DVector<f64>,
        x_delayed: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if x.len() != self.d || x_delayed.len() != self.d {
            return Err(Error::Shape(format!(
                "state vectors must have length {}, got {} and {}",
                self.d,
                x.len(),
                x_delayed.len()
            )));
        }
        let mut drift = DVector::zeros(self.d);
        self.drift_into(x, x_delayed, &mut drift);
        let mut diffusion = DMatrix::zeros(self.d, self.m_bm);
        let mut col = DVector::zeros(self.d);
        for i in 0..self.m_bm {
            self.diffusion_column_into(i, x, x_delayed, &mut col);
            diffusion.set_column(i, &col);
        }
        Ok((drift, diffusion))
    }

    /// out = f(x) + u1(x_delayed). Allocation-free; used by the integrator loop.
    pub(crate) fn drift_into(&self, x: &DVector<f64>, x_delayed: &DVector<f64>, out: &mut DVector<f64>) {
        match &self.kind {
            CoefficientKind::Linear { a, c, .. } => {
                out.gemv(1.0, a, x, 0.0);
                out.gemv(1.0, c, x_delayed, 1.0);
            }
            CoefficientKind::ScalarNonlinear { f, u1, .. } => {
                out[0] = f.eval(x[0]) + u1.eval(x_delayed[0]);
            }
        }
    }

    /// out = column i of g(x) + u2(x_delayed). Allocation-free.
    pub(crate) fn diffusion_column_into(
        &self,
        i: usize,
        x: &DVector<f64>,
        x_delayed: &DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        match &self.kind {
            CoefficientKind::Linear { bs, ds, .. } => {
                out.gemv(1.0, &bs[i], x, 0.0);
                out.gemv(1.0, &ds[i], x_delayed, 1.0);
            }
            CoefficientKind::ScalarNonlinear { g, u2, .. } => {
                out[0] = g.eval(x[0]) + u2.eval(x_delayed[0]);
            }
        }
    }

    /// For scalar linear systems, the (a, b, c, d) coefficients.
    pub fn scalar_linear_coeffs(&self) -> Option<(f64, f64, f64, f64)> {
        match &self.kind {
            CoefficientKind::Linear { a, bs, c, ds } if self.d == 1 && self.m_bm == 1 => {
                Some((a[(0, 0)], bs[0][(0, 0)], c[(0, 0)], ds[0][(0, 0)]))
            }
            _ => None,
        }
    }
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    let svd = m.clone().svd(false, false);
    svd.singular_values.max()
}

/// The simulation grid: delay `tau`, `m_sub` substeps per delay interval
/// (so h = tau / m_sub) and a horizon rounded up to whole delay intervals,
/// because the certificates all operate on block boundaries k*tau.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    tau: f64,
    m_sub: usize,
    n_blocks: usize,
}

impl GridSpec {
    pub fn new(tau: f64, m_sub: usize, horizon: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Validation(format!("tau must be positive, got {tau}")));
        }
        if m_sub == 0 {
            return Err(Error::Validation("m_sub must be >= 1".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Validation(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        // Round up to a whole number of blocks, forgiving ~1e-9 of float slack
        // so horizon = k*tau stays at k blocks.
        let ratio = horizon / tau;
        let n_blocks = (ratio - 1e-9).ceil().max(1.0);
        if n_blocks > 1e15 {
            return Err(Error::Validation(format!(
                "grid too fine: horizon/tau = {ratio:.3e} blocks"
            )));
        }
        Ok(GridSpec {
            tau,
            m_sub,
            n_blocks: n_blocks as usize,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn m_sub(&self) -> usize {
        self.m_sub
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// Step size h = tau / m_sub, derived on demand.
    pub fn h(&self) -> f64 {
        self.tau / self.m_sub as f64
    }

    /// Number of steps to the (rounded) horizon; the grid has n_steps + 1 points.
    pub fn n_steps(&self) -> usize {
        self.n_blocks * self.m_sub
    }

    /// Effective horizon after rounding: n_blocks * tau.
    pub fn horizon(&self) -> f64 {
        self.n_blocks as f64 * self.tau
    }

    /// Grid time t_n = n * h.
    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.h()
    }

    /// Decompose n = k * m_sub + l with 0 <= l < m_sub.
    pub fn block_offset(&self, n: usize) -> (usize, usize) {
        (n / self.m_sub, n % self.m_sub)
    }

    /// Index of the block start for step n: (n / m_sub) * m_sub.
    pub fn block_start(&self, n: usize) -> usize {
        (n / self.m_sub) * self.m_sub
    }
}
