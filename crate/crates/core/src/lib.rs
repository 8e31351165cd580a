//! Simulation and stability toolkit for stochastic differential equations
//! with piecewise-constant delay arguments.
//!
//! The crate covers four coupled dynamical systems — a plain SDE, its
//! delayed variant where the delay argument is frozen on blocks of length
//! `tau`, and the explicit one-step schemes of both — and three kinds of
//! evidence about their pth-moment exponential stability:
//!
//! * reproducible Monte Carlo estimation of E|X(t)|^p with confidence bands
//!   ([`paths`], [`integrators`], [`moments`]),
//! * exact moment oracles for scalar linear systems ([`moments`]),
//! * explicit decay-transfer certificates between the four systems and a
//!   drift-criterion margin test, all evaluated in overflow-safe log
//!   arithmetic ([`certificates`], [`lyapunov`]).
//!
//! The `emstab` binary drives everything from flat config files and writes
//! deterministic CSV reports; see the crate README.

pub mod certificates;
pub mod config;
pub mod error;
pub mod experiment;
pub mod integrators;
pub mod logspace;
pub mod lyapunov;
pub mod model;
pub mod moments;
pub mod paths;
pub mod report;

pub use error::{Error, Result};
