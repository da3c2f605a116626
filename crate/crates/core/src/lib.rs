//! Goodness-of-fit tests for diffusion processes observed with small noise.
//!
//! The observed process is `dX = S₀(X) dt + ε σ(X) dW` on `[0, T]`; as
//! `ε → 0` it concentrates on the solution of `ẋ = S₀(x)`. The crate
//! simulates such models, computes the Cramér–von Mises, Kolmogorov–Smirnov,
//! chi-square, local-time, Kalman–Bucy and composite-null statistics, and
//! calibrates them against their Brownian limit laws.

pub mod chisq;
pub mod coeff;
pub mod composite;
pub mod error;
pub mod gof_core;
pub mod kalman;
pub mod localtime;
pub mod mc;
pub mod power;
pub mod quad;
pub mod refdist;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use coeff::{validate_model, CoefficientFn, ModelSpec, ValidationReport};
pub use error::{Error, Result};
pub use gof_core::{Statistic, TestReport};
pub use refdist::{Distribution, QuantileTable};
pub use simulate::{LimitPath, TimeGrid, Trajectory};
