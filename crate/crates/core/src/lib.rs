//! Numerical toolkit for the one-dimensional higher-order phase-transition energy
//!
//! ```text
//! G[u] = ∫_I W(u)/ε − λ ε^{2n−3} (u^{(n−1)})² + ε^{2n−1} (u^{(n)})² dx
//! ```
//!
//! The crate covers evaluation and minimization of the discrete energy, the
//! scale-invariant interpolation quotient whose infimum is the critical
//! constant `λ_n`, optimal transition profiles and their energies, the
//! Hermite coupling polynomials that glue a diffuse profile to a pure phase,
//! recovery sequences for jump functions, and numerical checkers for the
//! interpolation inequalities the theory rests on.
//!
//! Everything is discretized on uniform grids with high-order finite
//! difference stencils; the discrete energy is a quadrature of stencil
//! outputs and all gradients are exact adjoints of that composition.

pub mod critical;
pub mod discretization;
pub mod energy;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod hermite;
pub mod inequalities;
pub mod io;
pub mod optimize;
pub mod potential;
pub mod profile;

pub use discretization::{DiffOperator, Field, Grid, Quadrature};
pub use energy::{EnergyBreakdown, EnergyModel, EnergyParams};
pub use error::{Error, Result};
pub use potential::DoubleWell;
