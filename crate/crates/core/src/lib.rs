//! Visit-count statistics for cylinder sets of mixing shift spaces.
//!
//! The library computes, exactly and by simulation, the distribution of the
//! number of visits an orbit pays to a shrinking cylinder neighborhood of a
//! periodic point, and provides the Pólya-Aeppli (geometric compound
//! Poisson) limit laws these distributions converge to, together with
//! evaluators for the associated error-bound shapes and the hit-pattern
//! combinatorics behind them.
//!
//! Module map:
//! - [`dist`]: closed-form entry/return laws, sampling, and the
//!   entry/return integral relation.
//! - [`symbolic`]: shift systems, Bernoulli/Markov measures, cylinders,
//!   and the exact cluster parameter.
//! - [`counting`]: the exact automaton-DP count engine, a brute-force
//!   enumeration oracle, and Monte Carlo estimation.
//! - [`patterns`]: hit-pattern taxonomy, class-counting bounds, and the
//!   cluster-factorization verifier.
//! - [`bounds`]: bound-shape evaluators and convergence-rate fitting.
//! - [`stats`]: chi-square goodness of fit.

pub mod bounds;
pub mod counting;
pub mod dist;
pub mod error;
mod numeric;
pub mod patterns;
pub mod stats;
pub mod symbolic;

pub use counting::{DpBudget, PatternAutomaton};
pub use dist::{CountDistribution, CountParams, DistParams, Kind, Provenance};
pub use error::{Error, Result};
pub use symbolic::{
    CylinderTarget, Measure, MixingRate, MixingSpec, PairFamily, SeparationFn, ShiftSystem, Symbol,
};
