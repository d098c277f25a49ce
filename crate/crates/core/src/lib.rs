//! Margin-adaptive model selection on finite-support problems.
//!
//! Every population quantity (risks, variances, minimal sets, diameters) is
//! an exact sum over a finite domain, so the "truth" side of each oracle
//! inequality is computed without estimation error. The only Monte Carlo
//! population quantity is the expected modulus of continuity of the
//! empirical process, which carries its standard error.
//!
//! Module map:
//!
//! - [`domain`]: atoms, distributions, loss functions, models, samples and
//!   the exact population/empirical functionals.
//! - [`margin`]: margin functions and their convex conjugates.
//! - [`distributions`]: the two-point counterexample and the margin-gap
//!   sequence.
//! - [`classes`]: model families (singletons, prefix chains, thresholds,
//!   dyadic histograms).
//! - [`erm`]: empirical minimization and minimal-set geometry.
//! - [`complexity`]: `U`-functionals, fixed points, Bernstein radius,
//!   assumption checks.
//! - [`selection`]: penalized selection and oracle right-hand sides.
//! - [`binomial`]: accurate binomial pmf and the pmf floor scan.
//! - [`harness`]: seeded Monte Carlo experiments and result records.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these guards

pub mod binomial;
pub mod classes;
pub mod complexity;
pub mod distributions;
pub mod domain;
pub mod erm;
mod error;
pub mod harness;
pub mod margin;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};

/// Tolerance used for every inequality check between computed quantities.
pub const CHECK_TOL: f64 = 1e-10;

/// Tolerance used for minimal-set membership comparisons.
pub const MEMBERSHIP_TOL: f64 = 1e-12;
