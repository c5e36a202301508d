//! Green functions of the mixed boundary-value problem on the unit cube and
//! their use in testing multivariate independence.
//!
//! The pieces, bottom up:
//!
//! - [`set_family`]: subsets of `{1..m}` as bitmasks and upward-closed families.
//! - [`quadrature`]: Gauss–Legendre rules, composite and tensor.
//! - [`green_kernel`]: integer coefficients `a_U` and the kernel
//!   `G(x, ξ) = ∏ min(x_j, ξ_j) − Σ_U a_U ∏_{j∉U} min(x_j, ξ_j) ∏_{j∈U} x_j ξ_j`.
//! - [`measure`]: the measure of the extremal problem and kernel integrals against it.
//! - [`extremal`]: the minimizer `Ω`, efficiency indices, Fisher information and
//!   the principal eigenvalue of the covariance operator.
//! - [`statistics`]: rank statistics and empirical processes on datasets.
//! - [`montecarlo`]: seeded, thread-count-independent simulation harness.

pub mod error;
pub mod extremal;
pub mod green_kernel;
pub mod measure;
pub mod montecarlo;
pub mod quadrature;
pub mod set_family;
pub mod statistics;

pub use error::{Error, Result};
pub use extremal::{DependenceFunction, ExtremalSolution};
pub use green_kernel::{CubePoint, GreenKernel};
pub use measure::MeasureSpec;
pub use set_family::{MonotoneFamily, SubsetMask};
pub use statistics::{Dataset, RankMatrix};

/// A real-valued function on the unit cube.
pub trait CubeFunction: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F> CubeFunction for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}
