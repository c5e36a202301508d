//! The extremal problem: minimize `∫ (∂^m Ω)² dx` subject to `∫ Ω dμ = 1`
//! and the boundary conditions of a monotone family.
//!
//! The minimizer is `Ω(x) = λ⁻¹ ∫ G(x, ξ) dμ(ξ)` with `λ = ∬ G dμ dμ`, and the
//! minimal value is `1/λ`. The same `1/λ` is the coefficient of the local
//! Bahadur index of the statistics that `μ` encodes, so this module also
//! hosts the efficiency indices, the Fisher information of a dependence
//! function and the optimality gap between the two.

mod dependence;
mod efficiency;
mod eigen;

use std::sync::Arc;

use serde::Serialize;

pub use dependence::DependenceFunction;
pub use efficiency::{
    bahadur_slope_b1, efficiency_coefficient, integral_over_cube, pitman_slope_bhat,
    pitman_slope_spearman, SpearmanPitman,
};
pub use eigen::{principal_eigenvalue, principal_eigenvalue_report, EigenReport, MAX_NYSTROM_NODES};

use crate::error::{Error, Result};
use crate::green_kernel::{CubePoint, GreenKernel};
use crate::measure::{self, cube_rule, MeasureSpec};
use crate::quadrature::cube_integrate;
use crate::set_family::MonotoneFamily;
use crate::CubeFunction;

/// Step of the central differences used when no closed-form density is
/// available.
pub const FD_STEP: f64 = 1e-3;

/// Minimizer of the extremal problem for one family and measure.
#[derive(Clone, Debug)]
pub struct ExtremalSolution {
    kernel: Arc<GreenKernel>,
    measure: Arc<MeasureSpec>,
    lambda: f64,
}

/// Solves the extremal problem; fails if `λ` is not positive, which happens
/// when `μ` lives where the kernel vanishes.
pub fn solve(family: &MonotoneFamily, mu: &MeasureSpec) -> Result<ExtremalSolution> {
    let kernel = GreenKernel::new(family);
    let lambda = measure::lambda(&kernel, mu)?;
    let mass = mu.total_mass();
    if !lambda.is_finite() || lambda <= 1e-15 * mass * mass {
        return Err(Error::DegenerateLambda(lambda));
    }
    Ok(ExtremalSolution { kernel: Arc::new(kernel), measure: Arc::new(mu.clone()), lambda })
}

impl ExtremalSolution {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> &GreenKernel {
        &self.kernel
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn omega(&self, x: &CubePoint) -> Result<f64> {
        Ok(measure::integrate_kernel_once(&self.kernel, &self.measure, x)? / self.lambda)
    }

    /// Unchecked `Ω(x)`.
    pub fn omega_raw(&self, x: &[f64]) -> f64 {
        measure::integrate_kernel_once_raw(&self.kernel, &self.measure, x) / self.lambda
    }

    /// `∂^m Ω / ∂x₁…∂x_m`, exact.
    pub fn omega_mixed_derivative(&self, x: &CubePoint) -> Result<f64> {
        Ok(measure::integrate_kernel_mixed_derivative_once(&self.kernel, &self.measure, x)? / self.lambda)
    }

    fn mixed_derivative_raw(&self, x: &[f64]) -> f64 {
        measure::mixed_derivative_once_raw(&self.kernel, &self.measure, x) / self.lambda
    }

    /// `∫ Ω dμ`, which is 1 up to quadrature error.
    pub fn normalization(&self) -> f64 {
        self.measure.integrate_function(&|x: &[f64]| self.omega_raw(x))
    }

    /// `Ω` as a dependence function, with its exact mixed derivative and
    /// face restrictions.
    pub fn dependence_function(&self) -> DependenceFunction {
        let eval = self.clone();
        let dens = self.clone();
        DependenceFunction::new(self.dim(), move |x: &[f64]| eval.omega_raw(x))
            .expect("solution dimension is valid")
            .with_density(move |x: &[f64]| dens.mixed_derivative_raw(x))
            .with_faces_by_substitution()
    }
}

/// `1/λ`, the minimal value of `∫ (∂^m Ω)² dx`.
pub fn minimal_norm_squared(sol: &ExtremalSolution) -> f64 {
    1.0 / sol.lambda
}

/// Nested central difference `Σ_{s∈{±1}^m} (∏ s_j) f(x + h s) / (2h)^m`.
pub fn mixed_derivative(f: &dyn CubeFunction, x: &CubePoint, h: f64) -> Result<f64> {
    let m = x.dim();
    let margin = m as f64 * h;
    if !(h > 0.0) || x.coords().iter().any(|&t| t < margin || t > 1.0 - margin) {
        return Err(Error::TooCloseToBoundary(x.coords().to_vec()));
    }
    Ok(mixed_derivative_raw(f, x.coords(), h))
}

fn mixed_derivative_raw(f: &dyn CubeFunction, x: &[f64], h: f64) -> f64 {
    let m = x.len();
    let mut y = [0.0; crate::set_family::MAX_DIM];
    let mut acc = 0.0;
    for signs in 0u32..(1 << m) {
        let mut parity = 1.0;
        for j in 0..m {
            if signs & (1 << j) != 0 {
                y[j] = x[j] + h;
            } else {
                y[j] = x[j] - h;
                parity = -parity;
            }
        }
        acc += parity * f.eval(&y[..m]);
    }
    acc / (2.0 * h).powi(m as i32)
}

/// `I₀ = ∫ ḟ₀² dx`. Uses the closed-form density when the dependence
/// function carries one, finite differences otherwise.
pub fn fisher_info(f: &DependenceFunction) -> Result<f64> {
    let m = f.dim();
    let value = match f.density() {
        Some(d) => cube_integrate(&fisher_rule(m, 0.0, 1.0), m, |x| {
            let v = d(x);
            v * v
        }),
        None => fisher_info_finite_difference(f, FD_STEP)?,
    };
    if !value.is_finite() {
        return Err(Error::NonFinite("Fisher information".into()));
    }
    Ok(value)
}

fn fisher_rule(m: usize, a: f64, b: f64) -> crate::quadrature::Rule1D {
    if m == 2 {
        crate::quadrature::Rule1D::uniform_composite(8, 32, a, b, &[])
    } else {
        cube_rule(m, a, b)
    }
}

/// `∫ ḟ₀² dx` from central differences with step `h` on the shrunk cube
/// `[δ, 1 − δ]^m`, `δ = m·h`, extrapolated to `δ = 0` by a quadratic through
/// the values at `δ`, `2δ` and `3δ`.
/// Probe points never lie on the boundary, so kinks there do not matter.
pub fn fisher_info_finite_difference(f: &DependenceFunction, h: f64) -> Result<f64> {
    let m = f.dim();
    let delta = m as f64 * h;
    let shrunk = |d: f64| -> Result<f64> {
        let mut bad = false;
        let v = cube_integrate(&fisher_rule(m, d, 1.0 - d), m, |x| {
            let g = mixed_derivative_raw(&|y: &[f64]| f.eval(y), x, h);
            if !g.is_finite() {
                bad = true;
            }
            g * g
        });
        if bad {
            return Err(Error::NonFinite("finite-difference mixed derivative".into()));
        }
        Ok(v)
    };
    let (a, b, c) = (shrunk(delta)?, shrunk(2.0 * delta)?, shrunk(3.0 * delta)?);
    Ok(3.0 * a - 3.0 * b + c)
}

/// Both sides of the efficiency bound `(1/λ)(∫ Ḟ₀ dμ)² ≤ ∫ ḟ₀² dx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimalityGap {
    pub index: f64,
    pub fisher: f64,
    pub gap: f64,
}

pub fn optimality_gap(family: &MonotoneFamily, mu: &MeasureSpec, f: &DependenceFunction) -> Result<OptimalityGap> {
    if f.dim() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: f.dim() });
    }
    let sol = solve(family, mu)?;
    let functional = mu.integrate_function(&|x: &[f64]| f.eval(x));
    let index = functional * functional / sol.lambda;
    let fisher = fisher_info(f)?;
    Ok(OptimalityGap { index, fisher, gap: fisher - index })
}

impl CubeFunction for DependenceFunction {
    fn eval(&self, x: &[f64]) -> f64 {
        DependenceFunction::eval(self, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::set_family::{family_for_known_margins, SubsetMask};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m_empty(m: usize) -> MonotoneFamily {
        family_for_known_margins(SubsetMask::empty(m).unwrap(), m).unwrap()
    }

    fn pt(c: &[f64]) -> CubePoint {
        CubePoint::new(c.to_vec()).unwrap()
    }

    fn spearman_polynomial(x: &[f64]) -> f64 {
        let m = x.len() as f64;
        let prod: f64 = x.iter().product();
        let shifted: f64 = x.iter().map(|t| 2.0 - t).product();
        let sum: f64 = x.iter().sum();
        prod * (shifted + sum - (m + 1.0))
    }

    #[test]
    fn lebesgue_solution_is_proportional_to_the_spearman_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 2..=4 {
            let sol = solve(&m_empty(m), &MeasureSpec::lebesgue(m).unwrap()).unwrap();
            let r: Vec<f64> = vec![0.4; m];
            let c = sol.omega_raw(&r) / spearman_polynomial(&r);
            for _ in 0..100 {
                let x: Vec<f64> = (0..m).map(|_| rng.random()).collect();
                let want = c * spearman_polynomial(&x);
                assert!((sol.omega_raw(&x) - want).abs() <= 1e-12 * want.abs().max(1e-3));
            }
            assert!((sol.normalization() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_for_all_measure_kinds() {
        let m = 2;
        let fam = m_empty(m);
        let atoms = MeasureSpec::point_masses(2, vec![(pt(&[0.2, 0.3]), 1.0), (pt(&[0.7, 0.6]), 0.5)]).unwrap();
        for mu in [
            MeasureSpec::lebesgue(m).unwrap(),
            MeasureSpec::diagonal(m).unwrap(),
            MeasureSpec::diagonal_plus_anti_diagonal(),
            atoms,
        ] {
            let sol = solve(&fam, &mu).unwrap();
            assert!((sol.normalization() - 1.0).abs() < 1e-10, "{mu:?}");
        }
    }

    #[test]
    fn degenerate_measure_is_rejected() {
        let mu = MeasureSpec::point_masses(2, vec![(pt(&[1.0, 0.4]), 1.0)]).unwrap();
        let r = solve(&MonotoneFamily::all_nonempty(2).unwrap(), &mu);
        assert!(matches!(r, Err(Error::DegenerateLambda(_))));
    }

    #[test]
    fn minimal_norm_examples() {
        let sol = solve(&m_empty(2), &MeasureSpec::lebesgue(2).unwrap()).unwrap();
        let expect = 16.0 / ((16.0 / 9.0) - 2.0 / 3.0 - 1.0);
        assert!((minimal_norm_squared(&sol) - expect).abs() < 1e-10);
        let sol = solve(&MonotoneFamily::all_nonempty(2).unwrap(), &MeasureSpec::lebesgue(2).unwrap()).unwrap();
        assert!((minimal_norm_squared(&sol) - 144.0).abs() < 1e-10);
    }

    #[test]
    fn norm_identity_by_finite_differences() {
        for m in 2..=3 {
            let sol = solve(&m_empty(m), &MeasureSpec::lebesgue(m).unwrap()).unwrap();
            let f = sol.dependence_function().without_density();
            let fd = fisher_info_finite_difference(&f, FD_STEP).unwrap();
            let target = minimal_norm_squared(&sol);
            assert!(((fd - target) / target).abs() < 1e-3, "m={m}: {fd} vs {target}");
            let exact = fisher_info(&sol.dependence_function()).unwrap();
            assert!(((exact - target) / target).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_derivative_examples() {
        let f = |x: &[f64]| x[0] * x[1];
        assert!((mixed_derivative(&f, &pt(&[0.3, 0.6]), 1e-3).unwrap() - 1.0).abs() < 1e-6);
        let g = |x: &[f64]| x.iter().product::<f64>();
        assert!((mixed_derivative(&g, &pt(&[0.3, 0.6, 0.5]), 1e-3).unwrap() - 1.0).abs() < 1e-5);
        // ∂²/∂x₁∂x₂ of x₁x₂((2−x₁)(2−x₂) + x₁ + x₂ − 3) is (2−2x₁)(2−2x₂) + 2x₁ + 2x₂ − 3.
        let d = mixed_derivative(&spearman_polynomial, &pt(&[0.5, 0.5]), 1e-3).unwrap();
        assert!((d - 0.0).abs() < 1e-6);
        let d = mixed_derivative(&spearman_polynomial, &pt(&[0.2, 0.7]), 1e-3).unwrap();
        assert!((d - (1.6 * 0.6 + 0.4 + 1.4 - 3.0)).abs() < 1e-6);
        assert!(matches!(
            mixed_derivative(&f, &pt(&[0.001, 0.5]), 1e-3),
            Err(Error::TooCloseToBoundary(_))
        ));
    }

    #[test]
    fn fisher_info_examples() {
        let pillow_shape = DependenceFunction::new(2, |x: &[f64]| {
            x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1])
        })
        .unwrap();
        let fd = fisher_info(&pillow_shape).unwrap();
        assert!((fd - 1.0 / 9.0).abs() < 1e-5);
        let with_density = pillow_shape.with_density(|x: &[f64]| (1.0 - 2.0 * x[0]) * (1.0 - 2.0 * x[1]));
        assert!((fisher_info(&with_density).unwrap() - 1.0 / 9.0).abs() < 1e-14);
        let zero = DependenceFunction::new(3, |_: &[f64]| 0.0).unwrap();
        assert_eq!(fisher_info(&zero).unwrap(), 0.0);
    }

    #[test]
    fn optimal_solution_closes_the_gap() {
        let fam = m_empty(2);
        for mu in [
            MeasureSpec::lebesgue(2).unwrap(),
            MeasureSpec::diagonal(2).unwrap(),
            MeasureSpec::diagonal_plus_anti_diagonal(),
        ] {
            let sol = solve(&fam, &mu).unwrap();
            let g = optimality_gap(&fam, &mu, &sol.dependence_function()).unwrap();
            assert!(g.gap >= -1e-6 && g.gap <= 1e-4 * g.fisher, "{mu:?}: {g:?}");
        }
    }

    #[test]
    fn non_optimal_function_leaves_a_gap() {
        // In two dimensions the pillow shape is itself optimal for Lebesgue μ,
        // so the strict inequality needs m = 3.
        let f = DependenceFunction::new(3, |x: &[f64]| x.iter().map(|t| t * (1.0 - t)).product())
            .unwrap()
            .with_density(|x: &[f64]| x.iter().map(|t| 1.0 - 2.0 * t).product());
        let g = optimality_gap(&m_empty(3), &MeasureSpec::lebesgue(3).unwrap(), &f).unwrap();
        assert!(g.gap > 1e-3 * g.fisher, "{g:?}");
    }

    #[test]
    fn scaling_the_measure_rescales_the_solution() {
        let fam = m_empty(2);
        let mu = MeasureSpec::diagonal_plus_anti_diagonal();
        let c = 2.5;
        let a = solve(&fam, &mu).unwrap();
        let b = solve(&fam, &mu.scaled(c).unwrap()).unwrap();
        assert!((b.lambda() / a.lambda() - c * c).abs() < 1e-12);
        for x in [[0.2, 0.3], [0.9, 0.1], [0.5, 0.55]] {
            assert!((b.omega_raw(&x) * c - a.omega_raw(&x)).abs() < 1e-12);
        }
    }
}
