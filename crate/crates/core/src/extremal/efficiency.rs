use serde::Serialize;

use super::{solve, DependenceFunction};
use crate::error::{Error, Result};
use crate::green_kernel::GreenKernel;
use crate::measure::{self, MeasureSpec};
use crate::set_family::{check_dim, family_for_known_margins, full_bits, MonotoneFamily, SubsetMask};

/// Tolerance for the probe-point boundary check of a dependence function.
const BOUNDARY_TOL: f64 = 1e-6;

/// `1/λ` for the family and measure: the coefficient of the local Bahadur
/// index of the corresponding statistic.
pub fn efficiency_coefficient(family: &MonotoneFamily, mu: &MeasureSpec) -> Result<f64> {
    Ok(1.0 / solve(family, mu)?.lambda())
}

/// `∫_{I^m} Ḟ₀ dx`.
pub fn integral_over_cube(f: &DependenceFunction) -> f64 {
    MeasureSpec::lebesgue(f.dim())
        .expect("dimension already validated")
        .integrate_function(f)
}

/// θ² coefficient of the Bahadur exact slope of `B¹_V`:
/// `(∬ G_{𝓜_V} dx dξ)⁻¹ (∫ Ḟ₀ dx)²`.
pub fn bahadur_slope_b1(v: SubsetMask, m: usize, f: &DependenceFunction) -> Result<f64> {
    check_dim(m)?;
    if f.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: f.dim() });
    }
    f.check_boundary(BOUNDARY_TOL)?;
    let kernel = GreenKernel::new(&family_for_known_margins(v, m)?);
    let lambda = measure::lambda(&kernel, &MeasureSpec::lebesgue(m)?)?;
    let integral = integral_over_cube(f);
    Ok(integral * integral / lambda)
}

/// Local Pitman quantities of the multivariate Spearman ρ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpearmanPitman {
    pub mu_prime: f64,
    pub sigma: f64,
    pub slope_squared: f64,
}

pub fn pitman_slope_spearman(m: usize, f: &DependenceFunction) -> Result<SpearmanPitman> {
    check_dim(m)?;
    if f.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: f.dim() });
    }
    let mf = m as f64;
    let two_m = 2f64.powi(m as i32);
    let denom = two_m - mf - 1.0;
    let mu_prime = two_m * (mf + 1.0) / denom * integral_over_cube(f);
    let sigma2 = (mf + 1.0).powi(2) * ((4.0f64 / 3.0).powi(m as i32) - mf / 3.0 - 1.0) / (denom * denom);
    let sigma = sigma2.sqrt();
    let r = mu_prime / sigma;
    Ok(SpearmanPitman { mu_prime, sigma, slope_squared: r * r })
}

/// Squared Pitman slope of `B̂¹`:
/// `12^m (∫ (Ḟ₀ − Σ_{k=1}^{m−2} (−1)^{k−1} Σ_{|U|=k} x_U Ḟ₀|_{x_U=1}) dx)²`.
/// Needs the face restrictions for `1 ≤ |U| ≤ m − 2`.
pub fn pitman_slope_bhat(m: usize, f: &DependenceFunction) -> Result<f64> {
    check_dim(m)?;
    if f.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: f.dim() });
    }
    let mut faces = Vec::new();
    for bits in 1..full_bits(m) {
        let k = bits.count_ones() as usize;
        if k + 2 > m {
            continue;
        }
        let u = SubsetMask::new(bits, m)?;
        let face = f.face(u).ok_or_else(|| Error::MissingFace(u.to_string()))?;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        faces.push((bits, sign, face));
    }
    let corrected = |x: &[f64]| {
        let mut v = f.eval(x);
        for (bits, sign, face) in &faces {
            let xu: f64 = (0..m).filter(|j| bits & (1 << j) != 0).map(|j| x[j]).product();
            v -= sign * xu * face(x);
        }
        v
    };
    let integral = MeasureSpec::lebesgue(m)?.integrate_function(&corrected);
    Ok(12f64.powi(m as i32) * integral * integral)
}
