//! Rank statistics and empirical processes for testing independence of the
//! coordinates of a sample.
//!
//! Statistics that assume uniform margins (`B^p_V`, `B̂^p` and the processes)
//! need data in `[0, 1]^m`; raw data can be moved there with
//! [`Dataset::rank_pit`]. The rank statistics work on any scale.

mod dataset;

pub use dataset::{ranks, Dataset, RankMatrix};

use crate::error::{Error, Result};
use crate::green_kernel::CubePoint;
use crate::quadrature::NeumaierSum;
use crate::set_family::{full_bits, SubsetMask};

/// Upper bound on integrand evaluations times sample size for the
/// quadrature forms of `B^p` and `B̂^p`.
const MAX_WORK: f64 = 4e9;

/// Default per-axis resolution for `p ≥ 2`.
pub fn default_grid_n(m: usize) -> usize {
    match m {
        0..=2 => 64,
        3 => 24,
        4 => 12,
        _ => 6,
    }
}

fn check_point(data: &Dataset, x: &CubePoint) -> Result<()> {
    if x.dim() != data.m() {
        return Err(Error::DimensionMismatch { expected: data.m(), got: x.dim() });
    }
    Ok(())
}

fn joint_cdf(data: &Dataset, x: &[f64]) -> f64 {
    let hits = data.rows().filter(|row| row.iter().zip(x).all(|(a, b)| a <= b)).count();
    hits as f64 / data.n() as f64
}

fn marginal_cdf(data: &Dataset, j: usize, t: f64) -> f64 {
    (0..data.n()).filter(|&i| data.value(i, j) <= t).count() as f64 / data.n() as f64
}

/// `W_{V,n}(x) = √n (F_n(x) − x_V ∏_{j∉V} F_{j,n}(x_j))`.
pub fn empirical_process_w(data: &Dataset, v: SubsetMask, x: &CubePoint) -> Result<f64> {
    check_point(data, x)?;
    if v.dim() != data.m() {
        return Err(Error::DimensionMismatch { expected: data.m(), got: v.dim() });
    }
    data.check_unit_cube()?;
    Ok(empirical_process_w_raw(data, v.bits(), x.coords()))
}

pub(crate) fn empirical_process_w_raw(data: &Dataset, v_bits: u32, x: &[f64]) -> f64 {
    let mut centre = 1.0;
    for (j, &xj) in x.iter().enumerate() {
        centre *= if v_bits & (1 << j) != 0 { xj } else { marginal_cdf(data, j, xj) };
    }
    (data.n() as f64).sqrt() * (joint_cdf(data, x) - centre)
}

/// `Ŵ_{∅,n}(x) = n^{−1/2} Σ_i ∏_j (𝟙(X_ij ≤ x_j) − x_j)`.
pub fn tied_down_process(data: &Dataset, x: &CubePoint) -> Result<f64> {
    check_point(data, x)?;
    data.check_unit_cube()?;
    Ok(tied_down_sum(data, x.coords()) / (data.n() as f64).sqrt())
}

/// `Σ_i ∏_j (𝟙(X_ij ≤ x_j) − x_j)`.
pub(crate) fn tied_down_sum(data: &Dataset, x: &[f64]) -> f64 {
    data.rows()
        .map(|row| {
            row.iter()
                .zip(x)
                .map(|(&a, &b)| if a <= b { 1.0 - b } else { -b })
                .product::<f64>()
        })
        .collect::<NeumaierSum>()
        .value()
}

/// The tied-down process written as `√n Σ_{U⊆M} (−1)^{|U|} x_U F_n(x)|_{x_U=1}`.
pub fn tied_down_process_by_faces(data: &Dataset, x: &CubePoint) -> Result<f64> {
    check_point(data, x)?;
    data.check_unit_cube()?;
    let m = data.m();
    let x = x.coords();
    let mut acc = NeumaierSum::default();
    let mut y = vec![0.0; m];
    for bits in 0..=full_bits(m) {
        let mut weight = 1.0;
        for j in 0..m {
            if bits & (1 << j) != 0 {
                y[j] = 1.0;
                weight *= -x[j];
            } else {
                y[j] = x[j];
            }
        }
        acc.add(weight * joint_cdf(data, &y));
    }
    Ok((data.n() as f64).sqrt() * acc.value())
}

fn check_p(p: u32) -> Result<()> {
    if p < 1 {
        return Err(Error::InvalidArgument("p must be a positive integer".into()));
    }
    Ok(())
}

fn midpoints(k: usize) -> Vec<f64> {
    (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect()
}

/// `B^p_{V,n} = ∫ (F_n(x) − x_V F_{V^c,n}(x))^p dx_V dF_{V^c,n}(x_{V^c})`:
/// Lebesgue measure on the `V` coordinates and the product of the marginal
/// empirical measures on the others.
///
/// `p = 1` is exact in `O(nm log n)`:
/// `n⁻¹ Σ_i ∏_{j∈V}(1 − X_ij) ∏_{j∉V} N_ij/n − 2^{−|V|} ∏_{j∉V} n⁻² Σ_k L_kj`
/// with `N_ij = #{k : X_kj ≥ X_ij}` and `L_kj = #{l : X_lj ≤ X_kj}`.
/// For `p ≥ 2` the `V` axes use a midpoint rule with `grid_n` cells each
/// (bias `O(1/grid_n)`) and the empirical atoms are summed exactly.
pub fn stat_b(data: &Dataset, v: SubsetMask, p: u32, grid_n: usize) -> Result<f64> {
    check_p(p)?;
    if v.dim() != data.m() {
        return Err(Error::DimensionMismatch { expected: data.m(), got: v.dim() });
    }
    data.check_unit_cube()?;
    if p == 1 {
        Ok(stat_b1_exact(data, v.bits()))
    } else {
        stat_b_quadrature(data, v.bits(), p, grid_n)
    }
}

pub(crate) fn stat_b1_exact(data: &Dataset, v_bits: u32) -> f64 {
    let (n, m) = (data.n(), data.m());
    let nf = n as f64;
    let mut sorted: Vec<Vec<f64>> = vec![Vec::new(); m];
    for j in (0..m).filter(|j| v_bits & (1 << j) == 0) {
        let mut col: Vec<f64> = (0..n).map(|i| data.value(i, j)).collect();
        col.sort_by(f64::total_cmp);
        sorted[j] = col;
    }
    let mut first = NeumaierSum::default();
    for row in data.rows() {
        let mut term = 1.0;
        for (j, &xij) in row.iter().enumerate() {
            term *= if v_bits & (1 << j) != 0 {
                1.0 - xij
            } else {
                let below = sorted[j].partition_point(|&t| t < xij);
                (n - below) as f64 / nf
            };
        }
        first.add(term);
    }
    let mut centre = 1.0;
    for j in 0..m {
        centre *= if v_bits & (1 << j) != 0 {
            0.5
        } else {
            let total: usize = sorted[j].iter().map(|&t| sorted[j].partition_point(|&s| s <= t)).sum();
            total as f64 / (nf * nf)
        };
    }
    first.value() / nf - centre
}

fn stat_b_quadrature(data: &Dataset, v_bits: u32, p: u32, grid_n: usize) -> Result<f64> {
    if grid_n < 1 {
        return Err(Error::InvalidArgument("grid_n must be positive".into()));
    }
    let (n, m) = (data.n(), data.m());
    let axes: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            if v_bits & (1 << j) != 0 {
                midpoints(grid_n)
            } else {
                (0..n).map(|i| data.value(i, j)).collect()
            }
        })
        .collect();
    let count: f64 = axes.iter().map(|a| a.len() as f64).product();
    if count * (n * m) as f64 > MAX_WORK {
        return Err(Error::InvalidArgument(format!(
            "B^p quadrature needs {count:.3e} evaluations on {n} observations; reduce grid_n or n"
        )));
    }
    let marg: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            if v_bits & (1 << j) != 0 {
                Vec::new()
            } else {
                axes[j].iter().map(|&t| marginal_cdf(data, j, t)).collect()
            }
        })
        .collect();
    let total = count as usize;
    let mut idx = vec![0usize; m];
    let mut x = vec![0.0; m];
    let mut acc = NeumaierSum::default();
    for _ in 0..total {
        let mut centre = 1.0;
        for j in 0..m {
            x[j] = axes[j][idx[j]];
            centre *= if v_bits & (1 << j) != 0 { x[j] } else { marg[j][idx[j]] };
        }
        acc.add((joint_cdf(data, &x) - centre).powi(p as i32));
        for j in 0..m {
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(acc.value() / count)
}

/// `B̂^p_{m,n} = ∫ (n^{−1/2} Ŵ_{∅,n}(x))^p dx`. For `p = 1` this is exactly
/// `n⁻¹ Σ_i ∏_j (1/2 − X_ij)`; for `p ≥ 2` a midpoint rule with `grid_n`
/// cells per axis.
pub fn stat_bhat(data: &Dataset, p: u32, grid_n: usize) -> Result<f64> {
    check_p(p)?;
    data.check_unit_cube()?;
    if p == 1 {
        return Ok(stat_bhat1(data));
    }
    stat_bhat_quadrature(data, p, grid_n)
}

pub(crate) fn stat_bhat1(data: &Dataset) -> f64 {
    let s: NeumaierSum = data.rows().map(|row| row.iter().map(|x| 0.5 - x).product::<f64>()).collect();
    s.value() / data.n() as f64
}

/// Midpoint-rule form of `B̂^p`, valid for every `p ≥ 1`.
pub fn stat_bhat_quadrature(data: &Dataset, p: u32, grid_n: usize) -> Result<f64> {
    check_p(p)?;
    data.check_unit_cube()?;
    if grid_n < 1 {
        return Err(Error::InvalidArgument("grid_n must be positive".into()));
    }
    let (n, m) = (data.n(), data.m());
    let count = (grid_n as f64).powi(m as i32);
    if count * (n * m) as f64 > MAX_WORK {
        return Err(Error::InvalidArgument(format!(
            "B̂^p quadrature needs {count:.3e} evaluations on {n} observations; reduce grid_n or n"
        )));
    }
    let mids = midpoints(grid_n);
    let mut idx = vec![0usize; m];
    let mut x = vec![0.0; m];
    let mut acc = NeumaierSum::default();
    let nf = n as f64;
    for _ in 0..count as usize {
        for j in 0..m {
            x[j] = mids[idx[j]];
        }
        acc.add((tied_down_sum(data, &x) / nf).powi(p as i32));
        for j in 0..m {
            idx[j] += 1;
            if idx[j] < grid_n {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(acc.value() / count)
}

/// Multivariate Spearman ρ,
/// `(n⁻¹ Σ_i ∏_j (n + 1 − R_ij) − ((n+1)/2)^m) / (n⁻¹ Σ_i i^m − ((n+1)/2)^m)`.
/// Evaluated in exact integer arithmetic after clearing the denominators
/// `n 2^m`, so comonotone data give exactly 1.
pub fn spearman_rho(data: &Dataset) -> Result<f64> {
    let r = ranks(data)?;
    spearman_rho_from_ranks(&r)
}

pub fn spearman_rho_from_ranks(r: &RankMatrix) -> Result<f64> {
    let (n, m) = (r.n(), r.m());
    if n < 2 {
        return Err(Error::InvalidArgument("Spearman's rho needs n >= 2".into()));
    }
    let exact = || -> Option<f64> {
        let n1 = n as i128 + 1;
        let mut prod_sum: i128 = 0;
        let mut pow_sum: i128 = 0;
        for i in 0..n {
            let mut t: i128 = 1;
            let mut q: i128 = 1;
            for &rij in r.row(i) {
                t = t.checked_mul(n1 - rij as i128)?;
                q = q.checked_mul(i as i128 + 1)?;
            }
            prod_sum = prod_sum.checked_add(t)?;
            pow_sum = pow_sum.checked_add(q)?;
        }
        let two_m: i128 = 1i128.checked_shl(m as u32)?;
        let centre = (n as i128).checked_mul(n1.checked_pow(m as u32)?)?;
        let num = two_m.checked_mul(prod_sum)?.checked_sub(centre)?;
        let den = two_m.checked_mul(pow_sum)?.checked_sub(centre)?;
        Some(num as f64 / den as f64)
    };
    if let Some(v) = exact() {
        return Ok(v);
    }
    let nf = n as f64;
    let half = ((nf + 1.0) / 2.0).powi(m as i32);
    let mut prod_sum = NeumaierSum::default();
    let mut pow_sum = NeumaierSum::default();
    for i in 0..n {
        prod_sum.add(r.row(i).iter().map(|&k| nf + 1.0 - k as f64).product());
        pow_sum.add((i as f64 + 1.0).powi(m as i32));
    }
    Ok((prod_sum.value() / nf - half) / (pow_sum.value() / nf - half))
}

fn bivariate_ranks(data: &Dataset) -> Result<RankMatrix> {
    if data.m() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: data.m() });
    }
    ranks(data)
}

/// Gini rank coefficient
/// `(2/D_n) Σ_i (|n + 1 − R_i1 − R_i2| − |R_i1 − R_i2|)`, `D_n = n²` for even
/// `n` and `n² − 1` for odd `n`.
pub fn gini_coefficient(data: &Dataset) -> Result<f64> {
    gini_from_ranks(&bivariate_ranks(data)?)
}

pub fn gini_from_ranks(r: &RankMatrix) -> Result<f64> {
    if r.m() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: r.m() });
    }
    let n = r.n() as i64;
    let sum: i64 = (0..r.n())
        .map(|i| {
            let (a, b) = (r.rank(i, 0) as i64, r.rank(i, 1) as i64);
            (n + 1 - a - b).abs() - (a - b).abs()
        })
        .sum();
    let d = if n % 2 == 0 { n * n } else { n * n - 1 };
    if d == 0 {
        return Err(Error::InvalidArgument("the Gini coefficient needs n >= 2".into()));
    }
    Ok(2.0 * sum as f64 / d as f64)
}

/// Spearman's footrule `Σ_i |R_i1 − R_i2|`.
pub fn footrule(data: &Dataset) -> Result<u64> {
    footrule_from_ranks(&bivariate_ranks(data)?)
}

pub fn footrule_from_ranks(r: &RankMatrix) -> Result<u64> {
    if r.m() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: r.m() });
    }
    Ok((0..r.n()).map(|i| r.rank(i, 0).abs_diff(r.rank(i, 1)) as u64).sum())
}
