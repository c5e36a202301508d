//! Seeded simulation under independence: covariances of the empirical
//! processes on grids, Gaussian fields with a Green-function covariance, and
//! null distributions of the statistics.
//!
//! Replication `r` draws from `ChaCha8(seed)` on stream `r`, and results are
//! reduced in replication order, so output does not depend on the number of
//! worker threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green_kernel::{CubePoint, GreenKernel};
use crate::quadrature::NeumaierSum;
use crate::set_family::{check_dim, family_for_known_margins, SubsetMask};
use crate::statistics::{self, Dataset};

pub const MIN_REPLICATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub n: usize,
    pub replications: usize,
    pub m: usize,
    /// Evaluation points of the processes; strictly inside the cube.
    #[serde(default)]
    pub grid: Vec<CubePoint>,
    /// 1-based coordinates whose margins are treated as known.
    #[serde(default)]
    pub v: Vec<usize>,
    /// Worker threads; `None` uses the global pool. Never changes results.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(seed: u64, n: usize, replications: usize, m: usize) -> Self {
        SimConfig { seed, n, replications, m, grid: Vec::new(), v: Vec::new(), threads: None }
    }

    pub fn with_grid(mut self, grid: Vec<CubePoint>) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_v(mut self, v: SubsetMask) -> Self {
        self.v = v.coords();
        self
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn v_mask(&self) -> Result<SubsetMask> {
        SubsetMask::from_coords(&self.v, self.m)
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.m)?;
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::InvalidArgument(format!(
                "replications = {} is below the minimum of {MIN_REPLICATIONS}",
                self.replications
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("sample size n must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidArgument("threads must be positive".into()));
        }
        self.v_mask()?;
        Ok(())
    }

    fn validate_grid(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("grid is empty".into()));
        }
        for p in &self.grid {
            if p.dim() != self.m {
                return Err(Error::DimensionMismatch { expected: self.m, got: p.dim() });
            }
            if let Some((index, &value)) = p.coords().iter().enumerate().find(|(_, &t)| t <= 0.0 || t >= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "grid point {:?} is not interior (coordinate {} = {value})",
                    p.coords(),
                    index + 1
                )));
            }
        }
        for (i, p) in self.grid.iter().enumerate() {
            if self.grid[..i].contains(p) {
                return Err(Error::InvalidArgument(format!("duplicate grid point {:?}", p.coords())));
            }
        }
        Ok(())
    }

    fn pool(&self) -> Result<Option<rayon::ThreadPool>> {
        match self.threads {
            None => Ok(None),
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map(Some)
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}"))),
        }
    }
}

/// Tensor grid `{1/(k+1), …, k/(k+1)}^m`.
pub fn interior_grid(m: usize, k: usize) -> Result<Vec<CubePoint>> {
    check_dim(m)?;
    if k == 0 {
        return Err(Error::InvalidArgument("grid needs at least one point per axis".into()));
    }
    let total = k.checked_pow(m as u32).filter(|&t| t <= 1_000_000).ok_or_else(|| {
        Error::InvalidArgument(format!("grid with {k}^{m} points is too large"))
    })?;
    (0..total)
        .map(|mut idx| {
            let coords = (0..m)
                .map(|_| {
                    let c = idx % k;
                    idx /= k;
                    (c + 1) as f64 / (k + 1) as f64
                })
                .collect();
            CubePoint::new(coords)
        })
        .collect()
}

fn run<T, F>(pool: Option<&rayon::ThreadPool>, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let job = || (0..count).into_par_iter().map(&f).collect();
    match pool {
        Some(p) => p.install(job),
        None => job(),
    }
}

fn replication_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// `n` iid uniform vectors on `I^m` for replication `r`.
pub fn null_sample(cfg: &SimConfig, r: usize) -> Dataset {
    let mut rng = replication_rng(cfg.seed, r);
    let values = (0..cfg.n * cfg.m).map(|_| rng.random::<f64>()).collect();
    Dataset::from_flat(values, cfg.m).expect("uniform sample is valid")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub empirical: Vec<Vec<f64>>,
    pub theoretical: Vec<Vec<f64>>,
    /// Standard error of each empirical entry: sd of the replication-level
    /// products over `√R`.
    pub standard_errors: Vec<Vec<f64>>,
    pub max_abs_dev: f64,
    pub max_dev_in_se: f64,
    pub replications: usize,
    pub n: usize,
}

fn covariance_report(paths: &[Vec<f64>], theory: &DMatrix<f64>, n: usize) -> CovarianceReport {
    let g = theory.nrows();
    let r = paths.len() as f64;
    let mut empirical = vec![vec![0.0; g]; g];
    let mut standard_errors = vec![vec![0.0; g]; g];
    let mut max_abs_dev: f64 = 0.0;
    let mut max_dev_in_se: f64 = 0.0;
    for a in 0..g {
        for b in a..g {
            let mut s = NeumaierSum::default();
            let mut s2 = NeumaierSum::default();
            for w in paths {
                let p = w[a] * w[b];
                s.add(p);
                s2.add(p * p);
            }
            let mean = s.value() / r;
            let var = ((s2.value() / r - mean * mean) * r / (r - 1.0)).max(0.0);
            let se = (var / r).sqrt();
            let dev = (mean - theory[(a, b)]).abs();
            let in_se = if se > 0.0 {
                dev / se
            } else if dev == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            empirical[a][b] = mean;
            empirical[b][a] = mean;
            standard_errors[a][b] = se;
            standard_errors[b][a] = se;
            max_abs_dev = max_abs_dev.max(dev);
            max_dev_in_se = max_dev_in_se.max(in_se);
        }
    }
    let theoretical = (0..g).map(|a| (0..g).map(|b| theory[(a, b)]).collect()).collect();
    CovarianceReport {
        empirical,
        theoretical,
        standard_errors,
        max_abs_dev,
        max_dev_in_se,
        replications: paths.len(),
        n,
    }
}

fn grid_slices(cfg: &SimConfig) -> Vec<&[f64]> {
    cfg.grid.iter().map(|p| p.coords()).collect()
}

/// Empirical covariance of `W_{V,n}` on the grid against the kernel of the
/// family `{M} ∪ {M∖{u} : u ∉ V}`.
pub fn simulate_null_covariance(cfg: &SimConfig) -> Result<CovarianceReport> {
    cfg.validate()?;
    cfg.validate_grid()?;
    let v = cfg.v_mask()?;
    let kernel = GreenKernel::new(&family_for_known_margins(v, cfg.m)?);
    let grid = grid_slices(cfg);
    let pool = cfg.pool()?;
    let paths = run(pool.as_ref(), cfg.replications, |r| {
        let data = null_sample(cfg, r);
        grid.iter().map(|x| statistics::empirical_process_w_raw(&data, v.bits(), x)).collect::<Vec<f64>>()
    });
    Ok(covariance_report(&paths, &kernel.gram_matrix_raw(&grid), cfg.n))
}

/// Empirical covariance of the tied-down process against the Brownian pillow.
pub fn simulate_tied_down_covariance(cfg: &SimConfig) -> Result<CovarianceReport> {
    cfg.validate()?;
    cfg.validate_grid()?;
    let kernel = GreenKernel::brownian_pillow(cfg.m)?;
    let grid = grid_slices(cfg);
    let pool = cfg.pool()?;
    let scale = 1.0 / (cfg.n as f64).sqrt();
    let paths = run(pool.as_ref(), cfg.replications, |r| {
        let data = null_sample(cfg, r);
        grid.iter().map(|x| scale * statistics::tied_down_sum(&data, x)).collect::<Vec<f64>>()
    });
    Ok(covariance_report(&paths, &kernel.gram_matrix_raw(&grid), cfg.n))
}

/// `count` draws from `N(0, Γ + ρI)` with `Γ` the Gram matrix of the kernel
/// on the points and `ρ = 10⁻¹² trace(Γ)/dim`, raised tenfold up to three
/// times if the Cholesky factorization fails. Row `s` of the result is draw
/// `s`, generated from stream `s` of `ChaCha8(seed)`.
pub fn sample_gaussian_field(
    kernel: &GreenKernel,
    points: &[CubePoint],
    count: usize,
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<Vec<f64>>> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no points to sample at".into()));
    }
    let gram = kernel.gram_matrix(points)?;
    let dim = gram.nrows();
    let trace = gram.trace();
    let mut ridge = (1e-12 * trace / dim as f64).max(f64::MIN_POSITIVE);
    let mut chol = None;
    for _ in 0..4 {
        let shifted = &gram + DMatrix::identity(dim, dim) * ridge;
        if let Some(c) = shifted.cholesky() {
            chol = Some(c);
            break;
        }
        ridge *= 10.0;
    }
    let l = chol.ok_or(Error::CholeskyFailed)?.l();
    let cfg = SimConfig::new(seed, 1, MIN_REPLICATIONS, kernel.dim()).with_threads(threads);
    if threads == Some(0) {
        return Err(Error::InvalidArgument("threads must be positive".into()));
    }
    let pool = cfg.pool()?;
    Ok(run(pool.as_ref(), count, |s| {
        let mut rng = replication_rng(seed, s);
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&l * z).iter().copied().collect()
    }))
}

/// Statistics whose null distribution can be tabulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullStatistic {
    /// `√n · B̂¹`.
    Bhat1,
    /// `√n · B¹_V`, with `V` from the configuration.
    B1,
    /// Multivariate Spearman ρ.
    Rho,
    /// Gini rank coefficient (`m = 2`).
    Gini,
    /// Spearman's footrule (`m = 2`).
    Footrule,
}

impl std::str::FromStr for NullStatistic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bhat1" | "bhat" => Ok(NullStatistic::Bhat1),
            "b1" | "b" => Ok(NullStatistic::B1),
            "rho" | "spearman" => Ok(NullStatistic::Rho),
            "gini" => Ok(NullStatistic::Gini),
            "footrule" => Ok(NullStatistic::Footrule),
            other => Err(Error::InvalidArgument(format!("unknown statistic {other:?}"))),
        }
    }
}

impl NullStatistic {
    fn evaluate(self, data: &Dataset, v: SubsetMask) -> Result<f64> {
        let root_n = (data.n() as f64).sqrt();
        match self {
            NullStatistic::Bhat1 => Ok(root_n * statistics::stat_bhat(data, 1, 0)?),
            NullStatistic::B1 => Ok(root_n * statistics::stat_b(data, v, 1, 0)?),
            NullStatistic::Rho => statistics::spearman_rho(data),
            NullStatistic::Gini => statistics::gini_coefficient(data),
            NullStatistic::Footrule => Ok(statistics::footrule(data)? as f64),
        }
    }
}

/// The statistic on each of the `R` null replications, in replication order.
pub fn null_values(stat: NullStatistic, cfg: &SimConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if matches!(stat, NullStatistic::Gini | NullStatistic::Footrule) && cfg.m != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: cfg.m });
    }
    let v = cfg.v_mask()?;
    let pool = cfg.pool()?;
    run(pool.as_ref(), cfg.replications, |r| stat.evaluate(&null_sample(cfg, r), v)).into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NullSummary {
    pub statistic: NullStatistic,
    pub replications: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    /// `√((m₄ − s⁴)/R)` with `m₄` the fourth central moment.
    pub variance_se: f64,
    /// `(level, quantile)` for levels 0.9, 0.95 and 0.99, linear interpolation
    /// between order statistics.
    pub quantiles: Vec<(f64, f64)>,
}

pub fn null_distribution(stat: NullStatistic, cfg: &SimConfig) -> Result<NullSummary> {
    let values = null_values(stat, cfg)?;
    Ok(summarize(stat, &values))
}

fn summarize(stat: NullStatistic, values: &[f64]) -> NullSummary {
    let r = values.len() as f64;
    let mean = values.iter().copied().collect::<NeumaierSum>().value() / r;
    let m2 = values.iter().map(|x| (x - mean).powi(2)).collect::<NeumaierSum>().value() / r;
    let m4 = values.iter().map(|x| (x - mean).powi(4)).collect::<NeumaierSum>().value() / r;
    let variance = m2 * r / (r - 1.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (r - 1.0);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(sorted.len() - 1);
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    };
    NullSummary {
        statistic: stat,
        replications: values.len(),
        mean,
        mean_se: (variance / r).sqrt(),
        variance,
        variance_se: ((m4 - m2 * m2).max(0.0) / r).sqrt(),
        quantiles: [0.9, 0.95, 0.99].iter().map(|&q| (q, quantile(q))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> CubePoint {
        CubePoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn config_validation() {
        let base = SimConfig::new(1, 10, 100, 2).with_grid(interior_grid(2, 2).unwrap());
        base.validate().unwrap();
        assert!(SimConfig { replications: 99, ..base.clone() }.validate().is_err());
        let dup = base.clone().with_grid(vec![pt(&[0.5, 0.5]), pt(&[0.5, 0.5])]);
        assert!(simulate_null_covariance(&dup).is_err());
        let edge = base.clone().with_grid(vec![pt(&[1.0, 0.5])]);
        assert!(simulate_null_covariance(&edge).is_err());
        assert!(SimConfig { v: vec![3], ..base }.validate().is_err());
        let g = interior_grid(3, 2).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.iter().all(|p| p.coords().iter().all(|&t| t == 1.0 / 3.0 || t == 2.0 / 3.0)));
    }

    #[test]
    fn reports_are_reproducible_and_thread_independent() {
        let cfg = SimConfig::new(42, 30, 200, 2).with_grid(interior_grid(2, 2).unwrap());
        let a = simulate_null_covariance(&cfg).unwrap();
        let b = simulate_null_covariance(&cfg.clone().with_threads(Some(1))).unwrap();
        let c = simulate_null_covariance(&cfg.clone().with_threads(Some(3))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let other = simulate_null_covariance(&SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn pillow_field_variance_at_centre() {
        let k = GreenKernel::brownian_pillow(2).unwrap();
        let draws = sample_gaussian_field(&k, &[pt(&[0.5, 0.5])], 10_000, 7, None).unwrap();
        let s = summarize(NullStatistic::Bhat1, &draws.iter().map(|d| d[0]).collect::<Vec<_>>());
        assert!((s.variance - 0.0625).abs() < 4.0 * s.variance_se, "{s:?}");
        assert!(s.mean.abs() < 4.0 * s.mean_se);
        let sheet = GreenKernel::brownian_sheet(2).unwrap();
        let draws = sample_gaussian_field(&sheet, &[pt(&[1.0, 1.0]), pt(&[0.3, 0.6])], 10_000, 8, Some(2)).unwrap();
        let s = summarize(NullStatistic::Bhat1, &draws.iter().map(|d| d[0]).collect::<Vec<_>>());
        assert!((s.variance - 1.0).abs() < 4.0 * s.variance_se, "{s:?}");
        let s = summarize(NullStatistic::Bhat1, &draws.iter().map(|d| d[1]).collect::<Vec<_>>());
        assert!((s.variance - 0.18).abs() < 4.0 * s.variance_se, "{s:?}");
        assert!(s.mean.abs() < 4.0 * s.mean_se);
    }

    #[test]
    fn vanishing_kernel_gives_zero_variance() {
        let k = GreenKernel::tucked_sheet(2).unwrap();
        let g = k.gram_matrix(&[pt(&[1.0 - 1e-9, 1.0 - 1e-9])]).unwrap();
        assert!(g[(0, 0)] < 1e-8);
        let draws = sample_gaussian_field(&k, &[pt(&[1.0, 1.0])], 100, 1, None).unwrap();
        assert!(draws.iter().all(|d| d[0].abs() < 1e-100));
    }

    #[test]
    fn footrule_null_on_three_points_matches_permutations() {
        // Footrule over the six permutations of {1,2,3}: 0, 2, 2, 4, 4, 4.
        let exact_mean = (0.0 + 2.0 + 2.0 + 4.0 + 4.0 + 4.0) / 6.0;
        let cfg = SimConfig::new(3, 3, 20_000, 2);
        let values = null_values(NullStatistic::Footrule, &cfg).unwrap();
        assert!(values.iter().all(|&v| v == 0.0 || v == 2.0 || v == 4.0));
        let s = summarize(NullStatistic::Footrule, &values);
        assert!((s.mean - exact_mean).abs() < 4.0 * s.mean_se);
    }

    #[test]
    fn substreams_are_uncorrelated() {
        let cfg = SimConfig::new(11, 20, 4000, 2);
        let v = null_values(NullStatistic::Bhat1, &cfg).unwrap();
        let pairs: Vec<(f64, f64)> = v.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let k = pairs.len() as f64;
        let (ma, mb) = (
            pairs.iter().map(|p| p.0).sum::<f64>() / k,
            pairs.iter().map(|p| p.1).sum::<f64>() / k,
        );
        let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / k;
        let sa = (pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / k).sqrt();
        let sb = (pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / k).sqrt();
        let corr = cov / (sa * sb);
        assert!(corr.abs() < 4.0 / k.sqrt(), "corr = {corr}");
    }

    #[test]
    fn covariance_error_shrinks_with_n() {
        let grid = interior_grid(2, 2).unwrap();
        let mut wins = 0;
        for batch in 0..10 {
            let cfg = |n| SimConfig::new(1000 + batch, n, 20_000, 2).with_grid(grid.clone());
            let small = simulate_null_covariance(&cfg(50).with_v(SubsetMask::empty(2).unwrap())).unwrap();
            let large = simulate_null_covariance(&cfg(800).with_v(SubsetMask::empty(2).unwrap())).unwrap();
            if large.max_abs_dev <= small.max_abs_dev {
                wins += 1;
            }
        }
        assert!(wins >= 8, "{wins} of 10");
    }

    #[test]
    fn empirical_covariance_is_psd_and_theory_is_psd() {
        let cfg = SimConfig::new(5, 40, 300, 2).with_grid(interior_grid(2, 3).unwrap());
        let rep = simulate_tied_down_covariance(&cfg).unwrap();
        for mat in [&rep.empirical, &rep.theoretical] {
            let g = mat.len();
            let m = DMatrix::from_fn(g, g, |a, b| mat[a][b]);
            let min = m.symmetric_eigen().eigenvalues.min();
            assert!(min >= -1e-10, "{min}");
        }
    }
}
