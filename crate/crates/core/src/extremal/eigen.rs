//! Principal eigenvalue of the integral operator with kernel `G` on `L²(I^m)`
//! by Nyström discretization and power iteration.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::green_kernel::GreenKernel;
use crate::quadrature::Rule1D;

/// Largest tensor grid (`grid_n^m` nodes) accepted.
pub const MAX_NYSTROM_NODES: usize = 20_000;
/// Above this many nodes the matrix is applied without being stored.
const STORED_NODES: usize = 4096;
const TOL: f64 = 1e-12;
const MAX_ITERS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenReport {
    /// Extrapolated estimate.
    pub value: f64,
    /// Estimate on `grid_n` nodes per axis.
    pub fine: f64,
    /// Estimate on `grid_n / 2` nodes per axis.
    pub coarse: f64,
    /// `|fine − coarse|`.
    pub error_estimate: f64,
    pub grid_n: usize,
    /// `Σ w_i G(p_i, p_i)` on the fine grid; bounds the eigenvalue.
    pub trace: f64,
    pub iterations: usize,
}

pub fn principal_eigenvalue(kernel: &GreenKernel, grid_n: usize) -> Result<f64> {
    Ok(principal_eigenvalue_report(kernel, grid_n)?.value)
}

/// Runs the Nyström computation at `grid_n` and `grid_n / 2` points per axis.
/// The error is `O(n⁻²)` because of the kink on the diagonal, which gives the
/// extrapolation `fine + (fine − coarse)/3`.
pub fn principal_eigenvalue_report(kernel: &GreenKernel, grid_n: usize) -> Result<EigenReport> {
    if grid_n < 8 {
        return Err(Error::InvalidArgument(format!("grid_n = {grid_n} must be at least 8")));
    }
    let m = kernel.dim();
    let size = grid_n
        .checked_pow(m as u32)
        .filter(|&s| s <= MAX_NYSTROM_NODES)
        .ok_or(Error::GridTooLarge { size: grid_n.saturating_pow(m as u32), cap: MAX_NYSTROM_NODES })?;
    debug_assert!(size <= MAX_NYSTROM_NODES);
    let fine = nystrom(kernel, grid_n)?;
    let coarse = nystrom(kernel, grid_n / 2)?;
    Ok(EigenReport {
        value: fine.value + (fine.value - coarse.value) / 3.0,
        fine: fine.value,
        coarse: coarse.value,
        error_estimate: (fine.value - coarse.value).abs(),
        grid_n,
        trace: fine.trace,
        iterations: fine.iterations,
    })
}

struct Nystrom {
    value: f64,
    trace: f64,
    iterations: usize,
}

fn nystrom(kernel: &GreenKernel, n: usize) -> Result<Nystrom> {
    let m = kernel.dim();
    let rule = Rule1D::gauss(n, 0.0, 1.0);
    let size = n.pow(m as u32);
    let mut points = vec![0.0; size * m];
    let mut sqrt_w = vec![0.0; size];
    for i in 0..size {
        let mut rest = i;
        let mut w = 1.0;
        for j in 0..m {
            let k = rest % n;
            rest /= n;
            points[i * m + j] = rule.nodes[k];
            w *= rule.weights[k];
        }
        sqrt_w[i] = w.sqrt();
    }
    let p = |i: usize| &points[i * m..(i + 1) * m];
    let entry = |i: usize, k: usize| sqrt_w[i] * kernel.eval(p(i), p(k)) * sqrt_w[k];
    let trace: f64 = (0..size).map(|i| entry(i, i)).sum();

    let stored: Option<Vec<f64>> = (size <= STORED_NODES).then(|| {
        (0..size)
            .into_par_iter()
            .flat_map_iter(|i| (0..size).map(move |k| (i, k)))
            .map(|(i, k)| entry(i, k))
            .collect()
    });
    let apply = |v: &[f64]| -> Vec<f64> {
        match &stored {
            Some(a) => (0..size)
                .into_par_iter()
                .map(|i| a[i * size..(i + 1) * size].iter().zip(v).map(|(x, y)| x * y).sum())
                .collect(),
            None => (0..size)
                .into_par_iter()
                .map(|i| (0..size).map(|k| entry(i, k) * v[k]).sum())
                .collect(),
        }
    };

    let mut v: Vec<f64> = (0..size).map(|i| sqrt_w[i] * (1.0 + 0.1 * (i as f64).sin())).collect();
    normalize(&mut v);
    let mut previous = f64::NAN;
    for iter in 1..=MAX_ITERS {
        let mut y = apply(&v);
        let value: f64 = y.iter().zip(&v).map(|(a, b)| a * b).sum();
        if !value.is_finite() {
            return Err(Error::NonFinite("power iteration".into()));
        }
        if normalize(&mut y) == 0.0 {
            return Ok(Nystrom { value: 0.0, trace, iterations: iter });
        }
        if (value - previous).abs() <= TOL * value.abs() {
            return Ok(Nystrom { value, trace, iterations: iter });
        }
        previous = value;
        v = y;
    }
    Err(Error::NoConvergence(MAX_ITERS))
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}
