use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::set_family::{check_dim, full_bits, SubsetMask};

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The dependence function `Ḟ₀` of a copula family at independence, given
/// as an evaluator on `I^m`.
///
/// Optionally carries the mixed derivative `ḟ₀ = ∂^m Ḟ₀` in closed form and
/// the face restrictions `Ḟ₀|_{x_U = 1}`. A face evaluator takes a full
/// `m`-vector and ignores the coordinates in `U`.
#[derive(Clone)]
pub struct DependenceFunction {
    m: usize,
    eval: Evaluator,
    density: Option<Evaluator>,
    faces: BTreeMap<u32, Evaluator>,
}

impl fmt::Debug for DependenceFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DependenceFunction")
            .field("m", &self.m)
            .field("has_density", &self.density.is_some())
            .field("faces", &self.faces.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Probe coordinates for boundary checks. Irregular so that kinks along
/// `x_i = x_k` or `x_i + x_k = 1` are not hit systematically.
const PROBES: [f64; 5] = [0.07, 0.31, 0.5, 0.64, 0.93];

impl DependenceFunction {
    pub fn new<F>(m: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        check_dim(m)?;
        Ok(DependenceFunction { m, eval: Arc::new(f), density: None, faces: BTreeMap::new() })
    }

    /// Attaches the closed-form mixed derivative `∂^m Ḟ₀/∂x₁…∂x_m`.
    pub fn with_density<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.density = Some(Arc::new(f));
        self
    }

    pub fn without_density(mut self) -> Self {
        self.density = None;
        self
    }

    pub fn with_face<F>(mut self, u: SubsetMask, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if u.dim() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: u.dim() });
        }
        if u.is_empty() {
            return Err(Error::EmptySubset);
        }
        self.faces.insert(u.bits(), Arc::new(f));
        Ok(self)
    }

    /// Registers every proper face restriction by substituting `x_U = 1`
    /// into the evaluator. Valid whenever the evaluator is continuous up to
    /// the boundary.
    pub fn with_faces_by_substitution(mut self) -> Self {
        let full = full_bits(self.m);
        for bits in 1..full {
            let f = Arc::clone(&self.eval);
            let m = self.m;
            self.faces.insert(
                bits,
                Arc::new(move |x: &[f64]| {
                    let mut y = [0.0; crate::set_family::MAX_DIM];
                    for j in 0..m {
                        y[j] = if bits & (1 << j) != 0 { 1.0 } else { x[j] };
                    }
                    f(&y[..m])
                }),
            );
        }
        self
    }

    /// Multiplies the evaluator, density and faces by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let scale = |f: &Evaluator| -> Evaluator {
            let f = Arc::clone(f);
            Arc::new(move |x: &[f64]| c * f(x))
        };
        DependenceFunction {
            m: self.m,
            eval: scale(&self.eval),
            density: self.density.as_ref().map(scale),
            faces: self.faces.iter().map(|(k, f)| (*k, scale(f))).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn density(&self) -> Option<&(dyn Fn(&[f64]) -> f64 + Send + Sync)> {
        self.density.as_deref()
    }

    pub fn face(&self, u: SubsetMask) -> Option<&(dyn Fn(&[f64]) -> f64 + Send + Sync)> {
        self.faces.get(&u.bits()).map(|f| f.as_ref())
    }

    /// Checks `Ḟ₀ = 0` when some `x_k = 0` and on the faces `x_U = 1` with
    /// `|U| = m − 1`, at a fixed set of probe points.
    pub fn check_boundary(&self, tol: f64) -> Result<()> {
        let m = self.m;
        let check = |x: &[f64]| -> Result<()> {
            let v = self.eval(x);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("dependence function at {x:?}")));
            }
            if v.abs() > tol {
                return Err(Error::BoundaryViolation { point: x.to_vec(), value: v.abs() });
            }
            Ok(())
        };
        let free = m - 1;
        let count = PROBES.len().pow(free as u32);
        let mut x = vec![0.0; m];
        for k in 0..m {
            for idx in 0..count {
                let mut rest = idx;
                for j in 0..m {
                    if j == k {
                        x[j] = 0.0;
                    } else {
                        x[j] = PROBES[rest % PROBES.len()];
                        rest /= PROBES.len();
                    }
                }
                check(&x)?;
            }
        }
        for k in 0..m {
            for &t in &PROBES {
                x.fill(1.0);
                x[k] = t;
                check(&x)?;
            }
        }
        Ok(())
    }
}
