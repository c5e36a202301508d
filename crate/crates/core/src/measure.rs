//! The measure `μ` of the extremal problem and integrals of the Green kernel
//! against it.
//!
//! Every measure is flattened into weighted leaves: Lebesgue measure on `I^m`,
//! a segment `t ↦ a + b t` of the cube (the diagonal, or the anti-diagonal for
//! `m = 2`) carrying Lebesgue measure in `t`, and point masses. Single and
//! double integrals are then sums over leaves and leaf pairs.
//!
//! On a segment the kernel is a polynomial in `t` between the kinks
//! `ξ_j(t) = x_j`, so segment integrals are split there and integrated with a
//! Gauss rule that is exact for the degree on each piece.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green_kernel::{CubePoint, GreenKernel};
use crate::quadrature::{cube_integrate, sorted_cuts, NeumaierSum, Rule1D};
use crate::set_family::{check_dim, MAX_DIM};
use crate::CubeFunction;

/// A finite positive measure on `I^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureJson", into = "MeasureJson")]
pub struct MeasureSpec {
    m: usize,
    kind: MeasureKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureKind {
    Lebesgue,
    /// Image of Lebesgue measure on `[0, 1]` under `t ↦ (t, …, t)`.
    Diagonal,
    /// Image under `t ↦ (1 − t, t)`; `m = 2` only.
    AntiDiagonal,
    PointMasses(Vec<(CubePoint, f64)>),
    WeightedSum(Vec<(MeasureSpec, f64)>),
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    point: Vec<f64>,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct PartJson {
    measure: MeasureJson,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
enum MeasureJson {
    Lebesgue { m: usize },
    Diagonal { m: usize },
    Antidiagonal {
        #[serde(default = "two")]
        m: usize,
    },
    Points { m: usize, atoms: Vec<AtomJson> },
    Sum { m: usize, parts: Vec<PartJson> },
}

fn two() -> usize {
    2
}

impl TryFrom<MeasureJson> for MeasureSpec {
    type Error = Error;
    fn try_from(j: MeasureJson) -> Result<Self> {
        match j {
            MeasureJson::Lebesgue { m } => MeasureSpec::lebesgue(m),
            MeasureJson::Diagonal { m } => MeasureSpec::diagonal(m),
            MeasureJson::Antidiagonal { m } => {
                if m != 2 {
                    return Err(Error::InvalidMeasure("the anti-diagonal measure requires m = 2".into()));
                }
                Ok(MeasureSpec::anti_diagonal())
            }
            MeasureJson::Points { m, atoms } => MeasureSpec::point_masses(
                m,
                atoms
                    .into_iter()
                    .map(|a| Ok((CubePoint::new(a.point)?, a.weight)))
                    .collect::<Result<Vec<_>>>()?,
            ),
            MeasureJson::Sum { m, parts } => MeasureSpec::weighted_sum(
                m,
                parts
                    .into_iter()
                    .map(|p| Ok((MeasureSpec::try_from(p.measure)?, p.weight)))
                    .collect::<Result<Vec<_>>>()?,
            ),
        }
    }
}

impl From<MeasureSpec> for MeasureJson {
    fn from(s: MeasureSpec) -> Self {
        let m = s.m;
        match s.kind {
            MeasureKind::Lebesgue => MeasureJson::Lebesgue { m },
            MeasureKind::Diagonal => MeasureJson::Diagonal { m },
            MeasureKind::AntiDiagonal => MeasureJson::Antidiagonal { m },
            MeasureKind::PointMasses(atoms) => MeasureJson::Points {
                m,
                atoms: atoms
                    .into_iter()
                    .map(|(p, weight)| AtomJson { point: p.into(), weight })
                    .collect(),
            },
            MeasureKind::WeightedSum(parts) => MeasureJson::Sum {
                m,
                parts: parts
                    .into_iter()
                    .map(|(spec, weight)| PartJson { measure: spec.into(), weight })
                    .collect(),
            },
        }
    }
}

fn check_weight(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidMeasure(format!("weight {w} must be finite and positive")))
    }
}

impl MeasureSpec {
    pub fn lebesgue(m: usize) -> Result<Self> {
        check_dim(m)?;
        Ok(MeasureSpec { m, kind: MeasureKind::Lebesgue })
    }

    pub fn diagonal(m: usize) -> Result<Self> {
        check_dim(m)?;
        Ok(MeasureSpec { m, kind: MeasureKind::Diagonal })
    }

    pub fn anti_diagonal() -> Self {
        MeasureSpec { m: 2, kind: MeasureKind::AntiDiagonal }
    }

    pub fn point_masses(m: usize, atoms: Vec<(CubePoint, f64)>) -> Result<Self> {
        check_dim(m)?;
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("point-mass measure needs at least one atom".into()));
        }
        for (p, w) in &atoms {
            if p.dim() != m {
                return Err(Error::DimensionMismatch { expected: m, got: p.dim() });
            }
            check_weight(*w)?;
        }
        Ok(MeasureSpec { m, kind: MeasureKind::PointMasses(atoms) })
    }

    pub fn weighted_sum(m: usize, parts: Vec<(MeasureSpec, f64)>) -> Result<Self> {
        check_dim(m)?;
        if parts.is_empty() {
            return Err(Error::InvalidMeasure("weighted sum needs at least one part".into()));
        }
        for (spec, w) in &parts {
            if spec.m != m {
                return Err(Error::DimensionMismatch { expected: m, got: spec.m });
            }
            check_weight(*w)?;
        }
        Ok(MeasureSpec { m, kind: MeasureKind::WeightedSum(parts) })
    }

    /// `δ(x₁ − x₂) + δ(1 − x₁ − x₂)` on `I²`.
    pub fn diagonal_plus_anti_diagonal() -> Self {
        MeasureSpec {
            m: 2,
            kind: MeasureKind::WeightedSum(vec![
                (MeasureSpec { m: 2, kind: MeasureKind::Diagonal }, 1.0),
                (MeasureSpec::anti_diagonal(), 1.0),
            ]),
        }
    }

    /// `c · μ`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::weighted_sum(self.m, vec![(self.clone(), c)])
    }

    /// Accepts `lebesgue`, `diagonal`, `antidiagonal`, `diagonal+antidiagonal`
    /// or the JSON form.
    pub fn parse(text: &str, m: usize) -> Result<Self> {
        let t = text.trim();
        if t.starts_with('{') {
            let spec: MeasureSpec = serde_json::from_str(t)?;
            if spec.m != m {
                return Err(Error::DimensionMismatch { expected: m, got: spec.m });
            }
            return Ok(spec);
        }
        let parts: Vec<&str> = t.split('+').map(str::trim).collect();
        let mut specs = Vec::with_capacity(parts.len());
        for p in &parts {
            specs.push(match p.to_ascii_lowercase().as_str() {
                "lebesgue" => Self::lebesgue(m)?,
                "diagonal" | "diag" => Self::diagonal(m)?,
                "antidiagonal" | "anti-diagonal" | "anti" => {
                    if m != 2 {
                        return Err(Error::InvalidMeasure("the anti-diagonal measure requires m = 2".into()));
                    }
                    Self::anti_diagonal()
                }
                other => return Err(Error::InvalidMeasure(format!("unknown measure {other:?}"))),
            });
        }
        if specs.len() == 1 {
            Ok(specs.pop().unwrap())
        } else {
            Self::weighted_sum(m, specs.into_iter().map(|s| (s, 1.0)).collect())
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn total_mass(&self) -> f64 {
        self.leaves().iter().map(|(l, w)| w * l.mass()).sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("measure JSON is always serializable")
    }

    fn leaves(&self) -> Vec<(Leaf<'_>, f64)> {
        let mut out = Vec::new();
        self.collect_leaves(1.0, &mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, scale: f64, out: &mut Vec<(Leaf<'a>, f64)>) {
        match &self.kind {
            MeasureKind::Lebesgue => out.push((Leaf::Lebesgue, scale)),
            MeasureKind::Diagonal => out.push((Leaf::Line(Line::diagonal(self.m)), scale)),
            MeasureKind::AntiDiagonal => out.push((Leaf::Line(Line::anti_diagonal()), scale)),
            MeasureKind::PointMasses(atoms) => {
                for (p, w) in atoms {
                    out.push((Leaf::Atom(p.coords()), scale * w));
                }
            }
            MeasureKind::WeightedSum(parts) => {
                for (spec, w) in parts {
                    spec.collect_leaves(scale * w, out);
                }
            }
        }
    }

    /// `∫ f dμ` for a generic function, with a rule that is exact for
    /// polynomials of degree ≤ 15 per axis and resolves the kink at `1/2`
    /// that segment measures create.
    pub fn integrate_function(&self, f: &dyn CubeFunction) -> f64 {
        let m = self.m;
        let mut acc = NeumaierSum::default();
        let mut x = vec![0.0; m];
        for (leaf, w) in self.leaves() {
            let v = match leaf {
                Leaf::Lebesgue => cube_integrate(&cube_rule(m, 0.0, 1.0), m, |y| f.eval(y)),
                Leaf::Line(line) => Rule1D::uniform_composite(8, 16, 0.0, 1.0, &[0.5]).integrate(|t| {
                    line.point_into(t, &mut x);
                    f.eval(&x)
                }),
                Leaf::Atom(p) => f.eval(p),
            };
            acc.add(w * v);
        }
        acc.value()
    }

    pub(crate) fn check_kernel(&self, kernel: &GreenKernel) -> Result<()> {
        if kernel.dim() != self.m {
            return Err(Error::DimensionMismatch { expected: kernel.dim(), got: self.m });
        }
        Ok(())
    }
}

/// Per-axis rule on `[a, b]` for integrating generic functions over a cube
/// with a total node count of at most a few hundred thousand. Exact for
/// polynomials of degree ≤ 15 per axis.
pub(crate) fn cube_rule(m: usize, a: f64, b: f64) -> Rule1D {
    match m {
        0..=2 => Rule1D::uniform_composite(8, 16, a, b, &[]),
        3 => Rule1D::uniform_composite(8, 4, a, b, &[]),
        4 => Rule1D::uniform_composite(8, 2, a, b, &[]),
        _ => Rule1D::gauss(8, a, b),
    }
}

/// `t ↦ offset + slope · t`, `t ∈ [0, 1]`, slopes `±1`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Line {
    m: usize,
    offset: [f64; MAX_DIM],
    slope: [f64; MAX_DIM],
}

impl Line {
    fn diagonal(m: usize) -> Self {
        Line { m, offset: [0.0; MAX_DIM], slope: [1.0; MAX_DIM] }
    }

    fn anti_diagonal() -> Self {
        let mut offset = [0.0; MAX_DIM];
        let mut slope = [1.0; MAX_DIM];
        offset[0] = 1.0;
        slope[0] = -1.0;
        Line { m: 2, offset, slope }
    }

    fn point_into(&self, t: f64, out: &mut [f64]) {
        for j in 0..self.m {
            out[j] = (self.offset[j] + self.slope[j] * t).clamp(0.0, 1.0);
        }
    }

    /// Parameter values where coordinate `j` of the line equals `x_j`.
    fn kinks(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m).map(|j| (x[j] - self.offset[j]) / self.slope[j]).collect()
    }
}

#[derive(Clone, Copy, Debug)]
enum Leaf<'a> {
    Lebesgue,
    Line(Line),
    Atom(&'a [f64]),
}

impl Leaf<'_> {
    fn mass(&self) -> f64 {
        match self {
            Leaf::Atom(_) => 1.0,
            _ => 1.0,
        }
    }
}

/// Gauss nodes per piece for a segment integral of the kernel (degree ≤ m in t).
fn line_nodes(m: usize) -> usize {
    m + 1
}

fn once_lebesgue_exact(kernel: &GreenKernel, x: &[f64]) -> f64 {
    let m = x.len();
    let mut big = [0.0; MAX_DIM];
    let mut small = [0.0; MAX_DIM];
    for j in 0..m {
        big[j] = x[j] - 0.5 * x[j] * x[j];
        small[j] = 0.5 * x[j];
    }
    kernel.combine(&big[..m], &small[..m])
}

fn once_line(kernel: &GreenKernel, line: &Line, x: &[f64]) -> f64 {
    let m = x.len();
    let rule = Rule1D::composite(line_nodes(m), 0.0, 1.0, &line.kinks(x));
    let mut xi = [0.0; MAX_DIM];
    rule.integrate(|t| {
        line.point_into(t, &mut xi[..m]);
        kernel.eval(x, &xi[..m])
    })
}

fn once_leaf(kernel: &GreenKernel, leaf: &Leaf<'_>, x: &[f64]) -> f64 {
    match leaf {
        Leaf::Lebesgue => once_lebesgue_exact(kernel, x),
        Leaf::Line(line) => once_line(kernel, line, x),
        Leaf::Atom(p) => kernel.eval(x, p),
    }
}

/// `∫ G(x, ξ) dμ(ξ)`.
pub fn integrate_kernel_once(kernel: &GreenKernel, mu: &MeasureSpec, x: &CubePoint) -> Result<f64> {
    mu.check_kernel(kernel)?;
    kernel.check_point(x.coords())?;
    Ok(integrate_kernel_once_raw(kernel, mu, x.coords()))
}

pub(crate) fn integrate_kernel_once_raw(kernel: &GreenKernel, mu: &MeasureSpec, x: &[f64]) -> f64 {
    mu.leaves().iter().map(|(leaf, w)| w * once_leaf(kernel, leaf, x)).collect::<NeumaierSum>().value()
}

/// Same integral as [`integrate_kernel_once`] for Lebesgue parts, but by
/// tensor Gauss quadrature split at `ξ_j = x_j` instead of the per-axis
/// antiderivatives.
pub fn integrate_kernel_once_quadrature(
    kernel: &GreenKernel,
    mu: &MeasureSpec,
    x: &CubePoint,
) -> Result<f64> {
    mu.check_kernel(kernel)?;
    kernel.check_point(x.coords())?;
    let x = x.coords();
    let m = x.len();
    let mut acc = NeumaierSum::default();
    for (leaf, w) in mu.leaves() {
        let v = match leaf {
            Leaf::Lebesgue => {
                let rules: Vec<Rule1D> = x.iter().map(|&xj| Rule1D::composite(2, 0.0, 1.0, &[xj])).collect();
                crate::quadrature::tensor_integrate(&rules, |xi| kernel.eval(x, &xi[..m]))
            }
            other => once_leaf(kernel, &other, x),
        };
        acc.add(w * v);
    }
    Ok(acc.value())
}

/// `∫ ∂^m_x G(x, ξ) dμ(ξ)`, the mixed derivative `∂^m/∂x_1…∂x_m` of the
/// single integral. `∂_{x_j} min(x_j, ξ_j) = 𝟙(x_j < ξ_j)` and
/// `∂_{x_j} x_j ξ_j = ξ_j`.
pub fn integrate_kernel_mixed_derivative_once(
    kernel: &GreenKernel,
    mu: &MeasureSpec,
    x: &CubePoint,
) -> Result<f64> {
    mu.check_kernel(kernel)?;
    kernel.check_point(x.coords())?;
    Ok(mixed_derivative_once_raw(kernel, mu, x.coords()))
}

pub(crate) fn mixed_derivative_once_raw(kernel: &GreenKernel, mu: &MeasureSpec, x: &[f64]) -> f64 {
    let m = x.len();
    let mut big = [0.0; MAX_DIM];
    let mut small = [0.0; MAX_DIM];
    let mut at = |xi: &[f64]| {
        for j in 0..m {
            big[j] = if x[j] < xi[j] { 1.0 } else { 0.0 };
            small[j] = xi[j];
        }
        kernel.combine(&big[..m], &small[..m])
    };
    let mut acc = NeumaierSum::default();
    for (leaf, w) in mu.leaves() {
        let v = match leaf {
            Leaf::Lebesgue => {
                let mut b = [0.0; MAX_DIM];
                let mut s = [0.0; MAX_DIM];
                for j in 0..m {
                    b[j] = 1.0 - x[j];
                    s[j] = 0.5;
                }
                kernel.combine(&b[..m], &s[..m])
            }
            Leaf::Line(line) => {
                let rule = Rule1D::composite(line_nodes(m), 0.0, 1.0, &line.kinks(x));
                let mut xi = [0.0; MAX_DIM];
                rule.integrate(|t| {
                    line.point_into(t, &mut xi[..m]);
                    at(&xi[..m])
                })
            }
            Leaf::Atom(p) => at(p),
        };
        acc.add(w * v);
    }
    acc.value()
}

/// `∬ min(t, s)^a (ts)^b dt ds` over `[0, 1]²`.
fn diagonal_moment(a: usize, b: usize) -> f64 {
    2.0 / (((a + b + 1) * (a + 2 * b + 2)) as f64)
}

fn pair_closed(kernel: &GreenKernel, p: &Leaf<'_>, q: &Leaf<'_>) -> Option<f64> {
    let m = kernel.dim();
    match (p, q) {
        (Leaf::Lebesgue, Leaf::Lebesgue) => {
            let big = vec![1.0 / 3.0; m];
            let small = vec![0.25; m];
            Some(kernel.combine(&big, &small))
        }
        (Leaf::Line(a), Leaf::Line(b)) if *a == Line::diagonal(m) && *b == Line::diagonal(m) => {
            let mut acc = diagonal_moment(m, 0);
            for (u, coef) in kernel.terms() {
                let k = u.len();
                acc -= coef as f64 * diagonal_moment(m - k, k);
            }
            Some(acc)
        }
        (Leaf::Atom(x), Leaf::Atom(y)) => Some(kernel.eval(x, y)),
        _ => None,
    }
}

/// Outer breakpoints for a segment `outer` integrated against the single
/// integral over segment `inner`: the values of `s` where two inner kinks
/// cross or a kink leaves `[0, 1]`.
fn line_pair_breakpoints(outer: &Line, inner: &Line) -> Vec<f64> {
    let m = outer.m;
    let alpha: Vec<f64> = (0..m).map(|j| (outer.offset[j] - inner.offset[j]) / inner.slope[j]).collect();
    let beta: Vec<f64> = (0..m).map(|j| outer.slope[j] / inner.slope[j]).collect();
    let mut cuts = Vec::new();
    for i in 0..m {
        if beta[i] != 0.0 {
            cuts.push(-alpha[i] / beta[i]);
            cuts.push((1.0 - alpha[i]) / beta[i]);
        }
        for k in i + 1..m {
            let db = beta[i] - beta[k];
            if db != 0.0 {
                cuts.push((alpha[k] - alpha[i]) / db);
            }
        }
    }
    cuts
}

fn pair_quadrature(kernel: &GreenKernel, p: &Leaf<'_>, q: &Leaf<'_>) -> f64 {
    let m = kernel.dim();
    match (p, q) {
        (Leaf::Atom(x), other) | (other, Leaf::Atom(x)) => once_leaf(kernel, other, x),
        (Leaf::Lebesgue, Leaf::Lebesgue) => {
            // The single integral is a polynomial of degree 2 in each x_j.
            cube_integrate(&Rule1D::gauss(2, 0.0, 1.0), m, |x| once_lebesgue_exact(kernel, x))
        }
        (Leaf::Line(line), Leaf::Lebesgue) | (Leaf::Lebesgue, Leaf::Line(line)) => {
            let mut x = [0.0; MAX_DIM];
            Rule1D::gauss(m + 1, 0.0, 1.0).integrate(|s| {
                line.point_into(s, &mut x[..m]);
                once_lebesgue_exact(kernel, &x[..m])
            })
        }
        (Leaf::Line(outer), Leaf::Line(inner)) => {
            let cuts = sorted_cuts(0.0, 1.0, &line_pair_breakpoints(outer, inner));
            let mut x = [0.0; MAX_DIM];
            let mut acc = NeumaierSum::default();
            for w in cuts.windows(2) {
                let rule = Rule1D::gauss(m + 2, w[0], w[1]);
                acc.add(rule.integrate(|s| {
                    outer.point_into(s, &mut x[..m]);
                    once_line(kernel, inner, &x[..m])
                }));
            }
            acc.value()
        }
    }
}

fn bilinear<F>(mu: &MeasureSpec, mut pair: F) -> f64
where
    F: FnMut(&Leaf<'_>, &Leaf<'_>) -> f64,
{
    let leaves = mu.leaves();
    let mut acc = NeumaierSum::default();
    for (i, (p, wp)) in leaves.iter().enumerate() {
        acc.add(wp * wp * pair(p, p));
        for (q, wq) in &leaves[i + 1..] {
            acc.add(2.0 * wp * wq * pair(p, q));
        }
    }
    acc.value()
}

/// `λ = ∬ G dμ dμ`, closed form where available, quadrature otherwise.
pub fn lambda(kernel: &GreenKernel, mu: &MeasureSpec) -> Result<f64> {
    mu.check_kernel(kernel)?;
    Ok(bilinear(mu, |p, q| pair_closed(kernel, p, q).unwrap_or_else(|| pair_quadrature(kernel, p, q))))
}

/// `λ` from closed forms only; `None` if some pair of parts has none
/// (anything involving the anti-diagonal, or mixed Lebesgue/segment pairs).
pub fn lambda_closed_form(kernel: &GreenKernel, mu: &MeasureSpec) -> Result<Option<f64>> {
    mu.check_kernel(kernel)?;
    let leaves = mu.leaves();
    for (p, _) in &leaves {
        for (q, _) in &leaves {
            if pair_closed(kernel, p, q).is_none() {
                return Ok(None);
            }
        }
    }
    Ok(Some(bilinear(mu, |p, q| pair_closed(kernel, p, q).expect("checked above"))))
}

/// `λ` with every pair of parts integrated by quadrature.
pub fn lambda_quadrature(kernel: &GreenKernel, mu: &MeasureSpec) -> Result<f64> {
    mu.check_kernel(kernel)?;
    Ok(bilinear(mu, |p, q| pair_quadrature(kernel, p, q)))
}
