//! The Green function of the boundary-value problem for a monotone family.
//!
//! For a family `𝓜` the kernel is
//!
//! ```text
//! G(x, ξ) = ∏_j min(x_j, ξ_j) − Σ_{U∈𝓜} a_U ∏_{j∉U} min(x_j, ξ_j) ∏_{j∈U} x_j ξ_j
//! ```
//!
//! where the integers `a_U` satisfy `Σ_{V⊆U, V∈𝓜} a_V = 1` for every member
//! `U`. With that recurrence the kernel vanishes on each face `x_U = 1`,
//! `U ∈ 𝓜`, and it is the covariance of the Gaussian limit of the matching
//! empirical process.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::set_family::{MonotoneFamily, SubsetMask};

/// A point of the unit cube `I^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CubePoint(Vec<f64>);

impl CubePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        for (index, &value) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::PointOutsideCube { index, value });
            }
        }
        Ok(CubePoint(coords))
    }

    /// Parses `"0.3,0.7"`.
    pub fn parse(text: &str) -> Result<Self> {
        let coords = text
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad coordinate {p:?} in point {text:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Self::new(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for CubePoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        CubePoint::new(v)
    }
}

impl From<CubePoint> for Vec<f64> {
    fn from(p: CubePoint) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for CubePoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Dimension up to which [`GreenKernel::eval`] expands all `2^m` mixed
/// products with a table on the stack.
const TABLE_DIM: usize = 6;

/// Green function of the problem for one monotone family.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenKernel {
    family: MonotoneFamily,
    coefficients: Vec<i64>,
}

/// Solves `Σ_{V⊆U, V∈𝓜} a_V = 1` in increasing order of `|U|`.
pub fn coefficients(family: &MonotoneFamily) -> GreenKernel {
    let members = family.members();
    let mut a: Vec<i64> = Vec::with_capacity(members.len());
    // Members are sorted by popcount, so proper subsets always come first.
    for (i, &u) in members.iter().enumerate() {
        let below: i64 = members[..i]
            .iter()
            .zip(&a)
            .filter(|(v, _)| v.is_subset_of(u))
            .map(|(_, &av)| av)
            .sum();
        a.push(1 - below);
    }
    GreenKernel { family: family.clone(), coefficients: a }
}

#[derive(Serialize, Deserialize)]
struct CoefficientJson {
    set: Vec<usize>,
    a: i64,
}

#[derive(Serialize, Deserialize)]
struct KernelJson {
    m: usize,
    family: Vec<Vec<usize>>,
    coefficients: Vec<CoefficientJson>,
}

impl GreenKernel {
    pub fn new(family: &MonotoneFamily) -> Self {
        coefficients(family)
    }

    /// Covariance `∏ min(x_j, ξ_j)` of the Brownian sheet (empty family).
    pub fn brownian_sheet(m: usize) -> Result<Self> {
        Ok(Self::new(&MonotoneFamily::empty(m)?))
    }

    /// Covariance `∏ (min(x_j, ξ_j) − x_j ξ_j)` of the Brownian pillow.
    pub fn brownian_pillow(m: usize) -> Result<Self> {
        Ok(Self::new(&MonotoneFamily::all_nonempty(m)?))
    }

    /// Covariance `∏ min(x_j, ξ_j) − ∏ x_j ξ_j` of the tucked Brownian sheet.
    pub fn tucked_sheet(m: usize) -> Result<Self> {
        Ok(Self::new(&MonotoneFamily::top(m)?))
    }

    pub fn family(&self) -> &MonotoneFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    /// `(U, a_U)` pairs in family order.
    pub fn terms(&self) -> impl Iterator<Item = (SubsetMask, i64)> + '_ {
        self.family.members().iter().copied().zip(self.coefficients.iter().copied())
    }

    pub fn coefficient(&self, u: SubsetMask) -> Option<i64> {
        self.family
            .members()
            .binary_search(&u)
            .ok()
            .map(|i| self.coefficients[i])
    }

    /// `Σ_{V⊆U, V∈𝓜} a_V − 1` for a member `U`; zero for a valid kernel.
    pub fn recurrence_residual(&self, u: SubsetMask) -> i64 {
        self.terms().filter(|(v, _)| v.is_subset_of(u)).map(|(_, a)| a).sum::<i64>() - 1
    }

    /// Evaluates `G(x, ξ)` after checking dimensions.
    pub fn evaluate(&self, x: &CubePoint, xi: &CubePoint) -> Result<f64> {
        self.check_point(x.coords())?;
        self.check_point(xi.coords())?;
        Ok(self.eval(x.coords(), xi.coords()))
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// Unchecked evaluation; both slices must have length `m`.
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> f64 {
        let m = self.dim();
        debug_assert_eq!(x.len(), m);
        debug_assert_eq!(xi.len(), m);
        let mut mins = [0.0f64; crate::set_family::MAX_DIM];
        let mut prods = [0.0f64; crate::set_family::MAX_DIM];
        for j in 0..m {
            mins[j] = x[j].min(xi[j]);
            prods[j] = x[j] * xi[j];
        }
        self.combine(&mins[..m], &prods[..m])
    }

    /// `Σ` over the kernel's terms with per-coordinate factors `K_j` (for
    /// `j ∉ U`) and `k_j` (for `j ∈ U`). Every integral of the kernel against
    /// a product measure reduces to this with integrated factors.
    pub fn combine(&self, big: &[f64], small: &[f64]) -> f64 {
        let m = big.len();
        let head: f64 = big.iter().product();
        if self.family.is_empty() {
            return head;
        }
        if m <= TABLE_DIM {
            let mut table = [0.0f64; 1 << TABLE_DIM];
            table[0] = 1.0;
            for j in 0..m {
                let width = 1usize << j;
                for mask in 0..width {
                    let t = table[mask];
                    table[mask | width] = t * small[j];
                    table[mask] = t * big[j];
                }
            }
            let mut acc = head;
            for (u, a) in self.terms() {
                acc -= a as f64 * table[u.bits() as usize];
            }
            acc
        } else {
            let mut acc = head;
            for (u, a) in self.terms() {
                let bits = u.bits();
                let mut term = 1.0;
                for j in 0..m {
                    term *= if bits & (1 << j) != 0 { small[j] } else { big[j] };
                }
                acc -= a as f64 * term;
            }
            acc
        }
    }

    /// Faces `x_U = 1` on which the kernel vanishes identically.
    pub fn vanishing_faces(&self) -> Vec<SubsetMask> {
        self.family.members().to_vec()
    }

    /// Symmetric matrix `G(p_i, p_j)`, computed row-parallel with each entry
    /// produced by exactly one evaluation.
    pub fn gram_matrix(&self, points: &[CubePoint]) -> Result<DMatrix<f64>> {
        for p in points {
            self.check_point(p.coords())?;
        }
        let raw: Vec<&[f64]> = points.iter().map(|p| p.coords()).collect();
        Ok(self.gram_matrix_raw(&raw))
    }

    pub(crate) fn gram_matrix_raw(&self, points: &[&[f64]]) -> DMatrix<f64> {
        let n = points.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| self.eval(points[i], points[j])).collect())
            .collect();
        let mut g = DMatrix::zeros(n, n);
        for (i, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + off;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// `{"m", "family", "coefficients": [{"set", "a"}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let doc = KernelJson {
            m: self.dim(),
            family: self.family.to_coord_lists(),
            coefficients: self
                .terms()
                .map(|(u, a)| CoefficientJson { set: u.coords(), a })
                .collect(),
        };
        serde_json::to_value(doc).expect("kernel JSON is always serializable")
    }

    /// Reads the JSON form back. Coefficients, when present, must agree with
    /// the recurrence.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: KernelJson = serde_json::from_value(value.clone())?;
        let masks = doc
            .family
            .iter()
            .map(|c| SubsetMask::from_coords(c, doc.m))
            .collect::<Result<Vec<_>>>()?;
        let kernel = Self::new(&MonotoneFamily::new(masks, doc.m)?);
        for c in &doc.coefficients {
            let u = SubsetMask::from_coords(&c.set, doc.m)?;
            match kernel.coefficient(u) {
                Some(a) if a == c.a => {}
                Some(a) => {
                    return Err(Error::Parse(format!(
                        "coefficient for {u} is {} but the recurrence gives {a}",
                        c.a
                    )))
                }
                None => return Err(Error::Parse(format!("{u} is not a family member"))),
            }
        }
        Ok(kernel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::set_family::family_for_known_margins;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(c: &[f64]) -> CubePoint {
        CubePoint::new(c.to_vec()).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
        (0..m).map(|_| rng.random::<f64>()).collect()
    }

    fn sheet(x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| a.min(*b)).product()
    }

    fn pillow(x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| a.min(*b) - a * b).product()
    }

    fn tucked(x: &[f64], y: &[f64]) -> f64 {
        sheet(x, y) - x.iter().zip(y).map(|(a, b)| a * b).product::<f64>()
    }

    fn empty_margins(x: &[f64], y: &[f64]) -> f64 {
        let m = x.len();
        let k: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
        let big: Vec<f64> = x.iter().zip(y).map(|(a, b)| a.min(*b)).collect();
        let mut s = big.iter().product::<f64>();
        for j in 0..m {
            let rest: f64 = (0..m).filter(|&i| i != j).map(|i| k[i]).product();
            s -= big[j] * rest;
        }
        s + (m as f64 - 1.0) * k.iter().product::<f64>()
    }

    #[test]
    fn coefficient_examples() {
        let top = GreenKernel::tucked_sheet(3).unwrap();
        assert_eq!(top.terms().collect::<Vec<_>>(), vec![(SubsetMask::full(3).unwrap(), 1)]);

        let m = 3;
        let k = GreenKernel::new(&family_for_known_margins(SubsetMask::empty(m).unwrap(), m).unwrap());
        for (u, a) in k.terms() {
            if u.len() == m {
                assert_eq!(a, -2);
            } else {
                assert_eq!(a, 1);
            }
        }

        let p = GreenKernel::brownian_pillow(2).unwrap();
        let got: Vec<(String, i64)> = p.terms().map(|(u, a)| (u.to_string(), a)).collect();
        assert_eq!(got, vec![("{1}".into(), 1), ("{2}".into(), 1), ("{1,2}".into(), -1)]);
    }

    #[test]
    fn evaluate_examples() {
        let sheet = GreenKernel::brownian_sheet(2).unwrap();
        let v = sheet.evaluate(&pt(&[0.3, 0.7]), &pt(&[0.5, 0.2])).unwrap();
        assert!((v - 0.06).abs() < 1e-15);

        let top = GreenKernel::tucked_sheet(2).unwrap();
        assert_eq!(top.evaluate(&pt(&[1.0, 1.0]), &pt(&[1.0, 1.0])).unwrap(), 0.0);

        let p = GreenKernel::brownian_pillow(2).unwrap();
        let v = p.evaluate(&pt(&[0.5, 0.5]), &pt(&[0.5, 0.5])).unwrap();
        assert!((v - 0.0625).abs() < 1e-15);

        assert_eq!(
            p.evaluate(&pt(&[0.5, 0.5, 0.5]), &pt(&[0.5, 0.5])),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        );
    }

    #[test]
    fn vanishing_faces_are_the_members() {
        assert_eq!(GreenKernel::tucked_sheet(3).unwrap().vanishing_faces(), vec![SubsetMask::full(3).unwrap()]);
        let f = family_for_known_margins(SubsetMask::empty(3).unwrap(), 3).unwrap();
        assert_eq!(GreenKernel::new(&f).vanishing_faces().len(), 4);
        assert!(GreenKernel::brownian_sheet(3).unwrap().vanishing_faces().is_empty());
    }

    #[test]
    fn gram_matrix_examples() {
        let top = GreenKernel::tucked_sheet(3).unwrap();
        let g = top.gram_matrix(&[pt(&[1.0, 1.0, 1.0])]).unwrap();
        assert_eq!(g[(0, 0)], 0.0);

        let p = GreenKernel::brownian_pillow(2).unwrap();
        let g = p.gram_matrix(&[pt(&[0.3, 0.6]), pt(&[0.3, 0.6])]).unwrap();
        assert_eq!(g[(0, 0)], g[(0, 1)]);
        assert_eq!(g[(1, 1)], g[(1, 0)]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..3).map(|_| random_point(&mut rng, 2)).collect();
        let cube: Vec<CubePoint> = pts.iter().map(|p| pt(p)).collect();
        let g = p.gram_matrix(&cube).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((g[(i, j)] - pillow(&pts[i], &pts[j])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn closed_forms_for_canonical_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 2..=5 {
            let s = GreenKernel::brownian_sheet(m).unwrap();
            let p = GreenKernel::brownian_pillow(m).unwrap();
            let t = GreenKernel::tucked_sheet(m).unwrap();
            let e = GreenKernel::new(&family_for_known_margins(SubsetMask::empty(m).unwrap(), m).unwrap());
            for _ in 0..1000 {
                let x = random_point(&mut rng, m);
                let y = random_point(&mut rng, m);
                assert!((s.eval(&x, &y) - sheet(&x, &y)).abs() < 1e-14);
                assert!((p.eval(&x, &y) - pillow(&x, &y)).abs() < 1e-14);
                assert!((t.eval(&x, &y) - tucked(&x, &y)).abs() < 1e-14);
                assert!((e.eval(&x, &y) - empty_margins(&x, &y)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kernel_json_round_trip() {
        let k = GreenKernel::new(&family_for_known_margins(SubsetMask::empty(3).unwrap(), 3).unwrap());
        let json = k.to_json();
        assert_eq!(json["m"], 3);
        assert_eq!(json["coefficients"][3]["a"], -2);
        assert_eq!(GreenKernel::from_json(&json).unwrap(), k);

        let mut bad = json.clone();
        bad["coefficients"][0]["a"] = serde_json::json!(5);
        assert!(GreenKernel::from_json(&bad).is_err());
    }

    #[test]
    fn wide_dimension_uses_direct_expansion() {
        let m = 8;
        let p = GreenKernel::brownian_pillow(m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = random_point(&mut rng, m);
            let y = random_point(&mut rng, m);
            assert!((p.eval(&x, &y) - pillow(&x, &y)).abs() < 1e-15);
        }
    }

    mod props {
        use super::*;
        use crate::set_family::enumerate_monotone_families;
        use proptest::prelude::*;
        use rand::Rng;

        fn families() -> Vec<MonotoneFamily> {
            let mut all = enumerate_monotone_families(2).unwrap();
            all.extend(enumerate_monotone_families(3).unwrap());
            all
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn symmetric_and_vanishing_on_boundary(idx in 0usize..24, seed in any::<u64>()) {
                let fams = families();
                let kernel = GreenKernel::new(&fams[idx % fams.len()]);
                let m = kernel.dim();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for (u, _) in kernel.terms() {
                    prop_assert_eq!(kernel.recurrence_residual(u), 0);
                }
                for _ in 0..200 {
                    let x = random_point(&mut rng, m);
                    let y = random_point(&mut rng, m);
                    prop_assert_eq!(kernel.eval(&x, &y).to_bits(), kernel.eval(&y, &x).to_bits());
                    let mut x0 = x.clone();
                    x0[rng.random_range(0..m)] = 0.0;
                    prop_assert_eq!(kernel.eval(&x0, &y), 0.0);
                    for u in kernel.vanishing_faces() {
                        let mut xu = x.clone();
                        for j in u.indices() {
                            xu[j] = 1.0;
                        }
                        prop_assert!(kernel.eval(&xu, &y).abs() <= 1e-14);
                    }
                }
            }

            #[test]
            fn gram_matrices_are_positive_semidefinite(m in 2usize..=4, pick in 0usize..32, size in 1usize..=12, seed in any::<u64>()) {
                let mut kernels = vec![
                    GreenKernel::brownian_sheet(m).unwrap(),
                    GreenKernel::brownian_pillow(m).unwrap(),
                    GreenKernel::tucked_sheet(m).unwrap(),
                ];
                for v in 0..(1u32 << m) {
                    let fam = family_for_known_margins(SubsetMask::new(v, m).unwrap(), m).unwrap();
                    kernels.push(GreenKernel::new(&fam));
                }
                let kernel = &kernels[pick % kernels.len()];
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pts: Vec<CubePoint> = (0..size).map(|_| pt(&random_point(&mut rng, m))).collect();
                let g = kernel.gram_matrix(&pts).unwrap();
                let min = g.symmetric_eigenvalues().min();
                prop_assert!(min >= -1e-10, "min eigenvalue {}", min);
            }
        }
    }
}
