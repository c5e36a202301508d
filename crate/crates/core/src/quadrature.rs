//! Gauss–Legendre quadrature: 1-D rules, composite rules split at
//! breakpoints, and tensor products over the cube.
//!
//! Kernels built from `min(x, ξ)` are only piecewise polynomial, so every
//! caller splits the domain at the kinks first and then applies a rule that is
//! exact for the polynomial degree on each piece.

use std::sync::OnceLock;

const CACHED_ORDERS: usize = 64;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, dp)
}

fn cached(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static TABLE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (1..=CACHED_ORDERS).map(gauss_legendre).collect());
    &table[n - 1]
}

/// A 1-D quadrature rule: nodes and weights on some interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    /// `n`-point Gauss–Legendre on `[a, b]`.
    pub fn gauss(n: usize, a: f64, b: f64) -> Self {
        let mut rule = Rule1D { nodes: Vec::with_capacity(n), weights: Vec::with_capacity(n) };
        rule.push_gauss(n, a, b);
        rule
    }

    /// Composite rule: `n` Gauss nodes on each interval between consecutive
    /// breakpoints of `[a, b]`. Breakpoints outside `(a, b)` are ignored.
    pub fn composite(n: usize, a: f64, b: f64, breakpoints: &[f64]) -> Self {
        let cuts = sorted_cuts(a, b, breakpoints);
        let mut rule = Rule1D {
            nodes: Vec::with_capacity(n * (cuts.len() - 1)),
            weights: Vec::with_capacity(n * (cuts.len() - 1)),
        };
        for w in cuts.windows(2) {
            rule.push_gauss(n, w[0], w[1]);
        }
        rule
    }

    /// `segments` equal pieces of `[a, b]` (plus any extra breakpoints), `n`
    /// nodes each.
    pub fn uniform_composite(n: usize, segments: usize, a: f64, b: f64, extra: &[f64]) -> Self {
        let mut cuts: Vec<f64> =
            (1..segments).map(|k| a + (b - a) * k as f64 / segments as f64).collect();
        cuts.extend_from_slice(extra);
        Self::composite(n, a, b, &cuts)
    }

    fn push_gauss(&mut self, n: usize, a: f64, b: f64) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        if n <= CACHED_ORDERS {
            let (z, w) = cached(n);
            for (zi, wi) in z.iter().zip(w) {
                self.nodes.push(mid + half * zi);
                self.weights.push(half * wi);
            }
        } else {
            let (z, w) = gauss_legendre(n);
            for (zi, wi) in z.iter().zip(&w) {
                self.nodes.push(mid + half * zi);
                self.weights.push(half * wi);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = NeumaierSum::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(*x));
        }
        acc.value()
    }
}

/// Sorted, deduplicated cut points `a = c_0 < … < c_k = b`.
pub(crate) fn sorted_cuts(a: f64, b: f64, breakpoints: &[f64]) -> Vec<f64> {
    let mut cuts = Vec::with_capacity(breakpoints.len() + 2);
    cuts.push(a);
    cuts.extend(breakpoints.iter().copied().filter(|&t| t > a && t < b));
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("breakpoints must not be NaN"));
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-15);
    if cuts.len() < 2 {
        cuts = vec![a, b];
    }
    cuts
}

/// Integrates `f` over the product of the given 1-D rules.
pub fn tensor_integrate<F: FnMut(&[f64]) -> f64>(rules: &[Rule1D], mut f: F) -> f64 {
    let dim = rules.len();
    if rules.iter().any(Rule1D::is_empty) {
        return 0.0;
    }
    let mut idx = vec![0usize; dim];
    let mut x: Vec<f64> = rules.iter().map(|r| r.nodes[0]).collect();
    let mut acc = NeumaierSum::default();
    loop {
        let w: f64 = idx.iter().zip(rules).map(|(&i, r)| r.weights[i]).product();
        acc.add(w * f(&x));
        let mut axis = 0;
        loop {
            if axis == dim {
                return acc.value();
            }
            idx[axis] += 1;
            if idx[axis] < rules[axis].len() {
                x[axis] = rules[axis].nodes[idx[axis]];
                break;
            }
            idx[axis] = 0;
            x[axis] = rules[axis].nodes[0];
            axis += 1;
        }
    }
}

/// Same rule on every axis of `I^m`.
pub fn cube_integrate<F: FnMut(&[f64]) -> f64>(rule: &Rule1D, m: usize, f: F) -> f64 {
    let rules = vec![rule.clone(); m];
    tensor_integrate(&rules, f)
}

/// Compensated (Neumaier) summation with a fixed evaluation order.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for v in iter {
            s.add(v);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_nodes_are_symmetric() {
        for n in 1..=40 {
            let (z, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "n = {n}: {total}");
            for i in 0..n {
                assert!((z[i] + z[n - 1 - i]).abs() < 1e-14);
            }
            assert!(z.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        for n in 1..=12 {
            let rule = Rule1D::gauss(n, 0.0, 1.0);
            for k in 0..2 * n {
                let got = rule.integrate(|x| x.powi(k as i32));
                let exact = 1.0 / (k as f64 + 1.0);
                assert!((got - exact).abs() < 1e-14, "n = {n}, k = {k}");
            }
        }
    }

    #[test]
    fn composite_rule_integrates_kinked_function_exactly() {
        let a = 0.37;
        let rule = Rule1D::composite(2, 0.0, 1.0, &[a, 2.0, -1.0]);
        assert_eq!(rule.len(), 4);
        let got = rule.integrate(|t| t.min(a));
        let exact = a * a / 2.0 + a * (1.0 - a);
        assert!((got - exact).abs() < 1e-15);
    }

    #[test]
    fn tensor_rule_matches_product_of_moments() {
        let rule = Rule1D::gauss(3, 0.0, 1.0);
        let got = cube_integrate(&rule, 3, |x| x[0] * x[1] * x[1] * x[2].powi(3));
        assert!((got - 1.0 / 2.0 / 3.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn neumaier_sum_recovers_cancellation() {
        let s: NeumaierSum = [1e16, 1.0, -1e16].into_iter().collect();
        assert_eq!(s.value(), 1.0);
    }
}
