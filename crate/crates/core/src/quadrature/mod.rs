//! One-dimensional Gauss–Legendre rules, spherical product rules, Lebedev
//! rules, and a fixed-order pairwise reduction.

mod lebedev;
mod lebedev_table;

use std::f64::consts::PI;

use nalgebra::Vector3;

pub use lebedev::{lebedev, lebedev_covering, LebedevRule, LEBEDEV_ORDERS};

/// Discrete measure on the unit sphere: directions and weights (sr).
#[derive(Debug, Clone, Default)]
pub struct AngularRule {
    pub directions: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl AngularRule {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vector3<f64>, f64)> {
        self.directions.iter().zip(self.weights.iter().copied())
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// Σ wᵢ f(nᵢ).
    pub fn integrate(&self, mut f: impl FnMut(&Vector3<f64>) -> f64) -> f64 {
        let terms: Vec<f64> = self.iter().map(|(n, w)| w * f(n)).collect();
        pairwise_sum(&terms)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
///
/// Newton iteration on the three-term recurrence; accurate to a few ulp for
/// the orders used here (up to several thousand nodes).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
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
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

/// Right-handed orthonormal pair `(t1, t2)` with `t1 × t2 = pole`.
pub fn tangent_frame(pole: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if pole.x.abs() < 0.6 {
        Vector3::x()
    } else if pole.y.abs() < 0.6 {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let t1 = helper.cross(pole).normalize();
    let t2 = pole.cross(&t1);
    (t1, t2)
}

/// Product rule about `pole`: Gauss–Legendre in `cos θ` over each of the
/// intervals delimited by `cos_breaks`, times `n_phi` equispaced azimuths.
///
/// `cos_breaks` must be ascending within `[-1, 1]`; `n_cos` nodes are used per
/// interval. The rule is exact for `cos^a θ · trig_b(φ)` with `a ≤ 2 n_cos - 1`
/// and trigonometric degree `b < n_phi` on every interval.
pub fn polar_product_rule(
    pole: &Vector3<f64>,
    cos_breaks: &[f64],
    n_cos: usize,
    n_phi: usize,
) -> AngularRule {
    let (x, w) = gauss_legendre(n_cos);
    polar_product_rule_with(pole, cos_breaks, &x, &w, n_phi)
}

/// [`polar_product_rule`] with precomputed Gauss–Legendre nodes on `[-1, 1]`.
pub fn polar_product_rule_with(
    pole: &Vector3<f64>,
    cos_breaks: &[f64],
    x: &[f64],
    w: &[f64],
    n_phi: usize,
) -> AngularRule {
    let pole = pole.normalize();
    let (t1, t2) = tangent_frame(&pole);
    let dphi = 2.0 * PI / n_phi as f64;
    let trig: Vec<(f64, f64)> = (0..n_phi)
        .map(|j| {
            let phi = (j as f64 + 0.5) * dphi;
            (phi.cos(), phi.sin())
        })
        .collect();
    let mut rule = AngularRule::default();
    for pair in cos_breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        for (xi, wi) in x.iter().zip(w) {
            let c = mid + half * xi;
            let sn = (1.0 - c * c).max(0.0).sqrt();
            for &(cp, sp) in &trig {
                rule.directions
                    .push(pole * c + t1 * (sn * cp) + t2 * (sn * sp));
                rule.weights.push(wi * half * dphi);
            }
        }
    }
    rule
}

/// Outward hemisphere about `pole` (`cos θ ∈ [0, 1]`), `n_cos × 2 n_cos` nodes.
pub fn hemisphere_rule(pole: &Vector3<f64>, n_cos: usize) -> AngularRule {
    polar_product_rule(pole, &[0.0, 1.0], n_cos, 2 * n_cos)
}

/// Full sphere product rule about `pole`.
pub fn sphere_product_rule(pole: &Vector3<f64>, n_cos: usize, n_phi: usize) -> AngularRule {
    polar_product_rule(pole, &[-1.0, 1.0], n_cos, n_phi)
}

/// Pairwise (tree) sum in a fixed order; the result depends only on the
/// input order, never on how work was scheduled.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_reduce(values, 0.0, |a, b| a + b)
}

/// Pairwise tree reduction with a fixed split point.
pub fn pairwise_reduce<T: Clone>(values: &[T], zero: T, add: impl Fn(T, T) -> T + Copy) -> T {
    match values.len() {
        0 => zero,
        1 => values[0].clone(),
        n if n <= 8 => {
            let mut acc = values[0].clone();
            for v in &values[1..] {
                acc = add(acc, v.clone());
            }
            acc
        }
        n => {
            let mid = n / 2;
            add(
                pairwise_reduce(&values[..mid], zero.clone(), add),
                pairwise_reduce(&values[mid..], zero, add),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1, 2, 5, 16, 40, 101] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            for k in 0..(2 * n) {
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((got - exact).abs() < 1e-12, "n={n} k={k}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn large_gauss_legendre_rule_is_accurate() {
        let (x, w) = gauss_legendre(2000);
        // ∫ cos(300 x) dx over [-1, 1] = 2 sin(300)/300
        let got: f64 = x.iter().zip(&w).map(|(x, w)| w * (300.0 * x).cos()).sum();
        assert!((got - 2.0 * 300f64.sin() / 300.0).abs() < 1e-12);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn hemisphere_rule_integrates_cosine() {
        let pole = Vector3::new(0.3, -0.5, 0.8).normalize();
        let rule = hemisphere_rule(&pole, 6);
        assert_relative_eq!(rule.total_weight(), 2.0 * PI, epsilon = 1e-13);
        let c = rule.integrate(|n| n.dot(&pole));
        assert_relative_eq!(c, PI, epsilon = 1e-13);
        let c2 = rule.integrate(|n| n.dot(&pole).powi(2));
        assert_relative_eq!(c2, 2.0 * PI / 3.0, epsilon = 1e-13);
    }

    #[test]
    fn sphere_product_rule_second_moments() {
        let rule = sphere_product_rule(&Vector3::new(1.0, 2.0, 3.0), 8, 16);
        assert_relative_eq!(rule.total_weight(), 4.0 * PI, epsilon = 1e-13);
        let xx = rule.integrate(|n| n.x * n.x);
        let xy = rule.integrate(|n| n.x * n.y);
        assert_relative_eq!(xx, 4.0 * PI / 3.0, epsilon = 1e-13);
        assert!(xy.abs() < 1e-13);
    }

    #[test]
    fn pairwise_sum_matches_naive_sum() {
        let v: Vec<f64> = (0..1000).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        assert_relative_eq!(pairwise_sum(&v), v.iter().sum::<f64>(), epsilon = 1e-13);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
