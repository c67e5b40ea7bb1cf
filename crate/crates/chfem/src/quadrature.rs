//! Quadrature rules: Gauss-Legendre on intervals and two fixed rules on the
//! reference triangle.
//!
//! The reference triangle has vertices (0,0), (1,0), (0,1) and area 1/2.
//! Two rules are used throughout the crate:
//!
//! * [`TriangleRule::degree4`] — the classical 6-point symmetric rule (two
//!   orbits of barycentric points), exact for polynomials of degree ≤ 4. This
//!   covers every bilinear P2 integrand (degree ≤ 4): mass, stiffness, Gram.
//! * [`TriangleRule::degree10`] — a 36-point conical-product Gauss rule
//!   (6×6 Gauss points under the Duffy substitution), exact for degree ≤ 10.
//!   This covers every nonlinear term of the quartic/quartic model exactly:
//!   the worst integrand, `b(φ_h) ∇μ_h·∇v_h`, has degree 8 + 1 + 1 = 10.
//!
//! Exactness of both rules is unit-tested against the closed-form monomial
//! integrals ∫_T ξᵃηᵇ = a! b! / (a + b + 2)!.

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[0, 1]`.
///
/// Computed by Newton iteration on the Legendre polynomial (standard
/// root-finding construction, deterministic); weights sum to 1.
pub fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-style initial guess for the i-th root of P_n on [−1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            dp = n as f64 * (x * p - if n == 1 { 1.0 } else { p0 }) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map from [−1, 1] to [0, 1].
        rule.push((0.5 * (x + 1.0), 0.5 * w));
    }
    // Ascending nodes for a deterministic, readable layout.
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}

/// A quadrature rule on the reference triangle (0,0)-(1,0)-(0,1).
///
/// Weights include the reference-triangle measure: they sum to 1/2, so
/// `∫_T g ≈ Σ w_q g(ξ_q, η_q)` without further scaling.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// Reference coordinates (ξ, η) of the quadrature points.
    pub points: Vec<(f64, f64)>,
    /// Weights, summing to the reference area 1/2.
    pub weights: Vec<f64>,
    /// Largest polynomial degree integrated exactly.
    pub exact_degree: usize,
}

impl TriangleRule {
    /// Classical 6-point symmetric rule, exact to degree 4: two orbits of
    /// three points each, given by their barycentric parameter and weight
    /// (weights here normalized to sum to 1 before scaling by the area).
    pub fn degree4() -> TriangleRule {
        const ORBITS: [(f64, f64); 2] = [
            (0.445948490915965, 0.223381589678011),
            (0.091576213509771, 0.109951743655322),
        ];
        let mut points = Vec::with_capacity(6);
        let mut weights = Vec::with_capacity(6);
        for &(a, w) in &ORBITS {
            // Barycentric (a, a, 1−2a) and its two rotations, in (ξ, η).
            let c = 1.0 - 2.0 * a;
            for &(l1, l2) in &[(a, a), (a, c), (c, a)] {
                points.push((l1, l2));
                weights.push(w * 0.5);
            }
        }
        TriangleRule {
            points,
            weights,
            exact_degree: 4,
        }
    }

    /// Conical-product Gauss rule: the Duffy substitution
    /// `(ξ, η) = (u, v(1 − u))` maps the unit square to the triangle with
    /// Jacobian `(1 − u)`. A monomial `ξᵃηᵇ` of total degree `a + b ≤ 10`
    /// becomes `uᵃ(1 − u)ᵇ⁺¹ · vᵇ`, of degree ≤ 11 in each direction, so a
    /// 6×6 tensor Gauss rule (exact to 11 per direction) integrates every
    /// polynomial of total degree ≤ 10 exactly. 36 points.
    pub fn degree10() -> TriangleRule {
        let gl = gauss_legendre_01(6);
        let mut points = Vec::with_capacity(36);
        let mut weights = Vec::with_capacity(36);
        for &(u, wu) in &gl {
            for &(v, wv) in &gl {
                points.push((u, v * (1.0 - u)));
                weights.push(wu * wv * (1.0 - u));
            }
        }
        TriangleRule {
            points,
            weights,
            exact_degree: 10,
        }
    }

    /// Number of quadrature points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when the rule holds no points (never, for the built-in rules).
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Apply the rule to a function on the reference triangle.
    pub fn integrate(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&(x, y), &w)| w * g(x, y))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// ∫_T ξᵃ ηᵇ over the reference triangle = a! b! / (a + b + 2)!.
    fn monomial_integral(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
        fact(a) * fact(b) / fact(a + b + 2)
    }

    fn check_exactness(rule: &TriangleRule) {
        for a in 0..=rule.exact_degree as u32 {
            for b in 0..=(rule.exact_degree as u32 - a) {
                let num = rule.integrate(|x, y| x.powi(a as i32) * y.powi(b as i32));
                let exact = monomial_integral(a, b);
                assert_relative_eq!(num, exact, epsilon = 1e-15, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn degree4_rule_is_exact() {
        let rule = TriangleRule::degree4();
        assert_eq!(rule.len(), 6);
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 0.5, epsilon = 1e-15);
        check_exactness(&rule);
    }

    #[test]
    fn degree10_rule_is_exact() {
        let rule = TriangleRule::degree10();
        assert_eq!(rule.len(), 36);
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 0.5, epsilon = 1e-14);
        check_exactness(&rule);
    }

    #[test]
    fn degree4_not_exact_beyond_declared_degree() {
        // Sanity check that the declared degree is sharp: degree-5 monomials
        // are NOT integrated exactly by the 6-point rule.
        let rule = TriangleRule::degree4();
        let num = rule.integrate(|x, _| x.powi(5));
        assert!((num - monomial_integral(5, 0)).abs() > 1e-8);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..=10 {
            let rule = gauss_legendre_01(n);
            assert_relative_eq!(
                rule.iter().map(|&(_, w)| w).sum::<f64>(),
                1.0,
                epsilon = 1e-14
            );
            // Exact through degree 2n − 1: ∫₀¹ t^d = 1/(d+1).
            for d in 0..=(2 * n - 1) as i32 {
                let num: f64 = rule.iter().map(|&(t, w)| w * t.powi(d)).sum();
                assert_relative_eq!(num, 1.0 / (d as f64 + 1.0), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn gauss_points_symmetric() {
        let rule = gauss_legendre_01(3);
        assert_relative_eq!(rule[1].0, 0.5, epsilon = 1e-15);
        assert_relative_eq!(rule[0].0 + rule[2].0, 1.0, epsilon = 1e-14);
    }
}
