//! Potential, mobility, and the derived constants of the energy analysis.
//!
//! The model is fixed by three ingredients:
//!
//! * the interface parameter `γ > 0`,
//! * a quartic potential `f(s) = c₄s⁴ + c₃s³ + c₂s² + c₁s + c₀` with `c₄ > 0`,
//! * a polynomial mobility with floor, `b(s) = p(s) + b_floor`, required to be
//!   strictly positive on a declared admissible range `[−A, A]`.
//!
//! Validation derives the constants used by the relative-energy diagnostics:
//! `f₁ = max(0, −min f'', −min f)` (the second minimum taken over the
//! admissible range, the first one global since `f''` is an upward parabola)
//! and `α = max(γ, γ + f₁)`, so that `f(s) ≥ −f₁` and `f''(s) ≥ −f₁` hold and
//! the regularized relative energy is coercive.

use crate::error::{Error, Result};

/// Number of scan intervals used when locating polynomial extrema on a range.
const MIN_SCAN_INTERVALS: usize = 4096;

/// Evaluate a polynomial given by ascending coefficients via Horner's rule.
fn poly_eval(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

/// Ascending coefficients of the derivative polynomial.
fn poly_deriv(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Minimum of a polynomial over `[lo, hi]`: compares the values on a fine
/// sample grid (including both endpoints) with the values at interior
/// critical points, which are located by bracketing sign changes of the
/// derivative between grid points and bisecting each bracket to machine
/// precision. Returns `(min value, argmin)`. Deterministic.
fn poly_min_on(coeffs: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let deriv = poly_deriv(coeffs);
    let mut best = (poly_eval(coeffs, lo), lo);
    let mut prev_s = lo;
    let mut prev_d = poly_eval(&deriv, lo);
    for i in 1..=MIN_SCAN_INTERVALS {
        let s = lo + (hi - lo) * i as f64 / MIN_SCAN_INTERVALS as f64;
        let val = poly_eval(coeffs, s);
        if val < best.0 {
            best = (val, s);
        }
        let d = poly_eval(&deriv, s);
        if prev_d == 0.0 || (prev_d < 0.0) != (d < 0.0) {
            // Bisect the bracket [prev_s, s]. The generous iteration cap lets
            // the bracket collapse even across subnormal magnitudes, so a
            // critical point at exactly 0.0 is found exactly.
            let (mut a, mut fa, mut b) = (prev_s, prev_d, s);
            for _ in 0..2000 {
                let m = 0.5 * (a + b);
                if m == a || m == b {
                    break;
                }
                let fm = poly_eval(&deriv, m);
                if fm == 0.0 || (fa < 0.0) == (fm < 0.0) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            let crit = 0.5 * (a + b);
            let val = poly_eval(coeffs, crit);
            if val < best.0 {
                best = (val, crit);
            }
        }
        prev_s = s;
        prev_d = d;
    }
    best
}

/// Maximum of a polynomial over a range (via the minimum of its negation).
fn poly_max_on(coeffs: &[f64], lo: f64, hi: f64) -> f64 {
    let neg: Vec<f64> = coeffs.iter().map(|c| -c).collect();
    -poly_min_on(&neg, lo, hi).0
}

/// Raw model inputs prior to validation.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    /// Interface parameter γ.
    pub gamma: f64,
    /// Ascending coefficients `[c₀, c₁, c₂, c₃, c₄]` of the quartic potential.
    pub f_coeffs: [f64; 5],
    /// Ascending coefficients of the polynomial part of the mobility.
    pub b_coeffs: Vec<f64>,
    /// Constant floor added to the mobility polynomial.
    pub b_floor: f64,
    /// Admissible range `[−A, A]` (given as `(lo, hi)`) on which the bounds
    /// for `b` and `f` are enforced and reported.
    pub admissible_range: (f64, f64),
}

impl ModelInputs {
    /// Coefficients of the factored double well `a (s − c)² (s + c)²`.
    pub fn factored_potential(a: f64, c: f64) -> [f64; 5] {
        // a (s² − c²)² = a s⁴ − 2 a c² s² + a c⁴
        [a * c.powi(4), 0.0, -2.0 * a * c * c, 0.0, a]
    }

    /// The benchmark instance used throughout the guide and the studies:
    /// `γ = 0.003`, `f(s) = 0.3 (s − 0.99)² (s + 0.99)²`,
    /// `b(s) = (1 − s)² (1 + s)² + 10⁻³`, admissible range `[−4, 4]`.
    pub fn reference() -> Self {
        ModelInputs {
            gamma: 0.003,
            f_coeffs: Self::factored_potential(0.3, 0.99),
            // (1 − s)² (1 + s)² = (1 − s²)² = 1 − 2s² + s⁴
            b_coeffs: vec![1.0, 0.0, -2.0, 0.0, 1.0],
            b_floor: 1e-3,
            admissible_range: (-4.0, 4.0),
        }
    }

    /// Validate the inputs and derive the analysis constants.
    pub fn validate(self) -> Result<ModelParams> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::NonPositiveGamma(self.gamma));
        }
        let c4 = self.f_coeffs[4];
        if !(c4 > 0.0) {
            return Err(Error::PotentialUnboundedBelow(c4));
        }
        let (lo, hi) = self.admissible_range;
        assert!(lo < hi, "admissible range must be non-empty");

        // Mobility bounds on the admissible range (the non-degeneracy
        // requirement). The floor is a constant shift, so the extrema of the
        // polynomial part translate exactly; keeping the floor out of the
        // coefficient array preserves cases like b(1) = floor exactly.
        let b_poly = if self.b_coeffs.is_empty() {
            vec![0.0]
        } else {
            self.b_coeffs.clone()
        };
        let (p_min, b_argmin) = poly_min_on(&b_poly, lo, hi);
        let b_min = p_min + self.b_floor;
        if !(b_min > 0.0) {
            return Err(Error::MobilityNotBoundedBelow {
                min: b_min,
                at: b_argmin,
            });
        }
        let b_max = poly_max_on(&b_poly, lo, hi) + self.b_floor;

        // f'' is an upward parabola (c₄ > 0); its global minimum is at the
        // vertex s* = −c₃ / (4 c₄).
        let d2 = poly_deriv(&poly_deriv(&self.f_coeffs));
        let vertex = -self.f_coeffs[3] / (4.0 * c4);
        let d2_min = poly_eval(&d2, vertex);
        // f itself is only required to be bounded below on the admissible range.
        let (f_min, _) = poly_min_on(&self.f_coeffs, lo, hi);
        let f1 = 0.0_f64.max(-d2_min).max(-f_min);
        let alpha = self.gamma.max(self.gamma + f1);

        // Derivative tables for fast Horner evaluation.
        let mut f_derivs: Vec<Vec<f64>> = vec![self.f_coeffs.to_vec()];
        for k in 1..=4 {
            f_derivs.push(poly_deriv(&f_derivs[k - 1]));
        }
        let mut b_derivs: Vec<Vec<f64>> = vec![b_poly];
        for k in 1..=2 {
            b_derivs.push(poly_deriv(&b_derivs[k - 1]));
        }

        // Suprema over the admissible range; stored for completeness, never
        // used numerically (they only enter growth-bound constants of the
        // analysis).
        let mut f_deriv_sup = [0.0; 5];
        for (k, c) in f_derivs.iter().enumerate() {
            f_deriv_sup[k] = poly_max_on(c, lo, hi).max(-poly_min_on(c, lo, hi).0);
        }
        let b3 = poly_max_on(&b_derivs[1], lo, hi).max(-poly_min_on(&b_derivs[1], lo, hi).0);
        let b4 = poly_max_on(&b_derivs[2], lo, hi).max(-poly_min_on(&b_derivs[2], lo, hi).0);

        Ok(ModelParams {
            gamma: self.gamma,
            f_coeffs: self.f_coeffs,
            b_coeffs: self.b_coeffs,
            b_floor: self.b_floor,
            admissible_range: self.admissible_range,
            f1,
            alpha,
            b_bounds: (b_min, b_max),
            f_deriv_sup,
            b3,
            b4,
            f_derivs,
            b_derivs,
        })
    }
}

/// Validated model parameters with derived constants. Immutable after
/// validation; all evaluations are pure, so sharing across threads is safe.
#[derive(Debug, Clone)]
pub struct ModelParams {
    /// Interface parameter γ > 0.
    pub gamma: f64,
    /// Ascending coefficients of the quartic potential.
    pub f_coeffs: [f64; 5],
    /// Ascending coefficients of the polynomial part of the mobility.
    pub b_coeffs: Vec<f64>,
    /// Constant floor added to the mobility polynomial.
    pub b_floor: f64,
    /// Range on which the `b` and `f` bounds are certified.
    pub admissible_range: (f64, f64),
    /// `f₁ = max(0, −min f'', −min f)`: both `f ≥ −f₁` (on the admissible
    /// range) and `f'' ≥ −f₁` (globally) hold.
    pub f1: f64,
    /// Regularization weight `α = max(γ, γ + f₁)` of the relative energy.
    pub alpha: f64,
    /// `(b₁, b₂)` with `0 < b₁ ≤ b(s) ≤ b₂` on the admissible range.
    pub b_bounds: (f64, f64),
    /// `sup |f⁽ᵏ⁾|` over the admissible range, k = 0..4 (documented constants;
    /// not used numerically).
    pub f_deriv_sup: [f64; 5],
    /// `sup |b'|` over the admissible range (documented constant).
    pub b3: f64,
    /// `sup |b''|` over the admissible range (documented constant).
    pub b4: f64,
    /// Horner tables for f, f', .., f⁗ (ascending coefficients each).
    f_derivs: Vec<Vec<f64>>,
    /// Horner tables for the polynomial part of b, b', b''.
    b_derivs: Vec<Vec<f64>>,
}

impl ModelParams {
    /// The validated benchmark instance (see [`ModelInputs::reference`]).
    pub fn reference() -> ModelParams {
        ModelInputs::reference()
            .validate()
            .expect("benchmark parameters are valid")
    }

    /// Evaluate `f⁽ᵒʳᵈᵉʳ⁾(s)` for order 0..=4 (exact Horner evaluation).
    #[inline]
    pub fn f_eval(&self, s: f64, order: usize) -> f64 {
        assert!(order <= 4, "f has derivatives of order 0..=4 here");
        poly_eval(&self.f_derivs[order], s)
    }

    /// Evaluate `b⁽ᵒʳᵈᵉʳ⁾(s)` for order 0..=2 (polynomial plus floor; the
    /// floor only contributes at order 0).
    #[inline]
    pub fn b_eval(&self, s: f64, order: usize) -> f64 {
        assert!(order <= 2, "b has derivatives of order 0..=2 here");
        let p = poly_eval(&self.b_derivs[order], s);
        if order == 0 {
            p + self.b_floor
        } else {
            p
        }
    }

    /// Reconstruct the raw inputs (used to check that validation is idempotent).
    pub fn to_inputs(&self) -> ModelInputs {
        ModelInputs {
            gamma: self.gamma,
            f_coeffs: self.f_coeffs,
            b_coeffs: self.b_coeffs.clone(),
            b_floor: self.b_floor,
            admissible_range: self.admissible_range,
        }
    }
}
