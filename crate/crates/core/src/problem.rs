//! Problem definition and hypothesis validation for the general Choquard
//! equation -Δu + εu = (I_α∗F(u))F'(u) with F(u) = |u|^p + G(u).
//!
//! Features:
//! - combined-power perturbations G(s) = Σ c_i s^{q_i} with construction-time
//!   validation of the critical exponent window
//! - growth-hypothesis report for the low-dimensional cases (N = 3, 4)
//! - pointwise evaluation of F, F', G, G' on nonnegative amplitudes
//!
//! The upper critical exponent p = (N+α)/(N-2) multiplies the leading power
//! of F; every perturbation exponent must lie strictly between the lower
//! critical exponent (N+α)/N and p.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced while constructing or evaluating a problem instance.
#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension must be at least 3, got {dimension}")]
    DimensionTooSmall { dimension: usize },
    #[error("riesz order must lie strictly inside (0, {dimension}), got {alpha}")]
    AlphaOutOfRange { alpha: f64, dimension: usize },
    #[error("perturbation must contain at least one power term")]
    NoTerms,
    #[error("coefficient of the s^{q} term must be positive and finite, got {c}")]
    InvalidCoefficient { q: f64, c: f64 },
    #[error("exponent {q} lies outside the critical window ({lower}, {upper})")]
    ExponentOutsideWindow { q: f64, lower: f64, upper: f64 },
    #[error("amplitude must be nonnegative, got {s}")]
    NegativeAmplitude { s: f64 },
}

/// One power term c·s^q of the perturbation G.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    /// Exponent q; must lie strictly inside the critical window of the
    /// owning problem.
    pub q: f64,
    /// Coefficient c > 0.
    pub c: f64,
}

impl PowerTerm {
    /// Creates a power term, rejecting nonpositive or non-finite data.
    pub fn new(q: f64, c: f64) -> Result<Self, ProblemError> {
        if !(c.is_finite() && c > 0.0) || !q.is_finite() {
            return Err(ProblemError::InvalidCoefficient { q, c });
        }
        Ok(Self { q, c })
    }
}

/// Outcome of the growth-hypothesis checks.
///
/// `h1`/`h2` concern positivity and the two-sided growth control of G; both
/// hold identically for combined powers inside the critical window. `h3`
/// and `h4` are the extra low-dimensional conditions: q1 > 2 when N ∈ {3,4},
/// and q2 > 2 (N = 4) or q2 > max{2, 1+α} (N = 3).
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    /// G ∈ C¹ with G > 0 on (0, ∞); identically true for admissible terms.
    pub h1_ok: bool,
    /// Two-sided growth window q1·G(s) ≤ G'(s)·s ≤ q2·G(s) with the
    /// prescribed small/large-amplitude limits; identically true here.
    pub h2_ok: bool,
    /// Smallest exponent exceeds 2 when N ∈ {3, 4}.
    pub h3_ok: bool,
    /// Largest exponent exceeds the dimension-dependent threshold.
    pub h4_ok: bool,
    /// Human-readable reasons for every failed check.
    pub messages: Vec<String>,
}

impl HypothesisReport {
    /// True exactly when all four hypothesis checks pass.
    pub fn admissible(&self) -> bool {
        self.h1_ok && self.h2_ok && self.h3_ok && self.h4_ok
    }
}

/// Pointwise values of the nonlinearity at one amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearityEval {
    /// F(s) = s^p + G(s).
    pub f: f64,
    /// F'(s) = p·s^{p-1} + G'(s).
    pub f_prime: f64,
    /// G(s) = Σ c_i s^{q_i}.
    pub g: f64,
    /// G'(s) = Σ c_i q_i s^{q_i - 1}.
    pub g_prime: f64,
}

/// One validated problem instance: dimension, Riesz order, perturbation.
///
/// Terms are stored sorted by exponent with exact-duplicate exponents merged
/// by summing their coefficients, so `q1`/`q2` and the boundary coefficients
/// `a`/`b` are well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    dimension: usize,
    alpha: f64,
    terms: Vec<PowerTerm>,
}

/// Returns the critical exponent window ((N+α)/N, (N+α)/(N-2)).
pub fn exponent_bounds(dimension: usize, alpha: f64) -> Result<(f64, f64), ProblemError> {
    if dimension < 3 {
        return Err(ProblemError::DimensionTooSmall { dimension });
    }
    if !(alpha.is_finite() && alpha > 0.0 && alpha < dimension as f64) {
        return Err(ProblemError::AlphaOutOfRange { alpha, dimension });
    }
    let n = dimension as f64;
    Ok(((n + alpha) / n, (n + alpha) / (n - 2.0)))
}

impl ProblemParams {
    /// Builds a problem instance, validating the window and coefficients.
    ///
    /// The growth hypotheses (H3)/(H4) are not enforced here; they are
    /// reported by [`ProblemParams::validate_hypotheses`] so that
    /// inadmissible-but-well-formed instances can still be inspected.
    pub fn new(
        dimension: usize,
        alpha: f64,
        terms: Vec<PowerTerm>,
    ) -> Result<Self, ProblemError> {
        let (lower, upper) = exponent_bounds(dimension, alpha)?;
        if terms.is_empty() {
            return Err(ProblemError::NoTerms);
        }
        let mut sorted = Vec::with_capacity(terms.len());
        for term in terms {
            let term = PowerTerm::new(term.q, term.c)?;
            if term.q <= lower || term.q >= upper {
                return Err(ProblemError::ExponentOutsideWindow {
                    q: term.q,
                    lower,
                    upper,
                });
            }
            sorted.push(term);
        }
        sorted.sort_by(|x, y| x.q.total_cmp(&y.q));
        let mut merged: Vec<PowerTerm> = Vec::with_capacity(sorted.len());
        for term in sorted {
            match merged.last_mut() {
                Some(last) if last.q == term.q => last.c += term.c,
                _ => merged.push(term),
            }
        }
        Ok(Self {
            dimension,
            alpha,
            terms: merged,
        })
    }

    /// Spatial dimension N ≥ 3.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Riesz order α ∈ (0, N).
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Power terms sorted by exponent, duplicates merged.
    pub fn terms(&self) -> &[PowerTerm] {
        &self.terms
    }

    /// Upper critical exponent p = (N+α)/(N-2).
    pub fn p(&self) -> f64 {
        let n = self.dimension as f64;
        (n + self.alpha) / (n - 2.0)
    }

    /// Critical window for perturbation exponents.
    pub fn critical_window(&self) -> (f64, f64) {
        exponent_bounds(self.dimension, self.alpha).expect("validated at construction")
    }

    /// Smallest perturbation exponent q1.
    pub fn q1(&self) -> f64 {
        self.terms.first().expect("terms nonempty").q
    }

    /// Largest perturbation exponent q2.
    pub fn q2(&self) -> f64 {
        self.terms.last().expect("terms nonempty").q
    }

    /// Coefficient of the q1 term (small-amplitude limit of G(s)/s^{q1}).
    pub fn a(&self) -> f64 {
        self.terms.first().expect("terms nonempty").c
    }

    /// Coefficient of the q2 term (large-amplitude limit of G(s)/s^{q2}).
    pub fn b(&self) -> f64 {
        self.terms.last().expect("terms nonempty").c
    }

    /// Runs the growth-hypothesis checks and reports every failure.
    pub fn validate_hypotheses(&self) -> HypothesisReport {
        let mut messages = Vec::new();
        let n = self.dimension;
        let q1 = self.q1();
        let q2 = self.q2();
        // Window membership and positive coefficients hold by construction,
        // which is exactly what (H1)/(H2) require of combined powers.
        let h1_ok = true;
        let h2_ok = true;
        let h3_ok = if n == 3 || n == 4 {
            if q1 > 2.0 {
                true
            } else {
                messages.push(format!(
                    "smallest exponent q1 = {q1} must exceed 2 in dimension {n}"
                ));
                false
            }
        } else {
            true
        };
        let h4_threshold = match n {
            3 => 2.0_f64.max(1.0 + self.alpha),
            4 => 2.0,
            _ => f64::NEG_INFINITY,
        };
        let h4_ok = if n == 3 || n == 4 {
            if q2 > h4_threshold {
                true
            } else {
                messages.push(format!(
                    "largest exponent q2 = {q2} must exceed {h4_threshold} in dimension {n}"
                ));
                false
            }
        } else {
            true
        };
        HypothesisReport {
            h1_ok,
            h2_ok,
            h3_ok,
            h4_ok,
            messages,
        }
    }

    /// True when every growth hypothesis holds.
    pub fn is_admissible(&self) -> bool {
        self.validate_hypotheses().admissible()
    }

    /// Evaluates G(s) and G'(s) at one nonnegative amplitude.
    pub fn perturbation_eval(&self, s: f64) -> Result<(f64, f64), ProblemError> {
        if s < 0.0 || s.is_nan() {
            return Err(ProblemError::NegativeAmplitude { s });
        }
        let mut g = 0.0;
        let mut g_prime = 0.0;
        for term in &self.terms {
            // All exponents exceed 1, so both powers vanish continuously at
            // s = 0 and powf never sees a negative exponent on zero.
            g += term.c * s.powf(term.q);
            g_prime += term.c * term.q * s.powf(term.q - 1.0);
        }
        Ok((g, g_prime))
    }

    /// Evaluates F(s), F'(s), G(s), G'(s) at one nonnegative amplitude.
    pub fn nonlinearity_eval(&self, s: f64) -> Result<NonlinearityEval, ProblemError> {
        let (g, g_prime) = self.perturbation_eval(s)?;
        let p = self.p();
        Ok(NonlinearityEval {
            f: s.powf(p) + g,
            f_prime: p * s.powf(p - 1.0) + g_prime,
            g,
            g_prime,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single_term(n: usize, alpha: f64, q: f64, c: f64) -> ProblemParams {
        ProblemParams::new(n, alpha, vec![PowerTerm { q, c }]).expect("admissible test instance")
    }

    #[test]
    fn exponent_bounds_match_direct_substitution() {
        let (lo, hi) = exponent_bounds(3, 1.0).unwrap();
        assert_relative_eq!(lo, 4.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(hi, 4.0, max_relative = 1e-15);
        let (lo, hi) = exponent_bounds(4, 2.0).unwrap();
        assert_relative_eq!(lo, 1.5, max_relative = 1e-15);
        assert_relative_eq!(hi, 3.0, max_relative = 1e-15);
        let (lo, hi) = exponent_bounds(5, 1.0).unwrap();
        assert_relative_eq!(lo, 1.2, max_relative = 1e-15);
        assert_relative_eq!(hi, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn exponent_upper_bound_decreases_with_dimension() {
        let mut last = f64::INFINITY;
        for n in 3..10 {
            let (_, hi) = exponent_bounds(n, 0.99).unwrap();
            assert!(hi < last, "upper bound must strictly decrease in N");
            last = hi;
        }
    }

    #[test]
    fn invalid_dimension_and_order_are_rejected() {
        assert!(matches!(
            exponent_bounds(2, 1.0),
            Err(ProblemError::DimensionTooSmall { dimension: 2 })
        ));
        assert!(matches!(
            exponent_bounds(3, 0.0),
            Err(ProblemError::AlphaOutOfRange { .. })
        ));
        assert!(matches!(
            exponent_bounds(3, 3.0),
            Err(ProblemError::AlphaOutOfRange { .. })
        ));
    }

    #[test]
    fn window_violations_fail_at_construction() {
        let err = ProblemParams::new(5, 1.0, vec![PowerTerm { q: 2.5, c: 1.0 }]);
        assert!(matches!(
            err,
            Err(ProblemError::ExponentOutsideWindow { .. })
        ));
        let err = ProblemParams::new(5, 1.0, vec![PowerTerm { q: 1.1, c: 1.0 }]);
        assert!(matches!(
            err,
            Err(ProblemError::ExponentOutsideWindow { .. })
        ));
    }

    #[test]
    fn high_dimensional_instances_have_no_extra_constraints() {
        let params = single_term(5, 1.0, 1.8, 1.0);
        let report = params.validate_hypotheses();
        assert!(report.h3_ok && report.h4_ok && report.admissible());
        assert!(report.messages.is_empty());
    }

    #[test]
    fn low_exponent_fails_growth_hypotheses_in_dimension_three() {
        let params = single_term(3, 0.5, 1.4, 1.0);
        let report = params.validate_hypotheses();
        assert!(!report.h4_ok, "1.4 does not exceed max(2, 1.5)");
        assert!(!report.admissible());
        assert!(!report.messages.is_empty());
    }

    #[test]
    fn mixed_terms_above_threshold_are_admissible_in_dimension_three() {
        let params = ProblemParams::new(
            3,
            0.5,
            vec![PowerTerm { q: 2.2, c: 0.5 }, PowerTerm { q: 2.6, c: 1.0 }],
        )
        .unwrap();
        assert!(params.is_admissible());
        assert_relative_eq!(params.q1(), 2.2);
        assert_relative_eq!(params.q2(), 2.6);
        assert_relative_eq!(params.a(), 0.5);
        assert_relative_eq!(params.b(), 1.0);
    }

    #[test]
    fn boundary_exponents_are_rejected_strictly() {
        // q1 = 2 exactly fails the strict h3 check in dimension 4.
        let params = single_term(4, 1.0, 2.0, 1.0);
        let report = params.validate_hypotheses();
        assert!(!report.h3_ok);
        assert!(!report.h4_ok);
    }

    #[test]
    fn duplicate_exponents_merge_by_summing_coefficients() {
        let params = ProblemParams::new(
            5,
            1.0,
            vec![PowerTerm { q: 1.8, c: 0.25 }, PowerTerm { q: 1.8, c: 0.75 }],
        )
        .unwrap();
        assert_eq!(params.terms().len(), 1);
        assert_relative_eq!(params.b(), 1.0);
    }

    #[test]
    fn nonlinearity_vanishes_at_zero_amplitude() {
        let params = single_term(5, 1.0, 1.8, 1.0);
        let eval = params.nonlinearity_eval(0.0).unwrap();
        assert_eq!(eval.f, 0.0);
        assert_eq!(eval.f_prime, 0.0);
        assert_eq!(eval.g, 0.0);
        assert_eq!(eval.g_prime, 0.0);
    }

    #[test]
    fn nonlinearity_matches_direct_substitution() {
        // N = 3, alpha = 1 gives p = 4; with G(s) = s^2 at s = 2:
        // G = 4, G' = 4, F = 16 + 4 = 20, F' = 32 + 4 = 36.
        let params = single_term(3, 1.0, 2.0, 1.0);
        let eval = params.nonlinearity_eval(2.0).unwrap();
        assert_relative_eq!(eval.g, 4.0, max_relative = 1e-14);
        assert_relative_eq!(eval.g_prime, 4.0, max_relative = 1e-14);
        assert_relative_eq!(eval.f, 20.0, max_relative = 1e-14);
        assert_relative_eq!(eval.f_prime, 36.0, max_relative = 1e-14);
    }

    #[test]
    fn negative_amplitudes_are_rejected() {
        let params = single_term(5, 1.0, 1.8, 1.0);
        assert!(matches!(
            params.nonlinearity_eval(-0.5),
            Err(ProblemError::NegativeAmplitude { .. })
        ));
    }

    #[test]
    fn perturbation_limits_recover_boundary_coefficients() {
        // Exponent gap 1.2 makes the cross terms decay below 1e-6 at the
        // probe amplitudes 1e-8 and 1e8.
        let params = ProblemParams::new(
            3,
            2.0,
            vec![PowerTerm { q: 2.2, c: 0.5 }, PowerTerm { q: 3.4, c: 1.0 }],
        )
        .unwrap();
        let (g_small, _) = params.perturbation_eval(1e-8).unwrap();
        assert!((g_small / 1e-8_f64.powf(params.q1()) - params.a()).abs() < 1e-6);
        let (g_large, _) = params.perturbation_eval(1e8).unwrap();
        assert!((g_large / 1e8_f64.powf(params.q2()) - params.b()).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn growth_sandwich_holds_for_random_admissible_instances(
            n in 3usize..7,
            alpha_frac in 0.05f64..0.95,
            q_fracs in proptest::collection::vec(0.05f64..0.95, 1..4),
            coeffs in proptest::collection::vec(0.01f64..10.0, 3),
            s_exp in -8.0f64..8.0,
        ) {
            let alpha = alpha_frac * n as f64;
            let (lo, hi) = exponent_bounds(n, alpha).unwrap();
            let terms: Vec<PowerTerm> = q_fracs
                .iter()
                .zip(coeffs.iter().cycle())
                .map(|(&f, &c)| PowerTerm { q: lo + f * (hi - lo), c })
                .collect();
            let params = ProblemParams::new(n, alpha, terms).unwrap();
            let s = 10f64.powf(s_exp);
            let (g, g_prime) = params.perturbation_eval(s).unwrap();
            let lhs = params.q1() * g;
            let rhs = params.q2() * g;
            let mid = g_prime * s;
            let slack = 1e-12 * g.abs().max(1e-300);
            prop_assert!(lhs <= mid + slack, "lower sandwich violated: {lhs} > {mid}");
            prop_assert!(mid <= rhs + slack, "upper sandwich violated: {mid} > {rhs}");
        }
    }
}
