//! Welfare model: demand, per-round social welfare, and expected welfare
//! for known valuation distributions.
//!
//! Social welfare is public revenue plus a `lambda`-weighted private
//! surplus.  Everything here is a pure function of its arguments, shared
//! by the algorithms, the environments and the regret oracles.

use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, PartialEq)]
pub enum WelfareError {
    #[error("probability masses must be nonnegative and sum to 1 (sum deviates by {0})")]
    NotNormalized(f64),
    #[error("welfare weight must lie strictly inside (0,1), got {0}")]
    BadWeight(f64),
}

/// Weight on private welfare, strictly inside (0,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelfareWeight<R>(R);

impl<R: Real> WelfareWeight<R> {
    pub fn new(lambda: R) -> Result<Self, WelfareError> {
        if lambda > R::zero() && lambda < R::one() {
            Ok(Self(lambda))
        } else {
            Err(WelfareError::BadWeight(lambda.to_f64().unwrap_or(f64::NAN)))
        }
    }

    pub fn get(self) -> R {
        self.0
    }
}

/// The K+1 evenly spaced candidate policies `(k-1)/K`, k = 1..=K+1.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrid<R> {
    k: usize,
    points: Vec<R>,
}

impl<R: Real> PolicyGrid<R> {
    /// Grid with discretization parameter `k >= 1`.
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "grid parameter K must be >= 1");
        let kr = R::from_usize(k).unwrap();
        let points = (0..=k)
            .map(|j| R::from_usize(j).unwrap() / kr)
            .collect();
        Self { k, points }
    }

    pub fn discretization(&self) -> usize {
        self.k
    }

    pub fn arms(&self) -> usize {
        self.k + 1
    }

    pub fn points(&self) -> &[R] {
        &self.points
    }

    pub fn point(&self, arm: usize) -> R {
        self.points[arm]
    }
}

/// Binary purchase / participation decision: 1 iff `x <= v`.
///
/// The tie `x == v` counts as a purchase; this convention is applied
/// uniformly across algorithms, oracles and environments.
#[inline]
pub fn demand<R: Real>(x: R, v: R) -> u8 {
    u8::from(x <= v)
}

/// Realized social welfare `x·1(x<=v) + lambda·max(v-x, 0)`.
#[inline]
pub fn social_welfare<R: Real>(x: R, v: R, lambda: R) -> R {
    let revenue = if x <= v { x } else { R::zero() };
    let surplus = (v - x).max(R::zero());
    revenue + lambda * surplus
}

/// Expected welfare under `v ~ Uniform[0,1]`: `x(1-x) + lambda(1-x)^2/2`.
#[inline]
pub fn expected_welfare_uniform<R: Real>(x: R, lambda: R) -> R {
    let s = R::one() - x;
    x * s + lambda * s * s / R::two()
}

/// Maximizer of [`expected_welfare_uniform`]: `(1-lambda)/(2-lambda)`.
#[inline]
pub fn uniform_best_policy<R: Real>(lambda: R) -> R {
    (R::one() - lambda) / (R::two() - lambda)
}

/// Expected welfare under a discrete valuation distribution.
///
/// The integrated-demand term is the exact expectation
/// `sum_j mass_j · max(v_j - x, 0)`; no quadrature is involved.
pub fn expected_welfare_discrete<R: Real>(
    x: R,
    support: &[(R, R)],
    lambda: R,
) -> Result<R, WelfareError> {
    let total: R = support
        .iter()
        .fold(R::zero(), |acc, &(_, m)| acc + m);
    let dev = (total - R::one()).abs();
    if dev > R::c(1e-12) || support.iter().any(|&(_, m)| m < R::zero()) {
        return Err(WelfareError::NotNormalized(dev.to_f64().unwrap_or(f64::NAN)));
    }
    let mut surv = R::zero();
    let mut surplus = R::zero();
    for &(v, m) in support {
        if x <= v {
            surv = surv + m;
        }
        surplus = surplus + m * (v - x).max(R::zero());
    }
    Ok(x * surv + lambda * surplus)
}

/// One-sided Lipschitz property `W(x+eps) <= W(x) + eps` for realized
/// welfare.  Holds for every `x`, `eps`, `v`, `lambda` in range; exposed
/// for the property-test suite.
pub fn one_sided_lipschitz_holds<R: Real>(x: R, eps: R, v: R, lambda: R) -> bool {
    debug_assert!(x + eps <= R::one() + R::c(1e-12));
    social_welfare(x + eps, v, lambda) <= social_welfare(x, v, lambda) + eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn demand_boundary_and_order() {
        assert_eq!(demand(0.0, 0.0), 1);
        assert_eq!(demand(0.5, 0.8), 1);
        assert_eq!(demand(0.9, 0.8), 0);
    }

    #[test]
    fn social_welfare_examples() {
        assert_abs_diff_eq!(social_welfare(0.0, 0.5, 0.7), 0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(social_welfare(0.5, 0.8, 0.7), 0.71, epsilon = 1e-12);
        assert_abs_diff_eq!(social_welfare(0.9, 0.8, 0.7), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_expected_welfare_closed_form() {
        assert_abs_diff_eq!(expected_welfare_uniform(1.0, 0.7), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(expected_welfare_uniform(0.0, 0.7), 0.35, epsilon = 1e-15);
        let xstar = uniform_best_policy(0.7);
        assert_abs_diff_eq!(xstar, 0.3 / 1.3, epsilon = 1e-15);
        assert_abs_diff_eq!(
            expected_welfare_uniform(xstar, 0.7),
            0.38461538461538464,
            epsilon = 1e-10
        );
        // The closed form agrees with a numeric integration of demand.
        let n = 100_000;
        let x = 0.2308;
        let quad: f64 = (0..n)
            .map(|i| {
                let p = x + (1.0 - x) * (i as f64 + 0.5) / n as f64;
                1.0 - p
            })
            .sum::<f64>()
            * (1.0 - x)
            / n as f64;
        let w = x * (1.0 - x) + 0.7 * quad;
        assert_abs_diff_eq!(expected_welfare_uniform(x, 0.7), w, epsilon = 1e-8);
    }

    #[test]
    fn discrete_expected_welfare() {
        let unit = [(1.0, 1.0)];
        assert_abs_diff_eq!(
            expected_welfare_discrete(1.0, &unit, 0.5).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let two = [(0.5, 0.5), (1.0, 0.5)];
        assert_abs_diff_eq!(
            expected_welfare_discrete(0.0, &two, 0.8).unwrap(),
            0.6,
            epsilon = 1e-15
        );
        let bad = [(0.5, 0.5), (1.0, 0.6)];
        assert!(expected_welfare_discrete(0.0, &bad, 0.8).is_err());
    }

    #[test]
    fn discrete_matches_brute_force_on_mu_support() {
        // Four-point distribution from the hard instance at lambda=0.95, eps=1.
        let (a, b) = crate::env::mu_epsilon_constants(0.95f64).unwrap();
        let support = [
            (0.25, a),
            (0.5, 2.0 * b),
            (0.75, 0.0),
            (1.0, 1.0 - a - 2.0 * b),
        ];
        let x = 0.25;
        let brute: f64 = support
            .iter()
            .map(|&(v, m)| m * social_welfare(x, v, 0.95))
            .sum();
        assert_abs_diff_eq!(
            expected_welfare_discrete(x, &support, 0.95).unwrap(),
            brute,
            epsilon = 1e-14
        );
    }

    #[test]
    fn right_continuity_at_atoms() {
        let support = [(0.5, 0.5), (1.0, 0.5)];
        let at = expected_welfare_discrete(0.5, &support, 0.8).unwrap();
        let just_above = expected_welfare_discrete(0.5 + 1e-9, &support, 0.8).unwrap();
        // The atom at 0.5 buys at x = 0.5 but not just above it.
        assert!(at > just_above + 0.2);
        assert_abs_diff_eq!(at, 0.5 + 0.8 * 0.25, epsilon = 1e-12);
    }

    #[test]
    fn lipschitz_hand_cases() {
        assert!(one_sided_lipschitz_holds(0.3, 0.2, 0.6, 0.9));
        assert!(one_sided_lipschitz_holds(0.5, 0.4, 0.6, 0.5));
        assert!(one_sided_lipschitz_holds(0.0, 1.0, 1.0, 0.5));
    }

    #[test]
    fn grid_spacing() {
        let g: PolicyGrid<f64> = PolicyGrid::new(20);
        assert_eq!(g.arms(), 21);
        assert_eq!(g.point(0), 0.0);
        assert_eq!(g.point(20), 1.0);
        for w in g.points().windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 0.05, epsilon = 1e-15);
        }
    }

    #[test]
    fn welfare_weight_range() {
        assert!(WelfareWeight::new(0.5f64).is_ok());
        assert!(WelfareWeight::new(0.0f64).is_err());
        assert!(WelfareWeight::new(1.0f64).is_err());
    }

    proptest! {
        #[test]
        fn welfare_bounded_by_valuation(
            x in 0.0f64..=1.0, v in 0.0f64..=1.0, lambda in 0.001f64..0.999
        ) {
            let w = social_welfare(x, v, lambda);
            prop_assert!(w >= 0.0);
            prop_assert!(w <= v + 1e-12);
        }

        #[test]
        fn one_sided_lipschitz(
            x in 0.0f64..=1.0, t in 0.0f64..=1.0, v in 0.0f64..=1.0,
            lambda in 0.001f64..0.999
        ) {
            let eps = t * (1.0 - x);
            prop_assert!(one_sided_lipschitz_holds(x, eps, v, lambda));
        }
    }

    #[test]
    fn uniform_matches_monte_carlo() {
        let n = 1_000_000u64;
        let lambda = 0.7;
        let x = 0.2308;
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        for i in 0..n {
            let v = crate::rng::counter_uniform(0xFEED, i);
            let w = social_welfare(x, v, lambda);
            sum += w;
            sumsq += w * w;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        let analytic = expected_welfare_uniform(x, lambda);
        assert!(
            (mean - analytic).abs() <= 3.0 * se,
            "MC mean {mean} vs analytic {analytic} (3se = {})",
            3.0 * se
        );
    }
}
