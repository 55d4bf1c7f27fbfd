//! Exact benchmarks: best constant policy and cumulative regret, for
//! adversarial sequences and for known stochastic environments.

use thiserror::Error;

use crate::env::{EnvKind, Environment};
use crate::real::Real;
use crate::welfare::{social_welfare, uniform_best_policy, expected_welfare_uniform};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("empty valuation sequence")]
    EmptySequence,
    #[error("no closed-form benchmark for this environment kind")]
    UnsupportedEnv,
    #[error("trajectory length {got} does not match benchmark length {want}")]
    LengthMismatch { got: usize, want: usize },
}

/// Per-round regret bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretRecord {
    pub round: u64,
    pub policy: f64,
    pub outcome: u8,
    pub welfare: f64,
    pub cum_welfare: f64,
    pub cum_regret: f64,
}

/// Best constant policy for a fixed valuation sequence.
///
/// Cumulative welfare is piecewise linear in the policy with downward
/// jumps just above each valuation, so the supremum is attained on the
/// finite candidate set `{0} ∪ {v_1..v_T}`.  Ties go to the smallest
/// policy.
pub fn best_constant_adversarial<R: Real>(
    values: &[R],
    lambda: R,
) -> Result<(R, R), OracleError> {
    if values.is_empty() {
        return Err(OracleError::EmptySequence);
    }
    let mut candidates: Vec<R> = Vec::with_capacity(values.len() + 1);
    candidates.push(R::zero());
    candidates.extend_from_slice(values);
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let mut best_x = R::zero();
    let mut best_w = R::neg_infinity();
    for &x in &candidates {
        let w = values
            .iter()
            .fold(R::zero(), |acc, &v| acc + social_welfare(x, v, lambda));
        if w > best_w {
            best_w = w;
            best_x = x;
        }
    }
    Ok((best_x, best_w))
}

/// Best constant policy under a known stochastic environment.
///
/// Uniform: closed form.  Discrete (incl. the four-point family):
/// candidate enumeration over `{0} ∪ support`.  Concave family:
/// golden-section search on the closed-form expected welfare.
pub fn best_constant_stochastic(
    env: &Environment,
    lambda: f64,
) -> Result<(f64, f64), OracleError> {
    match env.kind() {
        EnvKind::Uniform => {
            let x = uniform_best_policy(lambda);
            Ok((x, expected_welfare_uniform(x, lambda)))
        }
        EnvKind::Discrete { .. } | EnvKind::FourPointMu { .. } => {
            let support = env.discrete_support().unwrap();
            let mut best = (0.0, f64::NEG_INFINITY);
            let mut candidates: Vec<f64> = vec![0.0];
            candidates.extend(support.iter().map(|&(v, _)| v));
            candidates.sort_by(f64::total_cmp);
            candidates.dedup();
            for x in candidates {
                let w = env.expected_welfare(x, lambda).unwrap();
                if w > best.1 {
                    best = (x, w);
                }
            }
            Ok(best)
        }
        EnvKind::ConcaveF { .. } => {
            let w = |x: f64| env.expected_welfare(x, lambda).unwrap();
            Ok(golden_section_max(w, 0.0, 1.0, 1e-10))
        }
        EnvKind::FixedSequence { .. } => Err(OracleError::UnsupportedEnv),
    }
}

/// Golden-section search for the maximum of a unimodal function.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        }
    }
    let x = (lo + hi) / 2.0;
    (x, f(x))
}

/// Benchmark for regret computation.
#[derive(Debug, Clone)]
pub enum Benchmark {
    /// Best-constant cumulative welfare per prefix of a fixed sequence:
    /// regret = prefix welfare of the best constant minus realized.
    Adversarial { best_policy: f64, per_round_best: Vec<f64> },
    /// Expected-welfare benchmark: regret increments are
    /// `W(x*) - W(x_i)`, eliminating outcome noise.
    Stochastic { best_policy: f64, best_welfare: f64 },
}

impl Benchmark {
    pub fn adversarial(values: &[f64], lambda: f64) -> Result<Self, OracleError> {
        let (best_policy, _) = best_constant_adversarial(values, lambda)?;
        let per_round_best = values
            .iter()
            .map(|&v| social_welfare(best_policy, v, lambda))
            .collect();
        Ok(Self::Adversarial { best_policy, per_round_best })
    }

    pub fn stochastic(env: &Environment, lambda: f64) -> Result<Self, OracleError> {
        let (best_policy, best_welfare) = best_constant_stochastic(env, lambda)?;
        Ok(Self::Stochastic { best_policy, best_welfare })
    }

    pub fn best_policy(&self) -> f64 {
        match self {
            Self::Adversarial { best_policy, .. } | Self::Stochastic { best_policy, .. } => {
                *best_policy
            }
        }
    }
}

/// Cumulative regret stream for a trajectory of `(policy, outcome,
/// realized welfare)` triples against a benchmark.
///
/// For the stochastic benchmark the regret uses expected welfare of the
/// chosen policies (the quantity the upper-bound theorems control);
/// realized welfare is still carried in the records.
pub fn cumulative_regret(
    policies: &[f64],
    outcomes: &[u8],
    realized_welfare: &[f64],
    benchmark: &Benchmark,
    env: &Environment,
    lambda: f64,
) -> Result<Vec<RegretRecord>, OracleError> {
    let n = policies.len();
    if outcomes.len() != n || realized_welfare.len() != n {
        return Err(OracleError::LengthMismatch { got: outcomes.len(), want: n });
    }
    if let Benchmark::Adversarial { per_round_best, .. } = benchmark {
        if per_round_best.len() != n {
            return Err(OracleError::LengthMismatch { got: n, want: per_round_best.len() });
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut cum_w = 0.0;
    let mut cum_r = 0.0;
    for i in 0..n {
        cum_w += realized_welfare[i];
        let inc = match benchmark {
            Benchmark::Adversarial { per_round_best, .. } => {
                per_round_best[i] - realized_welfare[i]
            }
            Benchmark::Stochastic { best_welfare, .. } => {
                best_welfare
                    - env
                        .expected_welfare(policies[i], lambda)
                        .ok_or(OracleError::UnsupportedEnv)?
            }
        };
        cum_r += inc;
        out.push(RegretRecord {
            round: (i + 1) as u64,
            policy: policies[i],
            outcome: outcomes[i],
            welfare: realized_welfare[i],
            cum_welfare: cum_w,
            cum_regret: cum_r,
        });
    }
    Ok(out)
}
