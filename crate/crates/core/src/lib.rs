//! Adaptive maximization of social welfare under bandit feedback.
//!
//! A seller (or tax authority) posts a policy in `[0,1]` each round and
//! observes only a binary purchase / participation outcome; the
//! objective is revenue plus weighted consumer surplus, which is never
//! observed directly.  This crate provides:
//!
//! - [`exp3`]: tempered exponential-weights over a policy grid for the
//!   adversarial setting, plus regret bound calculators and the
//!   horizon-optimized tuning;
//! - [`dyadic`]: confidence-interval interval-halving search for the
//!   stochastic concave case;
//! - [`income`]: the extension to piecewise-constant income-tax
//!   schedules over wage brackets;
//! - [`env`]: valuation environments, including the hard-instance
//!   four-point and concave families with their analytic identities;
//! - [`oracle`]: exact best-constant benchmarks and regret accounting;
//! - [`harness`]: seeded multi-replication sweeps with rate-exponent
//!   fits and deterministic CSV/JSON output.
//!
//! Closed-form quantities (welfare, environment constants, densities)
//! are generic over the scalar type through [`real::Real`]; the
//! simulation state machines are concrete `f64`.

pub mod dyadic;
pub mod env;
pub mod exp3;
pub mod harness;
pub mod income;
pub mod oracle;
pub mod real;
pub mod rng;
pub mod welfare;

/// Scalar type used by all simulation state machines.
pub type Scalar = f64;

pub use dyadic::{run_dyadic, DyadicConfig, DyadicRun, DyadicState};
pub use env::{ConcaveFamily, EnvKind, Environment};
pub use exp3::{run_episode, Exp3Config, Exp3State, Trajectory};
pub use harness::{run_plan, ExperimentPlan, PlanResult};
pub use income::{run_income_episode, IncomeConfig, IncomeEnvironment, IncomeState};
pub use oracle::{best_constant_adversarial, best_constant_stochastic};
pub use welfare::{demand, social_welfare, PolicyGrid, WelfareWeight};
