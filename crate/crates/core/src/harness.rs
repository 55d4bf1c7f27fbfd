//! Seeded replication harness: sweeps (algorithm, environment, horizon)
//! grids, logs cumulative regret at geometric checkpoints, aggregates
//! across replications, fits empirical rate exponents, and writes CSV
//! plus a JSON summary.
//!
//! Determinism contract: every replication derives its RNG streams from
//! `(base seed, horizon, replication index)` alone, and aggregation is
//! an ordered reduction over replication indices, so results are
//! byte-identical across thread counts.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::{run_dyadic, DyadicConfig, DyadicError};
use crate::env::{EnvError, EnvKind, Environment};
use crate::exp3::{optimized_tuning, run_episode_with, Exp3Config, Exp3Error};
use crate::oracle::{best_constant_adversarial, best_constant_stochastic, OracleError};
use crate::rng;
use crate::welfare::{social_welfare, PolicyGrid};

const ENV_SALT: u64 = 0xA5A5_5A5A_C0FF_EE01;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid plan: {0}")]
    BadPlan(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Exp3(#[from] Exp3Error),
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("rate fit needs >= 4 horizons with positive regret, got {0}")]
    DegenerateSeries(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Exp3 { k: usize, gamma: f64, eta: f64 },
    /// Horizon-optimized tuning, recomputed for every horizon in the
    /// sweep.
    Exp3Tuned,
    UniformBaseline { k: usize },
    Dyadic {
        /// Confidence parameter; defaults to `T^{-5/2}` per horizon.
        #[serde(default)]
        delta: Option<f64>,
    },
}

impl AlgorithmSpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Exp3 { .. } => "exp3",
            Self::Exp3Tuned => "exp3_tuned",
            Self::UniformBaseline { .. } => "uniform",
            Self::Dyadic { .. } => "dyadic",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Uniform,
    Discrete { support: Vec<(f64, f64)> },
    FourPointMu { epsilon: f64 },
    /// Hard-instance schedule: `epsilon = T^{-1/3}` for each horizon.
    FourPointMuSchedule,
    ConcaveF { epsilon: f64 },
    FixedSequence { values: Vec<f64> },
    /// Per-replication adversarial sequences drawn from the four-point
    /// family and then frozen.
    FrozenMu { epsilon: f64 },
}

impl EnvSpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Discrete { .. } => "discrete",
            Self::FourPointMu { .. } => "four_point_mu",
            Self::FourPointMuSchedule => "four_point_mu_schedule",
            Self::ConcaveF { .. } => "concave_f",
            Self::FixedSequence { .. } => "fixed_sequence",
            Self::FrozenMu { .. } => "frozen_mu",
        }
    }

    fn epsilon_for(&self, horizon: u64) -> Option<f64> {
        match self {
            Self::FourPointMu { epsilon } | Self::FrozenMu { epsilon } => Some(*epsilon),
            Self::FourPointMuSchedule => Some((horizon as f64).powf(-1.0 / 3.0)),
            _ => None,
        }
    }

    fn build(&self, lambda: f64, horizon: u64, seed: u64) -> Result<Environment, HarnessError> {
        let env = match self {
            Self::Uniform => Environment::uniform(seed),
            Self::Discrete { support } => {
                Environment::new(EnvKind::Discrete { support: support.clone() }, seed)?
            }
            Self::FourPointMu { .. } | Self::FourPointMuSchedule => Environment::new(
                EnvKind::FourPointMu {
                    lambda,
                    epsilon: self.epsilon_for(horizon).unwrap(),
                },
                seed,
            )?,
            Self::ConcaveF { epsilon } => {
                Environment::new(EnvKind::ConcaveF { lambda, epsilon: *epsilon }, seed)?
            }
            Self::FixedSequence { values } => Environment::fixed(values.clone(), seed)?,
            Self::FrozenMu { epsilon } => Environment::new(
                EnvKind::FourPointMu { lambda, epsilon: *epsilon },
                seed,
            )?
            .freeze(horizon)?,
        };
        Ok(env)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    pub algorithm: AlgorithmSpec,
    pub env: EnvSpec,
    pub lambda: f64,
    pub horizons: Vec<u64>,
    pub replications: u64,
    pub base_seed: u64,
    /// Geometric checkpoint density; defaults to 8 per decade.
    #[serde(default)]
    pub checkpoints_per_decade: Option<u32>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replications < 1 {
            return Err(HarnessError::BadPlan("replications must be >= 1".into()));
        }
        if self.horizons.is_empty() {
            return Err(HarnessError::BadPlan("at least one horizon required".into()));
        }
        if self.horizons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::BadPlan(
                "horizons must be strictly increasing".into(),
            ));
        }
        if self.horizons.iter().any(|&t| t < 1) {
            return Err(HarnessError::BadPlan("horizons must be >= 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(HarnessError::BadPlan(format!(
                "lambda {} not in (0,1)",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Geometrically spaced checkpoints ending exactly at the horizon.
pub fn checkpoints(horizon: u64, per_decade: u32) -> Vec<u64> {
    let ratio = 10f64.powf(1.0 / per_decade.max(1) as f64);
    let mut pts = Vec::new();
    let mut x = 1.0f64;
    loop {
        let t = x.round() as u64;
        if t >= horizon {
            break;
        }
        if pts.last() != Some(&t) {
            pts.push(t);
        }
        x *= ratio;
    }
    pts.push(horizon);
    pts
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonResult {
    pub horizon: u64,
    pub checkpoints: Vec<u64>,
    /// Cumulative regret per replication at each checkpoint,
    /// `R x len(checkpoints)`, ordered by replication index.
    #[serde(skip)]
    pub per_rep: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanResult {
    pub name: String,
    pub algo: String,
    pub env: String,
    pub lambda: f64,
    pub replications: u64,
    pub horizons: Vec<HorizonResult>,
}

enum ResolvedAlgo {
    Exp3(Exp3Config),
    Dyadic(DyadicConfig),
}

fn resolve_algo(
    spec: &AlgorithmSpec,
    lambda: f64,
    horizon: u64,
) -> Result<ResolvedAlgo, HarnessError> {
    Ok(match spec {
        AlgorithmSpec::Exp3 { k, gamma, eta } => {
            ResolvedAlgo::Exp3(Exp3Config::new(*k, *gamma, *eta, lambda)?)
        }
        AlgorithmSpec::Exp3Tuned => {
            ResolvedAlgo::Exp3(optimized_tuning(lambda, horizon)?.into_config(lambda))
        }
        AlgorithmSpec::UniformBaseline { k } => {
            ResolvedAlgo::Exp3(Exp3Config::uniform_baseline(*k, lambda))
        }
        AlgorithmSpec::Dyadic { delta } => ResolvedAlgo::Dyadic(match delta {
            Some(d) => DyadicConfig::new(*d, lambda)?,
            None => DyadicConfig::for_horizon(horizon, lambda)?,
        }),
    })
}

/// Benchmark shared across the replications of one horizon.
enum SharedBench {
    /// Known distribution: regret increments use expected welfare.
    Stochastic { wstar: f64 },
    /// One fixed sequence shared by all replications.
    AdversarialShared { per_round_best: Vec<f64> },
    /// Per-replication frozen sequences; benchmark computed in-rep.
    AdversarialPerRep,
}

fn shared_bench(
    env_spec: &EnvSpec,
    lambda: f64,
    horizon: u64,
) -> Result<SharedBench, HarnessError> {
    match env_spec {
        EnvSpec::FixedSequence { values } => {
            let (best_x, _) = best_constant_adversarial(values, lambda)?;
            Ok(SharedBench::AdversarialShared {
                per_round_best: values
                    .iter()
                    .map(|&v| social_welfare(best_x, v, lambda))
                    .collect(),
            })
        }
        EnvSpec::FrozenMu { .. } => Ok(SharedBench::AdversarialPerRep),
        _ => {
            let proto = env_spec.build(lambda, horizon, 0)?;
            let (_, wstar) = best_constant_stochastic(&proto, lambda)?;
            Ok(SharedBench::Stochastic { wstar })
        }
    }
}

/// Fold per-round regret increments into checkpoint snapshots.
struct CheckpointTaker<'a> {
    checkpoints: &'a [u64],
    idx: usize,
    cum: f64,
    out: Vec<f64>,
}

impl<'a> CheckpointTaker<'a> {
    fn new(checkpoints: &'a [u64]) -> Self {
        Self {
            checkpoints,
            idx: 0,
            cum: 0.0,
            out: Vec::with_capacity(checkpoints.len()),
        }
    }

    fn push(&mut self, round: u64, increment: f64) {
        self.cum += increment;
        if self.idx < self.checkpoints.len() && self.checkpoints[self.idx] == round {
            self.out.push(self.cum);
            self.idx += 1;
        }
    }

    fn finish(self) -> Vec<f64> {
        debug_assert_eq!(self.out.len(), self.checkpoints.len());
        self.out
    }
}

fn run_rep(
    plan: &ExperimentPlan,
    algo: &ResolvedAlgo,
    horizon: u64,
    cps: &[u64],
    shared: &SharedBench,
    rep: u64,
) -> Result<Vec<f64>, HarnessError> {
    let lambda = plan.lambda;
    let env_seed = rng::mix3(plan.base_seed ^ ENV_SALT, horizon, rep);
    let algo_seed = rng::mix3(plan.base_seed, horizon, rep);
    let env = plan.env.build(lambda, horizon, env_seed)?;

    // Per-replication adversarial benchmark for frozen sequences.
    let local_best;
    let per_round_best: Option<&[f64]> = match shared {
        SharedBench::AdversarialShared { per_round_best } => Some(per_round_best),
        SharedBench::AdversarialPerRep => {
            let values: Result<Vec<f64>, EnvError> =
                (1..=horizon).map(|i| env.draw_valuation(i)).collect();
            let values = values?;
            let (best_x, _) = best_constant_adversarial(&values, lambda)?;
            local_best = values
                .iter()
                .map(|&v| social_welfare(best_x, v, lambda))
                .collect::<Vec<f64>>();
            Some(&local_best)
        }
        SharedBench::Stochastic { .. } => None,
    };

    let mut taker = CheckpointTaker::new(cps);
    match algo {
        ResolvedAlgo::Exp3(cfg) => {
            match (shared, per_round_best) {
                (SharedBench::Stochastic { wstar }, _) => {
                    let grid = PolicyGrid::new(cfg.k);
                    let arm_w: Vec<f64> = grid
                        .points()
                        .iter()
                        .map(|&x| env.expected_welfare(x, lambda).expect("stochastic env"))
                        .collect();
                    run_episode_with(cfg, &env, horizon, algo_seed, |i, arm, _, _| {
                        taker.push(i, wstar - arm_w[arm]);
                    })?;
                }
                (_, Some(best)) => {
                    run_episode_with(cfg, &env, horizon, algo_seed, |i, _, x, _| {
                        let v = env.draw_valuation(i).expect("in-range round");
                        let realized = social_welfare(x, v, lambda);
                        taker.push(i, best[(i - 1) as usize] - realized);
                    })?;
                }
                _ => unreachable!("benchmark resolved above"),
            }
        }
        ResolvedAlgo::Dyadic(cfg) => {
            let run = run_dyadic(cfg, &env, horizon, env_seed)?;
            match (shared, per_round_best) {
                (SharedBench::Stochastic { wstar }, _) => {
                    for (i, &x) in run.policies.iter().enumerate() {
                        let w = env.expected_welfare(x, lambda).expect("stochastic env");
                        taker.push(i as u64 + 1, wstar - w);
                    }
                }
                (_, Some(best)) => {
                    for (i, &w) in run.welfare.iter().enumerate() {
                        taker.push(i as u64 + 1, best[i] - w);
                    }
                }
                _ => unreachable!("benchmark resolved above"),
            }
        }
    }
    Ok(taker.finish())
}

/// Execute a plan.  `threads = 0` lets the pool size itself.
pub fn run_plan(plan: &ExperimentPlan, threads: usize) -> Result<PlanResult, HarnessError> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let mut horizons = Vec::with_capacity(plan.horizons.len());
    for &t in &plan.horizons {
        let algo = resolve_algo(&plan.algorithm, plan.lambda, t)?;
        let cps = checkpoints(t, plan.checkpoints_per_decade.unwrap_or(8));
        let shared = shared_bench(&plan.env, plan.lambda, t)?;
        let per_rep: Result<Vec<Vec<f64>>, HarnessError> = pool.install(|| {
            (0..plan.replications)
                .into_par_iter()
                .map(|rep| run_rep(plan, &algo, t, &cps, &shared, rep))
                .collect()
        });
        let per_rep = per_rep?;
        let (mean, se) = aggregate(&per_rep);
        horizons.push(HorizonResult {
            horizon: t,
            checkpoints: cps,
            per_rep,
            mean,
            se,
        });
    }
    Ok(PlanResult {
        name: plan.name.clone(),
        algo: plan.algorithm.label().to_string(),
        env: plan.env.label().to_string(),
        lambda: plan.lambda,
        replications: plan.replications,
        horizons,
    })
}

/// Mean and standard error across replications, per checkpoint.
pub fn aggregate(per_rep: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let r = per_rep.len();
    if r == 0 {
        return (Vec::new(), Vec::new());
    }
    let n = per_rep[0].len();
    let mut mean = vec![0.0; n];
    for row in per_rep {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= r as f64;
    }
    let mut se = vec![0.0; n];
    if r > 1 {
        for row in per_rep {
            for ((s, &m), &x) in se.iter_mut().zip(&mean).zip(row) {
                *s += (x - m) * (x - m);
            }
        }
        for s in &mut se {
            *s = (*s / (r as f64 - 1.0) / r as f64).sqrt();
        }
    }
    (mean, se)
}

/// Mean cumulative regret at the final checkpoint of every horizon.
pub fn final_mean_regret(result: &PlanResult) -> Vec<(f64, f64)> {
    result
        .horizons
        .iter()
        .map(|h| (h.horizon as f64, *h.mean.last().expect("nonempty checkpoints")))
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `log regret` on `log T`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit, HarnessError> {
    if points.len() < 4 {
        return Err(HarnessError::DegenerateSeries(format!(
            "{} points",
            points.len()
        )));
    }
    if points.iter().any(|&(t, r)| t <= 0.0 || r <= 0.0) {
        return Err(HarnessError::DegenerateSeries(
            "nonpositive horizon or regret".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(t, r)| (t.ln(), r.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::DegenerateSeries("single horizon".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { slope, intercept, r_squared })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub t: u64,
    pub mean: f64,
    pub se: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub pass: bool,
    pub checks: Vec<BoundCheck>,
}

/// Check `mean + 3 SE <= bound(t)` at every checkpoint.
pub fn compare_to_bound(result: &HorizonResult, bound_at: impl Fn(u64) -> f64) -> BoundReport {
    let mut checks = Vec::with_capacity(result.checkpoints.len());
    let mut pass = true;
    for (i, &t) in result.checkpoints.iter().enumerate() {
        let bound = bound_at(t);
        let ok = result.mean[i] + 3.0 * result.se[i] <= bound;
        pass &= ok;
        checks.push(BoundCheck {
            t,
            mean: result.mean[i],
            se: result.se[i],
            bound,
            pass: ok,
        });
    }
    BoundReport { pass, checks }
}

/// CSV with columns `algo,env,T,rep,checkpoint_t,cum_regret`, ordered by
/// (horizon, replication, checkpoint).
pub fn write_csv(result: &PlanResult, path: &Path) -> Result<(), HarnessError> {
    let mut buf = String::from("algo,env,T,rep,checkpoint_t,cum_regret\n");
    for h in &result.horizons {
        for (rep, row) in h.per_rep.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                buf.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    result.algo, result.env, h.horizon, rep, h.checkpoints[i], v
                ));
            }
        }
    }
    write_file(path, buf.as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub result: &'a PlanResult,
    pub rate_fit: Option<RateFit>,
    pub bound_reports: Vec<BoundReport>,
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<(), HarnessError> {
    let json = serde_json::to_string_pretty(summary).expect("serializable");
    write_file(path, json.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let ctx = |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(ctx)?;
    f.write_all(bytes).map_err(ctx)
}
