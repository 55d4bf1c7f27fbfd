//! Tempered Exp3 for social welfare: exponential weights over a policy
//! grid with enlarged uniform exploration, inverse-propensity demand
//! estimates, and welfare estimates interpolated with a step function.
//!
//! Also provides the uniform-random and monopoly-pricing baselines, the
//! adversarial regret bound calculator, and the horizon-optimized tuning.

use rand::Rng;
use thiserror::Error;

use crate::env::{EnvError, Environment};
use crate::rng;
use crate::welfare::{demand, social_welfare, PolicyGrid};

#[derive(Debug, Error, PartialEq)]
pub enum Exp3Error {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("tuning hypothesis (K+1)*eta < gamma violated: (K+1)*eta = {keta}, gamma = {gamma}")]
    OutsideTheoremRegime { keta: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exp3Config {
    /// Grid discretization parameter K (K+1 arms).
    pub k: usize,
    /// Uniform exploration weight, in (0,1]; 1 gives the uniform-random
    /// baseline.
    pub gamma: f64,
    /// Learning rate, >= 0.
    pub eta: f64,
    /// Welfare weight; 0 gives the monopoly-pricing objective.
    pub lambda: f64,
}

impl Exp3Config {
    pub fn new(k: usize, gamma: f64, eta: f64, lambda: f64) -> Result<Self, Exp3Error> {
        if k < 1 {
            return Err(Exp3Error::BadConfig("K must be >= 1".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Exp3Error::BadConfig(format!("gamma {gamma} not in (0,1]")));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Exp3Error::BadConfig(format!("eta {eta} must be finite and >= 0")));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(Exp3Error::BadConfig(format!("lambda {lambda} not in [0,1)")));
        }
        Ok(Self { k, gamma, eta, lambda })
    }

    /// Uniform-random policy baseline (the gamma = 1 limiting case).
    pub fn uniform_baseline(k: usize, lambda: f64) -> Self {
        Self { k, gamma: 1.0, eta: 0.0, lambda }
    }

    pub fn arms(&self) -> usize {
        self.k + 1
    }

    /// Hypothesis of the adversarial regret bound.
    pub fn satisfies_bound_hypothesis(&self) -> bool {
        (self.k as f64 + 1.0) * self.eta < self.gamma
    }
}

/// Per-arm cumulative IPW demand and welfare estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3State {
    dem_hat: Vec<f64>,
    sw_hat: Vec<f64>,
    round: u64,
}

impl Exp3State {
    pub fn new(arms: usize) -> Self {
        Self {
            dem_hat: vec![0.0; arms],
            sw_hat: vec![0.0; arms],
            round: 0,
        }
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn dem_hat(&self) -> &[f64] {
        &self.dem_hat
    }

    pub fn sw_hat(&self) -> &[f64] {
        &self.sw_hat
    }
}

/// Tempered softmax `(1-gamma) softmax(eta*s) + gamma/(K+1)`, computed
/// with max subtraction so cumulative estimates growing linearly in T
/// cannot overflow the exponentials.
pub fn tempered_probabilities(sw_hat: &[f64], eta: f64, gamma: f64, out: &mut Vec<f64>) {
    let n = sw_hat.len();
    out.clear();
    let m = sw_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for &s in sw_hat {
        let e = (eta * (s - m)).exp();
        out.push(e);
        z += e;
    }
    let base = gamma / n as f64;
    for p in out.iter_mut() {
        *p = (1.0 - gamma) * *p / z + base;
    }
}

/// Inverse-CDF arm selection: the largest arm whose preceding cumulative
/// probability does not exceed `draw`.
pub fn sample_arm(probs: &[f64], draw: f64) -> usize {
    let mut cum = 0.0;
    let mut chosen = 0;
    for (k, &p) in probs.iter().enumerate() {
        if cum <= draw {
            chosen = k;
        }
        cum += p;
    }
    chosen
}

/// Assignment probabilities for the current state.
pub fn assignment_probabilities(state: &Exp3State, config: &Exp3Config) -> Vec<f64> {
    let mut out = Vec::with_capacity(config.arms());
    tempered_probabilities(&state.sw_hat, config.eta, config.gamma, &mut out);
    out
}

/// One round: sample an arm with `draw`, observe demand at the chosen
/// policy against `valuation`, and fold the IPW update into the state.
///
/// Returns `(chosen arm, outcome)`.
pub fn step(
    state: &mut Exp3State,
    config: &Exp3Config,
    grid: &PolicyGrid<f64>,
    probs_buf: &mut Vec<f64>,
    draw: f64,
    valuation: f64,
) -> (usize, u8) {
    tempered_probabilities(&state.sw_hat, config.eta, config.gamma, probs_buf);
    debug_assert!({
        let total: f64 = probs_buf.iter().sum();
        let floor = config.gamma / config.arms() as f64 - 1e-15;
        (total - 1.0).abs() <= 1e-12 && probs_buf.iter().all(|&p| p >= floor)
    });
    let arm = sample_arm(probs_buf, draw);
    let x = grid.point(arm);
    let y = demand(x, valuation);
    if y == 1 {
        let d = 1.0 / probs_buf[arm];
        state.dem_hat[arm] += d;
        state.sw_hat[arm] += x * d;
        let shared = config.lambda / config.k as f64 * d;
        for s in &mut state.sw_hat[..arm] {
            *s += shared;
        }
    }
    state.round += 1;
    (arm, y)
}

/// A completed episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub arms: Vec<u32>,
    pub policies: Vec<f64>,
    pub outcomes: Vec<u8>,
    /// Realized welfare against the true valuation (harness-side
    /// knowledge; never fed back to the algorithm).
    pub welfare: Vec<f64>,
}

impl Trajectory {
    fn with_capacity(n: usize) -> Self {
        Self {
            arms: Vec::with_capacity(n),
            policies: Vec::with_capacity(n),
            outcomes: Vec::with_capacity(n),
            welfare: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }
}

/// Streaming episode driver; `on_step(round, arm, policy, outcome)`.
pub fn run_episode_with(
    config: &Exp3Config,
    env: &Environment,
    horizon: u64,
    seed: u64,
    mut on_step: impl FnMut(u64, usize, f64, u8),
) -> Result<Exp3State, EnvError> {
    let grid = PolicyGrid::new(config.k);
    let mut state = Exp3State::new(config.arms());
    let mut rng = rng::episode_rng(seed, horizon, 0);
    let mut probs = Vec::with_capacity(config.arms());
    for i in 1..=horizon {
        let v = env.draw_valuation(i)?;
        let draw: f64 = rng.gen();
        let (arm, y) = step(&mut state, config, &grid, &mut probs, draw, v);
        on_step(i, arm, grid.point(arm), y);
    }
    Ok(state)
}

/// Run one seeded episode and collect the trajectory.
pub fn run_episode(
    config: &Exp3Config,
    env: &Environment,
    horizon: u64,
    seed: u64,
) -> Result<Trajectory, EnvError> {
    let mut traj = Trajectory::with_capacity(horizon as usize);
    run_episode_with(config, env, horizon, seed, |i, arm, x, y| {
        let v = env.draw_valuation(i).expect("revisited round");
        traj.arms.push(arm as u32);
        traj.policies.push(x);
        traj.outcomes.push(y);
        traj.welfare.push(social_welfare(x, v, config.lambda));
    })?;
    Ok(traj)
}

/// Monopoly-pricing baseline: Exp3 on revenue only (no surplus term).
/// Trajectory-identical to the welfare algorithm at `lambda = 0`.
pub fn run_monopoly_episode(
    k: usize,
    gamma: f64,
    eta: f64,
    env: &Environment,
    horizon: u64,
    seed: u64,
) -> Result<Trajectory, EnvError> {
    let grid: PolicyGrid<f64> = PolicyGrid::new(k);
    let arms = k + 1;
    let mut dem_hat = vec![0.0f64; arms];
    let mut rev_hat = vec![0.0f64; arms];
    let mut probs = Vec::with_capacity(arms);
    let mut rng = rng::episode_rng(seed, horizon, 0);
    let mut traj = Trajectory::with_capacity(horizon as usize);
    for i in 1..=horizon {
        let v = env.draw_valuation(i)?;
        let draw: f64 = rng.gen();
        tempered_probabilities(&rev_hat, eta, gamma, &mut probs);
        let arm = sample_arm(&probs, draw);
        let x = grid.point(arm);
        let y = demand(x, v);
        if y == 1 {
            let d = 1.0 / probs[arm];
            dem_hat[arm] += d;
            rev_hat[arm] += x * d;
        }
        traj.arms.push(arm as u32);
        traj.policies.push(x);
        traj.outcomes.push(y);
        traj.welfare.push(if y == 1 { x } else { 0.0 });
    }
    Ok(traj)
}

/// Adversarial regret bound, raw formula (no hypothesis check):
/// `(gamma + eta(e-2) (K+1)/K ((2K+1)/6 + lambda^2/gamma) + lambda/K) T
///  + log(K+1)/eta`.
pub fn theorem_bound_formula(config: &Exp3Config, horizon: u64) -> f64 {
    let k = config.k as f64;
    let e2 = std::f64::consts::E - 2.0;
    let per_round = config.gamma
        + config.eta * e2 * ((k + 1.0) / k)
            * ((2.0 * k + 1.0) / 6.0 + config.lambda * config.lambda / config.gamma)
        + config.lambda / k;
    per_round * horizon as f64 + (k + 1.0).ln() / config.eta
}

/// Adversarial regret bound; rejects configs outside the theorem
/// hypothesis `(K+1) eta < gamma`.
pub fn theorem_bound(config: &Exp3Config, horizon: u64) -> Result<f64, Exp3Error> {
    if !config.satisfies_bound_hypothesis() {
        return Err(Exp3Error::OutsideTheoremRegime {
            keta: (config.k as f64 + 1.0) * config.eta,
            gamma: config.gamma,
        });
    }
    Ok(theorem_bound_formula(config, horizon))
}

/// Horizon-optimized tuning of `(K, gamma, eta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tuning {
    pub k: usize,
    pub gamma: f64,
    pub eta: f64,
    /// True when gamma was clamped because the horizon is too short for
    /// the asymptotic formulas.
    pub clamped: bool,
}

/// Approximate minimizer of the regret bound:
/// `a = (9(e-2))^{1/3} (sqrt(lambda/3)+lambda)^{2/3}`,
/// `eta = (log T / T)^{2/3}/a`,
/// `gamma = lambda sqrt((e-2)/a) (log T / T)^{1/3}`,
/// `K = round(sqrt(3 lambda a/(e-2)) (T/log T)^{1/3})`.
pub fn optimized_tuning(lambda: f64, horizon: u64) -> Result<Tuning, Exp3Error> {
    if horizon < 2 {
        return Err(Exp3Error::BadConfig("horizon must be >= 2".into()));
    }
    if !(0.0..1.0).contains(&lambda) || lambda == 0.0 {
        return Err(Exp3Error::BadConfig(format!("lambda {lambda} not in (0,1)")));
    }
    let t = horizon as f64;
    let e2 = std::f64::consts::E - 2.0;
    let a = (9.0 * e2).powf(1.0 / 3.0) * ((lambda / 3.0).sqrt() + lambda).powf(2.0 / 3.0);
    let ratio = t.ln() / t;
    let eta = ratio.powf(2.0 / 3.0) / a;
    let mut gamma = lambda * (e2 / a).sqrt() * ratio.powf(1.0 / 3.0);
    let k = ((3.0 * lambda * a / e2).sqrt() * ratio.recip().powf(1.0 / 3.0))
        .round()
        .max(1.0) as usize;
    let mut clamped = false;
    if gamma >= 1.0 {
        gamma = 0.5;
        clamped = true;
    }
    Ok(Tuning { k, gamma, eta, clamped })
}

impl Tuning {
    pub fn into_config(self, lambda: f64) -> Exp3Config {
        Exp3Config {
            k: self.k,
            gamma: self.gamma,
            eta: self.eta,
            lambda,
        }
    }
}
