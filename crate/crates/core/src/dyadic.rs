//! Dyadic search for the stochastic concave case.
//!
//! The algorithm keeps an active interval that contains the optimal
//! policy with high probability, probes a centered triple of points plus
//! the two open intervals between them, and trims the active interval as
//! soon as a confidence interval for a welfare difference separates from
//! zero.
//!
//! Probe points are kept as exact rationals.  Even epochs use offsets of
//! a sixth of the interval, so the points generically leave the dyadic
//! grid; exact rational keying sidesteps float-equality bugs either way.

use num_rational::Ratio;
use thiserror::Error;

use crate::env::{EnvError, Environment};
use crate::welfare::{demand, social_welfare};

/// Exact probe-point coordinate.  Denominators grow by at most a factor
/// of 12 per epoch and epochs lengthen geometrically, so i128 never
/// saturates at feasible horizons; an explicit guard panics loudly if it
/// ever would.
pub type Dyad = Ratio<i128>;

const DENOM_GUARD: i128 = 1 << 100;

pub fn dyad_to_f64(q: Dyad) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

#[derive(Debug, Error)]
pub enum DyadicError {
    #[error("confidence parameter must lie in (0,1), got {0}")]
    BadDelta(f64),
    #[error("welfare weight must lie in (0,1), got {0}")]
    BadLambda(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct DyadicConfig {
    pub delta: f64,
    pub lambda: f64,
}

impl DyadicConfig {
    pub fn new(delta: f64, lambda: f64) -> Result<Self, DyadicError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(DyadicError::BadDelta(delta));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(DyadicError::BadLambda(lambda));
        }
        Ok(Self { delta, lambda })
    }

    /// Default confidence parameter for a known horizon: `delta = T^{-5/2}`.
    pub fn for_horizon(horizon: u64, lambda: f64) -> Result<Self, DyadicError> {
        Self::new((horizon as f64).powf(-2.5), lambda)
    }
}

/// Probe points for epoch `tau` on interval `[lo, hi]`: midpoint `c`
/// plus offsets of `d/4` (odd epochs) or `d/6` (even epochs).
pub fn epoch_probe_points(lo: Dyad, hi: Dyad, tau: u64) -> (Dyad, Dyad, Dyad) {
    debug_assert!(lo < hi);
    let c = (lo + hi) / 2;
    let d = hi - lo;
    let off = if tau % 2 == 1 { d / 4 } else { d / 6 };
    let (l, r) = (c - off, c + off);
    assert!(
        *l.denom() < DENOM_GUARD && *r.denom() < DENOM_GUARD,
        "probe-point denominator guard exceeded at epoch {tau}"
    );
    (l, c, r)
}

/// Half-width of the revenue confidence interval at a point:
/// `x * sqrt(log(2/delta) / (2 n))`, with `x = 0` known exactly and the
/// `a/0 = +inf` convention for unsampled points.
pub fn half_width_point(x: f64, n: u64, delta: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if n == 0 {
        f64::INFINITY
    } else {
        x * ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
    }
}

/// Half-width of the integrated-demand confidence interval over an open
/// interval of the given width, with `n` the truncated in-interval count:
/// `lambda * width * (sqrt(log(2/delta) / (2(n+1))) + 2/(n+1))`.
pub fn half_width_interval(lambda: f64, width: f64, n: u64, delta: f64) -> f64 {
    let np1 = (n + 1) as f64;
    lambda * width * (((2.0 / delta).ln() / (2.0 * np1)).sqrt() + 2.0 / np1)
}

/// Interior design point `w1 + (w2-w1)(k+1/2)/(n+1)`; always strictly
/// inside `(w1, w2)` up to rounding.
pub fn interior_sample_point(w1: f64, w2: f64, n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    w1 + (w2 - w1) * ((k as f64 + 0.5) / (n + 1) as f64)
}

/// Per-point demand statistics with the `0/0 = 0` convention.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointStat {
    pub n: u64,
    pub sum: f64,
}

impl PointStat {
    pub fn push(&mut self, y: u8) {
        self.n += 1;
        self.sum += f64::from(y);
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

/// Streaming in-interval log with truncation.
///
/// The truncated index `s` is the last time the in-interval count had
/// the form `2^m - 1`; count and sum are snapshotted whenever the count
/// reaches such a value, which is exactly the state at the maximal
/// qualifying `s`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IntervalLog {
    count: u64,
    sum: f64,
    snap_count: u64,
    snap_sum: f64,
}

impl IntervalLog {
    pub fn push(&mut self, y: u8) {
        self.count += 1;
        self.sum += f64::from(y);
        if (self.count + 1).is_power_of_two() {
            self.snap_count = self.count;
            self.snap_sum = self.sum;
        }
    }

    /// `(mean, n)` with `mean = snap_sum / (n+1)` and `n` the truncated
    /// in-interval count.
    pub fn estimate(&self) -> (f64, u64) {
        (self.snap_sum / (self.snap_count + 1) as f64, self.snap_count)
    }

    pub fn raw_count(&self) -> u64 {
        self.count
    }
}

/// Truncated integrated-demand estimate for the open interval
/// `(w1, w2)` over a full `(policy, outcome)` history.
pub fn interval_demand_estimate(history: &[(f64, u8)], w1: f64, w2: f64) -> (f64, u64) {
    let mut log = IntervalLog::default();
    for &(x, y) in history {
        if w1 < x && x < w2 {
            log.push(y);
        }
    }
    log.estimate()
}

/// Sampling target within an epoch, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Left,
    Center,
    Right,
    LeftInterval,
    RightInterval,
}

/// Confidence interval `center ± half_width` for a welfare difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub half_width: f64,
}

impl ConfidenceInterval {
    pub fn inf(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn sup(&self) -> f64 {
        self.center + self.half_width
    }
}

/// The three per-round confidence intervals.
#[derive(Debug, Clone, Copy)]
pub struct IntervalTriple {
    pub lc: ConfidenceInterval,
    pub cr: ConfidenceInterval,
    pub lr: ConfidenceInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrimSide {
    Left,
    Right,
}

/// Trim rule: left if `inf J(l,c) >= 0` or `inf J(l,r) >= 0`, else right
/// if `sup J(c,r) <= 0` or `sup J(l,r) <= 0`, else continue the epoch.
pub fn trim_decision(js: &IntervalTriple) -> Option<TrimSide> {
    if js.lc.inf() >= 0.0 || js.lr.inf() >= 0.0 {
        Some(TrimSide::Left)
    } else if js.cr.sup() <= 0.0 || js.lr.sup() <= 0.0 {
        Some(TrimSide::Right)
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct DyadicState {
    lo: Dyad,
    hi: Dyad,
    tau: u64,
    epoch_start: u64,
    l: Dyad,
    c: Dyad,
    r: Dyad,
    lf: f64,
    cf: f64,
    rf: f64,
    stat_l: PointStat,
    stat_c: PointStat,
    stat_r: PointStat,
    log_lc: IntervalLog,
    log_cr: IntervalLog,
    k: u64,
    t: u64,
    history: Vec<(f64, u8)>,
    interval_history: Vec<(f64, f64)>,
}

impl Default for DyadicState {
    fn default() -> Self {
        Self::new()
    }
}

impl DyadicState {
    pub fn new() -> Self {
        let mut state = Self {
            lo: Ratio::new(0, 1),
            hi: Ratio::new(1, 1),
            tau: 1,
            epoch_start: 0,
            l: Ratio::new(0, 1),
            c: Ratio::new(0, 1),
            r: Ratio::new(0, 1),
            lf: 0.0,
            cf: 0.0,
            rf: 0.0,
            stat_l: PointStat::default(),
            stat_c: PointStat::default(),
            stat_r: PointStat::default(),
            log_lc: IntervalLog::default(),
            log_cr: IntervalLog::default(),
            k: 0,
            t: 0,
            history: Vec::new(),
            interval_history: vec![(0.0, 1.0)],
        };
        state.begin_epoch();
        state
    }

    /// Probe points for the current epoch, plus statistics rebuilt from
    /// the full history.  Any point or interval that was probed in an
    /// earlier epoch inherits its samples automatically.
    fn begin_epoch(&mut self) {
        let (l, c, r) = epoch_probe_points(self.lo, self.hi, self.tau);
        self.l = l;
        self.c = c;
        self.r = r;
        self.lf = dyad_to_f64(l);
        self.cf = dyad_to_f64(c);
        self.rf = dyad_to_f64(r);
        self.stat_l = PointStat::default();
        self.stat_c = PointStat::default();
        self.stat_r = PointStat::default();
        self.log_lc = IntervalLog::default();
        self.log_cr = IntervalLog::default();
        for i in 0..self.history.len() {
            let (x, y) = self.history[i];
            self.absorb(x, y);
        }
    }

    /// Route one observation into whichever statistics it matches.
    fn absorb(&mut self, x: f64, y: u8) {
        if x == self.lf {
            self.stat_l.push(y);
        } else if x == self.cf {
            self.stat_c.push(y);
        } else if x == self.rf {
            self.stat_r.push(y);
        }
        if self.lf < x && x < self.cf {
            self.log_lc.push(y);
        } else if self.cf < x && x < self.rf {
            self.log_cr.push(y);
        }
    }

    /// The five half-widths in target order.
    pub fn gammas(&self, config: &DyadicConfig) -> [f64; 5] {
        let d = config.delta;
        [
            half_width_point(self.lf, self.stat_l.n, d),
            half_width_point(self.cf, self.stat_c.n, d),
            half_width_point(self.rf, self.stat_r.n, d),
            half_width_interval(config.lambda, self.cf - self.lf, self.log_lc.estimate().1, d),
            half_width_interval(config.lambda, self.rf - self.cf, self.log_cr.estimate().1, d),
        ]
    }

    /// Most uncertain target, ties broken in the order
    /// `l, c, r, (l,c), (c,r)`.
    pub fn select_sampling_target(&self, config: &DyadicConfig) -> Target {
        let gammas = self.gammas(config);
        let order = [
            Target::Left,
            Target::Center,
            Target::Right,
            Target::LeftInterval,
            Target::RightInterval,
        ];
        let mut best = 0;
        for i in 1..5 {
            if gammas[i] > gammas[best] {
                best = i;
            }
        }
        order[best]
    }

    /// Policy to play this round; advances the round-robin counter when
    /// an interior point is chosen.
    pub fn next_policy(&mut self, config: &DyadicConfig) -> f64 {
        match self.select_sampling_target(config) {
            Target::Left => self.lf,
            Target::Center => self.cf,
            Target::Right => self.rf,
            Target::LeftInterval => self.interior(self.lf, self.cf, self.log_lc.estimate().1),
            Target::RightInterval => self.interior(self.cf, self.rf, self.log_cr.estimate().1),
        }
    }

    fn interior(&mut self, w1: f64, w2: f64, n: u64) -> f64 {
        let x = interior_sample_point(w1, w2, n, self.k);
        self.k = (self.k + 1) % (n + 1);
        x
    }

    /// Record one `(policy, outcome)` pair.
    pub fn observe(&mut self, x: f64, y: u8) {
        self.history.push((x, y));
        self.t += 1;
        self.absorb(x, y);
    }

    /// Confidence intervals for the welfare differences
    /// `Delta(l,c)`, `Delta(c,r)` and `Delta(l,r)`.
    pub fn confidence_intervals(&self, config: &DyadicConfig) -> IntervalTriple {
        let gammas = self.gammas(config);
        let (mean_lc, _) = self.log_lc.estimate();
        let (mean_cr, _) = self.log_cr.estimate();
        let delta_hat = |x: f64, dx: f64, xp: f64, dxp: f64, int_mean: f64| {
            xp * dxp - x * dx - config.lambda * (xp - x) * int_mean
        };
        let lc = ConfidenceInterval {
            center: delta_hat(self.lf, self.stat_l.mean(), self.cf, self.stat_c.mean(), mean_lc),
            half_width: gammas[1] + gammas[0] + gammas[3],
        };
        let cr = ConfidenceInterval {
            center: delta_hat(self.cf, self.stat_c.mean(), self.rf, self.stat_r.mean(), mean_cr),
            half_width: gammas[2] + gammas[1] + gammas[4],
        };
        let lr = ConfidenceInterval {
            center: lc.center + cr.center,
            half_width: gammas[2] + gammas[0] + gammas[3] + gammas[4],
        };
        IntervalTriple { lc, cr, lr }
    }

    /// Apply the trim rule; on a trim, close the epoch and set up the
    /// next one.  Returns the side trimmed, if any.
    pub fn trim_active_interval(&mut self, js: &IntervalTriple) -> Option<TrimSide> {
        let side = trim_decision(js)?;
        match side {
            TrimSide::Left => self.lo = self.l,
            TrimSide::Right => self.hi = self.r,
        }
        self.interval_history
            .push((dyad_to_f64(self.lo), dyad_to_f64(self.hi)));
        self.tau += 1;
        self.epoch_start = self.t;
        self.begin_epoch();
        Some(side)
    }

    pub fn active_interval(&self) -> (f64, f64) {
        (dyad_to_f64(self.lo), dyad_to_f64(self.hi))
    }

    pub fn epoch(&self) -> u64 {
        self.tau
    }

    pub fn rounds_into_epoch(&self) -> u64 {
        self.t - self.epoch_start
    }

    pub fn probe_points(&self) -> (f64, f64, f64) {
        (self.lf, self.cf, self.rf)
    }

    pub fn interval_history(&self) -> &[(f64, f64)] {
        &self.interval_history
    }
}

/// Full output of one dyadic-search run.
#[derive(Debug, Clone)]
pub struct DyadicRun {
    pub policies: Vec<f64>,
    pub outcomes: Vec<u8>,
    pub welfare: Vec<f64>,
    pub final_interval: (f64, f64),
    pub epochs: u64,
    pub interval_history: Vec<(f64, f64)>,
}

/// Run dyadic search for `horizon` rounds, invoking `on_step` after each
/// round's inference step.  For stochastic environments the valuation
/// stream is drawn from `seed` (the environment's own seed is replaced);
/// fixed sequences ignore `seed`.  The algorithm itself is deterministic.
pub fn run_dyadic_with(
    config: &DyadicConfig,
    env: &Environment,
    horizon: u64,
    seed: u64,
    mut on_step: impl FnMut(u64, &DyadicState, &IntervalTriple),
) -> Result<DyadicRun, EnvError> {
    let env = if env.is_stochastic() {
        env.reseeded(seed)
    } else {
        env.clone()
    };
    let mut state = DyadicState::new();
    let mut policies = Vec::with_capacity(horizon as usize);
    let mut outcomes = Vec::with_capacity(horizon as usize);
    let mut welfare = Vec::with_capacity(horizon as usize);
    for t in 1..=horizon {
        let x = state.next_policy(config);
        let v = env.draw_valuation(t)?;
        let y = demand(x, v);
        policies.push(x);
        outcomes.push(y);
        welfare.push(social_welfare(x, v, config.lambda));
        state.observe(x, y);
        let js = state.confidence_intervals(config);
        on_step(t, &state, &js);
        state.trim_active_interval(&js);
    }
    Ok(DyadicRun {
        policies,
        outcomes,
        welfare,
        final_interval: state.active_interval(),
        epochs: state.epoch(),
        interval_history: state.interval_history,
    })
}

pub fn run_dyadic(
    config: &DyadicConfig,
    env: &Environment,
    horizon: u64,
    seed: u64,
) -> Result<DyadicRun, EnvError> {
    run_dyadic_with(config, env, horizon, seed, |_, _, _| {})
}

/// Epoch-length decay constant `72 sqrt(10) (sqrt(2 log(2/delta)) + 4)`:
/// after at least [`CONSTTHREE`] rounds in an epoch, every confidence
/// half-width is at most `consttwo / sqrt(rounds into epoch)`.
pub fn consttwo(delta: f64) -> f64 {
    72.0 * 10f64.sqrt() * ((2.0 * (2.0 / delta).ln()).sqrt() + 4.0)
}

pub const CONSTTHREE: u64 = 10;
