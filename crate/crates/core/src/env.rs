//! Environment suite: stochastic valuation distributions (uniform,
//! discrete, the four-point hard family, the concave density family) and
//! fixed adversarial sequences.
//!
//! Valuations are a pure function of `(seed, round)` via the SplitMix64
//! counter generator in [`crate::rng`], so streams are reproducible
//! independent of thread count.

use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::real::Real;
use crate::rng;
use crate::welfare::{expected_welfare_discrete, expected_welfare_uniform};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("lambda must lie strictly inside (0,1), got {0}")]
    BadLambda(f64),
    #[error("epsilon {0} outside the admissible range {1}")]
    BadEpsilon(f64, String),
    #[error("round {round} beyond fixed sequence of length {len}")]
    RoundOutOfRange { round: u64, len: usize },
    #[error("fixed-sequence value {0} outside [0,1]")]
    BadSequenceValue(f64),
    #[error("invalid discrete support: {0}")]
    BadSupport(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

/// Masses `(a, (1+eps)b, (1-eps)b, 1-a-2b)` of the four-point family.
///
/// `a = (1-l)(136-99l) / (2(4-3l)(24-17l))`, `b = (1-l) / (2(24-17l))`.
pub fn mu_epsilon_constants<R: Real>(lambda: R) -> Result<(R, R), EnvError> {
    if lambda <= R::zero() || lambda >= R::one() {
        return Err(EnvError::BadLambda(lambda.to_f64().unwrap_or(f64::NAN)));
    }
    let one = R::one();
    let a = (one - lambda) * (R::c(136.0) - R::c(99.0) * lambda)
        / (R::two() * (R::c(4.0) - R::c(3.0) * lambda) * (R::c(24.0) - R::c(17.0) * lambda));
    let b = (one - lambda) / (R::two() * (R::c(24.0) - R::c(17.0) * lambda));
    Ok((a, b))
}

/// Support/mass pairs of the distribution `mu^eps` on (1/4, 1/2, 3/4, 1).
pub fn mu_epsilon_support<R: Real>(lambda: R, epsilon: R) -> Result<[(R, R); 4], EnvError> {
    if epsilon < -R::one() || epsilon > R::one() {
        return Err(EnvError::BadEpsilon(
            epsilon.to_f64().unwrap_or(f64::NAN),
            "[-1,1]".into(),
        ));
    }
    let (a, b) = mu_epsilon_constants(lambda)?;
    let rest = R::one() - a - R::two() * b;
    Ok([
        (R::c(0.25), a),
        (R::c(0.5), (R::one() + epsilon) * b),
        (R::c(0.75), (R::one() - epsilon) * b),
        (R::one(), rest),
    ])
}

/// The lower-bound constants `(c1, c2, c3, C)` for the four-point family.
pub fn lower_bound_proof_constants<R: Real>(lambda: R) -> Result<(R, R, R, R), EnvError> {
    let (a, b) = mu_epsilon_constants(lambda)?;
    let one = R::one();
    let c1 = lambda / R::c(4.0) * b;
    let c2 = (one - lambda) / (R::c(8.0) * (R::c(4.0) - R::c(3.0) * lambda));
    let c3 = b * (R::two() / (a * (one - a - R::two() * b))).sqrt();
    let cap = (c1 * c1 * c3 * c3 / c2)
        .min(c2 / R::two())
        .min((c1 * c1 * c2 / (c3 * c3)).powf(one / R::c(3.0)) / R::c(16.0));
    Ok((c1, c2, c3, cap))
}

/// The concave lower-bound density family `f^eps`.
///
/// Three pieces: linear on `[0,1/2)`, `x^{-(2-lambda)}` on `[1/2,1-h]`,
/// constant on `(1-h,1]`, scaled so `f^0` integrates to one.
#[derive(Debug, Clone, Copy)]
pub struct ConcaveFamily<R> {
    pub lambda: R,
    pub epsilon: R,
    pub h_bar: R,
    pub eta_bar: R,
    pub eps_bar: R,
    pub c_bar: R,
}

impl<R: Real> ConcaveFamily<R> {
    pub fn new(lambda: R, epsilon: R) -> Result<Self, EnvError> {
        if lambda <= R::zero() || lambda >= R::one() {
            return Err(EnvError::BadLambda(lambda.to_f64().unwrap_or(f64::NAN)));
        }
        let one = R::one();
        let h_bar = (one - (one - lambda).sqrt()) / R::two();
        let eta_bar = (h_bar * (one - h_bar).powf(one - lambda) * (one - lambda)).recip();
        let eps_bar = R::half() * eta_bar.min(R::c(2.0 / 3.0) * R::two().powf(-lambda));
        if epsilon.abs() >= eps_bar {
            return Err(EnvError::BadEpsilon(
                epsilon.to_f64().unwrap_or(f64::NAN),
                format!("(-{0:?}, {0:?})", eps_bar),
            ));
        }
        // c_bar normalizes f^0; the eps terms cancel in the total mass.
        let a0 = R::two().powf(R::two() - lambda);
        let mid = ((one - h_bar).powf(lambda - one) - R::two().powf(one - lambda)) / (lambda - one);
        let mass0 = a0 / R::c(8.0) + mid + eta_bar * h_bar;
        let c_bar = mass0.recip();
        Ok(Self {
            lambda,
            epsilon,
            h_bar,
            eta_bar,
            eps_bar,
            c_bar,
        })
    }

    /// Slope of the linear-piece coefficient: `2^{2-lambda} - 8 h eps`.
    fn lin_coeff(&self) -> R {
        R::two().powf(R::two() - self.lambda) - R::c(8.0) * self.h_bar * self.epsilon
    }

    pub fn density(&self, x: R) -> R {
        let one = R::one();
        if x < R::zero() || x > one {
            R::zero()
        } else if x < R::half() {
            self.c_bar * self.lin_coeff() * x
        } else if x <= one - self.h_bar {
            self.c_bar * x.powf(self.lambda - R::two())
        } else {
            self.c_bar * (self.eta_bar + self.epsilon)
        }
    }

    pub fn cdf(&self, x: R) -> R {
        let one = R::one();
        let c = self.c_bar;
        let lam = self.lambda;
        if x <= R::zero() {
            return R::zero();
        }
        if x < R::half() {
            return c * self.lin_coeff() * x * x / R::two();
        }
        let f_half = c * self.lin_coeff() / R::c(8.0);
        if x <= one - self.h_bar {
            return f_half + c * (x.powf(lam - one) - R::two().powf(one - lam)) / (lam - one);
        }
        let top0 = f_half
            + c * ((one - self.h_bar).powf(lam - one) - R::two().powf(one - lam)) / (lam - one);
        (top0 + c * (self.eta_bar + self.epsilon) * (x.min(one) - (one - self.h_bar))).min(one)
    }

    /// Inverse CDF, exact per piece.
    pub fn quantile(&self, u: R) -> R {
        let one = R::one();
        let c = self.c_bar;
        let lam = self.lambda;
        let f_half = c * self.lin_coeff() / R::c(8.0);
        if u < f_half {
            return (R::two() * u / (c * self.lin_coeff())).sqrt();
        }
        let top0 = self.cdf(one - self.h_bar);
        if u <= top0 {
            let p = R::two().powf(one - lam) + (u - f_half) * (lam - one) / c;
            return p.powf((lam - one).recip());
        }
        (one - self.h_bar + (u - top0) / (c * (self.eta_bar + self.epsilon))).min(one)
    }

    /// Integral of the CDF on `[0,x]`, exact per piece.
    fn cdf_integral(&self, x: R) -> R {
        let one = R::one();
        let c = self.c_bar;
        let lam = self.lambda;
        let half = R::half();
        if x <= R::zero() {
            return R::zero();
        }
        if x < half {
            return c * self.lin_coeff() * x * x * x / R::c(6.0);
        }
        let h_half = c * self.lin_coeff() / R::c(48.0);
        let f_half = c * self.lin_coeff() / R::c(8.0);
        let b = f_half - c * R::two().powf(one - lam) / (lam - one);
        let mid = |y: R| b * (y - half) + c * (y.powf(lam) - half.powf(lam)) / (lam * (lam - one));
        let hi = one - self.h_bar;
        if x <= hi {
            return h_half + mid(x);
        }
        let h_hi = h_half + mid(hi);
        let f_hi = self.cdf(hi);
        let d = x.min(one) - hi;
        h_hi + f_hi * d + c * (self.eta_bar + self.epsilon) * d * d / R::two()
    }

    /// Expected welfare `x S(x) + weight * int_x^1 S`, `S = 1 - F`.
    pub fn expected_welfare(&self, x: R, weight: R) -> R {
        let one = R::one();
        let surv = one - self.cdf(x);
        let int_surv = (one - x) - (self.cdf_integral(one) - self.cdf_integral(x));
        x * surv + weight * int_surv
    }
}

/// Environment kinds; see module docs.
#[derive(Debug, Clone)]
pub enum EnvKind {
    Uniform,
    Discrete { support: Vec<(f64, f64)> },
    FourPointMu { lambda: f64, epsilon: f64 },
    ConcaveF { lambda: f64, epsilon: f64 },
    FixedSequence { values: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Environment {
    kind: EnvKind,
    seed: u64,
    concave: Option<ConcaveFamily<f64>>,
    discrete: Option<Vec<(f64, f64)>>,
}

impl Environment {
    pub fn new(kind: EnvKind, seed: u64) -> Result<Self, EnvError> {
        let mut concave = None;
        let mut discrete = None;
        match &kind {
            EnvKind::Uniform => {}
            EnvKind::Discrete { support } => {
                validate_support(support)?;
                discrete = Some(support.clone());
            }
            EnvKind::FourPointMu { lambda, epsilon } => {
                discrete = Some(mu_epsilon_support(*lambda, *epsilon)?.to_vec());
            }
            EnvKind::ConcaveF { lambda, epsilon } => {
                concave = Some(ConcaveFamily::new(*lambda, *epsilon)?);
            }
            EnvKind::FixedSequence { values } => {
                for &v in values {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(EnvError::BadSequenceValue(v));
                    }
                }
            }
        }
        Ok(Self {
            kind,
            seed,
            concave,
            discrete,
        })
    }

    pub fn uniform(seed: u64) -> Self {
        Self::new(EnvKind::Uniform, seed).unwrap()
    }

    pub fn fixed(values: Vec<f64>, seed: u64) -> Result<Self, EnvError> {
        Self::new(EnvKind::FixedSequence { values }, seed)
    }

    /// One-value-per-line decimal file in [0,1].
    pub fn fixed_from_file(path: &Path, seed: u64) -> Result<Self, EnvError> {
        let file = std::fs::File::open(path).map_err(|source| EnvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut values = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| EnvError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let v: f64 = trimmed.parse().map_err(|e| EnvError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("{e}"),
            })?;
            values.push(v);
        }
        Self::fixed(values, seed)
    }

    pub fn kind(&self) -> &EnvKind {
        &self.kind
    }

    /// Same distribution, different valuation stream.
    pub fn reseeded(&self, seed: u64) -> Environment {
        let mut env = self.clone();
        env.seed = seed;
        env
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self.kind, EnvKind::FixedSequence { .. })
    }

    /// Valuation of round `round` (1-based).  Deterministic in
    /// `(seed, round)`.
    pub fn draw_valuation(&self, round: u64) -> Result<f64, EnvError> {
        debug_assert!(round >= 1);
        match &self.kind {
            EnvKind::FixedSequence { values } => values
                .get((round - 1) as usize)
                .copied()
                .ok_or(EnvError::RoundOutOfRange {
                    round,
                    len: values.len(),
                }),
            EnvKind::Uniform => Ok(rng::counter_uniform(self.seed, round)),
            EnvKind::Discrete { .. } | EnvKind::FourPointMu { .. } => {
                let u = rng::counter_uniform(self.seed, round);
                let support = self.discrete.as_ref().unwrap();
                let mut acc = 0.0;
                for &(v, m) in support {
                    acc += m;
                    if u < acc {
                        return Ok(v);
                    }
                }
                Ok(support.last().unwrap().0)
            }
            EnvKind::ConcaveF { .. } => {
                let u = rng::counter_uniform(self.seed, round);
                Ok(self.concave.as_ref().unwrap().quantile(u))
            }
        }
    }

    /// Freeze the first `horizon` draws into a fixed sequence.
    pub fn freeze(&self, horizon: u64) -> Result<Environment, EnvError> {
        let values: Result<Vec<f64>, _> =
            (1..=horizon).map(|i| self.draw_valuation(i)).collect();
        Environment::fixed(values?, self.seed)
    }

    /// Expected welfare at policy `x` with welfare weight `lambda`, when
    /// the distribution admits a closed or semi-closed form.
    pub fn expected_welfare(&self, x: f64, lambda: f64) -> Option<f64> {
        match &self.kind {
            EnvKind::Uniform => Some(expected_welfare_uniform(x, lambda)),
            EnvKind::Discrete { .. } | EnvKind::FourPointMu { .. } => Some(
                expected_welfare_discrete(x, self.discrete.as_ref().unwrap(), lambda)
                    .expect("validated at construction"),
            ),
            EnvKind::ConcaveF { .. } => {
                Some(self.concave.as_ref().unwrap().expected_welfare(x, lambda))
            }
            EnvKind::FixedSequence { .. } => None,
        }
    }

    pub fn concave_family(&self) -> Option<&ConcaveFamily<f64>> {
        self.concave.as_ref()
    }

    pub fn discrete_support(&self) -> Option<&[(f64, f64)]> {
        self.discrete.as_deref()
    }

    pub fn sequence_len(&self) -> Option<usize> {
        match &self.kind {
            EnvKind::FixedSequence { values } => Some(values.len()),
            _ => None,
        }
    }
}

fn validate_support(support: &[(f64, f64)]) -> Result<(), EnvError> {
    if support.is_empty() {
        return Err(EnvError::BadSupport("empty support".into()));
    }
    let mut total = 0.0;
    for &(v, m) in support {
        if !(0.0..=1.0).contains(&v) {
            return Err(EnvError::BadSupport(format!("atom {v} outside [0,1]")));
        }
        if m < 0.0 {
            return Err(EnvError::BadSupport(format!("negative mass {m}")));
        }
        total += m;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(EnvError::BadSupport(format!("masses sum to {total}")));
    }
    Ok(())
}

/// Pass/fail report for the algebraic identities of the four-point family.
#[derive(Debug, Clone)]
pub struct MuIdentityReport {
    pub lambda: f64,
    pub epsilon: f64,
    pub gap_vs_c1_eps: f64,
    pub cross_gap_vs_c2: f64,
    pub argmax_structure: bool,
    pub capital_c: f64,
    pub tol: f64,
}

impl MuIdentityReport {
    pub fn pass(&self) -> bool {
        self.gap_vs_c1_eps.abs() <= self.tol
            && self.cross_gap_vs_c2.abs() <= self.tol
            && self.argmax_structure
            && self.capital_c > 0.0
    }
}

/// Checks `W^eps(1) - W^eps(1/4) = c1 eps` and
/// `W^1(1/4) - W^{-1}(3/4) = c2`, each to 1e-10, plus the per-region
/// argmax structure of the hard instance.
pub fn check_mu_identities(lambda: f64, epsilon: f64) -> Result<MuIdentityReport, EnvError> {
    let tol = 1e-10;
    let (c1, c2, _c3, capital_c) = lower_bound_proof_constants(lambda)?;
    let w = |eps: f64, x: f64| -> Result<f64, EnvError> {
        let support = mu_epsilon_support(lambda, eps)?;
        Ok(expected_welfare_discrete(x, &support, lambda)
            .map_err(|e| EnvError::BadSupport(e.to_string()))?)
    };
    let gap = w(epsilon, 1.0)? - w(epsilon, 0.25)?;
    let cross = w(1.0, 0.25)? - w(-1.0, 0.75)?;

    // Region-wise maxima: scan each region on a fine grid and compare to
    // the claimed per-region maximizer.
    let mut argmax_ok = true;
    let grid = 2000;
    let scan = |lo: f64, hi: f64, include_lo: bool, x_at: f64| -> Result<bool, EnvError> {
        let wx = w(epsilon, x_at)?;
        let start = if include_lo { 0 } else { 1 };
        for j in start..=grid {
            let x = lo + (hi - lo) * j as f64 / grid as f64;
            if w(epsilon, x)? > wx + 1e-12 {
                return Ok(false);
            }
        }
        Ok(true)
    };
    argmax_ok &= scan(0.5, 0.75, false, 0.75)?;
    argmax_ok &= scan(0.0, 0.5, true, 0.25)?;
    argmax_ok &= scan(0.75, 1.0, false, 1.0)?;

    Ok(MuIdentityReport {
        lambda,
        epsilon,
        gap_vs_c1_eps: gap - c1 * epsilon,
        cross_gap_vs_c2: cross - c2,
        argmax_structure: argmax_ok,
        capital_c,
        tol,
    })
}
