//! Ratio and expectation estimators.
//!
//! Every run produces a [`RunRecord`] holding `log r_hat` for that run, with
//! [`LOG_ZERO`] for a zero estimate. Aggregation over runs is in
//! [`summarize`] and [`combine_bridged`].

mod ais;
mod bridged;
mod independent;
mod lis;
mod simple;

pub use ais::run_ais;
pub use bridged::{combine_bridged, combine_bridged_logs};
pub use independent::{
    link_log_weights, lis_independent_log_averaged, lis_independent_log_estimate, run_lis_independent, run_lis_independent_bridged,
};
pub use lis::{estimate_expectation, run_lis, run_lis_on_ladder};
pub use simple::{bridge_from_samples, run_bridge_pair, run_sis, sis_from_samples, Sampler};

use serde::{Deserialize, Serialize};

use crate::bridges::BridgeSpec;
use crate::error::{Error, Result};
use crate::logspace::LOG_ZERO;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Start at `eta = 0` and estimate `r = Z_1/Z_0`.
    Forward,
    /// Start at `eta = 1` and estimate `1/r`.
    Reverse,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        }
    }
}

/// Counts of the work a run performed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cost {
    pub exact_draws: u64,
    /// Elementary kernel updates (a compound transition counts each part).
    pub kernel_steps: u64,
}

impl Cost {
    pub fn weighted(&self, draw_cost: f64, step_cost: f64) -> f64 {
        draw_cost * self.exact_draws as f64 + step_cost * self.kernel_steps as f64
    }

    pub fn total(&self) -> u64 {
        self.exact_draws + self.kernel_steps
    }
}

impl std::ops::AddAssign for Cost {
    fn add_assign(&mut self, rhs: Self) {
        self.exact_draws += rhs.exact_draws;
        self.kernel_steps += rhs.kernel_steps;
    }
}

/// Where a ladder's first state comes from.
#[derive(Debug, Clone)]
pub enum Start<S> {
    /// An exact draw from the starting endpoint.
    Exact,
    /// A caller-supplied state, e.g. a well-separated state of a Markov chain
    /// on the starting endpoint. Counted as no work.
    Given(S),
}

/// A ladder `eta_0 = 0 < ... < eta_n = 1` with chain lengths `K_j` and one
/// stage bridge per adjacent pair.
///
/// AIS uses only `etas`; the kernel is passed to the run functions.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderConfig {
    pub etas: Vec<f64>,
    pub chain_lengths: Vec<usize>,
    pub bridges: Vec<BridgeSpec>,
    pub direction: Direction,
    /// Retain every stage's states and link indices in the record.
    pub keep_path: bool,
}

impl LadderConfig {
    pub fn new(etas: Vec<f64>, chain_lengths: Vec<usize>, bridges: Vec<BridgeSpec>) -> Result<Self> {
        let cfg = LadderConfig {
            etas,
            chain_lengths,
            bridges,
            direction: Direction::Forward,
            keep_path: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `eta_j = j/n`, all `K_j = m`, the same stage bridge kind throughout.
    /// An optimal bridge gets the `(K_j+1)/(K_{j+1}+1)` size ratio, here 1.
    pub fn uniform(n: usize, m: usize, bridge: BridgeSpec) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("n", "a ladder needs at least one stage step"));
        }
        Self::new(linear_etas(n), vec![m; n + 1], vec![bridge; n])
    }

    /// Ladder for AIS with `n` steps, `eta_j = j/n`.
    pub fn ais(n: usize) -> Result<Self> {
        Self::uniform(n, 0, BridgeSpec::Geometric)
    }

    /// Replaces the stage bridges with optimal bridges using the given
    /// per-stage guesses of `log(Z_{j+1}/Z_j)`.
    pub fn with_optimal_bridges(mut self, log_r_guesses: &[f64]) -> Result<Self> {
        if log_r_guesses.len() != self.num_steps() {
            return Err(Error::config("bridges", "need one ratio guess per stage step"));
        }
        let ks = &self.chain_lengths;
        self.bridges = log_r_guesses
            .iter()
            .enumerate()
            .map(|(j, &lr)| BridgeSpec::optimal_log(lr, BridgeSpec::stage_size_ratio(ks[j], ks[j + 1])))
            .collect();
        Ok(self)
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn with_path(mut self, keep: bool) -> Self {
        self.keep_path = keep;
        self
    }

    /// Number of stage steps `n`.
    pub fn num_steps(&self) -> usize {
        self.etas.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.etas;
        if e.len() < 2 {
            return Err(Error::config("etas", "need at least the two endpoints"));
        }
        if e[0] != 0.0 || e[e.len() - 1] != 1.0 {
            return Err(Error::config("etas", "endpoints must be exactly 0 and 1"));
        }
        if e.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("etas", "must be strictly increasing"));
        }
        if self.chain_lengths.len() != e.len() {
            return Err(Error::config("chain_lengths", "need one chain length per eta"));
        }
        if self.bridges.len() != e.len() - 1 {
            return Err(Error::config("bridges", "need one stage bridge per adjacent pair"));
        }
        Ok(())
    }
}

pub fn linear_etas(n: usize) -> Vec<f64> {
    (0..=n).map(|j| if j == n { 1.0 } else { j as f64 / n as f64 }).collect()
}

/// Per-stage states and link indices of one LIS run, in the order the run
/// visited the stages. For AIS each stage holds a single state.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPath<S> {
    pub states: Vec<Vec<S>>,
    /// Where the incoming state was placed in each stage.
    pub nu: Vec<usize>,
    /// Which state left each stage (the last entry is the uniform final pick).
    pub mu: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<S> {
    pub log_estimate: f64,
    /// States of the last stage visited (`eta = 1` forward, `eta = 0` reverse).
    pub final_stage_states: Vec<S>,
    pub path: Option<RunPath<S>>,
    pub cost: Cost,
}

impl<S> RunRecord<S> {
    pub fn estimate(&self) -> f64 {
        self.log_estimate.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.log_estimate == LOG_ZERO
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub r_hat: f64,
    pub se_r: f64,
    pub log_r_hat: f64,
    pub se_log_r: f64,
    /// Forward runs (or draws) contributing.
    pub runs: usize,
    /// Reverse runs contributing; 0 for one-sided estimates.
    pub reverse_runs: usize,
    pub zero_count: usize,
}

/// Mean and standard error of `exp(l_i)`, both as logs relative to a common
/// shift: returns `(log_mean, se_over_mean)`. Zeros count as zeros.
pub(crate) fn log_mean_and_rel_se(logs: &[f64]) -> (f64, f64) {
    let m = logs.len() as f64;
    let shift = logs.iter().copied().fold(LOG_ZERO, f64::max);
    if shift == LOG_ZERO {
        return (LOG_ZERO, f64::INFINITY);
    }
    let vals: Vec<f64> = logs.iter().map(|&l| (l - shift).exp()).collect();
    let mean = vals.iter().sum::<f64>() / m;
    let rel_se = if logs.len() < 2 {
        f64::NAN
    } else {
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        var.sqrt() / m.sqrt() / mean
    };
    (mean.ln() + shift, rel_se)
}

/// Mean and standard error of per-run estimates given as logs.
pub fn summarize_logs(logs: &[f64]) -> Result<EstimateSummary> {
    if logs.len() < 2 {
        return Err(Error::domain("summarize needs at least two runs"));
    }
    if logs.iter().any(|l| l.is_nan()) {
        return Err(Error::domain("a run estimate is NaN"));
    }
    let zero_count = logs.iter().filter(|&&l| l == LOG_ZERO).count();
    let (log_r_hat, se_log_r) = log_mean_and_rel_se(logs);
    let (r_hat, se_r) = if log_r_hat == LOG_ZERO {
        (0.0, 0.0)
    } else {
        let r = log_r_hat.exp();
        (r, r * se_log_r)
    };
    Ok(EstimateSummary {
        r_hat,
        se_r,
        log_r_hat,
        se_log_r,
        runs: logs.len(),
        reverse_runs: 0,
        zero_count,
    })
}

/// Aggregates run records. When every run is zero the log fields are
/// `LOG_ZERO` and `se_log_r` is infinite.
pub fn summarize<S>(records: &[RunRecord<S>]) -> Result<EstimateSummary> {
    let logs: Vec<f64> = records.iter().map(|r| r.log_estimate).collect();
    summarize_logs(&logs)
}

/// Picks an index with probability proportional to `exp(log_w[i])`, using one
/// uniform. Returns `None` when every weight is zero.
pub(crate) fn sample_log_weights(log_w: &[f64], rng: &mut dyn rand::RngCore) -> Option<usize> {
    use rand::Rng;
    let max = log_w.iter().copied().fold(LOG_ZERO, f64::max);
    if max == LOG_ZERO {
        return None;
    }
    let w: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &wi) in w.iter().enumerate() {
        if wi > 0.0 {
            acc += wi;
            last = i;
            if u < acc {
                return Some(i);
            }
        }
    }
    Some(last)
}

/// `log(a/b)` where `a` may be zero; `b` is a density of a state known to be
/// in the support.
#[inline]
pub(crate) fn log_ratio(log_a: f64, log_b: f64) -> f64 {
    if log_a == LOG_ZERO {
        LOG_ZERO
    } else {
        log_a - log_b
    }
}
