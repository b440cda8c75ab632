//! Replicated experiments: MSE of `log r_hat` over replications, standard
//! error calibration and equal-budget ladder scans, with per-run random
//! streams derived by hashing so results do not depend on thread count.

mod config;
mod output;

pub use config::{format_spec, parse_spec};
pub use output::{parse_rows, parse_summaries, write_rows, write_summaries, ROW_COLUMNS, SUMMARY_COLUMNS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridges::{BridgeSpec, RatioMode};
use crate::distributions::{DistributionSequence, Family};
use crate::error::{Error, Result};
use crate::estimators::{combine_bridged_logs, linear_etas, run_ais, run_lis, summarize_logs, Cost, Direction, EstimateSummary, LadderConfig, Start};
use crate::kernels::{Independence, KernelPair, RandomWalkMetropolis, ScaleRule};
use crate::logspace::LOG_ZERO;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilySpec {
    GeneralizedNormal { s: f64, t: f64, q: f64 },
    NestedUniform { s: f64 },
    ShiftedUniform { t: f64 },
}

impl FamilySpec {
    pub fn build(&self) -> Result<DistributionSequence> {
        match *self {
            FamilySpec::GeneralizedNormal { s, t, q } => DistributionSequence::generalized_normal(s, t, q),
            FamilySpec::NestedUniform { s } => DistributionSequence::nested_uniform(s),
            FamilySpec::ShiftedUniform { t } => DistributionSequence::shifted_uniform(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Ais,
    Lis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodDirection {
    Forward,
    Reverse,
    Bridged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BridgeKind {
    None,
    Geometric,
    Optimal,
}

impl BridgeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BridgeKind::None => "none",
            BridgeKind::Geometric => "geometric",
            BridgeKind::Optimal => "optimal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodSpec {
    pub estimator: Estimator,
    pub direction: MethodDirection,
    pub bridge: BridgeKind,
}

impl MethodSpec {
    pub fn estimator_str(&self) -> &'static str {
        match self.estimator {
            Estimator::Ais => "ais",
            Estimator::Lis => "lis",
        }
    }

    pub fn direction_str(&self) -> &'static str {
        match self.direction {
            MethodDirection::Forward => "forward",
            MethodDirection::Reverse => "reverse",
            MethodDirection::Bridged => "bridged",
        }
    }

    /// `estimator:direction[:bridge]`, as written in experiment files.
    pub fn id(&self) -> String {
        match self.bridge {
            BridgeKind::None => format!("{}:{}", self.estimator_str(), self.direction_str()),
            b => format!("{}:{}:{}", self.estimator_str(), self.direction_str(), b.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// Gaussian random-walk Metropolis; `scale: None` means `s^eta`.
    Metropolis { scale: Option<f64>, updates: u32 },
    Independence,
}

/// One experiment: a family, a list of methods and the ladder and run
/// settings shared by them. See the [`parse_spec`] docs for the file form.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub family: FamilySpec,
    pub methods: Vec<MethodSpec>,
    pub n: usize,
    pub k: usize,
    pub etas: Option<Vec<f64>>,
    /// `None` matches the LIS cost: `n_AIS = sum_j K_j`.
    pub ais_n: Option<usize>,
    pub ais_etas: Option<Vec<f64>>,
    pub stage_bridge: BridgeKind,
    pub runs: usize,
    pub bridged_runs: usize,
    pub replications: usize,
    pub master_seed: u64,
    pub kernel: KernelSpec,
    pub draw_cost: f64,
    pub step_cost: f64,
    pub budget: Option<usize>,
    pub scan_n: Vec<usize>,
    pub threads: usize,
}

impl ExperimentSpec {
    /// The short-run protocol: LIS with `n = 4`, `K_j = 50`, AIS cost matched,
    /// `M = 20` (10 per side when bridged), forward, reverse and bridged
    /// forms of both.
    pub fn short_runs(family: FamilySpec) -> Self {
        let m = |e, d, b| MethodSpec {
            estimator: e,
            direction: d,
            bridge: b,
        };
        use BridgeKind::{Geometric, Optimal};
        use Estimator::*;
        use MethodDirection::*;
        ExperimentSpec {
            family,
            methods: vec![
                m(Ais, Forward, BridgeKind::None),
                m(Ais, Reverse, BridgeKind::None),
                m(Ais, Bridged, Optimal),
                m(Lis, Forward, Geometric),
                m(Lis, Reverse, Geometric),
                m(Lis, Forward, Optimal),
                m(Lis, Reverse, Optimal),
                m(Lis, Bridged, Optimal),
            ],
            n: 4,
            k: 50,
            etas: None,
            ais_n: None,
            ais_etas: None,
            stage_bridge: Geometric,
            runs: 20,
            bridged_runs: 10,
            replications: 200,
            master_seed: 1,
            kernel: KernelSpec::Metropolis { scale: None, updates: 1 },
            draw_cost: 1.0,
            step_cost: 1.0,
            budget: None,
            scan_n: Vec::new(),
            threads: 0,
        }
    }

    /// As [`short_runs`](Self::short_runs) with `K_j = 200`.
    pub fn long_runs(family: FamilySpec) -> Self {
        ExperimentSpec {
            k: 200,
            ..Self::short_runs(family)
        }
    }

    pub fn with_methods(mut self, methods: &[&str]) -> Result<Self> {
        self.methods = methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.build().map_err(|e| Error::config("family", e.to_string()))?;
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be positive"));
        }
        if self.runs < 2 {
            return Err(Error::config("runs", "need at least two runs for a standard error"));
        }
        let bridged = self.methods.iter().any(|m| m.direction == MethodDirection::Bridged);
        if bridged && self.bridged_runs < 2 {
            return Err(Error::config("bridged_runs", "need at least two runs per side"));
        }
        if self.etas.is_none() && self.n == 0 {
            return Err(Error::config("n", "must be positive"));
        }
        if !(self.draw_cost >= 0.0 && self.step_cost >= 0.0) {
            return Err(Error::config("draw_cost", "cost weights must be nonnegative"));
        }
        if self.scan_n.contains(&0) {
            return Err(Error::config("scan_n", "ladder sizes must be positive"));
        }
        self.lis_ladder(BridgeKind::Geometric).map_err(|e| rename(e, "etas"))?;
        self.ais_ladder().map_err(|e| rename(e, "ais_etas"))?;
        if let KernelSpec::Metropolis { scale, updates } = self.kernel {
            if scale.is_some_and(|s| !(s > 0.0)) {
                return Err(Error::config("metropolis_scale", "must be positive"));
            }
            if updates == 0 {
                return Err(Error::config("metropolis_updates", "must be positive"));
            }
        }
        Ok(())
    }

    fn lis_etas(&self) -> Vec<f64> {
        self.etas.clone().unwrap_or_else(|| linear_etas(self.n))
    }

    /// LIS ladder with the given stage bridge kind.
    pub fn lis_ladder(&self, stage: BridgeKind) -> Result<LadderConfig> {
        let etas = self.lis_etas();
        let steps = etas.len().saturating_sub(1);
        let cfg = LadderConfig::new(etas.clone(), vec![self.k; etas.len()], vec![BridgeSpec::Geometric; steps])?;
        match stage {
            BridgeKind::Optimal => {
                let family = self.family.build()?;
                let guesses = etas
                    .windows(2)
                    .map(|w| family.log_z_ratio(w[0], w[1]).ok_or_else(|| Error::config("family", "no known stage ratios")))
                    .collect::<Result<Vec<_>>>()?;
                cfg.with_optimal_bridges(&guesses)
            }
            _ => Ok(cfg),
        }
    }

    /// AIS ladder; its cost-matched size is `sum_j K_j` of the LIS ladder.
    pub fn ais_ladder(&self) -> Result<LadderConfig> {
        match &self.ais_etas {
            Some(e) => LadderConfig::new(e.clone(), vec![0; e.len()], vec![BridgeSpec::Geometric; e.len().saturating_sub(1)]),
            None => {
                let n = self.ais_n.unwrap_or_else(|| self.k * self.lis_etas().len());
                LadderConfig::ais(n)
            }
        }
    }

    fn kernel(&self, family: &DistributionSequence) -> Box<dyn KernelPair<DistributionSequence>> {
        match self.kernel {
            KernelSpec::Metropolis { scale, updates } => {
                let rule = match scale {
                    Some(s) => ScaleRule::Constant(s),
                    None => ScaleRule::PowerOf(family.natural_scale_base()),
                };
                Box::new(RandomWalkMetropolis::new(rule).with_updates(updates))
            }
            KernelSpec::Independence => Box::new(Independence),
        }
    }
}

fn rename(e: Error, field: &str) -> Error {
    match e {
        Error::Config { message, .. } => Error::config(field, message),
        other => Error::config(field, other.to_string()),
    }
}

/// One replication of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub direction: String,
    pub bridge: String,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub replication: usize,
    pub r_hat: f64,
    pub log_r_hat: f64,
    pub se_log: f64,
    pub zero_count: usize,
    pub squared_error_of_log: f64,
    pub calibration_flag: bool,
    pub cost: f64,
    pub seed: u64,
}

/// Per-method aggregate over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub direction: String,
    pub bridge: String,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub replications: usize,
    pub mse: f64,
    /// Standard error of the mean of the squared errors.
    pub mse_se: f64,
    /// Fraction of individual runs that returned zero.
    pub zero_fraction: f64,
    pub calibration_fraction: f64,
    pub mean_cost: f64,
}

/// 32-byte stream seed for one run: SHA-256 of the master seed, the method
/// id, the replication index and the run index.
pub fn run_seed(master_seed: u64, method_id: &str, replication: u64, run: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((method_id.len() as u64).to_le_bytes());
    h.update(method_id.as_bytes());
    h.update(replication.to_le_bytes());
    h.update(run.to_le_bytes());
    let mut out = [0u8; 32];
    out.copy_from_slice(&h.finalize());
    out
}

pub fn run_rng(master_seed: u64, method_id: &str, replication: u64, run: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(run_seed(master_seed, method_id, replication, run))
}

/// A method with its concrete ladders, ready to run.
struct Plan {
    method: MethodSpec,
    /// Stream key: method id plus ladder shape.
    key: String,
    ladder: LadderConfig,
    n: usize,
    k: usize,
}

fn plan(spec: &ExperimentSpec, method: MethodSpec) -> Result<Plan> {
    let (ladder, k) = match method.estimator {
        Estimator::Ais => (spec.ais_ladder()?, 0),
        Estimator::Lis => {
            let stage = match method.direction {
                MethodDirection::Bridged => spec.stage_bridge,
                _ => method.bridge,
            };
            (spec.lis_ladder(stage)?, spec.k)
        }
    };
    let n = ladder.num_steps();
    Ok(Plan {
        key: format!("{}/n{}/k{}", method.id(), n, k),
        method,
        ladder,
        n,
        k,
    })
}

fn side_logs(
    family: &DistributionSequence,
    kernel: &dyn KernelPair<DistributionSequence>,
    plan: &Plan,
    direction: Direction,
    runs: usize,
    offset: usize,
    spec: &ExperimentSpec,
    replication: usize,
    cost: &mut Cost,
) -> Result<Vec<f64>> {
    let cfg = plan.ladder.clone().with_direction(direction);
    let mut logs = Vec::with_capacity(runs);
    for i in 0..runs {
        let mut rng = run_rng(spec.master_seed, &plan.key, replication as u64, (offset + i) as u64);
        let rec = match plan.method.estimator {
            Estimator::Ais => run_ais(family, kernel, &cfg, Start::Exact, &mut rng)?,
            Estimator::Lis => run_lis(family, kernel, &cfg, Start::Exact, &mut rng)?,
        };
        *cost += rec.cost;
        logs.push(rec.log_estimate);
    }
    Ok(logs)
}

fn one_replication(spec: &ExperimentSpec, family: &DistributionSequence, true_log_r: f64, plan: &Plan, replication: usize) -> Result<ResultRow> {
    let kernel = spec.kernel(family);
    let mut cost = Cost::default();
    let (log_r_hat, se_log, zero_count, m) = match plan.method.direction {
        MethodDirection::Forward => {
            let logs = side_logs(family, &*kernel, plan, Direction::Forward, spec.runs, 0, spec, replication, &mut cost)?;
            let s = summarize_logs(&logs)?;
            (s.log_r_hat, s.se_log_r, s.zero_count, spec.runs)
        }
        MethodDirection::Reverse => {
            let logs = side_logs(family, &*kernel, plan, Direction::Reverse, spec.runs, 0, spec, replication, &mut cost)?;
            let s = summarize_logs(&logs)?;
            (-s.log_r_hat, s.se_log_r, s.zero_count, spec.runs)
        }
        MethodDirection::Bridged => {
            let mb = spec.bridged_runs;
            let fwd = side_logs(family, &*kernel, plan, Direction::Forward, mb, 0, spec, replication, &mut cost)?;
            let rev = side_logs(family, &*kernel, plan, Direction::Reverse, mb, mb, spec, replication, &mut cost)?;
            let kind = match plan.method.bridge {
                BridgeKind::Optimal => BridgeSpec::Optimal {
                    ratio: RatioMode::iterated_default(),
                    size_ratio: 1.0,
                },
                _ => BridgeSpec::Geometric,
            };
            let zeros = fwd.iter().chain(&rev).filter(|&&l| l == LOG_ZERO).count();
            match combine_bridged_logs(&fwd, &rev, &kind) {
                Ok(EstimateSummary { log_r_hat, se_log_r, .. }) => (log_r_hat, se_log_r, zeros, mb),
                Err(Error::Degenerate(_)) | Err(Error::IterationFailed { .. }) => (f64::NAN, f64::INFINITY, zeros, mb),
                Err(e) => return Err(e),
            }
        }
    };
    let err = log_r_hat - true_log_r;
    let squared = if err.is_finite() { err * err } else { f64::INFINITY };
    Ok(ResultRow {
        method: plan.method.estimator_str().into(),
        direction: plan.method.direction_str().into(),
        bridge: plan.method.bridge.as_str().into(),
        n: plan.n,
        k: plan.k,
        m,
        replication,
        r_hat: log_r_hat.exp(),
        log_r_hat,
        se_log,
        zero_count,
        squared_error_of_log: squared,
        calibration_flag: !(err.abs() <= 2.0 * se_log),
        cost: cost.weighted(spec.draw_cost, spec.step_cost),
        seed: spec.master_seed,
    })
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    Ok(pool.install(f))
}

fn run_plans(spec: &ExperimentSpec, plans: &[Plan]) -> Result<Vec<ResultRow>> {
    let family = spec.family.build()?;
    let true_log_r = family
        .true_log_r()
        .ok_or_else(|| Error::config("family", "the true ratio is unknown"))?;
    let tasks: Vec<(usize, usize)> = (0..plans.len())
        .flat_map(|p| (0..spec.replications).map(move |r| (p, r)))
        .collect();
    with_pool(spec.threads, || {
        tasks
            .par_iter()
            .map(|&(p, r)| one_replication(spec, &family, true_log_r, &plans[p], r))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Runs every method for every replication. Rows are ordered by method,
/// then replication.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let plans = spec.methods.iter().map(|&m| plan(spec, m)).collect::<Result<Vec<_>>>()?;
    run_plans(spec, &plans)
}

/// `round(budget / (n + 1))`, rounding halves down.
pub fn scan_chain_length(budget: usize, n: usize) -> usize {
    let d = n + 1;
    let (q, rem) = (budget / d, budget % d);
    if 2 * rem > d {
        q + 1
    } else {
        q
    }
}

/// Runs the spec's LIS methods at each ladder size in `n_values` with
/// `K_j = round(C / (n + 1))`, plus its AIS methods once at `n_AIS = C`
/// (or `ais_n` when given). `C` is `spec.budget`, defaulting to
/// `(n + 1) k` of the base ladder.
pub fn equal_budget_scan(spec: &ExperimentSpec, n_values: &[usize]) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let budget = spec.budget.unwrap_or((spec.n + 1) * spec.k);
    let mut plans = Vec::new();
    for &n in n_values {
        let m = scan_chain_length(budget, n);
        if n == 0 || m == 0 {
            return Err(Error::config("budget", format!("budget {budget} leaves no chain for n = {n}")));
        }
        let at_n = ExperimentSpec {
            n,
            k: m,
            etas: None,
            ..spec.clone()
        };
        for &method in spec.methods.iter().filter(|m| m.estimator == Estimator::Lis) {
            plans.push(plan(&at_n, method)?);
        }
    }
    let baseline = ExperimentSpec {
        ais_n: Some(spec.ais_n.unwrap_or(budget)),
        ..spec.clone()
    };
    for &method in spec.methods.iter().filter(|m| m.estimator == Estimator::Ais) {
        plans.push(plan(&baseline, method)?);
    }
    run_plans(spec, &plans)
}

/// Fraction of rows whose estimate is more than two standard errors from
/// the truth. `NaN` for no rows.
pub fn calibration_report(rows: &[ResultRow]) -> f64 {
    rows.iter().filter(|r| r.calibration_flag).count() as f64 / rows.len() as f64
}

/// Groups rows by method, direction, bridge and ladder shape, in order of
/// first appearance.
pub fn aggregate(rows: &[ResultRow]) -> Vec<MethodSummary> {
    let mut groups: Vec<(MethodSummary, Vec<&ResultRow>)> = Vec::new();
    for row in rows {
        let same = |s: &MethodSummary| {
            s.method == row.method && s.direction == row.direction && s.bridge == row.bridge && s.n == row.n && s.k == row.k && s.m == row.m
        };
        match groups.iter_mut().find(|(s, _)| same(s)) {
            Some((_, v)) => v.push(row),
            None => groups.push((
                MethodSummary {
                    method: row.method.clone(),
                    direction: row.direction.clone(),
                    bridge: row.bridge.clone(),
                    n: row.n,
                    k: row.k,
                    m: row.m,
                    replications: 0,
                    mse: 0.0,
                    mse_se: 0.0,
                    zero_fraction: 0.0,
                    calibration_fraction: 0.0,
                    mean_cost: 0.0,
                },
                vec![row],
            )),
        }
    }
    groups
        .into_iter()
        .map(|(mut s, v)| {
            let r = v.len() as f64;
            let sq: Vec<f64> = v.iter().map(|x| x.squared_error_of_log).collect();
            s.replications = v.len();
            s.mse = sq.iter().sum::<f64>() / r;
            s.mse_se = if v.len() > 1 {
                (sq.iter().map(|e| (e - s.mse).powi(2)).sum::<f64>() / (r - 1.0)).sqrt() / r.sqrt()
            } else {
                f64::NAN
            };
            let runs_per = if s.direction == "bridged" { 2 * s.m } else { s.m };
            s.zero_fraction = v.iter().map(|x| x.zero_count).sum::<usize>() as f64 / (r * runs_per as f64);
            s.calibration_fraction = calibration_report(&v.iter().map(|&x| x.clone()).collect::<Vec<_>>());
            s.mean_cost = v.iter().map(|x| x.cost).sum::<f64>() / r;
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_rounding_examples() {
        let m: Vec<usize> = [4, 9, 19, 39].iter().map(|&n| scan_chain_length(250, n)).collect();
        assert_eq!(m, vec![50, 25, 12, 6]);
        assert_eq!(scan_chain_length(5, 1), 2);
        assert_eq!(scan_chain_length(7, 1), 3);
    }

    #[test]
    fn seeds_differ_by_every_input() {
        let a = run_seed(1, "lis:forward:geometric", 0, 0);
        assert_ne!(a, run_seed(2, "lis:forward:geometric", 0, 0));
        assert_ne!(a, run_seed(1, "lis:reverse:geometric", 0, 0));
        assert_ne!(a, run_seed(1, "lis:forward:geometric", 1, 0));
        assert_ne!(a, run_seed(1, "lis:forward:geometric", 0, 1));
        assert_eq!(a, run_seed(1, "lis:forward:geometric", 0, 0));
    }

    #[test]
    fn cost_matched_ais_ladder() {
        let spec = ExperimentSpec::short_runs(FamilySpec::GeneralizedNormal { s: 0.05, t: 0.0, q: 10.0 });
        assert_eq!(spec.ais_ladder().unwrap().num_steps(), 250);
        assert_eq!(ExperimentSpec::long_runs(spec.family).ais_ladder().unwrap().num_steps(), 1000);
    }

    #[test]
    fn identical_endpoints_give_zero_error() {
        let spec = ExperimentSpec {
            replications: 1,
            ..ExperimentSpec::short_runs(FamilySpec::GeneralizedNormal { s: 1.0, t: 0.0, q: 2.0 })
        }
        .with_methods(&["lis:forward:geometric"])
        .unwrap();
        let rows = run_experiment(&spec).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].log_r_hat, 0.0);
        assert_eq!(rows[0].squared_error_of_log, 0.0);
        assert_eq!(rows[0].cost, 20.0 * 251.0);
    }

    #[test]
    fn calibration_of_exact_rows_is_zero() {
        let row = ResultRow {
            method: "lis".into(),
            direction: "forward".into(),
            bridge: "geometric".into(),
            n: 4,
            k: 50,
            m: 20,
            replication: 0,
            r_hat: 1.0,
            log_r_hat: 0.0,
            se_log: 0.1,
            zero_count: 0,
            squared_error_of_log: 0.0,
            calibration_flag: false,
            cost: 1.0,
            seed: 1,
        };
        assert_eq!(calibration_report(&vec![row; 10]), 0.0);
    }
}
