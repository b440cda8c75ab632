use super::{log_mean_and_rel_se, EstimateSummary, RunRecord};
use crate::bridges::{iterate_optimal_log_r, BridgeSpec, RatioMode};
use crate::error::{Error, Result};
use crate::logspace::{log_add_exp, LOG_ZERO};

/// Top-level bridge between forward runs (estimates of `r`) and reverse runs
/// (estimates of `1/r`).
///
/// Geometric: `mean sqrt(r_i) / mean sqrt(rr_i)`. Optimal:
/// `mean 1/(r c / r_i + 1) / mean 1/(r c + 1/rr_i)` with `c = M/Mbar` taken
/// from the actual record counts; the spec's `size_ratio` is ignored here.
/// The log standard error is the root-sum-square of the relative standard
/// errors of numerator and denominator.
pub fn combine_bridged<S>(forward: &[RunRecord<S>], reverse: &[RunRecord<S>], kind: &BridgeSpec) -> Result<EstimateSummary> {
    let f: Vec<f64> = forward.iter().map(|r| r.log_estimate).collect();
    let b: Vec<f64> = reverse.iter().map(|r| r.log_estimate).collect();
    combine_bridged_logs(&f, &b, kind)
}

/// [`combine_bridged`] on log estimates.
pub fn combine_bridged_logs(forward_logs: &[f64], reverse_logs: &[f64], kind: &BridgeSpec) -> Result<EstimateSummary> {
    if forward_logs.is_empty() || reverse_logs.is_empty() {
        return Err(Error::domain("bridged combination needs forward and reverse runs"));
    }
    if forward_logs.iter().all(|&l| l == LOG_ZERO) || reverse_logs.iter().all(|&l| l == LOG_ZERO) {
        return Err(Error::Degenerate("every run on one side is zero".into()));
    }
    let (num, den): (Vec<f64>, Vec<f64>) = match kind {
        BridgeSpec::Geometric => (
            forward_logs.iter().map(|l| 0.5 * l).collect(),
            reverse_logs.iter().map(|l| 0.5 * l).collect(),
        ),
        BridgeSpec::Optimal { ratio, .. } => {
            let log_r = match *ratio {
                RatioMode::Fixed { log_r } => log_r,
                RatioMode::Iterated { init, rel_tol, max_iter } => {
                    iterate_optimal_log_r(forward_logs, reverse_logs, init, rel_tol, max_iter)?
                }
            };
            let c = (forward_logs.len() as f64 / reverse_logs.len() as f64).ln();
            let shift = log_r + c;
            (
                forward_logs.iter().map(|&l| -log_add_exp(shift - l, 0.0)).collect(),
                reverse_logs.iter().map(|&l| -log_add_exp(shift, -l)).collect(),
            )
        }
    };
    let (log_num, se_num) = log_mean_and_rel_se(&num);
    let (log_den, se_den) = log_mean_and_rel_se(&den);
    let log_r_hat = log_num - log_den;
    let se_log_r = (se_num * se_num + se_den * se_den).sqrt();
    let r_hat = log_r_hat.exp();
    Ok(EstimateSummary {
        r_hat,
        se_r: r_hat * se_log_r,
        log_r_hat,
        se_log_r,
        runs: forward_logs.len(),
        reverse_runs: reverse_logs.len(),
        zero_count: forward_logs.iter().chain(reverse_logs).filter(|&&l| l == LOG_ZERO).count(),
    })
}
