//! LIS with one stage step and independent draws at both endpoints.

use rand::RngCore;

use super::{log_mean_and_rel_se, log_ratio, sample_log_weights, Cost, EstimateSummary, RunRecord};
use crate::bridges::{log_bridge, BridgeSpec, RatioMode};
use crate::distributions::Family;
use crate::error::{Error, Result};
use crate::logspace::{log_add_exp, log_sum_exp, LOG_ZERO};

/// Logs of `p_*(x)/p_0(x)` and `p_*(x)/p_1(x)` for each state.
fn bridge_ratios<F: Family>(family: &F, bridge: &BridgeSpec, xs: &[F::State]) -> (Vec<f64>, Vec<f64>) {
    xs.iter()
        .map(|x| {
            let l0 = family.log_density(0.0, x);
            let l1 = family.log_density(1.0, x);
            let b = log_bridge(bridge, l0, l1);
            (log_ratio(b, l0), log_ratio(b, l1))
        })
        .unzip()
}

/// Log link-selection weights `p_*/p_0` over the `pi_0` sample.
pub fn link_log_weights<F: Family>(family: &F, bridge: &BridgeSpec, xs0: &[F::State]) -> Vec<f64> {
    bridge_ratios(family, bridge, xs0).0
}

/// Log estimate with link `mu` from `xs0` (`K0+1` draws of `pi_0`) and `xs1`
/// (`K1` draws of `pi_1`).
pub fn lis_independent_log_estimate<F: Family>(family: &F, bridge: &BridgeSpec, xs0: &[F::State], xs1: &[F::State], mu: usize) -> f64 {
    let (w, u) = bridge_ratios(family, bridge, xs0);
    let (_, v) = bridge_ratios(family, bridge, xs1);
    let log_s1 = log_sum_exp(&v);
    let scale = ((xs1.len() + 1) as f64 / xs0.len() as f64).ln();
    scale + log_sum_exp(&w) - log_add_exp(u[mu], log_s1)
}

/// Log of the estimate averaged over the link choice:
/// `(K1+1)/(K0+1) sum_mu w_mu / (u_mu + S1)`.
pub fn lis_independent_log_averaged<F: Family>(family: &F, bridge: &BridgeSpec, xs0: &[F::State], xs1: &[F::State]) -> f64 {
    let (w, u) = bridge_ratios(family, bridge, xs0);
    let (_, v) = bridge_ratios(family, bridge, xs1);
    let log_s1 = log_sum_exp(&v);
    let scale = ((xs1.len() + 1) as f64 / xs0.len() as f64).ln();
    let terms: Vec<f64> = w
        .iter()
        .zip(&u)
        .map(|(&wm, &um)| if wm == LOG_ZERO { LOG_ZERO } else { wm - log_add_exp(um, log_s1) })
        .collect();
    scale + log_sum_exp(&terms)
}

/// One run: `k0 + 1` exact draws from `pi_0`, then `k1` from `pi_1`, then
/// (unless averaging) a link drawn with probability proportional to
/// `p_*/p_0`. Both forms are unbiased for `r`; a zero link-weight sum gives
/// a zero estimate. `final_stage_states` holds the `pi_1` draws.
pub fn run_lis_independent<F: Family>(
    family: &F,
    bridge: &BridgeSpec,
    k0: usize,
    k1: usize,
    average_link: bool,
    rng: &mut dyn RngCore,
) -> Result<RunRecord<F::State>> {
    let mut xs0 = Vec::with_capacity(k0 + 1);
    for _ in 0..=k0 {
        xs0.push(family.exact_sample(0.0, rng)?);
    }
    let mut xs1 = Vec::with_capacity(k1);
    for _ in 0..k1 {
        xs1.push(family.exact_sample(1.0, rng)?);
    }
    let log_estimate = if average_link {
        lis_independent_log_averaged(family, bridge, &xs0, &xs1)
    } else {
        match sample_log_weights(&link_log_weights(family, bridge, &xs0), rng) {
            Some(mu) => lis_independent_log_estimate(family, bridge, &xs0, &xs1, mu),
            None => LOG_ZERO,
        }
    };
    Ok(RunRecord {
        log_estimate,
        final_stage_states: xs1,
        path: None,
        cost: Cost {
            exact_draws: (k0 + 1 + k1) as u64,
            kernel_steps: 0,
        },
    })
}

/// For each entry `(log weight, log estimate)` of a dependent average.
type Entries = Vec<(f64, f64)>;

/// `log sum_{k != j} exp(x_k)` for every `j`.
fn leave_one_out(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut prefix = vec![LOG_ZERO; n + 1];
    let mut suffix = vec![LOG_ZERO; n + 1];
    for i in 0..n {
        prefix[i + 1] = log_add_exp(prefix[i], xs[i]);
        suffix[n - 1 - i] = log_add_exp(suffix[n - i], xs[n - 1 - i]);
    }
    (0..n).map(|j| log_add_exp(prefix[j], suffix[j + 1])).collect()
}

/// Link-weighted, omitted-point-averaged entries for one side. `own` and
/// `cross` are `p_*/p_own` and `p_*/p_other` on the side that supplies the
/// link; `other` is `p_*/p_other` on the other side's sample.
fn side_entries(own: &[f64], cross: &[f64], other: &[f64]) -> Entries {
    let log_own_sum = log_sum_exp(own);
    if log_own_sum == LOG_ZERO {
        return Vec::new();
    }
    let n_own = own.len() as f64;
    let n_other = other.len() as f64;
    let loo = leave_one_out(other);
    let mut out = Vec::with_capacity(own.len() * other.len());
    for (mu, &wm) in own.iter().enumerate() {
        if wm == LOG_ZERO {
            continue;
        }
        let link_weight = wm - log_own_sum - n_other.ln();
        for rest in &loo {
            let log_est = (log_own_sum - n_own.ln()) - (log_add_exp(cross[mu], *rest) - n_other.ln());
            out.push((link_weight, log_est));
        }
    }
    out
}

fn log_average(entries: &Entries, summand: impl Fn(f64) -> f64) -> f64 {
    let terms: Vec<f64> = entries.iter().map(|&(w, l)| w + summand(l)).collect();
    log_sum_exp(&terms)
}

/// Bridged LIS from `runs` pairs of independent samples (`k0 + 1` from
/// `pi_0`, `k1 + 1` from `pi_1`), shared between the forward and reverse
/// estimates. The numerator and denominator summands of the top-level bridge
/// are averaged over the link choice and over which point of the other
/// sample is left out.
pub fn run_lis_independent_bridged<F: Family>(
    family: &F,
    bridge: &BridgeSpec,
    top: &BridgeSpec,
    k0: usize,
    k1: usize,
    runs: usize,
    rng: &mut dyn RngCore,
) -> Result<EstimateSummary> {
    if runs == 0 {
        return Err(Error::domain("need at least one sample pair"));
    }
    let mut fwd = Vec::with_capacity(runs);
    let mut rev = Vec::with_capacity(runs);
    for _ in 0..runs {
        let mut xs0 = Vec::with_capacity(k0 + 1);
        for _ in 0..=k0 {
            xs0.push(family.exact_sample(0.0, rng)?);
        }
        let mut xs1 = Vec::with_capacity(k1 + 1);
        for _ in 0..=k1 {
            xs1.push(family.exact_sample(1.0, rng)?);
        }
        let (w, u) = bridge_ratios(family, bridge, &xs0);
        let (v, z) = {
            let (to0, to1) = bridge_ratios(family, bridge, &xs1);
            (to1, to0)
        };
        fwd.push(side_entries(&w, &u, &v));
        rev.push(side_entries(&v, &z, &w));
    }
    let evaluate = |log_r: Option<f64>| -> (Vec<f64>, Vec<f64>) {
        let num = fwd
            .iter()
            .map(|e| match log_r {
                None => log_average(e, |l| 0.5 * l),
                Some(lr) => log_average(e, |l| -log_add_exp(lr - l, 0.0)),
            })
            .collect();
        let den = rev
            .iter()
            .map(|e| match log_r {
                None => log_average(e, |l| 0.5 * l),
                Some(lr) => log_average(e, |l| -log_add_exp(lr, -l)),
            })
            .collect();
        (num, den)
    };
    let ratio = |num: &[f64], den: &[f64]| -> Result<(f64, f64)> {
        let (ln, sn) = log_mean_and_rel_se(num);
        let (ld, sd) = log_mean_and_rel_se(den);
        if ln == LOG_ZERO || ld == LOG_ZERO {
            return Err(Error::Degenerate("every bridged summand on one side is zero".into()));
        }
        Ok((ln - ld, (sn * sn + sd * sd).sqrt()))
    };
    let (log_r_hat, se_log_r) = match *top {
        BridgeSpec::Geometric => {
            let (n, d) = evaluate(None);
            ratio(&n, &d)?
        }
        BridgeSpec::Optimal { ratio: RatioMode::Fixed { log_r }, .. } => {
            let (n, d) = evaluate(Some(log_r));
            ratio(&n, &d)?
        }
        BridgeSpec::Optimal {
            ratio: RatioMode::Iterated { init, rel_tol, max_iter },
            ..
        } => {
            let mut log_r = init.ln();
            let mut done = None;
            for _ in 0..max_iter {
                let (n, d) = evaluate(Some(log_r));
                let (next, se) = ratio(&n, &d)?;
                if (next - log_r).abs() <= rel_tol {
                    done = Some((next, se));
                    break;
                }
                log_r = next;
            }
            done.ok_or(Error::IterationFailed {
                last: log_r.exp(),
                iterations: max_iter,
            })?
        }
    };
    let r_hat = log_r_hat.exp();
    Ok(EstimateSummary {
        r_hat,
        se_r: r_hat * se_log_r,
        log_r_hat,
        se_log_r,
        runs,
        reverse_runs: runs,
        zero_count: fwd.iter().filter(|e| e.is_empty()).count(),
    })
}
