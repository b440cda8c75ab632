use rand::RngCore;

use super::{log_mean_and_rel_se, log_ratio, Cost, EstimateSummary};
use crate::bridges::{log_bridge, BridgeSpec, RatioMode};
use crate::distributions::Family;
use crate::error::{Error, Result};
use crate::kernels::KernelPair;
use crate::logspace::LOG_ZERO;

/// Source of draws from an endpoint distribution.
pub enum Sampler<'a, F: Family> {
    Exact,
    /// Successive states of a chain started at `start` (assumed already
    /// stationary), keeping every `thin`-th transition.
    Chain {
        kernel: &'a dyn KernelPair<F>,
        start: F::State,
        thin: usize,
    },
}

impl<F: Family> Sampler<'_, F> {
    pub fn draw(&self, family: &F, eta: f64, count: usize, rng: &mut dyn RngCore) -> Result<(Vec<F::State>, Cost)> {
        let mut cost = Cost::default();
        let mut out = Vec::with_capacity(count);
        match self {
            Sampler::Exact => {
                for _ in 0..count {
                    out.push(family.exact_sample(eta, rng)?);
                }
                cost.exact_draws = count as u64;
            }
            Sampler::Chain { kernel, start, thin } => {
                let thin = (*thin).max(1);
                let mut x = start.clone();
                for _ in 0..count {
                    for _ in 0..thin {
                        x = kernel.step_forward(family, eta, &x, rng)?;
                    }
                    out.push(x.clone());
                }
                cost.kernel_steps = (count * thin) as u64 * kernel.elementary_updates();
            }
        }
        Ok((out, cost))
    }
}

/// Simple importance sampling: mean of `p_1(x)/p_0(x)` over draws from `pi_0`.
pub fn sis_from_samples<F: Family>(family: &F, samples: &[F::State]) -> Result<EstimateSummary> {
    let mut logs = Vec::with_capacity(samples.len());
    for x in samples {
        let l0 = family.log_density(0.0, x);
        if l0 == LOG_ZERO {
            return Err(Error::domain("a draw has zero density under p_0"));
        }
        logs.push(log_ratio(family.log_density(1.0, x), l0));
    }
    super::summarize_logs(&logs)
}

pub fn run_sis<F: Family>(family: &F, n_samples: usize, sampler: &Sampler<'_, F>, rng: &mut dyn RngCore) -> Result<EstimateSummary> {
    let (xs, _) = sampler.draw(family, 0.0, n_samples, rng)?;
    sis_from_samples(family, &xs)
}

fn bridge_terms<F: Family>(family: &F, spec: &BridgeSpec, xs: &[F::State], own_eta: f64) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let l0 = family.log_density(0.0, x);
            let l1 = family.log_density(1.0, x);
            let own = if own_eta == 0.0 { l0 } else { l1 };
            log_ratio(log_bridge(spec, l0, l1), own)
        })
        .collect()
}

fn bridge_once<F: Family>(family: &F, spec: &BridgeSpec, xs0: &[F::State], xs1: &[F::State]) -> Result<EstimateSummary> {
    let num = bridge_terms(family, spec, xs0, 0.0);
    let den = bridge_terms(family, spec, xs1, 1.0);
    let (log_num, se_num) = log_mean_and_rel_se(&num);
    let (log_den, se_den) = log_mean_and_rel_se(&den);
    if log_den == LOG_ZERO {
        return Err(Error::Degenerate("every bridge ratio in the p_1 sample is zero".into()));
    }
    let log_r_hat = log_num - log_den;
    let se_log_r = (se_num * se_num + se_den * se_den).sqrt();
    let r_hat = log_r_hat.exp();
    Ok(EstimateSummary {
        r_hat,
        se_r: r_hat * se_log_r,
        log_r_hat,
        se_log_r,
        runs: xs0.len(),
        reverse_runs: xs1.len(),
        zero_count: num.iter().filter(|&&l| l == LOG_ZERO).count(),
    })
}

/// Bridge sampling from given draws of `pi_0` and `pi_1`. An optimal bridge
/// in iterated mode is re-evaluated with each new estimate of `r` until the
/// log estimate moves by less than `rel_tol`.
pub fn bridge_from_samples<F: Family>(
    family: &F,
    bridge: &BridgeSpec,
    xs0: &[F::State],
    xs1: &[F::State],
) -> Result<EstimateSummary> {
    if xs0.is_empty() || xs1.is_empty() {
        return Err(Error::domain("bridge sampling needs draws from both endpoints"));
    }
    match *bridge {
        BridgeSpec::Optimal {
            ratio: RatioMode::Iterated { init, rel_tol, max_iter },
            size_ratio,
        } => {
            let mut log_r = init.ln();
            for _ in 0..max_iter {
                let s = bridge_once(family, &BridgeSpec::optimal_log(log_r, size_ratio), xs0, xs1)?;
                if (s.log_r_hat - log_r).abs() <= rel_tol {
                    return Ok(s);
                }
                log_r = s.log_r_hat;
                if !log_r.is_finite() {
                    return Err(Error::Degenerate("bridge iteration reached a zero estimate".into()));
                }
            }
            Err(Error::IterationFailed {
                last: log_r.exp(),
                iterations: max_iter,
            })
        }
        _ => bridge_once(family, bridge, xs0, xs1),
    }
}

/// Bridge sampling with `n0` exact draws from `pi_0` and `n1` from `pi_1`.
pub fn run_bridge_pair<F: Family>(
    family: &F,
    bridge: &BridgeSpec,
    n0: usize,
    n1: usize,
    rng: &mut dyn RngCore,
) -> Result<EstimateSummary> {
    let (xs0, _) = Sampler::Exact.draw(family, 0.0, n0, rng)?;
    let (xs1, _) = Sampler::Exact.draw(family, 1.0, n1, rng)?;
    bridge_from_samples(family, bridge, &xs0, &xs1)
}
