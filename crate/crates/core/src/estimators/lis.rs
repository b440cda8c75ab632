use rand::{Rng, RngCore};

use super::{log_ratio, sample_log_weights, Cost, Direction, LadderConfig, RunPath, RunRecord, Start};
use crate::bridges::{log_bridge, BridgeSpec};
use crate::distributions::Family;
use crate::error::{Error, Result};
use crate::kernels::KernelPair;
use crate::logspace::{log_mean_exp, LOG_ZERO};

/// One linked importance sampling run.
///
/// Forward runs estimate `r`; reverse runs start from an exact `pi_1` draw,
/// visit the stages from `eta = 1` down, select links with the same stage
/// bridge functions and estimate `1/r`. The kernel is used the same way in
/// both directions: forward transitions fill indices above the incoming
/// state, reverse transitions fill those below.
pub fn run_lis<F, K>(family: &F, kernel: &K, config: &LadderConfig, start: Start<F::State>, rng: &mut dyn RngCore) -> Result<RunRecord<F::State>>
where
    F: Family,
    K: KernelPair<F> + ?Sized,
{
    config.validate()?;
    match config.direction {
        Direction::Forward => lis_core(
            family,
            kernel,
            &config.etas,
            &config.chain_lengths,
            &config.bridges,
            false,
            start,
            config.keep_path,
            rng,
        ),
        Direction::Reverse => {
            let etas: Vec<f64> = config.etas.iter().rev().copied().collect();
            let ks: Vec<usize> = config.chain_lengths.iter().rev().copied().collect();
            let bridges: Vec<BridgeSpec> = config.bridges.iter().rev().copied().collect();
            lis_core(family, kernel, &etas, &ks, &bridges, true, start, config.keep_path, rng)
        }
    }
}

/// LIS over an arbitrary sequence of distinct `eta` values in the order
/// given (not necessarily increasing). Stage bridge `j` links stage `j` to
/// stage `j+1` and is called as `log_bridge(bridge, log p_j, log p_{j+1})`.
#[allow(clippy::too_many_arguments)]
pub fn run_lis_on_ladder<F, K>(
    family: &F,
    kernel: &K,
    etas: &[f64],
    chain_lengths: &[usize],
    bridges: &[BridgeSpec],
    start: Start<F::State>,
    keep_path: bool,
    rng: &mut dyn RngCore,
) -> Result<RunRecord<F::State>>
where
    F: Family,
    K: KernelPair<F> + ?Sized,
{
    if etas.len() < 2 || chain_lengths.len() != etas.len() || bridges.len() + 1 != etas.len() {
        return Err(Error::config("ladder", "need n+1 etas and chain lengths and n bridges, n >= 1"));
    }
    for &e in etas {
        crate::distributions::check_eta(e)?;
    }
    lis_core(family, kernel, etas, chain_lengths, bridges, false, start, keep_path, rng)
}

#[allow(clippy::too_many_arguments)]
fn lis_core<F, K>(
    family: &F,
    kernel: &K,
    etas: &[f64],
    ks: &[usize],
    bridges: &[BridgeSpec],
    flip: bool,
    start: Start<F::State>,
    keep_path: bool,
    rng: &mut dyn RngCore,
) -> Result<RunRecord<F::State>>
where
    F: Family,
    K: KernelPair<F> + ?Sized,
{
    let n = etas.len() - 1;
    let stage_bridge = |j: usize, here: f64, next: f64| {
        if flip {
            log_bridge(&bridges[j], next, here)
        } else {
            log_bridge(&bridges[j], here, next)
        }
    };
    let mut cost = Cost::default();
    let mut path = keep_path.then(|| RunPath {
        states: Vec::with_capacity(n + 1),
        nu: Vec::with_capacity(n + 1),
        mu: Vec::with_capacity(n + 1),
    });

    let mut nu = rng.random_range(0..=ks[0]);
    let mut link = Some(match start {
        Start::Exact => {
            cost.exact_draws += 1;
            family.exact_sample(etas[0], rng)?
        }
        Start::Given(x) => x,
    });
    let mut log_est = 0.0;
    let mut chain: Vec<F::State> = Vec::new();
    for j in 0..=n {
        let eta = etas[j];
        let k_len = ks[j];
        if j > 0 {
            nu = rng.random_range(0..=k_len);
        }
        chain = fill_chain(family, kernel, eta, link.take().expect("link set"), nu, k_len, rng)?;
        cost.kernel_steps += k_len as u64 * kernel.elementary_updates();
        let here: Vec<f64> = chain.iter().map(|x| family.log_density(eta, x)).collect();
        if j > 0 {
            let prev = etas[j - 1];
            let v: Vec<f64> = chain
                .iter()
                .zip(&here)
                .map(|(x, &lh)| log_ratio(stage_bridge(j - 1, family.log_density(prev, x), lh), lh))
                .collect();
            log_est -= log_mean_exp(&v);
        }
        let mu = if j < n {
            let next = etas[j + 1];
            let w: Vec<f64> = chain
                .iter()
                .zip(&here)
                .map(|(x, &lh)| log_ratio(stage_bridge(j, lh, family.log_density(next, x)), lh))
                .collect();
            match sample_log_weights(&w, rng) {
                Some(mu) => {
                    log_est += log_mean_exp(&w);
                    link = Some(chain[mu].clone());
                    Some(mu)
                }
                None => {
                    log_est = LOG_ZERO;
                    None
                }
            }
        } else {
            Some(rng.random_range(0..=k_len))
        };
        if let Some(p) = path.as_mut() {
            p.states.push(chain.clone());
            p.nu.push(nu);
            if let Some(mu) = mu {
                p.mu.push(mu);
            }
        }
        if mu.is_none() {
            break;
        }
    }
    Ok(RunRecord {
        log_estimate: log_est,
        final_stage_states: chain,
        path,
        cost,
    })
}

/// States `x_0..x_K` with `x_nu = incoming`, forward transitions above and
/// reverse transitions below.
fn fill_chain<F, K>(family: &F, kernel: &K, eta: f64, incoming: F::State, nu: usize, k_len: usize, rng: &mut dyn RngCore) -> Result<Vec<F::State>>
where
    F: Family,
    K: KernelPair<F> + ?Sized,
{
    let mut chain: Vec<Option<F::State>> = vec![None; k_len + 1];
    chain[nu] = Some(incoming);
    for k in nu + 1..=k_len {
        let prev = chain[k - 1].as_ref().expect("filled");
        chain[k] = Some(kernel.step_forward(family, eta, prev, rng)?);
    }
    for k in (0..nu).rev() {
        let prev = chain[k + 1].as_ref().expect("filled");
        chain[k] = Some(kernel.step_reverse(family, eta, prev, rng)?);
    }
    Ok(chain.into_iter().map(|x| x.expect("filled")).collect())
}

/// Ratio-weighted average of an observable over the final-stage states of
/// forward LIS runs: `sum_i r_i mean_k a(x_{n,k}) / sum_i r_i`.
pub fn estimate_expectation<S>(records: &[RunRecord<S>], a: impl Fn(&S) -> f64) -> Result<f64> {
    let shift = records.iter().map(|r| r.log_estimate).fold(LOG_ZERO, f64::max);
    if shift == LOG_ZERO {
        return Err(Error::Degenerate("every run estimate is zero".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for r in records {
        if r.log_estimate == LOG_ZERO {
            continue;
        }
        let w = (r.log_estimate - shift).exp();
        let states = &r.final_stage_states;
        let mean = states.iter().map(&a).sum::<f64>() / states.len() as f64;
        num += w * mean;
        den += w;
    }
    Ok(num / den)
}
