use rand::RngCore;

use super::{Cost, Direction, LadderConfig, RunPath, RunRecord, Start};
use crate::distributions::Family;
use crate::error::Result;
use crate::kernels::KernelPair;
use crate::logspace::LOG_ZERO;

/// One annealed importance sampling run.
///
/// Forward: `x_0` is drawn from `pi_0`, `x_j` is one forward transition at
/// `eta_j` from `x_{j-1}`, and the log weight is
/// `sum_j [log p_{eta_{j+1}}(x_j) - log p_{eta_j}(x_j)]`.
/// Reverse runs the ladder from `eta = 1` down with reverse transitions and
/// estimates `1/r`. Only `config.etas` is used.
///
/// A run stops as soon as its weight is zero; later states are not drawn.
pub fn run_ais<F, K>(family: &F, kernel: &K, config: &LadderConfig, start: Start<F::State>, rng: &mut dyn RngCore) -> Result<RunRecord<F::State>>
where
    F: Family,
    K: KernelPair<F> + ?Sized,
{
    config.validate()?;
    let etas: Vec<f64> = match config.direction {
        Direction::Forward => config.etas.clone(),
        Direction::Reverse => config.etas.iter().rev().copied().collect(),
    };
    let forward = config.direction == Direction::Forward;
    let n = etas.len() - 1;
    let mut cost = Cost::default();
    let mut x = match start {
        Start::Exact => {
            cost.exact_draws += 1;
            family.exact_sample(etas[0], rng)?
        }
        Start::Given(x) => x,
    };
    let mut states = Vec::new();
    let mut log_w = 0.0;
    for j in 0..n {
        if j > 0 {
            x = if forward {
                kernel.step_forward(family, etas[j], &x, rng)?
            } else {
                kernel.step_reverse(family, etas[j], &x, rng)?
            };
            cost.kernel_steps += kernel.elementary_updates();
        }
        if config.keep_path {
            states.push(vec![x.clone()]);
        }
        let up = family.log_density(etas[j + 1], &x);
        if up == LOG_ZERO {
            log_w = LOG_ZERO;
            break;
        }
        log_w += up - family.log_density(etas[j], &x);
    }
    Ok(RunRecord {
        log_estimate: log_w,
        final_stage_states: vec![x],
        path: config.keep_path.then(|| RunPath {
            states,
            nu: Vec::new(),
            mu: Vec::new(),
        }),
        cost,
    })
}
