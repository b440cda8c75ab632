//! Exact laws of estimators on finite state spaces.
//!
//! LIS stages interact only through the link state carried from one stage to
//! the next, so the estimator's moments factor into a backward recursion over
//! stages: for each possible incoming state we sum over every placement
//! index, every chain the kernels can produce and every link choice.

use nalgebra::DMatrix;

use crate::bridges::{log_bridge, BridgeSpec};
use crate::distributions::FiniteFamily;
use crate::error::{Error, Result};
use crate::estimators::{Direction, LadderConfig};
use crate::kernels::{DiscreteMatrix, Independence, Reversed};
use crate::logspace::{log_mean_exp, CompensatedSum, LOG_ZERO};

pub const DEFAULT_BUDGET: u128 = 1_000_000;

/// Kernels with explicit one-transition matrices.
pub trait MatrixKernel<F: FiniteFamily> {
    /// `(T, T̄)` at `eta`.
    fn matrices(&self, target: &F, eta: f64) -> (DMatrix<f64>, DMatrix<f64>);
}

impl<F: FiniteFamily> MatrixKernel<F> for DiscreteMatrix {
    fn matrices(&self, target: &F, eta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        self.transition_matrices(target, eta)
    }
}

impl<F: FiniteFamily> MatrixKernel<F> for Independence {
    fn matrices(&self, target: &F, eta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let p = target.probabilities(eta);
        let n = p.len();
        let t = DMatrix::from_fn(n, n, |_, j| p[j]);
        (t.clone(), t)
    }
}

impl<F: FiniteFamily, K: MatrixKernel<F>> MatrixKernel<F> for Reversed<K> {
    fn matrices(&self, target: &F, eta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let (t, r) = self.0.matrices(target, eta);
        (r, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationResult {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    /// Chains and paths visited.
    pub branches: u128,
}

impl EnumerationResult {
    fn from_moments(mean: f64, second_moment: f64, branches: u128) -> Self {
        Self {
            mean,
            second_moment,
            variance: second_moment - mean * mean,
            branches,
        }
    }
}

fn stage_order(config: &LadderConfig) -> (Vec<f64>, Vec<usize>, Vec<BridgeSpec>, bool) {
    match config.direction {
        Direction::Forward => (config.etas.clone(), config.chain_lengths.clone(), config.bridges.clone(), false),
        Direction::Reverse => (
            config.etas.iter().rev().copied().collect(),
            config.chain_lengths.iter().rev().copied().collect(),
            config.bridges.iter().rev().copied().collect(),
            true,
        ),
    }
}

/// Calls `visit(chain, probability)` for every chain of length `k_len + 1`
/// with `chain[nu] = start`, forward transitions above `nu` and reverse
/// transitions below, skipping chains of probability zero.
fn for_each_chain(t: &DMatrix<f64>, tr: &DMatrix<f64>, start: usize, nu: usize, k_len: usize, visit: &mut dyn FnMut(&[usize], f64)) {
    let mut chain = vec![0usize; k_len + 1];
    chain[nu] = start;
    let order: Vec<usize> = (nu + 1..=k_len).chain((0..nu).rev()).collect();
    fn rec(
        t: &DMatrix<f64>,
        tr: &DMatrix<f64>,
        nu: usize,
        order: &[usize],
        depth: usize,
        prob: f64,
        chain: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize], f64),
    ) {
        if depth == order.len() {
            visit(chain, prob);
            return;
        }
        let k = order[depth];
        let (m, from) = if k > nu { (t, chain[k - 1]) } else { (tr, chain[k + 1]) };
        for to in 0..m.ncols() {
            let p = m[(from, to)];
            if p > 0.0 {
                chain[k] = to;
                rec(t, tr, nu, order, depth + 1, prob * p, chain, visit);
            }
        }
    }
    rec(t, tr, nu, &order, 0, 1.0, &mut chain, visit);
}

/// Exact mean and variance of one LIS run's estimate, enumerating the
/// starting index, the exact draw, every kernel transition and every link
/// choice. Respects `config.direction` (reverse runs estimate `1/r`).
/// Errors with `Capacity` if the number of chains visited would exceed
/// `budget`.
pub fn enumerate_lis_expectation<F, K>(family: &F, kernel: &K, config: &LadderConfig, budget: u128) -> Result<EnumerationResult>
where
    F: FiniteFamily,
    K: MatrixKernel<F>,
{
    config.validate()?;
    let (etas, ks, bridges, flip) = stage_order(config);
    let s = family.num_states() as u128;
    let needed: u128 = ks.iter().map(|&k| s * (k as u128 + 1) * s.pow(k as u32)).sum();
    if needed > budget {
        return Err(Error::Capacity { needed, budget });
    }
    let n = etas.len() - 1;
    let ns = family.num_states();
    let lp = |eta: f64, x: usize| family.log_density(eta, &x);
    let bridge = |j: usize, here: f64, next: f64| {
        if flip {
            log_bridge(&bridges[j], next, here)
        } else {
            log_bridge(&bridges[j], here, next)
        }
    };
    let ratio = |b: f64, own: f64| if b == LOG_ZERO { LOG_ZERO } else { b - own };

    // g[y] = E[remaining product | incoming y], h[y] = E[square | incoming y].
    let mut g = vec![1.0; ns];
    let mut h = vec![1.0; ns];
    let mut branches = 0u128;
    for j in (0..=n).rev() {
        let eta = etas[j];
        let (t, tr) = kernel.matrices(family, eta);
        let k_len = ks[j];
        let mut g_new = vec![0.0; ns];
        let mut h_new = vec![0.0; ns];
        for y in 0..ns {
            if lp(eta, y) == LOG_ZERO {
                continue;
            }
            let mut acc_g = CompensatedSum::new();
            let mut acc_h = CompensatedSum::new();
            let place = 1.0 / (k_len as f64 + 1.0);
            for nu in 0..=k_len {
                for_each_chain(&t, &tr, y, nu, k_len, &mut |chain, prob| {
                    branches += 1;
                    let here: Vec<f64> = chain.iter().map(|&x| lp(eta, x)).collect();
                    let mut log_factor = 0.0;
                    if j > 0 {
                        let v: Vec<f64> = chain
                            .iter()
                            .zip(&here)
                            .map(|(&x, &lh)| ratio(bridge(j - 1, lp(etas[j - 1], x), lh), lh))
                            .collect();
                        log_factor -= log_mean_exp(&v);
                    }
                    let (cont_g, cont_h) = if j < n {
                        let w: Vec<f64> = chain
                            .iter()
                            .zip(&here)
                            .map(|(&x, &lh)| ratio(bridge(j, lh, lp(etas[j + 1], x)), lh))
                            .collect();
                        let lw = log_mean_exp(&w);
                        if lw == LOG_ZERO {
                            return;
                        }
                        log_factor += lw;
                        let max = w.iter().copied().fold(LOG_ZERO, f64::max);
                        let sum: f64 = w.iter().map(|&l| (l - max).exp()).sum();
                        let mut cg = CompensatedSum::new();
                        let mut ch = CompensatedSum::new();
                        for (mu, &l) in w.iter().enumerate() {
                            if l != LOG_ZERO {
                                let p = (l - max).exp() / sum;
                                cg.add(p * g[chain[mu]]);
                                ch.add(p * h[chain[mu]]);
                            }
                        }
                        (cg.value(), ch.value())
                    } else {
                        (1.0, 1.0)
                    };
                    let f = log_factor.exp();
                    acc_g.add(place * prob * f * cont_g);
                    acc_h.add(place * prob * f * f * cont_h);
                });
            }
            g_new[y] = acc_g.value();
            h_new[y] = acc_h.value();
        }
        g = g_new;
        h = h_new;
    }
    let pi = family.probabilities(etas[0]);
    let mean: CompensatedSum = pi.iter().zip(&g).map(|(p, v)| p * v).collect();
    let second: CompensatedSum = pi.iter().zip(&h).map(|(p, v)| p * v).collect();
    Ok(EnumerationResult::from_moments(mean.value(), second.value(), branches))
}

/// Exact mean and variance of one AIS run's estimate. Forward runs use `T`,
/// reverse runs walk the ladder from `eta = 1` with `T̄`.
pub fn enumerate_ais_expectation<F, K>(family: &F, kernel: &K, config: &LadderConfig) -> Result<EnumerationResult>
where
    F: FiniteFamily,
    K: MatrixKernel<F>,
{
    config.validate()?;
    let forward = config.direction == Direction::Forward;
    let etas: Vec<f64> = if forward {
        config.etas.clone()
    } else {
        config.etas.iter().rev().copied().collect()
    };
    let n = etas.len() - 1;
    let ns = family.num_states();
    let factor = |j: usize, x: usize| {
        let up = family.log_density(etas[j + 1], &x);
        if up == LOG_ZERO {
            0.0
        } else {
            (up - family.log_density(etas[j], &x)).exp()
        }
    };
    let pi = family.probabilities(etas[0]);
    let mut a: Vec<f64> = (0..ns).map(|x| pi[x] * factor(0, x)).collect();
    let mut b: Vec<f64> = (0..ns).map(|x| pi[x] * factor(0, x).powi(2)).collect();
    let mut branches = ns as u128;
    for j in 1..n {
        let (t, tr) = kernel.matrices(family, etas[j]);
        let m = if forward { t } else { tr };
        let mut a2 = vec![0.0; ns];
        let mut b2 = vec![0.0; ns];
        for to in 0..ns {
            let f = factor(j, to);
            let mut sa = CompensatedSum::new();
            let mut sb = CompensatedSum::new();
            for from in 0..ns {
                sa.add(a[from] * m[(from, to)]);
                sb.add(b[from] * m[(from, to)]);
            }
            a2[to] = sa.value() * f;
            b2[to] = sb.value() * f * f;
        }
        branches += (ns * ns) as u128;
        a = a2;
        b = b2;
    }
    let mean: CompensatedSum = a.into_iter().collect();
    let second: CompensatedSum = b.into_iter().collect();
    Ok(EnumerationResult::from_moments(mean.value(), second.value(), branches))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndependentEnumeration {
    pub single_link: EnumerationResult,
    pub averaged: EnumerationResult,
}

/// Exact laws of the independent-sample LIS estimate with a randomly chosen
/// link and with the link averaged out, over all `(K0+1)`-tuples from
/// `pi_0`, `K1`-tuples from `pi_1` and link choices.
pub fn enumerate_lis_independent<F: FiniteFamily>(
    family: &F,
    bridge: &BridgeSpec,
    k0: usize,
    k1: usize,
    budget: u128,
) -> Result<IndependentEnumeration> {
    use crate::estimators::{link_log_weights as link_weights, lis_independent_log_averaged as averaged_log, lis_independent_log_estimate as single_log};
    let ns = family.num_states();
    let total = k0 + 1 + k1;
    let needed = (ns as u128).pow(total as u32) * (k0 as u128 + 1);
    if needed > budget {
        return Err(Error::Capacity { needed, budget });
    }
    let p0 = family.probabilities(0.0);
    let p1 = family.probabilities(1.0);
    let mut s_m = CompensatedSum::new();
    let mut s_m2 = CompensatedSum::new();
    let mut a_m = CompensatedSum::new();
    let mut a_m2 = CompensatedSum::new();
    let mut idx = vec![0usize; total];
    let mut branches = 0u128;
    loop {
        let prob: f64 = idx[..=k0].iter().map(|&i| p0[i]).product::<f64>() * idx[k0 + 1..].iter().map(|&i| p1[i]).product::<f64>();
        if prob > 0.0 {
            let xs0 = &idx[..=k0];
            let xs1 = &idx[k0 + 1..];
            let avg = averaged_log(family, bridge, xs0, xs1).exp();
            a_m.add(prob * avg);
            a_m2.add(prob * avg * avg);
            let w = link_weights(family, bridge, xs0);
            let max = w.iter().copied().fold(LOG_ZERO, f64::max);
            if max != LOG_ZERO {
                let sum: f64 = w.iter().map(|&l| (l - max).exp()).sum();
                for (mu, &l) in w.iter().enumerate() {
                    if l == LOG_ZERO {
                        continue;
                    }
                    branches += 1;
                    let p = prob * (l - max).exp() / sum;
                    let est = single_log(family, bridge, xs0, xs1, mu).exp();
                    s_m.add(p * est);
                    s_m2.add(p * est * est);
                }
            }
        }
        // Odometer over all index tuples.
        let mut pos = 0;
        loop {
            if pos == total {
                let single_link = EnumerationResult::from_moments(s_m.value(), s_m2.value(), branches);
                let averaged = EnumerationResult::from_moments(a_m.value(), a_m2.value(), branches);
                return Ok(IndependentEnumeration { single_link, averaged });
            }
            idx[pos] += 1;
            if idx[pos] < ns {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}
