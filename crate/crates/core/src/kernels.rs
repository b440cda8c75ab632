//! Pairs of Markov transitions `(T_eta, T̄_eta)` satisfying mutual
//! reversibility, `pi(x) T(x, x') = pi(x') T̄(x', x)`.
//!
//! Kernels are stateless; the target family and `eta` are passed on every
//! step, so one kernel value serves a whole ladder.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::distributions::{Family, FiniteFamily};
use crate::error::{Error, Result};
use crate::logspace::LOG_ZERO;

pub trait KernelPair<F: Family>: Send + Sync {
    /// One draw from `T_eta(x, .)`.
    fn step_forward(&self, target: &F, eta: f64, x: &F::State, rng: &mut dyn RngCore) -> Result<F::State>;

    /// One draw from `T̄_eta(x, .)`.
    fn step_reverse(&self, target: &F, eta: f64, x: &F::State, rng: &mut dyn RngCore) -> Result<F::State>;

    /// Elementary updates performed by one transition, for cost accounting.
    fn elementary_updates(&self) -> u64 {
        1
    }
}

impl<F: Family, K: KernelPair<F> + ?Sized> KernelPair<F> for Arc<K> {
    fn step_forward(&self, target: &F, eta: f64, x: &F::State, rng: &mut dyn RngCore) -> Result<F::State> {
        (**self).step_forward(target, eta, x, rng)
    }

    fn step_reverse(&self, target: &F, eta: f64, x: &F::State, rng: &mut dyn RngCore) -> Result<F::State> {
        (**self).step_reverse(target, eta, x, rng)
    }

    fn elementary_updates(&self) -> u64 {
        (**self).elementary_updates()
    }
}

/// How the random-walk proposal standard deviation depends on `eta`.
#[derive(Clone)]
pub enum ScaleRule {
    Constant(f64),
    /// `base^eta`.
    PowerOf(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl ScaleRule {
    pub fn at(&self, eta: f64) -> f64 {
        match self {
            ScaleRule::Constant(s) => *s,
            ScaleRule::PowerOf(base) => base.powf(eta),
            ScaleRule::Custom(f) => f(eta),
        }
    }
}

impl std::fmt::Debug for ScaleRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScaleRule::Constant(s) => write!(f, "Constant({s})"),
            ScaleRule::PowerOf(b) => write!(f, "PowerOf({b})"),
            ScaleRule::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Metropolis acceptance probability `min(1, p(x')/p(x))` from log densities.
pub fn acceptance_probability(log_current: f64, log_proposed: f64) -> f64 {
    if log_proposed == LOG_ZERO {
        0.0
    } else {
        (log_proposed - log_current).min(0.0).exp()
    }
}

/// Accepts `proposal` when `uniform < min(1, p(proposal)/p(x))`.
pub fn metropolis_update<F: Family<State = f64>>(target: &F, eta: f64, x: f64, proposal: f64, uniform: f64) -> f64 {
    let a = acceptance_probability(target.log_density(eta, &x), target.log_density(eta, &proposal));
    if uniform < a {
        proposal
    } else {
        x
    }
}

/// Gaussian random-walk Metropolis on the real line. Reversible, so the
/// forward and reverse transitions are the same.
#[derive(Debug, Clone)]
pub struct RandomWalkMetropolis {
    pub scale: ScaleRule,
    /// Metropolis updates per transition.
    pub updates: u32,
}

impl RandomWalkMetropolis {
    pub fn new(scale: ScaleRule) -> Self {
        Self { scale, updates: 1 }
    }

    pub fn with_updates(mut self, updates: u32) -> Self {
        self.updates = updates.max(1);
        self
    }

    fn step<F: Family<State = f64>>(&self, target: &F, eta: f64, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
        let mut log_current = target.log_density(eta, &x);
        if log_current == LOG_ZERO {
            return Err(Error::domain(format!("Metropolis start x = {x} has zero density at eta = {eta}")));
        }
        let sd = self.scale.at(eta);
        let mut x = x;
        for _ in 0..self.updates {
            let z: f64 = rng.sample(StandardNormal);
            let proposal = x + sd * z;
            let log_proposed = target.log_density(eta, &proposal);
            let u: f64 = rng.random();
            if log_proposed != LOG_ZERO && u.ln() < log_proposed - log_current {
                x = proposal;
                log_current = log_proposed;
            }
        }
        Ok(x)
    }
}

impl<F: Family<State = f64>> KernelPair<F> for RandomWalkMetropolis {
    fn step_forward(&self, target: &F, eta: f64, x: &f64, rng: &mut dyn RngCore) -> Result<f64> {
        self.step(target, eta, *x, rng)
    }

    fn step_reverse(&self, target: &F, eta: f64, x: &f64, rng: &mut dyn RngCore) -> Result<f64> {
        self.step(target, eta, *x, rng)
    }

    fn elementary_updates(&self) -> u64 {
        self.updates as u64
    }
}

/// Draws the next state from `pi_eta` independently of the current one.
#[derive(Debug, Clone, Copy, Default)]
pub struct Independence;

impl<F: Family> KernelPair<F> for Independence {
    fn step_forward(&self, target: &F, eta: f64, _x: &F::State, rng: &mut dyn RngCore) -> Result<F::State> {
        target.exact_sample(eta, rng)
    }

    fn step_reverse(&self, target: &F, eta: f64, _x: &F::State, rng: &mut dyn RngCore) -> Result<F::State> {
        target.exact_sample(eta, rng)
    }
}

/// Applies component kernels in a fixed order; the reverse applies their
/// reverses in the opposite order.
pub struct OrderedSweep<F: Family> {
    components: Vec<Arc<dyn KernelPair<F>>>,
}

impl<F: Family> OrderedSweep<F> {
    pub fn new(components: Vec<Arc<dyn KernelPair<F>>>) -> Self {
        Self { components }
    }
}

impl<F: Family> KernelPair<F> for OrderedSweep<F> {
    fn step_forward(&self, target: &F, eta: f64, x: &F::State, rng: &mut dyn RngCore) -> Result<F::State> {
        let mut state = x.clone();
        for k in &self.components {
            state = k.step_forward(target, eta, &state, rng)?;
        }
        Ok(state)
    }

    fn step_reverse(&self, target: &F, eta: f64, x: &F::State, rng: &mut dyn RngCore) -> Result<F::State> {
        let mut state = x.clone();
        for k in self.components.iter().rev() {
            state = k.step_reverse(target, eta, &state, rng)?;
        }
        Ok(state)
    }

    fn elementary_updates(&self) -> u64 {
        self.components.iter().map(|k| k.elementary_updates()).sum()
    }
}

/// Exchanges the roles of the forward and reverse transitions.
#[derive(Debug, Clone)]
pub struct Reversed<K>(pub K);

impl<F: Family, K: KernelPair<F>> KernelPair<F> for Reversed<K> {
    fn step_forward(&self, target: &F, eta: f64, x: &F::State, rng: &mut dyn RngCore) -> Result<F::State> {
        self.0.step_reverse(target, eta, x, rng)
    }

    fn step_reverse(&self, target: &F, eta: f64, x: &F::State, rng: &mut dyn RngCore) -> Result<F::State> {
        self.0.step_forward(target, eta, x, rng)
    }

    fn elementary_updates(&self) -> u64 {
        self.0.elementary_updates()
    }
}

pub type MatrixFn = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;

/// Recipe for the forward transition matrix at `eta`, given the target's log
/// weights at that `eta`. Every rule must leave the target invariant.
#[derive(Clone)]
pub enum MatrixRule {
    Identity,
    /// Metropolis with a symmetric proposal matrix; unused proposal mass in a
    /// row stays put.
    Metropolis { proposal: DMatrix<f64> },
    /// Holds with probability `hold`, otherwise applies `inner`.
    Lazy { hold: f64, inner: Box<MatrixRule> },
    /// Applies the rules left to right (matrix product in that order).
    Product(Vec<MatrixRule>),
    Custom(MatrixFn),
}

impl MatrixRule {
    fn is_reversible(&self) -> bool {
        match self {
            MatrixRule::Identity | MatrixRule::Metropolis { .. } => true,
            MatrixRule::Lazy { inner, .. } => inner.is_reversible(),
            MatrixRule::Product(_) | MatrixRule::Custom(_) => false,
        }
    }

    fn build(&self, eta: f64, log_w: &[f64]) -> DMatrix<f64> {
        let n = log_w.len();
        match self {
            MatrixRule::Identity => DMatrix::identity(n, n),
            MatrixRule::Metropolis { proposal } => {
                let mut t = DMatrix::zeros(n, n);
                for i in 0..n {
                    metropolis_row(proposal, log_w, i, |j, v| t[(i, j)] = v);
                }
                t
            }
            MatrixRule::Lazy { hold, inner } => {
                DMatrix::identity(n, n) * *hold + inner.build(eta, log_w) * (1.0 - hold)
            }
            MatrixRule::Product(rules) => rules
                .iter()
                .fold(DMatrix::identity(n, n), |acc, r| acc * r.build(eta, log_w)),
            MatrixRule::Custom(f) => f(eta, log_w),
        }
    }
}

fn metropolis_row(proposal: &DMatrix<f64>, log_w: &[f64], i: usize, mut set: impl FnMut(usize, f64)) {
    let n = log_w.len();
    if log_w[i] == LOG_ZERO {
        set(i, 1.0);
        return;
    }
    let mut moved = 0.0;
    for j in 0..n {
        if j != i {
            let v = proposal[(i, j)] * acceptance_probability(log_w[i], log_w[j]);
            set(j, v);
            moved += v;
        }
    }
    set(i, 1.0 - moved);
}

/// Explicit transition matrices over a finite state space.
#[derive(Clone)]
pub struct DiscreteMatrix {
    pub rule: MatrixRule,
    pub updates: u64,
}

impl DiscreteMatrix {
    pub fn new(rule: MatrixRule) -> Self {
        Self { rule, updates: 1 }
    }

    pub fn identity() -> Self {
        Self::new(MatrixRule::Identity)
    }

    pub fn metropolis(proposal: DMatrix<f64>) -> Self {
        Self::new(MatrixRule::Metropolis { proposal })
    }

    /// Metropolis with the nearest-neighbour proposal on a path `0 - 1 - ... - n-1`.
    pub fn lattice_metropolis(num_states: usize) -> Self {
        let mut q = DMatrix::zeros(num_states, num_states);
        for i in 0..num_states.saturating_sub(1) {
            q[(i, i + 1)] = 0.5;
            q[(i + 1, i)] = 0.5;
        }
        Self::metropolis(q)
    }

    pub fn lazy(hold: f64, inner: MatrixRule) -> Self {
        Self::new(MatrixRule::Lazy {
            hold,
            inner: Box::new(inner),
        })
    }

    pub fn forward_matrix<F: FiniteFamily>(&self, target: &F, eta: f64) -> DMatrix<f64> {
        self.rule.build(eta, &target.log_weights(eta))
    }

    /// `T̄(x', x) = pi(x) T(x, x') / pi(x')`; rows of zero-density states are
    /// the identity.
    pub fn reverse_matrix<F: FiniteFamily>(&self, target: &F, eta: f64) -> DMatrix<f64> {
        let log_w = target.log_weights(eta);
        let forward = self.rule.build(eta, &log_w);
        if self.rule.is_reversible() {
            return forward;
        }
        reverse_of(&forward, &log_w)
    }

    /// Checks that rows sum to one and that `pi T = pi`, to `tol`.
    pub fn validate<F: FiniteFamily>(&self, target: &F, eta: f64, tol: f64) -> Result<()> {
        let t = self.forward_matrix(target, eta);
        let pi = target.probabilities(eta);
        let n = pi.len();
        for i in 0..n {
            let s: f64 = t.row(i).iter().sum();
            if (s - 1.0).abs() > tol || t.row(i).iter().any(|&v| v < -tol) {
                return Err(Error::domain(format!("row {i} is not a probability vector (sum {s})")));
            }
        }
        for j in 0..n {
            let flow: f64 = (0..n).map(|i| pi[i] * t[(i, j)]).sum();
            if (flow - pi[j]).abs() > tol {
                return Err(Error::domain(format!("transition does not leave state {j} invariant")));
            }
        }
        Ok(())
    }

    fn forward_row<F: FiniteFamily>(&self, target: &F, eta: f64, i: usize) -> Vec<f64> {
        let n = target.num_states();
        match &self.rule {
            MatrixRule::Identity => {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                row
            }
            MatrixRule::Metropolis { proposal } => {
                let log_w = target.log_weights(eta);
                let mut row = vec![0.0; n];
                metropolis_row(proposal, &log_w, i, |j, v| row[j] = v);
                row
            }
            _ => self.forward_matrix(target, eta).row(i).iter().copied().collect(),
        }
    }

    fn check_start<F: FiniteFamily>(target: &F, eta: f64, i: usize) -> Result<()> {
        if target.log_density(eta, &i) == LOG_ZERO {
            Err(Error::domain(format!("state {i} has zero density at eta = {eta}")))
        } else {
            Ok(())
        }
    }
}

/// Reverse kernel of `forward` with respect to the weights `exp(log_w)`.
pub fn reverse_of(forward: &DMatrix<f64>, log_w: &[f64]) -> DMatrix<f64> {
    let n = log_w.len();
    let mut rev = DMatrix::zeros(n, n);
    for j in 0..n {
        if log_w[j] == LOG_ZERO {
            rev[(j, j)] = 1.0;
            continue;
        }
        for i in 0..n {
            if log_w[i] != LOG_ZERO {
                rev[(j, i)] = (log_w[i] - log_w[j]).exp() * forward[(i, j)];
            }
        }
    }
    rev
}

fn sample_row(row: &[f64], rng: &mut dyn RngCore) -> usize {
    let total: f64 = row.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            last = j;
            if u < p {
                return j;
            }
            u -= p;
        }
    }
    last
}

impl<F: FiniteFamily> KernelPair<F> for DiscreteMatrix {
    fn step_forward(&self, target: &F, eta: f64, x: &usize, rng: &mut dyn RngCore) -> Result<usize> {
        Self::check_start(target, eta, *x)?;
        let mut state = *x;
        for _ in 0..self.updates {
            state = sample_row(&self.forward_row(target, eta, state), rng);
        }
        Ok(state)
    }

    fn step_reverse(&self, target: &F, eta: f64, x: &usize, rng: &mut dyn RngCore) -> Result<usize> {
        Self::check_start(target, eta, *x)?;
        if self.rule.is_reversible() {
            return self.step_forward(target, eta, x, rng);
        }
        let rev = self.reverse_matrix(target, eta);
        let mut state = *x;
        for _ in 0..self.updates {
            let row: Vec<f64> = rev.row(state).iter().copied().collect();
            state = sample_row(&row, rng);
        }
        Ok(state)
    }

    fn elementary_updates(&self) -> u64 {
        self.updates
    }
}

impl DiscreteMatrix {
    /// Forward and reverse transition matrices for one transition (all
    /// elementary updates composed).
    pub fn transition_matrices<F: FiniteFamily>(&self, target: &F, eta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let f = self.forward_matrix(target, eta);
        let r = self.reverse_matrix(target, eta);
        let n = f.nrows();
        let pow = |m: &DMatrix<f64>| (0..self.updates).fold(DMatrix::identity(n, n), |acc, _| acc * m);
        (pow(&f), pow(&r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{DiscreteTable, DistributionSequence};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_density_proposal_is_rejected() {
        let nested = DistributionSequence::nested_uniform(0.1).unwrap();
        assert_eq!(metropolis_update(&nested, 1.0, 0.0, 0.5, 0.0), 0.0);
    }

    #[test]
    fn metropolis_ratio_for_unit_gaussian_step() {
        let gauss = DistributionSequence::generalized_normal(1.0, 0.0, 2.0).unwrap();
        let a = acceptance_probability(gauss.log_density(1.0, &0.0), gauss.log_density(1.0, &1.0));
        assert!((a - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(metropolis_update(&gauss, 1.0, 0.0, 1.0, 0.36), 1.0);
        assert_eq!(metropolis_update(&gauss, 1.0, 0.0, 1.0, 0.37), 0.0);
    }

    #[test]
    fn metropolis_zero_density_start_is_an_error() {
        let nested = DistributionSequence::nested_uniform(0.1).unwrap();
        let k = RandomWalkMetropolis::new(ScaleRule::Constant(0.1));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(k.step_forward(&nested, 1.0, &0.5, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn metropolis_forward_and_reverse_are_the_same_function() {
        let gauss = DistributionSequence::generalized_normal(0.3, 2.0, 2.0).unwrap();
        let k = RandomWalkMetropolis::new(ScaleRule::PowerOf(0.3)).with_updates(3);
        for seed in 0..20 {
            let a = k.step_forward(&gauss, 0.4, &0.7, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = k.step_reverse(&gauss, 0.4, &0.7, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    fn non_reversible_kernel(n: usize) -> DiscreteMatrix {
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    q[(i, j)] = 1.0 / (n as f64);
                }
            }
        }
        DiscreteMatrix::new(MatrixRule::Product(vec![
            MatrixRule::Metropolis { proposal: q },
            MatrixRule::Lazy {
                hold: 0.3,
                inner: Box::new(DiscreteMatrix::lattice_metropolis(n).rule),
            },
        ]))
    }

    #[test]
    fn reverse_matrix_satisfies_mutual_reversibility() {
        let table = DiscreteTable::new(&[1.0, 2.0, 3.0, 0.5], &[3.0, 0.5, 1.0, 2.0]).unwrap();
        let k = non_reversible_kernel(4);
        for &eta in &[0.0, 0.37, 1.0] {
            k.validate(&table, eta, 1e-12).unwrap();
            let t = k.forward_matrix(&table, eta);
            let r = k.reverse_matrix(&table, eta);
            let pi = table.probabilities(eta);
            for i in 0..4 {
                assert!((r.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for j in 0..4 {
                    assert!((pi[i] * t[(i, j)] - pi[j] * r[(j, i)]).abs() < 1e-12);
                }
            }
            assert!((&t - &r).abs().max() > 1e-6, "kernel should not be reversible");
        }
    }

    #[test]
    fn ordered_sweep_reverses_component_order() {
        let table = DiscreteTable::new(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap();
        let n = 3;
        let a = non_reversible_kernel(n);
        let b = DiscreteMatrix::lazy(0.5, MatrixRule::Identity);
        let sweep = DiscreteMatrix::new(MatrixRule::Product(vec![a.rule.clone(), b.rule.clone()]));
        let eta = 0.0;
        let expected = b.reverse_matrix(&table, eta) * a.reverse_matrix(&table, eta);
        let direct = sweep.reverse_matrix(&table, eta);
        assert!((expected - direct).abs().max() < 1e-12);
    }

    #[test]
    fn discrete_step_counts_and_rejects_zero_density_start() {
        let table = DiscreteTable::new(&[1.0, 0.0, 3.0], &[1.0, 1.0, 1.0]).unwrap();
        let k = DiscreteMatrix::lattice_metropolis(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(k.step_forward(&table, 0.0, &1, &mut rng).is_err());
        assert_eq!(KernelPair::<DiscreteTable>::elementary_updates(&k), 1);
    }
}
