//! Linked dragging: a Metropolis update of slow variables `y` that drags the
//! fast variables `x` through the interpolating ladder
//! `p_eta(x) = exp(-((1 - eta) U(x, y0) + eta U(x, y1)))` with linked chains,
//! accepting with the LIS estimate of the ratio of conditional normalizers.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use crate::bridges::{log_bridge, BridgeSpec};
use crate::distributions::{Family, FiniteFamily};
use crate::error::{Error, Result};
use crate::estimators::{log_ratio, run_lis_on_ladder, LadderConfig, Start};
use crate::kernels::{KernelPair, RandomWalkMetropolis, ScaleRule};
use crate::logspace::{log_mean_exp, CompensatedSum, LOG_ZERO};
use crate::oracles::MatrixKernel;

/// An energy `U(x, y)` whose slow part can be computed once per `y` and
/// reused for any number of fast states.
pub trait DragEnergy: Send + Sync {
    type Fast: Clone + Send + Sync + fmt::Debug;
    type Slow: Clone + Send + Sync + fmt::Debug;
    type Prepared: Send + Sync;

    /// The slow computation for `y`.
    fn prepare(&self, y: &Self::Slow) -> Self::Prepared;

    /// `U(x, y)` given the preparation for `y`.
    fn energy(&self, prepared: &Self::Prepared, x: &Self::Fast) -> f64;

    /// Size of a finite fast space, if it is one (states `0..n`).
    fn num_fast_states(&self) -> Option<usize> {
        None
    }
}

/// Symmetric proposal for the slow variables.
pub trait SlowProposal<Y>: Send + Sync {
    fn propose(&self, y: &Y, rng: &mut dyn RngCore) -> Y;
    /// `log S(to | from)`; must equal `log S(from | to)`.
    fn log_prob(&self, from: &Y, to: &Y) -> f64;
}

/// The interpolating family between two prepared slow values.
pub struct DragLadder<'a, E: DragEnergy> {
    energy: &'a E,
    y0: &'a E::Prepared,
    y1: &'a E::Prepared,
}

impl<'a, E: DragEnergy> DragLadder<'a, E> {
    pub fn new(energy: &'a E, y0: &'a E::Prepared, y1: &'a E::Prepared) -> Self {
        Self { energy, y0, y1 }
    }

    /// `U(x, y0)` and `U(x, y1)`.
    pub fn energies(&self, x: &E::Fast) -> (f64, f64) {
        (self.energy.energy(self.y0, x), self.energy.energy(self.y1, x))
    }
}

impl<E: DragEnergy> Family for DragLadder<'_, E> {
    type State = E::Fast;

    fn log_density(&self, eta: f64, x: &E::Fast) -> f64 {
        let (u0, u1) = self.energies(x);
        if eta == 0.0 {
            -u0
        } else if eta == 1.0 {
            -u1
        } else {
            -((1.0 - eta) * u0 + eta * u1)
        }
    }

    fn exact_sample(&self, _eta: f64, _rng: &mut dyn RngCore) -> Result<E::Fast> {
        Err(Error::Capability("dragging ladders have no exact sampler".into()))
    }

    fn log_z_ratio(&self, _from: f64, _to: f64) -> Option<f64> {
        None
    }
}

impl<E: DragEnergy<Fast = usize>> FiniteFamily for DragLadder<'_, E> {
    fn num_states(&self) -> usize {
        self.energy.num_fast_states().expect("finite fast space")
    }
}

pub struct DragModel<E, P, K> {
    pub energy: E,
    pub proposal: P,
    /// Fast-variable kernel, used for every ladder the update builds.
    pub kernel: K,
    /// Ladder over `eta`; stage bridges default to geometric.
    pub ladder: LadderConfig,
    slow_evals: AtomicU64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DragOutcome<X, Y> {
    pub fast: X,
    pub slow: Y,
    pub accepted: bool,
    /// `min(0, log of the acceptance ratio)`.
    pub log_acceptance: f64,
}

impl<E, P, K> DragModel<E, P, K>
where
    E: DragEnergy,
    P: SlowProposal<E::Slow>,
    K: for<'a> KernelPair<DragLadder<'a, E>>,
{
    pub fn new(energy: E, proposal: P, kernel: K, ladder: LadderConfig) -> Result<Self> {
        ladder.validate()?;
        Ok(Self {
            energy,
            proposal,
            kernel,
            ladder,
            slow_evals: AtomicU64::new(0),
        })
    }

    /// Slow preparations performed so far through this model.
    pub fn slow_evaluations(&self) -> u64 {
        self.slow_evals.load(Ordering::Relaxed)
    }

    pub fn prepare(&self, y: &E::Slow) -> E::Prepared {
        self.slow_evals.fetch_add(1, Ordering::Relaxed);
        self.energy.prepare(y)
    }

    /// `-((1 - eta) U(x, y0) + eta U(x, y1))`.
    pub fn interp_log_p(&self, y0: &E::Slow, y1: &E::Slow, eta: f64, x: &E::Fast) -> Result<f64> {
        crate::distributions::check_eta(eta)?;
        let (p0, p1) = (self.prepare(y0), self.prepare(y1));
        Ok(DragLadder::new(&self.energy, &p0, &p1).log_density(eta, x))
    }

    /// One update from `(x0, y0)`, preparing `y0` and the proposal once each.
    pub fn linked_drag_update(&self, x0: &E::Fast, y0: &E::Slow, rng: &mut dyn RngCore) -> Result<DragOutcome<E::Fast, E::Slow>> {
        let y1 = self.proposal.propose(y0, rng);
        let prep0 = self.prepare(y0);
        let prep1 = self.prepare(&y1);
        self.drag_with(x0, y0, &prep0, y1, &prep1, rng).map(|(out, _)| out)
    }

    fn drag_with(
        &self,
        x0: &E::Fast,
        y0: &E::Slow,
        prep0: &E::Prepared,
        y1: E::Slow,
        prep1: &E::Prepared,
        rng: &mut dyn RngCore,
    ) -> Result<(DragOutcome<E::Fast, E::Slow>, bool)> {
        let ladder = DragLadder::new(&self.energy, prep0, prep1);
        let cfg = &self.ladder;
        let rec = run_lis_on_ladder(
            &ladder,
            &self.kernel,
            &cfg.etas,
            &cfg.chain_lengths,
            &cfg.bridges,
            Start::Given(x0.clone()),
            true,
            rng,
        )?;
        let log_acc = rec.log_estimate.min(0.0);
        let reject = DragOutcome {
            fast: x0.clone(),
            slow: y0.clone(),
            accepted: false,
            log_acceptance: log_acc,
        };
        if log_acc == LOG_ZERO {
            return Ok((reject, false));
        }
        let path = rec.path.expect("path retained");
        let x1 = rec.final_stage_states[*path.mu.last().expect("final pick")].clone();
        let u: f64 = rng.random();
        if u < log_acc.exp() {
            Ok((
                DragOutcome {
                    fast: x1,
                    slow: y1,
                    accepted: true,
                    log_acceptance: log_acc,
                },
                true,
            ))
        } else {
            Ok((reject, false))
        }
    }
}

/// A chain of drag updates that keeps the preparation of its current slow
/// value, so each update needs one slow computation.
pub struct DragChain<'m, E: DragEnergy, P, K> {
    model: &'m DragModel<E, P, K>,
    pub fast: E::Fast,
    pub slow: E::Slow,
    prepared: E::Prepared,
    pub accepted: u64,
    pub steps: u64,
}

impl<'m, E, P, K> DragChain<'m, E, P, K>
where
    E: DragEnergy,
    P: SlowProposal<E::Slow>,
    K: for<'a> KernelPair<DragLadder<'a, E>>,
{
    pub fn new(model: &'m DragModel<E, P, K>, fast: E::Fast, slow: E::Slow) -> Self {
        let prepared = model.prepare(&slow);
        Self {
            model,
            fast,
            slow,
            prepared,
            accepted: 0,
            steps: 0,
        }
    }

    pub fn step(&mut self, rng: &mut dyn RngCore) -> Result<bool> {
        let y1 = self.model.proposal.propose(&self.slow, rng);
        let prep1 = self.model.prepare(&y1);
        let (out, accepted) = self.model.drag_with(&self.fast, &self.slow, &self.prepared, y1, &prep1, rng)?;
        self.steps += 1;
        if accepted {
            self.accepted += 1;
            self.fast = out.fast;
            self.slow = out.slow;
            self.prepared = prep1;
        }
        Ok(accepted)
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.steps.max(1) as f64
    }
}

/// Log of the acceptance ratio (before the `min`) for given stage chains.
pub fn log_acceptance_from_chains<F: Family>(family: &F, etas: &[f64], bridges: &[BridgeSpec], chains: &[Vec<F::State>]) -> f64 {
    let mut total = 0.0;
    for j in 0..etas.len() - 1 {
        let w: Vec<f64> = chains[j]
            .iter()
            .map(|x| {
                let here = family.log_density(etas[j], x);
                log_ratio(log_bridge(&bridges[j], here, family.log_density(etas[j + 1], x)), here)
            })
            .collect();
        let v: Vec<f64> = chains[j + 1]
            .iter()
            .map(|x| {
                let here = family.log_density(etas[j + 1], x);
                log_ratio(log_bridge(&bridges[j], family.log_density(etas[j], x), here), here)
            })
            .collect();
        total += log_mean_exp(&w) - log_mean_exp(&v);
    }
    total
}

/// Acceptance probability of a one-step ladder with the geometric bridge:
/// `min(1, mean_0 exp(-(U1 - U0)/2) / mean_1 exp(-(U0 - U1)/2))`.
pub fn acceptance_n1_geometric<E: DragEnergy>(energy: &E, chain0: &[E::Fast], chain1: &[E::Fast], y0: &E::Slow, y1: &E::Slow) -> f64 {
    let (p0, p1) = (energy.prepare(y0), energy.prepare(y1));
    let half_gap = |x: &E::Fast| 0.5 * (energy.energy(&p1, x) - energy.energy(&p0, x));
    let num: Vec<f64> = chain0.iter().map(|x| -half_gap(x)).collect();
    let den: Vec<f64> = chain1.iter().map(|x| half_gap(x)).collect();
    (log_mean_exp(&num) - log_mean_exp(&den)).min(0.0).exp()
}

/// Slow labels `0..n` on a ring, stepping to either neighbour with
/// probability 1/2.
#[derive(Debug, Clone, Copy)]
pub struct RingProposal {
    pub labels: usize,
}

impl SlowProposal<usize> for RingProposal {
    fn propose(&self, y: &usize, rng: &mut dyn RngCore) -> usize {
        if rng.random::<bool>() {
            (y + 1) % self.labels
        } else {
            (y + self.labels - 1) % self.labels
        }
    }

    fn log_prob(&self, from: &usize, to: &usize) -> f64 {
        let up = (from + 1) % self.labels;
        let down = (from + self.labels - 1) % self.labels;
        let mut p = 0.0f64;
        if *to == up {
            p += 0.5;
        }
        if *to == down {
            p += 0.5;
        }
        p.ln()
    }
}

/// Energy given as a table `U[y][x]` over finite fast and slow spaces. The
/// preparation is the row for `y`.
#[derive(Debug, Clone)]
pub struct TableEnergy {
    pub table: Vec<Vec<f64>>,
}

impl TableEnergy {
    /// Quadratic wells of varying centre and width on a lattice of
    /// `num_fast` points, one per slow label.
    pub fn quadratic_toy(num_fast: usize, num_slow: usize) -> Self {
        let table = (0..num_slow)
            .map(|y| {
                let centre = (y as f64 + 0.5) * num_fast as f64 / num_slow as f64;
                let width = 0.6 + 0.5 * y as f64;
                let offset = 0.3 * ((y * 7) % 3) as f64;
                (0..num_fast)
                    .map(|x| (x as f64 - centre).powi(2) / (2.0 * width * width) + offset)
                    .collect()
            })
            .collect();
        Self { table }
    }

    pub fn num_slow(&self) -> usize {
        self.table.len()
    }

    pub fn num_fast(&self) -> usize {
        self.table.first().map_or(0, Vec::len)
    }

    /// Exact `pi(x, y)` indexed by `y * num_fast + x`.
    pub fn stationary(&self) -> Vec<f64> {
        let logs: Vec<f64> = self.table.iter().flatten().map(|u| -u).collect();
        let z = crate::logspace::log_sum_exp(&logs);
        logs.iter().map(|l| (l - z).exp()).collect()
    }
}

impl DragEnergy for TableEnergy {
    type Fast = usize;
    type Slow = usize;
    type Prepared = Vec<f64>;

    fn prepare(&self, y: &usize) -> Vec<f64> {
        self.table[*y].clone()
    }

    fn energy(&self, prepared: &Vec<f64>, x: &usize) -> f64 {
        prepared[*x]
    }

    fn num_fast_states(&self) -> Option<usize> {
        self.table.first().map(|r| r.len())
    }
}

/// Full transition matrix of the drag update on finite fast and slow spaces,
/// indexed by `y * num_fast + x`, by enumerating every proposal, placement,
/// chain and link choice.
pub fn exact_drag_matrix<P, K>(model: &DragModel<TableEnergy, P, K>) -> Result<DMatrix<f64>>
where
    P: SlowProposal<usize>,
    K: for<'a> KernelPair<DragLadder<'a, TableEnergy>> + for<'a> MatrixKernel<DragLadder<'a, TableEnergy>>,
{
    let nx = model.energy.num_fast_states().expect("finite fast space");
    let ny = model.energy.num_slow();
    let size = nx * ny;
    let cfg = &model.ladder;
    let mut out = DMatrix::zeros(size, size);
    for y0 in 0..ny {
        for y1 in 0..ny {
            let s = model.proposal.log_prob(&y0, &y1).exp();
            if s == 0.0 {
                continue;
            }
            let (p0, p1) = (model.energy.prepare(&y0), model.energy.prepare(&y1));
            let ladder = DragLadder::new(&model.energy, &p0, &p1);
            let mats: Vec<(DMatrix<f64>, DMatrix<f64>)> = cfg.etas.iter().map(|&e| model.kernel.matrices(&ladder, e)).collect();
            for x0 in 0..nx {
                let mut moves = vec![CompensatedSum::new(); nx];
                let mut stay = CompensatedSum::new();
                let mut paths = PathWalk {
                    ladder: &ladder,
                    cfg,
                    mats: &mats,
                    chains: Vec::new(),
                    moves: &mut moves,
                    stay: &mut stay,
                };
                paths.stage(0, x0, 1.0);
                let from = y0 * nx + x0;
                for (x1, m) in moves.iter().enumerate() {
                    out[(from, y1 * nx + x1)] += s * m.value();
                }
                out[(from, from)] += s * stay.value();
            }
        }
    }
    Ok(out)
}

struct PathWalk<'p, F: FiniteFamily> {
    ladder: &'p F,
    cfg: &'p LadderConfig,
    mats: &'p [(DMatrix<f64>, DMatrix<f64>)],
    chains: Vec<Vec<usize>>,
    moves: &'p mut Vec<CompensatedSum>,
    stay: &'p mut CompensatedSum,
}

impl<F: FiniteFamily> PathWalk<'_, F> {
    fn stage(&mut self, j: usize, incoming: usize, prob: f64) {
        let k_len = self.cfg.chain_lengths[j];
        let place = 1.0 / (k_len as f64 + 1.0);
        for nu in 0..=k_len {
            let mut chain = vec![0usize; k_len + 1];
            chain[nu] = incoming;
            self.fill(j, nu, &mut chain, 0, prob * place);
        }
    }

    fn fill(&mut self, j: usize, nu: usize, chain: &mut Vec<usize>, depth: usize, prob: f64) {
        let k_len = chain.len() - 1;
        let order: Vec<usize> = (nu + 1..=k_len).chain((0..nu).rev()).collect();
        if depth == order.len() {
            self.chain_done(j, chain.clone(), prob);
            return;
        }
        let k = order[depth];
        let (t, tr) = &self.mats[j];
        let (m, from) = if k > nu { (t, chain[k - 1]) } else { (tr, chain[k + 1]) };
        for to in 0..m.ncols() {
            let p = m[(from, to)];
            if p > 0.0 {
                chain[k] = to;
                self.fill(j, nu, chain, depth + 1, prob * p);
            }
        }
    }

    fn chain_done(&mut self, j: usize, chain: Vec<usize>, prob: f64) {
        let n = self.cfg.etas.len() - 1;
        self.chains.push(chain);
        if j == n {
            let log_a = log_acceptance_from_chains(self.ladder, &self.cfg.etas, &self.cfg.bridges, &self.chains).min(0.0);
            let a = log_a.exp();
            let last = self.chains.last().expect("chain").clone();
            let pick = prob / last.len() as f64;
            for &x1 in &last {
                self.moves[x1].add(pick * a);
                self.stay.add(pick * (1.0 - a));
            }
        } else {
            let eta = self.cfg.etas[j];
            let next = self.cfg.etas[j + 1];
            let bridge = &self.cfg.bridges[j];
            let cur = self.chains.last().expect("chain").clone();
            let w: Vec<f64> = cur
                .iter()
                .map(|x| {
                    let here = self.ladder.log_density(eta, x);
                    log_ratio(log_bridge(bridge, here, self.ladder.log_density(next, x)), here)
                })
                .collect();
            let max = w.iter().copied().fold(LOG_ZERO, f64::max);
            if max == LOG_ZERO {
                self.stay.add(prob);
            } else {
                let sum: f64 = w.iter().map(|l| (l - max).exp()).sum();
                for (mu, &l) in w.iter().enumerate() {
                    if l != LOG_ZERO {
                        self.stage(j + 1, cur[mu], prob * (l - max).exp() / sum);
                    }
                }
            }
        }
        self.chains.pop();
    }
}

/// The discrete demo: 6 fast lattice states, 4 slow labels on a ring,
/// nearest-neighbour Metropolis on the fast lattice, `eta = (0, 1/2, 1)`,
/// `K = (1, 1, 1)`, geometric stage bridges.
pub fn toy_model() -> Result<DragModel<TableEnergy, RingProposal, crate::kernels::DiscreteMatrix>> {
    let ladder = LadderConfig::new(vec![0.0, 0.5, 1.0], vec![1, 1, 1], vec![BridgeSpec::Geometric; 2])?;
    DragModel::new(
        TableEnergy::quadratic_toy(6, 4),
        RingProposal { labels: 4 },
        crate::kernels::DiscreteMatrix::lattice_metropolis(6),
        ladder,
    )
}

/// Continuous smoke-test model: `U(x, y) = (x - y)^2 / 2 + y^2 / 18`, so
/// `y ~ N(0, 9)` marginally and `x | y ~ N(y, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianEnergy;

impl DragEnergy for GaussianEnergy {
    type Fast = f64;
    type Slow = f64;
    type Prepared = f64;

    fn prepare(&self, y: &f64) -> f64 {
        *y
    }

    fn energy(&self, y: &f64, x: &f64) -> f64 {
        0.5 * (x - y).powi(2) + y * y / 18.0
    }
}

/// Gaussian random walk on the slow variable.
#[derive(Debug, Clone, Copy)]
pub struct GaussianWalk {
    pub scale: f64,
}

impl SlowProposal<f64> for GaussianWalk {
    fn propose(&self, y: &f64, rng: &mut dyn RngCore) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        let z: f64 = StandardNormal.sample(rng);
        y + self.scale * z
    }

    fn log_prob(&self, from: &f64, to: &f64) -> f64 {
        let z = (to - from) / self.scale;
        -0.5 * z * z - (self.scale * (2.0 * std::f64::consts::PI).sqrt()).ln()
    }
}

pub fn gaussian_model(n: usize, k: usize) -> Result<DragModel<GaussianEnergy, GaussianWalk, RandomWalkMetropolis>> {
    DragModel::new(
        GaussianEnergy,
        GaussianWalk { scale: 3.0 },
        RandomWalkMetropolis::new(ScaleRule::Constant(1.0)),
        LadderConfig::uniform(n, k, BridgeSpec::Geometric)?,
    )
}

/// Total-variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
