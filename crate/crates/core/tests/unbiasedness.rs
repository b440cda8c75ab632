mod common;

use common::mean_and_se;
use linkis::bridges::{log_bridge, BridgeSpec};
use linkis::distributions::{DiscreteTable, DistributionSequence, Family, FiniteFamily};
use linkis::estimators::{estimate_expectation, linear_etas, run_ais, run_lis, Direction, LadderConfig, Start};
use linkis::kernels::{DiscreteMatrix, Independence, MatrixRule, Reversed};
use linkis::logspace::{log_mean_exp, LOG_ZERO};
use linkis::oracles::{enumerate_ais_expectation, enumerate_lis_expectation, non_reversible_kernel, DEFAULT_BUDGET};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Path-by-path expansion of one forward LIS run: every placement, every
/// full chain tuple and every link, accumulating the first two moments of
/// the estimate.
struct Brute<'a> {
    table: &'a DiscreteTable,
    mats: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    cfg: &'a LadderConfig,
    m1: f64,
    m2: f64,
}

impl Brute<'_> {
    fn stage(&mut self, j: usize, incoming: Option<usize>, prob: f64, log_est: f64) {
        let k = self.cfg.chain_lengths[j];
        let s = self.table.num_states();
        let pi0 = self.table.probabilities(0.0);
        for nu in 0..=k {
            let starts: Vec<(usize, f64)> = match incoming {
                Some(x) => vec![(x, 1.0)],
                None => (0..s).filter(|&x| pi0[x] > 0.0).map(|x| (x, pi0[x])).collect(),
            };
            for (x, px) in starts {
                let others = k as u32;
                for code in 0..s.pow(others) {
                    let mut chain = vec![0usize; k + 1];
                    chain[nu] = x;
                    let mut c = code;
                    for (idx, slot) in (0..=k).filter(|&i| i != nu).enumerate() {
                        let _ = idx;
                        chain[slot] = c % s;
                        c /= s;
                    }
                    let (t, tr) = &self.mats[j];
                    let mut p = prob * px / (k as f64 + 1.0);
                    for i in nu + 1..=k {
                        p *= t[(chain[i - 1], chain[i])];
                    }
                    for i in (0..nu).rev() {
                        p *= tr[(chain[i + 1], chain[i])];
                    }
                    if p == 0.0 {
                        continue;
                    }
                    self.chain_done(j, &chain, p, log_est);
                }
            }
        }
    }

    fn chain_done(&mut self, j: usize, chain: &[usize], prob: f64, mut log_est: f64) {
        let cfg = self.cfg;
        let n = cfg.etas.len() - 1;
        let lp = |eta: f64, x: usize| self.table.log_density(eta, &x);
        if j > 0 {
            let v: Vec<f64> = chain
                .iter()
                .map(|&x| log_bridge(&cfg.bridges[j - 1], lp(cfg.etas[j - 1], x), lp(cfg.etas[j], x)) - lp(cfg.etas[j], x))
                .collect();
            log_est -= log_mean_exp(&v);
        }
        if j == n {
            self.m1 += prob * log_est.exp();
            self.m2 += prob * (2.0 * log_est).exp();
            return;
        }
        let w: Vec<f64> = chain
            .iter()
            .map(|&x| log_bridge(&cfg.bridges[j], lp(cfg.etas[j], x), lp(cfg.etas[j + 1], x)) - lp(cfg.etas[j], x))
            .collect();
        let lw = log_mean_exp(&w);
        if lw == LOG_ZERO {
            return;
        }
        let total: f64 = w.iter().map(|l| l.exp()).sum();
        for (mu, l) in w.iter().enumerate() {
            if *l != LOG_ZERO {
                self.stage(j + 1, Some(chain[mu]), prob * l.exp() / total, log_est + lw);
            }
        }
    }
}

fn brute_force(table: &DiscreteTable, kernel: &DiscreteMatrix, cfg: &LadderConfig) -> (f64, f64) {
    let mats = cfg
        .etas
        .iter()
        .map(|&e| (kernel.forward_matrix(table, e), kernel.reverse_matrix(table, e)))
        .collect();
    let mut b = Brute {
        table,
        mats,
        cfg,
        m1: 0.0,
        m2: 0.0,
    };
    b.stage(0, None, 1.0, 0.0);
    (b.m1, b.m2)
}

fn table() -> DiscreteTable {
    DiscreteTable::new(&[1.0, 2.0, 0.5], &[0.3, 1.0, 2.2]).unwrap()
}

#[test]
fn transfer_matrix_enumeration_matches_path_expansion() {
    let t = table();
    let kernels = [
        DiscreteMatrix::lattice_metropolis(3),
        DiscreteMatrix::lazy(0.9, MatrixRule::Identity),
        non_reversible_kernel(3),
    ];
    for kernel in &kernels {
        for bridge in [BridgeSpec::Geometric, BridgeSpec::optimal(1.4, 1.0)] {
            let cfg = LadderConfig::new(linear_etas(2), vec![2, 1, 2], vec![bridge; 2]).unwrap();
            let (m1, m2) = brute_force(&t, kernel, &cfg);
            let e = enumerate_lis_expectation(&t, kernel, &cfg, DEFAULT_BUDGET as u128).unwrap();
            assert!((e.mean - m1).abs() < 1e-12, "{} vs {m1}", e.mean);
            assert!((e.second_moment - m2).abs() < 1e-12 * m2.max(1.0));
            let truth = t.true_log_r().unwrap().exp();
            assert!((m1 - truth).abs() < 1e-10, "path sum {m1} vs {truth}");
        }
    }
}

#[test]
fn monte_carlo_lis_matches_enumerated_law() {
    let t = table();
    let kernel = non_reversible_kernel(3);
    for direction in [Direction::Forward, Direction::Reverse] {
        let cfg = LadderConfig::new(linear_etas(2), vec![1, 2, 1], vec![BridgeSpec::Geometric; 2]).unwrap().with_direction(direction);
        let exact = enumerate_lis_expectation(&t, &kernel, &cfg, DEFAULT_BUDGET as u128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let xs: Vec<f64> = (0..200_000).map(|_| run_lis(&t, &kernel, &cfg, Start::Exact, &mut rng).unwrap().estimate()).collect();
        let (mean, se) = mean_and_se(&xs);
        assert!((mean - exact.mean).abs() < 4.0 * se, "{direction:?}: {mean} vs {} (se {se})", exact.mean);
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0);
        assert!((var / exact.variance - 1.0).abs() < 0.05, "variance {var} vs {}", exact.variance);
    }
}

#[test]
fn monte_carlo_ais_matches_enumerated_law() {
    let t = table();
    let kernel = DiscreteMatrix::lattice_metropolis(3);
    let cfg = LadderConfig::ais(3).unwrap();
    let exact = enumerate_ais_expectation(&t, &kernel, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let xs: Vec<f64> = (0..200_000).map(|_| run_ais(&t, &kernel, &cfg, Start::Exact, &mut rng).unwrap().estimate()).collect();
    let (mean, se) = mean_and_se(&xs);
    assert!((mean - exact.mean).abs() < 4.0 * se);
    assert!((exact.mean - t.true_log_r().unwrap().exp()).abs() < 1e-12);
}

#[test]
fn nested_uniform_lis_counts_points_inside_the_next_support() {
    let seq = DistributionSequence::nested_uniform(0.3).unwrap();
    let m = 12;
    let cfg = LadderConfig::uniform(3, m, BridgeSpec::Geometric).unwrap().with_path(true);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let rec = run_lis(&seq, &Independence, &cfg, Start::Exact, &mut rng).unwrap();
        let path = rec.path.as_ref().unwrap();
        let mut expected = 1.0;
        for j in 0..3 {
            let next = 0.3f64.powf(cfg.etas[j + 1]);
            let inside = path.states[j].iter().filter(|x| x.abs() < next).count();
            expected *= inside as f64 / (m as f64 + 1.0);
        }
        assert!((rec.estimate() - expected).abs() < 1e-12 * expected.max(1e-300), "{} vs {expected}", rec.estimate());
    }
}

#[test]
fn ais_on_nested_uniforms_is_zero_or_one() {
    let seq = DistributionSequence::nested_uniform(0.2).unwrap();
    let cfg = LadderConfig::ais(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let r = run_ais(&seq, &Independence, &cfg, Start::Exact, &mut rng).unwrap().estimate();
        assert!(r == 0.0 || r == 1.0);
    }
}

#[test]
fn expectation_of_the_constant_is_one() {
    let seq = DistributionSequence::generalized_normal(0.5, 1.0, 2.0).unwrap();
    let cfg = LadderConfig::uniform(2, 10, BridgeSpec::Geometric).unwrap();
    let kernel = linkis::kernels::RandomWalkMetropolis::new(linkis::kernels::ScaleRule::PowerOf(0.5));
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let recs: Vec<_> = (0..50).map(|_| run_lis(&seq, &kernel, &cfg, Start::Exact, &mut rng).unwrap()).collect();
    assert!((estimate_expectation(&recs, |_| 1.0).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn swapping_the_kernel_directions_keeps_the_law() {
    let t = table();
    let kernel = non_reversible_kernel(3);
    for direction in [Direction::Forward, Direction::Reverse] {
        let cfg = LadderConfig::new(linear_etas(2), vec![2, 3, 1], vec![BridgeSpec::Geometric; 2]).unwrap().with_direction(direction);
        let a = enumerate_lis_expectation(&t, &kernel, &cfg, DEFAULT_BUDGET as u128).unwrap();
        let b = enumerate_lis_expectation(&t, &Reversed(kernel.clone()), &cfg, DEFAULT_BUDGET as u128).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-12);
        assert!((a.second_moment - b.second_moment).abs() < 1e-12);
    }
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.1f64..4.0, 2..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn enumerated_lis_is_unbiased(
        p0 in weights(),
        seed in any::<u64>(),
        n in 1usize..=2,
        ks in proptest::collection::vec(0usize..=2, 3),
        hold in 0.0f64..0.95,
        optimal in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p1: Vec<f64> = p0.iter().map(|_| { use rand::Rng; rng.random_range(0.1..4.0) }).collect();
        let t = DiscreteTable::new(&p0, &p1).unwrap();
        let kernel = DiscreteMatrix::lazy(hold, non_reversible_kernel(p0.len()).rule);
        let mut cfg = LadderConfig::new(linear_etas(n), ks[..=n].to_vec(), vec![BridgeSpec::Geometric; n]).unwrap();
        if optimal {
            cfg = cfg.with_optimal_bridges(&vec![0.2; n]).unwrap();
        }
        let truth = t.true_log_r().unwrap().exp();
        let e = enumerate_lis_expectation(&t, &kernel, &cfg, DEFAULT_BUDGET as u128).unwrap();
        prop_assert!((e.mean - truth).abs() < 1e-9 * truth);
        let a = enumerate_ais_expectation(&t, &kernel, &LadderConfig::ais(n).unwrap()).unwrap();
        prop_assert!((a.mean - truth).abs() < 1e-9 * truth);
    }
}
