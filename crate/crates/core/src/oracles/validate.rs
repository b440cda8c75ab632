use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::enumeration::{enumerate_ais_expectation, enumerate_lis_expectation, enumerate_lis_independent, MatrixKernel, DEFAULT_BUDGET};
use crate::bridges::BridgeSpec;
use crate::distributions::{DiscreteTable, Family};
use crate::error::Result;
use crate::estimators::{Direction, LadderConfig};
use crate::kernels::{DiscreteMatrix, Independence, MatrixRule};

#[derive(Debug, Clone, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Weights drawn from `[0.2, 3)`; with `with_gap`, one state of `p_1` is
/// given weight zero.
pub fn random_table(rng: &mut dyn RngCore, num_states: usize, with_gap: bool) -> Result<DiscreteTable> {
    let p0: Vec<f64> = (0..num_states).map(|_| rng.random_range(0.2..3.0)).collect();
    let mut p1: Vec<f64> = (0..num_states).map(|_| rng.random_range(0.2..3.0)).collect();
    if with_gap && num_states > 1 {
        p1[rng.random_range(0..num_states)] = 0.0;
    }
    DiscreteTable::new(&p0, &p1)
}

/// Metropolis sweeps with nearest-neighbour then skip-one proposals. Each
/// leaves the target invariant; their product is not reversible.
pub fn non_reversible_kernel(num_states: usize) -> DiscreteMatrix {
    let mut skip = DMatrix::zeros(num_states, num_states);
    for i in 0..num_states.saturating_sub(2) {
        skip[(i, i + 2)] = 0.5;
        skip[(i + 2, i)] = 0.5;
    }
    let DiscreteMatrix { rule: near, .. } = DiscreteMatrix::lattice_metropolis(num_states);
    DiscreteMatrix::new(MatrixRule::Product(vec![near, MatrixRule::Metropolis { proposal: skip }]))
}

enum AnyKernel {
    Matrix(DiscreteMatrix),
    Independence,
}

impl MatrixKernel<DiscreteTable> for AnyKernel {
    fn matrices(&self, target: &DiscreteTable, eta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        match self {
            AnyKernel::Matrix(k) => k.matrices(target, eta),
            AnyKernel::Independence => Independence.matrices(target, eta),
        }
    }
}

fn check(name: impl Into<String>, err: f64, tol: f64, detail: String) -> ValidationCheck {
    ValidationCheck {
        name: name.into(),
        passed: err.is_finite() && err <= tol,
        detail: format!("{detail}; |error| = {err:.3e} (tolerance {tol:.0e})"),
    }
}

/// Exact-unbiasedness checks by enumeration on random finite instances,
/// covering several kernels (including a non-converged and a non-reversible
/// one), both stage-bridge kinds and both directions, plus the link-averaging
/// variance ordering.
pub fn validate_suite(seed: u64) -> Result<Vec<ValidationCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let instances: [(usize, usize, [usize; 3], u8); 6] = [
        (3, 1, [1, 1, 0], 0),
        (4, 2, [2, 2, 2], 1),
        (5, 2, [2, 1, 2], 2),
        (5, 2, [2, 2, 2], 3),
        (4, 2, [0, 2, 1], 4),
        (3, 2, [2, 2, 2], 2),
    ];
    for (case, &(states, n, ks, kind)) in instances.iter().enumerate() {
        let table = random_table(&mut rng, states, case == 3)?;
        let kernel = match kind {
            0 => AnyKernel::Matrix(DiscreteMatrix::identity()),
            1 => AnyKernel::Matrix(DiscreteMatrix::lattice_metropolis(states)),
            2 => AnyKernel::Matrix(DiscreteMatrix::lazy(0.9, DiscreteMatrix::lattice_metropolis(states).rule)),
            3 => AnyKernel::Matrix(non_reversible_kernel(states)),
            _ => AnyKernel::Independence,
        };
        let kernel_name = ["identity", "metropolis", "lazy (non-converged)", "non-reversible", "independence"][kind as usize];
        let chain_lengths = ks[..=n].to_vec();
        let etas = crate::estimators::linear_etas(n);
        let geo = LadderConfig::new(etas.clone(), chain_lengths.clone(), vec![BridgeSpec::Geometric; n])?;
        let guesses: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let opt = geo.clone().with_optimal_bridges(&guesses)?;
        let log_r = table.true_log_r().expect("tables know their ratio");
        // With a state that only pi_0 supports, reverse runs cannot see it and
        // estimate a smaller ratio; only forward runs are exact there.
        let directions: &[Direction] = if case == 3 {
            &[Direction::Forward]
        } else {
            &[Direction::Forward, Direction::Reverse]
        };
        for (bname, cfg) in [("geometric", &geo), ("optimal", &opt)] {
            for &dir in directions {
                let target = if dir == Direction::Forward { log_r.exp() } else { (-log_r).exp() };
                let cfg = cfg.clone().with_direction(dir);
                let res = enumerate_lis_expectation(&table, &kernel, &cfg, DEFAULT_BUDGET)?;
                out.push(check(
                    format!("lis-{} case {case} ({states} states, n={n}, K={chain_lengths:?}, {kernel_name}, {bname})", dir.as_str()),
                    (res.mean - target).abs(),
                    1e-9,
                    format!("mean {:.12}, exact {:.12}, {} chains", res.mean, target, res.branches),
                ));
            }
        }
        for &dir in directions {
            let target = if dir == Direction::Forward { log_r.exp() } else { (-log_r).exp() };
            let res = enumerate_ais_expectation(&table, &kernel, &geo.clone().with_direction(dir))?;
            out.push(check(
                format!("ais-{} case {case} ({states} states, n={n}, {kernel_name})", dir.as_str()),
                (res.mean - target).abs(),
                1e-9,
                format!("mean {:.12}, exact {:.12}", res.mean, target),
            ));
        }
    }

    let table = random_table(&mut rng, 4, false)?;
    let log_r = table.true_log_r().expect("tables know their ratio");
    for (bname, bridge) in [("geometric", BridgeSpec::Geometric), ("optimal", BridgeSpec::optimal(1.0, 3.0 / 2.0))] {
        let res = enumerate_lis_independent(&table, &bridge, 2, 1, DEFAULT_BUDGET)?;
        let r = log_r.exp();
        let err = (res.single_link.mean - r).abs().max((res.averaged.mean - r).abs());
        out.push(check(
            format!("independent-lis means ({bname})"),
            err,
            1e-10,
            format!("single {:.12}, averaged {:.12}, exact {:.12}", res.single_link.mean, res.averaged.mean, r),
        ));
        out.push(ValidationCheck {
            name: format!("independent-lis variance ordering ({bname})"),
            passed: res.averaged.variance <= res.single_link.variance + 1e-12,
            detail: format!("averaged {:.6e} <= single {:.6e}", res.averaged.variance, res.single_link.variance),
        });
    }
    Ok(out)
}
