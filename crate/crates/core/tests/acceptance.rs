//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::time::{Duration, Instant};

use linkis::bridges::BridgeSpec;
use linkis::distributions::{DiscreteTable, DistributionSequence, Family, FiniteFamily};
use linkis::dragging::{acceptance_n1_geometric, exact_drag_matrix, log_acceptance_from_chains, toy_model, total_variation, DragChain, DragLadder};
use linkis::estimators::{linear_etas, run_ais, run_bridge_pair, run_lis, run_sis, Direction, LadderConfig, Sampler, Start};
use linkis::harness::{aggregate, calibration_report, equal_budget_scan, run_experiment, ExperimentSpec, FamilySpec};
use linkis::kernels::{DiscreteMatrix, Independence, MatrixRule};
use linkis::oracles::{
    ais_nested_zero_prob, ais_nonnested_mean, enumerate_ais_expectation, enumerate_lis_expectation, enumerate_lis_independent, nested_lis_logvar,
    nested_optimal_n, non_reversible_kernel, random_table, thermo_log_r, MatrixKernel, DEFAULT_BUDGET,
};
use linkis::quadrature::Quadrature;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

struct Criterion {
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

enum TestKernel {
    Matrix(DiscreteMatrix),
    Independence,
}

impl MatrixKernel<DiscreteTable> for TestKernel {
    fn matrices(&self, target: &DiscreteTable, eta: f64) -> (nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>) {
        match self {
            TestKernel::Matrix(k) => k.matrices(target, eta),
            TestKernel::Independence => Independence.matrices(target, eta),
        }
    }
}

fn enumeration_unbiasedness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let kernels = |s: usize| {
        vec![
            ("identity", TestKernel::Matrix(DiscreteMatrix::new(MatrixRule::Identity))),
            ("lazy", TestKernel::Matrix(DiscreteMatrix::lazy(0.9, DiscreteMatrix::lattice_metropolis(s).rule))),
            ("metropolis", TestKernel::Matrix(DiscreteMatrix::lattice_metropolis(s))),
            ("non-reversible", TestKernel::Matrix(non_reversible_kernel(s))),
            ("independence", TestKernel::Independence),
        ]
    };
    for instance in 0..6 {
        let states = 2 + instance % 4;
        let table = random_table(&mut rng, states, false).map_err(err)?;
        let truth = table.true_log_r().expect("finite").exp();
        let n = 1 + instance % 2;
        let ks: Vec<usize> = (0..=n).map(|j| (instance + j) % 3).collect();
        for (_, kernel) in kernels(states) {
            let geo = LadderConfig::new(linear_etas(n), ks.clone(), vec![BridgeSpec::Geometric; n]).map_err(err)?;
            let guesses: Vec<f64> = linear_etas(n).windows(2).map(|w| table.log_z_ratio(w[0], w[1]).unwrap() + 0.3).collect();
            let opt = geo.clone().with_optimal_bridges(&guesses).map_err(err)?;
            for cfg in [geo, opt] {
                let lis = enumerate_lis_expectation(&table, &kernel, &cfg, DEFAULT_BUDGET as u128).map_err(err)?;
                worst = worst.max((lis.mean - truth).abs() / truth);
                let rev = enumerate_lis_expectation(&table, &kernel, &cfg.clone().with_direction(Direction::Reverse), DEFAULT_BUDGET as u128).map_err(err)?;
                worst = worst.max((rev.mean - 1.0 / truth).abs() * truth);
                cases += 2;
            }
            let ais = enumerate_ais_expectation(&table, &kernel, &LadderConfig::ais(n).map_err(err)?).map_err(err)?;
            worst = worst.max((ais.mean - truth).abs() / truth);
            cases += 1;
        }
    }
    Ok((worst <= 1e-9, format!("{cases} enumerations over 6 tables, max relative error {worst:.2e}")))
}

fn uniform_example() -> Outcome {
    let family = DistributionSequence::uniform_interval((0.0, 3.0), (2.0, 4.0)).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sis = run_sis(&family, 200_000, &Sampler::Exact, &mut rng).map_err(err)?;
    let bridge = run_bridge_pair(&family, &BridgeSpec::Geometric, 200_000, 200_000, &mut rng).map_err(err)?;
    let ok = (sis.r_hat - 1.0 / 3.0).abs() <= 0.01 && (bridge.r_hat - 2.0 / 3.0).abs() <= 0.01;
    Ok((ok, format!("SIS {:.4} (target 1/3), geometric bridge {:.4} (target 2/3)", sis.r_hat, bridge.r_hat)))
}

fn ais_nested_zeros() -> Outcome {
    let family = DistributionSequence::nested_uniform(0.2).map_err(err)?;
    let p = 1.0 - ais_nested_zero_prob(0.2).map_err(err)?;
    let runs = 20_000;
    let se = (p * (1.0 - p) / runs as f64).sqrt();
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [1, 5] {
        let cfg = LadderConfig::ais(n).map_err(err)?;
        let mut ones = 0;
        for i in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * n as u64 + i as u64);
            let rec = run_ais(&family, &Independence, &cfg, Start::Exact, &mut rng).map_err(err)?;
            let r = rec.estimate();
            if r == 1.0 {
                ones += 1;
            } else if r != 0.0 {
                return Ok((false, format!("estimate {r} is neither 0 nor 1")));
            }
        }
        let freq = ones as f64 / runs as f64;
        ok &= (freq - p).abs() <= 3.0 * se;
        detail.push(format!("n={n}: P(1) = {freq:.4}"));
    }
    Ok((ok, format!("{} (target {p}, 3 SE = {:.4})", detail.join(", "), 3.0 * se)))
}

fn ais_shifted_mean() -> Outcome {
    let family = DistributionSequence::shifted_uniform(4.0).map_err(err)?;
    let target = ais_nonnested_mean(250, 4.0).map_err(err)?;
    let cfg = LadderConfig::ais(250).map_err(err)?;
    let runs = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<f64> = (0..runs)
        .map(|_| run_ais(&family, &Independence, &cfg, Start::Exact, &mut rng).map(|r| r.estimate()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let mean = xs.iter().sum::<f64>() / runs as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0)).sqrt();
    let se = sd / (runs as f64).sqrt();
    Ok(((mean - target).abs() <= 3.0 * se, format!("mean {mean:.5} vs {target:.5} (SE {se:.5}); exp(-2) = {:.5}", (-2f64).exp())))
}

fn lis_variance_law() -> Outcome {
    let family = DistributionSequence::nested_uniform(0.1).map_err(err)?;
    let cfg = LadderConfig::uniform(2, 200, BridgeSpec::Geometric).map_err(err)?;
    let target = nested_lis_logvar(2, 200, 0.1).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut logs = Vec::new();
    let mut zeros = 0;
    for _ in 0..5000 {
        let rec = run_lis(&family, &Independence, &cfg, Start::Exact, &mut rng).map_err(err)?;
        if rec.is_zero() {
            zeros += 1;
        } else {
            logs.push(rec.log_estimate);
        }
    }
    let m = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / m;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let rel = var / target - 1.0;
    Ok((rel.abs() <= 0.15, format!("variance {var:.5} vs {target:.5} ({:+.1}%), {zeros} zero runs", 100.0 * rel)))
}

fn optimal_n() -> Outcome {
    let got: Vec<usize> = [0.1, 0.05, 0.01, 0.0001].iter().map(|&s| nested_optimal_n(s)).collect::<Result<_, _>>().map_err(err)?;
    Ok((got == [2, 3, 4, 7], format!("{got:?} (expected [2, 3, 4, 7])")))
}

fn headline_family() -> FamilySpec {
    FamilySpec::GeneralizedNormal { s: 0.05, t: 0.0, q: 10.0 }
}

fn headline() -> Outcome {
    let spec = ExperimentSpec::short_runs(headline_family())
        .with_methods(&["lis:forward:geometric", "ais:forward"])
        .map_err(err)?;
    let summaries = aggregate(&run_experiment(&spec).map_err(err)?);
    let lis = &summaries[0];
    let ais = &summaries[1];
    let ratio = ais.mse / lis.mse;
    Ok((
        ratio >= 3.0,
        format!(
            "MSE(AIS, n={}) = {:.4} ± {:.4}, MSE(LIS) = {:.4} ± {:.4}, ratio {ratio:.2}",
            ais.n, ais.mse, ais.mse_se, lis.mse, lis.mse_se
        ),
    ))
}

fn scan() -> Outcome {
    let spec = ExperimentSpec {
        budget: Some(250),
        ..ExperimentSpec::short_runs(headline_family())
            .with_methods(&["lis:forward:geometric", "ais:forward"])
            .map_err(err)?
    };
    let summaries = aggregate(&equal_budget_scan(&spec, &[4, 9, 19, 39]).map_err(err)?);
    let ais = summaries.iter().find(|s| s.method == "ais").expect("baseline");
    let last = summaries.iter().find(|s| s.method == "lis" && s.n == 39).expect("n = 39");
    let ratio = last.mse / ais.mse;
    let shape: Vec<String> = summaries.iter().filter(|s| s.method == "lis").map(|s| format!("n={} m={}: {:.4}", s.n, s.k, s.mse)).collect();
    Ok((
        (0.5..=2.0).contains(&ratio),
        format!("LIS {}; AIS {:.4}; ratio at n=39 {ratio:.2}", shape.join(", "), ais.mse),
    ))
}

fn calibration() -> Outcome {
    let spec = ExperimentSpec {
        replications: 500,
        ..ExperimentSpec::long_runs(headline_family())
            .with_methods(&["lis:bridged:optimal"])
            .map_err(err)?
    };
    let frac = calibration_report(&run_experiment(&spec).map_err(err)?);
    Ok(((0.03..=0.12).contains(&frac), format!("fraction beyond 2 SE: {frac:.3} over 500 replications")))
}

fn thermo() -> Outcome {
    let seq = DistributionSequence::generalized_normal(0.05, 0.0, 2.0).map_err(err)?;
    let v = thermo_log_r(&seq, &Quadrature::with_abs_tol(1e-9)).map_err(err)?;
    let e = (v - 0.05f64.ln()).abs();
    Ok((e <= 1e-6, format!("{v:.10} vs log 0.05, error {e:.2e}")))
}

fn dragging() -> Outcome {
    let model = toy_model().map_err(err)?;
    let p = exact_drag_matrix(&model).map_err(err)?;
    let pi = model.energy.stationary();
    let n = pi.len();
    let mut stationary_err: f64 = 0.0;
    for j in 0..n {
        let moved: f64 = (0..n).map(|i| pi[i] * p[(i, j)]).sum();
        stationary_err = stationary_err.max((moved - pi[j]).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut chain = DragChain::new(&model, 0, 0);
    let mut counts = vec![0u64; n];
    let steps = 1_000_000;
    for _ in 0..steps {
        chain.step(&mut rng).map_err(err)?;
        counts[chain.slow * 6 + chain.fast] += 1;
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
    let tv = total_variation(&freq, &pi);

    let energy = &model.energy;
    let etas = [0.0, 1.0];
    let bridges = [BridgeSpec::Geometric];
    let mut form_err: f64 = 0.0;
    for _ in 0..1000 {
        let y0 = rng.random_range(0..4);
        let y1 = rng.random_range(0..4);
        let (p0, p1) = (linkis::dragging::DragEnergy::prepare(energy, &y0), linkis::dragging::DragEnergy::prepare(energy, &y1));
        let ladder = DragLadder::new(energy, &p0, &p1);
        let len0 = rng.random_range(1..8);
        let len1 = rng.random_range(1..8);
        let c0: Vec<usize> = (0..len0).map(|_| rng.random_range(0..ladder.num_states())).collect();
        let c1: Vec<usize> = (0..len1).map(|_| rng.random_range(0..ladder.num_states())).collect();
        let general = log_acceptance_from_chains(&ladder, &etas, &bridges, &[c0.clone(), c1.clone()]).min(0.0).exp();
        let closed = acceptance_n1_geometric(energy, &c0, &c1, &y0, &y1);
        form_err = form_err.max((general - closed).abs());
    }
    let ok = stationary_err <= 1e-9 && tv <= 0.02 && form_err <= 1e-12;
    Ok((
        ok,
        format!("max |piP - pi| {stationary_err:.1e}, TV {tv:.4} over 10^6 steps, two-sum form error {form_err:.1e}"),
    ))
}

fn rao_blackwell() -> Outcome {
    let table = DiscreteTable::new(&[1.0, 2.0, 0.5, 1.5], &[0.7, 0.2, 2.5, 1.0]).map_err(err)?;
    let truth = table.true_log_r().expect("finite").exp();
    let e = enumerate_lis_independent(&table, &BridgeSpec::Geometric, 2, 2, DEFAULT_BUDGET as u128).map_err(err)?;
    let (s, a) = (&e.single_link, &e.averaged);
    let ok = (s.mean - truth).abs() <= 1e-10 && (a.mean - truth).abs() <= 1e-10 && a.variance <= s.variance;
    Ok((
        ok,
        format!("means {:.12} / {:.12} vs {truth:.12}; Var {:.6} (averaged) <= {:.6} (single)", a.mean, s.mean, a.variance, s.variance),
    ))
}

fn main() {
    let criteria = [
        Criterion {
            name: "exact unbiasedness by enumeration",
            limit: Duration::from_secs(10),
            check: enumeration_unbiasedness,
        },
        Criterion {
            name: "uniform SIS and bridge example",
            limit: Duration::from_secs(5),
            check: uniform_example,
        },
        Criterion {
            name: "AIS on nested uniforms: P(r=1) = s",
            limit: Duration::from_secs(30),
            check: ais_nested_zeros,
        },
        Criterion {
            name: "AIS on shifted uniforms: mean (1-t/2n)^n",
            limit: Duration::from_secs(60),
            check: ais_shifted_mean,
        },
        Criterion {
            name: "LIS log-variance law on nested uniforms",
            limit: Duration::from_secs(60),
            check: lis_variance_law,
        },
        Criterion {
            name: "optimal ladder size on nested uniforms",
            limit: Duration::from_secs(1),
            check: optimal_n,
        },
        Criterion {
            name: "short runs s=0.05 t=0 q=10: MSE(AIS)/MSE(LIS) >= 3",
            limit: Duration::from_secs(300),
            check: headline,
        },
        Criterion {
            name: "equal-budget scan: LIS at n=39 within 2x of AIS",
            limit: Duration::from_secs(300),
            check: scan,
        },
        Criterion {
            name: "standard error calibration, long bridged LIS",
            limit: Duration::from_secs(300),
            check: calibration,
        },
        Criterion {
            name: "thermodynamic integration cross-check",
            limit: Duration::from_secs(5),
            check: thermo,
        },
        Criterion {
            name: "dragging invariance",
            limit: Duration::from_secs(120),
            check: dragging,
        },
        Criterion {
            name: "link averaging reduces variance",
            limit: Duration::from_secs(10),
            check: rao_blackwell,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.check)();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && took <= c.limit, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {}: {} [{:.2}s, limit {}s]",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            detail,
            took.as_secs_f64(),
            c.limit.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
