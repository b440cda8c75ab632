//! Bridge distributions between two unnormalized densities, and the
//! self-consistent refinement of `r` for the optimal bridge.
//!
//! All quantities are logs; `LOG_ZERO` in either input gives `LOG_ZERO`.

use crate::error::{Error, Result};
use crate::logspace::{log_add_exp, log_mean_exp, LOG_ZERO};

/// How the optimal bridge obtains its value of `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioMode {
    /// A fixed guess (the true value in validation runs).
    Fixed { log_r: f64 },
    /// Solve for `r` by fixed-point iteration. A bridge evaluated pointwise
    /// with this mode uses `init`.
    Iterated { init: f64, rel_tol: f64, max_iter: usize },
}

impl RatioMode {
    pub fn iterated_default() -> Self {
        RatioMode::Iterated {
            init: 1.0,
            rel_tol: 1e-8,
            max_iter: 1000,
        }
    }

    fn log_r(&self) -> f64 {
        match self {
            RatioMode::Fixed { log_r } => *log_r,
            RatioMode::Iterated { init, .. } => init.ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BridgeSpec {
    /// `sqrt(p_a p_b)`.
    Geometric,
    /// `p_a p_b / (r (N_a/N_b) p_a + p_b)`.
    Optimal { ratio: RatioMode, size_ratio: f64 },
}

impl BridgeSpec {
    pub fn optimal(r: f64, size_ratio: f64) -> Self {
        Self::optimal_log(r.ln(), size_ratio)
    }

    pub fn optimal_log(log_r: f64, size_ratio: f64) -> Self {
        BridgeSpec::Optimal {
            ratio: RatioMode::Fixed { log_r },
            size_ratio,
        }
    }

    /// Size ratio used for a stage bridge between chains of `k_a + 1` and
    /// `k_b + 1` states.
    pub fn stage_size_ratio(k_a: usize, k_b: usize) -> f64 {
        (k_a as f64 + 1.0) / (k_b as f64 + 1.0)
    }

    /// The bridge seen from the other side: `log_bridge(swapped, b, a)` equals
    /// `log_bridge(self, a, b)` up to an additive constant.
    pub fn swapped(&self) -> Self {
        match *self {
            BridgeSpec::Geometric => BridgeSpec::Geometric,
            BridgeSpec::Optimal { ratio, size_ratio } => BridgeSpec::Optimal {
                ratio: match ratio {
                    RatioMode::Fixed { log_r } => RatioMode::Fixed { log_r: -log_r },
                    RatioMode::Iterated { init, rel_tol, max_iter } => RatioMode::Iterated {
                        init: 1.0 / init,
                        rel_tol,
                        max_iter,
                    },
                },
                size_ratio: 1.0 / size_ratio,
            },
        }
    }
}

/// Log of the bridge density at a point where the two endpoint log densities
/// are `log_pa` and `log_pb`.
pub fn log_bridge(spec: &BridgeSpec, log_pa: f64, log_pb: f64) -> f64 {
    if log_pa == LOG_ZERO || log_pb == LOG_ZERO {
        return LOG_ZERO;
    }
    match spec {
        BridgeSpec::Geometric => 0.5 * (log_pa + log_pb),
        BridgeSpec::Optimal { ratio, size_ratio } => {
            let scaled = ratio.log_r() + size_ratio.ln() + log_pa;
            log_pa + log_pb - log_add_exp(scaled, log_pb)
        }
    }
}

/// Log of the optimal-bridge combination of forward estimates of `r` and
/// reverse estimates of `1/r`, evaluated with bridge parameter `log_r`.
/// The run-count factor is `forward.len() / reverse.len()`.
pub fn optimal_bridged_log_ratio(forward_logs: &[f64], reverse_logs: &[f64], log_r: f64) -> f64 {
    let log_c = (forward_logs.len() as f64 / reverse_logs.len() as f64).ln();
    let shift = log_r + log_c;
    let num: Vec<f64> = forward_logs
        .iter()
        .map(|&l| -log_add_exp(shift - l, 0.0))
        .collect();
    let den: Vec<f64> = reverse_logs
        .iter()
        .map(|&l| -log_add_exp(shift, -l))
        .collect();
    log_mean_exp(&num) - log_mean_exp(&den)
}

/// Solves `r = f(r)` for the optimal-bridge combination by fixed-point
/// iteration in the log domain. Inputs are log estimates; returns `log r`.
pub fn iterate_optimal_log_r(
    forward_logs: &[f64],
    reverse_logs: &[f64],
    init: f64,
    rel_tol: f64,
    max_iter: usize,
) -> Result<f64> {
    if forward_logs.is_empty() || reverse_logs.is_empty() {
        return Err(Error::domain("both estimate lists must be nonempty"));
    }
    if !(init > 0.0) {
        return Err(Error::domain("initial r must be positive"));
    }
    let mut log_r = init.ln();
    for _ in 0..max_iter {
        let next = optimal_bridged_log_ratio(forward_logs, reverse_logs, log_r);
        if !next.is_finite() {
            return Err(Error::Degenerate(
                "optimal bridge iteration left the finite range (an all-zero side?)".into(),
            ));
        }
        if (next - log_r).abs() <= rel_tol {
            return Ok(next);
        }
        log_r = next;
    }
    Err(Error::IterationFailed {
        last: log_r.exp(),
        iterations: max_iter,
    })
}

/// [`iterate_optimal_log_r`] on the linear scale.
pub fn iterate_optimal_r(
    forward_logs: &[f64],
    reverse_logs: &[f64],
    init: f64,
    rel_tol: f64,
    max_iter: usize,
) -> Result<f64> {
    iterate_optimal_log_r(forward_logs, reverse_logs, init, rel_tol, max_iter).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn geometric_examples() {
        assert_eq!(log_bridge(&BridgeSpec::Geometric, 1.25, 1.25), 1.25);
        assert_eq!(log_bridge(&BridgeSpec::Geometric, LOG_ZERO, 0.0), LOG_ZERO);
    }

    #[test]
    fn optimal_with_unit_parameters_halves() {
        let spec = BridgeSpec::optimal(1.0, 1.0);
        assert!((log_bridge(&spec, 0.0, 0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(log_bridge(&spec, 0.0, LOG_ZERO), LOG_ZERO);
    }

    #[test]
    fn constant_inputs_converge_to_the_constant() {
        let c = 3.7f64;
        let fwd = vec![c.ln(); 6];
        let rev = vec![-c.ln(); 6];
        assert!((optimal_bridged_log_ratio(&fwd, &rev, 0.0) - c.ln()).abs() < 1e-14);
        let r = iterate_optimal_r(&fwd, &rev, 1.0, 1e-8, 1000).unwrap();
        assert!((r - c).abs() < 1e-12);
        let one = iterate_optimal_r(&[0.0], &[0.0], 1.0, 1e-8, 1000).unwrap();
        assert!((one - 1.0).abs() < 1e-15);
    }

    #[test]
    fn iteration_failure_carries_last_iterate() {
        let fwd = [0.3, 2.0, -1.0];
        let rev = [0.1, -2.5];
        match iterate_optimal_r(&fwd, &rev, 1.0, 0.0, 3) {
            Err(Error::IterationFailed { last, iterations }) => {
                assert_eq!(iterations, 3);
                assert!(last > 0.0);
            }
            other => panic!("expected iteration failure, got {other:?}"),
        }
    }

    /// Root of the self-consistency equation by bisection on `log r`, using
    /// the linear-scale form `sum_f 1/(r c/f + 1)/M - r sum_b 1/(r c + 1/b)/Mbar`.
    fn bisection_log_r(fwd: &[f64], rev: &[f64]) -> f64 {
        let c = fwd.len() as f64 / rev.len() as f64;
        let h = |log_r: f64| {
            let r = log_r.exp();
            let lhs: f64 = fwd.iter().map(|&l| 1.0 / (r * c / l.exp() + 1.0)).sum::<f64>() / fwd.len() as f64;
            let rhs: f64 = rev.iter().map(|&l| r / (r * c + 1.0 / l.exp())).sum::<f64>() / rev.len() as f64;
            lhs - rhs
        };
        let (mut lo, mut hi) = (-30.0, 30.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    proptest! {
        #[test]
        fn iterated_r_matches_bisection(
            fwd in proptest::collection::vec(-3.0f64..3.0, 10),
            rev in proptest::collection::vec(-3.0f64..3.0, 10),
        ) {
            let log_r = iterate_optimal_log_r(&fwd, &rev, 1.0, 1e-12, 10_000).unwrap();
            let oracle = bisection_log_r(&fwd, &rev);
            prop_assert!((log_r - oracle).abs() < 1e-8);
        }

        #[test]
        fn iterated_r_is_scale_equivariant(
            fwd in proptest::collection::vec(-2.0f64..2.0, 1..12),
            rev in proptest::collection::vec(-2.0f64..2.0, 1..12),
            log_c in -3.0f64..3.0,
        ) {
            let base = iterate_optimal_log_r(&fwd, &rev, 1.0, 1e-13, 100_000).unwrap();
            let f2: Vec<f64> = fwd.iter().map(|l| l + log_c).collect();
            let r2: Vec<f64> = rev.iter().map(|l| l - log_c).collect();
            let scaled = iterate_optimal_log_r(&f2, &r2, 1.0, 1e-13, 100_000).unwrap();
            prop_assert!(((scaled - base) - log_c).abs() < 1e-10);
        }

        #[test]
        fn geometric_is_symmetric(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            prop_assert_eq!(log_bridge(&BridgeSpec::Geometric, a, b), log_bridge(&BridgeSpec::Geometric, b, a));
        }

        #[test]
        fn optimal_swap_inverts_the_scale(
            a in -50.0f64..50.0, b in -50.0f64..50.0,
            log_r in -5.0f64..5.0, size in 0.1f64..10.0,
        ) {
            let spec = BridgeSpec::optimal_log(log_r, size);
            let swapped = BridgeSpec::optimal_log(-log_r - 2.0 * size.ln(), size);
            // p_a p_b / (rc p_a + p_b) with (a, b) and rc swapped for 1/(rc)
            // differs by exactly log(rc).
            let lhs = log_bridge(&spec, a, b);
            let rhs = log_bridge(&swapped, b, a) - (log_r + size.ln());
            prop_assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
            let via_method = log_bridge(&spec.swapped(), b, a) - (log_r + size.ln());
            prop_assert!((lhs - via_method).abs() < 1e-12 * lhs.abs().max(1.0));
        }

        #[test]
        fn bridge_never_exceeds_the_larger_input_by_more_than_log2(
            a in -50.0f64..50.0, b in -50.0f64..50.0,
            log_r in -5.0f64..5.0, size in 0.1f64..10.0,
        ) {
            let bound = a.max(b) + 2f64.ln();
            prop_assert!(log_bridge(&BridgeSpec::Geometric, a, b) <= bound);
            // The optimal bridge carries the 1/(rc) scale; normalize it out.
            let opt = log_bridge(&BridgeSpec::optimal_log(log_r, size), a, b);
            prop_assert!(opt <= bound + (-(log_r + size.ln())).max(0.0) + 1e-12);
        }
    }
}
