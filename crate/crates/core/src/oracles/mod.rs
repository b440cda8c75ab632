//! Ground truth: closed-form predictions for the uniform families, exact
//! enumeration of estimator laws on finite spaces, and thermodynamic
//! integration.

mod enumeration;
mod thermo;
mod validate;

pub use enumeration::{
    enumerate_ais_expectation, enumerate_lis_expectation, enumerate_lis_independent, EnumerationResult, IndependentEnumeration,
    MatrixKernel, DEFAULT_BUDGET,
};
pub use thermo::{thermo_log_r, ExpectedSlope};
pub use validate::{non_reversible_kernel, random_table, validate_suite, ValidationCheck};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quantity {
    LogVarLIS,
    ZeroProbAIS,
    MeanAIS,
    OptimalN,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticPrediction {
    pub quantity: Quantity,
    pub value: f64,
    pub regime_note: String,
}

fn check_shrink(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("shrink factor {s} must lie in (0, 1)")))
    }
}

/// `n (s^(-1/n) - 1) / (m + 1)`: large-`m` variance of a log LIS estimate on
/// nested uniforms with nearly independent transitions.
pub fn nested_lis_logvar(n: usize, m: usize, s: f64) -> Result<f64> {
    check_shrink(s)?;
    if n == 0 {
        return Err(Error::domain("n must be positive"));
    }
    let n_f = n as f64;
    Ok(n_f * (s.powf(-1.0 / n_f) - 1.0) / (m as f64 + 1.0))
}

/// Probability that none of the `m + 1` points of a stage lands in the next
/// support, `(1 - s^(1/n))^(m+1)`. The variance formula assumes this is
/// negligible.
pub fn nested_empty_stage_prob(n: usize, m: usize, s: f64) -> Result<f64> {
    check_shrink(s)?;
    Ok((1.0 - s.powf(1.0 / n as f64)).powi(m as i32 + 1))
}

/// Minimizer over `n >= 1` of `n (n+1) (s^(-1/n) - 1)`, the fixed-budget
/// variance up to a constant.
pub fn nested_optimal_n(s: f64) -> Result<usize> {
    check_shrink(s)?;
    let cost = |n: usize| {
        let n_f = n as f64;
        n_f * (n_f + 1.0) * (s.powf(-1.0 / n_f) - 1.0)
    };
    let limit = (10.0 * (-s.ln()) + 10.0) as usize;
    Ok((1..=limit).min_by(|&a, &b| cost(a).total_cmp(&cost(b))).expect("nonempty range"))
}

/// Large-`m` variance of a log LIS estimate on shifted uniforms, `n > t/2`.
pub fn nonnested_lis_logvar(n: usize, m: usize, t: f64) -> Result<f64> {
    let n_f = n as f64;
    if !(t > 0.0) || !(n_f > t / 2.0) {
        return Err(Error::domain(format!("need t > 0 and n > t/2 (n = {n}, t = {t})")));
    }
    let a = 2.0 * n_f / t - 1.0;
    let lead = 2.0 / (a * (m as f64 + 1.0));
    let body = if n_f <= t { n_f + (n_f - 1.0) * a } else { n_f + (n_f - 1.0) / a };
    Ok(lead * body)
}

/// `1 - s`, for every `n`.
pub fn ais_nested_zero_prob(s: f64) -> Result<f64> {
    check_shrink(s)?;
    Ok(1.0 - s)
}

/// `(1 - t/2n)^n`, the mean AIS estimate on shifted uniforms with
/// independent transitions (the true ratio is 1).
pub fn ais_nonnested_mean(n: usize, t: f64) -> Result<f64> {
    let n_f = n as f64;
    if !(t >= 0.0) || !(n_f > t / 2.0) {
        return Err(Error::domain(format!("need t >= 0 and n > t/2 (n = {n}, t = {t})")));
    }
    Ok((1.0 - t / (2.0 * n_f)).powf(n_f))
}

/// All closed-form predictions for the given uniform-family parameters.
pub fn predictions(s: f64, t: f64, n: usize, m: usize) -> Result<Vec<AnalyticPrediction>> {
    let mut out = vec![
        AnalyticPrediction {
            quantity: Quantity::LogVarLIS,
            value: nested_lis_logvar(n, m, s)?,
            regime_note: format!(
                "nested uniforms, s = {s}, n = {n}, m = {m}; large m, near-independent transitions; empty-stage probability {:.3e}",
                nested_empty_stage_prob(n, m, s)?
            ),
        },
        AnalyticPrediction {
            quantity: Quantity::ZeroProbAIS,
            value: ais_nested_zero_prob(s)?,
            regime_note: format!("nested uniforms, s = {s}; independent of n"),
        },
        AnalyticPrediction {
            quantity: Quantity::OptimalN,
            value: nested_optimal_n(s)? as f64,
            regime_note: format!("nested uniforms, s = {s}; fixed budget m (n+1), large m"),
        },
    ];
    if t > 0.0 && n as f64 > t / 2.0 {
        out.push(AnalyticPrediction {
            quantity: Quantity::MeanAIS,
            value: ais_nonnested_mean(n, t)?,
            regime_note: format!("shifted uniforms, t = {t}, n = {n}; independent transitions; true ratio 1"),
        });
        out.push(AnalyticPrediction {
            quantity: Quantity::LogVarLIS,
            value: nonnested_lis_logvar(n, m, t)?,
            regime_note: format!("shifted uniforms, t = {t}, n = {n}, m = {m}; large m, independent transitions"),
        });
    }
    Ok(out)
}
