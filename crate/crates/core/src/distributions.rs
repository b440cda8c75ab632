//! Parametric sequences of unnormalized densities `p_eta`, `eta` in `[0, 1]`.
//!
//! Every family exposes its log-density (with `LOG_ZERO` outside the
//! support), an exact sampler where one exists, and the true log ratio of
//! normalizing constants between any two members when it is known in closed
//! form.

use std::fmt;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};
use rand_distr::Gamma;

use crate::error::{Error, Result};
use crate::logspace::{log_sum_exp, LOG_ZERO};

/// Rejects `eta` outside `[0, 1]`.
pub fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::domain(format!("eta = {eta} is outside [0, 1]")))
    }
}

/// A sequence of distributions indexed by `eta`.
pub trait Family: Send + Sync {
    type State: Clone + Send + Sync + fmt::Debug;

    /// Unnormalized log density at `eta`, without validating `eta`.
    fn log_density(&self, eta: f64, x: &Self::State) -> f64;

    /// Unnormalized log density at `eta`; `LOG_ZERO` exactly where the density
    /// vanishes.
    fn log_p(&self, eta: f64, x: &Self::State) -> Result<f64> {
        check_eta(eta)?;
        Ok(self.log_density(eta, x))
    }

    /// Draws one state exactly from the normalized distribution at `eta`.
    fn exact_sample(&self, eta: f64, rng: &mut dyn RngCore) -> Result<Self::State>;

    /// `log(Z_to / Z_from)` when known in closed form (or by summation).
    fn log_z_ratio(&self, from: f64, to: f64) -> Option<f64>;

    /// `log(Z_1 / Z_0)`.
    fn true_log_r(&self) -> Option<f64> {
        self.log_z_ratio(0.0, 1.0)
    }

    /// `d/d eta log p_eta(x)`, for families that are smooth in `eta`.
    fn log_density_slope(&self, _eta: f64, _x: &Self::State) -> Option<f64> {
        None
    }
}

/// A family over the finite state space `{0, ..., num_states - 1}`.
pub trait FiniteFamily: Family<State = usize> {
    fn num_states(&self) -> usize;

    fn log_weights(&self, eta: f64) -> Vec<f64> {
        (0..self.num_states())
            .map(|i| self.log_density(eta, &i))
            .collect()
    }

    /// Normalized probabilities at `eta`.
    fn probabilities(&self, eta: f64) -> Vec<f64> {
        let lw = self.log_weights(eta);
        let total = log_sum_exp(&lw);
        lw.iter().map(|&l| (l - total).exp()).collect()
    }
}

pub type LogDensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(f64, &mut dyn RngCore) -> f64 + Send + Sync>;

/// `p_eta(x) = p_0(x) exp(-eta U(x))`.
#[derive(Clone)]
pub struct PowerForm {
    pub base_log_density: LogDensityFn,
    pub energy: LogDensityFn,
    /// Integration range covering all but a negligible part of every member.
    pub bounds: (f64, f64),
    pub sampler: Option<SamplerFn>,
    pub log_r: Option<f64>,
}

/// `p_eta(x) = exp(-beta(eta) U(x))` with `beta` linear between `beta_0` and `beta_1`.
#[derive(Clone)]
pub struct Canonical {
    pub energy: LogDensityFn,
    pub beta0: f64,
    pub beta1: f64,
    pub bounds: (f64, f64),
    pub sampler: Option<SamplerFn>,
    pub log_r: Option<f64>,
}

impl Canonical {
    fn beta(&self, eta: f64) -> f64 {
        self.beta0 + eta * (self.beta1 - self.beta0)
    }
}

/// One-dimensional families over the real line.
#[derive(Clone)]
pub enum DistributionSequence {
    /// `log p_eta(x) = -|(x - eta t) / s^eta|^q`.
    GeneralizedNormal { scale: f64, shift: f64, power: f64 },
    /// Density 1 on `(-s^eta, s^eta)`.
    NestedUniform { shrink: f64 },
    /// Density 1 on `(eta t - 1, eta t + 1)`.
    ShiftedUniform { shift: f64 },
    /// Density 1 on an interval whose endpoints move linearly from `start` to `end`.
    UniformInterval { start: (f64, f64), end: (f64, f64) },
    PowerForm(PowerForm),
    Canonical(Canonical),
}

impl fmt::Debug for DistributionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GeneralizedNormal {
                scale,
                shift,
                power,
            } => f
                .debug_struct("GeneralizedNormal")
                .field("scale", scale)
                .field("shift", shift)
                .field("power", power)
                .finish(),
            Self::NestedUniform { shrink } => f
                .debug_struct("NestedUniform")
                .field("shrink", shrink)
                .finish(),
            Self::ShiftedUniform { shift } => f
                .debug_struct("ShiftedUniform")
                .field("shift", shift)
                .finish(),
            Self::UniformInterval { start, end } => f
                .debug_struct("UniformInterval")
                .field("start", start)
                .field("end", end)
                .finish(),
            Self::PowerForm(p) => f
                .debug_struct("PowerForm")
                .field("bounds", &p.bounds)
                .finish_non_exhaustive(),
            Self::Canonical(c) => f
                .debug_struct("Canonical")
                .field("beta0", &c.beta0)
                .field("beta1", &c.beta1)
                .finish_non_exhaustive(),
        }
    }
}

fn in_open(x: f64, lo: f64, hi: f64) -> f64 {
    if lo < x && x < hi {
        0.0
    } else {
        LOG_ZERO
    }
}

// ln(1e16): beyond this |u|^q the density is below 1e-16 of its peak.
const TAIL_CUTOFF: f64 = 36.841_361_487_904_734;

impl DistributionSequence {
    pub fn generalized_normal(scale: f64, shift: f64, power: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!("scale s = {scale} must be positive")));
        }
        if !shift.is_finite() {
            return Err(Error::domain("shift t must be finite"));
        }
        if !(power >= 1.0 && power.is_finite()) {
            return Err(Error::domain(format!("power q = {power} must be >= 1")));
        }
        Ok(Self::GeneralizedNormal {
            scale,
            shift,
            power,
        })
    }

    pub fn nested_uniform(shrink: f64) -> Result<Self> {
        if !(shrink > 0.0 && shrink < 1.0) {
            return Err(Error::domain(format!("shrink s = {shrink} must be in (0, 1)")));
        }
        Ok(Self::NestedUniform { shrink })
    }

    pub fn shifted_uniform(shift: f64) -> Result<Self> {
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(Error::domain(format!("shift t = {shift} must be >= 0")));
        }
        Ok(Self::ShiftedUniform { shift })
    }

    pub fn uniform_interval(start: (f64, f64), end: (f64, f64)) -> Result<Self> {
        if !(start.0 < start.1 && end.0 < end.1) {
            return Err(Error::domain("interval endpoints must satisfy lo < hi"));
        }
        Ok(Self::UniformInterval { start, end })
    }

    /// The support (or an integration range) of the member at `eta`.
    pub fn quadrature_bounds(&self, eta: f64) -> (f64, f64) {
        match self {
            Self::GeneralizedNormal {
                scale,
                shift,
                power,
            } => {
                let half = scale.powf(eta) * TAIL_CUTOFF.powf(1.0 / power);
                (eta * shift - half, eta * shift + half)
            }
            Self::NestedUniform { shrink } => {
                let w = shrink.powf(eta);
                (-w, w)
            }
            Self::ShiftedUniform { shift } => (eta * shift - 1.0, eta * shift + 1.0),
            Self::UniformInterval { .. } => self.interval(eta).expect("uniform interval"),
            Self::PowerForm(p) => p.bounds,
            Self::Canonical(c) => c.bounds,
        }
    }

    fn interval(&self, eta: f64) -> Option<(f64, f64)> {
        match self {
            Self::NestedUniform { shrink } => {
                let w = shrink.powf(eta);
                Some((-w, w))
            }
            Self::ShiftedUniform { shift } => Some((eta * shift - 1.0, eta * shift + 1.0)),
            Self::UniformInterval { start, end } => Some((
                start.0 + eta * (end.0 - start.0),
                start.1 + eta * (end.1 - start.1),
            )),
            _ => None,
        }
    }

    /// Default random-walk proposal scale rule base: the family's natural
    /// width changes by `base^eta`.
    pub fn natural_scale_base(&self) -> f64 {
        match self {
            Self::GeneralizedNormal { scale, .. } => *scale,
            Self::NestedUniform { shrink } => *shrink,
            _ => 1.0,
        }
    }
}

impl Family for DistributionSequence {
    type State = f64;

    fn log_density(&self, eta: f64, &x: &f64) -> f64 {
        match self {
            Self::GeneralizedNormal {
                scale,
                shift,
                power,
            } => {
                let u = (x - eta * shift) / scale.powf(eta);
                -u.abs().powf(*power)
            }
            Self::NestedUniform { .. } | Self::ShiftedUniform { .. } | Self::UniformInterval { .. } => {
                let (lo, hi) = self.interval(eta).expect("uniform family");
                in_open(x, lo, hi)
            }
            Self::PowerForm(p) => {
                let base = (p.base_log_density)(x);
                if base == LOG_ZERO {
                    LOG_ZERO
                } else {
                    base - eta * (p.energy)(x)
                }
            }
            Self::Canonical(c) => -c.beta(eta) * (c.energy)(x),
        }
    }

    fn exact_sample(&self, eta: f64, rng: &mut dyn RngCore) -> Result<f64> {
        check_eta(eta)?;
        match self {
            Self::GeneralizedNormal {
                scale,
                shift,
                power,
            } => {
                // |X'|^q ~ Gamma(1/q, 1) for the standardized density exp(-|x|^q).
                let gamma = Gamma::new(1.0 / power, 1.0).map_err(|e| Error::domain(e.to_string()))?;
                let g: f64 = gamma.sample(rng);
                let magnitude = g.powf(1.0 / power);
                let standardized = if rng.random::<bool>() { magnitude } else { -magnitude };
                Ok(eta * shift + scale.powf(eta) * standardized)
            }
            Self::NestedUniform { .. } | Self::ShiftedUniform { .. } | Self::UniformInterval { .. } => {
                let (lo, hi) = self.interval(eta).expect("uniform family");
                loop {
                    let x = lo + (hi - lo) * rng.random::<f64>();
                    // Exclude the closed endpoint lo (probability 2^-53).
                    if x > lo {
                        return Ok(x);
                    }
                }
            }
            Self::PowerForm(PowerForm { sampler, .. }) | Self::Canonical(Canonical { sampler, .. }) => {
                match sampler {
                    Some(s) => Ok(s(eta, rng)),
                    None => Err(Error::Capability(
                        "no exact sampler was supplied for this family".into(),
                    )),
                }
            }
        }
    }

    fn log_z_ratio(&self, from: f64, to: f64) -> Option<f64> {
        match self {
            Self::GeneralizedNormal { scale, .. } => Some((to - from) * scale.ln()),
            Self::NestedUniform { shrink } => Some((to - from) * shrink.ln()),
            Self::ShiftedUniform { .. } => Some(0.0),
            Self::UniformInterval { .. } => {
                let (a0, a1) = self.interval(from)?;
                let (b0, b1) = self.interval(to)?;
                Some(((b1 - b0) / (a1 - a0)).ln())
            }
            Self::PowerForm(p) => {
                if from == 0.0 && to == 1.0 {
                    p.log_r
                } else if from == 1.0 && to == 0.0 {
                    p.log_r.map(|l| -l)
                } else {
                    None
                }
            }
            Self::Canonical(c) => {
                if from == 0.0 && to == 1.0 {
                    c.log_r
                } else if from == 1.0 && to == 0.0 {
                    c.log_r.map(|l| -l)
                } else {
                    None
                }
            }
        }
    }

    fn log_density_slope(&self, eta: f64, &x: &f64) -> Option<f64> {
        match self {
            Self::GeneralizedNormal {
                scale,
                shift,
                power,
            } => {
                let width = scale.powf(eta);
                let u = (x - eta * shift) / width;
                let a = u.abs();
                let along_shift = if a == 0.0 {
                    0.0
                } else {
                    power * a.powf(power - 1.0) * u.signum() * shift / width
                };
                Some(along_shift + power * a.powf(*power) * scale.ln())
            }
            Self::PowerForm(p) => Some(-(p.energy)(x)),
            Self::Canonical(c) => Some(-(c.beta1 - c.beta0) * (c.energy)(x)),
            _ => None,
        }
    }
}

/// Two weight vectors over a finite space, interpolated geometrically:
/// `p_eta(i) = p_0(i)^(1-eta) p_1(i)^eta`, with states where either endpoint
/// weight vanishes given weight zero for `eta` strictly inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTable {
    log_p0: Vec<f64>,
    log_p1: Vec<f64>,
}

impl DiscreteTable {
    pub fn new(p0: &[f64], p1: &[f64]) -> Result<Self> {
        if p0.len() != p1.len() || p0.is_empty() {
            return Err(Error::domain("weight vectors must be nonempty and of equal length"));
        }
        for &w in p0.iter().chain(p1) {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::domain(format!("weight {w} must be finite and nonnegative")));
            }
        }
        if p0.iter().all(|&w| w == 0.0) || p1.iter().all(|&w| w == 0.0) {
            return Err(Error::domain("each endpoint needs some positive weight"));
        }
        Ok(Self {
            log_p0: p0.iter().map(|w| w.ln()).collect(),
            log_p1: p1.iter().map(|w| w.ln()).collect(),
        })
    }

    pub fn weights0(&self) -> Vec<f64> {
        self.log_p0.iter().map(|l| l.exp()).collect()
    }

    pub fn weights1(&self) -> Vec<f64> {
        self.log_p1.iter().map(|l| l.exp()).collect()
    }

    fn log_z(&self, eta: f64) -> f64 {
        log_sum_exp(&self.log_weights(eta))
    }
}

impl Family for DiscreteTable {
    type State = usize;

    fn log_density(&self, eta: f64, &i: &usize) -> f64 {
        let (a, b) = (self.log_p0[i], self.log_p1[i]);
        if eta == 0.0 {
            a
        } else if eta == 1.0 {
            b
        } else if a == LOG_ZERO || b == LOG_ZERO {
            LOG_ZERO
        } else {
            (1.0 - eta) * a + eta * b
        }
    }

    fn exact_sample(&self, eta: f64, rng: &mut dyn RngCore) -> Result<usize> {
        check_eta(eta)?;
        let probs = self.probabilities(eta);
        let dist = WeightedIndex::new(&probs)
            .map_err(|e| Error::Capability(format!("no positive weight at eta = {eta}: {e}")))?;
        Ok(dist.sample(rng))
    }

    fn log_z_ratio(&self, from: f64, to: f64) -> Option<f64> {
        Some(self.log_z(to) - self.log_z(from))
    }

    fn log_density_slope(&self, _eta: f64, &i: &usize) -> Option<f64> {
        let (a, b) = (self.log_p0[i], self.log_p1[i]);
        if a == LOG_ZERO || b == LOG_ZERO {
            None
        } else {
            Some(b - a)
        }
    }
}

impl FiniteFamily for DiscreteTable {
    fn num_states(&self) -> usize {
        self.log_p0.len()
    }
}
