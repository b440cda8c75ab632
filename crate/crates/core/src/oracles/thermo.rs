use crate::distributions::{DiscreteTable, DistributionSequence, Family, FiniteFamily};
use crate::error::{Error, Result};
use crate::logspace::CompensatedSum;
use crate::quadrature::Quadrature;

/// Families for which `E_{pi_eta}[d/d eta log p_eta(X)]` can be computed
/// without sampling.
pub trait ExpectedSlope {
    fn expected_slope(&self, eta: f64, quad: &Quadrature) -> Result<f64>;
}

impl ExpectedSlope for DistributionSequence {
    /// Ratio of two quadratures over the member's integration range, split
    /// at the midpoint where the generalized normal has its kink.
    fn expected_slope(&self, eta: f64, quad: &Quadrature) -> Result<f64> {
        let x0 = 0.5 * (self.quadrature_bounds(eta).0 + self.quadrature_bounds(eta).1);
        if self.log_density_slope(eta, &x0).is_none() {
            return Err(Error::Capability(format!("{self:?} has no eta-derivative of its log density")));
        }
        let (lo, hi) = self.quadrature_bounds(eta);
        let mid = 0.5 * (lo + hi);
        let density = |x: f64| self.log_density(eta, &x).exp();
        let weighted = |x: f64| {
            let p = self.log_density(eta, &x).exp();
            if p == 0.0 {
                0.0
            } else {
                p * self.log_density_slope(eta, &x).unwrap_or(0.0)
            }
        };
        let z = quad.integrate(density, lo, mid)?.0 + quad.integrate(density, mid, hi)?.0;
        let num = quad.integrate(weighted, lo, mid)?.0 + quad.integrate(weighted, mid, hi)?.0;
        Ok(num / z)
    }
}

impl ExpectedSlope for DiscreteTable {
    fn expected_slope(&self, eta: f64, _quad: &Quadrature) -> Result<f64> {
        let p = self.probabilities(eta);
        let mut acc = CompensatedSum::new();
        for (i, &pi) in p.iter().enumerate() {
            match self.log_density_slope(eta, &i) {
                Some(s) => acc.add(pi * s),
                None => {
                    return Err(Error::Domain(
                        "thermodynamic integration needs positive weights at both endpoints".into(),
                    ))
                }
            }
        }
        Ok(acc.value())
    }
}

/// `log(Z_1/Z_0) = int_0^1 E_eta[d/d eta log p_eta] d eta`, by adaptive
/// quadrature in `eta` with tolerance `quad`, the inner expectations computed
/// a hundred times more tightly.
pub fn thermo_log_r<T: ExpectedSlope>(seq: &T, quad: &Quadrature) -> Result<f64> {
    let inner = Quadrature {
        abs_tol: quad.abs_tol * 1e-2,
        ..*quad
    };
    let failure = std::cell::Cell::new(None);
    let integrand = |eta: f64| match seq.expected_slope(eta, &inner) {
        Ok(v) => v,
        Err(e) => {
            failure.set(Some(e.to_string()));
            0.0
        }
    };
    let (value, _) = quad.integrate(integrand, 0.0, 1.0)?;
    if let Some(msg) = failure.take() {
        return Err(Error::Capability(msg));
    }
    Ok(value)
}
