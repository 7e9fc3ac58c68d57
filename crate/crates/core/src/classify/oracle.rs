//! Fisher's rule with known parameters, and its closed-form risk.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::whitening::{whitening_exact, DenseWhitening, Whiten};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Error rate of Fisher's rule for whitened separation `‖ζ‖` and prior `π₁`:
/// `π₁Φ(−‖ζ‖/2 + ln(π₂/π₁)/‖ζ‖) + π₂Φ(−‖ζ‖/2 − ln(π₂/π₁)/‖ζ‖)`.
pub fn bayes_risk(zeta_norm: f64, pi1: f64) -> Result<f64> {
    if !(zeta_norm > 0.0 && zeta_norm.is_finite()) {
        return Err(Error::range("zeta norm", zeta_norm, "> 0"));
    }
    if !(pi1 > 0.0 && pi1 < 1.0) {
        return Err(Error::range("pi1", pi1, "(0, 1)"));
    }
    let pi2 = 1.0 - pi1;
    let shift = (pi2 / pi1).ln() / zeta_norm;
    let half = zeta_norm / 2.0;
    Ok(pi1 * normal_cdf(-half + shift) + pi2 * normal_cdf(-half - shift))
}

/// Fisher's rule `class 1 ⇔ ζᵀ(Wz − Wm) ≤ ln(π₁/π₂)` with `ζ = W(μ₂ − μ₁)`.
#[derive(Debug, Clone)]
pub struct OracleRule<W = DenseWhitening> {
    whitener: W,
    zeta: DVector<f64>,
    midpoint: DVector<f64>,
    pi1: f64,
}

/// The oracle rule for explicit `(μ₁, μ₂, Σ, π₁)`.
pub fn oracle_fisher(
    mu1: &DVector<f64>,
    mu2: &DVector<f64>,
    sigma: &SymmetricMatrix,
    pi1: f64,
) -> Result<OracleRule> {
    OracleRule::new(mu1, mu2, whitening_exact(sigma)?, pi1)
}

impl<W: Whiten> OracleRule<W> {
    /// Builds the rule around any exact whitener of the population covariance.
    pub fn new(mu1: &DVector<f64>, mu2: &DVector<f64>, whitener: W, pi1: f64) -> Result<Self> {
        if !(pi1 > 0.0 && pi1 < 1.0) {
            return Err(Error::range("pi1", pi1, "(0, 1)"));
        }
        if mu1.len() != mu2.len() {
            return Err(Error::Validation("class means differ in length".into()));
        }
        let w1 = whitener.whiten(mu1)?;
        let w2 = whitener.whiten(mu2)?;
        let zeta = &w2 - &w1;
        if !(zeta.norm() > 0.0) {
            return Err(Error::Domain("class means coincide: ‖ζ‖ = 0".into()));
        }
        Ok(OracleRule {
            midpoint: (w1 + w2) * 0.5,
            zeta,
            whitener,
            pi1,
        })
    }

    pub fn zeta(&self) -> &DVector<f64> {
        &self.zeta
    }

    pub fn pi1(&self) -> f64 {
        self.pi1
    }

    pub fn whitener(&self) -> &W {
        &self.whitener
    }

    /// `β = Σ⁻¹Δμ = Wζ` for a symmetric whitener.
    pub fn beta(&self) -> Result<DVector<f64>> {
        self.whitener.whiten(&self.zeta)
    }

    /// Support of `ζ` at an absolute tolerance.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        (0..self.zeta.len())
            .filter(|&j| self.zeta[j].abs() > tol)
            .collect()
    }

    pub fn bayes_risk(&self) -> f64 {
        bayes_risk(self.zeta.norm(), self.pi1).expect("validated at construction")
    }

    fn cutoff(&self) -> f64 {
        (self.pi1 / (1.0 - self.pi1)).ln()
    }

    pub fn predict_class(&self, z: &DVector<f64>) -> Result<usize> {
        let zw = self.whitener.whiten(z)?;
        let score = self.zeta.dot(&zw) - self.zeta.dot(&self.midpoint);
        Ok(usize::from(score > self.cutoff()))
    }

    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        let zw = self.whitener.whiten_rows(x)?;
        let shift = self.zeta.dot(&self.midpoint);
        let scores = zw * &self.zeta;
        let cut = self.cutoff();
        Ok(scores.iter().map(|&s| usize::from(s - shift > cut)).collect())
    }
}
