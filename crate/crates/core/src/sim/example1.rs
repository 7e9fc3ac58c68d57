//! The bivariate projection experiment: thresholding `β̂` versus `ζ̂` to a
//! single coordinate, compared with the full plug-in direction `β̂`.
//! Errors are in-sample, with the plug-in midpoint and threshold 0.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, MeanSd};
use super::models::{sample_gaussian, CovFactor};
use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::rng::{derive_seed, stream_rng};
use crate::whitening::{whitening_exact, Whiten};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example1Config {
    pub n_per_class: usize,
    pub rho: f64,
    pub reps: usize,
}

impl Default for Example1Config {
    fn default() -> Self {
        Example1Config {
            n_per_class: 500,
            rho: 0.9,
            reps: 1000,
        }
    }
}

/// Mean error, FPR and FNR of one projection direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRates {
    pub error: MeanSd,
    pub fpr: MeanSd,
    pub fnr: MeanSd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example1Result {
    /// Largest coordinate of `β̂`, raw data.
    pub nu: ProjectionRates,
    /// Largest coordinate of `ζ̂`, whitened data.
    pub nu_zeta: ProjectionRates,
    /// Full `β̂`.
    pub beta: ProjectionRates,
}

fn single_coordinate(v: &DVector<f64>) -> DVector<f64> {
    let j = v.iamax();
    let mut out = DVector::zeros(v.len());
    out[j] = v[j] / v.norm();
    out
}

/// Returns `[ν̂, ν̂_ζ, β̂]` rates for one replicate.
fn replicate(cfg: &Example1Config, seed: u64) -> Result<[(f64, f64, f64); 3]> {
    let n = cfg.n_per_class;
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, cfg.rho, cfg.rho, 1.0]);
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?
        .l();
    let factor = CovFactor::Dense(chol);
    let mut rng = stream_rng(seed, 0);
    let mu1 = DVector::zeros(2);
    let mu2 = DVector::from_column_slice(&[1.0, 0.0]);
    let x1 = sample_gaussian(&mu1, &factor, n, &mut rng)?;
    let x2 = sample_gaussian(&mu2, &factor, n, &mut rng)?;
    let m1 = x1.row_mean().transpose();
    let m2 = x2.row_mean().transpose();
    let mut scatter = DMatrix::zeros(2, 2);
    for (x, m) in [(&x1, &m1), (&x2, &m2)] {
        for row in x.row_iter() {
            let c = row.transpose() - m;
            scatter += &c * c.transpose();
        }
    }
    let sigma_hat = SymmetricMatrix::new(scatter / (2 * n) as f64)?;
    let w = whitening_exact(&sigma_hat)?;
    let delta = &m2 - &m1;
    let zeta = w.whiten(&delta)?;
    let beta = w.whiten(&zeta)?;
    let nu = single_coordinate(&beta);
    let nu_zeta = single_coordinate(&zeta);
    let mid = (&m1 + &m2) * 0.5;

    let mut all = DMatrix::zeros(2 * n, 2);
    all.rows_mut(0, n).copy_from(&x1);
    all.rows_mut(n, n).copy_from(&x2);
    for mut row in all.row_iter_mut() {
        row -= mid.transpose();
    }
    let whitened = w.whiten_rows(&all)?;
    let truth: Vec<usize> = (0..2 * n).map(|i| usize::from(i >= n)).collect();
    let classify = |scores: DVector<f64>| -> Result<(f64, f64, f64)> {
        let pred: Vec<usize> = scores.iter().map(|&s| usize::from(s > 0.0)).collect();
        let r = metrics(&pred, &truth)?;
        Ok((r.error, r.fpr.unwrap_or(f64::NAN), r.fnr.unwrap_or(f64::NAN)))
    };
    Ok([
        classify(&all * nu)?,
        classify(&whitened * nu_zeta)?,
        classify(&all * beta)?,
    ])
}

pub fn run_example1(cfg: &Example1Config, base_seed: u64) -> Result<Example1Result> {
    if cfg.reps == 0 || cfg.n_per_class < 2 {
        return Err(Error::Validation(
            "need reps >= 1 and at least 2 points per class".into(),
        ));
    }
    if !(cfg.rho > -1.0 && cfg.rho < 1.0) {
        return Err(Error::range("rho", cfg.rho, "(-1, 1)"));
    }
    let reps: Vec<[(f64, f64, f64); 3]> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| replicate(cfg, derive_seed(base_seed, r as u64)))
        .collect::<Result<_>>()?;
    let summarize = |k: usize| ProjectionRates {
        error: MeanSd::of(reps.iter().map(|r| r[k].0)),
        fpr: MeanSd::of(reps.iter().map(|r| r[k].1)),
        fnr: MeanSd::of(reps.iter().map(|r| r[k].2)),
    };
    Ok(Example1Result {
        nu: summarize(0),
        nu_zeta: summarize(1),
        beta: summarize(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::oracle::normal_cdf;

    #[test]
    fn short_run_is_near_closed_forms() {
        let cfg = Example1Config {
            reps: 100,
            ..Default::default()
        };
        let r = run_example1(&cfg, 1).unwrap();
        // Population versions: Φ(−1/2), Φ(−ζ₁/2), Φ(−‖ζ‖/2).
        let zeta1 = 0.5 * (1.9f64.powf(-0.5) + 0.1f64.powf(-0.5));
        assert!((r.nu.error.mean - normal_cdf(-0.5)).abs() < 0.01);
        assert!((r.nu_zeta.error.mean - normal_cdf(-zeta1 / 2.0)).abs() < 0.01);
        assert!((r.beta.error.mean - normal_cdf(-0.5 / 0.19f64.sqrt())).abs() < 0.01);
    }

    #[test]
    fn deterministic() {
        let cfg = Example1Config {
            reps: 5,
            n_per_class: 50,
            rho: 0.9,
        };
        assert_eq!(run_example1(&cfg, 3).unwrap(), run_example1(&cfg, 3).unwrap());
    }
}
