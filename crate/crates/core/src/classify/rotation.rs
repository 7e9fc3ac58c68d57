//! Rotation preprocessing: project the data onto the leading eigenvectors of
//! `Σ̂ + γ Δ̂ Δ̂ᵀ`, `Δ̂ = X̄₂ − X̄₁`. On the population, `β = Σ⁻¹Δμ` then has at
//! most `d + 1` nonzero coordinates in the rotated basis.

use nalgebra::{DMatrix, DVector};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigendecomp, top_eigenpairs_gram, SymmetricMatrix};
use crate::whitening::pooled_covariance;

pub const DEFAULT_GAMMA: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct Rotation {
    /// Rotated training data `{Û_rot,mᵀ xᵢⱼ}` (`n x m`).
    pub data: LabeledDataset,
    /// `p x m` orthonormal basis.
    pub basis: DMatrix<f64>,
}

impl Rotation {
    /// Applies the basis to new rows.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.basis.nrows() {
            return Err(Error::Validation(format!(
                "expected {} features, got {}",
                self.basis.nrows(),
                x.ncols()
            )));
        }
        Ok(x * &self.basis)
    }
}

/// Rotates a two-class training set into the top-`m` eigenbasis of `Σ̂_rot`.
/// `gamma = 0` gives the plain principal-component rotation.
pub fn rotate_preprocess(train: &LabeledDataset, gamma: f64, m: usize) -> Result<Rotation> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::range("gamma", gamma, "gamma >= 0"));
    }
    if train.num_classes() != 2 {
        return Err(Error::Validation("rotation preprocessing needs 2 classes".into()));
    }
    let (n, p) = (train.n(), train.p());
    if m == 0 || m > n.min(p) {
        return Err(Error::range("m", m, format!("1..={}", n.min(p))));
    }
    let stats = pooled_covariance(train)?;
    let delta = &stats.class_means()[1] - &stats.class_means()[0];
    let basis = if p > n {
        // Σ̂_rot = AᵀA with A = [Xc/√n ; √γ Δ̂ᵀ]; the Gram helper divides by its row count.
        let mut a = DMatrix::zeros(n + 1, p);
        let x = train.features();
        let scale = (n as f64 + 1.0).sqrt();
        for (i, &c) in train.class_ordinals().iter().enumerate() {
            let centered = x.row(i) - stats.class_means()[c].transpose();
            a.set_row(i, &(centered * (scale / (n as f64).sqrt())));
        }
        a.set_row(n, &(delta.transpose() * (gamma.sqrt() * scale)));
        top_eigenpairs_gram(&a, m)?.vectors
    } else {
        let sigma = stats.sigma_hat();
        rotation_basis(&sigma, &delta, gamma, m)?
    };
    let rotated = train.features() * &basis;
    let names = (1..=m).map(|k| format!("r{k}")).collect();
    let data = LabeledDataset::with_feature_names(rotated, train.labels().to_vec(), names)?;
    Ok(Rotation { data, basis })
}

/// Top-`m` eigenvectors of `Σ + γΔΔᵀ`.
pub fn rotation_basis(
    sigma: &SymmetricMatrix,
    delta: &DVector<f64>,
    gamma: f64,
    m: usize,
) -> Result<DMatrix<f64>> {
    if delta.len() != sigma.dim() {
        return Err(Error::Validation("Δ length differs from Σ dimension".into()));
    }
    let rot = sigma.as_matrix() + delta * delta.transpose() * gamma;
    Ok(sym_eigendecomp(&SymmetricMatrix::symmetrized(rot), m)?.vectors)
}
