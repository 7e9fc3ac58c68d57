//! Pooled covariance estimation, spiked-model fitting and the implicit
//! whitening operator `Ŵ = Û D̂ Ûᵀ + σ̂⁻¹ (I − ÛÛᵀ)` with `D̂ = (Λ̂ + σ̂² I)^{-1/2}`.
//!
//! `Ŵ` is never formed as a `p x p` matrix: applying it costs `O(pd)` per vector.

use nalgebra::{DMatrix, DVector};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigendecomp, top_eigenpairs_gram, EigenPairs, SymmetricMatrix};

/// Default share of `tr(Σ̂)` the leading eigenvalues must explain.
pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.9;

/// Where the pooled covariance lives.
#[derive(Debug, Clone)]
enum Scatter {
    /// Class-centered rows `Xc` (`n x p`); `Σ̂ = XcᵀXc / n`.
    Centered(DMatrix<f64>),
    /// An explicit covariance, e.g. a known population matrix.
    Dense(SymmetricMatrix),
}

/// Per-class means, counts and the pooled covariance with divisor `n = Σ nᵢ`.
#[derive(Debug, Clone)]
pub struct PooledStats {
    class_means: Vec<DVector<f64>>,
    counts: Vec<usize>,
    p: usize,
    scatter: Scatter,
}

/// Class means and the pooled within-class covariance of a labeled dataset.
pub fn pooled_covariance(data: &LabeledDataset) -> Result<PooledStats> {
    let k = data.num_classes();
    if k < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 classes, found {k}"
        )));
    }
    let counts = data.class_counts();
    if let Some((c, &cnt)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
        return Err(Error::InsufficientData(format!(
            "class '{}' has {cnt} sample(s); at least 2 required",
            data.classes()[c]
        )));
    }
    let x = data.features();
    let (n, p) = x.shape();
    let mut sums = vec![DVector::zeros(p); k];
    for (i, &c) in data.class_ordinals().iter().enumerate() {
        sums[c] += x.row(i).transpose();
    }
    let class_means: Vec<DVector<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let mut centered = x.clone();
    for (i, &c) in data.class_ordinals().iter().enumerate() {
        let mut row = centered.row_mut(i);
        row -= class_means[c].transpose();
    }
    debug_assert_eq!(centered.nrows(), n);
    Ok(PooledStats {
        class_means,
        counts,
        p,
        scatter: Scatter::Centered(centered),
    })
}

impl PooledStats {
    /// Stats around a known covariance. `counts` still set the nominal sample size.
    pub fn from_covariance(
        class_means: Vec<DVector<f64>>,
        counts: Vec<usize>,
        sigma: SymmetricMatrix,
    ) -> Result<Self> {
        let p = sigma.dim();
        if class_means.len() != counts.len() || class_means.len() < 2 {
            return Err(Error::Validation(
                "need one count per class mean and at least 2 classes".into(),
            ));
        }
        if class_means.iter().any(|m| m.len() != p) {
            return Err(Error::Validation(
                "class mean length differs from Σ dimension".into(),
            ));
        }
        Ok(PooledStats {
            class_means,
            counts,
            p,
            scatter: Scatter::Dense(sigma),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn class_means(&self) -> &[DVector<f64>] {
        &self.class_means
    }

    /// Upper bound on `rank(Σ̂)`: `min(n − K, p)` for sample data.
    pub fn rank_bound(&self) -> usize {
        match &self.scatter {
            Scatter::Centered(_) => (self.n() - self.counts.len()).min(self.p),
            Scatter::Dense(_) => self.p,
        }
    }

    /// Largest number of eigenpairs the fit can extract: `min(n, p)`.
    pub fn max_components(&self) -> usize {
        match &self.scatter {
            Scatter::Centered(_) => self.n().min(self.p),
            Scatter::Dense(_) => self.p,
        }
    }

    /// Materializes `Σ̂` (`p x p`).
    pub fn sigma_hat(&self) -> SymmetricMatrix {
        match &self.scatter {
            Scatter::Centered(xc) => SymmetricMatrix::symmetrized(xc.transpose() * xc / xc.nrows() as f64),
            Scatter::Dense(s) => s.clone(),
        }
    }

    pub fn trace(&self) -> f64 {
        match &self.scatter {
            Scatter::Centered(xc) => xc.norm_squared() / xc.nrows() as f64,
            Scatter::Dense(s) => s.trace(),
        }
    }

    /// Top-`k` eigenpairs of `Σ̂`. Sample data with `p > n` goes through the
    /// `n x n` Gram matrix.
    pub fn eigenpairs(&self, k: usize) -> Result<EigenPairs> {
        match &self.scatter {
            Scatter::Centered(xc) if self.p > xc.nrows() => top_eigenpairs_gram(xc, k),
            Scatter::Centered(_) => {
                let cap = self.max_components();
                if k == 0 || k > cap {
                    return Err(Error::range("k", k, format!("1..={cap}")));
                }
                sym_eigendecomp(&self.sigma_hat(), k)
            }
            Scatter::Dense(s) => sym_eigendecomp(s, k),
        }
    }

    /// The leading `max_components()` eigenvalues of `Σ̂`, non-increasing.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut v: Vec<f64> = match &self.scatter {
            Scatter::Centered(xc) if self.p > xc.nrows() => {
                let gram = xc * xc.transpose() / xc.nrows() as f64;
                gram.symmetric_eigenvalues().iter().copied().collect()
            }
            _ => self
                .sigma_hat()
                .into_inner()
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .collect(),
        };
        v.sort_by(|a, b| b.total_cmp(a));
        v.truncate(self.max_components());
        v
    }
}

/// Estimated `(Û, Λ̂, σ̂²)` of a spiked covariance `UΛUᵀ + σ²I`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikedCovModel {
    u_hat: DMatrix<f64>,
    lambda_hat: DVector<f64>,
    sigma2_hat: f64,
}

impl SpikedCovModel {
    /// Assembles a model from explicit parts. Spike values may be zero here so
    /// that population covariances such as `ρ = 0` equicorrelation fit the form.
    pub fn from_parts(u: DMatrix<f64>, lambda: DVector<f64>, sigma2: f64) -> Result<Self> {
        if u.ncols() != lambda.len() {
            return Err(Error::Validation("U columns must match the spike count".into()));
        }
        if u.nrows() == 0 {
            return Err(Error::Validation("dimension must be at least 1".into()));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::DegenerateSpectrum(format!(
                "bulk variance must be positive, got {sigma2}"
            )));
        }
        if lambda.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::Validation(
                "spike values must be finite and non-negative".into(),
            ));
        }
        if lambda.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Validation("spike values must be non-increasing".into()));
        }
        let gram_err = (u.transpose() * &u - DMatrix::identity(u.ncols(), u.ncols())).amax();
        if gram_err > 1e-8 {
            return Err(Error::Validation(format!(
                "U columns are not orthonormal (max deviation {gram_err:e})"
            )));
        }
        Ok(SpikedCovModel {
            u_hat: u,
            lambda_hat: lambda,
            sigma2_hat: sigma2,
        })
    }

    pub fn p(&self) -> usize {
        self.u_hat.nrows()
    }

    pub fn d(&self) -> usize {
        self.u_hat.ncols()
    }

    pub fn u_hat(&self) -> &DMatrix<f64> {
        &self.u_hat
    }

    pub fn lambda_hat(&self) -> &DVector<f64> {
        &self.lambda_hat
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.sigma2_hat
    }

    /// `ÛΛ̂Ûᵀ + σ̂²I`, dense. For tests and small problems.
    pub fn covariance(&self) -> SymmetricMatrix {
        let scaled = &self.u_hat * DMatrix::from_diagonal(&self.lambda_hat);
        let mut m = scaled * self.u_hat.transpose();
        for i in 0..self.p() {
            m[(i, i)] += self.sigma2_hat;
        }
        SymmetricMatrix::symmetrized(m)
    }
}

/// Top-`d` eigenpairs of `Σ̂` plus the bulk variance
/// `σ̂² = (tr Σ̂ − Σ λ̂ₖ) / (p − d)`.
pub fn fit_spiked(stats: &PooledStats, d: usize) -> Result<SpikedCovModel> {
    let cap = stats.max_components();
    if d == 0 || d >= cap {
        return Err(Error::range("d", d, format!("1..{cap} (d < min(n, p))")));
    }
    let eig = stats.eigenpairs(d)?;
    spiked_from_eigen(&eig, stats.trace(), stats.p(), d)
}

/// Builds the model from (at least `d`) leading eigenpairs already computed.
pub fn spiked_from_eigen(eig: &EigenPairs, trace: f64, p: usize, d: usize) -> Result<SpikedCovModel> {
    if d == 0 || d > eig.len() || d >= p {
        return Err(Error::range("d", d, format!("1..={}", eig.len().min(p - 1))));
    }
    let lambda = eig.values.rows(0, d).clone_owned();
    if lambda[d - 1] <= 0.0 {
        return Err(Error::DegenerateSpectrum(format!(
            "spike {d} has non-positive eigenvalue {}",
            lambda[d - 1]
        )));
    }
    let sigma2 = (trace - lambda.sum()) / (p - d) as f64;
    // Relative floor: anything this small is rounding noise of a rank-d Σ̂.
    if sigma2 <= trace * 1e-13 {
        return Err(Error::DegenerateSpectrum(format!(
            "bulk variance estimate {sigma2:e} is not positive; d = {d} reaches the rank of Σ̂"
        )));
    }
    SpikedCovModel::from_parts(eig.vectors.columns(0, d).clone_owned(), lambda, sigma2)
}

/// Smallest `d` whose leading eigenvalues explain at least `frac` of the total.
pub fn choose_d(eigenvalues: &[f64], frac: f64) -> Result<usize> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::range("variance fraction", frac, "(0, 1)"));
    }
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::Domain("eigenvalues are all zero".into()));
    }
    let mut acc = 0.0;
    for (i, v) in eigenvalues.iter().enumerate() {
        acc += v.max(0.0);
        if acc / total >= frac {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// The variance-fraction rule evaluated over the computable spectrum of `Σ̂`,
/// then capped at `rank(Σ̂) − 1` so that `σ̂²` stays positive.
pub fn choose_d_for(stats: &PooledStats, frac: f64) -> Result<usize> {
    choose_d_capped(&stats.spectrum(), frac, stats.rank_bound())
}

pub(crate) fn choose_d_capped(values: &[f64], frac: f64, rank_bound: usize) -> Result<usize> {
    let d = choose_d(values, frac)?;
    Ok(d.min(rank_bound.saturating_sub(1)).max(1))
}

/// Linear maps that whiten feature vectors.
pub trait Whiten: Send + Sync {
    fn dim(&self) -> usize;

    fn whiten(&self, v: &DVector<f64>) -> Result<DVector<f64>>;

    /// Whitens every row of an `m x p` matrix.
    fn whiten_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Validation(format!(
            "dimension mismatch: expected {expected} features, got {got}"
        )));
    }
    Ok(())
}

/// The implicit map `v ↦ Û diag(η̂) Ûᵀv + σ̂⁻¹(v − ÛÛᵀv)`, `η̂ₖ = (λ̂ₖ + σ̂²)^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningOperator {
    model: SpikedCovModel,
    eta: DVector<f64>,
    inv_sigma: f64,
}

impl WhiteningOperator {
    pub fn new(model: SpikedCovModel) -> Self {
        let s2 = model.sigma2_hat;
        let eta = model.lambda_hat.map(|l| (l + s2).sqrt().recip());
        let inv_sigma = s2.sqrt().recip();
        WhiteningOperator {
            model,
            eta,
            inv_sigma,
        }
    }

    pub fn model(&self) -> &SpikedCovModel {
        &self.model
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    pub fn inv_sigma(&self) -> f64 {
        self.inv_sigma
    }

    /// Dense `p x p` matrix of the operator; only for small `p`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let u = &self.model.u_hat;
        let shift = self.eta.map(|e| e - self.inv_sigma);
        let mut m = u * DMatrix::from_diagonal(&shift) * u.transpose();
        for i in 0..u.nrows() {
            m[(i, i)] += self.inv_sigma;
        }
        m
    }
}

impl Whiten for WhiteningOperator {
    fn dim(&self) -> usize {
        self.model.p()
    }

    fn whiten(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), v.len())?;
        let u = &self.model.u_hat;
        let mut coef = u.tr_mul(v);
        for (c, e) in coef.iter_mut().zip(self.eta.iter()) {
            *c *= e - self.inv_sigma;
        }
        let mut out = v * self.inv_sigma;
        out.gemv(1.0, u, &coef, 1.0);
        Ok(out)
    }

    fn whiten_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), x.ncols())?;
        let u = &self.model.u_hat;
        let mut coef = x * u;
        for (k, e) in self.eta.iter().enumerate() {
            coef.column_mut(k).scale_mut(e - self.inv_sigma);
        }
        let mut out = x * self.inv_sigma;
        out.gemm(1.0, &coef, &u.transpose(), 1.0);
        Ok(out)
    }
}

/// An explicit symmetric whitening matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseWhitening {
    matrix: DMatrix<f64>,
}

impl DenseWhitening {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl Whiten for DenseWhitening {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn whiten(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), v.len())?;
        Ok(&self.matrix * v)
    }

    fn whiten_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), x.ncols())?;
        // W is symmetric, so X Wᵀ = X W.
        Ok(x * &self.matrix)
    }
}

/// `Σ^{-1/2}` through a full eigendecomposition.
pub fn whitening_exact(sigma: &SymmetricMatrix) -> Result<DenseWhitening> {
    let p = sigma.dim();
    let eig = sym_eigendecomp(sigma, p)?;
    let top = eig.values[0];
    let bottom = eig.values[p - 1];
    if !(bottom > 0.0) || bottom <= top * f64::EPSILON * p as f64 {
        return Err(Error::Domain(format!(
            "covariance is not positive definite (smallest eigenvalue {bottom:e})"
        )));
    }
    let scale = eig.values.map(|v| v.sqrt().recip());
    let w = &eig.vectors * DMatrix::from_diagonal(&scale) * eig.vectors.transpose();
    Ok(DenseWhitening {
        matrix: SymmetricMatrix::symmetrized(w).into_inner(),
    })
}
