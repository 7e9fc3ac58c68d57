//! Simulation populations and samplers.
//!
//! All three covariance models are exactly spiked, so each population carries
//! its exact `(U, Λ, σ²)` form: the true whitener, `ζ` and `β` cost `O(pd)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, StudentT, Uniform};
use serde::{Deserialize, Serialize};

use crate::classify::oracle::OracleRule;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigendecomp, SymmetricMatrix};
use crate::whitening::{SpikedCovModel, Whiten, WhiteningOperator};

/// Number of nonzero entries in `μ₂ − μ₁`; also the "strong" index set.
pub const SIGNAL_SIZE: usize = 10;
pub const DEFAULT_BLOCK: usize = 20;
pub const DEFAULT_RANK: usize = 10;

/// Entry distribution of the random loading matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDist {
    Normal,
    /// Uniform on `[-1, 1]`.
    Uniform,
    /// Student t with 5 degrees of freedom.
    StudentT5,
}

impl EntryDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            EntryDist::Normal => rng.sample(StandardNormal),
            EntryDist::Uniform => rng.sample(Uniform::new_inclusive(-1.0, 1.0).expect("valid bounds")),
            EntryDist::StudentT5 => rng.sample(StudentT::new(5.0).expect("valid dof")),
        }
    }
}

impl FromStr for EntryDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(EntryDist::Normal),
            "uniform" => Ok(EntryDist::Uniform),
            "t5" | "student_t5" | "student-t5" | "t" => Ok(EntryDist::StudentT5),
            other => Err(Error::Validation(format!(
                "unknown entry distribution '{other}' (normal, uniform, t5)"
            ))),
        }
    }
}

impl fmt::Display for EntryDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryDist::Normal => "normal",
            EntryDist::Uniform => "uniform",
            EntryDist::StudentT5 => "t5",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CovModel {
    /// `ρ11ᵀ + (1 − ρ)I`.
    EqualCorr { rho: f64 },
    /// Two equicorrelation blocks of sizes `block` and `p − block`.
    BlockDiag { rho: f64, block: usize },
    /// `LLᵀ + c I`, `L` of shape `p x rank`, `c = minᵢ [LLᵀ]ᵢᵢ`, redrawn per replicate.
    RandomCorr { rank: usize, dist: EntryDist },
}

/// A simulation setting: covariance model, dimension and per-class sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub model: CovModel,
    pub p: usize,
    pub n_train: usize,
    pub n_test: usize,
}

impl SimSpec {
    /// `p = 800` with 100 training and 100 test points per class.
    pub fn standard(model: CovModel) -> Self {
        SimSpec {
            model,
            p: 800,
            n_train: 100,
            n_test: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < SIGNAL_SIZE {
            return Err(Error::range("p", self.p, format!("p >= {SIGNAL_SIZE}")));
        }
        if self.n_train < 2 {
            return Err(Error::range("n_train", self.n_train, "n_train >= 2"));
        }
        if self.n_test < 1 {
            return Err(Error::range("n_test", self.n_test, "n_test >= 1"));
        }
        match self.model {
            CovModel::EqualCorr { rho } => check_rho(rho),
            CovModel::BlockDiag { rho, block } => {
                check_rho(rho)?;
                if block == 0 || block >= self.p {
                    return Err(Error::range("block", block, format!("1..{}", self.p)));
                }
                Ok(())
            }
            CovModel::RandomCorr { rank, .. } => {
                if rank == 0 || rank >= self.p {
                    return Err(Error::range("rank", rank, format!("1..{}", self.p)));
                }
                Ok(())
            }
        }
    }

    /// Draws the population (random only for `RandomCorr`).
    pub fn population<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Population> {
        self.validate()?;
        match self.model {
            CovModel::EqualCorr { rho } => gen_model1(self.p, rho),
            CovModel::BlockDiag { rho, block } => gen_block_model(self.p, rho, block),
            CovModel::RandomCorr { rank, dist } => gen_model3(self.p, rank, dist, rng),
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::range("rho", rho, "[0, 1)"));
    }
    Ok(())
}

/// An equicorrelation block `(1 − ρ)I + ρ11ᵀ` on `start..start + len`, with
/// symmetric square root `aI + b11ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqBlock {
    pub start: usize,
    pub len: usize,
    pub a: f64,
    pub b: f64,
}

impl EqBlock {
    pub fn new(start: usize, len: usize, rho: f64) -> Self {
        let a = (1.0 - rho).sqrt();
        let m = len as f64;
        let b = (-a + (a * a + m * rho).sqrt()) / m;
        EqBlock { start, len, a, b }
    }
}

/// A factor `F` with `FFᵀ = Σ`, applied without forming `Σ`.
#[derive(Debug, Clone, PartialEq)]
pub enum CovFactor {
    /// Equicorrelation blocks tiling `0..p`.
    Blocks { p: usize, blocks: Vec<EqBlock> },
    /// `[L | σI]`.
    LowRank { loadings: DMatrix<f64>, noise_sd: f64 },
    /// An explicit `p x q` factor.
    Dense(DMatrix<f64>),
}

impl CovFactor {
    pub fn dim(&self) -> usize {
        match self {
            CovFactor::Blocks { p, .. } => *p,
            CovFactor::LowRank { loadings, .. } => loadings.nrows(),
            CovFactor::Dense(f) => f.nrows(),
        }
    }

    /// `n` rows of `F ε` with `ε` standard normal.
    pub fn noise<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        match self {
            CovFactor::Blocks { p, blocks } => {
                let mut out = DMatrix::zeros(n, *p);
                let mut g = Vec::new();
                for i in 0..n {
                    for blk in blocks {
                        g.clear();
                        g.extend((0..blk.len).map(|_| rng.sample::<f64, _>(StandardNormal)));
                        let shared = blk.b * g.iter().sum::<f64>();
                        for (k, gk) in g.iter().enumerate() {
                            out[(i, blk.start + k)] = blk.a * gk + shared;
                        }
                    }
                }
                out
            }
            CovFactor::LowRank { loadings, noise_sd } => {
                let (p, r) = loadings.shape();
                let g = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
                let mut out = DMatrix::from_fn(n, p, |_, _| noise_sd * rng.sample::<f64, _>(StandardNormal));
                out.gemm(1.0, &g, &loadings.transpose(), 1.0);
                out
            }
            CovFactor::Dense(f) => {
                let g = DMatrix::from_fn(n, f.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
                g * f.transpose()
            }
        }
    }
}

/// `n` i.i.d. rows from `N(μ, FFᵀ)`.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mu: &DVector<f64>,
    factor: &CovFactor,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if mu.len() != factor.dim() {
        return Err(Error::Validation(format!(
            "mean has length {}, factor has dimension {}",
            mu.len(),
            factor.dim()
        )));
    }
    let mut x = factor.noise(n, rng);
    for mut row in x.row_iter_mut() {
        row += mu.transpose();
    }
    Ok(x)
}

/// Two Gaussian classes sharing a covariance.
#[derive(Debug, Clone)]
pub struct Population {
    pub mu1: DVector<f64>,
    pub mu2: DVector<f64>,
    pub factor: CovFactor,
    spiked: SpikedCovModel,
}

impl Population {
    /// `spiked` must describe the same `Σ` that `factor` samples from; only
    /// the dimensions are checked.
    pub fn new(
        mu1: DVector<f64>,
        mu2: DVector<f64>,
        factor: CovFactor,
        spiked: SpikedCovModel,
    ) -> Result<Self> {
        let p = factor.dim();
        if mu1.len() != p || mu2.len() != p || spiked.p() != p {
            return Err(Error::Validation(format!(
                "population parts disagree on dimension: means {} and {}, factor {p}, spiked model {}",
                mu1.len(),
                mu2.len(),
                spiked.p()
            )));
        }
        Ok(Population {
            mu1,
            mu2,
            factor,
            spiked,
        })
    }

    pub fn p(&self) -> usize {
        self.mu1.len()
    }

    /// Exact spiked form of `Σ`.
    pub fn spiked(&self) -> &SpikedCovModel {
        &self.spiked
    }

    /// Dense `Σ`; `O(p²)` memory.
    pub fn sigma(&self) -> SymmetricMatrix {
        self.spiked.covariance()
    }

    /// Exact `Σ^{-1/2}`.
    pub fn whitener(&self) -> WhiteningOperator {
        WhiteningOperator::new(self.spiked.clone())
    }

    /// `ζ = Σ^{-1/2}(μ₂ − μ₁)`.
    pub fn zeta(&self) -> DVector<f64> {
        self.whitener()
            .whiten(&(&self.mu2 - &self.mu1))
            .expect("dimensions agree")
    }

    /// `β = Σ⁻¹(μ₂ − μ₁)`.
    pub fn beta(&self) -> DVector<f64> {
        let w = self.whitener();
        w.whiten(&self.zeta()).expect("dimensions agree")
    }

    /// Support of `ζ`, ignoring entries below `1e-10 · ‖ζ‖∞`.
    pub fn true_support(&self) -> Vec<usize> {
        let z = self.zeta();
        let tol = 1e-10 * z.amax();
        (0..z.len()).filter(|&j| z[j].abs() > tol).collect()
    }

    /// `(λ₁ + σ²) / σ²`.
    pub fn condition_number(&self) -> f64 {
        let s2 = self.spiked.sigma2_hat();
        let top = self.spiked.lambda_hat().iter().copied().fold(0.0, f64::max);
        (top + s2) / s2
    }

    pub fn oracle(&self, pi1: f64) -> Result<OracleRule<WhiteningOperator>> {
        OracleRule::new(&self.mu1, &self.mu2, self.whitener(), pi1)
    }

    /// Draws `n1` rows from class 1 then `n2` from class 2.
    pub fn sample<R: Rng + ?Sized>(&self, n1: usize, n2: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        let a = sample_gaussian(&self.mu1, &self.factor, n1, rng)?;
        let b = sample_gaussian(&self.mu2, &self.factor, n2, rng)?;
        let mut x = DMatrix::zeros(n1 + n2, self.p());
        x.rows_mut(0, n1).copy_from(&a);
        x.rows_mut(n1, n2).copy_from(&b);
        Ok(x)
    }
}

fn signal_means(p: usize) -> (DVector<f64>, DVector<f64>) {
    let mut mu2 = DVector::zeros(p);
    mu2.rows_mut(0, SIGNAL_SIZE.min(p)).fill(1.0);
    (DVector::zeros(p), mu2)
}

fn equicorr_population(p: usize, rho: f64, sizes: &[usize]) -> Result<Population> {
    check_rho(rho)?;
    let (mu1, mu2) = signal_means(p);
    let mut blocks = Vec::new();
    let mut spikes = Vec::new();
    let mut start = 0;
    for &len in sizes {
        blocks.push(EqBlock::new(start, len, rho));
        spikes.push((len as f64 * rho, start, len));
        start += len;
    }
    // Spike order must be non-increasing; larger blocks carry larger spikes.
    spikes.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut u = DMatrix::zeros(p, spikes.len());
    for (k, &(_, s, len)) in spikes.iter().enumerate() {
        u.view_mut((s, k), (len, 1)).fill(1.0 / (len as f64).sqrt());
    }
    let lambda = DVector::from_iterator(spikes.len(), spikes.iter().map(|s| s.0));
    Ok(Population {
        mu1,
        mu2,
        factor: CovFactor::Blocks { p, blocks },
        spiked: SpikedCovModel::from_parts(u, lambda, 1.0 - rho)?,
    })
}

/// Equal correlation: `Σ = ρ11ᵀ + (1 − ρ)I`.
pub fn gen_model1(p: usize, rho: f64) -> Result<Population> {
    if p < SIGNAL_SIZE {
        return Err(Error::range("p", p, format!("p >= {SIGNAL_SIZE}")));
    }
    equicorr_population(p, rho, &[p])
}

/// Block diagonal with blocks of size 20 and `p − 20`.
pub fn gen_model2(p: usize, rho: f64) -> Result<Population> {
    gen_block_model(p, rho, DEFAULT_BLOCK)
}

pub fn gen_block_model(p: usize, rho: f64, block: usize) -> Result<Population> {
    if p < SIGNAL_SIZE || block == 0 || block >= p {
        return Err(Error::Validation(format!(
            "block model needs 0 < block < p and p >= {SIGNAL_SIZE} (p = {p}, block = {block})"
        )));
    }
    equicorr_population(p, rho, &[block, p - block])
}

/// Random correlation `LLᵀ + c I`; redraws once if `c ≤ 0`.
pub fn gen_model3<R: Rng + ?Sized>(
    p: usize,
    rank: usize,
    dist: EntryDist,
    rng: &mut R,
) -> Result<Population> {
    if rank == 0 || rank >= p || p < SIGNAL_SIZE {
        return Err(Error::Validation(format!(
            "need 0 < rank < p and p >= {SIGNAL_SIZE}"
        )));
    }
    let mut last = None;
    for _ in 0..2 {
        let l = DMatrix::from_fn(p, rank, |_, _| dist.sample(rng));
        match model3_from_loadings(l) {
            Ok(pop) => return Ok(pop),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("two attempts were made"))
}

/// Builds the random-correlation population from a given loading matrix.
pub fn model3_from_loadings(l: DMatrix<f64>) -> Result<Population> {
    let (p, r) = l.shape();
    let c = l
        .row_iter()
        .map(|row| row.norm_squared())
        .fold(f64::INFINITY, f64::min);
    if !(c > 0.0) {
        return Err(Error::DegenerateSpectrum(format!(
            "c_L = min diag(LLᵀ) = {c} is not positive"
        )));
    }
    // LLᵀ = Q (RRᵀ) Qᵀ with L = QR, so its eigenvectors are Q times those of RRᵀ.
    let qr = l.clone().qr();
    let (q, rr) = (qr.q(), qr.r());
    let small = SymmetricMatrix::symmetrized(&rr * rr.transpose());
    let eig = sym_eigendecomp(&small, r)?;
    let u = q * &eig.vectors;
    let lambda = eig.values.map(|v| v.max(0.0));
    let (mu1, mu2) = signal_means(p);
    Ok(Population {
        mu1,
        mu2,
        factor: CovFactor::LowRank {
            loadings: l,
            noise_sd: c.sqrt(),
        },
        spiked: SpikedCovModel::from_parts(u, lambda, c)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::whitening::whitening_exact;

    fn dense_equicorr(p: usize, rho: f64) -> DMatrix<f64> {
        DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
    }

    #[test]
    fn model1_structure() {
        let pop = gen_model1(20, 0.0).unwrap();
        assert!((pop.sigma().as_matrix() - DMatrix::<f64>::identity(20, 20)).amax() < 1e-15);
        let pop = gen_model1(50, 0.3).unwrap();
        assert!((pop.sigma().as_matrix() - dense_equicorr(50, 0.3)).amax() < 1e-12);
        assert_eq!(pop.mu2.iter().filter(|&&v| v == 1.0).count(), 10);
        assert!(gen_model1(50, 1.0).is_err());
        assert!(gen_model1(50, -0.1).is_err());
    }

    #[test]
    fn model1_spectrum_and_signals() {
        let pop = gen_model1(800, 0.5).unwrap();
        let eig = sym_eigendecomp(&pop.sigma(), 800).unwrap();
        assert!((eig.values[0] - 400.5).abs() < 1e-9);
        assert!(eig.values.iter().skip(1).all(|v| (v - 0.5).abs() < 1e-10));
        let beta = pop.beta();
        let zeta = pop.zeta();
        let strong_beta = (1.0 - 10.0 * 0.5 / (1.0 + 799.0 * 0.5)) / 0.5;
        assert!((beta[0] - strong_beta).abs() < 1e-10);
        assert!((beta[0] - 1.975).abs() < 1e-3);
        assert_eq!(format!("{:.2}", beta[0]), "1.98");
        assert_eq!(format!("{:.2}", zeta[0]), "1.40");
        assert_eq!(format!("{:.2}", zeta[100]), "-0.02");
        assert!((zeta.norm_squared() - 19.750).abs() < 1e-3);
        // Exact whitener agrees with the dense inverse square root.
        let small = gen_model1(40, 0.7).unwrap();
        let exact = whitening_exact(&small.sigma()).unwrap();
        assert!((small.whitener().to_dense() - exact.matrix()).amax() < 1e-10);
    }

    #[test]
    fn model2_structure() {
        let pop = gen_model2(100, 0.5).unwrap();
        let s = pop.sigma();
        let m = s.as_matrix();
        assert!((m.view((0, 0), (20, 20)) - dense_equicorr(20, 0.5)).amax() < 1e-12);
        assert!((m.view((20, 20), (80, 80)) - dense_equicorr(80, 0.5)).amax() < 1e-12);
        assert_eq!(m.view((0, 20), (20, 80)).amax(), 0.0);
        assert_eq!(pop.true_support(), (0..20).collect::<Vec<_>>());
        assert!(
            (gen_model2(30, 0.0).unwrap().sigma().as_matrix() - DMatrix::<f64>::identity(30, 30)).amax()
                < 1e-15
        );
        let pop = gen_model2(800, 0.5).unwrap();
        let z = pop.zeta();
        assert!((z.norm_squared() - (10.0 - 100.0 * 0.5 / (1.0 + 19.0 * 0.5)) / 0.5).abs() < 1e-9);
        assert!((z.norm_squared() - 10.476).abs() < 1e-3);
        // Block spectra 1 + (m − 1)ρ and 1 − ρ.
        let eig = sym_eigendecomp(&gen_model2(60, 0.4).unwrap().sigma(), 60).unwrap();
        assert!((eig.values[0] - (1.0 + 39.0 * 0.4)).abs() < 1e-10);
        assert!((eig.values[1] - (1.0 + 19.0 * 0.4)).abs() < 1e-10);
        assert!(eig.values.iter().skip(2).all(|v| (v - 0.6).abs() < 1e-10));
        assert!(gen_model2(20, 0.5).is_err());
    }

    #[test]
    fn model3_structure() {
        let mut rng = stream_rng(5, 0);
        let pop = gen_model3(60, 10, EntryDist::Normal, &mut rng).unwrap();
        let FactorParts { l, c } = parts(&pop);
        let direct = &l * l.transpose() + DMatrix::<f64>::identity(60, 60) * c;
        assert!((pop.sigma().as_matrix() - &direct).amax() < 1e-9);
        let min_diag = (0..60)
            .map(|i| (l.row(i)).norm_squared())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(c, min_diag);
        // Exactly `rank` eigenvalues stand above the floor c.
        let eig = sym_eigendecomp(&pop.sigma(), 60).unwrap();
        assert_eq!(eig.values.iter().filter(|&&v| v > c * (1.0 + 1e-8)).count(), 10);
        assert!(model3_from_loadings(DMatrix::zeros(20, 3)).is_err());
        for dist in [EntryDist::Uniform, EntryDist::StudentT5] {
            assert!(gen_model3(40, 10, dist, &mut rng).is_ok());
        }
    }

    struct FactorParts {
        l: DMatrix<f64>,
        c: f64,
    }

    fn parts(pop: &Population) -> FactorParts {
        match &pop.factor {
            CovFactor::LowRank { loadings, .. } => FactorParts {
                l: loadings.clone(),
                c: pop.spiked().sigma2_hat(),
            },
            _ => unreachable!(),
        }
    }

    #[test]
    fn model3_condition_numbers_near_reference() {
        // Mean over a modest number of draws at p = 800; the reference mean is 688.
        let mut rng = stream_rng(11, 0);
        let conds: Vec<f64> = (0..30)
            .map(|_| {
                gen_model3(800, 10, EntryDist::Normal, &mut rng)
                    .unwrap()
                    .condition_number()
            })
            .collect();
        let mean = conds.iter().sum::<f64>() / conds.len() as f64;
        assert!((mean - 688.0).abs() < 0.25 * 688.0, "{mean}");
    }

    #[test]
    fn zero_factor_gives_constant_rows() {
        let mu = DVector::from_column_slice(&[1.0, -2.0, 3.0]);
        let x = sample_gaussian(
            &mu,
            &CovFactor::Dense(DMatrix::zeros(3, 3)),
            4,
            &mut stream_rng(0, 0),
        )
        .unwrap();
        for i in 0..4 {
            assert_eq!(x.row(i).transpose(), mu);
        }
        assert!(sample_gaussian(
            &DVector::zeros(2),
            &CovFactor::Dense(DMatrix::zeros(3, 3)),
            1,
            &mut stream_rng(0, 0)
        )
        .is_err());
    }

    #[test]
    fn identity_factor_sample_covariance() {
        let mut rng = stream_rng(1, 0);
        let x = sample_gaussian(
            &DVector::zeros(5),
            &CovFactor::Dense(DMatrix::identity(5, 5)),
            100_000,
            &mut rng,
        )
        .unwrap();
        let cov = x.transpose() * &x / 100_000.0;
        assert!((cov - DMatrix::<f64>::identity(5, 5)).amax() < 0.05);
    }

    #[test]
    fn block_factor_reproduces_covariance() {
        for (len, rho) in [(1usize, 0.5), (7, 0.3), (50, 0.9)] {
            let b = EqBlock::new(0, len, rho);
            let f = DMatrix::from_fn(len, len, |i, j| b.b + if i == j { b.a } else { 0.0 });
            assert!((&f * &f - dense_equicorr(len, rho)).amax() < 1e-12);
        }
        let pop = gen_model2(40, 0.6).unwrap();
        let mut rng = stream_rng(2, 0);
        let x = pop.factor.noise(200_000, &mut rng);
        let cov = x.transpose() * &x / 200_000.0;
        assert!((cov - pop.sigma().as_matrix()).amax() < 0.03);
    }

    /// Two-sample Kolmogorov–Smirnov statistic.
    fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn implicit_factor_matches_cholesky_sampling() {
        let pop = gen_model1(60, 0.5).unwrap();
        let chol = pop.sigma().as_matrix().clone().cholesky().unwrap().l();
        let dense = CovFactor::Dense(chol);
        let n = 4000;
        let xi = pop.factor.noise(n, &mut stream_rng(3, 0));
        let xd = dense.noise(n, &mut stream_rng(3, 1));
        let mut rng = stream_rng(3, 2);
        // Critical value at α = 0.01 for equal sizes: 1.628·√(2/n).
        let crit = 1.628 * (2.0 / n as f64).sqrt();
        for _ in 0..5 {
            let v = DVector::<f64>::from_fn(60, |_, _| rng.sample(StandardNormal));
            let a: Vec<f64> = (&xi * &v).iter().copied().collect();
            let b: Vec<f64> = (&xd * &v).iter().copied().collect();
            assert!(ks(a, b) < crit);
        }
    }

    #[test]
    fn spec_validation() {
        let ok = SimSpec::standard(CovModel::EqualCorr { rho: 0.5 });
        assert!(ok.validate().is_ok());
        assert!(SimSpec::standard(CovModel::EqualCorr { rho: 1.5 })
            .validate()
            .is_err());
        assert!(SimSpec::standard(CovModel::BlockDiag { rho: 0.5, block: 800 })
            .validate()
            .is_err());
        assert!(SimSpec::standard(CovModel::RandomCorr {
            rank: 800,
            dist: EntryDist::Normal
        })
        .validate()
        .is_err());
        assert_eq!("t5".parse::<EntryDist>().unwrap(), EntryDist::StudentT5);
        assert!("cauchy".parse::<EntryDist>().is_err());
    }
}
