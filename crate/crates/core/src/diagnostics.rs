//! Desk-scale checks of the estimator's convergence rates and structural
//! claims. Rates are compared across grid cells as decay ratios; no absolute
//! constant is assumed.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::hard_threshold;
use crate::classify::pclda::{DEFAULT_THRESHOLD_ALPHA, DEFAULT_THRESHOLD_C};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{normalize_signs, procrustes_align, spectral_norm, two_to_inf_norm, SymmetricMatrix};
use crate::rng::{derive_seed, stream_rng};
use crate::sim::models::{CovFactor, CovModel, Population, SimSpec};
use crate::whitening::{
    fit_spiked, pooled_covariance, PooledStats, SpikedCovModel, Whiten, WhiteningOperator,
};

/// Populations the checks draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagPopulation {
    /// `Σ = U diag(λ) Uᵀ + σ²I` with `U` the first `d` nonconstant cosine
    /// columns, `λ_k = lambda_scale[k] · p`. `ζ` has `signal` leading entries
    /// equal to `signal_value` and zeros elsewhere.
    Delocalized {
        lambda_scale: Vec<f64>,
        sigma2: f64,
        signal: usize,
        signal_value: f64,
    },
    /// One of the simulation models; the spike count is its exact one.
    Sim { model: CovModel },
}

impl Default for DiagPopulation {
    fn default() -> Self {
        DiagPopulation::Delocalized {
            lambda_scale: vec![3.0, 2.0, 1.0],
            sigma2: 1.0,
            signal: 10,
            signal_value: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// `(n, p)` cells; `n` is the total training size, split evenly.
    pub grid: Vec<(usize, usize)>,
    pub reps: usize,
    pub population: DiagPopulation,
    pub threshold_c: f64,
    pub threshold_alpha: f64,
    /// Cap `𝒞_𝒰` in `‖U‖_{2→∞} ≤ 𝒞_𝒰 √(d/p)` for generated bases.
    pub coherence_cap: f64,
    pub seed: u64,
    /// Replaces `Ŵ` by the identity. A deliberately broken estimator, used to
    /// confirm that the decay checks can fail.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub identity_whitener: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        let mut grid = Vec::new();
        for p in [100, 200, 400] {
            for n in [250, 1000, 4000] {
                grid.push((n, p));
            }
        }
        DiagnosticsConfig {
            grid,
            reps: 50,
            population: DiagPopulation::default(),
            threshold_c: DEFAULT_THRESHOLD_C,
            threshold_alpha: DEFAULT_THRESHOLD_ALPHA,
            coherence_cap: std::f64::consts::SQRT_2,
            seed: crate::rng::DEFAULT_SEED,
            identity_whitener: false,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Validation("diagnostics grid is empty".into()));
        }
        for &(n, p) in &self.grid {
            if n < 4 || p < 4 {
                return Err(Error::Validation(format!(
                    "grid cell (n={n}, p={p}) needs n, p >= 4"
                )));
            }
        }
        if self.reps < 10 {
            return Err(Error::range("reps", self.reps, "reps >= 10"));
        }
        if !(self.coherence_cap > 0.0) {
            return Err(Error::range("coherence_cap", self.coherence_cap, "> 0"));
        }
        if let DiagPopulation::Delocalized {
            lambda_scale,
            sigma2,
            signal,
            signal_value,
        } = &self.population
        {
            if lambda_scale.is_empty() || lambda_scale.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::Validation(
                    "lambda_scale must be non-empty and positive".into(),
                ));
            }
            if lambda_scale.windows(2).any(|w| w[0] < w[1]) {
                return Err(Error::Validation("lambda_scale must be non-increasing".into()));
            }
            if !(*sigma2 > 0.0) {
                return Err(Error::range("sigma2", *sigma2, "> 0"));
            }
            if *signal == 0 || !signal_value.is_finite() || *signal_value == 0.0 {
                return Err(Error::Validation("need a nonzero signal".into()));
            }
        }
        Ok(())
    }
}

/// Orthonormalized cosine columns `k = 1..=d`; every entry is at most
/// `√(2/p)` in magnitude.
pub fn delocalized_basis(p: usize, d: usize) -> Result<DMatrix<f64>> {
    if d == 0 || d >= p {
        return Err(Error::range("d", d, format!("1..{p}")));
    }
    let pf = p as f64;
    let raw = DMatrix::from_fn(p, d, |j, k| {
        (std::f64::consts::PI * (j as f64 + 0.5) * (k + 1) as f64 / pf).cos()
    });
    let qr = raw.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..d {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    normalize_signs(&mut q);
    Ok(q)
}

/// `Σ^{1/2} v` for a spiked model.
fn spiked_sqrt_apply(m: &SpikedCovModel, v: &DVector<f64>) -> DVector<f64> {
    let sigma = m.sigma2_hat().sqrt();
    let u = m.u_hat();
    let proj = u.tr_mul(v);
    let scale = DVector::from_iterator(
        m.d(),
        m.lambda_hat().iter().map(|l| (l + m.sigma2_hat()).sqrt() - sigma),
    );
    v * sigma + u * proj.component_mul(&scale)
}

fn delocalized_population(
    p: usize,
    lambda_scale: &[f64],
    sigma2: f64,
    signal: usize,
    signal_value: f64,
    coherence_cap: f64,
) -> Result<Population> {
    let d = lambda_scale.len();
    let u = delocalized_basis(p, d)?;
    let coherence = two_to_inf_norm(&u);
    let cap = coherence_cap * (d as f64 / p as f64).sqrt();
    if coherence > cap {
        return Err(Error::Domain(format!(
            "basis coherence {coherence:.4} exceeds cap {cap:.4}"
        )));
    }
    let lambda = DVector::from_iterator(d, lambda_scale.iter().map(|s| s * p as f64));
    let loadings = &u * DMatrix::from_diagonal(&lambda.map(f64::sqrt));
    let spiked = SpikedCovModel::from_parts(u, lambda, sigma2)?;
    let mut zeta = DVector::zeros(p);
    zeta.rows_mut(0, signal.min(p)).fill(signal_value);
    let delta = spiked_sqrt_apply(&spiked, &zeta);
    let factor = CovFactor::LowRank {
        loadings,
        noise_sd: sigma2.sqrt(),
    };
    Population::new(DVector::zeros(p), delta, factor, spiked)
}

fn build_population(cfg: &DiagnosticsConfig, p: usize, seed: u64) -> Result<Population> {
    match &cfg.population {
        DiagPopulation::Delocalized {
            lambda_scale,
            sigma2,
            signal,
            signal_value,
        } => delocalized_population(
            p,
            lambda_scale,
            *sigma2,
            *signal,
            *signal_value,
            cfg.coherence_cap,
        ),
        DiagPopulation::Sim { model } => {
            let spec = SimSpec {
                model: *model,
                p,
                n_train: 2,
                n_test: 1,
            };
            spec.population(&mut stream_rng(seed, 1))
        }
    }
}

/// Per-replicate measurements shared by all rate checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateDiag {
    /// `‖ÛΞ − U‖_{2→∞}` after Procrustes alignment.
    pub u_aligned: f64,
    /// `‖Û − U‖_{2→∞}` with both bases under the common sign convention.
    pub u_raw: f64,
    pub zeta_inf: f64,
    /// Whether hard thresholding returned exactly the support of `ζ`.
    pub exact_recovery: bool,
}

/// Measures one fit against its population. `stats` may come from data or be
/// injected directly.
pub fn measure(population: &Population, stats: &PooledStats, c: f64, alpha: f64) -> Result<ReplicateDiag> {
    measure_with(population, stats, c, alpha, false)
}

fn measure_with(
    population: &Population,
    stats: &PooledStats,
    c: f64,
    alpha: f64,
    identity_whitener: bool,
) -> Result<ReplicateDiag> {
    let truth = population.spiked();
    let model = fit_spiked(stats, truth.d())?;
    let mut u = truth.u_hat().clone();
    normalize_signs(&mut u);
    let uhat = model.u_hat();
    let xi = procrustes_align(uhat, &u)?;
    let u_aligned = two_to_inf_norm(&(uhat * xi - &u));
    let u_raw = two_to_inf_norm(&(uhat - &u));

    let means = stats.class_means();
    let diff = &means[1] - &means[0];
    let zeta_hat = if identity_whitener {
        diff
    } else {
        WhiteningOperator::new(model).whiten(&diff)?
    };
    let zeta = population.zeta();
    let zeta_inf = (&zeta_hat - &zeta).amax();
    let exact_recovery = match hard_threshold(&zeta_hat, stats.n(), population.p(), c, alpha) {
        Ok((sel, _)) => sel == population.true_support(),
        Err(Error::EmptySelection(_)) => false,
        Err(e) => return Err(e),
    };
    Ok(ReplicateDiag {
        u_aligned,
        u_raw,
        zeta_inf,
        exact_recovery,
    })
}

fn replicate(cfg: &DiagnosticsConfig, n: usize, p: usize, seed: u64) -> Result<ReplicateDiag> {
    let population = build_population(cfg, p, seed)?;
    let n1 = n / 2;
    let n2 = n - n1;
    let mut rng = stream_rng(seed, 0);
    let x = population.sample(n1, n2, &mut rng)?;
    let labels = (0..n)
        .map(|i| if i < n1 { "1" } else { "2" }.to_string())
        .collect();
    let train = LabeledDataset::new(x, labels)?;
    measure_with(
        &population,
        &pooled_covariance(&train)?,
        cfg.threshold_c,
        cfg.threshold_alpha,
        cfg.identity_whitener,
    )
}

/// All replicates of every cell, in grid then replicate order.
pub fn run_cells(cfg: &DiagnosticsConfig) -> Result<Vec<Vec<ReplicateDiag>>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.grid.len())
        .flat_map(|c| (0..cfg.reps).map(move |r| (c, r)))
        .collect();
    let flat: Vec<ReplicateDiag> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (n, p) = cfg.grid[c];
            let seed = derive_seed(derive_seed(cfg.seed, c as u64), r as u64);
            replicate(cfg, n, p, seed)
        })
        .collect::<Result<_>>()?;
    Ok(flat.chunks(cfg.reps).map(<[_]>::to_vec).collect())
}

/// One line of a rate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub p: usize,
    pub metric: String,
    pub mean: f64,
    pub q95: Option<f64>,
    pub ratio_to_bound: Option<f64>,
}

/// Linearly interpolated quantile of a non-empty sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn rate_row(n: usize, p: usize, metric: &str, values: &[f64], bound: f64) -> RateRow {
    let m = mean(values);
    RateRow {
        n,
        p,
        metric: metric.to_string(),
        mean: m,
        q95: Some(quantile(values, 0.95)),
        ratio_to_bound: Some(m / bound),
    }
}

/// `max{r(Σ), ln p}` for the population at dimension `p`.
fn rank_term(cfg: &DiagnosticsConfig, p: usize) -> Result<f64> {
    let pop = build_population(cfg, p, cfg.seed)?;
    let s = pop.spiked();
    let top = s.lambda_hat().max() + s.sigma2_hat();
    let trace = s.lambda_hat().sum() + p as f64 * s.sigma2_hat();
    Ok((trace / top).max((p as f64).ln()))
}

fn theorem1_rows(cfg: &DiagnosticsConfig, cells: &[Vec<ReplicateDiag>]) -> Result<Vec<RateRow>> {
    let mut rows = Vec::new();
    for (&(n, p), reps) in cfg.grid.iter().zip(cells) {
        let bound = (rank_term(cfg, p)? / (n as f64 * p as f64)).sqrt();
        let aligned: Vec<f64> = reps.iter().map(|r| r.u_aligned).collect();
        let raw: Vec<f64> = reps.iter().map(|r| r.u_raw).collect();
        rows.push(rate_row(n, p, "u_2inf_aligned", &aligned, bound));
        rows.push(rate_row(n, p, "u_2inf_raw", &raw, bound));
    }
    Ok(rows)
}

fn theorem2_rows(cfg: &DiagnosticsConfig, cells: &[Vec<ReplicateDiag>]) -> Vec<RateRow> {
    cfg.grid
        .iter()
        .zip(cells)
        .map(|(&(n, p), reps)| {
            let bound = ((p as f64).ln() / n as f64).sqrt();
            let errs: Vec<f64> = reps.iter().map(|r| r.zeta_inf).collect();
            rate_row(n, p, "zeta_inf", &errs, bound)
        })
        .collect()
}

fn selection_rows(cfg: &DiagnosticsConfig, cells: &[Vec<ReplicateDiag>]) -> Vec<RateRow> {
    cfg.grid
        .iter()
        .zip(cells)
        .map(|(&(n, p), reps)| {
            let hits = reps.iter().filter(|r| r.exact_recovery).count();
            RateRow {
                n,
                p,
                metric: "exact_recovery".to_string(),
                mean: hits as f64 / reps.len() as f64,
                q95: None,
                ratio_to_bound: None,
            }
        })
        .collect()
}

/// Mean aligned and raw `2→∞` eigenvector errors per cell; the ratio column
/// divides by `√(max{r(Σ), ln p}/(np))`.
pub fn rate_check_theorem1(cfg: &DiagnosticsConfig) -> Result<Vec<RateRow>> {
    theorem1_rows(cfg, &run_cells(cfg)?)
}

/// Mean and 95% quantile of `‖ζ̂ − ζ‖_∞`; the ratio column divides by `√(ln p / n)`.
pub fn rate_check_theorem2(cfg: &DiagnosticsConfig) -> Result<Vec<RateRow>> {
    Ok(theorem2_rows(cfg, &run_cells(cfg)?))
}

/// Fraction of replicates whose thresholded set equals the support of `ζ`.
pub fn selection_consistency_check(cfg: &DiagnosticsConfig) -> Result<Vec<RateRow>> {
    Ok(selection_rows(cfg, &run_cells(cfg)?))
}

/// All three tables from one pass over the grid.
pub fn run_all(cfg: &DiagnosticsConfig) -> Result<Vec<RateRow>> {
    rows_from_cells(cfg, &run_cells(cfg)?)
}

/// Eigenvector rows, then whitened-direction rows, then selection rows.
pub fn rows_from_cells(cfg: &DiagnosticsConfig, cells: &[Vec<ReplicateDiag>]) -> Result<Vec<RateRow>> {
    let mut rows = theorem1_rows(cfg, cells)?;
    rows.extend(theorem2_rows(cfg, cells));
    rows.extend(selection_rows(cfg, cells));
    Ok(rows)
}

/// `‖Ŵ Σ Ŵ − I‖₂` for a whitener and a population covariance.
pub fn whitening_identity_deviation<W: Whiten + ?Sized>(w: &W, sigma: &SymmetricMatrix) -> Result<f64> {
    let p = sigma.dim();
    if w.dim() != p {
        return Err(Error::Validation(format!(
            "whitener has dimension {}, covariance {p}",
            w.dim()
        )));
    }
    // Ŵ is symmetric, so rows of ŴΣ whitened again give ŴΣŴ.
    let ws = w.whiten_rows(sigma.as_matrix())?;
    let wsw = w.whiten_rows(&ws.transpose())?;
    Ok(spectral_norm(&(wsw - DMatrix::identity(p, p))))
}

/// Deviation of the fitted whitener from the population one, one value per
/// replicate, with `n = n_factor · p` training rows split over two classes.
pub fn whitening_identity_check(
    population: &DiagPopulation,
    p: usize,
    n_factor: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let cfg = DiagnosticsConfig {
        grid: vec![(n_factor * p, p)],
        reps: reps.max(10),
        population: population.clone(),
        seed,
        ..DiagnosticsConfig::default()
    };
    cfg.validate()?;
    if reps == 0 {
        return Err(Error::range("reps", reps, "reps >= 1"));
    }
    let n = n_factor * p;
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(seed, r as u64);
            let pop = build_population(&cfg, p, rep_seed)?;
            let n1 = n / 2;
            let x = pop.sample(n1, n - n1, &mut stream_rng(rep_seed, 0))?;
            let labels = (0..n)
                .map(|i| if i < n1 { "1" } else { "2" }.to_string())
                .collect();
            let stats = pooled_covariance(&LabeledDataset::new(x, labels)?)?;
            let w = WhiteningOperator::new(fit_spiked(&stats, pop.spiked().d())?);
            whitening_identity_deviation(&w, &pop.sigma())
        })
        .collect()
}

/// Relative half-width of the accepted band around `√(n_from / n_to)`.
pub const DEFAULT_DECAY_TOLERANCE: f64 = 0.2;

/// Comparison of one rate metric between consecutive `n` at fixed `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCheck {
    pub metric: String,
    pub p: usize,
    pub n_from: usize,
    pub n_to: usize,
    pub factor: f64,
    pub expected: f64,
    pub lower: f64,
    pub upper: f64,
    pub passed: bool,
}

fn cells_by_p<'a>(rows: &'a [RateRow], metric: &str) -> Vec<(usize, Vec<&'a RateRow>)> {
    let mut ps: Vec<usize> = rows.iter().filter(|r| r.metric == metric).map(|r| r.p).collect();
    ps.sort_unstable();
    ps.dedup();
    ps.into_iter()
        .map(|p| {
            let mut cells: Vec<&RateRow> = rows.iter().filter(|r| r.metric == metric && r.p == p).collect();
            cells.sort_by_key(|r| r.n);
            (p, cells)
        })
        .collect()
}

/// Checks that `metric` decays like `n^{-1/2}` between consecutive grid cells:
/// the observed factor must lie within `tolerance` (relative) of `√(n_from/n_to)`.
pub fn decay_checks(rows: &[RateRow], metric: &str, tolerance: f64) -> Vec<DecayCheck> {
    let mut out = Vec::new();
    for (p, cells) in cells_by_p(rows, metric) {
        for w in cells.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.n == b.n {
                continue;
            }
            let expected = (a.n as f64 / b.n as f64).sqrt();
            let factor = b.mean / a.mean;
            let lower = expected * (1.0 - tolerance);
            let upper = expected * (1.0 + tolerance);
            out.push(DecayCheck {
                metric: metric.to_string(),
                p,
                n_from: a.n,
                n_to: b.n,
                factor,
                expected,
                lower,
                upper,
                passed: factor >= lower && factor <= upper,
            });
        }
    }
    out
}

/// Checks that the exact-recovery fraction does not drop as `n` grows by more
/// than two binomial standard deviations of the difference.
pub fn recovery_checks(rows: &[RateRow], reps: usize) -> Vec<DecayCheck> {
    let mut out = Vec::new();
    for (p, cells) in cells_by_p(rows, "exact_recovery") {
        for w in cells.windows(2) {
            let (a, b) = (w[0].mean, w[1].mean);
            let sd = ((a * (1.0 - a) + b * (1.0 - b)) / reps as f64).sqrt();
            let lower = a - 2.0 * sd;
            out.push(DecayCheck {
                metric: "exact_recovery".to_string(),
                p,
                n_from: w[0].n,
                n_to: w[1].n,
                factor: b,
                expected: a,
                lower,
                upper: 1.0,
                passed: b >= lower,
            });
        }
    }
    out
}

pub const RATE_COLUMNS: [&str; 6] = ["n", "p", "metric", "mean", "q95", "ratio_to_bound"];

pub fn write_rates_csv<W: Write>(rows: &[RateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RATE_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.p.to_string(),
            r.metric.clone(),
            r.mean.to_string(),
            opt(r.q95),
            opt(r.ratio_to_bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}
