//! Monte Carlo runs. Replicate `r` draws everything from the seed
//! `derive_seed(base_seed, r)`, so results do not depend on scheduling.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, strong_weak_counts, MetricsRow, Summary};
use super::models::{Population, SimSpec, SIGNAL_SIZE};
use crate::classify::nsc::NscStats;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};
use crate::tuning::{cv_select_delta, tune_and_fit, DPolicy, SPolicy, DEFAULT_DELTA_GRID, DEFAULT_FOLDS};

/// Share of replicates allowed to fail before the run is rejected.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

/// Classifier evaluated in each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Fisher's rule with the true parameters and equal priors.
    Oracle,
    Pclda {
        d: DPolicy,
        s: SPolicy,
    },
    /// Nearest shrunken centroids, shrinkage tuned over an even grid.
    Nsc {
        grid: usize,
        folds: usize,
    },
}

impl Method {
    /// PCLDA with the 90% variance rule and `s ∈ 1..=30` by five-fold CV.
    pub fn pclda() -> Self {
        Method::Pclda {
            d: DPolicy::default(),
            s: SPolicy::default(),
        }
    }

    pub fn nsc() -> Self {
        Method::Nsc {
            grid: DEFAULT_DELTA_GRID,
            folds: DEFAULT_FOLDS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Pclda { .. } => "pclda",
            Method::Nsc { .. } => "nsc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOutput {
    pub spec: SimSpec,
    pub method: Method,
    pub base_seed: u64,
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<ReplicateFailure>,
    pub summary: Summary,
}

fn labeled(x: DMatrix<f64>, n1: usize, n2: usize) -> Result<LabeledDataset> {
    let labels = (0..n1 + n2)
        .map(|i| if i < n1 { "1" } else { "2" }.to_string())
        .collect();
    LabeledDataset::new(x, labels)
}

/// Training and test sets of one replicate, with the population they came from.
pub struct ReplicateData {
    pub population: Population,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

pub fn replicate_data(spec: &SimSpec, seed: u64) -> Result<ReplicateData> {
    let mut rng = stream_rng(seed, 0);
    let population = spec.population(&mut rng)?;
    let n = spec.n_train;
    let train = labeled(population.sample(n, n, &mut rng)?, n, n)?;
    let m = spec.n_test;
    let test = labeled(population.sample(m, m, &mut rng)?, m, m)?;
    Ok(ReplicateData {
        population,
        train,
        test,
    })
}

/// Runs one replicate from its own seed.
pub fn run_replicate(spec: &SimSpec, method: &Method, seed: u64) -> Result<MetricsRow> {
    let data = replicate_data(spec, seed)?;
    let truth = data.test.class_ordinals();
    let true_support = data.population.true_support();
    let (pred, selected) = match *method {
        Method::Oracle => {
            let rule = data.population.oracle(0.5)?;
            (rule.predict_rows(data.test.features())?, true_support.clone())
        }
        Method::Pclda { d, s } => {
            let tuned = tune_and_fit(&data.train, d, s, seed)?;
            let pred = tuned.model.predict_rows(data.test.features())?;
            (pred, tuned.model.selected().to_vec())
        }
        Method::Nsc { grid, folds } => {
            let stats = NscStats::new(&data.train)?;
            let top = stats.max_statistic();
            let len = grid.max(2);
            let deltas: Vec<f64> = (0..len).map(|i| top * i as f64 / (len - 1) as f64).collect();
            let cv = cv_select_delta(&data.train, &deltas, folds, seed)?;
            let model = stats.shrink(cv.best)?;
            (
                model.predict_rows(data.test.features())?,
                model.active_features().to_vec(),
            )
        }
    };
    let rates = metrics(&pred, truth)?;
    let strong: Vec<usize> = (0..SIGNAL_SIZE).collect();
    let (strong_hits, weak_hits) = strong_weak_counts(&selected, &strong);
    Ok(MetricsRow {
        error_rate: rates.error,
        fpr: rates.fpr,
        fnr: rates.fnr,
        model_size: selected.len(),
        strong_hits,
        weak_hits,
        selected_equals_true: selected == true_support,
        seed,
    })
}

/// Runs `reps` replicates in parallel on the current rayon pool, reducing in
/// replicate order. Fails if more than 10% of replicates fail.
pub fn run_mc(spec: &SimSpec, method: &Method, reps: usize, base_seed: u64) -> Result<McOutput> {
    if reps == 0 {
        return Err(Error::range("reps", reps, "reps >= 1"));
    }
    spec.validate()?;
    let results: Vec<(usize, u64, Result<MetricsRow>)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(base_seed, r as u64);
            (r, seed, run_replicate(spec, method, seed))
        })
        .collect();
    let mut rows = Vec::with_capacity(reps);
    let mut failures = Vec::new();
    for (replicate, seed, res) in results {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(ReplicateFailure {
                replicate,
                seed,
                message: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * reps as f64 {
        return Err(Error::Run(format!(
            "{} of {reps} replicates failed; first: {}",
            failures.len(),
            failures[0].message
        )));
    }
    let summary = Summary::of(&rows, failures.len());
    Ok(McOutput {
        spec: *spec,
        method: *method,
        base_seed,
        rows,
        failures,
        summary,
    })
}

/// Condition numbers of freshly drawn populations, one per replicate.
pub fn condition_numbers(spec: &SimSpec, reps: usize, base_seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(derive_seed(base_seed, r as u64), 0);
            Ok(spec.population(&mut rng)?.condition_number())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::models::{CovModel, EntryDist};

    fn small(model: CovModel) -> SimSpec {
        SimSpec {
            model,
            p: 60,
            n_train: 40,
            n_test: 50,
        }
    }

    #[test]
    fn single_replicate_is_reproducible() {
        let spec = small(CovModel::EqualCorr { rho: 0.5 });
        let a = run_mc(&spec, &Method::pclda(), 1, 7).unwrap();
        let b = run_mc(&spec, &Method::pclda(), 1, 7).unwrap();
        assert_eq!(a, b);
        let c = run_mc(&spec, &Method::pclda(), 1, 8).unwrap();
        assert_ne!(a.rows[0].seed, c.rows[0].seed);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let spec = small(CovModel::BlockDiag { rho: 0.5, block: 20 });
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_mc(&spec, &Method::pclda(), 6, 3).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn metric_identities_hold_per_replicate() {
        let spec = small(CovModel::RandomCorr {
            rank: 5,
            dist: EntryDist::Normal,
        });
        for method in [Method::Oracle, Method::pclda(), Method::nsc()] {
            let out = run_mc(&spec, &method, 4, 1).unwrap();
            for r in &out.rows {
                let n = 2.0 * spec.n_test as f64;
                let fp = r.fpr.unwrap() * spec.n_test as f64;
                let fneg = r.fnr.unwrap() * spec.n_test as f64;
                assert!((r.error_rate * n - (fp + fneg)).abs() < 1e-9);
                assert_eq!(r.strong_hits + r.weak_hits, r.model_size);
                assert!(r.strong_hits <= 10);
            }
            let mean = out.rows.iter().map(|r| r.error_rate).sum::<f64>() / out.rows.len() as f64;
            assert_eq!(out.summary.error_rate.mean, mean);
        }
    }

    #[test]
    fn oracle_reports_true_support() {
        let spec = small(CovModel::BlockDiag { rho: 0.5, block: 20 });
        let out = run_mc(&spec, &Method::Oracle, 2, 0).unwrap();
        assert!(out
            .rows
            .iter()
            .all(|r| r.selected_equals_true && r.model_size == 20));
    }

    #[test]
    fn too_many_failures_is_an_error() {
        // d = 200 exceeds min(n, p) in every replicate.
        let spec = small(CovModel::EqualCorr { rho: 0.5 });
        let method = Method::Pclda {
            d: DPolicy::Fixed { d: 200 },
            s: SPolicy::Fixed { s: 5 },
        };
        assert!(matches!(run_mc(&spec, &method, 3, 0), Err(Error::Run(_))));
        assert!(run_mc(&spec, &Method::Oracle, 0, 0).is_err());
    }
}
