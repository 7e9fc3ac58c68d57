//! Cross-validation: stratified folds, the sparsity level `s` of PCLDA and the
//! NSC shrinkage.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classify::nsc::NscStats;
use crate::classify::pclda::{fit_pclda, rank_by_magnitude, BinaryDirection, PcldaModel, Selection};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::whitening::{choose_d_for, pooled_covariance, Whiten, DEFAULT_VARIANCE_FRACTION};

pub const DEFAULT_FOLDS: usize = 5;
/// Candidate sizes `1..=30`.
pub const DEFAULT_MAX_S: usize = 30;
pub const DEFAULT_DELTA_GRID: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvPlan {
    pub k: usize,
    pub fold_of: Vec<usize>,
    pub seed: u64,
}

impl CvPlan {
    /// (training rows, validation rows) of fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let (val, train): (Vec<usize>, Vec<usize>) =
            (0..self.fold_of.len()).partition(|&i| self.fold_of[i] == f);
        (train, val)
    }
}

/// Stratified `k`-fold plan over class ordinals. Each class is shuffled on its
/// own stream and dealt round-robin, the dealing position carrying over from
/// one class to the next so fold totals stay balanced too.
pub fn kfold_stratified(class_of: &[usize], k: usize, seed: u64) -> Result<CvPlan> {
    if k < 2 {
        return Err(Error::range("folds", k, "k >= 2"));
    }
    let num_classes = class_of.iter().max().map_or(0, |m| m + 1);
    let mut fold_of = vec![0; class_of.len()];
    let mut offset = 0;
    for c in 0..num_classes {
        let mut rows: Vec<usize> = (0..class_of.len()).filter(|&i| class_of[i] == c).collect();
        if rows.len() < k {
            return Err(Error::InsufficientData(format!(
                "class {c} has {} samples, fewer than {k} folds",
                rows.len()
            )));
        }
        rows.shuffle(&mut stream_rng(seed, c as u64));
        for (r, &i) in rows.iter().enumerate() {
            fold_of[i] = (offset + r) % k;
        }
        offset = (offset + rows.len()) % k;
    }
    Ok(CvPlan { k, fold_of, seed })
}

/// Mean validation error per candidate; `None` marks a failed candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult<T> {
    pub best: T,
    pub candidates: Vec<T>,
    pub errors: Vec<Option<f64>>,
}

/// How `d` is set inside each training fold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FoldD {
    /// The same `d` everywhere, lowered only when a fold's `Σ̂` cannot support it.
    Fixed(usize),
    /// Re-run the variance-fraction rule in each fold.
    Refit(f64),
}

fn validate_candidates(candidates: &[usize], p: usize) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::Validation("candidate set is empty".into()));
    }
    if let Some(&bad) = candidates.iter().find(|&&s| s == 0 || s > p) {
        return Err(Error::range("s", bad, format!("1..={p}")));
    }
    Ok(())
}

/// Error counts of every candidate `s` on one fold, from a single fit.
fn fold_errors_s(
    train: &LabeledDataset,
    val: &LabeledDataset,
    fold_d: FoldD,
    candidates: &[usize],
) -> Result<Vec<usize>> {
    let stats = pooled_covariance(train)?;
    let d = match fold_d {
        FoldD::Fixed(d) => d.min(stats.rank_bound().saturating_sub(1)).max(1),
        FoldD::Refit(frac) => choose_d_for(&stats, frac)?,
    };
    let dir = BinaryDirection::from_stats(&stats, d)?;
    let order = rank_by_magnitude(&dir.zeta_hat);
    let smax = *candidates.iter().max().expect("non-empty");
    let zw = dir.whitener.whiten_rows(val.features())?;
    let mut errors = vec![0usize; candidates.len()];
    let mut prefix = vec![0.0; smax + 1];
    for i in 0..val.n() {
        for (r, &j) in order.iter().take(smax).enumerate() {
            prefix[r + 1] = prefix[r] + dir.zeta_hat[j] * (zw[(i, j)] - dir.midpoint[j]);
        }
        let truth = val.class_ordinals()[i];
        for (e, &s) in errors.iter_mut().zip(candidates) {
            let pred = usize::from(prefix[s] > dir.prior_offset);
            *e += usize::from(pred != truth);
        }
    }
    Ok(errors)
}

fn fold_subsets(train: &LabeledDataset, plan: &CvPlan, f: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    let (tr, va) = plan.split(f);
    Ok((train.subset(&tr)?, train.subset(&va)?))
}

/// Picks the candidate with the lowest mean fold error; `prefer_later` breaks
/// ties toward the last candidate instead of the first.
fn pick<T: Copy>(candidates: &[T], errors: &[Option<f64>], prefer_later: bool) -> Result<T> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in errors.iter().enumerate() {
        if let Some(e) = *e {
            let better = match best {
                None => true,
                Some((_, b)) => e < b || (prefer_later && e == b),
            };
            if better {
                best = Some((i, e));
            }
        }
    }
    best.map(|(i, _)| candidates[i])
        .ok_or_else(|| Error::Tuning("every candidate failed in cross-validation".into()))
}

/// Cross-validates `s` for binary PCLDA with `d` fixed; ties go to the smaller `s`.
pub fn cv_select_s(
    train: &LabeledDataset,
    d: usize,
    candidates: &[usize],
    k: usize,
    seed: u64,
) -> Result<CvResult<usize>> {
    cv_select_s_with(train, FoldD::Fixed(d), candidates, k, seed)
}

pub fn cv_select_s_with(
    train: &LabeledDataset,
    fold_d: FoldD,
    candidates: &[usize],
    k: usize,
    seed: u64,
) -> Result<CvResult<usize>> {
    validate_candidates(candidates, train.p())?;
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let plan = kfold_stratified(train.class_ordinals(), k, seed)?;
    let mut rates = vec![Some(0.0); sorted.len()];
    for f in 0..k {
        let fold = fold_subsets(train, &plan, f)
            .and_then(|(tr, va)| Ok((fold_errors_s(&tr, &va, fold_d, &sorted)?, va.n())));
        match fold {
            Ok((errs, nv)) => {
                for (r, e) in rates.iter_mut().zip(errs) {
                    if let Some(acc) = r {
                        *acc += e as f64 / nv as f64;
                    }
                }
            }
            // One fit serves every candidate, so a failed fold fails them all.
            Err(_) => rates.iter_mut().for_each(|r| *r = None),
        }
    }
    let errors: Vec<Option<f64>> = rates.into_iter().map(|r| r.map(|v| v / k as f64)).collect();
    let best = pick(&sorted, &errors, false)?;
    Ok(CvResult {
        best,
        candidates: sorted,
        errors,
    })
}

/// Evenly spaced shrinkage grid from 0 to the largest centroid statistic.
pub fn default_delta_grid(train: &LabeledDataset, len: usize) -> Result<Vec<f64>> {
    let top = NscStats::new(train)?.max_statistic();
    let len = len.max(2);
    Ok((0..len).map(|i| top * i as f64 / (len - 1) as f64).collect())
}

/// Cross-validates the NSC shrinkage; ties go to the larger (sparser) value.
pub fn cv_select_delta(train: &LabeledDataset, deltas: &[f64], k: usize, seed: u64) -> Result<CvResult<f64>> {
    if deltas.is_empty() {
        return Err(Error::Validation("delta grid is empty".into()));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let plan = kfold_stratified(train.class_ordinals(), k, seed)?;
    let mut rates = vec![Some(0.0); sorted.len()];
    for f in 0..k {
        let stats = fold_subsets(train, &plan, f).and_then(|(tr, va)| Ok((NscStats::new(&tr)?, va)));
        let (stats, val) = match stats {
            Ok(v) => v,
            Err(_) => {
                rates.iter_mut().for_each(|r| *r = None);
                continue;
            }
        };
        for (r, &delta) in rates.iter_mut().zip(&sorted) {
            let res = stats.shrink(delta).and_then(|m| m.predict_rows(val.features()));
            match (r.as_mut(), res) {
                (Some(acc), Ok(pred)) => {
                    let wrong = pred
                        .iter()
                        .zip(val.class_ordinals())
                        .filter(|(a, b)| a != b)
                        .count();
                    *acc += wrong as f64 / val.n() as f64;
                }
                _ => *r = None,
            }
        }
    }
    let errors: Vec<Option<f64>> = rates.into_iter().map(|r| r.map(|v| v / k as f64)).collect();
    let best = pick(&sorted, &errors, true)?;
    Ok(CvResult {
        best,
        candidates: sorted,
        errors,
    })
}

/// How the number of spikes is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum DPolicy {
    Fixed {
        d: usize,
    },
    /// Variance-fraction rule, capped so that `σ̂² > 0`.
    Fraction {
        frac: f64,
    },
}

impl Default for DPolicy {
    fn default() -> Self {
        DPolicy::Fraction {
            frac: DEFAULT_VARIANCE_FRACTION,
        }
    }
}

/// How the selected set is formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SPolicy {
    Fixed {
        s: usize,
    },
    /// `s` chosen from `1..=max_s` by stratified CV.
    Cv {
        max_s: usize,
        folds: usize,
    },
    Threshold {
        c: f64,
        alpha: f64,
        fallback: bool,
    },
}

impl Default for SPolicy {
    fn default() -> Self {
        SPolicy::Cv {
            max_s: DEFAULT_MAX_S,
            folds: DEFAULT_FOLDS,
        }
    }
}

/// A PCLDA fit together with the tuning decisions that produced it.
#[derive(Debug, Clone)]
pub struct TunedPclda {
    pub model: PcldaModel,
    pub d: usize,
    pub cv: Option<CvResult<usize>>,
}

/// Resolves `d` on the full training set, tunes `s` if asked, then fits.
pub fn tune_and_fit(
    train: &LabeledDataset,
    d_policy: DPolicy,
    s_policy: SPolicy,
    seed: u64,
) -> Result<TunedPclda> {
    let d = match d_policy {
        DPolicy::Fixed { d } => d,
        DPolicy::Fraction { frac } => choose_d_for(&pooled_covariance(train)?, frac)?,
    };
    let (selection, cv) = match s_policy {
        SPolicy::Fixed { s } => (Selection::TopS { s }, None),
        SPolicy::Threshold { c, alpha, fallback } => (Selection::Threshold { c, alpha, fallback }, None),
        SPolicy::Cv { max_s, folds } => {
            let cands: Vec<usize> = (1..=max_s.min(train.p())).collect();
            let cv = cv_select_s(train, d, &cands, folds, seed)?;
            (Selection::TopS { s: cv.best }, Some(cv))
        }
    };
    Ok(TunedPclda {
        model: fit_pclda(train, d, selection)?,
        d,
        cv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn labels(n1: usize, n2: usize) -> Vec<usize> {
        (0..n1 + n2).map(|i| usize::from(i >= n1)).collect()
    }

    fn per_class_fold_sizes(plan: &CvPlan, class_of: &[usize], c: usize) -> Vec<usize> {
        let mut sizes = vec![0; plan.k];
        for (i, &f) in plan.fold_of.iter().enumerate() {
            if class_of[i] == c {
                sizes[f] += 1;
            }
        }
        sizes
    }

    #[test]
    fn balanced_folds() {
        let y = labels(10, 10);
        let plan = kfold_stratified(&y, 5, 1).unwrap();
        for c in 0..2 {
            assert_eq!(per_class_fold_sizes(&plan, &y, c), vec![2; 5]);
        }
        assert_eq!(plan, kfold_stratified(&y, 5, 1).unwrap());
        assert_ne!(plan.fold_of, kfold_stratified(&y, 5, 2).unwrap().fold_of);
    }

    #[test]
    fn uneven_classes_differ_by_at_most_one() {
        let y = labels(7, 13);
        let plan = kfold_stratified(&y, 5, 3).unwrap();
        for c in 0..2 {
            let s = per_class_fold_sizes(&plan, &y, c);
            assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1, "{s:?}");
        }
        let totals: Vec<usize> = (0..5)
            .map(|f| plan.fold_of.iter().filter(|&&g| g == f).count())
            .collect();
        assert!(totals.iter().all(|&t| t == 4));
    }

    #[test]
    fn small_class_is_rejected() {
        assert!(matches!(
            kfold_stratified(&labels(3, 10), 5, 0),
            Err(Error::InsufficientData(_))
        ));
        assert!(kfold_stratified(&labels(3, 10), 1, 0).is_err());
    }

    fn one_informative(n: usize, p: usize, gap: f64, seed: u64) -> LabeledDataset {
        let mut rng = stream_rng(seed, 0);
        let x = DMatrix::from_fn(2 * n, p, |i, j| {
            let e: f64 = rng.sample(StandardNormal);
            if i >= n && j == 0 {
                e + gap
            } else {
                e
            }
        });
        LabeledDataset::new(x, labels(n, n).iter().map(|c| c.to_string()).collect()).unwrap()
    }

    #[test]
    fn singleton_candidate() {
        let ds = one_informative(20, 6, 2.0, 1);
        let r = cv_select_s(&ds, 1, &[3], 5, 0).unwrap();
        assert_eq!(r.best, 3);
        assert_eq!(r.errors.len(), 1);
    }

    #[test]
    fn separable_data_picks_one() {
        let ds = one_informative(30, 8, 20.0, 2);
        let r = cv_select_s(&ds, 1, &[1, 2, 3, 4, 5], 5, 7).unwrap();
        assert_eq!(r.errors[0], Some(0.0));
        assert_eq!(r.best, 1);
    }

    #[test]
    fn prefix_scores_match_refit_predictions() {
        // Each candidate's CV error must equal the error of the fitted rule per fold.
        let ds = one_informative(25, 10, 1.0, 3);
        let cands = [1, 2, 4, 10];
        let r = cv_select_s(&ds, 2, &cands, 5, 9).unwrap();
        let plan = kfold_stratified(ds.class_ordinals(), 5, 9).unwrap();
        for (ci, &s) in cands.iter().enumerate() {
            let mut total = 0.0;
            for f in 0..5 {
                let (tr, va) = fold_subsets(&ds, &plan, f).unwrap();
                let m = fit_pclda(&tr, 2, Selection::TopS { s }).unwrap();
                let pred = m.predict_rows(va.features()).unwrap();
                let wrong = pred
                    .iter()
                    .zip(va.class_ordinals())
                    .filter(|(a, b)| a != b)
                    .count();
                total += wrong as f64 / va.n() as f64;
            }
            let mean = total / 5.0;
            assert!((r.errors[ci].unwrap() - mean).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&mean));
        }
    }

    #[test]
    fn duplicated_feature_ties_to_smaller_s() {
        // Columns 0 and 1 identical: s = 1 and s = 2 give scores that differ only
        // by a factor, so their CV errors tie and the smaller s must win.
        let base = one_informative(20, 4, 3.0, 4);
        let x = base.features();
        let dup = DMatrix::from_fn(
            x.nrows(),
            5,
            |i, j| if j == 0 { x[(i, 0)] } else { x[(i, j - 1)] },
        );
        let ds = LabeledDataset::new(dup, base.labels().to_vec()).unwrap();
        let r = cv_select_s(&ds, 1, &[2, 1], 5, 0).unwrap();
        if r.errors[0] == r.errors[1] {
            assert_eq!(r.best, 1);
        }
        assert_eq!(r.candidates, vec![1, 2]);
    }

    #[test]
    fn pick_tie_rules_and_failures() {
        let errs = [Some(0.2), Some(0.1), Some(0.1), None];
        assert_eq!(pick(&[1, 2, 3, 4], &errs, false).unwrap(), 2);
        assert_eq!(pick(&[1, 2, 3, 4], &errs, true).unwrap(), 3);
        assert!(matches!(
            pick(&[1, 2], &[None, None], false),
            Err(Error::Tuning(_))
        ));
    }

    #[test]
    fn bad_candidates_rejected() {
        let ds = one_informative(10, 3, 1.0, 5);
        assert!(cv_select_s(&ds, 1, &[], 5, 0).is_err());
        assert!(cv_select_s(&ds, 1, &[4], 5, 0).is_err());
        assert!(cv_select_s(&ds, 1, &[0], 5, 0).is_err());
    }

    #[test]
    fn deterministic_and_refit_variant_runs() {
        let ds = one_informative(25, 12, 1.5, 6);
        let a = cv_select_s(&ds, 2, &[1, 2, 3], 5, 11).unwrap();
        let b = cv_select_s(&ds, 2, &[1, 2, 3], 5, 11).unwrap();
        assert_eq!(a, b);
        let r = cv_select_s_with(&ds, FoldD::Refit(0.9), &[1, 2, 3], 5, 11).unwrap();
        assert!(r.errors.iter().all(|e| e.is_some()));
    }

    #[test]
    fn delta_cv_on_sparse_signal() {
        let ds = one_informative(30, 10, 3.0, 7);
        let grid = default_delta_grid(&ds, 10).unwrap();
        let r = cv_select_delta(&ds, &grid, 5, 0).unwrap();
        assert!(r.best > 0.0 && r.best < *grid.last().unwrap());
        assert!(r.errors.iter().flatten().all(|e| (0.0..=1.0).contains(e)));
    }
}
