//! K-class PCLDA: one whitened direction per class relative to the reference
//! class (the lexicographically smallest label).

use nalgebra::{DMatrix, DVector};

use super::pclda::{apply_selection, fit_whitener, Selection};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::whitening::{pooled_covariance, Whiten, WhiteningOperator};

#[derive(Debug, Clone, PartialEq)]
pub struct KClassModel {
    whitener: WhiteningOperator,
    classes: Vec<String>,
    counts: Vec<usize>,
    whitened_means: Vec<DVector<f64>>,
    /// `ζ̂⁽ⁱ⁾ = X̃ᵢ − X̃₁` for `i ≥ 2` (index 0 holds class 2).
    directions: Vec<DVector<f64>>,
    selected: Vec<Vec<usize>>,
    midpoints: Vec<DVector<f64>>,
    /// `ln nᵢ − ln n₁` for `i ≥ 2`.
    offsets: Vec<f64>,
}

/// Fits the K-class rule. `selections` holds either one shared mode or one per
/// non-reference class.
pub fn fit_kclass(train: &LabeledDataset, d: usize, selections: &[Selection]) -> Result<KClassModel> {
    let k = train.num_classes();
    if k < 2 {
        return Err(Error::Validation(format!("need at least 2 classes, found {k}")));
    }
    if selections.len() != 1 && selections.len() != k - 1 {
        return Err(Error::Validation(format!(
            "expected 1 or {} selection modes, got {}",
            k - 1,
            selections.len()
        )));
    }
    let stats = pooled_covariance(train)?;
    let whitener = fit_whitener(&stats, d)?;
    let whitened_means = stats
        .class_means()
        .iter()
        .map(|m| whitener.whiten(m))
        .collect::<Result<Vec<_>>>()?;
    let counts = stats.counts().to_vec();
    let ref_log = (counts[0] as f64).ln();
    let mut directions = Vec::with_capacity(k - 1);
    let mut selected = Vec::with_capacity(k - 1);
    let mut midpoints = Vec::with_capacity(k - 1);
    let mut offsets = Vec::with_capacity(k - 1);
    for i in 1..k {
        let zeta = &whitened_means[i] - &whitened_means[0];
        let mode = selections[if selections.len() == 1 { 0 } else { i - 1 }];
        let (sel, _) = apply_selection(&zeta, stats.n(), mode)?;
        directions.push(zeta);
        selected.push(sel);
        midpoints.push((&whitened_means[0] + &whitened_means[i]) * 0.5);
        offsets.push((counts[i] as f64).ln() - ref_log);
    }
    Ok(KClassModel {
        whitener,
        classes: train.classes().to_vec(),
        counts,
        whitened_means,
        directions,
        selected,
        midpoints,
        offsets,
    })
}

impl KClassModel {
    pub fn whitener(&self) -> &WhiteningOperator {
        &self.whitener
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn whitened_means(&self) -> &[DVector<f64>] {
        &self.whitened_means
    }

    /// `ζ̂⁽ⁱ⁾` for classes `2..=K`.
    pub fn directions(&self) -> &[DVector<f64>] {
        &self.directions
    }

    /// `Ŝᵢ` for classes `2..=K`.
    pub fn selected(&self) -> &[Vec<usize>] {
        &self.selected
    }

    /// The union of all `Ŝᵢ`, sorted.
    pub fn selected_union(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.selected.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    fn scores_whitened(&self, zw: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.classes.len());
        out.push(0.0);
        for (i, sel) in self.selected.iter().enumerate() {
            let zeta = &self.directions[i];
            let mid = &self.midpoints[i];
            let proj: f64 = sel.iter().map(|&j| zeta[j] * (zw(j) - mid[j])).sum();
            out.push(proj + self.offsets[i]);
        }
        out
    }

    /// `D̃₁ = 0, D̃ᵢ = [Z̃ − ½(X̃ᵢ + X̃₁)]_Ŝᵢᵀ ζ̂⁽ⁱ⁾_Ŝᵢ + ln(nᵢ/n₁)`.
    pub fn scores(&self, z: &DVector<f64>) -> Result<Vec<f64>> {
        let zw = self.whitener.whiten(z)?;
        Ok(self.scores_whitened(|j| zw[j]))
    }

    pub fn predict_class(&self, z: &DVector<f64>) -> Result<usize> {
        Ok(argmax_first(&self.scores(z)?))
    }

    pub fn predict(&self, z: &DVector<f64>) -> Result<&str> {
        Ok(&self.classes[self.predict_class(z)?])
    }

    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        let zw = self.whitener.whiten_rows(x)?;
        Ok((0..zw.nrows())
            .map(|r| argmax_first(&self.scores_whitened(|j| zw[(r, j)])))
            .collect())
    }
}

/// Index of the maximum; ties to the smaller index.
pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::pclda::fit_pclda;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn mixture(means: &[Vec<f64>], n: usize, seed: u64) -> LabeledDataset {
        let p = means[0].len();
        let k = means.len();
        let mut rng = stream_rng(seed, 0);
        let x = DMatrix::from_fn(k * n, p, |i, j| {
            let e: f64 = rng.sample(StandardNormal);
            e + means[i / n][j]
        });
        let labels = (0..k * n).map(|i| format!("c{}", i / n)).collect();
        LabeledDataset::new(x, labels).unwrap()
    }

    #[test]
    fn argmax_ties_to_smaller() {
        assert_eq!(argmax_first(&[0.0, 0.0, -1.0]), 0);
        assert_eq!(argmax_first(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn three_class_orthogonal_means() {
        let means = vec![
            vec![5.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 5.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 5.0, 0.0, 0.0],
        ];
        let mut ok = 0;
        for seed in 0..20 {
            let ds = mixture(&means, 100, seed);
            let m = fit_kclass(&ds, 1, &[Selection::TopS { s: 2 }]).unwrap();
            ok += usize::from(m.selected()[0] == [0, 1] && m.selected()[1] == [0, 2]);
        }
        assert!(ok >= 19, "{ok}");
    }

    #[test]
    fn class_means_predict_their_class() {
        let means = vec![
            vec![4.0, 0.0, 0.0, 0.0],
            vec![0.0, 4.0, 0.0, 0.0],
            vec![0.0, 0.0, 4.0, 0.0],
        ];
        let ds = mixture(&means, 60, 3);
        let m = fit_kclass(&ds, 1, &[Selection::TopS { s: 3 }]).unwrap();
        let stats = pooled_covariance(&ds).unwrap();
        for (c, mean) in stats.class_means().iter().enumerate() {
            assert_eq!(m.predict_class(mean).unwrap(), c);
        }
        // At X̄₁ every D̃ᵢ equals −½‖ζ̂⁽ⁱ⁾_Ŝᵢ‖².
        let s = m.scores(&stats.class_means()[0]).unwrap();
        for i in 0..2 {
            let norm: f64 = m.selected()[i]
                .iter()
                .map(|&j| m.directions()[i][j].powi(2))
                .sum();
            assert!((s[i + 1] + 0.5 * norm).abs() < 1e-9);
        }
    }

    #[test]
    fn two_classes_reduce_to_binary_rule() {
        let ds = mixture(&[vec![0.0; 6], vec![1.0, 0.5, 0.0, 0.0, 0.0, 0.0]], 30, 11);
        let uneven = ds.subset(&(0..55).collect::<Vec<_>>()).unwrap();
        for data in [&ds, &uneven] {
            let sel = Selection::TopS { s: 3 };
            let kc = fit_kclass(data, 2, &[sel]).unwrap();
            let bin = fit_pclda(data, 2, sel).unwrap();
            assert_eq!(kc.selected()[0], bin.selected());
            let mut rng = stream_rng(12, 0);
            let pts = DMatrix::<f64>::from_fn(2000, 6, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
            assert_eq!(kc.predict_rows(&pts).unwrap(), bin.predict_rows(&pts).unwrap());
        }
    }

    #[test]
    fn selection_count_validated() {
        let ds = mixture(&[vec![0.0; 3], vec![1.0; 3], vec![2.0; 3]], 10, 1);
        let sel = Selection::TopS { s: 1 };
        assert!(fit_kclass(&ds, 1, &[sel, sel, sel]).is_err());
        let m = fit_kclass(&ds, 1, &[sel, Selection::TopS { s: 2 }]).unwrap();
        assert_eq!(m.selected()[1].len(), 2);
        assert!(m.selected_union().len() <= 3);
    }
}
