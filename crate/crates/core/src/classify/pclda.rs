//! Binary PCLDA: spiked whitening, coordinate selection on `ζ̂`, then a Fisher
//! rule restricted to the selected whitened coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::whitening::{fit_spiked, pooled_covariance, PooledStats, Whiten, WhiteningOperator};

/// Threshold constant used when none is given.
pub const DEFAULT_THRESHOLD_C: f64 = 1.0;
pub const DEFAULT_THRESHOLD_ALPHA: f64 = 0.3;

/// How coordinates of `ζ̂` are retained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Selection {
    /// The `s` largest `|ζ̂ⱼ|`.
    TopS { s: usize },
    /// `{j : |ζ̂ⱼ| > C (ln p / n)^α}`. With `fallback`, an empty set becomes the
    /// single largest coordinate instead of an error.
    Threshold {
        c: f64,
        alpha: f64,
        #[serde(default)]
        fallback: bool,
    },
}

impl Selection {
    pub fn threshold(c: f64, alpha: f64) -> Self {
        Selection::Threshold {
            c,
            alpha,
            fallback: false,
        }
    }
}

/// Indices of the `s` largest `|ζ̂ⱼ|`, ties to the lower index, sorted ascending.
pub fn select_top_s(zeta_hat: &DVector<f64>, s: usize) -> Result<Vec<usize>> {
    let p = zeta_hat.len();
    if s == 0 {
        return Err(Error::EmptySelection("s must be at least 1".into()));
    }
    if s > p {
        return Err(Error::range("s", s, format!("1..={p}")));
    }
    let mut idx = rank_by_magnitude(zeta_hat);
    idx.truncate(s);
    idx.sort_unstable();
    Ok(idx)
}

/// All coordinates ordered by decreasing `|ζ̂ⱼ|`, ties to the lower index.
pub fn rank_by_magnitude(zeta_hat: &DVector<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..zeta_hat.len()).collect();
    // Stable sort keeps lower indices first among equal magnitudes.
    idx.sort_by(|&a, &b| zeta_hat[b].abs().total_cmp(&zeta_hat[a].abs()));
    idx
}

/// `t_n = C (ln p / n)^α`.
pub fn threshold_level(n: usize, p: usize, c: f64, alpha: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::range("C", c, "C > 0"));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::range("alpha", alpha, "(0, 0.5)"));
    }
    if n < 2 {
        return Err(Error::range("n", n, "n >= 2"));
    }
    if p < 2 {
        return Err(Error::range("p", p, "p >= 2"));
    }
    Ok(c * ((p as f64).ln() / n as f64).powf(alpha))
}

/// Hard-thresholded support of `ζ̂` together with the level `t_n` used.
pub fn hard_threshold(
    zeta_hat: &DVector<f64>,
    n: usize,
    p: usize,
    c: f64,
    alpha: f64,
) -> Result<(Vec<usize>, f64)> {
    let t = threshold_level(n, p, c, alpha)?;
    let sel: Vec<usize> = (0..zeta_hat.len()).filter(|&j| zeta_hat[j].abs() > t).collect();
    if sel.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no coordinate exceeds t_n = {t:.6}"
        )));
    }
    Ok((sel, t))
}

/// Applies a selection mode; returns the set and `t_n` when thresholding.
pub(crate) fn apply_selection(
    zeta_hat: &DVector<f64>,
    n: usize,
    selection: Selection,
) -> Result<(Vec<usize>, Option<f64>)> {
    match selection {
        Selection::TopS { s } => Ok((select_top_s(zeta_hat, s)?, None)),
        Selection::Threshold { c, alpha, fallback } => {
            let p = zeta_hat.len();
            match hard_threshold(zeta_hat, n, p, c, alpha) {
                Ok((sel, t)) => Ok((sel, Some(t))),
                Err(Error::EmptySelection(_)) if fallback => {
                    let t = threshold_level(n, p, c, alpha)?;
                    Ok((select_top_s(zeta_hat, 1)?, Some(t)))
                }
                Err(e) => Err(e),
            }
        }
    }
}

pub(crate) fn fit_whitener(stats: &PooledStats, d: usize) -> Result<WhiteningOperator> {
    Ok(WhiteningOperator::new(fit_spiked(stats, d)?))
}

/// Whitened direction and midpoint of a two-class fit, before selection.
#[derive(Debug, Clone)]
pub(crate) struct BinaryDirection {
    pub whitener: WhiteningOperator,
    pub class_means: [DVector<f64>; 2],
    pub zeta_hat: DVector<f64>,
    pub midpoint: DVector<f64>,
    pub prior_offset: f64,
    pub n: usize,
}

impl BinaryDirection {
    pub fn fit(train: &LabeledDataset, d: usize) -> Result<Self> {
        if train.num_classes() != 2 {
            return Err(Error::Validation(format!(
                "binary PCLDA needs exactly 2 classes, found {}",
                train.num_classes()
            )));
        }
        Self::from_stats(&pooled_covariance(train)?, d)
    }

    pub fn from_stats(stats: &PooledStats, d: usize) -> Result<Self> {
        if stats.counts().len() != 2 {
            return Err(Error::Validation("binary PCLDA needs exactly 2 classes".into()));
        }
        let whitener = fit_whitener(stats, d)?;
        let m = stats.class_means();
        let counts = stats.counts();
        Self::from_means(whitener, [m[0].clone(), m[1].clone()], [counts[0], counts[1]])
    }

    pub fn from_means(
        whitener: WhiteningOperator,
        class_means: [DVector<f64>; 2],
        counts: [usize; 2],
    ) -> Result<Self> {
        if counts.contains(&0) {
            return Err(Error::Validation(
                "both classes need at least one observation".into(),
            ));
        }
        let x1 = whitener.whiten(&class_means[0])?;
        let x2 = whitener.whiten(&class_means[1])?;
        Ok(BinaryDirection {
            zeta_hat: &x2 - &x1,
            midpoint: (x1 + x2) * 0.5,
            prior_offset: (counts[0] as f64).ln() - (counts[1] as f64).ln(),
            n: counts[0] + counts[1],
            whitener,
            class_means,
        })
    }
}

/// A fitted binary PCLDA rule. Class 1 is the lexicographically smaller label.
#[derive(Debug, Clone, PartialEq)]
pub struct PcldaModel {
    pub(crate) whitener: WhiteningOperator,
    pub(crate) classes: [String; 2],
    pub(crate) counts: [usize; 2],
    pub(crate) class_means: [DVector<f64>; 2],
    pub(crate) zeta_hat: DVector<f64>,
    pub(crate) selected: Vec<usize>,
    pub(crate) midpoint: DVector<f64>,
    pub(crate) prior_offset: f64,
    pub(crate) selection: Selection,
    pub(crate) threshold: Option<f64>,
}

/// Fits the binary rule with `d` spikes.
pub fn fit_pclda(train: &LabeledDataset, d: usize, selection: Selection) -> Result<PcldaModel> {
    let dir = BinaryDirection::fit(train, d)?;
    let (selected, threshold) = apply_selection(&dir.zeta_hat, dir.n, selection)?;
    let counts = train.class_counts();
    Ok(PcldaModel {
        whitener: dir.whitener,
        classes: [train.classes()[0].clone(), train.classes()[1].clone()],
        counts: [counts[0], counts[1]],
        class_means: dir.class_means,
        zeta_hat: dir.zeta_hat,
        selected,
        midpoint: dir.midpoint,
        prior_offset: dir.prior_offset,
        selection,
        threshold,
    })
}

impl PcldaModel {
    pub fn whitener(&self) -> &WhiteningOperator {
        &self.whitener
    }

    pub fn classes(&self) -> &[String; 2] {
        &self.classes
    }

    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    /// Raw (unwhitened) class means of the training data.
    pub fn class_means(&self) -> &[DVector<f64>; 2] {
        &self.class_means
    }

    pub fn zeta_hat(&self) -> &DVector<f64> {
        &self.zeta_hat
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn midpoint(&self) -> &DVector<f64> {
        &self.midpoint
    }

    /// `ln n₁ − ln n₂`.
    pub fn prior_offset(&self) -> f64 {
        self.prior_offset
    }

    pub fn selection(&self) -> Selection {
        self.selection
    }

    /// `t_n` when the model was fit by thresholding.
    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn p(&self) -> usize {
        self.zeta_hat.len()
    }

    fn score_whitened(&self, zw: impl Fn(usize) -> f64) -> f64 {
        self.selected
            .iter()
            .map(|&j| self.zeta_hat[j] * (zw(j) - self.midpoint[j]))
            .sum()
    }

    /// `ζ̂_Sᵀ [Ŵz − X̃ₐ]_S`.
    pub fn score(&self, z: &DVector<f64>) -> Result<f64> {
        let zw = self.whitener.whiten(z)?;
        Ok(self.score_whitened(|j| zw[j]))
    }

    /// Class ordinal: 0 (class 1) or 1 (class 2).
    pub fn predict_class(&self, z: &DVector<f64>) -> Result<usize> {
        Ok(usize::from(self.score(z)? > self.prior_offset))
    }

    pub fn predict(&self, z: &DVector<f64>) -> Result<&str> {
        Ok(&self.classes[self.predict_class(z)?])
    }

    /// Class ordinals for every row of `x`.
    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        let zw = self.whitener.whiten_rows(x)?;
        Ok((0..zw.nrows())
            .map(|i| usize::from(self.score_whitened(|j| zw[(i, j)]) > self.prior_offset))
            .collect())
    }
}
