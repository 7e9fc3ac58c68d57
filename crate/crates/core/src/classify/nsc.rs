//! Nearest shrunken centroids with a diagonal covariance.
//!
//! `d_kj = (x̄_kj − x̄_j) / (m_k s_j)` with `m_k = √(1/n_k − 1/n)` is soft-thresholded
//! by `delta`; a point goes to the class minimising
//! `Σ_j (x_j − x̄'_kj)² / s_j² − 2 ln π_k`.

use nalgebra::{DMatrix, DVector};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Floor applied to within-class standard deviations, relative to their median.
pub const SD_FLOOR_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct NscModel {
    classes: Vec<String>,
    delta: f64,
    sd: DVector<f64>,
    /// Shrunken centroids, one row per class.
    centroids: DMatrix<f64>,
    log_priors: Vec<f64>,
    active: Vec<usize>,
}

/// Per-class means, overall mean, pooled sd and the `m_k` factors; everything
/// that does not depend on `delta`.
#[derive(Debug, Clone)]
pub struct NscStats {
    classes: Vec<String>,
    means: DMatrix<f64>,
    overall: DVector<f64>,
    sd: DVector<f64>,
    m: Vec<f64>,
    log_priors: Vec<f64>,
}

impl NscStats {
    pub fn new(train: &LabeledDataset) -> Result<Self> {
        let k = train.num_classes();
        if k < 2 {
            return Err(Error::Validation("NSC needs at least 2 classes".into()));
        }
        let (n, p) = (train.n(), train.p());
        if n <= k {
            return Err(Error::InsufficientData(format!(
                "{n} samples for {k} classes leaves no degrees of freedom"
            )));
        }
        let counts = train.class_counts();
        let x = train.features();
        let mut means = DMatrix::zeros(k, p);
        for (i, &c) in train.class_ordinals().iter().enumerate() {
            let mut row = means.row_mut(c);
            row += x.row(i);
        }
        for (c, &m) in counts.iter().enumerate() {
            means.row_mut(c).scale_mut(1.0 / m as f64);
        }
        let overall = x.row_mean().transpose();
        let mut ss = DVector::<f64>::zeros(p);
        for (i, &c) in train.class_ordinals().iter().enumerate() {
            for j in 0..p {
                let e = x[(i, j)] - means[(c, j)];
                ss[j] += e * e;
            }
        }
        let mut sd = ss.map(|v| (v / (n - k) as f64).sqrt());
        let mut sorted: Vec<f64> = sd.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let median = if p % 2 == 1 {
            sorted[p / 2]
        } else {
            0.5 * (sorted[p / 2 - 1] + sorted[p / 2])
        };
        let floor = if median > 0.0 {
            median * SD_FLOOR_FRACTION
        } else {
            // Degenerate: most features are constant within classes.
            sorted.iter().copied().find(|&v| v > 0.0).unwrap_or(1.0) * SD_FLOOR_FRACTION
        };
        sd.apply(|v| *v = v.max(floor));
        let inv_n = 1.0 / n as f64;
        let m = counts.iter().map(|&c| (1.0 / c as f64 - inv_n).sqrt()).collect();
        let log_priors = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();
        Ok(NscStats {
            classes: train.classes().to_vec(),
            means,
            overall,
            sd,
            m,
            log_priors,
        })
    }

    /// Largest `|d_kj|`; any `delta` at or above it shrinks every centroid fully.
    pub fn max_statistic(&self) -> f64 {
        let mut best = 0.0f64;
        for c in 0..self.classes.len() {
            for j in 0..self.overall.len() {
                best = best.max(self.statistic(c, j).abs());
            }
        }
        best
    }

    fn statistic(&self, c: usize, j: usize) -> f64 {
        (self.means[(c, j)] - self.overall[j]) / (self.m[c] * self.sd[j])
    }

    pub fn shrink(&self, delta: f64) -> Result<NscModel> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::range("delta", delta, "delta >= 0"));
        }
        let (k, p) = self.means.shape();
        let mut centroids = DMatrix::zeros(k, p);
        let mut active = vec![false; p];
        for c in 0..k {
            for j in 0..p {
                let d = self.statistic(c, j);
                let shrunk = d.signum() * (d.abs() - delta).max(0.0);
                if shrunk != 0.0 {
                    active[j] = true;
                }
                centroids[(c, j)] = self.overall[j] + self.m[c] * self.sd[j] * shrunk;
            }
        }
        Ok(NscModel {
            classes: self.classes.clone(),
            delta,
            sd: self.sd.clone(),
            centroids,
            log_priors: self.log_priors.clone(),
            active: (0..p).filter(|&j| active[j]).collect(),
        })
    }
}

pub fn fit_nsc(train: &LabeledDataset, delta: f64) -> Result<NscModel> {
    NscStats::new(train)?.shrink(delta)
}

impl NscModel {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Features with a nonzero shrunken difference for some class.
    pub fn active_features(&self) -> &[usize] {
        &self.active
    }

    pub fn p(&self) -> usize {
        self.sd.len()
    }

    /// Discriminant scores `Σ_j (x_j − x̄'_kj)²/s_j² − 2 ln π_k` (smaller wins).
    pub fn scores(&self, z: &DVector<f64>) -> Result<Vec<f64>> {
        if z.len() != self.p() {
            return Err(Error::Validation(format!(
                "expected {} features, got {}",
                self.p(),
                z.len()
            )));
        }
        Ok((0..self.classes.len())
            .map(|c| {
                let dist: f64 = (0..self.p())
                    .map(|j| ((z[j] - self.centroids[(c, j)]) / self.sd[j]).powi(2))
                    .sum();
                dist - 2.0 * self.log_priors[c]
            })
            .collect())
    }

    pub fn predict_class(&self, z: &DVector<f64>) -> Result<usize> {
        let s = self.scores(z)?;
        let mut best = 0;
        for c in 1..s.len() {
            if s[c] < s[best] {
                best = c;
            }
        }
        Ok(best)
    }

    pub fn predict_rows(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        (0..x.nrows())
            .map(|i| self.predict_class(&x.row(i).transpose()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn data(n1: usize, n2: usize, seed: u64) -> LabeledDataset {
        let mut rng = stream_rng(seed, 0);
        let p = 6;
        let x = DMatrix::from_fn(n1 + n2, p, |i, j| {
            let e: f64 = rng.sample(StandardNormal);
            let scale = 1.0 + j as f64 * 0.5;
            e * scale + if i >= n1 && j < 2 { 1.5 } else { 0.0 }
        });
        let labels = (0..n1 + n2)
            .map(|i| if i < n1 { "a" } else { "b" }.to_string())
            .collect();
        LabeledDataset::new(x, labels).unwrap()
    }

    #[test]
    fn zero_delta_is_diagonal_lda() {
        let ds = data(30, 20, 1);
        let m = fit_nsc(&ds, 0.0).unwrap();
        assert_eq!(m.active_features().len(), 6);
        // Independent diagonal LDA with pooled variances (divisor n − K).
        let (n, p) = (50usize, 6usize);
        let x = ds.features();
        let mut mu = [[0.0; 6]; 2];
        let counts = [30.0, 20.0];
        for i in 0..n {
            let c = usize::from(i >= 30);
            for j in 0..p {
                mu[c][j] += x[(i, j)] / counts[c];
            }
        }
        let mut var = [0.0; 6];
        for i in 0..n {
            let c = usize::from(i >= 30);
            for j in 0..p {
                var[j] += (x[(i, j)] - mu[c][j]).powi(2) / (n - 2) as f64;
            }
        }
        let mut rng = stream_rng(2, 0);
        for _ in 0..500 {
            let z = DVector::<f64>::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
            let score = |c: usize| {
                (0..p).map(|j| (z[j] - mu[c][j]).powi(2) / var[j]).sum::<f64>()
                    - 2.0 * (counts[c] / n as f64).ln()
            };
            let lda = usize::from(score(1) < score(0));
            assert_eq!(m.predict_class(&z).unwrap(), lda);
        }
    }

    #[test]
    fn huge_delta_predicts_majority() {
        let ds = data(30, 20, 3);
        let stats = NscStats::new(&ds).unwrap();
        let m = stats.shrink(stats.max_statistic() + 1.0).unwrap();
        assert!(m.active_features().is_empty());
        let preds = m.predict_rows(ds.features()).unwrap();
        assert!(preds.iter().all(|&c| c == 0));
        let m = fit_nsc(&data(10, 25, 3), 1e6).unwrap();
        assert!(m
            .predict_rows(&DMatrix::from_element(5, 6, 3.0))
            .unwrap()
            .iter()
            .all(|&c| c == 1));
    }

    #[test]
    fn active_set_shrinks_with_delta() {
        let ds = data(40, 40, 4);
        let stats = NscStats::new(&ds).unwrap();
        let mut prev = usize::MAX;
        for delta in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let k = stats.shrink(delta).unwrap().active_features().len();
            assert!(k <= prev);
            prev = k;
        }
        assert!(stats.shrink(-1.0).is_err());
    }

    #[test]
    fn constant_feature_is_floored() {
        let mut x = data(10, 10, 5).features().clone();
        x.column_mut(0).fill(2.0);
        let labels = (0..20).map(|i| (i / 10).to_string()).collect();
        let ds = LabeledDataset::new(x, labels).unwrap();
        let m = fit_nsc(&ds, 0.0).unwrap();
        assert!(m.sd.iter().all(|&s| s > 0.0));
        assert!(m.predict_class(&DVector::zeros(6)).is_ok());
    }
}
