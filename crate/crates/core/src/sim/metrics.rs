//! Per-replicate metrics and their summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Error rate, false positive and false negative rates, class 2 being positive.
/// A rate whose conditioning class is absent from `truth` is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub error: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub false_pos: usize,
    pub false_neg: usize,
}

/// Compares predicted and true class ordinals (0 = class 1, 1 = class 2).
pub fn metrics(pred: &[usize], truth: &[usize]) -> Result<Rates> {
    if pred.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Validation("no predictions".into()));
    }
    let (mut neg, mut pos, mut fp, mut fneg, mut wrong) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        if p != t {
            wrong += 1;
        }
        if t == 0 {
            neg += 1;
            fp += usize::from(p != 0);
        } else if t == 1 {
            pos += 1;
            fneg += usize::from(p != 1);
        }
    }
    Ok(Rates {
        error: wrong as f64 / pred.len() as f64,
        fpr: (neg > 0).then(|| fp as f64 / neg as f64),
        fnr: (pos > 0).then(|| fneg as f64 / pos as f64),
        false_pos: fp,
        false_neg: fneg,
    })
}

/// `(|selected ∩ strong|, |selected \ strong|)`.
pub fn strong_weak_counts(selected: &[usize], strong: &[usize]) -> (usize, usize) {
    let hits = selected.iter().filter(|j| strong.contains(j)).count();
    (hits, selected.len() - hits)
}

/// One replicate of a Monte Carlo run. Column order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub error_rate: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub model_size: usize,
    pub strong_hits: usize,
    pub weak_hits: usize,
    pub selected_equals_true: bool,
    pub seed: u64,
}

pub const METRIC_COLUMNS: [&str; 8] = [
    "error_rate",
    "fpr",
    "fnr",
    "model_size",
    "strong_hits",
    "weak_hits",
    "selected_equals_true",
    "seed",
];

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl MeanSd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let count = v.len();
        if count == 0 {
            return MeanSd {
                mean: f64::NAN,
                sd: f64::NAN,
                count,
            };
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd, count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub replicates: usize,
    pub failures: usize,
    pub error_rate: MeanSd,
    pub fpr: MeanSd,
    pub fnr: MeanSd,
    pub model_size: MeanSd,
    pub strong_hits: MeanSd,
    pub weak_hits: MeanSd,
    pub selected_equals_true: MeanSd,
}

impl Summary {
    pub fn of(rows: &[MetricsRow], failures: usize) -> Self {
        Summary {
            replicates: rows.len(),
            failures,
            error_rate: MeanSd::of(rows.iter().map(|r| r.error_rate)),
            fpr: MeanSd::of(rows.iter().filter_map(|r| r.fpr)),
            fnr: MeanSd::of(rows.iter().filter_map(|r| r.fnr)),
            model_size: MeanSd::of(rows.iter().map(|r| r.model_size as f64)),
            strong_hits: MeanSd::of(rows.iter().map(|r| r.strong_hits as f64)),
            weak_hits: MeanSd::of(rows.iter().map(|r| r.weak_hits as f64)),
            selected_equals_true: MeanSd::of(
                rows.iter().map(|r| f64::from(u8::from(r.selected_equals_true))),
            ),
        }
    }

    fn entries(&self) -> [(&'static str, MeanSd, bool); 7] {
        [
            ("error_rate", self.error_rate, true),
            ("fpr", self.fpr, true),
            ("fnr", self.fnr, true),
            ("model_size", self.model_size, false),
            ("strong_hits", self.strong_hits, false),
            ("weak_hits", self.weak_hits, false),
            ("selected_equals_true", self.selected_equals_true, false),
        ]
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per replicate; undefined rates are left empty.
pub fn write_replicates_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.error_rate.to_string(),
            fmt_opt(r.fpr),
            fmt_opt(r.fnr),
            r.model_size.to_string(),
            r.strong_hits.to_string(),
            r.weak_hits.to_string(),
            r.selected_equals_true.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `metric,mean,sd,count,display`; rates are displayed in percent as `mean (sd)`.
pub fn write_summary_csv<W: Write>(summary: &Summary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "mean", "sd", "count", "display"])?;
    for (name, s, pct) in summary.entries() {
        let scale = if pct { 100.0 } else { 1.0 };
        w.write_record([
            name.to_string(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.count.to_string(),
            format!("{:.2} ({:.2})", s.mean * scale, s.sd * scale),
        ])?;
    }
    w.write_record([
        "failures".to_string(),
        summary.failures.to_string(),
        String::new(),
        summary.replicates.to_string(),
        String::new(),
    ])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_examples() {
        let truth = [0, 0, 1, 1];
        let r = metrics(&truth, &truth).unwrap();
        assert_eq!((r.error, r.fpr, r.fnr), (0.0, Some(0.0), Some(0.0)));
        let r = metrics(&[1, 1, 0, 0], &truth).unwrap();
        assert_eq!((r.error, r.fpr, r.fnr), (1.0, Some(1.0), Some(1.0)));
        let r = metrics(&[1, 0, 1, 0, 1], &[0, 0, 1, 1, 1]).unwrap();
        assert_eq!(r.fpr, Some(0.5));
        assert!((r.fnr.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.error * 5.0, (r.false_pos + r.false_neg) as f64);
        let r = metrics(&[0, 1], &[0, 0]).unwrap();
        assert_eq!(r.fnr, None);
        assert!(metrics(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn strong_weak_examples() {
        let strong: Vec<usize> = (0..10).collect();
        assert_eq!(strong_weak_counts(&strong, &strong), (10, 0));
        assert_eq!(strong_weak_counts(&[10], &strong), (0, 1));
        assert_eq!(strong_weak_counts(&[1, 2, 30, 40], &strong), (2, 2));
    }

    fn row(e: f64, size: usize) -> MetricsRow {
        MetricsRow {
            error_rate: e,
            fpr: Some(e),
            fnr: None,
            model_size: size,
            strong_hits: size.min(10),
            weak_hits: size.saturating_sub(10),
            selected_equals_true: size == 10,
            seed: 1,
        }
    }

    #[test]
    fn summary_is_arithmetic_mean_and_sample_sd() {
        let rows = [row(0.1, 10), row(0.2, 12), row(0.3, 14)];
        let s = Summary::of(&rows, 0);
        assert!((s.error_rate.mean - 0.2).abs() < 1e-15);
        assert!((s.error_rate.sd - 0.1).abs() < 1e-15);
        assert_eq!(s.model_size.mean, 12.0);
        assert_eq!(s.model_size.sd, 2.0);
        assert_eq!(s.fnr.count, 0);
        assert!((s.selected_equals_true.mean - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let rows = [row(0.25, 11)];
        let mut buf = Vec::new();
        write_replicates_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "error_rate,fpr,fnr,model_size,strong_hits,weak_hits,selected_equals_true,seed\n0.25,0.25,,11,10,1,false,1\n"
        );
        let mut buf = Vec::new();
        write_summary_csv(&Summary::of(&rows, 2), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("metric,mean,sd,count,display\nerror_rate,0.25,0,1,25.00 (0.00)\n"));
        assert!(text.ends_with("failures,2,,1,\n"));
    }
}
