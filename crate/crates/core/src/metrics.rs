//! Confusion-matrix ratios, ROC curve and AUC. The positive class is
//! "abnormal".

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Tally `(predicted_abnormal, truly_abnormal)` pairs.
pub fn confusion(predictions: &[(bool, bool)]) -> Result<ConfusionCounts> {
    if predictions.is_empty() {
        return Err(Error::arg("no predictions to tally"));
    }
    let mut c = ConfusionCounts::default();
    for &(predicted, truth) in predictions {
        match (predicted, truth) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Quality measures; `None` marks a ratio whose denominator is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_measure: Option<f64>,
    pub g_mean: Option<f64>,
    pub auc: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean of precision and recall; undefined when both are zero.
pub fn f_measure(precision: f64, recall: f64) -> Option<f64> {
    let s = precision + recall;
    (s > 0.0).then(|| 2.0 * precision * recall / s)
}

pub fn g_mean(sensitivity: f64, specificity: f64) -> f64 {
    (sensitivity * specificity).sqrt()
}

/// All ratio metrics of `c` (AUC left unset).
pub fn compute_metrics(c: &ConfusionCounts) -> Result<MetricReport> {
    let total = c.total();
    if total == 0 {
        return Err(Error::arg("confusion counts are all zero"));
    }
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let specificity = ratio(c.tn, c.tn + c.fp);
    let precision = ratio(c.tp, c.tp + c.fp);
    Ok(MetricReport {
        accuracy: ratio(c.tp + c.tn, total),
        sensitivity,
        specificity,
        precision,
        recall: sensitivity,
        f_measure: precision
            .zip(sensitivity)
            .and_then(|(p, r)| f_measure(p, r)),
        g_mean: sensitivity.zip(specificity).map(|(se, sp)| g_mean(se, sp)),
        auc: None,
    })
}

impl MetricReport {
    pub fn rows(&self) -> [(&'static str, Option<f64>); 8] {
        [
            ("accuracy", self.accuracy),
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f_measure", self.f_measure),
            ("g_mean", self.g_mean),
            ("auc", self.auc),
        ]
    }

    /// Fixed-order two-column table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        for (name, value) in self.rows() {
            let shown = value.map_or_else(|| "undefined".to_string(), |v| format!("{:.4}", v));
            let _ = writeln!(s, "{:<12} {}", name, shown);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// ROC points `(fpr, tpr)` for `(score, truly_abnormal)` pairs: one point
/// per distinct score (predicting abnormal when `score >= threshold`),
/// swept from the highest score down, preceded by `(0, 0)`. The last point
/// is always `(1, 1)`.
pub fn roc_curve(scored: &[(f64, bool)]) -> Result<Vec<(f64, f64)>> {
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::arg("scores must be finite"));
    }
    let positives = scored.iter().filter(|(_, t)| *t).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::arg(
            "ROC needs at least one positive and one negative",
        ));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a curve given as `(x, y)` points in x order.
pub fn auc(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}
