//! Classification metrics and fold aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Metric("accuracy of an empty set".into()));
    }
    let correct = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(correct as f64 / truth.len() as f64)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney estimate of `P(score_pos > score_neg) + P(tie) / 2`.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 {
        return Err(Error::UndefinedAuc("no positive samples"));
    }
    if n_neg == 0 {
        return Err(Error::UndefinedAuc("no negative samples"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(positive)
        .filter(|(_, &p)| p)
        .map(|(r, _)| r)
        .sum();
    let n_pos_f = n_pos as f64;
    Ok((rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// AUC of two normal score distributions with means `delta` apart and a
/// shared standard deviation `sigma`: `Phi(delta / (sqrt(2) sigma))`.
pub fn normal_auc(delta: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(standard_normal_cdf(
        delta / (std::f64::consts::SQRT_2 * sigma),
    ))
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `counts[t][p]`: graphs of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionCounts {
    pub fn new(num_classes: usize, predictions: &[usize], truth: &[usize]) -> Self {
        let mut counts = vec![vec![0; num_classes]; num_classes];
        for (&p, &t) in predictions.iter().zip(truth) {
            counts[t][p] += 1;
        }
        ConfusionCounts { counts }
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    /// Missing when the fold's test set lacks a class.
    pub auc: Option<f64>,
    pub confusion: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub folds: Vec<FoldMetrics>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_auc: Option<f64>,
    pub std_auc: Option<f64>,
    pub confusion: ConfusionCounts,
    /// Always "population".
    pub std_kind: String,
}

pub fn cross_validate(folds: Vec<FoldMetrics>) -> Result<MetricReport> {
    if folds.len() < 2 {
        return Err(Error::Metric(format!(
            "need at least 2 folds, got {}",
            folds.len()
        )));
    }
    let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&acc);
    let aucs: Vec<f64> = folds.iter().filter_map(|f| f.auc).collect();
    let (mean_auc, std_auc) = if aucs.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&aucs);
        (Some(m), Some(s))
    };
    let mut confusion = folds[0].confusion.clone();
    for f in &folds[1..] {
        confusion.add(&f.confusion);
    }
    Ok(MetricReport {
        folds,
        mean_accuracy,
        std_accuracy,
        mean_auc,
        std_auc,
        confusion,
        std_kind: "population".into(),
    })
}

impl MetricReport {
    pub fn to_table(&self) -> String {
        let mut out = String::from("fold  accuracy  auc\n");
        for f in &self.folds {
            let auc = f.auc.map_or("-".to_string(), |a| format!("{a:.4}"));
            out.push_str(&format!("{:>4}  {:>8.4}  {auc}\n", f.fold, f.accuracy));
        }
        out.push_str(&format!(
            "mean  {:.4} +/- {:.4} (population std)\n",
            self.mean_accuracy, self.std_accuracy
        ));
        if let (Some(m), Some(s)) = (self.mean_auc, self.std_auc) {
            out.push_str(&format!("auc   {m:.4} +/- {s:.4}\n"));
        }
        out
    }
}
