use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::model::SparseLinearClassifier;
use crate::scalar::Scalar;

/// Per-component losses. `total = lambda_c * concept + classification + lambda_r * sparsity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LossBreakdown<T> {
    pub concept: T,
    pub classification: T,
    pub sparsity: T,
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn to_f64(&self) -> LossBreakdown<f64> {
        LossBreakdown {
            concept: self.concept.as_f64(),
            classification: self.classification.as_f64(),
            sparsity: self.sparsity.as_f64(),
            total: self.total.as_f64(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_r: f64,
}

/// Upstream gradients of the loss w.r.t. concept scores and logits.
pub(crate) struct LossGradients<T> {
    pub d_concepts: Vec<T>,
    pub d_logits: Vec<T>,
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = row.iter().map(|&l| (l - max).exp()).sum();
    max + sum.ln()
}

fn finite<T: Scalar>(value: T, component: &'static str) -> Result<T> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { component })
    }
}

/// Batch loss over row-major `concepts`/`targets` (`G x width`) and
/// `logits` (`G x classes`).
pub fn loss<T: Scalar>(
    concepts: &[T],
    targets: &[T],
    logits: &[T],
    labels: &[usize],
    weights: LossWeights,
    classifier: &SparseLinearClassifier<T>,
) -> Result<LossBreakdown<T>> {
    loss_impl(
        concepts, targets, logits, labels, weights, classifier, false,
    )
    .map(|(l, _)| l)
}

pub(crate) fn loss_and_upstream<T: Scalar>(
    concepts: &[T],
    targets: &[T],
    logits: &[T],
    labels: &[usize],
    weights: LossWeights,
    classifier: &SparseLinearClassifier<T>,
) -> Result<(LossBreakdown<T>, LossGradients<T>)> {
    loss_impl(concepts, targets, logits, labels, weights, classifier, true)
        .map(|(l, g)| (l, g.expect("gradients requested")))
}

fn loss_impl<T: Scalar>(
    concepts: &[T],
    targets: &[T],
    logits: &[T],
    labels: &[usize],
    weights: LossWeights,
    classifier: &SparseLinearClassifier<T>,
    want_grad: bool,
) -> Result<(LossBreakdown<T>, Option<LossGradients<T>>)> {
    let g = labels.len();
    let width = classifier.width;
    let classes = classifier.num_classes;
    if g == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    if concepts.len() != g * width || targets.len() != g * width || logits.len() != g * classes {
        return Err(Error::Shape(format!(
            "batch of {g}: {} concept scores, {} targets, {} logits for width {width} and {classes} classes",
            concepts.len(),
            targets.len(),
            logits.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Shape(format!(
            "class label {y} out of range for {classes} classes"
        )));
    }
    let n = T::from_usize(g).expect("batch size fits");
    let lambda_c = T::from_f64_lossy(weights.lambda_c);
    let lambda_r = T::from_f64_lossy(weights.lambda_r);

    let mut concept = T::zero();
    for (&a, &b) in concepts.iter().zip(targets) {
        concept += (a - b) * (a - b);
    }
    let concept = finite(concept / n, "concept")?;

    let mut classification = T::zero();
    for (row, &y) in logits.chunks(classes).zip(labels) {
        classification += log_sum_exp(row) - row[y];
    }
    let classification = finite(classification / n, "classification")?;
    let sparsity = finite(classifier.l1_norm(), "sparsity")?;
    let total = finite(
        lambda_c * concept + classification + lambda_r * sparsity,
        "total",
    )?;
    let breakdown = LossBreakdown {
        concept,
        classification,
        sparsity,
        total,
    };
    if !want_grad {
        return Ok((breakdown, None));
    }

    let two = T::from_f64_lossy(2.0);
    let d_concepts = concepts
        .iter()
        .zip(targets)
        .map(|(&a, &b)| lambda_c * two * (a - b) / n)
        .collect();
    let mut d_logits = Vec::with_capacity(g * classes);
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let lse = log_sum_exp(row);
        for (c, &l) in row.iter().enumerate() {
            let p = (l - lse).exp();
            let t = if c == y { T::one() } else { T::zero() };
            d_logits.push((p - t) / n);
        }
    }
    Ok((
        breakdown,
        Some(LossGradients {
            d_concepts,
            d_logits,
        }),
    ))
}

/// Subgradient of `lambda_r * ||W||_1`, zero at zero.
pub(crate) fn add_l1_subgradient<T: Scalar>(grad: &mut [T], weights: &[T], lambda_r: f64) {
    let lambda_r = T::from_f64_lossy(lambda_r);
    for (g, &w) in grad.iter_mut().zip(weights) {
        if w > T::zero() {
            *g += lambda_r;
        } else if w < T::zero() {
            *g -= lambda_r;
        }
    }
}
