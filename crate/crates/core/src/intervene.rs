//! Concept-level and weight-level interventions on a trained model.
//!
//! Weight interventions pick the graphs of class `cls_true` that the model
//! assigns to `cls_pred` while predicting their concepts faithfully, then
//! shift one concept's classifier weights between the two classes by just
//! enough to close the average logit gap plus a margin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::net::{Example, GcbmModel, Prediction};
use crate::scalar::{cosine, Scalar};

/// Averages at or below this are refused as divisors.
pub const ACTIVATION_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionParams {
    /// Minimum cosine between predicted and true concept vectors.
    pub tau_c: f64,
    /// Logit margin added on top of the average gap.
    pub margin: f64,
    pub cls_true: usize,
    pub cls_pred: usize,
}

impl Default for InterventionParams {
    fn default() -> Self {
        InterventionParams {
            tau_c: 0.6,
            margin: 0.2,
            cls_true: 1,
            cls_pred: 0,
        }
    }
}

impl InterventionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_c > 0.0 && self.tau_c <= 1.0) {
            return Err(Error::Config(format!(
                "tau_c must lie in (0, 1], got {}",
                self.tau_c
            )));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::Config(format!(
                "margin must be non-negative, got {}",
                self.margin
            )));
        }
        if self.cls_true == self.cls_pred {
            return Err(Error::Config("cls_true and cls_pred must differ".into()));
        }
        Ok(())
    }

    fn check_classes(&self, num_classes: usize) -> Result<()> {
        if self.cls_true >= num_classes || self.cls_pred >= num_classes {
            return Err(Error::Config(format!(
                "class pair ({}, {}) out of range for {num_classes} classes",
                self.cls_true, self.cls_pred
            )));
        }
        Ok(())
    }
}

/// Selected graphs with the concept scores the model predicted for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TargetSet<T> {
    pub graph_ids: Vec<usize>,
    pub concepts: Vec<Vec<T>>,
}

impl<T> TargetSet<T> {
    pub fn len(&self) -> usize {
        self.graph_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph_ids.is_empty()
    }
}

/// Graphs of class `cls_true` predicted as `cls_pred` whose predicted concept
/// vector has cosine at least `tau_c` with the ground truth.
pub fn select_targets<T: Scalar>(
    model: &GcbmModel<T>,
    examples: &[Example<'_, T>],
    params: &InterventionParams,
) -> Result<TargetSet<T>> {
    params.validate()?;
    params.check_classes(model.shape.num_classes)?;
    let graphs: Vec<&Graph> = examples.iter().map(|e| e.graph).collect();
    let predictions = if graphs.is_empty() {
        Vec::new()
    } else {
        model.predict_many(&graphs)
    };
    let mut set = TargetSet {
        graph_ids: Vec::new(),
        concepts: Vec::new(),
    };
    for (e, p) in examples.iter().zip(predictions) {
        if e.label == params.cls_true
            && p.class == params.cls_pred
            && cosine(&p.concepts, e.concepts).as_f64() >= params.tau_c
        {
            set.graph_ids.push(e.graph.id);
            set.concepts.push(p.concepts);
        }
    }
    Ok(set)
}

/// Mean over the target set of `logit(cls_pred) - logit(cls_true)`, with
/// logits recomputed from the stored concept scores.
pub fn avg_logit_diff<T: Scalar>(
    model: &GcbmModel<T>,
    targets: &TargetSet<T>,
    params: &InterventionParams,
) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyTargetSet);
    }
    params.check_classes(model.shape.num_classes)?;
    let clf = model.classifier();
    let sum: f64 = targets
        .concepts
        .iter()
        .map(|c| {
            let logits = clf.logits(c);
            (logits[params.cls_pred] - logits[params.cls_true]).as_f64()
        })
        .sum();
    Ok(sum / targets.len() as f64)
}

/// Mean predicted score of concept `concept` over the target set.
pub fn avg_activation<T: Scalar>(targets: &TargetSet<T>, concept: usize) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyTargetSet);
    }
    let width = targets.concepts[0].len();
    if concept >= width {
        return Err(Error::ConceptIndex {
            index: concept,
            width,
        });
    }
    let sum: f64 = targets.concepts.iter().map(|c| c[concept].as_f64()).sum();
    Ok(sum / targets.len() as f64)
}

/// `(delta_a_bar + margin) / (2 f_bar)`.
pub fn weight_adjustment(delta_a_bar: f64, f_bar: f64, margin: f64) -> Result<f64> {
    if !(f_bar > ACTIVATION_FLOOR) {
        return Err(Error::NearZeroActivation { value: f_bar });
    }
    Ok((delta_a_bar + margin) / (2.0 * f_bar))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEdit {
    pub class: usize,
    pub concept: usize,
    pub old_weight: f64,
    pub new_weight: f64,
}

/// New model with `W_F[cls_true, concept] += delta_w` and
/// `W_F[cls_pred, concept] -= delta_w`; everything else is copied.
pub fn apply_intervention<T: Scalar>(
    model: &GcbmModel<T>,
    concept: usize,
    delta_w: f64,
    cls_true: usize,
    cls_pred: usize,
) -> Result<(GcbmModel<T>, Vec<WeightEdit>)> {
    let clf = model.classifier();
    if concept >= clf.width {
        return Err(Error::ConceptIndex {
            index: concept,
            width: clf.width,
        });
    }
    if cls_true >= clf.num_classes || cls_pred >= clf.num_classes || cls_true == cls_pred {
        return Err(Error::Config(format!(
            "invalid class pair ({cls_true}, {cls_pred})"
        )));
    }
    let mut new_clf = clf.clone();
    let dw = T::from_f64_lossy(delta_w);
    let mut edits = Vec::with_capacity(2);
    for (class, delta) in [(cls_true, dw), (cls_pred, -dw)] {
        let slot = &mut new_clf.weight[class * clf.width + concept];
        let old = *slot;
        *slot = old + delta;
        edits.push(WeightEdit {
            class,
            concept,
            old_weight: old.as_f64(),
            new_weight: slot.as_f64(),
        });
    }
    Ok((model.with_classifier(new_clf)?, edits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ConceptEditResult<T> {
    pub original: Prediction<T>,
    pub edited: Prediction<T>,
}

/// Overwrites selected predicted concept scores and reruns the head.
pub fn edit_concept_vector<T: Scalar>(
    model: &GcbmModel<T>,
    graph: &Graph,
    edits: &[(usize, T)],
) -> Result<ConceptEditResult<T>> {
    let original = model.predict(graph);
    let width = original.concepts.len();
    let mut concepts = original.concepts.clone();
    for &(index, value) in edits {
        if index >= width {
            return Err(Error::ConceptIndex { index, width });
        }
        if !value.is_finite() {
            return Err(Error::NonFinite {
                component: "concept edit",
            });
        }
        concepts[index] = value;
    }
    let edited = model.predict_concepts(concepts)?;
    Ok(ConceptEditResult { original, edited })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionOutcome {
    pub num_graphs: usize,
    /// Wrong before, right after.
    pub corrections: usize,
    /// Right before, wrong after.
    pub new_errors: usize,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
}

pub fn evaluate_intervention<T: Scalar>(
    before: &GcbmModel<T>,
    after: &GcbmModel<T>,
    graphs: &[&Graph],
    labels: &[usize],
) -> Result<InterventionOutcome> {
    if graphs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} graphs for {} labels",
            graphs.len(),
            labels.len()
        )));
    }
    if graphs.is_empty() {
        return Err(Error::Metric(
            "cannot evaluate an intervention on an empty split".into(),
        ));
    }
    let pb = before.predict_many(graphs);
    let pa = after.predict_many(graphs);
    let (mut right_before, mut right_after, mut corrections, mut new_errors) = (0, 0, 0, 0);
    for ((b, a), &y) in pb.iter().zip(&pa).zip(labels) {
        let (rb, ra) = (b.class == y, a.class == y);
        right_before += rb as usize;
        right_after += ra as usize;
        corrections += (!rb && ra) as usize;
        new_errors += (rb && !ra) as usize;
    }
    let n = graphs.len() as f64;
    Ok(InterventionOutcome {
        num_graphs: graphs.len(),
        corrections,
        new_errors,
        accuracy_before: right_before as f64 / n,
        accuracy_after: right_after as f64 / n,
    })
}

/// Concepts to adjust together. Statistics come from the original model
/// once; the edits are then applied in sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPlan {
    pub concepts: Vec<usize>,
    #[serde(default)]
    pub params: InterventionParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRecord {
    pub concept: usize,
    pub target_set: Vec<usize>,
    pub delta_a_bar: f64,
    pub f_bar: f64,
    pub delta_w: f64,
    pub edits: Vec<WeightEdit>,
}

/// Statistics of a plan before anything is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPreview {
    pub target_set: Vec<usize>,
    pub delta_a_bar: f64,
    /// `(concept, f_bar, delta_w)` per planned concept.
    pub adjustments: Vec<(usize, f64, f64)>,
}

pub fn preview_plan<T: Scalar>(
    model: &GcbmModel<T>,
    selection: &[Example<'_, T>],
    plan: &InterventionPlan,
) -> Result<PlanPreview> {
    if plan.concepts.is_empty() {
        return Err(Error::Config("intervention plan names no concepts".into()));
    }
    let targets = select_targets(model, selection, &plan.params)?;
    let delta_a_bar = avg_logit_diff(model, &targets, &plan.params)?;
    let adjustments = plan
        .concepts
        .iter()
        .map(|&j| {
            let f_bar = avg_activation(&targets, j)?;
            let dw = weight_adjustment(delta_a_bar, f_bar, plan.params.margin).map_err(|e| {
                log::warn!("concept {j}: {e}");
                e
            })?;
            Ok((j, f_bar, dw))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlanPreview {
        target_set: targets.graph_ids,
        delta_a_bar,
        adjustments,
    })
}

#[derive(Debug, Clone)]
pub struct PlanResult<T> {
    pub model: GcbmModel<T>,
    pub records: Vec<InterventionRecord>,
}

/// Previews the plan on `model`, then applies every adjustment in order.
pub fn run_plan<T: Scalar>(
    model: &GcbmModel<T>,
    selection: &[Example<'_, T>],
    plan: &InterventionPlan,
) -> Result<PlanResult<T>> {
    let preview = preview_plan(model, selection, plan)?;
    let mut current = model.clone();
    let mut records = Vec::with_capacity(preview.adjustments.len());
    for &(concept, f_bar, delta_w) in &preview.adjustments {
        let (next, edits) = apply_intervention(
            &current,
            concept,
            delta_w,
            plan.params.cls_true,
            plan.params.cls_pred,
        )?;
        current = next;
        records.push(InterventionRecord {
            concept,
            target_set: preview.target_set.clone(),
            delta_a_bar: preview.delta_a_bar,
            f_bar,
            delta_w,
            edits,
        });
    }
    Ok(PlanResult {
        model: current,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelShape;

    fn tiny_model() -> GcbmModel<f64> {
        GcbmModel::init(
            ModelShape {
                num_node_labels: 2,
                hidden: 4,
                level_widths: vec![2, 2],
                num_classes: 2,
            },
            0.1,
            1,
        )
        .unwrap()
    }

    #[test]
    fn adjustment_formula() {
        assert!((weight_adjustment(0.51, 0.8426, 0.2).unwrap() - 0.71 / 1.6852).abs() < 1e-15);
        assert_eq!(weight_adjustment(0.0, 0.5, 0.0).unwrap(), 0.0);
        assert!(matches!(
            weight_adjustment(0.3, 0.0, 0.2),
            Err(Error::NearZeroActivation { .. })
        ));
        assert!(weight_adjustment(0.3, -0.4, 0.2).is_err());
    }

    #[test]
    fn apply_touches_two_entries_and_reverts() {
        let m = tiny_model();
        let (after, edits) = apply_intervention(&m, 3, 0.25, 1, 0).unwrap();
        let changed = m
            .classifier()
            .weight
            .iter()
            .zip(&after.classifier().weight)
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 2);
        assert_eq!(edits.len(), 2);
        let (back, _) = apply_intervention(&after, 3, -0.25, 1, 0).unwrap();
        for (a, b) in m.classifier().weight.iter().zip(&back.classifier().weight) {
            assert!((a - b).abs() < 1e-15);
        }
        let (same, _) = apply_intervention(&m, 0, 0.0, 1, 0).unwrap();
        assert_eq!(same, m);
        assert!(apply_intervention(&m, 4, 0.1, 1, 0).is_err());
    }

    #[test]
    fn empty_targets_refuse() {
        let m = tiny_model();
        let empty = TargetSet::<f64> {
            graph_ids: vec![],
            concepts: vec![],
        };
        let p = InterventionParams::default();
        assert!(matches!(
            avg_logit_diff(&m, &empty, &p),
            Err(Error::EmptyTargetSet)
        ));
        assert!(matches!(
            avg_activation(&empty, 0),
            Err(Error::EmptyTargetSet)
        ));
    }

    #[test]
    fn statistics_of_singleton_and_constant_sets() {
        let m = tiny_model();
        let c = vec![0.5, 0.5, 0.5, 0.5];
        let set = TargetSet {
            graph_ids: vec![0, 1],
            concepts: vec![c.clone(), c.clone()],
        };
        assert_eq!(avg_activation(&set, 2).unwrap(), 0.5);
        let p = InterventionParams::default();
        let logits = m.classifier().logits(&c);
        let single = TargetSet {
            graph_ids: vec![0],
            concepts: vec![c],
        };
        assert_eq!(
            avg_logit_diff(&m, &single, &p).unwrap(),
            logits[0] - logits[1]
        );
    }
}
