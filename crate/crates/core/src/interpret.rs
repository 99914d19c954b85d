//! Reading the model back: weight flows of the linear head, key concepts,
//! and the node sets they cover.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::concepts::{column_gains, rank_by_gain};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::roc_auc;
use crate::net::GcbmModel;
use crate::scalar::Scalar;
use crate::universe::{ConceptRef, ConceptUniverse};
use crate::wl::{build_frequency_matrix, ConceptVocabulary, GraphCodes, WlCode};

/// One edge of the class-concept flow diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFlow {
    pub class: usize,
    pub concept: ConceptRef,
    pub weight: f64,
    /// `exp(|weight|)`.
    pub display_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFlows {
    pub class: usize,
    pub flows: Vec<WeightFlow>,
}

/// The `top_t` largest-magnitude classifier weights of every class, largest
/// first. Equal magnitudes keep bottleneck order.
pub fn export_weight_flows<T: Scalar>(
    model: &GcbmModel<T>,
    universe: &ConceptUniverse,
    top_t: usize,
) -> Result<Vec<ClassFlows>> {
    let classifier = model.classifier();
    if universe.total_width() != classifier.width {
        return Err(Error::Shape(format!(
            "universe has {} concepts, classifier width is {}",
            universe.total_width(),
            classifier.width
        )));
    }
    let concepts = universe.concepts();
    Ok((0..classifier.num_classes)
        .map(|class| {
            let row = classifier.row(class);
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| {
                row[b]
                    .abs()
                    .as_f64()
                    .total_cmp(&row[a].abs().as_f64())
                    .then(a.cmp(&b))
            });
            order.truncate(top_t);
            let flows = order
                .into_iter()
                .map(|j| {
                    let weight = row[j].as_f64();
                    WeightFlow {
                        class,
                        concept: concepts[j].clone(),
                        weight,
                        display_width: weight.abs().exp(),
                    }
                })
                .collect();
            ClassFlows { class, flows }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyFlow {
    pub concept_code: String,
    pub level: usize,
    pub weight: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyClass {
    pub class: usize,
    pub flows: Vec<SankeyFlow>,
}

/// Wire format of the flow diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyExport {
    pub classes: Vec<SankeyClass>,
}

impl From<&[ClassFlows]> for SankeyExport {
    fn from(flows: &[ClassFlows]) -> Self {
        SankeyExport {
            classes: flows
                .iter()
                .map(|cf| SankeyClass {
                    class: cf.class,
                    flows: cf
                        .flows
                        .iter()
                        .map(|f| SankeyFlow {
                            concept_code: f.concept.code.clone(),
                            level: f.concept.level,
                            weight: f.weight,
                            width: f.display_width,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyConcept {
    pub code: WlCode,
    pub gain: f64,
}

/// The `m_i` codes of highest information gain over the vocabularies of all
/// levels `1..=max_height`, ties broken by code then level.
pub fn select_key_concepts(
    codes: &[&GraphCodes],
    labels: &[usize],
    max_height: usize,
    m_i: usize,
) -> Result<Vec<KeyConcept>> {
    if codes.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} graphs for {} labels",
            codes.len(),
            labels.len()
        )));
    }
    let mut candidates: Vec<(f64, (String, usize))> = Vec::new();
    for k in 1..=max_height {
        let vocab = ConceptVocabulary::build(codes.iter().copied(), k);
        let freq = build_frequency_matrix(codes.iter().copied(), &vocab)?;
        let gains = column_gains(&freq, labels)?;
        candidates.extend(
            gains
                .into_iter()
                .enumerate()
                .map(|(j, g)| (g, (vocab.code(j).to_string(), k))),
        );
    }
    rank_by_gain(&mut candidates);
    candidates.truncate(m_i);
    Ok(candidates
        .into_iter()
        .map(|(gain, (code, height))| KeyConcept {
            code: WlCode { code, height },
            gain,
        })
        .collect())
}

/// Nodes of every occurrence of `code`: each root whose height-k code
/// matches, plus all nodes within k hops of it.
pub fn map_concept_to_nodes(graph: &Graph, codes: &GraphCodes, code: &WlCode) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    if code.height == 0 || code.height > codes.max_height() {
        return out;
    }
    let roots = codes
        .level(code.height)
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == code.code)
        .map(|(v, _)| v);
    let mut depth = vec![usize::MAX; graph.num_nodes()];
    for root in roots {
        depth.fill(usize::MAX);
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            out.insert(v);
            if depth[v] == code.height {
                continue;
            }
            for &u in graph.neighbors(v) {
                if depth[u] == usize::MAX {
                    depth[u] = depth[v] + 1;
                    queue.push_back(u);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphPrediction {
    pub graph_id: usize,
    pub node_scores: Vec<f64>,
    /// Nodes with score at least one half, ascending.
    pub node_set: Vec<usize>,
}

/// Union of the nodes covered by every key concept.
pub fn predict_subgraph(
    graph: &Graph,
    codes: &GraphCodes,
    key_concepts: &[KeyConcept],
) -> SubgraphPrediction {
    let mut union = BTreeSet::new();
    for kc in key_concepts {
        union.extend(map_concept_to_nodes(graph, codes, &kc.code));
    }
    let node_scores = (0..graph.num_nodes())
        .map(|v| if union.contains(&v) { 1.0 } else { 0.0 })
        .collect();
    SubgraphPrediction {
        graph_id: graph.id,
        node_scores,
        node_set: union.into_iter().collect(),
    }
}

/// Node-level ROC AUC pooled over all graphs.
pub fn interpretability_auc(predictions: &[SubgraphPrediction], truth: &[&[bool]]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} masks",
            predictions.len(),
            truth.len()
        )));
    }
    let mut scores = Vec::new();
    let mut positive = Vec::new();
    for (p, mask) in predictions.iter().zip(truth) {
        if p.node_scores.len() != mask.len() {
            return Err(Error::Shape(format!(
                "graph {}: {} node scores for {} mask entries",
                p.graph_id,
                p.node_scores.len(),
                mask.len()
            )));
        }
        scores.extend_from_slice(&p.node_scores);
        positive.extend_from_slice(mask);
    }
    roc_auc(&scores, &positive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::labeled_triangle;
    use crate::wl::wl_refine;

    #[test]
    fn labeled_triangle_level_two_covers_graph() {
        let g = labeled_triangle();
        let codes = wl_refine(&g, 2);
        let code = WlCode {
            code: "1,(2,13)(3,123)".into(),
            height: 2,
        };
        assert_eq!(codes.level(2)[0], code.code);
        assert_eq!(
            map_concept_to_nodes(&g, &codes, &code),
            BTreeSet::from([0, 1, 2])
        );
        let absent = WlCode {
            code: "9,".into(),
            height: 1,
        };
        assert!(map_concept_to_nodes(&g, &codes, &absent).is_empty());
    }

    #[test]
    fn one_hop_expansion() {
        // path 0-1-2-3, root 1 at height 1
        let g = Graph::new(0, 4, vec![(0, 1), (1, 2), (2, 3)], vec![0, 5, 0, 0]).unwrap();
        let codes = wl_refine(&g, 1);
        let code = codes.code(1, 1);
        assert_eq!(
            map_concept_to_nodes(&g, &codes, &code),
            BTreeSet::from([0, 1, 2])
        );
    }

    #[test]
    fn auc_extremes() {
        let pred = |scores: Vec<f64>| SubgraphPrediction {
            graph_id: 0,
            node_set: (0..scores.len()).filter(|&v| scores[v] >= 0.5).collect(),
            node_scores: scores,
        };
        let mask = [true, false, true, false];
        let perfect = pred(vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(interpretability_auc(&[perfect], &[&mask]).unwrap(), 1.0);
        let partial = pred(vec![1.0, 1.0, 0.0, 0.0]);
        let inverted = pred(vec![0.0, 0.0, 1.0, 1.0]);
        let a = interpretability_auc(&[partial], &[&mask]).unwrap();
        let b = interpretability_auc(&[inverted], &[&mask]).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
        assert!(interpretability_auc(&[pred(vec![1.0, 0.0])], &[&[true, true]]).is_err());
    }
}
