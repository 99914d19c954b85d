//! Canonical WL-subtree encodings, per-level vocabularies and frequency rows.
//!
//! A height-1 code is the root label, a comma, then the sorted neighbor
//! labels concatenated (`"2,13"`). A height-k code is the root label, a
//! comma, then each neighbor's height-(k-1) code in parentheses, sorted
//! (`"1,(2,13)(3,123)"`). When any neighbor label has more than one digit
//! the height-1 labels are joined with `.` so codes stay unambiguous.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WlCode {
    pub code: String,
    pub height: usize,
}

/// Per-node codes of one graph for heights `1..=max_height`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphCodes {
    levels: Vec<Vec<String>>,
}

impl GraphCodes {
    pub fn max_height(&self) -> usize {
        self.levels.len()
    }

    /// Codes of every node at height `k` (1-based).
    pub fn level(&self, k: usize) -> &[String] {
        &self.levels[k - 1]
    }

    pub fn code(&self, k: usize, v: usize) -> WlCode {
        WlCode {
            code: self.levels[k - 1][v].clone(),
            height: k,
        }
    }

    /// Sorted multiset of the codes at height `k`.
    pub fn sorted_level(&self, k: usize) -> Vec<String> {
        let mut codes = self.level(k).to_vec();
        codes.sort();
        codes
    }

    /// Occurrence count per distinct code at height `k`.
    pub fn counts(&self, k: usize) -> BTreeMap<&str, u32> {
        let mut counts = BTreeMap::new();
        for c in self.level(k) {
            *counts.entry(c.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

fn height_one_code(graph: &Graph, v: usize) -> String {
    let mut labels: Vec<u32> = graph.neighbors(v).iter().map(|&u| graph.label(u)).collect();
    labels.sort_unstable();
    let sep = if labels.iter().any(|&l| l >= 10) {
        "."
    } else {
        ""
    };
    let joined = labels
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(sep);
    format!("{},{}", graph.label(v), joined)
}

/// Computes canonical codes for every node at heights `1..=max_height`.
pub fn wl_refine(graph: &Graph, max_height: usize) -> GraphCodes {
    assert!(max_height >= 1, "WL height must be at least 1");
    let n = graph.num_nodes();
    let mut levels: Vec<Vec<String>> = Vec::with_capacity(max_height);
    levels.push((0..n).map(|v| height_one_code(graph, v)).collect());
    for _ in 1..max_height {
        let prev = levels.last().expect("level 1 present");
        let next = (0..n)
            .map(|v| {
                let mut children: Vec<&str> = graph
                    .neighbors(v)
                    .iter()
                    .map(|&u| prev[u].as_str())
                    .collect();
                children.sort_unstable();
                let len = children.iter().map(|c| c.len() + 2).sum::<usize>() + 12;
                let mut code = String::with_capacity(len);
                code.push_str(&graph.label(v).to_string());
                code.push(',');
                for c in children {
                    code.push('(');
                    code.push_str(c);
                    code.push(')');
                }
                code
            })
            .collect();
        levels.push(next);
    }
    GraphCodes { levels }
}

/// Refines every graph of the dataset in parallel; output order follows
/// the dataset.
pub fn refine_dataset(dataset: &GraphDataset, max_height: usize) -> Vec<GraphCodes> {
    dataset
        .graphs
        .par_iter()
        .map(|g| wl_refine(g, max_height))
        .collect()
}

/// Sorted, duplicate-free code list of one level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct ConceptVocabulary {
    pub level: usize,
    codes: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    level: usize,
    codes: Vec<String>,
}

impl From<VocabularyRepr> for ConceptVocabulary {
    fn from(r: VocabularyRepr) -> Self {
        ConceptVocabulary::from_codes(r.level, r.codes)
    }
}

impl From<ConceptVocabulary> for VocabularyRepr {
    fn from(v: ConceptVocabulary) -> Self {
        VocabularyRepr {
            level: v.level,
            codes: v.codes,
        }
    }
}

impl ConceptVocabulary {
    /// Builds the vocabulary from any collection of codes (sorted and
    /// deduplicated here).
    pub fn from_codes<I, S>(level: usize, codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = codes.into_iter().map(Into::into).collect();
        let codes: Vec<String> = set.into_iter().collect();
        let index = codes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        ConceptVocabulary {
            level,
            codes,
            index,
        }
    }

    /// Vocabulary of height `level` over the given graphs' codes.
    pub fn build<'a>(codes: impl IntoIterator<Item = &'a GraphCodes>, level: usize) -> Self {
        let mut set = BTreeSet::new();
        for gc in codes {
            for c in gc.level(level) {
                if !set.contains(c.as_str()) {
                    set.insert(c.clone());
                }
            }
        }
        Self::from_codes(level, set)
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn position(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn code(&self, position: usize) -> &str {
        &self.codes[position]
    }
}

/// Vocabulary of `dataset` at height `level`.
pub fn build_vocabulary(dataset: &GraphDataset, level: usize) -> ConceptVocabulary {
    let codes = refine_dataset(dataset, level);
    ConceptVocabulary::build(&codes, level)
}

/// Sparse occurrence counts: `(vocabulary position, count)` sorted by position.
pub type SparseRow = Vec<(usize, u32)>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyMatrix {
    pub level: usize,
    pub num_columns: usize,
    pub rows: Vec<SparseRow>,
}

impl FrequencyMatrix {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Dense column `j` (counts per graph).
    pub fn column(&self, j: usize) -> Vec<u32> {
        self.rows
            .iter()
            .map(|row| match row.binary_search_by_key(&j, |&(c, _)| c) {
                Ok(p) => row[p].1,
                Err(_) => 0,
            })
            .collect()
    }

    pub fn dense_row(&self, i: usize) -> Vec<u32> {
        let mut dense = vec![0; self.num_columns];
        for &(c, n) in &self.rows[i] {
            dense[c] = n;
        }
        dense
    }
}

/// Frequency row of one graph. Fails on codes outside the vocabulary.
pub fn frequency_row(codes: &GraphCodes, vocab: &ConceptVocabulary) -> Result<SparseRow> {
    let mut row = Vec::new();
    for (code, count) in codes.counts(vocab.level) {
        let pos = vocab.position(code).ok_or_else(|| Error::VocabularyMiss {
            level: vocab.level,
            code: code.to_string(),
        })?;
        row.push((pos, count));
    }
    row.sort_unstable();
    Ok(row)
}

pub fn build_frequency_matrix<'a>(
    codes: impl IntoIterator<Item = &'a GraphCodes>,
    vocab: &ConceptVocabulary,
) -> Result<FrequencyMatrix> {
    let rows = codes
        .into_iter()
        .map(|gc| frequency_row(gc, vocab))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyMatrix {
        level: vocab.level,
        num_columns: vocab.len(),
        rows,
    })
}

/// Occurrence count of every vocabulary entry across all rows, descending.
/// This is the rank statistic behind the power-law observation.
pub fn rank_distribution(freq: &FrequencyMatrix) -> Vec<u64> {
    let mut totals = vec![0u64; freq.num_columns];
    for row in &freq.rows {
        for &(c, n) in row {
            totals[c] += n as u64;
        }
    }
    totals.sort_unstable_by(|a, b| b.cmp(a));
    totals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::labeled_triangle;

    #[test]
    fn labeled_triangle_codes() {
        let g = labeled_triangle();
        let codes = wl_refine(&g, 2);
        assert_eq!(codes.level(1), &["1,23", "2,13", "3,123"]);
        assert_eq!(codes.level(2)[0], "1,(2,13)(3,123)");
    }

    #[test]
    fn isolated_node_has_empty_children() {
        let g = Graph::new(0, 1, vec![], vec![7]).unwrap();
        let codes = wl_refine(&g, 3);
        assert_eq!(codes.level(1), &["7,"]);
        assert_eq!(codes.level(3), &["7,"]);
    }

    #[test]
    fn path_codes() {
        let g = Graph::new(0, 3, vec![(0, 1), (1, 2)], vec![1, 1, 1]).unwrap();
        assert_eq!(wl_refine(&g, 1).level(1), &["1,1", "1,11", "1,1"]);
    }

    #[test]
    fn multi_digit_labels_use_separator() {
        let a = Graph::new(0, 3, vec![(0, 1), (0, 2)], vec![0, 1, 12]).unwrap();
        let b = Graph::new(0, 4, vec![(0, 1), (0, 2), (0, 3)], vec![0, 1, 1, 2]).unwrap();
        let ca = wl_refine(&a, 1);
        let cb = wl_refine(&b, 1);
        assert_eq!(ca.level(1)[0], "0,1.12");
        assert_eq!(cb.level(1)[0], "0,112");
    }

    #[test]
    fn labeled_triangle_vocabulary_and_row() {
        let g = labeled_triangle();
        let codes = vec![wl_refine(&g, 1)];
        let vocab = ConceptVocabulary::build(&codes, 1);
        assert_eq!(vocab.codes(), &["1,23", "2,13", "3,123"]);
        let freq = build_frequency_matrix(&codes, &vocab).unwrap();
        assert_eq!(freq.dense_row(0), vec![1, 1, 1]);
    }

    #[test]
    fn foreign_code_is_a_vocabulary_miss() {
        let g = labeled_triangle();
        let vocab = ConceptVocabulary::from_codes(1, ["1,23"]);
        let err = frequency_row(&wl_refine(&g, 1), &vocab).unwrap_err();
        assert!(matches!(err, Error::VocabularyMiss { level: 1, .. }));
    }

    #[test]
    fn vocabulary_serde_rebuilds_index() {
        let v = ConceptVocabulary::from_codes(2, ["b", "a", "b"]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"level":2,"codes":["a","b"]}"#);
        let back: ConceptVocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back.position("b"), Some(1));
    }
}
