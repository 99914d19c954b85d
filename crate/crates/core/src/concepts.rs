//! Information-gain concept selection and one-hot concept labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::wl::{ConceptVocabulary, FrequencyMatrix, SparseRow};

/// Shannon entropy in bits of a count histogram.
pub fn entropy_bits<T: Scalar>(counts: &[usize]) -> T {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return T::zero();
    }
    let total = T::from_usize(total).expect("count fits");
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = T::from_usize(c).expect("count fits") / total;
            -p * p.log2()
        })
        .sum()
}

/// IG from per-class counts of graphs where the concept is present, given
/// the per-class totals.
pub fn information_gain_from_counts<T: Scalar>(present: &[usize], totals: &[usize]) -> T {
    let n: usize = totals.iter().sum();
    if n == 0 {
        return T::zero();
    }
    let absent: Vec<usize> = totals.iter().zip(present).map(|(t, p)| t - p).collect();
    let n_present: usize = present.iter().sum();
    let n_absent = n - n_present;
    let nt = T::from_usize(n).expect("count fits");
    let h = entropy_bits::<T>(totals);
    let conditional = T::from_usize(n_present).expect("count fits") / nt * entropy_bits(present)
        + T::from_usize(n_absent).expect("count fits") / nt * entropy_bits(&absent);
    // Clamp tiny negative round-off.
    (h - conditional).max(T::zero())
}

fn class_totals(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut totals = vec![0; num_classes];
    for &c in labels {
        totals[c] += 1;
    }
    totals
}

fn num_classes_of(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |&c| c + 1)
}

/// `H(D) - H(D | count > 0)` in bits for one frequency column.
pub fn information_gain<T: Scalar>(column: &[u32], labels: &[usize]) -> Result<T> {
    if column.len() != labels.len() {
        return Err(Error::Shape(format!(
            "column has {} entries for {} labels",
            column.len(),
            labels.len()
        )));
    }
    let k = num_classes_of(labels);
    let totals = class_totals(labels, k);
    let mut present = vec![0; k];
    for (&x, &c) in column.iter().zip(labels) {
        if x > 0 {
            present[c] += 1;
        }
    }
    Ok(information_gain_from_counts(&present, &totals))
}

/// IG of every column of a frequency matrix.
pub fn column_gains(freq: &FrequencyMatrix, labels: &[usize]) -> Result<Vec<f64>> {
    if freq.num_rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} frequency rows for {} labels",
            freq.num_rows(),
            labels.len()
        )));
    }
    let k = num_classes_of(labels);
    let totals = class_totals(labels, k);
    let mut present = vec![vec![0usize; k]; freq.num_columns];
    for (row, &c) in freq.rows.iter().zip(labels) {
        for &(j, n) in row {
            if n > 0 {
                present[j][c] += 1;
            }
        }
    }
    Ok(present
        .iter()
        .map(|p| information_gain_from_counts::<f64>(p, &totals))
        .collect())
}

/// Top-M concepts of one level, by descending information gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedConcepts {
    pub level: usize,
    pub concept_ids: Vec<usize>,
    pub codes: Vec<String>,
    pub gains: Vec<f64>,
}

impl SelectedConcepts {
    pub fn len(&self) -> usize {
        self.concept_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concept_ids.is_empty()
    }
}

/// Orders candidates by gain (descending) then by code (ascending).
pub(crate) fn rank_by_gain<K: Ord>(candidates: &mut [(f64, K)]) {
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
}

pub fn select_top_m(
    vocab: &ConceptVocabulary,
    freq: &FrequencyMatrix,
    labels: &[usize],
    m: usize,
) -> Result<SelectedConcepts> {
    if freq.num_columns != vocab.len() || freq.level != vocab.level {
        return Err(Error::Shape(format!(
            "frequency matrix (level {}, {} columns) does not match vocabulary (level {}, {} codes)",
            freq.level,
            freq.num_columns,
            vocab.level,
            vocab.len()
        )));
    }
    let gains = column_gains(freq, labels)?;
    let take = if m > vocab.len() {
        log::warn!(
            "level {}: requested {m} concepts but vocabulary has {}; selecting all",
            vocab.level,
            vocab.len()
        );
        vocab.len()
    } else {
        m
    };
    // Vocabulary positions are in lexicographic code order.
    let mut ranked: Vec<(f64, usize)> = gains.iter().copied().zip(0..).collect();
    rank_by_gain(&mut ranked);
    ranked.truncate(take);
    Ok(SelectedConcepts {
        level: vocab.level,
        concept_ids: ranked.iter().map(|&(_, j)| j).collect(),
        codes: ranked
            .iter()
            .map(|&(_, j)| vocab.code(j).to_string())
            .collect(),
        gains: ranked.iter().map(|&(g, _)| g).collect(),
    })
}

/// Cosine of the frequency row with each selected one-hot concept vector:
/// `row[id_j] / ||row||`. A zero row scores zero everywhere.
pub fn onehot_concept_labels<T: Scalar>(row: &SparseRow, selected: &SelectedConcepts) -> Vec<T> {
    let norm_sq: f64 = row.iter().map(|&(_, n)| (n as f64) * (n as f64)).sum();
    if norm_sq == 0.0 {
        return vec![T::zero(); selected.len()];
    }
    let norm = T::from_f64_lossy(norm_sq).sqrt();
    selected
        .concept_ids
        .iter()
        .map(|&id| match row.binary_search_by_key(&id, |&(c, _)| c) {
            Ok(p) => T::from_u32(row[p].1).expect("count fits") / norm,
            Err(_) => T::zero(),
        })
        .collect()
}

/// Same scores computed from a code-count map. Codes absent from the
/// selection still contribute to the norm, so for a graph whose codes all
/// lie in the vocabulary this equals [`onehot_concept_labels`].
pub fn onehot_scores_from_counts<'a, T: Scalar>(
    counts: impl IntoIterator<Item = (&'a str, u32)>,
    selected: &SelectedConcepts,
) -> Vec<T> {
    let counts: Vec<(&str, u32)> = counts.into_iter().collect();
    let norm_sq: f64 = counts.iter().map(|&(_, n)| (n as f64) * (n as f64)).sum();
    if norm_sq == 0.0 {
        return vec![T::zero(); selected.len()];
    }
    let norm = T::from_f64_lossy(norm_sq).sqrt();
    selected
        .codes
        .iter()
        .map(|code| {
            counts
                .iter()
                .find(|(c, _)| *c == code.as_str())
                .map_or(T::zero(), |&(_, n)| {
                    T::from_u32(n).expect("count fits") / norm
                })
        })
        .collect()
}

/// Ground-truth concept scores of one graph: one block per level plus the
/// concatenation in level order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ConceptLabelVector<T> {
    pub per_level: Vec<Vec<T>>,
    pub concat: Vec<T>,
}

/// Concatenates level blocks, checking each against its expected width.
pub fn concat_levels<T: Scalar>(
    per_level: Vec<Vec<T>>,
    widths: &[usize],
) -> Result<ConceptLabelVector<T>> {
    if per_level.len() != widths.len() {
        return Err(Error::Shape(format!(
            "{} level blocks for {} levels",
            per_level.len(),
            widths.len()
        )));
    }
    for (k, (block, &w)) in per_level.iter().zip(widths).enumerate() {
        if block.len() != w {
            return Err(Error::Shape(format!(
                "level {} block has length {}, expected {w}",
                k + 1,
                block.len()
            )));
        }
    }
    let concat = per_level.iter().flatten().copied().collect();
    Ok(ConceptLabelVector { per_level, concat })
}
