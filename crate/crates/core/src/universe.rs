//! The concept universe: per-level vocabularies and selections that define
//! the bottleneck coordinates.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::concepts::{
    concat_levels, onehot_scores_from_counts, select_top_m, ConceptLabelVector, SelectedConcepts,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::wl::{build_frequency_matrix, ConceptVocabulary, GraphCodes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelConcepts {
    pub vocabulary: ConceptVocabulary,
    pub selected: SelectedConcepts,
}

/// Where a bottleneck coordinate comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptRef {
    pub index: usize,
    pub level: usize,
    pub position: usize,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptUniverse {
    pub levels: Vec<LevelConcepts>,
}

impl ConceptUniverse {
    /// Builds vocabularies from `codes` and selects up to `m` concepts per
    /// level by information gain against `labels`.
    pub fn fit(
        codes: &[&GraphCodes],
        labels: &[usize],
        max_height: usize,
        m: usize,
    ) -> Result<Self> {
        if codes.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} graphs for {} labels",
                codes.len(),
                labels.len()
            )));
        }
        if max_height == 0 || m == 0 {
            return Err(Error::Config("K and M must be positive".into()));
        }
        let levels = (1..=max_height)
            .map(|k| {
                let vocabulary = ConceptVocabulary::build(codes.iter().copied(), k);
                let freq = build_frequency_matrix(codes.iter().copied(), &vocabulary)?;
                let selected = select_top_m(&vocabulary, &freq, labels, m)?;
                Ok(LevelConcepts {
                    vocabulary,
                    selected,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConceptUniverse { levels })
    }

    pub fn max_height(&self) -> usize {
        self.levels.len()
    }

    /// Bottleneck width of every level.
    pub fn widths(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.selected.len()).collect()
    }

    pub fn total_width(&self) -> usize {
        self.widths().iter().sum()
    }

    pub fn concept(&self, index: usize) -> Option<ConceptRef> {
        let mut offset = 0;
        for (k, level) in self.levels.iter().enumerate() {
            let w = level.selected.len();
            if index < offset + w {
                let position = index - offset;
                return Some(ConceptRef {
                    index,
                    level: k + 1,
                    position,
                    code: level.selected.codes[position].clone(),
                });
            }
            offset += w;
        }
        None
    }

    pub fn concepts(&self) -> Vec<ConceptRef> {
        (0..self.total_width())
            .filter_map(|i| self.concept(i))
            .collect()
    }

    /// One-hot (cosine) concept labels of any graph. Codes outside the
    /// vocabulary count toward the frequency norm.
    pub fn onehot_labels<T: Scalar>(&self, codes: &GraphCodes) -> Result<ConceptLabelVector<T>> {
        if codes.max_height() < self.max_height() {
            return Err(Error::Shape(format!(
                "graph refined to height {} but universe needs {}",
                codes.max_height(),
                self.max_height()
            )));
        }
        let per_level = self
            .levels
            .iter()
            .enumerate()
            .map(|(k, level)| onehot_scores_from_counts(codes.counts(k + 1), &level.selected))
            .collect();
        concat_levels(per_level, &self.widths())
    }

    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("universe serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::onehot_concept_labels;
    use crate::graph::Graph;
    use crate::wl::{frequency_row, wl_refine};

    #[test]
    fn widths_and_lookup() {
        let a = Graph::new(0, 3, vec![(0, 1), (1, 2)], vec![0, 1, 0]).unwrap();
        let b = Graph::new(1, 2, vec![(0, 1)], vec![1, 1]).unwrap();
        let codes = [wl_refine(&a, 2), wl_refine(&b, 2)];
        let refs: Vec<&GraphCodes> = codes.iter().collect();
        let u = ConceptUniverse::fit(&refs, &[0, 1], 2, 2).unwrap();
        assert_eq!(u.widths(), vec![2, 2]);
        let c = u.concept(3).unwrap();
        assert_eq!((c.level, c.position), (2, 1));
        assert!(u.concept(4).is_none());
    }

    #[test]
    fn onehot_labels_agree_with_frequency_route() {
        let a = Graph::new(0, 4, vec![(0, 1), (1, 2), (2, 3)], vec![0, 1, 1, 0]).unwrap();
        let b = Graph::new(1, 3, vec![(0, 1), (0, 2)], vec![2, 0, 0]).unwrap();
        let codes = [wl_refine(&a, 2), wl_refine(&b, 2)];
        let refs: Vec<&GraphCodes> = codes.iter().collect();
        let u = ConceptUniverse::fit(&refs, &[0, 1], 2, 3).unwrap();
        for gc in &codes {
            let lv: ConceptLabelVector<f64> = u.onehot_labels(gc).unwrap();
            for (k, level) in u.levels.iter().enumerate() {
                let row = frequency_row(gc, &level.vocabulary).unwrap();
                let direct: Vec<f64> = onehot_concept_labels(&row, &level.selected);
                assert_eq!(lv.per_level[k], direct);
            }
        }
    }
}
