//! Graph-sentence corpus and co-occurrence (GloVe-style) concept embeddings.
//!
//! Every graph contributes one sentence per level: its node codes sorted
//! lexicographically. Each level also contributes one vocabulary sentence
//! made of its selected concept codes. Co-occurrence is counted over whole
//! sentences, since token order inside a sentence is an artifact of sorting.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concepts::{concat_levels, ConceptLabelVector};
use crate::error::{Error, Result};
use crate::scalar::{cosine, Scalar};
use crate::universe::ConceptUniverse;
use crate::wl::GraphCodes;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSentence {
    pub level: usize,
    pub tokens: Vec<String>,
}

impl GraphSentence {
    pub fn new(level: usize, mut tokens: Vec<String>) -> Self {
        tokens.sort();
        GraphSentence { level, tokens }
    }

    pub fn of_graph(codes: &GraphCodes, level: usize) -> Self {
        GraphSentence {
            level,
            tokens: codes.sorted_level(level),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceCorpus {
    pub sentences: Vec<GraphSentence>,
    tokens: Vec<String>,
    token_ids: HashMap<String, usize>,
}

impl SentenceCorpus {
    pub fn from_sentences(sentences: Vec<GraphSentence>) -> Self {
        let mut distinct: Vec<String> = sentences
            .iter()
            .flat_map(|s| s.tokens.iter().cloned())
            .collect();
        distinct.sort();
        distinct.dedup();
        let token_ids = distinct
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        SentenceCorpus {
            sentences,
            tokens: distinct,
            token_ids,
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.token_ids.get(token).copied()
    }

    /// Symmetric co-occurrence counts keyed by `(i, j)` with `i <= j`.
    ///
    /// Within one sentence, distinct tokens `i != j` co-occur `n_i * n_j`
    /// times and a token co-occurs with itself `n_i * (n_i - 1)` times.
    pub fn cooccurrence(&self) -> BTreeMap<(usize, usize), f64> {
        let mut counts = BTreeMap::new();
        for s in &self.sentences {
            let mut local: BTreeMap<usize, usize> = BTreeMap::new();
            for t in &s.tokens {
                *local.entry(self.token_ids[t]).or_insert(0) += 1;
            }
            let entries: Vec<(usize, usize)> = local.into_iter().collect();
            for (a, &(i, ni)) in entries.iter().enumerate() {
                if ni > 1 {
                    *counts.entry((i, i)).or_insert(0.0) += (ni * (ni - 1)) as f64;
                }
                for &(j, nj) in &entries[a + 1..] {
                    *counts.entry((i, j)).or_insert(0.0) += (ni * nj) as f64;
                }
            }
        }
        counts
    }
}

/// Builds the corpus: for each level, one sentence per graph followed by
/// the level's vocabulary sentence. Yields `n * K + K` sentences.
pub fn build_corpus(codes: &[&GraphCodes], universe: &ConceptUniverse) -> SentenceCorpus {
    let mut sentences =
        Vec::with_capacity(codes.len() * universe.max_height() + universe.max_height());
    for (k, level) in universe.levels.iter().enumerate() {
        let height = k + 1;
        sentences.extend(codes.iter().map(|gc| GraphSentence::of_graph(gc, height)));
        sentences.push(GraphSentence::new(height, level.selected.codes.clone()));
    }
    SentenceCorpus::from_sentences(sentences)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weighting saturates at this co-occurrence count.
    pub x_max: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 64,
            epochs: 100,
            learning_rate: 0.05,
            x_max: 100.0,
            alpha: 0.75,
            seed: 0,
        }
    }
}

/// One vector per token; `vectors` is row-major `tokens.len() x dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TableRepr<T>", into = "TableRepr<T>", bound = "T: Scalar")]
pub struct ConceptEmbeddingTable<T> {
    pub dim: usize,
    tokens: Vec<String>,
    vectors: Vec<T>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct TableRepr<T> {
    dim: usize,
    tokens: Vec<String>,
    vectors: Vec<Vec<T>>,
}

impl<T: Scalar> From<TableRepr<T>> for ConceptEmbeddingTable<T> {
    fn from(r: TableRepr<T>) -> Self {
        let vectors = r.vectors.into_iter().flatten().collect();
        ConceptEmbeddingTable::new(r.dim, r.tokens, vectors)
    }
}

impl<T: Scalar> From<ConceptEmbeddingTable<T>> for TableRepr<T> {
    fn from(t: ConceptEmbeddingTable<T>) -> Self {
        let vectors = t.vectors.chunks(t.dim.max(1)).map(<[T]>::to_vec).collect();
        TableRepr {
            dim: t.dim,
            tokens: t.tokens,
            vectors,
        }
    }
}

impl<T: Scalar> ConceptEmbeddingTable<T> {
    pub fn new(dim: usize, tokens: Vec<String>, vectors: Vec<T>) -> Self {
        assert_eq!(vectors.len(), tokens.len() * dim, "embedding table shape");
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        ConceptEmbeddingTable {
            dim,
            tokens,
            vectors,
            index,
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<&[T]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn is_finite(&self) -> bool {
        self.vectors.iter().all(|v| v.is_finite())
    }
}

/// Fits embeddings by weighted least squares on log co-occurrence:
/// `sum f(X_ij) (w_i . v_j + b_i + c_j - ln X_ij)^2` with
/// `f(x) = min(1, (x / x_max)^alpha)`, optimized with AdaGrad. The returned
/// vector of a token is `w_i + v_i`.
pub fn train_embeddings<T: Scalar>(
    corpus: &SentenceCorpus,
    config: &EmbeddingConfig,
) -> Result<ConceptEmbeddingTable<T>> {
    let vocab = corpus.tokens().len();
    if vocab < 2 {
        return Err(Error::DegenerateCorpus(format!(
            "{vocab} distinct token(s); need at least 2"
        )));
    }
    if config.dim < 2 {
        return Err(Error::Config(format!(
            "embedding dimension {} < 2",
            config.dim
        )));
    }
    if config.dim >= vocab {
        log::warn!(
            "embedding dimension {} is not smaller than the token vocabulary ({vocab})",
            config.dim
        );
    }
    let d = config.dim;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for ((i, j), x) in corpus.cooccurrence() {
        entries.push((i, j, x));
        if i != j {
            entries.push((j, i, x));
        }
    }
    if entries.is_empty() {
        return Err(Error::DegenerateCorpus(
            "no co-occurring token pairs".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = 0.5 / d as f64;
    let mut init =
        |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-scale..scale)).collect() };
    let mut w = init(vocab * d);
    let mut v = init(vocab * d);
    let mut bw = vec![0.0f64; vocab];
    let mut bv = vec![0.0f64; vocab];
    let mut gw = vec![1.0f64; vocab * d];
    let mut gv = vec![1.0f64; vocab * d];
    let mut gbw = vec![1.0f64; vocab];
    let mut gbv = vec![1.0f64; vocab];
    let lr = config.learning_rate;

    let mut order: Vec<usize> = (0..entries.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut cost = 0.0;
        for &e in &order {
            let (i, j, x) = entries[e];
            let weight = if x < config.x_max {
                (x / config.x_max).powf(config.alpha)
            } else {
                1.0
            };
            let wi = &w[i * d..(i + 1) * d];
            let vj = &v[j * d..(j + 1) * d];
            let dot: f64 = wi.iter().zip(vj).map(|(a, b)| a * b).sum();
            let diff = dot + bw[i] + bv[j] - x.ln();
            let fdiff = weight * diff;
            cost += 0.5 * fdiff * diff;
            for t in 0..d {
                let gi = fdiff * v[j * d + t];
                let gj = fdiff * w[i * d + t];
                w[i * d + t] -= lr * gi / gw[i * d + t].sqrt();
                v[j * d + t] -= lr * gj / gv[j * d + t].sqrt();
                gw[i * d + t] += gi * gi;
                gv[j * d + t] += gj * gj;
            }
            bw[i] -= lr * fdiff / gbw[i].sqrt();
            bv[j] -= lr * fdiff / gbv[j].sqrt();
            gbw[i] += fdiff * fdiff;
            gbv[j] += fdiff * fdiff;
        }
        if !cost.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log::trace!("embedding epoch {epoch}: cost {cost:.6}");
    }

    let vectors = w
        .iter()
        .zip(&v)
        .map(|(a, b)| T::from_f64_lossy(a + b))
        .collect();
    Ok(ConceptEmbeddingTable::new(
        d,
        corpus.tokens().to_vec(),
        vectors,
    ))
}

/// Sum of the sentence's token vectors.
pub fn embed_graph<T: Scalar>(
    sentence: &GraphSentence,
    table: &ConceptEmbeddingTable<T>,
) -> Result<Vec<T>> {
    let mut acc = vec![T::zero(); table.dim];
    for token in &sentence.tokens {
        let vec = table.get(token).ok_or_else(|| Error::VocabularyMiss {
            level: sentence.level,
            code: token.clone(),
        })?;
        for (a, &x) in acc.iter_mut().zip(vec) {
            *a += x;
        }
    }
    Ok(acc)
}

/// Like [`embed_graph`] but skips tokens the table has never seen. Used
/// for graphs outside the corpus.
pub fn embed_graph_known<T: Scalar>(
    sentence: &GraphSentence,
    table: &ConceptEmbeddingTable<T>,
) -> Vec<T> {
    let mut acc = vec![T::zero(); table.dim];
    for vec in sentence.tokens.iter().filter_map(|t| table.get(t)) {
        for (a, &x) in acc.iter_mut().zip(vec) {
            *a += x;
        }
    }
    acc
}

/// Cosine of the graph embedding with each concept embedding.
pub fn embedding_concept_labels<T: Scalar>(
    graph_vec: &[T],
    concepts: &[(&str, &[T])],
) -> Result<Vec<T>> {
    concepts
        .iter()
        .map(|&(code, vec)| {
            if vec.iter().all(|x| *x == T::zero()) {
                return Err(Error::Config(format!(
                    "concept {code:?} has a zero embedding"
                )));
            }
            Ok(cosine(graph_vec, vec))
        })
        .collect()
}

/// Embedding-based concept labels of one graph across all levels.
pub fn embedding_labels<T: Scalar>(
    codes: &GraphCodes,
    universe: &ConceptUniverse,
    table: &ConceptEmbeddingTable<T>,
) -> Result<ConceptLabelVector<T>> {
    let per_level = universe
        .levels
        .iter()
        .enumerate()
        .map(|(k, level)| {
            let sentence = GraphSentence::of_graph(codes, k + 1);
            let graph_vec = embed_graph_known(&sentence, table);
            let concepts = level
                .selected
                .codes
                .iter()
                .map(|c| {
                    table
                        .get(c)
                        .map(|v| (c.as_str(), v))
                        .ok_or_else(|| Error::Config(format!("concept {c:?} has no embedding")))
                })
                .collect::<Result<Vec<_>>>()?;
            embedding_concept_labels(&graph_vec, &concepts)
        })
        .collect::<Result<Vec<_>>>()?;
    concat_levels(per_level, &universe.widths())
}
