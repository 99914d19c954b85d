//! End-to-end fold runs: concept fitting on the training split, concept
//! labels, training, and test-split evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::concepts::ConceptLabelVector;
use crate::config::{LabelMode, RunConfig};
use crate::embed::{
    build_corpus, embedding_labels, train_embeddings, ConceptEmbeddingTable, EmbeddingConfig,
};
use crate::error::{Error, Result};
use crate::folds::{stratified_holdout, stratified_k_fold, FoldSplit};
use crate::graph::{Graph, GraphDataset};
use crate::metrics::{
    accuracy, cross_validate, roc_auc, ConfusionCounts, FoldMetrics, MetricReport,
};
use crate::net::{train, EpochRecord, Example, GcbmModel, ModelShape, Prediction, TrainConfig};
use crate::scalar::Scalar;
use crate::universe::ConceptUniverse;
use crate::wl::{refine_dataset, GraphCodes};

/// Concept universe plus, for embedding labels, the token table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FittedConcepts<T> {
    pub universe: ConceptUniverse,
    pub embeddings: Option<ConceptEmbeddingTable<T>>,
}

impl<T: Scalar> FittedConcepts<T> {
    pub fn fit(
        codes: &[&GraphCodes],
        labels: &[usize],
        max_height: usize,
        m: usize,
        mode: LabelMode,
        embedding: &EmbeddingConfig,
    ) -> Result<Self> {
        let universe = ConceptUniverse::fit(codes, labels, max_height, m)?;
        let embeddings = match mode {
            LabelMode::Onehot => None,
            LabelMode::Embedding => {
                let corpus = build_corpus(codes, &universe);
                Some(train_embeddings(&corpus, embedding)?)
            }
        };
        Ok(FittedConcepts {
            universe,
            embeddings,
        })
    }

    /// Hash of the universe and embedding table; checkpoints refer to
    /// concepts by this value.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(self).expect("concepts serialize"),
        ))
    }

    pub fn mode(&self) -> LabelMode {
        if self.embeddings.is_some() {
            LabelMode::Embedding
        } else {
            LabelMode::Onehot
        }
    }

    pub fn labels(&self, codes: &GraphCodes) -> Result<ConceptLabelVector<T>> {
        match &self.embeddings {
            None => self.universe.onehot_labels(codes),
            Some(table) => embedding_labels(codes, &self.universe, table),
        }
    }

    pub fn model_shape(
        &self,
        num_node_labels: usize,
        hidden: usize,
        num_classes: usize,
    ) -> ModelShape {
        ModelShape {
            num_node_labels,
            hidden,
            level_widths: self.universe.widths(),
            num_classes,
        }
    }
}

/// The class with the fewest graphs (lowest index on ties); scored as the
/// positive class for binary AUC.
pub fn minority_class(dataset: &GraphDataset) -> usize {
    let mut counts = vec![0usize; dataset.num_classes];
    for &c in &dataset.class_labels {
        counts[c] += 1;
    }
    (0..counts.len())
        .min_by_key(|&c| (counts[c], c))
        .unwrap_or(0)
}

/// Accuracy, binary AUC and confusion counts of predictions on a split.
pub fn score_predictions<T: Scalar>(
    fold: usize,
    predictions: &[Prediction<T>],
    truth: &[usize],
    num_classes: usize,
    positive_class: usize,
) -> Result<FoldMetrics> {
    let classes: Vec<usize> = predictions.iter().map(|p| p.class).collect();
    let acc = accuracy(&classes, truth)?;
    let auc = if num_classes == 2 {
        let scores: Vec<f64> = predictions
            .iter()
            .map(|p| p.probabilities[positive_class].as_f64())
            .collect();
        let positive: Vec<bool> = truth.iter().map(|&y| y == positive_class).collect();
        roc_auc(&scores, &positive).ok()
    } else {
        None
    };
    Ok(FoldMetrics {
        fold,
        accuracy: acc,
        auc,
        confusion: ConfusionCounts::new(num_classes, &classes, truth),
    })
}

#[derive(Debug, Clone)]
pub struct FoldResult<T> {
    pub split: FoldSplit,
    pub concepts: FittedConcepts<T>,
    pub model: GcbmModel<T>,
    pub history: Vec<EpochRecord>,
    pub metrics: FoldMetrics,
    pub train_config: TrainConfig,
}

/// Runs one fold. `codes` must hold refinements of every dataset graph to
/// at least `config.max_height`.
pub fn run_fold<T: Scalar>(
    dataset: &GraphDataset,
    codes: &[GraphCodes],
    split: &FoldSplit,
    config: &RunConfig,
) -> Result<FoldResult<T>> {
    if codes.len() != dataset.len() {
        return Err(Error::Shape(format!(
            "{} refinements for {} graphs",
            codes.len(),
            dataset.len()
        )));
    }
    let fold = split.fold_index;
    let train_cfg = config.fold_train_config(fold);
    let train_codes: Vec<&GraphCodes> = split.train_ids.iter().map(|&i| &codes[i]).collect();
    let train_labels = dataset.labels_of(&split.train_ids);
    let concepts = FittedConcepts::<T>::fit(
        &train_codes,
        &train_labels,
        config.max_height,
        config.concepts_per_level,
        config.embedder,
        &config.fold_embedding_config(fold),
    )?;
    let label_vectors: Vec<Vec<T>> = split
        .train_ids
        .iter()
        .map(|&i| concepts.labels(&codes[i]).map(|l| l.concat))
        .collect::<Result<_>>()?;
    let position: std::collections::HashMap<usize, usize> = split
        .train_ids
        .iter()
        .enumerate()
        .map(|(p, &i)| (i, p))
        .collect();

    let (kept, holdout) = stratified_holdout(
        &split.train_ids,
        &dataset.class_labels,
        train_cfg.validation_fraction,
        train_cfg.seed,
    );
    let example = |i: usize| Example {
        graph: &dataset.graphs[i],
        label: dataset.class_labels[i],
        concepts: &label_vectors[position[&i]],
    };
    let train_examples: Vec<Example<'_, T>> = kept.iter().map(|&i| example(i)).collect();
    let val_examples: Vec<Example<'_, T>> = holdout.iter().map(|&i| example(i)).collect();

    let shape = concepts.model_shape(
        dataset.alphabet_size(),
        train_cfg.hidden,
        dataset.num_classes,
    );
    let outcome = train(shape, &train_examples, &val_examples, &train_cfg)?;

    let test_graphs: Vec<&Graph> = split.test_ids.iter().map(|&i| &dataset.graphs[i]).collect();
    let predictions = outcome.model.predict_many(&test_graphs);
    let metrics = score_predictions(
        fold,
        &predictions,
        &dataset.labels_of(&split.test_ids),
        dataset.num_classes,
        minority_class(dataset),
    )?;
    log::info!(
        "fold {fold}: accuracy {:.4} ({} train, {} validation, {} test)",
        metrics.accuracy,
        kept.len(),
        holdout.len(),
        split.test_ids.len()
    );
    Ok(FoldResult {
        split: split.clone(),
        concepts,
        model: outcome.model,
        history: outcome.history,
        metrics,
        train_config: train_cfg,
    })
}

#[derive(Debug, Clone)]
pub struct CrossValidation<T> {
    pub folds: Vec<FoldResult<T>>,
    pub report: MetricReport,
}

/// Stratified k-fold cross-validation; folds train concurrently and the
/// result does not depend on scheduling.
pub fn cross_validate_dataset<T: Scalar>(
    dataset: &GraphDataset,
    config: &RunConfig,
) -> Result<CrossValidation<T>> {
    config.validate()?;
    dataset.validate()?;
    if dataset.num_classes < 2 {
        return Err(Error::Training(format!(
            "dataset {} has a single class",
            dataset.name
        )));
    }
    let splits = stratified_k_fold(&dataset.class_labels, config.folds, config.seed)?;
    let codes = refine_dataset(dataset, config.max_height);
    let folds = splits
        .par_iter()
        .map(|s| run_fold::<T>(dataset, &codes, s, config))
        .collect::<Result<Vec<_>>>()?;
    let report = cross_validate(folds.iter().map(|f| f.metrics.clone()).collect())?;
    Ok(CrossValidation { folds, report })
}
