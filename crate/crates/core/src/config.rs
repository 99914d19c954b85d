//! Run configuration shared by every command.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::intervene::InterventionParams;
use crate::net::TrainConfig;

/// Source of ground-truth concept labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Cosine of the frequency vector with one-hot concept vectors.
    Onehot,
    /// Cosine of the summed token embeddings with concept embeddings.
    Embedding,
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onehot" => Ok(LabelMode::Onehot),
            "embedding" => Ok(LabelMode::Embedding),
            other => Err(Error::Config(format!("unknown embedder {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset_root: PathBuf,
    pub dataset_name: String,
    /// Maximum WL-subtree height.
    pub max_height: usize,
    /// Concepts selected per level.
    pub concepts_per_level: usize,
    /// Key concepts used for subgraph explanations.
    pub key_concepts: usize,
    pub embedder: LabelMode,
    pub folds: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub embedding: EmbeddingConfig,
    pub intervention: InterventionParams,
    /// Not part of the provenance record, so reruns into another directory
    /// produce identical artifacts.
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset_root: PathBuf::from("data"),
            dataset_name: "MUTAG".into(),
            max_height: 4,
            concepts_per_level: 64,
            key_concepts: 2,
            embedder: LabelMode::Onehot,
            folds: 10,
            seed: 0,
            train: TrainConfig::default(),
            embedding: EmbeddingConfig::default(),
            intervention: InterventionParams::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_height == 0 || self.concepts_per_level == 0 || self.key_concepts == 0 {
            return Err(Error::Config("K, M and M_I must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        if self.concepts_per_level > self.train.hidden {
            return Err(Error::Config(format!(
                "M = {} exceeds the hidden width {}",
                self.concepts_per_level, self.train.hidden
            )));
        }
        if self.embedding.dim < 2 {
            return Err(Error::Config(
                "embedding dimension must be at least 2".into(),
            ));
        }
        self.train.validate()?;
        self.intervention.validate()
    }

    /// Training configuration of one fold, seeded from the run seed.
    pub fn fold_train_config(&self, fold: usize) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_mul(1_000_003).wrapping_add(fold as u64),
            ..self.train.clone()
        }
    }

    pub fn fold_embedding_config(&self, fold: usize) -> EmbeddingConfig {
        EmbeddingConfig {
            seed: self.seed.wrapping_mul(1_000_003).wrapping_add(fold as u64),
            ..self.embedding.clone()
        }
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(self).expect("config serializes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_hash_ignores_output_dir() {
        let a = RunConfig::default();
        a.validate().unwrap();
        let b = RunConfig {
            output_dir: "elsewhere".into(),
            ..RunConfig::default()
        };
        assert_eq!(a.content_hash(), b.content_hash());
        assert!(RunConfig {
            folds: 1,
            ..RunConfig::default()
        }
        .validate()
        .is_err());
        assert_eq!(
            "embedding".parse::<LabelMode>().unwrap(),
            LabelMode::Embedding
        );
    }
}
