//! Versioned JSON artifacts: concept universes, model checkpoints, run
//! reports and intervention transcripts.
//!
//! Every artifact carries the run configuration and the hashes of its
//! inputs. Loading compares those hashes and refuses mismatches. Floats are
//! written in shortest round-trip form, so a reload reproduces every
//! parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::concepts::SelectedConcepts;
use crate::config::RunConfig;
use crate::embed::ConceptEmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::GraphDataset;
use crate::intervene::{InterventionOutcome, InterventionPlan, InterventionRecord, PlanPreview};
use crate::metrics::MetricReport;
use crate::net::{EpochRecord, GcbmModel};
use crate::pipeline::FittedConcepts;
use crate::universe::{ConceptUniverse, LevelConcepts};
use crate::wl::ConceptVocabulary;

pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<A: Serialize>(value: &A) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `value` to `path`, creating parent directories, and returns the
/// hash of the written bytes.
pub fn write_json<A: Serialize>(path: &Path, value: &A) -> Result<String> {
    let bytes = to_json_bytes(value)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn read_json<A: DeserializeOwned>(path: &Path) -> Result<A> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn check_schema(found: u32, what: &str) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::ArtifactMismatch(format!(
            "{what} has schema version {found}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

/// Identity of the dataset an artifact was computed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub name: String,
    pub num_graphs: usize,
    pub hash: String,
}

impl DatasetRef {
    pub fn of(dataset: &GraphDataset) -> Self {
        DatasetRef {
            name: dataset.name.clone(),
            num_graphs: dataset.len(),
            hash: dataset.content_hash(),
        }
    }

    pub fn check(&self, dataset: &GraphDataset) -> Result<()> {
        let actual = DatasetRef::of(dataset);
        if *self != actual {
            return Err(Error::ArtifactMismatch(format!(
                "artifact was built from dataset {} ({} graphs, hash {}), loaded {} ({} graphs, hash {})",
                self.name, self.num_graphs, self.hash, actual.name, actual.num_graphs, actual.hash
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelArtifact {
    pub level: usize,
    /// The level's full vocabulary, sorted.
    pub codes: Vec<String>,
    /// Vocabulary positions of the selected concepts, in bottleneck order.
    pub selected_ids: Vec<usize>,
    /// Information gain of each selected concept.
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptArtifact {
    pub schema_version: u32,
    pub dataset: DatasetRef,
    pub config: RunConfig,
    /// Fold whose training split the concepts were fit on; `None` for the
    /// whole dataset.
    pub fold: Option<usize>,
    pub train_ids: Vec<usize>,
    pub levels: Vec<LevelArtifact>,
    pub embeddings: Option<ConceptEmbeddingTable<f64>>,
    pub concepts_hash: String,
}

impl ConceptArtifact {
    pub fn new(
        concepts: &FittedConcepts<f64>,
        dataset: &GraphDataset,
        config: &RunConfig,
        fold: Option<usize>,
        train_ids: Vec<usize>,
    ) -> Self {
        let levels = concepts
            .universe
            .levels
            .iter()
            .map(|l| LevelArtifact {
                level: l.vocabulary.level,
                codes: l.vocabulary.codes().to_vec(),
                selected_ids: l.selected.concept_ids.clone(),
                gains: l.selected.gains.clone(),
            })
            .collect();
        ConceptArtifact {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetRef::of(dataset),
            config: config.clone(),
            fold,
            train_ids,
            levels,
            embeddings: concepts.embeddings.clone(),
            concepts_hash: concepts.content_hash(),
        }
    }

    /// Rebuilds the fitted concepts and verifies their hash.
    pub fn concepts(&self) -> Result<FittedConcepts<f64>> {
        check_schema(self.schema_version, "concept artifact")?;
        let levels = self
            .levels
            .iter()
            .map(|l| {
                if l.selected_ids.len() != l.gains.len() {
                    return Err(Error::ArtifactMismatch(format!(
                        "level {}: {} selected ids but {} gains",
                        l.level,
                        l.selected_ids.len(),
                        l.gains.len()
                    )));
                }
                let vocabulary = ConceptVocabulary::from_codes(l.level, l.codes.iter());
                let codes = l
                    .selected_ids
                    .iter()
                    .map(|&j| {
                        vocabulary.codes().get(j).cloned().ok_or_else(|| {
                            Error::ArtifactMismatch(format!(
                                "level {}: selected id {j} out of range",
                                l.level
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LevelConcepts {
                    selected: SelectedConcepts {
                        level: l.level,
                        concept_ids: l.selected_ids.clone(),
                        codes,
                        gains: l.gains.clone(),
                    },
                    vocabulary,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let concepts = FittedConcepts {
            universe: ConceptUniverse { levels },
            embeddings: self.embeddings.clone(),
        };
        let hash = concepts.content_hash();
        if hash != self.concepts_hash {
            return Err(Error::ArtifactMismatch(format!(
                "concept artifact content hashes to {hash}, header says {}",
                self.concepts_hash
            )));
        }
        Ok(concepts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub dataset: DatasetRef,
    pub config: RunConfig,
    pub fold: Option<usize>,
    /// Hash of the concepts the bottleneck coordinates refer to.
    pub concepts_hash: String,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub model: GcbmModel<f64>,
}

impl Checkpoint {
    /// Hash of the serialized checkpoint; identifies the model state.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&to_json_bytes(self)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let checkpoint: Checkpoint = read_json(path)?;
        check_schema(checkpoint.schema_version, "checkpoint")?;
        checkpoint.model.shape.validate()?;
        if !checkpoint.model.params.is_finite() {
            return Err(Error::ArtifactMismatch(
                "checkpoint holds non-finite parameters".into(),
            ));
        }
        Ok(checkpoint)
    }

    /// Confirms that the checkpoint was trained on `concepts` and `dataset`.
    pub fn check_inputs(&self, concepts: &ConceptArtifact, dataset: &GraphDataset) -> Result<()> {
        if self.concepts_hash != concepts.concepts_hash {
            return Err(Error::ArtifactMismatch(format!(
                "checkpoint expects concepts {}, artifact holds {}",
                self.concepts_hash, concepts.concepts_hash
            )));
        }
        self.dataset.check(dataset)?;
        concepts.dataset.check(dataset)?;
        if self.model.shape.level_widths
            != concepts
                .levels
                .iter()
                .map(|l| l.selected_ids.len())
                .collect::<Vec<_>>()
        {
            return Err(Error::ArtifactMismatch(
                "checkpoint bottleneck widths differ from the concept artifact".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldArtifacts {
    pub fold: usize,
    pub concepts_hash: String,
    pub checkpoint_hash: String,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub dataset: DatasetRef,
    pub config: RunConfig,
    pub report: MetricReport,
    pub folds: Vec<FoldArtifacts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionTranscript {
    pub schema_version: u32,
    pub dataset: DatasetRef,
    pub config: RunConfig,
    pub checkpoint_hash: String,
    /// Split the target set was drawn from and accuracy measured on.
    pub split: String,
    pub plan: InterventionPlan,
    pub preview: Option<PlanPreview>,
    pub records: Vec<InterventionRecord>,
    pub outcome: Option<InterventionOutcome>,
    /// Hash of the updated checkpoint; absent when nothing was applied.
    pub new_checkpoint_hash: Option<String>,
    pub notice: Option<String>,
}
