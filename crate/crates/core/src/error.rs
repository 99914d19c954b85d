use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing mandatory file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("graph {graph}: {message}")]
    InvalidGraph { graph: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("cannot stratify into {folds} folds: class {class} has only {count} members")]
    Stratification {
        class: usize,
        count: usize,
        folds: usize,
    },

    #[error("level {level}: code {code:?} is not in the concept vocabulary")]
    VocabularyMiss { level: usize, code: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate corpus: {0}")]
    DegenerateCorpus(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value in {component}")]
    NonFinite { component: &'static str },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("training error: {0}")]
    Training(String),

    #[error("intervention target set is empty")]
    EmptyTargetSet,

    #[error("average activation {value} is too close to zero to intervene")]
    NearZeroActivation { value: f64 },

    #[error("concept index {index} out of range (bottleneck width {width})")]
    ConceptIndex { index: usize, width: usize },

    #[error("AUC is undefined: {0}")]
    UndefinedAuc(&'static str),

    #[error("invalid metric input: {0}")]
    Metric(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
