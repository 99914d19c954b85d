use std::path::{Path, PathBuf};
use std::sync::Arc;

use gcbm::artifact::{Checkpoint, ConceptArtifact};
use gcbm::graph::{parse_tu_dataset, Graph, GraphDataset};
use gcbm::net::Example;
use gcbm::pipeline::FittedConcepts;
use gcbm::wl::{refine_dataset, GraphCodes};

use crate::args::{CheckpointArgs, SplitChoice};

/// A checkpoint together with everything needed to interpret it. Cloning
/// shares the immutable parts, so swapping in an edited model is cheap.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub checkpoint: Checkpoint,
    pub checkpoint_hash: String,
    pub concept_artifact: Arc<ConceptArtifact>,
    pub concepts: Arc<FittedConcepts<f64>>,
    pub dataset: Arc<GraphDataset>,
    pub codes: Arc<Vec<GraphCodes>>,
    /// Ground-truth concept labels of every graph, concatenated over levels.
    pub labels: Arc<Vec<Vec<f64>>>,
}

pub fn default_concepts_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_file_name("concepts.json")
}

impl Workspace {
    pub fn load(args: &CheckpointArgs) -> gcbm::Result<Self> {
        let checkpoint = Checkpoint::load(&args.checkpoint)?;
        let concepts_path = args
            .concepts
            .clone()
            .unwrap_or_else(|| default_concepts_path(&args.checkpoint));
        let concept_artifact: ConceptArtifact = gcbm::artifact::read_json(&concepts_path)?;
        let concepts = concept_artifact.concepts()?;
        let root = args
            .data_root
            .clone()
            .unwrap_or_else(|| checkpoint.config.dataset_root.clone());
        let dataset = parse_tu_dataset(&root, &checkpoint.config.dataset_name)?;
        Self::assemble(checkpoint, concept_artifact, concepts, dataset)
    }

    /// Verifies the pieces against each other and precomputes codes and
    /// concept labels.
    pub fn assemble(
        checkpoint: Checkpoint,
        concept_artifact: ConceptArtifact,
        concepts: FittedConcepts<f64>,
        dataset: GraphDataset,
    ) -> gcbm::Result<Self> {
        checkpoint.check_inputs(&concept_artifact, &dataset)?;
        let codes = refine_dataset(&dataset, concepts.universe.max_height());
        let labels = codes
            .iter()
            .map(|c| concepts.labels(c).map(|l| l.concat))
            .collect::<gcbm::Result<Vec<_>>>()?;
        let checkpoint_hash = checkpoint.hash()?;
        Ok(Workspace {
            checkpoint,
            checkpoint_hash,
            concept_artifact: Arc::new(concept_artifact),
            concepts: Arc::new(concepts),
            dataset: Arc::new(dataset),
            codes: Arc::new(codes),
            labels: Arc::new(labels),
        })
    }

    /// The same inputs with a different checkpoint.
    pub fn with_checkpoint(&self, checkpoint: Checkpoint) -> gcbm::Result<Self> {
        let checkpoint_hash = checkpoint.hash()?;
        Ok(Workspace {
            checkpoint,
            checkpoint_hash,
            ..self.clone()
        })
    }

    /// `"train"`, `"test"` or `None` for a graph outside the checkpoint's fold.
    pub fn split_of(&self, id: usize) -> Option<&'static str> {
        if self.checkpoint.test_ids.contains(&id) {
            Some("test")
        } else if self.checkpoint.train_ids.contains(&id) {
            Some("train")
        } else {
            None
        }
    }

    pub fn split_ids(&self, split: SplitChoice) -> &[usize] {
        match split {
            SplitChoice::Train => &self.checkpoint.train_ids,
            SplitChoice::Test => &self.checkpoint.test_ids,
        }
    }

    pub fn examples(&self, ids: &[usize]) -> Vec<Example<'_, f64>> {
        ids.iter()
            .map(|&i| Example {
                graph: &self.dataset.graphs[i],
                label: self.dataset.class_labels[i],
                concepts: &self.labels[i],
            })
            .collect()
    }

    pub fn graphs(&self, ids: &[usize]) -> Vec<&Graph> {
        ids.iter().map(|&i| &self.dataset.graphs[i]).collect()
    }
}
