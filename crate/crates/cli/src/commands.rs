use std::fs;
use std::path::{Path, PathBuf};

use gcbm::artifact::{
    write_json, Checkpoint, ConceptArtifact, DatasetRef, FoldArtifacts, InterventionTranscript,
    RunReport, SCHEMA_VERSION,
};
use gcbm::config::RunConfig;
use gcbm::graph::{parse_tu_dataset, GraphDataset};
use gcbm::interpret::{
    export_weight_flows, interpretability_auc, predict_subgraph, select_key_concepts, KeyConcept,
    SankeyExport, SubgraphPrediction,
};
use gcbm::intervene::{evaluate_intervention, preview_plan, run_plan, InterventionPlan};
use gcbm::pipeline::{cross_validate_dataset, FittedConcepts};
use gcbm::wl::{refine_dataset, GraphCodes};
use gcbm::Error;
use serde::{Deserialize, Serialize};

use crate::args::{ExplainArgs, ExtractArgs, InterveneArgs, TrainArgs};
use crate::workspace::Workspace;

fn load_dataset(config: &RunConfig) -> gcbm::Result<GraphDataset> {
    let dataset = parse_tu_dataset(&config.dataset_root, &config.dataset_name)?;
    log::info!(
        "loaded {}: {} graphs, {} classes, {} node labels",
        dataset.name,
        dataset.len(),
        dataset.num_classes,
        dataset.alphabet_size()
    );
    Ok(dataset)
}

#[derive(Debug, Clone)]
pub struct ExtractOutput {
    pub path: PathBuf,
    pub hash: String,
    pub artifact: ConceptArtifact,
}

pub fn extract(args: &ExtractArgs) -> gcbm::Result<ExtractOutput> {
    let config = args.run.resolve()?;
    let dataset = load_dataset(&config)?;
    let codes = refine_dataset(&dataset, config.max_height);
    let refs: Vec<&GraphCodes> = codes.iter().collect();
    let embedding = gcbm::embed::EmbeddingConfig {
        seed: config.seed,
        ..config.embedding.clone()
    };
    let fitted = FittedConcepts::<f64>::fit(
        &refs,
        &dataset.class_labels,
        config.max_height,
        config.concepts_per_level,
        config.embedder,
        &embedding,
    )?;
    let artifact = ConceptArtifact::new(
        &fitted,
        &dataset,
        &config,
        None,
        (0..dataset.len()).collect(),
    );
    let path = config.output_dir.join("concepts.json");
    let hash = write_json(&path, &artifact)?;

    println!("level  vocabulary  selected");
    for level in &fitted.universe.levels {
        println!(
            "{:>5}  {:>10}  {:>8}",
            level.vocabulary.level,
            level.vocabulary.len(),
            level.selected.len()
        );
    }
    for level in &fitted.universe.levels {
        println!(
            "\nlevel {} top concepts by information gain",
            level.vocabulary.level
        );
        for (code, gain) in level
            .selected
            .codes
            .iter()
            .zip(&level.selected.gains)
            .take(args.show)
        {
            println!("  {gain:.4}  {code}");
        }
    }
    println!("\nwrote {} (sha256 {hash})", path.display());
    Ok(ExtractOutput {
        path,
        hash,
        artifact,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub report_path: PathBuf,
    pub report: RunReport,
    pub checkpoints: Vec<PathBuf>,
}

pub fn fold_dir(out: &Path, fold: usize) -> PathBuf {
    out.join(format!("fold-{fold:02}"))
}

pub fn train(args: &TrainArgs) -> gcbm::Result<TrainOutput> {
    let config = args.run.resolve()?;
    let dataset = load_dataset(&config)?;
    let cv = cross_validate_dataset::<f64>(&dataset, &config)?;
    let mut folds = Vec::with_capacity(cv.folds.len());
    let mut checkpoints = Vec::with_capacity(cv.folds.len());
    for fold in &cv.folds {
        let index = fold.split.fold_index;
        let dir = fold_dir(&config.output_dir, index);
        let concepts = ConceptArtifact::new(
            &fold.concepts,
            &dataset,
            &config,
            Some(index),
            fold.split.train_ids.clone(),
        );
        write_json(&dir.join("concepts.json"), &concepts)?;
        let checkpoint = Checkpoint {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetRef::of(&dataset),
            config: config.clone(),
            fold: Some(index),
            concepts_hash: concepts.concepts_hash.clone(),
            train_ids: fold.split.train_ids.clone(),
            test_ids: fold.split.test_ids.clone(),
            model: fold.model.clone(),
        };
        let path = dir.join("checkpoint.json");
        write_json(&path, &checkpoint)?;
        folds.push(FoldArtifacts {
            fold: index,
            concepts_hash: concepts.concepts_hash,
            checkpoint_hash: checkpoint.hash()?,
            history: fold.history.clone(),
        });
        checkpoints.push(path);
    }
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        dataset: DatasetRef::of(&dataset),
        config: config.clone(),
        report: cv.report,
        folds,
    };
    let report_path = config.output_dir.join("report.json");
    write_json(&report_path, &report)?;
    print!("{}", report.report.to_table());
    println!(
        "wrote {} and {} checkpoints",
        report_path.display(),
        checkpoints.len()
    );
    Ok(TrainOutput {
        report_path,
        report,
        checkpoints,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphExport {
    pub checkpoint_hash: String,
    pub key_concepts: Vec<KeyConcept>,
    pub predictions: Vec<SubgraphPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub checkpoint_hash: String,
    pub config: RunConfig,
    pub key_concepts: Vec<KeyConcept>,
    pub scored_graphs: usize,
    pub interpretability_auc: Option<f64>,
    pub notice: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExplainOutput {
    pub sankey: SankeyExport,
    pub subgraphs: SubgraphExport,
    pub report: ExplainReport,
}

/// Key concepts are mined on the checkpoint's training split and scored
/// on its test split.
pub fn explain_workspace(
    ws: &Workspace,
    top_t: usize,
    key_concepts: usize,
) -> gcbm::Result<ExplainOutput> {
    let flows = export_weight_flows(&ws.checkpoint.model, &ws.concepts.universe, top_t)?;
    let sankey = SankeyExport::from(flows.as_slice());
    let train = &ws.checkpoint.train_ids;
    let train_codes: Vec<&GraphCodes> = train.iter().map(|&i| &ws.codes[i]).collect();
    let keys = select_key_concepts(
        &train_codes,
        &ws.dataset.labels_of(train),
        ws.concepts.universe.max_height(),
        key_concepts,
    )?;
    let test = &ws.checkpoint.test_ids;
    let predictions: Vec<SubgraphPrediction> = test
        .iter()
        .map(|&i| predict_subgraph(&ws.dataset.graphs[i], &ws.codes[i], &keys))
        .collect();
    let (auc, notice) = if ws.dataset.has_node_masks() {
        let masks: Vec<&[bool]> = test
            .iter()
            .map(|&i| ws.dataset.graphs[i].node_mask().unwrap_or(&[]))
            .collect();
        match interpretability_auc(&predictions, &masks) {
            Ok(a) => (Some(a), None),
            Err(Error::UndefinedAuc(why)) => {
                (None, Some(format!("interpretability AUC undefined: {why}")))
            }
            Err(e) => return Err(e),
        }
    } else {
        (
            None,
            Some(
                "dataset has no ground-truth node masks; interpretability AUC omitted".to_string(),
            ),
        )
    };
    Ok(ExplainOutput {
        sankey,
        subgraphs: SubgraphExport {
            checkpoint_hash: ws.checkpoint_hash.clone(),
            key_concepts: keys.clone(),
            predictions,
        },
        report: ExplainReport {
            checkpoint_hash: ws.checkpoint_hash.clone(),
            config: ws.checkpoint.config.clone(),
            key_concepts: keys,
            scored_graphs: test.len(),
            interpretability_auc: auc,
            notice,
        },
    })
}

pub fn explain(args: &ExplainArgs) -> gcbm::Result<ExplainOutput> {
    let ws = Workspace::load(&args.source)?;
    let m_i = args
        .key_concepts
        .unwrap_or(ws.checkpoint.config.key_concepts);
    let out = explain_workspace(&ws, args.top_t, m_i)?;
    write_json(&args.out.join("sankey.json"), &out.sankey)?;
    write_json(&args.out.join("subgraphs.json"), &out.subgraphs)?;
    write_json(&args.out.join("explain_report.json"), &out.report)?;
    for class in &out.sankey.classes {
        println!("class {}", class.class);
        for f in &class.flows {
            println!("  {:>9.4}  level {}  {}", f.weight, f.level, f.concept_code);
        }
    }
    for k in &out.report.key_concepts {
        println!(
            "key concept (level {}, gain {:.4}): {}",
            k.code.height, k.gain, k.code.code
        );
    }
    match (out.report.interpretability_auc, &out.report.notice) {
        (Some(auc), _) => println!(
            "interpretability AUC {auc:.4} over {} graphs",
            out.report.scored_graphs
        ),
        (None, Some(notice)) => println!("{notice}"),
        (None, None) => {}
    }
    println!("wrote {}", args.out.display());
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct InterveneOutput {
    pub transcript: InterventionTranscript,
    pub checkpoint: Option<PathBuf>,
}

/// Runs a plan against the workspace model. An empty target set is a no-op
/// recorded in the transcript; other refusals are errors.
pub fn intervene_workspace(
    ws: &Workspace,
    plan: &InterventionPlan,
    split: crate::args::SplitChoice,
) -> gcbm::Result<(InterventionTranscript, Option<Checkpoint>)> {
    let ids = ws.split_ids(split);
    let examples = ws.examples(ids);
    let mut transcript = InterventionTranscript {
        schema_version: SCHEMA_VERSION,
        dataset: ws.checkpoint.dataset.clone(),
        config: ws.checkpoint.config.clone(),
        checkpoint_hash: ws.checkpoint_hash.clone(),
        split: split.name().to_string(),
        plan: plan.clone(),
        preview: None,
        records: Vec::new(),
        outcome: None,
        new_checkpoint_hash: None,
        notice: None,
    };
    let model = &ws.checkpoint.model;
    let preview = match preview_plan(model, &examples, plan) {
        Ok(p) => p,
        Err(Error::EmptyTargetSet) => {
            transcript.notice = Some("no graphs qualify for intervention; nothing applied".into());
            return Ok((transcript, None));
        }
        Err(e) => return Err(e),
    };
    let result = run_plan(model, &examples, plan)?;
    let outcome = evaluate_intervention(
        model,
        &result.model,
        &ws.graphs(ids),
        &ws.dataset.labels_of(ids),
    )?;
    let checkpoint = Checkpoint {
        model: result.model,
        ..ws.checkpoint.clone()
    };
    transcript.preview = Some(preview);
    transcript.records = result.records;
    transcript.outcome = Some(outcome);
    transcript.new_checkpoint_hash = Some(checkpoint.hash()?);
    Ok((transcript, Some(checkpoint)))
}

pub fn intervene(args: &InterveneArgs) -> gcbm::Result<InterveneOutput> {
    let ws = Workspace::load(&args.source)?;
    let plan = match &args.plan {
        Some(path) => gcbm::artifact::read_json::<InterventionPlan>(path)?,
        None => InterventionPlan {
            concepts: args.concept.clone(),
            params: ws.checkpoint.config.intervention,
        },
    };
    if plan.concepts.is_empty() {
        return Err(Error::Config(
            "name at least one concept with --concept or --plan".into(),
        ));
    }
    plan.params.validate()?;
    let (transcript, checkpoint) = intervene_workspace(&ws, &plan, args.split)?;
    fs::create_dir_all(&args.out)?;
    let checkpoint_path = match &checkpoint {
        Some(c) => {
            let path = args.out.join("checkpoint.json");
            write_json(&path, c)?;
            write_json(
                &args.out.join("concepts.json"),
                ws.concept_artifact.as_ref(),
            )?;
            Some(path)
        }
        None => None,
    };
    write_json(&args.out.join("transcript.json"), &transcript)?;
    if let Some(notice) = &transcript.notice {
        println!("{notice}");
    }
    if let Some(p) = &transcript.preview {
        println!(
            "target set: {} graphs, mean logit difference {:.4}",
            p.target_set.len(),
            p.delta_a_bar
        );
    }
    for r in &transcript.records {
        println!(
            "concept {}: f_bar {:.4}, delta_w {:.4}",
            r.concept, r.f_bar, r.delta_w
        );
        for e in &r.edits {
            println!(
                "  W_F[{}, {}]: {:.4} -> {:.4}",
                e.class, e.concept, e.old_weight, e.new_weight
            );
        }
    }
    if let Some(o) = &transcript.outcome {
        println!(
            "{} corrections, {} new errors; accuracy {:.4} -> {:.4} on {} {} graphs",
            o.corrections,
            o.new_errors,
            o.accuracy_before,
            o.accuracy_after,
            o.num_graphs,
            transcript.split
        );
    }
    Ok(InterveneOutput {
        transcript,
        checkpoint: checkpoint_path,
    })
}
