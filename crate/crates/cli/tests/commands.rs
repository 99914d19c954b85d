mod common;

use std::fs;
use std::path::Path;
use std::process::Command as Process;

use common::{
    parse, small_run_flags, train, train_on, write_dataset, write_noisy_dataset, DATASET, NOISY,
};
use gcbm::artifact::{read_json, Checkpoint, InterventionTranscript, RunReport};
use gcbm::intervene::{InterventionParams, InterventionPlan};
use gcbm_cli::args::{CheckpointArgs, Command, SplitChoice};
use gcbm_cli::commands::{self, explain_workspace, intervene_workspace};
use gcbm_cli::workspace::Workspace;

fn ckpt_args(checkpoint: &Path) -> CheckpointArgs {
    CheckpointArgs {
        checkpoint: checkpoint.to_path_buf(),
        concepts: None,
        data_root: None,
    }
}

fn bytes(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn extract_writes_one_level_per_height_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = write_dataset(dir.path(), 40);
    let mut hashes = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let flags = small_run_flags(&root, &out);
        let mut args = vec!["extract"];
        args.extend(flags.iter().map(String::as_str));
        let Command::Extract(a) = parse(&args) else {
            unreachable!()
        };
        let result = commands::extract(&a).unwrap();
        assert_eq!(result.artifact.levels.len(), 2);
        assert!(result
            .artifact
            .levels
            .iter()
            .all(|l| l.selected_ids.len() <= 8));
        hashes.push(result.hash);
    }
    assert_eq!(hashes[0], hashes[1]);
    assert_eq!(
        bytes(&dir.path().join("a/concepts.json")),
        bytes(&dir.path().join("b/concepts.json"))
    );
}

#[test]
fn train_explain_intervene_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = write_dataset(dir.path(), 60);
    let out = dir.path().join("run");
    let trained = train(&root, &out);
    assert_eq!(trained.checkpoints.len(), 2);
    let report: RunReport = read_json(&trained.report_path).unwrap();
    // the output directory is not part of any artifact
    assert!(report.report == trained.report.report && report.folds == trained.report.folds);
    assert_eq!(
        report.config.output_dir,
        gcbm::config::RunConfig::default().output_dir
    );
    assert_eq!(report.folds.len(), 2);
    for (fold, path) in report.folds.iter().zip(&trained.checkpoints) {
        let ckpt = Checkpoint::load(path).unwrap();
        assert_eq!(ckpt.hash().unwrap(), fold.checkpoint_hash);
        assert_eq!(ckpt.concepts_hash, fold.concepts_hash);
    }

    // a second run with the same seed reproduces every artifact byte for byte
    let again = dir.path().join("again");
    train(&root, &again);
    for rel in [
        "report.json",
        "fold-00/concepts.json",
        "fold-00/checkpoint.json",
        "fold-01/checkpoint.json",
    ] {
        assert_eq!(
            bytes(&out.join(rel)),
            bytes(&again.join(rel)),
            "{rel} differs"
        );
    }

    // explain: top-t flows per class and an AUC line because masks exist
    let ckpt = &trained.checkpoints[0];
    let explain_out = dir.path().join("explain");
    let Command::Explain(a) = parse(&[
        "explain",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--top-t",
        "3",
        "--out",
        explain_out.to_str().unwrap(),
    ]) else {
        unreachable!()
    };
    let explained = commands::explain(&a).unwrap();
    assert_eq!(explained.sankey.classes.len(), 2);
    assert!(explained.sankey.classes.iter().all(|c| c.flows.len() == 3));
    assert!(explained.report.interpretability_auc.is_some());
    assert!(explained.report.notice.is_none());
    for f in ["sankey.json", "subgraphs.json", "explain_report.json"] {
        assert!(explain_out.join(f).exists());
    }

    // intervene on a noisy-label run, which keeps misclassified training graphs
    let noisy = train_on(
        &write_noisy_dataset(dir.path()),
        NOISY,
        &dir.path().join("noisy-run"),
    );
    let ckpt = &noisy.checkpoints[0];
    let ws = Workspace::load(&ckpt_args(ckpt)).unwrap();
    let ids = ws.checkpoint.train_ids.clone();
    let preds = ws.checkpoint.model.predict_many(&ws.graphs(&ids));
    let wrong = ids
        .iter()
        .zip(&preds)
        .find(|(&i, p)| p.class != ws.dataset.class_labels[i])
        .map(|(&i, p)| (ws.dataset.class_labels[i], p.class));
    let (cls_true, cls_pred) = wrong.expect("noisy labels leave training errors");
    let plan = InterventionPlan {
        concepts: vec![0],
        params: InterventionParams {
            tau_c: 1e-6,
            margin: 0.2,
            cls_true,
            cls_pred,
        },
    };
    let plan_path = dir.path().join("plan.json");
    fs::write(&plan_path, serde_json::to_vec(&plan).unwrap()).unwrap();
    let iv_out = dir.path().join("iv");
    let Command::Intervene(a) = parse(&[
        "intervene",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--plan",
        plan_path.to_str().unwrap(),
        "--split",
        "train",
        "--out",
        iv_out.to_str().unwrap(),
    ]) else {
        unreachable!()
    };
    let result = commands::intervene(&a).unwrap();
    assert_eq!(result.transcript.records.len(), 1);
    assert_eq!(result.transcript.records[0].edits.len(), 2);
    let new_path = result.checkpoint.unwrap();
    let new_ws = Workspace::load(&ckpt_args(&new_path)).unwrap();
    assert_eq!(
        Some(new_ws.checkpoint_hash.clone()),
        result.transcript.new_checkpoint_hash
    );
    assert_ne!(new_ws.checkpoint_hash, ws.checkpoint_hash);
    let transcript: InterventionTranscript = read_json(&iv_out.join("transcript.json")).unwrap();
    assert_eq!(transcript, result.transcript);
    assert_eq!(transcript.checkpoint_hash, ws.checkpoint_hash);
}

#[test]
fn joint_plan_logs_four_edits_from_one_statistics_pass() {
    let dir = tempfile::tempdir().unwrap();
    let trained = train_on(
        &write_noisy_dataset(dir.path()),
        NOISY,
        &dir.path().join("run"),
    );
    let ws = Workspace::load(&ckpt_args(&trained.checkpoints[1])).unwrap();
    let ids = ws.checkpoint.train_ids.clone();
    let preds = ws.checkpoint.model.predict_many(&ws.graphs(&ids));
    let Some((cls_true, cls_pred)) = ids
        .iter()
        .zip(&preds)
        .find(|(&i, p)| p.class != ws.dataset.class_labels[i])
        .map(|(&i, p)| (ws.dataset.class_labels[i], p.class))
    else {
        panic!("noisy labels leave training errors");
    };
    let params = InterventionParams {
        tau_c: 1e-6,
        margin: 0.2,
        cls_true,
        cls_pred,
    };
    let width = ws.checkpoint.model.shape.bottleneck_width();
    // pick two concepts with a usable average activation on the targets
    let usable: Vec<usize> = (0..width)
        .filter(|&j| {
            let plan = InterventionPlan {
                concepts: vec![j],
                params,
            };
            gcbm::intervene::preview_plan(&ws.checkpoint.model, &ws.examples(&ids), &plan).is_ok()
        })
        .take(2)
        .collect();
    assert_eq!(
        usable.len(),
        2,
        "fewer than two concepts with a usable activation"
    );
    let plan = InterventionPlan {
        concepts: usable.clone(),
        params,
    };
    let (transcript, checkpoint) = intervene_workspace(&ws, &plan, SplitChoice::Train).unwrap();
    let edits: usize = transcript.records.iter().map(|r| r.edits.len()).sum();
    assert_eq!(edits, 4);
    let first = &transcript.records[0];
    let second = &transcript.records[1];
    assert_eq!(first.target_set, second.target_set);
    assert_eq!(first.delta_a_bar, second.delta_a_bar);
    let preview = transcript.preview.as_ref().unwrap();
    assert_eq!(preview.adjustments.len(), 2);
    let model = checkpoint.unwrap().model;
    for r in &transcript.records {
        for e in &r.edits {
            assert_eq!(
                model.classifier().weight_at(e.class, e.concept),
                e.new_weight
            );
        }
    }
}

#[test]
fn empty_target_set_is_a_noop_with_notice() {
    let dir = tempfile::tempdir().unwrap();
    let root = write_dataset(dir.path(), 60);
    let trained = train(&root, &dir.path().join("run"));
    let ws = Workspace::load(&ckpt_args(&trained.checkpoints[0])).unwrap();
    // tau_c = 1 demands an exact concept match, which a trained model never hits
    let plan = InterventionPlan {
        concepts: vec![0],
        params: InterventionParams {
            tau_c: 1.0,
            ..InterventionParams::default()
        },
    };
    let (transcript, checkpoint) = intervene_workspace(&ws, &plan, SplitChoice::Test).unwrap();
    assert!(checkpoint.is_none());
    assert!(transcript.notice.is_some());
    assert!(transcript.records.is_empty());
    assert!(transcript.new_checkpoint_hash.is_none());
}

#[test]
fn explain_without_masks_omits_auc_with_notice() {
    let dir = tempfile::tempdir().unwrap();
    let root = write_dataset(dir.path(), 60);
    let trained = train(&root, &dir.path().join("run"));
    fs::remove_file(root.join(format!("{DATASET}_node_masks.txt"))).unwrap();
    // the dataset hash covers masks, so the checkpoint no longer matches
    let err = Workspace::load(&ckpt_args(&trained.checkpoints[0]));
    let ws = match err {
        Err(gcbm::Error::ArtifactMismatch(_)) => {
            // rebuild against the mask-free dataset
            let trained = train(&root, &dir.path().join("run-nomask"));
            Workspace::load(&ckpt_args(&trained.checkpoints[0])).unwrap()
        }
        other => other.unwrap(),
    };
    assert!(!ws.dataset.has_node_masks());
    let out = explain_workspace(&ws, 8, 2).unwrap();
    assert!(out.report.interpretability_auc.is_none());
    assert!(out
        .report
        .notice
        .as_deref()
        .unwrap()
        .contains("no ground-truth node masks"));
    assert_eq!(
        out.subgraphs.predictions.len(),
        ws.checkpoint.test_ids.len()
    );
}

#[test]
fn tampered_concepts_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let root = write_dataset(dir.path(), 60);
    let trained = train(&root, &dir.path().join("run"));
    // fold 1's concepts do not belong to fold 0's checkpoint
    let args = CheckpointArgs {
        checkpoint: trained.checkpoints[0].clone(),
        concepts: Some(trained.checkpoints[1].with_file_name("concepts.json")),
        data_root: None,
    };
    assert!(matches!(
        Workspace::load(&args),
        Err(gcbm::Error::ArtifactMismatch(_))
    ));
}

fn gcbm(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_gcbm"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = gcbm(&[
        "extract",
        "--data-root",
        dir.path().to_str().unwrap(),
        "--dataset",
        "NOPE",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing mandatory file"));

    assert_eq!(gcbm(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(gcbm(&["train", "--folds", "1"]).status.code(), Some(2));
    assert_eq!(gcbm(&["--help"]).status.code(), Some(0));

    let root = write_dataset(dir.path(), 40);
    let ok = gcbm(&[
        "extract",
        "--data-root",
        root.to_str().unwrap(),
        "--dataset",
        DATASET,
        "--max-height",
        "2",
        "--concepts-per-level",
        "4",
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--log",
        "warn",
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(String::from_utf8_lossy(&ok.stdout).contains("top concepts by information gain"));
}
