#![allow(dead_code)]

use std::path::{Path, PathBuf};

use clap::Parser;
use gcbm::graph::{write_tu_dataset, GraphDataset, NodeLabelSource};
use gcbm::synthetic::planted_motif_dataset;
use gcbm_cli::args::{Cli, Command};
use gcbm_cli::commands::{self, TrainOutput};

pub const DATASET: &str = "planted-house";

/// Writes a small planted-motif dataset in TU format and returns its root.
pub fn write_dataset(dir: &Path, num_graphs: usize) -> PathBuf {
    let root = dir.join("data");
    write_tu_dataset(&planted_motif_dataset(num_graphs, 5), &root).unwrap();
    root
}

pub const NOISY: &str = "noisy-house";

/// The planted-motif dataset with every fifth class label flipped, so a
/// trained model keeps misclassified training graphs to intervene on.
pub fn write_noisy_dataset(dir: &Path) -> PathBuf {
    let root = dir.join("noisy");
    let clean = planted_motif_dataset(60, 5);
    let classes = clean
        .class_labels
        .iter()
        .enumerate()
        .map(|(i, &c)| if i % 5 == 0 { 1 - c } else { c })
        .collect();
    let noisy =
        GraphDataset::new(NOISY, clean.graphs, classes, NodeLabelSource::Synthetic).unwrap();
    write_tu_dataset(&noisy, &root).unwrap();
    root
}

pub fn parse(args: &[&str]) -> Command {
    let mut full = vec!["gcbm"];
    full.extend_from_slice(args);
    Cli::try_parse_from(full).unwrap().command
}

pub fn small_run_flags(root: &Path, out: &Path) -> Vec<String> {
    run_flags(root, DATASET, out)
}

pub fn run_flags(root: &Path, dataset: &str, out: &Path) -> Vec<String> {
    [
        "--data-root",
        root.to_str().unwrap(),
        "--dataset",
        dataset,
        "--max-height",
        "2",
        "--concepts-per-level",
        "8",
        "--folds",
        "2",
        "--epochs",
        "15",
        "--out",
        out.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

pub fn train(root: &Path, out: &Path) -> TrainOutput {
    train_on(root, DATASET, out)
}

pub fn train_on(root: &Path, dataset: &str, out: &Path) -> TrainOutput {
    let flags = run_flags(root, dataset, out);
    let mut args = vec!["train"];
    args.extend(flags.iter().map(String::as_str));
    match parse(&args) {
        Command::Train(a) => commands::train(&a).unwrap(),
        other => panic!("parsed {other:?}"),
    }
}
