//! Node-labeled undirected graphs, datasets, and the TU benchmark text format.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// An undirected graph with one small integer label per node.
///
/// Edges are stored normalized (`u <= v`), sorted and duplicate-free. A
/// self-loop `(v, v)` makes `v` its own neighbor; the TU reader never
/// produces them, but hand-built fixtures may.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct Graph {
    pub id: usize,
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    node_labels: Vec<u32>,
    node_mask: Option<Vec<bool>>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    #[serde(default)]
    id: usize,
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    node_labels: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_mask: Option<Vec<bool>>,
}

impl TryFrom<RawGraph> for Graph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        let mut g = Graph::new(raw.id, raw.num_nodes, raw.edges, raw.node_labels)?;
        if let Some(mask) = raw.node_mask {
            g.set_node_mask(mask)?;
        }
        Ok(g)
    }
}

impl From<Graph> for RawGraph {
    fn from(g: Graph) -> Self {
        RawGraph {
            id: g.id,
            num_nodes: g.num_nodes,
            edges: g.edges,
            node_labels: g.node_labels,
            node_mask: g.node_mask,
        }
    }
}

impl Graph {
    /// Builds and validates a graph. Edge endpoints must be in range and
    /// edges must be unique as unordered pairs.
    pub fn new(
        id: usize,
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        node_labels: Vec<u32>,
    ) -> Result<Self> {
        let invalid = |message: String| Error::InvalidGraph { graph: id, message };
        if num_nodes == 0 {
            return Err(invalid("graph has no nodes".into()));
        }
        if node_labels.len() != num_nodes {
            return Err(invalid(format!(
                "{} node labels for {} nodes",
                node_labels.len(),
                num_nodes
            )));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(invalid(format!(
                    "edge ({u},{v}) references a node outside 0..{num_nodes}"
                )));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        if let Some(w) = normalized.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("duplicate edge {:?}", w[0])));
        }
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(u, v) in &normalized {
            adjacency[u].push(v);
            if u != v {
                adjacency[v].push(u);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph {
            id,
            num_nodes,
            edges: normalized,
            node_labels,
            node_mask: None,
            adjacency,
        })
    }

    pub fn with_node_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        self.set_node_mask(mask)?;
        Ok(self)
    }

    fn set_node_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.num_nodes {
            return Err(Error::InvalidGraph {
                graph: self.id,
                message: format!(
                    "node mask has {} entries for {} nodes",
                    mask.len(),
                    self.num_nodes
                ),
            });
        }
        self.node_mask = Some(mask);
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_labels(&self) -> &[u32] {
        &self.node_labels
    }

    pub fn label(&self, v: usize) -> u32 {
        self.node_labels[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn node_mask(&self) -> Option<&[bool]> {
        self.node_mask.as_deref()
    }

    /// Relabels node ids: node `v` of `self` becomes node `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        assert_eq!(perm.len(), self.num_nodes, "permutation length");
        let mut labels = vec![0; self.num_nodes];
        for (v, &p) in perm.iter().enumerate() {
            labels[p] = self.node_labels[v];
        }
        let edges = self
            .edges
            .iter()
            .map(|&(u, v)| (perm[u], perm[v]))
            .collect();
        let mut g = Graph::new(self.id, self.num_nodes, edges, labels)?;
        if let Some(mask) = &self.node_mask {
            let mut m = vec![false; self.num_nodes];
            for (v, &p) in perm.iter().enumerate() {
                m[p] = mask[v];
            }
            g.node_mask = Some(m);
        }
        Ok(g)
    }

    /// Disjoint union of `self` with a copy of itself.
    pub fn doubled(&self) -> Self {
        let n = self.num_nodes;
        let mut edges = self.edges.clone();
        edges.extend(self.edges.iter().map(|&(u, v)| (u + n, v + n)));
        let mut labels = self.node_labels.clone();
        labels.extend_from_slice(&self.node_labels);
        Graph::new(self.id, 2 * n, edges, labels).expect("copy of a valid graph is valid")
    }
}

/// How node labels were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLabelSource {
    File,
    /// The dataset ships no node labels; label := node degree.
    Degree,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    /// Dense class index per graph, in `0..num_classes`.
    pub class_labels: Vec<usize>,
    pub num_classes: usize,
    /// Sorted set of dense node labels in use.
    pub label_alphabet: Vec<u32>,
    pub node_label_source: NodeLabelSource,
    /// Original class value for each dense class index.
    pub class_values: Vec<i64>,
    /// Original node label value for each dense node label.
    pub node_label_values: Vec<i64>,
}

impl GraphDataset {
    /// Assembles a dataset whose labels are already dense.
    pub fn new(
        name: impl Into<String>,
        graphs: Vec<Graph>,
        class_labels: Vec<usize>,
        node_label_source: NodeLabelSource,
    ) -> Result<Self> {
        let num_classes = class_labels.iter().max().map_or(0, |&c| c + 1);
        let alphabet: BTreeSet<u32> = graphs
            .iter()
            .flat_map(|g| g.node_labels.iter().copied())
            .collect();
        let max_label = alphabet.iter().next_back().copied().unwrap_or(0);
        let dataset = GraphDataset {
            name: name.into(),
            graphs,
            class_labels,
            num_classes,
            label_alphabet: alphabet.into_iter().collect(),
            node_label_source,
            class_values: (0..num_classes as i64).collect(),
            node_label_values: (0..=max_label as i64).collect(),
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        if self.graphs.is_empty() {
            return Err(Error::InvalidDataset("dataset has no graphs".into()));
        }
        if self.class_labels.len() != self.graphs.len() {
            return Err(Error::InvalidDataset(format!(
                "{} class labels for {} graphs",
                self.class_labels.len(),
                self.graphs.len()
            )));
        }
        let mut seen = vec![false; self.num_classes];
        for &c in &self.class_labels {
            if c >= self.num_classes {
                return Err(Error::InvalidDataset(format!(
                    "class {c} outside 0..{}",
                    self.num_classes
                )));
            }
            seen[c] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidDataset(format!("class {c} has no graphs")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Number of distinct node labels (dense labels run `0..alphabet_size`).
    pub fn alphabet_size(&self) -> usize {
        self.label_alphabet.last().map_or(0, |&l| l as usize + 1)
    }

    pub fn has_node_masks(&self) -> bool {
        self.graphs.iter().all(|g| g.node_mask.is_some())
    }

    pub fn labels_of(&self, ids: &[usize]) -> Vec<usize> {
        ids.iter().map(|&i| self.class_labels[i]).collect()
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("dataset serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?
        .lines()
        .map(|l| l.trim().to_string())
        .collect())
}

fn strip_trailing_blank(lines: &mut Vec<String>) {
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
}

fn parse_int(file: &str, line: usize, text: &str) -> Result<i64> {
    text.trim().parse::<i64>().map_err(|_| Error::Parse {
        file: file.to_string(),
        line,
        message: format!("expected an integer, found {text:?}"),
    })
}

/// Maps sorted distinct values to `0..len`.
fn dense_remap(values: &[i64]) -> (Vec<u32>, Vec<i64>) {
    let distinct: Vec<i64> = values
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mapped = values
        .iter()
        .map(|v| distinct.binary_search(v).expect("value present") as u32)
        .collect();
    (mapped, distinct)
}

/// Reads `<name>_A.txt`, `<name>_graph_indicator.txt`, `<name>_graph_labels.txt`
/// and, when present, `<name>_node_labels.txt` and `<name>_node_masks.txt`.
pub fn parse_tu_dataset(root: impl AsRef<Path>, name: &str) -> Result<GraphDataset> {
    let root = root.as_ref();
    let file = |suffix: &str| root.join(format!("{name}_{suffix}.txt"));
    let fname = |suffix: &str| format!("{name}_{suffix}.txt");

    let mut indicator_lines = read_lines(&file("graph_indicator"))?;
    let a_lines = read_lines(&file("A"))?;
    let mut graph_label_lines = read_lines(&file("graph_labels"))?;
    strip_trailing_blank(&mut indicator_lines);
    strip_trailing_blank(&mut graph_label_lines);

    let indicator_name = fname("graph_indicator");
    let indicator: Vec<i64> = indicator_lines
        .iter()
        .enumerate()
        .map(|(i, l)| parse_int(&indicator_name, i + 1, l))
        .collect::<Result<_>>()?;
    let labels_name = fname("graph_labels");
    let raw_classes: Vec<i64> = graph_label_lines
        .iter()
        .enumerate()
        .map(|(i, l)| parse_int(&labels_name, i + 1, l))
        .collect::<Result<_>>()?;
    let num_graphs = raw_classes.len();
    let num_nodes_total = indicator.len();

    // global node -> (graph index, local index)
    let mut placement = Vec::with_capacity(num_nodes_total);
    let mut sizes = vec![0usize; num_graphs];
    for (i, &gid) in indicator.iter().enumerate() {
        if gid < 1 || gid as usize > num_graphs {
            return Err(Error::Parse {
                file: indicator_name.clone(),
                line: i + 1,
                message: format!("graph id {gid} outside 1..={num_graphs}"),
            });
        }
        let g = gid as usize - 1;
        placement.push((g, sizes[g]));
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidGraph {
            graph: g + 1,
            message: "graph has no nodes".into(),
        });
    }

    let a_name = fname("A");
    let mut edge_sets: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); num_graphs];
    let mut dropped_loops = 0usize;
    for (i, line) in a_lines.iter().enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::Parse {
                file: a_name.clone(),
                line: i + 1,
                message: format!("expected `u, v`, found {line:?}"),
            });
        }
        let u = parse_int(&a_name, i + 1, parts[0])?;
        let v = parse_int(&a_name, i + 1, parts[1])?;
        let node = |x: i64| -> Result<(usize, usize)> {
            if x < 1 || x as usize > num_nodes_total {
                return Err(Error::Parse {
                    file: a_name.clone(),
                    line: i + 1,
                    message: format!(
                        "edge references unknown node {x} (dataset has {num_nodes_total} nodes)"
                    ),
                });
            }
            Ok(placement[x as usize - 1])
        };
        let (gu, lu) = node(u)?;
        let (gv, lv) = node(v)?;
        if gu != gv {
            return Err(Error::Parse {
                file: a_name.clone(),
                line: i + 1,
                message: format!("edge ({u},{v}) joins graphs {} and {}", gu + 1, gv + 1),
            });
        }
        if lu == lv {
            dropped_loops += 1;
            continue;
        }
        edge_sets[gu].insert((lu.min(lv), lu.max(lv)));
    }
    if dropped_loops > 0 {
        log::warn!("{name}: dropped {dropped_loops} self-loop line(s)");
    }

    let node_labels_path = file("node_labels");
    let (dense_node_labels, node_label_values, source) = if node_labels_path.exists() {
        let mut lines = read_lines(&node_labels_path)?;
        strip_trailing_blank(&mut lines);
        let nl_name = fname("node_labels");
        if lines.len() != num_nodes_total {
            return Err(Error::Parse {
                file: nl_name,
                line: lines.len().min(num_nodes_total) + 1,
                message: format!("{} node labels for {num_nodes_total} nodes", lines.len()),
            });
        }
        let raw: Vec<i64> = lines
            .iter()
            .enumerate()
            .map(|(i, l)| parse_int(&nl_name, i + 1, l.split(',').next().unwrap_or("")))
            .collect::<Result<_>>()?;
        let (dense, values) = dense_remap(&raw);
        (dense, values, NodeLabelSource::File)
    } else {
        let mut degree: Vec<Vec<i64>> = sizes.iter().map(|&s| vec![0; s]).collect();
        for (g, edges) in edge_sets.iter().enumerate() {
            for &(u, v) in edges {
                degree[g][u] += 1;
                degree[g][v] += 1;
            }
        }
        let raw: Vec<i64> = placement.iter().map(|&(g, l)| degree[g][l]).collect();
        let (dense, values) = dense_remap(&raw);
        log::warn!("{name}: no node labels file; using node degree as label");
        (dense, values, NodeLabelSource::Degree)
    };

    let masks_path = file("node_masks");
    let masks: Option<Vec<bool>> = if masks_path.exists() {
        let mut lines = read_lines(&masks_path)?;
        strip_trailing_blank(&mut lines);
        let m_name = fname("node_masks");
        if lines.len() != num_nodes_total {
            return Err(Error::Parse {
                file: m_name,
                line: lines.len().min(num_nodes_total) + 1,
                message: format!("{} mask lines for {num_nodes_total} nodes", lines.len()),
            });
        }
        Some(
            lines
                .iter()
                .enumerate()
                .map(|(i, l)| match l.as_str() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Parse {
                        file: m_name.clone(),
                        line: i + 1,
                        message: format!("expected 0 or 1, found {other:?}"),
                    }),
                })
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let mut labels_per_graph: Vec<Vec<u32>> = sizes.iter().map(|&s| vec![0; s]).collect();
    let mut masks_per_graph: Option<Vec<Vec<bool>>> = masks
        .as_ref()
        .map(|_| sizes.iter().map(|&s| vec![false; s]).collect());
    for (global, &(g, l)) in placement.iter().enumerate() {
        labels_per_graph[g][l] = dense_node_labels[global];
        if let (Some(per), Some(m)) = (masks_per_graph.as_mut(), masks.as_ref()) {
            per[g][l] = m[global];
        }
    }

    let (dense_classes, class_values) = dense_remap(&raw_classes);
    let mut graphs = Vec::with_capacity(num_graphs);
    for (g, ((edges, labels), size)) in edge_sets
        .into_iter()
        .zip(labels_per_graph)
        .zip(sizes.iter().copied())
        .enumerate()
    {
        let mut graph = Graph::new(g, size, edges.into_iter().collect(), labels)?;
        if let Some(per) = masks_per_graph.as_mut() {
            graph.node_mask = Some(std::mem::take(&mut per[g]));
        }
        graphs.push(graph);
    }

    let num_classes = class_values.len();
    let label_alphabet: Vec<u32> = dense_node_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let dataset = GraphDataset {
        name: name.to_string(),
        graphs,
        class_labels: dense_classes.into_iter().map(|c| c as usize).collect(),
        num_classes,
        label_alphabet,
        node_label_source: source,
        class_values,
        node_label_values,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes the dataset back in TU format. Degree-derived labels are not
/// written, so re-reading reproduces them.
pub fn write_tu_dataset(dataset: &GraphDataset, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root)?;
    let name = &dataset.name;
    let create = |suffix: &str| -> Result<BufWriter<fs::File>> {
        Ok(BufWriter::new(fs::File::create(
            root.join(format!("{name}_{suffix}.txt")),
        )?))
    };

    let mut a = create("A")?;
    let mut indicator = create("graph_indicator")?;
    let mut offset = 0usize;
    for (g, graph) in dataset.graphs.iter().enumerate() {
        for _ in 0..graph.num_nodes {
            writeln!(indicator, "{}", g + 1)?;
        }
        for &(u, v) in &graph.edges {
            writeln!(a, "{}, {}", offset + u + 1, offset + v + 1)?;
            writeln!(a, "{}, {}", offset + v + 1, offset + u + 1)?;
        }
        offset += graph.num_nodes;
    }
    a.flush()?;
    indicator.flush()?;

    let mut labels = create("graph_labels")?;
    for &c in &dataset.class_labels {
        writeln!(labels, "{}", dataset.class_values[c])?;
    }
    labels.flush()?;

    if dataset.node_label_source != NodeLabelSource::Degree {
        let mut nl = create("node_labels")?;
        for graph in &dataset.graphs {
            for &l in &graph.node_labels {
                writeln!(nl, "{}", dataset.node_label_values[l as usize])?;
            }
        }
        nl.flush()?;
    }

    if dataset.has_node_masks() {
        let mut masks = create("node_masks")?;
        for graph in &dataset.graphs {
            for &m in graph.node_mask.as_deref().unwrap_or_default() {
                writeln!(masks, "{}", u8::from(m))?;
            }
        }
        masks.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, suffix: &str, body: &str) {
        fs::write(dir.join(format!("{name}_{suffix}.txt")), body).unwrap();
    }

    #[test]
    fn single_graph_single_class_parses() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 2\n2, 1\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n");
        write(dir.path(), "T", "graph_labels", "0\n");
        write(dir.path(), "T", "node_labels", "1\n1\n");
        let ds = parse_tu_dataset(dir.path(), "T").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.num_classes, 1);
        assert_eq!(ds.graphs[0].num_nodes(), 2);
        assert_eq!(ds.graphs[0].edges(), &[(0, 1)]);
    }

    #[test]
    fn unknown_node_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 2\n2, 3\n5, 7\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n1\n1\n");
        write(dir.path(), "T", "graph_labels", "0\n");
        let err = parse_tu_dataset(dir.path(), "T").unwrap_err();
        match err {
            Error::Parse { line, ref file, .. } => {
                assert_eq!(line, 3);
                assert_eq!(file, "T_A.txt");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 2\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n");
        let err = parse_tu_dataset(dir.path(), "T").unwrap_err();
        assert!(err.to_string().contains("T_graph_labels.txt"), "{err}");
    }

    #[test]
    fn empty_graph_is_rejected_with_id() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 2\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n");
        write(dir.path(), "T", "graph_labels", "0\n1\n");
        match parse_tu_dataset(dir.path(), "T").unwrap_err() {
            Error::InvalidGraph { graph, .. } => assert_eq!(graph, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_loops_and_duplicates_are_normalized() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 1\n1, 2\n2, 1\n1, 2\n2, 3\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n1\n");
        write(dir.path(), "T", "graph_labels", "-1\n");
        write(dir.path(), "T", "node_labels", "5\n9\n5\n");
        let ds = parse_tu_dataset(dir.path(), "T").unwrap();
        assert_eq!(ds.graphs[0].edges(), &[(0, 1), (1, 2)]);
        assert_eq!(ds.graphs[0].node_labels(), &[0, 1, 0]);
        assert_eq!(ds.node_label_values, vec![5, 9]);
        assert_eq!(ds.class_values, vec![-1]);
    }

    #[test]
    fn degree_labels_when_node_labels_absent() {
        let dir = tempfile::tempdir().unwrap();
        // star with center 1 plus an isolated-ish pair in graph 2
        write(dir.path(), "T", "A", "1, 2\n1, 3\n1, 4\n5, 6\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n1\n1\n2\n2\n");
        write(dir.path(), "T", "graph_labels", "3\n7\n");
        let ds = parse_tu_dataset(dir.path(), "T").unwrap();
        assert_eq!(ds.node_label_source, NodeLabelSource::Degree);
        // degrees: 3,1,1,1 | 1,1 -> dense 1,0,0,0 | 0,0
        assert_eq!(ds.graphs[0].node_labels(), &[1, 0, 0, 0]);
        assert_eq!(ds.graphs[1].node_labels(), &[0, 0]);
        assert_eq!(ds.class_labels, vec![0, 1]);
    }

    #[test]
    fn graph_rejects_duplicate_and_out_of_range_edges() {
        assert!(Graph::new(0, 2, vec![(0, 1), (1, 0)], vec![0, 0]).is_err());
        assert!(Graph::new(0, 2, vec![(0, 2)], vec![0, 0]).is_err());
        assert!(Graph::new(0, 0, vec![], vec![]).is_err());
    }

    #[test]
    fn graph_json_round_trip_validates() {
        let g = Graph::new(3, 3, vec![(0, 1), (1, 2)], vec![1, 2, 1]).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let back: Graph = serde_json::from_str(&json).unwrap();
        assert_eq!(g, back);
        let bad = r#"{"num_nodes":2,"edges":[[0,5]],"node_labels":[0,0]}"#;
        assert!(serde_json::from_str::<Graph>(bad).is_err());
    }

    #[test]
    fn dataset_requires_every_class() {
        let g = Graph::new(0, 1, vec![], vec![0]).unwrap();
        let mut ds = GraphDataset::new(
            "x",
            vec![g.clone(), g],
            vec![0, 1],
            NodeLabelSource::Synthetic,
        )
        .unwrap();
        ds.num_classes = 3;
        assert!(ds.validate().is_err());
    }
}
