//! Small fixtures and seeded synthetic datasets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, GraphDataset, NodeLabelSource};

/// The worked three-node example: node labels 1, 2, 3; the node labeled 1
/// is adjacent to 2 and 3, the node labeled 2 to 1 and 3, and the node
/// labeled 3 to 1, 2 and itself.
pub fn labeled_triangle() -> Graph {
    Graph::new(0, 3, vec![(0, 1), (0, 2), (1, 2), (2, 2)], vec![1, 2, 3]).expect("fixture is valid")
}

/// Connected random graph: a random spanning tree plus `extra_edges`
/// additional distinct edges; labels uniform in `0..num_labels`.
pub fn random_graph(
    rng: &mut impl Rng,
    id: usize,
    num_nodes: usize,
    extra_edges: usize,
    num_labels: u32,
) -> Graph {
    let (edges, labels) = random_parts(rng, num_nodes, extra_edges, num_labels);
    Graph::new(id, num_nodes, edges, labels).expect("generated graph is valid")
}

fn random_parts(
    rng: &mut impl Rng,
    num_nodes: usize,
    extra_edges: usize,
    num_labels: u32,
) -> (Vec<(usize, usize)>, Vec<u32>) {
    let mut edges = std::collections::BTreeSet::new();
    for v in 1..num_nodes {
        let u = rng.gen_range(0..v);
        edges.insert((u, v));
    }
    let max_edges = num_nodes * (num_nodes - 1) / 2;
    let target = (edges.len() + extra_edges).min(max_edges);
    while edges.len() < target {
        let u = rng.gen_range(0..num_nodes);
        let v = rng.gen_range(0..num_nodes);
        if u != v {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    let labels = (0..num_nodes)
        .map(|_| rng.gen_range(0..num_labels))
        .collect();
    (edges.into_iter().collect(), labels)
}

pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Label carried by motif nodes in [`planted_motif_dataset`].
pub const MOTIF_LABEL: u32 = 3;

/// Balanced binary dataset. Every graph has a random connected background
/// with labels in `0..3`; class-1 graphs additionally carry a "house"
/// (a 4-cycle with a roof node) whose nodes are labeled [`MOTIF_LABEL`],
/// attached to the background by one edge. Node masks mark motif nodes.
pub fn planted_motif_dataset(num_graphs: usize, seed: u64) -> GraphDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(num_graphs);
    let mut classes = Vec::with_capacity(num_graphs);
    for id in 0..num_graphs {
        let class = id % 2;
        let background = rng.gen_range(12..=24);
        let extra = rng.gen_range(0..=3);
        let (mut edges, mut labels) = random_parts(&mut rng, background, extra, MOTIF_LABEL);
        let mut mask = vec![false; background];
        if class == 1 {
            let b = background;
            // square a-b-c-d, roof e on a and b; c attaches to the background
            let (a, bb, c, d, e) = (b, b + 1, b + 2, b + 3, b + 4);
            edges.extend([(a, bb), (bb, c), (c, d), (a, d), (a, e), (bb, e)]);
            let anchor = rng.gen_range(0..background);
            edges.push((anchor, c));
            labels.extend([MOTIF_LABEL; 5]);
            mask.extend([true; 5]);
        }
        let n = labels.len();
        let graph = Graph::new(id, n, edges, labels)
            .and_then(|g| g.with_node_mask(mask))
            .expect("generated graph is valid");
        graphs.push(graph);
        classes.push(class);
    }
    GraphDataset::new("planted-house", graphs, classes, NodeLabelSource::Synthetic)
        .expect("both classes present")
}

/// Two-class dataset of random graphs where class 1 graphs are denser and
/// skew toward label 1. Used for quick training smoke tests.
pub fn random_classification_dataset(num_graphs: usize, seed: u64) -> GraphDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(num_graphs);
    let mut classes = Vec::with_capacity(num_graphs);
    for id in 0..num_graphs {
        let class = id % 2;
        let n = rng.gen_range(6..=12);
        let extra = if class == 1 { 4 } else { 0 };
        let mut g = random_graph(&mut rng, id, n, extra, 3);
        if class == 1 {
            let mut labels = g.node_labels().to_vec();
            for l in labels.iter_mut().take(n / 2) {
                *l = 1;
            }
            g = Graph::new(id, n, g.edges().to_vec(), labels).expect("relabeled graph is valid");
        }
        graphs.push(g);
        classes.push(class);
    }
    GraphDataset::new(
        "random-two-class",
        graphs,
        classes,
        NodeLabelSource::Synthetic,
    )
    .expect("both classes present")
}
