use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

/// Dimensions of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    /// Known node labels; one extra input slot is reserved for unknown labels.
    pub num_node_labels: usize,
    pub hidden: usize,
    /// Bottleneck width of each level (one GIN layer per level).
    pub level_widths: Vec<usize>,
    pub num_classes: usize,
}

impl ModelShape {
    pub fn num_levels(&self) -> usize {
        self.level_widths.len()
    }

    pub fn bottleneck_width(&self) -> usize {
        self.level_widths.iter().sum()
    }

    pub fn input_slots(&self) -> usize {
        self.num_node_labels + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.level_widths.is_empty() || self.num_classes == 0 {
            return Err(Error::Config(format!("degenerate model shape {self:?}")));
        }
        if let Some(&w) = self.level_widths.iter().find(|&&w| w > self.hidden) {
            return Err(Error::Config(format!(
                "level width {w} exceeds hidden width {}",
                self.hidden
            )));
        }
        Ok(())
    }
}

/// One GIN layer: `h' = relu(W2 relu(BN(W1 (h_v + sum_u h_u) + b1)) + b2) + residual * h_v`.
/// Weights are row-major `in x out`. `BN` normalizes each hidden unit with
/// batch statistics while training and with the running statistics
/// otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GinLayerParams<T> {
    pub level: usize,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
    pub residual_weight: T,
    pub bn_gamma: Vec<T>,
    pub bn_beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// Stabilizer added to the variance before normalizing.
pub const BN_EPS: f64 = 1e-5;
/// Weight of the newest batch in the running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-unit batch statistics of one layer's first linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats<T> {
    pub mean: Vec<T>,
    /// Biased variance.
    pub var: Vec<T>,
    pub count: usize,
}

impl<T: Scalar> GinLayerParams<T> {
    /// Folds one batch into the running statistics; the variance update
    /// uses the unbiased estimate.
    pub fn update_running(&mut self, stats: &NormStats<T>, momentum: f64) {
        let m = T::from_f64_lossy(momentum);
        let keep = T::one() - m;
        let n = stats.count as f64;
        let unbias = T::from_f64_lossy(if n > 1.0 { n / (n - 1.0) } else { 1.0 });
        for j in 0..self.running_mean.len() {
            self.running_mean[j] = keep * self.running_mean[j] + m * stats.mean[j];
            self.running_var[j] = keep * self.running_var[j] + m * stats.var[j] * unbias;
        }
    }
}

/// Per-level factor mapping pooled layer outputs to concept scores: a
/// learnable weight times a fixed scale set once from data at
/// initialization, so the learnable part stays of order one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BottleneckHead<T> {
    pub level_weights: Vec<T>,
    pub level_scales: Vec<T>,
}

impl<T: Scalar> BottleneckHead<T> {
    pub fn factor(&self, level: usize) -> T {
        self.level_weights[level] * self.level_scales[level]
    }
}

/// `logits = W_F c + b_F`; `weight` is row-major `num_classes x width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SparseLinearClassifier<T> {
    pub num_classes: usize,
    pub width: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> SparseLinearClassifier<T> {
    pub fn weight_at(&self, class: usize, concept: usize) -> T {
        self.weight[class * self.width + concept]
    }

    pub fn row(&self, class: usize) -> &[T] {
        &self.weight[class * self.width..(class + 1) * self.width]
    }

    pub fn logits(&self, concepts: &[T]) -> Vec<T> {
        assert_eq!(concepts.len(), self.width, "bottleneck width");
        (0..self.num_classes)
            .map(|c| {
                let mut acc = self.bias[c];
                for (&w, &x) in self.row(c).iter().zip(concepts) {
                    acc += w * x;
                }
                acc
            })
            .collect()
    }

    pub fn l1_norm(&self) -> T {
        self.weight.iter().map(|w| w.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GcbmParams<T> {
    /// Row-major `(num_node_labels + 1) x hidden`.
    pub input_weight: Vec<T>,
    pub input_bias: Vec<T>,
    pub layers: Vec<GinLayerParams<T>>,
    pub head: BottleneckHead<T>,
    pub classifier: SparseLinearClassifier<T>,
}

impl<T: Scalar> GcbmParams<T> {
    pub fn zeros(shape: &ModelShape) -> Self {
        let h = shape.hidden;
        let z = |n: usize| vec![T::zero(); n];
        GcbmParams {
            input_weight: z(shape.input_slots() * h),
            input_bias: z(h),
            layers: (0..shape.num_levels())
                .map(|k| GinLayerParams {
                    level: k + 1,
                    w1: z(h * h),
                    b1: z(h),
                    w2: z(h * h),
                    b2: z(h),
                    residual_weight: T::zero(),
                    bn_gamma: z(h),
                    bn_beta: z(h),
                    running_mean: z(h),
                    running_var: vec![T::one(); h],
                })
                .collect(),
            head: BottleneckHead {
                level_weights: z(shape.num_levels()),
                level_scales: vec![T::one(); shape.num_levels()],
            },
            classifier: SparseLinearClassifier {
                num_classes: shape.num_classes,
                width: shape.bottleneck_width(),
                weight: z(shape.num_classes * shape.bottleneck_width()),
                bias: z(shape.num_classes),
            },
        }
    }

    /// Named tensors in a fixed order. Scalars appear as length-1 slices.
    pub fn tensors(&self) -> Vec<(&'static str, &[T])> {
        let mut out: Vec<(&'static str, &[T])> = vec![
            ("input_weight", &self.input_weight),
            ("input_bias", &self.input_bias),
        ];
        for layer in &self.layers {
            out.push(("w1", &layer.w1));
            out.push(("b1", &layer.b1));
            out.push(("w2", &layer.w2));
            out.push(("b2", &layer.b2));
            out.push((
                "residual_weight",
                std::slice::from_ref(&layer.residual_weight),
            ));
            out.push(("bn_gamma", &layer.bn_gamma));
            out.push(("bn_beta", &layer.bn_beta));
        }
        out.push(("level_weights", &self.head.level_weights));
        out.push(("classifier_weight", &self.classifier.weight));
        out.push(("classifier_bias", &self.classifier.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [T])> {
        let mut out: Vec<(&'static str, &mut [T])> = vec![
            ("input_weight", &mut self.input_weight),
            ("input_bias", &mut self.input_bias),
        ];
        for layer in &mut self.layers {
            out.push(("w1", &mut layer.w1));
            out.push(("b1", &mut layer.b1));
            out.push(("w2", &mut layer.w2));
            out.push(("b2", &mut layer.b2));
            out.push((
                "residual_weight",
                std::slice::from_mut(&mut layer.residual_weight),
            ));
            out.push(("bn_gamma", &mut layer.bn_gamma));
            out.push(("bn_beta", &mut layer.bn_beta));
        }
        out.push(("level_weights", &mut self.head.level_weights));
        out.push(("classifier_weight", &mut self.classifier.weight));
        out.push(("classifier_bias", &mut self.classifier.bias));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    pub fn assign_flat(&mut self, flat: &[T]) {
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length");
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}

/// How node states, pooled outputs and logits were produced for a batch.
#[derive(Debug, Clone)]
pub struct BatchOutput<T> {
    /// Row-major `num_graphs x bottleneck_width`.
    pub concepts: Vec<T>,
    /// Row-major `num_graphs x num_classes`.
    pub logits: Vec<T>,
}

impl<T: Scalar> BatchOutput<T> {
    pub fn concepts_of(&self, g: usize, width: usize) -> &[T] {
        &self.concepts[g * width..(g + 1) * width]
    }

    pub fn logits_of(&self, g: usize, classes: usize) -> &[T] {
        &self.logits[g * classes..(g + 1) * classes]
    }
}

/// Several graphs stacked into one node set with CSR adjacency.
#[derive(Debug, Clone)]
pub struct Batch {
    pub num_graphs: usize,
    /// `node_offsets[g]..node_offsets[g + 1]` are the nodes of graph `g`.
    pub node_offsets: Vec<usize>,
    pub input_slots: Vec<usize>,
    adj_offsets: Vec<usize>,
    adj: Vec<usize>,
}

impl Batch {
    /// Node labels at or beyond `num_node_labels` map to the unknown slot.
    pub fn new(graphs: &[&Graph], num_node_labels: usize) -> Self {
        let total: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let mut node_offsets = Vec::with_capacity(graphs.len() + 1);
        let mut input_slots = Vec::with_capacity(total);
        let mut adj_offsets = Vec::with_capacity(total + 1);
        let mut adj = Vec::new();
        let mut base = 0;
        adj_offsets.push(0);
        for g in graphs {
            node_offsets.push(base);
            for v in 0..g.num_nodes() {
                let label = g.label(v) as usize;
                input_slots.push(label.min(num_node_labels));
                adj.extend(g.neighbors(v).iter().map(|&u| base + u));
                adj_offsets.push(adj.len());
            }
            base += g.num_nodes();
        }
        node_offsets.push(base);
        Batch {
            num_graphs: graphs.len(),
            node_offsets,
            input_slots,
            adj_offsets,
            adj,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.input_slots.len()
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[self.adj_offsets[v]..self.adj_offsets[v + 1]]
    }

    /// `out[v] = x[v] + sum_{u in N(v)} x[u]`, rows of width `h`. The
    /// adjacency is symmetric, so this map is its own adjoint.
    fn aggregate<T: Scalar>(&self, x: &[T], h: usize) -> Vec<T> {
        let mut out = x.to_vec();
        for v in 0..self.num_nodes() {
            let row = &mut out[v * h..(v + 1) * h];
            for &u in self.neighbors(v) {
                for (o, &xi) in row.iter_mut().zip(&x[u * h..(u + 1) * h]) {
                    *o += xi;
                }
            }
        }
        out
    }

    fn graph_of_nodes(&self) -> Vec<usize> {
        let mut owner = Vec::with_capacity(self.num_nodes());
        for g in 0..self.num_graphs {
            owner.extend(std::iter::repeat_n(
                g,
                self.node_offsets[g + 1] - self.node_offsets[g],
            ));
        }
        owner
    }
}

struct LayerCache<T> {
    input: Vec<T>,
    agg: Vec<T>,
    /// Normalized `z1` and the per-unit inverse standard deviation.
    xhat: Vec<T>,
    inv_std: Vec<T>,
    stats: Option<NormStats<T>>,
    act: Vec<T>,
    dropout: Option<Vec<T>>,
    z2: Vec<T>,
    pooled: Vec<T>,
}

pub(crate) struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Batch statistics per layer; empty unless the pass normalized with
    /// batch statistics.
    pub(crate) fn norm_stats(&self) -> Vec<NormStats<T>> {
        self.layers.iter().filter_map(|l| l.stats.clone()).collect()
    }
}

/// How a forward pass normalizes and regularizes.
pub(crate) struct Mode<'a, R: Rng> {
    pub batch_stats: bool,
    pub dropout: Option<Dropout<'a, R>>,
}

/// Dropout applied to the hidden activations of every layer perceptron.
pub struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

/// The bottlenecked classifier: GIN backbone, per-level concept scaling and
/// a linear head over the concatenated concept scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GcbmModel<T> {
    pub shape: ModelShape,
    pub params: GcbmParams<T>,
}

fn add_bias_rows<T: Scalar>(x: &mut [T], bias: &[T]) {
    let h = bias.len();
    for row in x.chunks_mut(h) {
        for (a, &b) in row.iter_mut().zip(bias) {
            *a += b;
        }
    }
}

fn column_sums<T: Scalar>(x: &[T], width: usize, out: &mut [T]) {
    for row in x.chunks(width) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Prediction of one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Prediction<T> {
    pub concepts: Vec<T>,
    pub logits: Vec<T>,
    pub probabilities: Vec<T>,
    pub class: usize,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl<T: Scalar> GcbmModel<T> {
    /// Glorot-uniform weights, zero biases, residual weights of one half,
    /// unit level weights and fixed level scales of `level_scale`.
    pub fn init(shape: ModelShape, level_scale: f64, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = GcbmParams::zeros(&shape);
        let mut glorot = |buf: &mut [T], fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in buf.iter_mut() {
                *x = T::from_f64_lossy(rng.gen_range(-bound..bound));
            }
        };
        let h = shape.hidden;
        glorot(&mut params.input_weight, shape.input_slots(), h);
        for layer in &mut params.layers {
            glorot(&mut layer.w1, h, h);
            glorot(&mut layer.w2, h, h);
            layer.residual_weight = T::from_f64_lossy(0.5);
            layer.bn_gamma.fill(T::one());
        }
        glorot(
            &mut params.classifier.weight,
            shape.bottleneck_width(),
            shape.num_classes,
        );
        params.head.level_weights.fill(T::one());
        params
            .head
            .level_scales
            .fill(T::from_f64_lossy(level_scale));
        Ok(GcbmModel { shape, params })
    }

    pub fn classifier(&self) -> &SparseLinearClassifier<T> {
        &self.params.classifier
    }

    /// Copy of the model with a different classifier.
    pub fn with_classifier(&self, classifier: SparseLinearClassifier<T>) -> Result<Self> {
        let old = &self.params.classifier;
        if classifier.num_classes != old.num_classes
            || classifier.width != old.width
            || classifier.weight.len() != old.weight.len()
            || classifier.bias.len() != old.bias.len()
        {
            return Err(Error::Shape(
                "replacement classifier has a different shape".into(),
            ));
        }
        let mut model = self.clone();
        model.params.classifier = classifier;
        Ok(model)
    }

    pub fn batch(&self, graphs: &[&Graph]) -> Batch {
        Batch::new(graphs, self.shape.num_node_labels)
    }

    pub fn forward_batch(&self, batch: &Batch) -> BatchOutput<T> {
        self.forward_impl::<ChaCha8Rng>(
            batch,
            Mode {
                batch_stats: false,
                dropout: None,
            },
        )
        .0
    }

    pub(crate) fn forward_impl<R: Rng>(
        &self,
        batch: &Batch,
        mode: Mode<'_, R>,
    ) -> (BatchOutput<T>, ForwardCache<T>) {
        let Mode {
            batch_stats,
            mut dropout,
        } = mode;
        let h = self.shape.hidden;
        let n = batch.num_nodes();
        let g = batch.num_graphs;
        let width = self.shape.bottleneck_width();
        let p = &self.params;

        let mut state = vec![T::zero(); n * h];
        for (v, &slot) in batch.input_slots.iter().enumerate() {
            let row = &mut state[v * h..(v + 1) * h];
            row.copy_from_slice(&p.input_weight[slot * h..(slot + 1) * h]);
            for (a, &b) in row.iter_mut().zip(&p.input_bias) {
                *a += b;
            }
        }

        let mut concepts = vec![T::zero(); g * width];
        let mut caches = Vec::with_capacity(p.layers.len());
        let mut col_offset = 0;
        for (k, layer) in p.layers.iter().enumerate() {
            let agg = batch.aggregate(&state, h);
            let mut z1 = vec![T::zero(); n * h];
            T::gemm(
                n,
                h,
                h,
                T::one(),
                &agg,
                false,
                &layer.w1,
                false,
                T::zero(),
                &mut z1,
            );
            add_bias_rows(&mut z1, &layer.b1);
            let (mean, var, stats) = if batch_stats && n > 0 {
                let mut mean = vec![T::zero(); h];
                column_sums(&z1, h, &mut mean);
                let inv_n = T::from_f64_lossy(1.0 / n as f64);
                mean.iter_mut().for_each(|m| *m *= inv_n);
                let mut var = vec![T::zero(); h];
                for row in z1.chunks(h) {
                    for j in 0..h {
                        let d = row[j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v *= inv_n);
                let stats = NormStats {
                    mean: mean.clone(),
                    var: var.clone(),
                    count: n,
                };
                (mean, var, Some(stats))
            } else {
                (layer.running_mean.clone(), layer.running_var.clone(), None)
            };
            let eps = T::from_f64_lossy(BN_EPS);
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            let mut xhat = z1.clone();
            for row in xhat.chunks_mut(h) {
                for j in 0..h {
                    row[j] = (row[j] - mean[j]) * inv_std[j];
                }
            }
            let mut act = xhat.clone();
            for row in act.chunks_mut(h) {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = (layer.bn_gamma[j] * *x + layer.bn_beta[j]).max(T::zero());
                }
            }
            let mask = dropout.as_mut().filter(|d| d.rate > 0.0).map(|d| {
                let keep = T::from_f64_lossy(1.0 / (1.0 - d.rate));
                let mask: Vec<T> = (0..n * h)
                    .map(|_| {
                        if d.rng.gen::<f64>() < d.rate {
                            T::zero()
                        } else {
                            keep
                        }
                    })
                    .collect();
                for (a, &m) in act.iter_mut().zip(&mask) {
                    *a *= m;
                }
                mask
            });
            let mut out = vec![T::zero(); n * h];
            T::gemm(
                n,
                h,
                h,
                T::one(),
                &act,
                false,
                &layer.w2,
                false,
                T::zero(),
                &mut out,
            );
            add_bias_rows(&mut out, &layer.b2);
            let z2 = out.clone();
            for ((o, &z), &s) in out.iter_mut().zip(&z2).zip(&state) {
                *o = z.max(T::zero()) + layer.residual_weight * s;
            }

            let mut pooled = vec![T::zero(); g * h];
            for gi in 0..g {
                let rows = &out[batch.node_offsets[gi] * h..batch.node_offsets[gi + 1] * h];
                column_sums(rows, h, &mut pooled[gi * h..(gi + 1) * h]);
            }
            let lw = p.head.factor(k);
            let wk = self.shape.level_widths[k];
            for gi in 0..g {
                for j in 0..wk {
                    concepts[gi * width + col_offset + j] = lw * pooled[gi * h + j];
                }
            }
            col_offset += wk;

            let input = std::mem::replace(&mut state, out);
            caches.push(LayerCache {
                input,
                agg,
                xhat,
                inv_std,
                stats,
                act,
                dropout: mask,
                z2,
                pooled,
            });
        }

        let c = self.shape.num_classes;
        let mut logits = Vec::with_capacity(g * c);
        for gi in 0..g {
            logits.extend(p.classifier.logits(&concepts[gi * width..(gi + 1) * width]));
        }
        (
            BatchOutput { concepts, logits },
            ForwardCache { layers: caches },
        )
    }

    /// Backpropagates upstream gradients w.r.t. concept scores and logits
    /// (both row-major per graph) into parameter gradients. The gradient
    /// flowing from the logits into the concepts is added here.
    pub(crate) fn backward(
        &self,
        batch: &Batch,
        output: &BatchOutput<T>,
        cache: &ForwardCache<T>,
        d_concepts: &[T],
        d_logits: &[T],
    ) -> GcbmParams<T> {
        let h = self.shape.hidden;
        let n = batch.num_nodes();
        let g = batch.num_graphs;
        let width = self.shape.bottleneck_width();
        let c = self.shape.num_classes;
        let p = &self.params;
        let mut grad = GcbmParams::zeros(&self.shape);

        // classifier
        let mut dc = d_concepts.to_vec();
        for gi in 0..g {
            let x = &output.concepts[gi * width..(gi + 1) * width];
            let dl = &d_logits[gi * c..(gi + 1) * c];
            for (cls, &d) in dl.iter().enumerate() {
                grad.classifier.bias[cls] += d;
                let wrow = &p.classifier.weight[cls * width..(cls + 1) * width];
                let grow = &mut grad.classifier.weight[cls * width..(cls + 1) * width];
                for j in 0..width {
                    grow[j] += d * x[j];
                    dc[gi * width + j] += d * wrow[j];
                }
            }
        }

        let owner = batch.graph_of_nodes();
        let mut col_offsets = Vec::with_capacity(self.shape.num_levels());
        let mut acc = 0;
        for &w in &self.shape.level_widths {
            col_offsets.push(acc);
            acc += w;
        }

        // gradient w.r.t. the current layer's output state
        let mut d_state = vec![T::zero(); n * h];
        for (k, layer) in p.layers.iter().enumerate().rev() {
            let lc = &cache.layers[k];
            let lw = p.head.factor(k);
            let scale = p.head.level_scales[k];
            let wk = self.shape.level_widths[k];
            let off = col_offsets[k];

            // pooling and level scale
            let mut d_lw = T::zero();
            for gi in 0..g {
                for j in 0..wk {
                    d_lw += dc[gi * width + off + j] * lc.pooled[gi * h + j];
                }
            }
            grad.head.level_weights[k] = d_lw * scale;
            for v in 0..n {
                let gi = owner[v];
                for j in 0..wk {
                    d_state[v * h + j] += lw * dc[gi * width + off + j];
                }
            }

            // residual
            let g_layer = &mut grad.layers[k];
            let mut d_res = T::zero();
            for (&d, &x) in d_state.iter().zip(&lc.input) {
                d_res += d * x;
            }
            g_layer.residual_weight = d_res;

            // second linear and its rectifier
            let d_z2: Vec<T> = d_state
                .iter()
                .zip(&lc.z2)
                .map(|(&d, &z)| if z > T::zero() { d } else { T::zero() })
                .collect();
            T::gemm(
                h,
                n,
                h,
                T::one(),
                &lc.act,
                true,
                &d_z2,
                false,
                T::zero(),
                &mut g_layer.w2,
            );
            column_sums(&d_z2, h, &mut g_layer.b2);
            let mut d_act = vec![T::zero(); n * h];
            T::gemm(
                n,
                h,
                h,
                T::one(),
                &d_z2,
                false,
                &layer.w2,
                true,
                T::zero(),
                &mut d_act,
            );
            if let Some(mask) = &lc.dropout {
                for (d, &m) in d_act.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            // rectifier and normalization
            let mut d_xhat = d_act;
            for (v, row) in d_xhat.chunks_mut(h).enumerate() {
                for (j, d) in row.iter_mut().enumerate() {
                    let x = lc.xhat[v * h + j];
                    if layer.bn_gamma[j] * x + layer.bn_beta[j] <= T::zero() {
                        *d = T::zero();
                    }
                    g_layer.bn_gamma[j] += *d * x;
                    g_layer.bn_beta[j] += *d;
                    *d *= layer.bn_gamma[j];
                }
            }
            // backward passes always follow a batch-statistics forward pass
            debug_assert!(lc.stats.is_some());
            let mut sum = vec![T::zero(); h];
            let mut dot = vec![T::zero(); h];
            for (v, row) in d_xhat.chunks(h).enumerate() {
                for j in 0..h {
                    sum[j] += row[j];
                    dot[j] += row[j] * lc.xhat[v * h + j];
                }
            }
            let inv_n = T::from_f64_lossy(1.0 / n as f64);
            let mut d_z1 = d_xhat;
            for (v, row) in d_z1.chunks_mut(h).enumerate() {
                for j in 0..h {
                    let x = lc.xhat[v * h + j];
                    row[j] = lc.inv_std[j] * (row[j] - inv_n * (sum[j] + x * dot[j]));
                }
            }
            // first linear
            T::gemm(
                h,
                n,
                h,
                T::one(),
                &lc.agg,
                true,
                &d_z1,
                false,
                T::zero(),
                &mut g_layer.w1,
            );
            column_sums(&d_z1, h, &mut g_layer.b1);
            let mut d_agg = vec![T::zero(); n * h];
            T::gemm(
                n,
                h,
                h,
                T::one(),
                &d_z1,
                false,
                &layer.w1,
                true,
                T::zero(),
                &mut d_agg,
            );

            let mut d_prev = batch.aggregate(&d_agg, h);
            for (dp, &ds) in d_prev.iter_mut().zip(&d_state) {
                *dp += layer.residual_weight * ds;
            }
            d_state = d_prev;
        }

        // input embedding
        for (v, &slot) in batch.input_slots.iter().enumerate() {
            let d = &d_state[v * h..(v + 1) * h];
            let row = &mut grad.input_weight[slot * h..(slot + 1) * h];
            for (r, &x) in row.iter_mut().zip(d) {
                *r += x;
            }
        }
        column_sums(&d_state, h, &mut grad.input_bias);
        grad
    }

    /// Predicted concept scores and logits of one graph.
    pub fn forward(&self, graph: &Graph) -> (Vec<T>, Vec<T>) {
        let out = self.forward_batch(&self.batch(&[graph]));
        (out.concepts, out.logits)
    }

    pub fn predict(&self, graph: &Graph) -> Prediction<T> {
        let (concepts, logits) = self.forward(graph);
        self.predict_from_concepts(concepts, logits)
    }

    pub fn predict_many(&self, graphs: &[&Graph]) -> Vec<Prediction<T>> {
        let out = self.forward_batch(&self.batch(graphs));
        let width = self.shape.bottleneck_width();
        let c = self.shape.num_classes;
        (0..graphs.len())
            .map(|g| {
                self.predict_from_concepts(
                    out.concepts_of(g, width).to_vec(),
                    out.logits_of(g, c).to_vec(),
                )
            })
            .collect()
    }

    /// Runs a (possibly edited) concept vector through the linear head.
    pub fn predict_concepts(&self, concepts: Vec<T>) -> Result<Prediction<T>> {
        if concepts.len() != self.shape.bottleneck_width() {
            return Err(Error::Shape(format!(
                "concept vector has length {}, bottleneck width is {}",
                concepts.len(),
                self.shape.bottleneck_width()
            )));
        }
        let logits = self.params.classifier.logits(&concepts);
        Ok(self.predict_from_concepts(concepts, logits))
    }

    fn predict_from_concepts(&self, concepts: Vec<T>, logits: Vec<T>) -> Prediction<T> {
        let probabilities = softmax(&logits);
        let class = argmax(&logits);
        Prediction {
            concepts,
            logits,
            probabilities,
            class,
        }
    }
}
