use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::net::loss::{add_l1_subgradient, loss, loss_and_upstream, LossBreakdown, LossWeights};
use crate::net::model::{
    Batch, Dropout, GcbmModel, GcbmParams, Mode, ModelShape, NormStats, BN_MOMENTUM,
};
use crate::net::optim::{clip_global_norm, Adam, PlateauConfig, PlateauScheduler};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda_c: f64,
    pub lambda_r: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub dropout_rate: f64,
    pub weight_decay: f64,
    pub scheduler: PlateauConfig,
    pub hidden: usize,
    /// Share of the training split held out to drive the scheduler; with
    /// zero the scheduler monitors the training loss.
    pub validation_fraction: f64,
    /// Training sets up to this size are trained full-batch.
    pub full_batch_limit: usize,
    pub batch_size: usize,
    /// Return the parameters of the epoch with the lowest validation loss
    /// instead of the last epoch's.
    pub restore_best: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_c: 1.0,
            lambda_r: 3e-3,
            epochs: 300,
            learning_rate: 0.01,
            clip_norm: 5.0,
            dropout_rate: 0.2,
            weight_decay: 0.0,
            scheduler: PlateauConfig::default(),
            hidden: 64,
            validation_fraction: 0.1,
            full_batch_limit: 512,
            batch_size: 64,
            restore_best: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_c: self.lambda_c,
            lambda_r: self.lambda_r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.lambda_c >= 0.0 && self.lambda_r >= 0.0) {
            return bad("lambda_c and lambda_r must be non-negative");
        }
        if self.epochs == 0 || self.hidden == 0 || self.batch_size == 0 {
            return bad("epochs, hidden and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.clip_norm > 0.0) {
            return bad("learning_rate and clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        let s = &self.scheduler;
        if !(s.factor > 0.0 && s.factor < 1.0 && s.min_lr >= 0.0 && s.min_improvement >= 0.0) {
            return bad("scheduler needs factor in (0, 1) and non-negative thresholds");
        }
        Ok(())
    }
}

/// One supervised graph: class index and concept label vector.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a, T> {
    pub graph: &'a Graph,
    pub label: usize,
    pub concepts: &'a [T],
}

/// Examples stacked for one forward pass.
#[derive(Debug, Clone)]
pub struct PreparedBatch<T> {
    pub batch: Batch,
    pub labels: Vec<usize>,
    pub targets: Vec<T>,
}

impl<T: Scalar> PreparedBatch<T> {
    pub fn new(examples: &[Example<'_, T>], shape: &ModelShape) -> Result<Self> {
        let width = shape.bottleneck_width();
        if let Some(e) = examples.iter().find(|e| e.concepts.len() != width) {
            return Err(Error::Shape(format!(
                "graph {} has {} concept labels, bottleneck width is {width}",
                e.graph.id,
                e.concepts.len()
            )));
        }
        let graphs: Vec<&Graph> = examples.iter().map(|e| e.graph).collect();
        Ok(PreparedBatch {
            batch: Batch::new(&graphs, shape.num_node_labels),
            labels: examples.iter().map(|e| e.label).collect(),
            targets: examples
                .iter()
                .flat_map(|e| e.concepts.iter().copied())
                .collect(),
        })
    }
}

/// Loss and exact parameter gradients of one batch in training mode
/// (batch statistics) without dropout.
pub fn gradients<T: Scalar>(
    model: &GcbmModel<T>,
    batch: &PreparedBatch<T>,
    weights: LossWeights,
) -> Result<(LossBreakdown<T>, GcbmParams<T>)> {
    let (breakdown, grad, _) = gradients_impl::<T, ChaCha8Rng>(model, batch, weights, None)?;
    Ok((breakdown, grad))
}

/// Loss of a batch in training mode (batch statistics, no dropout); the
/// function [`gradients`] differentiates.
pub fn training_loss<T: Scalar>(
    model: &GcbmModel<T>,
    batch: &PreparedBatch<T>,
    weights: LossWeights,
) -> Result<LossBreakdown<T>> {
    let (out, _) = model.forward_impl::<ChaCha8Rng>(
        &batch.batch,
        Mode {
            batch_stats: true,
            dropout: None,
        },
    );
    loss(
        &out.concepts,
        &batch.targets,
        &out.logits,
        &batch.labels,
        weights,
        model.classifier(),
    )
}

type GradientResult<T> = (LossBreakdown<T>, GcbmParams<T>, Vec<NormStats<T>>);

fn gradients_impl<T: Scalar, R: rand::Rng>(
    model: &GcbmModel<T>,
    batch: &PreparedBatch<T>,
    weights: LossWeights,
    dropout: Option<Dropout<'_, R>>,
) -> Result<GradientResult<T>> {
    let (out, cache) = model.forward_impl(
        &batch.batch,
        Mode {
            batch_stats: true,
            dropout,
        },
    );
    let (breakdown, up) = loss_and_upstream(
        &out.concepts,
        &batch.targets,
        &out.logits,
        &batch.labels,
        weights,
        model.classifier(),
    )?;
    let mut grad = model.backward(&batch.batch, &out, &cache, &up.d_concepts, &up.d_logits);
    add_l1_subgradient(
        &mut grad.classifier.weight,
        &model.classifier().weight,
        weights.lambda_r,
    );
    Ok((breakdown, grad, cache.norm_stats()))
}

/// Loss of a batch in inference mode.
pub fn evaluate_loss<T: Scalar>(
    model: &GcbmModel<T>,
    batch: &PreparedBatch<T>,
    weights: LossWeights,
) -> Result<LossBreakdown<T>> {
    let out = model.forward_batch(&batch.batch);
    loss(
        &out.concepts,
        &batch.targets,
        &out.logits,
        &batch.labels,
        weights,
        model.classifier(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's batches, dropout active.
    pub train: LossBreakdown<f64>,
    pub validation: Option<f64>,
    pub learning_rate: f64,
    pub classifier_l1: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: GcbmModel<T>,
    pub history: Vec<EpochRecord>,
}

/// Graphs used to match the initial concept scale to the targets.
const CALIBRATION_SAMPLE: usize = 512;

/// Rescales each fixed level scale so the initial predicted concept scores
/// have the same root-mean-square as the targets on a prefix of the training
/// set, and seeds the running normalization statistics from that prefix. Sum
/// pooling otherwise makes the initial scale depend on graph size and depth.
fn calibrate_level_weights<T: Scalar>(
    model: &mut GcbmModel<T>,
    train_set: &[Example<'_, T>],
    limit: usize,
) -> Result<()> {
    let sample = &train_set[..train_set.len().min(limit.max(1))];
    let batch = PreparedBatch::new(sample, &model.shape)?;
    let (out, cache) = model.forward_impl::<ChaCha8Rng>(
        &batch.batch,
        Mode {
            batch_stats: true,
            dropout: None,
        },
    );
    for (layer, st) in model.params.layers.iter_mut().zip(cache.norm_stats()) {
        layer.update_running(&st, 1.0);
    }
    let width = model.shape.bottleneck_width();
    let mut offset = 0;
    for k in 0..model.shape.num_levels() {
        let wk = model.shape.level_widths[k];
        let (mut pred, mut target) = (0.0, 0.0);
        for g in 0..sample.len() {
            for j in offset..offset + wk {
                pred += out.concepts[g * width + j].as_f64().powi(2);
                target += batch.targets[g * width + j].as_f64().powi(2);
            }
        }
        if pred > 0.0 && target > 0.0 && (pred / target).is_finite() {
            let lw = &mut model.params.head.level_scales[k];
            *lw *= T::from_f64_lossy((target / pred).sqrt());
        }
        offset += wk;
    }
    Ok(())
}

/// Trains a fresh model. `validation` may be empty, in which case the
/// scheduler monitors the training loss.
pub fn train<T: Scalar>(
    shape: ModelShape,
    train_set: &[Example<'_, T>],
    validation: &[Example<'_, T>],
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if shape.num_classes < 2 {
        return Err(Error::Training(format!(
            "need at least two classes, got {}",
            shape.num_classes
        )));
    }
    if train_set.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if shape.hidden != config.hidden {
        return Err(Error::Config(format!(
            "model hidden width {} differs from configured {}",
            shape.hidden, config.hidden
        )));
    }
    let mean_nodes = train_set.iter().map(|e| e.graph.num_nodes()).sum::<usize>() as f64
        / train_set.len() as f64;
    let mut model = GcbmModel::<T>::init(shape, 1.0 / mean_nodes, config.seed)?;
    calibrate_level_weights(&mut model, train_set, CALIBRATION_SAMPLE)?;
    let weights = config.loss_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9));
    let mut adam = Adam::<T>::new(model.params.num_parameters(), config.weight_decay);
    let mut scheduler = PlateauScheduler::new(config.learning_rate, config.scheduler);

    let full_batch = train_set.len() <= config.full_batch_limit;
    let fixed = if full_batch {
        Some(PreparedBatch::new(train_set, &model.shape)?)
    } else {
        None
    };
    let val_batch = if validation.is_empty() {
        None
    } else {
        Some(PreparedBatch::new(validation, &model.shape)?)
    };

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, GcbmParams<T>)> = None;
    for epoch in 0..config.epochs {
        let lr = scheduler.learning_rate();
        let batches: Vec<PreparedBatch<T>> = match &fixed {
            Some(_) => Vec::new(),
            None => {
                order.shuffle(&mut rng);
                order
                    .chunks(config.batch_size)
                    .map(|chunk| {
                        let ex: Vec<Example<'_, T>> = chunk.iter().map(|&i| train_set[i]).collect();
                        PreparedBatch::new(&ex, &model.shape)
                    })
                    .collect::<Result<_>>()?
            }
        };
        let batch_refs: Vec<&PreparedBatch<T>> = match &fixed {
            Some(b) => vec![b],
            None => batches.iter().collect(),
        };

        let mut sum = LossBreakdown {
            concept: 0.0,
            classification: 0.0,
            sparsity: 0.0,
            total: 0.0,
        };
        let mut grad_norm = 0.0;
        for batch in &batch_refs {
            let dropout = Dropout {
                rate: config.dropout_rate,
                rng: &mut rng,
            };
            let (breakdown, grad, stats) = gradients_impl(&model, batch, weights, Some(dropout))
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Divergence { epoch },
                    other => other,
                })?;
            let b = breakdown.to_f64();
            sum.concept += b.concept;
            sum.classification += b.classification;
            sum.sparsity += b.sparsity;
            sum.total += b.total;

            let mut flat_grad = grad.to_flat();
            grad_norm = clip_global_norm(&mut flat_grad, config.clip_norm);
            if !grad_norm.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            let mut flat = model.params.to_flat();
            adam.step(&mut flat, &flat_grad, lr);
            model.params.assign_flat(&flat);
            for (layer, st) in model.params.layers.iter_mut().zip(&stats) {
                layer.update_running(st, BN_MOMENTUM);
            }
        }
        if !model.params.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let nb = batch_refs.len() as f64;
        let train_loss = LossBreakdown {
            concept: sum.concept / nb,
            classification: sum.classification / nb,
            sparsity: sum.sparsity / nb,
            total: sum.total / nb,
        };
        let validation_loss = match &val_batch {
            Some(vb) => Some(
                evaluate_loss(&model, vb, weights)
                    .map_err(|_| Error::Divergence { epoch })?
                    .total
                    .as_f64(),
            ),
            None => None,
        };
        scheduler.observe(validation_loss.unwrap_or(train_loss.total));
        if let (true, Some(v)) = (config.restore_best, validation_loss) {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, model.params.clone()));
            }
        }
        let classifier_l1 = model.classifier().l1_norm().as_f64();
        log::debug!(
            "epoch {epoch}: loss {:.4} (val {:?}), lr {lr:.2e}, |W_F|_1 {classifier_l1:.4}",
            train_loss.total,
            validation_loss
        );
        history.push(EpochRecord {
            epoch,
            train: train_loss,
            validation: validation_loss,
            learning_rate: lr,
            classifier_l1,
            grad_norm,
        });
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(TrainOutcome { model, history })
}
