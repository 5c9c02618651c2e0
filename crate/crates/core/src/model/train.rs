//! Minibatch Adam training and classifier adaptation.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{log_softmax, softmax, Sampling};
use super::{ArchDescriptor, Network, SiGnnModel};
use crate::error::{Error, Result};
use crate::graph::{Dataset, EdgeMask, SplitPart};
use crate::metrics;
use crate::nn::{AdamState, DenseMatrix, MlpParams, ParamSet, RngStream};

/// Per-graph masks keyed by dataset index.
pub type MaskMap = BTreeMap<usize, EdgeMask>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchDescriptor,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Graphs per optimiser step; `None` uses the whole training split.
    pub batch_size: Option<usize>,
    /// Dropout rate on hidden activations during training.
    pub dropout: f64,
    /// Return the epoch with the best validation accuracy (ties to lower
    /// validation cross-entropy) instead of the last one.
    pub keep_best: bool,
    /// Rescale the averaged gradient to at most this global L2 norm.
    pub grad_clip: Option<f64>,
}

impl TrainConfig {
    pub fn new(arch: ArchDescriptor) -> Self {
        Self {
            arch,
            epochs: 200,
            lr: 5e-3,
            seed: 0,
            batch_size: Some(32),
            dropout: 0.0,
            keep_best: true,
            grad_clip: Some(5.0),
        }
    }

    fn validate(&self, dataset: &Dataset) -> Result<()> {
        self.arch.validate()?;
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::config(format!("gradient clip must be > 0, got {c}")));
            }
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        check_dataset(&self.arch, dataset)
    }
}

fn check_dataset(arch: &ArchDescriptor, dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Validation("dataset is empty".into()));
    }
    let fd = dataset.graph(0).feature_dim();
    if fd != arch.feature_dim {
        return Err(Error::dim(format!(
            "model expects {} node features, dataset has {fd}",
            arch.feature_dim
        )));
    }
    if dataset.num_classes() > arch.num_classes() {
        return Err(Error::Validation(format!(
            "dataset has {} classes but the classifier outputs {}",
            dataset.num_classes(),
            arch.num_classes()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were returned.
    pub selected_epoch: usize,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }

    pub fn selected(&self) -> Option<&EpochLog> {
        self.epochs.get(self.selected_epoch)
    }
}

struct ValMetrics {
    accuracy: f64,
    loss: f64,
    auc: Option<f64>,
}

impl ValMetrics {
    fn beats(&self, other: &ValMetrics) -> bool {
        self.accuracy > other.accuracy || (self.accuracy == other.accuracy && self.loss < other.loss)
    }
}

fn batches(order: &[usize], batch_size: Option<usize>) -> Vec<&[usize]> {
    match batch_size {
        Some(b) => order.chunks(b).collect(),
        None => vec![order],
    }
}

/// Trains an SI-GNN on the training split with the objective named in the
/// architecture. Deterministic given the config, regardless of thread count.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(SiGnnModel, TrainLog)> {
    config.validate(dataset)?;
    let train_idx = dataset.indices(SplitPart::Train);
    if train_idx.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let mut model = SiGnnModel::new(config.arch.clone(), config.seed)?;
    let reg = config.arch.regularizer();
    let root = RngStream::new(config.seed).child(1);
    let mut adam = AdamState::new(model.network(), config.lr);
    let mut log = TrainLog::default();
    let mut best: Option<(ValMetrics, usize, Network)> = None;

    for epoch in 0..config.epochs {
        let epoch_rng = root.child(epoch as u64);
        let mut order = train_idx.to_vec();
        epoch_rng.child(0).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in batches(&order, config.batch_size) {
            let results: Vec<Result<(f64, Network)>> = batch
                .par_iter()
                .map(|&gi| {
                    let g = dataset.graph(gi);
                    let graph_rng = epoch_rng.child(1 + gi as u64);
                    let mut noise = graph_rng.child(0);
                    let mut drop = graph_rng.child(1);
                    let dropout = (config.dropout > 0.0).then_some((config.dropout, &mut drop));
                    let trace = model.forward_trace(g, Sampling::Draw(&mut noise), dropout)?;
                    let out = model.loss(g, &trace, g.label(), reg)?;
                    Ok((out.total, out.grads))
                })
                .collect();
            let mut grads = model.network().zeros_like();
            for r in results {
                let (loss, g) = r.map_err(|e| diverged(e, epoch))?;
                epoch_loss += loss;
                grads.axpy(1.0, &g);
            }
            grads.scale(1.0 / batch.len() as f64);
            if !epoch_loss.is_finite() || !grads.flatten().iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            if let Some(limit) = config.grad_clip {
                let norm = grads.flatten().iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > limit {
                    grads.scale(limit / norm);
                }
            }
            adam.step(model.network_mut(), &grads)?;
        }
        if !model.network().flatten().iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        let val = validation_metrics(&model, dataset).map_err(|e| diverged(e, epoch))?;
        log.epochs.push(EpochLog {
            epoch,
            train_loss: epoch_loss / train_idx.len() as f64,
            val_accuracy: val.as_ref().map(|v| v.accuracy),
            val_loss: val.as_ref().map(|v| v.loss),
            val_auc: val.as_ref().and_then(|v| v.auc),
        });
        log.selected_epoch = epoch;
        if let (true, Some(v)) = (config.keep_best, val) {
            if best.as_ref().is_none_or(|(b, _, _)| v.beats(b)) {
                best = Some((v, epoch, model.network().clone()));
            }
        }
    }
    if let Some((_, epoch, net)) = best {
        log.selected_epoch = epoch;
        *model.network_mut() = net;
    }
    model.reset_pass_counters();
    Ok((model, log))
}

fn diverged(err: Error, epoch: usize) -> Error {
    match err {
        Error::NonFinite(_) => Error::Divergence { epoch },
        other => other,
    }
}

fn validation_metrics(model: &SiGnnModel, dataset: &Dataset) -> Result<Option<ValMetrics>> {
    let val = dataset.indices(SplitPart::Val);
    if val.is_empty() {
        return Ok(None);
    }
    let outcomes = val
        .par_iter()
        .map(|&gi| model.explain(dataset.graph(gi)))
        .collect::<Result<Vec<_>>>()?;
    let correct = val
        .iter()
        .zip(&outcomes)
        .filter(|(&gi, (_, p))| p.class == dataset.graph(gi).label())
        .count();
    let acc = correct as f64 / val.len() as f64;
    let loss = val
        .iter()
        .zip(&outcomes)
        .map(|(&gi, (_, p))| -p.probs[dataset.graph(gi).label()].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / val.len() as f64;
    let auc = if dataset.has_ground_truth() {
        let graphs: Vec<_> = val.iter().map(|&gi| dataset.graph(gi)).collect();
        let masks: Vec<_> = outcomes.into_iter().map(|(m, _)| m).collect();
        metrics::pooled_auc(&graphs, &masks)?
    } else {
        None
    };
    Ok(Some(ValMetrics { accuracy: acc, loss, auc }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 1e-3,
            batch_size: Some(32),
            seed: 0,
        }
    }
}

/// Fine-tunes only the classifier on embeddings of `G ⊙ mask` for the
/// training graphs. Encoder and explainer are left untouched.
pub fn adapt_classifier(
    model: &SiGnnModel,
    dataset: &Dataset,
    masks: &MaskMap,
    config: &AdaptConfig,
) -> Result<SiGnnModel> {
    check_dataset(model.arch(), dataset)?;
    if !(config.lr > 0.0) || config.batch_size == Some(0) {
        return Err(Error::config("adaptation needs lr > 0 and batch size >= 1"));
    }
    let train_idx = dataset.indices(SplitPart::Train);
    let embeddings: Vec<(Vec<f64>, usize)> = train_idx
        .par_iter()
        .map(|&gi| {
            let mask = masks
                .get(&gi)
                .ok_or_else(|| Error::Validation(format!("no mask supplied for training graph {gi}")))?;
            let g = dataset.graph(gi);
            Ok((model.embed(g, mask)?, g.label()))
        })
        .collect::<Result<_>>()?;

    let mut adapted = model.clone();
    let mut classifier = adapted.network().classifier.clone();
    let mut adam = AdamState::new(&classifier, config.lr);
    let root = RngStream::new(config.seed).child(2);
    let mut order: Vec<usize> = (0..embeddings.len()).collect();
    for epoch in 0..config.epochs {
        root.child(epoch as u64).shuffle(&mut order);
        for batch in batches(&order, config.batch_size) {
            let mut grads = classifier.zeros_like();
            let mut total = 0.0;
            for &k in batch {
                let (z, label) = &embeddings[k];
                let (loss, g) = classifier_ce_grad(&classifier, z, *label)?;
                total += loss;
                grads.axpy(1.0, &g);
            }
            if !total.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.step(&mut classifier, &grads)?;
        }
    }
    adapted.network_mut().classifier = classifier;
    Ok(adapted)
}

fn classifier_ce_grad(classifier: &MlpParams, z: &[f64], label: usize) -> Result<(f64, MlpParams)> {
    let zm = DenseMatrix::new(1, z.len(), z.to_vec())?;
    let (out, cache) = classifier.forward(&zm)?;
    let logits = out.data();
    let loss = -log_softmax(logits)[label];
    let d: Vec<f64> = softmax(logits)
        .iter()
        .enumerate()
        .map(|(k, &p)| p - if k == label { 1.0 } else { 0.0 })
        .collect();
    let (g, _) = classifier.backward(&cache, &DenseMatrix::new(1, d.len(), d)?)?;
    Ok((loss, g))
}
