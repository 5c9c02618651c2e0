//! Self-interpretable GNN: explainer → encoder → classifier.
//!
//! A single GIN encoder is shared between the scoring pass (node embeddings
//! for the explainer, computed on the input edge weights) and the prediction
//! pass (encoding `G ⊙ M`).

mod forward;
mod io;
mod loss;
mod train;

pub use forward::{ForwardTrace, Prediction, Sampling};
pub use io::{load_model, load_model_with_arch, save_model, MODEL_VERSION};
pub use loss::{loss_kl_bernoulli, loss_size_constrained, LossOutput, Regularizer};
pub use train::{adapt_classifier, train, AdaptConfig, EpochLog, MaskMap, TrainConfig, TrainLog};

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, GinLayerParams, MlpParams, ParamSet, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Cross-entropy plus `β · (Σ m) / |E|`.
    SizeConstrained,
    /// Cross-entropy plus `β · mean KL(Bern(m) ‖ Bern(r))`.
    KlBernoulli,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "size" | "size_constrained" => Ok(Objective::SizeConstrained),
            "kl" | "kl_bernoulli" => Ok(Objective::KlBernoulli),
            other => Err(Error::config(format!(
                "unknown objective `{other}` (expected size or kl)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Hidden widths shrunk to 16 for desk-scale runs.
    Desk,
    /// GIN 64/64, explainer 256/64/1, classifier 64/64/C.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::config(format!("unknown preset `{other}` (expected desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub feature_dim: usize,
    /// Output width of each GIN layer.
    pub encoder_dims: Vec<usize>,
    /// Explainer widths after the `[h_i; h_j]` input; the last must be 1.
    pub explainer_dims: Vec<usize>,
    /// Classifier widths after the pooled embedding; the last is the class count.
    pub classifier_dims: Vec<usize>,
    pub objective: Objective,
    pub beta: f64,
    pub prior_r: f64,
    pub tau: f64,
}

impl ArchDescriptor {
    pub fn preset(preset: Preset, feature_dim: usize, num_classes: usize) -> Self {
        let (enc, expl, cls) = match preset {
            Preset::Desk => (vec![16, 16], vec![16, 16, 1], vec![16, 16, num_classes]),
            Preset::Paper => (vec![64, 64], vec![256, 64, 1], vec![64, 64, num_classes]),
        };
        Self {
            feature_dim,
            encoder_dims: enc,
            explainer_dims: expl,
            classifier_dims: cls,
            objective: Objective::KlBernoulli,
            beta: 0.05,
            prior_r: 0.05,
            tau: 1.0,
        }
    }

    pub fn desk(feature_dim: usize) -> Self {
        Self::preset(Preset::Desk, feature_dim, 2)
    }

    pub fn embedding_dim(&self) -> usize {
        *self.encoder_dims.last().unwrap_or(&self.feature_dim)
    }

    pub fn num_classes(&self) -> usize {
        *self.classifier_dims.last().unwrap_or(&0)
    }

    pub fn regularizer(&self) -> Regularizer {
        match self.objective {
            Objective::SizeConstrained => Regularizer::Size { beta: self.beta },
            Objective::KlBernoulli => Regularizer::KlBernoulli {
                beta: self.beta,
                r: self.prior_r,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::config("feature_dim must be >= 1"));
        }
        if self.encoder_dims.is_empty() || self.encoder_dims.contains(&0) {
            return Err(Error::config("encoder needs at least one layer of positive width"));
        }
        if self.explainer_dims.last() != Some(&1) || self.explainer_dims.contains(&0) {
            return Err(Error::config("explainer dims must be positive and end in 1"));
        }
        if self.num_classes() < 2 || self.classifier_dims.contains(&0) {
            return Err(Error::config("classifier must end in >= 2 classes"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.prior_r > 0.0 && self.prior_r < 1.0) {
            return Err(Error::config(format!("prior r must lie in (0, 1), got {}", self.prior_r)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::config(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// All trainable parameters. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub encoder: Vec<GinLayerParams>,
    pub explainer: MlpParams,
    pub classifier: MlpParams,
}

const EXPLAINER_OUTPUT_INIT_SCALE: f64 = 0.01;

impl Network {
    fn init(arch: &ArchDescriptor, rng: &mut RngStream) -> Result<Self> {
        let mut encoder = Vec::with_capacity(arch.encoder_dims.len());
        let mut in_dim = arch.feature_dim;
        for &d in &arch.encoder_dims {
            encoder.push(GinLayerParams {
                eps: 0.0,
                mlp: MlpParams::new(&[in_dim, d, d], &[Activation::Relu, Activation::Relu], rng)?,
            });
            in_dim = d;
        }
        let head = |input: usize, dims: &[usize], rng: &mut RngStream| {
            let mut all = vec![input];
            all.extend_from_slice(dims);
            let mut acts = vec![Activation::Relu; dims.len() - 1];
            acts.push(Activation::Identity);
            MlpParams::new(&all, &acts, rng)
        };
        let mut explainer = head(2 * in_dim, &arch.explainer_dims, rng)?;
        // Encoder outputs on hub-heavy graphs are large; a full-scale output
        // layer would start every mask saturated at 0 or 1 with no gradient.
        if let Some(last) = explainer.layers.last_mut() {
            last.weight.data_mut().iter_mut().for_each(|w| *w *= EXPLAINER_OUTPUT_INIT_SCALE);
        }
        let classifier = head(in_dim, &arch.classifier_dims, rng)?;
        Ok(Self {
            encoder,
            explainer,
            classifier,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.iter().map(GinLayerParams::zeros_like).collect(),
            explainer: self.explainer.zeros_like(),
            classifier: self.classifier.zeros_like(),
        }
    }
}

impl ParamSet for Network {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t: Vec<&[f64]> = self.encoder.iter().flat_map(|l| l.tensors()).collect();
        t.extend(self.explainer.tensors());
        t.extend(self.classifier.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = self.encoder.iter_mut().flat_map(|l| l.tensors_mut()).collect();
        t.extend(self.explainer.tensors_mut());
        t.extend(self.classifier.tensors_mut());
        t
    }
}

/// An SI-GNN with instrumented pass counters.
///
/// The counters record how many scoring passes (explainer evaluations) and
/// prediction passes the model has served since it was created or cloned.
#[derive(Debug)]
pub struct SiGnnModel {
    arch: ArchDescriptor,
    net: Network,
    scoring_passes: AtomicUsize,
    prediction_passes: AtomicUsize,
}

impl Clone for SiGnnModel {
    fn clone(&self) -> Self {
        Self::from_parts(self.arch.clone(), self.net.clone())
    }
}

impl PartialEq for SiGnnModel {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.net == other.net
    }
}

impl SiGnnModel {
    pub fn new(arch: ArchDescriptor, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = RngStream::new(seed);
        let net = Network::init(&arch, &mut rng)?;
        Ok(Self::from_parts(arch, net))
    }

    pub(crate) fn from_parts(arch: ArchDescriptor, net: Network) -> Self {
        Self {
            arch,
            net,
            scoring_passes: AtomicUsize::new(0),
            prediction_passes: AtomicUsize::new(0),
        }
    }

    pub fn arch(&self) -> &ArchDescriptor {
        &self.arch
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn scoring_passes(&self) -> usize {
        self.scoring_passes.load(Ordering::Relaxed)
    }

    pub fn prediction_passes(&self) -> usize {
        self.prediction_passes.load(Ordering::Relaxed)
    }

    pub fn reset_pass_counters(&self) {
        self.scoring_passes.store(0, Ordering::Relaxed);
        self.prediction_passes.store(0, Ordering::Relaxed);
    }

    fn count_scoring(&self) {
        self.scoring_passes.fetch_add(1, Ordering::Relaxed);
    }

    fn count_prediction(&self) {
        self.prediction_passes.fetch_add(1, Ordering::Relaxed);
    }
}
