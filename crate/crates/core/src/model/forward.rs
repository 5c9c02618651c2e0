//! Forward passes and exact reverse-mode gradients of the SI-GNN.

use super::{Network, SiGnnModel};
use crate::error::{Error, Result};
use crate::graph::{EdgeMask, Graph};
use crate::nn::sampling::{gumbel_sigmoid_with_uniforms, open_sigmoid};
use crate::nn::{pool_mean, pool_mean_backward, DenseMatrix, Dropout, GinCache, MlpCache, RngStream};

/// Class probabilities for one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub class: usize,
}

impl Prediction {
    fn from_logits(logits: &[f64]) -> Self {
        let probs = softmax(logits);
        Self {
            logits: logits.to_vec(),
            class: argmax(&probs),
            probs,
        }
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// Index of the largest value; ties go to the lower index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// How the prediction-pass mask is formed during a traced forward pass.
pub enum Sampling<'a> {
    /// Deterministic soft mask `σ(logit)`.
    Soft,
    /// Gumbel-Sigmoid with fresh uniforms from the stream.
    Draw(&'a mut RngStream),
    /// Gumbel-Sigmoid with the given uniforms (replay).
    Replay(&'a [f64]),
}

/// Everything a training step needs to backpropagate one graph.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Node embeddings of the scoring pass.
    pub node_embeddings: DenseMatrix,
    pub edge_logits: Vec<f64>,
    /// Deterministic soft mask `σ(logit)`, one value per directed edge.
    pub soft_mask: Vec<f64>,
    /// Edge weights of the prediction pass (sampled or soft).
    pub pass_weights: Vec<f64>,
    /// Uniforms behind `pass_weights` when sampled.
    pub uniforms: Option<Vec<f64>>,
    /// Mean-pooled embedding of the prediction pass.
    pub graph_embedding: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    scoring: Vec<GinCache>,
    explainer: MlpCache,
    prediction: Vec<GinCache>,
    classifier: MlpCache,
}

fn explainer_input(h: &DenseMatrix, edges: &[(usize, usize)]) -> DenseMatrix {
    let d = h.cols();
    let mut data = Vec::with_capacity(edges.len() * 2 * d);
    for &(s, t) in edges {
        data.extend_from_slice(h.row(s));
        data.extend_from_slice(h.row(t));
    }
    DenseMatrix::new(edges.len(), 2 * d, data).expect("finite embeddings")
}

impl SiGnnModel {
    fn encode(
        &self,
        graph: &Graph,
        weights: &[f64],
        mut dropout: Option<(f64, &mut RngStream)>,
    ) -> Result<(DenseMatrix, Vec<GinCache>)> {
        Error::check_aligned(graph.edge_count(), weights.len())?;
        let mut h = graph.node_features().clone();
        let mut caches = Vec::with_capacity(self.net.encoder.len());
        for layer in &self.net.encoder {
            let d = dropout.as_mut().map(|(rate, rng)| Dropout {
                rate: *rate,
                rng,
            });
            let (out, cache) = layer.forward_with(&h, graph.edges(), weights, d)?;
            h = out;
            caches.push(cache);
        }
        Ok((h, caches))
    }

    /// Backpropagates through the encoder, accumulating parameter gradients
    /// into `grads`. Returns `(∂/∂features, ∂/∂edge weights)`.
    fn encoder_backward(
        &self,
        graph: &Graph,
        caches: &[GinCache],
        weights: &[f64],
        grad_out: DenseMatrix,
        grads: &mut Network,
    ) -> Result<(DenseMatrix, Vec<f64>)> {
        let mut upstream = grad_out;
        let mut d_w = vec![0.0; weights.len()];
        for (idx, layer) in self.net.encoder.iter().enumerate().rev() {
            let g = layer.backward(&caches[idx], graph.edges(), weights, &upstream)?;
            let acc = &mut grads.encoder[idx];
            acc.eps += g.params.eps;
            crate::nn::ParamSet::axpy(&mut acc.mlp, 1.0, &g.params.mlp);
            for (a, b) in d_w.iter_mut().zip(&g.edge_weights) {
                *a += b;
            }
            upstream = g.node_feats;
        }
        Ok((upstream, d_w))
    }

    /// Raw explainer logits for each directed edge, with node embeddings
    /// computed on `G` weighted by `weights`.
    pub fn edge_logits(&self, graph: &Graph, weights: &EdgeMask) -> Result<Vec<f64>> {
        weights.check_aligned(graph)?;
        self.count_scoring();
        let (h, _) = self.encode(graph, weights.values(), None)?;
        let (out, _) = self.net.explainer.forward(&explainer_input(&h, graph.edges()))?;
        Ok(out.into_data())
    }

    /// Soft edge scores `σ(logit)` in (0, 1). `None` means all-ones input weights.
    pub fn compute_edge_scores(&self, graph: &Graph, weights: Option<&EdgeMask>) -> Result<EdgeMask> {
        let ones;
        let w = match weights {
            Some(w) => w,
            None => {
                ones = EdgeMask::ones(graph.edge_count());
                &ones
            }
        };
        let logits = self.edge_logits(graph, w)?;
        EdgeMask::new(logits.into_iter().map(open_sigmoid).collect())
    }

    /// Pooled graph embedding of `G ⊙ mask`.
    pub fn embed(&self, graph: &Graph, mask: &EdgeMask) -> Result<Vec<f64>> {
        mask.check_aligned(graph)?;
        let (h, _) = self.encode(graph, mask.values(), None)?;
        pool_mean(&h)
    }

    /// Classifier applied to a pooled embedding.
    pub fn classify_embedding(&self, z: &[f64]) -> Result<Prediction> {
        let zm = DenseMatrix::new(1, z.len(), z.to_vec())?;
        let (out, _) = self.net.classifier.forward(&zm)?;
        Ok(Prediction::from_logits(out.data()))
    }

    /// Prediction on `G ⊙ mask`.
    pub fn predict(&self, graph: &Graph, mask: &EdgeMask) -> Result<Prediction> {
        self.count_prediction();
        let z = self.embed(graph, mask)?;
        self.classify_embedding(&z)
    }

    /// Scoring pass on the raw graph, then prediction on `G ⊙ M` with the
    /// mask formed as `sampling` says. No dropout.
    pub fn explain_and_predict(&self, graph: &Graph, sampling: Sampling<'_>) -> Result<ForwardTrace> {
        self.forward_trace(graph, sampling, None)
    }

    /// Inference: soft mask from the scoring pass, then prediction on `G ⊙ M`.
    pub fn explain(&self, graph: &Graph) -> Result<(EdgeMask, Prediction)> {
        let mask = self.compute_edge_scores(graph, None)?;
        let pred = self.predict(graph, &mask)?;
        Ok((mask, pred))
    }

    /// Probability of `class` on `G ⊙ mask` and its gradient with respect to
    /// each directed edge weight of the prediction pass.
    pub fn prediction_gradient(&self, graph: &Graph, mask: &EdgeMask, class: usize) -> Result<(f64, Vec<f64>)> {
        mask.check_aligned(graph)?;
        let c = self.arch.num_classes();
        if class >= c {
            return Err(Error::config(format!("class {class} out of range for {c} classes")));
        }
        self.count_prediction();
        let (h, caches) = self.encode(graph, mask.values(), None)?;
        let z = pool_mean(&h)?;
        let zm = DenseMatrix::new(1, z.len(), z)?;
        let (out, cls_cache) = self.net.classifier.forward(&zm)?;
        let probs = softmax(out.data());
        let p = probs[class];
        let d_logits: Vec<f64> = (0..c)
            .map(|k| p * (if k == class { 1.0 } else { 0.0 } - probs[k]))
            .collect();
        let mut scratch = self.net.zeros_like();
        let (_, d_z) = self
            .net
            .classifier
            .backward(&cls_cache, &DenseMatrix::new(1, c, d_logits)?)?;
        let d_h = pool_mean_backward(d_z.data(), graph.node_count());
        let (_, d_w) = self.encoder_backward(graph, &caches, mask.values(), d_h, &mut scratch)?;
        Ok((p, d_w))
    }

    /// Full forward pass keeping every cache for backpropagation.
    pub fn forward_trace(
        &self,
        graph: &Graph,
        sampling: Sampling<'_>,
        mut dropout: Option<(f64, &mut RngStream)>,
    ) -> Result<ForwardTrace> {
        self.count_scoring();
        self.count_prediction();
        let ones = vec![1.0; graph.edge_count()];
        let (h1, scoring) = self.encode(graph, &ones, dropout.as_mut().map(|(r, g)| (*r, &mut **g)))?;
        let expl_drop = dropout.as_mut().map(|(rate, rng)| Dropout {
            rate: *rate,
            rng,
        });
        let (logit_m, explainer) = self
            .net
            .explainer
            .forward_with(&explainer_input(&h1, graph.edges()), expl_drop)?;
        let logits_e = logit_m.into_data();
        let node_embeddings = h1;
        let soft_mask: Vec<f64> = logits_e.iter().map(|&l| open_sigmoid(l)).collect();
        let tau = self.arch.tau;
        let (pass_weights, uniforms) = match sampling {
            Sampling::Soft => (soft_mask.clone(), None),
            Sampling::Draw(rng) => {
                let u: Vec<f64> = logits_e.iter().map(|_| rng.uniform_open()).collect();
                (gumbel_sigmoid_with_uniforms(&logits_e, tau, &u)?, Some(u))
            }
            Sampling::Replay(u) => (gumbel_sigmoid_with_uniforms(&logits_e, tau, u)?, Some(u.to_vec())),
        };
        let (h2, prediction) = self.encode(graph, &pass_weights, dropout.as_mut().map(|(r, g)| (*r, &mut **g)))?;
        let graph_embedding = pool_mean(&h2)?;
        let zm = DenseMatrix::new(1, graph_embedding.len(), graph_embedding.clone())?;
        let cls_drop = dropout.as_mut().map(|(rate, rng)| Dropout {
            rate: *rate,
            rng,
        });
        let (out, classifier) = self.net.classifier.forward_with(&zm, cls_drop)?;
        let logits = out.into_data();
        Ok(ForwardTrace {
            node_embeddings,
            edge_logits: logits_e,
            graph_embedding,
            soft_mask,
            pass_weights,
            uniforms,
            probs: softmax(&logits),
            logits,
            scoring,
            explainer,
            prediction,
            classifier,
        })
    }

    /// Gradients of `L = ℓ(logits) + R(soft mask)` given `∂ℓ/∂logits` and
    /// `∂R/∂(soft mask)`.
    pub(crate) fn backward(
        &self,
        graph: &Graph,
        trace: &ForwardTrace,
        d_logits: &[f64],
        d_soft_mask: &[f64],
    ) -> Result<Network> {
        let e = graph.edge_count();
        Error::check_aligned(e, d_soft_mask.len())?;
        let mut grads = self.net.zeros_like();
        let c = d_logits.len();
        let (cls_grads, d_z) = self
            .net
            .classifier
            .backward(&trace.classifier, &DenseMatrix::new(1, c, d_logits.to_vec())?)?;
        grads.classifier = cls_grads;
        let d_h2 = pool_mean_backward(d_z.data(), graph.node_count());
        let (_, d_w) = self.encoder_backward(graph, &trace.prediction, &trace.pass_weights, d_h2, &mut grads)?;

        let tau = self.arch.tau;
        let mut d_logit_e = Vec::with_capacity(e);
        for i in 0..e {
            let m = trace.soft_mask[i];
            let through_pass = match &trace.uniforms {
                Some(_) => {
                    let s = trace.pass_weights[i];
                    d_w[i] * s * (1.0 - s) / tau
                }
                None => d_w[i] * m * (1.0 - m),
            };
            d_logit_e.push(through_pass + d_soft_mask[i] * m * (1.0 - m));
        }
        let (expl_grads, d_in) = self
            .net
            .explainer
            .backward(&trace.explainer, &DenseMatrix::new(e, 1, d_logit_e)?)?;
        grads.explainer = expl_grads;

        let d = self.arch.embedding_dim();
        let mut d_h1 = DenseMatrix::zeros(graph.node_count(), d);
        for (k, &(s, t)) in graph.edges().iter().enumerate() {
            let row = d_in.row(k);
            for (a, b) in d_h1.row_mut(s).iter_mut().zip(&row[..d]) {
                *a += b;
            }
            for (a, b) in d_h1.row_mut(t).iter_mut().zip(&row[d..]) {
                *a += b;
            }
        }
        let ones = vec![1.0; e];
        self.encoder_backward(graph, &trace.scoring, &ones, d_h1, &mut grads)?;
        Ok(grads)
    }
}
