//! Training objectives: cross-entropy plus a mask regularizer.

use super::forward::{log_softmax, ForwardTrace};
use super::{Network, SiGnnModel};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::sampling::MASK_MARGIN;

/// Mask regularizer, evaluated on the deterministic soft mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    /// `β · (Σ m) / |E|`.
    Size { beta: f64 },
    /// `β · mean_e KL(Bern(m_e) ‖ Bern(r))`.
    KlBernoulli { beta: f64, r: f64 },
}

fn kl_bernoulli(m: f64, r: f64) -> f64 {
    let m = m.clamp(MASK_MARGIN, 1.0 - MASK_MARGIN);
    m * (m / r).ln() + (1.0 - m) * ((1.0 - m) / (1.0 - r)).ln()
}

impl Regularizer {
    pub fn beta(&self) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::Size { beta } | Regularizer::KlBernoulli { beta, .. } => beta,
        }
    }

    /// Unweighted regularizer value (without β). Zero for edgeless graphs.
    pub fn value(&self, mask: &[f64]) -> f64 {
        if mask.is_empty() {
            return 0.0;
        }
        let n = mask.len() as f64;
        match *self {
            Regularizer::None => 0.0,
            Regularizer::Size { .. } => mask.iter().sum::<f64>() / n,
            Regularizer::KlBernoulli { r, .. } => mask.iter().map(|&m| kl_bernoulli(m, r)).sum::<f64>() / n,
        }
    }

    /// Gradient of `β · value` with respect to each mask entry.
    pub fn gradient(&self, mask: &[f64]) -> Vec<f64> {
        let n = mask.len().max(1) as f64;
        match *self {
            Regularizer::None => vec![0.0; mask.len()],
            Regularizer::Size { beta } => vec![beta / n; mask.len()],
            Regularizer::KlBernoulli { beta, r } => {
                let logit_r = (r / (1.0 - r)).ln();
                mask.iter()
                    .map(|&m| {
                        let m = m.clamp(MASK_MARGIN, 1.0 - MASK_MARGIN);
                        beta * ((m / (1.0 - m)).ln() - logit_r) / n
                    })
                    .collect()
            }
        }
    }
}

/// Loss value, its parts and parameter gradients for one graph.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub total: f64,
    pub cross_entropy: f64,
    /// Regularizer value before multiplying by β.
    pub regularizer: f64,
    pub grads: Network,
}

impl SiGnnModel {
    /// Loss of a traced forward pass against `label`, with exact gradients.
    pub fn loss(&self, graph: &Graph, trace: &ForwardTrace, label: usize, reg: Regularizer) -> Result<LossOutput> {
        let c = trace.logits.len();
        if label >= c {
            return Err(Error::Validation(format!("label {label} out of range for {c} classes")));
        }
        let log_p = log_softmax(&trace.logits);
        let cross_entropy = -log_p[label];
        let d_logits: Vec<f64> = trace
            .probs
            .iter()
            .enumerate()
            .map(|(k, &p)| p - if k == label { 1.0 } else { 0.0 })
            .collect();
        let regularizer = reg.value(&trace.soft_mask);
        let d_mask = reg.gradient(&trace.soft_mask);
        let grads = self.backward(graph, trace, &d_logits, &d_mask)?;
        Ok(LossOutput {
            total: cross_entropy + reg.beta() * regularizer,
            cross_entropy,
            regularizer,
            grads,
        })
    }
}

/// Size-constrained objective on a traced forward pass.
pub fn loss_size_constrained(
    model: &SiGnnModel,
    graph: &Graph,
    trace: &ForwardTrace,
    beta: f64,
) -> Result<LossOutput> {
    model.loss(graph, trace, graph.label(), Regularizer::Size { beta })
}

/// KL-Bernoulli objective on a traced forward pass.
pub fn loss_kl_bernoulli(
    model: &SiGnnModel,
    graph: &Graph,
    trace: &ForwardTrace,
    beta: f64,
    r: f64,
) -> Result<LossOutput> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::config(format!("prior r must lie in (0, 1), got {r}")));
    }
    model.loss(graph, trace, graph.label(), Regularizer::KlBernoulli { beta, r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_ba2motifs, GeneratorParams};
    use crate::model::forward::Sampling;
    use crate::model::ArchDescriptor;
    use crate::nn::{finite_diff_grad, relative_error, ParamSet, RngStream};

    fn tiny_model(seed: u64) -> SiGnnModel {
        let mut arch = ArchDescriptor::desk(4);
        arch.encoder_dims = vec![4, 3];
        arch.explainer_dims = vec![5, 1];
        arch.classifier_dims = vec![4, 2];
        SiGnnModel::new(arch, seed).unwrap()
    }

    fn check_gradients(reg: Regularizer, sampled: bool) {
        // Zero-initialised biases put ReLU inputs exactly on the kink; jitter them off it.
        let mut model = tiny_model(5);
        let mut jitter = RngStream::new(11);
        let moved: Vec<f64> = model
            .network()
            .flatten()
            .iter()
            .map(|v| v + 0.1 * jitter.standard_normal())
            .collect();
        model.network_mut().assign_flat(&moved);
        let mut params = GeneratorParams::default();
        params.base_nodes = 6;
        let ds = generate_ba2motifs(2, 9, &params).unwrap();
        let g = ds.graph(1);
        let uniforms: Vec<f64> = {
            let mut rng = RngStream::new(3);
            (0..g.edge_count()).map(|_| rng.uniform_open()).collect()
        };
        let trace_of = |m: &SiGnnModel| {
            let s = if sampled { Sampling::Replay(&uniforms) } else { Sampling::Soft };
            m.forward_trace(g, s, None).unwrap()
        };
        let out = model.loss(g, &trace_of(&model), g.label(), reg).unwrap();
        let analytic = out.grads.flatten();
        let point = model.network().flatten();
        let f = |theta: &[f64]| {
            let mut m = model.clone();
            m.network_mut().assign_flat(theta);
            m.loss(g, &trace_of(&m), g.label(), reg).unwrap().total
        };
        let numeric = finite_diff_grad(f, &point, 1e-6).unwrap();
        let worst = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| relative_error(*a, *n))
            .fold(0.0, f64::max);
        assert!(worst < 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn size_gradients_match_finite_differences() {
        check_gradients(Regularizer::Size { beta: 0.7 }, true);
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        check_gradients(Regularizer::KlBernoulli { beta: 0.4, r: 0.3 }, true);
        check_gradients(Regularizer::KlBernoulli { beta: 0.4, r: 0.3 }, false);
    }

    #[test]
    fn beta_scales_the_regularizer_exactly() {
        let model = tiny_model(1);
        let ds = generate_ba2motifs(2, 2, &GeneratorParams::default()).unwrap();
        let g = ds.graph(0);
        let trace = model.forward_trace(g, Sampling::Soft, None).unwrap();
        for beta in [0.0, 0.3, 2.5] {
            let with = loss_kl_bernoulli(&model, g, &trace, beta, 0.4).unwrap();
            let without = loss_kl_bernoulli(&model, g, &trace, 0.0, 0.4).unwrap();
            assert!((with.total - without.total - beta * with.regularizer).abs() < 1e-12);
            let with = loss_size_constrained(&model, g, &trace, beta).unwrap();
            let mean = trace.soft_mask.iter().sum::<f64>() / trace.soft_mask.len() as f64;
            assert!((with.regularizer - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn kl_is_zero_at_the_prior() {
        let reg = Regularizer::KlBernoulli { beta: 1.0, r: 0.25 };
        assert!(reg.value(&[0.25, 0.25]).abs() < 1e-15);
        assert!(reg.gradient(&[0.25]).iter().all(|g| g.abs() < 1e-12));
        assert!(reg.value(&[0.9]) > 0.0);
    }

    #[test]
    fn rejects_bad_prior() {
        let model = tiny_model(1);
        let ds = generate_ba2motifs(2, 2, &GeneratorParams::default()).unwrap();
        let g = ds.graph(0);
        let trace = model.forward_trace(g, Sampling::Soft, None).unwrap();
        assert!(loss_kl_bernoulli(&model, g, &trace, 1.0, 1.0).is_err());
    }
}
