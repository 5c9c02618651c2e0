//! Gumbel-Sigmoid (binary concrete) relaxation of Bernoulli edge masks.

use super::mlp::sigmoid;
use super::rng::RngStream;
use crate::error::{Error, Result};

/// Smallest distance kept between a relaxed mask value and {0, 1}.
pub const MASK_MARGIN: f64 = 1e-12;

/// Sigmoid clamped into the open interval (0, 1).
#[inline]
pub fn open_sigmoid(x: f64) -> f64 {
    sigmoid(x).clamp(MASK_MARGIN, 1.0 - MASK_MARGIN)
}

/// Logistic noise `log u − log(1 − u)` for a uniform draw `u ∈ (0, 1)`.
#[inline]
pub fn logistic_noise(u: f64) -> f64 {
    u.ln() - (1.0 - u).ln()
}

/// `σ((log u − log(1−u) + logit) / τ)` with the uniforms supplied.
///
/// The noise is added to the raw explainer logit, before the sigmoid.
pub fn gumbel_sigmoid_with_uniforms(logits: &[f64], tau: f64, uniforms: &[f64]) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::config(format!("temperature must be > 0, got {tau}")));
    }
    Error::check_aligned(logits.len(), uniforms.len())?;
    Ok(logits
        .iter()
        .zip(uniforms)
        .map(|(&l, &u)| open_sigmoid((logistic_noise(u) + l) / tau))
        .collect())
}

/// Draws one uniform per logit from `rng` and applies the relaxation.
/// Returns `(samples, uniforms)` so the draw can be replayed.
pub fn gumbel_sigmoid(logits: &[f64], tau: f64, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(tau > 0.0) {
        return Err(Error::config(format!("temperature must be > 0, got {tau}")));
    }
    let uniforms: Vec<f64> = logits.iter().map(|_| rng.uniform_open()).collect();
    let samples = gumbel_sigmoid_with_uniforms(logits, tau, &uniforms)?;
    Ok((samples, uniforms))
}
