//! Cross-model explanation ensembling and its composition with self-denoising.
//!
//! The ensemble rule is an approximation: per-edge mean across models,
//! damped by the cross-model spread, `m̄ · max(0, 1 − λ·std)` with the
//! population standard deviation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::calibrate_graph;
use crate::error::{Error, Result};
use crate::graph::{EdgeMask, Graph};
use crate::model::SiGnnModel;

/// Models sharing one architecture.
#[derive(Debug, Clone)]
pub struct ModelPool {
    models: Vec<SiGnnModel>,
    seeds: Vec<u64>,
}

impl ModelPool {
    pub fn new(models: Vec<SiGnnModel>, seeds: Vec<u64>) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::config(format!("a pool needs at least 2 models, got {}", models.len())));
        }
        Error::check_aligned(models.len(), seeds.len())?;
        if models.iter().any(|m| m.arch() != models[0].arch()) {
            return Err(Error::config("pool models must share one architecture"));
        }
        Ok(Self { models, seeds })
    }

    pub fn models(&self) -> &[SiGnnModel] {
        &self.models
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Combines per-model masks edgewise. Order of `masks` does not matter.
pub fn combine_masks(masks: &[EdgeMask], lambda: f64) -> Result<EdgeMask> {
    if masks.len() < 2 {
        return Err(Error::config("ensembling needs at least 2 masks"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::config(format!("lambda must be >= 0, got {lambda}")));
    }
    let len = masks[0].len();
    for m in masks {
        Error::check_aligned(len, m.len())?;
    }
    let n = masks.len() as f64;
    let values = (0..len)
        .map(|e| {
            let mean = masks.iter().map(|m| m.values()[e]).sum::<f64>() / n;
            let var = masks.iter().map(|m| (m.values()[e] - mean).powi(2)).sum::<f64>() / n;
            (mean * (1.0 - lambda * var.sqrt()).max(0.0)).clamp(0.0, 1.0)
        })
        .collect();
    EdgeMask::new(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleMode {
    #[serde(rename = "ee")]
    Ee,
    #[serde(rename = "sd+ee")]
    SdThenEe,
}

/// One scoring pass per model, then [`combine_masks`].
pub fn ee_calibrate(pool: &ModelPool, graph: &Graph, lambda: f64) -> Result<EdgeMask> {
    let masks = pool
        .models
        .par_iter()
        .map(|m| m.compute_edge_scores(graph, None))
        .collect::<Result<Vec<_>>>()?;
    combine_masks(&masks, lambda)
}

/// Self-denoising per model (two scoring passes each), then [`combine_masks`].
pub fn sd_then_ee(pool: &ModelPool, graph: &Graph, eta: f64, lambda: f64) -> Result<EdgeMask> {
    let masks = pool
        .models
        .par_iter()
        .map(|m| Ok(calibrate_graph(m, 0, graph, eta)?.mask))
        .collect::<Result<Vec<_>>>()?;
    combine_masks(&masks, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(v: &[f64]) -> EdgeMask {
        EdgeMask::new(v.to_vec()).unwrap()
    }

    #[test]
    fn combine_examples() {
        let a = mask(&[1.0, 0.0]);
        let b = mask(&[0.0, 1.0]);
        assert_eq!(combine_masks(&[a.clone(), b.clone()], 0.0).unwrap().values(), &[0.5, 0.5]);
        assert_eq!(combine_masks(&[a.clone(), b], 1.0).unwrap().values(), &[0.25, 0.25]);
        assert_eq!(combine_masks(&[a.clone(), a.clone()], 1.0).unwrap(), a);
        assert!(combine_masks(&[a], 1.0).is_err());
    }
}
