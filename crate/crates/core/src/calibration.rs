//! Self-denoising calibration `m̃ = max(0, (1 − η·Δs)·m⁽¹⁾)`, its
//! ranking-correction threshold, stability bounds on η, and η selection by
//! adapted validation accuracy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistency::{re_explain, ReExplanationRecord};
use crate::error::{Error, Result};
use crate::graph::{Dataset, EdgeMask, Graph, SplitPart};
use crate::metrics;
use crate::model::{adapt_classifier, AdaptConfig, MaskMap, SiGnnModel};
use crate::nn::RngStream;

pub const DEFAULT_ETA_GRID: [f64; 6] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0];

fn check_eta(eta: f64) -> Result<()> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("eta must be a finite value >= 0, got {eta}")))
    }
}

/// `(1 − η·Δs)·m` without clipping.
pub fn denoise_unclipped(m: f64, delta_s: f64, eta: f64) -> f64 {
    (1.0 - eta * delta_s) * m
}

/// `max(0, (1 − η·Δs)·m)`.
pub fn denoise_value(m: f64, delta_s: f64, eta: f64) -> f64 {
    denoise_unclipped(m, delta_s, eta).max(0.0)
}

pub fn self_denoise(m1: &EdgeMask, delta_s: &[f64], eta: f64) -> Result<EdgeMask> {
    check_eta(eta)?;
    Error::check_aligned(m1.len(), delta_s.len())?;
    EdgeMask::new(
        m1.values()
            .iter()
            .zip(delta_s)
            .map(|(&m, &d)| denoise_value(m, d, eta))
            .collect(),
    )
}

/// Smallest η above which a mis-ranked pair (`m⁺ < m⁻` with `Δs⁺ < Δs⁻`)
/// is put back in order by the unclipped update. `None` when no finite η
/// does it (`m⁻Δs⁻ ≤ m⁺Δs⁺`).
pub fn ranking_correction_threshold(m_plus: f64, m_minus: f64, ds_plus: f64, ds_minus: f64) -> Result<Option<f64>> {
    if !(m_plus < m_minus) {
        return Err(Error::precondition(format!(
            "pair is not mis-ranked: m+ = {m_plus} is not below m- = {m_minus}"
        )));
    }
    if !(ds_minus > ds_plus) {
        return Err(Error::precondition(format!(
            "instability of the unimportant edge ({ds_minus}) must exceed that of the important edge ({ds_plus})"
        )));
    }
    let denominator = m_minus * ds_minus - m_plus * ds_plus;
    Ok((denominator > 0.0).then(|| (m_minus - m_plus) / denominator))
}

/// `Σ m⁽¹⁾·Δs`.
pub fn damping_mass(m1: &EdgeMask, delta_s: &[f64]) -> Result<f64> {
    Error::check_aligned(m1.len(), delta_s.len())?;
    Ok(m1.values().iter().zip(delta_s).map(|(m, d)| m * d).sum())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("epsilon must be > 0, got {epsilon}")))
    }
}

/// Largest η keeping the first-order prediction shift within ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaBound {
    /// `+∞` when the damping mass or the gradient vanishes.
    pub eta: f64,
    pub gradient_inf_norm: f64,
    pub damping_mass: f64,
    /// Class whose probability is `f`.
    pub class: usize,
}

/// `η ≤ ε / (‖∇f(M⁽¹⁾)‖∞ · Σ m⁽¹⁾Δs)`, with `f` the probability of the
/// class predicted at `M⁽¹⁾` and the gradient taken over edge weights.
pub fn stability_eta_bound_deterministic(
    model: &SiGnnModel,
    graph: &Graph,
    m1: &EdgeMask,
    delta_s: &[f64],
    epsilon: f64,
) -> Result<EtaBound> {
    check_epsilon(epsilon)?;
    let mass = damping_mass(m1, delta_s)?;
    let class = model.predict(graph, m1)?.class;
    let (_, grad) = model.prediction_gradient(graph, m1, class)?;
    let norm = grad.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
    let eta = if mass == 0.0 || norm == 0.0 {
        f64::INFINITY
    } else {
        epsilon / (norm * mass)
    };
    Ok(EtaBound {
        eta,
        gradient_inf_norm: norm,
        damping_mass: mass,
        class,
    })
}

/// `η ≤ ε / Σ m⁽¹⁾Δs` for predictions under sampled binary masks.
pub fn stability_eta_bound_stochastic(m1: &EdgeMask, delta_s: &[f64], epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let mass = damping_mass(m1, delta_s)?;
    Ok(if mass == 0.0 { f64::INFINITY } else { epsilon / mass })
}

/// Monte Carlo estimate of `E[f(G ⊙ X)]` for two Bernoulli mask laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub mean_before: f64,
    pub mean_after: f64,
    /// `|mean_after − mean_before|`.
    pub shift: f64,
    /// Standard error of the difference of the two means.
    pub standard_error: f64,
}

fn bernoulli_mean(
    model: &SiGnnModel,
    graph: &Graph,
    probs: &EdgeMask,
    class: usize,
    samples: usize,
    rng: &RngStream,
) -> Result<(f64, f64)> {
    const CHUNK: usize = 1000;
    let chunks = samples.div_ceil(CHUNK);
    let sums = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng.child(c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let x: Vec<f64> = probs
                    .values()
                    .iter()
                    .map(|&p| if r.bernoulli(p) { 1.0 } else { 0.0 })
                    .collect();
                let f = model.predict(graph, &EdgeMask::new(x)?)?.probs[class];
                s += f;
                s2 += f * f;
            }
            Ok((s, s2))
        })
        .collect::<Result<Vec<_>>>()?;
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok((mean, var))
}

/// Samples `X⁽¹⁾ ~ Bern(m1)` and `X̃ ~ Bern(m̃)` edgewise and compares the
/// mean probability of `class`.
pub fn stochastic_shift(
    model: &SiGnnModel,
    graph: &Graph,
    m1: &EdgeMask,
    m_tilde: &EdgeMask,
    class: usize,
    samples: usize,
    seed: u64,
) -> Result<ShiftEstimate> {
    if samples < 2 {
        return Err(Error::config("need at least 2 samples per side"));
    }
    let rng = RngStream::new(seed);
    let (a, va) = bernoulli_mean(model, graph, m1, class, samples, &rng.child(0))?;
    let (b, vb) = bernoulli_mean(model, graph, m_tilde, class, samples, &rng.child(1))?;
    let n = samples as f64;
    Ok(ShiftEstimate {
        mean_before: a,
        mean_after: b,
        shift: (b - a).abs(),
        standard_error: (va / n + vb / n).sqrt(),
    })
}

/// Calibration of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphCalibration {
    pub graph_id: usize,
    pub record: ReExplanationRecord,
    pub mask: EdgeMask,
    /// Edges with positive first-pass score driven to exactly 0.
    pub clip_count: usize,
    pub damping_mass: f64,
}

impl GraphCalibration {
    pub fn entry(&self) -> Result<CalibrationEntry> {
        Ok(CalibrationEntry {
            graph_id: self.graph_id,
            esc: self.record.esc,
            spa_before: metrics::spa(&self.record.m1)?,
            spa_after: metrics::spa(&self.mask)?,
            clip_count: self.clip_count,
        })
    }
}

/// Re-explains `graph` and applies the update with `eta`.
pub fn calibrate_graph(model: &SiGnnModel, graph_id: usize, graph: &Graph, eta: f64) -> Result<GraphCalibration> {
    check_eta(eta)?;
    let record = re_explain(model, graph)?;
    let mask = self_denoise(&record.m1, &record.delta_s, eta)?;
    let clip_count = record
        .m1
        .values()
        .iter()
        .zip(mask.values())
        .filter(|(&m, &t)| m > 0.0 && t == 0.0)
        .count();
    let damping_mass = damping_mass(&record.m1, &record.delta_s)?;
    Ok(GraphCalibration {
        graph_id,
        record,
        mask,
        clip_count,
        damping_mass,
    })
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub eta: f64,
    pub graphs: Vec<GraphCalibration>,
    /// Classifier-adapted model (SD*), when requested.
    pub adapted: Option<SiGnnModel>,
}

impl CalibrationResult {
    pub fn masks(&self) -> MaskMap {
        self.graphs.iter().map(|g| (g.graph_id, g.mask.clone())).collect()
    }

    pub fn report(&self) -> Result<CalibrationReport> {
        Ok(CalibrationReport {
            eta: self.eta,
            adapted: self.adapted.is_some(),
            graphs: self.graphs.iter().map(GraphCalibration::entry).collect::<Result<_>>()?,
            provenance: None,
        })
    }
}

fn calibrate_many(model: &SiGnnModel, dataset: &Dataset, indices: &[usize], eta: f64) -> Result<Vec<GraphCalibration>> {
    indices
        .par_iter()
        .map(|&gi| calibrate_graph(model, gi, dataset.graph(gi), eta))
        .collect()
}

/// Calibrates `indices`. With `adapt` set, also fits the classifier on
/// calibrated masks of the training split (SD*).
pub fn calibrate_dataset(
    model: &SiGnnModel,
    dataset: &Dataset,
    indices: &[usize],
    eta: f64,
    adapt: Option<&AdaptConfig>,
) -> Result<CalibrationResult> {
    check_eta(eta)?;
    let graphs = calibrate_many(model, dataset, indices, eta)?;
    let adapted = match adapt {
        None => None,
        Some(cfg) => {
            let mut masks: MaskMap = graphs.iter().map(|g| (g.graph_id, g.mask.clone())).collect();
            let missing: Vec<usize> = dataset
                .indices(SplitPart::Train)
                .iter()
                .copied()
                .filter(|gi| !masks.contains_key(gi))
                .collect();
            for g in calibrate_many(model, dataset, &missing, eta)? {
                masks.insert(g.graph_id, g.mask);
            }
            Some(adapt_classifier(model, dataset, &masks, cfg)?)
        }
    };
    Ok(CalibrationResult { eta, graphs, adapted })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub graph_id: usize,
    pub esc: f64,
    pub spa_before: f64,
    pub spa_after: f64,
    pub clip_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub eta: f64,
    pub adapted: bool,
    pub graphs: Vec<CalibrationEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdConfig {
    pub eta_grid: Vec<f64>,
    pub adapt: AdaptConfig,
}

impl Default for SdConfig {
    fn default() -> Self {
        Self {
            eta_grid: DEFAULT_ETA_GRID.to_vec(),
            adapt: AdaptConfig::default(),
        }
    }
}

impl SdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta_grid.is_empty() {
            return Err(Error::config("eta grid must not be empty"));
        }
        for &eta in &self.eta_grid {
            check_eta(eta)?;
        }
        if !self.eta_grid.contains(&0.0) {
            return Err(Error::config("eta grid must contain 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSelectionReport {
    /// Candidates in ascending order.
    pub grid: Vec<f64>,
    /// Adapted validation accuracy per candidate.
    pub val_acc: Vec<f64>,
    pub chosen_eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

/// For each candidate η: calibrate train and validation graphs, adapt the
/// classifier on the training masks and score validation accuracy with the
/// calibrated masks. Picks the best candidate, ties toward smaller η.
/// Returns the report and the model adapted at the chosen η.
pub fn select_eta(model: &SiGnnModel, dataset: &Dataset, config: &SdConfig) -> Result<(EtaSelectionReport, SiGnnModel)> {
    config.validate()?;
    let val = dataset.indices(SplitPart::Val);
    if val.is_empty() {
        return Err(Error::Validation("validation split is empty".into()));
    }
    let mut grid = config.eta_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut indices = dataset.indices(SplitPart::Train).to_vec();
    indices.extend_from_slice(val);
    let records: Vec<(usize, ReExplanationRecord)> = indices
        .par_iter()
        .map(|&gi| Ok((gi, re_explain(model, dataset.graph(gi))?)))
        .collect::<Result<_>>()?;

    let outcomes = grid
        .par_iter()
        .map(|&eta| {
            let masks: MaskMap = records
                .iter()
                .map(|(gi, r)| Ok((*gi, self_denoise(&r.m1, &r.delta_s, eta)?)))
                .collect::<Result<_>>()?;
            let adapted = adapt_classifier(model, dataset, &masks, &config.adapt)?;
            let acc = metrics::acc(&adapted, dataset, val, &masks)?;
            Ok((acc, adapted))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, (acc, _)) in outcomes.iter().enumerate() {
        if *acc > outcomes[best].0 {
            best = i;
        }
    }
    let val_acc = outcomes.iter().map(|o| o.0).collect();
    let chosen = outcomes.into_iter().nth(best).map(|o| o.1).expect("non-empty grid");
    Ok((
        EtaSelectionReport {
            chosen_eta: grid[best],
            grid,
            val_acc,
            provenance: None,
        },
        chosen,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_examples() {
        assert!((denoise_value(0.8, 0.5, 1.0) - 0.4).abs() < 1e-15);
        assert_eq!(denoise_value(0.6, 0.8, 2.0), 0.0);
        assert_eq!(denoise_value(0.7, 0.0, 3.0), 0.7);
        let m = EdgeMask::new(vec![0.8, 0.6]).unwrap();
        assert!(self_denoise(&m, &[0.1, 0.1], -1.0).is_err());
        assert!(self_denoise(&m, &[0.1], 1.0).is_err());
    }

    #[test]
    fn threshold_examples() {
        let t = ranking_correction_threshold(0.4, 0.6, 0.1, 0.5).unwrap().unwrap();
        assert!((t - 0.2 / 0.26).abs() < 1e-12);
        assert!(denoise_value(0.4, 0.1, 1.0) > denoise_value(0.6, 0.5, 1.0));
        assert!(ranking_correction_threshold(0.4, 0.6, 0.3, 0.3).is_err());
        assert!(ranking_correction_threshold(0.6, 0.4, 0.1, 0.5).is_err());
        let t = ranking_correction_threshold(0.5, 0.55, 0.4, 0.41).unwrap().unwrap();
        assert!((t - 0.05 / (0.55 * 0.41 - 0.5 * 0.4)).abs() < 1e-9);
    }

    #[test]
    fn stochastic_bound_examples() {
        let m = EdgeMask::new(vec![0.5, 0.5]).unwrap();
        assert!((stability_eta_bound_stochastic(&m, &[0.2, 0.2], 0.1).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(stability_eta_bound_stochastic(&m, &[0.0, 0.0], 0.1).unwrap(), f64::INFINITY);
        assert!(stability_eta_bound_stochastic(&m, &[0.2, 0.2], 0.0).is_err());
    }

    #[test]
    fn grid_must_contain_zero() {
        let cfg = SdConfig {
            eta_grid: vec![0.5, 1.0],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(SdConfig::default().validate().is_ok());
    }
}
