//! Explanation-budget bound for latent signal states, its Monte Carlo check,
//! the variance and tail inequalities behind it, and a latent-signal
//! simulator for re-explanation experiments.

use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistency::{correlation_from_records, Coefficients, PoolingMode, ReExplanationRecord, ScatterRow};
use crate::error::{Error, Result};
use crate::graph::{edge_neighbors, EdgeMask, EdgeNeighborhoodIndex, Graph};
use crate::nn::mlp::sigmoid;
use crate::nn::RngStream;

/// Law of context-driven scores on [0, 1]; its mean is `mu_c` of the config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CtxDistribution {
    /// Uniform on `[μ − w′, μ + w′]` with `w′ = min(w, μ, 1 − μ)`, so the
    /// interval stays inside [0, 1] and the mean stays at `μ`.
    Uniform { half_width: f64 },
    /// `Beta(μκ, (1 − μ)κ)`.
    Beta { concentration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_ctx: usize,
    pub x_plus: f64,
    pub x_minus: f64,
    pub mu_p: f64,
    pub mu_n: f64,
    pub mu_c: f64,
    pub ctx: CtxDistribution,
}

impl SignalConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.x_minus) && unit(self.x_plus) && self.x_minus < self.x_plus) {
            return Err(Error::config("need 0 <= x_minus < x_plus <= 1"));
        }
        if !(self.mu_p >= self.x_plus && self.mu_p <= 1.0) {
            return Err(Error::config("mu_p must lie in [x_plus, 1]"));
        }
        if !(self.mu_n >= 0.0 && self.mu_n <= self.x_minus) {
            return Err(Error::config("mu_n must lie in [0, x_minus]"));
        }
        if !unit(self.mu_c) {
            return Err(Error::config("mu_c must lie in [0, 1]"));
        }
        match self.ctx {
            CtxDistribution::Uniform { half_width } if !(half_width >= 0.0) => {
                Err(Error::config("uniform half width must be >= 0"))
            }
            CtxDistribution::Beta { concentration } if !(concentration > 0.0) => {
                Err(Error::config("beta concentration must be > 0"))
            }
            CtxDistribution::Beta { .. } if !(self.mu_c > 0.0 && self.mu_c < 1.0) => {
                Err(Error::config("beta context law needs mu_c strictly inside (0, 1)"))
            }
            _ => Ok(()),
        }
    }

    /// Score mass contributed by the signal edges.
    pub fn signal_mass(&self) -> f64 {
        self.n_pos as f64 * self.mu_p + self.n_neg as f64 * self.mu_n
    }

    pub fn ctx_law(&self) -> Law {
        match self.ctx {
            CtxDistribution::Uniform { half_width } => {
                let w = half_width.min(self.mu_c).min(1.0 - self.mu_c);
                Law::Uniform {
                    low: self.mu_c - w,
                    high: self.mu_c + w,
                }
            }
            CtxDistribution::Beta { concentration } => Law::Beta {
                alpha: self.mu_c * concentration,
                beta: (1.0 - self.mu_c) * concentration,
            },
        }
    }
}

/// A scalar law with known mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law {
    Uniform { low: f64, high: f64 },
    Beta { alpha: f64, beta: f64 },
    /// `high` with probability `p_high`, else `low`.
    TwoPoint { low: f64, high: f64, p_high: f64 },
}

impl Law {
    pub fn mean(&self) -> f64 {
        match *self {
            Law::Uniform { low, high } => 0.5 * (low + high),
            Law::Beta { alpha, beta } => alpha / (alpha + beta),
            Law::TwoPoint { low, high, p_high } => low + p_high * (high - low),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Law::Uniform { low, high } => (high - low).powi(2) / 12.0,
            Law::Beta { alpha, beta } => {
                let s = alpha + beta;
                alpha * beta / (s * s * (s + 1.0))
            }
            Law::TwoPoint { low, high, p_high } => p_high * (1.0 - p_high) * (high - low).powi(2),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Law::Uniform { low, high } => low <= high && low.is_finite() && high.is_finite(),
            Law::Beta { alpha, beta } => alpha > 0.0 && beta > 0.0,
            Law::TwoPoint { low, high, p_high } => low.is_finite() && high.is_finite() && (0.0..=1.0).contains(&p_high),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid law {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            Law::Uniform { low, high } => rng.uniform_range(low, high),
            Law::Beta { alpha, beta } => Beta::new(alpha, beta).expect("validated parameters").sample(rng),
            Law::TwoPoint { low, high, p_high } => {
                if rng.bernoulli(p_high) {
                    high
                } else {
                    low
                }
            }
        }
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("q must lie in (0, 1), got {q}")))
    }
}

/// `c_q = μ_c + ½·√(q / (1 − q))`.
pub fn c_q(mu_c: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    Ok(mu_c + 0.5 * (q / (1.0 - q)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetCheck {
    pub q: f64,
    pub c_q: f64,
    /// `|Eₚ|μₚ + |Eₙ|μₙ + |E_c|c_q`.
    pub k_min: f64,
    /// `|E|c_q + |Eₚ|(μₚ − c_q) − |Eₙ|(c_q − μₙ)`.
    pub k_tradeoff: f64,
}

pub fn budget_bound(config: &SignalConfig, q: f64) -> Result<BudgetCheck> {
    config.validate()?;
    let c = c_q(config.mu_c, q)?;
    let (np, nn, nc) = (config.n_pos as f64, config.n_neg as f64, config.n_ctx as f64);
    let k_min = np * config.mu_p + nn * config.mu_n + nc * c;
    let k_tradeoff = (np + nn + nc) * c + np * (config.mu_p - c) - nn * (c - config.mu_n);
    Ok(BudgetCheck {
        q,
        c_q: c,
        k_min,
        k_tradeoff,
    })
}

const CHUNK: usize = 1000;

/// Fraction of trials in which signal mass plus `n_ctx` fresh context
/// scores stays within `k`.
pub fn monte_carlo_budget(config: &SignalConfig, k: f64, trials: usize, seed: u64) -> Result<f64> {
    config.validate()?;
    if trials < 1000 {
        return Err(Error::config(format!("need at least 1000 trials, got {trials}")));
    }
    let law = config.ctx_law();
    let root = RngStream::new(seed);
    let signal = config.signal_mass();
    let hits: usize = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = root.child(c as u64);
            let n = CHUNK.min(trials - c * CHUNK);
            (0..n)
                .filter(|_| {
                    let ctx: f64 = (0..config.n_ctx).map(|_| law.sample(&mut rng)).sum();
                    signal + ctx <= k
                })
                .count()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(hits as f64 / trials as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub config: SignalConfig,
    pub q: f64,
    pub c_q: f64,
    #[serde(rename = "K_min")]
    pub k_min: f64,
    pub trials: usize,
    pub frequency: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

/// Monte Carlo slack allowed below `q`.
pub const BUDGET_SLACK: f64 = 0.01;

/// Budget bound at `q` followed by a Monte Carlo run with `K = K_min`.
pub fn budget_report(config: &SignalConfig, q: f64, trials: usize, seed: u64) -> Result<TheoryReport> {
    let b = budget_bound(config, q)?;
    let frequency = monte_carlo_budget(config, b.k_min, trials, seed)?;
    Ok(TheoryReport {
        config: config.clone(),
        q,
        c_q: b.c_q,
        k_min: b.k_min,
        trials,
        frequency,
        pass: frequency >= q - BUDGET_SLACK && (b.k_min - b.k_tradeoff).abs() <= 1e-12 * b.k_min.abs().max(1.0),
        provenance: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopoviciuCheck {
    /// Population variance.
    pub variance: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn popoviciu_check(samples: &[f64]) -> Result<PopoviciuCheck> {
    if samples.len() < 2 {
        return Err(Error::config("need at least 2 samples"));
    }
    if let Some(bad) = samples.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Validation(format!("sample {bad} outside [0, 1]")));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(PopoviciuCheck {
        variance,
        bound: 0.25,
        pass: variance <= 0.25 + 1e-12,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CantelliCheck {
    /// Empirical `P(X − E[X] ≤ a)`.
    pub empirical: f64,
    /// `a² / (Var + a²)`.
    pub bound: f64,
    pub standard_error: f64,
    pub pass: bool,
}

pub fn cantelli_check(law: &Law, a: f64, trials: usize, seed: u64) -> Result<CantelliCheck> {
    law.validate()?;
    if !(a > 0.0) {
        return Err(Error::config(format!("a must be > 0, got {a}")));
    }
    if trials == 0 {
        return Err(Error::config("need at least one trial"));
    }
    let mean = law.mean();
    let bound = if a.is_infinite() { 1.0 } else { a * a / (law.variance() + a * a) };
    let root = RngStream::new(seed);
    let hits: usize = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = root.child(c as u64);
            let n = CHUNK.min(trials - c * CHUNK);
            (0..n).filter(|_| law.sample(&mut rng) - mean <= a).count()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let p = hits as f64 / trials as f64;
    let standard_error = (p * (1.0 - p) / trials as f64).sqrt();
    Ok(CantelliCheck {
        empirical: p,
        bound,
        standard_error,
        pass: p >= bound - 3.0 * standard_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeState {
    Pos,
    Neg,
    Ctx,
}

impl EdgeState {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeState::Pos => "pos",
            EdgeState::Neg => "neg",
            EdgeState::Ctx => "ctx",
        }
    }
}

/// How latent states are laid over a host graph's undirected edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatePlan {
    /// Directed-edge counts; pairs are assigned at random. Counts must be even.
    Counts { n_pos: usize, n_neg: usize, n_ctx: usize },
    /// Ground-truth edges are positive signal; each other pair is negative
    /// signal with probability `neg_fraction`, context otherwise.
    GroundTruth { neg_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub plan: StatePlan,
    pub x_plus: f64,
    pub x_minus: f64,
    /// Context rule `σ(gain · mean neighbor weight + offset + noise)`.
    pub gain: f64,
    pub offset: f64,
    /// Standard deviation of the fixed per-edge noise.
    pub noise_scale: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            plan: StatePlan::GroundTruth { neg_fraction: 0.5 },
            x_plus: 0.8,
            x_minus: 0.2,
            gain: 4.0,
            offset: -2.0,
            noise_scale: 0.5,
        }
    }
}

/// A simulated explainer with fixed signal scores and context-driven rest.
#[derive(Debug, Clone)]
pub struct SimModel {
    pub states: Vec<EdgeState>,
    /// Fixed scores of signal edges (unused for context edges).
    signal: Vec<f64>,
    noise: Vec<f64>,
    gain: f64,
    offset: f64,
    neighbors: EdgeNeighborhoodIndex,
}

impl SimModel {
    /// Scores against input weights `w`.
    pub fn scores(&self, w: &EdgeMask) -> Result<EdgeMask> {
        Error::check_aligned(self.states.len(), w.len())?;
        let values = (0..self.states.len())
            .map(|e| match self.states[e] {
                EdgeState::Pos | EdgeState::Neg => self.signal[e],
                EdgeState::Ctx => {
                    let nb = self.neighbors.of(e);
                    let ctx = if nb.is_empty() {
                        0.0
                    } else {
                        nb.iter().map(|&k| w.values()[k]).sum::<f64>() / nb.len() as f64
                    };
                    sigmoid(self.gain * ctx + self.offset + self.noise[e])
                }
            })
            .collect();
        EdgeMask::new(values)
    }
}

pub fn simulate_latent_model(graph: &Graph, params: &SimParams, seed: u64) -> Result<SimModel> {
    let (xp, xm) = (params.x_plus, params.x_minus);
    if !(0.0 <= xm && xm < xp && xp <= 1.0) {
        return Err(Error::config("need 0 <= x_minus < x_plus <= 1"));
    }
    if !(params.noise_scale >= 0.0) {
        return Err(Error::config("noise scale must be >= 0"));
    }
    let e = graph.edge_count();
    let mut rng = RngStream::new(seed);
    // One representative per undirected pair.
    let pairs: Vec<usize> = (0..e).filter(|&k| k < graph.reverse_of(k)).collect();
    let mut pair_states = vec![EdgeState::Ctx; pairs.len()];
    match params.plan {
        StatePlan::Counts { n_pos, n_neg, n_ctx } => {
            if n_pos + n_neg + n_ctx != e {
                return Err(Error::Alignment {
                    expected: e,
                    found: n_pos + n_neg + n_ctx,
                });
            }
            if n_pos % 2 != 0 || n_neg % 2 != 0 {
                return Err(Error::config("state counts must be even (both directions share a state)"));
            }
            let mut order: Vec<usize> = (0..pairs.len()).collect();
            rng.shuffle(&mut order);
            for (rank, &p) in order.iter().enumerate() {
                pair_states[p] = if rank < n_pos / 2 {
                    EdgeState::Pos
                } else if rank < (n_pos + n_neg) / 2 {
                    EdgeState::Neg
                } else {
                    EdgeState::Ctx
                };
            }
        }
        StatePlan::GroundTruth { neg_fraction } => {
            if !(0.0..=1.0).contains(&neg_fraction) {
                return Err(Error::config("neg_fraction must lie in [0, 1]"));
            }
            let gt = graph.gt_edge_labels().ok_or(Error::MissingGroundTruth)?;
            for (p, &k) in pairs.iter().enumerate() {
                pair_states[p] = if gt[k] {
                    EdgeState::Pos
                } else if rng.bernoulli(neg_fraction) {
                    EdgeState::Neg
                } else {
                    EdgeState::Ctx
                };
            }
        }
    }
    let mut states = vec![EdgeState::Ctx; e];
    for (p, &k) in pairs.iter().enumerate() {
        states[k] = pair_states[p];
        states[graph.reverse_of(k)] = pair_states[p];
    }
    let mut signal = vec![0.0; e];
    let mut noise = vec![0.0; e];
    for k in 0..e {
        signal[k] = match states[k] {
            EdgeState::Pos => rng.uniform_range(xp, 1.0),
            EdgeState::Neg => rng.uniform_range(0.0, xm),
            EdgeState::Ctx => 0.0,
        };
        noise[k] = params.noise_scale * rng.standard_normal();
    }
    Ok(SimModel {
        states,
        signal,
        noise,
        gain: params.gain,
        offset: params.offset,
        neighbors: edge_neighbors(graph),
    })
}

/// First pass at all-ones weights, second pass at the first-pass scores.
pub fn simulate_re_explanation(sim: &SimModel) -> Result<ReExplanationRecord> {
    let m1 = sim.scores(&EdgeMask::ones(sim.states.len()))?;
    let m2 = sim.scores(&m1)?;
    ReExplanationRecord::from_masks(m1, m2)
}

/// `(Δs, Δc)` coefficients for context edges and for signal edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimCorrelation {
    pub context: Coefficients,
    pub signal: Coefficients,
}

pub fn simulated_correlation(graphs: &[&Graph], sims: &[SimModel], records: &[ReExplanationRecord]) -> Result<SimCorrelation> {
    Error::check_aligned(graphs.len(), sims.len())?;
    let groups: Vec<Vec<bool>> = sims
        .iter()
        .map(|s| s.states.iter().map(|&st| st == EdgeState::Ctx).collect())
        .collect();
    let report = correlation_from_records(graphs, records, &groups, PoolingMode::Pooled)?;
    Ok(SimCorrelation {
        context: report.important,
        signal: report.unimportant,
    })
}

/// Scatter rows for a simulated graph, tagged with the latent state.
pub fn simulation_rows(graph_id: usize, graph: &Graph, sim: &SimModel, record: &ReExplanationRecord) -> Result<Vec<ScatterRow>> {
    let mut rows = crate::consistency::scatter_rows(graph_id, graph, record)?;
    for (row, state) in rows.iter_mut().zip(&sim.states) {
        row.state = Some(state.as_str().to_string());
    }
    Ok(rows)
}
