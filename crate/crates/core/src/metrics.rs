//! Explanation and prediction metrics: AUC, SPA, FID⁻/FID⁺, ACC.
//!
//! Everything here works in fractions; reports convert to percent.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{symmetrize_mask, Dataset, EdgeMask, Graph};
use crate::model::{MaskMap, SiGnnModel};

/// Midranks (1-based) of `values`; tied values share their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// ROC-AUC via the Mann–Whitney statistic, ties counted as ½.
/// `None` when either class is absent.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    if scores.len() != labels.len() {
        return None;
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Symmetrized scores and ground-truth labels, one entry per undirected edge.
pub fn undirected_scores(graph: &Graph, mask: &EdgeMask) -> Result<(Vec<f64>, Vec<bool>)> {
    let gt = graph.gt_edge_labels().ok_or(Error::MissingGroundTruth)?;
    let sym = symmetrize_mask(graph, mask)?;
    let mut scores = Vec::with_capacity(graph.edge_count() / 2);
    let mut labels = Vec::with_capacity(graph.edge_count() / 2);
    for e in 0..graph.edge_count() {
        if e < graph.reverse_of(e) {
            scores.push(sym.values()[e]);
            labels.push(gt[e]);
        }
    }
    Ok((scores, labels))
}

/// AUC pooled over every undirected edge of the given graphs.
pub fn pooled_auc(graphs: &[&Graph], masks: &[EdgeMask]) -> Result<Option<f64>> {
    Error::check_aligned(graphs.len(), masks.len())?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (g, m) in graphs.iter().zip(masks) {
        let (s, l) = undirected_scores(g, m)?;
        scores.extend(s);
        labels.extend(l);
    }
    Ok(auc(&scores, &labels))
}

/// Mean edge activation.
pub fn spa(mask: &EdgeMask) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Validation("SPA of an empty mask is undefined".into()));
    }
    Ok(mask.values().iter().sum::<f64>() / mask.len() as f64)
}

/// 1 when the class predicted on `G ⊙ mask` differs from that on `G`.
pub fn fid_minus(model: &SiGnnModel, graph: &Graph, mask: &EdgeMask) -> Result<f64> {
    let full = model.predict(graph, &EdgeMask::ones(graph.edge_count()))?;
    let masked = model.predict(graph, mask)?;
    Ok(if masked.class == full.class { 0.0 } else { 1.0 })
}

/// 1 when the class predicted on `G ⊙ (1 − mask)` differs from that on `G`.
pub fn fid_plus(model: &SiGnnModel, graph: &Graph, mask: &EdgeMask) -> Result<f64> {
    fid_minus(model, graph, &mask.complement())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplanationEval {
    /// `None` without ground truth or when a split holds one edge class only.
    pub auc: Option<f64>,
    pub spa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionEval {
    pub acc: f64,
    pub fid_minus: f64,
    pub fid_plus: f64,
}

/// Fraction of graphs whose class on `G ⊙ mask` equals the label.
pub fn acc(model: &SiGnnModel, dataset: &Dataset, indices: &[usize], masks: &MaskMap) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Validation("accuracy over an empty split".into()));
    }
    let correct = indices
        .par_iter()
        .map(|&gi| {
            let g = dataset.graph(gi);
            let mask = lookup(masks, gi)?;
            Ok(usize::from(model.predict(g, mask)?.class == g.label()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(correct.iter().sum::<usize>() as f64 / indices.len() as f64)
}

fn lookup(masks: &MaskMap, gi: usize) -> Result<&EdgeMask> {
    masks
        .get(&gi)
        .ok_or_else(|| Error::Validation(format!("no mask supplied for graph {gi}")))
}

/// The model's own soft masks for `indices`.
pub fn model_masks(model: &SiGnnModel, dataset: &Dataset, indices: &[usize]) -> Result<MaskMap> {
    indices
        .par_iter()
        .map(|&gi| Ok((gi, model.compute_edge_scores(dataset.graph(gi), None)?)))
        .collect()
}

/// Per-graph metrics averaged over `indices`; AUC pooled over the split.
pub fn evaluate(
    model: &SiGnnModel,
    dataset: &Dataset,
    indices: &[usize],
    masks: &MaskMap,
) -> Result<(ExplanationEval, PredictionEval)> {
    if indices.is_empty() {
        return Err(Error::Validation("evaluation over an empty split".into()));
    }
    let per_graph = indices
        .par_iter()
        .map(|&gi| {
            let g = dataset.graph(gi);
            let mask = lookup(masks, gi)?;
            mask.check_aligned(g)?;
            let correct = model.predict(g, mask)?.class == g.label();
            Ok((
                spa(mask)?,
                if correct { 1.0 } else { 0.0 },
                fid_minus(model, g, mask)?,
                fid_plus(model, g, mask)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = indices.len() as f64;
    let mean = |f: fn(&(f64, f64, f64, f64)) -> f64| per_graph.iter().map(f).sum::<f64>() / n;
    let auc = if dataset.has_ground_truth() {
        let graphs: Vec<&Graph> = indices.iter().map(|&gi| dataset.graph(gi)).collect();
        let ms: Vec<EdgeMask> = indices
            .iter()
            .map(|&gi| lookup(masks, gi).cloned())
            .collect::<Result<_>>()?;
        pooled_auc(&graphs, &ms)?
    } else {
        None
    };
    Ok((
        ExplanationEval {
            auc,
            spa: mean(|t| t.0),
        },
        PredictionEval {
            acc: mean(|t| t.1),
            fid_minus: mean(|t| t.2),
            fid_plus: mean(|t| t.3),
        },
    ))
}

/// Mean AUC over graphs with a defined per-graph AUC.
pub fn per_graph_auc(dataset: &Dataset, indices: &[usize], masks: &MaskMap) -> Result<Option<f64>> {
    let mut values = Vec::new();
    for &gi in indices {
        let (s, l) = undirected_scores(dataset.graph(gi), lookup(masks, gi)?)?;
        if let Some(a) = auc(&s, &l) {
            values.push(a);
        }
    }
    Ok((!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }

    pub fn percent(self) -> Self {
        Self {
            mean: 100.0 * self.mean,
            std: 100.0 * self.std,
        }
    }
}

/// One evaluated model in a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub seed: u64,
    pub auc: Option<f64>,
    pub spa: f64,
    pub acc: f64,
    pub fid_minus: f64,
    pub fid_plus: f64,
}

impl ModelEval {
    pub fn new(seed: u64, expl: ExplanationEval, pred: PredictionEval) -> Self {
        Self {
            seed,
            auc: expl.auc,
            spa: expl.spa,
            acc: pred.acc,
            fid_minus: pred.fid_minus,
            fid_plus: pred.fid_plus,
        }
    }

    fn percent(self) -> Self {
        Self {
            auc: self.auc.map(|a| 100.0 * a),
            spa: 100.0 * self.spa,
            acc: 100.0 * self.acc,
            fid_minus: 100.0 * self.fid_minus,
            fid_plus: 100.0 * self.fid_plus,
            ..self
        }
    }
}

/// Mean ± std per metric across models. Metrics undefined for every model
/// are omitted.
pub fn aggregate(evals: &[ModelEval]) -> BTreeMap<String, MeanStd> {
    let mut out = BTreeMap::new();
    let aucs: Vec<f64> = evals.iter().filter_map(|e| e.auc).collect();
    let cols: [(&str, Vec<f64>); 5] = [
        ("auc", aucs),
        ("spa", evals.iter().map(|e| e.spa).collect()),
        ("acc", evals.iter().map(|e| e.acc).collect()),
        ("fid_minus", evals.iter().map(|e| e.fid_minus).collect()),
        ("fid_plus", evals.iter().map(|e| e.fid_plus).collect()),
    ];
    for (name, values) in cols {
        if let Some(ms) = MeanStd::of(&values) {
            out.insert(name.to_string(), ms);
        }
    }
    out
}

/// Evaluation report; values are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub models: Vec<ModelEval>,
    pub aggregate: BTreeMap<String, MeanStd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl EvalReport {
    /// Builds a percent-valued report from fractional evaluations.
    pub fn from_fractions(dataset: impl Into<String>, evals: &[ModelEval]) -> Self {
        Self {
            dataset: dataset.into(),
            models: evals.iter().map(|e| e.percent()).collect(),
            aggregate: aggregate(evals).into_iter().map(|(k, v)| (k, v.percent())).collect(),
            provenance: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchDescriptor;
    use crate::nn::RngStream;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
        assert_eq!(auc(&[0.3; 4], &[true, false, true, false]), Some(0.5));
        assert_eq!(auc(&[0.3, 0.4], &[true, true]), None);
    }

    #[test]
    fn auc_matches_pair_counting_with_ties() {
        let mut rng = RngStream::new(4);
        for _ in 0..200 {
            let n = 2 + rng.index(11);
            let scores: Vec<f64> = (0..n).map(|_| rng.index(4) as f64 / 4.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
            match auc(&scores, &labels) {
                Some(a) => assert_eq!(a, brute_auc(&scores, &labels)),
                None => assert!(labels.iter().all(|&l| l) || labels.iter().all(|&l| !l)),
            }
        }
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spa_examples() {
        assert_eq!(spa(&EdgeMask::new(vec![1.0, 0.0, 0.5, 0.5]).unwrap()).unwrap(), 0.5);
        assert_eq!(spa(&EdgeMask::ones(3)).unwrap(), 1.0);
        assert!(spa(&EdgeMask::new(vec![]).unwrap()).is_err());
    }

    #[test]
    fn fid_minus_of_full_mask_is_zero() {
        let ds = crate::graph::generate_ba2motifs(4, 1, &Default::default()).unwrap();
        let model = SiGnnModel::new(ArchDescriptor::desk(4), 2).unwrap();
        for g in ds.graphs() {
            assert_eq!(fid_minus(&model, g, &EdgeMask::ones(g.edge_count())).unwrap(), 0.0);
            assert_eq!(fid_plus(&model, g, &EdgeMask::zeros(g.edge_count())).unwrap(), 0.0);
        }
    }

    #[test]
    fn aggregate_of_identical_evals_has_zero_std() {
        let e = ModelEval {
            seed: 0,
            auc: Some(0.9),
            spa: 0.4,
            acc: 1.0,
            fid_minus: 0.0,
            fid_plus: 0.5,
        };
        let agg = aggregate(&[e, e, e]);
        assert_eq!(agg["auc"].mean, 0.9);
        assert_eq!(agg["auc"].std, 0.0);
        let report = EvalReport::from_fractions("d", &[e]);
        assert_eq!(report.models[0].spa, 40.0);
        let text = serde_json::to_string(&report).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&text).unwrap(), report);
    }
}
