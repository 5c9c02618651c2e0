//! Re-explanation, self-consistency (ESC), per-edge score variation Δs,
//! context variation Δc and their correlation diagnostics.

mod correlation;

pub use correlation::{kendall, pearson, spearman};

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{edge_neighbors, symmetrize_mask, Dataset, EdgeMask, EdgeNeighborhoodIndex, Graph};
use crate::model::SiGnnModel;

/// Two explanation passes over one graph and their discrepancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReExplanationRecord {
    /// Scores on the raw graph.
    pub m1: EdgeMask,
    /// Scores with `m1` as the input edge weights.
    pub m2: EdgeMask,
    /// `|m1 − m2|` per directed edge.
    pub delta_s: Vec<f64>,
    /// Mean of `delta_s`.
    pub esc: f64,
}

impl ReExplanationRecord {
    pub fn from_masks(m1: EdgeMask, m2: EdgeMask) -> Result<Self> {
        Error::check_aligned(m1.len(), m2.len())?;
        let delta_s: Vec<f64> = m1.values().iter().zip(m2.values()).map(|(a, b)| (a - b).abs()).collect();
        let esc = mean_or_zero(&delta_s);
        Ok(Self { m1, m2, delta_s, esc })
    }
}

fn mean_or_zero(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// First pass on the raw graph, second pass with the first-pass scores as
/// edge weights. Exactly two scoring passes.
pub fn re_explain(model: &SiGnnModel, graph: &Graph) -> Result<ReExplanationRecord> {
    let m1 = model.compute_edge_scores(graph, None)?;
    let m2 = model.compute_edge_scores(graph, Some(&m1))?;
    ReExplanationRecord::from_masks(m1, m2)
}

/// Mean absolute difference between two masks (0 for empty masks).
pub fn esc(a: &EdgeMask, b: &EdgeMask) -> Result<f64> {
    Error::check_aligned(a.len(), b.len())?;
    let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).collect();
    Ok(mean_or_zero(&d))
}

/// Mean Δs over each edge's neighborhood; `None` where the neighborhood is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVariation {
    pub delta_c: Vec<Option<f64>>,
}

pub fn context_variation_with(neighbors: &EdgeNeighborhoodIndex, delta_s: &[f64]) -> Result<ContextVariation> {
    Error::check_aligned(neighbors.len(), delta_s.len())?;
    let delta_c = (0..delta_s.len())
        .map(|e| {
            let nb = neighbors.of(e);
            (!nb.is_empty()).then(|| nb.iter().map(|&k| delta_s[k]).sum::<f64>() / nb.len() as f64)
        })
        .collect();
    Ok(ContextVariation { delta_c })
}

pub fn context_variation(graph: &Graph, record: &ReExplanationRecord) -> Result<ContextVariation> {
    context_variation_with(&edge_neighbors(graph), &record.delta_s)
}

/// The three coefficients over one group of `(Δs, Δc)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    /// Number of pairs (pooled mode) or graphs contributing (per-graph mode).
    pub count: usize,
}

impl Coefficients {
    pub fn of(x: &[f64], y: &[f64]) -> Self {
        Self {
            pearson: pearson(x, y),
            spearman: spearman(x, y),
            kendall: kendall(x, y),
            count: x.len(),
        }
    }

    fn mean_of(items: &[Coefficients]) -> Self {
        let avg = |f: fn(&Coefficients) -> Option<f64>| {
            let v: Vec<f64> = items.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        Self {
            pearson: avg(|c| c.pearson),
            spearman: avg(|c| c.spearman),
            kendall: avg(|c| c.kendall),
            count: items.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// One coefficient per group over all edges of the split.
    Pooled,
    /// Coefficients per graph, then averaged over graphs where defined.
    PerGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub mode: PoolingMode,
    /// Ground-truth-important edges.
    pub important: Coefficients,
    pub unimportant: Coefficients,
    /// Edges left out because their neighborhood is empty.
    pub excluded: usize,
}

/// Correlations of `(Δs, Δc)` split by a per-edge boolean group, from
/// already computed records.
pub fn correlation_from_records(
    graphs: &[&Graph],
    records: &[ReExplanationRecord],
    groups: &[Vec<bool>],
    mode: PoolingMode,
) -> Result<CorrelationReport> {
    Error::check_aligned(graphs.len(), records.len())?;
    Error::check_aligned(graphs.len(), groups.len())?;
    let mut excluded = 0;
    let mut per_graph: Vec<[(Vec<f64>, Vec<f64>); 2]> = Vec::with_capacity(graphs.len());
    for ((g, rec), grp) in graphs.iter().zip(records).zip(groups) {
        Error::check_aligned(g.edge_count(), grp.len())?;
        let cv = context_variation(g, rec)?;
        let mut buckets: [(Vec<f64>, Vec<f64>); 2] = Default::default();
        for e in 0..g.edge_count() {
            match cv.delta_c[e] {
                Some(dc) => {
                    let b = &mut buckets[usize::from(grp[e])];
                    b.0.push(rec.delta_s[e]);
                    b.1.push(dc);
                }
                None => excluded += 1,
            }
        }
        per_graph.push(buckets);
    }
    let group = |k: usize| match mode {
        PoolingMode::Pooled => {
            let xs: Vec<f64> = per_graph.iter().flat_map(|b| b[k].0.iter().copied()).collect();
            let ys: Vec<f64> = per_graph.iter().flat_map(|b| b[k].1.iter().copied()).collect();
            Coefficients::of(&xs, &ys)
        }
        PoolingMode::PerGraph => {
            let items: Vec<Coefficients> = per_graph
                .iter()
                .map(|b| Coefficients::of(&b[k].0, &b[k].1))
                .filter(|c| c.pearson.is_some() || c.spearman.is_some() || c.kendall.is_some())
                .collect();
            Coefficients::mean_of(&items)
        }
    };
    Ok(CorrelationReport {
        mode,
        important: group(1),
        unimportant: group(0),
        excluded,
    })
}

fn re_explain_split(model: &SiGnnModel, dataset: &Dataset, indices: &[usize]) -> Result<Vec<ReExplanationRecord>> {
    indices
        .par_iter()
        .map(|&gi| re_explain(model, dataset.graph(gi)))
        .collect()
}

/// Re-explains every graph in `indices` and correlates Δs with Δc separately
/// for ground-truth-important and unimportant edges.
pub fn correlation_report(
    model: &SiGnnModel,
    dataset: &Dataset,
    indices: &[usize],
    mode: PoolingMode,
) -> Result<CorrelationReport> {
    if !dataset.has_ground_truth() {
        return Err(Error::MissingGroundTruth);
    }
    let graphs: Vec<&Graph> = indices.iter().map(|&gi| dataset.graph(gi)).collect();
    let groups: Vec<Vec<bool>> = graphs
        .iter()
        .map(|g| g.gt_edge_labels().map(<[bool]>::to_vec).ok_or(Error::MissingGroundTruth))
        .collect::<Result<_>>()?;
    let records = re_explain_split(model, dataset, indices)?;
    correlation_from_records(&graphs, &records, &groups, mode)
}

/// One scatter-export row per directed edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterRow {
    pub graph_id: usize,
    pub edge_id: usize,
    pub m1: f64,
    pub m2: f64,
    pub m1_sym: f64,
    pub m2_sym: f64,
    pub gt_label: Option<bool>,
    pub delta_s: f64,
    pub delta_c: Option<f64>,
    /// Latent state for simulated graphs (`pos`, `neg`, `ctx`).
    pub state: Option<String>,
}

pub const SCATTER_HEADER: &str = "graph_id,edge_id,m1,m2,m1_sym,m2_sym,gt_label,delta_s,delta_c";

pub fn scatter_rows(graph_id: usize, graph: &Graph, record: &ReExplanationRecord) -> Result<Vec<ScatterRow>> {
    let cv = context_variation(graph, record)?;
    let s1 = symmetrize_mask(graph, &record.m1)?;
    let s2 = symmetrize_mask(graph, &record.m2)?;
    let gt = graph.gt_edge_labels();
    Ok((0..graph.edge_count())
        .map(|e| ScatterRow {
            graph_id,
            edge_id: e,
            m1: record.m1.values()[e],
            m2: record.m2.values()[e],
            m1_sym: s1.values()[e],
            m2_sym: s2.values()[e],
            gt_label: gt.map(|g| g[e]),
            delta_s: record.delta_s[e],
            delta_c: cv.delta_c[e],
            state: None,
        })
        .collect())
}

/// Writes rows as CSV. A `state` column is appended when any row has one.
pub fn write_scatter_csv(path: &Path, rows: &[ScatterRow]) -> Result<()> {
    let with_state = rows.iter().any(|r| r.state.is_some());
    let mut out = String::from(SCATTER_HEADER);
    if with_state {
        out.push_str(",state");
    }
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let gt = r.gt_label.map(|b| u8::from(b).to_string()).unwrap_or_default();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.graph_id,
            r.edge_id,
            r.m1,
            r.m2,
            r.m1_sym,
            r.m2_sym,
            gt,
            r.delta_s,
            opt(r.delta_c)
        );
        if with_state {
            out.push(',');
            out.push_str(r.state.as_deref().unwrap_or(""));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a file written by [`write_scatter_csv`].
pub fn read_scatter_csv(path: &Path) -> Result<Vec<ScatterRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if !header.starts_with(SCATTER_HEADER) {
        return Err(Error::Parse {
            record: "scatter header".into(),
            message: format!("unexpected header `{header}`"),
        });
    }
    let parse_err = |line: usize, msg: String| Error::Parse {
        record: format!("scatter line {}", line + 2),
        message: msg,
    };
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 9 {
                return Err(parse_err(i, format!("expected 9 fields, got {}", f.len())));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|e| parse_err(i, e.to_string()));
            let idx = |k: usize| f[k].parse::<usize>().map_err(|e| parse_err(i, e.to_string()));
            Ok(ScatterRow {
                graph_id: idx(0)?,
                edge_id: idx(1)?,
                m1: num(2)?,
                m2: num(3)?,
                m1_sym: num(4)?,
                m2_sym: num(5)?,
                gt_label: match f[6] {
                    "" => None,
                    "1" => Some(true),
                    "0" => Some(false),
                    other => return Err(parse_err(i, format!("bad gt_label `{other}`"))),
                },
                delta_s: num(7)?,
                delta_c: if f[8].is_empty() { None } else { Some(num(8)?) },
                state: f.get(9).filter(|s| !s.is_empty()).map(|s| s.to_string()),
            })
        })
        .collect()
}

/// Re-explains `indices` and writes the scatter CSV. Returns the row count.
pub fn scatter_export(model: &SiGnnModel, dataset: &Dataset, indices: &[usize], path: &Path) -> Result<usize> {
    let records = re_explain_split(model, dataset, indices)?;
    let mut rows = Vec::new();
    for (&gi, rec) in indices.iter().zip(&records) {
        rows.extend(scatter_rows(gi, dataset.graph(gi), rec)?);
    }
    write_scatter_csv(path, &rows)?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(v: &[f64]) -> EdgeMask {
        EdgeMask::new(v.to_vec()).unwrap()
    }

    #[test]
    fn esc_examples() {
        assert_eq!(esc(&mask(&[0.3, 0.4]), &mask(&[0.3, 0.4])).unwrap(), 0.0);
        assert_eq!(esc(&mask(&[1.0, 0.0]), &mask(&[0.0, 1.0])).unwrap(), 1.0);
        assert!((esc(&mask(&[0.2, 0.8]), &mask(&[0.4, 0.4])).unwrap() - 0.3).abs() < 1e-15);
        assert!(esc(&mask(&[0.2]), &mask(&[0.4, 0.4])).is_err());
    }

    #[test]
    fn constant_delta_s_gives_constant_delta_c() {
        let features = crate::nn::DenseMatrix::filled(4, 1, 1.0);
        let g = Graph::from_undirected(features, &[(0, 1), (1, 2), (2, 3)], None, 0).unwrap();
        let rec = ReExplanationRecord {
            m1: EdgeMask::ones(6),
            m2: EdgeMask::ones(6),
            delta_s: vec![0.2; 6],
            esc: 0.2,
        };
        let cv = context_variation(&g, &rec).unwrap();
        assert!(cv.delta_c.iter().all(|d| (d.unwrap() - 0.2).abs() < 1e-15));

        let pair = Graph::from_undirected(crate::nn::DenseMatrix::filled(2, 1, 1.0), &[(0, 1)], None, 0).unwrap();
        let rec = ReExplanationRecord::from_masks(EdgeMask::ones(2), EdgeMask::zeros(2)).unwrap();
        assert_eq!(context_variation(&pair, &rec).unwrap().delta_c, vec![None, None]);
    }
}
