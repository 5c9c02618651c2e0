//! Synthetic house/cycle motif dataset on Barabási–Albert base graphs.

use serde::{Deserialize, Serialize};

use super::{Dataset, Graph, Split};
use crate::error::{Error, Result};
use crate::nn::{DenseMatrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotifKind {
    /// 5-node cycle, class 0.
    Cycle,
    /// 5-node house (square with a roof), class 1.
    House,
}

impl MotifKind {
    pub fn label(self) -> usize {
        match self {
            MotifKind::Cycle => 0,
            MotifKind::House => 1,
        }
    }

    /// Undirected motif bonds over local node ids 0..5.
    pub fn bonds(self) -> &'static [(usize, usize)] {
        match self {
            MotifKind::Cycle => &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)],
            MotifKind::House => &[(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureScheme {
    /// Every node gets the all-ones vector.
    Ones { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Nodes in the Barabási–Albert base graph.
    pub base_nodes: usize,
    /// Edges added per new base node.
    pub attach_edges: usize,
    /// Fraction of graphs carrying the house motif (class 1).
    pub house_fraction: f64,
    pub features: FeatureScheme,
    /// Train and validation fractions; the remainder is test.
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            base_nodes: 20,
            attach_edges: 1,
            house_fraction: 0.5,
            features: FeatureScheme::Ones { dim: 4 },
            train_fraction: 0.8,
            val_fraction: 0.1,
        }
    }
}

impl GeneratorParams {
    fn validate(&self) -> Result<()> {
        if self.attach_edges == 0 {
            return Err(Error::config("attach_edges must be >= 1"));
        }
        if self.base_nodes < self.attach_edges + 1 {
            return Err(Error::config(format!(
                "base_nodes ({}) must exceed attach_edges ({})",
                self.base_nodes, self.attach_edges
            )));
        }
        if !(self.house_fraction > 0.0 && self.house_fraction < 1.0) {
            return Err(Error::config("house_fraction must lie in (0, 1)"));
        }
        let FeatureScheme::Ones { dim } = self.features;
        if dim == 0 {
            return Err(Error::config("feature dimension must be >= 1"));
        }
        let (tr, va) = (self.train_fraction, self.val_fraction);
        if !(tr > 0.0 && va >= 0.0 && tr + va <= 1.0) {
            return Err(Error::config("split fractions must satisfy 0 < train, 0 <= val, train + val <= 1"));
        }
        Ok(())
    }
}

/// Preferential-attachment tree/graph: a clique on `m + 1` seed nodes, then
/// each new node links to `m` distinct existing nodes chosen ∝ degree.
fn barabasi_albert(n: usize, m: usize, rng: &mut RngStream) -> Vec<(usize, usize)> {
    let mut bonds = Vec::new();
    // Each node appears once per incident bond: sampling uniformly from this
    // list is sampling proportionally to degree.
    let mut endpoints = Vec::new();
    for u in 0..=m {
        for v in (u + 1)..=m {
            bonds.push((u, v));
            endpoints.extend([u, v]);
        }
    }
    for new in (m + 1)..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let t = endpoints[rng.index(endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            bonds.push((t, new));
            endpoints.extend([t, new]);
        }
    }
    bonds
}

fn build_graph(params: &GeneratorParams, motif: MotifKind, rng: &mut RngStream) -> Result<Graph> {
    let base = params.base_nodes;
    let mut bonds = barabasi_albert(base, params.attach_edges, rng);
    let mut gt = vec![false; bonds.len()];
    for &(u, v) in motif.bonds() {
        bonds.push((base + u, base + v));
        gt.push(true);
    }
    // The bridge links the motif to the base and is not ground truth.
    let anchor = rng.index(base);
    let motif_node = base + rng.index(5);
    bonds.push((anchor, motif_node));
    gt.push(false);

    let FeatureScheme::Ones { dim } = params.features;
    let features = DenseMatrix::filled(base + 5, dim, 1.0);
    Graph::from_undirected(features, &bonds, Some(&gt), motif.label())
}

/// Generates a balanced motif dataset. Deterministic given `seed`.
pub fn generate_ba2motifs(n_graphs: usize, seed: u64, params: &GeneratorParams) -> Result<Dataset> {
    if n_graphs < 2 {
        return Err(Error::config(format!("n_graphs must be >= 2, got {n_graphs}")));
    }
    params.validate()?;
    let root = RngStream::new(seed);

    let n_house = ((n_graphs as f64) * params.house_fraction).round() as usize;
    let n_house = n_house.clamp(1, n_graphs - 1);
    let mut kinds: Vec<MotifKind> = (0..n_graphs)
        .map(|i| if i < n_house { MotifKind::House } else { MotifKind::Cycle })
        .collect();
    root.child(0).shuffle(&mut kinds);

    let graphs = kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| build_graph(params, kind, &mut root.child(2 + i as u64)))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..n_graphs).collect();
    root.child(1).shuffle(&mut order);
    let n_train = ((n_graphs as f64) * params.train_fraction).round() as usize;
    let n_val = ((n_graphs as f64) * params.val_fraction).round() as usize;
    let n_train = n_train.min(n_graphs);
    let n_val = n_val.min(n_graphs - n_train);
    let split = Split {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    };
    Dataset::new(graphs, split)
}
