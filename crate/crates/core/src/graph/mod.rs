//! Graph data model, edge neighbourhoods and datasets.
//!
//! Graphs store directed edges with both orientations of every bond present.
//! Edge order is canonical: every mask in the crate is aligned to it.

mod generate;
mod io;

pub use generate::{generate_ba2motifs, FeatureScheme, GeneratorParams, MotifKind};
pub use io::{load_dataset, save_dataset, DATASET_VERSION};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_features: DenseMatrix,
    edges: Vec<(usize, usize)>,
    reverse: Vec<usize>,
    gt_edge_labels: Option<Vec<bool>>,
    label: usize,
}

impl Graph {
    /// Builds a graph and checks every structural invariant: endpoints in
    /// range, no self loops or duplicates, each edge's reverse present, and
    /// ground-truth flags symmetric under reversal.
    pub fn new(
        node_features: DenseMatrix,
        edges: Vec<(usize, usize)>,
        gt_edge_labels: Option<Vec<bool>>,
        label: usize,
    ) -> Result<Self> {
        let n = node_features.rows();
        if n == 0 {
            return Err(Error::Validation("graph has no nodes".into()));
        }
        let mut index = HashMap::with_capacity(edges.len());
        for (k, &(s, d)) in edges.iter().enumerate() {
            if s >= n || d >= n {
                return Err(Error::Validation(format!(
                    "edge {k} ({s}, {d}) references a node >= node_count {n}"
                )));
            }
            if s == d {
                return Err(Error::Validation(format!("edge {k} is a self loop on {s}")));
            }
            if index.insert((s, d), k).is_some() {
                return Err(Error::Validation(format!("edge {k} ({s}, {d}) is duplicated")));
            }
        }
        let mut reverse = Vec::with_capacity(edges.len());
        for (k, &(s, d)) in edges.iter().enumerate() {
            match index.get(&(d, s)) {
                Some(&r) => reverse.push(r),
                None => {
                    return Err(Error::Validation(format!(
                        "edge {k} ({s}, {d}) has no reverse edge ({d}, {s})"
                    )))
                }
            }
        }
        if let Some(gt) = &gt_edge_labels {
            Error::check_aligned(edges.len(), gt.len())?;
            for (k, &r) in reverse.iter().enumerate() {
                if gt[k] != gt[r] {
                    return Err(Error::Validation(format!(
                        "ground truth differs between edge {k} and its reverse {r}"
                    )));
                }
            }
        }
        Ok(Self {
            node_features,
            edges,
            reverse,
            gt_edge_labels,
            label,
        })
    }

    /// Convenience constructor from undirected bonds; each bond `(u, v)` is
    /// stored as `(u, v)` followed by `(v, u)`.
    pub fn from_undirected(
        node_features: DenseMatrix,
        bonds: &[(usize, usize)],
        gt_bonds: Option<&[bool]>,
        label: usize,
    ) -> Result<Self> {
        let mut edges = Vec::with_capacity(2 * bonds.len());
        for &(u, v) in bonds {
            edges.push((u, v));
            edges.push((v, u));
        }
        let gt = gt_bonds.map(|g| g.iter().flat_map(|&f| [f, f]).collect());
        Graph::new(node_features, edges, gt, label)
    }

    pub fn node_count(&self) -> usize {
        self.node_features.rows()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.cols()
    }

    pub fn node_features(&self) -> &DenseMatrix {
        &self.node_features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Index of the reverse orientation of edge `e`.
    pub fn reverse_of(&self, e: usize) -> usize {
        self.reverse[e]
    }

    pub fn reverse_index(&self) -> &[usize] {
        &self.reverse
    }

    pub fn gt_edge_labels(&self) -> Option<&[bool]> {
        self.gt_edge_labels.as_deref()
    }

    pub fn label(&self) -> usize {
        self.label
    }
}

/// Per-edge importance scores in `[0, 1]`, aligned to a graph's edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EdgeMask {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for EdgeMask {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EdgeMask> for Vec<f64> {
    fn from(m: EdgeMask) -> Self {
        m.values
    }
}

impl EdgeMask {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::NonFinite(format!("mask value at edge {k}")));
        }
        if let Some((k, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Validation(format!(
                "mask value {v} at edge {k} is outside [0, 1]"
            )));
        }
        Ok(Self { values })
    }

    pub fn ones(len: usize) -> Self {
        Self {
            values: vec![1.0; len],
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Complementary weights `1 − m`.
    pub fn complement(&self) -> EdgeMask {
        EdgeMask {
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    pub fn check_aligned(&self, graph: &Graph) -> Result<()> {
        Error::check_aligned(graph.edge_count(), self.len())
    }
}

/// Averages the two orientations of every edge.
pub fn symmetrize_mask(graph: &Graph, mask: &EdgeMask) -> Result<EdgeMask> {
    mask.check_aligned(graph)?;
    let v = mask.values();
    Ok(EdgeMask {
        values: (0..v.len())
            .map(|e| 0.5 * (v[e] + v[graph.reverse_of(e)]))
            .collect(),
    })
}

/// For each directed edge, the edges sharing at least one endpoint with it,
/// excluding the edge itself and its reverse orientation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeNeighborhoodIndex {
    neighbors: Vec<Vec<usize>>,
}

impl EdgeNeighborhoodIndex {
    pub fn of(&self, edge: usize) -> &[usize] {
        &self.neighbors[edge]
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

pub fn edge_neighbors(graph: &Graph) -> EdgeNeighborhoodIndex {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); graph.node_count()];
    for (k, &(s, d)) in graph.edges().iter().enumerate() {
        incident[s].push(k);
        incident[d].push(k);
    }
    let neighbors = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(k, &(s, d))| {
            let rev = graph.reverse_of(k);
            let mut n: Vec<usize> = incident[s]
                .iter()
                .chain(&incident[d])
                .copied()
                .filter(|&e| e != k && e != rev)
                .collect();
            n.sort_unstable();
            n.dedup();
            n
        })
        .collect();
    EdgeNeighborhoodIndex { neighbors }
}

/// Partition of graph indices into train / validation / test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitPart::Train),
            "val" => Ok(SplitPart::Val),
            "test" => Ok(SplitPart::Test),
            other => Err(Error::config(format!(
                "unknown split `{other}` (expected train, val or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    graphs: Vec<Graph>,
    split: Split,
}

impl Dataset {
    pub fn new(graphs: Vec<Graph>, split: Split) -> Result<Self> {
        let n = graphs.len();
        let mut seen = vec![false; n];
        for (part, idx) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
            for &i in idx {
                if i >= n {
                    return Err(Error::Validation(format!(
                        "{part} split references graph {i} but only {n} graphs exist"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Validation(format!(
                        "graph {i} appears in more than one split position"
                    )));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("graph {i} is not assigned to any split")));
        }
        Ok(Self { graphs, split })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn graph(&self, i: usize) -> &Graph {
        &self.graphs[i]
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn indices(&self, part: SplitPart) -> &[usize] {
        match part {
            SplitPart::Train => &self.split.train,
            SplitPart::Val => &self.split.val,
            SplitPart::Test => &self.split.test,
        }
    }

    pub fn has_ground_truth(&self) -> bool {
        self.graphs.iter().all(|g| g.gt_edge_labels().is_some())
    }

    pub fn num_classes(&self) -> usize {
        self.graphs.iter().map(|g| g.label() + 1).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::RngStream;

    fn ones(n: usize) -> DenseMatrix {
        DenseMatrix::filled(n, 1, 1.0)
    }

    fn triangle() -> Graph {
        Graph::from_undirected(ones(3), &[(0, 1), (1, 2), (0, 2)], None, 0).unwrap()
    }

    #[test]
    fn triangle_neighborhood() {
        let g = triangle();
        let idx = edge_neighbors(&g);
        let e01 = g.edges().iter().position(|&e| e == (0, 1)).unwrap();
        let mut got: Vec<(usize, usize)> = idx.of(e01).iter().map(|&k| g.edges()[k]).collect();
        got.sort();
        assert_eq!(got, vec![(0, 2), (1, 2), (2, 0), (2, 1)]);
    }

    #[test]
    fn isolated_pair_has_no_neighbors() {
        let g = Graph::from_undirected(ones(2), &[(0, 1)], None, 0).unwrap();
        assert!(edge_neighbors(&g).of(0).is_empty());
    }

    fn brute_force(g: &Graph) -> Vec<Vec<usize>> {
        let edges = g.edges();
        (0..edges.len())
            .map(|k| {
                let (s, d) = edges[k];
                (0..edges.len())
                    .filter(|&o| {
                        let (a, b) = edges[o];
                        o != k && !(a == d && b == s) && (a == s || a == d || b == s || b == d)
                    })
                    .collect()
            })
            .collect()
    }

    fn random_graph(rng: &mut RngStream, n: usize, p: f64) -> Graph {
        let mut bonds = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.bernoulli(p) {
                    bonds.push((u, v));
                }
            }
        }
        Graph::from_undirected(ones(n), &bonds, None, 0).unwrap()
    }

    #[test]
    fn neighbors_match_brute_force_and_are_symmetric() {
        let mut rng = RngStream::new(8);
        for _ in 0..20 {
            let g = random_graph(&mut rng, 8, 0.35);
            let idx = edge_neighbors(&g);
            let oracle = brute_force(&g);
            for k in 0..g.edge_count() {
                assert_eq!(idx.of(k), oracle[k].as_slice());
                assert!(!idx.of(k).contains(&k));
                assert!(!idx.of(k).contains(&g.reverse_of(k)));
                for &o in idx.of(k) {
                    assert!(idx.of(o).contains(&k));
                }
            }
        }
    }

    #[test]
    fn reverse_map_is_involution() {
        let mut rng = RngStream::new(4);
        let g = random_graph(&mut rng, 10, 0.4);
        for k in 0..g.edge_count() {
            assert_eq!(g.reverse_of(g.reverse_of(k)), k);
        }
    }

    #[test]
    fn invalid_graphs_rejected() {
        assert!(Graph::new(ones(2), vec![(0, 2), (2, 0)], None, 0).is_err());
        assert!(Graph::new(ones(2), vec![(0, 1)], None, 0).is_err());
        assert!(Graph::new(ones(2), vec![(0, 1), (1, 0)], Some(vec![true, false]), 0).is_err());
    }

    #[test]
    fn symmetrize_examples() {
        let g = Graph::from_undirected(ones(2), &[(0, 1)], None, 0).unwrap();
        let m = EdgeMask::new(vec![0.8, 0.4]).unwrap();
        let s = symmetrize_mask(&g, &m).unwrap();
        assert!((s.values()[0] - 0.6).abs() < 1e-15 && (s.values()[1] - 0.6).abs() < 1e-15);
        assert_eq!(symmetrize_mask(&g, &s).unwrap(), s);
        let m = EdgeMask::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(symmetrize_mask(&g, &m).unwrap().values(), &[0.5, 0.5]);
        assert!(matches!(
            symmetrize_mask(&g, &EdgeMask::ones(3)),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn mask_rejects_out_of_range() {
        assert!(EdgeMask::new(vec![0.5, 1.2]).is_err());
        assert!(EdgeMask::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn split_must_partition() {
        let g = triangle();
        let graphs = vec![g.clone(), g.clone(), g];
        let ok = Split { train: vec![0], val: vec![1], test: vec![2] };
        assert!(Dataset::new(graphs.clone(), ok).is_ok());
        let overlap = Split { train: vec![0, 1], val: vec![1], test: vec![2] };
        assert!(Dataset::new(graphs.clone(), overlap).is_err());
        let missing = Split { train: vec![0], val: vec![1], test: vec![] };
        assert!(Dataset::new(graphs, missing).is_err());
    }
}
