//! JSON dataset file format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Graph, Split};
use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

pub const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    num_nodes: usize,
    features: Vec<Vec<f64>>,
    edges: Vec<[usize; 2]>,
    gt_edge_labels: Option<Vec<u8>>,
    label: usize,
}

#[derive(Serialize, Deserialize)]
struct SplitRecord {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

#[derive(Serialize)]
struct DatasetFileOut<'a> {
    version: u32,
    graphs: Vec<GraphRecord>,
    split: SplitRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<&'a serde_json::Value>,
}

#[derive(Deserialize)]
struct DatasetFileIn {
    version: u32,
    graphs: Vec<serde_json::Value>,
    split: SplitRecord,
}

fn to_record(g: &Graph) -> GraphRecord {
    GraphRecord {
        num_nodes: g.node_count(),
        features: (0..g.node_count())
            .map(|r| g.node_features().row(r).to_vec())
            .collect(),
        edges: g.edges().iter().map(|&(s, d)| [s, d]).collect(),
        gt_edge_labels: g
            .gt_edge_labels()
            .map(|gt| gt.iter().map(|&f| u8::from(f)).collect()),
        label: g.label(),
    }
}

fn from_record(i: usize, rec: GraphRecord) -> Result<Graph> {
    let ctx = |msg: String| Error::Validation(format!("graph {i}: {msg}"));
    if rec.features.len() != rec.num_nodes {
        return Err(ctx(format!(
            "num_nodes is {} but {} feature rows given",
            rec.num_nodes,
            rec.features.len()
        )));
    }
    let gt = match rec.gt_edge_labels {
        Some(flags) => Some(
            flags
                .into_iter()
                .enumerate()
                .map(|(k, f)| match f {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(ctx(format!("gt_edge_labels[{k}] = {other} is not 0 or 1"))),
                })
                .collect::<Result<Vec<bool>>>()?,
        ),
        None => None,
    };
    let features = DenseMatrix::from_rows(&rec.features).map_err(|e| ctx(e.to_string()))?;
    let edges = rec.edges.into_iter().map(|[s, d]| (s, d)).collect();
    Graph::new(features, edges, gt, rec.label).map_err(|e| ctx(e.to_string()))
}

/// Writes a dataset; an optional provenance object is embedded verbatim.
pub fn save_dataset(
    dataset: &Dataset,
    path: impl AsRef<Path>,
    provenance: Option<&serde_json::Value>,
) -> Result<()> {
    let file = DatasetFileOut {
        version: DATASET_VERSION,
        graphs: dataset.graphs().iter().map(to_record).collect(),
        split: SplitRecord {
            train: dataset.split().train.clone(),
            val: dataset.split().val.clone(),
            test: dataset.split().test.clone(),
        },
        provenance,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &file).map_err(|e| Error::Io(e.into()))?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let raw: DatasetFileIn = serde_json::from_reader(reader).map_err(|e| Error::Parse {
        record: format!("dataset file {}", path.display()),
        message: e.to_string(),
    })?;
    if raw.version != DATASET_VERSION {
        return Err(Error::Version {
            found: raw.version,
            expected: DATASET_VERSION,
        });
    }
    let graphs = raw
        .graphs
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let rec: GraphRecord = serde_json::from_value(v).map_err(|e| Error::Parse {
                record: format!("graph {i}"),
                message: e.to_string(),
            })?;
            from_record(i, rec)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        graphs,
        Split {
            train: raw.split.train,
            val: raw.split.val,
            test: raw.split.test,
        },
    )
}
