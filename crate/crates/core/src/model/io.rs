//! Versioned JSON checkpoints with named tensors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchDescriptor, Network, SiGnnModel};
use crate::error::{Error, Result};
use crate::nn::MlpParams;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    arch: ArchDescriptor,
    tensors: BTreeMap<String, Tensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

/// Visits every named tensor as `(name, shape, values)`.
fn named_tensors(net: &Network) -> Vec<(String, Vec<usize>, &[f64])> {
    fn mlp<'a>(prefix: &str, p: &'a MlpParams, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
        for (k, l) in p.layers.iter().enumerate() {
            out.push((format!("{prefix}.{k}.weight"), vec![l.in_dim(), l.out_dim()], l.weight.data()));
            out.push((format!("{prefix}.{k}.bias"), vec![l.out_dim()], &l.bias));
        }
    }
    let mut out = Vec::new();
    for (i, layer) in net.encoder.iter().enumerate() {
        out.push((format!("encoder.{i}.eps"), vec![1], std::slice::from_ref(&layer.eps)));
        mlp(&format!("encoder.{i}.mlp"), &layer.mlp, &mut out);
    }
    mlp("explainer", &net.explainer, &mut out);
    mlp("classifier", &net.classifier, &mut out);
    out
}

fn named_tensors_mut(net: &mut Network) -> Vec<(String, &mut [f64])> {
    fn mlp<'a>(prefix: &str, p: &'a mut MlpParams, out: &mut Vec<(String, &'a mut [f64])>) {
        for (k, l) in p.layers.iter_mut().enumerate() {
            out.push((format!("{prefix}.{k}.weight"), l.weight.data_mut()));
            out.push((format!("{prefix}.{k}.bias"), &mut l.bias));
        }
    }
    let mut out = Vec::new();
    for (i, layer) in net.encoder.iter_mut().enumerate() {
        out.push((format!("encoder.{i}.eps"), std::slice::from_mut(&mut layer.eps)));
        mlp(&format!("encoder.{i}.mlp"), &mut layer.mlp, &mut out);
    }
    mlp("explainer", &mut net.explainer, &mut out);
    mlp("classifier", &mut net.classifier, &mut out);
    out
}

/// Writes `model` to `path`. `provenance` is stored verbatim when given.
pub fn save_model(model: &SiGnnModel, path: &Path, provenance: Option<&serde_json::Value>) -> Result<()> {
    let tensors = named_tensors(model.network())
        .into_iter()
        .map(|(name, shape, data)| {
            (
                name,
                Tensor {
                    shape,
                    data: data.to_vec(),
                },
            )
        })
        .collect();
    let ckpt = Checkpoint {
        version: MODEL_VERSION,
        arch: model.arch().clone(),
        tensors,
        provenance: provenance.cloned(),
    };
    let text = serde_json::to_string(&ckpt).map_err(|e| Error::Parse {
        record: "model".into(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text)?;
    Ok(())
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        record: format!("model file {}", path.display()),
        message: e.to_string(),
    })?;
    if let Some(v) = value.get("version").and_then(|v| v.as_u64()) {
        if v != MODEL_VERSION as u64 {
            return Err(Error::Version {
                found: v as u32,
                expected: MODEL_VERSION,
            });
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Parse {
        record: format!("model file {}", path.display()),
        message: e.to_string(),
    })
}

fn build(arch: ArchDescriptor, mut tensors: BTreeMap<String, Tensor>) -> Result<SiGnnModel> {
    let mut model = SiGnnModel::new(arch, 0)?;
    let mut expected_shapes: BTreeMap<String, Vec<usize>> = named_tensors(model.network())
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    for (name, slot) in named_tensors_mut(model.network_mut()) {
        let expected = expected_shapes.remove(&name).unwrap_or_default();
        let tensor = tensors.remove(&name).ok_or_else(|| Error::Shape {
            tensor: name.clone(),
            expected: expected.clone(),
            found: vec![],
        })?;
        if tensor.shape != expected || tensor.data.len() != slot.len() {
            return Err(Error::Shape {
                tensor: name,
                expected,
                found: tensor.shape,
            });
        }
        if !tensor.data.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation(format!("tensor `{name}` holds non-finite values")));
        }
        slot.copy_from_slice(&tensor.data);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Validation(format!("unexpected tensor `{extra}` in checkpoint")));
    }
    Ok(model)
}

/// Loads a checkpoint with the architecture it was saved with.
pub fn load_model(path: &Path) -> Result<SiGnnModel> {
    let ckpt = read_checkpoint(path)?;
    build(ckpt.arch, ckpt.tensors)
}

/// Loads a checkpoint into `arch`; any tensor whose shape disagrees is
/// reported by name.
pub fn load_model_with_arch(path: &Path, arch: &ArchDescriptor) -> Result<SiGnnModel> {
    let ckpt = read_checkpoint(path)?;
    build(arch.clone(), ckpt.tensors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> SiGnnModel {
        SiGnnModel::new(ArchDescriptor::desk(4), 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = model();
        save_model(&m, &path, Some(&serde_json::json!({"seed": 3}))).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }

    #[test]
    fn tensor_names_follow_the_layout() {
        let names: Vec<String> = named_tensors(model().network()).into_iter().map(|t| t.0).collect();
        for expected in ["encoder.0.eps", "encoder.1.mlp.0.weight", "explainer.2.bias", "classifier.2.weight"] {
            assert!(names.iter().any(|n| n == expected), "missing {expected}");
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&model(), &path, None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen("\"version\":1", "\"version\":7", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Version { found: 7, expected: 1 })));
    }

    #[test]
    fn mismatched_arch_names_the_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&model(), &path, None).unwrap();
        let mut other = ArchDescriptor::desk(4);
        other.encoder_dims = vec![8, 16];
        match load_model_with_arch(&path, &other) {
            Err(Error::Shape { tensor, .. }) => assert_eq!(tensor, "encoder.0.mlp.0.weight"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }
}
