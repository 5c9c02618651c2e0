//! Minimal dense-math runtime with exact manual backpropagation.

pub mod adam;
pub mod gin;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod rng;
pub mod sampling;

pub use adam::AdamState;
pub use gin::{GinCache, GinGrads, GinLayerParams};
pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::DenseMatrix;
pub use mlp::{sigmoid, Activation, DenseLayer, Dropout, MlpCache, MlpParams};
pub use rng::RngStream;
pub use sampling::{gumbel_sigmoid, gumbel_sigmoid_with_uniforms, open_sigmoid};

use crate::error::{Error, Result};

/// A collection of parameter tensors visited in a fixed order.
///
/// Gradients share the parameter type, so optimisers and finite-difference
/// oracles can zip the two tensor lists.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// `self += alpha · other`.
    fn axpy(&mut self, alpha: f64, other: &Self) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= alpha;
            }
        }
    }
}

/// Column means over nodes (mean readout).
pub fn pool_mean(node_feats: &DenseMatrix) -> Result<Vec<f64>> {
    if node_feats.rows() == 0 {
        return Err(Error::Validation("cannot pool an empty graph".into()));
    }
    let n = node_feats.rows() as f64;
    Ok(node_feats.column_sums().into_iter().map(|s| s / n).collect())
}

/// Backward of [`pool_mean`]: every node receives `grad / n`.
pub fn pool_mean_backward(grad: &[f64], node_count: usize) -> DenseMatrix {
    let n = node_count as f64;
    DenseMatrix::from_fn(node_count, grad.len(), |_, c| grad[c] / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_single_node() {
        let h = DenseMatrix::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap();
        assert_eq!(pool_mean(&h).unwrap(), vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn pool_opposite_nodes_cancel() {
        let h = DenseMatrix::from_rows(&[vec![1.5, -2.0], vec![-1.5, 2.0]]).unwrap();
        assert_eq!(pool_mean(&h).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn pool_is_permutation_invariant() {
        let rows = vec![vec![1.0, 2.0], vec![0.25, -4.0], vec![3.0, 0.5]];
        let permuted = vec![rows[2].clone(), rows[0].clone(), rows[1].clone()];
        let a = pool_mean(&DenseMatrix::from_rows(&rows).unwrap()).unwrap();
        let b = pool_mean(&DenseMatrix::from_rows(&permuted).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn pool_rejects_empty() {
        assert!(pool_mean(&DenseMatrix::zeros(0, 3)).is_err());
    }
}
