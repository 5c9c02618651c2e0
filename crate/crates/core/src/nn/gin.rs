//! GIN message passing with per-edge weights.
//!
//! `h_i' = MLP((1 + eps) · h_i + Σ_{(j→i)} w_{ji} · h_j)`
//!
//! Messages travel along the stored direction of each edge: edge `(j, i)`
//! carries `h_j` into node `i`, scaled by that edge's weight.

use super::matrix::{dot, DenseMatrix};
use super::mlp::{Dropout, MlpCache, MlpParams};
use super::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GinLayerParams {
    pub eps: f64,
    pub mlp: MlpParams,
}

#[derive(Debug, Clone)]
pub struct GinCache {
    input: DenseMatrix,
    mlp: MlpCache,
}

/// Gradients of one GIN layer.
#[derive(Debug, Clone)]
pub struct GinGrads {
    pub params: GinLayerParams,
    pub node_feats: DenseMatrix,
    pub edge_weights: Vec<f64>,
}

impl GinLayerParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            eps: 0.0,
            mlp: self.mlp.zeros_like(),
        }
    }

    fn aggregate(
        &self,
        node_feats: &DenseMatrix,
        edges: &[(usize, usize)],
        edge_weights: &[f64],
    ) -> Result<DenseMatrix> {
        Error::check_aligned(edges.len(), edge_weights.len())?;
        if node_feats.cols() != self.mlp.input_dim() {
            return Err(Error::dim(format!(
                "gin layer expects {} features, got {}",
                self.mlp.input_dim(),
                node_feats.cols()
            )));
        }
        let n = node_feats.rows();
        let scale = 1.0 + self.eps;
        let mut agg = node_feats.map(|v| scale * v);
        for (&(src, dst), &w) in edges.iter().zip(edge_weights) {
            if src >= n || dst >= n {
                return Err(Error::Validation(format!(
                    "edge ({src}, {dst}) out of range for {n} nodes"
                )));
            }
            if w == 0.0 {
                continue;
            }
            let cols = node_feats.cols();
            let src_row = &node_feats.data()[src * cols..(src + 1) * cols];
            for (a, h) in agg.row_mut(dst).iter_mut().zip(src_row) {
                *a += w * h;
            }
        }
        Ok(agg)
    }

    pub fn forward(
        &self,
        node_feats: &DenseMatrix,
        edges: &[(usize, usize)],
        edge_weights: &[f64],
    ) -> Result<(DenseMatrix, GinCache)> {
        self.forward_with(node_feats, edges, edge_weights, None)
    }

    pub fn forward_with(
        &self,
        node_feats: &DenseMatrix,
        edges: &[(usize, usize)],
        edge_weights: &[f64],
        dropout: Option<Dropout<'_>>,
    ) -> Result<(DenseMatrix, GinCache)> {
        let agg = self.aggregate(node_feats, edges, edge_weights)?;
        let (out, mlp) = self.mlp.forward_with(&agg, dropout)?;
        Ok((
            out,
            GinCache {
                input: node_feats.clone(),
                mlp,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &GinCache,
        edges: &[(usize, usize)],
        edge_weights: &[f64],
        grad_out: &DenseMatrix,
    ) -> Result<GinGrads> {
        Error::check_aligned(edges.len(), edge_weights.len())?;
        let (mlp_grads, d_agg) = self.mlp.backward(&cache.mlp, grad_out)?;
        let h = &cache.input;
        let scale = 1.0 + self.eps;
        let mut d_h = d_agg.map(|v| scale * v);
        let d_eps = dot(d_agg.data(), h.data());
        let mut d_w = Vec::with_capacity(edges.len());
        let cols = h.cols();
        for (&(src, dst), &w) in edges.iter().zip(edge_weights) {
            let g_dst = &d_agg.data()[dst * cols..(dst + 1) * cols];
            d_w.push(dot(g_dst, h.row(src)));
            if w != 0.0 {
                let g_dst = g_dst.to_vec();
                for (d, g) in d_h.row_mut(src).iter_mut().zip(&g_dst) {
                    *d += w * g;
                }
            }
        }
        Ok(GinGrads {
            params: GinLayerParams {
                eps: d_eps,
                mlp: mlp_grads,
            },
            node_feats: d_h,
            edge_weights: d_w,
        })
    }
}

impl ParamSet for GinLayerParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = vec![std::slice::from_ref(&self.eps)];
        t.extend(self.mlp.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = vec![std::slice::from_mut(&mut self.eps)];
        t.extend(self.mlp.tensors_mut());
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, DenseLayer};

    fn identity_layer(dim: usize) -> GinLayerParams {
        GinLayerParams {
            eps: 0.0,
            mlp: MlpParams::from_layers(vec![DenseLayer {
                weight: DenseMatrix::identity(dim),
                bias: vec![0.0; dim],
                activation: Activation::Identity,
            }])
            .unwrap(),
        }
    }

    #[test]
    fn isolated_nodes_pass_through() {
        let layer = identity_layer(2);
        let h = DenseMatrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        let (out, _) = layer.forward(&h, &[], &[]).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn single_edge_hand_aggregation() {
        let layer = identity_layer(2);
        let h = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![10.0, 20.0]]).unwrap();
        let (out, _) = layer.forward(&h, &[(0, 1)], &[1.0]).unwrap();
        assert_eq!(out.row(0), &[1.0, 2.0]);
        assert_eq!(out.row(1), &[11.0, 22.0]);
    }

    #[test]
    fn zero_weights_annihilate_messages() {
        let layer = identity_layer(2);
        let h = DenseMatrix::from_fn(3, 2, |r, c| (r + 2 * c) as f64 + 0.5);
        let edges = [(0, 1), (1, 0), (1, 2), (2, 1)];
        let (masked, _) = layer.forward(&h, &edges, &[0.0; 4]).unwrap();
        let (bare, _) = layer.forward(&h, &[], &[]).unwrap();
        assert_eq!(masked, bare);
    }

    #[test]
    fn misaligned_weights_rejected() {
        let layer = identity_layer(2);
        let h = DenseMatrix::zeros(2, 2);
        assert!(matches!(
            layer.forward(&h, &[(0, 1)], &[1.0, 1.0]),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn edge_gradient_is_zero_without_upstream_at_target() {
        let layer = identity_layer(2);
        let h = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let edges = [(0, 1), (1, 2)];
        let w = [0.7, 0.3];
        let (_, cache) = layer.forward(&h, &edges, &w).unwrap();
        // Upstream only on node 2: edge (0,1) feeds node 1 and must get zero.
        let mut g = DenseMatrix::zeros(3, 2);
        g.row_mut(2).copy_from_slice(&[1.0, -1.0]);
        let grads = layer.backward(&cache, &edges, &w, &g).unwrap();
        assert_eq!(grads.edge_weights[0], 0.0);
        assert_eq!(grads.edge_weights[1], 3.0 - 4.0);
    }
}
