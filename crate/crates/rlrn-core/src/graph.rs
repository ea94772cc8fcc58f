//! Relation graphs and the multi-head graph-attention operator.
//!
//! Two graphs drive the network: a local graph connecting every pair of
//! vehicles within the observation distance `D` with weight `(D - d)/D`,
//! and a star graph connecting every vehicle to the ego only. One attention
//! layer aggregates features over either graph; the same operator serves
//! both the confidence stage (all-nodes output) and the ego relation stage
//! (ego-only output).

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{xavier_init, NodeId, ParamSet, Tape, Tensor};
use crate::error::{Error, Result};

/// Dense weighted vehicle graph. Node 0 is the ego.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    n: usize,
    weights: Vec<f32>,
}

impl AdjacencyGraph {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f32 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn weights_tensor(&self) -> Tensor {
        Tensor::new(vec![self.n, self.n], self.weights.clone()).expect("dense square matrix")
    }

    /// `e > 0` mask, row-major.
    pub fn positive_mask(&self) -> Vec<bool> {
        self.weights.iter().map(|&w| w > 0.0).collect()
    }
}

fn edge_weight(a: [f32; 2], b: [f32; 2], d_max: f32) -> f32 {
    let dx = f64::from(a[0]) - f64::from(b[0]);
    let dy = f64::from(a[1]) - f64::from(b[1]);
    let d = (dx * dx + dy * dy).sqrt() as f32;
    if d <= d_max {
        (d_max - d) / d_max
    } else {
        0.0
    }
}

/// Local distance-decay graph: `e_ij = (D - d_ij)/D` for `d_ij <= D`, zero
/// beyond, and `e_ii = 1`. Exactly symmetric.
pub fn build_local_graph(positions: &[[f32; 2]], d_max: f32) -> Result<AdjacencyGraph> {
    if d_max <= 0.0 {
        return Err(Error::Usage("observation distance D must be positive".into()));
    }
    let n = positions.len();
    let mut weights = vec![0.0f32; n * n];
    for i in 0..n {
        weights[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let w = edge_weight(positions[i], positions[j], d_max);
            weights[i * n + j] = w;
            weights[j * n + i] = w;
        }
    }
    Ok(AdjacencyGraph { n, weights })
}

/// Star graph: every vehicle connects only to the ego, with the local-graph
/// weight; `e_00 = 1` so the ego aggregates its own features too.
pub fn build_star_graph(positions: &[[f32; 2]], d_max: f32) -> Result<AdjacencyGraph> {
    if d_max <= 0.0 {
        return Err(Error::Usage("observation distance D must be positive".into()));
    }
    let n = positions.len();
    if n == 0 {
        return Err(Error::Usage("star graph needs at least the ego".into()));
    }
    let mut weights = vec![0.0f32; n * n];
    weights[0] = 1.0;
    for j in 1..n {
        let w = edge_weight(positions[0], positions[j], d_max);
        weights[j] = w;
        weights[j * n] = w;
    }
    Ok(AdjacencyGraph { n, weights })
}

/// Which nodes a layer produces output for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatTarget {
    AllNodes,
    EgoOnly,
}

/// How edge weights combine with attention scores. The layer's written form
/// multiplies the softmax by `e_ij`, so final weights do not sum to one;
/// the normalized alternative folds `ln e_ij` into the score instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionNorm {
    #[default]
    Literal,
    Normalized,
}

/// Per-head projection parameters of one attention layer. `self_w` projects
/// the collecting node, `peer_w` the neighbor being scored, `value_w` the
/// aggregated payload.
#[derive(Debug, Clone)]
pub struct GatParams {
    pub heads: Vec<GatHead>,
    pub in_dim: usize,
    pub head_dim: usize,
}

#[derive(Debug, Clone)]
pub struct GatHead {
    pub self_w: crate::autodiff::ParamId,
    pub peer_w: crate::autodiff::ParamId,
    pub value_w: crate::autodiff::ParamId,
}

impl GatParams {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        in_dim: usize,
        head_dim: usize,
        n_heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut heads = Vec::with_capacity(n_heads);
        for w in 0..n_heads {
            heads.push(GatHead {
                self_w: params
                    .register(format!("{prefix}.h{w}.self"), xavier_init(in_dim, head_dim, rng)?)?,
                peer_w: params
                    .register(format!("{prefix}.h{w}.peer"), xavier_init(in_dim, head_dim, rng)?)?,
                value_w: params
                    .register(format!("{prefix}.h{w}.value"), xavier_init(in_dim, head_dim, rng)?)?,
            });
        }
        Ok(Self { heads, in_dim, head_dim })
    }

    pub fn out_dim(&self) -> usize {
        self.heads.len() * self.head_dim
    }
}

/// One multi-head attention aggregation over `graph`.
///
/// `features` is `[n, in_dim]`. All-nodes mode returns `[n, out_dim]`;
/// ego-only mode returns `[1, out_dim]`. Per head and target node `i`,
/// scores over neighbors `j` with `e_ij > 0` pass through a masked softmax,
/// are scaled by `e_ij` (or folded, see [`AttentionNorm`]) and weight the
/// projected neighbor values. Heads concatenate.
pub fn gat_layer(
    tape: &mut Tape,
    features: NodeId,
    graph: &AdjacencyGraph,
    layout: &GatParams,
    params: &ParamSet,
    target: GatTarget,
    norm: AttentionNorm,
) -> Result<NodeId> {
    Ok(gat_layer_with_attention(tape, features, graph, layout, params, target, norm)?.0)
}

/// Same as [`gat_layer`], also returning the per-head pre-scaling softmax
/// nodes (attention weights before multiplication by `e_ij`).
pub fn gat_layer_with_attention(
    tape: &mut Tape,
    features: NodeId,
    graph: &AdjacencyGraph,
    layout: &GatParams,
    params: &ParamSet,
    target: GatTarget,
    norm: AttentionNorm,
) -> Result<(NodeId, Vec<NodeId>)> {
    let n = graph.node_count();
    let shape = tape.value(features).shape().to_vec();
    if shape.len() != 2 || shape[0] != n || shape[1] != layout.in_dim {
        return Err(Error::Dimension {
            op: "gat_layer",
            detail: format!(
                "features {shape:?} vs {} nodes of dim {}",
                n, layout.in_dim
            ),
        });
    }
    let full_mask = graph.positive_mask();
    let mut head_outputs = Vec::with_capacity(layout.heads.len());
    let mut attention_nodes = Vec::with_capacity(layout.heads.len());

    for head in &layout.heads {
        let w_self = params.leaf(tape, head.self_w);
        let w_peer = params.leaf(tape, head.peer_w);
        let w_value = params.leaf(tape, head.value_w);
        let values = tape.matmul(features, w_value)?;
        let peers = tape.matmul(features, w_peer)?;

        let (scores, mask, edges): (NodeId, Vec<bool>, Tensor) = match target {
            GatTarget::AllNodes => {
                let selves = tape.matmul(features, w_self)?;
                let scores = tape.matmul_nt(selves, peers)?;
                (scores, full_mask.clone(), graph.weights_tensor())
            }
            GatTarget::EgoOnly => {
                let ego_row = tape.row(features, 0)?;
                let ego_proj = tape.matmul(ego_row, w_self)?;
                let scores = tape.matmul_nt(ego_proj, peers)?;
                let mask = full_mask[..n].to_vec();
                let edges = Tensor::new(vec![1, n], graph.weights()[..n].to_vec())?;
                (scores, mask, edges)
            }
        };

        let (attn, weighted) = match norm {
            AttentionNorm::Literal => {
                let attn = tape.softmax(scores, Some(&mask))?;
                let e = tape.constant(edges);
                let weighted = tape.mul(attn, e)?;
                (attn, weighted)
            }
            AttentionNorm::Normalized => {
                let log_e: Vec<f32> = edges
                    .data()
                    .iter()
                    .map(|&w| if w > 0.0 { w.ln() } else { 0.0 })
                    .collect();
                let log_e = tape.constant(Tensor::new(edges.shape().to_vec(), log_e)?);
                let shifted = tape.add(scores, log_e)?;
                let attn = tape.softmax(shifted, Some(&mask))?;
                (attn, attn)
            }
        };
        attention_nodes.push(attn);
        head_outputs.push(tape.matmul(weighted, values)?);
    }

    let out = tape.concat(&head_outputs, 1)?;
    Ok((out, attention_nodes))
}
