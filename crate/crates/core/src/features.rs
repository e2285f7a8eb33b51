//! PerfGraph extraction: node, edge, and global feature vectors computed from
//! a shape-annotated computational graph, plus dataset normalization.
//!
//! Feature conventions, fixed here and used everywhere downstream:
//! - one multiply-accumulate counts as 2 FLOPs;
//! - MAC (memory access cost) is the byte size of input + weight + output
//!   tensors;
//! - weight sizes are in bytes;
//! - data-movement ops (Flatten, Concat) count zero FLOPs, their cost shows
//!   up in MAC;
//! - node categories are deliberately not encoded.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CompGraph, GraphError, OpKind, OpNode, TensorShape};

pub const HP_SLOTS: usize = 12;
pub const NODE_FEATURE_DIM: usize = HP_SLOTS + 7;
pub const EDGE_FEATURE_DIM: usize = 5;
pub const GLOBAL_FEATURE_DIM: usize = 19;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("normalization stats not fitted")]
    NotFitted,
    #[error("normalization scale must be positive, got {0}")]
    BadScale(f64),
    #[error("unknown target \"{0}\" in normalization stats")]
    UnknownTarget(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Whether the graph describes an inference pass or a training step; encoded
/// as a global feature flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Infer,
    Train,
}

impl Phase {
    pub fn flag(self) -> f64 {
        match self {
            Phase::Infer => 0.0,
            Phase::Train => 1.0,
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "infer" | "inference" => Some(Phase::Infer),
            "train" | "training" => Some(Phase::Train),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Infer => "infer",
            Phase::Train => "train",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatures {
    /// Fixed hyper-parameter slots: kernel_h, kernel_w, stride, padding,
    /// groups, in_ch, out_ch, has_bias, pool_flag, gemm_in, gemm_out, unused.
    pub hp: [f64; HP_SLOTS],
    pub flops: f64,
    pub mac_bytes: f64,
    pub weight_bytes: f64,
    pub arith_intensity: f64,
    pub prop_flops: f64,
    pub prop_mac: f64,
    pub prop_weight: f64,
}

impl NodeFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(NODE_FEATURE_DIM);
        v.extend_from_slice(&self.hp);
        v.extend_from_slice(&[
            self.flops,
            self.mac_bytes,
            self.weight_bytes,
            self.arith_intensity,
            self.prop_flops,
            self.prop_mac,
            self.prop_weight,
        ]);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        let mut hp = [0.0; HP_SLOTS];
        hp.copy_from_slice(&v[..HP_SLOTS]);
        NodeFeatures {
            hp,
            flops: v[HP_SLOTS],
            mac_bytes: v[HP_SLOTS + 1],
            weight_bytes: v[HP_SLOTS + 2],
            arith_intensity: v[HP_SLOTS + 3],
            prop_flops: v[HP_SLOTS + 4],
            prop_mac: v[HP_SLOTS + 5],
            prop_weight: v[HP_SLOTS + 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFeatures {
    /// Element count of the delivered tensor.
    pub size: f64,
    /// (N, C, H, W); rank-2 tensors read as (N, F, 1, 1).
    pub shape: [f64; 4],
}

impl EdgeFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.size,
            self.shape[0],
            self.shape[1],
            self.shape[2],
            self.shape[3],
        ]
    }

    fn from_vec(v: &[f64]) -> Self {
        EdgeFeatures {
            size: v[0],
            shape: [v[1], v[2], v[3], v[4]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfEdge {
    pub features: EdgeFeatures,
    /// Node index (position in `PerfGraph::nodes`).
    pub source: usize,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalFeatures {
    pub num_nodes: f64,
    pub num_edges: f64,
    pub density: f64,
    /// total, mean, median, max
    pub flops_stats: [f64; 4],
    pub mac_stats: [f64; 4],
    pub weight_stats: [f64; 4],
    pub mean_edge_size: f64,
    /// total FLOPs / total MAC bytes
    pub arith_intensity: f64,
    pub batch_size: f64,
    /// 0 = inference, 1 = training
    pub phase: f64,
}

impl GlobalFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(GLOBAL_FEATURE_DIM);
        v.extend_from_slice(&[self.num_nodes, self.num_edges, self.density]);
        v.extend_from_slice(&self.flops_stats);
        v.extend_from_slice(&self.mac_stats);
        v.extend_from_slice(&self.weight_stats);
        v.extend_from_slice(&[
            self.mean_edge_size,
            self.arith_intensity,
            self.batch_size,
            self.phase,
        ]);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        GlobalFeatures {
            num_nodes: v[0],
            num_edges: v[1],
            density: v[2],
            flops_stats: [v[3], v[4], v[5], v[6]],
            mac_stats: [v[7], v[8], v[9], v[10]],
            weight_stats: [v[11], v[12], v[13], v[14]],
            mean_edge_size: v[15],
            arith_intensity: v[16],
            batch_size: v[17],
            phase: v[18],
        }
    }
}

/// The 3-tuple of global/node/edge features over the graph topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfGraph {
    pub global: GlobalFeatures,
    pub nodes: Vec<NodeFeatures>,
    pub edges: Vec<PerfEdge>,
    /// Present once [`normalize`] has been applied.
    pub normalization: Option<NormStats>,
}

impl PerfGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization.is_some()
    }

    pub fn node_matrix(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|n| n.to_vec()).collect()
    }

    pub fn edge_matrix(&self) -> Vec<Vec<f64>> {
        self.edges.iter().map(|e| e.features.to_vec()).collect()
    }

    pub fn global_vector(&self) -> Vec<f64> {
        self.global.to_vec()
    }

    pub fn edge_endpoints(&self) -> (Vec<usize>, Vec<usize>) {
        (
            self.edges.iter().map(|e| e.source).collect(),
            self.edges.iter().map(|e| e.target).collect(),
        )
    }
}

// ── per-op cost arithmetic ──────────────────────────────────────────

fn spatial_kernel(node: &OpNode) -> Result<(u64, u64), FeatureError> {
    Ok((
        node.hp_usize("kernel_h")? as u64,
        node.hp_usize("kernel_w")? as u64,
    ))
}

/// FLOPs of one operation (2 FLOPs per multiply-accumulate).
pub fn op_flops(
    node: &OpNode,
    in_shapes: &[TensorShape],
    out_shape: &TensorShape,
) -> Result<f64, FeatureError> {
    let out_elems = out_shape.elements();
    let flops: u64 = match node.kind {
        OpKind::Conv2d => {
            let (_, c_in, _, _) = in_shapes[0].as_nchw();
            let groups = node.hp_usize_or("groups", 1)? as u64;
            let (kh, kw) = spatial_kernel(node)?;
            // out_elems = N·Cout·Hout·Wout already
            2 * kh * kw * (c_in as u64 / groups) * out_elems
        }
        OpKind::Gemm => {
            let (n, c, h, w) = in_shapes[0].as_nchw();
            let f_in = (c * h * w) as u64;
            let f_out = out_shape.as_nchw().1 as u64;
            2 * n as u64 * f_in * f_out
        }
        OpKind::Relu | OpKind::Add | OpKind::Softmax => out_elems,
        OpKind::BatchNorm => 2 * out_elems,
        OpKind::MaxPool | OpKind::AvgPool => {
            let (kh, kw) = spatial_kernel(node)?;
            kh * kw * out_elems
        }
        OpKind::GlobalAvgPool => {
            let (_, _, h, w) = in_shapes[0].as_nchw();
            (h * w) as u64 * out_elems
        }
        OpKind::Flatten | OpKind::Concat => 0,
    };
    Ok(flops as f64)
}

/// Learnable-weight element count of one operation.
pub fn op_weight_elements(
    node: &OpNode,
    in_shapes: &[TensorShape],
    out_shape: &TensorShape,
) -> Result<u64, FeatureError> {
    let has_bias = node.hp_usize_or("has_bias", 0)? as u64;
    Ok(match node.kind {
        OpKind::Conv2d => {
            let (_, c_in, _, _) = in_shapes[0].as_nchw();
            let groups = node.hp_usize_or("groups", 1)? as u64;
            let (kh, kw) = spatial_kernel(node)?;
            let c_out = out_shape.as_nchw().1 as u64;
            c_out * (c_in as u64 / groups) * kh * kw + has_bias * c_out
        }
        OpKind::Gemm => {
            let (_, c, h, w) = in_shapes[0].as_nchw();
            let f_in = (c * h * w) as u64;
            let f_out = out_shape.as_nchw().1 as u64;
            f_out * f_in + has_bias * f_out
        }
        OpKind::BatchNorm => 2 * in_shapes[0].as_nchw().1 as u64,
        _ => 0,
    })
}

/// Memory access cost: bytes of input + weight + output tensors.
pub fn op_mac_bytes(
    node: &OpNode,
    in_shapes: &[TensorShape],
    out_shape: &TensorShape,
    dtype_bytes: usize,
) -> Result<f64, FeatureError> {
    let in_elems: u64 = in_shapes.iter().map(|s| s.elements()).sum();
    let weight = op_weight_elements(node, in_shapes, out_shape)?;
    let total = (in_elems + weight + out_shape.elements()) * dtype_bytes as u64;
    Ok(total as f64)
}

fn hp_vector(
    node: &OpNode,
    in_shapes: &[TensorShape],
    out_shape: &TensorShape,
) -> Result<[f64; HP_SLOTS], FeatureError> {
    let mut hp = [0.0; HP_SLOTS];
    match node.kind {
        OpKind::Conv2d => {
            hp[0] = node.hp_usize("kernel_h")? as f64;
            hp[1] = node.hp_usize("kernel_w")? as f64;
            hp[2] = node.hp_usize_or("stride", 1)? as f64;
            hp[3] = node.hp_usize_or("padding", 0)? as f64;
            hp[4] = node.hp_usize_or("groups", 1)? as f64;
            hp[5] = in_shapes[0].as_nchw().1 as f64;
            hp[6] = out_shape.as_nchw().1 as f64;
            hp[7] = node.hp_usize_or("has_bias", 0)? as f64;
        }
        OpKind::Gemm => {
            let (_, c, h, w) = in_shapes[0].as_nchw();
            hp[7] = node.hp_usize_or("has_bias", 0)? as f64;
            hp[9] = (c * h * w) as f64;
            hp[10] = out_shape.as_nchw().1 as f64;
        }
        OpKind::BatchNorm => {
            let c = in_shapes[0].as_nchw().1 as f64;
            hp[5] = c;
            hp[6] = c;
        }
        OpKind::MaxPool | OpKind::AvgPool => {
            hp[0] = node.hp_usize("kernel_h")? as f64;
            hp[1] = node.hp_usize("kernel_w")? as f64;
            hp[2] = node.hp_usize_or("stride", 1)? as f64;
            hp[3] = node.hp_usize_or("padding", 0)? as f64;
            hp[8] = if node.kind == OpKind::MaxPool { 1.0 } else { 2.0 };
        }
        OpKind::GlobalAvgPool => {
            let (_, _, h, w) = in_shapes[0].as_nchw();
            hp[0] = h as f64;
            hp[1] = w as f64;
            hp[2] = 1.0;
            hp[8] = 3.0;
        }
        OpKind::Relu | OpKind::Add | OpKind::Concat | OpKind::Flatten | OpKind::Softmax => {}
    }
    Ok(hp)
}

fn stats4(values: &[f64]) -> [f64; 4] {
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    let max = sorted.last().copied().unwrap_or(0.0);
    [total, total / n, median, max]
}

/// Builds the full feature graph for one computational graph. Node order is
/// the graph's id-sorted node order; summations run in that fixed order.
pub fn build_perfgraph(graph: &CompGraph, phase: Phase) -> Result<PerfGraph, FeatureError> {
    let incoming = graph.incoming();
    let n = graph.node_count();

    let mut flops = Vec::with_capacity(n);
    let mut macs = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut hps = Vec::with_capacity(n);
    for (i, node) in graph.nodes.iter().enumerate() {
        let in_shapes = graph.node_input_shapes(i, &incoming);
        let out_shape = &graph.output_shapes[i];
        flops.push(op_flops(node, &in_shapes, out_shape)?);
        macs.push(op_mac_bytes(node, &in_shapes, out_shape, graph.dtype_bytes)?);
        let w = op_weight_elements(node, &in_shapes, out_shape)? * graph.dtype_bytes as u64;
        weights.push(w as f64);
        hps.push(hp_vector(node, &in_shapes, out_shape)?);
    }

    let total_flops: f64 = flops.iter().sum();
    let total_mac: f64 = macs.iter().sum();
    let total_weight: f64 = weights.iter().sum();

    let nodes: Vec<NodeFeatures> = (0..n)
        .map(|i| NodeFeatures {
            hp: hps[i],
            flops: flops[i],
            mac_bytes: macs[i],
            weight_bytes: weights[i],
            arith_intensity: if macs[i] > 0.0 { flops[i] / macs[i] } else { 0.0 },
            prop_flops: if total_flops > 0.0 { flops[i] / total_flops } else { 0.0 },
            prop_mac: if total_mac > 0.0 { macs[i] / total_mac } else { 0.0 },
            prop_weight: if total_weight > 0.0 {
                weights[i] / total_weight
            } else {
                0.0
            },
        })
        .collect();

    let edges: Vec<PerfEdge> = graph
        .edges
        .iter()
        .map(|e| {
            let (en, ec, eh, ew) = e.shape.as_nchw();
            PerfEdge {
                features: EdgeFeatures {
                    size: e.shape.elements() as f64,
                    shape: [en as f64, ec as f64, eh as f64, ew as f64],
                },
                source: e.source,
                target: e.target,
            }
        })
        .collect();

    let num_edges = edges.len() as f64;
    let density = if n > 1 {
        num_edges / (n as f64 * (n as f64 - 1.0))
    } else {
        0.0
    };
    let mean_edge_size = if edges.is_empty() {
        0.0
    } else {
        edges.iter().map(|e| e.features.size).sum::<f64>() / num_edges
    };

    let global = GlobalFeatures {
        num_nodes: n as f64,
        num_edges,
        density,
        flops_stats: stats4(&flops),
        mac_stats: stats4(&macs),
        weight_stats: stats4(&weights),
        mean_edge_size,
        arith_intensity: if total_mac > 0.0 {
            total_flops / total_mac
        } else {
            0.0
        },
        batch_size: graph.batch_size as f64,
        phase: phase.flag(),
    };

    Ok(PerfGraph {
        global,
        nodes,
        edges,
        normalization: None,
    })
}

// ── normalization ───────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// ln(1 + x), for non-negative magnitude features.
    Log1p,
    /// Identity, for bounded features (proportions, density, intensity).
    Linear,
    /// ln(x), for strictly positive prediction targets.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimNorm {
    pub transform: Transform,
    pub shift: f64,
    pub scale: f64,
}

impl DimNorm {
    pub fn apply(&self, x: f64) -> f64 {
        let t = match self.transform {
            Transform::Log1p => x.ln_1p(),
            Transform::Linear => x,
            Transform::Log => x.ln(),
        };
        (t - self.shift) / self.scale
    }

    pub fn invert(&self, y: f64) -> f64 {
        let t = y * self.scale + self.shift;
        match self.transform {
            Transform::Log1p => t.exp_m1(),
            Transform::Linear => t,
            Transform::Log => t.exp(),
        }
    }
}

/// Per-dimension (shift, scale) records for the three feature families and
/// the prediction targets. Fitted on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub node: Vec<DimNorm>,
    pub edge: Vec<DimNorm>,
    pub global: Vec<DimNorm>,
    pub targets: BTreeMap<String, DimNorm>,
}

fn node_transforms() -> [Transform; NODE_FEATURE_DIM] {
    let mut t = [Transform::Log1p; NODE_FEATURE_DIM];
    t[HP_SLOTS + 3] = Transform::Linear; // arith_intensity
    t[HP_SLOTS + 4] = Transform::Linear; // prop_flops
    t[HP_SLOTS + 5] = Transform::Linear; // prop_mac
    t[HP_SLOTS + 6] = Transform::Linear; // prop_weight
    t
}

fn edge_transforms() -> [Transform; EDGE_FEATURE_DIM] {
    [Transform::Log1p; EDGE_FEATURE_DIM]
}

fn global_transforms() -> [Transform; GLOBAL_FEATURE_DIM] {
    let mut t = [Transform::Log1p; GLOBAL_FEATURE_DIM];
    t[2] = Transform::Linear; // density
    t[16] = Transform::Linear; // arith_intensity
    t[18] = Transform::Linear; // phase flag
    t
}

/// Two-pass mean/std per dimension over the transformed values. Constant
/// dimensions get scale 1 so they pass through unchanged (after centering).
fn fit_dims(transforms: &[Transform], rows: &[Vec<f64>]) -> Vec<DimNorm> {
    let dims = transforms.len();
    let n = rows.len().max(1) as f64;
    let mut out = Vec::with_capacity(dims);
    for d in 0..dims {
        let tf = transforms[d];
        let apply = |x: f64| match tf {
            Transform::Log1p => x.ln_1p(),
            Transform::Linear => x,
            Transform::Log => x.ln(),
        };
        let mean = rows.iter().map(|r| apply(r[d])).sum::<f64>() / n;
        let var = rows
            .iter()
            .map(|r| {
                let v = apply(r[d]) - mean;
                v * v
            })
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        out.push(DimNorm {
            transform: tf,
            shift: mean,
            scale: if std > 1e-12 { std } else { 1.0 },
        });
    }
    out
}

/// Fits feature normalization over a training split (targets are fitted
/// separately by the trainer).
pub fn fit_feature_stats(graphs: &[&PerfGraph]) -> NormStats {
    let node_rows: Vec<Vec<f64>> = graphs
        .iter()
        .flat_map(|g| g.nodes.iter().map(|n| n.to_vec()))
        .collect();
    let edge_rows: Vec<Vec<f64>> = graphs
        .iter()
        .flat_map(|g| g.edges.iter().map(|e| e.features.to_vec()))
        .collect();
    let global_rows: Vec<Vec<f64>> = graphs.iter().map(|g| g.global.to_vec()).collect();
    NormStats {
        node: fit_dims(&node_transforms(), &node_rows),
        edge: fit_dims(&edge_transforms(), &edge_rows),
        global: fit_dims(&global_transforms(), &global_rows),
        targets: BTreeMap::new(),
    }
}

impl NormStats {
    /// Identity stats (shift 0, scale 1, linear) — features pass through.
    pub fn identity() -> NormStats {
        let id = |n: usize| {
            vec![
                DimNorm {
                    transform: Transform::Linear,
                    shift: 0.0,
                    scale: 1.0,
                };
                n
            ]
        };
        NormStats {
            node: id(NODE_FEATURE_DIM),
            edge: id(EDGE_FEATURE_DIM),
            global: id(GLOBAL_FEATURE_DIM),
            targets: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        for d in self.node.iter().chain(&self.edge).chain(&self.global) {
            if !(d.scale > 0.0) {
                return Err(FeatureError::BadScale(d.scale));
            }
        }
        for d in self.targets.values() {
            if !(d.scale > 0.0) {
                return Err(FeatureError::BadScale(d.scale));
            }
        }
        Ok(())
    }

    pub fn normalize_target(&self, name: &str, y: f64) -> Result<f64, FeatureError> {
        self.targets
            .get(name)
            .map(|d| d.apply(y))
            .ok_or_else(|| FeatureError::UnknownTarget(name.to_string()))
    }

    pub fn denormalize_target(&self, name: &str, y: f64) -> Result<f64, FeatureError> {
        self.targets
            .get(name)
            .map(|d| d.invert(y))
            .ok_or_else(|| FeatureError::UnknownTarget(name.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialization cannot fail")
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        std::fs::write(path, self.to_json_string()).map_err(|e| FeatureError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<NormStats, FeatureError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| FeatureError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| FeatureError::Parse(e.to_string()))
    }
}

/// Applies per-dimension normalization to every feature vector, producing a
/// new PerfGraph that records the stats used.
pub fn normalize(pg: &PerfGraph, stats: &NormStats) -> Result<PerfGraph, FeatureError> {
    stats.validate()?;
    let map = |vec: Vec<f64>, dims: &[DimNorm]| -> Vec<f64> {
        vec.iter()
            .zip(dims)
            .map(|(&x, d)| d.apply(x))
            .collect()
    };
    let nodes = pg
        .nodes
        .iter()
        .map(|n| NodeFeatures::from_vec(&map(n.to_vec(), &stats.node)))
        .collect();
    let edges = pg
        .edges
        .iter()
        .map(|e| PerfEdge {
            features: EdgeFeatures::from_vec(&map(e.features.to_vec(), &stats.edge)),
            source: e.source,
            target: e.target,
        })
        .collect();
    let global = GlobalFeatures::from_vec(&map(pg.global.to_vec(), &stats.global));
    Ok(PerfGraph {
        global,
        nodes,
        edges,
        normalization: Some(stats.clone()),
    })
}

// ── serialization ───────────────────────────────────────────────────

pub fn perfgraph_to_json(pg: &PerfGraph) -> String {
    serde_json::to_string_pretty(pg).expect("perfgraph serialization cannot fail")
}

pub fn save_perfgraph(pg: &PerfGraph, path: &Path) -> Result<(), FeatureError> {
    std::fs::write(path, perfgraph_to_json(pg)).map_err(|e| FeatureError::Io(e.to_string()))
}

pub fn load_perfgraph(path: &Path) -> Result<PerfGraph, FeatureError> {
    let text = std::fs::read_to_string(path).map_err(|e| FeatureError::Io(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| FeatureError::Parse(e.to_string()))
}
