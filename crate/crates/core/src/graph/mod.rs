//! Computational-graph IR: shape-annotated operator DAGs loaded from a JSON
//! format or an ONNX subset, with full shape inference.

pub mod json;
pub mod onnx;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("graph contains a cycle")]
    CyclicGraph,
    #[error("unsupported operator kind \"{0}\"")]
    UnsupportedOp(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("duplicate node id {0}")]
    DuplicateNodeId(usize),
    #[error("invalid edge: {0}")]
    InvalidEdge(String),
    #[error("node {node}: missing hyperparameter \"{key}\"")]
    MissingHyperparam { node: usize, key: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Operator kinds supported by the graph extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Conv2d,
    Gemm,
    BatchNorm,
    Relu,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    Add,
    Concat,
    Flatten,
    Softmax,
}

impl OpKind {
    /// Canonical name used in the JSON graph format.
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Conv2d => "Conv2d",
            OpKind::Gemm => "Gemm",
            OpKind::BatchNorm => "BatchNorm",
            OpKind::Relu => "ReLU",
            OpKind::MaxPool => "MaxPool",
            OpKind::AvgPool => "AvgPool",
            OpKind::GlobalAvgPool => "GlobalAvgPool",
            OpKind::Add => "Add",
            OpKind::Concat => "Concat",
            OpKind::Flatten => "Flatten",
            OpKind::Softmax => "Softmax",
        }
    }

    pub fn parse(s: &str) -> Result<Self, GraphError> {
        Ok(match s {
            "Conv2d" => OpKind::Conv2d,
            "Gemm" | "Linear" => OpKind::Gemm,
            "BatchNorm" => OpKind::BatchNorm,
            "ReLU" | "Relu" => OpKind::Relu,
            "MaxPool" => OpKind::MaxPool,
            "AvgPool" => OpKind::AvgPool,
            "GlobalAvgPool" => OpKind::GlobalAvgPool,
            "Add" => OpKind::Add,
            "Concat" => OpKind::Concat,
            "Flatten" => OpKind::Flatten,
            "Softmax" => OpKind::Softmax,
            other => return Err(GraphError::UnsupportedOp(other.to_string())),
        })
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Tensor shape in NCHW order; rank 2 is allowed for Gemm/Flatten outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorShape {
    dims: Vec<usize>,
}

impl TensorShape {
    pub fn new(dims: Vec<usize>) -> Result<Self, GraphError> {
        if dims.is_empty() || !(dims.len() == 2 || dims.len() == 4) {
            return Err(GraphError::ShapeMismatch(format!(
                "tensor rank must be 2 or 4, got {:?}",
                dims
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(GraphError::ShapeMismatch(format!(
                "all dims must be >= 1, got {:?}",
                dims
            )));
        }
        Ok(TensorShape { dims })
    }

    pub fn nchw(n: usize, c: usize, h: usize, w: usize) -> Self {
        TensorShape {
            dims: vec![n, c, h, w],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn elements(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    /// (N, C, H, W); rank-2 (N, F) reads as (N, F, 1, 1).
    pub fn as_nchw(&self) -> (usize, usize, usize, usize) {
        match self.dims.len() {
            4 => (self.dims[0], self.dims[1], self.dims[2], self.dims[3]),
            2 => (self.dims[0], self.dims[1], 1, 1),
            _ => unreachable!("rank validated at construction"),
        }
    }
}

/// One operation node of the computational graph.
#[derive(Debug, Clone, PartialEq)]
pub struct OpNode {
    pub id: usize,
    pub kind: OpKind,
    pub hyperparams: BTreeMap<String, f64>,
    pub weight_shape: Option<Vec<usize>>,
}

impl OpNode {
    pub fn new(id: usize, kind: OpKind) -> Self {
        OpNode {
            id,
            kind,
            hyperparams: BTreeMap::new(),
            weight_shape: None,
        }
    }

    pub fn with_hp(mut self, key: &str, value: f64) -> Self {
        self.hyperparams.insert(key.to_string(), value);
        self
    }

    pub fn hp(&self, key: &str) -> Option<f64> {
        self.hyperparams.get(key).copied()
    }

    pub fn hp_usize(&self, key: &str) -> Result<usize, GraphError> {
        let v = self.hp(key).ok_or_else(|| GraphError::MissingHyperparam {
            node: self.id,
            key: key.to_string(),
        })?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(GraphError::ShapeMismatch(format!(
                "node {}: hyperparameter {} must be a non-negative integer, got {}",
                self.id, key, v
            )));
        }
        Ok(v as usize)
    }

    pub fn hp_usize_or(&self, key: &str, default: usize) -> Result<usize, GraphError> {
        if self.hp(key).is_none() {
            return Ok(default);
        }
        self.hp_usize(key)
    }
}

/// Directed data-flow edge carrying the tensor produced by `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Index into `CompGraph::nodes`.
    pub source: usize,
    /// Index into `CompGraph::nodes`.
    pub target: usize,
    pub shape: TensorShape,
}

/// Shape-annotated operator DAG. Nodes are stored sorted by id; edges keep
/// their authored order (Concat concatenates incoming edges in that order).
#[derive(Debug, Clone, PartialEq)]
pub struct CompGraph {
    pub nodes: Vec<OpNode>,
    pub edges: Vec<Edge>,
    pub batch_size: usize,
    pub dtype_bytes: usize,
    pub input_shape: TensorShape,
    /// Inferred output shape of each node, parallel to `nodes`.
    pub output_shapes: Vec<TensorShape>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Json,
    OnnxSubset,
}

/// Loads a computational graph from disk, inferring and validating all shapes.
pub fn load_graph(path: &Path, format: GraphFormat) -> Result<CompGraph, GraphError> {
    match format {
        GraphFormat::Json => json::load_json(path),
        GraphFormat::OnnxSubset => onnx::load_onnx(path, None),
    }
}

impl CompGraph {
    /// Validates topology and runs shape inference over unannotated inputs.
    pub fn build(
        mut nodes: Vec<OpNode>,
        edge_pairs: &[(usize, usize)],
        batch_size: usize,
        dtype_bytes: usize,
        input_shape: TensorShape,
    ) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        if batch_size == 0 {
            return Err(GraphError::ShapeMismatch("batch_size must be >= 1".into()));
        }
        if dtype_bytes == 0 {
            return Err(GraphError::ShapeMismatch("dtype_bytes must be >= 1".into()));
        }
        if input_shape.rank() != 4 {
            return Err(GraphError::ShapeMismatch(format!(
                "graph input must be rank 4, got {:?}",
                input_shape.dims()
            )));
        }
        if input_shape.dims()[0] != batch_size {
            return Err(GraphError::ShapeMismatch(format!(
                "input_shape batch dim {} does not match batch_size {}",
                input_shape.dims()[0],
                batch_size
            )));
        }

        nodes.sort_by_key(|n| n.id);
        let mut id_to_index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if id_to_index.insert(n.id, i).is_some() {
                return Err(GraphError::DuplicateNodeId(n.id));
            }
        }

        let mut edges = Vec::with_capacity(edge_pairs.len());
        for &(src, dst) in edge_pairs {
            let (si, ti) = match (id_to_index.get(&src), id_to_index.get(&dst)) {
                (Some(&s), Some(&t)) => (s, t),
                _ => {
                    return Err(GraphError::InvalidEdge(format!(
                        "edge ({src}, {dst}) references a missing node id"
                    )))
                }
            };
            if si == ti {
                return Err(GraphError::InvalidEdge(format!("self-loop on node {src}")));
            }
            edges.push((si, ti));
        }

        let order = topological_order(nodes.len(), &edges)?;
        let output_shapes = infer_shapes(&nodes, &edges, &order, &input_shape)?;

        let edges = edges
            .into_iter()
            .map(|(s, t)| Edge {
                source: s,
                target: t,
                shape: output_shapes[s].clone(),
            })
            .collect();

        let graph = CompGraph {
            nodes,
            edges,
            batch_size,
            dtype_bytes,
            input_shape,
            output_shapes,
        };
        graph.validate_weight_shapes()?;
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Incoming edge indices per node, in authored edge order.
    pub fn incoming(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for (ei, e) in self.edges.iter().enumerate() {
            inc[e.target].push(ei);
        }
        inc
    }

    /// Input tensor shapes of a node: its incoming edges' shapes, or the
    /// graph input for source nodes.
    pub fn node_input_shapes(&self, index: usize, incoming: &[Vec<usize>]) -> Vec<TensorShape> {
        if incoming[index].is_empty() {
            vec![self.input_shape.clone()]
        } else {
            incoming[index]
                .iter()
                .map(|&ei| self.edges[ei].shape.clone())
                .collect()
        }
    }

    /// Deterministic topological order (ties broken by node index).
    pub fn topo_order(&self) -> Vec<usize> {
        let pairs: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.source, e.target)).collect();
        topological_order(self.nodes.len(), &pairs).expect("validated at construction")
    }

    fn validate_weight_shapes(&self) -> Result<(), GraphError> {
        let incoming = self.incoming();
        for (i, node) in self.nodes.iter().enumerate() {
            let Some(declared) = &node.weight_shape else {
                continue;
            };
            let inputs = self.node_input_shapes(i, &incoming);
            let expected: Option<Vec<usize>> = match node.kind {
                OpKind::Conv2d => {
                    let (_, c_in, _, _) = inputs[0].as_nchw();
                    let groups = node.hp_usize_or("groups", 1)?;
                    Some(vec![
                        node.hp_usize("out_channels")?,
                        c_in / groups,
                        node.hp_usize("kernel_h")?,
                        node.hp_usize("kernel_w")?,
                    ])
                }
                OpKind::Gemm => {
                    let (_, c, h, w) = inputs[0].as_nchw();
                    Some(vec![node.hp_usize("out_features")?, c * h * w])
                }
                _ => None,
            };
            if let Some(expected) = expected {
                if declared != &expected {
                    return Err(GraphError::ShapeMismatch(format!(
                        "node {}: declared weight shape {:?} inconsistent with hyperparams (expected {:?})",
                        node.id, declared, expected
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Kahn's algorithm with index-ordered tie breaking; `CyclicGraph` if not all
/// nodes can be scheduled.
pub fn topological_order(
    node_count: usize,
    edges: &[(usize, usize)],
) -> Result<Vec<usize>, GraphError> {
    use std::collections::BinaryHeap;

    let mut indegree = vec![0usize; node_count];
    let mut out = vec![Vec::new(); node_count];
    for &(s, t) in edges {
        indegree[t] += 1;
        out[s].push(t);
    }
    let mut ready: BinaryHeap<std::cmp::Reverse<usize>> = (0..node_count)
        .filter(|&i| indegree[i] == 0)
        .map(std::cmp::Reverse)
        .collect();
    let mut order = Vec::with_capacity(node_count);
    while let Some(std::cmp::Reverse(i)) = ready.pop() {
        order.push(i);
        for &t in &out[i] {
            indegree[t] -= 1;
            if indegree[t] == 0 {
                ready.push(std::cmp::Reverse(t));
            }
        }
    }
    if order.len() != node_count {
        return Err(GraphError::CyclicGraph);
    }
    Ok(order)
}

fn pool_output(
    node: &OpNode,
    input: &TensorShape,
) -> Result<TensorShape, GraphError> {
    let (n, c, h, w) = input.as_nchw();
    if input.rank() != 4 {
        return Err(GraphError::ShapeMismatch(format!(
            "node {}: {} requires a rank-4 input",
            node.id, node.kind
        )));
    }
    let kh = node.hp_usize("kernel_h")?;
    let kw = node.hp_usize("kernel_w")?;
    let s = node.hp_usize_or("stride", 1)?;
    let p = node.hp_usize_or("padding", 0)?;
    let (oh, ow) = conv_spatial(node.id, h, w, kh, kw, s, p)?;
    Ok(TensorShape::nchw(n, c, oh, ow))
}

fn conv_spatial(
    node_id: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize), GraphError> {
    if kh == 0 || kw == 0 || stride == 0 {
        return Err(GraphError::ShapeMismatch(format!(
            "node {node_id}: kernel and stride must be >= 1"
        )));
    }
    let h_num = h + 2 * padding;
    let w_num = w + 2 * padding;
    if h_num < kh || w_num < kw {
        return Err(GraphError::ShapeMismatch(format!(
            "node {node_id}: kernel {kh}x{kw} larger than padded input {h_num}x{w_num}"
        )));
    }
    Ok(((h_num - kh) / stride + 1, (w_num - kw) / stride + 1))
}

/// Output shape of one node given its input shapes. Standard conv/pool
/// arithmetic `out = floor((in + 2p - k)/s) + 1`.
pub fn infer_node_output(
    node: &OpNode,
    inputs: &[TensorShape],
) -> Result<TensorShape, GraphError> {
    let single = |kind: &str| -> Result<&TensorShape, GraphError> {
        if inputs.len() != 1 {
            return Err(GraphError::ShapeMismatch(format!(
                "node {}: {} expects exactly one input, got {}",
                node.id,
                kind,
                inputs.len()
            )));
        }
        Ok(&inputs[0])
    };

    match node.kind {
        OpKind::Conv2d => {
            let input = single("Conv2d")?;
            if input.rank() != 4 {
                return Err(GraphError::ShapeMismatch(format!(
                    "node {}: Conv2d requires a rank-4 input",
                    node.id
                )));
            }
            let (n, c, h, w) = input.as_nchw();
            let kh = node.hp_usize("kernel_h")?;
            let kw = node.hp_usize("kernel_w")?;
            let s = node.hp_usize_or("stride", 1)?;
            let p = node.hp_usize_or("padding", 0)?;
            let groups = node.hp_usize_or("groups", 1)?;
            let out_c = node.hp_usize("out_channels")?;
            if groups == 0 || c % groups != 0 || out_c % groups != 0 {
                return Err(GraphError::ShapeMismatch(format!(
                    "node {}: groups {} must divide in_channels {} and out_channels {}",
                    node.id, groups, c, out_c
                )));
            }
            if let Some(in_c) = node.hp("in_channels") {
                if in_c as usize != c {
                    return Err(GraphError::ShapeMismatch(format!(
                        "node {}: declared in_channels {} but input has {}",
                        node.id, in_c, c
                    )));
                }
            }
            let (oh, ow) = conv_spatial(node.id, h, w, kh, kw, s, p)?;
            Ok(TensorShape::nchw(n, out_c, oh, ow))
        }
        OpKind::Gemm => {
            let input = single("Gemm")?;
            let (n, c, h, w) = input.as_nchw();
            let in_features = c * h * w;
            if let Some(f) = node.hp("in_features") {
                if f as usize != in_features {
                    return Err(GraphError::ShapeMismatch(format!(
                        "node {}: declared in_features {} but input has {}",
                        node.id, f, in_features
                    )));
                }
            }
            let out = node.hp_usize("out_features")?;
            TensorShape::new(vec![n, out])
        }
        OpKind::BatchNorm => {
            let input = single("BatchNorm")?;
            if input.rank() != 4 {
                return Err(GraphError::ShapeMismatch(format!(
                    "node {}: BatchNorm requires a rank-4 input",
                    node.id
                )));
            }
            if let Some(f) = node.hp("num_features") {
                if f as usize != input.as_nchw().1 {
                    return Err(GraphError::ShapeMismatch(format!(
                        "node {}: declared num_features {} but input has {} channels",
                        node.id,
                        f,
                        input.as_nchw().1
                    )));
                }
            }
            Ok(input.clone())
        }
        OpKind::Relu | OpKind::Softmax => Ok(single(node.kind.name())?.clone()),
        OpKind::MaxPool | OpKind::AvgPool => pool_output(node, single(node.kind.name())?),
        OpKind::GlobalAvgPool => {
            let input = single("GlobalAvgPool")?;
            let (n, c, _, _) = input.as_nchw();
            if input.rank() != 4 {
                return Err(GraphError::ShapeMismatch(format!(
                    "node {}: GlobalAvgPool requires a rank-4 input",
                    node.id
                )));
            }
            Ok(TensorShape::nchw(n, c, 1, 1))
        }
        OpKind::Add => {
            if inputs.len() < 2 {
                return Err(GraphError::ShapeMismatch(format!(
                    "node {}: Add expects at least two inputs, got {}",
                    node.id,
                    inputs.len()
                )));
            }
            for other in &inputs[1..] {
                if other != &inputs[0] {
                    return Err(GraphError::ShapeMismatch(format!(
                        "node {}: Add inputs differ: {:?} vs {:?}",
                        node.id,
                        inputs[0].dims(),
                        other.dims()
                    )));
                }
            }
            Ok(inputs[0].clone())
        }
        OpKind::Concat => {
            if inputs.len() < 2 {
                return Err(GraphError::ShapeMismatch(format!(
                    "node {}: Concat expects at least two inputs, got {}",
                    node.id,
                    inputs.len()
                )));
            }
            let (n, mut c, h, w) = inputs[0].as_nchw();
            if inputs[0].rank() != 4 {
                return Err(GraphError::ShapeMismatch(format!(
                    "node {}: Concat requires rank-4 inputs",
                    node.id
                )));
            }
            for other in &inputs[1..] {
                let (on, oc, oh, ow) = other.as_nchw();
                if other.rank() != 4 || on != n || oh != h || ow != w {
                    return Err(GraphError::ShapeMismatch(format!(
                        "node {}: Concat inputs disagree outside the channel axis: {:?} vs {:?}",
                        node.id,
                        inputs[0].dims(),
                        other.dims()
                    )));
                }
                c += oc;
            }
            Ok(TensorShape::nchw(n, c, h, w))
        }
        OpKind::Flatten => {
            let input = single("Flatten")?;
            let (n, c, h, w) = input.as_nchw();
            TensorShape::new(vec![n, c * h * w])
        }
    }
}

/// Shape inference over a validated topology. Deterministic: a fixed
/// topological order and authored edge order fully determine the result.
pub fn infer_shapes(
    nodes: &[OpNode],
    edges: &[(usize, usize)],
    order: &[usize],
    input_shape: &TensorShape,
) -> Result<Vec<TensorShape>, GraphError> {
    let mut incoming = vec![Vec::new(); nodes.len()];
    for &(s, t) in edges {
        incoming[t].push(s);
    }
    let mut shapes: Vec<Option<TensorShape>> = vec![None; nodes.len()];
    for &i in order {
        let inputs: Vec<TensorShape> = if incoming[i].is_empty() {
            vec![input_shape.clone()]
        } else {
            incoming[i]
                .iter()
                .map(|&s| shapes[s].clone().expect("topological order"))
                .collect()
        };
        shapes[i] = Some(infer_node_output(&nodes[i], &inputs)?);
    }
    Ok(shapes.into_iter().map(|s| s.expect("all visited")).collect())
}
