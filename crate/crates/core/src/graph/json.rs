//! Canonical JSON graph format. Edge shapes are computed, never authored.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CompGraph, GraphError, OpKind, OpNode, TensorShape};

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct JsonNode {
    id: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    hyperparams: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight_shape: Option<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonGraph {
    batch_size: usize,
    #[serde(default = "default_dtype_bytes")]
    dtype_bytes: usize,
    input_shape: Vec<usize>,
    nodes: Vec<JsonNode>,
    edges: Vec<[usize; 2]>,
}

fn default_dtype_bytes() -> usize {
    4
}

pub fn load_json(path: &Path) -> Result<CompGraph, GraphError> {
    let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io(e.to_string()))?;
    parse_json(&text)
}

pub fn parse_json(text: &str) -> Result<CompGraph, GraphError> {
    let raw: JsonGraph =
        serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for jn in raw.nodes {
        nodes.push(OpNode {
            id: jn.id,
            kind: OpKind::parse(&jn.kind)?,
            hyperparams: jn.hyperparams,
            weight_shape: jn.weight_shape,
        });
    }
    let edges: Vec<(usize, usize)> = raw.edges.iter().map(|e| (e[0], e[1])).collect();
    CompGraph::build(
        nodes,
        &edges,
        raw.batch_size,
        raw.dtype_bytes,
        TensorShape::new(raw.input_shape)?,
    )
}

/// Serializes back to the authored format (computed shapes are dropped; a
/// reload re-infers them).
pub fn to_json_string(graph: &CompGraph) -> String {
    let raw = JsonGraph {
        batch_size: graph.batch_size,
        dtype_bytes: graph.dtype_bytes,
        input_shape: graph.input_shape.dims().to_vec(),
        nodes: graph
            .nodes
            .iter()
            .map(|n| JsonNode {
                id: n.id,
                kind: n.kind.name().to_string(),
                hyperparams: n.hyperparams.clone(),
                weight_shape: n.weight_shape.clone(),
            })
            .collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| [graph.nodes[e.source].id, graph.nodes[e.target].id])
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("graph serialization cannot fail")
}

pub fn save_json(graph: &CompGraph, path: &Path) -> Result<(), GraphError> {
    std::fs::write(path, to_json_string(graph)).map_err(|e| GraphError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONV_RELU: &str = r#"{
        "batch_size": 1,
        "input_shape": [1, 3, 32, 32],
        "nodes": [
            {"id": 0, "kind": "Conv2d", "hyperparams": {
                "kernel_h": 3, "kernel_w": 3, "stride": 1, "padding": 1,
                "in_channels": 3, "out_channels": 64}},
            {"id": 1, "kind": "ReLU"}
        ],
        "edges": [[0, 1]]
    }"#;

    #[test]
    fn parse_conv_relu() {
        let g = parse_json(CONV_RELU).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.dtype_bytes, 4);
        assert_eq!(g.edges[0].shape, TensorShape::nchw(1, 64, 32, 32));
    }

    #[test]
    fn unsupported_kind_is_reported() {
        let text = r#"{"batch_size": 1, "input_shape": [1,3,8,8],
            "nodes": [{"id": 0, "kind": "LSTM"}], "edges": []}"#;
        match parse_json(text) {
            Err(GraphError::UnsupportedOp(k)) => assert_eq!(k, "LSTM"),
            other => panic!("expected UnsupportedOp, got {other:?}"),
        }
    }

    #[test]
    fn empty_node_list_is_empty_graph_error() {
        let text = r#"{"batch_size": 1, "input_shape": [1,3,8,8], "nodes": [], "edges": []}"#;
        assert!(matches!(parse_json(text), Err(GraphError::EmptyGraph)));
    }

    #[test]
    fn roundtrip_is_structurally_equal() {
        let g = parse_json(CONV_RELU).unwrap();
        let text = to_json_string(&g);
        let g2 = parse_json(&text).unwrap();
        assert_eq!(g, g2);
    }
}
