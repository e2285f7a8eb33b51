//! ONNX-subset ingestion: a minimal protobuf wire-format reader that extracts
//! just the pieces of ModelProto needed to build a [`CompGraph`] for the
//! supported operator set. Anything outside that subset is rejected rather
//! than guessed at.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{CompGraph, GraphError, OpKind, OpNode, TensorShape};

// ── protobuf wire reader ────────────────────────────────────────────

const WIRE_VARINT: u8 = 0;
const WIRE_FIXED64: u8 = 1;
const WIRE_LEN: u8 = 2;
const WIRE_FIXED32: u8 = 5;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn read_varint(&mut self) -> Result<u64, GraphError> {
        let mut value = 0u64;
        let mut shift = 0u32;
        loop {
            let byte = *self
                .buf
                .get(self.pos)
                .ok_or_else(|| GraphError::Parse("truncated varint".into()))?;
            self.pos += 1;
            if shift >= 64 {
                return Err(GraphError::Parse("varint overflow".into()));
            }
            value |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(value);
            }
            shift += 7;
        }
    }

    fn read_tag(&mut self) -> Result<(u64, u8), GraphError> {
        let tag = self.read_varint()?;
        Ok((tag >> 3, (tag & 0x7) as u8))
    }

    fn read_len_delimited(&mut self) -> Result<&'a [u8], GraphError> {
        let len = self.read_varint()? as usize;
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| GraphError::Parse("truncated length-delimited field".into()))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn skip(&mut self, wire: u8) -> Result<(), GraphError> {
        match wire {
            WIRE_VARINT => {
                self.read_varint()?;
            }
            WIRE_FIXED64 => {
                self.pos += 8;
            }
            WIRE_LEN => {
                self.read_len_delimited()?;
            }
            WIRE_FIXED32 => {
                self.pos += 4;
            }
            other => {
                return Err(GraphError::Parse(format!(
                    "unsupported protobuf wire type {other}"
                )))
            }
        }
        if self.pos > self.buf.len() {
            return Err(GraphError::Parse("truncated message".into()));
        }
        Ok(())
    }
}

fn read_string(bytes: &[u8]) -> Result<String, GraphError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| GraphError::Parse("invalid utf-8".into()))
}

/// Repeated int64 field that may arrive packed or unpacked.
fn read_packed_i64(bytes: &[u8], out: &mut Vec<i64>) -> Result<(), GraphError> {
    let mut r = Reader::new(bytes);
    while !r.done() {
        out.push(r.read_varint()? as i64);
    }
    Ok(())
}

// ── decoded ONNX structures (only what the converter needs) ─────────

#[derive(Debug, Default)]
struct OnnxAttr {
    name: String,
    i: Option<i64>,
    f: Option<f32>,
    s: Option<String>,
    ints: Vec<i64>,
}

#[derive(Debug, Default)]
struct OnnxNode {
    op_type: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    attrs: Vec<OnnxAttr>,
}

impl OnnxNode {
    fn attr(&self, name: &str) -> Option<&OnnxAttr> {
        self.attrs.iter().find(|a| a.name == name)
    }

    fn attr_i(&self, name: &str, default: i64) -> i64 {
        self.attr(name).and_then(|a| a.i).unwrap_or(default)
    }

    fn attr_ints(&self, name: &str) -> Option<&[i64]> {
        self.attr(name).map(|a| a.ints.as_slice())
    }
}

#[derive(Debug, Default)]
struct OnnxTensorInfo {
    name: String,
    dims: Vec<i64>,
    elem_type: i64,
    /// Dims that were symbolic (`dim_param`) instead of fixed.
    symbolic: Vec<bool>,
}

#[derive(Debug, Default)]
struct OnnxGraph {
    nodes: Vec<OnnxNode>,
    initializers: Vec<OnnxTensorInfo>,
    inputs: Vec<OnnxTensorInfo>,
}

fn parse_attr(bytes: &[u8]) -> Result<OnnxAttr, GraphError> {
    let mut attr = OnnxAttr::default();
    let mut r = Reader::new(bytes);
    while !r.done() {
        let (field, wire) = r.read_tag()?;
        match (field, wire) {
            (1, WIRE_LEN) => attr.name = read_string(r.read_len_delimited()?)?,
            (2, WIRE_FIXED32) => {
                let mut b = [0u8; 4];
                b.copy_from_slice(&r.buf[r.pos..r.pos + 4]);
                r.pos += 4;
                attr.f = Some(f32::from_le_bytes(b));
            }
            (3, WIRE_VARINT) => attr.i = Some(r.read_varint()? as i64),
            (4, WIRE_LEN) => attr.s = Some(read_string(r.read_len_delimited()?)?),
            (8, WIRE_VARINT) => attr.ints.push(r.read_varint()? as i64),
            (8, WIRE_LEN) => read_packed_i64(r.read_len_delimited()?, &mut attr.ints)?,
            (_, w) => r.skip(w)?,
        }
    }
    Ok(attr)
}

fn parse_node(bytes: &[u8]) -> Result<OnnxNode, GraphError> {
    let mut node = OnnxNode::default();
    let mut r = Reader::new(bytes);
    while !r.done() {
        let (field, wire) = r.read_tag()?;
        match (field, wire) {
            (1, WIRE_LEN) => node.inputs.push(read_string(r.read_len_delimited()?)?),
            (2, WIRE_LEN) => node.outputs.push(read_string(r.read_len_delimited()?)?),
            (4, WIRE_LEN) => node.op_type = read_string(r.read_len_delimited()?)?,
            (5, WIRE_LEN) => node.attrs.push(parse_attr(r.read_len_delimited()?)?),
            (_, w) => r.skip(w)?,
        }
    }
    Ok(node)
}

fn parse_tensor(bytes: &[u8]) -> Result<OnnxTensorInfo, GraphError> {
    let mut t = OnnxTensorInfo::default();
    let mut r = Reader::new(bytes);
    while !r.done() {
        let (field, wire) = r.read_tag()?;
        match (field, wire) {
            (1, WIRE_VARINT) => {
                t.dims.push(r.read_varint()? as i64);
                t.symbolic.push(false);
            }
            (1, WIRE_LEN) => {
                let before = t.dims.len();
                read_packed_i64(r.read_len_delimited()?, &mut t.dims)?;
                t.symbolic.resize(before + (t.dims.len() - before), false);
            }
            (2, WIRE_VARINT) => t.elem_type = r.read_varint()? as i64,
            (8, WIRE_LEN) => t.name = read_string(r.read_len_delimited()?)?,
            (_, w) => r.skip(w)?,
        }
    }
    Ok(t)
}

fn parse_shape_dims(bytes: &[u8], info: &mut OnnxTensorInfo) -> Result<(), GraphError> {
    // TensorShapeProto { repeated Dimension dim = 1 }
    let mut r = Reader::new(bytes);
    while !r.done() {
        let (field, wire) = r.read_tag()?;
        if field == 1 && wire == WIRE_LEN {
            let dim_bytes = r.read_len_delimited()?;
            let mut dr = Reader::new(dim_bytes);
            let mut value = 0i64;
            let mut symbolic = false;
            while !dr.done() {
                let (f, w) = dr.read_tag()?;
                match (f, w) {
                    (1, WIRE_VARINT) => value = dr.read_varint()? as i64,
                    (2, WIRE_LEN) => {
                        dr.read_len_delimited()?;
                        symbolic = true;
                    }
                    (_, w) => dr.skip(w)?,
                }
            }
            info.dims.push(value);
            info.symbolic.push(symbolic);
        } else {
            r.skip(wire)?;
        }
    }
    Ok(())
}

fn parse_value_info(bytes: &[u8]) -> Result<OnnxTensorInfo, GraphError> {
    let mut info = OnnxTensorInfo::default();
    let mut r = Reader::new(bytes);
    while !r.done() {
        let (field, wire) = r.read_tag()?;
        match (field, wire) {
            (1, WIRE_LEN) => info.name = read_string(r.read_len_delimited()?)?,
            (2, WIRE_LEN) => {
                // TypeProto { tensor_type = 1 }
                let type_bytes = r.read_len_delimited()?;
                let mut tr = Reader::new(type_bytes);
                while !tr.done() {
                    let (tf, tw) = tr.read_tag()?;
                    if tf == 1 && tw == WIRE_LEN {
                        // TypeProto.Tensor { elem_type = 1, shape = 2 }
                        let tensor_bytes = tr.read_len_delimited()?;
                        let mut xr = Reader::new(tensor_bytes);
                        while !xr.done() {
                            let (xf, xw) = xr.read_tag()?;
                            match (xf, xw) {
                                (1, WIRE_VARINT) => info.elem_type = xr.read_varint()? as i64,
                                (2, WIRE_LEN) => {
                                    parse_shape_dims(xr.read_len_delimited()?, &mut info)?
                                }
                                (_, w) => xr.skip(w)?,
                            }
                        }
                    } else {
                        tr.skip(tw)?;
                    }
                }
            }
            (_, w) => r.skip(w)?,
        }
    }
    Ok(info)
}

fn parse_graph(bytes: &[u8]) -> Result<OnnxGraph, GraphError> {
    let mut g = OnnxGraph::default();
    let mut r = Reader::new(bytes);
    while !r.done() {
        let (field, wire) = r.read_tag()?;
        match (field, wire) {
            (1, WIRE_LEN) => g.nodes.push(parse_node(r.read_len_delimited()?)?),
            (5, WIRE_LEN) => g.initializers.push(parse_tensor(r.read_len_delimited()?)?),
            (11, WIRE_LEN) => g.inputs.push(parse_value_info(r.read_len_delimited()?)?),
            (_, w) => r.skip(w)?,
        }
    }
    Ok(g)
}

fn parse_model(bytes: &[u8]) -> Result<OnnxGraph, GraphError> {
    let mut r = Reader::new(bytes);
    while !r.done() {
        let (field, wire) = r.read_tag()?;
        if field == 7 && wire == WIRE_LEN {
            return parse_graph(r.read_len_delimited()?);
        }
        r.skip(wire)?;
    }
    Err(GraphError::Parse("model has no graph".into()))
}

// ── conversion to CompGraph ─────────────────────────────────────────

fn dtype_bytes_for(elem_type: i64) -> usize {
    match elem_type {
        10 | 16 => 2, // FLOAT16, BFLOAT16
        11 => 8,      // DOUBLE
        _ => 4,       // FLOAT and everything else we accept
    }
}

fn symmetric(vals: &[i64], what: &str) -> Result<usize, GraphError> {
    if vals.is_empty() {
        return Ok(0);
    }
    if vals.iter().any(|&v| v != vals[0]) || vals[0] < 0 {
        return Err(GraphError::ShapeMismatch(format!(
            "only symmetric {what} supported, got {vals:?}"
        )));
    }
    Ok(vals[0] as usize)
}

fn spatial_hp(node: &mut OpNode, onnx: &OnnxNode) -> Result<(), GraphError> {
    if let Some(auto) = onnx.attr("auto_pad").and_then(|a| a.s.as_deref()) {
        if auto != "NOTSET" {
            return Err(GraphError::UnsupportedOp(format!(
                "{} with auto_pad={auto}",
                onnx.op_type
            )));
        }
    }
    let kernel = onnx
        .attr_ints("kernel_shape")
        .ok_or_else(|| GraphError::ShapeMismatch(format!("{}: missing kernel_shape", onnx.op_type)))?;
    if kernel.len() != 2 || kernel.iter().any(|&k| k < 1) {
        return Err(GraphError::ShapeMismatch(format!(
            "{}: 2-D kernel required, got {kernel:?}",
            onnx.op_type
        )));
    }
    node.hyperparams.insert("kernel_h".into(), kernel[0] as f64);
    node.hyperparams.insert("kernel_w".into(), kernel[1] as f64);
    let stride = match onnx.attr_ints("strides") {
        Some(s) => symmetric(s, "strides")?.max(1),
        None => 1,
    };
    node.hyperparams.insert("stride".into(), stride as f64);
    let padding = match onnx.attr_ints("pads") {
        Some(p) => symmetric(p, "pads")?,
        None => 0,
    };
    node.hyperparams.insert("padding".into(), padding as f64);
    Ok(())
}

/// Loads an ONNX model restricted to the supported operator enum.
/// `batch_override` replaces the input batch dimension (required when the
/// exported dimension is symbolic).
pub fn load_onnx(path: &Path, batch_override: Option<usize>) -> Result<CompGraph, GraphError> {
    let bytes = std::fs::read(path).map_err(|e| GraphError::Io(e.to_string()))?;
    convert_onnx(&bytes, batch_override)
}

pub fn convert_onnx(bytes: &[u8], batch_override: Option<usize>) -> Result<CompGraph, GraphError> {
    let onnx = parse_model(bytes)?;

    let initializer_names: BTreeSet<&str> = onnx
        .initializers
        .iter()
        .map(|t| t.name.as_str())
        .collect();
    let initializer_dims: BTreeMap<&str, &OnnxTensorInfo> = onnx
        .initializers
        .iter()
        .map(|t| (t.name.as_str(), t))
        .collect();

    let real_inputs: Vec<&OnnxTensorInfo> = onnx
        .inputs
        .iter()
        .filter(|i| !initializer_names.contains(i.name.as_str()))
        .collect();
    if real_inputs.len() != 1 {
        return Err(GraphError::ShapeMismatch(format!(
            "expected exactly one graph input, found {}",
            real_inputs.len()
        )));
    }
    let input_info = real_inputs[0];
    if input_info.dims.len() != 4 {
        return Err(GraphError::ShapeMismatch(format!(
            "graph input must be rank 4, got {} dims",
            input_info.dims.len()
        )));
    }
    let mut input_dims = Vec::with_capacity(4);
    for (i, (&d, &sym)) in input_info
        .dims
        .iter()
        .zip(&input_info.symbolic)
        .enumerate()
    {
        if i == 0 {
            match batch_override {
                Some(b) => input_dims.push(b),
                None if !sym && d > 0 => input_dims.push(d as usize),
                None => {
                    return Err(GraphError::ShapeMismatch(
                        "symbolic batch dimension: pass an explicit batch size".into(),
                    ))
                }
            }
        } else {
            if sym || d < 1 {
                return Err(GraphError::ShapeMismatch(format!(
                    "graph input dim {i} is not a fixed positive size"
                )));
            }
            input_dims.push(d as usize);
        }
    }
    let batch_size = input_dims[0];
    let input_shape = TensorShape::new(input_dims)?;
    let dtype_bytes = dtype_bytes_for(input_info.elem_type);

    // Producers: tensor name -> node index.
    let mut producer: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, n) in onnx.nodes.iter().enumerate() {
        for out in &n.outputs {
            producer.insert(out.as_str(), i);
        }
    }

    let input_name = input_info.name.as_str();
    let mut nodes = Vec::with_capacity(onnx.nodes.len());
    let mut edges = Vec::new();

    for (idx, onode) in onnx.nodes.iter().enumerate() {
        let mut data_inputs = Vec::new();
        let mut weight_inputs = Vec::new();
        for name in &onode.inputs {
            if name.is_empty() {
                continue;
            }
            if initializer_names.contains(name.as_str()) {
                weight_inputs.push(name.as_str());
            } else if name == input_name || producer.contains_key(name.as_str()) {
                data_inputs.push(name.as_str());
            } else {
                return Err(GraphError::InvalidEdge(format!(
                    "node {idx} consumes unknown tensor \"{name}\""
                )));
            }
        }

        let mut node = match onode.op_type.as_str() {
            "Conv" => {
                let mut n = OpNode::new(idx, OpKind::Conv2d);
                spatial_hp(&mut n, onode)?;
                let group = onode.attr_i("group", 1).max(1) as usize;
                n.hyperparams.insert("groups".into(), group as f64);
                let w = weight_inputs
                    .first()
                    .and_then(|name| initializer_dims.get(name))
                    .ok_or_else(|| {
                        GraphError::ShapeMismatch(format!("Conv node {idx}: missing weight initializer"))
                    })?;
                if w.dims.len() != 4 {
                    return Err(GraphError::ShapeMismatch(format!(
                        "Conv node {idx}: weight must be rank 4"
                    )));
                }
                n.hyperparams
                    .insert("out_channels".into(), w.dims[0] as f64);
                n.hyperparams
                    .insert("in_channels".into(), (w.dims[1] as usize * group) as f64);
                n.hyperparams.insert(
                    "has_bias".into(),
                    if weight_inputs.len() > 1 { 1.0 } else { 0.0 },
                );
                n.weight_shape = Some(w.dims.iter().map(|&d| d as usize).collect());
                n
            }
            "Gemm" => {
                if let Some(a) = onode.attr("alpha").and_then(|a| a.f) {
                    if (a - 1.0).abs() > 1e-6 {
                        return Err(GraphError::UnsupportedOp("Gemm with alpha != 1".into()));
                    }
                }
                if let Some(b) = onode.attr("beta").and_then(|a| a.f) {
                    if (b - 1.0).abs() > 1e-6 {
                        return Err(GraphError::UnsupportedOp("Gemm with beta != 1".into()));
                    }
                }
                if onode.attr_i("transA", 0) != 0 {
                    return Err(GraphError::UnsupportedOp("Gemm with transA".into()));
                }
                let w = weight_inputs
                    .first()
                    .and_then(|name| initializer_dims.get(name))
                    .ok_or_else(|| {
                        GraphError::ShapeMismatch(format!("Gemm node {idx}: missing weight initializer"))
                    })?;
                if w.dims.len() != 2 {
                    return Err(GraphError::ShapeMismatch(format!(
                        "Gemm node {idx}: weight must be rank 2"
                    )));
                }
                let trans_b = onode.attr_i("transB", 0) != 0;
                let (out_f, in_f) = if trans_b {
                    (w.dims[0] as usize, w.dims[1] as usize)
                } else {
                    (w.dims[1] as usize, w.dims[0] as usize)
                };
                let mut n = OpNode::new(idx, OpKind::Gemm);
                n.hyperparams.insert("in_features".into(), in_f as f64);
                n.hyperparams.insert("out_features".into(), out_f as f64);
                n.hyperparams.insert(
                    "has_bias".into(),
                    if weight_inputs.len() > 1 { 1.0 } else { 0.0 },
                );
                n.weight_shape = Some(vec![out_f, in_f]);
                n
            }
            "BatchNormalization" => {
                let mut n = OpNode::new(idx, OpKind::BatchNorm);
                if let Some(scale) = weight_inputs
                    .first()
                    .and_then(|name| initializer_dims.get(name))
                {
                    if let Some(&c) = scale.dims.first() {
                        n.hyperparams.insert("num_features".into(), c as f64);
                    }
                }
                n
            }
            "Relu" => OpNode::new(idx, OpKind::Relu),
            "MaxPool" => {
                let mut n = OpNode::new(idx, OpKind::MaxPool);
                spatial_hp(&mut n, onode)?;
                n
            }
            "AveragePool" => {
                let mut n = OpNode::new(idx, OpKind::AvgPool);
                spatial_hp(&mut n, onode)?;
                n
            }
            "GlobalAveragePool" => OpNode::new(idx, OpKind::GlobalAvgPool),
            "Add" => OpNode::new(idx, OpKind::Add),
            "Concat" => {
                if onode.attr_i("axis", 1) != 1 {
                    return Err(GraphError::UnsupportedOp(
                        "Concat on a non-channel axis".into(),
                    ));
                }
                OpNode::new(idx, OpKind::Concat)
            }
            "Flatten" => {
                if onode.attr_i("axis", 1) != 1 {
                    return Err(GraphError::UnsupportedOp("Flatten with axis != 1".into()));
                }
                OpNode::new(idx, OpKind::Flatten)
            }
            "Softmax" => OpNode::new(idx, OpKind::Softmax),
            other => return Err(GraphError::UnsupportedOp(other.to_string())),
        };
        node.id = idx;
        nodes.push(node);

        for name in data_inputs {
            if let Some(&src) = producer.get(name) {
                edges.push((src, idx));
            }
        }
    }

    CompGraph::build(nodes, &edges, batch_size, dtype_bytes, input_shape)
}
