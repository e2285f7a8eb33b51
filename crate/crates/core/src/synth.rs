//! Synthetic benchmark generation: random CNN-style computational graphs
//! labeled by an analytic roofline cost model, so the full pipeline can be
//! trained and verified without hardware measurement.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, FeatureError, Phase};
use crate::graph::{CompGraph, GraphError, OpKind, OpNode, TensorShape};

pub const TARGET_TIME: &str = "time_s";
pub const TARGET_MEM: &str = "mem_bytes";
pub const TARGET_UTIL: &str = "util_frac";
pub const ALL_TARGETS: [&str; 3] = [TARGET_TIME, TARGET_MEM, TARGET_UTIL];

/// Forward/backward cost multiplier applied to training-phase time labels
/// (backward pass costed at twice the forward pass).
pub const TRAIN_TIME_MULTIPLIER: f64 = 3.0;
/// Activation-liveness multiplier for training-phase memory labels
/// (activations retained for the backward pass).
pub const TRAIN_ACT_MULTIPLIER: f64 = 2.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchFamily {
    ChainVgg,
    Residual,
    DenseBlock,
    BottleneckMix,
}

/// Generator parameters for one architecture family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchSpec {
    pub family: ArchFamily,
    /// Inclusive block-count range.
    pub depth: (usize, usize),
    /// Inclusive base-channel range (rounded to multiples of 4).
    pub channels: (usize, usize),
    pub batch_sizes: Vec<usize>,
    pub seed: u64,
}

impl ArchSpec {
    pub fn family(family: ArchFamily, seed: u64) -> Self {
        ArchSpec {
            family,
            depth: (2, 6),
            channels: (8, 64),
            batch_sizes: vec![1, 2, 4, 8, 16],
            seed,
        }
    }
}

/// Analytic device model used to label graphs: a roofline term per node plus
/// a fixed per-op launch overhead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostOracleSpec {
    /// Peak compute throughput, FLOP/s.
    pub peak_flops: f64,
    /// Memory bandwidth, bytes/s.
    pub mem_bandwidth: f64,
    /// Fixed per-operation overhead, seconds.
    pub per_op_overhead: f64,
    /// Baseline allocation, bytes.
    pub mem_base: f64,
    /// Utilization ceiling in (0, 1].
    pub util_saturation: f64,
}

impl Default for CostOracleSpec {
    fn default() -> Self {
        CostOracleSpec {
            peak_flops: 5e12,
            mem_bandwidth: 3e11,
            per_op_overhead: 3e-6,
            mem_base: 2e8,
            util_saturation: 0.92,
        }
    }
}

impl CostOracleSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let all = [
            self.peak_flops,
            self.mem_bandwidth,
            self.per_op_overhead,
            self.mem_base,
            self.util_saturation,
        ];
        if all.iter().any(|&v| !(v > 0.0)) {
            return Err(SynthError::Parse(
                "all cost-oracle constants must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub time_s: f64,
    pub mem_bytes: f64,
    pub util_frac: f64,
}

impl Labels {
    pub fn get(&self, target: &str) -> Option<f64> {
        match target {
            TARGET_TIME => Some(self.time_s),
            TARGET_MEM => Some(self.mem_bytes),
            TARGET_UTIL => Some(self.util_frac),
            _ => None,
        }
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert(TARGET_TIME.to_string(), self.time_s);
        m.insert(TARGET_MEM.to_string(), self.mem_bytes);
        m.insert(TARGET_UTIL.to_string(), self.util_frac);
        m
    }
}

// ── graph generation ────────────────────────────────────────────────

struct Builder {
    nodes: Vec<OpNode>,
    edges: Vec<(usize, usize)>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    fn push(&mut self, kind: OpKind, hp: &[(&str, f64)], from: &[usize]) -> usize {
        let id = self.nodes.len();
        let mut node = OpNode::new(id, kind);
        for (k, v) in hp {
            node.hyperparams.insert((*k).to_string(), *v);
        }
        self.nodes.push(node);
        for &f in from {
            self.edges.push((f, id));
        }
        id
    }

    fn conv(
        &mut self,
        from: &[usize],
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
    ) -> usize {
        self.push(
            OpKind::Conv2d,
            &[
                ("kernel_h", k as f64),
                ("kernel_w", k as f64),
                ("stride", stride as f64),
                ("padding", padding as f64),
                ("groups", groups as f64),
                ("in_channels", c_in as f64),
                ("out_channels", c_out as f64),
                ("has_bias", if bias { 1.0 } else { 0.0 }),
            ],
            from,
        )
    }
}

fn round4(c: usize) -> usize {
    (c.max(4) / 4) * 4
}

fn pick_channels(rng: &mut ChaCha8Rng, range: (usize, usize)) -> usize {
    let lo = round4(range.0);
    let hi = round4(range.1).max(lo);
    round4(rng.random_range(lo..=hi))
}

/// Deterministically generates one graph. The same (spec, seed) pair always
/// yields a structurally identical graph.
pub fn gen_graph(spec: &ArchSpec, seed: u64) -> Result<CompGraph, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(
        spec.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(seed),
    );
    let batch = spec.batch_sizes[rng.random_range(0..spec.batch_sizes.len())];
    let spatial = *[8usize, 16, 32]
        .get(rng.random_range(0..3))
        .expect("fixed set");
    let depth = rng.random_range(spec.depth.0..=spec.depth.1).max(1);
    let c0 = pick_channels(&mut rng, spec.channels);
    let classes = rng.random_range(10..=100);

    let mut b = Builder::new();
    let mut h = spatial;

    let last = match spec.family {
        ArchFamily::ChainVgg => {
            let mut c_prev = 3;
            let mut c = c0;
            let mut cur: Option<usize> = None;
            for i in 0..depth {
                let from: Vec<usize> = cur.into_iter().collect();
                let conv = b.conv(&from, c_prev, c, 3, 1, 1, 1, rng.random_bool(0.3));
                let mut tail = conv;
                if rng.random_bool(0.5) {
                    tail = b.push(OpKind::BatchNorm, &[], &[tail]);
                }
                tail = b.push(OpKind::Relu, &[], &[tail]);
                if h >= 4 && (i % 2 == 1 || rng.random_bool(0.3)) {
                    tail = b.push(
                        OpKind::MaxPool,
                        &[("kernel_h", 2.0), ("kernel_w", 2.0), ("stride", 2.0)],
                        &[tail],
                    );
                    h /= 2;
                    c_prev = c;
                    c = round4((c * 2).min(round4(spec.channels.1)));
                } else {
                    c_prev = c;
                }
                cur = Some(tail);
            }
            cur.expect("depth >= 1")
        }
        ArchFamily::Residual => {
            let stem = b.conv(&[], 3, c0, 3, 1, 1, 1, false);
            let mut cur = b.push(OpKind::Relu, &[], &[stem]);
            let c = c0;
            for _ in 0..depth {
                let c1 = b.conv(&[cur], c, c, 3, 1, 1, 1, false);
                let bn1 = b.push(OpKind::BatchNorm, &[], &[c1]);
                let r1 = b.push(OpKind::Relu, &[], &[bn1]);
                let c2 = b.conv(&[r1], c, c, 3, 1, 1, 1, false);
                let bn2 = b.push(OpKind::BatchNorm, &[], &[c2]);
                let add = b.push(OpKind::Add, &[], &[bn2, cur]);
                cur = b.push(OpKind::Relu, &[], &[add]);
                if h >= 4 && rng.random_bool(0.4) {
                    cur = b.push(
                        OpKind::MaxPool,
                        &[("kernel_h", 2.0), ("kernel_w", 2.0), ("stride", 2.0)],
                        &[cur],
                    );
                    h /= 2;
                }
            }
            cur
        }
        ArchFamily::DenseBlock => {
            let growth = round4(rng.random_range(4..=16));
            let stem = b.conv(&[], 3, c0, 3, 1, 1, 1, false);
            let mut outputs = vec![b.push(OpKind::Relu, &[], &[stem])];
            let mut c_total = c0;
            for _ in 0..depth {
                let (src, c_in) = if outputs.len() == 1 {
                    (outputs[0], c_total)
                } else {
                    (b.push(OpKind::Concat, &[], &outputs.clone()), c_total)
                };
                let conv = b.conv(&[src], c_in, growth, 3, 1, 1, 1, false);
                let relu = b.push(OpKind::Relu, &[], &[conv]);
                outputs.push(relu);
                c_total += growth;
            }
            if outputs.len() > 1 {
                b.push(OpKind::Concat, &[], &outputs)
            } else {
                outputs[0]
            }
        }
        ArchFamily::BottleneckMix => {
            let stem = b.conv(&[], 3, c0, 3, 1, 1, 1, false);
            let mut cur = b.push(OpKind::Relu, &[], &[stem]);
            let c = c0;
            let mid = round4(c / 2).max(4);
            for _ in 0..depth {
                let reduce = b.conv(&[cur], c, mid, 1, 1, 0, 1, false);
                let r1 = b.push(OpKind::Relu, &[], &[reduce]);
                let groups = if mid % 4 == 0 && rng.random_bool(0.5) { 4 } else { 1 };
                let spatial_conv = b.conv(&[r1], mid, mid, 3, 1, 1, groups, false);
                let r2 = b.push(OpKind::Relu, &[], &[spatial_conv]);
                let expand = b.conv(&[r2], mid, c, 1, 1, 0, 1, rng.random_bool(0.5));
                let add = b.push(OpKind::Add, &[], &[expand, cur]);
                cur = b.push(OpKind::Relu, &[], &[add]);
                if h >= 4 && rng.random_bool(0.35) {
                    let kind = if rng.random_bool(0.5) {
                        OpKind::MaxPool
                    } else {
                        OpKind::AvgPool
                    };
                    cur = b.push(
                        kind,
                        &[("kernel_h", 2.0), ("kernel_w", 2.0), ("stride", 2.0)],
                        &[cur],
                    );
                    h /= 2;
                }
            }
            cur
        }
    };

    // Classifier tail shared by all families.
    let gap = b.push(OpKind::GlobalAvgPool, &[], &[last]);
    let flat = b.push(OpKind::Flatten, &[], &[gap]);
    let gemm = b.push(
        OpKind::Gemm,
        &[("out_features", classes as f64), ("has_bias", 1.0)],
        &[flat],
    );
    if rng.random_bool(0.5) {
        b.push(OpKind::Softmax, &[], &[gemm]);
    }

    let graph = CompGraph::build(
        b.nodes,
        &b.edges,
        batch,
        4,
        TensorShape::nchw(batch, 3, spatial, spatial),
    )?;
    Ok(graph)
}

// ── roofline labeling ───────────────────────────────────────────────

/// Peak bytes of simultaneously live activation tensors, simulated over the
/// graph's canonical topological order. The graph input stays live until all
/// source nodes have run; every node output stays live until its last
/// consumer has run.
fn peak_activation_bytes(graph: &CompGraph) -> f64 {
    let n = graph.node_count();
    let order = graph.topo_order();
    let dtype = graph.dtype_bytes as u64;

    let mut out_degree = vec![0u64; n];
    for e in &graph.edges {
        out_degree[e.source] += 1;
    }
    let sources = (0..n)
        .filter(|&i| graph.edges.iter().all(|e| e.target != i))
        .count() as u64;

    let input_bytes = graph.input_shape.elements() * dtype;
    let out_bytes: Vec<u64> = graph
        .output_shapes
        .iter()
        .map(|s| s.elements() * dtype)
        .collect();

    let mut remaining: Vec<u64> = out_degree.clone();
    let mut input_remaining = sources;
    let mut live = input_bytes;
    let mut peak = live;
    let incoming = graph.incoming();

    for &i in &order {
        live += out_bytes[i];
        peak = peak.max(live);
        if incoming[i].is_empty() {
            input_remaining -= 1;
            if input_remaining == 0 {
                live -= input_bytes;
            }
        } else {
            for &ei in &incoming[i] {
                let src = graph.edges[ei].source;
                remaining[src] -= 1;
                if remaining[src] == 0 {
                    live -= out_bytes[src];
                }
            }
        }
        if remaining[i] == 0 {
            // No consumers: the output is freed immediately after counting.
            live -= out_bytes[i];
        }
    }
    peak as f64
}

/// Labels one graph with the roofline oracle:
/// time = Σ max(flops/peak, mac/bandwidth) + N·overhead (×3 for training);
/// mem = base + weights + peak activation liveness (×2 for training);
/// util = clamp(flops_total/(time·peak), 0, saturation).
pub fn label(
    graph: &CompGraph,
    oracle: &CostOracleSpec,
    phase: Phase,
) -> Result<Labels, SynthError> {
    let incoming = graph.incoming();
    let mut total_flops = 0.0;
    let mut total_weight_bytes = 0.0;
    let mut roofline = 0.0;
    for (i, node) in graph.nodes.iter().enumerate() {
        let in_shapes = graph.node_input_shapes(i, &incoming);
        let out_shape = &graph.output_shapes[i];
        let flops = features::op_flops(node, &in_shapes, out_shape)?;
        let mac = features::op_mac_bytes(node, &in_shapes, out_shape, graph.dtype_bytes)?;
        let weight =
            features::op_weight_elements(node, &in_shapes, out_shape)? * graph.dtype_bytes as u64;
        total_flops += flops;
        total_weight_bytes += weight as f64;
        roofline += (flops / oracle.peak_flops).max(mac / oracle.mem_bandwidth);
    }

    let mut time_s = roofline + graph.node_count() as f64 * oracle.per_op_overhead;
    if phase == Phase::Train {
        time_s *= TRAIN_TIME_MULTIPLIER;
    }

    let act_mult = if phase == Phase::Train {
        TRAIN_ACT_MULTIPLIER
    } else {
        1.0
    };
    let mem_bytes =
        oracle.mem_base + total_weight_bytes + act_mult * peak_activation_bytes(graph);

    let util_frac = (total_flops / (time_s * oracle.peak_flops))
        .clamp(0.0, oracle.util_saturation);

    Ok(Labels {
        time_s,
        mem_bytes,
        util_frac,
    })
}

// ── dataset on disk ─────────────────────────────────────────────────

/// Generation recipe for a whole dataset: graphs cycle through the listed
/// architecture specs; labels come from the cost oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub archs: Vec<ArchSpec>,
    pub oracle: CostOracleSpec,
}

impl DatasetSpec {
    /// Mixed-family recipe used by tests and as a starting point.
    pub fn mixed(seed: u64) -> Self {
        DatasetSpec {
            archs: vec![
                ArchSpec::family(ArchFamily::ChainVgg, seed),
                ArchSpec::family(ArchFamily::Residual, seed),
                ArchSpec::family(ArchFamily::DenseBlock, seed),
                ArchSpec::family(ArchFamily::BottleneckMix, seed),
            ],
            oracle: CostOracleSpec::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io(e.to_string()))?;
        let spec: DatasetSpec =
            serde_json::from_str(&text).map_err(|e| SynthError::Parse(e.to_string()))?;
        spec.oracle.validate()?;
        if spec.archs.is_empty() {
            return Err(SynthError::Parse("dataset spec lists no architectures".into()));
        }
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        let text = serde_json::to_string_pretty(self).expect("spec serialization cannot fail");
        std::fs::write(path, text).map_err(|e| SynthError::Io(e.to_string()))
    }
}

/// One generated, labeled graph (both phases).
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub id: String,
    pub graph: CompGraph,
    pub labels_infer: Labels,
    pub labels_train: Labels,
}

pub fn graph_id(index: usize) -> String {
    format!("g{index:05}")
}

/// Generates `n` labeled graphs, cycling through the spec's architecture
/// families. Graph `i` is generated with per-graph seed `i`.
pub fn gen_labeled(spec: &DatasetSpec, n: usize) -> Result<Vec<LabeledGraph>, SynthError> {
    spec.oracle.validate()?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let arch = &spec.archs[i % spec.archs.len()];
        let graph = gen_graph(arch, i as u64)?;
        let labels_infer = label(&graph, &spec.oracle, Phase::Infer)?;
        let labels_train = label(&graph, &spec.oracle, Phase::Train)?;
        out.push(LabeledGraph {
            id: graph_id(i),
            graph,
            labels_infer,
            labels_train,
        });
    }
    Ok(out)
}

/// Writes `ds/spec.json`, `ds/graphs/<id>.json`, and `ds/labels.csv` with one
/// row per (graph, phase).
pub fn write_dataset(
    dir: &Path,
    spec: &DatasetSpec,
    graphs: &[LabeledGraph],
) -> Result<(), SynthError> {
    let graphs_dir = dir.join("graphs");
    std::fs::create_dir_all(&graphs_dir).map_err(|e| SynthError::Io(e.to_string()))?;
    spec.save(&dir.join("spec.json"))?;

    let mut csv = String::from("graph_id,phase,time_s,mem_bytes,util_frac\n");
    for lg in graphs {
        crate::graph::json::save_json(&lg.graph, &graphs_dir.join(format!("{}.json", lg.id)))?;
        for (phase, labels) in [
            (Phase::Infer, &lg.labels_infer),
            (Phase::Train, &lg.labels_train),
        ] {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                lg.id,
                phase.name(),
                labels.time_s,
                labels.mem_bytes,
                labels.util_frac
            ));
        }
    }
    std::fs::write(dir.join("labels.csv"), csv).map_err(|e| SynthError::Io(e.to_string()))?;
    Ok(())
}

/// Reads a dataset directory back into labeled graphs.
pub fn read_dataset(dir: &Path) -> Result<Vec<LabeledGraph>, SynthError> {
    let csv = std::fs::read_to_string(dir.join("labels.csv"))
        .map_err(|e| SynthError::Io(e.to_string()))?;
    let mut rows: BTreeMap<String, (Option<Labels>, Option<Labels>)> = BTreeMap::new();
    for (lineno, line) in csv.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(SynthError::Parse(format!(
                "labels.csv line {}: expected 5 columns",
                lineno + 1
            )));
        }
        let parse = |s: &str| -> Result<f64, SynthError> {
            s.parse()
                .map_err(|_| SynthError::Parse(format!("labels.csv line {}: bad number", lineno + 1)))
        };
        let labels = Labels {
            time_s: parse(parts[2])?,
            mem_bytes: parse(parts[3])?,
            util_frac: parse(parts[4])?,
        };
        let slot = rows.entry(parts[0].to_string()).or_default();
        match Phase::parse(parts[1]) {
            Some(Phase::Infer) => slot.0 = Some(labels),
            Some(Phase::Train) => slot.1 = Some(labels),
            None => {
                return Err(SynthError::Parse(format!(
                    "labels.csv line {}: unknown phase \"{}\"",
                    lineno + 1,
                    parts[1]
                )))
            }
        }
    }

    let mut out = Vec::with_capacity(rows.len());
    for (id, (infer, train)) in rows {
        let path = dir.join("graphs").join(format!("{id}.json"));
        let graph = crate::graph::json::load_json(&path)?;
        let (Some(labels_infer), Some(labels_train)) = (infer, train) else {
            return Err(SynthError::Parse(format!(
                "graph {id}: missing a phase row in labels.csv"
            )));
        };
        out.push(LabeledGraph {
            id,
            graph,
            labels_infer,
            labels_train,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::json;

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = ArchSpec::family(ArchFamily::ChainVgg, 7);
        let a = gen_graph(&spec, 4).unwrap();
        let b = gen_graph(&spec, 4).unwrap();
        assert_eq!(a, b);
        let c = gen_graph(&spec, 5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn residual_family_contains_add_with_two_predecessors() {
        let spec = ArchSpec::family(ArchFamily::Residual, 3);
        let g = gen_graph(&spec, 0).unwrap();
        let incoming = g.incoming();
        let has_residual_add = g
            .nodes
            .iter()
            .enumerate()
            .any(|(i, n)| n.kind == OpKind::Add && incoming[i].len() == 2);
        assert!(has_residual_add);
    }

    #[test]
    fn all_families_generate_valid_graphs_roundtrip() {
        for family in [
            ArchFamily::ChainVgg,
            ArchFamily::Residual,
            ArchFamily::DenseBlock,
            ArchFamily::BottleneckMix,
        ] {
            let spec = ArchSpec::family(family, 11);
            for seed in 0..25 {
                let g = gen_graph(&spec, seed).unwrap();
                let text = json::to_json_string(&g);
                let back = json::parse_json(&text).unwrap();
                assert_eq!(g, back, "family {family:?} seed {seed}");
            }
        }
    }

    #[test]
    fn labels_are_positive_and_deterministic() {
        let spec = DatasetSpec::mixed(21);
        let graphs = gen_labeled(&spec, 16).unwrap();
        for lg in &graphs {
            for l in [&lg.labels_infer, &lg.labels_train] {
                assert!(l.time_s > 0.0);
                assert!(l.mem_bytes > 0.0);
                assert!(l.util_frac > 0.0 && l.util_frac <= spec.oracle.util_saturation);
            }
        }
        let again = gen_labeled(&spec, 16).unwrap();
        for (a, b) in graphs.iter().zip(&again) {
            assert_eq!(a.labels_infer, b.labels_infer);
        }
    }

    #[test]
    fn single_relu_label_matches_direct_formula() {
        let g = json::parse_json(
            r#"{"batch_size": 1, "input_shape": [1, 8, 16, 16],
                "nodes": [{"id": 0, "kind": "ReLU"}], "edges": []}"#,
        )
        .unwrap();
        let oracle = CostOracleSpec::default();
        let l = label(&g, &oracle, Phase::Infer).unwrap();
        let flops = 8.0 * 16.0 * 16.0;
        let mac = 2.0 * flops * 4.0;
        let expected =
            (flops / oracle.peak_flops).max(mac / oracle.mem_bandwidth) + oracle.per_op_overhead;
        assert!((l.time_s - expected).abs() < 1e-18);
        // Input and output both live at once.
        let expected_mem = oracle.mem_base + 2.0 * flops * 4.0;
        assert_eq!(l.mem_bytes, expected_mem);
    }

    #[test]
    fn empty_weight_graph_memory_is_base_plus_activations() {
        let g = json::parse_json(
            r#"{"batch_size": 1, "input_shape": [1, 4, 8, 8],
                "nodes": [
                    {"id": 0, "kind": "ReLU"},
                    {"id": 1, "kind": "MaxPool", "hyperparams": {
                        "kernel_h": 2, "kernel_w": 2, "stride": 2}}],
                "edges": [[0, 1]]}"#,
        )
        .unwrap();
        let oracle = CostOracleSpec::default();
        let l = label(&g, &oracle, Phase::Infer).unwrap();
        // peak liveness: input (1024B) + relu out (1024B) live together
        assert_eq!(l.mem_bytes, oracle.mem_base + 2048.0);
    }

    #[test]
    fn training_phase_scales_time_and_memory() {
        let spec = ArchSpec::family(ArchFamily::ChainVgg, 2);
        let g = gen_graph(&spec, 1).unwrap();
        let oracle = CostOracleSpec::default();
        let infer = label(&g, &oracle, Phase::Infer).unwrap();
        let train = label(&g, &oracle, Phase::Train).unwrap();
        assert!((train.time_s - TRAIN_TIME_MULTIPLIER * infer.time_s).abs() < 1e-15);
        assert!(train.mem_bytes > infer.mem_bytes);
    }

    #[test]
    fn doubling_batch_doubles_flops_and_increases_time() {
        let make = |batch: usize| {
            json::parse_json(&format!(
                r#"{{"batch_size": {batch}, "input_shape": [{batch}, 3, 16, 16],
                "nodes": [
                    {{"id": 0, "kind": "Conv2d", "hyperparams": {{
                        "kernel_h": 3, "kernel_w": 3, "stride": 1, "padding": 1,
                        "out_channels": 16}}}},
                    {{"id": 1, "kind": "ReLU"}}],
                "edges": [[0, 1]]}}"#
            ))
            .unwrap()
        };
        let g1 = make(1);
        let g2 = make(2);
        let f = |g: &CompGraph| {
            let pg = features::build_perfgraph(g, Phase::Infer).unwrap();
            pg.global.flops_stats[0]
        };
        assert_eq!(f(&g2), 2.0 * f(&g1));
        let oracle = CostOracleSpec::default();
        let l1 = label(&g1, &oracle, Phase::Infer).unwrap();
        let l2 = label(&g2, &oracle, Phase::Infer).unwrap();
        assert!(l2.time_s > l1.time_s);
    }

    #[test]
    fn dataset_flops_span_three_orders_of_magnitude() {
        let spec = DatasetSpec::mixed(5);
        let graphs = gen_labeled(&spec, 64).unwrap();
        let flops: Vec<f64> = graphs
            .iter()
            .map(|lg| {
                features::build_perfgraph(&lg.graph, Phase::Infer)
                    .unwrap()
                    .global
                    .flops_stats[0]
            })
            .collect();
        let min = flops.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = flops.iter().cloned().fold(0.0, f64::max);
        assert!(
            max / min >= 1e3,
            "FLOPs span only {:.1}x ({min:.3e}..{max:.3e})",
            max / min
        );
    }

    #[test]
    fn dataset_write_read_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec::mixed(9);
        let graphs = gen_labeled(&spec, 8).unwrap();
        write_dataset(dir.path(), &spec, &graphs).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), graphs.len());
        for (a, b) in graphs.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.graph, b.graph);
            assert_eq!(a.labels_infer, b.labels_infer);
            assert_eq!(a.labels_train, b.labels_train);
        }
    }
}
