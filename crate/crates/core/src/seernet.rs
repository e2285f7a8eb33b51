//! The graph-network performance predictor.
//!
//! One block of feature updates runs per forward pass: edges update from
//! their endpoints, nodes update from aggregated incoming edges plus the
//! global-node state and the graph features, the global node refreshes from
//! softmax-pooled node updates, and the graph embedding updates from the
//! max/mean-blended node pool, the global node, and the previous embedding.
//! Prediction heads read the final graph embedding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::{
    PerfGraph, EDGE_FEATURE_DIM, GLOBAL_FEATURE_DIM, NODE_FEATURE_DIM,
};
use crate::nn::{
    init_layer, Activation, Mlp, MlpLayer, NnError, Params, Real, Tape, Tensor2D, ValueId,
};

#[derive(Debug, Error)]
pub enum SeerNetError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("model is not fitted")]
    NotFitted,
    #[error("input graph is not normalized")]
    NotNormalized,
    #[error("head index {index} out of range ({count} heads)")]
    BadHead { index: usize, count: usize },
}

/// Model architecture switches. `use_synmm` enables the max/mean blend
/// aggregation (plain mean otherwise); `use_gnpb` enables the auxiliary
/// global node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeerNetConfig {
    pub hidden: usize,
    pub head_hidden: usize,
    pub use_synmm: bool,
    pub use_gnpb: bool,
    /// One prediction head per target, in this order.
    pub targets: Vec<String>,
}

impl SeerNetConfig {
    pub fn single(target: &str) -> Self {
        SeerNetConfig {
            hidden: 256,
            head_hidden: 256,
            use_synmm: true,
            use_gnpb: true,
            targets: vec![target.to_string()],
        }
    }

    pub fn multi(targets: &[&str]) -> Self {
        SeerNetConfig {
            hidden: 256,
            head_hidden: 256,
            use_synmm: true,
            use_gnpb: true,
            targets: targets.iter().map(|t| t.to_string()).collect(),
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_components(mut self, synmm: bool, gnpb: bool) -> Self {
        self.use_synmm = synmm;
        self.use_gnpb = gnpb;
        self
    }
}

#[derive(Debug, Clone)]
struct Layers {
    enc_v: MlpLayer,
    enc_e: MlpLayer,
    enc_u: MlpLayer,
    mlp_e: Mlp,
    mlp_v: Mlp,
    mlp_z: Option<Mlp>,
    blend: Option<MlpLayer>,
    mlp_u: Mlp,
    heads: Vec<Mlp>,
}

/// Model inputs prepared from a normalized feature graph.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub nodes: Tensor2D,
    pub edges: Tensor2D,
    pub global: Tensor2D,
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
}

impl ModelInput {
    pub fn from_perfgraph(pg: &PerfGraph) -> Result<Self, SeerNetError> {
        if !pg.is_normalized() {
            return Err(SeerNetError::NotNormalized);
        }
        Self::from_perfgraph_unchecked(pg)
    }

    /// Skips the normalization check; used by tests that drive the block with
    /// synthetic features.
    pub fn from_perfgraph_unchecked(pg: &PerfGraph) -> Result<Self, SeerNetError> {
        let n = pg.num_nodes();
        let m = pg.num_edges();
        let mut nodes = Tensor2D::zeros(n, NODE_FEATURE_DIM);
        for (i, nf) in pg.nodes.iter().enumerate() {
            for (d, v) in nf.to_vec().iter().enumerate() {
                nodes.set(i, d, *v as Real);
            }
        }
        let mut edges = Tensor2D::zeros(m, EDGE_FEATURE_DIM);
        for (j, e) in pg.edges.iter().enumerate() {
            for (d, v) in e.features.to_vec().iter().enumerate() {
                edges.set(j, d, *v as Real);
            }
        }
        let gvec = pg.global_vector();
        let mut global = Tensor2D::zeros(1, GLOBAL_FEATURE_DIM);
        for (d, v) in gvec.iter().enumerate() {
            global.set(0, d, *v as Real);
        }
        let (sources, targets) = pg.edge_endpoints();
        Ok(ModelInput {
            nodes,
            edges,
            global,
            sources,
            targets,
        })
    }
}

/// Tape handles produced by one forward pass.
pub struct ForwardPass {
    pub tape: Tape,
    pub graph_embedding: ValueId,
    pub head_outputs: Vec<ValueId>,
}

impl ForwardPass {
    pub fn prediction(&self, head: usize) -> Real {
        self.tape.value(self.head_outputs[head]).get(0, 0)
    }
}

#[derive(Debug, Clone)]
pub struct SeerNet {
    pub config: SeerNetConfig,
    pub params: Params,
    layers: Layers,
    seed: u64,
    fitted: bool,
}

impl SeerNet {
    /// Fresh model with seeded initialization. Shared parameters are
    /// registered before the heads so gradient surgery can address them as a
    /// flat prefix.
    pub fn init(config: SeerNetConfig, seed: u64) -> Self {
        assert!(!config.targets.is_empty(), "at least one prediction head");
        let h = config.hidden;
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let enc_v = init_layer(&mut params, &mut rng, "enc_v", NODE_FEATURE_DIM, h, Activation::None);
        let enc_e = init_layer(&mut params, &mut rng, "enc_e", EDGE_FEATURE_DIM, h, Activation::None);
        let enc_u = init_layer(&mut params, &mut rng, "enc_u", GLOBAL_FEATURE_DIM, h, Activation::None);
        let mlp_e = Mlp::single(init_layer(
            &mut params,
            &mut rng,
            "mlp_e.0",
            3 * h,
            h,
            Activation::Relu,
        ));
        let mlp_v = Mlp::single(init_layer(
            &mut params,
            &mut rng,
            "mlp_v.0",
            3 * h,
            h,
            Activation::Relu,
        ));
        let mlp_z = if config.use_gnpb {
            Some(Mlp {
                layers: vec![
                    init_layer(&mut params, &mut rng, "mlp_z.0", h, h, Activation::Relu),
                    init_layer(&mut params, &mut rng, "mlp_z.1", h, h, Activation::None),
                ],
            })
        } else {
            None
        };
        let blend = if config.use_synmm {
            Some(init_layer(
                &mut params,
                &mut rng,
                "synmm.blend",
                2 * h,
                h,
                Activation::None,
            ))
        } else {
            None
        };
        let u_in = if config.use_gnpb { 3 * h } else { 2 * h };
        let mlp_u = Mlp::single(init_layer(
            &mut params,
            &mut rng,
            "mlp_u.0",
            u_in,
            h,
            Activation::Relu,
        ));
        params.mark_shared_boundary();

        let heads = config
            .targets
            .iter()
            .map(|t| Mlp {
                layers: vec![
                    init_layer(
                        &mut params,
                        &mut rng,
                        &format!("head.{t}.0"),
                        h,
                        config.head_hidden,
                        Activation::Relu,
                    ),
                    init_layer(
                        &mut params,
                        &mut rng,
                        &format!("head.{t}.1"),
                        config.head_hidden,
                        1,
                        Activation::None,
                    ),
                ],
            })
            .collect();

        SeerNet {
            config,
            params,
            layers: Layers {
                enc_v,
                enc_e,
                enc_u,
                mlp_e,
                mlp_v,
                mlp_z,
                blend,
                mlp_u,
                heads,
            },
            seed,
            fitted: false,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub fn mark_fitted(&mut self) {
        self.fitted = true;
    }

    pub fn head_count(&self) -> usize {
        self.layers.heads.len()
    }

    pub fn head_index(&self, target: &str) -> Option<usize> {
        self.config.targets.iter().position(|t| t == target)
    }

    /// One full block of updates plus all prediction heads, on a fresh tape.
    pub fn forward(&self, input: &ModelInput) -> Result<ForwardPass, SeerNetError> {
        let p = &self.params;
        let mut tape = Tape::new(p);
        let n = input.nodes.rows();

        let v_raw = tape.input(input.nodes.clone());
        let e_raw = tape.input(input.edges.clone());
        let u_raw = tape.input(input.global.clone());

        let v0 = tape.linear(p, self.layers.enc_v, v_raw)?;
        let e0 = tape.linear(p, self.layers.enc_e, e_raw)?;
        let u0 = tape.linear(p, self.layers.enc_u, u_raw)?;

        // Global-node state starts as the softmax pool of encoded nodes.
        let z0 = if self.config.use_gnpb {
            Some(tape.softmax_pool_rows(v0))
        } else {
            None
        };

        // Edge update from (edge, source, target); mean-aggregate per target.
        let vs = tape.gather_rows(v0, &input.sources)?;
        let vt = tape.gather_rows(v0, &input.targets)?;
        let ex = tape.concat_cols(&[e0, vs, vt])?;
        let e_upd = tape.mlp(p, &self.layers.mlp_e, ex)?;
        let e_bar = tape.segment_mean_rows(e_upd, &input.targets, n)?;

        // Node update from (ē, v (+z), u).
        let v_in = match z0 {
            Some(z) => tape.add_row_broadcast(v0, z)?,
            None => v0,
        };
        let u_rep = tape.repeat_rows(u0, n)?;
        let vx = tape.concat_cols(&[e_bar, v_in, u_rep])?;
        let v_upd = tape.mlp(p, &self.layers.mlp_v, vx)?;

        // Global-node refresh from softmax-pooled node updates.
        let z_upd = match (&self.layers.mlp_z, z0) {
            (Some(mlp_z), Some(z)) => {
                let pooled = tape.softmax_pool_rows(v_upd);
                let zsum = tape.add(pooled, z)?;
                Some(tape.mlp(p, mlp_z, zsum)?)
            }
            _ => None,
        };

        // Node pool for the graph embedding: max/mean blend or plain mean.
        let v_bar_u = match self.layers.blend {
            Some(blend) => {
                let mx = tape.max_rows(v_upd);
                let mn = tape.mean_rows(v_upd);
                let cat = tape.concat_cols(&[mx, mn])?;
                tape.linear(p, blend, cat)?
            }
            None => tape.mean_rows(v_upd),
        };

        let ux = match z_upd {
            Some(z) => tape.concat_cols(&[v_bar_u, z, u0])?,
            None => tape.concat_cols(&[v_bar_u, u0])?,
        };
        let u_upd = tape.mlp(p, &self.layers.mlp_u, ux)?;

        let head_outputs = self
            .layers
            .heads
            .iter()
            .map(|head| tape.mlp(p, head, u_upd))
            .collect::<Result<Vec<_>, _>>()?;

        Ok(ForwardPass {
            tape,
            graph_embedding: u_upd,
            head_outputs,
        })
    }

    /// Predicts one metric in normalized space. Requires a fitted model and a
    /// normalized feature graph.
    pub fn predict(&self, pg: &PerfGraph, head: usize) -> Result<Real, SeerNetError> {
        if !self.fitted {
            return Err(SeerNetError::NotFitted);
        }
        if head >= self.head_count() {
            return Err(SeerNetError::BadHead {
                index: head,
                count: self.head_count(),
            });
        }
        let input = ModelInput::from_perfgraph(pg)?;
        let pass = self.forward(&input)?;
        Ok(pass.prediction(head))
    }

    /// Serializable architecture description for checkpoint manifests.
    pub fn manifest_model(&self) -> serde_json::Value {
        serde_json::json!({
            "architecture": "seernet",
            "config": self.config,
            "feature_dims": {
                "node": NODE_FEATURE_DIM,
                "edge": EDGE_FEATURE_DIM,
                "global": GLOBAL_FEATURE_DIM,
            },
        })
    }

    /// Rebuilds a model from a checkpoint manifest's `model` section. The
    /// parameter layout is re-registered from the config and validated by the
    /// checkpoint loader.
    pub fn from_manifest_model(
        model: &serde_json::Value,
        seed: u64,
    ) -> Result<SeerNet, SeerNetError> {
        let config: SeerNetConfig = serde_json::from_value(model["config"].clone())
            .map_err(|e| SeerNetError::Nn(NnError::Checkpoint(e.to_string())))?;
        Ok(SeerNet::init(config, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_perfgraph, normalize, NormStats, Phase};
    use crate::graph::json::parse_json;
    use crate::nn::gradcheck::{finite_diff_grads, max_rel_error};

    fn small_graph_pg() -> PerfGraph {
        let g = parse_json(
            r#"{
            "batch_size": 1,
            "input_shape": [1, 3, 16, 16],
            "nodes": [
                {"id": 0, "kind": "Conv2d", "hyperparams": {
                    "kernel_h": 3, "kernel_w": 3, "stride": 1, "padding": 1,
                    "out_channels": 8}},
                {"id": 1, "kind": "ReLU"},
                {"id": 2, "kind": "MaxPool", "hyperparams": {
                    "kernel_h": 2, "kernel_w": 2, "stride": 2}}
            ],
            "edges": [[0, 1], [1, 2]]
        }"#,
        )
        .unwrap();
        let pg = build_perfgraph(&g, Phase::Infer).unwrap();
        let stats = crate::features::fit_feature_stats(&[&pg]);
        normalize(&pg, &stats).unwrap()
    }

    fn tiny_model(synmm: bool, gnpb: bool) -> SeerNet {
        let cfg = SeerNetConfig::single("time_s")
            .with_hidden(8)
            .with_components(synmm, gnpb);
        let mut m = SeerNet::init(cfg, 99);
        m.mark_fitted();
        m
    }

    #[test]
    fn unfitted_model_refuses_to_predict() {
        let cfg = SeerNetConfig::single("time_s").with_hidden(4);
        let model = SeerNet::init(cfg, 1);
        let pg = small_graph_pg();
        assert!(matches!(
            model.predict(&pg, 0),
            Err(SeerNetError::NotFitted)
        ));
    }

    #[test]
    fn raw_graph_is_rejected() {
        let g = parse_json(
            r#"{"batch_size": 1, "input_shape": [1,3,8,8],
                "nodes": [{"id": 0, "kind": "ReLU"}], "edges": []}"#,
        )
        .unwrap();
        let pg = build_perfgraph(&g, Phase::Infer).unwrap();
        let model = tiny_model(true, true);
        assert!(matches!(
            model.predict(&pg, 0),
            Err(SeerNetError::NotNormalized)
        ));
    }

    #[test]
    fn bad_head_index_is_rejected() {
        let model = tiny_model(true, true);
        let pg = small_graph_pg();
        assert!(matches!(
            model.predict(&pg, 3),
            Err(SeerNetError::BadHead { index: 3, count: 1 })
        ));
    }

    #[test]
    fn fixed_seed_and_graph_give_bitwise_identical_predictions() {
        let pg = small_graph_pg();
        let a = tiny_model(true, true).predict(&pg, 0).unwrap();
        let b = tiny_model(true, true).predict(&pg, 0).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a.is_finite());
    }

    #[test]
    fn all_variants_produce_finite_predictions() {
        let pg = small_graph_pg();
        for (synmm, gnpb) in [(true, true), (true, false), (false, true), (false, false)] {
            let v = tiny_model(synmm, gnpb).predict(&pg, 0).unwrap();
            assert!(v.is_finite(), "variant synmm={synmm} gnpb={gnpb}");
        }
    }

    #[test]
    fn single_node_graph_runs_without_edges() {
        let g = parse_json(
            r#"{"batch_size": 1, "input_shape": [1,3,8,8],
                "nodes": [{"id": 0, "kind": "ReLU"}], "edges": []}"#,
        )
        .unwrap();
        let pg = build_perfgraph(&g, Phase::Infer).unwrap();
        let pg = normalize(&pg, &NormStats::identity()).unwrap();
        let model = tiny_model(true, true);
        assert!(model.predict(&pg, 0).unwrap().is_finite());
    }

    #[test]
    fn multi_head_outputs_are_independent_scalars() {
        let cfg = SeerNetConfig::multi(&["time_s", "mem_bytes", "util_frac"]).with_hidden(8);
        let mut model = SeerNet::init(cfg, 5);
        model.mark_fitted();
        let pg = small_graph_pg();
        let values: Vec<Real> = (0..3).map(|h| model.predict(&pg, h).unwrap()).collect();
        assert!(values.iter().all(|v| v.is_finite()));
        assert!(values[0] != values[1] || values[1] != values[2]);
    }

    #[test]
    fn shared_boundary_excludes_heads() {
        let model = tiny_model(true, true);
        let shared = model.params.shared_len();
        assert!(shared > 0 && shared < model.params.len());
        for e in model.params.entries() {
            let in_head_block = e.offset >= shared;
            assert_eq!(e.name.starts_with("head."), in_head_block, "{}", e.name);
        }
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let pg = small_graph_pg();
        let input = ModelInput::from_perfgraph(&pg).unwrap();
        let mut model = tiny_model(true, true);

        let pass = model.forward(&input).unwrap();
        let analytic = pass
            .tape
            .backward(
                &model.params,
                pass.head_outputs[0],
                Tensor2D::row_vector(vec![1.0]).unwrap(),
            )
            .unwrap();

        let layers = model.layers.clone();
        let config = model.config.clone();
        let numeric = finite_diff_grads(&mut model.params, 1e-5, |p| {
            let probe = SeerNet {
                config: config.clone(),
                params: p.clone(),
                layers: layers.clone(),
                seed: 0,
                fitted: true,
            };
            let pass = probe.forward(&input).unwrap();
            pass.prediction(0) as f64
        });
        let err = max_rel_error(&analytic.params, &numeric, 1e-6);
        assert!(err < 1e-4, "max relative error {err}");
    }
}
