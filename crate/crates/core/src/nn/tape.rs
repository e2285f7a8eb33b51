//! Reverse-mode gradient tape over [`Tensor2D`] values.
//!
//! Operations are recorded eagerly during the forward pass; the backward pass
//! replays them in exact reverse order, accumulating gradients into a flat
//! buffer aligned with [`Params`]. Parameter mutation between forward and
//! backward invalidates the tape (`StaleTape`).

use super::params::{Activation, Mlp, MlpLayer, Params};
use super::tensor::{softmax_rows, Tensor2D};
use super::{NnError, Real};

/// Handle to a value recorded on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Debug)]
enum Op {
    /// External input; gradients accumulate but propagate no further.
    Leaf,
    /// `y = x·Wᵀ + b`, optionally followed by ReLU.
    Linear {
        x: ValueId,
        layer: MlpLayer,
    },
    Relu {
        x: ValueId,
    },
    Add {
        a: ValueId,
        b: ValueId,
    },
    /// `y[r] = x[r] + row[0]` (row broadcast over all rows of x).
    AddRowBroadcast {
        x: ValueId,
        row: ValueId,
    },
    ConcatCols {
        xs: Vec<ValueId>,
    },
    /// `y[r] = x[idx[r]]`.
    GatherRows {
        x: ValueId,
        idx: Vec<usize>,
    },
    /// `y[i] = mean over rows r with seg[r] == i`; empty segments get zeros.
    SegmentMeanRows {
        x: ValueId,
        seg: Vec<usize>,
        counts: Vec<usize>,
    },
    /// Per-column softmax-attention pooling: weights are the softmax of the
    /// column values themselves; output is the weighted sum (1×cols).
    SoftmaxPoolRows {
        x: ValueId,
    },
    /// Per-column max over rows (1×cols); first index wins ties.
    MaxRows {
        x: ValueId,
        argmax: Vec<usize>,
    },
    /// Per-column mean over rows (1×cols).
    MeanRows {
        x: ValueId,
    },
    /// Repeats a (1×c) row n times.
    RepeatRows {
        x: ValueId,
    },
    /// Elementwise product.
    Mul {
        a: ValueId,
        b: ValueId,
    },
}

struct Node {
    op: Op,
    value: Tensor2D,
}

/// Gradients produced by a backward pass.
#[derive(Debug)]
pub struct Gradients {
    /// Flat parameter gradients aligned with [`Params::flat`].
    pub params: Vec<Real>,
    node_grads: Vec<Option<Tensor2D>>,
}

impl Gradients {
    pub fn zeros(param_len: usize) -> Self {
        Gradients {
            params: vec![0.0; param_len],
            node_grads: Vec::new(),
        }
    }

    /// Clears the parameter gradients (for reuse across batches).
    pub fn zero(&mut self) {
        self.params.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Gradient w.r.t. a recorded value (e.g. a leaf input) from the most
    /// recent backward pass, if it received any.
    pub fn value_grad(&self, id: ValueId) -> Option<&Tensor2D> {
        self.node_grads[id.0].as_ref()
    }
}

pub struct Tape {
    nodes: Vec<Node>,
    params_version: u64,
}

impl Tape {
    pub fn new(params: &Params) -> Self {
        Tape {
            nodes: Vec::new(),
            params_version: params.version(),
        }
    }

    pub fn value(&self, id: ValueId) -> &Tensor2D {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor2D) -> ValueId {
        self.nodes.push(Node { op, value });
        ValueId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor2D) -> ValueId {
        self.push(Op::Leaf, value)
    }

    /// Affine layer with optional fused ReLU.
    pub fn linear(
        &mut self,
        params: &Params,
        layer: MlpLayer,
        x: ValueId,
    ) -> Result<ValueId, NnError> {
        self.check_version(params)?;
        let w = params.tensor(layer.weight);
        let b = params.slice(layer.bias);
        let xv = self.value(x);
        if xv.cols() != w.cols() {
            return Err(NnError::ShapeMismatch(format!(
                "linear: input width {} vs weight fan-in {}",
                xv.cols(),
                w.cols()
            )));
        }
        let mut y = xv.matmul_transb(&w);
        for r in 0..y.rows() {
            let row = y.row_mut(r);
            for (v, &bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        if layer.activation == Activation::Relu {
            for v in y.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Ok(self.push(Op::Linear { x, layer }, y))
    }

    /// Runs a whole MLP (layer stack) on the tape.
    pub fn mlp(&mut self, params: &Params, mlp: &Mlp, x: ValueId) -> Result<ValueId, NnError> {
        let mut cur = x;
        for layer in &mlp.layers {
            cur = self.linear(params, *layer, cur)?;
        }
        Ok(cur)
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let mut y = self.value(x).clone();
        for v in y.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.push(Op::Relu { x }, y)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, NnError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(NnError::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut y = av.clone();
        y.add_assign(bv);
        Ok(self.push(Op::Add { a, b }, y))
    }

    pub fn add_row_broadcast(&mut self, x: ValueId, row: ValueId) -> Result<ValueId, NnError> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(NnError::ShapeMismatch(format!(
                "row broadcast: {:?} onto {:?}",
                rv.shape(),
                xv.shape()
            )));
        }
        let mut y = xv.clone();
        for r in 0..y.rows() {
            let dst = y.row_mut(r);
            for (v, &b) in dst.iter_mut().zip(rv.row(0)) {
                *v += b;
            }
        }
        Ok(self.push(Op::AddRowBroadcast { x, row }, y))
    }

    pub fn concat_cols(&mut self, xs: &[ValueId]) -> Result<ValueId, NnError> {
        let n = self.value(xs[0]).rows();
        let mut total = 0;
        for &id in xs {
            let v = self.value(id);
            if v.rows() != n {
                return Err(NnError::ShapeMismatch(
                    "concat: differing row counts".into(),
                ));
            }
            total += v.cols();
        }
        let mut y = Tensor2D::zeros(n, total);
        for r in 0..n {
            let mut at = 0;
            for &id in xs {
                let v = &self.nodes[id.0].value;
                let c = v.cols();
                y.row_mut(r)[at..at + c].copy_from_slice(v.row(r));
                at += c;
            }
        }
        Ok(self.push(Op::ConcatCols { xs: xs.to_vec() }, y))
    }

    pub fn gather_rows(&mut self, x: ValueId, idx: &[usize]) -> Result<ValueId, NnError> {
        let xv = self.value(x);
        if idx.iter().any(|&i| i >= xv.rows()) {
            return Err(NnError::ShapeMismatch("gather: index out of range".into()));
        }
        let mut y = Tensor2D::zeros(idx.len(), xv.cols());
        for (r, &i) in idx.iter().enumerate() {
            let src = xv.row(i).to_vec();
            y.row_mut(r).copy_from_slice(&src);
        }
        Ok(self.push(
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            y,
        ))
    }

    /// Mean over rows grouped by `seg[r]` into `out_rows` output rows. Output
    /// rows that receive no input rows stay zero.
    pub fn segment_mean_rows(
        &mut self,
        x: ValueId,
        seg: &[usize],
        out_rows: usize,
    ) -> Result<ValueId, NnError> {
        let xv = self.value(x);
        if seg.len() != xv.rows() {
            return Err(NnError::ShapeMismatch(
                "segment mean: one target per row required".into(),
            ));
        }
        if seg.iter().any(|&i| i >= out_rows) {
            return Err(NnError::ShapeMismatch(
                "segment mean: target out of range".into(),
            ));
        }
        let mut counts = vec![0usize; out_rows];
        for &s in seg {
            counts[s] += 1;
        }
        let mut y = Tensor2D::zeros(out_rows, xv.cols());
        for (r, &s) in seg.iter().enumerate() {
            let src = xv.row(r).to_vec();
            let dst = y.row_mut(s);
            for (d, v) in dst.iter_mut().zip(src) {
                *d += v;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            if c > 1 {
                for v in y.row_mut(i) {
                    *v /= c as Real;
                }
            }
        }
        Ok(self.push(
            Op::SegmentMeanRows {
                x,
                seg: seg.to_vec(),
                counts,
            },
            y,
        ))
    }

    pub fn softmax_pool_rows(&mut self, x: ValueId) -> ValueId {
        let xv = self.value(x);
        let probs = softmax_rows(xv);
        let mut y = Tensor2D::zeros(1, xv.cols());
        for d in 0..xv.cols() {
            let mut acc = 0.0;
            for r in 0..xv.rows() {
                acc += probs.get(r, d) * xv.get(r, d);
            }
            y.set(0, d, acc);
        }
        self.push(Op::SoftmaxPoolRows { x }, y)
    }

    pub fn max_rows(&mut self, x: ValueId) -> ValueId {
        let xv = self.value(x);
        let (n, c) = xv.shape();
        let mut argmax = vec![0usize; c];
        let mut y = Tensor2D::zeros(1, c);
        for d in 0..c {
            let mut best = xv.get(0, d);
            let mut best_r = 0;
            for r in 1..n {
                let v = xv.get(r, d);
                if v > best {
                    best = v;
                    best_r = r;
                }
            }
            argmax[d] = best_r;
            y.set(0, d, best);
        }
        self.push(Op::MaxRows { x, argmax }, y)
    }

    pub fn mean_rows(&mut self, x: ValueId) -> ValueId {
        let xv = self.value(x);
        let (n, c) = xv.shape();
        let mut y = Tensor2D::zeros(1, c);
        for r in 0..n {
            let src = xv.row(r);
            for (d, &v) in src.iter().enumerate() {
                y.set(0, d, y.get(0, d) + v);
            }
        }
        for v in y.data_mut() {
            *v /= n as Real;
        }
        self.push(Op::MeanRows { x }, y)
    }

    pub fn repeat_rows(&mut self, x: ValueId, n: usize) -> Result<ValueId, NnError> {
        let xv = self.value(x);
        if xv.rows() != 1 {
            return Err(NnError::ShapeMismatch("repeat_rows: need 1 row".into()));
        }
        let mut y = Tensor2D::zeros(n, xv.cols());
        let src = xv.row(0).to_vec();
        for r in 0..n {
            y.row_mut(r).copy_from_slice(&src);
        }
        Ok(self.push(Op::RepeatRows { x }, y))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, NnError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(NnError::ShapeMismatch(format!(
                "mul: {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut y = av.clone();
        for (v, &b) in y.data_mut().iter_mut().zip(bv.data()) {
            *v *= b;
        }
        Ok(self.push(Op::Mul { a, b }, y))
    }

    fn check_version(&self, params: &Params) -> Result<(), NnError> {
        if params.version() != self.params_version {
            return Err(NnError::StaleTape);
        }
        Ok(())
    }

    /// Reverse pass from `output`, seeded with `upstream`. Returns parameter
    /// gradients (flat, aligned with `params`) and per-value gradients.
    pub fn backward(
        &self,
        params: &Params,
        output: ValueId,
        upstream: Tensor2D,
    ) -> Result<Gradients, NnError> {
        let mut grads = Gradients::zeros(params.len());
        self.backward_into(params, output, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Reverse pass that ACCUMULATES parameter gradients into an existing
    /// buffer, so per-sample and per-task gradients can be summed without
    /// reallocating. Value gradients are reset each call.
    pub fn backward_into(
        &self,
        params: &Params,
        output: ValueId,
        upstream: Tensor2D,
        grads: &mut Gradients,
    ) -> Result<(), NnError> {
        self.check_version(params)?;
        if upstream.shape() != self.value(output).shape() {
            return Err(NnError::ShapeMismatch(format!(
                "backward seed {:?} vs output {:?}",
                upstream.shape(),
                self.value(output).shape()
            )));
        }
        if grads.params.len() != params.len() {
            return Err(NnError::ShapeMismatch(format!(
                "gradient buffer holds {} params, model has {}",
                grads.params.len(),
                params.len()
            )));
        }
        grads.node_grads.clear();
        grads
            .node_grads
            .resize_with(self.nodes.len(), || None);
        grads.node_grads[output.0] = Some(upstream);

        for i in (0..self.nodes.len()).rev() {
            let gy = match grads.node_grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            // Reattach so leaf/input gradients stay readable afterwards.
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Linear { x, layer } => {
                    let y = &node.value;
                    // Undo fused ReLU first: zero where the output was clipped.
                    let gy_pre = if layer.activation == Activation::Relu {
                        let mut g = gy.clone();
                        for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                            if yv <= 0.0 {
                                *gv = 0.0;
                            }
                        }
                        g
                    } else {
                        gy.clone()
                    };
                    let w = params.tensor(layer.weight);
                    let xv = &self.nodes[x.0].value;
                    // dX = dY·W ; dW = dYᵀ·X ; db = column sums of dY
                    let dx = gy_pre.matmul(&w);
                    let dw = gy_pre.matmul_transa(xv);
                    let we = params.entry(layer.weight);
                    for (slot, g) in grads.params[we.offset..we.offset + dw.data().len()]
                        .iter_mut()
                        .zip(dw.data())
                    {
                        *slot += g;
                    }
                    let be = params.entry(layer.bias);
                    let db = gy_pre.column_sums();
                    for (slot, g) in grads.params[be.offset..be.offset + db.data().len()]
                        .iter_mut()
                        .zip(db.data())
                    {
                        *slot += g;
                    }
                    accumulate(&mut grads.node_grads[x.0], dx);
                }
                Op::Relu { x } => {
                    let mut g = gy.clone();
                    for (gv, &yv) in g.data_mut().iter_mut().zip(node.value.data()) {
                        if yv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    accumulate(&mut grads.node_grads[x.0], g);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads.node_grads[a.0], gy.clone());
                    accumulate(&mut grads.node_grads[b.0], gy.clone());
                }
                Op::AddRowBroadcast { x, row } => {
                    accumulate(&mut grads.node_grads[row.0], gy.column_sums());
                    accumulate(&mut grads.node_grads[x.0], gy.clone());
                }
                Op::ConcatCols { xs } => {
                    let mut at = 0;
                    for &id in xs {
                        let v = &self.nodes[id.0].value;
                        let c = v.cols();
                        let mut g = Tensor2D::zeros(v.rows(), c);
                        for r in 0..v.rows() {
                            g.row_mut(r).copy_from_slice(&gy.row(r)[at..at + c]);
                        }
                        accumulate(&mut grads.node_grads[id.0], g);
                        at += c;
                    }
                }
                Op::GatherRows { x, idx } => {
                    let xv = &self.nodes[x.0].value;
                    let mut g = Tensor2D::zeros(xv.rows(), xv.cols());
                    for (r, &i) in idx.iter().enumerate() {
                        let dst = g.row_mut(i);
                        for (d, &v) in dst.iter_mut().zip(gy.row(r)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads.node_grads[x.0], g);
                }
                Op::SegmentMeanRows { x, seg, counts } => {
                    let xv = &self.nodes[x.0].value;
                    let mut g = Tensor2D::zeros(xv.rows(), xv.cols());
                    for (r, &s) in seg.iter().enumerate() {
                        let scale = 1.0 / counts[s] as Real;
                        let dst = g.row_mut(r);
                        for (d, &v) in dst.iter_mut().zip(gy.row(s)) {
                            *d = v * scale;
                        }
                    }
                    accumulate(&mut grads.node_grads[x.0], g);
                }
                Op::SoftmaxPoolRows { x } => {
                    // out_d = Σ p_i x_i with p = softmax(x[:,d]);
                    // ∂out_d/∂x_k = p_k (1 + x_k − out_d)
                    let xv = &self.nodes[x.0].value;
                    let probs = softmax_rows(xv);
                    let out = &node.value;
                    let mut g = Tensor2D::zeros(xv.rows(), xv.cols());
                    for d in 0..xv.cols() {
                        let go = gy.get(0, d);
                        let od = out.get(0, d);
                        for r in 0..xv.rows() {
                            let p = probs.get(r, d);
                            g.set(r, d, go * p * (1.0 + xv.get(r, d) - od));
                        }
                    }
                    accumulate(&mut grads.node_grads[x.0], g);
                }
                Op::MaxRows { x, argmax } => {
                    let xv = &self.nodes[x.0].value;
                    let mut g = Tensor2D::zeros(xv.rows(), xv.cols());
                    for (d, &r) in argmax.iter().enumerate() {
                        g.set(r, d, gy.get(0, d));
                    }
                    accumulate(&mut grads.node_grads[x.0], g);
                }
                Op::MeanRows { x } => {
                    let xv = &self.nodes[x.0].value;
                    let scale = 1.0 / xv.rows() as Real;
                    let mut g = Tensor2D::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        let dst = g.row_mut(r);
                        for (d, &v) in dst.iter_mut().zip(gy.row(0)) {
                            *d = v * scale;
                        }
                    }
                    accumulate(&mut grads.node_grads[x.0], g);
                }
                Op::RepeatRows { x } => {
                    accumulate(&mut grads.node_grads[x.0], gy.column_sums());
                }
                Op::Mul { a, b } => {
                    let mut ga = gy.clone();
                    for (g, &v) in ga.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
                        *g *= v;
                    }
                    let mut gb = gy.clone();
                    for (g, &v) in gb.data_mut().iter_mut().zip(self.nodes[a.0].value.data()) {
                        *g *= v;
                    }
                    accumulate(&mut grads.node_grads[a.0], ga);
                    accumulate(&mut grads.node_grads[b.0], gb);
                }
            }
            grads.node_grads[i] = Some(gy);
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Tensor2D>, g: Tensor2D) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}

/// Runs an MLP forward on a fresh tape. Returns the output value and the tape
/// for a later backward pass.
pub fn mlp_forward(
    params: &Params,
    mlp: &Mlp,
    x: &Tensor2D,
) -> Result<(Tensor2D, Tape, ValueId, ValueId), NnError> {
    let mut tape = Tape::new(params);
    let x_id = tape.input(x.clone());
    let y_id = tape.mlp(params, mlp, x_id)?;
    Ok((tape.value(y_id).clone(), tape, x_id, y_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{finite_diff_grads, max_rel_error};
    use crate::nn::params::init_layer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer_from(
        params: &mut Params,
        name: &str,
        weight_rows: &[Vec<Real>],
        bias: &[Real],
        activation: Activation,
    ) -> MlpLayer {
        let out_dim = weight_rows.len();
        let in_dim = weight_rows[0].len();
        let w = params.register(&format!("{name}.weight"), out_dim, in_dim);
        let b = params.register(&format!("{name}.bias"), 1, out_dim);
        let flat: Vec<Real> = weight_rows.iter().flatten().copied().collect();
        params.set_from(w, &flat).unwrap();
        params.set_from(b, bias).unwrap();
        MlpLayer {
            weight: w,
            bias: b,
            activation,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut params = Params::new();
        let layer = layer_from(
            &mut params,
            "id",
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[0.0, 0.0],
            Activation::None,
        );
        let x = Tensor2D::row_vector(vec![1.0, 2.0]).unwrap();
        let (y, _, _, _) = mlp_forward(&params, &Mlp::single(layer), &x).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_clips_negative_preactivation() {
        // W=[[1,1]], b=[0], x=(-3,1): pre-activation -2, relu -> 0
        let mut params = Params::new();
        let layer = layer_from(
            &mut params,
            "l",
            &[vec![1.0, 1.0]],
            &[0.0],
            Activation::Relu,
        );
        let x = Tensor2D::row_vector(vec![-3.0, 1.0]).unwrap();
        let (y, _, _, _) = mlp_forward(&params, &Mlp::single(layer), &x).unwrap();
        assert_eq!(y.data(), &[0.0]);
    }

    #[test]
    fn stacked_layers_equal_composed_calls() {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l1 = init_layer(&mut params, &mut rng, "l1", 3, 4, Activation::Relu);
        let l2 = init_layer(&mut params, &mut rng, "l2", 4, 2, Activation::None);
        let x = Tensor2D::row_vector(vec![0.3, -0.7, 1.2]).unwrap();

        let stacked = Mlp {
            layers: vec![l1, l2],
        };
        let (y_stacked, _, _, _) = mlp_forward(&params, &stacked, &x).unwrap();

        let (h, _, _, _) = mlp_forward(&params, &Mlp::single(l1), &x).unwrap();
        let (y_composed, _, _, _) = mlp_forward(&params, &Mlp::single(l2), &h).unwrap();
        assert_eq!(y_stacked.data(), y_composed.data());
    }

    #[test]
    fn square_via_elementwise_product_grad_is_two_x() {
        let params = Params::new();
        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor2D::row_vector(vec![3.0]).unwrap());
        let y = tape.mul(x, x).unwrap();
        assert_eq!(tape.value(y).data(), &[9.0]);
        let grads = tape
            .backward(&params, y, Tensor2D::row_vector(vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(grads.value_grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn zero_upstream_gives_exactly_zero_grads() {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l1 = init_layer(&mut params, &mut rng, "l1", 3, 3, Activation::Relu);
        let x = Tensor2D::row_vector(vec![0.5, -0.2, 0.9]).unwrap();
        let (_, tape, x_id, y_id) = mlp_forward(&params, &Mlp::single(l1), &x).unwrap();
        let grads = tape
            .backward(&params, y_id, Tensor2D::zeros(1, 3))
            .unwrap();
        assert!(grads.params.iter().all(|&g| g == 0.0));
        assert!(grads.value_grad(x_id).unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn stale_tape_detected_after_mutation() {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l1 = init_layer(&mut params, &mut rng, "l1", 2, 2, Activation::None);
        let x = Tensor2D::row_vector(vec![1.0, 2.0]).unwrap();
        let (_, tape, _, y_id) = mlp_forward(&params, &Mlp::single(l1), &x).unwrap();
        params.flat_mut()[0] += 1.0;
        let err = tape
            .backward(&params, y_id, Tensor2D::zeros(1, 2))
            .unwrap_err();
        assert!(matches!(err, NnError::StaleTape));
    }

    #[test]
    fn three_layer_mlp_gradients_match_finite_differences() {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let l1 = init_layer(&mut params, &mut rng, "l1", 4, 6, Activation::Relu);
        let l2 = init_layer(&mut params, &mut rng, "l2", 6, 5, Activation::Relu);
        let l3 = init_layer(&mut params, &mut rng, "l3", 5, 1, Activation::None);
        let mlp = Mlp {
            layers: vec![l1, l2, l3],
        };
        let x = Tensor2D::from_vec(2, 4, vec![0.9, -0.4, 0.3, 1.4, -1.1, 0.6, 0.2, -0.8]).unwrap();

        let loss = |p: &Params| {
            let (y, _, _, _) = mlp_forward(p, &mlp, &x).unwrap();
            y.data().iter().sum::<Real>() as f64
        };
        let (_, tape, _, y_id) = mlp_forward(&params, &mlp, &x).unwrap();
        let analytic = tape
            .backward(&params, y_id, Tensor2D::from_vec(2, 1, vec![1.0, 1.0]).unwrap())
            .unwrap();
        let numeric = finite_diff_grads(&mut params, 1e-5, loss);
        let err = max_rel_error(&analytic.params, &numeric, 1e-6);
        assert!(err < 1e-4, "max relative error {err}");
    }

    /// One network through every tape op, gradient-checked end to end.
    #[test]
    fn all_ops_network_gradients_match_finite_differences() {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let l1 = init_layer(&mut params, &mut rng, "l1", 4, 5, Activation::Relu);
        let l2 = init_layer(&mut params, &mut rng, "l2", 15, 1, Activation::None);
        let x = Tensor2D::from_vec(
            3,
            4,
            vec![
                0.8, -0.3, 1.1, 0.4, -0.9, 0.7, 0.2, -1.3, 0.5, 1.6, -0.6, 0.9,
            ],
        )
        .unwrap();

        let run = |p: &Params| -> (Real, Option<(Tape, ValueId)>) {
            let mut tape = Tape::new(p);
            let x_id = tape.input(x.clone());
            let h = tape.linear(p, l1, x_id).unwrap();
            let g = tape.gather_rows(h, &[0, 2, 1, 0]).unwrap();
            let s = tape.segment_mean_rows(g, &[0, 0, 2, 1], 3).unwrap();
            let a = tape.add(s, h).unwrap();
            let pool = tape.softmax_pool_rows(h);
            let b = tape.add_row_broadcast(a, pool).unwrap();
            let mx = tape.max_rows(b);
            let mn = tape.mean_rows(b);
            let rep = tape.repeat_rows(mn, 3).unwrap();
            let mu = tape.mul(b, rep).unwrap();
            let rl = tape.relu(mu);
            let mn2 = tape.mean_rows(rl);
            let cc = tape.concat_cols(&[pool, mx, mn2]).unwrap();
            let out = tape.linear(p, l2, cc).unwrap();
            let v = tape.value(out).get(0, 0);
            (v, Some((tape, out)))
        };

        let (_, handle) = run(&params);
        let (tape, out) = handle.unwrap();
        let analytic = tape
            .backward(&params, out, Tensor2D::row_vector(vec![1.0]).unwrap())
            .unwrap();
        let numeric = finite_diff_grads(&mut params, 1e-5, |p| run(p).0 as f64);
        let err = max_rel_error(&analytic.params, &numeric, 1e-6);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let l1 = init_layer(&mut params, &mut rng, "l1", 3, 4, Activation::Relu);
        let l2 = init_layer(&mut params, &mut rng, "l2", 4, 1, Activation::None);
        let mlp = Mlp {
            layers: vec![l1, l2],
        };
        let base = vec![0.4, -0.9, 1.3];

        let loss = |vals: &[Real]| {
            let x = Tensor2D::row_vector(vals.to_vec()).unwrap();
            let (y, _, _, _) = mlp_forward(&params, &mlp, &x).unwrap();
            y.get(0, 0) as f64
        };

        let x = Tensor2D::row_vector(base.clone()).unwrap();
        let (_, tape, x_id, y_id) = mlp_forward(&params, &mlp, &x).unwrap();
        let grads = tape
            .backward(&params, y_id, Tensor2D::row_vector(vec![1.0]).unwrap())
            .unwrap();
        let analytic = grads.value_grad(x_id).unwrap();

        for i in 0..base.len() {
            let mut up = base.clone();
            let mut down = base.clone();
            up[i] += 1e-5;
            down[i] -= 1e-5;
            let numeric = (loss(&up) - loss(&down)) / 2e-5;
            let a = analytic.get(0, i) as f64;
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            assert!(
                (a - numeric).abs() / denom < 1e-4,
                "input grad {i}: analytic {a}, numeric {numeric}"
            );
        }
    }

    #[test]
    fn segment_mean_handles_empty_segments() {
        let params = Params::new();
        let mut tape = Tape::new(&params);
        let x = tape.input(
            Tensor2D::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        );
        // Both rows map to segment 0; segment 1 stays empty (zero vector).
        let s = tape.segment_mean_rows(x, &[0, 0], 2).unwrap();
        assert_eq!(tape.value(s).row(0), &[2.0, 3.0]);
        assert_eq!(tape.value(s).row(1), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_pool_single_row_is_identity() {
        let params = Params::new();
        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor2D::row_vector(vec![2.5, -1.0, 0.3]).unwrap());
        let p = tape.softmax_pool_rows(x);
        assert_eq!(tape.value(p).data(), &[2.5, -1.0, 0.3]);
    }

    #[test]
    fn softmax_pool_closed_form_two_rows() {
        // column values (0, ln 3): weights (0.25, 0.75), pooled = 0.75·ln 3
        let params = Params::new();
        let mut tape = Tape::new(&params);
        let ln3 = (3.0 as Real).ln();
        let x = tape.input(Tensor2D::from_vec(2, 1, vec![0.0, ln3]).unwrap());
        let p = tape.softmax_pool_rows(x);
        assert!((tape.value(p).get(0, 0) - 0.75 * ln3).abs() < 1e-12);
    }
}
