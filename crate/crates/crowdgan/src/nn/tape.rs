//! Reverse-mode gradient tape.
//!
//! Graphs are built eagerly: every op computes its value as it is recorded,
//! so a tape doubles as the inference path (build, read values, drop).
//! `backward` walks the recorded nodes in reverse and accumulates exact
//! gradients of one scalar node with respect to every parameter leaf.
//!
//! The op set is exactly what the forecasting pipeline needs. Each backward
//! rule is covered by finite-difference tests in `gradcheck`.

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    /// Constant input; no gradient flows out.
    Const,
    /// Parameter leaf; gradients are reported under its [`ParamId`].
    Param(ParamId),
    /// Identity forward, zero backward.
    Detach { x: NodeId },
    /// y = W x + b.
    Affine { w: NodeId, x: NodeId, b: NodeId },
    /// Fused gated recurrent step. `state` holds `[h; c]`, the node value is
    /// `[h'; c']`, and the cached gate activations `[i f g o]` drive the
    /// backward pass.
    LstmStep {
        wx: NodeId,
        wh: NodeId,
        bias: NodeId,
        x: NodeId,
        state: NodeId,
        gates: Vec<f64>,
    },
    Slice { x: NodeId, offset: usize, len: usize },
    Concat { parts: Vec<NodeId> },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    /// ln(1 + e^x), computed overflow-free.
    Softplus { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    AddN { xs: Vec<NodeId> },
    /// Max-subtracted softmax over a vector.
    Softmax { x: NodeId },
    /// Σ_j weights[j] · vectors[j]; gradients flow into both.
    WeightedSum { weights: NodeId, vectors: Vec<NodeId> },
    /// Σ_j coeffs[j] · vectors[j] with constant coefficients.
    ScaledSum { coeffs: Vec<f64>, vectors: Vec<NodeId> },
    /// Scalar dot product of two equal-length vectors.
    Dot { a: NodeId, b: NodeId },
    /// Scalar sum of all entries.
    Sum { x: NodeId },
    /// Scalar mean of |entry| over the concatenation of all inputs.
    MeanAbs { xs: Vec<NodeId> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only computation graph; node order is a topological order.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: Vec<(ParamId, NodeId)>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Const)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    /// Register a parameter leaf; repeated calls for the same id reuse the node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&(_, node)) = self.param_nodes.iter().find(|(pid, _)| *pid == id) {
            return node;
        }
        let node = self.push(store.get(id).clone(), Op::Param(id));
        self.param_nodes.push((id, node));
        node
    }

    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).clone();
        self.push(value, Op::Detach { x })
    }

    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> NodeId {
        let wv = self.value(w);
        let xv = self.value(x);
        let bv = self.value(b);
        let mut y = wv.matvec(xv.data());
        assert_eq!(bv.len(), y.len(), "affine: bias length mismatch");
        for (yi, bi) in y.iter_mut().zip(bv.data()) {
            *yi += bi;
        }
        self.push(Tensor::vector(y), Op::Affine { w, x, b })
    }

    /// One gated recurrent step. `wx` is `[4H x in]`, `wh` is `[4H x H]`,
    /// `bias` has `4H` entries in gate order `[input, forget, candidate,
    /// output]`, and `state` is the `[h; c]` vector from the previous step.
    /// Returns the `[h'; c']` node; use [`Tape::slice`] to split it.
    pub fn lstm_step(
        &mut self,
        wx: NodeId,
        wh: NodeId,
        bias: NodeId,
        x: NodeId,
        state: NodeId,
    ) -> NodeId {
        let hidden = self.value(state).len() / 2;
        assert_eq!(self.value(state).len(), 2 * hidden);
        assert_eq!(self.value(wx).rows(), 4 * hidden, "lstm: wx rows");
        assert_eq!(self.value(wh).rows(), 4 * hidden, "lstm: wh rows");
        assert_eq!(self.value(wh).cols(), hidden, "lstm: wh cols");
        assert_eq!(self.value(bias).len(), 4 * hidden, "lstm: bias len");
        assert_eq!(self.value(wx).cols(), self.value(x).len(), "lstm: input dim");

        let (h_prev, c_prev) = self.value(state).data().split_at(hidden);
        let mut pre = self.value(wx).matvec(self.value(x).data());
        let from_h = self.value(wh).matvec(h_prev);
        for ((p, hh), b) in pre.iter_mut().zip(&from_h).zip(self.value(bias).data()) {
            *p += hh + b;
        }
        let mut gates = vec![0.0; 4 * hidden];
        for k in 0..hidden {
            gates[k] = sigmoid(pre[k]); // input
            gates[hidden + k] = sigmoid(pre[hidden + k]); // forget
            gates[2 * hidden + k] = pre[2 * hidden + k].tanh(); // candidate
            gates[3 * hidden + k] = sigmoid(pre[3 * hidden + k]); // output
        }
        let mut out = vec![0.0; 2 * hidden];
        for k in 0..hidden {
            let c_new = gates[hidden + k] * c_prev[k] + gates[k] * gates[2 * hidden + k];
            out[hidden + k] = c_new;
            out[k] = gates[3 * hidden + k] * c_new.tanh();
        }
        self.push(
            Tensor::vector(out),
            Op::LstmStep {
                wx,
                wh,
                bias,
                x,
                state,
                gates,
            },
        )
    }

    pub fn slice(&mut self, x: NodeId, offset: usize, len: usize) -> NodeId {
        let v = self.value(x);
        assert!(offset + len <= v.len(), "slice out of range");
        let value = Tensor::vector(v.data()[offset..offset + len].to_vec());
        self.push(value, Op::Slice { x, offset, len })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        self.push(Tensor::vector(data), Op::Concat { parts: parts.to_vec() })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::vector(self.value(x).data().iter().map(|v| v.tanh()).collect());
        self.push(value, Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::vector(self.value(x).data().iter().copied().map(sigmoid).collect());
        self.push(value, Op::Sigmoid { x })
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::vector(self.value(x).data().iter().copied().map(softplus).collect());
        self.push(value, Op::Softplus { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.zip(a, b, |x, y| x + y);
        self.push(value, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.zip(a, b, |x, y| x - y);
        self.push(value, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.zip(a, b, |x, y| x * y);
        self.push(value, Op::Mul { a, b })
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = Tensor::vector(self.value(x).data().iter().map(|v| v * c).collect());
        let value = if self.value(x).is_scalar() {
            Tensor::scalar(value.data()[0])
        } else {
            value
        };
        self.push(value, Op::Scale { x, c })
    }

    pub fn add_n(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty());
        let mut data = self.value(xs[0]).data().to_vec();
        let scalar = self.value(xs[0]).is_scalar();
        for &x in &xs[1..] {
            let v = self.value(x);
            assert_eq!(v.len(), data.len(), "add_n length mismatch");
            for (a, b) in data.iter_mut().zip(v.data()) {
                *a += b;
            }
        }
        let value = if scalar {
            Tensor::scalar(data[0])
        } else {
            Tensor::vector(data)
        };
        self.push(value, Op::AddN { xs: xs.to_vec() })
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).data();
        assert!(!v.is_empty());
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = v.iter().map(|e| (e - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let value = Tensor::vector(exps.iter().map(|e| e / sum).collect());
        self.push(value, Op::Softmax { x })
    }

    /// Σ_j weights[j] · vectors[j]; `weights` must have one entry per vector.
    pub fn weighted_sum(&mut self, weights: NodeId, vectors: &[NodeId]) -> NodeId {
        assert_eq!(self.value(weights).len(), vectors.len());
        assert!(!vectors.is_empty());
        let dim = self.value(vectors[0]).len();
        let mut out = vec![0.0; dim];
        for (j, &v) in vectors.iter().enumerate() {
            let wj = self.value(weights).data()[j];
            let vd = self.value(v).data();
            assert_eq!(vd.len(), dim);
            for (o, x) in out.iter_mut().zip(vd) {
                *o += wj * x;
            }
        }
        self.push(
            Tensor::vector(out),
            Op::WeightedSum {
                weights,
                vectors: vectors.to_vec(),
            },
        )
    }

    /// Σ_j coeffs[j] · vectors[j] with fixed scalar coefficients.
    pub fn scaled_sum(&mut self, coeffs: Vec<f64>, vectors: &[NodeId], dim: usize) -> NodeId {
        assert_eq!(coeffs.len(), vectors.len());
        let mut out = vec![0.0; dim];
        for (j, &v) in vectors.iter().enumerate() {
            let vd = self.value(v).data();
            assert_eq!(vd.len(), dim);
            let c = coeffs[j];
            for (o, x) in out.iter_mut().zip(vd) {
                *o += c * x;
            }
        }
        self.push(
            Tensor::vector(out),
            Op::ScaledSum {
                coeffs,
                vectors: vectors.to_vec(),
            },
        )
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a).data();
        let bv = self.value(b).data();
        assert_eq!(av.len(), bv.len());
        let value = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        self.push(Tensor::scalar(value), Op::Dot { a, b })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(value), Op::Sum { x })
    }

    /// Mean of |entry| over all entries of all inputs.
    pub fn mean_abs(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty());
        let total: usize = xs.iter().map(|&x| self.value(x).len()).sum();
        let sum: f64 = xs
            .iter()
            .flat_map(|&x| self.value(x).data().iter())
            .map(|v| v.abs())
            .sum();
        self.push(
            Tensor::scalar(sum / total as f64),
            Op::MeanAbs { xs: xs.to_vec() },
        )
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.len(), bv.len(), "elementwise op length mismatch");
        let data: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        if av.is_scalar() && bv.is_scalar() {
            Tensor::scalar(data[0])
        } else {
            Tensor::vector(data)
        }
    }

    /// Reverse-mode gradients of the scalar `loss` node with respect to all
    /// parameter leaves recorded on the tape.
    pub fn backward(&self, loss: NodeId, store: &ParamStore) -> Gradients {
        assert!(
            self.value(loss).is_scalar() || self.value(loss).len() == 1,
            "backward needs a scalar loss"
        );
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let g = match adj[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Const | Op::Param(_) | Op::Detach { .. } => {
                    if let Op::Param(_) = node.op {
                        adj[idx] = Some(g); // keep for extraction below
                    }
                    continue;
                }
                Op::Affine { w, x, b } => {
                    let wv = self.value(*w);
                    let xv = self.value(*x).data();
                    let gd = g.data();
                    // dW = g ⊗ x
                    {
                        let gw = self.grad_slot(&mut adj, *w);
                        let cols = wv.cols();
                        for (r, gr) in gd.iter().enumerate() {
                            if *gr == 0.0 {
                                continue;
                            }
                            let row = &mut gw.data_mut()[r * cols..(r + 1) * cols];
                            for (o, xj) in row.iter_mut().zip(xv) {
                                *o += gr * xj;
                            }
                        }
                    }
                    // dx += Wᵀ g
                    {
                        let gx = self.grad_slot(&mut adj, *x);
                        wv.matvec_transpose_acc(gd, gx.data_mut());
                    }
                    // db += g
                    {
                        let gb = self.grad_slot(&mut adj, *b);
                        for (o, gi) in gb.data_mut().iter_mut().zip(gd) {
                            *o += gi;
                        }
                    }
                }
                Op::LstmStep {
                    wx,
                    wh,
                    bias,
                    x,
                    state,
                    gates,
                } => {
                    let hidden = gates.len() / 4;
                    let (gh, gc) = g.data().split_at(hidden);
                    let state_v = self.value(*state);
                    let (h_prev, c_prev) = state_v.data().split_at(hidden);
                    let c_new = &node.value.data()[hidden..];

                    // Pre-activation gradients in gate order [i f g o].
                    let mut d_pre = vec![0.0; 4 * hidden];
                    let mut d_c_prev = vec![0.0; hidden];
                    for k in 0..hidden {
                        let i = gates[k];
                        let f = gates[hidden + k];
                        let cand = gates[2 * hidden + k];
                        let o = gates[3 * hidden + k];
                        let tc = c_new[k].tanh();
                        let d_o = gh[k] * tc;
                        let d_c = gc[k] + gh[k] * o * (1.0 - tc * tc);
                        let d_i = d_c * cand;
                        let d_f = d_c * c_prev[k];
                        let d_cand = d_c * i;
                        d_c_prev[k] = d_c * f;
                        d_pre[k] = d_i * i * (1.0 - i);
                        d_pre[hidden + k] = d_f * f * (1.0 - f);
                        d_pre[2 * hidden + k] = d_cand * (1.0 - cand * cand);
                        d_pre[3 * hidden + k] = d_o * o * (1.0 - o);
                    }

                    let wx_v = self.value(*wx);
                    let wh_v = self.value(*wh);
                    let xv = self.value(*x).data();
                    // dWx += d_pre ⊗ x, dWh += d_pre ⊗ h_prev, db += d_pre
                    {
                        let gwx = self.grad_slot(&mut adj, *wx);
                        let cols = wx_v.cols();
                        for (r, dr) in d_pre.iter().enumerate() {
                            if *dr == 0.0 {
                                continue;
                            }
                            let row = &mut gwx.data_mut()[r * cols..(r + 1) * cols];
                            for (o, xj) in row.iter_mut().zip(xv) {
                                *o += dr * xj;
                            }
                        }
                    }
                    {
                        let gwh = self.grad_slot(&mut adj, *wh);
                        let cols = wh_v.cols();
                        for (r, dr) in d_pre.iter().enumerate() {
                            if *dr == 0.0 {
                                continue;
                            }
                            let row = &mut gwh.data_mut()[r * cols..(r + 1) * cols];
                            for (o, hj) in row.iter_mut().zip(h_prev) {
                                *o += dr * hj;
                            }
                        }
                    }
                    {
                        let gb = self.grad_slot(&mut adj, *bias);
                        for (o, dr) in gb.data_mut().iter_mut().zip(&d_pre) {
                            *o += dr;
                        }
                    }
                    // dx += Wxᵀ d_pre
                    {
                        let gx = self.grad_slot(&mut adj, *x);
                        wx_v.matvec_transpose_acc(&d_pre, gx.data_mut());
                    }
                    // dstate: dh_prev += Whᵀ d_pre, dc_prev computed above
                    {
                        let gs = self.grad_slot(&mut adj, *state);
                        let (gh_prev, gc_prev) = gs.data_mut().split_at_mut(hidden);
                        let mut tmp = vec![0.0; hidden];
                        wh_v.matvec_transpose_acc(&d_pre, &mut tmp);
                        for (o, t) in gh_prev.iter_mut().zip(&tmp) {
                            *o += t;
                        }
                        for (o, d) in gc_prev.iter_mut().zip(&d_c_prev) {
                            *o += d;
                        }
                    }
                }
                Op::Slice { x, offset, len } => {
                    let gx = self.grad_slot(&mut adj, *x);
                    for (o, gi) in gx.data_mut()[*offset..*offset + *len]
                        .iter_mut()
                        .zip(g.data())
                    {
                        *o += gi;
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        let gp = self.grad_slot(&mut adj, p);
                        for (o, gi) in gp.data_mut().iter_mut().zip(&g.data()[offset..offset + len])
                        {
                            *o += gi;
                        }
                        offset += len;
                    }
                }
                Op::Tanh { x } => {
                    let y = node.value.data();
                    let gx = self.grad_slot(&mut adj, *x);
                    for ((o, gi), yi) in gx.data_mut().iter_mut().zip(g.data()).zip(y) {
                        *o += gi * (1.0 - yi * yi);
                    }
                }
                Op::Sigmoid { x } => {
                    let y = node.value.data();
                    let gx = self.grad_slot(&mut adj, *x);
                    for ((o, gi), yi) in gx.data_mut().iter_mut().zip(g.data()).zip(y) {
                        *o += gi * yi * (1.0 - yi);
                    }
                }
                Op::Softplus { x } => {
                    let xv = self.value(*x).data();
                    let gx = self.grad_slot(&mut adj, *x);
                    for ((o, gi), xi) in gx.data_mut().iter_mut().zip(g.data()).zip(xv) {
                        *o += gi * sigmoid(*xi);
                    }
                }
                Op::Add { a, b } => {
                    for &p in &[*a, *b] {
                        let gp = self.grad_slot(&mut adj, p);
                        for (o, gi) in gp.data_mut().iter_mut().zip(g.data()) {
                            *o += gi;
                        }
                    }
                }
                Op::Sub { a, b } => {
                    {
                        let ga = self.grad_slot(&mut adj, *a);
                        for (o, gi) in ga.data_mut().iter_mut().zip(g.data()) {
                            *o += gi;
                        }
                    }
                    let gb = self.grad_slot(&mut adj, *b);
                    for (o, gi) in gb.data_mut().iter_mut().zip(g.data()) {
                        *o -= gi;
                    }
                }
                Op::Mul { a, b } => {
                    let av = self.value(*a).data().to_vec();
                    let bv = self.value(*b).data().to_vec();
                    {
                        let ga = self.grad_slot(&mut adj, *a);
                        for ((o, gi), bi) in ga.data_mut().iter_mut().zip(g.data()).zip(&bv) {
                            *o += gi * bi;
                        }
                    }
                    let gb = self.grad_slot(&mut adj, *b);
                    for ((o, gi), ai) in gb.data_mut().iter_mut().zip(g.data()).zip(&av) {
                        *o += gi * ai;
                    }
                }
                Op::Scale { x, c } => {
                    let gx = self.grad_slot(&mut adj, *x);
                    for (o, gi) in gx.data_mut().iter_mut().zip(g.data()) {
                        *o += gi * c;
                    }
                }
                Op::AddN { xs } => {
                    for &p in xs {
                        let gp = self.grad_slot(&mut adj, p);
                        for (o, gi) in gp.data_mut().iter_mut().zip(g.data()) {
                            *o += gi;
                        }
                    }
                }
                Op::Softmax { x } => {
                    // dx_j = y_j (g_j - Σ_k g_k y_k)
                    let y = node.value.data();
                    let dot: f64 = y.iter().zip(g.data()).map(|(yi, gi)| yi * gi).sum();
                    let gx = self.grad_slot(&mut adj, *x);
                    for ((o, yi), gi) in gx.data_mut().iter_mut().zip(y).zip(g.data()) {
                        *o += yi * (gi - dot);
                    }
                }
                Op::WeightedSum { weights, vectors } => {
                    let wv = self.value(*weights).data().to_vec();
                    {
                        let gw = self.grad_slot(&mut adj, *weights);
                        for (j, &v) in vectors.iter().enumerate() {
                            let vd = self.value(v).data();
                            let contrib: f64 =
                                vd.iter().zip(g.data()).map(|(x, gi)| x * gi).sum();
                            gw.data_mut()[j] += contrib;
                        }
                    }
                    for (j, &v) in vectors.iter().enumerate() {
                        let gv = self.grad_slot(&mut adj, v);
                        let wj = wv[j];
                        for (o, gi) in gv.data_mut().iter_mut().zip(g.data()) {
                            *o += wj * gi;
                        }
                    }
                }
                Op::ScaledSum { coeffs, vectors } => {
                    for (j, &v) in vectors.iter().enumerate() {
                        let c = coeffs[j];
                        if c == 0.0 {
                            continue;
                        }
                        let gv = self.grad_slot(&mut adj, v);
                        for (o, gi) in gv.data_mut().iter_mut().zip(g.data()) {
                            *o += c * gi;
                        }
                    }
                }
                Op::Dot { a, b } => {
                    let gs = g.item();
                    let av = self.value(*a).data().to_vec();
                    let bv = self.value(*b).data().to_vec();
                    {
                        let ga = self.grad_slot(&mut adj, *a);
                        for (o, bi) in ga.data_mut().iter_mut().zip(&bv) {
                            *o += gs * bi;
                        }
                    }
                    let gb = self.grad_slot(&mut adj, *b);
                    for (o, ai) in gb.data_mut().iter_mut().zip(&av) {
                        *o += gs * ai;
                    }
                }
                Op::Sum { x } => {
                    let gs = g.item();
                    let gx = self.grad_slot(&mut adj, *x);
                    for o in gx.data_mut() {
                        *o += gs;
                    }
                }
                Op::MeanAbs { xs } => {
                    let total: usize = xs.iter().map(|&x| self.value(x).len()).sum();
                    let gs = g.item() / total as f64;
                    for &p in xs {
                        let xv = self.value(p).data().to_vec();
                        let gp = self.grad_slot(&mut adj, p);
                        for (o, xi) in gp.data_mut().iter_mut().zip(&xv) {
                            // Subgradient 0 at the kink.
                            *o += gs * if *xi > 0.0 {
                                1.0
                            } else if *xi < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }

        let mut grads = Gradients::zeros_like(store);
        for &(pid, node) in &self.param_nodes {
            if let Some(g) = &adj[node.0] {
                grads.accumulate(pid, g);
            }
        }
        grads
    }

    /// Borrow (allocating on first touch) the adjoint buffer of `id`.
    #[allow(clippy::mut_from_ref)]
    fn grad_slot<'a>(&self, adj: &'a mut [Option<Tensor>], id: NodeId) -> &'a mut Tensor {
        if adj[id.0].is_none() {
            adj[id.0] = Some(Tensor::zeros(self.nodes[id.0].value.shape().to_vec()));
        }
        adj[id.0].as_mut().unwrap()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow for large |x|.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut store = ParamStore::new();
        let p = store.register("p", Tensor::vector(vec![1.0, 2.0]));
        let mut tape = Tape::new();
        let _ = tape.param(&store, p);
        let loss = tape.scalar(0.0);
        let grads = tape.backward(loss, &store);
        assert!(grads.get(p).is_none());
    }

    #[test]
    fn sum_of_params_has_unit_gradient() {
        let mut store = ParamStore::new();
        let p = store.register("p", Tensor::vector(vec![1.0, -2.0, 3.0]));
        let mut tape = Tape::new();
        let pn = tape.param(&store, p);
        let loss = tape.sum(pn);
        let grads = tape.backward(loss, &store);
        assert_eq!(grads.get(p).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut store = ParamStore::new();
        let p = store.register("p", Tensor::vector(vec![1.0, 2.0]));
        let mut tape = Tape::new();
        let pn = tape.param(&store, p);
        let d = tape.detach(pn);
        let loss = tape.sum(d);
        let grads = tape.backward(loss, &store);
        assert!(grads.get(p).is_none());
        assert_eq!(tape.value(d).data(), &[1.0, 2.0]);
    }

    #[test]
    fn softmax_sums_to_one_and_saturates() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![50.0, -50.0, -50.0]));
        let s = tape.softmax(x);
        let v = tape.value(s).data();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((v[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn softmax_handles_large_logits_without_overflow() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![50.0, 49.0, 48.0]));
        let s = tape.softmax(x);
        assert!(tape.value(s).is_finite());
    }

    #[test]
    fn softplus_at_zero_is_ln2() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(700.0) - 700.0).abs() < 1e-9);
        assert!(softplus(-700.0) >= 0.0);
    }

    #[test]
    fn lstm_zero_everything_stays_zero() {
        let mut store = ParamStore::new();
        let h = 3;
        let wx = store.register("wx", Tensor::zeros(vec![4 * h, 2]));
        let wh = store.register("wh", Tensor::zeros(vec![4 * h, h]));
        let b = store.register("b", Tensor::zeros(vec![4 * h]));
        let mut tape = Tape::new();
        let wxn = tape.param(&store, wx);
        let whn = tape.param(&store, wh);
        let bn = tape.param(&store, b);
        let x = tape.constant(Tensor::vector(vec![5.0, -3.0]));
        let state = tape.constant(Tensor::zeros(vec![2 * h]));
        let out = tape.lstm_step(wxn, whn, bn, x, state);
        let hv = &tape.value(out).data()[..h];
        assert!(hv.iter().all(|v| *v == 0.0));
    }
}
