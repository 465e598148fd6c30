//! Reverse-mode automatic differentiation on an eagerly evaluated tape.
//!
//! Every operation appends a node holding its forward value and enough
//! structure to push gradients back to its parents. Values are computed at
//! construction time, so a "forward pass" is simply building the graph;
//! [`Tape::backward`] then walks the nodes in reverse creation order
//! (which is a valid reverse topological order, since parents always
//! precede children).
//!
//! Backward semantics are intentionally restrictive:
//!
//! * `backward` may be called exactly once per tape; a second call is
//!   rejected with a state error rather than silently re-accumulating.
//! * Cross-entropy treats its target argument as a constant: no gradient
//!   ever flows into the target, which is how detached targets in the
//!   view-difference loss are realized.
//!
//! Probabilities are clamped to `[PROB_CLAMP_LO, 1]` inside every
//! logarithm, and the backward pass mirrors the clamp exactly (zero
//! derivative where the clamp binds) so that finite-difference checks of
//! the implemented function agree with the analytic gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower clamp applied to probabilities inside logarithms.
pub const PROB_CLAMP_LO: f64 = 1e-7;
/// Upper clamp applied to probabilities inside logarithms.
pub const PROB_CLAMP_HI: f64 = 1.0;

#[inline]
fn clamp_prob(p: f64) -> f64 {
    // f64::clamp propagates NaN, so a diverged probability still surfaces
    // as a non-finite loss instead of being silently clamped.
    p.clamp(PROB_CLAMP_LO, PROB_CLAMP_HI)
}

#[inline]
fn clamp_interior(p: f64) -> bool {
    p > PROB_CLAMP_LO && p < PROB_CLAMP_HI
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    /// Input, constant, or parameter.
    Leaf,
    /// `x · Wᵀ + b` with `x: [m×in]`, `w: [out×in]`, `b: [out]`.
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Relu {
        x: NodeId,
    },
    /// Row-wise softmax with max subtraction.
    SoftmaxRows {
        x: NodeId,
    },
    /// Contiguous row slice `[start, start+len)` of a 2-D parent.
    SliceRows {
        x: NodeId,
        start: usize,
    },
    /// Elementwise `(a + b) / 2`.
    MeanPair {
        a: NodeId,
        b: NodeId,
    },
    /// Scalar `Σ_entries −p·ln(clamp(p))`.
    EntropySum {
        p: NodeId,
    },
    /// Scalar `Σ_entries −t·ln(clamp(p))`; `target` is a constant.
    CrossEntropySum {
        target: NodeId,
        pred: NodeId,
    },
    /// Scalar `Σ_entries x`.
    SumAll {
        x: NodeId,
    },
    /// Scalar `Σ_i c_i · s_i` over scalar nodes.
    WeightedSum {
        terms: Vec<(NodeId, f64)>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// An autodiff tape: owns the nodes of one computation graph.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: None,
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers an input, constant, or parameter tensor.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Reads the value of a scalar (single-element) node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.numel(), 1);
        self.nodes[id.0].value.data()[0]
    }

    /// Gradient of the root with respect to node `id`.
    ///
    /// Errors if `backward` has not run on this tape yet.
    pub fn grad(&self, id: NodeId) -> Result<&[f64]> {
        match &self.grads {
            Some(g) => Ok(&g[id.0]),
            None => Err(Error::State("gradient requested before backward".into())),
        }
    }

    /// `x · Wᵀ + b` for a batch of row vectors.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        let (m, k) = (xt.rows(), xt.cols());
        let (out, k2) = (wt.rows(), wt.cols());
        if k != k2 || bt.numel() != out {
            return Err(Error::Shape(format!(
                "linear: x[{m}×{k}] · wᵀ[{}×{k2}] + b[{}]",
                out,
                bt.numel()
            )));
        }
        let mut data = vec![0.0; m * out];
        for r in 0..m {
            let xr = xt.row(r);
            for o in 0..out {
                let wr = wt.row(o);
                let mut s = bt.data()[o];
                for i in 0..k {
                    s += xr[i] * wr[i];
                }
                data[r * out + o] = s;
            }
        }
        let value = Tensor::new(vec![m, out], data)?;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let xt = self.value(x);
        let data: Vec<f64> = xt.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(xt.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Relu { x })
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let xt = self.value(x);
        let (m, c) = (xt.rows(), xt.cols());
        let mut data = vec![0.0; m * c];
        for r in 0..m {
            let row = xt.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for i in 0..c {
                let e = (row[i] - max).exp();
                data[r * c + i] = e;
                sum += e;
            }
            for i in 0..c {
                data[r * c + i] /= sum;
            }
        }
        let value = Tensor::new(vec![m, c], data).expect("same shape");
        self.push(value, Op::SoftmaxRows { x })
    }

    /// Rows `[start, start+len)` of a 2-D node.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xt = self.value(x);
        let (m, c) = (xt.rows(), xt.cols());
        if start + len > m || len == 0 {
            return Err(Error::Shape(format!(
                "slice_rows: [{start}, {}) out of {m} rows",
                start + len
            )));
        }
        let data = xt.data()[start * c..(start + len) * c].to_vec();
        let value = Tensor::new(vec![len, c], data)?;
        Ok(self.push(value, Op::SliceRows { x, start }))
    }

    /// Elementwise mean of two same-shape nodes.
    pub fn mean_pair(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.shape() != bt.shape() {
            return Err(Error::Shape(format!(
                "mean_pair: {:?} vs {:?}",
                at.shape(),
                bt.shape()
            )));
        }
        let data: Vec<f64> = at
            .data()
            .iter()
            .zip(bt.data())
            .map(|(x, y)| (x + y) / 2.0)
            .collect();
        let value = Tensor::new(at.shape().to_vec(), data)?;
        Ok(self.push(value, Op::MeanPair { a, b }))
    }

    /// Summed Shannon entropy (nats) over all rows of a probability batch.
    pub fn entropy_sum(&mut self, p: NodeId) -> NodeId {
        let v = self
            .value(p)
            .data()
            .iter()
            .map(|&q| -q * clamp_prob(q).ln())
            .sum();
        self.push(Tensor::scalar(v), Op::EntropySum { p })
    }

    /// Summed cross entropy (nats) of `pred` against a constant `target`.
    ///
    /// No gradient flows into `target`; this is what makes detached
    /// targets detached.
    pub fn cross_entropy_sum(&mut self, target: NodeId, pred: NodeId) -> Result<NodeId> {
        let (tt, pt) = (self.value(target), self.value(pred));
        if tt.shape() != pt.shape() {
            return Err(Error::Shape(format!(
                "cross_entropy: target {:?} vs pred {:?}",
                tt.shape(),
                pt.shape()
            )));
        }
        let v = tt
            .data()
            .iter()
            .zip(pt.data())
            .map(|(&t, &p)| -t * clamp_prob(p).ln())
            .sum();
        Ok(self.push(Tensor::scalar(v), Op::CrossEntropySum { target, pred }))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(v), Op::SumAll { x })
    }

    /// `Σ c_i·s_i` over scalar nodes. An empty term list yields the
    /// constant 0.
    pub fn weighted_sum(&mut self, terms: Vec<(NodeId, f64)>) -> NodeId {
        let v = terms.iter().map(|&(id, c)| c * self.scalar(id)).sum();
        self.push(Tensor::scalar(v), Op::WeightedSum { terms })
    }

    /// Runs reverse-mode accumulation from a scalar `root`.
    ///
    /// May be called once per tape; repeated calls are rejected with a
    /// state error. Building further nodes after backward is not
    /// supported.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.grads.is_some() {
            return Err(Error::State("backward already ran on this tape".into()));
        }
        if self.nodes[root.0].value.numel() != 1 {
            return Err(Error::Shape(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.numel()])
            .collect();
        grads[root.0][0] = 1.0;

        for idx in (0..self.nodes.len()).rev() {
            // Split off this node's grad so parents can be borrowed mutably.
            let g = std::mem::take(&mut grads[idx]);
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Linear { x, w, b } => {
                    let xt = &self.nodes[x.0].value;
                    let wt = &self.nodes[w.0].value;
                    let (m, k) = (xt.rows(), xt.cols());
                    let out = wt.rows();
                    // gx = G·W ; gw = Gᵀ·x ; gb = column sums of G
                    for r in 0..m {
                        let gr = &g[r * out..(r + 1) * out];
                        let xr = xt.row(r);
                        for o in 0..out {
                            let go = gr[o];
                            if go == 0.0 {
                                continue;
                            }
                            let wr = wt.row(o);
                            for i in 0..k {
                                grads[x.0][r * k + i] += go * wr[i];
                                grads[w.0][o * k + i] += go * xr[i];
                            }
                            grads[b.0][o] += go;
                        }
                    }
                }
                Op::Relu { x } => {
                    let xt = &self.nodes[x.0].value;
                    for (i, &v) in xt.data().iter().enumerate() {
                        if v > 0.0 {
                            grads[x.0][i] += g[i];
                        }
                    }
                }
                Op::SoftmaxRows { x } => {
                    let y = &node.value;
                    let (m, c) = (y.rows(), y.cols());
                    for r in 0..m {
                        let yr = y.row(r);
                        let gr = &g[r * c..(r + 1) * c];
                        let dot: f64 = yr.iter().zip(gr).map(|(yi, gi)| yi * gi).sum();
                        for i in 0..c {
                            grads[x.0][r * c + i] += yr[i] * (gr[i] - dot);
                        }
                    }
                }
                Op::SliceRows { x, start } => {
                    let c = node.value.cols();
                    let base = start * c;
                    for (i, &gi) in g.iter().enumerate() {
                        grads[x.0][base + i] += gi;
                    }
                }
                Op::MeanPair { a, b } => {
                    for (i, &gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi / 2.0;
                        grads[b.0][i] += gi / 2.0;
                    }
                }
                Op::EntropySum { p } => {
                    let gout = g[0];
                    let pt = &self.nodes[p.0].value;
                    for (i, &q) in pt.data().iter().enumerate() {
                        let interior = if clamp_interior(q) { 1.0 } else { 0.0 };
                        grads[p.0][i] += gout * (-clamp_prob(q).ln() - interior);
                    }
                }
                Op::CrossEntropySum { target, pred } => {
                    let gout = g[0];
                    let tt = &self.nodes[target.0].value;
                    let pt = &self.nodes[pred.0].value;
                    for (i, (&t, &p)) in tt.data().iter().zip(pt.data()).enumerate() {
                        if clamp_interior(p) {
                            grads[pred.0][i] += gout * (-t / p);
                        }
                    }
                }
                Op::SumAll { x } => {
                    let gout = g[0];
                    for gi in grads[x.0].iter_mut() {
                        *gi += gout;
                    }
                }
                Op::WeightedSum { terms } => {
                    let gout = g[0];
                    for &(id, c) in terms {
                        grads[id.0][0] += gout * c;
                    }
                }
            }
            grads[idx] = g;
        }
        self.grads = Some(grads);
        Ok(())
    }
}
