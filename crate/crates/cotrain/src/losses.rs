//! Loss terms for co-training, in natural-log units.
//!
//! Three ingredients combine into the training objective:
//!
//! * a supervised cross entropy on labeled rows,
//! * an agreement loss on unlabeled rows — the Jensen-Shannon divergence
//!   between two views' predictions (entropy of the mean minus mean of
//!   the entropies), zero iff the predictions coincide,
//! * a view-difference loss — each view's cross entropy on the *other*
//!   view's adversarial examples, against its own clean prediction as a
//!   fixed (detached) target.
//!
//! All probabilities are clamped to `[1e-7, 1]` inside logarithms, so no
//! loss can blow up on a saturated softmax. Each function exists in a
//! graph-building form (`*_graph`, used by the trainer) and a plain value
//! form that evaluates a throwaway graph, which keeps the two routes
//! numerically identical.

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Realized value of one training objective evaluation.
///
/// `l_cot` and `l_dif` are the raw loss values, not scaled by their λ
/// weights; `total` is `l_sup + λ_cot·l_cot + λ_dif·l_dif`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_sup: f64,
    pub l_cot: f64,
    pub l_dif: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.l_sup.is_finite()
            && self.l_cot.is_finite()
            && self.l_dif.is_finite()
            && self.total.is_finite()
    }
}

fn check_same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Supervised loss on graph nodes: `(Σ H(y_a, p_a) + Σ H(y_b, p_b)) / b`
/// where `b` is the supervised rows per view.
pub fn sup_loss_graph(
    tape: &mut Tape,
    y_a: NodeId,
    p_a: NodeId,
    y_b: NodeId,
    p_b: NodeId,
) -> Result<NodeId> {
    let b = tape.value(p_a).rows();
    let ce_a = tape.cross_entropy_sum(y_a, p_a)?;
    let ce_b = tape.cross_entropy_sum(y_b, p_b)?;
    let inv = 1.0 / b as f64;
    Ok(tape.weighted_sum(vec![(ce_a, inv), (ce_b, inv)]))
}

/// Agreement (Jensen-Shannon) loss on graph nodes, batch-averaged:
/// `mean_x [ H((p1+p2)/2) − (H(p1) + H(p2))/2 ]`.
///
/// Gradients flow into both prediction batches.
pub fn cot_loss_graph(tape: &mut Tape, p1: NodeId, p2: NodeId) -> Result<NodeId> {
    check_same_shape(tape.value(p1), tape.value(p2), "cot_loss")?;
    let batch = tape.value(p1).rows() as f64;
    let m = tape.mean_pair(p1, p2)?;
    let h_m = tape.entropy_sum(m);
    let h_1 = tape.entropy_sum(p1);
    let h_2 = tape.entropy_sum(p2);
    // Combine the per-view entropies with a single commutative addition so
    // cot_loss(p1, p2) == cot_loss(p2, p1) bit-exactly.
    let h_pair = tape.weighted_sum(vec![(h_1, 1.0), (h_2, 1.0)]);
    Ok(tape.weighted_sum(vec![(h_m, 1.0 / batch), (h_pair, -0.5 / batch)]))
}

/// View-difference loss on graph nodes:
/// `[Σ H(p1(x), p2(g1(x))) + Σ H(p2(x), p1(g2(x)))] / rows`.
///
/// The clean predictions `p1_x`, `p2_x` act as detached targets: the loss
/// value depends on them but no gradient flows through them from this
/// term. Gradients reach only the predictions on adversarial inputs.
pub fn dif_loss_graph(
    tape: &mut Tape,
    p1_x: NodeId,
    p1_on_g2: NodeId,
    p2_x: NodeId,
    p2_on_g1: NodeId,
) -> Result<NodeId> {
    check_same_shape(tape.value(p1_x), tape.value(p2_on_g1), "dif_loss")?;
    check_same_shape(tape.value(p2_x), tape.value(p1_on_g2), "dif_loss")?;
    check_same_shape(tape.value(p1_x), tape.value(p2_x), "dif_loss")?;
    let rows = tape.value(p1_x).rows() as f64;
    let ce_1 = tape.cross_entropy_sum(p1_x, p2_on_g1)?;
    let ce_2 = tape.cross_entropy_sum(p2_x, p1_on_g2)?;
    Ok(tape.weighted_sum(vec![(ce_1, 1.0 / rows), (ce_2, 1.0 / rows)]))
}

/// Weighted combination `l_sup + λ_cot·l_cot + λ_dif·l_dif` on graph nodes.
pub fn total_loss_graph(
    tape: &mut Tape,
    sup: NodeId,
    cot: NodeId,
    dif: NodeId,
    lambda_cot: f64,
    lambda_dif: f64,
) -> Result<NodeId> {
    check_lambdas(lambda_cot, lambda_dif)?;
    Ok(tape.weighted_sum(vec![(sup, 1.0), (cot, lambda_cot), (dif, lambda_dif)]))
}

fn check_lambdas(lambda_cot: f64, lambda_dif: f64) -> Result<()> {
    if lambda_cot < 0.0 || lambda_dif < 0.0 {
        return Err(Error::Config(format!(
            "loss weights must be nonnegative, got lambda_cot={lambda_cot}, lambda_dif={lambda_dif}"
        )));
    }
    Ok(())
}

/// Cross entropy `−Σ_c t_c · ln(clamp(p_c))` between two probability
/// vectors. The target is a constant; no gradient applies to it.
pub fn cross_entropy(target: &[f64], pred: &[f64]) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(Error::Shape(format!(
            "cross_entropy: {} vs {} classes",
            target.len(),
            pred.len()
        )));
    }
    let mut tape = Tape::new();
    let t = tape.leaf(Tensor::new(vec![1, target.len()], target.to_vec())?);
    let p = tape.leaf(Tensor::new(vec![1, pred.len()], pred.to_vec())?);
    let ce = tape.cross_entropy_sum(t, p)?;
    Ok(tape.scalar(ce))
}

/// Shannon entropy `−Σ p ln p` in nats, with `0·ln 0 := 0` via clamping.
pub fn entropy(p: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let node = tape.leaf(Tensor::new(vec![1, p.len()], p.to_vec()).expect("1-D"));
    let h = tape.entropy_sum(node);
    tape.scalar(h)
}

/// Batch-mean Jensen-Shannon divergence between two prediction batches.
pub fn cot_loss(p1: &Tensor, p2: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.leaf(p1.clone());
    let b = tape.leaf(p2.clone());
    let node = cot_loss_graph(&mut tape, a, b)?;
    Ok(tape.scalar(node))
}

/// View-difference loss value over four prediction batches.
pub fn dif_loss(p1_x: &Tensor, p1_on_g2: &Tensor, p2_x: &Tensor, p2_on_g1: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.leaf(p1_x.clone());
    let b = tape.leaf(p1_on_g2.clone());
    let c = tape.leaf(p2_x.clone());
    let d = tape.leaf(p2_on_g1.clone());
    let node = dif_loss_graph(&mut tape, a, b, c, d)?;
    Ok(tape.scalar(node))
}

/// `l_sup + λ_cot·l_cot + λ_dif·l_dif`; rejects negative weights.
pub fn total_loss(
    l_sup: f64,
    l_cot: f64,
    l_dif: f64,
    lambda_cot: f64,
    lambda_dif: f64,
) -> Result<f64> {
    check_lambdas(lambda_cot, lambda_dif)?;
    Ok(l_sup + lambda_cot * l_cot + lambda_dif * l_dif)
}

/// One-hot encodes class indices as a `[rows × classes]` tensor.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (r, &c) in labels.iter().enumerate() {
        if c >= classes {
            return Err(Error::Config(format!("label {c} outside [0, {classes})")));
        }
        data[r * classes + c] = 1.0;
    }
    Tensor::new(vec![labels.len(), classes], data)
}
