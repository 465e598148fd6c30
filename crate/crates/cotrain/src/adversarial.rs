//! Fast-gradient-sign adversarial examples and cross-view transfer
//! diagnostics.
//!
//! `fgsm` is the generative method that manufactures inputs on which a
//! view is likely to be wrong: one signed gradient step of size epsilon,
//! clipped back into the dataset's feature range. `transfer_rate` measures
//! how often one view's adversarial examples flip another view's
//! prediction — the raw signal behind collapse detection.

use crate::error::{Error, Result};
use crate::losses::one_hot;
use crate::model::ViewModel;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// A batch of adversarial inputs, tagged with the generator metadata.
#[derive(Debug, Clone)]
pub struct AdvBatch {
    pub x_adv: Tensor,
    /// Index of the view the examples were generated against, when the
    /// caller tracks one.
    pub source_view: Option<usize>,
    pub epsilon: f64,
}

/// Sign with `sign(0) = 0`, unlike `f64::signum` which maps ±0 to ±1.
#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Generates FGSM examples against `model`:
/// `x_adv = clip(x + ε·sign(∇_x H(target, p(x))), feature_range)`.
///
/// `labels` supplies the cross-entropy target per row; rows with `None`
/// use the model's own argmax prediction, the standard label-free choice.
/// The model's parameters are never mutated, and no gradient survives
/// through the generated examples — callers receive plain constants.
pub fn fgsm(
    model: &ViewModel,
    x: &Tensor,
    labels: &[Option<usize>],
    epsilon: f64,
    feature_range: (f64, f64),
) -> Result<AdvBatch> {
    if epsilon < 0.0 {
        return Err(Error::Config(format!(
            "fgsm epsilon must be >= 0, got {epsilon}"
        )));
    }
    if labels.len() != x.rows() {
        return Err(Error::Shape(format!(
            "fgsm: {} labels for {} rows",
            labels.len(),
            x.rows()
        )));
    }

    let mut tape = Tape::new();
    let input = tape.leaf(x.clone());
    let handles = model.forward_on(&mut tape, input)?;
    let probs = tape.value(handles.probs);
    let classes = probs.cols();
    let argmax = probs.argmax_rows();
    let targets: Vec<usize> = labels
        .iter()
        .zip(&argmax)
        .map(|(lab, &am)| lab.unwrap_or(am))
        .collect();
    let target = tape.leaf(one_hot(&targets, classes)?);
    let loss = tape.cross_entropy_sum(target, handles.probs)?;
    tape.backward(loss)?;
    let grad = tape.grad(input)?;

    let (lo, hi) = feature_range;
    let data: Vec<f64> = x
        .data()
        .iter()
        .zip(grad)
        .map(|(&xi, &gi)| (xi + epsilon * sign(gi)).clamp(lo, hi))
        .collect();
    Ok(AdvBatch {
        x_adv: Tensor::new(x.shape().to_vec(), data)?,
        source_view: None,
        epsilon,
    })
}

/// Fraction of rows where FGSM examples generated against `attacker`
/// change `victim`'s argmax relative to its prediction on clean inputs.
pub fn transfer_rate(
    attacker: &ViewModel,
    victim: &ViewModel,
    x: &Tensor,
    epsilon: f64,
    feature_range: (f64, f64),
) -> Result<f64> {
    if attacker.input_dim() != victim.input_dim() || attacker.num_classes() != victim.num_classes()
    {
        return Err(Error::Shape(
            "transfer_rate: attacker and victim dimensions differ".into(),
        ));
    }
    let labels = vec![None; x.rows()];
    let adv = fgsm(attacker, x, &labels, epsilon, feature_range)?;
    let clean = victim.forward(x)?.argmax_rows();
    let attacked = victim.forward(&adv.x_adv)?.argmax_rows();
    let flipped = clean.iter().zip(&attacked).filter(|(a, b)| a != b).count();
    Ok(flipped as f64 / x.rows() as f64)
}
