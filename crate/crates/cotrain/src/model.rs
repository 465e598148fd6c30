//! MLP view models: a representation stack followed by a linear classifier,
//! trained with momentum SGD.
//!
//! Each view is `p(x) = softmax(f(v(x)))` where `v` is a ReLU MLP and `f`
//! the final linear layer. Distinct seeds give distinct initializations,
//! which is what makes two views two views.

use rand::distributions::{Distribution, Uniform};
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Activation applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone)]
pub struct Layer {
    /// `[out × in]`, row-major.
    pub weight: Tensor,
    /// `[out]`.
    pub bias: Tensor,
    pub activation: Activation,
}

/// One co-training view: ReLU MLP representation plus a linear classifier,
/// ending in a row-wise softmax.
#[derive(Debug, Clone)]
pub struct ViewModel {
    layers: Vec<Layer>,
    rng_seed: u64,
}

/// Node handles from one graph forward pass of a view.
///
/// `params` pairs up with the model's layers (weight node, bias node) so
/// gradients can be routed back to the owning tensors after backward.
pub struct ForwardHandles {
    pub input: NodeId,
    pub probs: NodeId,
    pub params: Vec<(NodeId, NodeId)>,
}

/// Builds a view with the given layer widths.
///
/// `layer_dims` lists every width including input and output, so it needs
/// at least two entries. Weights are drawn uniformly from `[-a, a]` with
/// `a = sqrt(6 / (fan_in + fan_out))`; biases start at zero. All layers
/// use ReLU except the final classifier, which is identity into softmax.
pub fn init_view(layer_dims: &[usize], seed: u64) -> Result<ViewModel> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(format!(
            "layer_dims needs at least input and output widths, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Config(format!(
            "layer_dims must be positive, got {layer_dims:?}"
        )));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(layer_dims.len() - 1);
    for w in layer_dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a);
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| dist.sample(&mut rng))
            .collect();
        layers.push(Layer {
            weight: Tensor::new(vec![fan_out, fan_in], data)?,
            bias: Tensor::zeros(vec![fan_out]),
            activation: Activation::Relu,
        });
    }
    layers.last_mut().expect("at least one layer").activation = Activation::Identity;
    Ok(ViewModel {
        layers,
        rng_seed: seed,
    })
}

impl ViewModel {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    /// Output dimension of the classifier (number of classes).
    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").weight.rows()
    }

    /// Widths including input and output, inverse of `init_view`'s argument.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weight.rows()));
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.numel() + l.bias.numel())
            .sum()
    }

    /// Builds this view's forward pass on `tape`, returning class
    /// probabilities (softmax rows) and the parameter node handles.
    pub fn forward_on(&self, tape: &mut Tape, input: NodeId) -> Result<ForwardHandles> {
        if tape.value(input).cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                tape.value(input).cols(),
                self.input_dim()
            )));
        }
        let mut params = Vec::with_capacity(self.layers.len());
        let mut h = input;
        for layer in &self.layers {
            let w = tape.leaf(layer.weight.clone());
            let b = tape.leaf(layer.bias.clone());
            h = tape.linear(h, w, b)?;
            if layer.activation == Activation::Relu {
                h = tape.relu(h);
            }
            params.push((w, b));
        }
        let probs = tape.softmax_rows(h);
        Ok(ForwardHandles {
            input,
            probs,
            params,
        })
    }

    /// Plain inference: probabilities for a batch, no gradients retained.
    ///
    /// Runs through the same tape ops as training so the numbers are
    /// bit-identical to what the training path sees.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let input = tape.leaf(x.clone());
        let handles = self.forward_on(&mut tape, input)?;
        Ok(tape.value(handles.probs).clone())
    }

    /// Adds `tape`'s gradients for one forward pass into the parameter
    /// tensors' grad buffers. Call once per [`ForwardHandles`] when a view
    /// appears several times in one graph.
    pub fn accumulate_grads(&mut self, tape: &Tape, handles: &ForwardHandles) -> Result<()> {
        for (layer, &(w, b)) in self.layers.iter_mut().zip(&handles.params) {
            layer.weight.accumulate_grad(tape.grad(w)?);
            layer.bias.accumulate_grad(tape.grad(b)?);
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for layer in &mut self.layers {
            layer.weight.clear_grad();
            layer.bias.clear_grad();
        }
    }

    /// Bitwise parameter equality.
    pub fn params_bits_eq(&self, other: &ViewModel) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.bits_eq(&b.weight) && a.bias.bits_eq(&b.bias))
    }

    /// Flat parameter buffer in layer order (weights then bias per layer).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    /// Overwrites parameters from a flat buffer laid out as `flat_params`.
    pub fn load_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut pos = 0;
        for l in &mut self.layers {
            let wn = l.weight.numel();
            l.weight.data_mut().copy_from_slice(&flat[pos..pos + wn]);
            pos += wn;
            let bn = l.bias.numel();
            l.bias.data_mut().copy_from_slice(&flat[pos..pos + bn]);
            pos += bn;
        }
        Ok(())
    }
}

/// Momentum-SGD state: one velocity buffer per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    velocities: Vec<(Vec<f64>, Vec<f64>)>,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(model: &ViewModel, momentum: f64, weight_decay: f64) -> Self {
        let velocities = model
            .layers()
            .iter()
            .map(|l| (vec![0.0; l.weight.numel()], vec![0.0; l.bias.numel()]))
            .collect();
        Self {
            velocities,
            momentum,
            weight_decay,
        }
    }
}

/// One classic-momentum SGD step:
/// `v ← momentum·v + (grad + weight_decay·θ)` then `θ ← θ − lr·v`.
///
/// Weight decay applies to weights and biases alike. Gradients must be
/// populated (state error otherwise) and are cleared after the step.
pub fn sgd_step(model: &mut ViewModel, opt: &mut OptimizerState, lr: f64) -> Result<()> {
    for (layer, (vw, vb)) in model.layers_mut().iter_mut().zip(&mut opt.velocities) {
        for (tensor, vel) in [(&mut layer.weight, vw), (&mut layer.bias, vb)] {
            let grad = tensor
                .grad()
                .ok_or_else(|| Error::State("sgd_step without gradients".into()))?
                .to_vec();
            let theta = tensor.data_mut();
            for i in 0..theta.len() {
                vel[i] = opt.momentum * vel[i] + (grad[i] + opt.weight_decay * theta[i]);
                theta[i] -= lr * vel[i];
            }
            tensor.clear_grad();
        }
    }
    Ok(())
}
