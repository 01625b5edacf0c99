//! Small dense classifiers with reverse-mode input gradients.
//!
//! Networks are stacks of fully connected layers with ReLU or identity
//! activations, computed in f64 throughout. The forward pass caches every
//! layer input and pre-activation, which is all reverse mode needs for this
//! architecture: the backward sweep masks ReLU units by the sign of their
//! cached pre-activation and multiplies by transposed weights. There is no
//! general tape.
//!
//! Parameters live in f64 in memory but are stored as f32 on disk (see
//! [`io`]); [`train::train`] rounds its result to f32 precision so that a
//! trained model round-trips bit-exactly through a file.

pub mod io;
pub mod train;

pub use io::{load_model, save_model, MODEL_MAGIC};
pub use train::{accuracy, train, Architecture, TrainParams};

use crate::{Error, Result};

/// Activation applied element-wise after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// max(z, 0). A unit whose pre-activation is exactly zero propagates a
    /// zero gradient.
    Relu,
    /// Pass-through; used for the logit layer.
    Identity,
}

/// One fully connected layer: `activation(W a + b)` with `W` stored row-major
/// (`out_dim` rows of `in_dim` entries).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
    in_dim: usize,
    out_dim: usize,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Dimension(format!(
                "layer dims must be positive, got {in_dim}x{out_dim}"
            )));
        }
        if weights.len() != in_dim * out_dim {
            return Err(Error::Dimension(format!(
                "weight block holds {} entries, layer {}x{} needs {}",
                weights.len(),
                in_dim,
                out_dim,
                in_dim * out_dim
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::Dimension(format!(
                "bias holds {} entries, layer emits {}",
                bias.len(),
                out_dim
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("layer parameters must be finite".into()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
            in_dim,
            out_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn affine(&self, input: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.weights[i * self.in_dim..(i + 1) * self.in_dim];
            *o += row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
        }
        out
    }
}

/// A validated classifier: layer dimensions chain, and the final layer emits
/// at least two logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<DenseLayer>,
    input_dim: usize,
    num_classes: usize,
}

impl ModelParams {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("model needs at least one layer".into()))?;
        let input_dim = first.in_dim;
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Dimension(format!(
                    "layer emits {} values but the next expects {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        let num_classes = layers.last().unwrap().out_dim;
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "classifier needs >= 2 classes, final layer emits {num_classes}"
            )));
        }
        Ok(ModelParams {
            layers,
            input_dim,
            num_classes,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }
}

/// Cached forward pass: the input to each layer, each layer's pre-activation,
/// and the final logits. Everything the backward sweep needs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `inputs[l]` is the activation vector entering layer `l`; `inputs[0]`
    /// is the network input itself.
    pub(crate) inputs: Vec<Vec<f64>>,
    /// `pre[l]` is layer `l`'s affine output before its activation.
    pub(crate) pre: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

/// Runs the network on `x` and caches the intermediate state.
pub fn forward(model: &ModelParams, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != model.input_dim {
        return Err(Error::Dimension(format!(
            "input has {} coordinates, model expects {}",
            x.len(),
            model.input_dim
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("input coordinates must be finite".into()));
    }
    let mut inputs = Vec::with_capacity(model.layers.len());
    let mut pre = Vec::with_capacity(model.layers.len());
    let mut a = x.to_vec();
    for layer in &model.layers {
        let z = layer.affine(&a);
        inputs.push(a);
        a = match layer.activation {
            Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Identity => z.clone(),
        };
        pre.push(z);
    }
    Ok(ForwardTrace {
        inputs,
        pre,
        logits: a,
    })
}

/// Pulls the seed (a cotangent over the logits) back to the input:
/// returns d(seed . logits)/dx using the cached trace.
pub fn gradient(model: &ModelParams, trace: &ForwardTrace, seed: &[f64]) -> Result<Vec<f64>> {
    if seed.len() != model.num_classes {
        return Err(Error::Dimension(format!(
            "seed has {} entries, model emits {} logits",
            seed.len(),
            model.num_classes
        )));
    }
    if trace.pre.len() != model.layers.len() {
        return Err(Error::Dimension(
            "trace does not match the model's layer count".into(),
        ));
    }
    let mut g = seed.to_vec();
    for (layer, z) in model.layers.iter().zip(&trace.pre).rev() {
        if layer.activation == Activation::Relu {
            for (gi, &zi) in g.iter_mut().zip(z) {
                if zi <= 0.0 {
                    *gi = 0.0;
                }
            }
        }
        let mut prev = vec![0.0; layer.in_dim];
        for (i, &gi) in g.iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            let row = &layer.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
            for (p, &w) in prev.iter_mut().zip(row) {
                *p += gi * w;
            }
        }
        g = prev;
    }
    Ok(g)
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicted class for `x`.
pub fn predict(model: &ModelParams, x: &[f64]) -> Result<usize> {
    Ok(argmax(forward(model, x)?.logits()))
}
