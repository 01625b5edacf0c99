//! Minibatch trainer for the dense nets.
//!
//! Plain cross-entropy SGD with seed-driven shuffling, plus optional
//! adversarial training: when an attack configuration is supplied, every
//! minibatch sample is replaced by the point that attack reaches against the
//! current parameters before the loss step. Finished parameters are rounded
//! to f32 precision so that a save/load round trip is bit-exact.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::attack::{run_attack, AttackConfig};
use crate::benchmodel::BenchModel;
use crate::diffnet::{forward, Activation, DenseLayer, ModelParams};
use crate::harness::dataset::Dataset;
use crate::{Error, Result};

/// Hidden-layer widths; input and output widths come from the data. All
/// hidden layers use ReLU, the output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.5,
        }
    }
}

impl TrainParams {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "training needs at least one epoch and a positive batch size".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Trains a classifier on the dataset. Deterministic given the seed; the
/// same call repeated yields bitwise-identical parameters.
pub fn train(
    dataset: &Dataset,
    arch: &Architecture,
    hp: &TrainParams,
    adversarial: Option<&AttackConfig>,
    seed: u64,
) -> Result<ModelParams> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    hp.validate()?;
    if let Some(cfg) = adversarial {
        cfg.validate()?;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut model = he_uniform_init(arch, dataset.dim(), dataset.num_classes(), &mut rng)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    // Counter-derived seeds keep the perturbation stream deterministic
    // without coupling it to the shuffling stream.
    let mut attack_counter: u64 = 0;

    for _epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(batch.len());
            for &i in batch {
                let (x, y) = dataset.get(i);
                let x = match adversarial {
                    Some(cfg) => {
                        let p = perturb(&model, cfg, x, y, attack_counter)?;
                        attack_counter = attack_counter.wrapping_add(1);
                        p
                    }
                    None => x.to_vec(),
                };
                inputs.push(x);
            }
            apply_batch(&mut model, batch, &inputs, dataset, hp.learning_rate)?;
        }
    }
    quantize_to_f32(&mut model);
    Ok(model)
}

/// Fraction of samples the model classifies correctly.
pub fn accuracy(model: &ModelParams, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Data("accuracy over an empty dataset".into()));
    }
    let mut hits = 0usize;
    for i in 0..dataset.len() {
        let (x, y) = dataset.get(i);
        if crate::diffnet::predict(model, x)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.len() as f64)
}

fn he_uniform_init(
    arch: &Architecture,
    input_dim: usize,
    num_classes: usize,
    rng: &mut ChaCha20Rng,
) -> Result<ModelParams> {
    let mut dims = Vec::with_capacity(arch.hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(&arch.hidden);
    dims.push(num_classes);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (idx, pair) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let limit = (6.0 / fan_in as f64).sqrt();
        let weights: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        let bias = vec![0.0; fan_out];
        let activation = if idx + 1 == dims.len() - 1 {
            Activation::Identity
        } else {
            Activation::Relu
        };
        layers.push(DenseLayer::new(fan_in, fan_out, weights, bias, activation)?);
    }
    ModelParams::new(layers)
}

/// Runs the configured attack against the current parameters and returns the
/// point it reached (its best adversarial if it found one, the final iterate
/// otherwise).
fn perturb(
    model: &ModelParams,
    cfg: &AttackConfig,
    x: &[f64],
    y: usize,
    counter: u64,
) -> Result<Vec<f64>> {
    // Generous budget: every gradient step costs two queries, and each run
    // spends a handful of extra forwards on candidate checks.
    let budget = 2 * cfg.steps + 8;
    let mut attack_cfg = cfg.clone();
    attack_cfg.seed = cfg.seed.wrapping_add(counter);
    let mut bm = BenchModel::wrap(model, budget, cfg.p, x.to_vec(), y)?;
    let outcome = run_attack(&attack_cfg, &mut bm)?;
    Ok(match bm.take_best() {
        Some(best) => best.point.clone(),
        None => outcome.final_point,
    })
}

/// Accumulates cross-entropy parameter gradients over one minibatch and
/// applies an averaged SGD step.
fn apply_batch(
    model: &mut ModelParams,
    batch: &[usize],
    inputs: &[Vec<f64>],
    dataset: &Dataset,
    learning_rate: f64,
) -> Result<()> {
    let mut grad_w: Vec<Vec<f64>> = model
        .layers
        .iter()
        .map(|l| vec![0.0; l.weights.len()])
        .collect();
    let mut grad_b: Vec<Vec<f64>> = model
        .layers
        .iter()
        .map(|l| vec![0.0; l.bias.len()])
        .collect();

    for (&i, x) in batch.iter().zip(inputs) {
        let (_, y) = dataset.get(i);
        let trace = forward(model, x)?;
        // dL/dlogits of cross-entropy: softmax minus one-hot.
        let mut err = stable_softmax(trace.logits());
        err[y] -= 1.0;
        for (l, layer) in model.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                for (e, &z) in err.iter_mut().zip(&trace.pre[l]) {
                    if z <= 0.0 {
                        *e = 0.0;
                    }
                }
            }
            let layer_input = &trace.inputs[l];
            for (r, &e) in err.iter().enumerate() {
                grad_b[l][r] += e;
                if e == 0.0 {
                    continue;
                }
                let row = &mut grad_w[l][r * layer.in_dim..(r + 1) * layer.in_dim];
                for (gw, &a) in row.iter_mut().zip(layer_input) {
                    *gw += e * a;
                }
            }
            let mut down = vec![0.0; layer.in_dim];
            for (r, &e) in err.iter().enumerate() {
                if e == 0.0 {
                    continue;
                }
                let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (d, &w) in down.iter_mut().zip(row) {
                    *d += e * w;
                }
            }
            err = down;
        }
    }

    let scale = learning_rate / batch.len() as f64;
    for (l, layer) in model.layers.iter_mut().enumerate() {
        for (w, g) in layer.weights.iter_mut().zip(&grad_w[l]) {
            *w -= scale * g;
        }
        for (b, g) in layer.bias.iter_mut().zip(&grad_b[l]) {
            *b -= scale * g;
        }
    }
    Ok(())
}

fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

fn quantize_to_f32(model: &mut ModelParams) {
    for layer in &mut model.layers {
        for w in &mut layer.weights {
            *w = f64::from(*w as f32);
        }
        for b in &mut layer.bias {
            *b = f64::from(*b as f32);
        }
    }
}
