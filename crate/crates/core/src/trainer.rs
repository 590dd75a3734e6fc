//! Local training backends.
//!
//! The aggregation protocol treats local training as a black box, so two
//! small trainers are provided: a seeded random perturbation (pure protocol
//! exercise) and a tanh MLP trained with plain mini-batch SGD on squared error.
//!
//! MLP layers are stored as `(inputs + 1) x outputs` matrices whose last row
//! is the bias, so every row is one input connection of the layer.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{LayeredModel, WeightMatrix};
use crate::seed::rng_for;

const BATCH_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainerKind {
    SeededPerturbation,
    MlpSgd,
}

impl std::str::FromStr for TrainerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seeded-perturbation" => Ok(Self::SeededPerturbation),
            "mlp-sgd" => Ok(Self::MlpSgd),
            other => Err(Error::InvalidArgument(format!(
                "unknown trainer kind `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SeededPerturbation => "seeded-perturbation",
            Self::MlpSgd => "mlp-sgd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerSpec {
    pub kind: TrainerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainerSpec {
    pub fn validate(&self) -> Result<()> {
        // A zero step is accepted: it turns either trainer into the identity.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument(
                "epochs per round must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn LocalTrainer>> {
        self.validate()?;
        Ok(match self.kind {
            TrainerKind::SeededPerturbation => Box::new(PerturbationTrainer { spec: *self }),
            TrainerKind::MlpSgd => Box::new(MlpSgdTrainer { spec: *self }),
        })
    }
}

pub trait LocalTrainer: Send + Sync {
    /// Runs one round of local training. Must be a pure function of its inputs.
    fn train(&self, model: &LayeredModel, data: &Dataset, round: u32) -> Result<LayeredModel>;
}

/// Convenience wrapper around [`TrainerSpec::build`] for single calls.
pub fn train_local(
    model: &LayeredModel,
    data: &Dataset,
    spec: &TrainerSpec,
    round: u32,
) -> Result<LayeredModel> {
    spec.build()?.train(model, data, round)
}

struct PerturbationTrainer {
    spec: TrainerSpec,
}

impl LocalTrainer for PerturbationTrainer {
    fn train(&self, model: &LayeredModel, data: &Dataset, round: u32) -> Result<LayeredModel> {
        let mut rng = rng_for(
            self.spec.seed,
            &[0x9E27, round as u64, data.partition as u64],
        );
        let lr = self.spec.learning_rate;
        let mut layers = model.layers().to_vec();
        for _ in 0..self.spec.epochs {
            layers = layers
                .iter()
                .map(|l| {
                    let values = l
                        .values()
                        .iter()
                        .map(|&v| v + lr * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    WeightMatrix::new(l.rows(), l.cols(), values)
                })
                .collect::<Result<_>>()?;
        }
        LayeredModel::new(layers)
    }
}

struct MlpSgdTrainer {
    spec: TrainerSpec,
}

impl LocalTrainer for MlpSgdTrainer {
    fn train(&self, model: &LayeredModel, data: &Dataset, round: u32) -> Result<LayeredModel> {
        let input_dim = data
            .input_dim()
            .ok_or_else(|| Error::InvalidArgument("cannot train on an empty dataset".into()))?;
        check_mlp(model, input_dim)?;

        let mut weights: Vec<Vec<f64>> =
            model.layers().iter().map(|l| l.values().to_vec()).collect();
        let shapes = model.shapes();
        let mut order: Vec<usize> = (0..data.len()).collect();

        for epoch in 0..self.spec.epochs {
            let mut rng = rng_for(
                self.spec.seed,
                &[0x5CD, round as u64, data.partition as u64, epoch as u64],
            );
            order.shuffle(&mut rng);
            for batch in order.chunks(BATCH_SIZE) {
                let mut grads: Vec<Vec<f64>> = weights.iter().map(|w| vec![0.0; w.len()]).collect();
                for &idx in batch {
                    let rec = &data.records[idx];
                    accumulate_gradient(&weights, &shapes, &rec.input, rec.target, &mut grads);
                }
                let step = self.spec.learning_rate / batch.len() as f64;
                for (w, g) in weights.iter_mut().zip(&grads) {
                    for (wi, gi) in w.iter_mut().zip(g) {
                        *wi -= step * gi;
                    }
                }
            }
        }

        let layers = weights
            .into_iter()
            .zip(shapes)
            .map(|(v, (r, c))| WeightMatrix::new(r, c, v))
            .collect::<Result<_>>()
            .map_err(|e| Error::InvalidModel(format!("training diverged: {e}")))?;
        LayeredModel::new(layers)
    }
}

/// Builds an MLP with the given layer widths, e.g. `[8, 16, 1]`.
///
/// Weights are Xavier-uniform, biases start at zero.
pub fn init_mlp(widths: &[usize], seed: u64) -> Result<LayeredModel> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::InvalidModel(format!(
            "MLP needs at least an input and an output width, all >= 1, got {widths:?}"
        )));
    }
    let mut rng = rng_for(seed, &[0x1417]);
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut values: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-limit..limit))
                .collect();
            values.extend(std::iter::repeat_n(0.0, fan_out));
            WeightMatrix::new(fan_in + 1, fan_out, values)
        })
        .collect::<Result<_>>()?;
    LayeredModel::new(layers)
}

fn check_mlp(model: &LayeredModel, input_dim: usize) -> Result<()> {
    let mut width = input_dim;
    for (i, layer) in model.layers().iter().enumerate() {
        if layer.rows() != width + 1 {
            return Err(Error::InvalidModel(format!(
                "layer {i} has {} rows, expected {} (inputs + bias)",
                layer.rows(),
                width + 1
            )));
        }
        width = layer.cols();
    }
    if width != 1 {
        return Err(Error::InvalidModel(format!(
            "MLP output width must be 1, got {width}"
        )));
    }
    Ok(())
}

/// Returns the activations of every layer; hidden layers use tanh, the output is linear.
fn forward_all(weights: &[Vec<f64>], shapes: &[(usize, usize)], input: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = vec![input.to_vec()];
    let last = shapes.len() - 1;
    for (k, (w, &(rows, cols))) in weights.iter().zip(shapes).enumerate() {
        let x = &acts[k];
        let bias = &w[(rows - 1) * cols..];
        let mut out = bias.to_vec();
        for (i, xi) in x.iter().enumerate() {
            let row = &w[i * cols..(i + 1) * cols];
            for (o, wij) in out.iter_mut().zip(row) {
                *o += xi * wij;
            }
        }
        if k != last {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(out);
    }
    acts
}

fn accumulate_gradient(
    weights: &[Vec<f64>],
    shapes: &[(usize, usize)],
    input: &[f64],
    target: f64,
    grads: &mut [Vec<f64>],
) {
    let acts = forward_all(weights, shapes, input);
    let last = shapes.len() - 1;
    // d(0.5 (y_hat - y)^2) / d y_hat
    let mut delta = vec![acts[last + 1][0] - target];
    for k in (0..=last).rev() {
        let (rows, cols) = shapes[k];
        let x = &acts[k];
        let g = &mut grads[k];
        for (i, xi) in x.iter().enumerate() {
            for (j, dj) in delta.iter().enumerate() {
                g[i * cols + j] += xi * dj;
            }
        }
        for (j, dj) in delta.iter().enumerate() {
            g[(rows - 1) * cols + j] += dj;
        }
        if k > 0 {
            let w = &weights[k];
            delta = (0..rows - 1)
                .map(|i| {
                    let back: f64 = (0..cols).map(|j| w[i * cols + j] * delta[j]).sum();
                    back * (1.0 - x[i] * x[i])
                })
                .collect();
        }
    }
}

/// Prediction of an MLP-shaped model on one input.
pub fn predict(model: &LayeredModel, input: &[f64]) -> Result<f64> {
    check_mlp(model, input.len())?;
    let weights: Vec<Vec<f64>> = model.layers().iter().map(|l| l.values().to_vec()).collect();
    let acts = forward_all(&weights, &model.shapes(), input);
    Ok(acts[acts.len() - 1][0])
}

/// Mean squared error of an MLP-shaped model over a dataset.
pub fn eval_loss(model: &LayeredModel, data: &Dataset) -> Result<f64> {
    let dim = data
        .input_dim()
        .ok_or_else(|| Error::InvalidArgument("cannot evaluate on an empty dataset".into()))?;
    check_mlp(model, dim)?;
    let weights: Vec<Vec<f64>> = model.layers().iter().map(|l| l.values().to_vec()).collect();
    let shapes = model.shapes();
    let total: f64 = data
        .records
        .iter()
        .map(|r| {
            let acts = forward_all(&weights, &shapes, &r.input);
            let err = acts[acts.len() - 1][0] - r.target;
            err * err
        })
        .sum();
    Ok(total / data.len() as f64)
}
