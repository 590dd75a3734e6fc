//! Layered model representation and the reference FedAvg aggregation.
//!
//! A model is an ordered stack of dense `rows x cols` matrices. Rows are the
//! input connections of a layer (including the bias connection for MLP
//! layers) and columns are its neurons; this is the unit that gets clustered.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes used to carry one parameter value.
pub const VALUE_BYTES: usize = std::mem::size_of::<f64>();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidModel(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidModel(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "non-finite value {} at flat index {i}",
                values[i]
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidModel("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    /// Element-wise map that keeps the shape and re-checks finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.rows,
            self.cols,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Element-wise combination of two equally shaped matrices.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::InvalidArgument(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.rows, self.cols, values)
    }

    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredModel {
    layers: Vec<WeightMatrix>,
}

impl LayeredModel {
    pub fn new(layers: Vec<WeightMatrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidModel("model has no layers".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[WeightMatrix] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<WeightMatrix> {
        self.layers
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(WeightMatrix::shape).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.values.len()).sum()
    }

    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.values.iter().copied())
    }

    /// Global L2 norm over every parameter of every layer.
    pub fn l2_norm(&self) -> f64 {
        self.iter_values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64 + Copy) -> Result<Self> {
        if self.shapes() != other.shapes() {
            return Err(Error::InvalidArgument(format!(
                "model shapes differ: {:?} vs {:?}",
                self.shapes(),
                other.shapes()
            )));
        }
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.zip_with(b, f))
            .collect::<Result<_>>()?;
        Self::new(layers)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .map(|l| l.map(f))
            .collect::<Result<_>>()?;
        Self::new(layers)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Largest absolute element-wise difference between two equally shaped models.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.shapes() != other.shapes() {
            return Err(Error::InvalidArgument("model shapes differ".into()));
        }
        Ok(self
            .iter_values()
            .zip(other.iter_values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Mean of a small set of values, summed in ascending order.
///
/// Sorting first makes the result independent of the order in which the
/// values were supplied, bit for bit.
pub(crate) fn order_independent_mean(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    buf.iter().sum::<f64>() / buf.len() as f64
}

/// Element-wise mean over equally shaped matrices (one per client).
pub(crate) fn mean_matrices(mats: &[&WeightMatrix], layer: usize) -> Result<WeightMatrix> {
    let first = mats
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to average".into()))?;
    let (rows, cols) = first.shape();
    for (client, m) in mats.iter().enumerate() {
        if m.shape() != (rows, cols) {
            return Err(Error::AggregationShape {
                client,
                layer,
                expected_rows: rows,
                expected_cols: cols,
                found_rows: m.rows,
                found_cols: m.cols,
            });
        }
    }
    let mut scratch = vec![0.0; mats.len()];
    let values = (0..rows * cols)
        .map(|i| {
            for (s, m) in scratch.iter_mut().zip(mats) {
                *s = m.values[i];
            }
            order_independent_mean(&mut scratch)
        })
        .collect();
    Ok(WeightMatrix::from_parts_unchecked(rows, cols, values))
}

/// Federated averaging: the element-wise mean of all client models.
pub fn fedavg(models: &[LayeredModel]) -> Result<LayeredModel> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidArgument("fedavg over an empty model list".into()))?;
    for (client, m) in models.iter().enumerate() {
        if m.layers.len() != first.layers.len() {
            return Err(Error::LayerCount {
                client,
                expected: first.layers.len(),
                found: m.layers.len(),
            });
        }
    }
    let layers = (0..first.layers.len())
        .map(|l| {
            let mats: Vec<&WeightMatrix> = models.iter().map(|m| &m.layers[l]).collect();
            mean_matrices(&mats, l)
        })
        .collect::<Result<_>>()?;
    LayeredModel::new(layers)
}

/// Scales `update` so its global L2 norm does not exceed `bound`.
pub fn clip_update(update: &LayeredModel, bound: f64) -> Result<LayeredModel> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "clip bound must be positive and finite, got {bound}"
        )));
    }
    let norm = update.l2_norm();
    if norm <= bound {
        return Ok(update.clone());
    }
    let scale = bound / norm;
    update.map(|v| v * scale)
}

/// Payload bytes needed to ship every parameter of `model`, headers excluded.
pub fn model_byte_size(model: &LayeredModel) -> usize {
    model.parameter_count() * VALUE_BYTES
}
