use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs of the total-time model. Per-client vectors hold one entry per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingModelInput {
    pub epochs: f64,
    pub agg_every: f64,
    pub local_s: Vec<f64>,
    pub cluster_s: Vec<f64>,
    pub aggregate_s: f64,
}

/// `e * max_i(T_l) + (e / Agg_fr) * max_i(T_c + T_agg)`, in seconds.
pub fn predicted_total_time(t: &TimingModelInput) -> Result<f64> {
    let all = t
        .local_s
        .iter()
        .chain(&t.cluster_s)
        .chain([&t.epochs, &t.aggregate_s]);
    if all.clone().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "timing inputs must be finite and >= 0".into(),
        ));
    }
    if !(t.agg_every > 0.0) {
        return Err(Error::InvalidArgument(
            "aggregation frequency must be > 0".into(),
        ));
    }
    if t.local_s.is_empty() || t.local_s.len() != t.cluster_s.len() {
        return Err(Error::InvalidArgument(
            "need one local and one clustering time per client".into(),
        ));
    }
    let local = t.local_s.iter().copied().fold(0.0, f64::max);
    let comm = t
        .cluster_s
        .iter()
        .map(|c| c + t.aggregate_s)
        .fold(0.0, f64::max);
    Ok(t.epochs * local + t.epochs / t.agg_every * comm)
}
