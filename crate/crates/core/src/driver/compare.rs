use serde::Serialize;

use crate::data::FederatedData;
use crate::driver::{run_federation, FederationConfig, RunOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRoundSummary {
    pub label: String,
    pub mean_loss: f64,
    pub loss_spread: f64,
    pub tx_bytes: usize,
    pub max_eps: Option<f64>,
    pub eps_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub round: u32,
    pub modes: Vec<ModeRoundSummary>,
}

#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub labels: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub outcomes: Vec<RunOutcome>,
}

fn default_label(cfg: &FederationConfig) -> String {
    match cfg.mode {
        crate::driver::Mode::Centroid => format!("centroid-b{}", cfg.beta),
        m => m.to_string(),
    }
}

/// Runs every config on the same data and lines the per-round results up.
pub fn compare_modes(cfgs: &[FederationConfig], data: &FederatedData) -> Result<ComparisonTable> {
    let first = cfgs
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to compare".into()))?;
    if let Some(c) = cfgs.iter().find(|c| c.rounds != first.rounds) {
        return Err(Error::InvalidArgument(format!(
            "round counts differ: {} vs {}",
            first.rounds, c.rounds
        )));
    }
    if let Some(c) = cfgs.iter().find(|c| c.trainer.seed != first.trainer.seed) {
        return Err(Error::InvalidArgument(format!(
            "trainer seeds differ: {} vs {}",
            first.trainer.seed, c.trainer.seed
        )));
    }

    let labels: Vec<String> = cfgs.iter().map(default_label).collect();
    let outcomes = cfgs
        .iter()
        .map(|c| run_federation(c, data))
        .collect::<Result<Vec<_>>>()?;
    let rows = (0..first.rounds as usize)
        .map(|i| ComparisonRow {
            round: i as u32 + 1,
            modes: outcomes
                .iter()
                .zip(&labels)
                .map(|(o, label)| {
                    let r = &o.reports[i];
                    ModeRoundSummary {
                        label: label.clone(),
                        mean_loss: r.mean_loss(),
                        loss_spread: r.loss_spread(),
                        tx_bytes: r.tx_bytes(),
                        max_eps: r.error.as_ref().map(|e| e.max_abs_error),
                        eps_bound: r.error.as_ref().map(|e| e.theoretical_bound),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(ComparisonTable {
        labels,
        rows,
        outcomes,
    })
}
