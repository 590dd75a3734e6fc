//! Report files.
//!
//! `rounds.csv` has one row per round per client:
//!
//! | column       | meaning |
//! |--------------|---------|
//! | round        | 1-based round index |
//! | client_id    | 0-based client index |
//! | eval_loss    | MSE on the shared held-out set after the round |
//! | tx_bytes     | sealed bytes the client uploaded (0 off aggregation rounds) |
//! | t_local_s    | local training time |
//! | t_cluster_s  | clustering plus estimation time |
//! | t_agg_s      | server aggregation time |
//! | max_eps      | largest per-parameter gap to FedAvg (centroid mode, aggregation rounds) |
//! | eps_bound    | `B + 2C(n-1)/n` for the same round |
//!
//! Timing columns are 0 unless the run asked for wall-clock columns, which
//! keeps the file byte-identical between runs. Measured times always go to
//! `summary.json`. Cells that do not apply are left empty.
//!
//! `summary.json` holds the resolved config, final per-client losses, total
//! uploaded bytes, the predicted total time and the measured wall time.

use std::fs;
use std::path::{Path, PathBuf};

use fedcentroid::driver::{ComparisonTable, FederationConfig, RunOutcome};
use fedcentroid::verify::InstanceOutcome;
use serde::Serialize;

use crate::config::{ReportFormat, RunManifest};

#[derive(Debug)]
pub struct NonFinite(pub String);

impl std::fmt::Display for NonFinite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "non-finite value in {}", self.0)
    }
}

#[derive(Debug)]
pub enum ReportError {
    NonFinite(NonFinite),
    Io(String),
}

impl std::fmt::Display for ReportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NonFinite(n) => n.fmt(f),
            Self::Io(m) => f.write_str(m),
        }
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError::Io(format!("{}: {e}", path.display()))
}

fn num(v: f64, what: &str) -> Result<String, ReportError> {
    if v.is_finite() {
        Ok(v.to_string())
    } else {
        Err(ReportError::NonFinite(NonFinite(what.to_string())))
    }
}

fn opt(v: Option<f64>, what: &str) -> Result<String, ReportError> {
    v.map_or(Ok(String::new()), |v| num(v, what))
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundRow {
    pub round: u32,
    pub client_id: usize,
    pub eval_loss: f64,
    pub tx_bytes: usize,
    pub t_local_s: f64,
    pub t_cluster_s: f64,
    pub t_agg_s: f64,
    pub max_eps: Option<f64>,
    pub eps_bound: Option<f64>,
}

pub fn round_rows(outcome: &RunOutcome, wall_clock: bool) -> Vec<RoundRow> {
    let t = |v: f64| if wall_clock { v } else { 0.0 };
    outcome
        .reports
        .iter()
        .flat_map(|r| {
            r.clients.iter().map(move |c| RoundRow {
                round: r.round,
                client_id: c.client_id,
                eval_loss: c.eval_loss,
                tx_bytes: c.tx_bytes,
                t_local_s: t(c.t_local_s),
                t_cluster_s: t(c.t_cluster_s),
                t_agg_s: t(r.t_agg_s),
                max_eps: r.error.as_ref().map(|e| e.max_abs_error),
                eps_bound: r.error.as_ref().map(|e| e.theoretical_bound),
            })
        })
        .collect()
}

pub const ROUNDS_HEADER: [&str; 9] = [
    "round",
    "client_id",
    "eval_loss",
    "tx_bytes",
    "t_local_s",
    "t_cluster_s",
    "t_agg_s",
    "max_eps",
    "eps_bound",
];

pub fn rounds_csv(rows: &[RoundRow]) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| ReportError::Io(e.to_string());
    w.write_record(ROUNDS_HEADER).map_err(err)?;
    for r in rows {
        let at = format!("round {} client {}", r.round, r.client_id);
        w.write_record([
            r.round.to_string(),
            r.client_id.to_string(),
            num(r.eval_loss, &format!("eval_loss ({at})"))?,
            r.tx_bytes.to_string(),
            num(r.t_local_s, &format!("t_local_s ({at})"))?,
            num(r.t_cluster_s, &format!("t_cluster_s ({at})"))?,
            num(r.t_agg_s, &format!("t_agg_s ({at})"))?,
            opt(r.max_eps, &format!("max_eps ({at})"))?,
            opt(r.eps_bound, &format!("eps_bound ({at})"))?,
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| ReportError::Io(e.to_string()))
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub config: &'a FederationConfig,
    pub data: &'a fedcentroid::data::SyntheticSpec,
    pub final_loss: Vec<f64>,
    pub total_tx_bytes: usize,
    pub full_model_bytes: usize,
    pub predicted_total_time_s: f64,
    pub wall_time_s: f64,
    /// Largest parameter gap between any two clients' final models.
    pub max_pairwise_diff: f64,
    pub min_membership_agreement: Option<f64>,
    pub max_mean_gap: Option<f64>,
}

pub fn summary<'a>(m: &'a RunManifest, outcome: &RunOutcome) -> Result<Summary<'a>, ReportError> {
    let last = outcome.reports.last().expect("at least one round");
    let predicted = outcome
        .predicted_total_time(&m.federation)
        .map_err(|e| ReportError::Io(e.to_string()))?;
    let fold_opt = |f: &dyn Fn(&fedcentroid::driver::RoundReport) -> Option<f64>, min: bool| {
        outcome
            .reports
            .iter()
            .filter_map(f)
            .reduce(|a, b| if min { a.min(b) } else { a.max(b) })
    };
    let s = Summary {
        config: &m.federation,
        data: &m.data,
        final_loss: last.clients.iter().map(|c| c.eval_loss).collect(),
        total_tx_bytes: outcome.total_tx_bytes(),
        full_model_bytes: outcome.full_model_bytes,
        predicted_total_time_s: predicted,
        wall_time_s: outcome.wall_time_s,
        max_pairwise_diff: outcome
            .pairwise_max_diff
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max),
        min_membership_agreement: fold_opt(&|r| r.membership_agreement, true),
        max_mean_gap: fold_opt(&|r| r.mean_gap, false),
    };
    let scalars = [s.predicted_total_time_s, s.wall_time_s, s.max_pairwise_diff];
    if s.final_loss.iter().chain(&scalars).any(|v| !v.is_finite()) {
        return Err(ReportError::NonFinite(NonFinite("summary".into())));
    }
    Ok(s)
}

/// Creates the output directory and refuses paths that would overwrite the config.
pub fn prepare_output(dir: &Path, config: &Path) -> Result<PathBuf, ReportError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let dir = dir.canonicalize().map_err(|e| io(dir, e))?;
    if let Ok(cfg) = config.canonicalize() {
        if cfg.parent() == Some(dir.as_path()) {
            let name = cfg.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if OUTPUT_NAMES.contains(&name) {
                return Err(ReportError::Io(format!(
                    "output {} would overwrite the config file",
                    cfg.display()
                )));
            }
        }
    }
    Ok(dir)
}

const OUTPUT_NAMES: [&str; 6] = [
    "rounds.csv",
    "rounds.json",
    "summary.json",
    "sweep.csv",
    "bounds.csv",
    "bounds.json",
];

pub fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, ReportError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io(&path, e))?;
    Ok(path)
}

pub fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, ReportError> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| ReportError::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_run(
    m: &RunManifest,
    dir: &Path,
    outcome: &RunOutcome,
    wall_clock: bool,
) -> Result<Vec<PathBuf>, ReportError> {
    let rows = round_rows(outcome, wall_clock);
    let csv = rounds_csv(&rows)?;
    let summary = summary(m, outcome)?;
    let mut written = vec![write(dir, "rounds.csv", &csv)?];
    if m.format == ReportFormat::Json {
        written.push(write(dir, "rounds.json", &json(&rows)?)?);
    }
    written.push(write(dir, "summary.json", &json(&summary)?)?);
    Ok(written)
}

pub const SWEEP_HEADER: [&str; 10] = [
    "label",
    "beta",
    "round",
    "mean_loss",
    "loss_spread",
    "tx_bytes",
    "payload_bytes",
    "bytes_ratio",
    "max_eps",
    "eps_bound",
];

/// One row per run per round. `bytes_ratio` is the centroid payload over
/// the full-weight payload, averaged over clients.
pub fn sweep_csv(table: &ComparisonTable, betas: &[Option<f64>]) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| ReportError::Io(e.to_string());
    w.write_record(SWEEP_HEADER).map_err(err)?;
    for row in &table.rows {
        for (i, mode) in row.modes.iter().enumerate() {
            let report = &table.outcomes[i].reports[row.round as usize - 1];
            let at = format!("{} round {}", mode.label, row.round);
            let payload: usize = report.clients.iter().map(|c| c.payload_bytes).sum();
            let ratio = report.aggregated.then(|| {
                payload as f64 / (report.clients.len() * table.outcomes[i].full_model_bytes) as f64
            });
            w.write_record([
                mode.label.clone(),
                betas[i].map(|b| b.to_string()).unwrap_or_default(),
                row.round.to_string(),
                num(mode.mean_loss, &format!("mean_loss ({at})"))?,
                num(mode.loss_spread, &format!("loss_spread ({at})"))?,
                mode.tx_bytes.to_string(),
                payload.to_string(),
                opt(ratio, &format!("bytes_ratio ({at})"))?,
                opt(mode.max_eps, &format!("max_eps ({at})"))?,
                opt(mode.eps_bound, &format!("eps_bound ({at})"))?,
            ])
            .map_err(err)?;
        }
    }
    w.into_inner().map_err(|e| ReportError::Io(e.to_string()))
}

pub const BOUNDS_HEADER: [&str; 9] = [
    "seed",
    "n",
    "beta",
    "shapes",
    "max_eps",
    "eps_bound",
    "mean_relative_gap",
    "membership_agreement",
    "within_bound",
];

pub fn bounds_csv(outcomes: &[InstanceOutcome]) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| ReportError::Io(e.to_string());
    w.write_record(BOUNDS_HEADER).map_err(err)?;
    for o in outcomes {
        let at = format!("instance {}", o.instance.seed);
        let shapes = o
            .instance
            .shapes
            .iter()
            .map(|(r, f)| format!("{r}x{f}"))
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([
            o.instance.seed.to_string(),
            o.instance.n.to_string(),
            num(o.instance.beta, &at)?,
            shapes,
            num(o.report.max_abs_error, &at)?,
            num(o.report.theoretical_bound, &at)?,
            num(o.mean_relative_gap, &at)?,
            num(o.membership_agreement, &at)?,
            o.report.within_bound().to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| ReportError::Io(e.to_string()))
}
