//! Experiment configuration files.
//!
//! ```toml
//! n = 3
//! rounds = 10
//! agg_fr = 1
//! beta = 0.9
//! seed = 42
//! mode = "centroid"        # centroid | fedavg | dp-fedavg | no-aggregation
//! partition = "fixed"      # fixed | warm | cold
//! output_dir = "out"
//! format = "csv"           # csv | json
//!
//! [trainer]
//! kind = "mlp-sgd"         # mlp-sgd | seeded-perturbation
//! lr = 0.02
//! epochs = 1
//! hidden = [16]
//!
//! [data]
//! input_dim = 8
//! records_per_client = 200
//! test_records = 200
//! noise_std = 0.1
//! client_shift = 0.0
//! teacher_shift = 0.0
//!
//! [dp]
//! enabled = false
//! epsilon = 1.0
//! delta = 0.001
//! clip = 0.5
//! # sigma = 0.0           # overrides the calibrated noise scale
//! ```
//!
//! Everything except `n`, `rounds`, `beta` and `seed` has a default. Unknown
//! keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use fedcentroid::data::SyntheticSpec;
use fedcentroid::dp::DpConfig;
use fedcentroid::driver::{FederationConfig, Mode, PartitionPolicy, DEFAULT_SECRET};
use fedcentroid::trainer::{TrainerKind, TrainerSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum ConfigError {
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    Parse {
        path: PathBuf,
        message: String,
    },
    Key {
        key: &'static str,
        message: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Read { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            Self::Parse { path, message } => write!(f, "{}: {message}", path.display()),
            Self::Key { key, message } => write!(f, "config key `{key}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn key_err(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Key {
        key,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n: usize,
    rounds: u32,
    #[serde(default = "one")]
    agg_fr: u32,
    beta: f64,
    seed: u64,
    #[serde(default = "default_mode")]
    mode: String,
    #[serde(default = "default_partition")]
    partition: String,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    #[serde(default)]
    format: ReportFormat,
    #[serde(default)]
    secret: Option<String>,
    #[serde(default)]
    trainer: RawTrainer,
    #[serde(default)]
    data: RawData,
    #[serde(default)]
    dp: RawDp,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrainer {
    #[serde(default = "default_kind")]
    kind: String,
    #[serde(default = "default_lr")]
    lr: f64,
    #[serde(default = "one_usize")]
    epochs: usize,
    #[serde(default = "default_hidden")]
    hidden: Vec<usize>,
}

impl Default for RawTrainer {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            lr: default_lr(),
            epochs: 1,
            hidden: default_hidden(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawData {
    input_dim: usize,
    records_per_client: usize,
    test_records: usize,
    noise_std: f64,
    client_shift: f64,
    teacher_shift: f64,
}

impl Default for RawData {
    fn default() -> Self {
        let d = SyntheticSpec::default();
        Self {
            input_dim: d.input_dim,
            records_per_client: d.records_per_client,
            test_records: d.test_records,
            noise_std: d.noise_std,
            client_shift: d.client_shift,
            teacher_shift: d.teacher_shift,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDp {
    #[serde(default)]
    enabled: bool,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default = "default_clip")]
    clip: f64,
    #[serde(default)]
    sigma: Option<f64>,
}

impl Default for RawDp {
    fn default() -> Self {
        Self {
            enabled: false,
            epsilon: default_epsilon(),
            delta: default_delta(),
            clip: default_clip(),
            sigma: None,
        }
    }
}

fn one() -> u32 {
    1
}
fn one_usize() -> usize {
    1
}
fn default_mode() -> String {
    "centroid".into()
}
fn default_partition() -> String {
    "fixed".into()
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_kind() -> String {
    "mlp-sgd".into()
}
fn default_lr() -> f64 {
    0.02
}
fn default_hidden() -> Vec<usize> {
    vec![16]
}
fn default_epsilon() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    1e-3
}
fn default_clip() -> f64 {
    0.5
}

/// A validated configuration file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub federation: FederationConfig,
    pub data: SyntheticSpec,
    pub output_dir: PathBuf,
    pub format: ReportFormat,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        resolve(raw, path)
    }
}

fn finite_nonneg(key: &'static str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(key_err(key, format!("must be finite and >= 0, got {v}")))
    }
}

fn resolve(raw: RawConfig, path: &Path) -> Result<RunManifest, ConfigError> {
    if raw.n == 0 {
        return Err(key_err("n", "need at least one client"));
    }
    if raw.rounds == 0 {
        return Err(key_err("rounds", "need at least one round"));
    }
    if raw.agg_fr == 0 || raw.agg_fr > raw.rounds {
        return Err(key_err(
            "agg_fr",
            format!(
                "must be in [1, rounds = {}], got {}",
                raw.rounds, raw.agg_fr
            ),
        ));
    }
    if !(raw.beta > 0.0 && raw.beta <= 1.0) {
        return Err(key_err(
            "beta",
            format!("must be in (0, 1], got {}", raw.beta),
        ));
    }
    let mode: Mode = raw
        .mode
        .parse()
        .map_err(|e| key_err("mode", format!("{e}")))?;
    let partition: PartitionPolicy = raw
        .partition
        .parse()
        .map_err(|e| key_err("partition", format!("{e}")))?;
    let kind: TrainerKind = raw
        .trainer
        .kind
        .parse()
        .map_err(|e| key_err("trainer.kind", format!("{e}")))?;
    let lr = finite_nonneg("trainer.lr", raw.trainer.lr)?;
    if raw.trainer.epochs == 0 {
        return Err(key_err("trainer.epochs", "must be >= 1"));
    }
    if raw.trainer.hidden.contains(&0) {
        return Err(key_err("trainer.hidden", "layer widths must be >= 1"));
    }

    let d = &raw.data;
    for (key, v) in [
        ("data.input_dim", d.input_dim),
        ("data.records_per_client", d.records_per_client),
        ("data.test_records", d.test_records),
    ] {
        if v == 0 {
            return Err(key_err(key, "must be >= 1"));
        }
    }
    let data = SyntheticSpec {
        input_dim: d.input_dim,
        records_per_client: d.records_per_client,
        test_records: d.test_records,
        noise_std: finite_nonneg("data.noise_std", d.noise_std)?,
        client_shift: finite_nonneg("data.client_shift", d.client_shift)?,
        teacher_shift: finite_nonneg("data.teacher_shift", d.teacher_shift)?,
    };

    let dp = if raw.dp.enabled || mode == Mode::DpFedAvg {
        let p = &raw.dp;
        if !(p.epsilon > 0.0 && p.epsilon.is_finite()) {
            return Err(key_err(
                "dp.epsilon",
                format!("must be > 0, got {}", p.epsilon),
            ));
        }
        if !(p.delta > 0.0 && p.delta < 1.0) {
            return Err(key_err(
                "dp.delta",
                format!("must be in (0, 1), got {}", p.delta),
            ));
        }
        if !(p.clip > 0.0 && p.clip.is_finite()) {
            return Err(key_err("dp.clip", format!("must be > 0, got {}", p.clip)));
        }
        if let Some(s) = p.sigma {
            finite_nonneg("dp.sigma", s)?;
        }
        Some(DpConfig {
            clip_bound: p.clip,
            epsilon: p.epsilon,
            delta: p.delta,
            noise_seed: raw.seed,
            sigma_override: p.sigma,
        })
    } else {
        None
    };
    if raw.dp.enabled && mode != Mode::DpFedAvg {
        return Err(key_err(
            "dp.enabled",
            format!("differential privacy needs mode = \"dp-fedavg\", got \"{mode}\""),
        ));
    }

    let federation = FederationConfig {
        clients: raw.n,
        rounds: raw.rounds,
        agg_every: raw.agg_fr,
        beta: raw.beta,
        seed: raw.seed,
        trainer: TrainerSpec {
            kind,
            learning_rate: lr,
            epochs: raw.trainer.epochs,
            seed: raw.seed,
        },
        dp,
        mode,
        partition,
        hidden: raw.trainer.hidden,
        secret: raw.secret.unwrap_or_else(|| DEFAULT_SECRET.to_string()),
    };
    federation
        .validate()
        .map_err(|e| key_err("config", e.to_string()))?;

    Ok(RunManifest {
        config_path: path.to_path_buf(),
        federation,
        data,
        output_dir: raw.output_dir,
        format: raw.format,
    })
}
