//! Clipping and Gaussian noise for the DP-FedAvg baseline.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{clip_update, LayeredModel, WeightMatrix};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub clip_bound: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub noise_seed: u64,
    /// Replaces the calibrated noise scale when set (0 disables noise).
    pub sigma_override: Option<f64>,
}

impl DpConfig {
    pub fn new(clip_bound: f64, epsilon: f64, delta: f64, noise_seed: u64) -> Result<Self> {
        let cfg = Self {
            clip_bound,
            epsilon,
            delta,
            noise_seed,
            sigma_override: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_bound > 0.0) || !self.clip_bound.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dp clip bound must be > 0, got {}",
                self.clip_bound
            )));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dp epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "dp delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        if let Some(s) = self.sigma_override {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "dp sigma override must be finite and >= 0, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// Noise scale actually applied: the override if present, else the calibrated one.
    pub fn sigma(&self) -> Result<f64> {
        match self.sigma_override {
            Some(s) => {
                self.validate()?;
                Ok(s)
            }
            None => gaussian_noise_sigma(self),
        }
    }
}

/// Classic Gaussian-mechanism calibration, `B * sqrt(2 ln(1.25 / delta)) / epsilon`.
pub fn gaussian_noise_sigma(cfg: &DpConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(cfg.clip_bound * (2.0 * (1.25 / cfg.delta).ln()).sqrt() / cfg.epsilon)
}

/// Clips the model delta `after - before`, adds element-wise noise and
/// returns the privatized model `before + noisy_delta`.
pub fn privatize_update(
    before: &LayeredModel,
    after: &LayeredModel,
    cfg: &DpConfig,
    round: u32,
    client: usize,
) -> Result<LayeredModel> {
    let sigma = cfg.sigma()?;
    let delta = clip_update(&after.sub(before)?, cfg.clip_bound)?;
    let noisy = if sigma == 0.0 {
        delta
    } else {
        let mut rng = rng_for(cfg.noise_seed, &[0xD9, round as u64, client as u64]);
        let layers = delta
            .layers()
            .iter()
            .map(|l| {
                let values = l
                    .values()
                    .iter()
                    .map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                WeightMatrix::new(l.rows(), l.cols(), values)
            })
            .collect::<Result<_>>()?;
        LayeredModel::new(layers)?
    };
    before.add(&noisy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibrated_sigma() {
        // 0.5 * sqrt(2 * ln(1250)) evaluated separately: ln(1250) = 7.130898830...
        let cfg = DpConfig::new(0.5, 1.0, 0.001, 0).unwrap();
        let expected = 0.5 * (2.0f64 * 7.130_898_830_296_346_5).sqrt();
        assert!((gaussian_noise_sigma(&cfg).unwrap() - expected).abs() < 1e-9);
        assert!((gaussian_noise_sigma(&cfg).unwrap() - 1.888_239_766_329_5).abs() < 1e-12);
    }

    #[test]
    fn doubling_epsilon_halves_sigma() {
        let a = DpConfig::new(0.5, 1.0, 0.001, 0).unwrap();
        let b = DpConfig::new(0.5, 2.0, 0.001, 0).unwrap();
        let (sa, sb) = (
            gaussian_noise_sigma(&a).unwrap(),
            gaussian_noise_sigma(&b).unwrap(),
        );
        assert!((sa / 2.0 - sb).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(DpConfig::new(0.0, 1.0, 0.001, 0).is_err());
        assert!(DpConfig::new(0.5, 0.0, 0.001, 0).is_err());
        assert!(DpConfig::new(0.5, 1.0, 1.0, 0).is_err());
        assert!(DpConfig::new(0.5, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn zero_noise_is_pure_clipping() {
        let before =
            LayeredModel::new(vec![WeightMatrix::new(1, 2, vec![1.0, 1.0]).unwrap()]).unwrap();
        let after =
            LayeredModel::new(vec![WeightMatrix::new(1, 2, vec![2.2, 2.6]).unwrap()]).unwrap();
        let mut cfg = DpConfig::new(0.5, 1.0, 0.001, 9).unwrap();
        cfg.sigma_override = Some(0.0);
        let out = privatize_update(&before, &after, &cfg, 1, 0).unwrap();
        let v = out.layers()[0].values();
        assert!((v[0] - 1.3).abs() < 1e-12 && (v[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn noise_is_seeded() {
        let before = LayeredModel::new(vec![WeightMatrix::zeros(3, 2).unwrap()]).unwrap();
        let after = before.map(|_| 0.1).unwrap();
        let cfg = DpConfig::new(0.5, 1.0, 0.001, 9).unwrap();
        let a = privatize_update(&before, &after, &cfg, 1, 0).unwrap();
        assert_eq!(a, privatize_update(&before, &after, &cfg, 1, 0).unwrap());
        assert_ne!(a, privatize_update(&before, &after, &cfg, 1, 1).unwrap());
    }
}
