//! Randomized checks of the centroid-aggregation error analysis.
//!
//! An instance is a set of client models that share a starting model and
//! have drifted apart by a small amount, the situation right after clients
//! pick up a common global model and train for a while. The exact-mean
//! property only holds when clients agree on row memberships, so the
//! shared model carries row groups clear enough for all clients to find. Every instance is
//! fully determined by its seed, so a failing case can be replayed alone.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::clustering::{
    adaptive_cluster_count, do_clustering, membership_agreement, ModelClustering,
};
use crate::error::{Error, Result};
use crate::model::{fedavg, LayeredModel, WeightMatrix};
use crate::protocol::{
    aggregate_centroids, approximation_error, compute_difference, estimate_global_model,
    CentroidSet, ErrorReport,
};
use crate::seed::{derive_seed, rng_for};

pub const CLIENT_CHOICES: [usize; 3] = [2, 3, 5];
pub const BETA_CHOICES: [f64; 4] = [0.1, 0.3, 0.5, 0.9];
/// Standard deviation of each client's drift away from the shared model.
pub const DEFAULT_DRIFT: f64 = 1e-3;
/// Spread of rows around their group centre in the shared model.
pub const GROUP_JITTER: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInstance {
    pub seed: u64,
    pub n: usize,
    pub shapes: Vec<(usize, usize)>,
    pub beta: f64,
    pub drift: f64,
}

impl BoundInstance {
    /// Draws client count, 1 to 3 layer shapes with r in [8, 64] and f in [1, 8],
    /// and (unless `beta` is given) a clustering ratio.
    pub fn random(seed: u64, beta: Option<f64>) -> Self {
        let mut rng = rng_for(seed, &[0xB0]);
        let n = *CLIENT_CHOICES.choose(&mut rng).unwrap();
        let layers = rng.gen_range(1..=3);
        let shapes = (0..layers)
            .map(|_| (rng.gen_range(8..=64), rng.gen_range(1..=8)))
            .collect();
        let beta = beta.unwrap_or_else(|| *BETA_CHOICES.choose(&mut rng).unwrap());
        Self {
            seed,
            n,
            shapes,
            beta,
            drift: DEFAULT_DRIFT,
        }
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self {
            beta,
            ..self.clone()
        }
    }

    /// Client models: one shared model plus N(0, drift²) per client.
    ///
    /// The shared model's rows fall into `No_c` tight groups whose centres
    /// sit at unit spacing along a random direction, so every client finds the
    /// same partition of rows.
    pub fn models(&self) -> Result<Vec<LayeredModel>> {
        let mut rng = rng_for(self.seed, &[0xB1]);
        let mut base = Vec::with_capacity(self.shapes.len());
        for &(r, f) in &self.shapes {
            let k = adaptive_cluster_count(r, self.beta)?;
            let mut dir: Vec<f64> = (0..f).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            dir.iter_mut().for_each(|v| *v /= norm);
            let mut slots: Vec<f64> = (0..k).map(|g| g as f64 - (k as f64 - 1.0) / 2.0).collect();
            slots.shuffle(&mut rng);
            let centres: Vec<Vec<f64>> = slots
                .iter()
                .map(|&s| dir.iter().map(|d| s * d).collect())
                .collect();
            let mut groups: Vec<usize> = (0..r)
                .map(|i| if i < k { i } else { rng.gen_range(0..k) })
                .collect();
            groups.shuffle(&mut rng);
            let mut vals = Vec::with_capacity(r * f);
            for g in groups {
                for c in &centres[g] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    vals.push(c + GROUP_JITTER * z);
                }
            }
            base.push(vals);
        }
        (0..self.n)
            .map(|i| {
                let mut rng = rng_for(self.seed, &[0xB2, i as u64]);
                let layers = base
                    .iter()
                    .zip(&self.shapes)
                    .map(|(vals, &(r, f))| {
                        let v = vals
                            .iter()
                            .map(|&b| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                b + self.drift * z
                            })
                            .collect();
                        WeightMatrix::new(r, f, v)
                    })
                    .collect::<Result<_>>()?;
                LayeredModel::new(layers)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceOutcome {
    pub instance: BoundInstance,
    pub report: ErrorReport,
    /// Largest `|mean_i(estimate_i) - fedavg| / max(|fedavg|, 1)` over parameters.
    pub mean_relative_gap: f64,
    /// Largest `|estimate_i - fedavg|` over clients and parameters.
    pub max_estimate_gap: f64,
    /// Lowest share of rows any client labels like client 0.
    pub membership_agreement: f64,
}

/// Runs one round of centroid aggregation on the instance, entirely in memory.
pub fn evaluate(instance: &BoundInstance) -> Result<InstanceOutcome> {
    let models = instance.models()?;
    let clustering_seed = derive_seed(instance.seed, &[0xB3]);
    let clusterings: Vec<ModelClustering> = models
        .iter()
        .map(|m| do_clustering(m, instance.beta, clustering_seed, 1))
        .collect::<Result<_>>()?;
    let sets: Vec<CentroidSet> = clusterings
        .iter()
        .map(CentroidSet::from_clustering)
        .collect();
    let global = aggregate_centroids(&sets, instance.n)?;
    let estimates = models
        .iter()
        .zip(&sets)
        .zip(&clusterings)
        .map(|((m, s), c)| estimate_global_model(m, &compute_difference(&global, s)?, c))
        .collect::<Result<Vec<_>>>()?;

    let report = approximation_error(&estimates, &models, &sets)?;
    let avg = fedavg(&models)?;
    let mean = fedavg(&estimates)?;
    let mean_relative_gap = avg
        .iter_values()
        .zip(mean.iter_values())
        .map(|(a, m)| (a - m).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max);
    let mut agreement = 1.0f64;
    for c in &clusterings[1..] {
        agreement = agreement.min(membership_agreement(&clusterings[0], c)?);
    }
    Ok(InstanceOutcome {
        instance: instance.clone(),
        max_estimate_gap: report.max_abs_error,
        report,
        mean_relative_gap,
        membership_agreement: agreement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    pub low_beta: f64,
    pub high_beta: f64,
    pub seeds: usize,
    pub mean_error_low: f64,
    pub mean_error_high: f64,
}

impl TrendReport {
    pub fn holds(&self) -> bool {
        self.mean_error_high < self.mean_error_low
    }
}

/// Mean max|error| at two clustering ratios over the same instances.
pub fn error_trend(
    base_seed: u64,
    seeds: usize,
    low_beta: f64,
    high_beta: f64,
) -> Result<TrendReport> {
    if seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let (mut low, mut high) = (0.0, 0.0);
    for s in 0..seeds {
        let inst = BoundInstance::random(derive_seed(base_seed, &[0x7E, s as u64]), None);
        low += evaluate(&inst.with_beta(low_beta))?.report.max_abs_error;
        high += evaluate(&inst.with_beta(high_beta))?.report.max_abs_error;
    }
    Ok(TrendReport {
        low_beta,
        high_beta,
        seeds,
        mean_error_low: low / seeds as f64,
        mean_error_high: high / seeds as f64,
    })
}

/// Seeds of the randomized suite, derived from one base seed.
pub fn suite_seeds(base_seed: u64, instances: usize) -> Vec<u64> {
    (0..instances as u64)
        .map(|i| derive_seed(base_seed, &[0x5E, i]))
        .collect()
}
