//! Seeded synthetic regression data, split into disjoint client shards plus a
//! held-out evaluation set shared by every client.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub input: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<Record>,
    /// Client index owning this partition; `usize::MAX` marks the held-out set.
    pub partition: usize,
}

impl Dataset {
    pub const HELD_OUT: usize = usize::MAX;

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.input.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub input_dim: usize,
    pub records_per_client: usize,
    pub test_records: usize,
    pub noise_std: f64,
    /// Each client's inputs are centred at its own N(0, shift²) offset; 0 gives IID shards.
    pub client_shift: f64,
    /// Each client's teacher adds its own N(0, (shift * w_scale)²) perturbation.
    pub teacher_shift: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            input_dim: 8,
            records_per_client: 200,
            test_records: 200,
            noise_std: 0.1,
            client_shift: 0.0,
            teacher_shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedData {
    pub shards: Vec<Dataset>,
    pub test: Dataset,
}

impl FederatedData {
    /// Draws `clients * records_per_client + test_records` samples from one
    /// linear teacher `y = w*.x + noise` and slices them into disjoint parts.
    /// The held-out set is drawn around the origin.
    pub fn synthetic(spec: &SyntheticSpec, clients: usize, seed: u64) -> Result<Self> {
        if clients == 0 || spec.input_dim == 0 || spec.records_per_client == 0 {
            return Err(Error::InvalidArgument(
                "synthetic data needs clients, input_dim and records_per_client >= 1".into(),
            ));
        }
        if spec.test_records == 0 {
            return Err(Error::InvalidArgument("test_records must be >= 1".into()));
        }
        for (name, v) in [
            ("noise_std", spec.noise_std),
            ("client_shift", spec.client_shift),
            ("teacher_shift", spec.teacher_shift),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }

        let mut rng = rng_for(seed, &[0xDA7A]);
        let scale = 1.0 / (spec.input_dim as f64).sqrt();
        let teacher: Vec<f64> = (0..spec.input_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale * 2.0)
            .collect();

        let offsets: Vec<Vec<f64>> = (0..clients)
            .map(|_| {
                (0..spec.input_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * spec.client_shift)
                    .collect()
            })
            .collect();
        let teachers: Vec<Vec<f64>> = (0..clients)
            .map(|_| {
                teacher
                    .iter()
                    .map(|w| {
                        w + rng.sample::<f64, _>(StandardNormal) * scale * 2.0 * spec.teacher_shift
                    })
                    .collect()
            })
            .collect();
        let centre = vec![0.0; spec.input_dim];

        let mut draw = |n: usize, offset: &[f64], teacher: &[f64]| -> Vec<Record> {
            (0..n)
                .map(|_| {
                    let input: Vec<f64> = offset
                        .iter()
                        .map(|o| o + rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let clean: f64 = input.iter().zip(teacher).map(|(x, w)| x * w).sum();
                    let noise: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise_std;
                    Record {
                        input,
                        target: clean + noise,
                    }
                })
                .collect()
        };

        let shards = (0..clients)
            .map(|partition| Dataset {
                records: draw(
                    spec.records_per_client,
                    &offsets[partition],
                    &teachers[partition],
                ),
                partition,
            })
            .collect();
        let test = Dataset {
            records: draw(spec.test_records, &centre, &teacher),
            partition: Dataset::HELD_OUT,
        };
        Ok(Self { shards, test })
    }
}
