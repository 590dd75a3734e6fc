//! Independent oracles shared by the integration targets.
#![allow(dead_code)]

use fedcentroid::seed::rng_for;
use fedcentroid::LayeredModel;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A tiny clustering problem: at most 8 rows, at most 3 clusters.
pub struct KmeansInstance {
    pub rows: Vec<Vec<f64>>,
    pub k: usize,
}

pub fn kmeans_instance(seed: u64) -> KmeansInstance {
    let mut rng = rng_for(seed, &[0x0C]);
    let r = rng.gen_range(2..=8);
    let f = rng.gen_range(1..=4);
    let k = rng.gen_range(1..=3usize).min(r);
    let rows = (0..r)
        .map(|_| (0..f).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    KmeansInstance { rows, k }
}

/// Within-cluster sum of squares of a labelling.
pub fn sse(rows: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let f = rows[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = rows
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == c)
            .map(|(r, _)| r)
            .collect();
        if members.is_empty() {
            continue;
        }
        for j in 0..f {
            let mean = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            total += members.iter().map(|m| (m[j] - mean).powi(2)).sum::<f64>();
        }
    }
    total
}

/// Minimum SSE over every assignment of rows to `k` labels.
pub fn optimum_sse(rows: &[Vec<f64>], k: usize) -> f64 {
    let r = rows.len();
    let mut labels = vec![0usize; r];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(sse(rows, &labels, k));
        let mut i = 0;
        loop {
            if i == r {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

pub fn flat(m: &LayeredModel) -> Vec<f64> {
    m.iter_values().collect()
}

/// Element-wise mean by plain left-to-right summation.
pub fn naive_mean(models: &[LayeredModel]) -> Vec<f64> {
    let cols: Vec<Vec<f64>> = models.iter().map(flat).collect();
    (0..cols[0].len())
        .map(|p| {
            let mut s = 0.0;
            for c in &cols {
                s += c[p];
            }
            s / cols.len() as f64
        })
        .collect()
}

/// Largest |w_i - w_j| over every client pair and parameter.
pub fn brute_spread(models: &[LayeredModel]) -> f64 {
    let cols: Vec<Vec<f64>> = models.iter().map(flat).collect();
    let mut b = 0.0f64;
    for p in 0..cols[0].len() {
        for i in 0..cols.len() {
            for j in 0..cols.len() {
                b = b.max((cols[i][p] - cols[j][p]).abs());
            }
        }
    }
    b
}

/// Largest |value| over a list of centroid value slices.
pub fn brute_max_abs<'a>(values: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    let mut c = 0.0f64;
    for vs in values {
        for v in vs {
            c = c.max(v.abs());
        }
    }
    c
}

pub fn max_abs_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
