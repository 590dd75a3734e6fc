//! Centroid aggregation math.
//!
//! The server averages the per-layer centroid stacks of all clients. Each
//! client then shifts every row of its local weights by the displacement of
//! the centroid that row belongs to, which approximates the FedAvg model
//! without any client revealing its weights.

use serde::{Deserialize, Serialize};

use crate::clustering::ModelClustering;
use crate::error::{Error, Result};
use crate::model::{fedavg, mean_matrices, LayeredModel, WeightMatrix};

/// Per-layer centroid matrices, either one client's local set or the global average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    layers: Vec<WeightMatrix>,
}

impl CentroidSet {
    pub fn new(layers: Vec<WeightMatrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("centroid set has no layers".into()));
        }
        Ok(Self { layers })
    }

    pub fn from_clustering(mc: &ModelClustering) -> Self {
        Self {
            layers: mc.centroid_matrices(),
        }
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

    pub fn value_count(&self) -> usize {
        self.layers.iter().map(|l| l.values().len()).sum()
    }

    /// Largest absolute centroid coordinate in the set.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.values().iter())
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Displacement `global - local` for every centroid of every layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffSet {
    layers: Vec<WeightMatrix>,
}

impl DiffSet {
    pub fn layers(&self) -> &[WeightMatrix] {
        &self.layers
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(WeightMatrix::shape).collect()
    }
}

/// Server side: unweighted element-wise mean of every client's centroids.
///
/// The result does not depend on the order of `sets`.
pub fn aggregate_centroids(sets: &[CentroidSet], n: usize) -> Result<CentroidSet> {
    if n == 0 || sets.len() != n {
        return Err(Error::InvalidArgument(format!(
            "expected centroid sets from {n} clients, got {}",
            sets.len()
        )));
    }
    let layer_count = sets[0].layers.len();
    for (client, s) in sets.iter().enumerate() {
        if s.layers.len() != layer_count {
            return Err(Error::LayerCount {
                client,
                expected: layer_count,
                found: s.layers.len(),
            });
        }
    }
    let layers = (0..layer_count)
        .map(|l| {
            let mats: Vec<&WeightMatrix> = sets.iter().map(|s| &s.layers[l]).collect();
            mean_matrices(&mats, l)
        })
        .collect::<Result<_>>()?;
    CentroidSet::new(layers)
}

pub fn compute_difference(global: &CentroidSet, local: &CentroidSet) -> Result<DiffSet> {
    if global.shapes() != local.shapes() {
        return Err(Error::InvalidArgument(format!(
            "centroid shapes differ: global {:?} vs local {:?}",
            global.shapes(),
            local.shapes()
        )));
    }
    let layers = global
        .layers
        .iter()
        .zip(&local.layers)
        .map(|(g, l)| g.zip_with(l, |a, b| a - b))
        .collect::<Result<_>>()?;
    Ok(DiffSet { layers })
}

/// Client side: `out[p] = w_local[p] + diff[membership(p)]` for every row of every layer.
pub fn estimate_global_model(
    w_local: &LayeredModel,
    diff: &DiffSet,
    mem: &ModelClustering,
) -> Result<LayeredModel> {
    let layer_count = w_local.layers().len();
    if diff.layers.len() != layer_count || mem.layers().len() != layer_count {
        return Err(Error::InvalidArgument(format!(
            "model has {layer_count} layers, diff {} and membership {}",
            diff.layers.len(),
            mem.layers().len()
        )));
    }
    let layers = w_local
        .layers()
        .iter()
        .zip(&diff.layers)
        .zip(mem.layers())
        .enumerate()
        .map(|(layer, ((w, d), c))| {
            let membership = c.membership();
            if membership.len() != w.rows() {
                return Err(Error::InvalidArgument(format!(
                    "layer {layer}: membership covers {} of {} rows",
                    membership.len(),
                    w.rows()
                )));
            }
            if d.cols() != w.cols() {
                return Err(Error::InvalidArgument(format!(
                    "layer {layer}: diff has {} columns, weights {}",
                    d.cols(),
                    w.cols()
                )));
            }
            let mut values = Vec::with_capacity(w.values().len());
            for (row, &label) in membership.iter().enumerate() {
                if label >= d.rows() {
                    return Err(Error::CorruptMembership {
                        layer,
                        row,
                        label,
                        clusters: d.rows(),
                    });
                }
                values.extend(w.row(row).iter().zip(d.row(label)).map(|(a, b)| a + b));
            }
            WeightMatrix::new(w.rows(), w.cols(), values)
        })
        .collect::<Result<_>>()?;
    LayeredModel::new(layers)
}

/// Per-parameter approximation error against FedAvg together with the
/// theoretical bound `B + 2C(n-1)/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    /// Largest pairwise gap between clients on any single parameter.
    pub spread_bound: f64,
    /// Largest absolute centroid coordinate over all clients and layers.
    pub centroid_bound: f64,
    pub theoretical_bound: f64,
}

impl ErrorReport {
    pub const SLACK: f64 = 1e-9;

    pub fn within_bound(&self) -> bool {
        self.max_abs_error <= self.theoretical_bound + Self::SLACK
    }
}

/// Compares each client's estimate with the FedAvg of the pre-aggregation models.
///
/// `local_centroids[i]` is the centroid set client `i` sent to the server.
pub fn approximation_error(
    estimates: &[LayeredModel],
    models: &[LayeredModel],
    local_centroids: &[CentroidSet],
) -> Result<ErrorReport> {
    let n = models.len();
    if n == 0 || estimates.len() != n || local_centroids.len() != n {
        return Err(Error::InvalidArgument(format!(
            "need matching non-empty lists, got {} estimates, {} models, {} centroid sets",
            estimates.len(),
            n,
            local_centroids.len()
        )));
    }
    let shapes = models[0].shapes();
    if models.iter().chain(estimates).any(|m| m.shapes() != shapes) {
        return Err(Error::InvalidArgument(
            "models and estimates differ in shape".into(),
        ));
    }
    let avg = fedavg(models)?;

    let mut max_err = 0.0f64;
    let mut sum_err = 0.0f64;
    for est in estimates {
        for (a, e) in avg.iter_values().zip(est.iter_values()) {
            let err = (a - e).abs();
            max_err = max_err.max(err);
            sum_err += err;
        }
    }
    let count = (n * avg.parameter_count()) as f64;

    let columns: Vec<Vec<f64>> = models.iter().map(|m| m.iter_values().collect()).collect();
    let spread = (0..avg.parameter_count())
        .map(|p| {
            let (lo, hi) = columns
                .iter()
                .map(|c| c[p])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            hi - lo
        })
        .fold(0.0, f64::max);
    let centroid_bound = local_centroids
        .iter()
        .map(CentroidSet::max_abs)
        .fold(0.0, f64::max);
    let nf = n as f64;

    Ok(ErrorReport {
        n,
        max_abs_error: max_err,
        mean_abs_error: sum_err / count,
        spread_bound: spread,
        centroid_bound,
        theoretical_bound: spread + 2.0 * centroid_bound * (nf - 1.0) / nf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::do_clustering;

    fn set(rows: &[Vec<f64>]) -> CentroidSet {
        CentroidSet::new(vec![WeightMatrix::from_rows(rows).unwrap()]).unwrap()
    }

    #[test]
    fn aggregate_single_client_is_identity() {
        let s = set(&[vec![1.0, -2.5], vec![0.25, 4.0]]);
        assert_eq!(aggregate_centroids(std::slice::from_ref(&s), 1).unwrap(), s);
    }

    #[test]
    fn aggregate_two_clients() {
        let out =
            aggregate_centroids(&[set(&[vec![1.0, 2.0]]), set(&[vec![3.0, 4.0]])], 2).unwrap();
        assert_eq!(out, set(&[vec![2.0, 3.0]]));
    }

    #[test]
    fn aggregate_reports_offending_client() {
        let err = aggregate_centroids(
            &[
                set(&[vec![1.0, 2.0]]),
                set(&[vec![1.0, 2.0]]),
                set(&[vec![1.0], vec![2.0]]),
            ],
            3,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::AggregationShape {
                client: 2,
                layer: 0,
                ..
            }
        ));
        assert!(aggregate_centroids(&[set(&[vec![1.0]])], 2).is_err());
    }

    #[test]
    fn difference_examples() {
        let local = set(&[vec![4.49, 3.01]]);
        let zero = set(&[vec![0.0, 0.0]]);
        let d = compute_difference(&zero, &local).unwrap();
        assert_eq!(d.layers()[0].values(), &[-4.49, -3.01]);
        let same = compute_difference(&local, &local).unwrap();
        assert!(same.layers()[0].values().iter().all(|&v| v == 0.0));
        assert!(compute_difference(&set(&[vec![1.0]]), &local).is_err());
    }

    #[test]
    fn difference_inverts() {
        let g = set(&[vec![0.1, 0.7], vec![-3.3, 2.0]]);
        let l = set(&[vec![1.5, -0.25], vec![8.0, 0.5]]);
        let d = compute_difference(&g, &l).unwrap();
        // local + (global - local) == global holds exactly for these binary-friendly values
        let back = l.layers()[0]
            .zip_with(&d.layers()[0], |a, b| a + b)
            .unwrap();
        for (x, y) in back.values().iter().zip(g.layers()[0].values()) {
            assert!((x - y).abs() <= f64::EPSILON * 8.0);
        }
    }

    #[test]
    fn zero_diff_leaves_model_unchanged() {
        let model = LayeredModel::new(vec![WeightMatrix::new(
            4,
            2,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        )
        .unwrap()])
        .unwrap();
        let mem = do_clustering(&model, 0.5, 1, 1).unwrap();
        let local = CentroidSet::from_clustering(&mem);
        let diff = compute_difference(&local, &local).unwrap();
        assert_eq!(estimate_global_model(&model, &diff, &mem).unwrap(), model);
    }

    #[test]
    fn one_cluster_shifts_every_row_equally() {
        let model = LayeredModel::new(vec![WeightMatrix::new(
            3,
            2,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap()])
        .unwrap();
        let mem = do_clustering(&model, 0.1, 1, 1).unwrap();
        let local = CentroidSet::from_clustering(&mem);
        let global = set(&[vec![3.5, 3.0]]);
        let diff = compute_difference(&global, &local).unwrap();
        let out = estimate_global_model(&model, &diff, &mem).unwrap();
        let shift = model.sub(&out).unwrap();
        let v = shift.layers()[0].values();
        for r in 0..3 {
            assert!((v[r * 2] - v[0]).abs() < 1e-15 && (v[r * 2 + 1] - v[1]).abs() < 1e-15);
        }
        assert_eq!(out.shapes(), model.shapes());
    }

    #[test]
    fn corrupt_membership_detected() {
        let model =
            LayeredModel::new(vec![WeightMatrix::new(3, 1, vec![1.0, 2.0, 9.0]).unwrap()]).unwrap();
        let mem = do_clustering(&model, 0.7, 1, 1).unwrap();
        let local = CentroidSet::from_clustering(&mem);
        // a diff with fewer clusters than the membership refers to
        let short = CentroidSet::new(vec![WeightMatrix::new(1, 1, vec![0.0]).unwrap()]).unwrap();
        let diff = compute_difference(&short, &short).unwrap();
        assert_eq!(local.layers()[0].rows(), 2);
        let err = estimate_global_model(&model, &diff, &mem).unwrap_err();
        assert!(matches!(
            err,
            Error::CorruptMembership {
                layer: 0,
                clusters: 1,
                ..
            }
        ));
    }

    #[test]
    fn single_client_has_no_error() {
        let model = LayeredModel::new(vec![WeightMatrix::new(
            5,
            2,
            (0..10).map(|v| v as f64 * 0.3).collect(),
        )
        .unwrap()])
        .unwrap();
        let mem = do_clustering(&model, 0.4, 2, 1).unwrap();
        let local = CentroidSet::from_clustering(&mem);
        let global = aggregate_centroids(std::slice::from_ref(&local), 1).unwrap();
        let diff = compute_difference(&global, &local).unwrap();
        let est = estimate_global_model(&model, &diff, &mem).unwrap();
        let rep = approximation_error(&[est], &[model], &[local]).unwrap();
        assert_eq!(rep.max_abs_error, 0.0);
        assert_eq!(rep.theoretical_bound, 0.0);
        assert!(rep.within_bound());
    }
}
