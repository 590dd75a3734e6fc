//! Seeded k-means over the rows of each layer matrix.
//!
//! Every client runs the same algorithm with the same base seed, so the
//! initialization stream for a given (round, layer) is shared. Cluster labels
//! are put in a canonical order (by the smallest row index each cluster
//! owns), which makes label `j` mean the same group of rows on every client
//! whose partition agrees, regardless of the order in which the seeds were
//! picked.
//!
//! Partitions of nearly unstructured rows are not stable under small
//! perturbations, so a federation can also cluster its common starting model
//! once and then either keep that partition ([`refit`]) or warm-start every
//! later clustering from the client's own previous partition ([`recluster`]).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayeredModel, WeightMatrix};
use crate::seed::derive_seed;

pub const MAX_ITERATIONS: usize = 100;
pub const MOVEMENT_TOLERANCE: f64 = 1e-8;
/// Independent k-means++ starts per call; the lowest final inertia wins.
pub const RESTARTS: usize = 10;

/// Guards `floor(r * beta)` against representation error such as `0.29 * 100 = 28.999...`.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub layer: usize,
    centroids: WeightMatrix,
    membership: Vec<usize>,
    inertia: f64,
    iterations: usize,
}

impl ClusteringResult {
    pub fn centroids(&self) -> &WeightMatrix {
        &self.centroids
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn cluster_count(&self) -> usize {
        self.centroids.rows()
    }

    /// Within-cluster sum of squared distances at the returned state.
    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.cluster_count()];
        for &m in &self.membership {
            sizes[m] += 1;
        }
        sizes
    }

    /// Replaces every row by its centroid.
    pub fn reconstruct(&self) -> WeightMatrix {
        let cols = self.centroids.cols();
        let values = self
            .membership
            .iter()
            .flat_map(|&m| self.centroids.row(m).iter().copied())
            .collect();
        WeightMatrix::from_parts_unchecked(self.membership.len(), cols, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelClustering {
    layers: Vec<ClusteringResult>,
}

impl ModelClustering {
    pub fn new(layers: Vec<ClusteringResult>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("clustering covers no layers".into()));
        }
        if layers.windows(2).any(|w| w[0].layer >= w[1].layer) {
            return Err(Error::InvalidArgument(
                "layer indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[ClusteringResult] {
        &self.layers
    }

    pub fn centroid_matrices(&self) -> Vec<WeightMatrix> {
        self.layers.iter().map(|l| l.centroids.clone()).collect()
    }
}

/// Cluster count for a layer with `rows` rows: `floor(rows * beta)` clamped to `[1, rows]`.
pub fn adaptive_cluster_count(rows: usize, beta: f64) -> Result<usize> {
    if rows == 0 {
        return Err(Error::InvalidArgument("layer has no rows".into()));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "clustering ratio beta must be in (0, 1], got {beta}"
        )));
    }
    let raw = (rows as f64 * beta + FLOOR_SLACK).floor() as usize;
    Ok(raw.clamp(1, rows))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Candidates drawn per centre in greedy k-means++.
fn local_trials(k: usize) -> usize {
    2 + (k as f64).ln().floor() as usize
}

/// Draws index `i` with probability proportional to `weights[i]`.
///
/// Exponential race: each row gets its own `Exp(1)` variate and the smallest
/// `E_i / w_i` wins. Variates are tied to row indices, so two clients with
/// nearly equal weights almost always make the same draw.
fn weighted_pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, &w) in weights.iter().enumerate() {
        let u: f64 = rng.gen();
        if w <= 0.0 {
            continue;
        }
        let key = -(1.0 - u).ln() / w;
        if key < best.1 {
            best = (i, key);
        }
    }
    best.0
}

/// Greedy k-means++: each new centre is the best of a few D²-sampled candidates.
fn kmeans_plus_plus(matrix: &WeightMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let r = matrix.rows();
    let mut chosen = vec![rng.gen_range(0..r)];
    let mut d2: Vec<f64> = (0..r)
        .map(|i| sq_dist(matrix.row(i), matrix.row(chosen[0])))
        .collect();
    let trials = local_trials(k);
    while chosen.len() < k {
        if d2.iter().all(|&d| d <= 0.0) {
            let free: Vec<usize> = (0..r).filter(|i| !chosen.contains(i)).collect();
            chosen.push(free[rng.gen_range(0..free.len())]);
            continue;
        }
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = weighted_pick(&d2, rng);
            let next: Vec<f64> = d2
                .iter()
                .enumerate()
                .map(|(i, &d)| d.min(sq_dist(matrix.row(i), matrix.row(cand))))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.1) {
                best = Some((cand, potential, next));
            }
        }
        let (pick, _, next) = best.expect("at least one trial");
        chosen.push(pick);
        d2 = next;
    }
    chosen
}

fn inertia_of(matrix: &WeightMatrix, centroids: &[Vec<f64>], membership: &[usize]) -> f64 {
    membership
        .iter()
        .enumerate()
        .map(|(i, &m)| sq_dist(matrix.row(i), &centroids[m]))
        .sum()
}

/// Moves rows into empty clusters, taking each time the row farthest from
/// its own centroid among clusters that can spare one.
fn repair_empty(matrix: &WeightMatrix, centroids: &mut [Vec<f64>], membership: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &m in membership.iter() {
            sizes[m] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..membership.len())
            .filter(|&i| sizes[membership[i]] > 1)
            .map(|i| (i, sq_dist(matrix.row(i), &centroids[membership[i]])))
            .fold(None, |best: Option<(usize, f64)>, cand| match best {
                Some(b) if b.1 >= cand.1 => Some(b),
                _ => Some(cand),
            })
            .map(|(i, _)| i)
            .expect("an empty cluster implies some cluster holds two rows");
        membership[donor] = empty;
        centroids[empty] = matrix.row(donor).to_vec();
    }
}

fn update_means(matrix: &WeightMatrix, membership: &[usize], k: usize) -> Vec<Vec<f64>> {
    let cols = matrix.cols();
    let mut sums = vec![vec![0.0; cols]; k];
    let mut counts = vec![0usize; k];
    for (i, &m) in membership.iter().enumerate() {
        counts[m] += 1;
        for (s, v) in sums[m].iter_mut().zip(matrix.row(i)) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        let n = n as f64;
        s.iter_mut().for_each(|v| *v /= n);
    }
    sums
}

/// Relabels clusters so label order follows the smallest row index in each cluster.
fn canonicalize(centroids: Vec<Vec<f64>>, membership: &mut [usize]) -> Vec<Vec<f64>> {
    let k = centroids.len();
    let mut remap = vec![usize::MAX; k];
    let mut next = 0;
    for m in membership.iter() {
        if remap[*m] == usize::MAX {
            remap[*m] = next;
            next += 1;
        }
    }
    debug_assert_eq!(next, k, "every cluster must own a row");
    let mut out = vec![Vec::new(); k];
    for (old, c) in centroids.into_iter().enumerate() {
        out[remap[old]] = c;
    }
    membership.iter_mut().for_each(|m| *m = remap[*m]);
    out
}

/// Lloyd's algorithm from the best of [`RESTARTS`] k-means++ starts, plus the
/// inertia after every iteration of the winning start.
pub fn kmeans_traced(
    matrix: &WeightMatrix,
    clusters: usize,
    seed: u64,
) -> Result<(ClusteringResult, Vec<f64>)> {
    let r = matrix.rows();
    if clusters == 0 || clusters > r {
        return Err(Error::InvalidArgument(format!(
            "cluster count must be in [1, {r}], got {clusters}"
        )));
    }

    if clusters == r {
        // Singletons are the exact optimum; identity labels keep them canonical.
        let result = ClusteringResult {
            layer: 0,
            centroids: matrix.clone(),
            membership: (0..r).collect(),
            inertia: 0.0,
            iterations: 0,
        };
        return Ok((result, vec![0.0]));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<LloydRun> = None;
    for _ in 0..RESTARTS {
        let start: Vec<Vec<f64>> = kmeans_plus_plus(matrix, clusters, &mut rng)
            .into_iter()
            .map(|i| matrix.row(i).to_vec())
            .collect();
        let run = lloyd(matrix, start);
        let better = best.as_ref().is_none_or(|b| run.3.last() < b.3.last());
        if better {
            best = Some(run);
        }
    }
    let (centroids, mut membership, iterations, trace) = best.expect("RESTARTS >= 1");
    let centroids = canonicalize(centroids, &mut membership);
    finish(matrix, centroids, membership, iterations, trace)
}

fn finish(
    matrix: &WeightMatrix,
    centroids: Vec<Vec<f64>>,
    membership: Vec<usize>,
    iterations: usize,
    trace: Vec<f64>,
) -> Result<(ClusteringResult, Vec<f64>)> {
    let inertia = *trace.last().expect("at least one iteration");
    let centroids = WeightMatrix::new(centroids.len(), matrix.cols(), centroids.concat())?;
    Ok((
        ClusteringResult {
            layer: 0,
            centroids,
            membership,
            inertia,
            iterations,
        },
        trace,
    ))
}

type LloydRun = (Vec<Vec<f64>>, Vec<usize>, usize, Vec<f64>);

/// Lloyd iterations from the given centres until they stop moving.
fn lloyd(matrix: &WeightMatrix, mut centroids: Vec<Vec<f64>>) -> LloydRun {
    let k = centroids.len();
    let mut membership = vec![0usize; matrix.rows()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for (i, m) in membership.iter_mut().enumerate() {
            *m = nearest(matrix.row(i), &centroids).0;
        }
        repair_empty(matrix, &mut centroids, &mut membership);
        let updated = update_means(matrix, &membership, k);
        let movement = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        trace.push(inertia_of(matrix, &centroids, &membership));
        if movement < MOVEMENT_TOLERANCE {
            break;
        }
    }
    (centroids, membership, iterations, trace)
}

/// Lloyd's algorithm started from an earlier partition of the same rows.
///
/// Labels keep their meaning: cluster `j` starts as the mean of the rows
/// `previous` put in cluster `j`.
pub fn kmeans_warm(matrix: &WeightMatrix, previous: &ClusteringResult) -> Result<ClusteringResult> {
    check_partition(matrix, previous)?;
    let k = previous.cluster_count();
    if k == matrix.rows() {
        let (mut res, _) = kmeans_traced(matrix, k, 0)?;
        res.layer = previous.layer;
        return Ok(res);
    }
    let start = update_means(matrix, &previous.membership, k);
    let (centroids, membership, iterations, trace) = lloyd(matrix, start);
    let (mut res, _) = finish(matrix, centroids, membership, iterations, trace)?;
    res.layer = previous.layer;
    Ok(res)
}

pub fn kmeans(matrix: &WeightMatrix, clusters: usize, seed: u64) -> Result<ClusteringResult> {
    kmeans_traced(matrix, clusters, seed).map(|(res, _)| res)
}

/// Seed used for layer `layer` in round `round`; identical on every client.
pub fn layer_seed(seed: u64, round: u32, layer: usize) -> u64 {
    derive_seed(seed, &[0xC1, round as u64, layer as u64])
}

/// Clusters every layer of `model` with the adaptive cluster count.
pub fn do_clustering(
    model: &LayeredModel,
    beta: f64,
    seed: u64,
    round: u32,
) -> Result<ModelClustering> {
    let layers = model
        .layers()
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let k = adaptive_cluster_count(w.rows(), beta)?;
            let mut res = kmeans(w, k, layer_seed(seed, round, j))?;
            res.layer = j;
            Ok(res)
        })
        .collect::<Result<_>>()?;
    ModelClustering::new(layers)
}

fn check_previous(model: &LayeredModel, previous: &ModelClustering) -> Result<()> {
    if model.layers().len() != previous.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "model has {} layers, previous clustering {}",
            model.layers().len(),
            previous.layers.len()
        )));
    }
    Ok(())
}

/// Checks that `previous` partitions exactly the rows of `matrix` into non-empty clusters.
fn check_partition(matrix: &WeightMatrix, previous: &ClusteringResult) -> Result<()> {
    let r = matrix.rows();
    let k = previous.cluster_count();
    if previous.membership.len() != r || previous.centroids.cols() != matrix.cols() {
        return Err(Error::InvalidArgument(format!(
            "previous clustering is for a {}x{} layer, got {}x{}",
            previous.membership.len(),
            previous.centroids.cols(),
            r,
            matrix.cols()
        )));
    }
    if let Some((row, &label)) = previous
        .membership
        .iter()
        .enumerate()
        .find(|(_, &m)| m >= k)
    {
        return Err(Error::CorruptMembership {
            layer: previous.layer,
            row,
            label,
            clusters: k,
        });
    }
    if previous.cluster_sizes().contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "layer {}: previous partition has an empty cluster",
            previous.layer
        )));
    }
    Ok(())
}

/// Warm-started re-clustering of every layer; see [`kmeans_warm`].
pub fn recluster(model: &LayeredModel, previous: &ModelClustering) -> Result<ModelClustering> {
    check_previous(model, previous)?;
    let layers = model
        .layers()
        .iter()
        .zip(&previous.layers)
        .map(|(w, prev)| kmeans_warm(w, prev))
        .collect::<Result<_>>()?;
    ModelClustering::new(layers)
}

/// Keeps every layer's partition from `previous` and recomputes the centroids
/// from the rows of `model`.
pub fn refit(model: &LayeredModel, previous: &ModelClustering) -> Result<ModelClustering> {
    check_previous(model, previous)?;
    let layers = model
        .layers()
        .iter()
        .zip(&previous.layers)
        .map(|(w, prev)| {
            check_partition(w, prev)?;
            let k = prev.cluster_count();
            let centroids = update_means(w, &prev.membership, k);
            let inertia = inertia_of(w, &centroids, &prev.membership);
            Ok(ClusteringResult {
                layer: prev.layer,
                centroids: WeightMatrix::new(k, w.cols(), centroids.concat())?,
                membership: prev.membership.clone(),
                inertia,
                iterations: 0,
            })
        })
        .collect::<Result<_>>()?;
    ModelClustering::new(layers)
}

/// Fraction of rows (over all layers) that carry the same label in both clusterings.
pub fn membership_agreement(a: &ModelClustering, b: &ModelClustering) -> Result<f64> {
    if a.layers.len() != b.layers.len() {
        return Err(Error::InvalidArgument(
            "clusterings cover different layer counts".into(),
        ));
    }
    let mut same = 0usize;
    let mut total = 0usize;
    for (la, lb) in a.layers.iter().zip(&b.layers) {
        if la.membership.len() != lb.membership.len() {
            return Err(Error::InvalidArgument(format!(
                "layer {} has {} vs {} rows",
                la.layer,
                la.membership.len(),
                lb.membership.len()
            )));
        }
        total += la.membership.len();
        same += la
            .membership
            .iter()
            .zip(&lb.membership)
            .filter(|(x, y)| x == y)
            .count();
    }
    Ok(same as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::init_mlp;

    fn column(values: &[f64]) -> WeightMatrix {
        WeightMatrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn cluster_count_rule() {
        assert_eq!(adaptive_cluster_count(250_000, 0.2).unwrap(), 50_000);
        assert_eq!(adaptive_cluster_count(256, 0.2).unwrap(), 51);
        assert_eq!(adaptive_cluster_count(10, 0.05).unwrap(), 1);
        assert_eq!(adaptive_cluster_count(100, 0.29).unwrap(), 29);
        assert_eq!(adaptive_cluster_count(7, 1.0).unwrap(), 7);
        assert!(adaptive_cluster_count(10, 0.0).is_err());
        assert!(adaptive_cluster_count(10, 1.01).is_err());
        assert!(adaptive_cluster_count(10, f64::NAN).is_err());
    }

    #[test]
    fn two_obvious_groups() {
        let res = kmeans(&column(&[0.0, 0.0, 10.0, 10.0]), 2, 1).unwrap();
        assert_eq!(res.membership(), &[0, 0, 1, 1]);
        assert_eq!(res.centroids().values(), &[0.0, 10.0]);
        assert_eq!(res.inertia(), 0.0);
    }

    #[test]
    fn single_cluster_is_column_mean() {
        let m = WeightMatrix::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]).unwrap();
        let res = kmeans(&m, 1, 0).unwrap();
        assert_eq!(res.centroids().values(), &[3.0, 5.0]);
        assert_eq!(res.membership(), &[0, 0, 0]);
    }

    #[test]
    fn full_cluster_count_is_lossless() {
        let m = WeightMatrix::new(4, 2, vec![1.0, 2.0, -3.0, 4.0, 5.0, 6.0, 0.5, 0.25]).unwrap();
        let res = kmeans(&m, 4, 9).unwrap();
        assert_eq!(res.reconstruct(), m);
        assert_eq!(res.inertia(), 0.0);
        let mut seen = res.membership().to_vec();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn too_many_clusters_rejected() {
        assert!(matches!(
            kmeans(&column(&[1.0, 2.0]), 3, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(kmeans(&column(&[1.0, 2.0]), 0, 0).is_err());
    }

    #[test]
    fn duplicate_rows_still_fill_every_cluster() {
        let res = kmeans(&column(&[1.0, 1.0, 1.0, 1.0, 2.0]), 3, 4).unwrap();
        assert!(res.cluster_sizes().iter().all(|&s| s > 0));
        assert_eq!(res.cluster_sizes().iter().sum::<usize>(), 5);
    }

    #[test]
    fn labels_are_canonical() {
        let res = kmeans(&column(&[9.0, 0.0, 9.1, 0.1, 5.0]), 3, 21).unwrap();
        let mut first_seen = Vec::new();
        for &m in res.membership() {
            if !first_seen.contains(&m) {
                first_seen.push(m);
            }
        }
        assert_eq!(first_seen, vec![0, 1, 2]);
    }

    #[test]
    fn per_layer_counts_follow_beta() {
        let model = LayeredModel::new(vec![
            WeightMatrix::new(100, 2, (0..200).map(|v| (v as f64).sin()).collect()).unwrap(),
            WeightMatrix::new(7, 3, (0..21).map(|v| (v as f64).cos()).collect()).unwrap(),
        ])
        .unwrap();
        let mc = do_clustering(&model, 0.3, 5, 1).unwrap();
        let counts: Vec<usize> = mc.layers().iter().map(|l| l.cluster_count()).collect();
        assert_eq!(counts, vec![30, 2]);
        assert_eq!(mc.layers()[1].layer, 1);
    }

    #[test]
    fn beta_one_reproduces_layers() {
        let model = init_mlp(&[6, 5, 1], 3).unwrap();
        let mc = do_clustering(&model, 1.0, 5, 1).unwrap();
        for (layer, res) in model.layers().iter().zip(mc.layers()) {
            assert_eq!(res.centroids().shape(), layer.shape());
            assert_eq!(&res.reconstruct(), layer);
        }
    }

    #[test]
    fn shared_seed_gives_identical_results() {
        let model = init_mlp(&[12, 9, 1], 8).unwrap();
        let a = do_clustering(&model, 0.4, 77, 3).unwrap();
        let b = do_clustering(&model, 0.4, 77, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(membership_agreement(&a, &b).unwrap(), 1.0);
        assert_ne!(layer_seed(77, 3, 0), layer_seed(77, 4, 0));
    }
}
