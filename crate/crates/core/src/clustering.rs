//! Kernel k-means over a Gram matrix.
//!
//! Centroids are never materialised: a cluster's mean is the index set of its
//! members, and point-to-centroid distances expand into Gram sums
//! `‖φ_l − φ̄_C‖² = G_ll − (2/|C|) Σ_{m∈C} G_lm + (1/|C|²) Σ_{m,m'∈C} G_mm'`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rkhs::GramMatrix;

/// Squared RKHS distance from shape `l` to the mean of `cluster`, clamped at 0.
pub fn point_to_centroid_sq(gram: &GramMatrix, l: usize, cluster: &[usize]) -> Result<f64> {
    if cluster.is_empty() {
        return Err(Error::EmptyCluster { cluster: 0 });
    }
    let n = cluster.len() as f64;
    let cross: f64 = cluster.iter().map(|&m| gram.get(l, m)).sum();
    let intra: f64 = cluster
        .iter()
        .map(|&m| cluster.iter().map(|&mm| gram.get(m, mm)).sum::<f64>())
        .sum();
    Ok((gram.get(l, l) - 2.0 * cross / n + intra / (n * n)).max(0.0))
}

/// Per-cluster sums for one partition, shared read-only by the assignment step.
struct ClusterSums {
    k: usize,
    sizes: Vec<usize>,
    /// Σ_{m,m'∈C} G_mm' per cluster.
    intra: Vec<f64>,
    /// Σ_{m∈C} G_lm, row-major m × k.
    cross: Vec<f64>,
}

impl ClusterSums {
    fn new(gram: &GramMatrix, assignment: &[usize], k: usize) -> Self {
        let m = gram.size();
        let mut sizes = vec![0usize; k];
        for &c in assignment {
            sizes[c] += 1;
        }
        let cross: Vec<f64> = (0..m)
            .into_par_iter()
            .flat_map_iter(|l| {
                let row = gram.row(l);
                let mut acc = vec![0.0; k];
                for (&c, &g) in assignment.iter().zip(row) {
                    acc[c] += g;
                }
                acc
            })
            .collect();
        let mut intra = vec![0.0; k];
        for (l, &c) in assignment.iter().enumerate() {
            intra[c] += cross[l * k + c];
        }
        ClusterSums {
            k,
            sizes,
            intra,
            cross,
        }
    }

    #[inline]
    fn dist_sq(&self, gram: &GramMatrix, l: usize, c: usize) -> f64 {
        let n = self.sizes[c];
        if n == 0 {
            return f64::INFINITY;
        }
        let n = n as f64;
        (gram.get(l, l) - 2.0 * self.cross[l * self.k + c] / n + self.intra[c] / (n * n)).max(0.0)
    }

    /// Nearest centroid; ties go to the lowest cluster index.
    fn nearest(&self, gram: &GramMatrix, l: usize) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..self.k {
            let d = self.dist_sq(gram, l, c);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    fn objective(&self, gram: &GramMatrix, assignment: &[usize]) -> f64 {
        let mut diag = vec![0.0; self.k];
        for (l, &c) in assignment.iter().enumerate() {
            diag[c] += gram.get(l, l);
        }
        (0..self.k)
            .filter(|&c| self.sizes[c] > 0)
            .map(|c| (diag[c] - self.intra[c] / self.sizes[c] as f64).max(0.0))
            .sum()
    }
}

fn check_assignment(gram: &GramMatrix, assignment: &[usize]) -> Result<usize> {
    if assignment.len() != gram.size() {
        return Err(Error::LengthMismatch {
            left: assignment.len(),
            right: gram.size(),
        });
    }
    let k = assignment.iter().max().map_or(0, |&c| c + 1);
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    if let Some(cluster) = sizes.iter().position(|&n| n == 0) {
        return Err(Error::EmptyCluster { cluster });
    }
    Ok(k)
}

/// Within-cluster sum of squared RKHS distances to the cluster means.
pub fn objective(gram: &GramMatrix, assignment: &[usize]) -> Result<f64> {
    let k = check_assignment(gram, assignment)?;
    Ok(ClusterSums::new(gram, assignment, k).objective(gram, assignment))
}

/// How a run picks its initial partition.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Init {
    /// D² sampling of `k` seed shapes, then nearest-seed assignment.
    #[default]
    KMeansPlusPlus,
    /// Each shape assigned to a uniformly random cluster.
    Random,
    /// A caller-supplied partition; restarts are skipped.
    Provided(Vec<usize>),
}

impl Init {
    pub fn name(&self) -> &'static str {
        match self {
            Init::KMeansPlusPlus => "kmeans++",
            Init::Random => "random",
            Init::Provided(_) => "provided",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOptions {
    pub seed: u64,
    pub init: Init,
    pub max_iter: usize,
    pub restarts: usize,
    /// Stop early once W decreases by at most this much; 0 means run to a fixed point.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            seed: 0,
            init: Init::default(),
            max_iter: 100,
            restarts: 10,
            tol: 0.0,
        }
    }
}

impl KMeansOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

/// Result of kernel k-means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub init: String,
    pub restarts_used: usize,
    pub converged: bool,
    pub iterations: usize,
    pub assignment: Vec<usize>,
    pub objective_trace: Vec<f64>,
}

impl ClusterModel {
    /// Final objective value W.
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    pub fn cluster_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (l, &c) in self.assignment.iter().enumerate() {
            out[c].push(l);
        }
        out
    }
}

fn kmeanspp_seeds(gram: &GramMatrix, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let m = gram.size();
    let mut seeds = vec![rng.random_range(0..m)];
    let mut d2: Vec<f64> = (0..m).map(|l| gram.distance(l, seeds[0]).powi(2)).collect();
    while seeds.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (l, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(l);
                    break;
                }
            }
            // rounding can leave target just above the final partial sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            let rest: Vec<usize> = (0..m).filter(|l| !seeds.contains(l)).collect();
            rest[rng.random_range(0..rest.len())]
        };
        seeds.push(next);
        for (l, d) in d2.iter_mut().enumerate() {
            *d = d.min(gram.distance(l, next).powi(2));
        }
    }
    seeds
}

fn nearest_seed(gram: &GramMatrix, seeds: &[usize]) -> Vec<usize> {
    (0..gram.size())
        .map(|l| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &s) in seeds.iter().enumerate() {
                let d = gram.distance(l, s);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Moves the point farthest from its own centroid into each empty cluster.
/// Donor clusters keep at least one member. Never increases W.
fn repair_empty(gram: &GramMatrix, assignment: &mut [usize], k: usize) {
    loop {
        let sums = ClusterSums::new(gram, assignment, k);
        let Some(empty) = sums.sizes.iter().position(|&n| n == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (l, &c) in assignment.iter().enumerate() {
            if sums.sizes[c] < 2 {
                continue;
            }
            let d = sums.dist_sq(gram, l, c);
            if d > far_d {
                far_d = d;
                far = Some(l);
            }
        }
        let l = far.expect("k <= m guarantees a donor cluster");
        assignment[l] = empty;
    }
}

struct Run {
    assignment: Vec<usize>,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
}

fn lloyd(gram: &GramMatrix, k: usize, mut assignment: Vec<usize>, opts: &KMeansOptions) -> Run {
    repair_empty(gram, &mut assignment, k);
    let mut sums = ClusterSums::new(gram, &assignment, k);
    let mut trace = vec![sums.objective(gram, &assignment)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut next: Vec<usize> = (0..gram.size())
            .into_par_iter()
            .map(|l| sums.nearest(gram, l))
            .collect();
        repair_empty(gram, &mut next, k);
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
        sums = ClusterSums::new(gram, &assignment, k);
        let w = sums.objective(gram, &assignment);
        let prev = *trace.last().unwrap();
        trace.push(w);
        if opts.tol > 0.0 && prev - w <= opts.tol {
            converged = true;
            break;
        }
    }
    Run {
        assignment,
        trace,
        converged,
        iterations,
    }
}

/// Independent RNG stream for restart `restart` of a run seeded with `seed`.
pub fn restart_rng(seed: u64, restart: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart);
    rng
}

/// Kernel k-means: alternates nearest-centroid assignment with implicit mean
/// updates until the partition stops changing, keeping the best of
/// `opts.restarts` runs (ties go to the earliest restart).
pub fn kernel_kmeans(gram: &GramMatrix, k: usize, opts: &KMeansOptions) -> Result<ClusterModel> {
    let m = gram.size();
    if m == 0 {
        return Err(Error::EmptyGram);
    }
    if k == 0 || k > m {
        return Err(Error::InvalidK { k, m });
    }
    let restarts = match opts.init {
        Init::Provided(_) => 1,
        _ => opts.restarts.max(1),
    };
    if let Init::Provided(given) = &opts.init {
        if given.len() != m {
            return Err(Error::LengthMismatch {
                left: given.len(),
                right: m,
            });
        }
        if given.iter().any(|&c| c >= k) {
            return Err(Error::Validation(format!(
                "provided assignment has labels outside 0..{k}"
            )));
        }
    }
    let runs: Vec<Run> = (0..restarts as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(opts.seed, r);
            let initial = match &opts.init {
                Init::KMeansPlusPlus => nearest_seed(gram, &kmeanspp_seeds(gram, k, &mut rng)),
                Init::Random => (0..m).map(|_| rng.random_range(0..k)).collect(),
                Init::Provided(given) => given.clone(),
            };
            lloyd(gram, k, initial, opts)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, run| {
            if run.trace.last() < best.trace.last() {
                run
            } else {
                best
            }
        })
        .expect("at least one restart");
    Ok(ClusterModel {
        k,
        seed: opts.seed,
        init: opts.init.name().to_string(),
        restarts_used: restarts,
        converged: best.converged,
        iterations: best.iterations,
        assignment: best.assignment,
        objective_trace: best.trace,
    })
}

/// Silhouette scores of a partition under the RKHS distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub k: usize,
    pub per_shape_silhouette: Vec<f64>,
    pub mean_silhouette: f64,
    #[serde(rename = "W")]
    pub w: f64,
}

/// Standard silhouette; members of singleton clusters score 0.
pub fn silhouette(gram: &GramMatrix, assignment: &[usize]) -> Result<ValidationReport> {
    let k = check_assignment(gram, assignment)?;
    if k < 2 {
        return Err(Error::SingleCluster);
    }
    let m = gram.size();
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    let per_shape: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|l| {
            let own = assignment[l];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut totals = vec![0.0; k];
            for j in 0..m {
                if j != l {
                    totals[assignment[j]] += gram.distance(l, j);
                }
            }
            let a = totals[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| totals[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    let mean = per_shape.iter().sum::<f64>() / m as f64;
    Ok(ValidationReport {
        k,
        per_shape_silhouette: per_shape,
        mean_silhouette: mean,
        w: objective(gram, assignment)?,
    })
}

/// One row of a k sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    #[serde(rename = "W")]
    pub w: f64,
    pub mean_silhouette: Option<f64>,
    pub converged: bool,
}

/// Runs kernel k-means for each k with shared options; silhouette is omitted for k = 1.
pub fn sweep_k(
    gram: &GramMatrix,
    ks: impl IntoIterator<Item = usize>,
    opts: &KMeansOptions,
) -> Result<Vec<SweepRow>> {
    ks.into_iter()
        .map(|k| {
            let model = kernel_kmeans(gram, k, opts)?;
            let mean_silhouette = if k >= 2 {
                Some(silhouette(gram, &model.assignment)?.mean_silhouette)
            } else {
                None
            };
            Ok(SweepRow {
                k,
                w: model.objective(),
                mean_silhouette,
                converged: model.converged,
            })
        })
        .collect()
}

fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index from the pair-counting contingency table.
///
/// When both labelings are trivially uninformative in the same way (the
/// expected and maximum indices coincide) the score is 1.
pub fn adjusted_rand_index<A, B>(labels_a: &[A], labels_b: &[B]) -> Result<f64>
where
    A: Eq + std::hash::Hash,
    B: Eq + std::hash::Hash,
{
    if labels_a.len() != labels_b.len() {
        return Err(Error::LengthMismatch {
            left: labels_a.len(),
            right: labels_b.len(),
        });
    }
    let n = labels_a.len();
    if n < 2 {
        return Err(Error::Validation("ARI needs at least two items".into()));
    }
    let mut table: HashMap<(&A, &B), usize> = HashMap::new();
    let mut rows: HashMap<&A, usize> = HashMap::new();
    let mut cols: HashMap<&B, usize> = HashMap::new();
    for (a, b) in labels_a.iter().zip(labels_b) {
        *table.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| pairs(c)).sum();
    let expected = sum_rows * sum_cols / pairs(n);
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}
