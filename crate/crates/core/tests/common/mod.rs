#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shape_currents::{GramMatrix, ShapeAtoms};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random atoms: centers in a box of side `spread`, unit-scale random τ.
pub fn random_shape(rng: &mut impl Rng, dim: usize, atoms: usize, spread: f64) -> ShapeAtoms {
    let pick = |rng: &mut dyn rand::RngCore, s: f64| {
        let mut v = [0.0; 3];
        for c in v.iter_mut().take(dim) {
            *c = rng.random_range(-s..s);
        }
        v
    };
    let centers = (0..atoms).map(|_| pick(rng, spread)).collect();
    let taus = (0..atoms).map(|_| pick(rng, 1.0)).collect();
    ShapeAtoms::new(dim, centers, taus).unwrap()
}

/// Direct O(p·q) double loop, written independently of the library.
pub fn naive_inner(a: &ShapeAtoms, b: &ShapeAtoms, lambda: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            let x = a.centers()[i];
            let y = b.centers()[j];
            let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2);
            let k = (-d2 / (lambda * lambda)).exp();
            let s = a.taus()[i];
            let t = b.taus()[j];
            total += k * (s[0] * t[0] + s[1] * t[1] + s[2] * t[2]);
        }
    }
    total
}

/// Σ|terms| of the same double sum: the conditioning scale of the inner product.
pub fn naive_abs_sum(a: &ShapeAtoms, b: &ShapeAtoms, lambda: f64) -> f64 {
    let mut total = 0.0;
    for (x, s) in a.centers().iter().zip(a.taus()) {
        for (y, t) in b.centers().iter().zip(b.taus()) {
            let d2: f64 = (0..3).map(|c| (x[c] - y[c]).powi(2)).sum();
            let dot: f64 = (0..3).map(|c| s[c] * t[c]).sum();
            total += ((-d2 / (lambda * lambda)).exp() * dot).abs();
        }
    }
    total
}

/// Random PSD Gram matrix `X Xᵀ` with `m` rows of `features` features.
pub fn random_gram(rng: &mut impl Rng, m: usize, features: usize) -> GramMatrix {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..features).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let entries = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum())
        .collect();
    GramMatrix::from_entries(m, entries).unwrap()
}

/// W for a partition, from explicit feature-free Gram sums (independent of the library).
pub fn brute_objective(g: &GramMatrix, assignment: &[usize], k: usize) -> f64 {
    let mut w = 0.0;
    for c in 0..k {
        let members: Vec<usize> = (0..assignment.len()).filter(|&l| assignment[l] == c).collect();
        let n = members.len() as f64;
        for &l in &members {
            let mut d = g.get(l, l);
            for &m in &members {
                d -= 2.0 * g.get(l, m) / n;
                for &mm in &members {
                    d += g.get(m, mm) / (n * n);
                }
            }
            w += d;
        }
    }
    w
}

/// Minimum W over every partition of `m` items into exactly `k` nonempty clusters.
pub fn exhaustive_optimum(g: &GramMatrix, k: usize) -> f64 {
    let m = g.size();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; m];
    // restricted growth strings enumerate each set partition once
    fn rec(pos: usize, used: usize, k: usize, labels: &mut Vec<usize>, g: &GramMatrix, best: &mut f64) {
        let m = labels.len();
        if m - pos < k - used {
            return;
        }
        if pos == m {
            if used == k {
                *best = best.min(brute_objective(g, labels, k));
            }
            return;
        }
        for c in 0..=used.min(k - 1) {
            labels[pos] = c;
            rec(pos + 1, used.max(c + 1), k, labels, g, best);
        }
    }
    rec(0, 0, k, &mut labels, g, &mut best);
    best
}

/// Gram of `classes` well-separated Gaussian blobs in feature space, plus the planted labels.
pub fn planted_gram(rng: &mut impl Rng, classes: usize, per_class: usize, spread: f64) -> (GramMatrix, Vec<usize>) {
    let features = classes + 1;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..classes {
        for _ in 0..per_class {
            let row: Vec<f64> = (0..features)
                .map(|f| if f == c { 5.0 } else { 0.0 } + rng.random_range(-spread..spread))
                .collect();
            rows.push(row);
            labels.push(c);
        }
    }
    let m = rows.len();
    let entries = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum())
        .collect();
    (GramMatrix::from_entries(m, entries).unwrap(), labels)
}

/// A contour family with randomly drawn parameters.
pub fn random_family(rng: &mut impl Rng) -> shape_currents::Family {
    use shape_currents::Family;
    match rng.random_range(0..3) {
        0 => Family::Ellipse { a: rng.random_range(1.0..3.0), b: rng.random_range(0.5..1.5) },
        1 => Family::RoundedRect {
            half_width: rng.random_range(1.0..3.0),
            half_height: rng.random_range(0.4..1.5),
            exponent: 4.0,
        },
        _ => Family::Star {
            radius: rng.random_range(1.0..2.0),
            amplitude: rng.random_range(0.1..0.4),
            lobes: rng.random_range(3..7),
        },
    }
}

/// Auto-λ Gram of `m` random contours (40 points each).
pub fn random_contour_gram(rng: &mut impl Rng, m: usize) -> GramMatrix {
    use shape_currents::*;
    let shapes: Vec<ShapeAtoms> = (0..m)
        .map(|_| {
            let fam = random_family(rng);
            let seed: u64 = rng.random();
            curve_to_atoms(&gen_contour(&fam, 40, 0.05, seed).unwrap()).unwrap()
        })
        .collect();
    let lambda = lambda_heuristic(&shapes, LambdaHeuristic::PooledRms).unwrap();
    gram_matrix(&shapes, &KernelConfig::new(lambda, 2).unwrap()).unwrap()
}
