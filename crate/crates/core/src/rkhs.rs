//! Inner products, distances and Gram matrices of discrete currents under the
//! vector-valued Gaussian kernel `K(x, y) α = exp(-‖x - y‖² / λ²) α`.
//!
//! Every pairwise quantity reduces to the double sum
//! `⟨a, b⟩ = w_a w_b Σ_i Σ_j k(x^a_i, x^b_j) (τ^a_i · τ^b_j)`, accumulated
//! sequentially (i-major, j-minor) with Neumaier compensation so results do
//! not depend on how callers parallelise across pairs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::ShapeAtoms;
use crate::vec3::{self, Vec3};

/// Scaled squared distances above this give kernel values below `e^-700`,
/// which are flushed to zero.
pub const UNDERFLOW_EXPONENT: f64 = 700.0;

/// Smallest cutoff radius, in multiples of λ, accepted in approximate mode.
pub const MIN_CUTOFF_LAMBDAS: f64 = 8.0;

/// Anything that can be read as a weighted finite sum of Dirac currents.
pub trait Current {
    fn dim(&self) -> usize;
    fn centers(&self) -> &[Vec3];
    fn taus(&self) -> &[Vec3];
    fn weight(&self) -> f64 {
        1.0
    }
}

impl Current for ShapeAtoms {
    fn dim(&self) -> usize {
        ShapeAtoms::dim(self)
    }
    fn centers(&self) -> &[Vec3] {
        ShapeAtoms::centers(self)
    }
    fn taus(&self) -> &[Vec3] {
        ShapeAtoms::taus(self)
    }
}

/// Scalar kernel seam. The operator-valued kernel is `k(x, y)` times the identity.
pub trait ScalarKernel: Sync {
    /// Kernel value as a function of the squared distance.
    fn eval_sq(&self, dist2: f64) -> f64;

    /// Pairs farther apart than this squared radius may be skipped.
    fn cutoff_sq(&self) -> Option<f64> {
        None
    }
}

/// Gaussian bandwidth and ambient dimension; together they fix the RKHS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    lambda: f64,
    dim: usize,
    cutoff: Option<f64>,
}

impl KernelConfig {
    pub fn new(lambda: f64, dim: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidLambda(lambda));
        }
        if dim != 2 && dim != 3 {
            return Err(Error::Validation(format!("dimension must be 2 or 3, got {dim}")));
        }
        Ok(KernelConfig {
            lambda,
            dim,
            cutoff: None,
        })
    }

    /// Approximate mode: atom pairs farther apart than `radius` are skipped.
    /// The radius must be at least [`MIN_CUTOFF_LAMBDAS`]·λ.
    pub fn with_approximate_cutoff(mut self, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius < MIN_CUTOFF_LAMBDAS * self.lambda {
            return Err(Error::Validation(format!(
                "cutoff {radius} is below {MIN_CUTOFF_LAMBDAS}λ = {}",
                MIN_CUTOFF_LAMBDAS * self.lambda
            )));
        }
        self.cutoff = Some(radius);
        Ok(self)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_approximate(&self) -> bool {
        self.cutoff.is_some()
    }
}

impl ScalarKernel for KernelConfig {
    #[inline]
    fn eval_sq(&self, dist2: f64) -> f64 {
        let q = dist2 / (self.lambda * self.lambda);
        if q > UNDERFLOW_EXPONENT {
            0.0
        } else {
            (-q).exp()
        }
    }

    fn cutoff_sq(&self) -> Option<f64> {
        self.cutoff.map(|r| r * r)
    }
}

/// Gaussian kernel value `exp(-‖x - y‖² / λ²)`.
pub fn kernel_scalar(x: Vec3, y: Vec3, cfg: &KernelConfig) -> f64 {
    cfg.eval_sq(vec3::dist2(x, y))
}

/// Neumaier's compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// RKHS inner product of two currents under an arbitrary scalar kernel.
pub fn inner_product_with<K, A, B>(kernel: &K, a: &A, b: &B) -> Result<f64>
where
    K: ScalarKernel + ?Sized,
    A: Current + ?Sized,
    B: Current + ?Sized,
{
    check_dims(a.dim(), b.dim())?;
    let cutoff = kernel.cutoff_sq();
    let (bx, bt) = (b.centers(), b.taus());
    let mut acc = CompensatedSum::default();
    for (&xa, &ta) in a.centers().iter().zip(a.taus()) {
        for (&xb, &tb) in bx.iter().zip(bt) {
            let d2 = vec3::dist2(xa, xb);
            if cutoff.is_some_and(|c| d2 > c) {
                continue;
            }
            acc.add(kernel.eval_sq(d2) * vec3::dot(ta, tb));
        }
    }
    Ok(a.weight() * b.weight() * acc.value())
}

/// `⟨a, b⟩` in the Gaussian RKHS fixed by `cfg`.
pub fn inner_product<A, B>(a: &A, b: &B, cfg: &KernelConfig) -> Result<f64>
where
    A: Current + ?Sized,
    B: Current + ?Sized,
{
    check_dims(cfg.dim(), a.dim())?;
    inner_product_with(cfg, a, b)
}

/// RKHS distance `sqrt(⟨a,a⟩ - 2⟨a,b⟩ + ⟨b,b⟩)`, with negative round-off clamped to 0.
pub fn distance<A, B>(a: &A, b: &B, cfg: &KernelConfig) -> Result<f64>
where
    A: Current + ?Sized,
    B: Current + ?Sized,
{
    let ab = inner_product(a, b, cfg)?;
    let aa = inner_product(a, a, cfg)?;
    let bb = inner_product(b, b, cfg)?;
    Ok((aa - 2.0 * ab + bb).max(0.0).sqrt())
}

/// A scalar multiple of a concatenation of atoms: an element of the RKHS
/// that need not come from any single shape (e.g. a sample mean).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAtoms {
    dim: usize,
    centers: Vec<Vec3>,
    taus: Vec<Vec3>,
    weight: f64,
}

impl WeightedAtoms {
    pub fn new(atoms: &ShapeAtoms, weight: f64) -> Result<Self> {
        if !weight.is_finite() {
            return Err(Error::Validation(format!("non-finite weight {weight}")));
        }
        Ok(WeightedAtoms {
            dim: atoms.dim(),
            centers: atoms.centers().to_vec(),
            taus: atoms.taus().to_vec(),
            weight,
        })
    }

    /// `Σ_l c_l φ_l`, with each coefficient folded into that member's τ.
    pub fn linear_combination(terms: &[(f64, &ShapeAtoms)]) -> Result<Self> {
        let (_, first) = terms.first().ok_or(Error::EmptySample)?;
        let dim = first.dim();
        let mut centers = Vec::new();
        let mut taus = Vec::new();
        for &(coef, shape) in terms {
            check_dims(dim, shape.dim())?;
            if !coef.is_finite() {
                return Err(Error::Validation(format!("non-finite coefficient {coef}")));
            }
            centers.extend_from_slice(shape.centers());
            taus.extend(shape.taus().iter().map(|t| vec3::scale(*t, coef)));
        }
        Ok(WeightedAtoms {
            dim,
            centers,
            taus,
            weight: 1.0,
        })
    }
}

impl Current for WeightedAtoms {
    fn dim(&self) -> usize {
        self.dim
    }
    fn centers(&self) -> &[Vec3] {
        &self.centers
    }
    fn taus(&self) -> &[Vec3] {
        &self.taus
    }
    fn weight(&self) -> f64 {
        self.weight
    }
}

/// Sample mean: all members' atoms concatenated with weight `1/m`.
pub fn mean_field(shapes: &[ShapeAtoms]) -> Result<WeightedAtoms> {
    let first = shapes.first().ok_or(Error::EmptySample)?;
    let mut centers = Vec::new();
    let mut taus = Vec::new();
    for s in shapes {
        check_dims(first.dim(), s.dim())?;
        centers.extend_from_slice(s.centers());
        taus.extend_from_slice(s.taus());
    }
    Ok(WeightedAtoms {
        dim: first.dim(),
        centers,
        taus,
        weight: 1.0 / shapes.len() as f64,
    })
}

/// How the bandwidth heuristic reads "spread of the atom centers".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaHeuristic {
    /// Root-mean-square distance of pooled centers to their mean.
    #[default]
    PooledRms,
    /// Standard deviation of all center coordinates pooled as scalars
    /// about their per-axis means (`PooledRms / sqrt(dim)`).
    PooledCoordinate,
}

impl std::str::FromStr for LambdaHeuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rms" => Ok(LambdaHeuristic::PooledRms),
            "coordinate" => Ok(LambdaHeuristic::PooledCoordinate),
            other => Err(Error::Validation(format!("unknown lambda heuristic {other:?}"))),
        }
    }
}

/// Bandwidth from the spread of all atom centers pooled across `shapes`.
pub fn lambda_heuristic(shapes: &[ShapeAtoms], mode: LambdaHeuristic) -> Result<f64> {
    let first = shapes.first().ok_or(Error::EmptySample)?;
    let dim = first.dim();
    let mut n = 0usize;
    let mut sum = [0.0; 3];
    for s in shapes {
        check_dims(dim, s.dim())?;
        for c in s.centers() {
            sum = vec3::add(sum, *c);
            n += 1;
        }
    }
    if n < 2 {
        return Err(Error::DegeneratePointCloud);
    }
    let mean = vec3::scale(sum, 1.0 / n as f64);
    let mut acc = CompensatedSum::default();
    for s in shapes {
        for c in s.centers() {
            acc.add(vec3::dist2(*c, mean));
        }
    }
    let rms = (acc.value() / n as f64).sqrt();
    let scale = mean.iter().map(|c| c.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if rms.is_nan() || rms <= 1e-12 * scale {
        return Err(Error::DegeneratePointCloud);
    }
    Ok(match mode {
        LambdaHeuristic::PooledRms => rms,
        LambdaHeuristic::PooledCoordinate => rms / (dim as f64).sqrt(),
    })
}

/// Symmetric matrix of pairwise RKHS inner products over a shape collection.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    m: usize,
    entries: Vec<f64>,
    lambda: Option<f64>,
    dim: Option<usize>,
    shape_ids: Vec<String>,
}

/// Tolerances used by [`GramMatrix::validate`].
pub const SYMMETRY_REL_TOL: f64 = 1e-10;
pub const PSD_REL_TOL: f64 = 1e-8;

/// Spectrum summary returned by [`GramMatrix::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramSpectrum {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub max_asymmetry: f64,
}

fn default_ids(m: usize) -> Vec<String> {
    (0..m).map(|i| i.to_string()).collect()
}

impl GramMatrix {
    /// Wraps a row-major `m × m` matrix. Shape ids default to `"0"..`.
    pub fn from_entries(m: usize, entries: Vec<f64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyGram);
        }
        if entries.len() != m * m {
            return Err(Error::LengthMismatch {
                left: entries.len(),
                right: m * m,
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGram("non-finite entry".into()));
        }
        Ok(GramMatrix {
            m,
            entries,
            lambda: None,
            dim: None,
            shape_ids: default_ids(m),
        })
    }

    pub fn with_shape_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.m {
            return Err(Error::LengthMismatch {
                left: ids.len(),
                right: self.m,
            });
        }
        self.shape_ids = ids;
        Ok(self)
    }

    pub fn with_kernel(mut self, lambda: f64, dim: usize) -> Self {
        self.lambda = Some(lambda);
        self.dim = Some(dim);
        self
    }

    pub fn size(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn shape_ids(&self) -> &[String] {
        &self.shape_ids
    }

    /// RKHS distance between shapes `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (self.get(i, i) - 2.0 * self.get(i, j) + self.get(j, j))
            .max(0.0)
            .sqrt()
    }

    /// Sub-matrix over `indices`, keeping their order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let entries = indices
            .iter()
            .flat_map(|&i| indices.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        let mut out = GramMatrix::from_entries(indices.len(), entries)?;
        out.lambda = self.lambda;
        out.dim = self.dim;
        out.shape_ids = indices.iter().map(|&i| self.shape_ids[i].clone()).collect();
        Ok(out)
    }

    /// Checks symmetry, a nonnegative diagonal and positive semi-definiteness.
    pub fn validate(&self) -> Result<GramSpectrum> {
        let scale = self.entries.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut max_asymmetry: f64 = 0.0;
        for i in 0..self.m {
            if self.get(i, i) < 0.0 {
                return Err(Error::InvalidGram(format!(
                    "negative diagonal entry {} at {i}",
                    self.get(i, i)
                )));
            }
            for j in (i + 1)..self.m {
                max_asymmetry = max_asymmetry.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        if max_asymmetry > SYMMETRY_REL_TOL * scale {
            return Err(Error::InvalidGram(format!(
                "asymmetry {max_asymmetry:e} exceeds {SYMMETRY_REL_TOL:e} relative"
            )));
        }
        let mat = nalgebra::DMatrix::from_fn(self.m, self.m, |i, j| {
            0.5 * (self.get(i, j) + self.get(j, i))
        });
        let eig = nalgebra::SymmetricEigen::new(mat).eigenvalues;
        let min_eigenvalue = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let max_eigenvalue = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min_eigenvalue < -PSD_REL_TOL * max_eigenvalue.max(0.0) {
            return Err(Error::InvalidGram(format!(
                "not PSD: smallest eigenvalue {min_eigenvalue:e}, largest {max_eigenvalue:e}"
            )));
        }
        Ok(GramSpectrum {
            min_eigenvalue,
            max_eigenvalue,
            max_asymmetry,
        })
    }
}

/// Gram matrix of `shapes`. Each unordered pair is computed once; pairs run in
/// parallel but every entry is its own sequential double sum, so the result is
/// bitwise identical at any thread count.
pub fn gram_matrix(shapes: &[ShapeAtoms], cfg: &KernelConfig) -> Result<GramMatrix> {
    gram_matrix_with(cfg, shapes).map(|g| g.with_kernel(cfg.lambda(), cfg.dim()))
}

/// [`gram_matrix`] under an arbitrary scalar kernel.
pub fn gram_matrix_with<K: ScalarKernel>(kernel: &K, shapes: &[ShapeAtoms]) -> Result<GramMatrix> {
    let m = shapes.len();
    if m == 0 {
        return Err(Error::EmptyGram);
    }
    let dim = shapes[0].dim();
    for s in shapes {
        check_dims(dim, s.dim())?;
    }
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| inner_product_with(kernel, &shapes[i], &shapes[j]))
        .collect::<Result<Vec<f64>>>()?;
    let mut entries = vec![0.0; m * m];
    for (&(i, j), v) in pairs.iter().zip(values) {
        entries[i * m + j] = v;
        entries[j * m + i] = v;
    }
    GramMatrix::from_entries(m, entries)
}
