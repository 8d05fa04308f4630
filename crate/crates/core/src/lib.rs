//! Closed curves and surfaces as currents in a vector-valued Gaussian-kernel
//! RKHS, with kernel k-means size-and-shape clustering on top.
//!
//! The pipeline:
//!
//! 1. [`geometry`] turns polylines and triangle meshes into atoms
//!    (center, weighted direction) pairs.
//! 2. [`rkhs`] computes exact inner products, distances and Gram matrices
//!    between atom sets under `exp(-‖x − y‖² / λ²)`.
//! 3. [`clustering`] runs kernel k-means on a Gram matrix and scores the
//!    result (silhouette, adjusted Rand index).
//! 4. [`sizing`] builds per-cluster size tables from shape metadata.
//!
//! [`synth`] generates parametric test shapes and the two experimental
//! scenarios (common height, two heights).

pub mod clustering;
pub mod dataset;
pub mod error;
pub mod geometry;
mod gram_io;
pub mod io;
pub mod manifest;
pub mod rkhs;
pub mod sizing;
pub mod synth;
pub mod vec3;

pub use clustering::{
    adjusted_rand_index, kernel_kmeans, objective, point_to_centroid_sq, silhouette, sweep_k,
    ClusterModel, Init, KMeansOptions, SweepRow, ValidationReport,
};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use geometry::{
    curve_to_atoms, mesh_to_atoms, transform_shape, Polyline2D, ShapeAtoms, Similarity, TriMesh,
};
pub use gram_io::GRAM_MAGIC;
pub use io::{load_shape, Geometry, ShapeFormat};
pub use rkhs::{
    distance, gram_matrix, inner_product, kernel_scalar, lambda_heuristic, mean_field, Current,
    GramMatrix, KernelConfig, LambdaHeuristic, WeightedAtoms,
};
pub use synth::{build_scenario, gen_contour, gen_mesh, Family, Scenario, ScenarioSpec};
