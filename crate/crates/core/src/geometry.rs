//! Input geometry and its discretisation into current atoms.
//!
//! A closed curve is represented by one atom per chord: the chord midpoint and
//! the chord vector. A triangulated surface is represented by one atom per
//! face: the barycenter and the half cross product of two edges, whose norm is
//! the triangle area. Both are finite sums of Dirac currents.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Mat3, Vec3};

/// Absolute tolerance for recognising an explicitly repeated closing point.
pub const CLOSURE_TOL: f64 = 1e-9;
/// Degeneracy threshold relative to the bounding-box diagonal (or its square for areas).
pub const DEGENERACY_REL_TOL: f64 = 1e-12;
/// Tolerance on `R^T R - I` for a matrix to count as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

/// An ordered 2D polyline. Closed polylines store each distinct point once;
/// the closing segment from the last point back to the first is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline2D {
    points: Vec<[f64; 2]>,
    closed: bool,
}

impl Polyline2D {
    /// Builds a validated polyline. If the last point repeats the first
    /// (within [`CLOSURE_TOL`]) the repeat is dropped and the polyline is closed.
    pub fn new(mut points: Vec<[f64; 2]>, closed: bool) -> Result<Self> {
        let mut closed = closed;
        if points.len() >= 2 {
            let (first, last) = (points[0], points[points.len() - 1]);
            if (first[0] - last[0]).abs() <= CLOSURE_TOL
                && (first[1] - last[1]).abs() <= CLOSURE_TOL
            {
                points.pop();
                closed = true;
            }
        }
        let needed = if closed { 3 } else { 2 };
        if points.len() < needed {
            return Err(Error::TooFewPoints {
                needed,
                got: points.len(),
            });
        }
        if let Some(p) = points.iter().find(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Validation(format!("non-finite point {p:?}")));
        }
        let poly = Polyline2D { points, closed };
        let diag = vec3::bbox_diagonal(&poly.points3());
        let min_len = DEGENERACY_REL_TOL * diag;
        for (index, next) in poly.segment_indices() {
            let (a, b) = (poly.points[index], poly.points[next]);
            if (a[0] - b[0]).hypot(a[1] - b[1]) <= min_len {
                return Err(Error::DegenerateSegment { index, next });
            }
        }
        Ok(poly)
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    /// Same curve traversed in the opposite direction.
    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        if self.closed {
            // keep the starting point so segment j maps to segment p-1-j
            points[1..].reverse();
        } else {
            points.reverse();
        }
        Polyline2D {
            points,
            closed: self.closed,
        }
    }

    /// Twice the signed enclosed area (shoelace); positive for counter-clockwise.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        let mut acc = 0.0;
        for i in 0..n {
            let (a, b) = (self.points[i], self.points[(i + 1) % n]);
            acc += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * acc
    }

    fn points3(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| [p[0], p[1], 0.0]).collect()
    }

    fn segment_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.points.len();
        (0..self.segment_count()).map(move |i| (i, (i + 1) % n))
    }
}

/// A triangle mesh with orientation-bearing faces.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Validates face indices and rejects zero-area faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::Validation("mesh has no faces".into()));
        }
        if let Some(v) = vertices.iter().find(|v| !vec3::is_finite(**v)) {
            return Err(Error::Validation(format!("non-finite vertex {v:?}")));
        }
        let n = vertices.len();
        for (face, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange {
                    face,
                    index,
                    vertices: n,
                });
            }
        }
        let diag = vec3::bbox_diagonal(&vertices);
        let min_area = DEGENERACY_REL_TOL * diag * diag;
        let mesh = TriMesh { vertices, faces };
        for face in 0..mesh.faces.len() {
            if vec3::norm(mesh.face_normal(face)) <= min_area {
                return Err(Error::DegenerateFace { face });
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Half cross product of the face's two edges from its first vertex.
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.faces[face].map(|i| self.vertices[i]);
        vec3::scale(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)), 0.5)
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| vec3::norm(self.face_normal(f)))
            .sum()
    }

    /// Enclosed volume by the divergence theorem; positive for outward normals.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                vec3::dot(a, vec3::cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Every undirected edge must be used by exactly two faces, once in each direction.
    pub fn check_closed(&self) -> Result<()> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (face, f) in self.faces.iter().enumerate() {
            for e in 0..3 {
                let edge = (f[e], f[(e + 1) % 3]);
                if let Some(other) = directed.insert(edge, face) {
                    return Err(Error::NotClosed(format!(
                        "directed edge {edge:?} used by faces {other} and {face}"
                    )));
                }
            }
        }
        if let Some((&(a, b), face)) = directed.iter().find(|(&(a, b), _)| !directed.contains_key(&(b, a))) {
            return Err(Error::NotClosed(format!(
                "edge ({a}, {b}) of face {face} has no opposite twin"
            )));
        }
        Ok(())
    }

    /// Same surface with every face orientation reversed.
    pub fn flipped(&self) -> Self {
        TriMesh {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }
}

/// A shape as a finite sum of Dirac currents: centers `x_j` carrying vectors `τ_j`.
///
/// For 2D shapes every center and vector has a zero z component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeAtoms {
    dim: usize,
    centers: Vec<Vec3>,
    taus: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, f64>,
}

impl ShapeAtoms {
    pub fn new(dim: usize, centers: Vec<Vec3>, taus: Vec<Vec3>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Validation(format!("dimension must be 2 or 3, got {dim}")));
        }
        if centers.is_empty() {
            return Err(Error::Validation("shape has no atoms".into()));
        }
        if centers.len() != taus.len() {
            return Err(Error::LengthMismatch {
                left: centers.len(),
                right: taus.len(),
            });
        }
        for v in centers.iter().chain(&taus) {
            if !vec3::is_finite(*v) {
                return Err(Error::Validation(format!("non-finite atom component {v:?}")));
            }
            if dim == 2 && v[2] != 0.0 {
                return Err(Error::Validation(format!("2D atom with z component {v:?}")));
            }
        }
        Ok(ShapeAtoms {
            dim,
            centers,
            taus,
            label: None,
            meta: BTreeMap::new(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: f64) -> Self {
        self.meta.insert(key.into(), value);
        self
    }

    pub fn with_meta_map(mut self, meta: BTreeMap<String, f64>) -> Self {
        self.meta = meta;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    pub fn taus(&self) -> &[Vec3] {
        &self.taus
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn meta(&self) -> &BTreeMap<String, f64> {
        &self.meta
    }

    /// Vector sum of all τ; vanishes for closed, consistently oriented shapes.
    pub fn total_flux(&self) -> Vec3 {
        self.taus.iter().fold([0.0; 3], |acc, t| vec3::add(acc, *t))
    }

    /// Σ‖τ_j‖: total length for curves, total area for surfaces.
    pub fn total_mass(&self) -> f64 {
        self.taus.iter().map(|t| vec3::norm(*t)).sum()
    }

    /// The opposite current: every τ negated, centers unchanged.
    pub fn negated(&self) -> Self {
        ShapeAtoms {
            taus: self.taus.iter().map(|t| vec3::scale(*t, -1.0)).collect(),
            ..self.clone()
        }
    }

    /// Extent of the atom centers along coordinate `axis`.
    pub fn center_extent(&self, axis: usize) -> f64 {
        let (lo, hi) = vec3::bbox(&self.centers);
        hi[axis] - lo[axis]
    }
}

/// One atom per chord: midpoint of `[y_j, y_{j+1}]` carrying `y_{j+1} - y_j`.
pub fn curve_to_atoms(poly: &Polyline2D) -> Result<ShapeAtoms> {
    let pts = poly.points();
    let mut centers = Vec::with_capacity(poly.segment_count());
    let mut taus = Vec::with_capacity(poly.segment_count());
    for (i, j) in poly.segment_indices() {
        let (a, b) = (pts[i], pts[j]);
        centers.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.0]);
        taus.push([b[0] - a[0], b[1] - a[1], 0.0]);
    }
    ShapeAtoms::new(2, centers, taus)
}

/// One atom per face: barycenter carrying the area-weighted normal.
pub fn mesh_to_atoms(mesh: &TriMesh) -> Result<ShapeAtoms> {
    let mut centers = Vec::with_capacity(mesh.faces().len());
    let mut taus = Vec::with_capacity(mesh.faces().len());
    for (face, f) in mesh.faces().iter().enumerate() {
        let [a, b, c] = f.map(|i| mesh.vertices()[i]);
        centers.push(vec3::scale(vec3::add(vec3::add(a, b), c), 1.0 / 3.0));
        taus.push(mesh.face_normal(face));
    }
    ShapeAtoms::new(3, centers, taus)
}

/// A similarity transform `x ↦ scale · R x + t`.
///
/// For 2D shapes only the upper-left 2×2 block of `rotation` is used and the
/// third row and column must be those of the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
}

impl Default for Similarity {
    fn default() -> Self {
        Similarity {
            rotation: vec3::IDENTITY,
            translation: [0.0; 3],
            scale: 1.0,
        }
    }
}

impl Similarity {
    pub fn scaling(scale: f64) -> Self {
        Similarity {
            scale,
            ..Default::default()
        }
    }

    /// Counter-clockwise planar rotation by `angle` radians.
    pub fn rotation_2d(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Similarity {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            ..Default::default()
        }
    }

    /// Rotation about a (not necessarily unit) axis by `angle` radians.
    pub fn rotation_3d(axis: Vec3, angle: f64) -> Self {
        let n = vec3::norm(axis);
        let [x, y, z] = vec3::scale(axis, 1.0 / n);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Similarity {
            rotation: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
            ..Default::default()
        }
    }

    pub fn with_translation(mut self, translation: Vec3) -> Self {
        self.translation = translation;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &Similarity) -> Similarity {
        Similarity {
            rotation: vec3::mat_mul(&self.rotation, &inner.rotation),
            translation: self.apply_point(inner.translation),
            scale: self.scale * inner.scale,
        }
    }

    pub fn apply_point(&self, x: Vec3) -> Vec3 {
        vec3::add(vec3::scale(vec3::mat_vec(&self.rotation, x), self.scale), self.translation)
    }

    fn determinant(&self) -> f64 {
        let r = &self.rotation;
        vec3::dot(r[0], vec3::cross(r[1], r[2]))
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidScale(self.scale));
        }
        let r = &self.rotation;
        let mut deviation: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let rtr: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((rtr - target).abs());
            }
        }
        if dim == 2 {
            deviation = deviation
                .max(r[0][2].abs())
                .max(r[1][2].abs())
                .max(r[2][0].abs())
                .max(r[2][1].abs())
                .max((r[2][2] - 1.0).abs());
            if self.translation[2] != 0.0 {
                return Err(Error::Validation("2D translation with z component".into()));
            }
        }
        if deviation > ORTHOGONALITY_TOL || !deviation.is_finite() {
            return Err(Error::NonOrthogonalRotation { deviation });
        }
        Ok(())
    }
}

/// Pushes atoms forward under a similarity: centers map as points, chords
/// scale linearly and face normals scale with area.
///
/// Face normals of 3D shapes also pick up the sign of `det R`, so a reflection
/// gives the same atoms as re-discretising the reflected mesh.
pub fn transform_shape(atoms: &ShapeAtoms, t: &Similarity) -> Result<ShapeAtoms> {
    t.validate(atoms.dim())?;
    let tau_factor = match atoms.dim() {
        2 => t.scale,
        _ => t.scale * t.scale * t.determinant().signum(),
    };
    let centers = atoms.centers().iter().map(|&x| t.apply_point(x)).collect();
    let taus = atoms
        .taus()
        .iter()
        .map(|&tau| vec3::scale(vec3::mat_vec(&t.rotation, tau), tau_factor))
        .collect();
    let mut out = ShapeAtoms::new(atoms.dim(), centers, taus)?;
    out.label = atoms.label.clone();
    out.meta = atoms.meta.clone();
    Ok(out)
}

/// Applies a similarity directly to polyline points.
pub fn transform_polyline(poly: &Polyline2D, t: &Similarity) -> Result<Polyline2D> {
    t.validate(2)?;
    let points = poly
        .points()
        .iter()
        .map(|p| {
            let q = t.apply_point([p[0], p[1], 0.0]);
            [q[0], q[1]]
        })
        .collect();
    Polyline2D::new(points, poly.is_closed())
}

/// Applies a similarity directly to mesh vertices, keeping the face list.
pub fn transform_mesh(mesh: &TriMesh, t: &Similarity) -> Result<TriMesh> {
    t.validate(3)?;
    let vertices = mesh.vertices().iter().map(|&v| t.apply_point(v)).collect();
    TriMesh::new(vertices, mesh.faces().to_vec())
}
