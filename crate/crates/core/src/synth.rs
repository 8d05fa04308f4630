//! Parametric synthetic shapes and the two experimental scenarios.
//!
//! Scenario one rescales every shape to a common extent along one axis so
//! only shape differs. Scenario two starts from the same normalised shapes,
//! enlarges the first half (rounded up) of each class by `scale_factor` and
//! multiplies every shape by an independent uniform factor from
//! `jitter_range`, giving two "heights" per class.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::restart_rng;
use crate::error::{Error, Result};
use crate::geometry::{
    curve_to_atoms, mesh_to_atoms, transform_mesh, transform_polyline, Polyline2D, ShapeAtoms,
    Similarity, TriMesh,
};
use crate::io::Geometry;
use crate::vec3::{self, Vec3};

/// Pear profile: radius `sin(πs)·(1 − PEAR_TAPER·s)` at normalised height `s ∈ [0, 1]`.
pub const PEAR_TAPER: f64 = 0.35;

fn default_exponent() -> f64 {
    4.0
}

/// A parametric shape family with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// `(a cos t, b sin t)`.
    Ellipse { a: f64, b: f64 },
    /// Superellipse `|x/w|^p + |y/h|^p = 1`.
    RoundedRect {
        half_width: f64,
        half_height: f64,
        #[serde(default = "default_exponent")]
        exponent: f64,
    },
    /// Polar `r(t) = radius·(1 + amplitude·cos(lobes·t))`.
    Star {
        radius: f64,
        amplitude: f64,
        lobes: u32,
    },
    Sphere { radius: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
    /// Surface of revolution about z of the pear profile, scaled to the given
    /// length along z and radial width.
    Pear { length: f64, width: f64 },
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::Ellipse { .. } | Family::RoundedRect { .. } | Family::Star { .. } => 2,
            _ => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Ellipse { .. } => "ellipse",
            Family::RoundedRect { .. } => "rounded-rect",
            Family::Star { .. } => "star",
            Family::Sphere { .. } => "sphere",
            Family::Ellipsoid { .. } => "ellipsoid",
            Family::Pear { .. } => "pear",
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::BadFamilyParams(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            Family::Ellipse { a, b } => {
                positive("a", a)?;
                positive("b", b)
            }
            Family::RoundedRect {
                half_width,
                half_height,
                exponent,
            } => {
                positive("half_width", half_width)?;
                positive("half_height", half_height)?;
                if !(exponent >= 2.0 && exponent.is_finite()) {
                    return Err(Error::BadFamilyParams(format!(
                        "exponent must be at least 2, got {exponent}"
                    )));
                }
                Ok(())
            }
            Family::Star {
                radius,
                amplitude,
                lobes,
            } => {
                positive("radius", radius)?;
                if !(0.0..1.0).contains(&amplitude) {
                    return Err(Error::BadFamilyParams(format!(
                        "star amplitude must lie in [0, 1), got {amplitude}"
                    )));
                }
                if lobes < 2 {
                    return Err(Error::BadFamilyParams(format!("star needs at least 2 lobes, got {lobes}")));
                }
                Ok(())
            }
            Family::Sphere { radius } => positive("radius", radius),
            Family::Ellipsoid { a, b, c } => {
                positive("a", a)?;
                positive("b", b)?;
                positive("c", c)
            }
            Family::Pear { length, width } => {
                positive("length", length)?;
                positive("width", width)
            }
        }
    }
}

fn check_perturbation(perturbation: f64) -> Result<()> {
    if !(0.0..0.5).contains(&perturbation) {
        return Err(Error::BadFamilyParams(format!(
            "perturbation must lie in [0, 0.5), got {perturbation}"
        )));
    }
    Ok(())
}

/// Smooth random radial factor `1 + ε f` with `|f| ≤ 1`.
struct RadialNoise {
    amplitude: f64,
    terms: Vec<(f64, f64)>,
}

impl RadialNoise {
    const HARMONICS: usize = 3;

    fn draw(amplitude: f64, rng: &mut impl Rng) -> Self {
        let terms = (0..Self::HARMONICS)
            .map(|_| (rng.random_range(-1.0..=1.0), rng.random_range(0.0..TAU)))
            .collect();
        RadialNoise { amplitude, terms }
    }

    /// Harmonics 2..=4 of the contour angle.
    fn contour(&self, t: f64) -> f64 {
        let f: f64 = self
            .terms
            .iter()
            .enumerate()
            .map(|(h, (c, p))| c * ((h + 2) as f64 * t + p).cos())
            .sum();
        1.0 + self.amplitude * f / Self::HARMONICS as f64
    }

    /// `sin(φ)^h cos(hθ + p)` for h = 1..=3; smooth at the poles.
    fn surface(&self, phi: f64, theta: f64) -> f64 {
        let s = phi.sin();
        let f: f64 = self
            .terms
            .iter()
            .enumerate()
            .map(|(h, (c, p))| {
                let h = (h + 1) as i32;
                c * s.powi(h) * (h as f64 * theta + p).cos()
            })
            .sum();
        1.0 + self.amplitude * f / Self::HARMONICS as f64
    }
}

fn shape_rng(seed: u64) -> ChaCha8Rng {
    restart_rng(seed, 0)
}

/// Closed counter-clockwise contour with `n_points` points, the last repeating
/// the first, radially perturbed by a seeded smooth factor.
pub fn gen_contour(family: &Family, n_points: usize, perturbation: f64, seed: u64) -> Result<Polyline2D> {
    contour_with_rng(family, n_points, perturbation, &mut shape_rng(seed))
}

fn contour_with_rng(
    family: &Family,
    n_points: usize,
    perturbation: f64,
    rng: &mut impl Rng,
) -> Result<Polyline2D> {
    family.validate()?;
    check_perturbation(perturbation)?;
    if family.dim() != 2 {
        return Err(Error::BadFamilyParams(format!("{} is not a contour family", family.name())));
    }
    if n_points < 8 {
        return Err(Error::BadFamilyParams(format!("need at least 8 points, got {n_points}")));
    }
    let noise = RadialNoise::draw(perturbation, rng);
    let distinct = n_points - 1;
    let mut points: Vec<[f64; 2]> = (0..distinct)
        .map(|j| {
            let t = TAU * j as f64 / distinct as f64;
            let [x, y] = match *family {
                Family::Ellipse { a, b } => [a * t.cos(), b * t.sin()],
                Family::RoundedRect {
                    half_width,
                    half_height,
                    exponent,
                } => {
                    let e = 2.0 / exponent;
                    let (s, c) = t.sin_cos();
                    [
                        half_width * c.signum() * c.abs().powf(e),
                        half_height * s.signum() * s.abs().powf(e),
                    ]
                }
                Family::Star {
                    radius,
                    amplitude,
                    lobes,
                } => {
                    let r = radius * (1.0 + amplitude * (lobes as f64 * t).cos());
                    [r * t.cos(), r * t.sin()]
                }
                _ => unreachable!(),
            };
            let k = noise.contour(t);
            [k * x, k * y]
        })
        .collect();
    points.push(points[0]);
    Polyline2D::new(points, true)
}

/// Grid resolution whose face count `2·n_lon·(n_lat − 1)` is close to `n_triangles`.
fn uv_resolution(n_triangles: usize) -> (usize, usize) {
    let n = n_triangles as f64;
    let n_lat = ((1.0 + (1.0 + n).sqrt()) / 2.0).round().max(3.0) as usize;
    let n_lon = (n / (2.0 * (n_lat - 1) as f64)).round().max(3.0) as usize;
    (n_lat, n_lon)
}

/// Closed, outward-oriented latitude/longitude triangulation of a parametric
/// surface with roughly `n_triangles` faces.
pub fn gen_mesh(family: &Family, n_triangles: usize, perturbation: f64, seed: u64) -> Result<TriMesh> {
    mesh_with_rng(family, n_triangles, perturbation, &mut shape_rng(seed))
}

fn mesh_with_rng(
    family: &Family,
    n_triangles: usize,
    perturbation: f64,
    rng: &mut impl Rng,
) -> Result<TriMesh> {
    family.validate()?;
    check_perturbation(perturbation)?;
    if family.dim() != 3 {
        return Err(Error::BadFamilyParams(format!("{} is not a surface family", family.name())));
    }
    if n_triangles < 100 {
        return Err(Error::BadFamilyParams(format!(
            "need at least 100 triangles, got {n_triangles}"
        )));
    }
    let noise = RadialNoise::draw(perturbation, rng);
    let surface = |phi: f64, theta: f64| -> Vec3 {
        let (sp, cp) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let p = match *family {
            Family::Sphere { radius } => [radius * sp * ct, radius * sp * st, radius * cp],
            Family::Ellipsoid { a, b, c } => [a * sp * ct, b * sp * st, c * cp],
            Family::Pear { length, width } => {
                let s = phi / PI;
                let rho = width * (PI * s).sin() * (1.0 - PEAR_TAPER * s);
                [rho * ct, rho * st, length * (0.5 - s)]
            }
            _ => unreachable!(),
        };
        vec3::scale(p, noise.surface(phi, theta))
    };

    let (n_lat, n_lon) = uv_resolution(n_triangles);
    let mut vertices = vec![surface(0.0, 0.0)];
    for i in 1..n_lat {
        let phi = PI * i as f64 / n_lat as f64;
        for j in 0..n_lon {
            vertices.push(surface(phi, TAU * j as f64 / n_lon as f64));
        }
    }
    vertices.push(surface(PI, 0.0));
    let bottom = vertices.len() - 1;
    let ring = |i: usize, j: usize| 1 + (i - 1) * n_lon + j % n_lon;

    let mut faces = Vec::with_capacity(2 * n_lon * (n_lat - 1));
    for j in 0..n_lon {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..n_lat - 1 {
        for j in 0..n_lon {
            let (a, b, c, d) = (ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), ring(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for j in 0..n_lon {
        faces.push([bottom, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)]);
    }
    let mesh = TriMesh::new(vertices, faces)?;
    Ok(if mesh.signed_volume() < 0.0 { mesh.flipped() } else { mesh })
}

/// Icosahedron subdivided `depth` times, projected onto the sphere of radius `radius`.
pub fn icosphere(depth: u32, radius: f64) -> Result<TriMesh> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(|v| vec3::scale(v, 1.0 / vec3::norm(v)))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..depth {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = vec3::scale(vec3::add(vertices[a], vertices[b]), 0.5);
                vertices.push(vec3::scale(m, 1.0 / vec3::norm(m)));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| vec3::scale(v, radius)).collect();
    let mesh = TriMesh::new(vertices, faces)?;
    Ok(if mesh.signed_volume() < 0.0 { mesh.flipped() } else { mesh })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Every shape rescaled to the same extent along the designated axis.
    CommonHeight,
    /// Half of each class enlarged, then every shape jittered.
    TwoHeights,
}

fn default_perturbation() -> f64 {
    0.03
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    /// Class name; defaults to the family name.
    #[serde(default)]
    pub name: Option<String>,
    pub count: usize,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(flatten)]
    pub family: Family,
}

impl ClassSpec {
    pub fn new(family: Family, count: usize) -> Self {
        ClassSpec {
            name: None,
            count,
            perturbation: default_perturbation(),
            family,
        }
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.family.name())
    }
}

fn default_scale_factor() -> f64 {
    1.5
}

fn default_jitter() -> [f64; 2] {
    [1.0, 1.1]
}

fn default_target_extent() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub classes: Vec<ClassSpec>,
    pub scenario: Scenario,
    #[serde(default = "default_scale_factor")]
    pub scale_factor: f64,
    #[serde(default = "default_jitter")]
    pub jitter_range: [f64; 2],
    /// Points per contour or target triangles per mesh; defaults to 100 / 1000.
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Axis whose extent is equalised; defaults to x in 2D and z in 3D.
    #[serde(default)]
    pub extent_axis: Option<usize>,
    #[serde(default = "default_target_extent")]
    pub target_extent: f64,
}

impl ScenarioSpec {
    pub fn new(classes: Vec<ClassSpec>, scenario: Scenario) -> Self {
        ScenarioSpec {
            classes,
            scenario,
            scale_factor: default_scale_factor(),
            jitter_range: default_jitter(),
            resolution: None,
            seed: 0,
            extent_axis: None,
            target_extent: default_target_extent(),
        }
    }

    /// Three contour classes (ellipse, rounded rectangle, star) of `count` each.
    pub fn contours(scenario: Scenario, count: usize) -> Self {
        ScenarioSpec::new(
            vec![
                ClassSpec::new(Family::Ellipse { a: 2.0, b: 1.3 }, count),
                ClassSpec::new(
                    Family::RoundedRect {
                        half_width: 2.0,
                        half_height: 0.6,
                        exponent: 4.0,
                    },
                    count,
                ),
                ClassSpec::new(
                    Family::Star {
                        radius: 1.5,
                        amplitude: 0.2,
                        lobes: 5,
                    },
                    count,
                ),
            ],
            scenario,
        )
    }

    /// Three surface classes (ellipsoid, sphere, pear) of `count` each.
    pub fn meshes(scenario: Scenario, count: usize) -> Self {
        ScenarioSpec::new(
            vec![
                ClassSpec::new(Family::Ellipsoid { a: 1.0, b: 1.0, c: 1.8 }, count),
                ClassSpec::new(Family::Sphere { radius: 1.0 }, count),
                ClassSpec::new(Family::Pear { length: 2.0, width: 1.2 }, count),
            ],
            scenario,
        )
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = Some(resolution);
        self
    }

    pub fn dim(&self) -> Result<usize> {
        let first = self.classes.first().ok_or(Error::EmptyInput)?;
        let dim = first.family.dim();
        if let Some(c) = self.classes.iter().find(|c| c.family.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: c.family.dim(),
            });
        }
        Ok(dim)
    }

    pub fn axis(&self) -> Result<usize> {
        let dim = self.dim()?;
        let axis = self.extent_axis.unwrap_or(if dim == 2 { 0 } else { 2 });
        if axis >= dim {
            return Err(Error::Validation(format!("extent axis {axis} out of range for {dim}D")));
        }
        Ok(axis)
    }

    pub fn resolution(&self) -> Result<usize> {
        Ok(self
            .resolution
            .unwrap_or(if self.dim()? == 2 { 100 } else { 1000 }))
    }

    pub fn validate(&self) -> Result<()> {
        self.dim()?;
        self.axis()?;
        for c in &self.classes {
            if c.count == 0 {
                return Err(Error::Validation(format!("class {} has count 0", c.name())));
            }
            c.family.validate()?;
            check_perturbation(c.perturbation)?;
        }
        let [lo, hi] = self.jitter_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Validation(format!("invalid jitter range [{lo}, {hi}]")));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor.is_finite()) {
            return Err(Error::Validation(format!("invalid scale factor {}", self.scale_factor)));
        }
        if !(self.target_extent > 0.0 && self.target_extent.is_finite()) {
            return Err(Error::Validation(format!("invalid target extent {}", self.target_extent)));
        }
        Ok(())
    }
}

/// One generated shape with its planted label.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticShape {
    pub id: String,
    pub class: usize,
    /// 1 for the enlarged half in scenario two, else 0.
    pub height_group: usize,
    pub true_label: usize,
    pub geometry: Geometry,
    pub atoms: ShapeAtoms,
}

fn points_of(geometry: &Geometry) -> Vec<Vec3> {
    match geometry {
        Geometry::Polyline(p) => p.points().iter().map(|q| [q[0], q[1], 0.0]).collect(),
        Geometry::Mesh(m) => m.vertices().to_vec(),
    }
}

fn transform_geometry(geometry: &Geometry, t: &Similarity) -> Result<Geometry> {
    Ok(match geometry {
        Geometry::Polyline(p) => Geometry::Polyline(transform_polyline(p, t)?),
        Geometry::Mesh(m) => Geometry::Mesh(transform_mesh(m, t)?),
    })
}

/// Generates every shape of the scenario. Each shape draws from its own RNG
/// stream, so output is identical regardless of thread count.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<Vec<SyntheticShape>> {
    spec.validate()?;
    let dim = spec.dim()?;
    let axis = spec.axis()?;
    let resolution = spec.resolution()?;

    let mut jobs = Vec::new();
    for (class, c) in spec.classes.iter().enumerate() {
        let enlarged = c.count.div_ceil(2);
        for member in 0..c.count {
            jobs.push((class, c, member, usize::from(member < enlarged)));
        }
    }
    jobs.into_par_iter()
        .enumerate()
        .map(|(index, (class, c, member, group))| {
            let mut rng = restart_rng(spec.seed, index as u64);
            let raw = match dim {
                2 => Geometry::Polyline(contour_with_rng(&c.family, resolution, c.perturbation, &mut rng)?),
                _ => Geometry::Mesh(mesh_with_rng(&c.family, resolution, c.perturbation, &mut rng)?),
            };
            let (lo, hi) = vec3::bbox(&points_of(&raw));
            let center = vec3::scale(vec3::add(lo, hi), -0.5);
            let normalise = Similarity::scaling(spec.target_extent / (hi[axis] - lo[axis]))
                .compose(&Similarity::default().with_translation(center));
            let mut geometry = transform_geometry(&raw, &normalise)?;
            let (height_group, true_label) = match spec.scenario {
                Scenario::CommonHeight => (0, class),
                Scenario::TwoHeights => {
                    let [jlo, jhi] = spec.jitter_range;
                    let jitter = if jlo == jhi { jlo } else { rng.random_range(jlo..jhi) };
                    let factor = if group == 1 { spec.scale_factor } else { 1.0 } * jitter;
                    geometry = transform_geometry(&geometry, &Similarity::scaling(factor))?;
                    (group, 2 * class + group)
                }
            };
            let (lo, hi) = vec3::bbox(&points_of(&geometry));
            let atoms = match &geometry {
                Geometry::Polyline(p) => curve_to_atoms(p)?,
                Geometry::Mesh(m) => mesh_to_atoms(m)?,
            };
            let others: Vec<usize> = (0..dim).filter(|&a| a != axis).collect();
            let mut atoms = atoms
                .with_label(c.name())
                .with_meta("height", hi[axis] - lo[axis])
                .with_meta("width", hi[others[0]] - lo[others[0]]);
            if dim == 3 {
                atoms = atoms.with_meta("depth", hi[others[1]] - lo[others[1]]);
            }
            Ok(SyntheticShape {
                id: format!("{}-{member:03}", c.name()),
                class,
                height_group,
                true_label,
                geometry,
                atoms,
            })
        })
        .collect()
}
