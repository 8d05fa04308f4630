//! Readers and writers for polyline and mesh files.
//!
//! Polygonal OBJ/OFF faces are fan-triangulated from their first vertex.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Polyline2D, TriMesh};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFormat {
    CsvPolyline,
    JsonPolyline,
    Off,
    Obj,
}

impl ShapeFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "csv" => Some(ShapeFormat::CsvPolyline),
            "json" => Some(ShapeFormat::JsonPolyline),
            "off" => Some(ShapeFormat::Off),
            "obj" => Some(ShapeFormat::Obj),
            _ => None,
        }
    }
}

impl FromStr for ShapeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv-polyline" | "csv" => Ok(ShapeFormat::CsvPolyline),
            "json-polyline" | "json" => Ok(ShapeFormat::JsonPolyline),
            "off" => Ok(ShapeFormat::Off),
            "obj" => Ok(ShapeFormat::Obj),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Geometry read from a file, before discretisation.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Polyline(Polyline2D),
    Mesh(TriMesh),
}

impl Geometry {
    pub fn dim(&self) -> usize {
        match self {
            Geometry::Polyline(_) => 2,
            Geometry::Mesh(_) => 3,
        }
    }
}

pub fn load_shape(path: &Path, format: ShapeFormat) -> Result<Geometry> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    parse_shape(&text, format, &name)
}

pub fn parse_shape(text: &str, format: ShapeFormat, name: &str) -> Result<Geometry> {
    match format {
        ShapeFormat::CsvPolyline => parse_csv_polyline(text, name).map(Geometry::Polyline),
        ShapeFormat::JsonPolyline => parse_json_polyline(text, name).map(Geometry::Polyline),
        ShapeFormat::Off => parse_off(text, name).map(Geometry::Mesh),
        ShapeFormat::Obj => parse_obj(text, name).map(Geometry::Mesh),
    }
}

fn parse_error(name: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: name.to_string(),
        line,
        message: message.into(),
    }
}

/// One `x,y` row per point, with an optional non-numeric header row.
pub fn parse_csv_polyline(text: &str, name: &str) -> Result<Polyline2D> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(name, line, e.to_string())
        })?;
        let line = record.position().map_or(row + 1, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(parse_error(
                name,
                line,
                format!("expected 2 columns, found {}", record.len()),
            ));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(xy) => points.push([xy[0], xy[1]]),
            Err(_) if row == 0 => continue,
            Err(e) => return Err(parse_error(name, line, e.to_string())),
        }
    }
    Polyline2D::new(points, false)
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonPolyline {
    points: Vec<[f64; 2]>,
    #[serde(default)]
    closed: bool,
}

/// `{"points": [[x, y], ...], "closed": bool}`
pub fn parse_json_polyline(text: &str, name: &str) -> Result<Polyline2D> {
    let doc: JsonPolyline =
        serde_json::from_str(text).map_err(|e| parse_error(name, e.line(), e.to_string()))?;
    Polyline2D::new(doc.points, doc.closed)
}

/// Lines with comments stripped, blank lines skipped, 1-based line numbers kept.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_num<T: FromStr>(tok: Option<&str>, name: &str, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_error(name, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_error(name, line, format!("invalid {what} {tok:?}")))
}

fn fan(polygon: &[usize]) -> impl Iterator<Item = [usize; 3]> + '_ {
    (1..polygon.len() - 1).map(move |i| [polygon[0], polygon[i], polygon[i + 1]])
}

pub fn parse_off(text: &str, name: &str) -> Result<TriMesh> {
    let mut lines = content_lines(text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_error(name, 1, "empty file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("OFF") {
        return Err(parse_error(name, line, "missing OFF header"));
    }
    let rest: Vec<&str> = toks.collect();
    let (count_line, counts) = if rest.is_empty() {
        let (l, c) = lines
            .next()
            .ok_or_else(|| parse_error(name, line, "missing vertex/face counts"))?;
        (l, c.split_whitespace().collect::<Vec<_>>())
    } else {
        (line, rest)
    };
    let mut it = counts.into_iter();
    let nv: usize = parse_num(it.next(), name, count_line, "vertex count")?;
    let nf: usize = parse_num(it.next(), name, count_line, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines
            .next()
            .ok_or_else(|| parse_error(name, count_line, "unexpected end of file in vertices"))?;
        let mut t = s.split_whitespace();
        let v: Vec3 = [
            parse_num(t.next(), name, l, "x")?,
            parse_num(t.next(), name, l, "y")?,
            parse_num(t.next(), name, l, "z")?,
        ];
        vertices.push(v);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, s) = lines
            .next()
            .ok_or_else(|| parse_error(name, count_line, "unexpected end of file in faces"))?;
        let mut t = s.split_whitespace();
        let n: usize = parse_num(t.next(), name, l, "face size")?;
        if n < 3 {
            return Err(parse_error(name, l, format!("face with {n} vertices")));
        }
        let polygon = (0..n)
            .map(|_| parse_num(t.next(), name, l, "vertex index"))
            .collect::<Result<Vec<usize>>>()?;
        faces.extend(fan(&polygon));
    }
    TriMesh::new(vertices, faces)
}

pub fn parse_obj(text: &str, name: &str) -> Result<TriMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces = Vec::new();
    for (l, s) in content_lines(text) {
        let mut t = s.split_whitespace();
        match t.next() {
            Some("v") => vertices.push([
                parse_num(t.next(), name, l, "x")?,
                parse_num(t.next(), name, l, "y")?,
                parse_num(t.next(), name, l, "z")?,
            ]),
            Some("f") => {
                let polygon = t
                    .map(|tok| {
                        let idx: i64 =
                            parse_num(tok.split('/').next(), name, l, "vertex index")?;
                        let n = vertices.len() as i64;
                        let resolved = if idx < 0 { n + idx } else { idx - 1 };
                        if idx == 0 || resolved < 0 {
                            return Err(parse_error(name, l, format!("invalid vertex index {idx}")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<Vec<usize>>>()?;
                if polygon.len() < 3 {
                    return Err(parse_error(name, l, "face with fewer than 3 vertices"));
                }
                faces.extend(fan(&polygon));
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn write_csv_polyline(poly: &Polyline2D) -> String {
    let mut out = String::from("x,y\n");
    for p in poly.points() {
        let _ = writeln!(out, "{},{}", p[0], p[1]);
    }
    if poly.is_closed() {
        let p = poly.points()[0];
        let _ = writeln!(out, "{},{}", p[0], p[1]);
    }
    out
}

pub fn write_json_polyline(poly: &Polyline2D) -> String {
    let doc = JsonPolyline {
        points: poly.points().to_vec(),
        closed: poly.is_closed(),
    };
    serde_json::to_string(&doc).expect("polyline serialises")
}

pub fn write_off(mesh: &TriMesh) -> String {
    let mut out = format!("OFF\n{} {} 0\n", mesh.vertices().len(), mesh.faces().len());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}

pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}
