//! File formats: OBJ and STL meshes, point and pose-log CSV, and the
//! JSON-lines dumps of supersets and pose distributions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fixpose_core::mesh::{MeshError, TriangleMesh};
use fixpose_core::pose_distribution::{DiscretePoseDistribution, WeightedPose};
use fixpose_core::pose_search::PoseSuperset;
use fixpose_core::tip_calibration::{PoseLog, PoseStage};
use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

/// Largest accepted deviation of a logged quaternion from unit norm.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: unsupported mesh format (expected .obj or .stl)")]
    UnsupportedFormat { path: PathBuf },
    #[error("{path}: {source}")]
    Mesh { path: PathBuf, source: MeshError },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Length unit of a mesh file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    #[default]
    M,
    Cm,
    Mm,
}

impl LengthUnit {
    /// Factor converting the unit to meters.
    pub fn scale(self) -> f64 {
        match self {
            LengthUnit::M => 1.0,
            LengthUnit::Cm => 1e-2,
            LengthUnit::Mm => 1e-3,
        }
    }
}

impl FromStr for LengthUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m" => Ok(LengthUnit::M),
            "cm" => Ok(LengthUnit::Cm),
            "mm" => Ok(LengthUnit::Mm),
            _ => Err(format!("unknown unit {s:?}; use m, cm or mm")),
        }
    }
}

// ── Meshes ──────────────────────────────────────────────────────────────────

type RawMesh = (Vec<Point3<f64>>, Vec<[u32; 3]>);

/// Vertices and triangles of an OBJ file. Polygons are fan-triangulated;
/// texture and normal references and negative indices are supported.
pub fn parse_obj(text: &str, path: &Path) -> Result<RawMesh, FormatError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<f64> = fields
                    .take(3)
                    .map(|f| f.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| parse_error(path, line_no, format!("bad vertex: {e}")))?;
                if coords.len() != 3 {
                    return Err(parse_error(path, line_no, "vertex needs three coordinates"));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut face = Vec::new();
                for f in fields {
                    let index_text = f.split('/').next().unwrap_or("");
                    let index: i64 = index_text
                        .parse()
                        .map_err(|_| parse_error(path, line_no, format!("bad face index {f:?}")))?;
                    let resolved = if index > 0 {
                        index - 1
                    } else {
                        vertices.len() as i64 + index
                    };
                    if index == 0 || resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(parse_error(path, line_no, format!("face index {index} out of range")));
                    }
                    face.push(resolved as u32);
                }
                if face.len() < 3 {
                    return Err(parse_error(path, line_no, "face needs at least three vertices"));
                }
                for k in 1..face.len() - 1 {
                    triangles.push([face[0], face[k], face[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

/// Collects STL corner coordinates into shared vertices, merging exact
/// coordinate matches.
#[derive(Default)]
struct VertexMerger {
    index: HashMap<[u64; 3], u32>,
    vertices: Vec<Point3<f64>>,
}

impl VertexMerger {
    fn add(&mut self, p: [f64; 3]) -> u32 {
        // +0.0 and -0.0 are the same coordinate
        let key = p.map(|c| (c + 0.0).to_bits());
        *self.index.entry(key).or_insert_with(|| {
            self.vertices.push(Point3::new(p[0], p[1], p[2]));
            (self.vertices.len() - 1) as u32
        })
    }
}

fn is_binary_stl(bytes: &[u8]) -> bool {
    if bytes.len() < 84 {
        return false;
    }
    let count = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    bytes.len() == 84 + 50 * count
}

/// Vertices and triangles of a binary or ASCII STL file.
pub fn parse_stl(bytes: &[u8], path: &Path) -> Result<RawMesh, FormatError> {
    let mut merger = VertexMerger::default();
    let mut triangles = Vec::new();
    if is_binary_stl(bytes) {
        let count = (bytes.len() - 84) / 50;
        for i in 0..count {
            let rec = &bytes[84 + 50 * i..84 + 50 * (i + 1)];
            let f = |k: usize| f32::from_le_bytes([rec[4 * k], rec[4 * k + 1], rec[4 * k + 2], rec[4 * k + 3]]) as f64;
            let mut tri = [0u32; 3];
            for (c, slot) in tri.iter_mut().enumerate() {
                let base = 3 + 3 * c;
                *slot = merger.add([f(base), f(base + 1), f(base + 2)]);
            }
            triangles.push(tri);
        }
    } else {
        let text =
            std::str::from_utf8(bytes).map_err(|_| parse_error(path, 0, "neither a binary STL nor UTF-8 text"))?;
        if !text.trim_start().starts_with("solid") {
            return Err(parse_error(path, 1, "ASCII STL must start with 'solid'"));
        }
        let mut corners = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            match fields.next() {
                Some("vertex") => {
                    let c: Vec<f64> = fields
                        .map(|f| f.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| parse_error(path, n + 1, format!("bad vertex: {e}")))?;
                    if c.len() != 3 {
                        return Err(parse_error(path, n + 1, "vertex needs three coordinates"));
                    }
                    corners.push(merger.add([c[0], c[1], c[2]]));
                }
                Some("endloop") => {
                    if corners.len() != 3 {
                        return Err(parse_error(path, n + 1, "facet must have exactly three vertices"));
                    }
                    triangles.push([corners[0], corners[1], corners[2]]);
                    corners.clear();
                }
                _ => {}
            }
        }
    }
    Ok((merger.vertices, triangles))
}

/// Reads an OBJ or STL mesh (chosen by extension) and scales it to meters.
/// Degenerate triangles are dropped by [`TriangleMesh::new`].
pub fn load_mesh(path: &Path, unit_scale: f64) -> Result<TriangleMesh, FormatError> {
    if !(unit_scale > 0.0 && unit_scale.is_finite()) {
        return Err(FormatError::Invalid {
            path: path.to_path_buf(),
            message: format!("unit scale must be positive, got {unit_scale}"),
        });
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let bytes = fs::read(path).map_err(io_error(path))?;
    let (vertices, triangles) = match ext.as_deref() {
        Some("obj") => {
            let text = String::from_utf8_lossy(&bytes);
            parse_obj(&text, path)?
        }
        Some("stl") => parse_stl(&bytes, path)?,
        _ => {
            return Err(FormatError::UnsupportedFormat {
                path: path.to_path_buf(),
            })
        }
    };
    let vertices = vertices.into_iter().map(|p| p * unit_scale).collect();
    TriangleMesh::new(vertices, triangles).map_err(|source| FormatError::Mesh {
        path: path.to_path_buf(),
        source,
    })
}

pub fn obj_string(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    out
}

pub fn write_obj(mesh: &TriangleMesh, path: &Path) -> Result<(), FormatError> {
    fs::write(path, obj_string(mesh)).map_err(io_error(path))
}

/// Binary STL bytes (coordinates rounded to f32).
pub fn stl_binary_bytes(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = vec![0u8; 80];
    out.extend_from_slice(&(mesh.triangles().len() as u32).to_le_bytes());
    for i in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.triangle(i);
        let n = (b - a).cross(&(c - a)).normalize();
        for v in [n.x, n.y, n.z, a.x, a.y, a.z, b.x, b.y, b.z, c.x, c.y, c.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}

// ── CSV ─────────────────────────────────────────────────────────────────────

fn csv_records(path: &Path) -> Result<Vec<(usize, csv::StringRecord)>, FormatError> {
    let file = fs::File::open(path).map_err(io_error(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(file);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push((line, record));
    }
    Ok(out)
}

fn parse_floats(record: &csv::StringRecord) -> Option<Vec<f64>> {
    record.iter().map(|f| f.parse::<f64>().ok()).collect()
}

/// Points from a CSV with columns `x,y,z` in meters. A first row that does
/// not parse as numbers is taken as a header.
pub fn read_points_csv(path: &Path) -> Result<Vec<Point3<f64>>, FormatError> {
    let mut points = Vec::new();
    for (i, (line, record)) in csv_records(path)?.into_iter().enumerate() {
        match parse_floats(&record) {
            Some(v) if v.len() == 3 => points.push(Point3::new(v[0], v[1], v[2])),
            None if i == 0 => continue,
            _ => return Err(parse_error(path, line, "expected three numbers x,y,z")),
        }
    }
    if points.is_empty() {
        return Err(FormatError::Invalid {
            path: path.to_path_buf(),
            message: "no points".into(),
        });
    }
    Ok(points)
}

pub fn points_csv_string(points: &[Point3<f64>]) -> String {
    let mut out = String::from("x,y,z\n");
    for p in points {
        writeln!(out, "{:?},{:?},{:?}", p.x, p.y, p.z).unwrap();
    }
    out
}

pub fn write_points_csv(points: &[Point3<f64>], path: &Path) -> Result<(), FormatError> {
    fs::write(path, points_csv_string(points)).map_err(io_error(path))
}

/// Flange poses from a CSV with columns `stage,qw,qx,qy,qz,tx,ty,tz`
/// (translations in meters), optional header.
pub fn read_pose_log_csv(path: &Path) -> Result<PoseLog, FormatError> {
    let mut entries = Vec::new();
    for (i, (line, record)) in csv_records(path)?.into_iter().enumerate() {
        let stage_text = record.get(0).unwrap_or("");
        let Some(stage) = PoseStage::from_name(stage_text) else {
            if i == 0 {
                continue;
            }
            return Err(parse_error(
                path,
                line,
                format!("unknown stage {stage_text:?}; use coarse, table or fine"),
            ));
        };
        let values: Vec<f64> = record
            .iter()
            .skip(1)
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_error(path, line, format!("bad number: {e}")))?;
        if values.len() != 7 {
            return Err(parse_error(path, line, "expected stage,qw,qx,qy,qz,tx,ty,tz"));
        }
        let q = Quaternion::new(values[0], values[1], values[2], values[3]);
        if (q.norm() - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(parse_error(
                path,
                line,
                format!("quaternion norm {} is not 1", q.norm()),
            ));
        }
        let pose = Isometry3::from_parts(
            Translation3::new(values[4], values[5], values[6]),
            UnitQuaternion::from_quaternion(q),
        );
        entries.push((stage, pose));
    }
    Ok(PoseLog::new(entries))
}

pub fn pose_log_csv_string(log: &PoseLog) -> String {
    let mut out = String::from("stage,qw,qx,qy,qz,tx,ty,tz\n");
    for (stage, pose) in &log.entries {
        let q = pose.rotation;
        let t = pose.translation.vector;
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            stage.name(),
            q.w,
            q.i,
            q.j,
            q.k,
            t.x,
            t.y,
            t.z
        )
        .unwrap();
    }
    out
}

// ── JSON lines ──────────────────────────────────────────────────────────────

/// Rigid pose as a quaternion `[w, x, y, z]` and translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub q: [f64; 4],
    pub t: [f64; 3],
}

impl From<&Isometry3<f64>> for PoseJson {
    fn from(p: &Isometry3<f64>) -> Self {
        let q = p.rotation;
        let t = p.translation.vector;
        Self {
            q: [q.w, q.i, q.j, q.k],
            t: [t.x, t.y, t.z],
        }
    }
}

impl PoseJson {
    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.t[0], self.t[1], self.t[2]),
            UnitQuaternion::from_quaternion(Quaternion::new(self.q[0], self.q[1], self.q[2], self.q[3])),
        )
    }
}

/// One frontier cell with its center pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupersetLine {
    pub pos_level: u8,
    pub rot_level: u8,
    pub index: [u32; 3],
    pub pixel: u64,
    pub tilt: u32,
    #[serde(flatten)]
    pub center: PoseJson,
}

/// One distribution sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleLine {
    #[serde(flatten)]
    pub pose: PoseJson,
    pub p: f64,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, FormatError> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_error(path))?))
}

fn write_lines<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<(), FormatError> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item).expect("plain data serializes");
        w.write_all(b"\n").map_err(io_error(path))?;
    }
    w.flush().map_err(io_error(path))
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, FormatError> {
    let file = fs::File::open(path).map_err(io_error(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_error(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_error(path, n + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_superset_jsonl(superset: &PoseSuperset, path: &Path) -> Result<(), FormatError> {
    write_lines(
        path,
        superset.cells().map(|cell| SupersetLine {
            pos_level: cell.position.level,
            rot_level: cell.rotation.level,
            index: cell.position.index,
            pixel: cell.rotation.pixel,
            tilt: cell.rotation.tilt,
            center: PoseJson::from(&cell.center(&superset.grid)),
        }),
    )
}

pub fn read_superset_jsonl(path: &Path) -> Result<Vec<SupersetLine>, FormatError> {
    read_lines(path)
}

pub fn write_distribution_jsonl(dist: &DiscretePoseDistribution, path: &Path) -> Result<(), FormatError> {
    write_lines(
        path,
        dist.samples.iter().map(|s| SampleLine {
            pose: PoseJson::from(&s.pose),
            p: s.probability,
        }),
    )
}

pub fn read_distribution_jsonl(path: &Path) -> Result<Vec<WeightedPose>, FormatError> {
    let lines: Vec<SampleLine> = read_lines(path)?;
    Ok(lines
        .into_iter()
        .map(|l| WeightedPose {
            pose: l.pose.isometry(),
            probability: l.p,
        })
        .collect())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_error(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line(), e.to_string()))
}
