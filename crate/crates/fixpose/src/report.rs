//! The JSON run report.
//!
//! All poses are poses of the fixture frame, whose origin is the center of
//! the mesh's smallest enclosing sphere; `origin_offset` gives that center in
//! mesh coordinates and `mesh_pose_estimate` the matching pose of the mesh
//! file's own frame. Wall time is not part of the report so that identical
//! inputs give identical reports.

use fixpose_core::mesh::TriangleMesh;
use fixpose_core::pose_distribution::ConfidenceReport;
use fixpose_core::pose_search::{BoundsReport, StopReason};
use nalgebra::{Point3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::formats::PoseJson;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    /// SHA-256 of the mesh vertices (f64, little endian) and triangle indices
    /// (u32, little endian) after unit scaling.
    pub mesh_sha256: String,
    pub triangle_count: usize,
    pub point_count: usize,
    pub sample_bound: f64,
    pub numeric_slack: f64,
    pub probe_radius: f64,
}

pub fn mesh_digest(mesh: &TriangleMesh) -> String {
    let mut hasher = Sha256::new();
    for v in mesh.vertices() {
        for c in [v.x, v.y, v.z] {
            hasher.update(c.to_le_bytes());
        }
    }
    for t in mesh.triangles() {
        for i in t {
            hasher.update(i.to_le_bytes());
        }
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSection {
    pub position_estimate: [f64; 3],
    /// Meters.
    pub position_bound: f64,
    /// `[w, x, y, z]`.
    pub rotation_estimate: [f64; 4],
    /// Radians.
    pub rotation_bound: f64,
}

impl From<&BoundsReport> for BoundsSection {
    fn from(b: &BoundsReport) -> Self {
        Self {
            position_estimate: point_array(&b.position_estimate),
            position_bound: b.position_bound,
            rotation_estimate: quaternion_array(&b.rotation_estimate),
            rotation_bound: b.rotation_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSection {
    pub expected_position: [f64; 3],
    pub expected_rotation: [f64; 4],
    pub levels: Vec<f64>,
    /// Meters, one per level.
    pub position: Vec<f64>,
    /// Radians, one per level.
    pub rotation: Vec<f64>,
}

impl From<&ConfidenceReport> for ConfidenceSection {
    fn from(c: &ConfidenceReport) -> Self {
        Self {
            expected_position: point_array(&c.expected_position),
            expected_rotation: quaternion_array(&c.expected_rotation),
            levels: c.levels.clone(),
            position: c.position.clone(),
            rotation: c.rotation.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSection {
    pub samples: usize,
    pub k_per_cell: usize,
    pub sigma: f64,
    pub uniform_fallback: bool,
    /// Confidence radii; absent when the expected pose is undefined.
    pub confidence: Option<ConfidenceSection>,
    pub confidence_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalitySection {
    /// More than one connected component of retained rotations. Advisory:
    /// adjacency is a heuristic threshold on center distances.
    pub multimodal: bool,
    pub components: usize,
    pub adjacency_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input: InputDigest,
    pub origin_offset: [f64; 3],
    pub aabb_min: [f64; 3],
    pub aabb_max: [f64; 3],
    pub position_level: u8,
    pub rotation_level: u8,
    pub stop_reason: Option<StopReason>,
    pub cell_count: usize,
    pub bounds: BoundsSection,
    pub mesh_pose_estimate: PoseJson,
    pub distribution: Option<DistributionSection>,
    pub multimodality: MultimodalitySection,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn rotation_estimate(&self) -> UnitQuaternion<f64> {
        let q = self.bounds.rotation_estimate;
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
    }

    pub fn position_estimate(&self) -> Point3<f64> {
        Point3::from(self.bounds.position_estimate)
    }

    /// Short human-readable summary in millimeters and degrees.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "levels ({}, {}), {} cells, stop: {}\n\
             position bound {:.3} mm, rotation bound {:.3} deg",
            self.position_level,
            self.rotation_level,
            self.cell_count,
            self.stop_reason.map_or("none".into(), |r| format!("{r:?}")),
            self.bounds.position_bound * 1e3,
            self.bounds.rotation_bound.to_degrees(),
        );
        if let Some(c) = self.distribution.as_ref().and_then(|d| d.confidence.as_ref()) {
            for (i, level) in c.levels.iter().enumerate() {
                s.push_str(&format!(
                    "\n{:>4.0}% confidence: {:.3} mm, {:.3} deg",
                    level * 100.0,
                    c.position[i] * 1e3,
                    c.rotation[i].to_degrees()
                ));
            }
        }
        if self.multimodality.multimodal {
            s.push_str(&format!(
                "\nmultimodal: {} separate rotation modes (advisory)",
                self.multimodality.components
            ));
        }
        s
    }
}

pub fn point_array(p: &Point3<f64>) -> [f64; 3] {
    [p.x, p.y, p.z]
}

pub fn quaternion_array(q: &UnitQuaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}
