//! Simulated measurement trials.
//!
//! Meshes are normalized to a 12.5 cm enclosing-sphere radius centered at the
//! origin. A trial draws uniform surface samples, keeps a farthest-point
//! subset, maps it through a random ground-truth pose and adds truncated
//! Gaussian noise in the robot frame.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::init_bound::{MeasurementError, MeasurementSet, DEFAULT_NUMERIC_SLACK};
use crate::mesh::TriangleMesh;

/// Enclosing-sphere radius of normalized meshes (25 cm diameter).
pub const NORMALIZED_RADIUS: f64 = 0.125;

/// Segments around the axis of the cone and cylinder.
pub const ROUND_SEGMENTS: usize = 64;

/// Half-width of the cube the ground-truth translation is drawn from.
pub const TRANSLATION_RANGE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Primitive {
    Cube,
    Cone,
    Cylinder,
    Tetrahedron,
    /// L-shaped bracket with a sloped top; no rotational symmetry.
    Bracket,
}

impl Primitive {
    pub const ALL: [Primitive; 5] = [
        Primitive::Cube,
        Primitive::Cone,
        Primitive::Cylinder,
        Primitive::Tetrahedron,
        Primitive::Bracket,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Cube => "cube",
            Primitive::Cone => "cone",
            Primitive::Cylinder => "cylinder",
            Primitive::Tetrahedron => "tetrahedron",
            Primitive::Bracket => "bracket",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// A normalized builtin mesh together with the largest distance between its
/// facets and the smooth surface they approximate.
#[derive(Debug, Clone)]
pub struct Builtin {
    pub mesh: TriangleMesh,
    pub sagitta: f64,
}

fn ring(radius: f64, z: f64) -> impl Iterator<Item = Point3<f64>> {
    (0..ROUND_SEGMENTS).map(move |k| {
        let a = 2.0 * PI * k as f64 / ROUND_SEGMENTS as f64;
        Point3::new(radius * a.cos(), radius * a.sin(), z)
    })
}

fn raw_primitive(kind: Primitive) -> (TriangleMesh, f64) {
    let n = ROUND_SEGMENTS as u32;
    let chord_gap = 1.0 - (PI / ROUND_SEGMENTS as f64).cos();
    let (vertices, triangles, round_radius): (Vec<Point3<f64>>, Vec<[u32; 3]>, f64) = match kind {
        Primitive::Cube => {
            let v = (0..8)
                .map(|i| {
                    Point3::new(
                        if i & 1 == 0 { -1.0 } else { 1.0 },
                        if i & 2 == 0 { -1.0 } else { 1.0 },
                        if i & 4 == 0 { -1.0 } else { 1.0 },
                    )
                })
                .collect();
            let t = alloc::vec![
                [0, 2, 1],
                [1, 2, 3],
                [4, 5, 6],
                [5, 7, 6],
                [0, 1, 4],
                [1, 5, 4],
                [2, 6, 3],
                [3, 6, 7],
                [0, 4, 2],
                [2, 4, 6],
                [1, 3, 5],
                [3, 7, 5],
            ];
            (v, t, 0.0)
        }
        Primitive::Tetrahedron => {
            let v = alloc::vec![
                Point3::new(1.0, 1.0, 1.0),
                Point3::new(1.0, -1.0, -1.0),
                Point3::new(-1.0, 1.0, -1.0),
                Point3::new(-1.0, -1.0, 1.0),
            ];
            (v, alloc::vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]], 0.0)
        }
        Primitive::Cone => {
            // ring 0..n at the base, apex n, base center n + 1
            let mut v: Vec<Point3<f64>> = ring(1.0, 0.0).collect();
            v.push(Point3::new(0.0, 0.0, 2.0));
            v.push(Point3::origin());
            let mut t = Vec::new();
            for k in 0..n {
                let next = (k + 1) % n;
                t.push([k, next, n]);
                t.push([next, k, n + 1]);
            }
            (v, t, 1.0)
        }
        Primitive::Cylinder => {
            // bottom ring 0..n, top ring n..2n, bottom center 2n, top center 2n + 1
            let mut v: Vec<Point3<f64>> = ring(1.0, -1.0).chain(ring(1.0, 1.0)).collect();
            v.push(Point3::new(0.0, 0.0, -1.0));
            v.push(Point3::new(0.0, 0.0, 1.0));
            let mut t = Vec::new();
            for k in 0..n {
                let next = (k + 1) % n;
                t.push([k, next, n + next]);
                t.push([k, n + next, n + k]);
                t.push([next, k, 2 * n]);
                t.push([n + k, n + next, 2 * n + 1]);
            }
            (v, t, 1.0)
        }
        Primitive::Bracket => {
            let outline = [(0.0, 0.0), (1.0, 0.0), (1.0, 0.3), (0.4, 0.3), (0.4, 0.8), (0.0, 0.8)];
            let top = |x: f64, y: f64| 0.3 + 0.25 * x - 0.1 * y;
            let mut v: Vec<Point3<f64>> = outline.iter().map(|&(x, y)| Point3::new(x, y, 0.0)).collect();
            v.extend(outline.iter().map(|&(x, y)| Point3::new(x, y, top(x, y))));
            // fan from the reflex corner, which sees the whole outline
            let fan = [[3, 4, 5], [3, 5, 0], [3, 0, 1], [3, 1, 2]];
            let mut t = Vec::new();
            for [a, b, c] in fan {
                t.push([a, c, b]);
                t.push([a + 6, b + 6, c + 6]);
            }
            for k in 0..6u32 {
                let next = (k + 1) % 6;
                t.push([k, next, next + 6]);
                t.push([k, next + 6, k + 6]);
            }
            (v, t, 0.0)
        }
    };
    let mesh = TriangleMesh::new(vertices, triangles).expect("builtin meshes are valid");
    (mesh, round_radius * chord_gap)
}

/// Builtin primitive, normalized.
pub fn builtin_primitive(kind: Primitive) -> Builtin {
    let (mesh, sagitta) = raw_primitive(kind);
    let scale = NORMALIZED_RADIUS / mesh.bounding_sphere().radius;
    Builtin {
        mesh: normalize_mesh(&mesh),
        sagitta: sagitta * scale,
    }
}

/// Recenters on the enclosing sphere and scales its radius to 12.5 cm.
pub fn normalize_mesh(mesh: &TriangleMesh) -> TriangleMesh {
    let sphere = mesh.bounding_sphere();
    let scale = NORMALIZED_RADIUS / sphere.radius;
    mesh.map_vertices(|p| Point3::from((p - sphere.center) * scale))
}

/// `n` points uniform on the surface.
pub fn uniform_surface_samples(mesh: &TriangleMesh, n: usize, rng: &mut impl Rng) -> Vec<Point3<f64>> {
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for i in 0..mesh.triangles().len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let tri = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(tri);
            let r1 = rng.random::<f64>().sqrt();
            let r2 = rng.random::<f64>();
            Point3::from(a.coords * (1.0 - r1) + b.coords * (r1 * (1.0 - r2)) + c.coords * (r1 * r2))
        })
        .collect()
}

/// Greedy max-min subset of size `m`, starting from a random point.
pub fn farthest_point_subsample(points: &[Point3<f64>], m: usize, rng: &mut impl Rng) -> Vec<Point3<f64>> {
    let m = m.min(points.len());
    if m == 0 {
        return Vec::new();
    }
    let first = rng.random_range(0..points.len());
    farthest_point_subsample_from(points, m, first)
}

/// Greedy max-min subset of size `m` starting at `points[first]`.
pub fn farthest_point_subsample_from(points: &[Point3<f64>], m: usize, first: usize) -> Vec<Point3<f64>> {
    let m = m.min(points.len());
    let mut chosen = Vec::with_capacity(m);
    let mut nearest = alloc::vec![f64::INFINITY; points.len()];
    let mut current = first;
    for _ in 0..m {
        chosen.push(points[current]);
        let mut next = current;
        let mut far = -1.0;
        for (i, p) in points.iter().enumerate() {
            let d = (p - points[current]).norm_squared();
            if d < nearest[i] {
                nearest[i] = d;
            }
            if nearest[i] > far {
                far = nearest[i];
                next = i;
            }
        }
        current = next;
    }
    chosen
}

/// Gaussian noise with standard deviation `scale * b_s` per axis, redrawn
/// until its norm is at most `b_s`.
pub fn truncated_noise(b_s: f64, scale: f64, rng: &mut impl Rng) -> Vector3<f64> {
    let sigma = scale * b_s;
    loop {
        let e = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ) * sigma;
        if e.norm() <= b_s {
            return e;
        }
    }
}

/// Haar-uniform rotation.
pub fn uniform_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if q.norm() > 1e-9 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

/// Ground-truth pose: uniform rotation, translation uniform in a 0.5 m cube.
pub fn random_pose(rng: &mut impl Rng) -> Isometry3<f64> {
    let rotation = uniform_rotation(rng);
    let t = Vector3::new(
        rng.random_range(-TRANSLATION_RANGE..TRANSLATION_RANGE),
        rng.random_range(-TRANSLATION_RANGE..TRANSLATION_RANGE),
        rng.random_range(-TRANSLATION_RANGE..TRANSLATION_RANGE),
    );
    Isometry3::from_parts(Translation3::from(t), rotation)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SimulationSpec {
    pub n_uniform: usize,
    pub n_samples: usize,
    pub sample_bound: f64,
    pub noise_scale: f64,
    pub noiseless: bool,
    /// Fixed ground truth; drawn at random when absent.
    pub ground_truth: Option<Isometry3<f64>>,
    /// Added to the default numeric slack, e.g. a tessellation sagitta.
    pub extra_slack: f64,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            n_uniform: 1000,
            n_samples: 10,
            sample_bound: 1e-3,
            noise_scale: 0.3,
            noiseless: false,
            ground_truth: None,
            extra_slack: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error("n_samples ({n_samples}) must be between 1 and n_uniform ({n_uniform})")]
    SampleCount { n_samples: usize, n_uniform: usize },
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationTrial {
    pub ground_truth: Isometry3<f64>,
    /// Sampled surface points in the fixture frame, before noise.
    pub surface_points: Vec<Point3<f64>>,
    pub noise: Vec<Vector3<f64>>,
    pub measurements: MeasurementSet,
}

/// Runs one trial on an already normalized mesh.
pub fn run_trial(mesh: &TriangleMesh, spec: &SimulationSpec) -> Result<SimulationTrial, SimulationError> {
    if spec.n_samples == 0 || spec.n_samples > spec.n_uniform {
        return Err(SimulationError::SampleCount {
            n_samples: spec.n_samples,
            n_uniform: spec.n_uniform,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ground_truth = match spec.ground_truth {
        Some(pose) => pose,
        None => random_pose(&mut rng),
    };
    let uniform = uniform_surface_samples(mesh, spec.n_uniform, &mut rng);
    let surface_points = farthest_point_subsample(&uniform, spec.n_samples, &mut rng);
    let noise: Vec<Vector3<f64>> = surface_points
        .iter()
        .map(|_| {
            if spec.noiseless {
                Vector3::zeros()
            } else {
                truncated_noise(spec.sample_bound, spec.noise_scale, &mut rng)
            }
        })
        .collect();
    let points = surface_points
        .iter()
        .zip(&noise)
        .map(|(p, e)| ground_truth * p + e)
        .collect();
    let measurements = MeasurementSet::new(
        points,
        spec.sample_bound,
        DEFAULT_NUMERIC_SLACK + spec.extra_slack.max(0.0),
    )?;
    Ok(SimulationTrial {
        ground_truth,
        surface_points,
        noise,
        measurements,
    })
}

/// Seed of trial `index` in a batch with master seed `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.random()
}
