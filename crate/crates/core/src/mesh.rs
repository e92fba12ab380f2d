//! Triangle meshes and exact point-to-mesh distance queries.
//!
//! [`DistanceIndex`] is a median-split AABB tree over triangle centroids. It
//! answers two kinds of query: the exact closest surface point, and the cheaper
//! predicate "is the surface farther than `bound` from this point", which is
//! all the pose search needs for rejection.

use alloc::vec::Vec;

use nalgebra::{Point3, Vector3};
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::miniball::{self, BoundingSphere};

/// Maximum number of triangles stored in a tree leaf.
const LEAF_SIZE: usize = 4;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("triangle {triangle} references vertex {index}, but the mesh has {count} vertices")]
    IndexOutOfRange { triangle: usize, index: u32, count: usize },
    #[error("every triangle of the mesh is degenerate")]
    AllDegenerate,
}

/// An indexed triangle mesh, coordinates in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Validates the mesh and drops zero-area triangles.
    ///
    /// A triangle counts as degenerate when twice its area is below `1e-12`
    /// times its squared longest edge (or when its corners coincide).
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if let Some(i) = vertices.iter().position(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange {
                    triangle: t,
                    index,
                    count: vertices.len(),
                });
            }
        }
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        let total = triangles.len();
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|tri| {
                let [a, b, c] = tri.map(|i| vertices[i as usize]);
                !is_degenerate(&a, &b, &c)
            })
            .collect();
        let dropped = total - triangles.len();
        if triangles.is_empty() {
            return Err(MeshError::AllDegenerate);
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate triangle(s) of {total}");
        }
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Applies `f` to every vertex, keeping the topology.
    pub fn map_vertices(&self, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map_vertices(|v| v * factor)
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        self.map_vertices(|v| v + offset)
    }

    /// Smallest sphere enclosing all vertices, and therefore every triangle.
    pub fn bounding_sphere(&self) -> BoundingSphere {
        miniball::min_enclosing_sphere(&self.vertices).expect("mesh has vertices")
    }
}

fn is_degenerate(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> bool {
    let ab = b - a;
    let ac = c - a;
    let bc = c - b;
    let longest = ab.norm_squared().max(ac.norm_squared()).max(bc.norm_squared());
    longest == 0.0 || ab.cross(&ac).norm() <= 1e-12 * longest
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
pub fn closest_point_on_triangle(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Closest surface point and its (unsigned) distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPointResult {
    pub point: Point3<f64>,
    pub distance: f64,
}

/// Exhaustive scan over all triangles; the reference the tree must agree with.
pub fn closest_point_brute_force(mesh: &TriangleMesh, query: &Point3<f64>) -> ClosestPointResult {
    let mut best = ClosestPointResult {
        point: Point3::origin(),
        distance: f64::INFINITY,
    };
    let mut best_d2 = f64::INFINITY;
    for i in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.triangle(i);
        let p = closest_point_on_triangle(query, &a, &b, &c);
        let d2 = (p - query).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best.point = p;
        }
    }
    best.distance = best_d2.sqrt();
    best
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Point3<f64>,
    max: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Point3::from([f64::INFINITY; 3]),
            max: Point3::from([f64::NEG_INFINITY; 3]),
        }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = p[k];
            let excess = if v < self.min[k] {
                self.min[k] - v
            } else if v > self.max[k] {
                v - self.max[k]
            } else {
                0.0
            };
            d2 += excess * excess;
        }
        d2
    }
}

#[derive(Debug, Clone, Copy)]
enum NodeKind {
    /// Index of the left child; the right child is stored at `left + 1`.
    Inner { left: u32 },
    /// Range into the reordered triangle array.
    Leaf { start: u32, len: u32 },
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

/// Immutable bounding-volume tree over the triangles of a mesh.
///
/// Safe to query from many threads at once.
#[derive(Debug, Clone)]
pub struct DistanceIndex {
    nodes: Vec<Node>,
    /// Triangle corners in leaf order.
    triangles: Vec<[Point3<f64>; 3]>,
}

impl DistanceIndex {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let n = mesh.triangles().len();
        let corners: Vec<[Point3<f64>; 3]> = (0..n).map(|i| mesh.triangle(i)).collect();
        let centroids: Vec<Point3<f64>> = corners
            .iter()
            .map(|[a, b, c]| Point3::from((a.coords + b.coords + c.coords) / 3.0))
            .collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        nodes.push(Node {
            bounds: Aabb::empty(),
            kind: NodeKind::Leaf { start: 0, len: 0 },
        });
        // (node slot, start, end) work list
        let mut work = alloc::vec![(0usize, 0usize, n)];
        while let Some((slot, start, end)) = work.pop() {
            let mut bounds = Aabb::empty();
            let mut centroid_bounds = Aabb::empty();
            for &t in &order[start..end] {
                for p in &corners[t as usize] {
                    bounds.grow(p);
                }
                centroid_bounds.grow(&centroids[t as usize]);
            }
            if end - start <= LEAF_SIZE {
                nodes[slot] = Node {
                    bounds,
                    kind: NodeKind::Leaf {
                        start: start as u32,
                        len: (end - start) as u32,
                    },
                };
                continue;
            }
            let extent = centroid_bounds.max - centroid_bounds.min;
            let axis = extent.imax();
            let mid = start + (end - start) / 2;
            order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
            });
            let left = nodes.len();
            let placeholder = Node {
                bounds: Aabb::empty(),
                kind: NodeKind::Leaf { start: 0, len: 0 },
            };
            nodes.push(placeholder);
            nodes.push(placeholder);
            nodes[slot] = Node {
                bounds,
                kind: NodeKind::Inner { left: left as u32 },
            };
            work.push((left + 1, mid, end));
            work.push((left, start, mid));
        }
        let triangles = order.iter().map(|&t| corners[t as usize]).collect();
        Self { nodes, triangles }
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Exact closest point on the mesh surface.
    pub fn closest_point(&self, query: &Point3<f64>) -> ClosestPointResult {
        let mut best_d2 = f64::INFINITY;
        let mut best = Point3::origin();
        let mut stack: [(u32, f64); 64] = [(0, 0.0); 64];
        let mut top = 1;
        stack[0] = (0, self.nodes[0].bounds.distance_squared(query));
        while top > 0 {
            top -= 1;
            let (node, box_d2) = stack[top];
            if box_d2 >= best_d2 {
                continue;
            }
            match self.nodes[node as usize].kind {
                NodeKind::Leaf { start, len } => {
                    for tri in &self.triangles[start as usize..(start + len) as usize] {
                        let p = closest_point_on_triangle(query, &tri[0], &tri[1], &tri[2]);
                        let d2 = (p - query).norm_squared();
                        if d2 < best_d2 {
                            best_d2 = d2;
                            best = p;
                        }
                    }
                }
                NodeKind::Inner { left } => {
                    let dl = self.nodes[left as usize].bounds.distance_squared(query);
                    let dr = self.nodes[left as usize + 1].bounds.distance_squared(query);
                    // push the farther child first so the nearer one is visited next
                    let (near, far) = if dl <= dr {
                        ((left, dl), (left + 1, dr))
                    } else {
                        ((left + 1, dr), (left, dl))
                    };
                    if far.1 < best_d2 {
                        stack[top] = far;
                        top += 1;
                    }
                    if near.1 < best_d2 {
                        stack[top] = near;
                        top += 1;
                    }
                }
            }
        }
        ClosestPointResult {
            point: best,
            distance: best_d2.sqrt(),
        }
    }

    pub fn distance(&self, query: &Point3<f64>) -> f64 {
        self.closest_point(query).distance
    }

    /// True iff every surface point is farther than `bound` from `query`.
    ///
    /// Equivalent to `self.distance(query) > bound` but stops at the first
    /// triangle found within the bound.
    pub fn distance_exceeds(&self, query: &Point3<f64>, bound: f64) -> bool {
        let bound2 = bound * bound;
        let mut stack: [u32; 64] = [0; 64];
        let mut top = 0;
        if self.nodes[0].bounds.distance_squared(query) > bound2 {
            return true;
        }
        stack[0] = 0;
        top += 1;
        while top > 0 {
            top -= 1;
            match self.nodes[stack[top] as usize].kind {
                NodeKind::Leaf { start, len } => {
                    for tri in &self.triangles[start as usize..(start + len) as usize] {
                        let p = closest_point_on_triangle(query, &tri[0], &tri[1], &tri[2]);
                        if (p - query).norm_squared() <= bound2 {
                            return false;
                        }
                    }
                }
                NodeKind::Inner { left } => {
                    let dl = self.nodes[left as usize].bounds.distance_squared(query);
                    let dr = self.nodes[left as usize + 1].bounds.distance_squared(query);
                    let (near, far) = if dl <= dr {
                        ((left, dl), (left + 1, dr))
                    } else {
                        ((left + 1, dr), (left, dl))
                    };
                    if far.1 <= bound2 {
                        stack[top] = far.0;
                        top += 1;
                    }
                    if near.1 <= bound2 {
                        stack[top] = near.0;
                        top += 1;
                    }
                }
            }
        }
        true
    }
}
