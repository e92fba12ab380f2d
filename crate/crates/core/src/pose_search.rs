//! Guaranteed pose superset by hierarchical rejection on the SE(3) grid.
//!
//! A pose maps fixture coordinates to robot base coordinates,
//! `p_base = R * p_fixture + t`. A cell is rejected when, under its center
//! pose, some measured point is farther from the fixture surface than the
//! measurement bound plus everything the cell's extent could account for.
//! Cells are refined eight at a time, always in the dimension whose
//! discretization bound is larger, until the bounds are dominated by the
//! measurement error, the cell budget is reached, or both grids bottom out.
//!
//! The frontier is stored grouped by rotation cell: every retained rotation
//! cell carries the sorted list of position cells retained with it. The
//! measurement points are rotated into a group's frame once, and each
//! position cell then only shifts them.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Isometry3, Point3, Rotation3, SVector, UnitQuaternion, Vector3, Vector4};
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::init_bound::{feasible_aabb, InitBoundError, MeasurementSet, PositionAABB};
use crate::mesh::{DistanceIndex, TriangleMesh};
use crate::miniball::{min_enclosing_ball, min_enclosing_sphere, BoundingSphere, DEFAULT_SHUFFLE_SEED};
use crate::se3_grid::{
    position_bound, rotation_angle, rotation_point_bound, GridError, PoseCell, PositionCell, PositionGrid,
    RotationBoundTable, RotationCell, MAX_POSITION_LEVEL, MAX_ROTATION_LEVEL,
};

/// Inflation of the enclosing-sphere radius before it enters any bound.
pub const RADIUS_INFLATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error(transparent)]
    InitBound(#[from] InitBoundError),
    #[error("measurements inconsistent with mesh and b_s: every cell rejected at levels (position {pos_level}, rotation {rot_level})")]
    Inconsistent { pos_level: u8, rot_level: u8 },
    #[error("invalid search configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Fixture surface in its own frame, origin at the enclosing-sphere center.
#[derive(Debug, Clone)]
pub struct Fixture {
    index: DistanceIndex,
    sphere: BoundingSphere,
    origin_offset: Vector3<f64>,
    probe_radius: f64,
}

impl Fixture {
    /// Recenters `mesh` on its enclosing sphere. Measurements are taken to be
    /// probe-ball centers when `probe_radius > 0`.
    pub fn new(mesh: &TriangleMesh, probe_radius: f64) -> Self {
        let sphere = mesh.bounding_sphere();
        let offset = sphere.center.coords;
        let centered = mesh.translated(&-offset);
        Self {
            index: DistanceIndex::build(&centered),
            sphere: BoundingSphere {
                center: Point3::origin(),
                radius: sphere.radius,
            },
            origin_offset: offset,
            probe_radius: probe_radius.max(0.0),
        }
    }

    /// Position of the fixture origin in the mesh file's frame.
    pub fn origin_offset(&self) -> Vector3<f64> {
        self.origin_offset
    }

    pub fn enclosing_radius(&self) -> f64 {
        self.sphere.radius
    }

    pub fn probe_radius(&self) -> f64 {
        self.probe_radius
    }

    /// Radius used by the positional bound: every measurement lies within it
    /// of the fixture origin when the error is zero.
    pub fn bound_radius(&self) -> f64 {
        self.sphere.radius + RADIUS_INFLATION + self.probe_radius
    }

    pub fn index(&self) -> &DistanceIndex {
        &self.index
    }

    /// Distance from `q` (fixture frame) to the surface the measurements lie
    /// on: the mesh itself, or its offset by the probe radius.
    pub fn distance(&self, q: &Point3<f64>) -> f64 {
        crate::tip_calibration::offset_distance(&self.index, q, self.probe_radius)
    }

    /// `self.distance(q) > bound`, with early exit.
    pub fn exceeds(&self, q: &Point3<f64>, bound: f64) -> bool {
        if self.probe_radius > 0.0 {
            if self.index.distance_exceeds(q, self.probe_radius + bound) {
                return true;
            }
            self.probe_radius > bound && self.index.distance(q) < self.probe_radius - bound
        } else {
            self.index.distance_exceeds(q, bound)
        }
    }

    /// Pose of the mesh file's frame given a pose of the fixture frame.
    pub fn mesh_frame_pose(&self, pose: &Isometry3<f64>) -> Isometry3<f64> {
        pose * nalgebra::Translation3::from(-self.origin_offset)
    }

    /// Fixture-frame pose given a pose of the mesh file's frame.
    pub fn fixture_frame_pose(&self, mesh_pose: &Isometry3<f64>) -> Isometry3<f64> {
        mesh_pose * nalgebra::Translation3::from(self.origin_offset)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SearchConfig {
    pub cell_budget: u64,
    pub stop_fraction: f64,
    pub max_rot_level: u8,
    pub max_pos_level: u8,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            cell_budget: 10_000_000,
            stop_fraction: 0.125,
            max_rot_level: MAX_ROTATION_LEVEL,
            max_pos_level: 20,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.cell_budget < 72 {
            return Err(SearchError::Config("cell_budget must be at least 72"));
        }
        if !(self.stop_fraction >= 0.0 && self.stop_fraction.is_finite()) {
            return Err(SearchError::Config("stop_fraction must be finite and non-negative"));
        }
        if self.max_rot_level > MAX_ROTATION_LEVEL {
            return Err(SearchError::Config("max_rot_level exceeds the rotation grid depth"));
        }
        if self.max_pos_level >= MAX_POSITION_LEVEL {
            return Err(SearchError::Config("max_pos_level exceeds the position grid depth"));
        }
        Ok(())
    }
}

/// Which grid an expansion refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Dimension {
    Position,
    Rotation,
}

/// Why the search stopped refining.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    /// Discretization bounds fell below `stop_fraction * b_s`.
    Converged,
    /// The next expansion could exceed the cell budget.
    CellBudget,
    /// Both grids are at their deepest configured level.
    MaxLevel,
}

/// Everything the rejection test needs, shared read-only.
#[derive(Debug, Clone)]
pub struct SearchContext<'a> {
    fixture: &'a Fixture,
    meas: &'a MeasurementSet,
    table: &'a RotationBoundTable,
    aabb: PositionAABB,
    grid: PositionGrid,
    /// `|t_hat - p_i|`.
    sample_dist: Vec<f64>,
}

impl<'a> SearchContext<'a> {
    /// Computes the initial positional bound and the root position cube.
    pub fn new(
        fixture: &'a Fixture,
        meas: &'a MeasurementSet,
        table: &'a RotationBoundTable,
    ) -> Result<Self, SearchError> {
        let aabb = feasible_aabb(meas, fixture.bound_radius())?;
        let grid = PositionGrid::enclosing(&aabb.min, &aabb.max);
        let t_hat = aabb.center();
        let sample_dist = meas.points().iter().map(|p| (p - t_hat).norm()).collect();
        Ok(Self {
            fixture,
            meas,
            table,
            aabb,
            grid,
            sample_dist,
        })
    }

    pub fn aabb(&self) -> &PositionAABB {
        &self.aabb
    }

    pub fn grid(&self) -> &PositionGrid {
        &self.grid
    }

    pub fn table(&self) -> &RotationBoundTable {
        self.table
    }

    pub fn measurements(&self) -> &MeasurementSet {
        self.meas
    }

    pub fn fixture(&self) -> &Fixture {
        self.fixture
    }

    /// `b_p`.
    pub fn position_bound(&self, level: u8) -> f64 {
        position_bound(level, self.grid.l0)
    }

    /// `b_r^i` for sample `i`.
    pub fn rotation_bound(&self, level: u8, i: usize) -> f64 {
        rotation_point_bound(self.table.gamma(level), self.sample_dist[i], self.aabb.half_diagonal())
    }

    /// Largest `b_r^i` over the samples.
    pub fn max_rotation_bound(&self, level: u8) -> f64 {
        (0..self.sample_dist.len())
            .map(|i| self.rotation_bound(level, i))
            .fold(0.0, f64::max)
    }

    /// `b^i = b_p + b_r^i + b_s + b_eps` at the given levels.
    pub fn total_bound(&self, pos_level: u8, rot_level: u8, i: usize) -> f64 {
        self.position_bound(pos_level)
            + self.rotation_bound(rot_level, i)
            + self.meas.sample_bound()
            + self.meas.numeric_slack()
    }

    pub fn cell_total_bound(&self, cell: &PoseCell, i: usize) -> f64 {
        self.total_bound(cell.position.level, cell.rotation.level, i)
    }

    fn total_bounds(&self, pos_level: u8, rot_level: u8) -> Vec<f64> {
        (0..self.sample_dist.len())
            .map(|i| self.total_bound(pos_level, rot_level, i))
            .collect()
    }

    /// True iff some measurement, mapped into the fixture frame by the cell's
    /// center pose, is farther from the surface than its total bound.
    pub fn reject_cell(&self, cell: &PoseCell) -> bool {
        let pose = cell.center(&self.grid);
        let inv = pose.inverse();
        self.meas
            .points()
            .iter()
            .enumerate()
            .any(|(i, p)| self.fixture.exceeds(&(inv * p), self.cell_total_bound(cell, i)))
    }

    /// The dimension [`expand`] refines next: rotation when the largest
    /// rotational bound exceeds the positional one, position otherwise.
    /// A dimension already at its deepest level is never chosen while the
    /// other can still be refined.
    pub fn expansion_choice(&self, pos_level: u8, rot_level: u8, config: &SearchConfig) -> Option<Dimension> {
        let rot_open = rot_level < config.max_rot_level;
        let pos_open = pos_level < config.max_pos_level;
        let prefer_rotation = self.max_rotation_bound(rot_level) > self.position_bound(pos_level);
        match (prefer_rotation, rot_open, pos_open) {
            (_, false, false) => None,
            (true, true, _) | (false, true, false) => Some(Dimension::Rotation),
            _ => Some(Dimension::Position),
        }
    }
}

/// One rotation cell of the frontier with its retained position cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationGroup {
    pub rotation: RotationCell,
    /// Packed [`PositionCell`] keys, sorted ascending.
    pub positions: Vec<u64>,
}

/// The live frontier: every cell that survived rejection, all at one
/// resolution pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSuperset {
    pub grid: PositionGrid,
    pub aabb: PositionAABB,
    pub pos_level: u8,
    pub rot_level: u8,
    pub table: RotationBoundTable,
    /// Set once refinement has stopped.
    pub stop: Option<StopReason>,
    groups: Vec<RotationGroup>,
}

impl PoseSuperset {
    /// Rebuilds a frontier from its cells, which must all share one
    /// resolution pair.
    pub fn from_cells(
        grid: PositionGrid,
        aabb: PositionAABB,
        table: RotationBoundTable,
        cells: impl IntoIterator<Item = PoseCell>,
        stop: Option<StopReason>,
    ) -> Result<Self, SearchError> {
        let mut by_rotation: BTreeMap<RotationCell, Vec<u64>> = BTreeMap::new();
        let mut levels = None;
        for cell in cells {
            let l = (cell.position.level, cell.rotation.level);
            if *levels.get_or_insert(l) != l {
                return Err(SearchError::Config("superset cells must share one resolution"));
            }
            by_rotation.entry(cell.rotation).or_default().push(cell.position.pack());
        }
        let (pos_level, rot_level) = levels.ok_or(SearchError::Config("superset has no cells"))?;
        if rot_level > table.max_level() {
            return Err(SearchError::Config("bound table is shallower than the superset"));
        }
        let groups = by_rotation
            .into_iter()
            .map(|(rotation, mut positions)| {
                positions.sort_unstable();
                positions.dedup();
                RotationGroup { rotation, positions }
            })
            .collect();
        Ok(Self {
            grid,
            aabb,
            pos_level,
            rot_level,
            table,
            stop,
            groups,
        })
    }

    pub fn groups(&self) -> &[RotationGroup] {
        &self.groups
    }

    pub fn cell_count(&self) -> usize {
        self.groups.iter().map(|g| g.positions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.table.gamma(self.rot_level)
    }

    pub fn position_bound(&self) -> f64 {
        self.grid.bound(self.pos_level)
    }

    pub fn cells(&self) -> impl Iterator<Item = PoseCell> + '_ {
        let level = self.pos_level;
        self.groups.iter().flat_map(move |g| {
            g.positions.iter().map(move |&k| PoseCell {
                rotation: g.rotation,
                position: PositionCell::unpack(level, k),
            })
        })
    }

    /// Whether some frontier cell contains the pose (by grid location).
    pub fn contains(&self, pose: &Isometry3<f64>) -> bool {
        let Ok(rot) = RotationCell::locate(&pose.rotation, self.rot_level) else {
            return false;
        };
        let Some(pos) = self.grid.locate(&Point3::from(pose.translation.vector), self.pos_level) else {
            return false;
        };
        self.groups
            .binary_search_by(|g| g.rotation.cmp(&rot))
            .is_ok_and(|i| self.groups[i].positions.binary_search(&pos.pack()).is_ok())
    }

    /// Whether `rotation` lies within `gamma` of some retained rotation center.
    pub fn covers_rotation(&self, rotation: &UnitQuaternion<f64>) -> bool {
        let gamma = self.gamma();
        self.groups
            .iter()
            .any(|g| rotation_angle(&g.rotation.center(), rotation) <= gamma)
    }

    fn from_groups(ctx: &SearchContext<'_>, pos_level: u8, rot_level: u8, groups: Vec<RotationGroup>) -> Self {
        Self {
            grid: ctx.grid,
            aabb: ctx.aabb,
            pos_level,
            rot_level,
            table: ctx.table.clone(),
            stop: None,
            groups,
        }
    }
}

/// Keeps the positions of one group that pass the rejection test.
fn filter_group(
    ctx: &SearchContext<'_>,
    rotation: RotationCell,
    pos_level: u8,
    candidates: impl Iterator<Item = u64>,
    bounds: &[f64],
) -> Option<RotationGroup> {
    let inv: Rotation3<f64> = rotation.center().inverse().to_rotation_matrix();
    let rotated: Vec<Vector3<f64>> = ctx.meas.points().iter().map(|p| inv * p.coords).collect();
    let n = rotated.len();
    let mut hint = 0;
    let mut kept = Vec::new();
    for key in candidates {
        let center = ctx.grid.center(&PositionCell::unpack(pos_level, key));
        let shift = inv * center.coords;
        let mut rejected = false;
        for j in 0..n {
            let i = (hint + j) % n;
            if ctx.fixture.exceeds(&Point3::from(rotated[i] - shift), bounds[i]) {
                hint = i;
                rejected = true;
                break;
            }
        }
        if !rejected {
            kept.push(key);
        }
    }
    (!kept.is_empty()).then_some(RotationGroup {
        rotation,
        positions: kept,
    })
}

#[cfg(feature = "parallel")]
fn flat_map_groups<T, F>(items: &[T], f: F) -> Vec<RotationGroup>
where
    T: Sync,
    F: Fn(&T) -> Vec<RotationGroup> + Sync + Send,
{
    use rayon::prelude::*;
    let parts: Vec<Vec<RotationGroup>> = items.par_iter().map(f).collect();
    parts.into_iter().flatten().collect()
}

#[cfg(not(feature = "parallel"))]
fn flat_map_groups<T, F>(items: &[T], f: F) -> Vec<RotationGroup>
where
    F: Fn(&T) -> Vec<RotationGroup>,
{
    items.iter().flat_map(f).collect()
}

/// The 72 level-0 rotation cells paired with the root cube, filtered.
pub fn initial_superset(ctx: &SearchContext<'_>) -> Result<PoseSuperset, SearchError> {
    let bounds = ctx.total_bounds(0, 0);
    let roots: Vec<RotationCell> = RotationCell::level_zero().collect();
    let groups = flat_map_groups(&roots, |&r| {
        filter_group(ctx, r, 0, core::iter::once(PositionCell::ROOT.pack()), &bounds)
            .into_iter()
            .collect()
    });
    if groups.is_empty() {
        return Err(SearchError::Inconsistent {
            pos_level: 0,
            rot_level: 0,
        });
    }
    Ok(PoseSuperset::from_groups(ctx, 0, 0, groups))
}

/// Refines every frontier cell along `dimension` and filters the children.
pub fn expand_along(
    superset: &PoseSuperset,
    ctx: &SearchContext<'_>,
    dimension: Dimension,
) -> Result<PoseSuperset, SearchError> {
    let (pos_level, rot_level) = match dimension {
        Dimension::Position => (superset.pos_level + 1, superset.rot_level),
        Dimension::Rotation => (superset.pos_level, superset.rot_level + 1),
    };
    if rot_level > MAX_ROTATION_LEVEL || rot_level as usize >= superset.table.gamma.len() {
        return Err(GridError::RotationLevel(rot_level).into());
    }
    if pos_level >= MAX_POSITION_LEVEL {
        return Err(GridError::PositionLevel(pos_level).into());
    }
    let bounds = ctx.total_bounds(pos_level, rot_level);
    let groups = match dimension {
        Dimension::Rotation => flat_map_groups(&superset.groups, |g| {
            let children = g.rotation.children().expect("level checked above");
            children
                .into_iter()
                .filter_map(|child| filter_group(ctx, child, pos_level, g.positions.iter().copied(), &bounds))
                .collect()
        }),
        Dimension::Position => flat_map_groups(&superset.groups, |g| {
            let parent_level = superset.pos_level;
            let mut children: Vec<u64> = g
                .positions
                .iter()
                .flat_map(|&k| {
                    PositionCell::unpack(parent_level, k)
                        .children()
                        .expect("level checked above")
                        .map(|c| c.pack())
                })
                .collect();
            children.sort_unstable();
            filter_group(ctx, g.rotation, pos_level, children.into_iter(), &bounds)
                .into_iter()
                .collect()
        }),
    };
    if groups.is_empty() {
        return Err(SearchError::Inconsistent { pos_level, rot_level });
    }
    let mut out = PoseSuperset::from_groups(ctx, pos_level, rot_level, groups);
    if dimension == Dimension::Rotation {
        // children of different parents interleave; keep groups sorted
        out.groups.sort_unstable_by_key(|g| g.rotation);
    }
    Ok(out)
}

/// One refinement step: picks the dimension, refuses (setting
/// [`PoseSuperset::stop`]) when the budget could be exceeded or no
/// dimension can be refined.
pub fn expand(
    superset: &PoseSuperset,
    ctx: &SearchContext<'_>,
    config: &SearchConfig,
) -> Result<PoseSuperset, SearchError> {
    let Some(dimension) = ctx.expansion_choice(superset.pos_level, superset.rot_level, config) else {
        let mut out = superset.clone();
        out.stop = Some(StopReason::MaxLevel);
        return Ok(out);
    };
    if 8 * superset.cell_count() as u64 > config.cell_budget {
        let mut out = superset.clone();
        out.stop = Some(StopReason::CellBudget);
        return Ok(out);
    }
    expand_along(superset, ctx, dimension)
}

/// Runs the full search from level (0, 0).
pub fn compute_superset(
    fixture: &Fixture,
    meas: &MeasurementSet,
    table: &RotationBoundTable,
    config: &SearchConfig,
) -> Result<PoseSuperset, SearchError> {
    config.validate()?;
    if (config.max_rot_level as usize) >= table.gamma.len() {
        return Err(SearchError::Config("bound table shallower than max_rot_level"));
    }
    let ctx = SearchContext::new(fixture, meas, table)?;
    search_from(&ctx, config)
}

/// Search loop given a prepared context.
pub fn search_from(ctx: &SearchContext<'_>, config: &SearchConfig) -> Result<PoseSuperset, SearchError> {
    let mut superset = initial_superset(ctx)?;
    let b_s = ctx.meas.sample_bound();
    loop {
        let discretization = ctx.position_bound(superset.pos_level) + ctx.max_rotation_bound(superset.rot_level);
        if discretization <= config.stop_fraction * b_s {
            superset.stop = Some(StopReason::Converged);
            return Ok(superset);
        }
        let next = expand(&superset, ctx, config)?;
        log::debug!(
            "levels ({}, {}): {} cells",
            next.pos_level,
            next.rot_level,
            next.cell_count()
        );
        if next.stop.is_some() {
            return Ok(next);
        }
        superset = next;
    }
}

// ── Point estimate ──────────────────────────────────────────────────────────

/// Point estimate with guaranteed error bounds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundsReport {
    pub position_estimate: Point3<f64>,
    pub position_bound: f64,
    pub rotation_estimate: UnitQuaternion<f64>,
    pub rotation_bound: f64,
    pub cell_count: usize,
    pub levels: (u8, u8),
}

/// Distinct position cells of the frontier.
pub fn unique_positions(superset: &PoseSuperset) -> Vec<PositionCell> {
    let mut keys: Vec<u64> = superset
        .groups
        .iter()
        .flat_map(|g| g.positions.iter().copied())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|k| PositionCell::unpack(superset.pos_level, k))
        .collect()
}

/// Corners that can be vertices of the convex hull of the retained cubes:
/// only the outer faces of the first and last cube in each x-row.
fn hull_candidate_corners(superset: &PoseSuperset) -> Vec<Point3<f64>> {
    let mut cells = unique_positions(superset);
    cells.sort_unstable_by_key(|c| (c.index[1], c.index[2], c.index[0]));
    let side = superset.grid.side(superset.pos_level);
    let origin = superset.grid.min_corner;
    let mut corners = Vec::new();
    let mut push_face = |ix: u32, iy: u32, iz: u32| {
        for dy in 0..2u32 {
            for dz in 0..2u32 {
                corners.push(origin + Vector3::new(ix as f64, (iy + dy) as f64, (iz + dz) as f64) * side);
            }
        }
    };
    let mut i = 0;
    while i < cells.len() {
        let row = (cells[i].index[1], cells[i].index[2]);
        let mut j = i;
        while j + 1 < cells.len() && (cells[j + 1].index[1], cells[j + 1].index[2]) == row {
            j += 1;
        }
        push_face(cells[i].index[0], row.0, row.1);
        push_face(cells[j].index[0] + 1, row.0, row.1);
        i = j + 1;
    }
    corners
}

/// Quaternion coordinates flipped into the hemisphere of `reference`.
pub fn align_hemisphere(q: &UnitQuaternion<f64>, reference: &UnitQuaternion<f64>) -> Vector4<f64> {
    if q.coords.dot(&reference.coords) < 0.0 {
        -q.coords
    } else {
        q.coords
    }
}

pub fn point_estimate(superset: &PoseSuperset) -> BoundsReport {
    let corners = hull_candidate_corners(superset);
    let sphere = min_enclosing_sphere(&corners).expect("frontier is non-empty");

    let centers: Vec<UnitQuaternion<f64>> = superset.groups.iter().map(|g| g.rotation.center()).collect();
    let reference = centers[0];
    let aligned: Vec<SVector<f64, 4>> = centers.iter().map(|q| align_hemisphere(q, &reference)).collect();
    let ball = min_enclosing_ball(&aligned, DEFAULT_SHUFFLE_SEED).expect("frontier is non-empty");
    let rotation_estimate = if ball.center.norm() > 1e-9 {
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(ball.center))
    } else {
        reference
    };
    let spread = centers
        .iter()
        .map(|c| rotation_angle(c, &rotation_estimate))
        .fold(0.0, f64::max);

    BoundsReport {
        position_estimate: sphere.center,
        position_bound: sphere.radius,
        rotation_estimate,
        rotation_bound: (spread + superset.gamma()).min(PI),
        cell_count: superset.cell_count(),
        levels: (superset.pos_level, superset.rot_level),
    }
}

// ── Multimodality ───────────────────────────────────────────────────────────

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        parent[i as usize] = parent[parent[i as usize] as usize];
        i = parent[i as usize];
    }
    i
}

/// Connected components of the retained rotation-cell centers, two centers
/// being adjacent when their geodesic distance is at most `factor * gamma`.
/// Returns the component label of every group (labels in `0..count`) and the
/// component count.
pub fn rotation_components(superset: &PoseSuperset, factor: f64) -> (Vec<u32>, usize) {
    let centers: Vec<Vector4<f64>> = superset
        .groups
        .iter()
        .map(|g| {
            let q = g.rotation.center().coords;
            if q.w < 0.0 {
                -q
            } else {
                q
            }
        })
        .collect();
    let threshold = (factor * superset.gamma()).min(PI);
    // chord between unit quaternions at half the rotation angle
    let h = 2.0 * (threshold / 4.0).sin();
    let key = |v: &Vector4<f64>| -> [i64; 4] { core::array::from_fn(|k| (v[k] / h).floor() as i64) };
    let mut buckets: BTreeMap<[i64; 4], Vec<u32>> = BTreeMap::new();
    for (i, c) in centers.iter().enumerate() {
        buckets.entry(key(c)).or_default().push(i as u32);
    }
    let mut parent: Vec<u32> = (0..centers.len() as u32).collect();
    for (i, c) in centers.iter().enumerate() {
        for v in [*c, -*c] {
            let base = key(&v);
            for offset in 0..81u32 {
                let mut k = base;
                let mut o = offset;
                for d in k.iter_mut() {
                    *d += (o % 3) as i64 - 1;
                    o /= 3;
                }
                let Some(members) = buckets.get(&k) else {
                    continue;
                };
                for &j in members {
                    if (j as usize) <= i {
                        continue;
                    }
                    let angle = 2.0 * centers[i].dot(&centers[j as usize]).abs().min(1.0).acos();
                    if angle <= threshold {
                        let a = find(&mut parent, i as u32);
                        let b = find(&mut parent, j);
                        if a != b {
                            parent[a.max(b) as usize] = a.min(b);
                        }
                    }
                }
            }
        }
    }
    let mut roots: BTreeMap<u32, u32> = BTreeMap::new();
    let labels: Vec<u32> = (0..centers.len() as u32)
        .map(|i| {
            let r = find(&mut parent, i);
            let next = roots.len() as u32;
            *roots.entry(r).or_insert(next)
        })
        .collect();
    let count = roots.len();
    (labels, count)
}

/// Adjacency factor used for the multimodality flag.
pub const COMPONENT_FACTOR: f64 = 2.5;

pub fn is_multimodal(superset: &PoseSuperset) -> bool {
    rotation_components(superset, COMPONENT_FACTOR).1 > 1
}
