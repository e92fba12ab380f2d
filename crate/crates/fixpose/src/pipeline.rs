//! End-to-end runs: superset search, point estimate, pose distribution and
//! confidence intervals, plus simulated trials scored against ground truth.

use fixpose_core::init_bound::{InitBoundError, MeasurementSet};
use fixpose_core::mesh::TriangleMesh;
use fixpose_core::pose_distribution::{
    confidence_report, pose_distribution, ConfidenceReport, DiscretePoseDistribution, DistributionError,
};
use fixpose_core::pose_search::{
    compute_superset, point_estimate, rotation_components, BoundsReport, Fixture, PoseSuperset, SearchError,
};
use fixpose_core::se3_grid::{rotation_angle, RotationBoundTable};
use fixpose_core::sim::{builtin_primitive, run_trial, Primitive, SimulationError, SimulationSpec, SimulationTrial};
use nalgebra::{Isometry3, Point3};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::formats::PoseJson;
use crate::report::{
    mesh_digest, point_array, BoundsSection, ConfidenceSection, DistributionSection, InputDigest, MultimodalitySection,
    RunReport,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

impl PipelineError {
    /// No pose brings every measurement within the error bound of the
    /// surface.
    pub fn is_inconsistent(&self) -> bool {
        matches!(
            self,
            PipelineError::Search(SearchError::Inconsistent { .. })
                | PipelineError::Search(SearchError::InitBound(InitBoundError::Inconsistent { .. }))
        )
    }
}

pub struct BoundRun {
    pub fixture: Fixture,
    pub superset: PoseSuperset,
    pub bounds: BoundsReport,
    pub distribution: Option<DiscretePoseDistribution>,
    pub confidence: Option<ConfidenceReport>,
    pub report: RunReport,
}

/// Runs the full pipeline on measurements of `mesh`. The distribution step
/// is skipped when `with_distribution` is false.
pub fn run_bound(
    mesh: &TriangleMesh,
    meas: &MeasurementSet,
    config: &Config,
    table: &RotationBoundTable,
    with_distribution: bool,
) -> Result<BoundRun, PipelineError> {
    let fixture = Fixture::new(mesh, config.probe_radius);
    let superset = compute_superset(&fixture, meas, table, &config.search)?;
    let bounds = point_estimate(&superset);
    let (_, components) = rotation_components(&superset, config.component_factor);

    let (distribution, confidence, section) = if with_distribution {
        let dist = pose_distribution(&superset, &fixture, meas, &config.distribution)?;
        if dist.most_probable().is_some_and(|s| s.probability > 0.5) {
            log::warn!(
                "one sample holds most of the probability mass; confidence radii are unreliable \
                 (raise the cell budget or the samples per cell)"
            );
        }
        let (confidence, error) = match confidence_report(&dist) {
            Ok(c) => (Some(c), None),
            Err(e @ DistributionError::RotationAmbiguity) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        };
        let section = DistributionSection {
            samples: dist.len(),
            k_per_cell: dist.k_per_cell,
            sigma: dist.sigma,
            uniform_fallback: dist.uniform_fallback,
            confidence: confidence.as_ref().map(ConfidenceSection::from),
            confidence_error: error,
        };
        (Some(dist), confidence, Some(section))
    } else {
        (None, None, None)
    };

    let estimate = Isometry3::from_parts(bounds.position_estimate.coords.into(), bounds.rotation_estimate);
    let report = RunReport {
        input: InputDigest {
            mesh_sha256: mesh_digest(mesh),
            triangle_count: mesh.triangles().len(),
            point_count: meas.len(),
            sample_bound: meas.sample_bound(),
            numeric_slack: meas.numeric_slack(),
            probe_radius: fixture.probe_radius(),
        },
        origin_offset: fixture.origin_offset().into(),
        aabb_min: point_array(&superset.aabb.min),
        aabb_max: point_array(&superset.aabb.max),
        position_level: superset.pos_level,
        rotation_level: superset.rot_level,
        stop_reason: superset.stop,
        cell_count: superset.cell_count(),
        bounds: BoundsSection::from(&bounds),
        mesh_pose_estimate: PoseJson::from(&fixture.mesh_frame_pose(&estimate)),
        distribution: section,
        multimodality: MultimodalitySection {
            multimodal: components > 1,
            components,
            adjacency_factor: config.component_factor,
        },
    };
    Ok(BoundRun {
        fixture,
        superset,
        bounds,
        distribution,
        confidence,
        report,
    })
}

/// Errors of a run against a known pose of the mesh file's frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub pos_bound: f64,
    pub rot_bound: f64,
    pub pos_ci99: Option<f64>,
    pub rot_ci99: Option<f64>,
    /// Error of the expected pose.
    pub pos_err: Option<f64>,
    pub rot_err: Option<f64>,
    /// Error of the bounded point estimate.
    pub point_pos_err: f64,
    pub point_rot_err: f64,
    pub truth_in_superset: bool,
    pub cell_count: usize,
    pub multimodal: bool,
}

pub fn score(run: &BoundRun, mesh_truth: &Isometry3<f64>) -> TrialOutcome {
    let truth = run.fixture.fixture_frame_pose(mesh_truth);
    let t = Point3::from(truth.translation.vector);
    let ci = run.confidence.as_ref().and_then(|c| c.at(0.99));
    TrialOutcome {
        pos_bound: run.bounds.position_bound,
        rot_bound: run.bounds.rotation_bound,
        pos_ci99: ci.map(|c| c.0),
        rot_ci99: ci.map(|c| c.1),
        pos_err: run.confidence.as_ref().map(|c| (c.expected_position - t).norm()),
        rot_err: run
            .confidence
            .as_ref()
            .map(|c| rotation_angle(&c.expected_rotation, &truth.rotation)),
        point_pos_err: (run.bounds.position_estimate - t).norm(),
        point_rot_err: rotation_angle(&run.bounds.rotation_estimate, &truth.rotation),
        truth_in_superset: run.superset.contains(&truth),
        cell_count: run.superset.cell_count(),
        multimodal: run.report.multimodality.multimodal,
    }
}

/// One simulated trial on a builtin shape. Tessellation sagitta of round
/// shapes is added to the numeric slack.
pub struct SimulatedRun {
    pub object: Primitive,
    pub trial: SimulationTrial,
    pub run: BoundRun,
    pub outcome: TrialOutcome,
}

pub fn simulate_builtin(
    object: Primitive,
    spec: &SimulationSpec,
    config: &Config,
    table: &RotationBoundTable,
) -> Result<SimulatedRun, PipelineError> {
    let builtin = builtin_primitive(object);
    let spec = SimulationSpec {
        extra_slack: spec.extra_slack.max(builtin.sagitta),
        ..spec.clone()
    };
    let trial = run_trial(&builtin.mesh, &spec)?;
    let run = run_bound(&builtin.mesh, &trial.measurements, config, table, true)?;
    let outcome = score(&run, &trial.ground_truth);
    Ok(SimulatedRun {
        object,
        trial,
        run,
        outcome,
    })
}

/// One row of a simulation batch CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub trial: usize,
    pub pos_bound: f64,
    pub rot_bound: f64,
    pub pos_ci99: Option<f64>,
    pub rot_ci99: Option<f64>,
    pub pos_err: Option<f64>,
    pub rot_err: Option<f64>,
    pub object: String,
    pub seed: u64,
    pub sample_bound: f64,
    pub point_pos_err: f64,
    pub point_rot_err: f64,
    pub truth_in_superset: bool,
    pub cells: usize,
    pub multimodal: bool,
}

impl BatchRow {
    pub fn new(trial: usize, object: Primitive, seed: u64, sample_bound: f64, o: &TrialOutcome) -> Self {
        Self {
            trial,
            pos_bound: o.pos_bound,
            rot_bound: o.rot_bound,
            pos_ci99: o.pos_ci99,
            rot_ci99: o.rot_ci99,
            pos_err: o.pos_err,
            rot_err: o.rot_err,
            object: object.name().into(),
            seed,
            sample_bound,
            point_pos_err: o.point_pos_err,
            point_rot_err: o.point_rot_err,
            truth_in_superset: o.truth_in_superset,
            cells: o.cell_count,
            multimodal: o.multimodal,
        }
    }
}
