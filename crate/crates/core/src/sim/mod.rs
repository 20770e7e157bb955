//! Deterministic synthetic world and virtual spinning LiDAR.

pub mod geometry;
pub mod scenario;

use nalgebra::{Isometry3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::GridSpec;
use crate::measurement::{BeamId, MeasurementFrame, Ray};

pub use geometry::Shape;
pub use scenario::{EgoSpec, LidarSpec, ObjectSpec, Scenario, Waypoint};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario schema error: {0}")]
    Schema(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Ground-truth cell class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TruthLabel {
    Dynamic,
    Static,
    Free,
}

impl TruthLabel {
    pub fn is_occupied(self) -> bool {
        self != TruthLabel::Free
    }
}

struct Placed<'a> {
    object: &'a ObjectSpec,
    pose: Isometry3<f64>,
}

impl Placed<'_> {
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.pose.inverse_transform_point(&(*origin).into()).coords;
        let d = self.pose.inverse_transform_vector(dir);
        self.object.shape.intersect(&o, &d)
    }

    fn contains(&self, p: &Vector3<f64>) -> bool {
        let local = self.pose.inverse_transform_point(&(*p).into()).coords;
        self.object.shape.contains(&local)
    }
}

fn place(scenario: &Scenario, t: f64) -> Vec<Placed<'_>> {
    scenario
        .objects
        .iter()
        .map(|object| Placed {
            object,
            pose: object.pose_at(t),
        })
        .collect()
}

/// Unit direction of a beam in the sensor frame.
pub fn beam_direction(elevation_deg: f64, azimuth_deg: f64) -> Vector3<f64> {
    let (e, a) = (elevation_deg.to_radians(), azimuth_deg.to_radians());
    Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
}

/// Sensor pose at time `t`. The sensor keeps a fixed world orientation.
pub fn ego_pose(scenario: &Scenario, t: f64) -> Isometry3<f64> {
    let p = scenario.ego.position_at(t);
    Isometry3::translation(p.x, p.y, p.z)
}

/// One instantaneous sweep at time `t`, rays ordered channel-major.
pub fn simulate_frame(scenario: &Scenario, t: f64) -> MeasurementFrame {
    let lidar = &scenario.lidar;
    let pose = ego_pose(scenario, t);
    let origin = pose.translation.vector;
    let placed = place(scenario, t);
    let n_az = lidar.azimuth_count();

    let rays = (0..lidar.rays_per_frame())
        .into_par_iter()
        .map(|n| {
            let channel = (n / n_az) as u16;
            let azimuth_deg = (n % n_az) as f64 * lidar.azimuth_step_deg;
            let dir = pose.transform_vector(&beam_direction(lidar.elevation_deg(channel), azimuth_deg));

            let mut nearest = f64::INFINITY;
            for p in &placed {
                if let Some(t) = p.intersect(&origin, &dir) {
                    nearest = nearest.min(t);
                }
            }
            if let Some(h) = scenario.ground_plane {
                if let Some(t) = geometry::ray_plane(&origin, &dir, h) {
                    nearest = nearest.min(t);
                }
            }
            let hit = nearest <= lidar.max_range;
            let range = if hit { nearest } else { lidar.max_range };
            Ray::new(origin, origin + dir * range, hit).with_beam(BeamId {
                channel,
                azimuth_deg,
            })
        })
        .collect();

    MeasurementFrame {
        timestamp: t,
        pose,
        rays,
    }
}

/// All frames of the scenario in time order.
pub fn simulate(scenario: &Scenario) -> Vec<MeasurementFrame> {
    (0..scenario.frame_count())
        .map(|n| simulate_frame(scenario, scenario.frame_time(n)))
        .collect()
}

/// Per-cell class by cell-center containment; cells under the ground plane
/// count as static.
pub fn ground_truth_labels(scenario: &Scenario, t: f64, spec: &GridSpec) -> Vec<TruthLabel> {
    let placed = place(scenario, t);
    (0..spec.num_cells())
        .into_par_iter()
        .map(|flat| {
            let c = spec.flat_center(flat);
            let mut label = TruthLabel::Free;
            for p in &placed {
                if p.contains(&c) {
                    if p.object.is_dynamic() {
                        return TruthLabel::Dynamic;
                    }
                    label = TruthLabel::Static;
                }
            }
            if label == TruthLabel::Free && scenario.ground_plane.is_some_and(|h| c.z <= h) {
                label = TruthLabel::Static;
            }
            label
        })
        .collect()
}

/// Flat indices of cells whose centers lie inside `object` at time `t`.
pub fn object_cells(object: &ObjectSpec, t: f64, spec: &GridSpec) -> Vec<usize> {
    let placed = Placed {
        object,
        pose: object.pose_at(t),
    };
    let center = placed.pose.translation.vector;
    let r = Vector3::repeat(object.bounding_radius());
    let lo = spec.cell_coords(&(center - r)).map(|x| x.floor() as i64);
    let hi = spec.cell_coords(&(center + r)).map(|x| x.floor() as i64);
    let mut cells = Vec::new();
    for k in lo.z..=hi.z {
        for j in lo.y..=hi.y {
            for i in lo.x..=hi.x {
                if !spec.contains_index(i, j, k) {
                    continue;
                }
                let c = crate::grid::CellIndex::new(i as usize, j as usize, k as usize);
                if placed.contains(&spec.cell_center(c)) {
                    cells.push(spec.flat(c));
                }
            }
        }
    }
    cells
}
