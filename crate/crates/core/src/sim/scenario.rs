//! Scenario description: objects, ego path and sensor.

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::geometry::Shape;
use super::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    pub shape: Shape,
    /// Center at `t = 0` (m).
    pub position: [f64; 3],
    /// Roll, pitch, yaw (degrees).
    #[serde(default)]
    pub rpy_deg: [f64; 3],
    /// Constant velocity (m/s); zero for static objects.
    #[serde(default)]
    pub velocity: [f64; 3],
}

impl ObjectSpec {
    pub fn is_dynamic(&self) -> bool {
        self.velocity.iter().any(|v| *v != 0.0)
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::from(self.velocity)
    }

    pub fn pose_at(&self, t: f64) -> Isometry3<f64> {
        let [r, p, y] = self.rpy_deg.map(f64::to_radians);
        let center = Vector3::from(self.position) + self.velocity() * t;
        Isometry3::from_parts(
            Translation3::from(center),
            UnitQuaternion::from_euler_angles(r, p, y),
        )
    }

    /// Radius of a sphere around the center that encloses the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self.shape {
            Shape::Box { half_extents } => Vector3::from(half_extents).norm(),
            Shape::Cylinder {
                radius,
                half_height,
            } => radius.hypot(half_height),
        }
    }
}

/// Spinning multi-channel LiDAR, swept instantaneously once per frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarSpec {
    pub channels: u16,
    pub fov_min_deg: f64,
    pub fov_max_deg: f64,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
    pub rate_hz: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        LidarSpec {
            channels: 16,
            fov_min_deg: -15.0,
            fov_max_deg: 15.0,
            azimuth_step_deg: 1.0,
            max_range: 30.0,
            rate_hz: 10.0,
        }
    }
}

impl LidarSpec {
    pub fn azimuth_count(&self) -> usize {
        (360.0 / self.azimuth_step_deg).round() as usize
    }

    pub fn elevation_deg(&self, channel: u16) -> f64 {
        if self.channels <= 1 {
            return 0.5 * (self.fov_min_deg + self.fov_max_deg);
        }
        self.fov_min_deg
            + channel as f64 * (self.fov_max_deg - self.fov_min_deg) / (self.channels - 1) as f64
    }

    pub fn rays_per_frame(&self) -> usize {
        self.channels as usize * self.azimuth_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub position: [f64; 3],
}

/// Ego path through timed waypoints, linear in between (piecewise constant
/// velocity) and held at the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    pub waypoints: Vec<Waypoint>,
}

impl EgoSpec {
    pub fn stationary(position: [f64; 3]) -> Self {
        EgoSpec {
            waypoints: vec![Waypoint { t: 0.0, position }],
        }
    }

    pub fn position_at(&self, t: f64) -> Vector3<f64> {
        let w = &self.waypoints;
        if t <= w[0].t {
            return Vector3::from(w[0].position);
        }
        for pair in w.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if t <= b.t {
                let s = (t - a.t) / (b.t - a.t);
                return Vector3::from(a.position) * (1.0 - s) + Vector3::from(b.position) * s;
            }
        }
        Vector3::from(w[w.len() - 1].position)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Seconds.
    pub duration: f64,
    /// Height of an optional ground plane (m).
    #[serde(default)]
    pub ground_plane: Option<f64>,
    #[serde(default)]
    pub lidar: LidarSpec,
    pub ego: EgoSpec,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        let scenario: Scenario = toml::from_str(s).map_err(|e| SimError::Schema(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Invalid(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        let l = &self.lidar;
        if l.channels < 1 {
            return bad("lidar.channels must be at least 1".into());
        }
        if !(l.max_range > 0.0) {
            return bad(format!("lidar.max_range must be positive, got {}", l.max_range));
        }
        if !(l.rate_hz > 0.0) {
            return bad(format!("lidar.rate_hz must be positive, got {}", l.rate_hz));
        }
        if !(l.azimuth_step_deg > 0.0 && l.azimuth_step_deg <= 360.0) {
            return bad(format!(
                "lidar.azimuth_step_deg must lie in (0, 360], got {}",
                l.azimuth_step_deg
            ));
        }
        if l.fov_min_deg > l.fov_max_deg || l.fov_min_deg < -90.0 || l.fov_max_deg > 90.0 {
            return bad("lidar vertical field of view is inverted or out of range".into());
        }
        if self.ego.waypoints.is_empty() {
            return bad("ego.waypoints must not be empty".into());
        }
        if self.ego.waypoints.windows(2).any(|w| w[1].t <= w[0].t) {
            return bad("ego.waypoints times must increase".into());
        }
        for o in &self.objects {
            o.shape
                .validate()
                .map_err(|m| SimError::Invalid(format!("object '{}': {m}", o.id)))?;
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.lidar.rate_hz).round() as usize
    }

    pub fn frame_time(&self, index: usize) -> f64 {
        index as f64 / self.lidar.rate_hz
    }

    pub fn dynamic_objects(&self) -> impl Iterator<Item = &ObjectSpec> {
        self.objects.iter().filter(|o| o.is_dynamic())
    }
}

fn boxed(id: &str, position: [f64; 3], half_extents: [f64; 3], velocity: [f64; 3]) -> ObjectSpec {
    ObjectSpec {
        id: id.into(),
        shape: Shape::Box { half_extents },
        position,
        rpy_deg: [0.0; 3],
        velocity,
    }
}

/// Closed room with a pillar and a table-height block, sensor fixed at the
/// center. Fits a 32^3 grid of 0.2 m cells centered on the origin.
pub fn room() -> Scenario {
    let wall = |id: &str, position, half_extents| boxed(id, position, half_extents, [0.0; 3]);
    Scenario {
        name: "room".into(),
        duration: 2.0,
        ground_plane: None,
        lidar: LidarSpec {
            max_range: 20.0,
            ..Default::default()
        },
        ego: EgoSpec::stationary([0.0, 0.0, 0.0]),
        objects: vec![
            wall("wall_east", [2.5, 0.0, 0.0], [0.3, 2.8, 1.5]),
            wall("wall_west", [-2.5, 0.0, 0.0], [0.3, 2.8, 1.5]),
            wall("wall_north", [0.0, 2.5, 0.0], [2.2, 0.3, 1.5]),
            wall("wall_south", [0.0, -2.5, 0.0], [2.2, 0.3, 1.5]),
            ObjectSpec {
                id: "pillar".into(),
                shape: Shape::Cylinder {
                    radius: 0.3,
                    half_height: 1.5,
                },
                position: [1.1, 1.0, 0.0],
                rpy_deg: [0.0; 3],
                velocity: [0.0; 3],
            },
            wall("block", [-1.0, -1.1, -0.2], [0.4, 0.3, 0.4]),
        ],
    }
}

/// One box crossing in front of a fixed sensor at 1 m/s, in front of a wall
/// and next to two static blocks.
pub fn crossing() -> Scenario {
    Scenario {
        name: "crossing".into(),
        duration: 6.0,
        ground_plane: None,
        lidar: LidarSpec {
            max_range: 20.0,
            ..Default::default()
        },
        ego: EgoSpec::stationary([0.0, 0.0, 0.0]),
        objects: vec![
            boxed("wall", [0.0, 4.0, 0.0], [4.6, 0.3, 1.4], [0.0; 3]),
            boxed("block_a", [-2.5, -2.5, 0.0], [0.5, 0.5, 0.8], [0.0; 3]),
            boxed("block_b", [2.0, -3.0, 0.0], [0.8, 0.4, 0.8], [0.0; 3]),
            boxed("box0", [-3.0, 2.0, 0.0], [0.4, 0.4, 0.4], [1.0, 0.0, 0.0]),
        ],
    }
}

/// Street crossing: four buildings on the corners, two boxes and a cylinder
/// moving through, ego driving straight through the middle. Dimensions and
/// speeds are approximate.
pub fn intersection() -> Scenario {
    let building = |id: &str, x: f64, y: f64| boxed(id, [x, y, 1.2], [4.0, 4.0, 3.0], [0.0; 3]);
    Scenario {
        name: "intersection".into(),
        duration: 8.0,
        ground_plane: Some(-1.8),
        lidar: LidarSpec {
            max_range: 25.0,
            ..Default::default()
        },
        ego: EgoSpec {
            waypoints: vec![
                Waypoint {
                    t: 0.0,
                    position: [-8.0, -1.0, 0.0],
                },
                Waypoint {
                    t: 8.0,
                    position: [8.0, -1.0, 0.0],
                },
            ],
        },
        objects: vec![
            building("building_ne", 7.0, 7.0),
            building("building_nw", -7.0, 7.0),
            building("building_se", 7.0, -7.0),
            building("building_sw", -7.0, -7.0),
            boxed("Box 0", [6.0, 1.0, -1.05], [0.9, 0.6, 0.75], [-1.5, 0.0, 0.0]),
            boxed("Box 1", [1.5, -7.0, -1.3], [0.5, 0.5, 0.5], [0.0, 1.2, 0.0]),
            ObjectSpec {
                id: "Cylinder 0".into(),
                shape: Shape::Cylinder {
                    radius: 0.4,
                    half_height: 0.8,
                },
                position: [-1.5, 6.0, -1.0],
                rpy_deg: [0.0; 3],
                velocity: [0.0, -1.0, 0.0],
            },
        ],
    }
}

/// Bundled scenario by name.
pub fn preset(name: &str) -> Option<Scenario> {
    match name {
        "room" => Some(room()),
        "crossing" => Some(crossing()),
        "intersection" => Some(intersection()),
        _ => None,
    }
}
