//! Ray intersection and containment for the primitive shapes.
//!
//! All routines work in the object's local frame: boxes are centered at the
//! origin, cylinders stand on the local z axis.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Minimum accepted ray parameter; avoids re-hitting the surface a ray
/// starts on.
const T_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Box { half_extents: [f64; 3] },
    Cylinder { radius: f64, half_height: f64 },
}

impl Shape {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Shape::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0 && h.is_finite()),
            Shape::Cylinder {
                radius,
                half_height,
            } => radius > 0.0 && half_height > 0.0 && radius.is_finite() && half_height.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("shape dimensions must be positive: {self:?}"))
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        match *self {
            Shape::Box { half_extents: h } => {
                p.x.abs() <= h[0] && p.y.abs() <= h[1] && p.z.abs() <= h[2]
            }
            Shape::Cylinder {
                radius,
                half_height,
            } => p.x * p.x + p.y * p.y <= radius * radius && p.z.abs() <= half_height,
        }
    }

    /// Zero on the surface, negative inside, positive outside.
    pub fn surface_residual(&self, p: &Vector3<f64>) -> f64 {
        match *self {
            Shape::Box { half_extents: h } => (p.x.abs() - h[0])
                .max(p.y.abs() - h[1])
                .max(p.z.abs() - h[2]),
            Shape::Cylinder {
                radius,
                half_height,
            } => (p.xy().norm() - radius).max(p.z.abs() - half_height),
        }
    }

    /// Smallest `t > 0` with `origin + t * dir` on the surface.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Shape::Box { half_extents } => ray_box(origin, dir, &Vector3::from(half_extents)),
            Shape::Cylinder {
                radius,
                half_height,
            } => ray_cylinder(origin, dir, radius, half_height),
        }
    }
}

/// Slab test against the box `[-h, h]`.
pub fn ray_box(origin: &Vector3<f64>, dir: &Vector3<f64>, h: &Vector3<f64>) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a].abs() > h[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut t0, mut t1) = ((-h[a] - origin[a]) * inv, (h[a] - origin[a]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
    }
    if t_near > t_far {
        return None;
    }
    if t_near > T_EPS {
        Some(t_near)
    } else if t_far > T_EPS {
        // starting inside: the exit face is what a sensor would see
        Some(t_far)
    } else {
        None
    }
}

/// Cylinder of the given radius around the z axis, `|z| <= half_height`,
/// including both caps.
pub fn ray_cylinder(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    radius: f64,
    half_height: f64,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > T_EPS && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };

    let a = dir.x * dir.x + dir.y * dir.y;
    if a > 0.0 {
        let b = 2.0 * (origin.x * dir.x + origin.y * dir.y);
        let c = origin.x * origin.x + origin.y * origin.y - radius * radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                let z = origin.z + t * dir.z;
                if z.abs() <= half_height {
                    consider(t);
                }
            }
        }
    }
    if dir.z != 0.0 {
        for cap in [-half_height, half_height] {
            let t = (cap - origin.z) / dir.z;
            let x = origin.x + t * dir.x;
            let y = origin.y + t * dir.y;
            if x * x + y * y <= radius * radius {
                consider(t);
            }
        }
    }
    best
}

/// Horizontal plane `z = height`.
pub fn ray_plane(origin: &Vector3<f64>, dir: &Vector3<f64>, height: f64) -> Option<f64> {
    if dir.z == 0.0 {
        return None;
    }
    let t = (height - origin.z) / dir.z;
    (t > T_EPS).then_some(t)
}
