//! LiDAR frames to per-cell kernel evidence.
//!
//! Every hit endpoint is an occupied sample. Free samples are taken per
//! (ray, query) pair at the point of the ray closest to the query; for a hit
//! ray that point must not be the endpoint itself.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dst::EvidenceVector;
use crate::grid::{clip_segment, GridSpec};

/// Laser channel and azimuth that produced a ray.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BeamId {
    pub channel: u16,
    pub azimuth_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub endpoint: Vector3<f64>,
    /// `true` for a surface return, `false` for a max-range miss.
    pub hit: bool,
    pub beam: BeamId,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, endpoint: Vector3<f64>, hit: bool) -> Self {
        debug_assert!(origin != endpoint, "degenerate ray");
        Ray {
            origin,
            endpoint,
            hit,
            beam: BeamId::default(),
        }
    }

    pub fn with_beam(mut self, beam: BeamId) -> Self {
        self.beam = beam;
        self
    }

    /// Clamped projection parameter of `q` onto the segment.
    #[inline]
    fn projection(&self, q: &Vector3<f64>) -> f64 {
        let d = self.endpoint - self.origin;
        ((q - self.origin).dot(&d) / d.norm_squared()).clamp(0.0, 1.0)
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Ray {
        Ray {
            origin: iso.transform_point(&self.origin.into()).coords,
            endpoint: iso.transform_point(&self.endpoint.into()).coords,
            ..*self
        }
    }
}

/// One sensor sweep in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    pub timestamp: f64,
    pub pose: Isometry3<f64>,
    pub rays: Vec<Ray>,
}

impl MeasurementFrame {
    pub fn sensor_position(&self) -> Vector3<f64> {
        self.pose.translation.vector
    }
}

/// Sparse kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelParams {
    /// Kernel scale.
    pub sigma0: f64,
    /// Length scale (m); the kernel vanishes beyond it.
    pub length: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            sigma0: 0.1,
            length: 0.5,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma0 > 0.0 && self.length > 0.0) {
            return Err(format!(
                "kernel sigma0 and length must be positive, got {} and {}",
                self.sigma0, self.length
            ));
        }
        Ok(())
    }
}

/// Compactly supported sparse kernel.
#[inline]
pub fn kernel(d: f64, params: &KernelParams) -> f64 {
    if d >= params.length {
        return 0.0;
    }
    let r = d / params.length;
    let (s, c) = (2.0 * PI * r).sin_cos();
    // cancellation near r = 1 can dip a few ulps below zero
    (params.sigma0 * ((2.0 + c) * (1.0 - r) / 3.0 + s / (2.0 * PI))).max(0.0)
}

/// Point of `ray` closest to `query`, or `None` when that point is the
/// endpoint of a hit ray.
pub fn free_point_on_ray(ray: &Ray, query: &Vector3<f64>) -> Option<Vector3<f64>> {
    let t = ray.projection(query);
    if ray.hit && t >= 1.0 {
        return None;
    }
    Some(ray.origin + (ray.endpoint - ray.origin) * t)
}

/// Occupied and free evidence one ray contributes at `query`.
#[inline]
pub fn ray_evidence(ray: &Ray, query: &Vector3<f64>, params: &KernelParams) -> (f64, f64) {
    let t = ray.projection(query);
    let closest = ray.origin + (ray.endpoint - ray.origin) * t;
    let d_min = (query - closest).norm();
    if d_min >= params.length {
        return (0.0, 0.0);
    }
    let mut occ = 0.0;
    let mut free = 0.0;
    if ray.hit {
        if t < 1.0 {
            free = kernel(d_min, params);
            occ = kernel((query - ray.endpoint).norm(), params);
        } else {
            occ = kernel(d_min, params);
        }
    } else {
        free = kernel(d_min, params);
    }
    (occ, free)
}

/// Evidence at arbitrary query points, summing every ray in order.
pub fn accumulate_at_points(
    rays: &[Ray],
    points: &[Vector3<f64>],
    params: &KernelParams,
) -> Vec<(f64, f64)> {
    points
        .par_iter()
        .map(|q| {
            rays.iter().fold((0.0, 0.0), |acc, r| {
                let (o, f) = ray_evidence(r, q, params);
                (acc.0 + o, acc.1 + f)
            })
        })
        .collect()
}

/// Dense per-cell evidence for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceField {
    pub occupied: Vec<f64>,
    pub free: Vec<f64>,
}

impl EvidenceField {
    pub fn zeros(num_cells: usize) -> Self {
        EvidenceField {
            occupied: vec![0.0; num_cells],
            free: vec![0.0; num_cells],
        }
    }

    /// Evidence vector of a cell, `None` when the cell saw nothing.
    pub fn evidence(&self, cell: usize, prior: f64) -> Option<EvidenceVector> {
        let (o, f) = (self.occupied[cell], self.free[cell]);
        (o > 0.0 || f > 0.0).then_some(EvidenceVector {
            occupied: o,
            free: f,
            prior,
        })
    }

    pub fn touched(&self) -> usize {
        self.occupied
            .iter()
            .zip(&self.free)
            .filter(|(o, f)| **o > 0.0 || **f > 0.0)
            .count()
    }

    fn add(&mut self, other: &EvidenceField) {
        for (a, b) in self.occupied.iter_mut().zip(&other.occupied) {
            *a += b;
        }
        for (a, b) in self.free.iter_mut().zip(&other.free) {
            *a += b;
        }
    }
}

/// Rays per partial sum; chunk boundaries fix the summation order.
const RAY_CHUNK: usize = 1024;
/// Partial sums alive at once.
const WAVE: usize = 8;

/// Calls `f(flat, center)` for every cell whose center may lie within
/// `length` of the segment. Slabs are swept along the dominant axis and each
/// slab only visits the padded cross-section the segment occupies there.
pub fn for_each_candidate_cell(
    spec: &GridSpec,
    ray: &Ray,
    length: f64,
    mut f: impl FnMut(usize, Vector3<f64>),
) {
    let o = ray.origin;
    let dir = ray.endpoint - ray.origin;
    let pad = Vector3::repeat(length);
    let (s0, s1) = match clip_segment(&o, &dir, &(spec.min() - pad), &(spec.max() + pad)) {
        Some(t) => t,
        None => return,
    };
    let a = dir.iamax();
    let (b, c) = ((a + 1) % 3, (a + 2) % 3);
    let e = spec.cell_edge;
    let min = spec.min();

    let index_range = |axis: usize, lo: f64, hi: f64| -> Option<(usize, usize)> {
        let first = ((lo - min[axis]) / e - 0.5).ceil().max(0.0);
        let last = ((hi - min[axis]) / e - 0.5)
            .floor()
            .min(spec.dims[axis] as f64 - 1.0);
        (first <= last).then_some((first as usize, last as usize))
    };

    let xa0 = o[a] + dir[a] * s0;
    let xa1 = o[a] + dir[a] * s1;
    let Some((i0, i1)) = index_range(a, xa0.min(xa1) - length, xa0.max(xa1) + length) else {
        return;
    };
    let mut idx = [0usize; 3];
    for i in i0..=i1 {
        let ca = min[a] + (i as f64 + 0.5) * e;
        let (mut u0, mut u1) = ((ca - length - o[a]) / dir[a], (ca + length - o[a]) / dir[a]);
        if u0 > u1 {
            std::mem::swap(&mut u0, &mut u1);
        }
        let (u0, u1) = (u0.max(s0), u1.min(s1));
        if u0 > u1 {
            continue;
        }
        let p0 = o + dir * u0;
        let p1 = o + dir * u1;
        let Some((j0, j1)) = index_range(b, p0[b].min(p1[b]) - length, p0[b].max(p1[b]) + length)
        else {
            continue;
        };
        let Some((k0, k1)) = index_range(c, p0[c].min(p1[c]) - length, p0[c].max(p1[c]) + length)
        else {
            continue;
        };
        idx[a] = i;
        for j in j0..=j1 {
            idx[b] = j;
            for k in k0..=k1 {
                idx[c] = k;
                let flat = idx[0] + spec.dims[0] * (idx[1] + spec.dims[1] * idx[2]);
                let center = Vector3::new(
                    min[0] + (idx[0] as f64 + 0.5) * e,
                    min[1] + (idx[1] as f64 + 0.5) * e,
                    min[2] + (idx[2] as f64 + 0.5) * e,
                );
                f(flat, center);
            }
        }
    }
}

/// Kernel evidence of every grid cell within reach of the rays.
pub fn accumulate_evidence(rays: &[Ray], spec: &GridSpec, params: &KernelParams) -> EvidenceField {
    let n = spec.num_cells();
    let mut field = EvidenceField::zeros(n);
    for wave in rays.chunks(RAY_CHUNK * WAVE) {
        let partials: Vec<EvidenceField> = wave
            .par_chunks(RAY_CHUNK)
            .map(|chunk| {
                let mut part = EvidenceField::zeros(n);
                for ray in chunk {
                    for_each_candidate_cell(spec, ray, params.length, |flat, center| {
                        let (o, f) = ray_evidence(ray, &center, params);
                        part.occupied[flat] += o;
                        part.free[flat] += f;
                    });
                }
                part
            })
            .collect();
        for p in &partials {
            field.add(p);
        }
    }
    field
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: KernelParams = KernelParams {
        sigma0: 0.1,
        length: 0.5,
    };

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel(0.0, &P), 0.1);
        assert_eq!(kernel(0.5, &P), 0.0);
        assert_eq!(kernel(0.7, &P), 0.0);
        assert!((kernel(0.25, &P) - 1.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_is_monotone_decreasing() {
        let mut prev = kernel(0.0, &P);
        for n in 1..=1000 {
            let k = kernel(n as f64 * 0.0005, &P);
            assert!(k <= prev + 1e-15 && k >= 0.0);
            prev = k;
        }
    }

    fn x_ray(hit: bool) -> Ray {
        Ray::new(Vector3::zeros(), Vector3::new(10.0, 0.0, 0.0), hit)
    }

    #[test]
    fn free_point_examples() {
        let r = x_ray(true);
        assert_eq!(
            free_point_on_ray(&r, &Vector3::new(5.0, 1.0, 0.0)),
            Some(Vector3::new(5.0, 0.0, 0.0))
        );
        assert_eq!(
            free_point_on_ray(&r, &Vector3::new(-3.0, 1.0, 0.0)),
            Some(Vector3::zeros())
        );
        assert_eq!(free_point_on_ray(&r, &Vector3::new(12.0, 0.0, 0.0)), None);
        assert_eq!(
            free_point_on_ray(&x_ray(false), &Vector3::new(12.0, 0.0, 0.0)),
            Some(Vector3::new(10.0, 0.0, 0.0))
        );
    }

    #[test]
    fn evidence_examples() {
        let spec = GridSpec::new([0.0; 3], 0.2, [30, 5, 5]).unwrap();
        let target = crate::grid::CellIndex::new(20, 2, 2);
        let center = spec.cell_center(target);
        let ray = Ray::new(Vector3::new(0.1, center.y, center.z), center, true);
        let field = accumulate_evidence(&[ray], &spec, &P);
        let flat = spec.flat(target);
        assert_eq!(field.occupied[flat], 0.1);
        assert_eq!(field.free[flat], 0.0);

        let miss = Ray::new(
            Vector3::new(0.0, center.y + 0.25, center.z),
            Vector3::new(60.0, center.y + 0.25, center.z),
            false,
        );
        let ev = accumulate_at_points(&[miss], &[center], &P)[0];
        assert_eq!(ev.0, 0.0);
        assert!((ev.1 - 1.0 / 60.0).abs() < 1e-12);

        let far = Ray::new(
            Vector3::new(0.0, center.y + 0.6, center.z),
            Vector3::new(6.0, center.y + 0.6, center.z),
            true,
        );
        assert_eq!(accumulate_at_points(&[far], &[center], &P)[0], (0.0, 0.0));
    }

    #[test]
    fn candidate_sweep_covers_every_cell_in_reach() {
        let spec = GridSpec::new([-1.0, -1.2, -0.7], 0.2, [12, 13, 9]).unwrap();
        let rays = [
            Ray::new(Vector3::new(-3.0, -2.0, -1.0), Vector3::new(2.0, 1.5, 1.2), true),
            Ray::new(Vector3::new(0.1, 0.1, 0.1), Vector3::new(0.1, 0.1, 5.0), false),
            Ray::new(Vector3::new(0.3, 0.0, 0.0), Vector3::new(0.31, 0.02, 0.0), true),
            Ray::new(Vector3::new(5.0, 5.0, 5.0), Vector3::new(6.0, 5.0, 5.0), true),
        ];
        for ray in &rays {
            let mut seen = vec![0u32; spec.num_cells()];
            for_each_candidate_cell(&spec, ray, P.length, |flat, _| seen[flat] += 1);
            for f in 0..spec.num_cells() {
                assert!(seen[f] <= 1, "cell {f} visited twice");
                let q = spec.flat_center(f);
                let d = ray.endpoint - ray.origin;
                let t = ((q - ray.origin).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
                let dist = (q - (ray.origin + d * t)).norm();
                if dist < P.length {
                    assert_eq!(seen[f], 1, "missed cell {f} at distance {dist}");
                }
            }
        }
    }
}
