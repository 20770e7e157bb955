//! Dense 3-D voxel grid of evidential cell states.

use std::ops::Range;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dst::{Bba, FocalElement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("point {0:?} lies outside the grid")]
    OutOfBounds([f64; 3]),
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
}

/// Placement and resolution of the grid. Storage is x-fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min_corner: [f64; 3],
    pub cell_edge: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(min_corner: [f64; 3], cell_edge: f64, dims: [usize; 3]) -> Result<Self, GridError> {
        let spec = GridSpec {
            min_corner,
            cell_edge,
            dims,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid of `dims` cells centered on `center`.
    pub fn centered(center: [f64; 3], cell_edge: f64, dims: [usize; 3]) -> Result<Self, GridError> {
        let min_corner = [0, 1, 2].map(|a| center[a] - 0.5 * dims[a] as f64 * cell_edge);
        Self::new(min_corner, cell_edge, dims)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.cell_edge > 0.0 && self.cell_edge.is_finite()) {
            return Err(GridError::InvalidSpec(format!(
                "cell_edge must be positive, got {}",
                self.cell_edge
            )));
        }
        if self.dims.contains(&0) {
            return Err(GridError::InvalidSpec(format!(
                "dims must be at least 1, got {:?}",
                self.dims
            )));
        }
        if self.min_corner.iter().any(|c| !c.is_finite()) {
            return Err(GridError::InvalidSpec("min_corner must be finite".into()));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn min(&self) -> Vector3<f64> {
        Vector3::from(self.min_corner)
    }

    pub fn max(&self) -> Vector3<f64> {
        Vector3::new(
            self.min_corner[0] + self.dims[0] as f64 * self.cell_edge,
            self.min_corner[1] + self.dims[1] as f64 * self.cell_edge,
            self.min_corner[2] + self.dims[2] as f64 * self.cell_edge,
        )
    }

    /// Continuous cell coordinates of `p` (cell `i` spans `[i, i+1)`).
    #[inline]
    pub fn cell_coords(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (p - self.min()) / self.cell_edge
    }

    /// Lower-inclusive, upper-exclusive cell lookup.
    pub fn world_to_cell(&self, p: &Vector3<f64>) -> Result<CellIndex, GridError> {
        self.locate(p)
            .ok_or(GridError::OutOfBounds([p.x, p.y, p.z]))
    }

    /// Like [`GridSpec::world_to_cell`] but returns `None` when outside.
    #[inline]
    pub fn locate(&self, p: &Vector3<f64>) -> Option<CellIndex> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.min_corner[a]) / self.cell_edge).floor();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            idx[a] = f as usize;
        }
        Some(CellIndex {
            i: idx[0],
            j: idx[1],
            k: idx[2],
        })
    }

    #[inline]
    pub fn locate_flat(&self, p: &Vector3<f64>) -> Option<usize> {
        self.locate(p).map(|c| self.flat(c))
    }

    #[inline]
    pub fn flat(&self, c: CellIndex) -> usize {
        c.i + self.dims[0] * (c.j + self.dims[1] * c.k)
    }

    #[inline]
    pub fn unflat(&self, flat: usize) -> CellIndex {
        let i = flat % self.dims[0];
        let rest = flat / self.dims[0];
        CellIndex {
            i,
            j: rest % self.dims[1],
            k: rest / self.dims[1],
        }
    }

    pub fn contains_index(&self, i: i64, j: i64, k: i64) -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < self.dims[0]
            && (j as usize) < self.dims[1]
            && (k as usize) < self.dims[2]
    }

    #[inline]
    pub fn cell_center(&self, c: CellIndex) -> Vector3<f64> {
        Vector3::new(
            self.min_corner[0] + (c.i as f64 + 0.5) * self.cell_edge,
            self.min_corner[1] + (c.j as f64 + 0.5) * self.cell_edge,
            self.min_corner[2] + (c.k as f64 + 0.5) * self.cell_edge,
        )
    }

    #[inline]
    pub fn flat_center(&self, flat: usize) -> Vector3<f64> {
        self.cell_center(self.unflat(flat))
    }

    /// The same grid translated by a whole number of cells.
    pub fn shifted(&self, delta: [i64; 3]) -> GridSpec {
        let mut out = *self;
        for a in 0..3 {
            out.min_corner[a] += delta[a] as f64 * self.cell_edge;
        }
        out
    }

    /// Whole-cell shift that brings `sensor` back to the middle cell, or zero
    /// while the sensor stays inside the central half of every axis.
    pub fn recenter_shift(&self, sensor: &Vector3<f64>) -> [i64; 3] {
        let coords = self.cell_coords(sensor);
        let mut delta = [0i64; 3];
        for a in 0..3 {
            let center = (self.dims[a] / 2) as f64;
            let quarter = self.dims[a] as f64 / 4.0;
            let s = coords[a].floor();
            if (s - center).abs() > quarter {
                delta[a] = s as i64 - (self.dims[a] / 2) as i64;
            }
        }
        delta
    }

    /// Cells pierced by the segment `from -> to`, in traversal order.
    ///
    /// Amanatides-Woo stepping after clipping the segment to the grid box.
    pub fn traverse(&self, from: &Vector3<f64>, to: &Vector3<f64>) -> Vec<CellIndex> {
        let mut cells = Vec::new();
        let dir = to - from;
        let (t0, t1) = match clip_segment(from, &dir, &self.min(), &self.max()) {
            Some(t) => t,
            None => return cells,
        };
        let start = self.cell_coords(&(from + dir * t0));
        let end = self.cell_coords(&(from + dir * t1));
        let g = dir / self.cell_edge;

        let mut idx = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        let mut last = [0i64; 3];
        for a in 0..3 {
            let hi = self.dims[a] as i64 - 1;
            idx[a] = (start[a].floor() as i64).clamp(0, hi);
            last[a] = (end[a].floor() as i64).clamp(0, hi);
            if g[a] > 0.0 {
                step[a] = 1;
                t_delta[a] = 1.0 / g[a];
                t_max[a] = t0 + ((idx[a] + 1) as f64 - start[a]) / g[a];
            } else if g[a] < 0.0 {
                step[a] = -1;
                t_delta[a] = -1.0 / g[a];
                t_max[a] = t0 + (idx[a] as f64 - start[a]) / g[a];
            }
        }
        let max_steps = self.dims.iter().sum::<usize>() + 3;
        for _ in 0..max_steps {
            if !self.contains_index(idx[0], idx[1], idx[2]) {
                break;
            }
            cells.push(CellIndex {
                i: idx[0] as usize,
                j: idx[1] as usize,
                k: idx[2] as usize,
            });
            if idx == last {
                break;
            }
            let a = if t_max[0] < t_max[1] {
                if t_max[0] < t_max[2] {
                    0
                } else {
                    2
                }
            } else if t_max[1] < t_max[2] {
                1
            } else {
                2
            };
            if t_max[a] > t1 {
                break;
            }
            idx[a] += step[a];
            t_max[a] += t_delta[a];
        }
        cells
    }
}

/// Parameter interval `[t0, t1] ⊂ [0, 1]` of `origin + t*dir` inside the box.
pub fn clip_segment(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    lo: &Vector3<f64>,
    hi: &Vector3<f64>,
) -> Option<(f64, f64)> {
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
        } else {
            let inv = 1.0 / dir[a];
            let (mut near, mut far) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((t0, t1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl CellIndex {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        CellIndex { i, j, k }
    }
}

/// Evidential state of one voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub bba: Bba,
    /// Persistent share of the dynamic mass.
    pub rho_p: f64,
    /// New-born share of the dynamic mass.
    pub rho_b: f64,
    pub mean_velocity: Vector3<f64>,
    /// Span of this cell's particles in the particle store.
    pub particles: Range<usize>,
}

impl Default for CellState {
    fn default() -> Self {
        CellState {
            bba: Bba::vacuous(),
            rho_p: 0.0,
            rho_b: 0.0,
            mean_velocity: Vector3::zeros(),
            particles: 0..0,
        }
    }
}

impl CellState {
    pub fn is_vacuous(&self) -> bool {
        self.bba.is_vacuous()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellLabel {
    Filtered,
    Occupied,
    DynamicOccupied,
    FreeOrStatic,
}

impl CellLabel {
    pub fn is_occupied(self) -> bool {
        matches!(self, CellLabel::Occupied | CellLabel::DynamicOccupied)
    }
}

/// Classification thresholds (`zeta0` filter, `zeta1` occupied, `zeta2` dynamic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub zeta0: f64,
    pub zeta1: f64,
    pub zeta2: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            zeta0: 0.5,
            zeta1: 0.5,
            zeta2: 0.5,
        }
    }
}

pub fn classify_bba(bba: &Bba, th: Thresholds) -> CellLabel {
    if th.zeta0 < bba.mass(FocalElement::Unknown) {
        return CellLabel::Filtered;
    }
    let p = bba.pignistic();
    if p.p_occupied() > th.zeta1 {
        if p.p_dyn > th.zeta2 {
            CellLabel::DynamicOccupied
        } else {
            CellLabel::Occupied
        }
    } else {
        CellLabel::FreeOrStatic
    }
}

pub fn classify_cell(state: &CellState, th: Thresholds) -> CellLabel {
    classify_bba(&state.bba, th)
}

/// The local map: a grid spec plus one [`CellState`] per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    spec: GridSpec,
    cells: Vec<CellState>,
}

impl GridMap {
    /// A fully vacuous map.
    pub fn new(spec: GridSpec) -> Self {
        GridMap {
            spec,
            cells: vec![CellState::default(); spec.num_cells()],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [CellState] {
        &mut self.cells
    }

    pub fn cell(&self, c: CellIndex) -> &CellState {
        &self.cells[self.spec.flat(c)]
    }

    pub fn cell_mut(&mut self, c: CellIndex) -> &mut CellState {
        let f = self.spec.flat(c);
        &mut self.cells[f]
    }

    /// Translates the grid by whole cells. Surviving cells keep their state,
    /// incoming cells start vacuous. Particle spans are invalidated and must
    /// be rebuilt by re-binning the particle store.
    pub fn shift_cells(&mut self, delta: [i64; 3]) {
        if delta == [0, 0, 0] {
            return;
        }
        let spec = self.spec;
        let new_spec = spec.shifted(delta);
        let mut fresh = vec![CellState::default(); spec.num_cells()];
        for (flat, slot) in fresh.iter_mut().enumerate() {
            let c = spec.unflat(flat);
            let (si, sj, sk) = (
                c.i as i64 + delta[0],
                c.j as i64 + delta[1],
                c.k as i64 + delta[2],
            );
            if spec.contains_index(si, sj, sk) {
                let src = spec.flat(CellIndex::new(si as usize, sj as usize, sk as usize));
                *slot = std::mem::take(&mut self.cells[src]);
                slot.particles = 0..0;
            }
        }
        self.cells = fresh;
        self.spec = new_spec;
    }

    /// Recenters on the sensor when it has left the central region.
    /// Returns the applied shift in cells.
    pub fn recenter(&mut self, sensor: &Vector3<f64>) -> [i64; 3] {
        let delta = self.spec.recenter_shift(sensor);
        self.shift_cells(delta);
        delta
    }

    pub fn classify(&self, c: CellIndex, th: Thresholds) -> CellLabel {
        classify_cell(self.cell(c), th)
    }
}
