//! Sparse per-frame map snapshots.
//!
//! ```text
//! dsk3dom-snapshot 1
//! frame <index> time <t>
//! grid <min_x> <min_y> <min_z> <cell_edge> <nx> <ny> <nz>
//! pose <tx> <ty> <tz> <qw> <qx> <qy> <qz>
//! cells <n>
//! <flat> <m_D> <m_S> <m_F> <m_DS> <m_Omega> <rho_p> <rho_b> <vx> <vy> <vz> <particles>
//! ```
//!
//! Only cells that are not vacuous or that hold particles are written, in
//! increasing flat order.

use std::io::{BufRead, Write};

use nalgebra::{Isometry3, Vector3};

use super::log::{read_pose, write_pose};
use super::{FormatError, Tokens};
use crate::dst::Bba;
use crate::grid::{CellState, GridMap, GridSpec};

pub const SNAPSHOT_MAGIC: &str = "dsk3dom-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotCell {
    pub index: usize,
    pub bba: Bba,
    pub rho_p: f64,
    pub rho_b: f64,
    pub velocity: Vector3<f64>,
    /// Number of particles in the cell.
    pub particles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub frame: usize,
    pub time: f64,
    pub spec: GridSpec,
    pub pose: Isometry3<f64>,
    pub cells: Vec<SnapshotCell>,
}

impl Snapshot {
    pub fn file_name(frame: usize) -> String {
        format!("snap_{frame:06}.txt")
    }

    pub fn capture(frame: usize, time: f64, pose: Isometry3<f64>, map: &GridMap) -> Self {
        let cells = map
            .cells()
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_vacuous() || !c.particles.is_empty())
            .map(|(index, c)| SnapshotCell {
                index,
                bba: c.bba,
                rho_p: c.rho_p,
                rho_b: c.rho_b,
                velocity: c.mean_velocity,
                particles: c.particles.len(),
            })
            .collect();
        Snapshot {
            frame,
            time,
            spec: *map.spec(),
            pose,
            cells,
        }
    }

    /// Dense cell states. Particle spans are rebuilt from the counts in
    /// flat order, which is how the particle store lays them out.
    pub fn to_cells(&self) -> Vec<CellState> {
        let mut cells = vec![CellState::default(); self.spec.num_cells()];
        for c in &self.cells {
            cells[c.index] = CellState {
                bba: c.bba,
                rho_p: c.rho_p,
                rho_b: c.rho_b,
                mean_velocity: c.velocity,
                particles: 0..c.particles,
            };
        }
        let mut offset = 0;
        for cell in &mut cells {
            let n = cell.particles.len();
            cell.particles = offset..offset + n;
            offset += n;
        }
        cells
    }

    pub fn to_map(&self) -> GridMap {
        let mut map = GridMap::new(self.spec);
        map.cells_mut().clone_from_slice(&self.to_cells());
        map
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        let s = &self.spec;
        writeln!(out, "{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}")?;
        writeln!(out, "frame {} time {}", self.frame, self.time)?;
        writeln!(
            out,
            "grid {} {} {} {} {} {} {}",
            s.min_corner[0], s.min_corner[1], s.min_corner[2], s.cell_edge, s.dims[0], s.dims[1], s.dims[2]
        )?;
        write!(out, "pose ")?;
        write_pose(&mut out, &self.pose)?;
        writeln!(out)?;
        writeln!(out, "cells {}", self.cells.len())?;
        for c in &self.cells {
            write!(out, "{}", c.index)?;
            for m in c.bba.masses() {
                write!(out, " {m}")?;
            }
            let v = c.velocity;
            writeln!(
                out,
                " {} {} {} {} {} {}",
                c.rho_p, c.rho_b, v.x, v.y, v.z, c.particles
            )?;
        }
        out.flush()
    }

    pub fn read(input: impl BufRead) -> Result<Self, FormatError> {
        let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut line = |what: &str| -> Result<(usize, String), FormatError> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(FormatError::at(0, format!("unexpected end of file, expected {what}"))),
            }
        };

        let (n, l) = line("header")?;
        super::check_header(&l, SNAPSHOT_MAGIC, SNAPSHOT_VERSION, n)?;

        let (n, l) = line("frame line")?;
        let mut tok = Tokens::new(&l, n);
        tok.keyword("frame")?;
        let frame = tok.usize("frame index")?;
        tok.keyword("time")?;
        let time = tok.f64("time")?;
        tok.finish()?;

        let (n, l) = line("grid line")?;
        let mut tok = Tokens::new(&l, n);
        tok.keyword("grid")?;
        let min_corner = [tok.f64("min_x")?, tok.f64("min_y")?, tok.f64("min_z")?];
        let cell_edge = tok.f64("cell_edge")?;
        let dims = [tok.usize("nx")?, tok.usize("ny")?, tok.usize("nz")?];
        let spec = GridSpec::new(min_corner, cell_edge, dims).map_err(|e| tok.error(e.to_string()))?;
        tok.finish()?;

        let (n, l) = line("pose line")?;
        let mut tok = Tokens::new(&l, n);
        tok.keyword("pose")?;
        let pose = read_pose(&mut tok)?;
        tok.finish()?;

        let (n, l) = line("cells line")?;
        let mut tok = Tokens::new(&l, n);
        tok.keyword("cells")?;
        let count = tok.usize("cell count")?;
        tok.finish()?;

        let mut cells = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, l) = line("cell record")?;
            let mut tok = Tokens::new(&l, n);
            let index = tok.usize("cell index")?;
            if index >= spec.num_cells() {
                return Err(tok.error(format!("cell index {index} outside the grid")));
            }
            if cells.last().is_some_and(|c: &SnapshotCell| c.index >= index) {
                return Err(tok.error("cell indices must increase".into()));
            }
            let mut masses = [0.0; 5];
            for (m, name) in masses.iter_mut().zip(["m_D", "m_S", "m_F", "m_DS", "m_Omega"]) {
                *m = tok.f64(name)?;
            }
            let bba = Bba::new(masses).map_err(|e| tok.error(e.to_string()))?;
            let rho_p = tok.f64("rho_p")?;
            let rho_b = tok.f64("rho_b")?;
            let velocity = Vector3::new(tok.f64("vx")?, tok.f64("vy")?, tok.f64("vz")?);
            let particles = tok.usize("particles")?;
            tok.finish()?;
            cells.push(SnapshotCell {
                index,
                bba,
                rho_p,
                rho_b,
                velocity,
                particles,
            });
        }
        Ok(Snapshot {
            frame,
            time,
            spec,
            pose,
            cells,
        })
    }
}
