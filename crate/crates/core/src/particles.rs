//! Weighted 6-D particles carrying the dynamic mass of the map.
//!
//! The store is kept sorted by flat cell index so each cell owns one
//! contiguous span. Binning is a counting sort.

use std::ops::Range;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::GridSpec;
use crate::rng::{self, Stage, CHUNK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParticleError {
    #[error("total particle weight {0} is not positive")]
    DegenerateWeights(f64),
    #[error("cell {0} has no weighted particles")]
    NoParticles(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub weight: f64,
    /// Flat index of the owning cell.
    pub cell: usize,
}

impl Particle {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, weight: f64) -> Self {
        Particle {
            position,
            velocity,
            weight,
            cell: usize::MAX,
        }
    }
}

/// Constant-velocity motion and birth parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionParams {
    /// Nominal step, used before two timestamps are known.
    pub dt: f64,
    /// Position process noise SD (m).
    pub sigma_p: f64,
    /// Velocity process noise SD (m/s).
    pub sigma_v: f64,
    /// Persistence probability.
    pub p_survive: f64,
    /// Half-width of the uniform birth velocity cube (m/s).
    pub v_max_birth: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            dt: 0.1,
            sigma_p: 0.05,
            sigma_v: 0.1,
            p_survive: 0.99,
            v_max_birth: 3.0,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) {
            return Err(format!("motion.dt must be positive, got {}", self.dt));
        }
        if !(self.sigma_p >= 0.0 && self.sigma_v >= 0.0) {
            return Err("motion noise must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.p_survive) {
            return Err(format!("p_survive must lie in [0,1], got {}", self.p_survive));
        }
        if !(self.v_max_birth >= 0.0) {
            return Err("v_max_birth must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ParticleStore {
    particles: Vec<Particle>,
    /// `offsets[c]..offsets[c + 1]` is cell `c`'s span.
    offsets: Vec<usize>,
    seed: u64,
    step: u64,
}

impl ParticleStore {
    pub fn new(seed: u64, num_cells: usize) -> Self {
        ParticleStore {
            particles: Vec::new(),
            offsets: vec![0; num_cells + 1],
            seed,
            step: 0,
        }
    }

    /// Bins arbitrary particles into `spec`, dropping those outside.
    pub fn from_particles(particles: Vec<Particle>, spec: &GridSpec, seed: u64) -> Self {
        let mut store = ParticleStore {
            particles,
            offsets: Vec::new(),
            seed,
            step: 0,
        };
        store.rebin(spec);
        store
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of completed steps; keys the random streams.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn advance_step(&mut self) {
        self.step += 1;
    }

    pub fn num_cells(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn cell_range(&self, cell: usize) -> Range<usize> {
        self.offsets[cell]..self.offsets[cell + 1]
    }

    pub fn cell_count(&self, cell: usize) -> usize {
        self.offsets[cell + 1] - self.offsets[cell]
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// Recomputes every particle's cell from its position, drops particles
    /// outside the grid and counting-sorts the rest by cell.
    pub fn rebin(&mut self, spec: &GridSpec) {
        let n_cells = spec.num_cells();
        self.particles.par_iter_mut().for_each(|p| {
            p.cell = spec.locate_flat(&p.position).unwrap_or(usize::MAX);
        });
        self.particles.retain(|p| p.cell != usize::MAX);
        self.sort_by_cell(n_cells);
    }

    /// Stable counting sort on the already assigned `cell` fields.
    fn sort_by_cell(&mut self, n_cells: usize) {
        let mut offsets = vec![0usize; n_cells + 1];
        for p in &self.particles {
            offsets[p.cell + 1] += 1;
        }
        for c in 0..n_cells {
            offsets[c + 1] += offsets[c];
        }
        let already_sorted = self.particles.windows(2).all(|w| w[0].cell <= w[1].cell);
        if !already_sorted {
            let mut cursor = offsets.clone();
            let mut sorted = vec![
                Particle::new(Vector3::zeros(), Vector3::zeros(), 0.0);
                self.particles.len()
            ];
            for p in &self.particles {
                sorted[cursor[p.cell]] = *p;
                cursor[p.cell] += 1;
            }
            self.particles = sorted;
        }
        self.offsets = offsets;
    }

    /// Constant-velocity prediction with Gaussian process noise; weights are
    /// multiplied by the persistence probability, then the store is re-binned.
    pub fn predict(&mut self, params: &MotionParams, dt: f64, spec: &GridSpec) {
        let (seed, step) = (self.seed, self.step);
        let sp = params.sigma_p;
        let sv = params.sigma_v;
        let ps = params.p_survive;
        self.particles
            .par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(chunk, ps_chunk)| {
                let mut rng = rng::stream(seed, Stage::Predict, step, chunk as u64);
                for p in ps_chunk {
                    let np = gaussian3(&mut rng) * sp;
                    let nv = gaussian3(&mut rng) * sv;
                    p.position += p.velocity * dt + np;
                    p.velocity += nv;
                    p.weight *= ps;
                }
            });
        self.rebin(spec);
    }

    /// Drops every particle below the plane `z = height`.
    pub fn drop_below(&mut self, height: f64, spec: &GridSpec) {
        self.particles.retain(|p| p.position.z >= height);
        self.sort_by_cell(spec.num_cells());
    }

    /// Per-cell weight sums.
    pub fn cell_weight_sums(&self) -> Vec<f64> {
        (0..self.num_cells())
            .into_par_iter()
            .map(|c| self.particles[self.cell_range(c)].iter().map(|p| p.weight).sum())
            .collect()
    }

    /// Scales each cell's particles so their weights sum to `rho_p[cell]`.
    /// Cells whose current sum is zero are left untouched.
    pub fn normalize_posterior_weights(&mut self, rho_p: &[f64]) {
        assert_eq!(rho_p.len(), self.num_cells());
        let offsets = &self.offsets;
        let mut rest: &mut [Particle] = &mut self.particles;
        let mut spans: Vec<(&mut [Particle], f64)> = Vec::new();
        for (c, &target) in rho_p.iter().enumerate() {
            let n = offsets[c + 1] - offsets[c];
            if n == 0 {
                continue;
            }
            let (head, tail) = rest.split_at_mut(n);
            spans.push((head, target));
            rest = tail;
        }
        spans.into_par_iter().for_each(|(span, target)| {
            let sum: f64 = span.iter().map(|p| p.weight).sum();
            if sum > 0.0 {
                let scale = target / sum;
                for p in span.iter_mut() {
                    p.weight *= scale;
                }
            }
        });
    }

    /// Appends new particles and re-bins.
    pub fn extend(&mut self, particles: Vec<Particle>, spec: &GridSpec) {
        self.particles.extend(particles);
        self.rebin(spec);
    }

    /// Systematic resampling to exactly `nu` equally weighted particles that
    /// together keep the total weight.
    pub fn resample(&mut self, nu: usize) -> Result<(), ParticleError> {
        let total = self.total_weight();
        if !(total > 0.0) || !total.is_finite() {
            return Err(ParticleError::DegenerateWeights(total));
        }
        let n_cells = self.num_cells();
        let mut rng = rng::stream(self.seed, Stage::Resample, self.step, 0);
        let u: f64 = rng.random();
        let share = total / nu as f64;
        let mut out = Vec::with_capacity(nu);
        let mut j = 0;
        let mut cum = self.particles[0].weight;
        let last = self.particles.len() - 1;
        for i in 0..nu {
            let pos = (u + i as f64) * share;
            while pos >= cum && j < last {
                j += 1;
                cum += self.particles[j].weight;
            }
            let mut p = self.particles[j];
            p.weight = share;
            out.push(p);
        }
        self.particles = out;
        self.sort_by_cell(n_cells);
        Ok(())
    }

    /// Weight-weighted mean velocity of a cell's particles.
    pub fn cell_velocity(&self, cell: usize) -> Result<Vector3<f64>, ParticleError> {
        weighted_mean_velocity(&self.particles[self.cell_range(cell)])
            .ok_or(ParticleError::NoParticles(cell))
    }
}

pub fn weighted_mean_velocity(particles: &[Particle]) -> Option<Vector3<f64>> {
    let mut sum = Vector3::zeros();
    let mut w = 0.0;
    for p in particles {
        sum += p.velocity * p.weight;
        w += p.weight;
    }
    (w > 0.0).then(|| sum / w)
}

fn gaussian3<R: Rng>(rng: &mut R) -> Vector3<f64> {
    Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

/// Largest-remainder apportionment of `budget` items proportional to `mass`.
/// Ties in the remainder go to the lower index.
pub fn allocate_largest_remainder(mass: &[f64], budget: usize) -> Vec<usize> {
    let total: f64 = mass.iter().filter(|m| **m > 0.0).sum();
    let mut counts = vec![0usize; mass.len()];
    if budget == 0 || !(total > 0.0) {
        return counts;
    }
    let mut remainders = Vec::new();
    let mut assigned = 0usize;
    for (c, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            let quota = budget as f64 * m / total;
            let base = quota.floor();
            counts[c] = base as usize;
            assigned += counts[c];
            remainders.push((quota - base, c));
        }
    }
    let left = budget.saturating_sub(assigned);
    if left > 0 {
        remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, c) in remainders.iter().cycle().take(left) {
            counts[c] += 1;
        }
    }
    counts
}

/// Spawns `budget` new-born particles over the cells in proportion to their
/// birth mass. Each receiving cell splits its mass evenly over its particles;
/// positions are uniform in the cell and velocities uniform in the birth cube.
pub fn spawn_birth(
    rho_b: &[f64],
    budget: usize,
    params: &MotionParams,
    spec: &GridSpec,
    seed: u64,
    step: u64,
) -> Vec<Particle> {
    let counts = allocate_largest_remainder(rho_b, budget);
    let mut owners = Vec::with_capacity(budget);
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            owners.push(c);
        }
    }
    let edge = spec.cell_edge;
    let vmax = params.v_max_birth;
    let mut births = vec![Particle::new(Vector3::zeros(), Vector3::zeros(), 0.0); owners.len()];
    births
        .par_chunks_mut(CHUNK)
        .zip(owners.par_chunks(CHUNK))
        .enumerate()
        .for_each(|(chunk, (out, cells))| {
            let mut rng = rng::stream(seed, Stage::Birth, step, chunk as u64);
            for (p, &c) in out.iter_mut().zip(cells) {
                let idx = spec.unflat(c);
                let corner = spec.min()
                    + Vector3::new(idx.i as f64, idx.j as f64, idx.k as f64) * edge;
                let offset = Vector3::new(rng.random::<f64>(), rng.random(), rng.random()) * edge;
                let velocity = Vector3::new(
                    rng.random_range(-vmax..=vmax),
                    rng.random_range(-vmax..=vmax),
                    rng.random_range(-vmax..=vmax),
                );
                *p = Particle {
                    position: corner + offset,
                    velocity,
                    weight: rho_b[c] / counts[c] as f64,
                    cell: c,
                };
            }
        });
    births
}
