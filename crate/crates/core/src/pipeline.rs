//! One filter step: particle prediction, mass prediction, kernel observation,
//! Dempster fusion, persistent/new-born split, reweighting, birth and
//! resampling.

use std::time::Instant;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dst::{Bba, DstError, FocalElement};
use crate::grid::{GridMap, GridSpec};
use crate::measurement::{accumulate_evidence, KernelParams, MeasurementFrame};
use crate::particles::{spawn_birth, MotionParams, ParticleError, ParticleStore};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame timestamp {current} does not follow previous timestamp {previous}")]
    NonMonotonicTimestamp { previous: f64, current: f64 },
    #[error(transparent)]
    Dst(#[from] DstError),
    #[error(transparent)]
    Particles(#[from] ParticleError),
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
}

/// Filter parameters. Defaults follow the published parameter table, with the
/// particle budgets scaled down by 1/20 for a desktop CPU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams {
    /// Decay factor on beliefs.
    pub gamma: f64,
    /// Share of decayed occupied mass redistributed to `{D}` and `{S}`.
    pub alpha: f64,
    /// Birth probability.
    pub p_birth: f64,
    /// Sum of the Dirichlet priors.
    pub prior_sum: f64,
    /// Persistent particle budget.
    pub particles: usize,
    /// New-born particles per step.
    pub birth_particles: usize,
    /// Drop particles below this height after prediction.
    pub ground_filter: Option<f64>,
    pub motion: MotionParams,
    pub kernel: KernelParams,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            gamma: 0.99,
            alpha: 0.9,
            p_birth: 0.02,
            prior_sum: 0.001,
            particles: 100_000,
            birth_particles: 10_000,
            ground_filter: None,
            motion: MotionParams::default(),
            kernel: KernelParams::default(),
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(PipelineError::InvalidParams(format!(
                    "{name} must lie in [0,1], got {v}"
                )))
            }
        };
        unit("gamma", self.gamma)?;
        unit("alpha", self.alpha)?;
        unit("p_birth", self.p_birth)?;
        if !(self.prior_sum > 0.0 && self.prior_sum.is_finite()) {
            return Err(PipelineError::InvalidParams(format!(
                "prior_sum must be positive, got {}",
                self.prior_sum
            )));
        }
        if self.particles == 0 {
            return Err(PipelineError::InvalidParams("particles must be positive".into()));
        }
        self.motion.validate().map_err(PipelineError::InvalidParams)?;
        self.kernel.validate().map_err(PipelineError::InvalidParams)?;
        Ok(())
    }
}

/// Ratio of the prior dynamic to occupied pignistic probability, 0 when the
/// cell has no occupied probability.
pub fn distributing_ratio(prior: &Bba) -> f64 {
    let p = prior.pignistic();
    let denom = p.p_dyn + p.p_stat;
    if denom > 0.0 {
        p.p_dyn / denom
    } else {
        0.0
    }
}

/// Predicted BBA of a cell from its prior and the summed weight of the
/// persistent particles predicted into it. Each line is clipped against what
/// the previous lines left over; the rest goes to Unknown.
pub fn predict_masses(prior: &Bba, weight_sum: f64, gamma: f64, alpha: f64, dt: f64) -> Bba {
    let decay = gamma.powf(dt);
    let share = alpha.powf(dt);
    let delta = distributing_ratio(prior);
    let occ = prior.mass(FocalElement::Occ);

    let dyn_ = (weight_sum + decay * share * delta * occ).min(1.0);
    let left = 1.0 - dyn_;
    let stat = left
        .min(decay * (prior.mass(FocalElement::Stat) + share * (1.0 - delta) * occ))
        .max(0.0);
    let left = left - stat;
    let occ_next = left.min(decay * (1.0 - share) * occ).max(0.0);
    let left = left - occ_next;
    let free = left.min(decay * prior.mass(FocalElement::Free)).max(0.0);
    let unknown = (left - free).max(0.0);
    Bba::from_raw([dyn_, stat, free, occ_next, unknown])
}

/// Dempster fusion of the predicted and observed BBAs.
pub fn fuse(predicted: &Bba, observation: &Bba) -> Result<Bba, DstError> {
    predicted.combine(observation)
}

/// Splits the fused dynamic mass into persistent and new-born shares,
/// returned as `(rho_p, rho_b)`.
pub fn split_dynamic_mass(posterior_dyn: f64, predicted: &Bba, p_birth: f64) -> (f64, f64) {
    let pred_dyn = predicted.mass(FocalElement::Dyn);
    let birth = p_birth * (1.0 - pred_dyn - predicted.mass(FocalElement::Stat)).max(0.0);
    let denom = birth + pred_dyn;
    if denom <= 0.0 {
        return (0.0, 0.0);
    }
    let rho_b = posterior_dyn * birth / denom;
    (posterior_dyn - rho_b, rho_b)
}

/// Wall-clock seconds per stage of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub predict: f64,
    pub evidence: f64,
    pub cell_update: f64,
    pub reweight: f64,
    pub birth: f64,
    pub resample: f64,
    pub velocity: f64,
    pub recenter: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.predict
            + self.evidence
            + self.cell_update
            + self.reweight
            + self.birth
            + self.resample
            + self.velocity
            + self.recenter
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub timestamp: f64,
    pub dt: f64,
    pub particles: usize,
    pub births: usize,
    /// Persistent mass in cells without particles to carry it, plus birth
    /// mass of cells that received no birth particle.
    pub leaked_mass: f64,
    pub shift: [i64; 3],
    pub timings: StageTimings,
}

/// Map and particle store advanced frame by frame.
#[derive(Debug, Clone)]
pub struct Pipeline {
    params: FilterParams,
    map: GridMap,
    store: ParticleStore,
    last_timestamp: Option<f64>,
}

impl Pipeline {
    pub fn new(params: FilterParams, spec: GridSpec, seed: u64) -> Result<Self, PipelineError> {
        params.validate()?;
        spec.validate()
            .map_err(|e| PipelineError::InvalidParams(e.to_string()))?;
        Ok(Pipeline {
            params,
            map: GridMap::new(spec),
            store: ParticleStore::new(seed, spec.num_cells()),
            last_timestamp: None,
        })
    }

    /// Starts from an existing map and store; the store must be binned on the
    /// map's grid.
    pub fn with_state(params: FilterParams, map: GridMap, store: ParticleStore) -> Self {
        Pipeline {
            params,
            map,
            store,
            last_timestamp: None,
        }
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn store(&self) -> &ParticleStore {
        &self.store
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.last_timestamp
    }

    pub fn step(&mut self, frame: &MeasurementFrame) -> Result<StepReport, PipelineError> {
        let dt = match self.last_timestamp {
            Some(previous) if frame.timestamp <= previous => {
                return Err(PipelineError::NonMonotonicTimestamp {
                    previous,
                    current: frame.timestamp,
                })
            }
            Some(previous) => frame.timestamp - previous,
            None => self.params.motion.dt,
        };
        let p = self.params;
        let spec = *self.map.spec();
        let mut timings = StageTimings::default();

        let clock = Instant::now();
        self.store.predict(&p.motion, dt, &spec);
        if let Some(height) = p.ground_filter {
            self.store.drop_below(height, &spec);
        }
        let weight_sums = self.store.cell_weight_sums();
        timings.predict = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let evidence = accumulate_evidence(&frame.rays, &spec, &p.kernel);
        timings.evidence = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        self.map
            .cells_mut()
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(c, cell)| -> Result<(), DstError> {
                let predicted = predict_masses(&cell.bba, weight_sums[c], p.gamma, p.alpha, dt);
                let posterior = match evidence.evidence(c, p.prior_sum) {
                    Some(ev) => fuse(&predicted, &ev.to_bba())?,
                    None => predicted,
                };
                let (rho_p, rho_b) =
                    split_dynamic_mass(posterior.mass(FocalElement::Dyn), &predicted, p.p_birth);
                cell.bba = posterior;
                cell.rho_p = rho_p;
                cell.rho_b = rho_b;
                Ok(())
            })?;
        let rho_p: Vec<f64> = self.map.cells().iter().map(|c| c.rho_p).collect();
        let rho_b: Vec<f64> = self.map.cells().iter().map(|c| c.rho_b).collect();
        let mut leaked: f64 = rho_p
            .iter()
            .zip(&weight_sums)
            .filter(|(_, w)| **w <= 0.0)
            .map(|(r, _)| *r)
            .sum();
        timings.cell_update = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        self.store.normalize_posterior_weights(&rho_p);
        timings.reweight = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let births = spawn_birth(
            &rho_b,
            p.birth_particles,
            &p.motion,
            &spec,
            self.store.seed(),
            self.store.step(),
        );
        let n_births = births.len();
        let mut born = vec![false; spec.num_cells()];
        for b in &births {
            born[b.cell] = true;
        }
        leaked += rho_b
            .iter()
            .zip(&born)
            .filter(|(_, b)| !**b)
            .map(|(r, _)| *r)
            .sum::<f64>();
        self.store.extend(births, &spec);
        timings.birth = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        if self.store.total_weight() > 0.0 {
            self.store.resample(p.particles)?;
        }
        timings.resample = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        self.refresh_cell_particles(true);
        timings.velocity = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let shift = self.map.recenter(&frame.sensor_position());
        if shift != [0, 0, 0] {
            self.store.rebin(self.map.spec());
            self.refresh_cell_particles(false);
        }
        timings.recenter = clock.elapsed().as_secs_f64();

        self.store.advance_step();
        self.last_timestamp = Some(frame.timestamp);
        debug!(
            "t={:.3} particles={} births={} leaked={:.4} total={:.1}ms",
            frame.timestamp,
            self.store.len(),
            n_births,
            leaked,
            timings.total() * 1e3
        );
        Ok(StepReport {
            timestamp: frame.timestamp,
            dt,
            particles: self.store.len(),
            births: n_births,
            leaked_mass: leaked,
            shift,
            timings,
        })
    }

    fn refresh_cell_particles(&mut self, velocities: bool) {
        let store = &self.store;
        self.map
            .cells_mut()
            .par_iter_mut()
            .enumerate()
            .for_each(|(c, cell)| {
                cell.particles = store.cell_range(c);
                if velocities {
                    cell.mean_velocity = store.cell_velocity(c).unwrap_or_default();
                }
            });
    }
}
