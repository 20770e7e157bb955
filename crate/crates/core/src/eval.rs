//! ROC/AUC sweeps over classified cells and per-object velocity error.

use std::io::{self, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::grid::CellState;
use crate::sim::TruthLabel;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no positive cells left after filtering")]
    NoPositives,
    #[error("no negative cells left after filtering")]
    NoNegatives,
    #[error("object cells carry no persistent dynamic mass")]
    ZeroDynamicMass,
    #[error("snapshots do not align with the scenario: {0}")]
    Alignment(String),
}

/// Which curve to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RocKind {
    /// Score `P(D) + P(S)`, positives labeled D or S.
    Occupied,
    /// Score `P(D)`, positives labeled D.
    Dynamic,
}

impl RocKind {
    pub fn name(self) -> &'static str {
        match self {
            RocKind::Occupied => "O",
            RocKind::Dynamic => "D",
        }
    }
}

/// Threshold placement for a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdGrid {
    /// `n` evenly spaced thresholds from 0 to 1 inclusive.
    Uniform(usize),
    /// One threshold per distinct score: the exact empirical curve.
    Scores,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Sweep points in threshold order, excluding the (0,0) and (1,1) anchors.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Scored instances for one curve; grows frame by frame.
#[derive(Debug, Clone, Default)]
pub struct ScoreSet {
    positives: Vec<f64>,
    negatives: Vec<f64>,
}

impl ScoreSet {
    pub fn push(&mut self, score: f64, positive: bool) {
        if positive {
            self.positives.push(score);
        } else {
            self.negatives.push(score);
        }
    }

    /// Adds every cell of one frame that passes the `m(Omega) <= zeta0` filter.
    pub fn add_frame(&mut self, cells: &[CellState], labels: &[TruthLabel], kind: RocKind, zeta0: f64) {
        assert_eq!(cells.len(), labels.len(), "cells and labels differ in length");
        for (cell, label) in cells.iter().zip(labels) {
            if cell.bba.mass(crate::dst::FocalElement::Unknown) > zeta0 {
                continue;
            }
            let p = cell.bba.pignistic();
            match kind {
                RocKind::Occupied => self.push(p.p_occupied(), label.is_occupied()),
                RocKind::Dynamic => self.push(p.p_dyn, *label == TruthLabel::Dynamic),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sweeps `score > threshold` over the grid.
    pub fn roc(&self, grid: ThresholdGrid) -> Result<RocCurve, EvalError> {
        if self.positives.is_empty() {
            return Err(EvalError::NoPositives);
        }
        if self.negatives.is_empty() {
            return Err(EvalError::NoNegatives);
        }
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        let pos = sorted(&self.positives);
        let neg = sorted(&self.negatives);
        let above = |v: &[f64], th: f64| (v.len() - v.partition_point(|&x| x <= th)) as f64;

        let thresholds: Vec<f64> = match grid {
            ThresholdGrid::Uniform(n) => {
                assert!(n >= 2, "need at least two thresholds");
                (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
            }
            ThresholdGrid::Scores => {
                let mut all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
                all.sort_by(f64::total_cmp);
                all.dedup();
                all
            }
        };
        let points: Vec<RocPoint> = thresholds
            .iter()
            .map(|&threshold| RocPoint {
                threshold,
                tpr: above(&pos, threshold) / pos.len() as f64,
                fpr: above(&neg, threshold) / neg.len() as f64,
            })
            .collect();
        let auc = auc(&points);
        Ok(RocCurve { points, auc })
    }
}

/// Trapezoidal area under the points plus the (0,0) and (1,1) anchors.
pub fn auc(points: &[RocPoint]) -> f64 {
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    xy.push((0.0, 0.0));
    xy.push((1.0, 1.0));
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    xy.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// One global curve over all frames of the window.
pub fn roc_sweep<'a>(
    frames: impl IntoIterator<Item = (&'a [CellState], &'a [TruthLabel])>,
    kind: RocKind,
    zeta0: f64,
    grid: ThresholdGrid,
) -> Result<RocCurve, EvalError> {
    let mut set = ScoreSet::default();
    for (cells, labels) in frames {
        set.add_frame(cells, labels, kind, zeta0);
    }
    set.roc(grid)
}

/// Persistent-mass weighted mean of the member cells' velocities. Cells
/// without particles have no velocity estimate and are skipped.
pub fn object_velocity(cells: &[CellState], members: &[usize]) -> Result<Vector3<f64>, EvalError> {
    let mut sum = Vector3::zeros();
    let mut w = 0.0;
    for &c in members {
        let cell = &cells[c];
        if cell.particles.is_empty() {
            continue;
        }
        sum += cell.mean_velocity * cell.rho_p;
        w += cell.rho_p;
    }
    if w > 0.0 {
        Ok(sum / w)
    } else {
        Err(EvalError::ZeroDynamicMass)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityRecord {
    pub t: f64,
    pub object_id: String,
    pub v_est: Vector3<f64>,
    pub v_true: Vector3<f64>,
    pub err_norm: f64,
}

impl VelocityRecord {
    pub fn new(t: f64, object_id: &str, v_est: Vector3<f64>, v_true: Vector3<f64>) -> Self {
        VelocityRecord {
            t,
            object_id: object_id.to_string(),
            v_est,
            v_true,
            err_norm: (v_est - v_true).norm(),
        }
    }
}

pub fn write_roc_csv(mut w: impl Write, curves: &[(RocKind, &RocCurve)]) -> io::Result<()> {
    writeln!(w, "curve,threshold,tpr,fpr")?;
    for (kind, curve) in curves {
        for p in &curve.points {
            writeln!(w, "{},{},{},{}", kind.name(), p.threshold, p.tpr, p.fpr)?;
        }
    }
    Ok(())
}

pub fn write_velocity_csv(mut w: impl Write, records: &[VelocityRecord]) -> io::Result<()> {
    writeln!(w, "t,object,vx_est,vy_est,vz_est,vx_true,vy_true,vz_true,err_norm")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.t, r.object_id, r.v_est.x, r.v_est.y, r.v_est.z, r.v_true.x, r.v_true.y, r.v_true.z, r.err_norm
        )?;
    }
    Ok(())
}

pub fn write_summary_csv(mut w: impl Write, auc_o: f64, auc_d: f64) -> io::Result<()> {
    writeln!(w, "auc_o,auc_d")?;
    writeln!(w, "{auc_o},{auc_d}")
}
