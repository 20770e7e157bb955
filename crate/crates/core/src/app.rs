//! Command implementations behind the `dsk3dom` binary.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, EvalError, RocCurve, RocKind, ScoreSet, ThresholdGrid, VelocityRecord};
use crate::grid::{classify_cell, CellLabel, Thresholds};
use crate::io::config::{sha256_hex, ConfigError, RunConfig};
use crate::io::log::{write_frame, write_log_header, LogReader};
use crate::io::snapshot::Snapshot;
use crate::io::FormatError;
use crate::measurement::MeasurementFrame;
use crate::pipeline::{Pipeline, PipelineError, StageTimings};
use crate::sim::{self, Scenario, SimError};

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        source: FormatError,
    },
    #[error("{path}: {source}")]
    Scenario { path: PathBuf, source: SimError },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("frame {frame}: {source}")]
    Pipeline { frame: usize, source: PipelineError },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, AppError> {
    Scenario::from_toml_str(&read_text(path)?).map_err(|source| AppError::Scenario {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the scenario's frames to a measurement log; returns the frame count.
pub fn cmd_simulate(scenario_file: &Path, out_log: &Path) -> Result<usize, AppError> {
    let scenario = load_scenario(scenario_file)?;
    if let Some(dir) = out_log.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(out_log).map_err(io_err(out_log))?;
    let mut out = BufWriter::new(file);
    write_log_header(&mut out).map_err(io_err(out_log))?;
    let n = scenario.frame_count();
    for i in 0..n {
        let frame = sim::simulate_frame(&scenario, scenario.frame_time(i));
        write_frame(&mut out, &frame).map_err(io_err(out_log))?;
    }
    out.flush().map_err(io_err(out_log))?;
    info!("wrote {n} frames of '{}' to {}", scenario.name, out_log.display());
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp: f64,
    pub wall_seconds: f64,
    pub particles: usize,
    pub births: usize,
    pub leaked_mass: f64,
    pub shift: [i64; 3],
    pub stages: StageTimings,
}

/// Run metadata written next to the snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub desk_scale: f64,
    pub particles: usize,
    pub birth_particles: usize,
    pub snapshot_stride: usize,
    pub threads: usize,
    pub frames: Vec<FrameRecord>,
    pub snapshots: Vec<String>,
}

/// Runs the filter over frames, handing every `stride`-th snapshot to `sink`.
pub fn run_filter(
    config: &RunConfig,
    frames: impl IntoIterator<Item = Result<MeasurementFrame, AppError>>,
    mut sink: impl FnMut(Snapshot) -> Result<(), AppError>,
) -> Result<Vec<FrameRecord>, AppError> {
    let mut pipeline = Pipeline::new(config.filter, config.grid, config.seed)
        .map_err(|source| AppError::Pipeline { frame: 0, source })?;
    let mut records = Vec::new();
    for (index, frame) in frames.into_iter().enumerate() {
        let frame = frame?;
        let clock = Instant::now();
        let report = pipeline
            .step(&frame)
            .map_err(|source| AppError::Pipeline { frame: index, source })?;
        let wall_seconds = clock.elapsed().as_secs_f64();
        if index % config.snapshot_stride == 0 {
            sink(Snapshot::capture(index, frame.timestamp, frame.pose, pipeline.map()))?;
        }
        records.push(FrameRecord {
            index,
            timestamp: frame.timestamp,
            wall_seconds,
            particles: report.particles,
            births: report.births,
            leaked_mass: report.leaked_mass,
            shift: report.shift,
            stages: report.timings,
        });
    }
    Ok(records)
}

fn snapshot_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("snapshots")
}

/// Filters a measurement log into `out_dir/snapshots/` and writes
/// `out_dir/manifest.json`.
pub fn cmd_map(config_file: &Path, log_file: &Path, out_dir: &Path) -> Result<Manifest, AppError> {
    let text = read_text(config_file)?;
    let config = RunConfig::from_toml_str(&text).map_err(|source| AppError::Config {
        path: config_file.to_path_buf(),
        source,
    })?;

    let snap_dir = snapshot_dir(out_dir);
    fs::create_dir_all(&snap_dir).map_err(io_err(&snap_dir))?;
    for entry in fs::read_dir(&snap_dir).map_err(io_err(&snap_dir))? {
        let path = entry.map_err(io_err(&snap_dir))?.path();
        if is_snapshot_file(&path) {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
    }

    let reader = File::open(log_file).map_err(io_err(log_file))?;
    let format_err = |source| AppError::Format {
        path: log_file.to_path_buf(),
        source,
    };
    let frames = LogReader::new(BufReader::new(reader)).map_err(format_err)?;

    let mut written = Vec::new();
    let records = run_filter(&config, frames.map(|f| f.map_err(format_err)), |snap| {
        let name = Snapshot::file_name(snap.frame);
        let path = snap_dir.join(&name);
        let file = File::create(&path).map_err(io_err(&path))?;
        snap.write(BufWriter::new(file)).map_err(io_err(&path))?;
        written.push(name);
        Ok(())
    })?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: sha256_hex(text.as_bytes()),
        seed: config.seed,
        desk_scale: config.desk_scale,
        particles: config.filter.particles,
        birth_particles: config.filter.birth_particles,
        snapshot_stride: config.snapshot_stride,
        threads: rayon::current_num_threads(),
        frames: records,
        snapshots: written,
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    info!(
        "mapped {} frames, {} snapshots in {}",
        manifest.frames.len(),
        manifest.snapshots.len(),
        out_dir.display()
    );
    Ok(manifest)
}

fn is_snapshot_file(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with("snap_") && n.ends_with(".txt"))
}

/// Reads every snapshot in a directory, ordered by frame index.
pub fn load_snapshots(dir: &Path) -> Result<Vec<Snapshot>, AppError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    paths.retain(|p| is_snapshot_file(p));
    paths.sort();
    let mut snaps = paths
        .iter()
        .map(|p| {
            let file = File::open(p).map_err(io_err(p))?;
            Snapshot::read(BufReader::new(file)).map_err(|source| AppError::Format {
                path: p.clone(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    snaps.sort_by_key(|s| s.frame);
    Ok(snaps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub zeta0: f64,
    pub thresholds: ThresholdGrid,
    /// Snapshots before this frame index are ignored.
    pub first_frame: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            zeta0: 0.5,
            thresholds: ThresholdGrid::Uniform(101),
            first_frame: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub roc_o: RocCurve,
    pub roc_d: RocCurve,
    pub velocity: Vec<VelocityRecord>,
}

/// Snapshots must sit on the scenario's frame clock at a constant stride
/// starting at frame 0 and run to the end of the scenario.
pub fn check_alignment(snapshots: &[Snapshot], scenario: &Scenario) -> Result<(), EvalError> {
    let n = scenario.frame_count();
    if snapshots.is_empty() {
        return Err(EvalError::Alignment("no snapshots".into()));
    }
    let stride = if snapshots.len() > 1 {
        snapshots[1].frame - snapshots[0].frame
    } else {
        n.max(1)
    };
    for (k, s) in snapshots.iter().enumerate() {
        let expected = k * stride;
        if s.frame != expected {
            return Err(EvalError::Alignment(format!(
                "expected frame {expected}, found frame {}",
                s.frame
            )));
        }
        if s.frame >= n {
            return Err(EvalError::Alignment(format!(
                "frame {} is past the scenario's {n} frames",
                s.frame
            )));
        }
        let t = scenario.frame_time(s.frame);
        if (s.time - t).abs() > 1e-9 {
            return Err(EvalError::Alignment(format!(
                "frame {} has time {} but the scenario clock says {t}",
                s.frame, s.time
            )));
        }
    }
    let last = snapshots[snapshots.len() - 1].frame;
    if last + stride < n {
        return Err(EvalError::Alignment(format!(
            "snapshots stop at frame {last}, scenario runs to frame {}",
            n - 1
        )));
    }
    Ok(())
}

/// ROC curves over all evaluated frames and per-frame object velocities.
pub fn evaluate(snapshots: &[Snapshot], scenario: &Scenario, opts: &EvalOptions) -> Result<EvalOutput, EvalError> {
    check_alignment(snapshots, scenario)?;
    let mut o = ScoreSet::default();
    let mut d = ScoreSet::default();
    let mut velocity = Vec::new();
    for snap in snapshots.iter().filter(|s| s.frame >= opts.first_frame) {
        let labels = sim::ground_truth_labels(scenario, snap.time, &snap.spec);
        let cells = snap.to_cells();
        o.add_frame(&cells, &labels, RocKind::Occupied, opts.zeta0);
        d.add_frame(&cells, &labels, RocKind::Dynamic, opts.zeta0);
        for object in scenario.dynamic_objects() {
            let members = sim::object_cells(object, snap.time, &snap.spec);
            if let Ok(v) = eval::object_velocity(&cells, &members) {
                velocity.push(VelocityRecord::new(snap.time, &object.id, v, object.velocity()));
            }
        }
    }
    Ok(EvalOutput {
        roc_o: o.roc(opts.thresholds)?,
        roc_d: d.roc(opts.thresholds)?,
        velocity,
    })
}

fn write_csv(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), AppError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    body(&mut out).and_then(|_| out.flush()).map_err(io_err(path))
}

/// Writes roc.csv, velocity.csv and summary.csv into `out_dir`.
pub fn cmd_eval(
    snapshot_dir: &Path,
    scenario_file: &Path,
    out_dir: &Path,
    opts: &EvalOptions,
) -> Result<EvalOutput, AppError> {
    let scenario = load_scenario(scenario_file)?;
    let snapshots = load_snapshots(snapshot_dir)?;
    let result = evaluate(&snapshots, &scenario, opts)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_csv(&out_dir.join("roc.csv"), |w| {
        eval::write_roc_csv(
            w,
            &[(RocKind::Occupied, &result.roc_o), (RocKind::Dynamic, &result.roc_d)],
        )
    })?;
    write_csv(&out_dir.join("velocity.csv"), |w| {
        eval::write_velocity_csv(w, &result.velocity)
    })?;
    write_csv(&out_dir.join("summary.csv"), |w| {
        eval::write_summary_csv(w, result.roc_o.auc, result.roc_d.auc)
    })?;
    info!("AUC O {:.4}, AUC D {:.4}", result.roc_o.auc, result.roc_d.auc);
    Ok(result)
}

/// Writes the occupied cells of a snapshot as an ASCII PLY point cloud:
/// dynamic cells blue, static cells green. Returns the point count.
pub fn export_voxels(snapshot: &Snapshot, th: Thresholds, mut out: impl Write) -> std::io::Result<usize> {
    let points: Vec<_> = snapshot
        .to_cells()
        .iter()
        .enumerate()
        .filter_map(|(c, cell)| match classify_cell(cell, th) {
            CellLabel::DynamicOccupied => Some((c, true)),
            CellLabel::Occupied => Some((c, false)),
            _ => None,
        })
        .collect();
    write!(
        out,
        "ply\nformat ascii 1.0\ncomment cells classified at zeta0={} zeta1={} zeta2={}\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nproperty uchar dynamic\nend_header\n",
        th.zeta0,
        th.zeta1,
        th.zeta2,
        points.len()
    )?;
    for &(c, dynamic) in &points {
        let p = snapshot.spec.flat_center(c);
        let (r, g, b) = if dynamic { (0, 0, 255) } else { (0, 255, 0) };
        writeln!(out, "{} {} {} {r} {g} {b} {}", p.x, p.y, p.z, u8::from(dynamic))?;
    }
    out.flush()?;
    Ok(points.len())
}

pub fn cmd_export_voxels(snapshot_file: &Path, th: Thresholds, out: &Path) -> Result<usize, AppError> {
    let file = File::open(snapshot_file).map_err(io_err(snapshot_file))?;
    let snapshot = Snapshot::read(BufReader::new(file)).map_err(|source| AppError::Format {
        path: snapshot_file.to_path_buf(),
        source,
    })?;
    let file = File::create(out).map_err(io_err(out))?;
    export_voxels(&snapshot, th, BufWriter::new(file)).map_err(io_err(out))
}
