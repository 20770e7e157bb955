//! Line-oriented measurement log: a version line, then one frame per line.
//!
//! ```text
//! dsk3dom-log 1
//! frame <t> <tx> <ty> <tz> <qw> <qx> <qy> <qz> <n> (<channel> <azimuth> <hit> <ex> <ey> <ez>){n}
//! ```
//!
//! Ray origins are the pose translation. Numbers use the shortest decimal
//! form that parses back to the same `f64`.

use std::io::{BufRead, Write};

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};

use super::{FormatError, Tokens};
use crate::measurement::{BeamId, MeasurementFrame, Ray};

pub const LOG_MAGIC: &str = "dsk3dom-log";
pub const LOG_VERSION: u32 = 1;

pub(crate) fn write_pose(out: &mut impl Write, pose: &Isometry3<f64>) -> std::io::Result<()> {
    let t = pose.translation.vector;
    let q = pose.rotation.quaternion();
    write!(out, "{} {} {} {} {} {} {}", t.x, t.y, t.z, q.w, q.i, q.j, q.k)
}

pub(crate) fn read_pose(tok: &mut Tokens) -> Result<Isometry3<f64>, FormatError> {
    let t = Vector3::new(tok.f64("tx")?, tok.f64("ty")?, tok.f64("tz")?);
    let (w, i, j, k) = (tok.f64("qw")?, tok.f64("qx")?, tok.f64("qy")?, tok.f64("qz")?);
    let q = Quaternion::new(w, i, j, k);
    if (q.norm() - 1.0).abs() > 1e-9 {
        return Err(tok.error(format!("quaternion is not unit length ({})", q.norm())));
    }
    Ok(Isometry3::from_parts(
        Translation3::from(t),
        UnitQuaternion::new_unchecked(q),
    ))
}

pub fn write_log_header(out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{LOG_MAGIC} {LOG_VERSION}")
}

pub fn write_frame(out: &mut impl Write, frame: &MeasurementFrame) -> std::io::Result<()> {
    write!(out, "frame {} ", frame.timestamp)?;
    write_pose(out, &frame.pose)?;
    write!(out, " {}", frame.rays.len())?;
    for r in &frame.rays {
        let e = r.endpoint;
        write!(
            out,
            " {} {} {} {} {} {}",
            r.beam.channel,
            r.beam.azimuth_deg,
            u8::from(r.hit),
            e.x,
            e.y,
            e.z
        )?;
    }
    writeln!(out)
}

pub fn write_log(mut out: impl Write, frames: &[MeasurementFrame]) -> std::io::Result<()> {
    write_log_header(&mut out)?;
    for f in frames {
        write_frame(&mut out, f)?;
    }
    out.flush()
}

fn parse_frame(line: &str, line_no: usize) -> Result<MeasurementFrame, FormatError> {
    let mut tok = Tokens::new(line, line_no);
    tok.keyword("frame")?;
    let timestamp = tok.f64("timestamp")?;
    let pose = read_pose(&mut tok)?;
    let origin = pose.translation.vector;
    let n = tok.usize("ray count")?;
    let mut rays = Vec::with_capacity(n);
    for _ in 0..n {
        let channel = tok.parse::<u16>("channel")?;
        let azimuth_deg = tok.f64("azimuth")?;
        let hit = match tok.next("hit flag")? {
            "0" => false,
            "1" => true,
            other => return Err(tok.error(format!("hit flag must be 0 or 1, got '{other}'"))),
        };
        let endpoint = Vector3::new(tok.f64("ex")?, tok.f64("ey")?, tok.f64("ez")?);
        if endpoint == origin {
            return Err(tok.error("ray endpoint equals its origin".into()));
        }
        rays.push(Ray::new(origin, endpoint, hit).with_beam(BeamId {
            channel,
            azimuth_deg,
        }));
    }
    tok.finish()?;
    Ok(MeasurementFrame {
        timestamp,
        pose,
        rays,
    })
}

/// Streams frames out of a log; the header is checked on construction.
pub struct LogReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(input: R) -> Result<Self, FormatError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| FormatError::at(1, "empty log".into()))??;
        super::check_header(&header, LOG_MAGIC, LOG_VERSION, 1)?;
        Ok(LogReader { lines, line_no: 1 })
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<MeasurementFrame, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_frame(&line, self.line_no));
        }
    }
}

pub fn read_log(input: impl BufRead) -> Result<Vec<MeasurementFrame>, FormatError> {
    LogReader::new(input)?.collect()
}
