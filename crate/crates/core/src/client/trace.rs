//! Recorded head-motion traces.
//!
//! CSV with header `t_ms,tx,ty,tz,qx,qy,qz,qw`: unit quaternion rotation and
//! translation in meters, timestamps strictly increasing.

use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};

pub const TRACE_HEADER: [&str; 8] = ["t_ms", "tx", "ty", "tz", "qx", "qy", "qz", "qw"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("trace is empty")]
    Empty,
    #[error("trace entry {index}: timestamps must be strictly increasing")]
    Unordered { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub t_ms: u64,
    pub head_pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn new(entries: Vec<TraceEntry>) -> Result<Self, TraceError> {
        if entries.is_empty() {
            return Err(TraceError::Empty);
        }
        if let Some(i) = entries.windows(2).position(|w| w[1].t_ms <= w[0].t_ms) {
            return Err(TraceError::Unordered { index: i + 1 });
        }
        Ok(Self { entries })
    }

    /// A single pose held for `duration_ms`.
    pub fn stationary(pose: Pose, duration_ms: u64) -> Self {
        let mut entries = vec![TraceEntry { t_ms: 0, head_pose: pose }];
        if duration_ms > 0 {
            entries.push(TraceEntry { t_ms: duration_ms, head_pose: pose });
        }
        Self { entries }
    }

    /// Samples `f` every `step_ms` over `[0, duration_ms]`.
    pub fn from_fn(duration_ms: u64, step_ms: u64, f: impl Fn(f64) -> Pose) -> Self {
        let step = step_ms.max(1);
        let mut entries: Vec<TraceEntry> =
            (0..=duration_ms / step).map(|k| TraceEntry { t_ms: k * step, head_pose: f((k * step) as f64) }).collect();
        if entries.last().map(|e| e.t_ms) != Some(duration_ms) {
            entries.push(TraceEntry { t_ms: duration_ms, head_pose: f(duration_ms as f64) });
        }
        Self { entries }
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn start_ms(&self) -> u64 {
        self.entries[0].t_ms
    }

    pub fn duration_ms(&self) -> u64 {
        self.entries[self.entries.len() - 1].t_ms - self.start_ms()
    }

    /// Head pose `offset_ms` after the trace start: linear interpolation of
    /// translation and slerp of rotation, clamped at both ends.
    pub fn sample(&self, offset_ms: f64) -> Pose {
        let t = self.start_ms() as f64 + offset_ms.max(0.0);
        let e = &self.entries;
        let i = e.partition_point(|x| (x.t_ms as f64) <= t);
        if i == 0 {
            return e[0].head_pose;
        }
        if i == e.len() {
            return e[e.len() - 1].head_pose;
        }
        let (a, b) = (&e[i - 1], &e[i]);
        let s = (t - a.t_ms as f64) / (b.t_ms - a.t_ms) as f64;
        if s == 0.0 {
            return a.head_pose;
        }
        let trans = a.head_pose.translation().lerp(b.head_pose.translation(), s);
        let qa = a.head_pose.quaternion();
        let qb = b.head_pose.quaternion();
        let q = qa.try_slerp(&qb, s, 1e-12).unwrap_or(qa);
        Pose::from_parts(&q, trans)
    }

    pub fn parse_csv(text: &str) -> Result<Self, TraceError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| TraceError::Parse { row: 1, message: e.to_string() })?;
        if headers.iter().collect::<Vec<_>>() != TRACE_HEADER {
            return Err(TraceError::Parse { row: 1, message: format!("expected header `{}`", TRACE_HEADER.join(",")) });
        }
        let mut entries = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| TraceError::Parse { row, message: e.to_string() })?;
            if rec.len() != 8 {
                return Err(TraceError::Parse { row, message: format!("expected 8 columns, found {}", rec.len()) });
            }
            let t_ms: u64 =
                rec[0].parse().map_err(|_| TraceError::Parse { row, message: format!("bad t_ms `{}`", &rec[0]) })?;
            let mut v = [0f64; 7];
            for (k, slot) in v.iter_mut().enumerate() {
                let raw = &rec[k + 1];
                *slot = raw.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| TraceError::Parse {
                    row,
                    message: format!("bad {} `{raw}`", TRACE_HEADER[k + 1]),
                })?;
            }
            let q = Quaternion::new(v[6], v[3], v[4], v[5]);
            if (q.norm() - 1.0).abs() > 1e-3 {
                return Err(TraceError::Parse { row, message: format!("quaternion norm {} is not 1", q.norm()) });
            }
            let head_pose = Pose::from_parts(&UnitQuaternion::from_quaternion(q), Vec3::new(v[0], v[1], v[2]));
            entries.push(TraceEntry { t_ms, head_pose });
        }
        Self::new(entries).map_err(|e| match e {
            TraceError::Empty => TraceError::Parse { row: 2, message: "trace has no rows".into() },
            TraceError::Unordered { index } => {
                TraceError::Parse { row: index + 2, message: "timestamps must be strictly increasing".into() }
            }
            other => other,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = TRACE_HEADER.join(",");
        out.push('\n');
        for e in &self.entries {
            let t = e.head_pose.translation();
            let q = e.head_pose.quaternion();
            out.push_str(&format!("{},{},{},{},{},{},{},{}\n", e.t_ms, t.x, t.y, t.z, q.i, q.j, q.k, q.w));
        }
        out
    }
}
