//! Latency and frame-rate measurement from echoed client timestamps.
//!
//! The client clock is the only time authority: RTL is the receive time minus
//! the echoed pose timestamp, and frame rate comes from inter-arrival gaps of
//! received frames.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Mutex, MutexGuard};

use thiserror::Error;

use crate::protocol::ViewpointLabel;

pub const DEFAULT_FPS_WINDOW_MS: u64 = 500;
pub const CSV_HEADER: &str = "label,receive_time_ms,echoed_timestamp_ms,rtl_ms,render_time_ms";
pub const FPS_NOTE: &str =
    "fps_per_label counts frames of a single viewpoint stream; combined_fps sums all viewpoint streams";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("clock skew: frame received at {receive_time_ms} ms echoes future timestamp {echoed_timestamp_ms} ms")]
    ClockSkew { receive_time_ms: u64, echoed_timestamp_ms: u64 },
    #[error("need at least 2 frames for label {label}, have {have}")]
    InsufficientData { label: ViewpointLabel, have: usize },
    #[error("metrics log is empty")]
    EmptyLog,
    #[error("csv line {line}: {message}")]
    Import { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSample {
    pub label: ViewpointLabel,
    pub receive_time_ms: u64,
    pub echoed_timestamp_ms: u64,
    pub render_time_ms: f32,
}

impl FrameSample {
    pub fn rtl_ms(&self) -> u64 {
        self.receive_time_ms.saturating_sub(self.echoed_timestamp_ms)
    }

    pub fn render_fraction(&self) -> f64 {
        match self.rtl_ms() {
            0 => 0.0,
            rtl => (f64::from(self.render_time_ms) / rtl as f64).clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogSnapshot {
    /// Accepted samples in append order.
    pub samples: Vec<FrameSample>,
    pub quarantined: Vec<FrameSample>,
    pub poses_sent: BTreeMap<ViewpointLabel, u64>,
}

impl LogSnapshot {
    pub fn labels(&self) -> Vec<ViewpointLabel> {
        let mut labels: Vec<_> = self.samples.iter().map(|s| s.label).chain(self.poses_sent.keys().copied()).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    pub fn for_label(&self, label: ViewpointLabel) -> impl Iterator<Item = &FrameSample> {
        self.samples.iter().filter(move |s| s.label == label)
    }
}

/// Append-only measurement log, safe to share between the send and receive
/// paths.
#[derive(Debug, Default)]
pub struct MetricsLog {
    inner: Mutex<LogSnapshot>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_snapshot(snapshot: LogSnapshot) -> Self {
        Self { inner: Mutex::new(snapshot) }
    }

    fn lock(&self) -> MutexGuard<'_, LogSnapshot> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Appends a sample and returns its RTL. Samples echoing a timestamp from
    /// the future are quarantined and reported as [`MetricsError::ClockSkew`].
    pub fn record_frame(&self, sample: FrameSample) -> Result<u64, MetricsError> {
        let mut log = self.lock();
        if sample.receive_time_ms < sample.echoed_timestamp_ms {
            log.quarantined.push(sample);
            log::warn!(
                "event=clock_skew label={} receive_ms={} echoed_ms={}",
                sample.label,
                sample.receive_time_ms,
                sample.echoed_timestamp_ms
            );
            return Err(MetricsError::ClockSkew {
                receive_time_ms: sample.receive_time_ms,
                echoed_timestamp_ms: sample.echoed_timestamp_ms,
            });
        }
        log.samples.push(sample);
        Ok(sample.rtl_ms())
    }

    pub fn record_pose_sent(&self, label: ViewpointLabel) {
        *self.lock().poses_sent.entry(label).or_default() += 1;
    }

    pub fn snapshot(&self) -> LogSnapshot {
        self.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.lock().samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpsPoint {
    pub t_ms: u64,
    /// `1000 / gap`; infinite for two frames in the same millisecond.
    pub instantaneous_fps: f64,
    /// Frames per second over the gaps ending in `(t − window, t]`.
    pub windowed_fps: f64,
}

fn rate(gaps: u64, total_ms: u64) -> f64 {
    if total_ms == 0 {
        f64::INFINITY
    } else {
        1000.0 * gaps as f64 / total_ms as f64
    }
}

/// Frame-rate series for one label, one point per frame after the first.
///
/// The windowed value averages the inter-arrival gaps inside the window and
/// converts the mean gap to a rate, so bursts of back-to-back frames cannot
/// produce unbounded values as long as the window also spans a real gap.
pub fn frame_rate(log: &LogSnapshot, label: ViewpointLabel, window_ms: u64) -> Result<Vec<FpsPoint>, MetricsError> {
    let times: Vec<u64> = {
        let mut t: Vec<u64> = log.for_label(label).map(|s| s.receive_time_ms).collect();
        t.sort_unstable();
        t
    };
    if times.len() < 2 {
        return Err(MetricsError::InsufficientData { label, have: times.len() });
    }
    let mut out = Vec::with_capacity(times.len() - 1);
    let mut first = 1usize; // index of the oldest gap end inside the window
    for i in 1..times.len() {
        let t = times[i];
        while first < i && times[first] + window_ms <= t {
            first += 1;
        }
        let gaps = (i - first + 1) as u64;
        let span = t - times[first - 1];
        out.push(FpsPoint { t_ms: t, instantaneous_fps: rate(1, t - times[i - 1]), windowed_fps: rate(gaps, span) });
    }
    Ok(out)
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[u64], pct: f64) -> u64 {
    assert!(!sorted.is_empty());
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtlStats {
    pub mean_ms: f64,
    pub min_ms: u64,
    pub max_ms: u64,
    pub p50_ms: u64,
    pub p95_ms: u64,
}

impl RtlStats {
    fn from_values(mut v: Vec<u64>) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        v.sort_unstable();
        Some(Self {
            mean_ms: v.iter().sum::<u64>() as f64 / v.len() as f64,
            min_ms: v[0],
            max_ms: v[v.len() - 1],
            p50_ms: nearest_rank(&v, 50.0),
            p95_ms: nearest_rank(&v, 95.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSummary {
    pub sample_count: usize,
    pub rtl: Option<RtlStats>,
    pub mean_render_time_ms: f64,
    /// Mean render time over mean RTL.
    pub render_fraction: f64,
    pub poses_sent: u64,
    /// Poses that never produced a received frame.
    pub dropped_pose_count: u64,
}

impl StreamSummary {
    fn build<'a>(samples: impl Iterator<Item = &'a FrameSample>, poses_sent: u64) -> Self {
        let mut samples: Vec<_> = samples.collect();
        // canonical order keeps float sums independent of append order
        samples.sort_by_key(|s| (s.receive_time_ms, s.echoed_timestamp_ms, s.label, s.render_time_ms.to_bits()));
        let rtl = RtlStats::from_values(samples.iter().map(|s| s.rtl_ms()).collect());
        let mean_render_time_ms = if samples.is_empty() {
            0.0
        } else {
            samples.iter().map(|s| f64::from(s.render_time_ms)).sum::<f64>() / samples.len() as f64
        };
        let render_fraction = match rtl {
            Some(r) if r.mean_ms > 0.0 => (mean_render_time_ms / r.mean_ms).clamp(0.0, 1.0),
            _ => 0.0,
        };
        Self {
            sample_count: samples.len(),
            rtl,
            mean_render_time_ms,
            render_fraction,
            poses_sent,
            dropped_pose_count: poses_sent.saturating_sub(samples.len() as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSummary {
    pub label: ViewpointLabel,
    pub stream: StreamSummary,
    /// Frames per second of this viewpoint stream over its receive span.
    pub mean_fps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub per_label: Vec<LabelSummary>,
    pub aggregate: StreamSummary,
    /// Mean of the per-label frame rates.
    pub fps_per_label: f64,
    /// Sum of the per-label frame rates.
    pub combined_fps: f64,
}

impl MetricsSummary {
    pub fn label(&self, label: ViewpointLabel) -> Option<&LabelSummary> {
        self.per_label.iter().find(|l| l.label == label)
    }
}

/// Mean frame rate over the receive span of one label's samples.
pub fn mean_fps<'a>(samples: impl Iterator<Item = &'a FrameSample>) -> f64 {
    let (mut n, mut lo, mut hi) = (0u64, u64::MAX, 0u64);
    for s in samples {
        n += 1;
        lo = lo.min(s.receive_time_ms);
        hi = hi.max(s.receive_time_ms);
    }
    if n < 2 || hi == lo {
        0.0
    } else {
        1000.0 * (n - 1) as f64 / (hi - lo) as f64
    }
}

pub fn summarize(log: &LogSnapshot) -> Result<MetricsSummary, MetricsError> {
    if log.samples.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let per_label: Vec<LabelSummary> = log
        .labels()
        .into_iter()
        .map(|label| LabelSummary {
            label,
            stream: StreamSummary::build(log.for_label(label), log.poses_sent.get(&label).copied().unwrap_or(0)),
            mean_fps: mean_fps(log.for_label(label)),
        })
        .collect();
    let aggregate = StreamSummary::build(log.samples.iter(), log.poses_sent.values().sum());
    let combined_fps: f64 = per_label.iter().map(|l| l.mean_fps).sum();
    let fps_per_label = combined_fps / per_label.len() as f64;
    Ok(MetricsSummary { per_label, aggregate, fps_per_label, combined_fps })
}

/// Pose age at display time when poses are extrapolated `horizon_ms` ahead:
/// `rtl − horizon`, as (mean, p95 of absolute value).
pub fn pose_age_stats(log: &LogSnapshot, horizon_ms: u64) -> Option<(f64, u64)> {
    if log.samples.is_empty() {
        return None;
    }
    let ages: Vec<i64> = log.samples.iter().map(|s| s.rtl_ms() as i64 - horizon_ms as i64).collect();
    let mean = ages.iter().sum::<i64>() as f64 / ages.len() as f64;
    let mut abs: Vec<u64> = ages.iter().map(|a| a.unsigned_abs()).collect();
    abs.sort_unstable();
    Some((mean, nearest_rank(&abs, 95.0)))
}

/// CSV rows for all samples, or only those of `label`.
pub fn export_csv(log: &LogSnapshot, label: Option<ViewpointLabel>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in log.samples.iter().filter(|s| label.is_none_or(|l| l == s.label)) {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.label,
            s.receive_time_ms,
            s.echoed_timestamp_ms,
            s.rtl_ms(),
            s.render_time_ms
        );
    }
    out
}

pub fn import_csv(text: &str) -> Result<Vec<FrameSample>, MetricsError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header_ok = reader.headers().map(|h| h.iter().collect::<Vec<_>>().join(",") == CSV_HEADER).unwrap_or(false);
    if !header_ok {
        return Err(MetricsError::Import { line: 1, message: format!("expected header `{CSV_HEADER}`") });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| MetricsError::Import { line, message: e.to_string() })?;
        let field = |k: usize| rec.get(k).ok_or(MetricsError::Import { line, message: format!("missing column {k}") });
        let bad = |k: usize| MetricsError::Import { line, message: format!("bad value in column {k}") };
        let sample = FrameSample {
            label: field(0)?.parse().map_err(|_| bad(0))?,
            receive_time_ms: field(1)?.parse().map_err(|_| bad(1))?,
            echoed_timestamp_ms: field(2)?.parse().map_err(|_| bad(2))?,
            render_time_ms: field(4)?.parse().map_err(|_| bad(4))?,
        };
        let rtl: u64 = field(3)?.parse().map_err(|_| bad(3))?;
        if rtl != sample.rtl_ms() {
            return Err(MetricsError::Import { line, message: "rtl_ms disagrees with timestamps".into() });
        }
        out.push(sample);
    }
    Ok(out)
}

fn write_stream(out: &mut String, prefix: &str, s: &StreamSummary) {
    let _ = writeln!(out, "{prefix}.samples={}", s.sample_count);
    let _ = writeln!(out, "{prefix}.poses_sent={}", s.poses_sent);
    let _ = writeln!(out, "{prefix}.dropped_poses={}", s.dropped_pose_count);
    if let Some(r) = &s.rtl {
        let _ = writeln!(out, "{prefix}.rtl_mean_ms={:.3}", r.mean_ms);
        let _ = writeln!(out, "{prefix}.rtl_min_ms={}", r.min_ms);
        let _ = writeln!(out, "{prefix}.rtl_p50_ms={}", r.p50_ms);
        let _ = writeln!(out, "{prefix}.rtl_p95_ms={}", r.p95_ms);
        let _ = writeln!(out, "{prefix}.rtl_max_ms={}", r.max_ms);
    }
    let _ = writeln!(out, "{prefix}.render_time_mean_ms={:.3}", s.mean_render_time_ms);
    let _ = writeln!(out, "{prefix}.render_fraction={:.4}", s.render_fraction);
}

/// `key=value` summary footer. The fps ambiguity note is written as a
/// leading comment line.
pub fn summary_footer(summary: &MetricsSummary) -> String {
    let mut out = format!("# {FPS_NOTE}\n");
    for l in &summary.per_label {
        let prefix = format!("label.{}", l.label);
        write_stream(&mut out, &prefix, &l.stream);
        let _ = writeln!(out, "{prefix}.fps={:.3}", l.mean_fps);
    }
    write_stream(&mut out, "aggregate", &summary.aggregate);
    let _ = writeln!(out, "aggregate.fps_per_label={:.3}", summary.fps_per_label);
    let _ = writeln!(out, "aggregate.combined_fps={:.3}", summary.combined_fps);
    out
}

/// Recovers the per-label sent-pose counts from a summary footer.
pub fn poses_sent_from_footer(footer: &str) -> BTreeMap<ViewpointLabel, u64> {
    footer
        .lines()
        .filter_map(|line| {
            let (key, value) = line.split_once('=')?;
            let label = key.strip_prefix("label.")?.strip_suffix(".poses_sent")?;
            Some((label.parse().ok()?, value.trim().parse().ok()?))
        })
        .collect()
}

/// Rebuilds a snapshot from exported CSV files plus the summary footer.
pub fn import_log(csvs: &[&str], footer: &str) -> Result<LogSnapshot, MetricsError> {
    let mut samples = Vec::new();
    for csv in csvs {
        samples.extend(import_csv(csv)?);
    }
    Ok(LogSnapshot { samples, quarantined: Vec::new(), poses_sent: poses_sent_from_footer(footer) })
}
