//! Headless client: streams per-viewpoint poses sampled from a head-motion
//! trace and records every returned frame into a [`MetricsLog`].

mod predict;
mod trace;

use std::collections::BTreeMap;
use std::io::{self, BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::clock::MonotonicClock;
use crate::geometry::{stereo_eye_poses, CameraIntrinsics, Pose, StereoRig};
use crate::metrics::{FrameSample, LogSnapshot, MetricsLog};
use crate::netsim::{DelayLine, Direction, NetworkProfile, ProfileError};
use crate::protocol::{
    encode_message, read_message, FramePacket, HelloMessage, ImageEncoding, Message, PosePacket, ReadError,
    ViewpointLabel,
};
use crate::renderer::RenderedImage;

pub use predict::{predict_pose, Predictor};
pub use trace::{Trace, TraceEntry, TraceError, TRACE_HEADER};

pub const LEFT_EYE: ViewpointLabel = 0;
pub const RIGHT_EYE: ViewpointLabel = 1;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid client config: {0}")]
    Config(String),
    #[error("connection failed: {0}")]
    Connect(#[from] io::Error),
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error(transparent)]
    Network(#[from] ProfileError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub pose_rate_hz: f64,
    pub ipd_m: f64,
    pub predictor: Predictor,
    pub prediction_horizon_ms: f64,
    pub viewpoint_labels: Vec<ViewpointLabel>,
    /// Replay length; defaults to the trace span.
    pub duration_ms: Option<u64>,
    /// Interval between PING heartbeats; `None` disables them.
    pub heartbeat_ms: Option<u64>,
    /// How long to keep receiving after the last pose is sent.
    pub drain_ms: u64,
    /// Client-side network emulation for both directions.
    pub network: NetworkProfile,
    /// Writes every received frame as a numbered image file.
    pub frame_dump_dir: Option<PathBuf>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            pose_rate_hz: 60.0,
            ipd_m: 0.064,
            predictor: Predictor::None,
            prediction_horizon_ms: 0.0,
            viewpoint_labels: vec![LEFT_EYE, RIGHT_EYE],
            duration_ms: None,
            heartbeat_ms: Some(5000),
            drain_ms: 1000,
            network: NetworkProfile::default(),
            frame_dump_dir: None,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        let bad = |m: String| Err(ClientError::Config(m));
        if !(self.pose_rate_hz > 0.0 && self.pose_rate_hz <= 1000.0) {
            return bad(format!("pose_rate_hz {} outside (0, 1000]", self.pose_rate_hz));
        }
        if !(self.prediction_horizon_ms >= 0.0 && self.prediction_horizon_ms.is_finite()) {
            return bad(format!("prediction_horizon_ms {} must be >= 0", self.prediction_horizon_ms));
        }
        if !(0.0..0.2).contains(&self.ipd_m) {
            return bad(format!("ipd_m {} outside [0, 0.2)", self.ipd_m));
        }
        if self.viewpoint_labels.is_empty() {
            return bad("at least one viewpoint label is required".into());
        }
        let mut labels = self.viewpoint_labels.clone();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.viewpoint_labels.len() {
            return bad("viewpoint labels must be unique".into());
        }
        self.network.validate()?;
        Ok(())
    }

    /// Horizon actually applied to the head pose.
    pub fn effective_horizon_ms(&self) -> f64 {
        match self.predictor {
            Predictor::None => 0.0,
            Predictor::ConstantVelocity => self.prediction_horizon_ms,
        }
    }
}

/// Tick `k` fires at `floor(k·1000/rate)` ms; ticks run while that is below
/// `duration_ms`.
pub fn tick_times(pose_rate_hz: f64, duration_ms: u64) -> impl Iterator<Item = u64> {
    let period = 1000.0 / pose_rate_hz;
    (0u64..).map(move |k| (k as f64 * period).floor() as u64).take_while(move |t| *t < duration_ms)
}

/// Pose for each requested label. A single-label client is mono and sends
/// the head pose; otherwise label 0 is the left eye, 1 the right eye, and
/// any other label gets the head pose.
pub fn viewpoint_poses(head: &Pose, ipd_m: f64, labels: &[ViewpointLabel]) -> Vec<(ViewpointLabel, Pose)> {
    if labels.len() == 1 {
        return vec![(labels[0], *head)];
    }
    let rig = StereoRig { head_pose: *head, ipd_m };
    let (left, right) = stereo_eye_poses(&rig);
    labels
        .iter()
        .map(|&l| {
            let pose = match l {
                LEFT_EYE => left,
                RIGHT_EYE => right,
                _ => *head,
            };
            (l, pose)
        })
        .collect()
}

/// Samples the trace and keeps the short history the predictor needs.
#[derive(Debug, Clone)]
pub struct PoseSource<'a> {
    trace: &'a Trace,
    history: Vec<(f64, Pose)>,
    horizon_ms: f64,
}

impl<'a> PoseSource<'a> {
    pub fn new(trace: &'a Trace, horizon_ms: f64) -> Self {
        Self { trace, history: Vec::with_capacity(2), horizon_ms }
    }

    /// Head pose to send at `t_ms`, extrapolated when a horizon is set.
    pub fn head_at(&mut self, t_ms: f64) -> Pose {
        let pose = self.trace.sample(t_ms);
        if self.history.len() == 2 {
            self.history.remove(0);
        }
        self.history.push((t_ms, pose));
        if self.horizon_ms > 0.0 {
            predict_pose(&self.history, self.horizon_ms)
        } else {
            pose
        }
    }
}

/// TCP connection that has completed the HELLO / INTRINSICS handshake.
pub struct ClientConnection {
    stream: TcpStream,
    reader: BufReader<TcpStream>,
    pub intrinsics: BTreeMap<ViewpointLabel, CameraIntrinsics>,
}

impl ClientConnection {
    pub fn connect(
        addr: impl ToSocketAddrs,
        client_id: &str,
        labels: &[ViewpointLabel],
        timeout: Duration,
    ) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let hello = Message::Hello(HelloMessage { client_id: client_id.to_owned(), viewpoint_labels: labels.to_vec() });
        let bytes = encode_message(&hello).map_err(|e| ClientError::Handshake(e.to_string()))?;
        (&stream).write_all(&bytes)?;
        stream.set_read_timeout(Some(timeout))?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut intrinsics = BTreeMap::new();
        while intrinsics.len() < labels.len() {
            match read_message(&mut reader)? {
                Some(Message::Intrinsics(m)) if labels.contains(&m.viewpoint_label) => {
                    intrinsics.insert(m.viewpoint_label, m.intrinsics);
                }
                Some(other) => {
                    return Err(ClientError::Handshake(format!(
                        "unexpected {:?} during handshake",
                        other.message_type()
                    )))
                }
                None => return Err(ClientError::Handshake("server closed the connection".into())),
            }
        }
        stream.set_read_timeout(None)?;
        Ok(Self { stream, reader, intrinsics })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    Completed,
    ConnectionLost(String),
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub log: LogSnapshot,
    pub termination: Termination,
    pub ticks: u64,
    pub pongs: u64,
}

fn dump_frame(dir: &std::path::Path, seq: u64, frame: &FramePacket) -> io::Result<()> {
    let (name, bytes) = match frame.encoding {
        ImageEncoding::RawRgb8 => {
            let img = RenderedImage {
                width_px: frame.width_px,
                height_px: frame.height_px,
                pixels: frame.image.clone(),
                render_time_ms: frame.render_time_ms,
            };
            (format!("frame_{}_{seq:06}.ppm", frame.viewpoint_label), img.to_ppm())
        }
        ImageEncoding::Png => (format!("frame_{}_{seq:06}.png", frame.viewpoint_label), frame.image.clone()),
    };
    std::fs::write(dir.join(name), bytes)
}

struct FrameRecorder {
    log: Arc<MetricsLog>,
    clock: MonotonicClock,
    dump_dir: Option<PathBuf>,
    seq: u64,
}

impl FrameRecorder {
    fn record(&mut self, frame: &FramePacket) {
        let sample = FrameSample {
            label: frame.viewpoint_label,
            receive_time_ms: self.clock.now_ms(),
            echoed_timestamp_ms: frame.echoed_timestamp_ms,
            render_time_ms: frame.render_time_ms,
        };
        let _ = self.log.record_frame(sample);
        if let Some(dir) = &self.dump_dir {
            if let Err(e) = dump_frame(dir, self.seq, frame) {
                log::warn!("event=frame_dump_failed error=\"{e}\"");
            }
        }
        self.seq += 1;
    }
}

/// Replays `trace` against a connected server for the configured duration.
///
/// Each tick samples the trace, derives one pose per viewpoint, stamps the
/// current client clock and sends one [`PosePacket`] per label. Frames are
/// recorded on a background thread as they arrive. A lost connection ends
/// the run early and the partial log is returned.
pub fn run_replay(config: &ClientConfig, trace: &Trace, conn: ClientConnection) -> Result<ReplayOutcome, ClientError> {
    config.validate()?;
    let clock = MonotonicClock::new();
    let log = Arc::new(MetricsLog::new());
    let lost: Arc<Mutex<Option<String>>> = Arc::new(Mutex::new(None));
    let finished = Arc::new(AtomicBool::new(false));
    let pongs = Arc::new(std::sync::atomic::AtomicU64::new(0));
    let ClientConnection { stream, mut reader, .. } = conn;
    let emulate = !config.network.is_transparent();

    let mut recorder = FrameRecorder { log: Arc::clone(&log), clock, dump_dir: config.frame_dump_dir.clone(), seq: 0 };
    if let Some(dir) = &recorder.dump_dir {
        std::fs::create_dir_all(dir).map_err(ClientError::Connect)?;
    }

    let downlink: Option<Arc<DelayLine<FramePacket>>> = if emulate {
        let rec = Mutex::new(recorder);
        let line = DelayLine::spawn(config.network, Direction::Downlink, clock, move |frame: FramePacket| {
            rec.lock().unwrap_or_else(|e| e.into_inner()).record(&frame);
            true
        })?;
        recorder = FrameRecorder { log: Arc::clone(&log), clock, dump_dir: None, seq: 0 };
        Some(Arc::new(line))
    } else {
        None
    };

    let receiver = {
        let lost = Arc::clone(&lost);
        let finished = Arc::clone(&finished);
        let pongs = Arc::clone(&pongs);
        let downlink = downlink.clone();
        thread::Builder::new()
            .name("client-recv".into())
            .spawn(move || loop {
                match read_message(&mut reader) {
                    Ok(Some(Message::Frame(frame))) => match &downlink {
                        Some(line) => {
                            line.submit(frame);
                        }
                        None => recorder.record(&frame),
                    },
                    Ok(Some(Message::Pong { .. })) => {
                        pongs.fetch_add(1, Ordering::Relaxed);
                    }
                    Ok(Some(other)) => log::debug!("event=unexpected_message type={:?}", other.message_type()),
                    Ok(None) => {
                        if !finished.load(Ordering::Acquire) {
                            *lost.lock().unwrap_or_else(|e| e.into_inner()) =
                                Some("server closed the connection".into());
                        }
                        return;
                    }
                    Err(e) => {
                        if !finished.load(Ordering::Acquire) {
                            *lost.lock().unwrap_or_else(|e| e.into_inner()) = Some(e.to_string());
                        }
                        return;
                    }
                }
            })
            .expect("spawn receiver")
    };

    let writer = Arc::new(Mutex::new(stream.try_clone().map_err(ClientError::Connect)?));
    let write_direct = {
        let writer = Arc::clone(&writer);
        move |bytes: &[u8]| writer.lock().unwrap_or_else(|e| e.into_inner()).write_all(bytes)
    };
    let write_failed = Arc::new(Mutex::new(None::<String>));
    let uplink: Option<DelayLine<Vec<u8>>> = if emulate {
        let writer = Arc::clone(&writer);
        let failed = Arc::clone(&write_failed);
        Some(DelayLine::spawn(config.network, Direction::Uplink, clock, move |bytes: Vec<u8>| {
            match writer.lock().unwrap_or_else(|e| e.into_inner()).write_all(&bytes) {
                Ok(()) => true,
                Err(e) => {
                    *failed.lock().unwrap_or_else(|e| e.into_inner()) = Some(e.to_string());
                    false
                }
            }
        })?)
    } else {
        None
    };
    let send = |msg: &Message| -> Result<(), String> {
        let bytes = encode_message(msg).map_err(|e| e.to_string())?;
        match &uplink {
            Some(line) => {
                line.submit(bytes);
                match write_failed.lock().unwrap_or_else(|e| e.into_inner()).clone() {
                    Some(e) => Err(e),
                    None => Ok(()),
                }
            }
            None => write_direct(&bytes).map_err(|e| e.to_string()),
        }
    };

    let duration = config.duration_ms.unwrap_or_else(|| trace.duration_ms());
    let mut source = PoseSource::new(trace, config.effective_horizon_ms());
    let mut last_ts: BTreeMap<ViewpointLabel, u64> = BTreeMap::new();
    let mut ticks = 0u64;
    let mut next_ping = config.heartbeat_ms;
    let mut nonce = 0u64;
    let mut termination = Termination::Completed;
    'ticks: for t in tick_times(config.pose_rate_hz, duration) {
        clock.sleep_until(t);
        if let Some(reason) = lost.lock().unwrap_or_else(|e| e.into_inner()).clone() {
            termination = Termination::ConnectionLost(reason);
            break;
        }
        let head = source.head_at(t as f64);
        for (label, pose) in viewpoint_poses(&head, config.ipd_m, &config.viewpoint_labels) {
            let now = clock.now_ms();
            let ts = match last_ts.get(&label) {
                Some(prev) if *prev >= now => prev + 1,
                _ => now,
            };
            last_ts.insert(label, ts);
            if let Err(e) = send(&Message::Pose(PosePacket::new(label, ts, &pose))) {
                termination = Termination::ConnectionLost(e);
                break 'ticks;
            }
            log.record_pose_sent(label);
        }
        ticks += 1;
        if let (Some(period), Some(due)) = (config.heartbeat_ms, next_ping) {
            if t >= due {
                nonce += 1;
                if let Err(e) = send(&Message::Ping { nonce }) {
                    termination = Termination::ConnectionLost(e);
                    break;
                }
                next_ping = Some(due + period);
            }
        }
    }

    if termination == Termination::Completed {
        thread::sleep(Duration::from_millis(config.drain_ms));
        if let Some(reason) = lost.lock().unwrap_or_else(|e| e.into_inner()).clone() {
            termination = Termination::ConnectionLost(reason);
        }
    }
    if let Some(line) = &uplink {
        line.shutdown();
    }
    finished.store(true, Ordering::Release);
    let _ = stream.shutdown(Shutdown::Both);
    let _ = receiver.join();
    if let Some(line) = downlink {
        line.shutdown();
    }
    Ok(ReplayOutcome { log: log.snapshot(), termination, ticks, pongs: pongs.load(Ordering::Relaxed) })
}
