//! Deterministic in-process benchmark.
//!
//! The client, the network, and the server pipeline run on one integer
//! millisecond clock driven by an event queue. Pose buffering uses the real
//! [`Mailbox`], delays come from the real [`DeliveryScheduler`], and render
//! costs from [`PatternRenderer::simulated`], so the same seed always
//! produces the same frame log, byte for byte.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt::Write as _;

use nalgebra::{UnitQuaternion, Vector3};
use thiserror::Error;

use crate::client::{tick_times, viewpoint_poses, PoseSource, Predictor, Trace};
use crate::config::{ConfigError, KvConfig};
use crate::geometry::{Pose, Vec3};
use crate::mailbox::Mailbox;
use crate::metrics::{self, FrameSample, LogSnapshot, MetricsLog, FPS_NOTE};
use crate::netsim::{DeliveryScheduler, Direction, NetworkProfile};
use crate::protocol::{PosePacket, ViewpointLabel};
use crate::renderer::{PatternRenderer, RenderTime};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid bench config: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] ConfigError),
}

/// Synthetic head motion used when no trace is supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    /// Head velocity in m/s.
    pub velocity_mps: [f64; 3],
    /// Rotation rate about +Y in degrees per second.
    pub yaw_rate_dps: f64,
}

impl Default for Motion {
    fn default() -> Self {
        Self { velocity_mps: [0.2, 0.0, 0.0], yaw_rate_dps: 10.0 }
    }
}

impl Motion {
    pub fn pose_at(&self, t_ms: f64) -> Pose {
        let s = t_ms / 1000.0;
        let v = self.velocity_mps;
        let q = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), (self.yaw_rate_dps * s).to_radians());
        Pose::from_parts(&q, Vec3::new(v[0] * s, 1.6 + v[1] * s, 2.0 + v[2] * s))
    }

    /// Trace covering `duration_ms` sampled every 10 ms.
    pub fn trace(&self, duration_ms: u64) -> Trace {
        let m = *self;
        Trace::from_fn(duration_ms, 10, move |t| m.pose_at(t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub duration_ms: u64,
    pub pose_rate_hz: f64,
    pub viewpoint_labels: Vec<ViewpointLabel>,
    pub render: RenderTime,
    pub network: NetworkProfile,
    /// Client heartbeat period; 0 disables it.
    pub ping_period_ms: u64,
    /// Server receive stall while handling a heartbeat.
    pub ping_stall_ms: u64,
    pub predictor: Predictor,
    pub prediction_horizon_ms: f64,
    pub ipd_m: f64,
    pub fps_window_ms: u64,
    /// Frames received before this are excluded from steady-state figures.
    pub warmup_ms: u64,
    /// Seeds both the network jitter and the render-cost draws.
    pub seed: u64,
    pub motion: Motion,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            duration_ms: 10_000,
            pose_rate_hz: 60.0,
            viewpoint_labels: vec![0, 1],
            render: RenderTime::Fixed { ms: 30.0 },
            network: NetworkProfile::default(),
            ping_period_ms: 0,
            ping_stall_ms: 0,
            predictor: Predictor::None,
            prediction_horizon_ms: 0.0,
            ipd_m: 0.064,
            fps_window_ms: metrics::DEFAULT_FPS_WINDOW_MS,
            warmup_ms: 1000,
            seed: 0,
            motion: Motion::default(),
        }
    }
}

pub const BENCH_KEYS: &[&str] = &[
    "duration_ms",
    "pose_rate_hz",
    "labels",
    "render_ms",
    "render_min_ms",
    "render_max_ms",
    "delay_ms",
    "uplink_delay_ms",
    "downlink_delay_ms",
    "jitter_ms",
    "outage_period_ms",
    "outage_duration_ms",
    "drop_during_outage",
    "ping_period_ms",
    "ping_stall_ms",
    "predictor",
    "horizon_ms",
    "ipd_m",
    "fps_window_ms",
    "warmup_ms",
    "seed",
    "velocity_mps",
    "yaw_rate_dps",
];

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, SimError> {
    v.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| SimError::Config(format!("{key}: bad list element {p:?}"))))
        .collect()
}

impl BenchConfig {
    /// Applies recognised keys on top of the defaults. Unknown keys are
    /// rejected.
    pub fn from_kv(kv: &KvConfig) -> Result<Self, SimError> {
        let unknown = kv.unknown_keys(BENCH_KEYS);
        if !unknown.is_empty() {
            return Err(SimError::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        let d = Self::default();
        let mut net = NetworkProfile::default();
        if let Some(v) = kv.get::<u64>("delay_ms")? {
            net.uplink_delay_ms = v;
            net.downlink_delay_ms = v;
        }
        net.uplink_delay_ms = kv.get_or("uplink_delay_ms", net.uplink_delay_ms)?;
        net.downlink_delay_ms = kv.get_or("downlink_delay_ms", net.downlink_delay_ms)?;
        net.jitter_ms = kv.get_or("jitter_ms", 0)?;
        net.outage_period_ms = kv.get_or("outage_period_ms", 0)?;
        net.outage_duration_ms = kv.get_or("outage_duration_ms", 0)?;
        net.drop_during_outage = kv.get_or("drop_during_outage", false)?;
        let render =
            match (kv.get::<f64>("render_ms")?, kv.get::<f64>("render_min_ms")?, kv.get::<f64>("render_max_ms")?) {
                (Some(ms), None, None) => RenderTime::Fixed { ms },
                (None, Some(min_ms), Some(max_ms)) => RenderTime::Uniform { min_ms, max_ms },
                (None, None, None) => d.render,
                _ => return Err(SimError::Config("use either render_ms or render_min_ms + render_max_ms".into())),
            };
        let viewpoint_labels = match kv.get_str("labels") {
            Some(v) => parse_list("labels", v)?,
            None => d.viewpoint_labels,
        };
        let mut motion = d.motion;
        if let Some(v) = kv.get_str("velocity_mps") {
            let xs: Vec<f64> = parse_list("velocity_mps", v)?;
            motion.velocity_mps =
                xs.try_into().map_err(|_| SimError::Config("velocity_mps needs three components".into()))?;
        }
        motion.yaw_rate_dps = kv.get_or("yaw_rate_dps", motion.yaw_rate_dps)?;
        let seed = kv.get_or("seed", d.seed)?;
        net.seed = seed;
        let cfg = Self {
            duration_ms: kv.get_or("duration_ms", d.duration_ms)?,
            pose_rate_hz: kv.get_or("pose_rate_hz", d.pose_rate_hz)?,
            viewpoint_labels,
            render,
            network: net,
            ping_period_ms: kv.get_or("ping_period_ms", d.ping_period_ms)?,
            ping_stall_ms: kv.get_or("ping_stall_ms", d.ping_stall_ms)?,
            predictor: kv.get_or("predictor", d.predictor)?,
            prediction_horizon_ms: kv.get_or("horizon_ms", d.prediction_horizon_ms)?,
            ipd_m: kv.get_or("ipd_m", d.ipd_m)?,
            fps_window_ms: kv.get_or("fps_window_ms", d.fps_window_ms)?,
            warmup_ms: kv.get_or("warmup_ms", d.warmup_ms)?,
            seed,
            motion,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.pose_rate_hz > 0.0 && self.pose_rate_hz <= 1000.0) {
            return bad(format!("pose_rate_hz {} outside (0, 1000]", self.pose_rate_hz));
        }
        if self.duration_ms == 0 {
            return bad("duration_ms must be positive".into());
        }
        if self.viewpoint_labels.is_empty() {
            return bad("labels must not be empty".into());
        }
        let mut l = self.viewpoint_labels.clone();
        l.sort_unstable();
        l.dedup();
        if l.len() != self.viewpoint_labels.len() {
            return bad("labels must be unique".into());
        }
        match self.render {
            RenderTime::Fixed { ms } if ms >= 0.0 && ms.is_finite() => {}
            RenderTime::Uniform { min_ms, max_ms } if min_ms >= 0.0 && max_ms >= min_ms && max_ms.is_finite() => {}
            r => return bad(format!("bad render time {r:?}")),
        }
        if !(self.prediction_horizon_ms >= 0.0 && self.prediction_horizon_ms.is_finite()) {
            return bad("horizon_ms must be >= 0".into());
        }
        if !(0.0..0.2).contains(&self.ipd_m) {
            return bad(format!("ipd_m {} outside [0, 0.2)", self.ipd_m));
        }
        if self.fps_window_ms == 0 {
            return bad("fps_window_ms must be positive".into());
        }
        self.network.validate().map_err(|e| SimError::Config(e.to_string()))
    }

    fn effective_horizon_ms(&self) -> f64 {
        match self.predictor {
            Predictor::None => 0.0,
            Predictor::ConstantVelocity => self.prediction_horizon_ms,
        }
    }

    /// Canonical `key = value` form; parses back to the same config.
    pub fn to_kv_text(&self) -> String {
        let n = &self.network;
        let mut s = String::new();
        let labels: Vec<String> = self.viewpoint_labels.iter().map(|l| l.to_string()).collect();
        let v = self.motion.velocity_mps;
        let _ = writeln!(s, "duration_ms = {}", self.duration_ms);
        let _ = writeln!(s, "pose_rate_hz = {}", self.pose_rate_hz);
        let _ = writeln!(s, "labels = {}", labels.join(","));
        match self.render {
            RenderTime::Fixed { ms } => {
                let _ = writeln!(s, "render_ms = {ms}");
            }
            RenderTime::Uniform { min_ms, max_ms } => {
                let _ = writeln!(s, "render_min_ms = {min_ms}\nrender_max_ms = {max_ms}");
            }
        }
        let _ = writeln!(s, "uplink_delay_ms = {}\ndownlink_delay_ms = {}", n.uplink_delay_ms, n.downlink_delay_ms);
        let _ = writeln!(s, "jitter_ms = {}", n.jitter_ms);
        let _ = writeln!(s, "outage_period_ms = {}\noutage_duration_ms = {}", n.outage_period_ms, n.outage_duration_ms);
        let _ = writeln!(s, "drop_during_outage = {}", n.drop_during_outage);
        let _ = writeln!(s, "ping_period_ms = {}\nping_stall_ms = {}", self.ping_period_ms, self.ping_stall_ms);
        let _ = writeln!(s, "predictor = {}\nhorizon_ms = {}", self.predictor, self.prediction_horizon_ms);
        let _ = writeln!(s, "ipd_m = {}", self.ipd_m);
        let _ = writeln!(s, "fps_window_ms = {}\nwarmup_ms = {}", self.fps_window_ms, self.warmup_ms);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "velocity_mps = {},{},{}\nyaw_rate_dps = {}", v[0], v[1], v[2], self.motion.yaw_rate_dps);
        s
    }
}

/// Timeline of one delivered frame. All times are bench-clock ms.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrace {
    pub label: ViewpointLabel,
    pub pose_timestamp_ms: u64,
    pub server_arrival_ms: u64,
    pub take_ms: u64,
    pub render_ms: u64,
    pub receive_ms: u64,
    /// Head pose the client sent with this timestamp (after prediction).
    pub head_pose: Pose,
}

impl FrameTrace {
    pub fn uplink_ms(&self) -> u64 {
        self.server_arrival_ms - self.pose_timestamp_ms
    }

    pub fn queue_wait_ms(&self) -> u64 {
        self.take_ms - self.server_arrival_ms
    }

    pub fn finish_ms(&self) -> u64 {
        self.take_ms + self.render_ms
    }

    pub fn downlink_ms(&self) -> u64 {
        self.receive_ms - self.finish_ms()
    }

    pub fn rtl_ms(&self) -> u64 {
        self.receive_ms - self.pose_timestamp_ms
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounters {
    pub poses_sent: u64,
    pub poses_arrived: u64,
    pub renders: u64,
    pub overwritten: u64,
    pub frames_lost: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub log: LogSnapshot,
    /// Frames in receive order.
    pub frames: Vec<FrameTrace>,
    pub counters: BTreeMap<ViewpointLabel, LabelCounters>,
    pub trace: Trace,
    pub pongs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub frames: usize,
    pub fps: f64,
    pub mean_rtl_ms: f64,
}

impl SimOutcome {
    /// Figures over frames of `label` received in `[from_ms, to_ms)`.
    pub fn steady_state(&self, label: ViewpointLabel, from_ms: u64, to_ms: u64) -> Option<SteadyState> {
        let fr: Vec<&FrameTrace> =
            self.frames.iter().filter(|f| f.label == label && (from_ms..to_ms).contains(&f.receive_ms)).collect();
        if fr.len() < 2 {
            return None;
        }
        let span = fr[fr.len() - 1].receive_ms - fr[0].receive_ms;
        let fps = if span == 0 { f64::INFINITY } else { 1000.0 * (fr.len() - 1) as f64 / span as f64 };
        let mean_rtl_ms = fr.iter().map(|f| f.rtl_ms() as f64).sum::<f64>() / fr.len() as f64;
        Some(SteadyState { frames: fr.len(), fps, mean_rtl_ms })
    }

    /// Mean distance between the head position a frame was rendered for
    /// and the true head position when it was received.
    pub fn mean_pose_error_m(&self, from_ms: u64) -> Option<f64> {
        let errs: Vec<f64> = self
            .frames
            .iter()
            .filter(|f| f.receive_ms >= from_ms)
            .map(|f| (f.head_pose.translation() - self.trace.sample(f.receive_ms as f64).translation()).norm())
            .collect();
        if errs.is_empty() {
            None
        } else {
            Some(errs.iter().sum::<f64>() / errs.len() as f64)
        }
    }
}

#[derive(Debug)]
enum Event {
    PingSend,
    PoseArrive(PosePacket),
    PingArrive,
    StallEnd,
    RenderDone(ViewpointLabel),
    FrameArrive(FrameTrace),
    PongArrive,
}

impl Event {
    /// Same-millisecond ordering: a stall ending frees held poses before
    /// anything else arriving in that millisecond.
    fn class(&self) -> u8 {
        match self {
            Event::StallEnd => 0,
            _ => 1,
        }
    }
}

#[derive(Default)]
struct Queue {
    heap: BinaryHeap<Reverse<(u64, u8, u64)>>,
    slots: Vec<Option<Event>>,
}

impl Queue {
    fn push(&mut self, at: u64, ev: Event) {
        let seq = self.slots.len() as u64;
        self.heap.push(Reverse((at, ev.class(), seq)));
        self.slots.push(Some(ev));
    }

    fn pop(&mut self) -> Option<(u64, Event)> {
        let Reverse((at, _, seq)) = self.heap.pop()?;
        self.slots[seq as usize].take().map(|e| (at, e))
    }
}

struct Worker {
    mailbox: Mailbox<(PosePacket, u64)>,
    renderer: PatternRenderer,
    in_flight: Option<(PosePacket, u64, u64, u64)>,
}

struct Bench<'a> {
    cfg: &'a BenchConfig,
    queue: Queue,
    net: DeliveryScheduler,
    workers: BTreeMap<ViewpointLabel, Worker>,
    counters: BTreeMap<ViewpointLabel, LabelCounters>,
    heads: BTreeMap<u64, Pose>,
    stall_until: u64,
    held: VecDeque<PosePacket>,
    frames: Vec<FrameTrace>,
    log: MetricsLog,
    pongs: u64,
}

impl Bench<'_> {
    fn start_render(&mut self, label: ViewpointLabel, now: u64) {
        let w = self.workers.get_mut(&label).expect("worker");
        if w.in_flight.is_some() {
            return;
        }
        let Some((packet, arrival)) = w.mailbox.try_take() else { return };
        let render_ms = w.renderer.next_cost_ms().round().max(0.0) as u64;
        w.in_flight = Some((packet, arrival, now, render_ms));
        self.counters.entry(label).or_default().renders += 1;
        self.queue.push(now + render_ms, Event::RenderDone(label));
    }

    fn deliver_pose(&mut self, packet: PosePacket, now: u64) {
        let label = packet.viewpoint_label;
        self.counters.entry(label).or_default().poses_arrived += 1;
        let Some(w) = self.workers.get_mut(&label) else { return };
        w.mailbox.put((packet, now));
        self.start_render(label, now);
    }

    fn handle(&mut self, now: u64, ev: Event) {
        match ev {
            Event::PingSend => unreachable!("client sends are scheduled up front"),
            Event::PoseArrive(p) => {
                if now < self.stall_until {
                    self.held.push_back(p);
                } else {
                    self.deliver_pose(p, now);
                }
            }
            Event::PingArrive => {
                if self.cfg.ping_stall_ms > 0 && now >= self.stall_until {
                    self.stall_until = now + self.cfg.ping_stall_ms;
                    self.queue.push(self.stall_until, Event::StallEnd);
                } else if let Some(at) = self.net.schedule_delivery(now, Direction::Downlink) {
                    self.queue.push(at, Event::PongArrive);
                }
            }
            Event::StallEnd => {
                while let Some(p) = self.held.pop_front() {
                    self.deliver_pose(p, now);
                }
                if let Some(at) = self.net.schedule_delivery(now, Direction::Downlink) {
                    self.queue.push(at, Event::PongArrive);
                }
            }
            Event::RenderDone(label) => {
                let w = self.workers.get_mut(&label).expect("worker");
                let (packet, arrival, take, render_ms) = w.in_flight.take().expect("render in flight");
                let frame = FrameTrace {
                    label,
                    pose_timestamp_ms: packet.timestamp_ms,
                    server_arrival_ms: arrival,
                    take_ms: take,
                    render_ms,
                    receive_ms: 0,
                    head_pose: self.heads[&packet.timestamp_ms],
                };
                match self.net.schedule_delivery(now, Direction::Downlink) {
                    Some(at) => self.queue.push(at, Event::FrameArrive(frame)),
                    None => self.counters.entry(label).or_default().frames_lost += 1,
                }
                self.start_render(label, now);
            }
            Event::FrameArrive(mut frame) => {
                frame.receive_ms = now;
                let _ = self.log.record_frame(FrameSample {
                    label: frame.label,
                    receive_time_ms: now,
                    echoed_timestamp_ms: frame.pose_timestamp_ms,
                    render_time_ms: frame.render_ms as f32,
                });
                self.frames.push(frame);
            }
            Event::PongArrive => self.pongs += 1,
        }
    }
}

/// Runs the bench with the built-in synthetic motion.
pub fn simulate(cfg: &BenchConfig) -> Result<SimOutcome, SimError> {
    let trace = cfg.motion.trace(cfg.duration_ms + 5000);
    simulate_trace(cfg, trace)
}

/// Runs the bench replaying `trace` as head motion.
pub fn simulate_trace(cfg: &BenchConfig, trace: Trace) -> Result<SimOutcome, SimError> {
    cfg.validate()?;
    let mut network = cfg.network;
    network.seed = cfg.seed;
    let net = DeliveryScheduler::new(network).map_err(|e| SimError::Config(e.to_string()))?;
    let workers = cfg
        .viewpoint_labels
        .iter()
        .map(|&l| {
            let w = Worker {
                mailbox: Mailbox::new(),
                renderer: PatternRenderer::simulated(l, cfg.render, cfg.seed),
                in_flight: None,
            };
            (l, w)
        })
        .collect();
    let mut bench = Bench {
        cfg,
        queue: Queue::default(),
        net,
        workers,
        counters: cfg.viewpoint_labels.iter().map(|&l| (l, LabelCounters::default())).collect(),
        heads: BTreeMap::new(),
        stall_until: 0,
        held: VecDeque::new(),
        frames: Vec::new(),
        log: MetricsLog::new(),
        pongs: 0,
    };

    // Client sends are generated in time order ahead of the event loop;
    // their uplink times only depend on send order.
    let mut sends: Vec<(u64, Event)> = Vec::new();
    let mut source = PoseSource::new(&trace, cfg.effective_horizon_ms());
    for t in tick_times(cfg.pose_rate_hz, cfg.duration_ms) {
        let head = source.head_at(t as f64);
        bench.heads.insert(t, head);
        for (label, pose) in viewpoint_poses(&head, cfg.ipd_m, &cfg.viewpoint_labels) {
            sends.push((t, Event::PoseArrive(PosePacket::new(label, t, &pose))));
        }
    }
    if cfg.ping_period_ms > 0 {
        let mut k = 1;
        while k * cfg.ping_period_ms < cfg.duration_ms {
            sends.push((k * cfg.ping_period_ms, Event::PingSend));
            k += 1;
        }
    }
    sends.sort_by_key(|(t, e)| (*t, matches!(e, Event::PingSend)));
    for (t, ev) in sends {
        match ev {
            Event::PoseArrive(p) => {
                let label = p.viewpoint_label;
                bench.log.record_pose_sent(label);
                bench.counters.entry(label).or_default().poses_sent += 1;
                if let Some(at) = bench.net.schedule_delivery(t, Direction::Uplink) {
                    bench.queue.push(at, Event::PoseArrive(p));
                }
            }
            Event::PingSend => {
                if let Some(at) = bench.net.schedule_delivery(t, Direction::Uplink) {
                    bench.queue.push(at, Event::PingArrive);
                }
            }
            _ => unreachable!("only client sends are queued here"),
        }
    }

    while let Some((now, ev)) = bench.queue.pop() {
        bench.handle(now, ev);
    }
    for (label, w) in &bench.workers {
        bench.counters.entry(*label).or_default().overwritten = w.mailbox.overwritten();
    }
    Ok(SimOutcome {
        log: bench.log.snapshot(),
        frames: bench.frames,
        counters: bench.counters,
        trace,
        pongs: bench.pongs,
    })
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub outcome: SimOutcome,
    pub text: String,
    /// `label,t_ms,rtl_ms,instantaneous_fps,windowed_fps`, one row per frame
    /// after each label's first.
    pub timeseries_csv: String,
}

pub const TIMESERIES_HEADER: &str = "label,t_ms,rtl_ms,instantaneous_fps,windowed_fps";

fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.3}")
    } else {
        "inf".into()
    }
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport, SimError> {
    let outcome = simulate(cfg)?;
    Ok(report(cfg, outcome))
}

pub fn report(cfg: &BenchConfig, outcome: SimOutcome) -> BenchReport {
    let mut text = String::new();
    let _ = writeln!(text, "# bench report");
    let _ = writeln!(text, "# {FPS_NOTE}");
    for line in cfg.to_kv_text().lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            let _ = writeln!(text, "config.{k}={v}");
        }
    }
    let steady_to = cfg.duration_ms;
    for (label, c) in &outcome.counters {
        let p = format!("label.{label}");
        let _ = writeln!(text, "{p}.poses_sent={}", c.poses_sent);
        let _ = writeln!(text, "{p}.renders={}", c.renders);
        let _ = writeln!(text, "{p}.poses_overwritten={}", c.overwritten);
        let _ = writeln!(text, "{p}.frames_lost={}", c.frames_lost);
        if let Some(s) = outcome.steady_state(*label, cfg.warmup_ms, steady_to) {
            let _ = writeln!(text, "{p}.steady_fps={}", fmt_f(s.fps));
            let _ = writeln!(text, "{p}.steady_mean_rtl_ms={}", fmt_f(s.mean_rtl_ms));
        }
    }
    if let Ok(summary) = metrics::summarize(&outcome.log) {
        for line in metrics::summary_footer(&summary).lines().filter(|l| !l.starts_with('#')) {
            let _ = writeln!(text, "{line}");
        }
        if cfg.predictor != Predictor::None {
            if let Some((mean, p95)) = metrics::pose_age_stats(&outcome.log, cfg.prediction_horizon_ms.round() as u64) {
                let _ = writeln!(text, "pose_age.mean_ms={}", fmt_f(mean));
                let _ = writeln!(text, "pose_age.p95_abs_ms={p95}");
            }
        }
    }
    if let Some(e) = outcome.mean_pose_error_m(cfg.warmup_ms) {
        let _ = writeln!(text, "pose_error.mean_m={e:.6}");
    }
    let _ = writeln!(text, "pongs={}", outcome.pongs);

    let mut csv = String::from(TIMESERIES_HEADER);
    csv.push('\n');
    for label in outcome.log.labels() {
        let Ok(series) = metrics::frame_rate(&outcome.log, label, cfg.fps_window_ms) else { continue };
        let mut rtl: Vec<(u64, u64)> = outcome.log.for_label(label).map(|s| (s.receive_time_ms, s.rtl_ms())).collect();
        rtl.sort_unstable();
        for (p, (_, r)) in series.iter().zip(rtl.iter().skip(1)) {
            let _ = writeln!(csv, "{label},{},{r},{},{}", p.t_ms, fmt_f(p.instantaneous_fps), fmt_f(p.windowed_fps));
        }
    }
    BenchReport { outcome, text, timeseries_csv: csv }
}
