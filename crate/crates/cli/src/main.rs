use std::fmt;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nearport::client::{self, ClientConfig, ClientConnection, Predictor, Termination, Trace};
use nearport::config::{ConfigError, KvConfig};
use nearport::geometry::{CameraIntrinsics, Pose, Vec3};
use nearport::metrics;
use nearport::netsim::NetworkProfile;
use nearport::protocol::{validate_pose_matrix, ImageEncoding, ViewpointLabel};
use nearport::renderer::{
    load_scene, render_view, PatternRenderer, RaymarchRenderer, RenderError, RenderRequest, RenderTime, Renderer,
};
use nearport::server::{listen_override, RendererFactory, Server, ServerConfig, LISTEN_ENV};
use nearport::sim::{self, BenchConfig};

const LOG_ENV: &str = "NEARPORT_LOG";

#[derive(Parser)]
#[command(name = "nearport", version, about = "Remote real-time rendering server, client and bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve rendered frames to connecting clients.
    Serve(ServeArgs),
    /// Replay a head-motion trace against a server and record metrics.
    Replay(ReplayArgs),
    /// Run the deterministic in-process benchmark.
    Bench(BenchArgs),
    /// Render one image of a scene.
    RenderStill(StillArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RendererKind {
    Raymarch,
    Pattern,
}

impl fmt::Display for RendererKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RendererKind::Raymarch => "raymarch",
            RendererKind::Pattern => "pattern",
        })
    }
}

#[derive(Args)]
struct CameraArgs {
    #[arg(long)]
    width: Option<u16>,
    #[arg(long)]
    height: Option<u16>,
    /// Focal length in pixels, both axes.
    #[arg(long)]
    focal: Option<f32>,
}

#[derive(Args)]
struct ServeArgs {
    /// key=value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, value_enum)]
    renderer: Option<RendererKind>,
    /// Fixed pattern render cost.
    #[arg(long)]
    render_ms: Option<f64>,
    #[arg(long)]
    render_min_ms: Option<f64>,
    #[arg(long)]
    render_max_ms: Option<f64>,
    #[arg(long)]
    step_m: Option<f64>,
    /// Length-delimited stream listen address.
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// Websocket listen address.
    #[arg(long)]
    ws_listen: Option<SocketAddr>,
    #[command(flatten)]
    camera: CameraArgs,
    #[arg(long)]
    ping_stall_ms: Option<u64>,
    #[arg(long)]
    max_viewpoints: Option<usize>,
    #[arg(long)]
    png: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Exit after this many seconds instead of running until interrupted.
    #[arg(long)]
    duration_s: Option<f64>,
}

#[derive(Args)]
struct NetArgs {
    /// One-way delay applied to both directions.
    #[arg(long)]
    delay_ms: Option<u64>,
    #[arg(long)]
    uplink_delay_ms: Option<u64>,
    #[arg(long)]
    downlink_delay_ms: Option<u64>,
    #[arg(long)]
    jitter_ms: Option<u64>,
    #[arg(long)]
    outage_period_ms: Option<u64>,
    #[arg(long)]
    outage_duration_ms: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    server: Option<String>,
    /// CSV trace `t_ms,tx,ty,tz,qx,qy,qz,qw`; a stationary head is used otherwise.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    duration_ms: Option<u64>,
    #[arg(long)]
    rate_hz: Option<f64>,
    /// Comma separated viewpoint labels.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    ipd_m: Option<f64>,
    #[arg(long)]
    predictor: Option<Predictor>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    heartbeat_ms: Option<u64>,
    #[arg(long)]
    drain_ms: Option<u64>,
    #[command(flatten)]
    net: NetArgs,
    /// Directory for CSV and summary output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_frames: Option<PathBuf>,
    #[arg(long)]
    client_id: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration_ms: Option<u64>,
    #[arg(long)]
    delay_ms: Option<u64>,
    #[arg(long)]
    jitter_ms: Option<u64>,
    #[arg(long)]
    render_ms: Option<f64>,
    #[arg(long)]
    outage_period_ms: Option<u64>,
    #[arg(long)]
    outage_duration_ms: Option<u64>,
    /// Writes report.txt and timeseries.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StillArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Output image; `.png` writes PNG, anything else binary PPM.
    #[arg(long)]
    out: PathBuf,
    /// Row-major 4×4 camera-to-world matrix, 16 numbers.
    #[arg(long, allow_hyphen_values = true)]
    pose: Option<String>,
    #[command(flatten)]
    camera: CameraArgs,
    #[arg(long)]
    step_m: Option<f64>,
}

/// Failure reported as one `error class=… message="…"` line.
#[derive(Debug)]
struct CliError {
    class: &'static str,
    message: String,
}

impl CliError {
    fn new(class: &'static str, message: impl fmt::Display) -> Self {
        Self { class, message: message.to_string() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let class = match e {
            ConfigError::Io { .. } => "IoError",
            ConfigError::Syntax { .. } => "ParseError",
            ConfigError::Value { .. } => "ValidationError",
        };
        CliError::new(class, e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "info");
    env_logger::Builder::from_env(env)
        .format(|buf, record| {
            writeln!(buf, "{} {} {}", buf.timestamp_millis(), record.level().as_str().to_lowercase(), record.args())
        })
        .init();
}

fn load_kv(path: &Option<PathBuf>) -> CliResult<KvConfig> {
    match path {
        Some(p) => Ok(KvConfig::load(p)?),
        None => Ok(KvConfig::default()),
    }
}

fn set_opt<T: ToString>(kv: &mut KvConfig, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        kv.set(key, v.to_string());
    }
}

fn check_keys(kv: &KvConfig, known: &[&str]) -> CliResult<()> {
    let unknown = kv.unknown_keys(known);
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(CliError::new("ConfigError", format!("unknown config keys: {}", unknown.join(", "))))
    }
}

fn intrinsics_from(kv: &KvConfig) -> CliResult<CameraIntrinsics> {
    let w = kv.get_or("width", 64u16)?;
    let h = kv.get_or("height", 48u16)?;
    let f = kv.get_or("focal", 64f32)?;
    CameraIntrinsics::centered(w, h, f).map_err(|e| CliError::new("ValidationError", e))
}

fn camera_to_kv(kv: &mut KvConfig, c: &CameraArgs) {
    set_opt(kv, "width", &c.width);
    set_opt(kv, "height", &c.height);
    set_opt(kv, "focal", &c.focal);
}

fn render_time_from(kv: &KvConfig) -> CliResult<RenderTime> {
    match (kv.get::<f64>("render_ms")?, kv.get::<f64>("render_min_ms")?, kv.get::<f64>("render_max_ms")?) {
        (_, Some(min_ms), Some(max_ms)) if max_ms >= min_ms && min_ms >= 0.0 => {
            Ok(RenderTime::Uniform { min_ms, max_ms })
        }
        (_, Some(_), Some(_)) => Err(CliError::new("ValidationError", "render_max_ms must be >= render_min_ms >= 0")),
        (Some(ms), None, None) if ms >= 0.0 => Ok(RenderTime::Fixed { ms }),
        (Some(_), None, None) => Err(CliError::new("ValidationError", "render_ms must be >= 0")),
        (None, None, None) => Ok(RenderTime::Fixed { ms: 30.0 }),
        _ => Err(CliError::new("ConfigError", "render_min_ms and render_max_ms must be given together")),
    }
}

const SERVE_KEYS: &[&str] = &[
    "scene",
    "renderer",
    "render_ms",
    "render_min_ms",
    "render_max_ms",
    "step_m",
    "listen",
    "ws_listen",
    "width",
    "height",
    "focal",
    "ping_stall_ms",
    "max_viewpoints",
    "png",
    "seed",
];

fn serve(args: ServeArgs) -> CliResult<()> {
    let mut kv = load_kv(&args.config)?;
    check_keys(&kv, SERVE_KEYS)?;
    set_opt(&mut kv, "scene", &args.scene.as_ref().map(|p| p.display().to_string()));
    set_opt(&mut kv, "renderer", &args.renderer);
    set_opt(&mut kv, "render_ms", &args.render_ms);
    set_opt(&mut kv, "render_min_ms", &args.render_min_ms);
    set_opt(&mut kv, "render_max_ms", &args.render_max_ms);
    set_opt(&mut kv, "step_m", &args.step_m);
    set_opt(&mut kv, "listen", &args.listen);
    set_opt(&mut kv, "ws_listen", &args.ws_listen);
    camera_to_kv(&mut kv, &args.camera);
    set_opt(&mut kv, "ping_stall_ms", &args.ping_stall_ms);
    set_opt(&mut kv, "max_viewpoints", &args.max_viewpoints);
    set_opt(&mut kv, "seed", &args.seed);
    if args.png {
        kv.set("png", true);
    }

    let renderer = match kv.get_str("renderer").unwrap_or("raymarch") {
        "raymarch" => RendererKind::Raymarch,
        "pattern" => RendererKind::Pattern,
        other => return Err(CliError::new("ConfigError", format!("unknown renderer `{other}`"))),
    };
    let seed = kv.get_or("seed", 0u64)?;
    let factory: RendererFactory = match renderer {
        RendererKind::Raymarch => {
            let path = kv
                .get_str("scene")
                .ok_or_else(|| CliError::new("ConfigError", "the raymarch renderer needs --scene"))?;
            let field = Arc::new(load_scene(path).map_err(|e| CliError::new(e.class(), e))?);
            let step = kv.get_or("step_m", nearport::renderer::DEFAULT_STEP_M)?;
            if !step.is_finite() || step <= 0.0 {
                return Err(CliError::new("ValidationError", "step_m must be positive"));
            }
            Arc::new(move |_| {
                let mut r = RaymarchRenderer::new(Arc::clone(&field));
                r.step_m = step;
                Box::new(r) as Box<dyn Renderer>
            })
        }
        RendererKind::Pattern => {
            let cost = render_time_from(&kv)?;
            Arc::new(move |label| Box::new(PatternRenderer::new(label, cost, seed)) as Box<dyn Renderer>)
        }
    };
    let mut config = ServerConfig::new(intrinsics_from(&kv)?);
    config.ping_stall_ms = kv.get_or("ping_stall_ms", 0)?;
    config.max_viewpoints = kv.get_or("max_viewpoints", config.max_viewpoints)?;
    if kv.get_or("png", false)? {
        config.encoding = ImageEncoding::Png;
    }
    let parse_addr = |key: &str, default: &str| -> CliResult<SocketAddr> {
        kv.get_str(key).unwrap_or(default).parse().map_err(|e| CliError::new("ConfigError", format!("{key}: {e}")))
    };
    let mut tcp = parse_addr("listen", "127.0.0.1:7400")?;
    let mut ws = parse_addr("ws_listen", "127.0.0.1:7401")?;
    if let Ok(v) = std::env::var(LISTEN_ENV) {
        let (t, w) = listen_override(&v).map_err(|e| CliError::new("ConfigError", e))?;
        tcp = t;
        ws = w.unwrap_or(ws);
    }
    log::info!(
        "event=serve renderer={renderer} width={} height={}",
        config.intrinsics.width_px,
        config.intrinsics.height_px
    );
    let server = Server::bind(config, factory, tcp, Some(ws)).map_err(|e| CliError::new("BindError", e))?;
    println!("listening tcp={} ws={}", server.tcp_addr(), server.ws_addr().map(|a| a.to_string()).unwrap_or_default());
    let _ = std::io::stdout().flush();
    match kv_duration(args.duration_s) {
        Some(d) => {
            std::thread::sleep(d);
            server.shutdown();
        }
        None => server.wait(),
    }
    Ok(())
}

fn kv_duration(s: Option<f64>) -> Option<Duration> {
    s.filter(|s| *s >= 0.0).map(Duration::from_secs_f64)
}

const REPLAY_KEYS: &[&str] = &[
    "server",
    "trace",
    "duration_ms",
    "rate_hz",
    "labels",
    "ipd_m",
    "predictor",
    "horizon",
    "heartbeat_ms",
    "drain_ms",
    "delay_ms",
    "uplink_delay_ms",
    "downlink_delay_ms",
    "jitter_ms",
    "outage_period_ms",
    "outage_duration_ms",
    "seed",
    "out",
    "dump_frames",
    "client_id",
];

fn parse_labels(s: &str) -> CliResult<Vec<ViewpointLabel>> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| CliError::new("ConfigError", format!("bad viewpoint label `{p}`"))))
        .collect()
}

fn network_from(kv: &KvConfig) -> CliResult<NetworkProfile> {
    let both = kv.get::<u64>("delay_ms")?;
    let profile = NetworkProfile {
        uplink_delay_ms: kv.get::<u64>("uplink_delay_ms")?.or(both).unwrap_or(0),
        downlink_delay_ms: kv.get::<u64>("downlink_delay_ms")?.or(both).unwrap_or(0),
        jitter_ms: kv.get_or("jitter_ms", 0)?,
        outage_period_ms: kv.get_or("outage_period_ms", 0)?,
        outage_duration_ms: kv.get_or("outage_duration_ms", 0)?,
        seed: kv.get_or("seed", 0)?,
        drop_during_outage: false,
    };
    profile.validate().map_err(|e| CliError::new("ValidationError", e))?;
    Ok(profile)
}

fn net_to_kv(kv: &mut KvConfig, n: &NetArgs) {
    set_opt(kv, "delay_ms", &n.delay_ms);
    set_opt(kv, "uplink_delay_ms", &n.uplink_delay_ms);
    set_opt(kv, "downlink_delay_ms", &n.downlink_delay_ms);
    set_opt(kv, "jitter_ms", &n.jitter_ms);
    set_opt(kv, "outage_period_ms", &n.outage_period_ms);
    set_opt(kv, "outage_duration_ms", &n.outage_duration_ms);
    set_opt(kv, "seed", &n.seed);
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::new("IoError", format!("{}: {e}", path.display())))
}

fn rtl_text(rtl: &Option<metrics::RtlStats>) -> String {
    match rtl {
        Some(r) => format!("rtl_mean_ms={:.1} rtl_p95_ms={}", r.mean_ms, r.p95_ms),
        None => "rtl_mean_ms=- rtl_p95_ms=-".into(),
    }
}

fn replay(args: ReplayArgs) -> CliResult<()> {
    let mut kv = load_kv(&args.config)?;
    check_keys(&kv, REPLAY_KEYS)?;
    set_opt(&mut kv, "server", &args.server);
    set_opt(&mut kv, "trace", &args.trace.as_ref().map(|p| p.display().to_string()));
    set_opt(&mut kv, "duration_ms", &args.duration_ms);
    set_opt(&mut kv, "rate_hz", &args.rate_hz);
    set_opt(&mut kv, "labels", &args.labels);
    set_opt(&mut kv, "ipd_m", &args.ipd_m);
    set_opt(&mut kv, "predictor", &args.predictor);
    set_opt(&mut kv, "horizon", &args.horizon);
    set_opt(&mut kv, "heartbeat_ms", &args.heartbeat_ms);
    set_opt(&mut kv, "drain_ms", &args.drain_ms);
    net_to_kv(&mut kv, &args.net);
    set_opt(&mut kv, "out", &args.out.as_ref().map(|p| p.display().to_string()));
    set_opt(&mut kv, "dump_frames", &args.dump_frames.as_ref().map(|p| p.display().to_string()));
    set_opt(&mut kv, "client_id", &args.client_id);

    let trace = match kv.get_str("trace") {
        Some(p) => Trace::load(p).map_err(|e| match e {
            client::TraceError::Io(_) => CliError::new("IoError", e),
            _ => CliError::new("ParseError", e),
        })?,
        None => Trace::stationary(Pose::from_translation(Vec3::new(0.0, 0.0, 2.0)), 10_000),
    };
    let defaults = ClientConfig::default();
    let heartbeat = kv.get_or("heartbeat_ms", 5000u64)?;
    let config = ClientConfig {
        pose_rate_hz: kv.get_or("rate_hz", defaults.pose_rate_hz)?,
        ipd_m: kv.get_or("ipd_m", defaults.ipd_m)?,
        predictor: kv.get_or("predictor", defaults.predictor)?,
        prediction_horizon_ms: kv.get_or("horizon", defaults.prediction_horizon_ms)?,
        viewpoint_labels: match kv.get_str("labels") {
            Some(s) => parse_labels(s)?,
            None => defaults.viewpoint_labels,
        },
        duration_ms: kv.get("duration_ms")?,
        heartbeat_ms: (heartbeat > 0).then_some(heartbeat),
        drain_ms: kv.get_or("drain_ms", defaults.drain_ms)?,
        network: network_from(&kv)?,
        frame_dump_dir: kv.get_str("dump_frames").map(PathBuf::from),
    };
    config.validate().map_err(|e| CliError::new("ValidationError", e))?;
    let server = kv.get_str("server").unwrap_or("127.0.0.1:7400").to_owned();
    let client_id = kv.get_str("client_id").unwrap_or("nearport-replay").to_owned();
    let conn = ClientConnection::connect(server.as_str(), &client_id, &config.viewpoint_labels, Duration::from_secs(5))
        .map_err(|e| CliError::new("ConnectError", e))?;
    log::info!("event=connected server={server} labels={}", config.viewpoint_labels.len());
    let outcome = client::run_replay(&config, &trace, conn).map_err(|e| CliError::new("ReplayError", e))?;

    let out_dir = kv.get_str("out").map(PathBuf::from);
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::new("IoError", format!("{}: {e}", dir.display())))?;
        for label in &config.viewpoint_labels {
            write_file(&dir.join(format!("label_{label}.csv")), metrics::export_csv(&outcome.log, Some(*label)))?;
        }
    }
    let summary = match metrics::summarize(&outcome.log) {
        Ok(s) => s,
        Err(e) => {
            return Err(match outcome.termination {
                Termination::ConnectionLost(reason) => CliError::new("ConnectionLost", format!("{reason}; {e}")),
                Termination::Completed => CliError::new("NoFrames", e),
            })
        }
    };
    let mut footer = metrics::summary_footer(&summary);
    let pose_age = (config.predictor != Predictor::None)
        .then(|| metrics::pose_age_stats(&outcome.log, config.prediction_horizon_ms.round() as u64))
        .flatten();
    if let Some((mean, p95)) = pose_age {
        footer.push_str(&format!("pose_age.mean_ms={mean:.3}\npose_age.p95_abs_ms={p95}\n"));
    }
    if let Some(dir) = &out_dir {
        write_file(&dir.join("summary.txt"), &footer)?;
    }
    for l in &summary.per_label {
        println!(
            "label={} fps={:.2} {} render_fraction={:.3} frames={}",
            l.label,
            l.mean_fps,
            rtl_text(&l.stream.rtl),
            l.stream.render_fraction,
            l.stream.sample_count
        );
    }
    println!(
        "aggregate fps_per_label={:.2} combined_fps={:.2} {} render_fraction={:.3}",
        summary.fps_per_label,
        summary.combined_fps,
        rtl_text(&summary.aggregate.rtl),
        summary.aggregate.render_fraction
    );
    if let Some((mean, p95)) = pose_age {
        println!("pose_age mean_ms={mean:.1} p95_abs_ms={p95}");
    }
    match outcome.termination {
        Termination::Completed => Ok(()),
        Termination::ConnectionLost(reason) => {
            Err(CliError::new("ConnectionLost", format!("{reason} (partial results written)")))
        }
    }
}

fn bench(args: BenchArgs) -> CliResult<()> {
    let mut kv = load_kv(&args.config)?;
    for s in &args.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::new("ConfigError", format!("--set expects KEY=VALUE, got `{s}`")))?;
        kv.set(k.trim(), v.trim());
    }
    set_opt(&mut kv, "seed", &args.seed);
    set_opt(&mut kv, "duration_ms", &args.duration_ms);
    set_opt(&mut kv, "delay_ms", &args.delay_ms);
    set_opt(&mut kv, "jitter_ms", &args.jitter_ms);
    set_opt(&mut kv, "render_ms", &args.render_ms);
    set_opt(&mut kv, "outage_period_ms", &args.outage_period_ms);
    set_opt(&mut kv, "outage_duration_ms", &args.outage_duration_ms);
    let cfg = BenchConfig::from_kv(&kv).map_err(|e| match e {
        sim::SimError::Parse(c) => CliError::from(c),
        other => CliError::new("ConfigError", other),
    })?;
    let report = sim::run_bench(&cfg).map_err(|e| CliError::new("ConfigError", e))?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::new("IoError", format!("{}: {e}", dir.display())))?;
        write_file(&dir.join("report.txt"), &report.text)?;
        write_file(&dir.join("timeseries.csv"), &report.timeseries_csv)?;
    }
    print!("{}", report.text);
    Ok(())
}

/// Camera at (0, 0, 2) looking down −Z.
fn canonical_pose() -> Pose {
    Pose::from_translation(Vec3::new(0.0, 0.0, 2.0))
}

fn parse_pose(s: &str) -> CliResult<Pose> {
    let vals: Vec<f32> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f32>().map_err(|_| CliError::new("ParseError", format!("bad pose element `{p}`"))))
        .collect::<Result<_, _>>()?;
    let m: [f32; 16] = vals
        .try_into()
        .map_err(|v: Vec<f32>| CliError::new("InvariantViolation", format!("pose needs 16 values, got {}", v.len())))?;
    validate_pose_matrix(&m).map_err(|e| CliError::new("InvariantViolation", e))?;
    Pose::from_row_major(&m).map_err(|e| CliError::new("InvariantViolation", e))
}

fn render_still(args: StillArgs) -> CliResult<()> {
    let field = load_scene(&args.scene).map_err(|e| CliError::new(e.class(), e))?;
    let pose = match &args.pose {
        Some(s) => parse_pose(s)?,
        None => canonical_pose(),
    };
    let mut kv = KvConfig::default();
    camera_to_kv(&mut kv, &args.camera);
    let mut req = RenderRequest::new(intrinsics_from(&kv)?, pose);
    if let Some(step) = args.step_m {
        req.step_m = step;
    }
    let img = match render_view(&field, &req) {
        Ok(img) | Err(RenderError::DegenerateRequest { image: img }) => img,
        Err(e) => return Err(CliError::new("RenderError", e)),
    };
    let bytes = if args.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        img.to_png().map_err(|e| CliError::new("EncodeError", e))?
    } else {
        img.to_ppm()
    };
    write_file(&args.out, bytes)?;
    log::info!("event=render_still out={} render_ms={:.2}", args.out.display(), img.render_time_ms);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    let result = match cli.command {
        Command::Serve(a) => serve(a),
        Command::Replay(a) => replay(a),
        Command::Bench(a) => bench(a),
        Command::RenderStill(a) => render_still(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.message.replace('\n', " ").replace('"', "'");
            eprintln!("error class={} message=\"{msg}\"", e.class);
            ExitCode::FAILURE
        }
    }
}
