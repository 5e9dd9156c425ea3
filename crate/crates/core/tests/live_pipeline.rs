use std::io::Write;
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use nearport::client::{run_replay, ClientConfig, ClientConnection, ClientError, Termination, Trace};
use nearport::geometry::{CameraIntrinsics, Pose, Vec3};
use nearport::metrics::mean_fps;
use nearport::netsim::NetworkProfile;
use nearport::protocol::{decode_message, encode_message, HelloMessage, Message, PosePacket};
use nearport::renderer::{decode_label_glyph, PatternRenderer, RenderTime, RenderedImage, Renderer};
use nearport::server::{ChannelSink, RendererFactory, Server, ServerConfig, Session};
use tungstenite::Message as WsMessage;

fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::centered(48, 32, 40.0).unwrap()
}

fn pattern_factory(ms: f64) -> RendererFactory {
    Arc::new(move |l| Box::new(PatternRenderer::new(l, RenderTime::Fixed { ms }, 0)) as Box<dyn Renderer>)
}

fn loopback() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn start(factory: RendererFactory) -> Server {
    Server::bind(ServerConfig::new(intrinsics()), factory, loopback(), Some(loopback())).unwrap()
}

fn walk(duration_ms: u64) -> Trace {
    Trace::from_fn(duration_ms, 10, |t| Pose::from_translation(Vec3::new(0.0003 * t, 0.0, 2.0)))
}

#[test]
fn tcp_replay_with_emulated_delay_follows_pipelining_law() {
    let server = start(pattern_factory(30.0));
    let conn = ClientConnection::connect(server.tcp_addr(), "law", &[0, 1], Duration::from_secs(5)).unwrap();
    let cfg = ClientConfig {
        network: NetworkProfile::symmetric(100),
        duration_ms: Some(4000),
        drain_ms: 600,
        ..ClientConfig::default()
    };
    let out = run_replay(&cfg, &walk(4000), conn).unwrap();
    server.shutdown();
    assert_eq!(out.termination, Termination::Completed);
    for label in [0, 1] {
        let steady: Vec<_> = out
            .log
            .for_label(label)
            .filter(|s| s.echoed_timestamp_ms >= 1000 && s.echoed_timestamp_ms < 3800)
            .copied()
            .collect();
        let fps = mean_fps(steady.iter());
        let rtl = steady.iter().map(|s| s.rtl_ms() as f64).sum::<f64>() / steady.len() as f64;
        assert!((fps - 33.3).abs() <= 3.4, "label {label} fps {fps}");
        assert!((rtl - 230.0).abs() <= 0.15 * 230.0, "label {label} rtl {rtl}");
    }
}

#[test]
fn websocket_carries_the_same_messages() {
    let server = start(pattern_factory(5.0));
    let url = format!("ws://{}/", server.ws_addr().unwrap());
    let (mut ws, _) = tungstenite::connect(url).unwrap();
    let send = |ws: &mut tungstenite::WebSocket<_>, m: &Message| {
        ws.send(WsMessage::Binary(encode_message(m).unwrap().into())).unwrap();
    };
    send(&mut ws, &Message::Hello(HelloMessage { client_id: "browser".into(), viewpoint_labels: vec![0, 1] }));
    let mut intr = Vec::new();
    while intr.len() < 2 {
        if let WsMessage::Binary(b) = ws.read().unwrap() {
            match decode_message(&b).unwrap() {
                Message::Intrinsics(m) => intr.push(m),
                other => panic!("unexpected {other:?}"),
            }
        }
    }
    assert_eq!(intr[0].intrinsics, intrinsics());
    let pose = Pose::from_translation(Vec3::new(0.0, 0.0, 2.0));
    send(&mut ws, &Message::Pose(PosePacket::new(0, 111, &pose)));
    send(&mut ws, &Message::Pose(PosePacket::new(1, 222, &pose)));
    send(&mut ws, &Message::Ping { nonce: 9 });
    let (mut frames, mut pong) = (Vec::new(), false);
    while frames.len() < 2 || !pong {
        if let WsMessage::Binary(b) = ws.read().unwrap() {
            match decode_message(&b).unwrap() {
                Message::Frame(f) => frames.push(f),
                Message::Pong { nonce } => pong = nonce == 9,
                other => panic!("unexpected {other:?}"),
            }
        }
    }
    frames.sort_by_key(|f| f.viewpoint_label);
    assert_eq!((frames[0].echoed_timestamp_ms, frames[1].echoed_timestamp_ms), (111, 222));
    for f in &frames {
        let img = RenderedImage {
            width_px: f.width_px,
            height_px: f.height_px,
            pixels: f.image.clone(),
            render_time_ms: 0.0,
        };
        assert_eq!(decode_label_glyph(&img), Some(f.viewpoint_label));
    }
    ws.close(None).unwrap();
    server.shutdown();
}

#[test]
fn too_many_viewpoints_fails_the_handshake() {
    let server = start(pattern_factory(1.0));
    let labels: Vec<u8> = (0..5).collect();
    let err = ClientConnection::connect(server.tcp_addr(), "greedy", &labels, Duration::from_secs(5)).err().unwrap();
    assert!(matches!(err, ClientError::Handshake(_) | ClientError::Read(_)), "{err}");
    server.shutdown();
}

#[test]
fn unknown_label_is_dropped_without_ending_the_session() {
    let (sink, rx) = ChannelSink::new();
    let mut s = Session::new(ServerConfig::new(intrinsics()), pattern_factory(1.0), Arc::new(sink));
    s.handle_hello(&HelloMessage { client_id: "c".into(), viewpoint_labels: vec![0] }).unwrap();
    let pose = Pose::identity();
    s.handle_message(Message::Pose(PosePacket::new(7, 1, &pose))).unwrap();
    s.handle_message(Message::Pose(PosePacket::new(0, 2, &pose))).unwrap();
    let frame = rx
        .iter()
        .map(|b| decode_message(&b).unwrap())
        .find_map(|m| match m {
            Message::Frame(f) => Some(f),
            _ => None,
        })
        .unwrap();
    assert_eq!((frame.viewpoint_label, frame.echoed_timestamp_ms), (0, 2));
    assert_eq!(s.unknown_label_drops(), 1);
    s.close();
}

#[test]
fn slow_viewpoint_does_not_hold_back_the_other() {
    let factory: RendererFactory = Arc::new(|l| {
        let ms = if l == 0 { 250.0 } else { 5.0 };
        Box::new(PatternRenderer::new(l, RenderTime::Fixed { ms }, 0)) as Box<dyn Renderer>
    });
    let (sink, rx) = ChannelSink::new();
    let mut s = Session::new(ServerConfig::new(intrinsics()), factory, Arc::new(sink));
    s.handle_hello(&HelloMessage { client_id: "c".into(), viewpoint_labels: vec![0, 1] }).unwrap();
    let start = Instant::now();
    let mut ts = 0;
    while start.elapsed() < Duration::from_millis(1000) {
        ts += 1;
        for l in [0, 1] {
            s.dispatch_pose(PosePacket::new(l, ts, &Pose::identity())).unwrap();
        }
        thread::sleep(Duration::from_millis(16));
    }
    let (fast, slow) = (s.counts(1).unwrap().frames_sent, s.counts(0).unwrap().frames_sent);
    s.close();
    drop(rx);
    assert!(fast >= 3 * ts / 4, "fast label sent {fast} of {ts}");
    assert!(slow <= 5, "slow label sent {slow}");
}

#[test]
fn server_shutdown_ends_a_running_replay() {
    let server = start(pattern_factory(10.0));
    let conn = ClientConnection::connect(server.tcp_addr(), "cut", &[0, 1], Duration::from_secs(5)).unwrap();
    let handle = server.handle();
    let stopper = thread::spawn(move || {
        thread::sleep(Duration::from_millis(500));
        server.shutdown();
    });
    let cfg = ClientConfig { duration_ms: Some(10_000), drain_ms: 100, ..ClientConfig::default() };
    let began = Instant::now();
    let out = run_replay(&cfg, &walk(10_000), conn).unwrap();
    stopper.join().unwrap();
    handle.stop();
    assert!(matches!(out.termination, Termination::ConnectionLost(_)), "{:?}", out.termination);
    assert!(began.elapsed() < Duration::from_secs(5));
    assert!(!out.log.samples.is_empty());
}

#[test]
fn client_disconnect_releases_the_session() {
    let server = start(pattern_factory(10.0));
    let stream = TcpStream::connect(server.tcp_addr()).unwrap();
    let hello = Message::Hello(HelloMessage { client_id: "gone".into(), viewpoint_labels: vec![0] });
    (&stream).write_all(&encode_message(&hello).unwrap()).unwrap();
    let pose = Message::Pose(PosePacket::new(0, 1, &Pose::identity()));
    (&stream).write_all(&encode_message(&pose).unwrap()).unwrap();
    thread::sleep(Duration::from_millis(100));
    drop(stream);
    let began = Instant::now();
    server.shutdown();
    assert!(began.elapsed() < Duration::from_secs(3));
}
