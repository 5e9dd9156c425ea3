//! Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nearport::client::Predictor;
use nearport::clock::MonotonicClock;
use nearport::geometry::{project_point, quad_for_frustum, stereo_eye_poses, CameraIntrinsics, Pose, StereoRig, Vec3};
use nearport::mailbox::Mailbox;
use nearport::metrics::frame_rate;
use nearport::netsim::NetworkProfile;
use nearport::protocol::{
    decode_message, encode_message, DecodeError, FramePacket, HelloMessage, ImageEncoding, IntrinsicsMessage, Message,
    PosePacket,
};
use nearport::renderer::{
    load_scene, render_view, transmittance, Aabb, PatternRenderer, Primitive, RadianceField, RenderRequest, RenderTime,
    Renderer,
};
use nearport::server::{MessageSink, RendererFactory, ServerConfig, Session};
use nearport::sim::{self, BenchConfig, Motion};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target
}

fn pipelining_law() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for delay in [50u64, 100, 200] {
        let cfg = BenchConfig { network: NetworkProfile::symmetric(delay), ..BenchConfig::default() };
        let out = sim::simulate(&cfg).expect("bench runs");
        let want_rtl = (2 * delay + 30) as f64;
        for &label in &cfg.viewpoint_labels {
            let Some(s) = out.steady_state(label, cfg.warmup_ms, cfg.duration_ms) else {
                ok = false;
                parts.push(format!("d={delay} label={label}: no frames"));
                continue;
            };
            let good = within(s.fps, 1000.0 / 30.0, 0.10) && within(s.mean_rtl_ms, want_rtl, 0.15);
            ok &= good;
            parts.push(format!("d={delay} L{label} fps={:.2} rtl={:.1}/{want_rtl}", s.fps, s.mean_rtl_ms));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 30.0;
    outcome(ok, format!("{} ({secs:.2}s)", parts.join("; ")))
}

fn jittered_regime() -> Outcome {
    let base = BenchConfig {
        render: RenderTime::Uniform { min_ms: 30.0, max_ms: 40.0 },
        network: NetworkProfile { jitter_ms: 75, ..NetworkProfile::symmetric(110) },
        ..BenchConfig::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 1..=5u64 {
        let cfg = BenchConfig { seed, ..base.clone() };
        let a = sim::run_bench(&cfg).expect("bench runs");
        let b = sim::run_bench(&cfg).expect("bench runs");
        let deterministic = a.text == b.text && a.timeseries_csv == b.timeseries_csv;
        let rtl: Vec<u64> = a.outcome.log.samples.iter().map(|s| s.rtl_ms()).collect();
        let inside = rtl.iter().filter(|r| (100..=400).contains(*r)).count();
        let frac = inside as f64 / rtl.len().max(1) as f64;
        ok &= deterministic && frac >= 0.95 && !rtl.is_empty();
        parts.push(format!("seed={seed} in_range={:.1}% n={} det={deterministic}", frac * 100.0, rtl.len()));
    }
    outcome(ok, parts.join("; "))
}

fn outage_recovery() -> Outcome {
    let cfg = BenchConfig {
        duration_ms: 20_000,
        network: NetworkProfile { outage_period_ms: 5000, outage_duration_ms: 200, ..NetworkProfile::symmetric(100) },
        ..BenchConfig::default()
    };
    let out = sim::simulate(&cfg).expect("bench runs");
    let mut ok = true;
    let mut parts = Vec::new();
    for &label in &cfg.viewpoint_labels {
        let steady = out.steady_state(label, 1000, 4800).map(|s| s.fps).unwrap_or(0.0);
        let series = frame_rate(&out.log, label, cfg.fps_window_ms).expect("frames");
        for k in 1..4u64 {
            let start = k * 5000;
            let end = start + 200;
            let next = start + 5000;
            let dip = series
                .iter()
                .filter(|p| (start..end + 1500).contains(&p.t_ms))
                .map(|p| p.windowed_fps)
                .fold(f64::INFINITY, f64::min);
            let after: Vec<f64> = series
                .iter()
                .filter(|p| (end + 1500..next.min(cfg.duration_ms)).contains(&p.t_ms))
                .map(|p| p.windowed_fps)
                .collect();
            let recovered = !after.is_empty() && after.iter().all(|f| within(*f, steady, 0.10));
            // first point after which the window stays within 10%
            let settle = series
                .iter()
                .filter(|p| (end..next).contains(&p.t_ms))
                .rev()
                .take_while(|p| within(p.windowed_fps, steady, 0.10))
                .last()
                .map(|p| p.t_ms.saturating_sub(end));
            let dipped = dip < 0.9 * steady;
            ok &= dipped && recovered;
            parts.push(format!(
                "L{label}@{start}: dip={dip:.1} settle=+{}ms",
                settle.map(|s| s.to_string()).unwrap_or_else(|| "never".into())
            ));
        }
        parts.push(format!("L{label} steady={steady:.2}"));
    }
    outcome(ok, parts.join("; "))
}

/// Put/take timeline for one worker fed at `rate_hz` with a fixed render
/// time, computed without the library. Pending poses are drained after the
/// horizon, but only renders finished by then count as completed.
fn mailbox_oracle(rate_hz: f64, render_ms: u64, horizon_ms: u64) -> (u64, u64, u64) {
    let puts: Vec<u64> =
        (0u64..).map(|k| (k as f64 * 1000.0 / rate_hz).floor() as u64).take_while(|t| *t < horizon_ms).collect();
    let (mut takes, mut completed) = (0u64, 0u64);
    let mut pending = false;
    let mut busy_until: Option<u64> = None;
    let mut i = 0;
    let mut now = 0u64;
    loop {
        if let Some(b) = busy_until {
            if i < puts.len() && puts[i] < b {
                pending = true;
                i += 1;
                continue;
            }
            now = b;
            busy_until = None;
            if now <= horizon_ms {
                completed += 1;
            }
        }
        if i < puts.len() && puts[i] <= now {
            pending = true;
            i += 1;
            continue;
        }
        if pending {
            pending = false;
            takes += 1;
            busy_until = Some(now + render_ms);
            continue;
        }
        if i >= puts.len() {
            break;
        }
        now = puts[i];
    }
    let overwritten = puts.len() as u64 - takes - u64::from(pending);
    (completed, takes, overwritten)
}

struct CountingSink(AtomicU64);

impl MessageSink for CountingSink {
    fn send(&self, _: Vec<u8>) -> io::Result<()> {
        self.0.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }
    fn close(&self) {}
}

fn mailbox_semantics() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();

    #[derive(Debug, Clone)]
    enum Op {
        Put(u32),
        Take,
    }
    let ops = prop::collection::vec(prop_oneof![any::<u32>().prop_map(Op::Put), Just(Op::Take)], 0..300);
    let mut runner = TestRunner::new(PropConfig { cases: 512, failure_persistence: None, ..PropConfig::default() });
    let prop = runner.run(&ops, |seq| {
        let m = Mailbox::new();
        let mut last: Option<u32> = None;
        for op in seq {
            match op {
                Op::Put(v) => {
                    let replaced = m.put(v);
                    prop_assert_eq!(replaced, last.replace(v));
                }
                Op::Take => prop_assert_eq!(m.try_take(), last.take()),
            }
        }
        // at most one pending value regardless of history
        let pending = usize::from(m.try_take().is_some());
        prop_assert!(pending <= 1 && m.try_take().is_none());
        Ok(())
    });
    let prop_ok = prop.is_ok();
    parts.push(format!("interleavings={}", if prop_ok { "ok" } else { "FAILED" }));
    const _: () = assert!(std::mem::size_of::<Mailbox<[u8; 4096]>>() < 8192);

    let (want_done, want_takes, want_over) = mailbox_oracle(120.0, 30, 1000);
    let cfg =
        BenchConfig { duration_ms: 1000, pose_rate_hz: 120.0, viewpoint_labels: vec![0], ..BenchConfig::default() };
    let out = sim::simulate(&cfg).expect("bench runs");
    let c = out.counters[&0];
    let sim_done = out.frames.iter().filter(|f| f.receive_ms <= 1000).count() as u64;
    let sim_ok = sim_done == want_done && c.renders == want_takes && c.overwritten == want_over;
    parts.push(format!(
        "oracle renders={want_done} takes={want_takes} overwritten={want_over}; sim renders={sim_done} takes={} overwritten={}",
        c.renders, c.overwritten
    ));

    // live threads: real session, 30 ms busy renderer, 120 Hz feed for 1 s
    let intr = CameraIntrinsics::centered(32, 24, 32.0).unwrap();
    let factory: RendererFactory =
        Arc::new(|l| Box::new(PatternRenderer::new(l, RenderTime::Fixed { ms: 30.0 }, 0)) as Box<dyn Renderer>);
    let sink = Arc::new(CountingSink(AtomicU64::new(0)));
    let mut session = Session::new(ServerConfig::new(intr), factory, sink);
    session.handle_hello(&HelloMessage { client_id: "acc".into(), viewpoint_labels: vec![0] }).unwrap();
    let clock = MonotonicClock::new();
    for k in 0..120u64 {
        clock.sleep_until(k * 1000 / 120);
        session.dispatch_pose(PosePacket::new(0, k + 1, &Pose::identity())).unwrap();
    }
    clock.sleep_until(1000);
    let live = session.counts(0).unwrap();
    session.close();
    let live_ok = (31..=35).contains(&live.frames_rendered) && live.poses_overwritten >= 80;
    parts.push(format!("live renders={} overwritten={}", live.frames_rendered, live.poses_overwritten));

    let secs = start.elapsed().as_secs_f64();
    let ok = prop_ok && sim_ok && live_ok && (31..=35).contains(&want_done) && want_over >= 80 && secs < 5.0;
    outcome(ok, format!("{} ({secs:.2}s)", parts.join("; ")))
}

fn slab_field(sigma: f64, depth: f64, color: [f64; 3]) -> RadianceField {
    let bounds = Aabb::new(Vec3::new(-50.0, -50.0, -depth), Vec3::new(50.0, 50.0, 0.0));
    RadianceField::new(vec![Primitive::Box { bounds, sigma, color }], None, [0.0; 3])
}

fn oracle_ray(intr: &CameraIntrinsics, pose: &Pose, u: f64, v: f64) -> Vec3 {
    let x = (u - f64::from(intr.cx)) / f64::from(intr.fx);
    let y = -(v - f64::from(intr.cy)) / f64::from(intr.fy);
    (pose.rotation() * Vec3::new(x, y, -1.0)).normalize()
}

fn oracle_clip(b: &Aabb, o: &Vec3, d: &Vec3, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (lo, hi);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < b.min[k] || o[k] > b.max[k] {
                return None;
            }
            continue;
        }
        let (a, c) = ((b.min[k] - o[k]) / d[k], (b.max[k] - o[k]) / d[k]);
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    (t0 < t1).then_some((t0, t1))
}

/// Fine-step reference image: midpoint emission-absorption at `step`.
fn oracle_image(field: &RadianceField, req: &RenderRequest, step: f64) -> Vec<u8> {
    let intr = &req.intrinsics;
    let o = *req.pose.translation();
    let mut px = Vec::new();
    for v in 0..intr.height_px {
        for u in 0..intr.width_px {
            let d = oracle_ray(intr, &req.pose, f64::from(u) + 0.5, f64::from(v) + 0.5);
            let bg = field.background();
            let rgb = match oracle_clip(field.crop_box(), &o, &d, req.t_near, req.t_far) {
                None => bg,
                Some((t0, t1)) => {
                    let n = ((t1 - t0) / step).ceil() as usize;
                    let mut trans = 1.0;
                    let mut c = [0.0; 3];
                    for j in 0..n {
                        let a = t0 + j as f64 * step;
                        let b = (a + step).min(t1);
                        let (s, col) = field.sample(&(o + d * (0.5 * (a + b))));
                        let alpha = 1.0 - (-s * (b - a)).exp();
                        for k in 0..3 {
                            c[k] += trans * alpha * col[k];
                        }
                        trans *= 1.0 - alpha;
                    }
                    [0, 1, 2].map(|k| c[k] + trans * bg[k])
                }
            };
            px.extend(rgb.map(|x| (255.0 * x.clamp(0.0, 1.0)).round() as u8));
        }
    }
    px
}

fn bundled_scenes() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenes");
    let mut v: Vec<PathBuf> = std::fs::read_dir(&dir)
        .expect("scenes dir")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "scene"))
        .collect();
    v.sort();
    v
}

fn renderer_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let down = Vec3::new(0.0, 0.0, -1.0);
    let origin = Vec3::new(0.0, 0.0, 1.0);
    let mut worst_t = 0f64;
    for _ in 0..100 {
        let sigma = rng.random_range(0.01..8.0);
        let len = rng.random_range(0.01..2.0);
        let f = slab_field(sigma, len, [1.0; 3]);
        // march past both faces so the boundaries fall inside segments
        let t = transmittance(&f, &origin, &down, 0.75, 1.25 + len, 1e-5);
        worst_t = worst_t.max((t - (-sigma * len).exp()).abs());
    }
    let t_ok = worst_t <= 1e-4;

    let mut worst_px = 0i32;
    for _ in 0..50 {
        let sigma = rng.random_range(0.1..6.0);
        let depth = rng.random_range(0.05..1.0);
        let color = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let field = slab_field(sigma, depth, color);
        let intr = CameraIntrinsics::centered(9, 7, 10.0).unwrap();
        let pose = Pose::from_translation(Vec3::new(0.0, 0.0, rng.random_range(0.2..3.0)));
        let img = render_view(&field, &RenderRequest::new(intr, pose)).unwrap();
        for (u, v) in [(4usize, 3usize), (0, 0), (8, 6)] {
            let d = oracle_ray(&intr, &pose, u as f64 + 0.5, v as f64 + 0.5);
            let l = depth / -d.z;
            let a = 1.0 - (-sigma * l).exp();
            let got = img.pixel(u, v);
            for k in 0..3 {
                let want = (255.0 * (a * color[k])).round() as i32;
                worst_px = worst_px.max((i32::from(got[k]) - want).abs());
            }
        }
    }
    let px_ok = worst_px <= 1;

    let mut img_ok = true;
    let mut parts = vec![format!("transmittance max_err={worst_t:.2e}"), format!("box pixel max_diff={worst_px}")];
    for path in bundled_scenes() {
        let field = load_scene(&path).expect("bundled scene loads");
        let req = RenderRequest::new(
            CameraIntrinsics::centered(64, 48, 64.0).unwrap(),
            Pose::from_translation(Vec3::new(0.0, 0.0, 2.0)),
        );
        let img = match render_view(&field, &req) {
            Ok(i) => i,
            Err(nearport::renderer::RenderError::DegenerateRequest { image }) => image,
            Err(e) => panic!("{e}"),
        };
        let oracle = oracle_image(&field, &req, req.step_m / 100.0);
        let diff = img.pixels.iter().zip(&oracle).map(|(a, b)| a.abs_diff(*b)).max().unwrap_or(0);
        img_ok &= diff <= 2;
        parts.push(format!("{} max_diff={diff}/255", path.file_name().unwrap().to_string_lossy()));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(t_ok && px_ok && img_ok && secs < 60.0, format!("{} ({secs:.2}s)", parts.join("; ")))
}

fn hex(s: &str) -> Vec<u8> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap()).collect()
}

fn golden_vectors() -> Vec<(&'static str, Message, Vec<u8>)> {
    vec![
        (
            "hello",
            Message::Hello(HelloMessage { client_id: "ab".into(), viewpoint_labels: vec![0, 1] }),
            hex("4E415250 01 01 07000000  0200 6162 02 00 01"),
        ),
        (
            "intrinsics",
            Message::Intrinsics(IntrinsicsMessage {
                viewpoint_label: 1,
                intrinsics: CameraIntrinsics::new(640, 480, 500.0, 500.0, 320.0, 240.0).unwrap(),
            }),
            hex("4E415250 01 02 15000000  01 8002 E001 0000FA43 0000FA43 0000A043 00007043"),
        ),
        (
            "pose",
            Message::Pose(PosePacket { viewpoint_label: 0, timestamp_ms: 1000, pose: identity() }),
            hex(&format!(
                "4E415250 01 03 49000000 00 E803000000000000 {}",
                "0000803F 00000000 00000000 00000000 \
                 00000000 0000803F 00000000 00000000 \
                 00000000 00000000 0000803F 00000000 \
                 00000000 00000000 00000000 0000803F"
            )),
        ),
        (
            "frame",
            Message::Frame(FramePacket {
                viewpoint_label: 1,
                echoed_timestamp_ms: 0x0102,
                render_time_ms: 30.0,
                width_px: 1,
                height_px: 1,
                encoding: ImageEncoding::RawRgb8,
                image: vec![0xFF, 0x80, 0x00],
            }),
            hex("4E415250 01 04 19000000 01 0201000000000000 0000F041 0100 0100 00 03000000 FF8000"),
        ),
        ("ping", Message::Ping { nonce: 0 }, hex("4E415250 01 05 08000000 0000000000000000")),
        ("pong", Message::Pong { nonce: 0xDEADBEEF }, hex("4E415250 01 06 08000000 EFBEADDE00000000")),
    ]
}

fn identity() -> [f32; 16] {
    [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
}

fn random_message(rng: &mut ChaCha8Rng) -> Message {
    match rng.random_range(0..6) {
        0 => {
            let n = rng.random_range(1..=8usize);
            let mut labels: Vec<u8> = (0..=255).collect();
            for i in 0..n {
                let j = rng.random_range(i..256);
                labels.swap(i, j);
            }
            labels.truncate(n);
            let id_len = rng.random_range(0..40);
            let client_id: String = (0..id_len).map(|_| char::from(rng.random_range(b'a'..=b'z'))).collect();
            Message::Hello(HelloMessage { client_id: format!("{client_id}é"), viewpoint_labels: labels })
        }
        1 => {
            let w = rng.random_range(1..4000u16);
            let h = rng.random_range(1..4000u16);
            let cx = rng.random_range(0.0..f32::from(w));
            let cy = rng.random_range(0.0..f32::from(h));
            let (fx, fy) = (rng.random_range(1.0..5000.0), rng.random_range(1.0..5000.0));
            Message::Intrinsics(IntrinsicsMessage {
                viewpoint_label: rng.random(),
                intrinsics: CameraIntrinsics::new(w, h, fx, fy, cx, cy).unwrap(),
            })
        }
        2 => {
            let q = UnitQuaternion::from_axis_angle(
                &nalgebra::Unit::new_normalize(Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0) + 1e-3,
                )),
                rng.random_range(-3.1..3.1),
            );
            let t =
                Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            Message::Pose(PosePacket::new(rng.random(), rng.random(), &Pose::from_parts(&q, t)))
        }
        3 => {
            let (w, h) = (rng.random_range(1..20u16), rng.random_range(1..20u16));
            let png = rng.random_bool(0.3);
            let len = if png { rng.random_range(0..200) } else { 3 * usize::from(w) * usize::from(h) };
            Message::Frame(FramePacket {
                viewpoint_label: rng.random(),
                echoed_timestamp_ms: rng.random(),
                render_time_ms: rng.random_range(0.0..1000.0),
                width_px: w,
                height_px: h,
                encoding: if png { ImageEncoding::Png } else { ImageEncoding::RawRgb8 },
                image: (0..len).map(|_| rng.random()).collect(),
            })
        }
        4 => Message::Ping { nonce: rng.random() },
        _ => Message::Pong { nonce: rng.random() },
    }
}

fn all_prefixes_truncated(bytes: &[u8]) -> bool {
    (0..bytes.len()).all(|n| matches!(decode_message(&bytes[..n]), Err(DecodeError::TruncatedPayload { .. })))
}

fn protocol() -> Outcome {
    let mut parts = Vec::new();
    let mut golden_ok = true;
    let mut prefix_ok = true;
    for (name, msg, want) in golden_vectors() {
        let got = encode_message(&msg).expect("valid golden message");
        let same = got == want;
        let back = decode_message(&want).map(|m| m == msg).unwrap_or(false);
        golden_ok &= same && back;
        prefix_ok &= all_prefixes_truncated(&want);
        if !same {
            parts.push(format!("{name} mismatch"));
        }
    }
    parts.push(format!("golden={}", if golden_ok { "6/6" } else { "MISMATCH" }));
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut rt_fail = 0;
    for i in 0..10_000 {
        let m = random_message(&mut rng);
        let bytes = encode_message(&m).expect("random messages are valid");
        match decode_message(&bytes) {
            Ok(back) if back == m && encode_message(&back).unwrap() == bytes => {}
            _ => rt_fail += 1,
        }
        if i % 50 == 0 {
            prefix_ok &= all_prefixes_truncated(&bytes[..bytes.len().min(400)]);
        }
    }
    parts.push(format!("roundtrip_failures={rt_fail}/10000 prefixes={}", if prefix_ok { "rejected" } else { "LEAK" }));
    outcome(golden_ok && rt_fail == 0 && prefix_ok, parts.join("; "))
}

fn stereo_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_disp = 0f64;
    let mut worst_quad = 0f64;
    for _ in 0..2000 {
        let fx = rng.random_range(100.0f32..3000.0);
        let intr = CameraIntrinsics::new(1280, 720, fx, fx, 640.0, 360.0).unwrap();
        let ipd = rng.random_range(0.001..0.19);
        let z = rng.random_range(0.3..20.0);
        let q = UnitQuaternion::from_euler_angles(
            rng.random_range(-1.0..1.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-1.0..1.0),
        );
        let head = Pose::from_parts(&q, Vec3::new(rng.random_range(-5.0..5.0), 1.6, rng.random_range(-5.0..5.0)));
        let (l, r) = stereo_eye_poses(&StereoRig::new(head, ipd).unwrap());
        // a point straight ahead of the head, at depth z
        let p = head.translation() + head.rotation() * Vec3::new(rng.random_range(-0.5..0.5), 0.1, -z);
        let (ul, _) = project_point(&intr, &l, &p).unwrap();
        let (ur, _) = project_point(&intr, &r, &p).unwrap();
        let want = f64::from(fx) * ipd / z;
        worst_disp = worst_disp.max(((ul - ur) - want).abs());

        let w = rng.random_range(2..2000u16);
        let h = rng.random_range(2..2000u16);
        let qi = CameraIntrinsics::new(
            w,
            h,
            rng.random_range(50.0..3000.0),
            rng.random_range(50.0..3000.0),
            rng.random_range(0.0..f32::from(w)),
            rng.random_range(0.0..f32::from(h)),
        )
        .unwrap();
        let dist = rng.random_range(0.1..10.0);
        let corners = quad_for_frustum(&qi, dist);
        let image_corners = [(0.0, 0.0), (f64::from(w), 0.0), (f64::from(w), f64::from(h)), (0.0, f64::from(h))];
        for (c, (u, v)) in corners.iter().zip(image_corners) {
            let (pu, pv) = project_point(&qi, &Pose::identity(), c).unwrap();
            worst_quad = worst_quad.max((pu - u).abs()).max((pv - v).abs());
        }
    }
    outcome(
        worst_disp <= 1e-6 && worst_quad <= 1e-4,
        format!("disparity max_err={worst_disp:.2e}px quad max_err={worst_quad:.2e}px"),
    )
}

fn predictor_benefit() -> Outcome {
    let base = BenchConfig {
        network: NetworkProfile::symmetric(100),
        motion: Motion { velocity_mps: [0.5, 0.0, -0.2], yaw_rate_dps: 0.0 },
        ..BenchConfig::default()
    };
    let run = |horizon: f64| {
        let cfg =
            BenchConfig { predictor: Predictor::ConstantVelocity, prediction_horizon_ms: horizon, ..base.clone() };
        let out = sim::simulate(&cfg).expect("bench runs");
        let rtl = out.steady_state(0, cfg.warmup_ms, cfg.duration_ms).map(|s| s.mean_rtl_ms).unwrap_or(0.0);
        (out.mean_pose_error_m(cfg.warmup_ms).expect("frames"), rtl)
    };
    let (e0, rtl) = run(0.0);
    let (e230, _) = run(230.0);
    let reduction = 1.0 - e230 / e0;
    outcome(
        reduction >= 0.90,
        format!(
            "rtl={rtl:.1}ms err_h0={:.2}mm err_h230={:.2}mm reduction={:.1}%",
            e0 * 1e3,
            e230 * 1e3,
            reduction * 100.0
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("pipelining law", pipelining_law),
        ("jittered-network regime", jittered_regime),
        ("outage recovery", outage_recovery),
        ("mailbox semantics", mailbox_semantics),
        ("renderer correctness", renderer_correctness),
        ("protocol", protocol),
        ("stereo geometry", stereo_geometry),
        ("predictor benefit", predictor_benefit),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
