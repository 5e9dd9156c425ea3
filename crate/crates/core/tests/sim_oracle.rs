use nearport::netsim::NetworkProfile;
use nearport::renderer::RenderTime;
use nearport::sim::{simulate, BenchConfig};

/// Independent replay of one label's server: poses arrive at `send + d`,
/// each render takes `r` and picks the newest pose that has arrived.
/// Returns `(take_ms, arrival_ms_of_taken_pose, receive_ms)` per frame.
fn single_label_oracle(rate_hz: f64, duration_ms: u64, d: u64, r: u64) -> Vec<(u64, u64, u64)> {
    let arrivals: Vec<u64> = (0u64..)
        .map(|k| (k as f64 * 1000.0 / rate_hz).floor() as u64)
        .take_while(|t| *t < duration_ms)
        .map(|t| t + d)
        .collect();
    let mut out = Vec::new();
    let mut next = 0usize;
    let mut t = arrivals[0];
    while next < arrivals.len() {
        let newest = (next..arrivals.len()).take_while(|&i| arrivals[i] <= t).last().expect("pose available");
        let finish = t + r;
        out.push((t, arrivals[newest], finish + d));
        next = newest + 1;
        if next < arrivals.len() {
            t = finish.max(arrivals[next]);
        }
    }
    out
}

#[test]
fn frame_timeline_matches_independent_replay() {
    for (rate, d, r) in [(60.0, 100, 30), (120.0, 50, 30), (60.0, 20, 10), (45.0, 0, 37)] {
        let cfg = BenchConfig {
            duration_ms: 3000,
            pose_rate_hz: rate,
            viewpoint_labels: vec![0],
            render: RenderTime::Fixed { ms: r as f64 },
            network: NetworkProfile::symmetric(d),
            ..BenchConfig::default()
        };
        let out = simulate(&cfg).unwrap();
        let mut got: Vec<(u64, u64, u64)> =
            out.frames.iter().map(|f| (f.take_ms, f.server_arrival_ms, f.receive_ms)).collect();
        got.sort_unstable();
        let want = single_label_oracle(rate, cfg.duration_ms, d, r);
        assert_eq!(got, want, "rate={rate} d={d} r={r}");
    }
}

#[test]
fn throughput_is_the_slower_of_feed_and_render() {
    for (rate, r) in [(60.0, 10.0), (60.0, 30.0), (120.0, 30.0), (30.0, 50.0), (90.0, 12.0)] {
        let cfg = BenchConfig {
            pose_rate_hz: rate,
            render: RenderTime::Fixed { ms: r },
            network: NetworkProfile::symmetric(80),
            ..BenchConfig::default()
        };
        let out = simulate(&cfg).unwrap();
        let want = rate.min(1000.0 / r);
        for label in [0, 1] {
            let s = out.steady_state(label, cfg.warmup_ms, cfg.duration_ms).unwrap();
            assert!((s.fps - want).abs() <= 0.03 * want, "rate={rate} r={r}: fps {} want {want}", s.fps);
        }
    }
}

#[test]
fn jitter_never_reorders_a_direction() {
    let cfg = BenchConfig {
        network: NetworkProfile { jitter_ms: 60, seed: 3, ..NetworkProfile::symmetric(90) },
        seed: 3,
        ..BenchConfig::default()
    };
    let out = simulate(&cfg).unwrap();
    for label in [0, 1] {
        let frames: Vec<_> = out.frames.iter().filter(|f| f.label == label).collect();
        assert!(frames.windows(2).all(|w| w[0].receive_ms <= w[1].receive_ms));
        assert!(frames.windows(2).all(|w| w[0].pose_timestamp_ms < w[1].pose_timestamp_ms));
        for f in frames {
            assert!(f.uplink_ms() >= 30 && f.downlink_ms() >= 30);
        }
    }
}
