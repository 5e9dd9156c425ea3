use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nearport"));
    c.env("NEARPORT_LOG", "warn");
    c
}

fn scenes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenes")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn render_still_reproduces_the_golden_image() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("box.ppm");
    let o = bin()
        .args(["render-still", "--scene"])
        .arg(scenes().join("box.scene"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(out).unwrap(), std::fs::read(scenes().join("box_golden.ppm")).unwrap());
}

#[test]
fn render_still_writes_png() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.png");
    let o = bin()
        .args(["render-still", "--width", "16", "--height", "12", "--focal", "16", "--scene"])
        .arg(scenes().join("sphere.scene"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(&std::fs::read(out).unwrap()[..4], b"\x89PNG");
}

#[test]
fn malformed_scene_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scene");
    std::fs::write(&bad, "background 0 0 0\nsphere 0 0\n").unwrap();
    let o =
        bin().args(["render-still", "--scene"]).arg(&bad).arg("--out").arg(dir.path().join("x.ppm")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("class=ParseError"), "{}", stderr(&o));
}

#[test]
fn non_rigid_pose_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["render-still", "--pose", "2 0 0 0 0 1 0 0 0 0 1 2 0 0 0 1", "--scene"])
        .arg(scenes().join("box.scene"))
        .arg("--out")
        .arg(dir.path().join("x.ppm"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("class=InvariantViolation"), "{}", stderr(&o));
}

#[test]
fn bench_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = bin()
            .args(["bench", "--seed", "7", "--duration-ms", "4000", "--jitter-ms", "40", "--set", "render_min_ms=30"])
            .args(["--set", "render_max_ms=40", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        (o.stdout, std::fs::read(out.join("report.txt")).unwrap(), std::fs::read(out.join("timeseries.csv")).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let text = String::from_utf8(a.0).unwrap();
    assert!(text.contains("config.seed=7"), "{text}");
    assert!(a.2.starts_with(b"label,t_ms,rtl_ms,instantaneous_fps,windowed_fps\n"));
}

#[test]
fn bench_rejects_unknown_keys() {
    let o = bin().args(["bench", "--set", "delay_msec=4"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("delay_msec"), "{}", stderr(&o));
}

#[test]
fn malformed_trace_reports_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    std::fs::write(&trace, "t_ms,tx,ty,tz,qx,qy,qz,qw\n0,0,0,2,0,0,0,1\n10,0,0,2,0,0,zero,1\n").unwrap();
    let o = bin().args(["replay", "--server", "127.0.0.1:1", "--trace"]).arg(&trace).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("class=ParseError") && err.contains("row 3"), "{err}");
}

#[test]
fn serve_and_replay_end_to_end() {
    let mut server = bin()
        .args(["serve", "--renderer", "pattern", "--render-ms", "20", "--width", "48", "--height", "32"])
        .args(["--focal", "40", "--duration-s", "5"])
        .env("NEARPORT_LISTEN", "127.0.0.1:0,127.0.0.1:0")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let tcp = line.split_whitespace().find_map(|w| w.strip_prefix("tcp=")).expect("listening line").to_owned();

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = bin()
        .args(["replay", "--server", &tcp, "--duration-ms", "1500", "--drain-ms", "300", "--delay-ms", "20"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("label=0 fps=") && stdout.contains("label=1 fps="), "{stdout}");
    for f in ["label_0.csv", "label_1.csv", "summary.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let csv = std::fs::read_to_string(out.join("label_0.csv")).unwrap();
    assert!(csv.lines().count() > 20, "{csv}");
    let status = server.wait().unwrap();
    assert!(status.success());
}
