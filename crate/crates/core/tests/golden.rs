use std::path::PathBuf;

use nearport::geometry::{CameraIntrinsics, Pose, Vec3};
use nearport::renderer::{load_scene, render_view, RenderRequest, RenderedImage};

fn scene_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenes")
}

fn canonical() -> RenderRequest {
    RenderRequest::new(
        CameraIntrinsics::centered(64, 48, 64.0).unwrap(),
        Pose::from_translation(Vec3::new(0.0, 0.0, 2.0)),
    )
}

#[test]
fn box_scene_matches_golden_bit_for_bit() {
    let field = load_scene(scene_dir().join("box.scene")).unwrap();
    let img = render_view(&field, &canonical()).unwrap();
    let golden = RenderedImage::from_ppm(&std::fs::read(scene_dir().join("box_golden.ppm")).unwrap()).unwrap();
    assert_eq!((img.width_px, img.height_px), (golden.width_px, golden.height_px));
    assert!(img.pixels == golden.pixels, "max diff {:?}", img.max_channel_diff(&golden));
}

/// Closed form for a homogeneous cube: alpha = 1 - exp(-sigma * chord).
#[test]
fn golden_agrees_with_closed_form_cube() {
    let golden = RenderedImage::from_ppm(&std::fs::read(scene_dir().join("box_golden.ppm")).unwrap()).unwrap();
    let (sigma, half, color, bg) = (3.0, 0.3, [0.9, 0.35, 0.2], [0.05, 0.05, 0.1]);
    let (w, h, f) = (64.0, 48.0, 64.0);
    let mut worst = 0u8;
    for v in 0..48 {
        for u in 0..64 {
            let d = Vec3::new((u as f64 + 0.5 - w / 2.0) / f, -(v as f64 + 0.5 - h / 2.0) / f, -1.0).normalize();
            let o = Vec3::new(0.0, 0.0, 2.0);
            let (mut t0, mut t1) = (0.05f64, 20.0f64);
            for k in 0..3 {
                if d[k].abs() < 1e-12 {
                    continue;
                }
                let (a, b) = ((-half - o[k]) / d[k], (half - o[k]) / d[k]);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
            let chord = (t1 - t0).max(0.0);
            let tr = (-sigma * chord).exp();
            let want = [0, 1, 2].map(|k| (255.0 * ((1.0 - tr) * color[k] + tr * bg[k])).round() as u8);
            let got = golden.pixel(u, v);
            for k in 0..3 {
                worst = worst.max(got[k].abs_diff(want[k]));
            }
        }
    }
    assert!(worst <= 2, "max diff {worst}/255");
}
