//! Fixed-step emission-absorption raymarching with midpoint sampling.

use std::sync::Arc;
use std::time::Instant;

use super::{quantize, RadianceField, RenderError, RenderRequest, RenderedImage, Renderer, Rgb};
use crate::geometry::{ray_direction_unchecked, CameraIntrinsics, Pose, Vec3};

/// Segments of length `step` starting at `t0`; the last one is shortened to
/// end exactly at `t1`.
fn segments(t0: f64, t1: f64, step: f64) -> impl Iterator<Item = (f64, f64)> {
    let n = if t1 > t0 { ((t1 - t0) / step).ceil() as u64 } else { 0 };
    (0..n).map(move |j| {
        let a = t0 + j as f64 * step;
        let b = (t0 + (j + 1) as f64 * step).min(t1);
        (a, b)
    })
}

/// `exp(−Σ σ_j·δ_j)` along `origin + t·direction` over `[t0, t1]`.
pub fn transmittance(field: &RadianceField, origin: &Vec3, direction: &Vec3, t0: f64, t1: f64, step: f64) -> f64 {
    let optical_depth: f64 =
        segments(t0, t1, step).map(|(a, b)| field.density(&(origin + direction * (0.5 * (a + b)))) * (b - a)).sum();
    (-optical_depth).exp()
}

/// Composited color along one ray, before quantization. `None` when the ray
/// misses the crop box.
fn march(field: &RadianceField, origin: &Vec3, dir: &Vec3, req: &RenderRequest) -> Option<Rgb> {
    let (t0, t1) = field.crop_box().clip_ray(origin, dir, req.t_near, req.t_far)?;
    let mut trans = 1.0;
    let mut color = [0.0; 3];
    for (a, b) in segments(t0, t1, req.step_m) {
        let (sigma, c) = field.sample(&(origin + dir * (0.5 * (a + b))));
        if sigma <= 0.0 {
            continue;
        }
        let seg = (-sigma * (b - a)).exp();
        let weight = trans * (1.0 - seg);
        for k in 0..3 {
            color[k] += weight * c[k];
        }
        trans *= seg;
    }
    let bg = field.background();
    Some([0, 1, 2].map(|k| color[k] + trans * bg[k]))
}

/// Renders one view. Pixels are sampled at their centers.
pub fn render_view(field: &RadianceField, req: &RenderRequest) -> Result<RenderedImage, RenderError> {
    req.validate()?;
    let start = Instant::now();
    let intr = &req.intrinsics;
    let (w, h) = (usize::from(intr.width_px), usize::from(intr.height_px));
    let origin = *req.pose.translation();
    let bg = field.background().map(quantize);
    let mut pixels = Vec::with_capacity(3 * w * h);
    let mut any_hit = false;
    for v in 0..h {
        for u in 0..w {
            let dir = ray_direction_unchecked(intr, &req.pose, u as f64 + 0.5, v as f64 + 0.5);
            match march(field, &origin, &dir, req) {
                Some(c) => {
                    any_hit = true;
                    pixels.extend(c.map(quantize));
                }
                None => pixels.extend(bg),
            }
        }
    }
    let render_time_ms = (start.elapsed().as_secs_f64() * 1000.0).max(1e-3) as f32;
    let image = RenderedImage { width_px: intr.width_px, height_px: intr.height_px, pixels, render_time_ms };
    if any_hit {
        Ok(image)
    } else {
        Err(RenderError::DegenerateRequest { image })
    }
}

/// [`Renderer`] backed by a shared, immutable field.
#[derive(Debug, Clone)]
pub struct RaymarchRenderer {
    field: Arc<RadianceField>,
    pub step_m: f64,
    pub t_near: f64,
    pub t_far: f64,
}

impl RaymarchRenderer {
    pub fn new(field: Arc<RadianceField>) -> Self {
        Self { field, step_m: super::DEFAULT_STEP_M, t_near: super::DEFAULT_T_NEAR_M, t_far: super::DEFAULT_T_FAR_M }
    }
}

impl Renderer for RaymarchRenderer {
    fn render(&mut self, pose: &Pose, intrinsics: &CameraIntrinsics) -> Result<RenderedImage, RenderError> {
        let req = RenderRequest {
            intrinsics: *intrinsics,
            pose: *pose,
            step_m: self.step_m,
            t_near: self.t_near,
            t_far: self.t_far,
        };
        match render_view(&self.field, &req) {
            Err(RenderError::DegenerateRequest { image }) => Ok(image),
            other => other,
        }
    }
}
