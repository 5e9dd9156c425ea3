//! Pluggable renderers.
//!
//! The server treats a renderer as a black box: pose and intrinsics in,
//! RGB image plus measured render time out. Two implementations ship here: an
//! emission-absorption raymarcher over explicit radiance fields and a
//! deterministic test-pattern renderer with emulated render cost.

mod field;
mod pattern;
mod raymarch;
mod scene;

use std::time::Duration;

use rand::Rng;
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose};

pub use field::{Aabb, Primitive, RadianceField, Rgb, VoxelGrid};
pub use pattern::{decode_label_glyph, render_test_pattern, PatternRenderer, CHECKER_CELL_PX};
pub use raymarch::{render_view, transmittance, RaymarchRenderer};
pub use scene::{load_scene, parse_scene, SceneError};

pub const DEFAULT_STEP_M: f64 = 0.005;
pub const DEFAULT_T_NEAR_M: f64 = 0.05;
pub const DEFAULT_T_FAR_M: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("invalid render request: {0}")]
    InvalidRequest(String),
    /// No ray intersects the crop box; the background image is still returned.
    #[error("degenerate request: no ray reaches the crop box")]
    DegenerateRequest { image: RenderedImage },
    #[error("renderer failure: {0}")]
    Failure(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderRequest {
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    pub step_m: f64,
    pub t_near: f64,
    pub t_far: f64,
}

impl RenderRequest {
    pub fn new(intrinsics: CameraIntrinsics, pose: Pose) -> Self {
        Self { intrinsics, pose, step_m: DEFAULT_STEP_M, t_near: DEFAULT_T_NEAR_M, t_far: DEFAULT_T_FAR_M }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        self.intrinsics.validate().map_err(|e| RenderError::InvalidRequest(e.to_string()))?;
        if !(self.step_m > 0.0 && self.step_m.is_finite()) {
            return Err(RenderError::InvalidRequest(format!("step {} must be positive", self.step_m)));
        }
        if !(self.t_near >= 0.0 && self.t_near < self.t_far) {
            return Err(RenderError::InvalidRequest(format!(
                "need 0 <= t_near < t_far, got [{}, {}]",
                self.t_near, self.t_far
            )));
        }
        Ok(())
    }
}

/// 8-bit RGB, row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width_px: u16,
    pub height_px: u16,
    pub pixels: Vec<u8>,
    pub render_time_ms: f32,
}

impl RenderedImage {
    pub fn pixel(&self, u: usize, v: usize) -> [u8; 3] {
        let i = 3 * (v * usize::from(self.width_px) + u);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Largest per-channel absolute difference; `None` if sizes differ.
    pub fn max_channel_diff(&self, other: &RenderedImage) -> Option<u8> {
        if (self.width_px, self.height_px) != (other.width_px, other.height_px) {
            return None;
        }
        Some(self.pixels.iter().zip(&other.pixels).map(|(a, b)| a.abs_diff(*b)).max().unwrap_or(0))
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width_px, self.height_px).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Option<RenderedImage> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return None;
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return None;
        }
        let (w, h): (u16, u16) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
        let pixels = bytes.get(pos + 1..)?.to_vec();
        (pixels.len() == 3 * usize::from(w) * usize::from(h)).then_some(RenderedImage {
            width_px: w,
            height_px: h,
            pixels,
            render_time_ms: 0.0,
        })
    }

    pub fn to_png(&self) -> Result<Vec<u8>, png::EncodingError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, u32::from(self.width_px), u32::from(self.height_px));
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.pixels)?;
        }
        Ok(out)
    }
}

/// Channel quantization: `round(255·x)` after clamping to [0, 1].
pub fn quantize(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub trait Renderer: Send {
    fn render(&mut self, pose: &Pose, intrinsics: &CameraIntrinsics) -> Result<RenderedImage, RenderError>;
}

impl<R: Renderer + ?Sized> Renderer for Box<R> {
    fn render(&mut self, pose: &Pose, intrinsics: &CameraIntrinsics) -> Result<RenderedImage, RenderError> {
        (**self).render(pose, intrinsics)
    }
}

/// Emulated render cost for the test-pattern renderer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RenderTime {
    Fixed {
        ms: f64,
    },
    /// Uniform in `[min_ms, max_ms]`.
    Uniform {
        min_ms: f64,
        max_ms: f64,
    },
}

impl RenderTime {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RenderTime::Fixed { ms } => ms,
            RenderTime::Uniform { min_ms, max_ms } if max_ms > min_ms => rng.random_range(min_ms..=max_ms),
            RenderTime::Uniform { min_ms, .. } => min_ms,
        }
    }

    pub fn as_duration(ms: f64) -> Duration {
        Duration::from_secs_f64(ms.max(0.0) / 1000.0)
    }
}
