//! Deterministic checkerboard renderer for end-to-end tests.
//!
//! The checker phase moves with the pose translation quantized to 1 cm
//! (2 px per cm in x and y, parity flip per cm in z) and a row of eight
//! squares in the top-left corner spells the viewpoint label, MSB first.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{RenderError, RenderRequest, RenderTime, RenderedImage, Renderer};
use crate::geometry::{CameraIntrinsics, Pose};

pub const CHECKER_CELL_PX: i64 = 8;
const SHIFT_PX_PER_CM: i64 = 2;
const LIGHT: [u8; 3] = [210, 210, 210];
const DARK: [u8; 3] = [40, 40, 40];
const BIT_ON: [u8; 3] = [255, 200, 0];
const BIT_OFF: [u8; 3] = [0, 0, 0];
const GLYPH_SQUARE: usize = 3;
const GLYPH_PITCH: usize = 4;

fn quantize_cm(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

fn draw(req: &RenderRequest, seed_label: u8) -> Vec<u8> {
    let (w, h) = (usize::from(req.intrinsics.width_px), usize::from(req.intrinsics.height_px));
    let t = req.pose.translation();
    let (qx, qy, qz) = (quantize_cm(t.x), quantize_cm(t.y), quantize_cm(t.z));
    let mut pixels = Vec::with_capacity(3 * w * h);
    for v in 0..h {
        for u in 0..w {
            let cu = (u as i64 + qx * SHIFT_PX_PER_CM).div_euclid(CHECKER_CELL_PX);
            let cv = (v as i64 - qy * SHIFT_PX_PER_CM).div_euclid(CHECKER_CELL_PX);
            let light = (cu + cv + qz).rem_euclid(2) == 0;
            pixels.extend(if light { LIGHT } else { DARK });
        }
    }
    let glyph_h = (GLYPH_PITCH + 1).min(h);
    let glyph_w = (8 * GLYPH_PITCH + 1).min(w);
    for v in 0..glyph_h {
        for u in 0..glyph_w {
            let (bit, in_u) = ((u.saturating_sub(1)) / GLYPH_PITCH, (u.saturating_sub(1)) % GLYPH_PITCH);
            let inside = u >= 1 && v >= 1 && in_u < GLYPH_SQUARE && v - 1 < GLYPH_SQUARE && bit < 8;
            let color = if inside && (seed_label >> (7 - bit)) & 1 == 1 { BIT_ON } else { BIT_OFF };
            let i = 3 * (v * w + u);
            pixels[i..i + 3].copy_from_slice(&color);
        }
    }
    pixels
}

/// Reads the label glyph back out of a pattern image.
pub fn decode_label_glyph(image: &RenderedImage) -> Option<u8> {
    if usize::from(image.width_px) < 8 * GLYPH_PITCH + 1 || usize::from(image.height_px) < GLYPH_PITCH {
        return None;
    }
    let mut label = 0u8;
    for bit in 0..8 {
        let px = image.pixel(1 + bit * GLYPH_PITCH, 1);
        label = (label << 1) | u8::from(px == BIT_ON);
    }
    Some(label)
}

/// Draws the pattern, then spins until `busy` has elapsed since the start.
/// The reported render time is the measured wall time.
pub fn render_test_pattern(req: &RenderRequest, seed_label: u8, busy: Duration) -> RenderedImage {
    let start = Instant::now();
    let pixels = draw(req, seed_label);
    busy_wait_until(start + busy);
    RenderedImage {
        width_px: req.intrinsics.width_px,
        height_px: req.intrinsics.height_px,
        pixels,
        render_time_ms: (start.elapsed().as_secs_f64() * 1000.0).max(1e-3) as f32,
    }
}

fn busy_wait_until(deadline: Instant) {
    // sleep through most of the wait, spin the last millisecond
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let left = deadline - now;
        if left > Duration::from_millis(2) {
            std::thread::sleep(left - Duration::from_millis(1));
        } else {
            std::hint::spin_loop();
        }
    }
}

/// Pattern renderer with an emulated render cost per frame.
#[derive(Debug, Clone)]
pub struct PatternRenderer {
    label: u8,
    cost: RenderTime,
    rng: ChaCha8Rng,
    /// When false the cost is reported without waiting (simulated clocks).
    pub wait: bool,
}

impl PatternRenderer {
    pub fn new(label: u8, cost: RenderTime, seed: u64) -> Self {
        Self { label, cost, rng: ChaCha8Rng::seed_from_u64(seed ^ (u64::from(label) << 56)), wait: true }
    }

    pub fn simulated(label: u8, cost: RenderTime, seed: u64) -> Self {
        Self { wait: false, ..Self::new(label, cost, seed) }
    }

    /// Draws the next emulated render duration, in milliseconds.
    pub fn next_cost_ms(&mut self) -> f64 {
        self.cost.sample(&mut self.rng)
    }
}

impl Renderer for PatternRenderer {
    fn render(&mut self, pose: &Pose, intrinsics: &CameraIntrinsics) -> Result<RenderedImage, RenderError> {
        let req = RenderRequest::new(*intrinsics, *pose);
        req.validate()?;
        let cost = self.next_cost_ms();
        if self.wait {
            Ok(render_test_pattern(&req, self.label, RenderTime::as_duration(cost)))
        } else {
            let mut img = render_test_pattern(&req, self.label, Duration::ZERO);
            img.render_time_ms = cost as f32;
            Ok(img)
        }
    }
}
