//! Explicit radiance fields: analytic primitives and trilinear voxel grids.

use crate::geometry::Vec3;

pub type Rgb = [f64; 3];

/// Axis-aligned box, meters. A box with `min > max` on any axis is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn empty() -> Self {
        Self { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    pub fn from_center_size(center: Vec3, size: Vec3) -> Self {
        Self { min: center - size / 2.0, max: center + size / 2.0 }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    /// Slab test: the parameter interval of `origin + t·dir` inside the box,
    /// intersected with `[t_min, t_max]`.
    pub fn clip_ray(&self, origin: &Vec3, dir: &Vec3, t_min: f64, t_max: f64) -> Option<(f64, f64)> {
        if self.is_empty() {
            return None;
        }
        let (mut lo, mut hi) = (t_min, t_max);
        for i in 0..3 {
            if dir[i] == 0.0 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let (mut a, mut b) = ((self.min[i] - origin[i]) * inv, (self.max[i] - origin[i]) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            lo = lo.max(a);
            hi = hi.min(b);
        }
        (lo < hi).then_some((lo, hi))
    }
}

/// Density samples on a regular lattice spanning `bounds`, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub bounds: Aabb,
    pub densities: Vec<f32>,
    pub color: Rgb,
}

impl VoxelGrid {
    fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        f64::from(self.densities[x + self.dims[0] * (y + self.dims[1] * z)])
    }

    pub fn density(&self, p: &Vec3) -> f64 {
        if !self.bounds.contains(p) {
            return 0.0;
        }
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for i in 0..3 {
            let cells = (self.dims[i] - 1) as f64;
            let extent = self.bounds.max[i] - self.bounds.min[i];
            let g = if extent > 0.0 { (p[i] - self.bounds.min[i]) / extent * cells } else { 0.0 };
            let g = g.clamp(0.0, cells);
            let b = (g.floor() as usize).min(self.dims[i] - 2);
            base[i] = b;
            frac[i] = g - b as f64;
        }
        let [x, y, z] = base;
        let [fx, fy, fz] = frac;
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(self.at(x, y, z), self.at(x + 1, y, z), fx);
        let c10 = lerp(self.at(x, y + 1, z), self.at(x + 1, y + 1, z), fx);
        let c01 = lerp(self.at(x, y, z + 1), self.at(x + 1, y, z + 1), fx);
        let c11 = lerp(self.at(x, y + 1, z + 1), self.at(x + 1, y + 1, z + 1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Homogeneous box; `size` is the full extent per axis.
    Box {
        bounds: Aabb,
        sigma: f64,
        color: Rgb,
    },
    Sphere {
        center: Vec3,
        radius: f64,
        sigma: f64,
        color: Rgb,
    },
    Grid(VoxelGrid),
}

impl Primitive {
    pub fn bounds(&self) -> Aabb {
        match self {
            Primitive::Box { bounds, .. } => *bounds,
            Primitive::Sphere { center, radius, .. } => {
                Aabb::new(center - Vec3::repeat(*radius), center + Vec3::repeat(*radius))
            }
            Primitive::Grid(g) => g.bounds,
        }
    }

    fn sample(&self, p: &Vec3) -> (f64, Rgb) {
        match self {
            Primitive::Box { bounds, sigma, color } => (if bounds.contains(p) { *sigma } else { 0.0 }, *color),
            Primitive::Sphere { center, radius, sigma, color } => {
                (if (p - center).norm_squared() <= radius * radius { *sigma } else { 0.0 }, *color)
            }
            Primitive::Grid(g) => (g.density(p), g.color),
        }
    }
}

/// Immutable volumetric scene: summed primitive densities, density-weighted
/// colors, and a hard crop outside of which density is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceField {
    primitives: Vec<Primitive>,
    crop_box: Aabb,
    background: Rgb,
}

impl RadianceField {
    /// `crop_box = None` crops to the union of the primitive bounds.
    pub fn new(primitives: Vec<Primitive>, crop_box: Option<Aabb>, background: Rgb) -> Self {
        let crop_box =
            crop_box.unwrap_or_else(|| primitives.iter().fold(Aabb::empty(), |acc, p| acc.union(&p.bounds())));
        Self { primitives, crop_box, background }
    }

    pub fn empty(background: Rgb) -> Self {
        Self::new(Vec::new(), None, background)
    }

    pub fn crop_box(&self) -> &Aabb {
        &self.crop_box
    }

    pub fn background(&self) -> Rgb {
        self.background
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn with_crop_box(mut self, crop_box: Aabb) -> Self {
        self.crop_box = crop_box;
        self
    }

    pub fn density(&self, p: &Vec3) -> f64 {
        self.sample(p).0
    }

    /// Density and color at `p`.
    pub fn sample(&self, p: &Vec3) -> (f64, Rgb) {
        if !self.crop_box.contains(p) {
            return (0.0, [0.0; 3]);
        }
        let mut sigma = 0.0;
        let mut weighted = [0.0; 3];
        for prim in &self.primitives {
            let (s, c) = prim.sample(p);
            if s > 0.0 {
                sigma += s;
                for k in 0..3 {
                    weighted[k] += s * c[k];
                }
            }
        }
        if sigma > 0.0 {
            (sigma, weighted.map(|w| w / sigma))
        } else {
            (0.0, [0.0; 3])
        }
    }
}
