//! Text scene format.
//!
//! One directive per line, `#` starts a comment, and an optional `=` may
//! follow the keyword (`background = 0 0 0`):
//!
//! ```text
//! background r g b
//! crop minx miny minz maxx maxy maxz
//! box cx cy cz sx sy sz sigma r g b
//! sphere cx cy cz radius sigma r g b
//! grid path nx ny nz minx miny minz maxx maxy maxz r g b
//! ```
//!
//! Box sizes are full extents. Grid files hold `nx·ny·nz` little-endian
//! float32 densities, x fastest, and are resolved relative to the scene file.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{Aabb, Primitive, RadianceField, Rgb, VoxelGrid};
use crate::geometry::Vec3;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
}

impl SceneError {
    pub fn class(&self) -> &'static str {
        match self {
            SceneError::Io { .. } | SceneError::Parse { .. } => "ParseError",
            SceneError::Validation { .. } => "ValidationError",
        }
    }
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<RadianceField, SceneError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SceneError::Io { path: path.to_owned(), source })?;
    parse_scene(&text, path.parent())
}

struct Line<'a> {
    number: usize,
    keyword: &'a str,
    args: Vec<&'a str>,
}

impl Line<'_> {
    fn parse_err(&self, message: impl Into<String>) -> SceneError {
        SceneError::Parse { line: self.number, message: message.into() }
    }

    fn invalid(&self, message: impl Into<String>) -> SceneError {
        SceneError::Validation { line: self.number, message: message.into() }
    }

    fn expect_args(&self, n: usize, usage: &str) -> Result<(), SceneError> {
        if self.args.len() != n {
            return Err(self.parse_err(format!(
                "`{}` takes {n} values ({usage}), found {}",
                self.keyword,
                self.args.len()
            )));
        }
        Ok(())
    }

    fn num(&self, idx: usize, name: &str) -> Result<f64, SceneError> {
        let raw = self.args[idx];
        let v: f64 = raw.parse().map_err(|_| self.parse_err(format!("field `{name}`: `{raw}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.parse_err(format!("field `{name}` must be finite")));
        }
        Ok(v)
    }

    fn vec3(&self, idx: usize, name: &str) -> Result<Vec3, SceneError> {
        Ok(Vec3::new(self.num(idx, name)?, self.num(idx + 1, name)?, self.num(idx + 2, name)?))
    }

    fn rgb(&self, idx: usize) -> Result<Rgb, SceneError> {
        let c = [self.num(idx, "r")?, self.num(idx + 1, "g")?, self.num(idx + 2, "b")?];
        if c.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(self.invalid("color channels must lie in [0, 1]"));
        }
        Ok(c)
    }

    fn sigma(&self, idx: usize) -> Result<f64, SceneError> {
        let s = self.num(idx, "sigma")?;
        if s < 0.0 {
            return Err(self.invalid(format!("negative density sigma={s}")));
        }
        Ok(s)
    }

    fn bounds(&self, idx: usize) -> Result<Aabb, SceneError> {
        let b = Aabb::new(self.vec3(idx, "min")?, self.vec3(idx + 3, "max")?);
        if b.is_empty() {
            return Err(self.invalid("box min must not exceed max"));
        }
        Ok(b)
    }
}

fn tokenize(number: usize, raw: &str) -> Option<Line<'_>> {
    let content = raw.split('#').next().unwrap_or("").trim();
    if content.is_empty() {
        return None;
    }
    let (keyword, rest) = match content.find(|c: char| c.is_whitespace() || c == '=') {
        Some(i) => (&content[..i], content[i..].trim_start()),
        None => (content, ""),
    };
    let rest = rest.strip_prefix('=').unwrap_or(rest);
    Some(Line { number, keyword, args: rest.split_whitespace().collect() })
}

pub fn parse_scene(text: &str, base_dir: Option<&Path>) -> Result<RadianceField, SceneError> {
    let mut primitives = Vec::new();
    let mut crop = None;
    let mut background = [0.0; 3];
    let mut directives = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let Some(line) = tokenize(i + 1, raw) else { continue };
        directives += 1;
        match line.keyword {
            "background" => {
                line.expect_args(3, "r g b")?;
                background = line.rgb(0)?;
            }
            "crop" => {
                line.expect_args(6, "minx miny minz maxx maxy maxz")?;
                crop = Some(line.bounds(0)?);
            }
            "box" => {
                line.expect_args(10, "cx cy cz sx sy sz sigma r g b")?;
                let center = line.vec3(0, "center")?;
                let size = line.vec3(3, "size")?;
                if size.iter().any(|s| *s <= 0.0) {
                    return Err(line.invalid("box sizes must be positive"));
                }
                let sigma = line.sigma(6)?;
                let color = line.rgb(7)?;
                primitives.push(Primitive::Box { bounds: Aabb::from_center_size(center, size), sigma, color });
            }
            "sphere" => {
                line.expect_args(8, "cx cy cz radius sigma r g b")?;
                let center = line.vec3(0, "center")?;
                let radius = line.num(3, "radius")?;
                if radius <= 0.0 {
                    return Err(line.invalid("sphere radius must be positive"));
                }
                let sigma = line.sigma(4)?;
                let color = line.rgb(5)?;
                primitives.push(Primitive::Sphere { center, radius, sigma, color });
            }
            "grid" => {
                line.expect_args(13, "path nx ny nz minx miny minz maxx maxy maxz r g b")?;
                let mut dims = [0usize; 3];
                for (k, d) in dims.iter_mut().enumerate() {
                    let raw = line.args[1 + k];
                    *d =
                        raw.parse().map_err(|_| line.parse_err(format!("grid dimension `{raw}` is not an integer")))?;
                    if *d < 2 {
                        return Err(line.invalid("grid dimensions must be at least 2 per axis"));
                    }
                }
                let bounds = line.bounds(4)?;
                let color = line.rgb(10)?;
                let path = base_dir.map_or_else(|| PathBuf::from(line.args[0]), |d| d.join(line.args[0]));
                let bytes = fs::read(&path).map_err(|source| SceneError::Io { path: path.clone(), source })?;
                let expected = dims.iter().product::<usize>() * 4;
                if bytes.len() != expected {
                    return Err(line.parse_err(format!(
                        "grid file {} has {} bytes, expected {expected}",
                        path.display(),
                        bytes.len()
                    )));
                }
                let densities: Vec<f32> =
                    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
                if let Some((idx, v)) = densities.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
                    return Err(line.invalid(format!("grid voxel {idx} has invalid density {v}")));
                }
                primitives.push(Primitive::Grid(VoxelGrid { dims, bounds, densities, color }));
            }
            other => return Err(line.parse_err(format!("unknown directive `{other}`"))),
        }
    }
    if directives == 0 {
        return Err(SceneError::Parse { line: 0, message: "scene file is empty".into() });
    }
    Ok(RadianceField::new(primitives, crop, background))
}
