//! Pinhole camera math, stereo rig derivation and frustum-aligned quads.
//!
//! Conventions: camera-to-world poses, the camera looks along −Z with +Y up
//! and +X right. Image `u` grows to the right and `v` grows downward.

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid stereo rig: ipd {0} m outside [0, 0.2)")]
    InvalidIpd(f64),
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfImage { u: f64, v: f64, width: u16, height: u16 },
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
}

/// Pinhole camera parameters, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub width_px: u16,
    pub height_px: u16,
    pub fx: f32,
    pub fy: f32,
    pub cx: f32,
    pub cy: f32,
}

impl CameraIntrinsics {
    pub fn new(width_px: u16, height_px: u16, fx: f32, fy: f32, cx: f32, cy: f32) -> Result<Self, GeometryError> {
        let intr = Self { width_px, height_px, fx, fy, cx, cy };
        intr.validate()?;
        Ok(intr)
    }

    /// Principal point at the image center, square pixels.
    pub fn centered(width_px: u16, height_px: u16, focal_px: f32) -> Result<Self, GeometryError> {
        Self::new(width_px, height_px, focal_px, focal_px, f32::from(width_px) / 2.0, f32::from(height_px) / 2.0)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if self.width_px == 0 || self.height_px == 0 {
            return bad("width and height must be positive");
        }
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return bad("focal lengths must be positive and finite");
        }
        if !(self.cx >= 0.0 && self.cx < f32::from(self.width_px)) {
            return bad("cx must lie in [0, width)");
        }
        if !(self.cy >= 0.0 && self.cy < f32::from(self.height_px)) {
            return bad("cy must lie in [0, height)");
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        usize::from(self.width_px) * usize::from(self.height_px)
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

const POSE_TOL: f64 = 1e-6;

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    /// Checked constructor: the rotation must be orthonormal with det +1 within 1e-6.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeometryError> {
        check_rotation(&rotation, POSE_TOL).map_err(GeometryError::InvalidPose)?;
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::InvalidPose("translation is not finite".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    pub fn from_parts(rotation: &UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self { rotation: *rotation.to_rotation_matrix().matrix(), translation }
    }

    /// Builds a pose from a nearly-orthonormal block (e.g. one that went through
    /// 32-bit floats) by projecting it back onto SO(3).
    pub fn from_rotation_lossy(rotation: &Matrix3<f64>, translation: Vec3) -> Result<Self, GeometryError> {
        check_rotation(rotation, 1e-3).map_err(GeometryError::InvalidPose)?;
        let r = Rotation3::from_matrix_eps(rotation, 1e-12, 100, Rotation3::identity());
        Self::new(*r.matrix(), translation)
    }

    /// Row-major camera-to-world 4x4.
    pub fn from_row_major(m: &[f32; 16]) -> Result<Self, GeometryError> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::InvalidPose("matrix has non-finite entries".into()));
        }
        let bottom = [m[12], m[13], m[14], m[15]];
        let expected = [0.0, 0.0, 0.0, 1.0];
        if bottom.iter().zip(expected).any(|(a, b)| (f64::from(*a) - b).abs() > 1e-6) {
            return Err(GeometryError::InvalidPose("bottom row must be (0, 0, 0, 1)".into()));
        }
        let r = Matrix3::from_fn(|i, j| f64::from(m[i * 4 + j]));
        let t = Vec3::new(f64::from(m[3]), f64::from(m[7]), f64::from(m[11]));
        Self::from_rotation_lossy(&r, t)
    }

    pub fn to_row_major(&self) -> [f32; 16] {
        let mut out = [0f32; 16];
        for i in 0..3 {
            for j in 0..3 {
                out[i * 4 + j] = self.rotation[(i, j)] as f32;
            }
            out[i * 4 + 3] = self.translation[i] as f32;
        }
        out[15] = 1.0;
        out
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    /// Camera x axis expressed in world coordinates.
    pub fn x_axis(&self) -> Vec3 {
        self.rotation.column(0).into_owned()
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }
}

/// Checks the upper-left block of a pose for orthonormality and det = +1.
pub fn check_rotation(r: &Matrix3<f64>, tol: f64) -> Result<(), String> {
    if !r.iter().all(|x| x.is_finite()) {
        return Err("rotation has non-finite entries".into());
    }
    let err = (r * r.transpose() - Matrix3::identity()).amax();
    if err > tol {
        return Err(format!("rotation is not orthonormal (|R·Rᵀ − I| = {err:.3e})"));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > tol {
        return Err(format!("rotation determinant is {det}, expected +1"));
    }
    Ok(())
}

/// Head pose plus interpupillary distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub head_pose: Pose,
    pub ipd_m: f64,
}

impl StereoRig {
    pub fn new(head_pose: Pose, ipd_m: f64) -> Result<Self, GeometryError> {
        if !(0.0..0.2).contains(&ipd_m) {
            return Err(GeometryError::InvalidIpd(ipd_m));
        }
        Ok(Self { head_pose, ipd_m })
    }
}

/// Parallel-axis stereo: both eyes share the head rotation and sit at
/// ∓ipd/2 along the head's x axis.
pub fn stereo_eye_poses(rig: &StereoRig) -> (Pose, Pose) {
    let half = rig.head_pose.x_axis() * (rig.ipd_m / 2.0);
    let head = rig.head_pose;
    let left = Pose { translation: head.translation - half, ..head };
    let right = Pose { translation: head.translation + half, ..head };
    (left, right)
}

/// World-space ray through pixel `(u, v)`.
pub fn ray_for_pixel(intr: &CameraIntrinsics, pose: &Pose, u: f64, v: f64) -> Result<(Vec3, Vec3), GeometryError> {
    let (w, h) = (f64::from(intr.width_px), f64::from(intr.height_px));
    if !(u >= 0.0 && u < w && v >= 0.0 && v < h) {
        return Err(GeometryError::OutOfImage { u, v, width: intr.width_px, height: intr.height_px });
    }
    Ok((pose.translation, ray_direction_unchecked(intr, pose, u, v)))
}

/// Same as [`ray_for_pixel`] without the bounds check; used by the renderer's
/// inner loop where pixel centers are known to be in range.
pub(crate) fn ray_direction_unchecked(intr: &CameraIntrinsics, pose: &Pose, u: f64, v: f64) -> Vec3 {
    let cam =
        Vec3::new((u - f64::from(intr.cx)) / f64::from(intr.fx), -(v - f64::from(intr.cy)) / f64::from(intr.fy), -1.0);
    (pose.rotation * cam).normalize()
}

/// Pinhole projection of a world point.
pub fn project_point(intr: &CameraIntrinsics, pose: &Pose, p: &Vec3) -> Result<(f64, f64), GeometryError> {
    let c = pose.world_to_camera(p);
    let depth = -c.z;
    if depth <= 0.0 {
        return Err(GeometryError::BehindCamera { depth });
    }
    let u = f64::from(intr.cx) + f64::from(intr.fx) * c.x / depth;
    let v = f64::from(intr.cy) - f64::from(intr.fy) * c.y / depth;
    Ok((u, v))
}

/// Camera-frame corners of the plane at `distance_m` that exactly fills the
/// field of view, ordered for image corners (0,0), (W,0), (W,H), (0,H).
pub fn quad_for_frustum(intr: &CameraIntrinsics, distance_m: f64) -> [Vec3; 4] {
    let (w, h) = (f64::from(intr.width_px), f64::from(intr.height_px));
    let corner = |u: f64, v: f64| {
        Vec3::new(
            (u - f64::from(intr.cx)) / f64::from(intr.fx) * distance_m,
            -(v - f64::from(intr.cy)) / f64::from(intr.fy) * distance_m,
            -distance_m,
        )
    };
    [corner(0.0, 0.0), corner(w, 0.0), corner(w, h), corner(0.0, h)]
}
