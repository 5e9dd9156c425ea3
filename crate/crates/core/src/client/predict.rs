//! Constant-velocity head-pose extrapolation.

use nalgebra::{Rotation3, UnitQuaternion};

use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Predictor {
    #[default]
    None,
    ConstantVelocity,
}

impl std::str::FromStr for Predictor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Predictor::None),
            "cv" | "constant-velocity" | "constant_velocity" => Ok(Predictor::ConstantVelocity),
            other => Err(format!("unknown predictor `{other}` (expected none or cv)")),
        }
    }
}

impl std::fmt::Display for Predictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Predictor::None => "none",
            Predictor::ConstantVelocity => "cv",
        })
    }
}

/// Extrapolates the newest pose `horizon_ms` ahead from the last two
/// entries of `history` (oldest first, times in ms).
///
/// Rotation uses the world-frame delta `R_last·R_prevᵀ` as an axis-angle,
/// scaled by `horizon/Δt` and applied on top of the latest rotation.
pub fn predict_pose(history: &[(f64, Pose)], horizon_ms: f64) -> Pose {
    let (t1, latest) = *history.last().expect("history must not be empty");
    if history.len() < 2 || horizon_ms == 0.0 {
        return latest;
    }
    let (t0, prev) = history[history.len() - 2];
    let dt = t1 - t0;
    if dt <= 0.0 {
        return latest;
    }
    let scale = horizon_ms / dt;
    let translation = latest.translation() + (latest.translation() - prev.translation()) * scale;
    let q_prev = prev.quaternion();
    let q_last = latest.quaternion();
    let delta = q_last * q_prev.inverse();
    let step = match delta.axis_angle() {
        Some((axis, angle)) => UnitQuaternion::from_axis_angle(&axis, angle * scale),
        None => UnitQuaternion::identity(),
    };
    let rotation = Rotation3::from(step * q_last);
    // renormalized through the quaternion, so Pose invariants hold
    Pose::from_parts(&UnitQuaternion::from_rotation_matrix(&rotation), translation)
}
