use serde::{Deserialize, Serialize};

use crate::control::quantize_deg;
use crate::geometry::{AngularOffset, CameraFrame, Pose};

/// Operating mode of a heliostat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Stow,
    SunTrack,
    TargetTrack,
    Manual { azimuth_deg: f64, elevation_deg: f64 },
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Stow => "stow",
            Mode::SunTrack => "sun_track",
            Mode::TargetTrack => "target_track",
            Mode::Manual { .. } => "manual",
        }
    }

    pub fn is_tracking(&self) -> bool {
        matches!(self, Mode::SunTrack | Mode::TargetTrack)
    }
}

/// Facet horizontal, mirror facing the sky.
pub const STOW_ELEVATION_DEG: f64 = 90.0;

/// Plant-side disturbances applied to the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Disturbances {
    /// Constant misalignment of the camera axis, `[u, v]`.
    pub pedestal_tilt_mrad: [f64; 2],
    /// Axis deflection per deg/s of slew in the camera plane.
    pub deformation_gain_mrad_per_deg_s: f64,
    /// Apparent lift of the Sun seen by the camera.
    pub refraction_mrad: f64,
    /// Standard deviation of white pose jitter per axis.
    pub jitter_sigma_mrad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeliostatState {
    pub id: String,
    pub position_m: [f64; 3],
    pub pose: Pose,
    pub rate_limits_deg_s: [f64; 2],
    pub pedestal_tilt_mrad: AngularOffset,
    pub deformation_gain: f64,
    pub encoder_quantization_mrad: f64,
    pub mode: Mode,
    /// Axis rates over the last step, `[azimuth, elevation]`.
    pub slew_deg_s: [f64; 2],
}

impl HeliostatState {
    /// Camera-plane deflection caused by the current slew.
    pub fn deformation(&self) -> AngularOffset {
        let cos_el = self.pose.elevation_deg.to_radians().cos();
        AngularOffset::new(
            -self.deformation_gain * self.slew_deg_s[0] * cos_el,
            self.deformation_gain * self.slew_deg_s[1],
        )
    }

    /// Actual camera orientation: the pose perturbed by pedestal tilt, slew
    /// deformation and the supplied jitter sample.
    pub fn optical_frame(&self, jitter: &AngularOffset) -> CameraFrame {
        self.pose.frame().perturbed(&(self.pedestal_tilt_mrad + self.deformation() + *jitter))
    }

    /// Pose as reported by the axis encoders.
    pub fn encoder_pose(&self) -> Pose {
        Pose::new(
            quantize_deg(self.pose.azimuth_deg, self.encoder_quantization_mrad).rem_euclid(360.0),
            quantize_deg(self.pose.elevation_deg, self.encoder_quantization_mrad),
        )
    }

    pub fn stow_pose(&self) -> Pose {
        Pose::new(self.pose.azimuth_deg, STOW_ELEVATION_DEG)
    }
}

/// Moves toward `command` at no more than the rate limits. Azimuth takes the
/// short way round; elevation is clamped to `[0, 90]`.
pub fn step(state: &HeliostatState, command: &Pose, dt: f64) -> HeliostatState {
    assert!(dt > 0.0, "dt must be positive, got {dt}");
    let mut next = state.clone();
    let max_az = state.rate_limits_deg_s[0] * dt;
    let max_el = state.rate_limits_deg_s[1] * dt;
    let d_az = state.pose.azimuth_delta_deg(command).clamp(-max_az, max_az);
    let target_el = command.elevation_deg.clamp(0.0, 90.0);
    let d_el = (target_el - state.pose.elevation_deg).clamp(-max_el, max_el);
    // Land exactly on the command when it is reachable this tick.
    next.pose.azimuth_deg = if d_az.abs() < max_az {
        command.azimuth_deg.rem_euclid(360.0)
    } else {
        (state.pose.azimuth_deg + d_az).rem_euclid(360.0)
    };
    next.pose.elevation_deg = if d_el.abs() < max_el { target_el } else { state.pose.elevation_deg + d_el };
    next.slew_deg_s = [d_az / dt, d_el / dt];
    next
}
