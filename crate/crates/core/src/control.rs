//! Camera-plane tracking control, Sun-pointing calibration and the
//! ephemeris-driven open-loop baseline.
//!
//! Corrections are expressed as the desired change of the camera-plane error:
//! `u` along image-right, `v` along image-down. [`pose_after_correction`]
//! turns such a correction into mount axis increments.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ephemeris::SunPosition;
use crate::geometry::{bisector, AngularOffset, CameraModel, PixelOffset, Pose, UnitVec3};
use crate::sim::RunLog;
use crate::vision::FrameAnalysis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("no frame contains a Sun detection")]
    NoValidFrames,
    #[error("sun elevation {0:.3} deg is not above the horizon")]
    SunBelowHorizon(f64),
    #[error("sun and target directions are opposite")]
    DegenerateGeometry,
    #[error("target coincides with the heliostat")]
    TargetAtHeliostat,
    #[error("logs differ at record {index}: {vision_s} s vs {scada_s} s")]
    TimestampMismatch { index: usize, vision_s: f64, scada_s: f64 },
    #[error("logs have {vision} and {scada} records")]
    LengthMismatch { vision: usize, scada: usize },
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
}

/// Constant aiming error estimated from Sun-pointing frames, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AimingOffset {
    pub du: f64,
    pub dv: f64,
    pub samples: usize,
    pub sigma_u: f64,
    pub sigma_v: f64,
}

impl AimingOffset {
    pub const ZERO: AimingOffset = AimingOffset { du: 0.0, dv: 0.0, samples: 1, sigma_u: 0.0, sigma_v: 0.0 };

    pub fn from_offset(offset: PixelOffset) -> Self {
        Self { du: offset.du, dv: offset.dv, ..Self::ZERO }
    }

    pub fn offset(&self) -> PixelOffset {
        PixelOffset::new(self.du, self.dv)
    }
}

impl Default for AimingOffset {
    fn default() -> Self {
        Self::ZERO
    }
}

/// Mean of `S′ − A′` over the frames that saw the Sun, with per-axis sample
/// standard deviation (zero for a single frame).
pub fn calibrate_aiming(frames: &[FrameAnalysis]) -> Result<AimingOffset, ControlError> {
    let offsets: Vec<PixelOffset> = frames.iter().filter_map(FrameAnalysis::raw_sun_offset_px).collect();
    calibrate_from_offsets(&offsets)
}

pub fn calibrate_from_offsets(offsets: &[PixelOffset]) -> Result<AimingOffset, ControlError> {
    if offsets.is_empty() {
        return Err(ControlError::NoValidFrames);
    }
    let n = offsets.len() as f64;
    let du = offsets.iter().map(|o| o.du).sum::<f64>() / n;
    let dv = offsets.iter().map(|o| o.dv).sum::<f64>() / n;
    let (sigma_u, sigma_v) = if offsets.len() > 1 {
        let su = offsets.iter().map(|o| (o.du - du).powi(2)).sum::<f64>() / (n - 1.0);
        let sv = offsets.iter().map(|o| (o.dv - dv).powi(2)).sum::<f64>() / (n - 1.0);
        (su.sqrt(), sv.sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(AimingOffset { du, dv, samples: offsets.len(), sigma_u, sigma_v })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Fraction of the measured error corrected per tick, in `(0, 1]`.
    pub gain: f64,
    pub deadband_px: f64,
    pub max_step_mrad: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { gain: 0.5, deadband_px: 1.0, max_step_mrad: 50.0 }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.gain > 0.0 && self.gain <= 1.0) {
            return Err(ControlError::InvalidConfig(format!("gain {} outside (0, 1]", self.gain)));
        }
        if !(self.deadband_px >= 0.0) {
            return Err(ControlError::InvalidConfig(format!("deadband_px {} is negative", self.deadband_px)));
        }
        if !(self.max_step_mrad > 0.0) {
            return Err(ControlError::InvalidConfig(format!(
                "max_step_mrad {} must be positive",
                self.max_step_mrad
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingError {
    pub error_px: PixelOffset,
    pub error_mrad: AngularOffset,
    /// Seconds since the start of the run.
    pub timestamp: f64,
}

impl TrackingError {
    pub fn new(cam: &CameraModel, error_px: PixelOffset, timestamp: f64) -> Self {
        Self { error_px, error_mrad: cam.pixel_error_to_mrad(&error_px), timestamp }
    }
}

/// Proportional step: `-gain * error_mrad` per axis, clamped to the max step,
/// and zero inside the deadband. The result is the commanded change of the
/// camera-plane error.
pub fn control_step(cfg: &ControllerConfig, _cam: &CameraModel, err: &TrackingError) -> AngularOffset {
    if err.error_px.max_abs() <= cfg.deadband_px {
        return AngularOffset::ZERO;
    }
    let clamp = |e: f64| (-cfg.gain * e).clamp(-cfg.max_step_mrad, cfg.max_step_mrad);
    AngularOffset::new(clamp(err.error_mrad.u_mrad), clamp(err.error_mrad.v_mrad))
}

/// Lowest elevation used when converting camera-plane motion into azimuth.
const MIN_COS_ELEVATION: f64 = 0.1;

/// Mount pose that moves the camera-plane error by `correction`.
///
/// Image-right is the direction of increasing azimuth and image-down that of
/// decreasing elevation; a feature moves opposite to the axis, hence the signs.
pub fn pose_after_correction(from: &Pose, correction: &AngularOffset) -> Pose {
    let cos_el = from.elevation_deg.to_radians().cos().max(MIN_COS_ELEVATION);
    let d_az = -(correction.u_mrad * 1e-3) / cos_el;
    let d_el = correction.v_mrad * 1e-3;
    Pose::new(
        (from.azimuth_deg + d_az.to_degrees()).rem_euclid(360.0),
        (from.elevation_deg + d_el.to_degrees()).clamp(0.0, 90.0),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScadaConfig {
    /// Axis resolution of the open-loop controller.
    pub quantization_mrad: f64,
}

impl Default for ScadaConfig {
    fn default() -> Self {
        Self { quantization_mrad: 1.2 }
    }
}

/// Rounds an angle in degrees to the nearest multiple of `step_mrad`.
pub fn quantize_deg(angle_deg: f64, step_mrad: f64) -> f64 {
    if step_mrad <= 0.0 {
        return angle_deg;
    }
    let mrad = angle_deg.to_radians() * 1e3;
    ((mrad / step_mrad).round() * step_mrad * 1e-3).to_degrees()
}

pub fn quantize_pose(pose: &Pose, step_mrad: f64) -> Pose {
    Pose::new(quantize_deg(pose.azimuth_deg, step_mrad), quantize_deg(pose.elevation_deg, step_mrad))
}

/// Facet normal that reflects the Sun onto the target.
pub fn aim_normal(sun: &UnitVec3, heliostat_m: [f64; 3], target_m: [f64; 3]) -> Result<UnitVec3, ControlError> {
    let d = [target_m[0] - heliostat_m[0], target_m[1] - heliostat_m[1], target_m[2] - heliostat_m[2]];
    let t = UnitVec3::new(d[0], d[1], d[2]).map_err(|_| ControlError::TargetAtHeliostat)?;
    bisector(sun, &t).map_err(|_| ControlError::DegenerateGeometry)
}

/// Open-loop setpoint: the exact bisector normal quantized to the SCADA axis
/// resolution.
pub fn scada_setpoint(
    sun: &SunPosition,
    heliostat_m: [f64; 3],
    target_m: [f64; 3],
    cfg: &ScadaConfig,
) -> Result<Pose, ControlError> {
    if !(sun.elevation_deg > 0.0) {
        return Err(ControlError::SunBelowHorizon(sun.elevation_deg));
    }
    let n = aim_normal(&sun.direction, heliostat_m, target_m)?;
    Ok(quantize_pose(&Pose::from_normal(&n), cfg.quantization_mrad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Az,
    El,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::Az, Axis::El];

    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Az => "az",
            Axis::El => "el",
        }
    }

    fn pick(&self, a: &AngularOffset) -> f64 {
        match self {
            Axis::Az => a.u_mrad,
            Axis::El => a.v_mrad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// A tick belongs to a transition when either mount slews faster than this.
    pub slew_threshold_deg_s: f64,
    /// Ticks after the last fast slew still counted as transition.
    pub settle_ticks: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { slew_threshold_deg_s: 0.15, settle_ticks: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub time_s: f64,
    pub axis: Axis,
    pub vision_err_mrad: Option<f64>,
    pub scada_err_mrad: Option<f64>,
    pub diff_mrad: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t <= self.end_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSummary {
    pub axis: Axis,
    pub max_abs_diff_mrad: f64,
    pub steady_mean_abs_diff_mrad: f64,
    pub steady_max_abs_diff_mrad: f64,
    pub steady_samples: usize,
}

/// Largest difference within one transition interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub time_s: f64,
    pub axis: Axis,
    pub diff_mrad: f64,
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub axes: Vec<AxisSummary>,
    pub transitions: Vec<Interval>,
    pub spikes: Vec<Spike>,
}

impl ErrorSummary {
    pub fn steady_max_abs_diff_mrad(&self) -> f64 {
        self.axes.iter().map(|a| a.steady_max_abs_diff_mrad).fold(0.0, f64::max)
    }

    pub fn max_abs_diff_mrad(&self) -> f64 {
        self.axes.iter().map(|a| a.max_abs_diff_mrad).fold(0.0, f64::max)
    }

    pub fn in_transition(&self, t: f64) -> bool {
        self.transitions.iter().any(|i| i.contains(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub rows: Vec<ErrorRow>,
    pub summary: ErrorSummary,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl ErrorSeries {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "axis", "vision_err_mrad", "scada_err_mrad", "diff_mrad"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:.3}", r.time_s),
                r.axis.as_str().to_string(),
                opt(r.vision_err_mrad),
                opt(r.scada_err_mrad),
                opt(r.diff_mrad),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

/// Lines up the vision and baseline error series, one row per tick and axis,
/// and summarizes the difference inside and outside slew transitions.
pub fn compare_runs(vision: &RunLog, scada: &RunLog, cfg: &CompareConfig) -> Result<ErrorSeries, ControlError> {
    let (v, s) = (&vision.records, &scada.records);
    if v.len() != s.len() {
        return Err(ControlError::LengthMismatch { vision: v.len(), scada: s.len() });
    }
    for (i, (a, b)) in v.iter().zip(s).enumerate() {
        if a.time_s != b.time_s {
            return Err(ControlError::TimestampMismatch { index: i, vision_s: a.time_s, scada_s: b.time_s });
        }
    }

    let n = v.len();
    let fast: Vec<bool> = (0..n)
        .map(|i| {
            [&v[i], &s[i]].iter().any(|r| r.slew_deg_s.iter().any(|x| x.abs() > cfg.slew_threshold_deg_s))
        })
        .collect();
    let mut flagged = vec![false; n];
    let mut hold = 0usize;
    for i in 0..n {
        let starting = fast.get(i + 1).copied().unwrap_or(false) || (i > 0 && v[i].mode != v[i - 1].mode);
        if fast[i] {
            hold = cfg.settle_ticks;
        }
        if fast[i] || starting {
            flagged[i] = true;
        } else if hold > 0 {
            hold -= 1;
            flagged[i] = true;
        }
    }
    let mut transitions = Vec::new();
    let mut i = 0;
    while i < n {
        if flagged[i] {
            let start = i;
            while i + 1 < n && flagged[i + 1] {
                i += 1;
            }
            transitions.push(Interval { start_s: v[start].time_s, end_s: v[i].time_s });
        }
        i += 1;
    }

    let mut rows = Vec::with_capacity(2 * n);
    for i in 0..n {
        for axis in Axis::BOTH {
            let ve = v[i].error.as_ref().map(|e| axis.pick(&e.error_mrad));
            let se = s[i].error.as_ref().map(|e| axis.pick(&e.error_mrad));
            let diff = match (ve, se) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            };
            rows.push(ErrorRow { time_s: v[i].time_s, axis, vision_err_mrad: ve, scada_err_mrad: se, diff_mrad: diff });
        }
    }

    let mut axes = Vec::new();
    for axis in Axis::BOTH {
        let mut max_abs = 0.0_f64;
        let (mut sum, mut steady_max, mut count) = (0.0, 0.0_f64, 0usize);
        for (k, r) in rows.iter().filter(|r| r.axis == axis).enumerate() {
            let Some(d) = r.diff_mrad else { continue };
            max_abs = max_abs.max(d.abs());
            if !flagged[k] {
                sum += d.abs();
                steady_max = steady_max.max(d.abs());
                count += 1;
            }
        }
        axes.push(AxisSummary {
            axis,
            max_abs_diff_mrad: max_abs,
            steady_mean_abs_diff_mrad: if count > 0 { sum / count as f64 } else { 0.0 },
            steady_max_abs_diff_mrad: steady_max,
            steady_samples: count,
        });
    }

    let mut spikes = Vec::new();
    for interval in &transitions {
        let peak = rows
            .iter()
            .filter(|r| interval.contains(r.time_s))
            .filter_map(|r| r.diff_mrad.map(|d| (r, d)))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
        if let Some((r, d)) = peak {
            spikes.push(Spike { time_s: r.time_s, axis: r.axis, diff_mrad: d, interval: *interval });
        }
    }

    Ok(ErrorSeries { rows, summary: ErrorSummary { axes, transitions, spikes } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ephemeris::SunPosition;
    use crate::geometry::{reflect, PixelPoint};
    use proptest::prelude::*;

    fn cam() -> CameraModel {
        CameraModel::pi_camera_800x600()
    }

    #[test]
    fn proportional_step_example() {
        let cfg = ControllerConfig::default();
        let err = TrackingError::new(&cam(), PixelOffset::new(20.0, 0.0), 0.0);
        let step = control_step(&cfg, &cam(), &err);
        let k: f64 = (3.76 / 800.0) / 2.35;
        assert!((step.u_mrad + 0.5e3 * (20.0 * k).atan()).abs() < 1e-9, "{step:?}");
        assert_eq!(step.v_mrad, 0.0);
        let big = TrackingError::new(&cam(), PixelOffset::new(-80.0, 200.0), 0.0);
        assert_eq!(control_step(&cfg, &cam(), &big), AngularOffset::new(50.0, -50.0));
    }

    #[test]
    fn deadband_suppresses_commands() {
        let cfg = ControllerConfig::default();
        let err = TrackingError::new(&cam(), PixelOffset::new(1.0, -0.7), 0.0);
        assert_eq!(control_step(&cfg, &cam(), &err), AngularOffset::ZERO);
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::default().validate().is_ok());
        assert!(ControllerConfig { gain: 1.5, ..Default::default() }.validate().is_err());
        assert!(ControllerConfig { gain: 0.0, ..Default::default() }.validate().is_err());
        assert!(ControllerConfig { deadband_px: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn correction_signs() {
        let from = Pose::new(180.0, 45.0);
        // Error to the right: the axis must swing toward increasing azimuth.
        let p = pose_after_correction(&from, &AngularOffset::new(-10.0, 0.0));
        assert!(p.azimuth_deg > 180.0);
        // Aim point below the reference: lower the axis.
        let p = pose_after_correction(&from, &AngularOffset::new(0.0, -10.0));
        assert!(p.elevation_deg < 45.0);
        let frame = from.frame();
        let moved = pose_after_correction(&from, &AngularOffset::new(-5.0, -5.0)).normal();
        let c = frame.to_camera(&moved);
        assert!(c.x() > 0.0 && c.y() > 0.0);
    }

    #[test]
    fn calibration_statistics() {
        let one = calibrate_from_offsets(&[PixelOffset::new(3.0, -1.0)]).unwrap();
        assert_eq!((one.du, one.dv, one.samples, one.sigma_u), (3.0, -1.0, 1, 0.0));
        let two = calibrate_from_offsets(&[PixelOffset::new(1.0, 0.0), PixelOffset::new(3.0, 0.0)]).unwrap();
        assert_eq!(two.du, 2.0);
        assert!((two.sigma_u - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(calibrate_from_offsets(&[]), Err(ControlError::NoValidFrames));
        assert_eq!(calibrate_aiming(&[]), Err(ControlError::NoValidFrames));
    }

    #[test]
    fn zenith_sun_and_northern_target() {
        let sun = SunPosition::from_angles(0.0, 90.0);
        let cfg = ScadaConfig { quantization_mrad: 0.0 };
        let p = scada_setpoint(&sun, [0.0, 0.0, 0.0], [0.0, 100.0, 0.0], &cfg).unwrap();
        assert!((p.elevation_deg - 45.0).abs() < 1e-9);
        assert!(p.azimuth_deg.abs() < 1e-9 || (p.azimuth_deg - 360.0).abs() < 1e-9);
    }

    #[test]
    fn target_along_sun_gives_sun_direction() {
        let sun = SunPosition::from_angles(135.0, 40.0);
        let d = sun.direction;
        let target = [d.x() * 50.0, d.y() * 50.0, d.z() * 50.0];
        let p = scada_setpoint(&sun, [0.0; 3], target, &ScadaConfig { quantization_mrad: 0.0 }).unwrap();
        assert!((p.azimuth_deg - 135.0).abs() < 1e-9 && (p.elevation_deg - 40.0).abs() < 1e-9);
    }

    #[test]
    fn sun_below_horizon_is_rejected() {
        let sun = SunPosition::from_angles(90.0, -1.0);
        assert!(matches!(
            scada_setpoint(&sun, [0.0; 3], [0.0, 1.0, 1.0], &ScadaConfig::default()),
            Err(ControlError::SunBelowHorizon(_))
        ));
    }

    #[test]
    fn quantization_grid() {
        let q = quantize_deg(10.0, 1.2);
        let mrad = q.to_radians() * 1e3;
        assert!(((mrad / 1.2) - (mrad / 1.2).round()).abs() < 1e-9);
        assert!((q - 10.0).to_radians().abs() * 1e3 <= 0.6 + 1e-12);
    }

    #[test]
    fn aiming_offset_roundtrip() {
        let a = AimingOffset::from_offset(PixelOffset::new(5.0, -3.0));
        let json = serde_json::to_string(&a).unwrap();
        let back: AimingOffset = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
        let p = PixelPoint::new(400.0, 300.0).shifted(&a.offset());
        assert_eq!(p, PixelPoint::new(405.0, 297.0));
    }

    proptest! {
        #[test]
        fn setpoint_ignores_target_distance(
            az in 0.0..360.0f64, el in 5.0..85.0f64,
            tx in -200.0..200.0f64, ty in 20.0..300.0f64, tz in 5.0..80.0f64,
            k in 0.1..10.0f64,
        ) {
            let sun = SunPosition::from_angles(az, el);
            let cfg = ScadaConfig::default();
            let h = [3.0, -4.0, 2.0];
            let near = [h[0] + tx, h[1] + ty, h[2] + tz];
            let far = [h[0] + k * tx, h[1] + k * ty, h[2] + k * tz];
            let a = scada_setpoint(&sun, h, near, &cfg);
            let b = scada_setpoint(&sun, h, far, &cfg);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!((a.elevation_deg - b.elevation_deg).abs() < 1e-9);
                prop_assert!(a.azimuth_delta_deg(&b).abs() < 1e-9);
            }
        }

        #[test]
        fn reflected_sun_hits_target(
            az in 0.0..360.0f64, el in 5.0..85.0f64,
            tx in -200.0..200.0f64, ty in 20.0..300.0f64, tz in 5.0..80.0f64,
        ) {
            let sun = SunPosition::from_angles(az, el);
            let q = 1.2;
            let Ok(p) = scada_setpoint(&sun, [0.0; 3], [tx, ty, tz], &ScadaConfig { quantization_mrad: q }) else {
                return Ok(());
            };
            let reflected = reflect(&sun.direction, &p.normal());
            let target = UnitVec3::new(tx, ty, tz).unwrap();
            // A normal error of e rotates the reflection by at most 2e; the
            // quantized normal is off by at most q/2 per axis.
            let bound = 2.0 * (q / 2.0) * 2f64.sqrt() * 1e-3 + 1e-9;
            prop_assert!(reflected.angle_to(&target) <= bound, "{} > {}", reflected.angle_to(&target), bound);
        }

        #[test]
        fn step_never_exceeds_limits(du in -500.0..500.0f64, dv in -500.0..500.0f64) {
            let cfg = ControllerConfig::default();
            let s = control_step(&cfg, &cam(), &TrackingError::new(&cam(), PixelOffset::new(du, dv), 0.0));
            prop_assert!(s.max_abs() <= cfg.max_step_mrad);
            if du.abs().max(dv.abs()) > cfg.deadband_px {
                prop_assert!(s.u_mrad * du <= 0.0 && s.v_mrad * dv <= 0.0);
            }
        }
    }
}
