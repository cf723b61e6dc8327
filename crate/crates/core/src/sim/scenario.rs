use std::path::Path;

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::plant::{Disturbances, Mode};
use crate::control::{AimingOffset, CompareConfig, ControllerConfig, ScadaConfig};
use crate::ephemeris::{GeoTime, EPOCH_END_UNIX, EPOCH_START_UNIX, PSA_LATITUDE_DEG, PSA_LONGITUDE_DEG};
use crate::geometry::{CameraModel, PixelOffset};
use crate::render::{Cloud, NeighborHeliostat, RenderStyle, Scene, SceneError, TargetPanel};
use crate::vision::ClassicalParams;

/// Scenarios shipped with the crate, by name.
pub const BUNDLED_SCENARIOS: [(&str, &str); 2] = [
    ("target_track", include_str!("../../scenarios/target_track.toml")),
    ("calibration.sun_point", include_str!("../../scenarios/calibration.sun_point.toml")),
];

pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    BUNDLED_SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, src)| *src)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{origin}:{line}:{column}: {message}")]
    Parse { origin: String, line: usize, column: usize, message: String },
    #[error("{origin}: field `{field}`: {message}")]
    Invalid { origin: String, field: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    #[default]
    Classical,
    /// Detections taken from the renderer's answer key.
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiteConfig {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl Default for SiteConfig {
    fn default() -> Self {
        Self { latitude_deg: PSA_LATITUDE_DEG, longitude_deg: PSA_LONGITUDE_DEG }
    }
}

fn default_rate_limits() -> [f64; 2] {
    [0.6, 0.3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeliostatConfig {
    pub id: String,
    pub position_m: [f64; 3],
    /// Azimuth and elevation slew limits.
    #[serde(default = "default_rate_limits")]
    pub rate_limits_deg_s: [f64; 2],
    #[serde(default)]
    pub encoder_quantization_mrad: f64,
    /// Start this far from the first goal, `[u, v]` in the camera plane.
    #[serde(default)]
    pub initial_offset_mrad: Option<[f64; 2]>,
    /// Or start at an explicit `[azimuth, elevation]`.
    #[serde(default)]
    pub initial_pose_deg: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Stow,
    SunTrack,
    TargetTrack,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineEntry {
    /// Seconds from the scenario start.
    pub time_s: f64,
    pub mode: ModeName,
    /// `[azimuth, elevation]`, manual mode only.
    #[serde(default)]
    pub pose_deg: Option<[f64; 2]>,
}

impl TimelineEntry {
    pub fn to_mode(&self) -> Option<Mode> {
        match (self.mode, self.pose_deg) {
            (ModeName::Stow, None) => Some(Mode::Stow),
            (ModeName::SunTrack, None) => Some(Mode::SunTrack),
            (ModeName::TargetTrack, None) => Some(Mode::TargetTrack),
            (ModeName::Manual, Some([a, e])) => Some(Mode::Manual { azimuth_deg: a, elevation_deg: e }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    /// Closed loop on the camera-plane error.
    Vision,
    /// Open-loop ephemeris baseline.
    Scada,
}

impl LoopKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LoopKind::Vision => "vision",
            LoopKind::Scada => "scada",
        }
    }
}

fn default_frame_loops() -> Vec<LoopKind> {
    vec![LoopKind::Vision]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameOptions {
    /// Save every n-th tick; 0 saves nothing.
    #[serde(default)]
    pub every: u64,
    #[serde(default = "default_frame_loops")]
    pub loops: Vec<LoopKind>,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self { every: 0, loops: default_frame_loops() }
    }
}

impl FrameOptions {
    pub fn saves(&self, kind: LoopKind, tick: u64) -> bool {
        self.every > 0 && tick % self.every == 0 && self.loops.contains(&kind)
    }
}

/// A complete simulation run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    /// RFC 3339 start instant.
    pub start: String,
    pub tick_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub detector: DetectorKind,
    #[serde(default)]
    pub classical: ClassicalParams,
    #[serde(default)]
    pub site: SiteConfig,
    pub camera: CameraModel,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub scada: ScadaConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    pub heliostat: HeliostatConfig,
    #[serde(default)]
    pub disturbances: Disturbances,
    #[serde(default)]
    pub render: RenderStyle,
    pub target: TargetPanel,
    #[serde(default)]
    pub neighbors: Vec<NeighborHeliostat>,
    #[serde(default)]
    pub clouds: Vec<Cloud>,
    #[serde(default)]
    pub timeline: Vec<TimelineEntry>,
    #[serde(default)]
    pub frames: FrameOptions,
    /// Aiming offset `[du, dv]` in pixels from a previous calibration.
    #[serde(default)]
    pub calibration_px: Option<[f64; 2]>,
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl ScenarioConfig {
    /// Parses and validates scenario text. `origin` names the source in
    /// diagnostics.
    pub fn from_toml(src: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(src, s.start));
            ConfigError::Parse {
                origin: origin.to_string(),
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_toml(&src, &path.display().to_string())
    }

    pub fn bundled(name: &str) -> Option<Result<Self, ConfigError>> {
        bundled_scenario(name).map(|src| Self::from_toml(src, &format!("bundled:{name}")))
    }

    /// A bundled scenario name or a file path, plus the source text.
    pub fn load(name_or_path: &str) -> Result<(Self, String), ConfigError> {
        if let Some(src) = bundled_scenario(name_or_path) {
            return Ok((Self::from_toml(src, &format!("bundled:{name_or_path}"))?, src.to_string()));
        }
        let path = Path::new(name_or_path);
        let src = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Ok((Self::from_toml(&src, &path.display().to_string())?, src))
    }

    pub fn start_unix(&self) -> Result<f64, ConfigError> {
        DateTime::parse_from_rfc3339(&self.start)
            .map(|t| t.timestamp() as f64 + t.timestamp_subsec_nanos() as f64 * 1e-9)
            .map_err(|e| ConfigError::Invalid {
                origin: self.name.clone(),
                field: "start".into(),
                message: format!("not an RFC 3339 timestamp: {e}"),
            })
    }

    pub fn tick_count(&self) -> u64 {
        (self.duration_s / self.tick_s + 1e-9).floor() as u64
    }

    pub fn calibration(&self) -> AimingOffset {
        self.calibration_px
            .map(|[du, dv]| AimingOffset::from_offset(PixelOffset::new(du, dv)))
            .unwrap_or_default()
    }

    pub fn scene(&self) -> Result<Scene, ConfigError> {
        let start = self.start_unix()?;
        Ok(Scene {
            site: GeoTime { latitude_deg: self.site.latitude_deg, longitude_deg: self.site.longitude_deg, timestamp: start },
            target: self.target.clone(),
            neighbors: self.neighbors.clone(),
            clouds: self.clouds.clone(),
            refraction_mrad: self.disturbances.refraction_mrad,
            style: self.render,
            seed: self.seed,
        })
    }

    pub fn validate(&self, origin: &str) -> Result<(), ConfigError> {
        let fail = |field: &str, message: String| {
            Err(ConfigError::Invalid { origin: origin.to_string(), field: field.to_string(), message })
        };
        if !(self.tick_s > 0.0 && self.tick_s.is_finite()) {
            return fail("tick_s", format!("must be positive, got {}", self.tick_s));
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return fail("duration_s", format!("must be non-negative, got {}", self.duration_s));
        }
        if GeoTime::new(self.site.latitude_deg, self.site.longitude_deg, 0.0).is_err() {
            return fail("site", format!("invalid coordinates {:?}", self.site));
        }
        let start = match self.start_unix() {
            Ok(s) => s,
            Err(ConfigError::Invalid { message, .. }) => return fail("start", message),
            Err(e) => return Err(e),
        };
        if start < EPOCH_START_UNIX as f64 || start + self.duration_s >= EPOCH_END_UNIX as f64 {
            return fail("start", "run must lie within 1950-2050".into());
        }
        if let Err(e) = self.controller.validate() {
            return fail("controller", e.to_string());
        }
        if !(self.scada.quantization_mrad >= 0.0) {
            return fail("scada.quantization_mrad", "must be non-negative".into());
        }
        let h = &self.heliostat;
        if !h.rate_limits_deg_s.iter().all(|r| *r > 0.0 && r.is_finite()) {
            return fail("heliostat.rate_limits_deg_s", format!("must be positive, got {:?}", h.rate_limits_deg_s));
        }
        if !(h.encoder_quantization_mrad >= 0.0) {
            return fail("heliostat.encoder_quantization_mrad", "must be non-negative".into());
        }
        if h.initial_offset_mrad.is_some() && h.initial_pose_deg.is_some() {
            return fail("heliostat", "give initial_offset_mrad or initial_pose_deg, not both".into());
        }
        if let Some([_, el]) = h.initial_pose_deg {
            if !(0.0..=90.0).contains(&el) {
                return fail("heliostat.initial_pose_deg", format!("elevation {el} outside [0, 90]"));
            }
        }
        let d = h.position_m;
        let t = self.target.position_m;
        if (0..3).all(|i| (d[i] - t[i]).abs() < 1e-9) {
            return fail("target.position_m", "coincides with the heliostat".into());
        }
        if !(self.disturbances.jitter_sigma_mrad >= 0.0) {
            return fail("disturbances.jitter_sigma_mrad", "must be non-negative".into());
        }
        if let Err(SceneError::Invalid { field, message }) = self.scene()?.validate() {
            return fail(&field, message);
        }
        let mut prev = 0.0;
        for (i, entry) in self.timeline.iter().enumerate() {
            let field = format!("timeline[{i}]");
            if !(entry.time_s >= prev) {
                return fail(&format!("{field}.time_s"), format!("{} is before {prev}; entries must be time-ordered and non-negative", entry.time_s));
            }
            prev = entry.time_s;
            match entry.to_mode() {
                Some(Mode::Manual { elevation_deg, .. }) if !(0.0..=90.0).contains(&elevation_deg) => {
                    return fail(&format!("{field}.pose_deg"), format!("elevation {elevation_deg} outside [0, 90]"));
                }
                Some(_) => {}
                None if entry.mode == ModeName::Manual => {
                    return fail(&format!("{field}.pose_deg"), "manual mode needs pose_deg".into())
                }
                None => return fail(&format!("{field}.pose_deg"), "only manual mode takes a pose".into()),
            }
        }
        Ok(())
    }
}
