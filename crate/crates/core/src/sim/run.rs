use std::io::Write;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::plant::{step, HeliostatState, Mode};
use super::scenario::{ConfigError, DetectorKind, LoopKind, ScenarioConfig};
use crate::control::{
    aim_normal, calibrate_aiming, control_step, pose_after_correction, quantize_pose, scada_setpoint, AimingOffset,
    ControlError, ControllerConfig, ScadaConfig, TrackingError,
};
use crate::ephemeris::{sun_direction, SunPosition};
use crate::geometry::{AngularOffset, CameraModel, PixelOffset, PixelPoint, Pose, UnitVec3};
use crate::render::{render, CameraView, GroundTruth, Scene};
use crate::vision::{analyze_frame, track_clouds, ClassicalDetector, CloudTrack, Detection, Detector, FrameAnalysis, Image};

/// One tick of one control loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    /// Seconds since the scenario start.
    pub time_s: f64,
    pub mode: String,
    pub command: Pose,
    /// Mount pose when the frame was taken.
    pub pose: Pose,
    pub encoder: Pose,
    pub slew_deg_s: [f64; 2],
    pub sun_center: Option<PixelPoint>,
    pub target_center: Option<PixelPoint>,
    pub aim_point: Option<PixelPoint>,
    /// The loop's own error signal: measured in the image for the vision
    /// loop, predicted from encoders and ephemeris for the baseline.
    pub error: Option<TrackingError>,
    /// What a perfect detector would have measured in this frame.
    pub true_error_mrad: Option<AngularOffset>,
    pub shadow: bool,
    pub block: bool,
    pub truth_shadow: bool,
    pub truth_block: bool,
    pub sun_occluded_fraction: f64,
    pub cloud_tto_s: Option<f64>,
    pub detections: usize,
}

const CSV_HEADER: [&str; 27] = [
    "tick", "time_s", "mode", "cmd_az_deg", "cmd_el_deg", "az_deg", "el_deg", "enc_az_deg", "enc_el_deg",
    "slew_az_deg_s", "slew_el_deg_s", "sun_u", "sun_v", "target_u", "target_v", "err_u_px", "err_v_px",
    "err_u_mrad", "err_v_mrad", "true_err_u_mrad", "true_err_v_mrad", "shadow", "block", "truth_shadow",
    "truth_block", "sun_occluded", "cloud_tto_s",
];

fn f(x: f64) -> String {
    format!("{x:.6}")
}

fn of(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

/// Per-tick history of one loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub kind: LoopKind,
    pub tick_s: f64,
    pub records: Vec<TickRecord>,
}

impl RunLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            let e = r.error.as_ref();
            w.write_record([
                r.tick.to_string(),
                format!("{:.3}", r.time_s),
                r.mode.clone(),
                f(r.command.azimuth_deg),
                f(r.command.elevation_deg),
                f(r.pose.azimuth_deg),
                f(r.pose.elevation_deg),
                f(r.encoder.azimuth_deg),
                f(r.encoder.elevation_deg),
                f(r.slew_deg_s[0]),
                f(r.slew_deg_s[1]),
                of(r.sun_center.map(|p| p.u)),
                of(r.sun_center.map(|p| p.v)),
                of(r.target_center.map(|p| p.u)),
                of(r.target_center.map(|p| p.v)),
                of(e.map(|e| e.error_px.du)),
                of(e.map(|e| e.error_px.dv)),
                of(e.map(|e| e.error_mrad.u_mrad)),
                of(e.map(|e| e.error_mrad.v_mrad)),
                of(r.true_error_mrad.map(|a| a.u_mrad)),
                of(r.true_error_mrad.map(|a| a.v_mrad)),
                (r.shadow as u8).to_string(),
                (r.block as u8).to_string(),
                (r.truth_shadow as u8).to_string(),
                (r.truth_block as u8).to_string(),
                format!("{:.4}", r.sun_occluded_fraction),
                of(r.cloud_tto_s),
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

/// Everything one loop produced in one tick.
#[derive(Debug, Clone)]
pub struct LoopOutput {
    pub record: TickRecord,
    pub frame: Image,
    pub detections: Vec<Detection>,
    pub analysis: FrameAnalysis,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone)]
pub struct TickOutput {
    pub tick: u64,
    pub vision: LoopOutput,
    pub scada: LoopOutput,
}

impl TickOutput {
    pub fn get(&self, kind: LoopKind) -> &LoopOutput {
        match kind {
            LoopKind::Vision => &self.vision,
            LoopKind::Scada => &self.scada,
        }
    }
}

/// Operator command, as accepted by the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Command {
    pub mode: String,
    #[serde(default)]
    pub target: Option<CommandTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CommandTarget {
    /// Target id for `target_track`.
    Named(String),
    /// Pose for `manual`.
    Pose { azimuth_deg: f64, elevation_deg: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommandError {
    #[error("invalid command: {0}")]
    Invalid(String),
    #[error("stow in progress; only stow is accepted until the heliostat is stowed")]
    StowInterlock,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("frame sink: {0}")]
    Sink(String),
    #[error(transparent)]
    Control(#[from] ControlError),
}

struct Twin {
    kind: LoopKind,
    plant: HeliostatState,
    clouds: Vec<CloudTrack>,
    rng: ChaCha8Rng,
}

/// Deterministic stepping of the vision loop and the baseline loop on
/// identical plant twins.
pub struct FieldSim {
    config: ScenarioConfig,
    scene: Scene,
    camera: CameraModel,
    controller: ControllerConfig,
    scada: ScadaConfig,
    calibration: AimingOffset,
    detector: Option<Box<dyn Detector>>,
    start_unix: f64,
    tick: u64,
    timeline_next: usize,
    jitter: Option<Normal<f64>>,
    twins: [Twin; 2],
}

fn direction_to(from: [f64; 3], to: [f64; 3]) -> Option<UnitVec3> {
    UnitVec3::from_vector(Vector3::from(to) - Vector3::from(from)).ok()
}

impl FieldSim {
    pub fn new(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate(&config.name)?;
        let scene = config.scene()?;
        let start_unix = config.start_unix()?;
        let detector: Option<Box<dyn Detector>> = match config.detector {
            DetectorKind::Classical => Some(Box::new(ClassicalDetector::new(config.classical))),
            DetectorKind::GroundTruth => None,
        };
        let first_mode = config
            .timeline
            .first()
            .filter(|e| e.time_s <= 0.0)
            .and_then(|e| e.to_mode())
            .unwrap_or(Mode::Stow);
        let h = &config.heliostat;
        let d = &config.disturbances;
        let mut plant = HeliostatState {
            id: h.id.clone(),
            position_m: h.position_m,
            pose: Pose::new(180.0, super::plant::STOW_ELEVATION_DEG),
            rate_limits_deg_s: h.rate_limits_deg_s,
            pedestal_tilt_mrad: AngularOffset::new(d.pedestal_tilt_mrad[0], d.pedestal_tilt_mrad[1]),
            deformation_gain: d.deformation_gain_mrad_per_deg_s,
            encoder_quantization_mrad: h.encoder_quantization_mrad,
            mode: first_mode,
            slew_deg_s: [0.0, 0.0],
        };
        let mut sim_for_goal = Self {
            scene,
            camera: config.camera.clone(),
            controller: config.controller,
            scada: config.scada,
            calibration: config.calibration(),
            detector,
            start_unix,
            tick: 0,
            timeline_next: 0,
            jitter: (d.jitter_sigma_mrad > 0.0).then(|| Normal::new(0.0, d.jitter_sigma_mrad).expect("valid sigma")),
            twins: [
                Twin { kind: LoopKind::Vision, plant: plant.clone(), clouds: vec![], rng: ChaCha8Rng::seed_from_u64(config.seed) },
                Twin {
                    kind: LoopKind::Scada,
                    plant: plant.clone(),
                    clouds: vec![],
                    rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5CADA),
                },
            ],
            config,
        };
        let initial = match (h_initial_pose(&sim_for_goal.config), h_initial_offset(&sim_for_goal.config)) {
            (Some(p), _) => p,
            (None, offset) => {
                let goal = sim_for_goal
                    .goal_pose(&plant, start_unix)
                    .unwrap_or(plant.pose);
                pose_after_correction(&goal, &AngularOffset::new(offset[0], offset[1]))
            }
        };
        plant.pose = initial;
        for twin in &mut sim_for_goal.twins {
            twin.plant.pose = initial;
        }
        Ok(sim_for_goal)
    }

    /// Replaces the detector used by the vision pipeline.
    pub fn with_detector(mut self, detector: Box<dyn Detector>) -> Self {
        self.detector = Some(detector);
        self
    }

    pub fn with_calibration(mut self, calibration: AimingOffset) -> Self {
        self.calibration = calibration;
        self
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn calibration(&self) -> &AimingOffset {
        &self.calibration
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn elapsed_s(&self) -> f64 {
        self.tick as f64 * self.config.tick_s
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.config.tick_count()
    }

    pub fn plant(&self, kind: LoopKind) -> &HeliostatState {
        match kind {
            LoopKind::Vision => &self.twins[0].plant,
            LoopKind::Scada => &self.twins[1].plant,
        }
    }

    /// True while stowing and not yet at the stow pose.
    pub fn stow_in_progress(&self) -> bool {
        self.twins.iter().any(|t| t.plant.mode == Mode::Stow && t.plant.pose != t.plant.stow_pose())
    }

    /// Applies an operator command to both twins.
    pub fn command(&mut self, cmd: &Command) -> Result<Mode, CommandError> {
        let mode = match (cmd.mode.as_str(), &cmd.target) {
            ("stow", None) => Mode::Stow,
            ("sun_track", None) => Mode::SunTrack,
            ("target_track", None) => Mode::TargetTrack,
            ("target_track", Some(CommandTarget::Named(id))) if *id == self.scene.target.id => Mode::TargetTrack,
            ("target_track", Some(CommandTarget::Named(id))) => {
                return Err(CommandError::Invalid(format!("unknown target `{id}`")))
            }
            ("manual", Some(CommandTarget::Pose { azimuth_deg, elevation_deg })) => {
                if !(azimuth_deg.is_finite() && (0.0..=90.0).contains(elevation_deg)) {
                    return Err(CommandError::Invalid(format!(
                        "manual pose ({azimuth_deg}, {elevation_deg}) out of range"
                    )));
                }
                Mode::Manual { azimuth_deg: *azimuth_deg, elevation_deg: *elevation_deg }
            }
            ("manual", _) => {
                return Err(CommandError::Invalid("manual needs target {azimuth_deg, elevation_deg}".into()))
            }
            ("stow" | "sun_track", Some(_)) => {
                return Err(CommandError::Invalid(format!("{} takes no target", cmd.mode)))
            }
            ("target_track", Some(_)) => return Err(CommandError::Invalid("target must be a target id".into())),
            (other, _) => return Err(CommandError::Invalid(format!("unknown mode `{other}`"))),
        };
        if mode != Mode::Stow && self.stow_in_progress() {
            return Err(CommandError::StowInterlock);
        }
        self.set_mode(mode);
        Ok(mode)
    }

    fn set_mode(&mut self, mode: Mode) {
        for twin in &mut self.twins {
            twin.plant.mode = mode;
        }
    }

    fn sun_at(&self, unix: f64) -> Option<SunPosition> {
        sun_direction(&self.scene.site.at(unix)).ok()
    }

    fn target_direction(&self, plant: &HeliostatState) -> Option<UnitVec3> {
        direction_to(plant.position_m, self.scene.target.position_m)
    }

    /// Exact facet normal for the plant's mode, from the ephemeris.
    fn goal_normal(&self, plant: &HeliostatState, unix: f64) -> Option<UnitVec3> {
        let sun = self.sun_at(unix)?;
        match plant.mode {
            Mode::SunTrack => (sun.elevation_deg > 0.0).then_some(sun.direction),
            Mode::TargetTrack => {
                if sun.elevation_deg <= 0.0 {
                    return None;
                }
                aim_normal(&sun.direction, plant.position_m, self.scene.target.position_m).ok()
            }
            _ => None,
        }
    }

    fn goal_pose(&self, plant: &HeliostatState, unix: f64) -> Option<Pose> {
        match plant.mode {
            Mode::Stow => Some(plant.stow_pose()),
            Mode::Manual { azimuth_deg, elevation_deg } => Some(Pose::new(azimuth_deg, elevation_deg)),
            _ => self.goal_normal(plant, unix).map(|n| Pose::from_normal(&n)),
        }
    }

    /// Camera-plane error predicted from the encoder pose and the ephemeris,
    /// with the nominal (undisturbed) camera orientation.
    fn predicted_error_px(&self, plant: &HeliostatState, sun: &UnitVec3) -> Option<PixelOffset> {
        let frame = plant.encoder_pose().frame();
        let project = |d: &UnitVec3| self.camera.project(&frame.to_camera(d)).ok();
        let s = project(sun)?;
        let pp = self.camera.principal_point();
        match plant.mode {
            Mode::SunTrack => Some(s.offset_from(&pp)),
            Mode::TargetTrack => {
                let t = project(&self.target_direction(plant)?)?;
                Some(s.midpoint(&t).offset_from(&pp))
            }
            _ => None,
        }
    }

    fn apply_timeline(&mut self) {
        let now = self.elapsed_s();
        while let Some(entry) = self.config.timeline.get(self.timeline_next) {
            if entry.time_s > now + 1e-9 {
                break;
            }
            if let Some(mode) = entry.to_mode() {
                self.set_mode(mode);
            }
            self.timeline_next += 1;
        }
    }

    fn run_twin(&mut self, index: usize) -> LoopOutput {
        let unix = self.start_unix + self.elapsed_s();
        let time_s = self.elapsed_s();
        let dt = self.config.tick_s;

        let jitter = match &self.jitter {
            Some(n) => {
                let rng = &mut self.twins[index].rng;
                AngularOffset::new(n.sample(rng), n.sample(rng))
            }
            None => AngularOffset::ZERO,
        };
        let plant = self.twins[index].plant.clone();
        let kind = self.twins[index].kind;
        let view = CameraView { position_m: Vector3::from(plant.position_m), frame: plant.optical_frame(&jitter) };
        let (frame, truth) = render(&self.scene, &self.camera, &view, unix);
        let detections = match &self.detector {
            Some(d) => d.detect(&frame),
            None => truth.detections(self.camera.width_px(), self.camera.height_px()),
        };
        let mut analysis = analyze_frame(&detections, &self.camera, &self.calibration);
        let tracks = track_clouds(&self.twins[index].clouds, &detections, dt, analysis.sun_bbox.as_ref());
        self.twins[index].clouds = tracks.clone();
        analysis.cloud_tracks = tracks;

        let encoder = plant.encoder_pose();
        let sun = self.sun_at(unix);
        let (error_px, command) = match kind {
            LoopKind::Vision => {
                let measured = match plant.mode {
                    Mode::TargetTrack => analysis.tracking_error_px,
                    Mode::SunTrack => analysis.sun_error_px(),
                    _ => None,
                };
                let command = match measured {
                    Some(px) => {
                        let err = TrackingError::new(&self.camera, px, time_s);
                        pose_after_correction(&encoder, &control_step(&self.controller, &self.camera, &err))
                    }
                    // Nothing to servo on: fall back to the ephemeris pointing.
                    None => self.goal_pose(&plant, unix).unwrap_or(encoder),
                };
                (measured, command)
            }
            LoopKind::Scada => {
                let predicted = sun.and_then(|s| self.predicted_error_px(&plant, &s.direction));
                let command = match (plant.mode, sun) {
                    (Mode::TargetTrack, Some(s)) => {
                        scada_setpoint(&s, plant.position_m, self.scene.target.position_m, &self.scada)
                            .unwrap_or(encoder)
                    }
                    (Mode::SunTrack, Some(s)) if s.elevation_deg > 0.0 => {
                        quantize_pose(&Pose::from_normal(&s.direction), self.scada.quantization_mrad)
                    }
                    (Mode::SunTrack | Mode::TargetTrack, _) => encoder,
                    _ => self.goal_pose(&plant, unix).unwrap_or(encoder),
                };
                (predicted, command)
            }
        };

        let reference = analysis.reference_point;
        let true_px = match plant.mode {
            Mode::TargetTrack => truth
                .sun_center
                .zip(truth.target_center)
                .map(|(s, t)| s.midpoint(&t).offset_from(&reference)),
            Mode::SunTrack => truth.sun_center.map(|s| s.offset_from(&reference)),
            _ => None,
        };

        let record = TickRecord {
            tick: self.tick,
            time_s,
            mode: plant.mode.label().to_string(),
            command,
            pose: plant.pose,
            encoder,
            slew_deg_s: plant.slew_deg_s,
            sun_center: analysis.sun_center,
            target_center: analysis.target_center,
            aim_point: analysis.aim_point,
            error: error_px.map(|px| TrackingError::new(&self.camera, px, time_s)),
            true_error_mrad: true_px.map(|px| self.camera.pixel_error_to_mrad(&px)),
            shadow: analysis.shadow,
            block: analysis.block,
            truth_shadow: truth.shadow,
            truth_block: truth.block,
            sun_occluded_fraction: truth.sun_occluded_fraction,
            cloud_tto_s: analysis.min_time_to_occlusion_s(),
            detections: detections.len(),
        };
        self.twins[index].plant = step(&plant, &command, dt);
        LoopOutput { record, frame, detections, analysis, truth }
    }

    /// Advances one tick; `None` once the scenario duration is exhausted.
    pub fn tick(&mut self) -> Option<TickOutput> {
        if self.is_finished() {
            return None;
        }
        Some(self.tick_unbounded())
    }

    /// Advances one tick regardless of the configured duration, for
    /// open-ended service runs.
    pub fn tick_unbounded(&mut self) -> TickOutput {
        self.apply_timeline();
        let vision = self.run_twin(0);
        let scada = self.run_twin(1);
        let out = TickOutput { tick: self.tick, vision, scada };
        self.tick += 1;
        out
    }
}

fn h_initial_pose(cfg: &ScenarioConfig) -> Option<Pose> {
    cfg.heliostat.initial_pose_deg.map(|[a, e]| Pose::new(a, e))
}

fn h_initial_offset(cfg: &ScenarioConfig) -> [f64; 2] {
    cfg.heliostat.initial_offset_mrad.unwrap_or([0.0, 0.0])
}

/// Logs of both loops for a whole scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub vision: RunLog,
    pub scada: RunLog,
}

impl ScenarioRun {
    pub fn log(&self, kind: LoopKind) -> &RunLog {
        match kind {
            LoopKind::Vision => &self.vision,
            LoopKind::Scada => &self.scada,
        }
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, ConfigError> {
    run_scenario_with(cfg, |_| Ok(())).map_err(|e| match e {
        SimError::Config(c) => c,
        SimError::Sink(_) | SimError::Control(_) => unreachable!("a plain run with a no-op sink only fails on config"),
    })
}

/// Runs the whole scenario, handing every tick to `sink` (for example to
/// save frames).
pub fn run_scenario_with<F>(cfg: &ScenarioConfig, mut sink: F) -> Result<ScenarioRun, SimError>
where
    F: FnMut(&TickOutput) -> Result<(), String>,
{
    let sim = FieldSim::new(cfg.clone())?;
    drive(sim, &mut sink)
}

/// Runs a prepared simulator to the end of its scenario.
pub fn drive<F>(mut sim: FieldSim, sink: &mut F) -> Result<ScenarioRun, SimError>
where
    F: FnMut(&TickOutput) -> Result<(), String>,
{
    let tick_s = sim.config.tick_s;
    let mut vision = RunLog { kind: LoopKind::Vision, tick_s, records: Vec::new() };
    let mut scada = RunLog { kind: LoopKind::Scada, tick_s, records: Vec::new() };
    while let Some(out) = sim.tick() {
        sink(&out).map_err(SimError::Sink)?;
        vision.records.push(out.vision.record);
        scada.records.push(out.scada.record);
    }
    Ok(ScenarioRun { vision, scada })
}

/// Sun-pointing calibration: the mean `S′ − A′` seen by the ephemeris-driven
/// baseline over every `sun_track` tick, with the run that produced it.
pub fn calibrate_scenario<F>(cfg: &ScenarioConfig, mut sink: F) -> Result<(AimingOffset, ScenarioRun), SimError>
where
    F: FnMut(&TickOutput) -> Result<(), String>,
{
    let mut frames = Vec::new();
    let run = run_scenario_with(cfg, |out| {
        if out.scada.record.mode == Mode::SunTrack.label() {
            frames.push(out.scada.analysis.clone());
        }
        sink(out)
    })?;
    Ok((calibrate_aiming(&frames)?, run))
}
