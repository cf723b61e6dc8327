//! Run directories: simulate a scenario into one, and calibrate from one.
//!
//! A run directory holds `manifest.json`, the effective `scenario.toml`, the
//! per-loop logs `vision.csv` and `scada.csv`, the comparison `errors.csv`,
//! and saved frames under `frames/` with their detections as JSONL.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat};
use helioview::control::{calibrate_aiming, compare_runs, AimingOffset, AxisSummary, Interval, Spike};
use helioview::sim::{run_scenario_with, DetectorKind, LoopKind, ScenarioConfig, ScenarioRun, TickOutput};
use helioview::vision::{
    analyze_frame, read_detections_jsonl, write_detections_jsonl, ClassicalDetector, Detector, Image,
};
use helioview::PixelOffset;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CALIBRATION_FILE: &str = "calibration.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub tick: u64,
    pub time_s: f64,
    #[serde(rename = "loop")]
    pub kind: LoopKind,
    pub mode: String,
    pub image: Artifact,
    pub detections: Artifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ticks: usize,
    /// First vision tick with the tracking error inside the deadband.
    pub convergence_tick: Option<u64>,
    pub final_error_px: Option<PixelOffset>,
    pub steady_max_abs_diff_mrad: f64,
    pub max_abs_diff_mrad: f64,
    pub axes: Vec<AxisSummary>,
    pub transitions: Vec<Interval>,
    pub spikes: Vec<Spike>,
}

/// Everything a run wrote. Simulated times rather than wall-clock times, so
/// that repeating a run reproduces the manifest byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub scenario: String,
    pub seed: u64,
    /// SHA-256 of the effective scenario TOML.
    pub scenario_sha256: String,
    pub start: String,
    pub end: String,
    pub tick_s: f64,
    pub config: Artifact,
    pub vision_log: Artifact,
    pub scada_log: Artifact,
    pub errors: Artifact,
    pub frames: Vec<FrameEntry>,
    pub summary: RunSummary,
}

/// Output of `calibrate`, consumed by `simulate --calibration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub run_id: String,
    #[serde(flatten)]
    pub offset: AimingOffset,
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    /// Bundled scenario name or path to a TOML file.
    pub scenario: String,
    /// Run directory; defaults to `runs/<run id>`.
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// A `calibration.json` whose offset replaces the scenario's.
    pub calibration: Option<PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn iso(unix: f64) -> String {
    let secs = unix.floor();
    let nanos = ((unix - secs) * 1e9).round() as u32;
    DateTime::from_timestamp(secs as i64, nanos.min(999_999_999))
        .map_or_else(|| format!("{unix}"), |t| t.to_rfc3339_opts(SecondsFormat::AutoSi, true))
}

fn write_artifact(dir: &Path, rel: &str, bytes: &[u8]) -> Result<Artifact, CliError> {
    let path = dir.join(rel);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(Artifact { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 })
}

pub fn read_calibration(path: &Path) -> Result<CalibrationFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

/// Scenario with the command-line overrides applied.
pub fn effective_config(opts: &SimulateOptions) -> Result<ScenarioConfig, CliError> {
    let (mut cfg, _) = ScenarioConfig::load(&opts.scenario)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(path) = &opts.calibration {
        let c = read_calibration(path)?;
        cfg.calibration_px = Some([c.offset.du, c.offset.dv]);
    }
    cfg.validate(&opts.scenario)?;
    Ok(cfg)
}

fn summarize(cfg: &ScenarioConfig, run: &ScenarioRun, series: &helioview::control::ErrorSeries) -> RunSummary {
    let errors: Vec<Option<PixelOffset>> =
        run.vision.records.iter().map(|r| r.error.map(|e| e.error_px)).collect();
    RunSummary {
        ticks: run.vision.records.len(),
        convergence_tick: run
            .vision
            .records
            .iter()
            .zip(&errors)
            .find(|(_, e)| e.is_some_and(|e| e.max_abs() <= cfg.controller.deadband_px))
            .map(|(r, _)| r.tick),
        final_error_px: errors.last().copied().flatten(),
        steady_max_abs_diff_mrad: series.summary.steady_max_abs_diff_mrad(),
        max_abs_diff_mrad: series.summary.max_abs_diff_mrad(),
        axes: series.summary.axes.clone(),
        transitions: series.summary.transitions.clone(),
        spikes: series.summary.spikes.clone(),
    }
}

/// Runs a scenario into a run directory and writes its manifest.
pub fn simulate(opts: &SimulateOptions) -> Result<(PathBuf, RunManifest), CliError> {
    let cfg = effective_config(opts)?;
    let config_toml = toml::to_string(&cfg).map_err(|e| CliError::Run(format!("serializing scenario: {e}")))?;
    let scenario_sha256 = sha256_hex(config_toml.as_bytes());
    let run_id = format!("{}-{}", cfg.name, &scenario_sha256[..12]);
    let dir = opts.out.clone().unwrap_or_else(|| Path::new("runs").join(&run_id));
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| CliError::io(&frames_dir, e))?;
    let config = write_artifact(&dir, "scenario.toml", config_toml.as_bytes())?;

    let mut frames = Vec::new();
    let run = run_scenario_with(&cfg, |out: &TickOutput| {
        for kind in [LoopKind::Vision, LoopKind::Scada] {
            if !cfg.frames.saves(kind, out.tick) {
                continue;
            }
            let lo = out.get(kind);
            let stem = format!("frames/{}_{:06}", kind.as_str(), out.tick);
            let image = write_artifact(&dir, &format!("{stem}.ppm"), &lo.frame.to_ppm_bytes())
                .map_err(|e| e.to_string())?;
            let mut jsonl = Vec::new();
            write_detections_jsonl(&lo.detections, &mut jsonl).map_err(|e| e.to_string())?;
            let detections =
                write_artifact(&dir, &format!("{stem}.jsonl"), &jsonl).map_err(|e| e.to_string())?;
            frames.push(FrameEntry {
                tick: out.tick,
                time_s: lo.record.time_s,
                kind,
                mode: lo.record.mode.clone(),
                image,
                detections,
            });
        }
        Ok(())
    })?;

    let series = compare_runs(&run.vision, &run.scada, &cfg.compare)?;
    let vision_log = write_artifact(&dir, "vision.csv", run.vision.to_csv_string().as_bytes())?;
    let scada_log = write_artifact(&dir, "scada.csv", run.scada.to_csv_string().as_bytes())?;
    let errors = write_artifact(&dir, "errors.csv", series.to_csv_string().as_bytes())?;
    let start_unix = cfg.start_unix()?;
    let manifest = RunManifest {
        run_id,
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        scenario_sha256,
        start: iso(start_unix),
        end: iso(start_unix + run.vision.records.len() as f64 * cfg.tick_s),
        tick_s: cfg.tick_s,
        config,
        vision_log,
        scada_log,
        errors,
        frames,
        summary: summarize(&cfg, &run, &series),
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok((dir, manifest))
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest, CliError> {
    let path = run_dir.join(MANIFEST_FILE);
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::format(&path, e))
}

/// Aiming offset from the saved Sun-pointing frames of the ephemeris-driven
/// baseline. The vision loop is excluded: it servos the Sun onto the
/// calibrated reference, so its frames would only echo the old offset.
/// Frames are re-detected from pixels when the run used the classical
/// detector, and read from their stored detections otherwise.
pub fn calibrate(run_dir: &Path) -> Result<CalibrationFile, CliError> {
    let manifest = read_manifest(run_dir)?;
    let cfg_path = run_dir.join(&manifest.config.path);
    let cfg = ScenarioConfig::from_path(&cfg_path)?;
    let detector = (cfg.detector == DetectorKind::Classical).then(|| ClassicalDetector::new(cfg.classical));
    let mut analyses = Vec::new();
    for f in manifest.frames.iter().filter(|f| f.kind == LoopKind::Scada && f.mode == "sun_track") {
        let dets = match &detector {
            Some(d) => {
                let path = run_dir.join(&f.image.path);
                let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
                d.detect(&Image::from_ppm_bytes(&bytes)?)
            }
            None => {
                let path = run_dir.join(&f.detections.path);
                let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
                read_detections_jsonl(BufReader::new(file))?
            }
        };
        analyses.push(analyze_frame(&dets, &cfg.camera, &AimingOffset::default()));
    }
    let offset = calibrate_aiming(&analyses)?;
    let out = CalibrationFile { run_id: manifest.run_id, offset };
    let path = run_dir.join(CALIBRATION_FILE);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &out).map_err(|e| CliError::io(&path, e))?;
    Ok(out)
}

/// Summary table printed by `simulate`.
pub fn summary_table(m: &RunManifest) -> String {
    let s = &m.summary;
    let mut out = String::new();
    out += &format!("run          {}\n", m.run_id);
    out += &format!("ticks        {} x {} s ({} to {})\n", s.ticks, m.tick_s, m.start, m.end);
    out += &format!(
        "convergence  {}\n",
        s.convergence_tick.map_or("not reached".to_string(), |t| format!("tick {t}"))
    );
    if let Some(e) = s.final_error_px {
        out += &format!("final error  ({:.2}, {:.2}) px\n", e.du, e.dv);
    }
    out += "axis  steady max |diff|  steady mean |diff|  max |diff|  (mrad)\n";
    for a in &s.axes {
        out += &format!(
            "{:<4}  {:>17.2}  {:>18.2}  {:>10.2}\n",
            a.axis.as_str(),
            a.steady_max_abs_diff_mrad,
            a.steady_mean_abs_diff_mrad,
            a.max_abs_diff_mrad
        );
    }
    out += &format!("steady-state max |diff|  {:.2} mrad\n", s.steady_max_abs_diff_mrad);
    out += &format!("max |diff|               {:.2} mrad\n", s.max_abs_diff_mrad);
    if s.spikes.is_empty() {
        out += "spikes       none\n";
    }
    for sp in &s.spikes {
        out += &format!(
            "spike        t={} s  {} {:.2} mrad  (transition {}..{} s)\n",
            sp.time_s,
            sp.axis.as_str(),
            sp.diff_mrad,
            sp.interval.start_s,
            sp.interval.end_s
        );
    }
    out
}

/// Reads an image saved by a run; for `detect`.
pub fn load_frame(path: &Path) -> Result<Image, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Image::from_ppm_bytes(&bytes)?)
}
