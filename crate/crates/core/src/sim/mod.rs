//! Heliostat plant, scenario files and the deterministic two-loop simulator.

mod plant;
mod run;
mod scenario;

pub use plant::{step, Disturbances, HeliostatState, Mode, STOW_ELEVATION_DEG};
pub use run::{
    calibrate_scenario,
    drive, run_scenario, run_scenario_with, Command, CommandError, CommandTarget, FieldSim, LoopOutput,
    RunLog, ScenarioRun, SimError, TickOutput, TickRecord,
};
pub use scenario::{
    bundled_scenario, ConfigError, DetectorKind, FrameOptions, HeliostatConfig, LoopKind, ModeName,
    ScenarioConfig, SiteConfig, TimelineEntry, BUNDLED_SCENARIOS,
};
