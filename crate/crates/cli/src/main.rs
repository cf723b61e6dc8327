use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use helioview::sim::{FieldSim, ScenarioConfig};
use helioview::vision::{write_detections_jsonl, ClassicalDetector, ClassicalParams, Detector};
use helioview_cli::runs::{self, SimulateOptions};
use helioview_cli::service::{self, AppState, Pace, DEFAULT_SPEED};
use helioview_cli::CliError;

#[derive(Parser)]
#[command(name = "helioview", version, about = "Camera-based heliostat tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario into a run directory and print its summary.
    Simulate {
        /// Bundled scenario name or path to a TOML file.
        #[arg(long, default_value = "target_track")]
        scenario: String,
        /// Run directory [default: runs/<run id>].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// calibration.json from a previous `calibrate`.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Estimate the camera aiming offset from a Sun-pointing run.
    Calibrate { run_dir: PathBuf },
    /// Detect objects in a PPM frame and print them as JSON lines.
    Detect {
        frame: PathBuf,
        /// Scenario whose classical detector parameters to use.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Serve the HTTP/JSON API and event stream.
    Serve {
        #[arg(long, default_value = "target_track")]
        scenario: String,
        #[arg(long, env = "HELIOVIEW_BIND", default_value = "127.0.0.1:8080")]
        bind: String,
        /// Simulated seconds per wall-clock second; 0 steps as fast as possible.
        #[arg(long, default_value_t = DEFAULT_SPEED)]
        speed: f64,
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Simulate { scenario, out, seed, calibration } => {
            let (dir, manifest) = runs::simulate(&SimulateOptions { scenario, out, seed, calibration })?;
            print!("{}", runs::summary_table(&manifest));
            println!("wrote        {}", dir.display());
        }
        Cmd::Calibrate { run_dir } => {
            let c = runs::calibrate(&run_dir)?;
            let o = &c.offset;
            println!("aiming offset du = {:.3} ± {:.3} px, dv = {:.3} ± {:.3} px ({} frames)", o.du, o.sigma_u, o.dv, o.sigma_v, o.samples);
            println!("wrote {}", run_dir.join(runs::CALIBRATION_FILE).display());
        }
        Cmd::Detect { frame, scenario } => {
            let params = match scenario {
                Some(s) => ScenarioConfig::load(&s)?.0.classical,
                None => ClassicalParams::default(),
            };
            let dets = ClassicalDetector::new(params).detect(&runs::load_frame(&frame)?);
            let stdout = std::io::stdout();
            write_detections_jsonl(&dets, stdout.lock()).map_err(|e| CliError::Run(e.to_string()))?;
        }
        Cmd::Serve { scenario, bind, speed, calibration } => {
            let cfg = runs::effective_config(&SimulateOptions { scenario, calibration, ..Default::default() })?;
            let sim = FieldSim::new(service::interactive(cfg))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Run(e.to_string()))?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind)
                    .await
                    .map_err(|e| CliError::Io { path: bind.clone(), message: e.to_string() })?;
                let state = AppState::start(sim, Pace::from_speed(speed));
                eprintln!("listening on http://{}", listener.local_addr().map_or(bind, |a| a.to_string()));
                axum::serve(listener, service::router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
                    .map_err(|e| CliError::Run(e.to_string()))
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = std::io::stdout().flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
