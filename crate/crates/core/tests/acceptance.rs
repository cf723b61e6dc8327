//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod common;

use std::hash::{DefaultHasher, Hash, Hasher};
use std::time::{Duration, Instant};

use common::{
    brute_force_centroid, cam, empty_scene, midpoint_sweep_bound, neighbor_on_line, rng, spencer_sun,
    MIDPOINT_SWEEP_BOUND_PX, T0,
};
use helioview::control::compare_runs;
use helioview::ephemeris::{sun_direction, GeoTime};
use helioview::geometry::{CameraFrame, CameraModel, UnitVec3};
use helioview::render::{render, CameraView, SUN_ANGULAR_RADIUS_MRAD};
use helioview::sim::{calibrate_scenario, run_scenario, run_scenario_with, ScenarioConfig, BUNDLED_SCENARIOS};
use helioview::vision::{segment_sun, SunSegmentation};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bundled(name: &str) -> ScenarioConfig {
    ScenarioConfig::bundled(name).expect("bundled").expect("valid")
}

fn pointing_uncertainty() -> Outcome {
    let u800 = cam().pointing_uncertainty_mrad();
    let u1600 = CameraModel::new(1600, 1200, 3.76, 2.74, 2.35).unwrap().pointing_uncertainty_mrad();
    check(
        (u800 - 2.0).abs() <= 0.01 && (u1600 - 1.0).abs() <= 0.01,
        format!("800x600 U = {u800:.4} mrad, 1600x1200 U = {u1600:.4} mrad"),
    )
}

fn sun_centroid() -> Outcome {
    let cam = cam();
    let pos = [0.0, 100.0, 2.0];
    let mut r = rng(10);
    let mut worst = 0.0_f64;
    for k in 0..100u64 {
        let scene = empty_scene(k);
        let t = T0 + k as f64 * 97.0;
        let sun = scene.apparent_sun(t).unwrap();
        let frame = CameraFrame::from_az_el_deg(
            sun.azimuth_deg() + r.random_range(-12.0..12.0),
            sun.elevation_deg() + r.random_range(-9.0..9.0),
        );
        let (img, gt) = render(&scene, &cam, &CameraView::new(pos, frame), t);
        let seg = segment_sun(&img, &SunSegmentation::default()).map_err(|e| format!("unoccluded frame {k}: {e}"))?;
        worst = worst.max(seg.centroid.distance_to(&gt.sun_center.unwrap()));
    }
    let params = SunSegmentation { min_area_px: 3, ..SunSegmentation::default() };
    let mut r = rng(11);
    let mut exact = 0;
    for k in 0..50u64 {
        let mut scene = empty_scene(100 + k);
        let t = T0 + k as f64 * 131.0;
        let sun = scene.apparent_sun(t).unwrap();
        let dist = r.random_range(15.0..30.0);
        let edge = r.random_range(-0.5..0.5) * SUN_ANGULAR_RADIUS_MRAD * 1e-3 * dist;
        scene.neighbors.push(neighbor_on_line(pos, &sun, dist, edge, k % 2 == 0, "h"));
        let frame = CameraFrame::from_az_el_deg(
            sun.azimuth_deg() + r.random_range(-5.0..5.0),
            sun.elevation_deg() + r.random_range(-5.0..5.0),
        );
        let (img, gt) = render(&scene, &cam, &CameraView::new(pos, frame), t);
        let partial = gt.sun_occluded_fraction > 0.0 && gt.sun_occluded_fraction < 1.0;
        let seg = segment_sun(&img, &params).map_err(|e| format!("occluded frame {k}: {e}"))?;
        let (c, n) = brute_force_centroid(&img, params.lightness_threshold).unwrap();
        if partial && seg.area_px == n && seg.centroid.distance_to(&c) < 1e-9 {
            exact += 1;
        }
    }
    check(
        worst <= 0.5 && exact == 50,
        format!("unoccluded worst {worst:.3} px over 100 frames; {exact}/50 occluded frames match enumeration"),
    )
}

fn midpoint_law() -> Outcome {
    let worst = midpoint_sweep_bound(60.0);
    check(worst <= MIDPOINT_SWEEP_BOUND_PX, format!("sweep worst {worst:.3e} px, frozen bound {MIDPOINT_SWEEP_BOUND_PX:e} px"))
}

fn calibration() -> Outcome {
    let base = bundled("calibration.sun_point");
    let (a, _) = calibrate_scenario(&base, |_| Ok(())).map_err(|e| e.to_string())?;
    let mut doubled = base.clone();
    let k = base.camera.pixel_pitch_mm() / base.camera.focal_mm();
    doubled.disturbances.pedestal_tilt_mrad = [-(10.0 * k).atan() * 1e3, (6.0 * k).atan() * 1e3];
    let (b, _) = calibrate_scenario(&doubled, |_| Ok(())).map_err(|e| e.to_string())?;
    let recovered = a.samples == 30 && (a.du - 5.0).abs() <= 0.5 && (a.dv + 3.0).abs() <= 0.5;
    let linear = (b.du - 2.0 * a.du).abs() <= 0.5 && (b.dv - 2.0 * a.dv).abs() <= 0.5;
    check(
        recovered && linear,
        format!(
            "recovered ({:.3}, {:.3}) px over {} frames; doubled ({:.3}, {:.3}) px",
            a.du, a.dv, a.samples, b.du, b.dv
        ),
    )
}

fn convergence() -> Outcome {
    let mut cfg = bundled("target_track");
    cfg.disturbances = Default::default();
    cfg.calibration_px = None;
    cfg.duration_s = 61.0;
    let start = Instant::now();
    let run = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let errs: Vec<Option<f64>> = run.vision.records.iter().map(|r| r.error.as_ref().map(|e| e.error_px.max_abs())).collect();
    let initial_mrad = errs[0].unwrap_or(0.0) * cfg.camera.pointing_uncertainty_mrad();
    let hit = errs.iter().position(|e| e.is_some_and(|e| e <= 1.0));
    check(
        hit.is_some_and(|t| t <= 60) && initial_mrad >= 100.0 && elapsed < Duration::from_secs(60),
        format!("initial {initial_mrad:.1} mrad, within 1 px at tick {hit:?}, {:.1} s", elapsed.as_secs_f64()),
    )
}

fn reproduction() -> Outcome {
    let cfg = bundled("target_track");
    let start = Instant::now();
    let run = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let series = compare_runs(&run.vision, &run.scada, &cfg.compare).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let s = &series.summary;
    let steady_ok = s.axes.iter().all(|a| a.steady_samples > 0 && a.steady_max_abs_diff_mrad < 3.0);
    let confined = series
        .rows
        .iter()
        .all(|r| r.diff_mrad.is_none_or(|d| d.abs() < 3.0) || s.in_transition(r.time_s));
    let spikes_ok = !s.spikes.is_empty() && s.spikes.iter().all(|p| (10.0..=20.0).contains(&p.diff_mrad.abs()));
    let spikes: Vec<String> = s.spikes.iter().map(|p| format!("{:.1}@{}s", p.diff_mrad.abs(), p.time_s)).collect();
    check(
        steady_ok && confined && spikes_ok && elapsed < Duration::from_secs(120),
        format!(
            "steady max az {:.2} / el {:.2} mrad; spikes [{}] mrad; {} transitions; {:.1} s",
            s.axes[0].steady_max_abs_diff_mrad,
            s.axes[1].steady_max_abs_diff_mrad,
            spikes.join(", "),
            s.transitions.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn fingerprint(cfg: &ScenarioConfig) -> Result<(String, String, u64), String> {
    let mut h = DefaultHasher::new();
    let run = run_scenario_with(cfg, |out| {
        out.vision.frame.to_ppm_bytes().hash(&mut h);
        out.scada.frame.to_ppm_bytes().hash(&mut h);
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    Ok((run.vision.to_csv_string(), run.scada.to_csv_string(), h.finish()))
}

fn determinism() -> Outcome {
    let mut same = Vec::new();
    for (name, _) in BUNDLED_SCENARIOS {
        let cfg = bundled(name);
        same.push((name, fingerprint(&cfg)? == fingerprint(&cfg)?));
    }
    let all = same.iter().all(|(_, s)| *s);
    let detail: Vec<String> = same.iter().map(|(n, s)| format!("{n}: {}", if *s { "identical" } else { "differs" })).collect();
    check(all, detail.join(", "))
}

fn ephemeris() -> Outcome {
    let site = GeoTime::new(37.0, -2.36, 0.0).unwrap();
    // 2024-03-20, scanned by the minute over 11:00-13:30 UTC.
    let (_, noon) = (0..150)
        .map(|k| {
            let t = 1_710_932_400.0 + k as f64 * 60.0;
            (t, sun_direction(&site.at(t)).unwrap())
        })
        .max_by(|a, b| a.1.elevation_deg.total_cmp(&b.1.elevation_deg))
        .unwrap();
    let el_ok = (noon.elevation_deg - 53.0).abs() <= 0.5;
    let az_ok = (noon.azimuth_deg - 180.0).abs() <= 0.5;
    let sites = [(37.09, -2.36), (52.5, 13.4), (-33.9, 18.4), (10.0, -75.0)];
    let days = [1_705_276_800.0, 1_712_707_200.0, 1_718_928_000.0, 1_725_494_400.0, 1_732_924_800.0, 647_049_600.0];
    let mut worst = 0.0_f64;
    let mut n = 0;
    for (i, (lat, lon)) in sites.iter().enumerate() {
        for (j, day) in days.iter().enumerate() {
            let offset_h = [-2.0, -1.0, 0.5, 1.5, 2.0, -0.5][(i + j) % 6];
            let t: f64 = (day + (12.0 - lon / 15.0 + offset_h) * 3600.0_f64).round();
            let lib = sun_direction(&GeoTime::new(*lat, *lon, t).unwrap()).unwrap();
            let (az, el) = spencer_sun(*lat, *lon, t);
            worst = worst.max(lib.direction.angle_to(&UnitVec3::from_az_el_deg(az, el)).to_degrees());
            n += 1;
        }
    }
    check(
        el_ok && az_ok && n == 24 && worst < 0.5,
        format!(
            "noon elevation {:.3} deg, azimuth {:.3} deg; {n}-point worst separation {worst:.4} deg",
            noon.elevation_deg, noon.azimuth_deg
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("pointing uncertainty", pointing_uncertainty),
        ("sun centroid accuracy", sun_centroid),
        ("midpoint-law fidelity", midpoint_law),
        ("calibration", calibration),
        ("closed-loop convergence", convergence),
        ("vision vs baseline reproduction", reproduction),
        ("determinism", determinism),
        ("ephemeris sanity", ephemeris),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
