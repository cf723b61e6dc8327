//! Independent oracles and scene builders shared by the integration tests.
#![allow(dead_code)]

use chrono::{DateTime, Datelike, Timelike, Utc};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use helioview::geometry::{bisector, CameraFrame, CameraModel, PixelPoint, UnitVec3};
use helioview::render::{Cloud, NeighborHeliostat, RenderStyle, Scene, TargetPanel};
use helioview::vision::Image;
use helioview::GeoTime;

/// 2024-03-20T10:00:00Z.
pub const T0: f64 = 1_710_928_800.0;

/// Largest `|principal point - midpoint(S', T')|` in pixels over the
/// bisector-aligned sweep in `midpoint_sweep_bound`. Measured 1.61e-13 px
/// (rounding noise: the two projections are mirror images about the axis),
/// frozen with headroom.
pub const MIDPOINT_SWEEP_BOUND_PX: f64 = 1e-12;

pub fn cam() -> CameraModel {
    CameraModel::pi_camera_800x600()
}

pub fn empty_scene(seed: u64) -> Scene {
    Scene {
        site: GeoTime::psa(T0),
        target: TargetPanel {
            id: "receiver".into(),
            position_m: [0.0, 0.0, 45.0],
            size_m: [8.0, 8.0],
            facing_azimuth_deg: 0.0,
        },
        neighbors: vec![],
        clouds: vec![],
        refraction_mrad: 0.0,
        style: RenderStyle::default(),
        seed,
    }
}

/// Solar azimuth and elevation in degrees from the Fourier-series
/// declination and equation of time (Spencer 1971) plus the hour angle.
/// Shares no code with the library ephemeris.
pub fn spencer_sun(latitude_deg: f64, longitude_deg: f64, unix: f64) -> (f64, f64) {
    let t: DateTime<Utc> = DateTime::from_timestamp(unix as i64, 0).expect("valid instant");
    let hours = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
    let g = std::f64::consts::TAU / 365.0 * (t.ordinal() as f64 - 1.0 + (hours - 12.0) / 24.0);
    let eqtime_min = 229.18
        * (0.000075 + 0.001868 * g.cos() - 0.032077 * g.sin() - 0.014615 * (2.0 * g).cos()
            - 0.040849 * (2.0 * g).sin());
    let decl = 0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin() - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin();
    let true_solar_min = hours * 60.0 + eqtime_min + 4.0 * longitude_deg;
    let ha = (true_solar_min / 4.0 - 180.0).to_radians();
    let lat = latitude_deg.to_radians();
    let cos_zen = lat.sin() * decl.sin() + lat.cos() * decl.cos() * ha.cos();
    let zen = cos_zen.clamp(-1.0, 1.0).acos();
    let az = ha.sin().atan2(ha.cos() * lat.sin() - decl.tan() * lat.cos()).to_degrees() + 180.0;
    (az.rem_euclid(360.0), 90.0 - zen.to_degrees())
}

/// Lightness straight from the channel extremes.
fn bright(rgb: [u8; 3], threshold: f64) -> bool {
    let hi = *rgb.iter().max().unwrap() as f64;
    let lo = *rgb.iter().min().unwrap() as f64;
    (hi + lo) / 510.0 >= threshold
}

/// Centroid of every pixel at or above the lightness threshold, by plain
/// enumeration, with pixel centers at `i + 0.5`.
pub fn brute_force_centroid(img: &Image, threshold: f64) -> Option<(PixelPoint, usize)> {
    let (mut sx, mut sy, mut n) = (0u64, 0u64, 0usize);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if bright(img.get(x, y), threshold) {
                sx += x as u64;
                sy += y as u64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| {
        (PixelPoint::new(sx as f64 / n as f64 + 0.5, sy as f64 / n as f64 + 0.5), n)
    })
}

/// Worst distance between the principal point and the midpoint of the
/// projected Sun and target with the camera axis on their exact bisector,
/// over separations up to `max_sep_deg`.
pub fn midpoint_sweep_bound(max_sep_deg: f64) -> f64 {
    let cam = cam();
    let pp = cam.principal_point();
    let mut worst = 0.0_f64;
    for axis_el in [5.0, 20.0, 45.0, 70.0, 85.0] {
        for axis_az in (0..360).step_by(30) {
            let axis = UnitVec3::from_az_el_deg(axis_az as f64, axis_el);
            let frame = CameraFrame::from_axis(&axis);
            for roll in (0..180).step_by(15) {
                let r = (roll as f64).to_radians();
                let dir = frame.right().as_vector() * r.cos() + frame.down().as_vector() * r.sin();
                let mut sep = 0.5;
                while sep <= max_sep_deg + 1e-9 {
                    let h = (0.5 * sep).to_radians();
                    let s = UnitVec3::from_vector(axis.as_vector() * h.cos() + dir * h.sin()).unwrap();
                    let t = UnitVec3::from_vector(axis.as_vector() * h.cos() - dir * h.sin()).unwrap();
                    let n = bisector(&s, &t).unwrap();
                    let f = CameraFrame::from_axis(&n);
                    let sp = cam.project(&f.to_camera(&s)).unwrap();
                    let tp = cam.project(&f.to_camera(&t)).unwrap();
                    worst = worst.max(sp.midpoint(&tp).distance_to(&pp));
                    sep += 0.5;
                }
            }
        }
    }
    worst
}

/// A large neighbor quad facing the camera along `line`, `dist` metres out,
/// with one edge passing `edge_offset_m` beside the line (negative covers
/// it). `vertical`
/// selects which edge cuts the disk.
pub fn neighbor_on_line(
    pos: [f64; 3],
    line: &UnitVec3,
    dist: f64,
    edge_offset_m: f64,
    vertical: bool,
    id: &str,
) -> NeighborHeliostat {
    let half = 1.5;
    let normal_az = line.azimuth_deg() + 180.0;
    let normal_el = -line.elevation_deg();
    let normal = UnitVec3::from_az_el_deg(normal_az, normal_el);
    let a = normal_az.to_radians();
    let right = Vector3::new(a.cos(), -a.sin(), 0.0);
    let up = right.cross(normal.as_vector()).normalize();
    let shift = if vertical { right } else { up } * (half + edge_offset_m);
    let c = Vector3::from(pos) + line.as_vector() * dist + shift;
    NeighborHeliostat {
        id: id.into(),
        position_m: [c.x, c.y, c.z],
        size_m: [2.0 * half, 2.0 * half],
        normal_azimuth_deg: normal_az,
        normal_elevation_deg: normal_el,
    }
}

pub fn cloud(id: u32, az: f64, el: f64, semi: [f64; 2], rate: [f64; 2]) -> Cloud {
    Cloud { id, azimuth_deg: az, elevation_deg: el, semi_axes_mrad: semi, rate_deg_s: rate }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
