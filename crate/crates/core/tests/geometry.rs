mod common;

use common::{cam, midpoint_sweep_bound, rng, MIDPOINT_SWEEP_BOUND_PX};
use helioview::geometry::{bisector, CameraFrame, CameraModel, PixelOffset, PixelPoint, UnitVec3};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn random_directions_round_trip() {
    let cam = cam();
    let mut r = rng(1);
    for _ in 0..1000 {
        let d = UnitVec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(0.05..1.0)).unwrap();
        let back = cam.backproject(&cam.project(&d).unwrap());
        assert!((back.as_vector() - d.as_vector()).norm() < 1e-9, "{d:?}");
    }
}

#[test]
fn pixel_grid_round_trip() {
    let cam = cam();
    for y in (0..600).step_by(7) {
        for x in (0..800).step_by(7) {
            let p = PixelPoint::new(x as f64 + 0.25, y as f64 + 0.75);
            let q = cam.project(&cam.backproject(&p)).unwrap();
            assert!(q.distance_to(&p) < 1e-6, "{p:?} -> {q:?}");
        }
    }
}

#[test]
fn uncertainty_falls_with_resolution() {
    let mut prev = f64::INFINITY;
    for scale in 1..=8u32 {
        let c = CameraModel::new(400 * scale, 300 * scale, 3.76, 2.74, 2.35).unwrap();
        let u = c.pointing_uncertainty_mrad();
        assert!(u < prev);
        prev = u;
    }
}

#[test]
fn bisector_equal_angles_on_random_pairs() {
    let mut r = rng(2);
    for _ in 0..1000 {
        let s = UnitVec3::from_az_el_deg(r.random_range(0.0..360.0), r.random_range(-80.0..89.0));
        let t = UnitVec3::from_az_el_deg(r.random_range(0.0..360.0), r.random_range(-80.0..89.0));
        let Ok(n) = bisector(&s, &t) else { continue };
        assert!((n.angle_to(&s) - n.angle_to(&t)).abs() < 1e-9);
        let m = bisector(&t, &s).unwrap();
        assert!((n.as_vector() - m.as_vector()).norm() < 1e-15);
    }
}

#[test]
fn midpoint_law_sweep_stays_within_frozen_bound() {
    let worst = midpoint_sweep_bound(60.0);
    assert!(worst <= MIDPOINT_SWEEP_BOUND_PX, "sweep worst {worst:e} px");
}

/// Angle between the optical axis and the ray through an aim point,
/// resolved into the two image axes the same way the controller sees them.
fn ray_angles_mrad(cam: &CameraModel, p: &PixelPoint) -> (f64, f64) {
    let d = cam.backproject(p);
    (d.x().atan2(d.z()) * 1e3, d.y().atan2(d.z()) * 1e3)
}

#[test]
fn pixel_to_mrad_agrees_with_ray_angle_within_five_percent() {
    let cam = cam();
    let pp = cam.principal_point();
    let mut worst = 0.0_f64;
    for du in -50..=50 {
        for dv in -50..=50 {
            if du == 0 && dv == 0 {
                continue;
            }
            let off = PixelOffset::new(du as f64, dv as f64);
            let a = cam.pixel_error_to_mrad(&off);
            let total = (a.u_mrad.powi(2) + a.v_mrad.powi(2)).sqrt();
            let ray = cam.backproject(&pp.shifted(&off));
            let true_mrad = ray.angle_to(&UnitVec3::Z) * 1e3;
            worst = worst.max((total - true_mrad).abs() / true_mrad);
            let (ru, rv) = ray_angles_mrad(&cam, &pp.shifted(&off));
            assert!((a.u_mrad - ru).abs() < 1e-9 && (a.v_mrad - rv).abs() < 1e-9);
        }
    }
    assert!(worst < 0.05, "relative disagreement {worst}");
}

#[test]
fn roll_free_frames_keep_right_horizontal() {
    let mut r = rng(3);
    for _ in 0..200 {
        let f = CameraFrame::from_az_el_deg(r.random_range(0.0..360.0), r.random_range(-10.0..89.0));
        assert!(f.right().z().abs() < 1e-12);
        assert!(f.down().dot(&f.axis()).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn bisector_is_symmetric(az1 in 0.0..360.0f64, el1 in -60.0..89.0f64, az2 in 0.0..360.0f64, el2 in -60.0..89.0f64) {
        let s = UnitVec3::from_az_el_deg(az1, el1);
        let t = UnitVec3::from_az_el_deg(az2, el2);
        if let (Ok(a), Ok(b)) = (bisector(&s, &t), bisector(&t, &s)) {
            prop_assert!((a.as_vector() - b.as_vector()).norm() < 1e-12);
        }
    }

    #[test]
    fn project_backproject_round_trip(x in -2.0..2.0f64, y in -2.0..2.0f64, z in 0.01..1.0f64) {
        let cam = cam();
        let d = UnitVec3::new(x, y, z).unwrap();
        let p = cam.project(&d).unwrap();
        let q = cam.project(&cam.backproject(&p)).unwrap();
        prop_assert!(q.distance_to(&p) < 1e-6);
    }

    #[test]
    fn uncertainty_monotone_in_width(w in 100u32..4000, extra in 1u32..4000) {
        let a = CameraModel::new(w, w * 3 / 4, 3.76, 2.82, 2.35).unwrap();
        let b = CameraModel::new(w + extra, (w + extra) * 3 / 4, 3.76, 2.82, 2.35).unwrap();
        prop_assert!(b.pointing_uncertainty_mrad() < a.pointing_uncertainty_mrad());
    }
}

