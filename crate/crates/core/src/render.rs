//! Synthetic tracker-camera frames with an exact answer key.
//!
//! Layers, back to front: sky or ground, Sun disk with glare, clouds, then the
//! target and neighbour heliostats painted far to near, then sensor noise.
//! Everything is a pure function of the scene, camera, view and time.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ephemeris::{sun_direction, GeoTime};
use crate::geometry::{CameraFrame, CameraModel, PixelPoint, UnitVec3};
use crate::vision::{BBox, Detection, Image, ObjectClass};

/// Angular radius of the solar disk.
pub const SUN_ANGULAR_RADIUS_MRAD: f64 = 4.65;

const SKY: [f64; 3] = [95.0, 150.0, 215.0];
const GROUND: [f64; 3] = [150.0, 120.0, 80.0];
const SUN: [f64; 3] = [255.0, 255.0, 250.0];
const CLOUD: [f64; 3] = [200.0, 204.0, 210.0];
const CLOUD_OPACITY: f64 = 0.9;
const TARGET: [f64; 3] = [232.0, 232.0, 228.0];
const MIRROR_BACK: [f64; 3] = [92.0, 96.0, 100.0];
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SceneError {
    SceneError::Invalid { field: field.into(), message: message.into() }
}

/// The receiver aim point: a vertical white panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetPanel {
    #[serde(default = "default_target_id")]
    pub id: String,
    /// Panel center, East-North-Up metres.
    pub position_m: [f64; 3],
    /// Width and height.
    pub size_m: [f64; 2],
    /// Direction the panel faces, clockwise from North.
    pub facing_azimuth_deg: f64,
}

fn default_target_id() -> String {
    "target".to_string()
}

/// Another heliostat seen from behind as a grey quad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborHeliostat {
    pub id: String,
    pub position_m: [f64; 3],
    pub size_m: [f64; 2],
    pub normal_azimuth_deg: f64,
    pub normal_elevation_deg: f64,
}

/// An elliptical cloud drifting at constant angular rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cloud {
    pub id: u32,
    /// Position at the scene reference time.
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Horizontal and vertical angular semi-axes.
    pub semi_axes_mrad: [f64; 2],
    #[serde(default)]
    pub rate_deg_s: [f64; 2],
}

impl Cloud {
    pub fn direction_at(&self, elapsed_s: f64) -> UnitVec3 {
        UnitVec3::from_az_el_deg(
            self.azimuth_deg + self.rate_deg_s[0] * elapsed_s,
            self.elevation_deg + self.rate_deg_s[1] * elapsed_s,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderStyle {
    pub glare_sigma_px: f64,
    pub noise_sigma_dn: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self { glare_sigma_px: 2.0, noise_sigma_dn: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// Site; the timestamp is the reference time for cloud positions.
    pub site: GeoTime,
    pub target: TargetPanel,
    pub neighbors: Vec<NeighborHeliostat>,
    pub clouds: Vec<Cloud>,
    /// Apparent lift of the Sun above its ephemeris elevation.
    pub refraction_mrad: f64,
    pub style: RenderStyle,
    pub seed: u64,
}

impl Scene {
    pub fn validate(&self) -> Result<(), SceneError> {
        let positive = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !positive(&self.target.size_m) {
            return Err(invalid("target.size_m", "must be positive"));
        }
        for (i, n) in self.neighbors.iter().enumerate() {
            if !positive(&n.size_m) {
                return Err(invalid(format!("neighbors[{i}].size_m"), "must be positive"));
            }
        }
        for (i, c) in self.clouds.iter().enumerate() {
            if !positive(&c.semi_axes_mrad) {
                return Err(invalid(format!("clouds[{i}].semi_axes_mrad"), "must be positive"));
            }
        }
        if !(self.style.glare_sigma_px > 0.0) {
            return Err(invalid("render.glare_sigma_px", "must be positive"));
        }
        if !(self.style.noise_sigma_dn >= 0.0) {
            return Err(invalid("render.noise_sigma_dn", "must be non-negative"));
        }
        Ok(())
    }

    /// Sun as the camera sees it: ephemeris position lifted by refraction.
    pub fn apparent_sun(&self, time: f64) -> Option<UnitVec3> {
        let sun = sun_direction(&self.site.at(time)).ok()?;
        let lift = (self.refraction_mrad / 1000.0).to_degrees();
        Some(UnitVec3::from_az_el_deg(sun.azimuth_deg, sun.elevation_deg + lift))
    }
}

/// Camera placement: a world position and an orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraView {
    pub position_m: Vector3<f64>,
    pub frame: CameraFrame,
}

impl CameraView {
    pub fn new(position_m: [f64; 3], frame: CameraFrame) -> Self {
        Self { position_m: Vector3::from(position_m), frame }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudTruth {
    pub id: u32,
    pub center: PixelPoint,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborTruth {
    pub id: String,
    pub bbox: BBox,
}

/// Exact per-frame answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Projected apparent Sun center; absent when the Sun is behind the camera
    /// or below the horizon. May lie outside the frame.
    pub sun_center: Option<PixelPoint>,
    pub sun_roi: Option<BBox>,
    /// Projected target center; absent when any corner is behind the camera.
    pub target_center: Option<PixelPoint>,
    pub target_bbox: Option<BBox>,
    /// Fraction of solar-disk samples hidden by neighbours, clouds or ground.
    pub sun_occluded_fraction: f64,
    pub shadow: bool,
    pub block: bool,
    pub clouds: Vec<CloudTruth>,
    pub neighbors: Vec<NeighborTruth>,
}

impl GroundTruth {
    /// Detections a perfect detector would report for this frame.
    pub fn detections(&self, width: u32, height: u32) -> Vec<Detection> {
        let mut out = Vec::new();
        if let (Some(c), Some(roi)) = (self.sun_center, self.sun_roi) {
            let visible = self.sun_occluded_fraction < 1.0 && c.u >= 0.0 && c.v >= 0.0;
            if visible && c.u < width as f64 && c.v < height as f64 {
                if let Some(b) = roi.clipped(width, height) {
                    out.push(Detection::new(ObjectClass::Sun, b, 1.0).with_center(c));
                }
            }
        }
        if let (Some(c), Some(b)) = (self.target_center, self.target_bbox.and_then(|b| b.clipped(width, height))) {
            out.push(Detection::new(ObjectClass::Target, b, 1.0).with_center(c));
        }
        for n in &self.neighbors {
            if let Some(b) = n.bbox.clipped(width, height) {
                out.push(Detection::new(ObjectClass::Heliostat, b, 1.0));
            }
        }
        for c in &self.clouds {
            if let Some(b) = c.bbox.clipped(width, height) {
                out.push(Detection::new(ObjectClass::Cloud, b, 1.0).with_center(c.center));
            }
        }
        out
    }
}

/// A planar rectangle in the world.
#[derive(Debug, Clone, Copy)]
struct Quad {
    center: Vector3<f64>,
    normal: Vector3<f64>,
    right: Vector3<f64>,
    up: Vector3<f64>,
    half: [f64; 2],
}

impl Quad {
    fn new(center: [f64; 3], size: [f64; 2], normal: UnitVec3) -> Self {
        let n = *normal.as_vector();
        // Horizontal edge, then the in-plane "up" edge.
        let az = normal.azimuth_deg().to_radians();
        let right = Vector3::new(az.cos(), -az.sin(), 0.0);
        let up = right.cross(&n).normalize();
        Self { center: Vector3::from(center), normal: n, right, up, half: [0.5 * size[0], 0.5 * size[1]] }
    }

    fn corners(&self) -> [Vector3<f64>; 4] {
        let (r, u) = (self.right * self.half[0], self.up * self.half[1]);
        [self.center - r + u, self.center + r + u, self.center + r - u, self.center - r - u]
    }

    /// Ray parameter of the hit, if the ray from `origin` along `dir` meets
    /// the rectangle at positive distance.
    fn hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = self.normal.dot(&(self.center - origin)) / denom;
        if t <= 0.0 {
            return None;
        }
        let rel = origin + dir * t - self.center;
        (rel.dot(&self.right).abs() <= self.half[0] && rel.dot(&self.up).abs() <= self.half[1]).then_some(t)
    }

    fn sample_points(&self, n: usize) -> Vec<Vector3<f64>> {
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let a = (i as f64 + 0.5) / n as f64 * 2.0 - 1.0;
                let b = (j as f64 + 0.5) / n as f64 * 2.0 - 1.0;
                pts.push(self.center + self.right * (a * self.half[0]) + self.up * (b * self.half[1]));
            }
        }
        pts
    }
}

fn target_quad(t: &TargetPanel) -> Quad {
    Quad::new(t.position_m, t.size_m, UnitVec3::from_az_el_deg(t.facing_azimuth_deg, 0.0))
}

fn neighbor_quad(n: &NeighborHeliostat) -> Quad {
    Quad::new(n.position_m, n.size_m, UnitVec3::from_az_el_deg(n.normal_azimuth_deg, n.normal_elevation_deg))
}

struct Canvas {
    width: u32,
    height: u32,
    px: Vec<[f64; 3]>,
}

impl Canvas {
    #[inline]
    fn blend(&mut self, x: u32, y: u32, color: &[f64; 3], alpha: f64) {
        if alpha <= 0.0 {
            return;
        }
        let p = &mut self.px[y as usize * self.width as usize + x as usize];
        for c in 0..3 {
            p[c] += alpha * (color[c] - p[c]);
        }
    }

    fn finish(self, noise_sigma: f64, rng: &mut ChaCha8Rng) -> Image {
        let noise = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("valid sigma"));
        let mut data = Vec::with_capacity(self.px.len() * 3);
        for p in &self.px {
            for c in p {
                let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
                data.push((c + n).round().clamp(0.0, 255.0) as u8);
            }
        }
        Image::from_raw(self.width, self.height, data).expect("canvas size matches")
    }
}

/// Pixel window `[x0, x1) x [y0, y1)` covering a box, clipped to the frame.
fn window(cam: &CameraModel, b: &BBox) -> Option<(u32, u32, u32, u32)> {
    let c = b.clipped(cam.width_px(), cam.height_px())?;
    let x0 = c.x.floor().max(0.0) as u32;
    let y0 = c.y.floor().max(0.0) as u32;
    let x1 = (c.right().ceil() as u32).min(cam.width_px());
    let y1 = (c.bottom().ceil() as u32).min(cam.height_px());
    (x1 > x0 && y1 > y0).then_some((x0, y0, x1, y1))
}

fn point_in_quad(p: (f64, f64), q: &[PixelPoint; 4]) -> bool {
    let mut sign = 0.0;
    for i in 0..4 {
        let (a, b) = (q[i], q[(i + 1) % 4]);
        let cross = (b.u - a.u) * (p.1 - a.v) - (b.v - a.v) * (p.0 - a.u);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

fn project_quad(cam: &CameraModel, view: &CameraView, quad: &Quad) -> Option<[PixelPoint; 4]> {
    let mut out = [PixelPoint::new(0.0, 0.0); 4];
    for (i, corner) in quad.corners().iter().enumerate() {
        let dir = UnitVec3::from_vector(corner - view.position_m).ok()?;
        out[i] = cam.project(&view.frame.to_camera(&dir)).ok()?;
    }
    Some(out)
}

fn quad_bbox(q: &[PixelPoint; 4]) -> BBox {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in q {
        x0 = x0.min(p.u);
        y0 = y0.min(p.v);
        x1 = x1.max(p.u);
        y1 = y1.max(p.v);
    }
    BBox::from_corners(x0, y0, x1, y1)
}

fn paint_quad(canvas: &mut Canvas, cam: &CameraModel, q: &[PixelPoint; 4], color: &[f64; 3]) {
    let Some((x0, y0, x1, y1)) = window(cam, &quad_bbox(q)) else { return };
    let step = 1.0 / SUPERSAMPLE as f64;
    for y in y0..y1 {
        for x in x0..x1 {
            let mut hits = 0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let p = (x as f64 + (sx as f64 + 0.5) * step, y as f64 + (sy as f64 + 0.5) * step);
                    if point_in_quad(p, q) {
                        hits += 1;
                    }
                }
            }
            canvas.blend(x, y, color, hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64);
        }
    }
}

/// Offsets on the unit disk: the center plus rings of 6, 12, 18 and 24.
fn disk_samples() -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0)];
    for ring in 1..=4 {
        let r = ring as f64 / 4.0;
        let n = 6 * ring;
        for k in 0..n {
            let a = std::f64::consts::TAU * (k as f64 + 0.5 * (ring % 2) as f64) / n as f64;
            out.push((r * a.cos(), r * a.sin()));
        }
    }
    out
}

struct CloudShape {
    id: u32,
    center: PixelPoint,
    semi_px: [f64; 2],
}

impl CloudShape {
    fn radius(&self, u: f64, v: f64) -> f64 {
        let du = (u - self.center.u) / self.semi_px[0];
        let dv = (v - self.center.v) / self.semi_px[1];
        (du * du + dv * dv).sqrt()
    }

    fn coverage(&self, u: f64, v: f64) -> f64 {
        let edge = (1.0 - self.radius(u, v)) * self.semi_px[0].min(self.semi_px[1]);
        (edge + 0.5).clamp(0.0, 1.0)
    }

    fn bbox(&self) -> BBox {
        BBox::from_corners(
            self.center.u - self.semi_px[0],
            self.center.v - self.semi_px[1],
            self.center.u + self.semi_px[0],
            self.center.v + self.semi_px[1],
        )
    }
}

fn noise_rng(seed: u64, time: f64, view: &CameraView) -> ChaCha8Rng {
    let mut s = seed ^ time.to_bits().rotate_left(17);
    for v in view.frame.axis().as_vector().iter() {
        s = s.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ v.to_bits();
    }
    ChaCha8Rng::seed_from_u64(s)
}

/// Renders the frame seen from `view` at Unix time `time`.
pub fn render(scene: &Scene, cam: &CameraModel, view: &CameraView, time: f64) -> (Image, GroundTruth) {
    let (w, h) = (cam.width_px(), cam.height_px());
    let f_px = cam.focal_px();
    let mrad_per_px = cam.pointing_uncertainty_mrad();
    let mut canvas = Canvas { width: w, height: h, px: Vec::with_capacity(w as usize * h as usize) };

    let world_ray = |x: u32, y: u32| {
        let cam_dir = cam.backproject(&PixelPoint::new(x as f64 + 0.5, y as f64 + 0.5));
        view.frame.to_world(&cam_dir)
    };
    let mut sky = vec![false; w as usize * h as usize];
    for y in 0..h {
        for x in 0..w {
            let up = world_ray(x, y).z() > 0.0;
            sky[y as usize * w as usize + x as usize] = up;
            canvas.px.push(if up { SKY } else { GROUND });
        }
    }
    let is_sky = |x: u32, y: u32| sky[y as usize * w as usize + x as usize];

    // Sun.
    let sun_dir = scene.apparent_sun(time);
    let radius = SUN_ANGULAR_RADIUS_MRAD / 1000.0;
    let sigma = scene.style.glare_sigma_px * mrad_per_px / 1000.0;
    let mut sun_center = None;
    let mut sun_roi = None;
    if let Some(sun) = sun_dir {
        let cam_sun = view.frame.to_camera(&sun);
        if let Ok(s) = cam.project(&cam_sun) {
            if sun.z() > 0.0 {
                sun_center = Some(s);
                let half = SUN_ANGULAR_RADIUS_MRAD / mrad_per_px + 2.0 * scene.style.glare_sigma_px;
                sun_roi = Some(BBox::from_corners(s.u - half, s.v - half, s.u + half, s.v + half));
            }
            let reach = (radius + 5.0 * sigma) * f_px + 2.0;
            let area = BBox::from_corners(s.u - reach, s.v - reach, s.u + reach, s.v + reach);
            if let Some((x0, y0, x1, y1)) = window(cam, &area) {
                for y in y0..y1 {
                    for x in x0..x1 {
                        if !is_sky(x, y) {
                            continue;
                        }
                        let theta = world_ray(x, y).angle_to(&sun);
                        let i = if theta <= radius {
                            1.0
                        } else {
                            let z = (theta - radius) / sigma;
                            (-0.5 * z * z).exp()
                        };
                        canvas.blend(x, y, &SUN, i);
                    }
                }
            }
        }
    }

    // Clouds.
    let elapsed = time - scene.site.timestamp;
    let mut cloud_shapes = Vec::new();
    for cloud in &scene.clouds {
        let dir = cloud.direction_at(elapsed);
        let Ok(center) = cam.project(&view.frame.to_camera(&dir)) else { continue };
        let semi_px = cloud.semi_axes_mrad.map(|a| (a / 1000.0).tan() * f_px);
        let shape = CloudShape { id: cloud.id, center, semi_px };
        if let Some((x0, y0, x1, y1)) = window(cam, &shape.bbox().padded(1.0, w, h)) {
            for y in y0..y1 {
                for x in x0..x1 {
                    if is_sky(x, y) {
                        let cov = shape.coverage(x as f64 + 0.5, y as f64 + 0.5);
                        canvas.blend(x, y, &CLOUD, CLOUD_OPACITY * cov);
                    }
                }
            }
        }
        cloud_shapes.push(shape);
    }

    // Target and neighbours, far to near.
    let target = target_quad(&scene.target);
    let neighbors: Vec<Quad> = scene.neighbors.iter().map(neighbor_quad).collect();
    let mut order: Vec<(f64, Option<usize>)> = vec![((target.center - view.position_m).norm(), None)];
    for (i, q) in neighbors.iter().enumerate() {
        order.push(((q.center - view.position_m).norm(), Some(i)));
    }
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut neighbor_truth = Vec::new();
    let mut target_bbox = None;
    for (_, which) in order {
        let (quad, color) = match which {
            None => (&target, &TARGET),
            Some(i) => (&neighbors[i], &MIRROR_BACK),
        };
        let Some(q) = project_quad(cam, view, quad) else { continue };
        paint_quad(&mut canvas, cam, &q, color);
        match which {
            None => target_bbox = Some(quad_bbox(&q)),
            Some(i) => neighbor_truth.push((i, quad_bbox(&q))),
        }
    }
    neighbor_truth.sort_by_key(|(i, _)| *i);
    let target_center = target_bbox.and_then(|_| {
        let dir = UnitVec3::from_vector(target.center - view.position_m).ok()?;
        cam.project(&view.frame.to_camera(&dir)).ok()
    });

    // Occlusion answers from 3D rays.
    let mut occluded = 0usize;
    let samples = disk_samples();
    let mut sun_fraction = 0.0;
    if let Some(sun) = sun_dir {
        let basis = CameraFrame::from_axis(&sun);
        for (a, b) in &samples {
            let off = Vector3::new((a * radius).tan(), (b * radius).tan(), 1.0);
            let dir = basis.to_world(&UnitVec3::from_vector(off).expect("non-zero"));
            let d = *dir.as_vector();
            let by_neighbor = neighbors.iter().any(|q| q.hit(&view.position_m, &d).is_some());
            let by_ground = dir.z() <= 0.0;
            let by_cloud = cam
                .project(&view.frame.to_camera(&dir))
                .map(|p| cloud_shapes.iter().any(|c| c.radius(p.u, p.v) <= 1.0))
                .unwrap_or(false);
            if by_neighbor || by_ground || by_cloud {
                occluded += 1;
            }
        }
        sun_fraction = occluded as f64 / samples.len() as f64;
    }
    let block = target.sample_points(5).iter().any(|p| {
        let seg = p - view.position_m;
        let len = seg.norm();
        let d = seg / len;
        neighbors.iter().any(|q| q.hit(&view.position_m, &d).is_some_and(|t| t < len))
    });

    let truth = GroundTruth {
        sun_center,
        sun_roi,
        target_center,
        target_bbox,
        sun_occluded_fraction: sun_fraction,
        shadow: sun_dir.is_some() && occluded > 0,
        block,
        clouds: cloud_shapes
            .iter()
            .map(|c| CloudTruth { id: c.id, center: c.center, bbox: c.bbox() })
            .collect(),
        neighbors: neighbor_truth
            .into_iter()
            .map(|(i, bbox)| NeighborTruth { id: scene.neighbors[i].id.clone(), bbox })
            .collect(),
    };
    let mut rng = noise_rng(scene.seed, time, view);
    (canvas.finish(scene.style.noise_sigma_dn, &mut rng), truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::bisector;
    use crate::vision::{segment_sun, SunSegmentation};

    // 2024-03-20T10:00:00Z
    const T0: f64 = 1_710_928_800.0;

    fn scene() -> Scene {
        Scene {
            site: GeoTime::psa(T0),
            target: TargetPanel {
                id: "target".into(),
                position_m: [0.0, 0.0, 45.0],
                size_m: [8.0, 8.0],
                facing_azimuth_deg: 0.0,
            },
            neighbors: vec![],
            clouds: vec![],
            refraction_mrad: 0.0,
            style: RenderStyle::default(),
            seed: 1,
        }
    }

    fn aligned_view(s: &Scene, pos: [f64; 3], time: f64) -> CameraView {
        let sun = s.apparent_sun(time).unwrap();
        let t = Vector3::from(s.target.position_m) - Vector3::from(pos);
        let n = bisector(&sun, &UnitVec3::from_vector(t).unwrap()).unwrap();
        CameraView::new(pos, CameraFrame::from_axis(&n))
    }

    #[test]
    fn aligned_frame_has_midpoint_at_principal_point() {
        let s = scene();
        let cam = CameraModel::pi_camera_800x600();
        let view = aligned_view(&s, [-30.0, 120.0, 3.0], T0);
        let (_, gt) = render(&s, &cam, &view, T0);
        let mid = gt.sun_center.unwrap().midpoint(&gt.target_center.unwrap());
        assert!(mid.distance_to(&cam.principal_point()) < 2.0, "{mid:?}");
    }

    #[test]
    fn sun_behind_camera_is_absent() {
        let s = scene();
        let cam = CameraModel::pi_camera_800x600();
        let sun = s.apparent_sun(T0).unwrap();
        let away = UnitVec3::from_az_el_deg(sun.azimuth_deg() + 180.0, 5.0);
        let view = CameraView::new([0.0, 100.0, 2.0], CameraFrame::from_axis(&away));
        let (img, gt) = render(&s, &cam, &view, T0);
        assert!(gt.sun_center.is_none());
        assert!(segment_sun(&img, &SunSegmentation::default()).is_err());
    }

    #[test]
    fn same_inputs_same_bytes() {
        let s = scene();
        let cam = CameraModel::pi_camera_800x600();
        let view = aligned_view(&s, [-30.0, 120.0, 3.0], T0);
        let (a, _) = render(&s, &cam, &view, T0);
        let (b, _) = render(&s, &cam, &view, T0);
        assert_eq!(a.to_ppm_bytes(), b.to_ppm_bytes());
        let mut other = s.clone();
        other.seed = 2;
        let (c, _) = render(&other, &cam, &view, T0);
        assert_ne!(a.as_raw(), c.as_raw());
    }

    #[test]
    fn sun_disk_segments_to_truth() {
        let s = scene();
        let cam = CameraModel::pi_camera_800x600();
        let sun = s.apparent_sun(T0).unwrap();
        let axis = UnitVec3::from_az_el_deg(sun.azimuth_deg() + 3.0, sun.elevation_deg() - 2.0);
        let view = CameraView::new([0.0, 100.0, 2.0], CameraFrame::from_axis(&axis));
        let (img, gt) = render(&s, &cam, &view, T0);
        let seg = segment_sun(&img, &SunSegmentation::default()).unwrap();
        assert!(seg.centroid.distance_to(&gt.sun_center.unwrap()) < 0.5);
        assert!(seg.area_px >= 20);
        assert_eq!(gt.sun_occluded_fraction, 0.0);
        assert!(!gt.shadow);
    }

    #[test]
    fn neighbour_on_the_sun_line_shadows() {
        let mut s = scene();
        let pos = [0.0, 100.0, 2.0];
        let sun = s.apparent_sun(T0).unwrap();
        // Quad edge through the Sun line: about half the disk is hidden.
        let c = Vector3::from(pos) + sun.as_vector() * 20.0;
        let az = (sun.azimuth_deg() + 180.0).to_radians();
        let c = c + Vector3::new(az.cos(), -az.sin(), 0.0) * 1.5;
        s.neighbors.push(NeighborHeliostat {
            id: "h2".into(),
            position_m: [c.x, c.y, c.z],
            size_m: [3.0, 3.0],
            normal_azimuth_deg: sun.azimuth_deg() + 180.0,
            normal_elevation_deg: -sun.elevation_deg(),
        });
        let cam = CameraModel::pi_camera_800x600();
        let view = CameraView::new(pos, CameraFrame::from_axis(&sun));
        let (_, gt) = render(&s, &cam, &view, T0);
        assert!(gt.shadow);
        assert!(gt.sun_occluded_fraction > 0.0 && gt.sun_occluded_fraction < 1.0);
        assert_eq!(gt.neighbors.len(), 1);
    }

    #[test]
    fn cloud_truth_and_detections() {
        let mut s = scene();
        let sun = s.apparent_sun(T0).unwrap();
        s.clouds.push(Cloud {
            id: 7,
            azimuth_deg: sun.azimuth_deg() - 10.0,
            elevation_deg: sun.elevation_deg() + 3.0,
            semi_axes_mrad: [40.0, 25.0],
            rate_deg_s: [0.0, 0.0],
        });
        let cam = CameraModel::pi_camera_800x600();
        let view = CameraView::new([0.0, 100.0, 2.0], CameraFrame::from_axis(&sun));
        let (_, gt) = render(&s, &cam, &view, T0);
        assert_eq!(gt.clouds.len(), 1);
        assert_eq!(gt.clouds[0].id, 7);
        let dets = gt.detections(800, 600);
        assert!(dets.iter().any(|d| d.class == ObjectClass::Cloud));
        assert!(dets.iter().any(|d| d.class == ObjectClass::Sun));
    }

    #[test]
    fn invalid_scene_is_rejected() {
        let mut s = scene();
        s.target.size_m = [0.0, 8.0];
        assert!(s.validate().is_err());
    }
}
