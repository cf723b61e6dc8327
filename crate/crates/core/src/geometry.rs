//! Camera-plane geometry: pinhole projection, the reflection bisector, and
//! the pixel/angle relations the tracker works in.
//!
//! # Conventions
//!
//! - **Camera frame**: `z` is the optical axis (parallel to the heliostat
//!   facet normal), `x` points image-right, `y` points image-down.
//! - **World frame**: East-North-Up. Azimuth is measured clockwise from
//!   North, elevation up from the horizon.
//! - **Pixels**: origin at the top-left corner of the image, `u` rightward,
//!   `v` downward. Pixel `(i, j)` covers `[i, i+1) x [j, j+1)`, so its center
//!   is `(i + 0.5, j + 0.5)` and the image center of an 800x600 sensor is
//!   exactly `(400, 300)`.
//!
//! All angles that cross module boundaries as "errors" are milliradians.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("direction is behind the camera (z = {z:.3e})")]
    BehindCamera { z: f64 },
    #[error("sun and target directions are antiparallel, bisector is undefined")]
    DegenerateBisector,
    #[error("cannot normalize a zero-length or non-finite vector")]
    ZeroVector,
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
}

/// A direction in 3D, normalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVec3(Vector3<f64>);

impl UnitVec3 {
    pub const X: UnitVec3 = UnitVec3(Vector3::new(1.0, 0.0, 0.0));
    pub const Y: UnitVec3 = UnitVec3(Vector3::new(0.0, 1.0, 0.0));
    pub const Z: UnitVec3 = UnitVec3(Vector3::new(0.0, 0.0, 1.0));

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self, GeometryError> {
        let n = v.norm();
        if !(n.is_finite() && n > f64::MIN_POSITIVE) {
            return Err(GeometryError::ZeroVector);
        }
        Ok(Self(v / n))
    }

    /// Direction from azimuth (clockwise from North) and elevation, in degrees.
    pub fn from_az_el_deg(azimuth_deg: f64, elevation_deg: f64) -> Self {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        Self(Vector3::new(az.sin() * el.cos(), az.cos() * el.cos(), el.sin()))
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn dot(&self, other: &UnitVec3) -> f64 {
        self.0.dot(&other.0)
    }

    /// Angle to `other` in radians. Uses `atan2(|a x b|, a . b)`, which stays
    /// accurate for nearly parallel vectors where `acos` loses precision.
    pub fn angle_to(&self, other: &UnitVec3) -> f64 {
        self.0.cross(&other.0).norm().atan2(self.0.dot(&other.0))
    }

    /// Azimuth in degrees, clockwise from North, in `[0, 360)`.
    pub fn azimuth_deg(&self) -> f64 {
        self.0.x.atan2(self.0.y).to_degrees().rem_euclid(360.0)
    }

    pub fn elevation_deg(&self) -> f64 {
        self.0.z.clamp(-1.0, 1.0).asin().to_degrees()
    }
}

impl TryFrom<[f64; 3]> for UnitVec3 {
    type Error = GeometryError;

    fn try_from(v: [f64; 3]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<UnitVec3> for [f64; 3] {
    fn from(v: UnitVec3) -> Self {
        [v.0.x, v.0.y, v.0.z]
    }
}

/// A sub-pixel image location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn midpoint(&self, other: &PixelPoint) -> PixelPoint {
        PixelPoint::new((self.u + other.u) / 2.0, (self.v + other.v) / 2.0)
    }

    pub fn offset_from(&self, origin: &PixelPoint) -> PixelOffset {
        PixelOffset::new(self.u - origin.u, self.v - origin.v)
    }

    pub fn shifted(&self, by: &PixelOffset) -> PixelPoint {
        PixelPoint::new(self.u + by.du, self.v + by.dv)
    }

    pub fn distance_to(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// A displacement in the image plane, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelOffset {
    pub du: f64,
    pub dv: f64,
}

impl PixelOffset {
    pub const ZERO: PixelOffset = PixelOffset { du: 0.0, dv: 0.0 };

    pub const fn new(du: f64, dv: f64) -> Self {
        Self { du, dv }
    }

    pub fn max_abs(&self) -> f64 {
        self.du.abs().max(self.dv.abs())
    }

    pub fn norm(&self) -> f64 {
        self.du.hypot(self.dv)
    }

    pub fn scaled(&self, k: f64) -> PixelOffset {
        PixelOffset::new(self.du * k, self.dv * k)
    }
}

/// A pair of small angles aligned with the image axes, in milliradians.
///
/// `u_mrad` is positive toward image-right, `v_mrad` toward image-down.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AngularOffset {
    pub u_mrad: f64,
    pub v_mrad: f64,
}

impl AngularOffset {
    pub const ZERO: AngularOffset = AngularOffset { u_mrad: 0.0, v_mrad: 0.0 };

    pub const fn new(u_mrad: f64, v_mrad: f64) -> Self {
        Self { u_mrad, v_mrad }
    }

    pub fn max_abs(&self) -> f64 {
        self.u_mrad.abs().max(self.v_mrad.abs())
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.u_mrad, self.v_mrad]
    }
}

impl std::ops::Add for AngularOffset {
    type Output = AngularOffset;

    fn add(self, rhs: AngularOffset) -> AngularOffset {
        AngularOffset::new(self.u_mrad + rhs.u_mrad, self.v_mrad + rhs.v_mrad)
    }
}

impl std::ops::Sub for AngularOffset {
    type Output = AngularOffset;

    fn sub(self, rhs: AngularOffset) -> AngularOffset {
        AngularOffset::new(self.u_mrad - rhs.u_mrad, self.v_mrad - rhs.v_mrad)
    }
}

/// Maximum relative mismatch between horizontal and vertical pixel pitch.
///
/// The reference Raspberry Pi sensor (3.76 x 2.74 mm at 800 x 600) is off by
/// 2.8%, so the square-pixel assumption is checked loosely.
pub const PIXEL_ASPECT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Deserialize)]
struct CameraModelSpec {
    width_px: u32,
    height_px: u32,
    sensor_w_mm: f64,
    sensor_h_mm: f64,
    focal_mm: f64,
    #[serde(default)]
    principal_point: Option<PixelPoint>,
}

/// Intrinsic pinhole geometry of the tracker camera.
///
/// A single pixel pitch `p = sensor_w_mm / width_px` is used on both axes;
/// the vertical sensor size only participates in validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraModelSpec")]
pub struct CameraModel {
    width_px: u32,
    height_px: u32,
    sensor_w_mm: f64,
    sensor_h_mm: f64,
    focal_mm: f64,
    principal_point: PixelPoint,
}

impl TryFrom<CameraModelSpec> for CameraModel {
    type Error = GeometryError;

    fn try_from(s: CameraModelSpec) -> Result<Self, Self::Error> {
        let cam = CameraModel::new(s.width_px, s.height_px, s.sensor_w_mm, s.sensor_h_mm, s.focal_mm)?;
        match s.principal_point {
            Some(pp) => cam.with_principal_point(pp),
            None => Ok(cam),
        }
    }
}

impl CameraModel {
    /// Camera with the principal point at the image center.
    pub fn new(
        width_px: u32,
        height_px: u32,
        sensor_w_mm: f64,
        sensor_h_mm: f64,
        focal_mm: f64,
    ) -> Result<Self, GeometryError> {
        let cam = Self {
            width_px,
            height_px,
            sensor_w_mm,
            sensor_h_mm,
            focal_mm,
            principal_point: PixelPoint::new(width_px as f64 / 2.0, height_px as f64 / 2.0),
        };
        cam.validate()?;
        Ok(cam)
    }

    /// The Raspberry Pi camera configuration used on the test heliostat:
    /// 800 x 600 px, 3.76 x 2.74 mm sensor, f = 2.35 mm.
    pub fn pi_camera_800x600() -> Self {
        Self::new(800, 600, 3.76, 2.74, 2.35).expect("reference camera is valid")
    }

    pub fn with_principal_point(mut self, pp: PixelPoint) -> Result<Self, GeometryError> {
        self.principal_point = pp;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidCamera(msg));
        if self.width_px == 0 || self.height_px == 0 {
            return bad(format!("resolution must be positive, got {}x{}", self.width_px, self.height_px));
        }
        for (name, value) in [
            ("sensor_w_mm", self.sensor_w_mm),
            ("sensor_h_mm", self.sensor_h_mm),
            ("focal_mm", self.focal_mm),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return bad(format!("{name} must be positive, got {value}"));
            }
        }
        let pw = self.sensor_w_mm / self.width_px as f64;
        let ph = self.sensor_h_mm / self.height_px as f64;
        if ((pw - ph) / pw).abs() > PIXEL_ASPECT_TOLERANCE {
            return bad(format!(
                "pixels are not square: pitch {pw:.5} mm x {ph:.5} mm exceeds {:.0}% tolerance",
                PIXEL_ASPECT_TOLERANCE * 100.0
            ));
        }
        let pp = self.principal_point;
        if !(pp.u.is_finite()
            && pp.v.is_finite()
            && (0.0..=self.width_px as f64).contains(&pp.u)
            && (0.0..=self.height_px as f64).contains(&pp.v))
        {
            return bad(format!("principal point ({}, {}) lies outside the image", pp.u, pp.v));
        }
        Ok(())
    }

    pub fn width_px(&self) -> u32 {
        self.width_px
    }

    pub fn height_px(&self) -> u32 {
        self.height_px
    }

    pub fn sensor_mm(&self) -> (f64, f64) {
        (self.sensor_w_mm, self.sensor_h_mm)
    }

    pub fn focal_mm(&self) -> f64 {
        self.focal_mm
    }

    pub fn principal_point(&self) -> PixelPoint {
        self.principal_point
    }

    /// Pixel pitch `p` in mm.
    pub fn pixel_pitch_mm(&self) -> f64 {
        self.sensor_w_mm / self.width_px as f64
    }

    /// Focal length expressed in pixels, `f / p`.
    pub fn focal_px(&self) -> f64 {
        self.focal_mm / self.pixel_pitch_mm()
    }

    /// Full horizontal and vertical field of view in degrees.
    pub fn fov_deg(&self) -> (f64, f64) {
        let f = self.focal_px();
        (
            2.0 * (self.width_px as f64 / 2.0 / f).atan().to_degrees(),
            2.0 * (self.height_px as f64 / 2.0 / f).atan().to_degrees(),
        )
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.u >= 0.0 && p.v >= 0.0 && p.u < self.width_px as f64 && p.v < self.height_px as f64
    }

    /// Gnomonic projection of a camera-frame direction onto the image plane.
    ///
    /// The result may fall outside the image; visibility is the caller's call.
    pub fn project(&self, dir: &UnitVec3) -> Result<PixelPoint, GeometryError> {
        if dir.z() <= 0.0 {
            return Err(GeometryError::BehindCamera { z: dir.z() });
        }
        let f = self.focal_px();
        Ok(PixelPoint::new(
            self.principal_point.u + f * dir.x() / dir.z(),
            self.principal_point.v + f * dir.y() / dir.z(),
        ))
    }

    /// Camera-frame ray through a pixel location.
    pub fn backproject(&self, p: &PixelPoint) -> UnitVec3 {
        let f = self.focal_px();
        UnitVec3::new(
            (p.u - self.principal_point.u) / f,
            (p.v - self.principal_point.v) / f,
            1.0,
        )
        .expect("z component is 1")
    }

    /// Angular size of one pixel at the principal point, `U = arctan(p / f)`, in mrad.
    pub fn pointing_uncertainty_mrad(&self) -> f64 {
        (self.pixel_pitch_mm() / self.focal_mm).atan() * 1e3
    }

    /// Per-axis conversion of an image-plane offset (measured from the
    /// principal point) to the angles it subtends, in mrad.
    pub fn pixel_error_to_mrad(&self, delta: &PixelOffset) -> AngularOffset {
        let k = self.pixel_pitch_mm() / self.focal_mm;
        AngularOffset::new((delta.du * k).atan() * 1e3, (delta.dv * k).atan() * 1e3)
    }

    /// Inverse of [`CameraModel::pixel_error_to_mrad`].
    pub fn mrad_to_pixel_error(&self, angle: &AngularOffset) -> PixelOffset {
        let f = self.focal_px();
        PixelOffset::new(
            (angle.u_mrad * 1e-3).tan() * f,
            (angle.v_mrad * 1e-3).tan() * f,
        )
    }
}

/// Unit vector halfway between `s` and `t`: the facet normal that reflects
/// light arriving from `s` toward `t`.
pub fn bisector(s: &UnitVec3, t: &UnitVec3) -> Result<UnitVec3, GeometryError> {
    let sum = s.as_vector() + t.as_vector();
    if sum.norm() < 1e-9 {
        return Err(GeometryError::DegenerateBisector);
    }
    UnitVec3::from_vector(sum)
}

/// Mirror reflection of an incoming direction (pointing toward the source)
/// about a facet normal: `r = 2 (n . s) n - s`.
pub fn reflect(source: &UnitVec3, normal: &UnitVec3) -> UnitVec3 {
    let n = normal.as_vector();
    let s = source.as_vector();
    UnitVec3::from_vector(2.0 * n.dot(s) * n - s).expect("reflection of a unit vector is a unit vector")
}

/// Orientation of the tracker camera in the world frame.
///
/// The mount is azimuth-elevation, so the camera never rolls: image-right
/// stays horizontal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    right: Vector3<f64>,
    down: Vector3<f64>,
    axis: Vector3<f64>,
}

impl CameraFrame {
    pub fn from_az_el_deg(azimuth_deg: f64, elevation_deg: f64) -> Self {
        let axis = *UnitVec3::from_az_el_deg(azimuth_deg, elevation_deg).as_vector();
        let az = azimuth_deg.to_radians();
        let right = Vector3::new(az.cos(), -az.sin(), 0.0);
        Self { right, down: axis.cross(&right), axis }
    }

    /// Roll-free frame around an arbitrary axis. At the zenith the azimuth is
    /// undefined and image-right is taken as East.
    pub fn from_axis(axis: &UnitVec3) -> Self {
        let a = *axis.as_vector();
        let horizontal = Vector3::new(a.y, -a.x, 0.0);
        let right = if horizontal.norm() > 1e-12 { horizontal.normalize() } else { Vector3::x() };
        Self { right, down: a.cross(&right), axis: a }
    }

    pub fn axis(&self) -> UnitVec3 {
        UnitVec3(self.axis)
    }

    pub fn right(&self) -> UnitVec3 {
        UnitVec3(self.right)
    }

    pub fn down(&self) -> UnitVec3 {
        UnitVec3(self.down)
    }

    /// The frame rotated so its axis leans by `offset` toward image-right and
    /// image-down. Objects on the old axis appear displaced by `-offset`.
    pub fn perturbed(&self, offset: &AngularOffset) -> Self {
        if offset.u_mrad == 0.0 && offset.v_mrad == 0.0 {
            return *self;
        }
        let axis = (self.axis
            + (offset.u_mrad * 1e-3).tan() * self.right
            + (offset.v_mrad * 1e-3).tan() * self.down)
            .normalize();
        let right = (self.right - self.right.dot(&axis) * axis).normalize();
        Self { right, down: axis.cross(&right), axis }
    }

    pub fn to_camera(&self, world: &UnitVec3) -> UnitVec3 {
        let w = world.as_vector();
        UnitVec3(Vector3::new(self.right.dot(w), self.down.dot(w), self.axis.dot(w)))
    }

    pub fn to_world(&self, cam: &UnitVec3) -> UnitVec3 {
        UnitVec3(self.right * cam.x() + self.down * cam.y() + self.axis * cam.z())
    }
}

/// Azimuth-elevation mount pose; the facet normal and camera axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Clockwise from North.
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Pose {
    pub const fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self { azimuth_deg, elevation_deg }
    }

    pub fn from_normal(n: &UnitVec3) -> Self {
        Self { azimuth_deg: n.azimuth_deg().rem_euclid(360.0), elevation_deg: n.elevation_deg() }
    }

    pub fn normal(&self) -> UnitVec3 {
        UnitVec3::from_az_el_deg(self.azimuth_deg, self.elevation_deg)
    }

    pub fn frame(&self) -> CameraFrame {
        CameraFrame::from_az_el_deg(self.azimuth_deg, self.elevation_deg)
    }

    /// Azimuth difference wrapped into `(-180, 180]`.
    pub fn azimuth_delta_deg(&self, to: &Pose) -> f64 {
        let d = (to.azimuth_deg - self.azimuth_deg).rem_euclid(360.0);
        if d > 180.0 {
            d - 360.0
        } else {
            d
        }
    }
}
