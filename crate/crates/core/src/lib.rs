//! Camera-plane heliostat tracking.
//!
//! A camera mounted on the heliostat with its optical axis along the facet
//! normal sees the Sun at `S′` and the target at `T′`. The mirror is aimed
//! correctly when the principal point `A′` sits on the midpoint `A″` of those
//! two image points, so `A″ − A′` is a tracking error measured directly in
//! pixels. This crate provides the geometry, an ephemeris, Sun segmentation
//! and object detection, the tracking controller, and a synthetic field
//! simulator that closes the loop against an open-loop ephemeris baseline.

pub mod control;
pub mod ephemeris;
pub mod geometry;
pub mod render;
pub mod sim;
pub mod vision;

pub use control::{AimingOffset, ControllerConfig, TrackingError};
pub use ephemeris::{sun_direction, GeoTime, SunPosition};
pub use geometry::{AngularOffset, CameraFrame, CameraModel, PixelOffset, PixelPoint, Pose, UnitVec3};
pub use vision::{Detection, FrameAnalysis, Image, ObjectClass};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/ephemeris.md")]
    mod ephemeris {}
    #[doc = include_str!("../../../book/src/vision.md")]
    mod vision {}
    #[doc = include_str!("../../../book/src/tracking.md")]
    mod tracking {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
