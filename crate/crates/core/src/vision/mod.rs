//! Frames, HSL conversion, Sun segmentation, object detection and per-frame
//! analysis.

mod analysis;
mod bbox;
mod clouds;
mod color;
mod detect;
mod image;
mod segment;

use thiserror::Error;

pub use analysis::{analyze_frame, detect_shadow_block, FrameAnalysis};
pub use bbox::BBox;
pub use clouds::{time_to_occlusion, track_clouds, CloudObservation, CloudTrack, CLOUD_GATE_PX};
pub use color::{lightness, rgb_to_hsl, HslPixel};
pub use detect::{
    best_of, read_detections_jsonl, refine_sun_centers, write_detections_jsonl, BlobRule,
    ClassicalDetector,
    ClassicalParams, Detection, Detector, ObjectClass, PrecomputedDetector,
};
pub use image::Image;
pub use segment::{
    connected_components, segment_sun, segment_sun_in, Component, Mask, SunSegment,
    SunSegmentation,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("no bright component of at least {min_area_px} px")]
    NoSunDetected { min_area_px: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("image encoding: {0}")]
    Encoding(String),
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("invalid segmentation parameters: {0}")]
    InvalidParameters(String),
    #[error("detections line {line}: {message}")]
    DetectionFormat { line: usize, message: String },
}
