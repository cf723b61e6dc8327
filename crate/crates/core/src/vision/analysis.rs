use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use super::clouds::CloudTrack;
use super::detect::{best_of, Detection, ObjectClass};
use crate::control::AimingOffset;
use crate::geometry::{CameraModel, PixelOffset, PixelPoint};

/// What one frame says about the aiming geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnalysis {
    /// S′
    pub sun_center: Option<PixelPoint>,
    /// T′
    pub target_center: Option<PixelPoint>,
    /// A″, the midpoint of S′ and T′.
    pub aim_point: Option<PixelPoint>,
    /// A′
    pub principal_point: PixelPoint,
    /// A′ shifted by the calibrated aiming offset.
    pub reference_point: PixelPoint,
    /// A″ minus the reference point.
    pub tracking_error_px: Option<PixelOffset>,
    pub sun_bbox: Option<BBox>,
    pub target_bbox: Option<BBox>,
    pub shadow: bool,
    pub block: bool,
    pub cloud_tracks: Vec<CloudTrack>,
}

impl FrameAnalysis {
    /// S′ minus the reference point; the error signal while pointing at the Sun.
    pub fn sun_error_px(&self) -> Option<PixelOffset> {
        self.sun_center.map(|s| s.offset_from(&self.reference_point))
    }

    /// S′ minus A′ with no calibration applied.
    pub fn raw_sun_offset_px(&self) -> Option<PixelOffset> {
        self.sun_center.map(|s| s.offset_from(&self.principal_point))
    }

    /// Earliest predicted cloud occlusion over all tracks.
    pub fn min_time_to_occlusion_s(&self) -> Option<f64> {
        self.cloud_tracks
            .iter()
            .filter_map(|t| t.time_to_occlusion_s)
            .min_by(|a, b| a.total_cmp(b))
    }
}

pub fn analyze_frame(dets: &[Detection], cam: &CameraModel, calib: &AimingOffset) -> FrameAnalysis {
    let sun = best_of(dets, ObjectClass::Sun);
    let target = best_of(dets, ObjectClass::Target);
    let sun_center = sun.map(Detection::point);
    let target_center = target.map(|d| d.point());
    let aim_point = match (sun_center, target_center) {
        (Some(s), Some(t)) => Some(s.midpoint(&t)),
        _ => None,
    };
    let principal_point = cam.principal_point();
    let reference_point = principal_point.shifted(&calib.offset());
    let (shadow, block) = detect_shadow_block(dets);
    FrameAnalysis {
        sun_center,
        target_center,
        aim_point,
        principal_point,
        reference_point,
        tracking_error_px: aim_point.map(|a| a.offset_from(&reference_point)),
        sun_bbox: sun.map(|d| d.bbox),
        target_bbox: target.map(|d| d.bbox),
        shadow,
        block,
        cloud_tracks: Vec::new(),
    }
}

/// Image-space shadow and block flags: any heliostat or cloud box overlapping
/// the Sun box, and any heliostat box overlapping the target box.
pub fn detect_shadow_block(dets: &[Detection]) -> (bool, bool) {
    let overlaps = |roi: Option<&Detection>, classes: &[ObjectClass]| {
        roi.is_some_and(|r| {
            dets.iter().any(|d| classes.contains(&d.class) && d.bbox.overlaps(&r.bbox))
        })
    };
    let shadow = overlaps(best_of(dets, ObjectClass::Sun), &[ObjectClass::Heliostat, ObjectClass::Cloud]);
    let block = overlaps(best_of(dets, ObjectClass::Target), &[ObjectClass::Heliostat]);
    (shadow, block)
}
