use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use super::color::rgb_to_hsl;
use super::image::Image;
use super::segment::{connected_components, segment_sun_in, Mask, SunSegmentation};
use super::VisionError;
use crate::geometry::PixelPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Sun,
    Cloud,
    Heliostat,
    Target,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 4] = [Self::Sun, Self::Cloud, Self::Heliostat, Self::Target];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Sun => "sun",
            Self::Cloud => "cloud",
            Self::Heliostat => "heliostat",
            Self::Target => "target",
        }
    }
}

impl std::fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A classified region of interest.
///
/// Serializes to `{class, bbox: [x, y, w, h], score}`. The optional `center`
/// is a sub-pixel refinement some detectors provide (the Sun centroid, cloud
/// centroids); it is not part of the exchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: ObjectClass,
    pub bbox: BBox,
    pub score: f64,
    #[serde(skip)]
    pub center: Option<PixelPoint>,
}

impl Detection {
    pub fn new(class: ObjectClass, bbox: BBox, score: f64) -> Self {
        Self { class, bbox, score: score.clamp(0.0, 1.0), center: None }
    }

    pub fn with_center(mut self, center: PixelPoint) -> Self {
        self.center = Some(center);
        self
    }

    /// Refined center if available, else the bbox center.
    pub fn point(&self) -> PixelPoint {
        self.center.unwrap_or_else(|| self.bbox.center())
    }
}

/// Highest-scoring detection of `class`; ties go to the larger box, then to
/// the earlier entry.
pub fn best_of(dets: &[Detection], class: ObjectClass) -> Option<&Detection> {
    let mut best: Option<&Detection> = None;
    for d in dets.iter().filter(|d| d.class == class) {
        let better = match best {
            None => true,
            Some(b) => d.score > b.score || (d.score == b.score && d.bbox.area() > b.bbox.area()),
        };
        if better {
            best = Some(d);
        }
    }
    best
}

/// Anything that turns a frame into classified ROIs.
pub trait Detector: Send + Sync {
    fn detect(&self, img: &Image) -> Vec<Detection>;
}

/// Acceptance window for a colour-blob class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobRule {
    pub min_lightness: f64,
    /// Exclusive.
    pub max_lightness: f64,
    pub max_saturation: f64,
    pub min_area_px: usize,
    /// Minimum area over bounding-box area.
    pub min_fill: f64,
}

impl BlobRule {
    fn accepts(&self, l: f32, s: f32) -> bool {
        let l = l as f64;
        l >= self.min_lightness && l < self.max_lightness && s as f64 <= self.max_saturation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalParams {
    pub sun: SunSegmentation,
    pub target: BlobRule,
    pub heliostat: BlobRule,
    pub cloud: BlobRule,
    /// Every ROI is grown by this many pixels, clipped to the frame.
    pub roi_margin_px: f64,
}

impl Default for ClassicalParams {
    fn default() -> Self {
        Self {
            sun: SunSegmentation::default(),
            target: BlobRule {
                min_lightness: 0.87,
                max_lightness: 0.95,
                max_saturation: 0.15,
                min_area_px: 12,
                min_fill: 0.6,
            },
            heliostat: BlobRule {
                min_lightness: 0.2,
                max_lightness: 0.55,
                max_saturation: 0.2,
                min_area_px: 30,
                min_fill: 0.0,
            },
            cloud: BlobRule {
                min_lightness: 0.70,
                max_lightness: 0.87,
                max_saturation: 0.35,
                min_area_px: 30,
                min_fill: 0.0,
            },
            roi_margin_px: 2.0,
        }
    }
}

/// Threshold-and-label detector tuned to the synthetic renderer: Sun by
/// lightness, target as a white rectangle, heliostats as grey quads, clouds
/// as pale low-saturation blobs.
#[derive(Debug, Clone, Default)]
pub struct ClassicalDetector {
    pub params: ClassicalParams,
}

impl ClassicalDetector {
    pub fn new(params: ClassicalParams) -> Self {
        Self { params }
    }

    fn blobs(
        &self,
        img: &Image,
        hsl: &[(f32, f32)],
        rule: &BlobRule,
        class: ObjectClass,
        out: &mut Vec<Detection>,
    ) {
        let w = img.width() as usize;
        let mask = Mask::from_fn(img.width(), img.height(), |x, y| {
            let (l, s) = hsl[y as usize * w + x as usize];
            rule.accepts(l, s)
        });
        for c in connected_components(&mask) {
            if c.area < rule.min_area_px || c.fill_ratio() < rule.min_fill {
                continue;
            }
            let bbox = c.bbox().padded(self.params.roi_margin_px, img.width(), img.height());
            let mut det = Detection::new(class, bbox, c.fill_ratio());
            if class == ObjectClass::Cloud {
                det = det.with_center(c.centroid());
            }
            out.push(det);
        }
    }
}

impl Detector for ClassicalDetector {
    fn detect(&self, img: &Image) -> Vec<Detection> {
        let p = &self.params;
        let mut out = Vec::new();
        if let Ok(sun) = segment_sun_in(img, None, &p.sun) {
            let bbox = sun.bbox.padded(p.roi_margin_px, img.width(), img.height());
            out.push(Detection::new(ObjectClass::Sun, bbox, sun.score).with_center(sun.centroid));
        }
        let hsl: Vec<(f32, f32)> = img
            .pixels()
            .map(|(_, _, [r, g, b])| {
                let h = rgb_to_hsl(r, g, b);
                (h.lightness as f32, h.saturation as f32)
            })
            .collect();
        self.blobs(img, &hsl, &p.target, ObjectClass::Target, &mut out);
        self.blobs(img, &hsl, &p.heliostat, ObjectClass::Heliostat, &mut out);
        self.blobs(img, &hsl, &p.cloud, ObjectClass::Cloud, &mut out);
        out
    }
}

/// Adapter for detections produced elsewhere, for example by an external
/// neural detector whose output was saved as JSON lines. Returns the same
/// list for every frame; Sun ROIs are refined to a centroid when a frame is
/// supplied.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedDetector {
    pub detections: Vec<Detection>,
    pub sun: SunSegmentation,
}

impl PrecomputedDetector {
    pub fn new(detections: Vec<Detection>) -> Self {
        Self { detections, sun: SunSegmentation::default() }
    }
}

impl Detector for PrecomputedDetector {
    fn detect(&self, img: &Image) -> Vec<Detection> {
        let mut dets = self.detections.clone();
        refine_sun_centers(img, &mut dets, &self.sun);
        dets
    }
}

/// Segments the Sun inside each Sun ROI lacking a center.
pub fn refine_sun_centers(img: &Image, dets: &mut [Detection], params: &SunSegmentation) {
    for d in dets.iter_mut().filter(|d| d.class == ObjectClass::Sun && d.center.is_none()) {
        if let Ok(seg) = segment_sun_in(img, Some(&d.bbox), params) {
            d.center = Some(seg.centroid);
        }
    }
}

pub fn write_detections_jsonl<W: Write>(dets: &[Detection], mut out: W) -> std::io::Result<()> {
    for d in dets {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_detections_jsonl<R: BufRead>(input: R) -> Result<Vec<Detection>, VisionError> {
    let mut dets = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| VisionError::DetectionFormat { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Detection = serde_json::from_str(&line)
            .map_err(|e| VisionError::DetectionFormat { line: i + 1, message: e.to_string() })?;
        if !(0.0..=1.0).contains(&d.score) {
            return Err(VisionError::DetectionFormat {
                line: i + 1,
                message: format!("score {} outside [0, 1]", d.score),
            });
        }
        dets.push(d);
    }
    Ok(dets)
}
