use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use super::color::lightness;
use super::image::Image;
use super::VisionError;
use crate::geometry::PixelPoint;

/// Binary mask over an image grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut mask = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    mask.set(x, y, true);
                }
            }
        }
        mask
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// An 8-connected set of mask pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub area: usize,
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
    /// Sums of integer pixel indices; kept exact so centroids do not depend on
    /// visiting order.
    pub sum_x: u64,
    pub sum_y: u64,
}

impl Component {
    /// Unweighted mean of the member pixel centers.
    pub fn centroid(&self) -> PixelPoint {
        let n = self.area as f64;
        PixelPoint::new(self.sum_x as f64 / n + 0.5, self.sum_y as f64 / n + 0.5)
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_pixel_span(self.min_x, self.min_y, self.max_x, self.max_y)
    }

    /// Area over bounding-box area, in `(0, 1]`.
    pub fn fill_ratio(&self) -> f64 {
        self.area as f64 / self.bbox().area()
    }
}

/// Labels 8-connected components, returned in order of their first pixel in
/// row-major scan.
pub fn connected_components(mask: &Mask) -> Vec<Component> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; mask.bits.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            let i0 = y0 as usize * w as usize + x0 as usize;
            if !mask.bits[i0] || seen[i0] {
                continue;
            }
            seen[i0] = true;
            stack.push((x0, y0));
            let mut c = Component {
                area: 0,
                min_x: x0,
                min_y: y0,
                max_x: x0,
                max_y: y0,
                sum_x: 0,
                sum_y: 0,
            };
            while let Some((x, y)) = stack.pop() {
                c.area += 1;
                c.sum_x += x as u64;
                c.sum_y += y as u64;
                c.min_x = c.min_x.min(x);
                c.max_x = c.max_x.max(x);
                c.min_y = c.min_y.min(y);
                c.max_y = c.max_y.max(y);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let j = ny as usize * w as usize + nx as usize;
                        if mask.bits[j] && !seen[j] {
                            seen[j] = true;
                            stack.push((nx as u32, ny as u32));
                        }
                    }
                }
            }
            out.push(c);
        }
    }
    out
}

/// Thresholds for the Sun segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SunSegmentation {
    pub lightness_threshold: f64,
    pub min_area_px: usize,
}

impl Default for SunSegmentation {
    fn default() -> Self {
        Self { lightness_threshold: 0.95, min_area_px: 20 }
    }
}

impl SunSegmentation {
    pub fn validate(&self) -> Result<(), VisionError> {
        if !(self.lightness_threshold > 0.0 && self.lightness_threshold <= 1.0) {
            return Err(VisionError::InvalidParameters(format!(
                "lightness threshold {} outside (0, 1]",
                self.lightness_threshold
            )));
        }
        if self.min_area_px == 0 {
            return Err(VisionError::InvalidParameters("min_area_px must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunSegment {
    pub centroid: PixelPoint,
    pub bbox: BBox,
    pub score: f64,
    pub area_px: usize,
}

/// Centroid of the largest bright component in the whole frame.
pub fn segment_sun(img: &Image, params: &SunSegmentation) -> Result<SunSegment, VisionError> {
    segment_sun_in(img, None, params)
}

/// As [`segment_sun`], restricted to pixels whose centers lie in `roi`.
pub fn segment_sun_in(
    img: &Image,
    roi: Option<&BBox>,
    params: &SunSegmentation,
) -> Result<SunSegment, VisionError> {
    params.validate()?;
    let mask = Mask::from_fn(img.width(), img.height(), |x, y| {
        let inside = roi.map_or(true, |r| r.contains(&PixelPoint::new(x as f64 + 0.5, y as f64 + 0.5)));
        inside && lightness(img.get(x, y)) >= params.lightness_threshold
    });
    let mut best: Option<Component> = None;
    for c in connected_components(&mask) {
        if best.as_ref().map_or(true, |b| c.area > b.area) {
            best = Some(c);
        }
    }
    match best {
        Some(c) if c.area >= params.min_area_px => Ok(SunSegment {
            centroid: c.centroid(),
            bbox: c.bbox(),
            score: c.fill_ratio(),
            area_px: c.area,
        }),
        _ => Err(VisionError::NoSunDetected { min_area_px: params.min_area_px }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk(w: u32, h: u32, cu: f64, cv: f64, r: f64) -> Image {
        let mut img = Image::filled(w, h, [40, 60, 120]);
        for y in 0..h {
            for x in 0..w {
                let (du, dv) = (x as f64 + 0.5 - cu, y as f64 + 0.5 - cv);
                if du * du + dv * dv <= r * r {
                    img.set(x, y, [255, 255, 250]);
                }
            }
        }
        img
    }

    #[test]
    fn centered_disk() {
        let img = disk(800, 600, 400.0, 300.0, 20.0);
        let s = segment_sun(&img, &SunSegmentation::default()).unwrap();
        assert!(s.centroid.distance_to(&PixelPoint::new(400.0, 300.0)) < 0.1);
        assert!(s.score > 0.7 && s.score <= 1.0);
    }

    #[test]
    fn black_frame_has_no_sun() {
        let img = Image::new(64, 48);
        assert_eq!(
            segment_sun(&img, &SunSegmentation::default()),
            Err(VisionError::NoSunDetected { min_area_px: 20 })
        );
    }

    #[test]
    fn small_blobs_are_rejected_and_largest_wins() {
        let mut img = disk(100, 100, 70.0, 70.0, 6.0);
        img.set(5, 5, [255, 255, 255]);
        img.set(6, 6, [255, 255, 255]);
        let s = segment_sun(&img, &SunSegmentation::default()).unwrap();
        assert!(s.centroid.distance_to(&PixelPoint::new(70.0, 70.0)) < 0.1);
        let strict = SunSegmentation { min_area_px: 500, ..Default::default() };
        assert!(segment_sun(&img, &strict).is_err());
    }

    #[test]
    fn diagonal_pixels_are_connected() {
        let m = Mask::from_fn(4, 4, |x, y| x == y);
        let cs = connected_components(&m);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].area, 4);
    }

    #[test]
    fn roi_restricts_search() {
        let mut img = disk(200, 100, 40.0, 50.0, 10.0);
        for y in 45..55 {
            for x in 150..160 {
                img.set(x, y, [255, 255, 255]);
            }
        }
        let roi = BBox::new(140.0, 40.0, 30.0, 30.0);
        let s = segment_sun_in(&img, Some(&roi), &SunSegmentation::default()).unwrap();
        assert_eq!(s.centroid, PixelPoint::new(155.0, 50.0));
    }

    #[test]
    fn rejects_bad_threshold() {
        let p = SunSegmentation { lightness_threshold: 1.5, min_area_px: 1 };
        assert!(matches!(segment_sun(&Image::new(2, 2), &p), Err(VisionError::InvalidParameters(_))));
    }

    proptest! {
        #[test]
        fn centroid_lies_inside_bbox(cu in 5.0..95.0f64, cv in 5.0..75.0f64, r in 2.6..30.0f64) {
            let img = disk(100, 80, cu, cv, r);
            if let Ok(s) = segment_sun(&img, &SunSegmentation::default()) {
                prop_assert!(s.bbox.contains(&s.centroid));
                prop_assert!(s.score > 0.0 && s.score <= 1.0);
            }
        }
    }
}
