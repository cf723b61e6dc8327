use serde::{Deserialize, Serialize};

use crate::geometry::PixelPoint;

/// Axis-aligned pixel rectangle `[x, y, w, h]`, with `(x, y)` the top-left
/// corner in sub-pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(a: [f64; 4]) -> Self {
        Self { x: a[0], y: a[1], w: a[2], h: a[3] }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Box covering whole pixels `x0..=x1`, `y0..=y1`.
    pub fn from_pixel_span(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self::new(x0 as f64, y0 as f64, (x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64)
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint::new(self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.u >= self.x && p.u <= self.right() && p.v >= self.y && p.v <= self.bottom()
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BBox::from_corners(x0, y0, x1, y1))
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        self.intersection(other).map_or(0.0, |b| b.area())
    }

    /// Positive-area overlap.
    pub fn overlaps(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0.0
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    /// Grows the box by `margin` on every side, clipped to `[0, width] x [0, height]`.
    pub fn padded(&self, margin: f64, width: u32, height: u32) -> BBox {
        let x0 = (self.x - margin).max(0.0);
        let y0 = (self.y - margin).max(0.0);
        let x1 = (self.right() + margin).min(width as f64);
        let y1 = (self.bottom() + margin).min(height as f64);
        BBox::from_corners(x0, y0, x1, y1)
    }

    /// Clips to the image; `None` if nothing is left.
    pub fn clipped(&self, width: u32, height: u32) -> Option<BBox> {
        self.intersection(&BBox::new(0.0, 0.0, width as f64, height as f64))
    }

    pub fn translated(&self, du: f64, dv: f64) -> BBox {
        BBox::new(self.x + du, self.y + dv, self.w, self.h)
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= width as f64 && self.bottom() <= height as f64
    }
}
