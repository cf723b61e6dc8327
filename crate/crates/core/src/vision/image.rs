//! 8-bit RGB frames and their PPM/PNG encodings.

use std::io::{Cursor, Write};
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use super::VisionError;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(3 * n);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, VisionError> {
        let expected = 3 * width as usize * height as usize;
        if data.len() != expected {
            return Err(VisionError::InvalidImage(format!(
                "{width}x{height} RGB needs {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        3 * (y as usize * self.width as usize + x as usize)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Iterates `(x, y, [r, g, b])` in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32, [u8; 3])> + '_ {
        let w = self.width as usize;
        self.data.chunks_exact(3).enumerate().map(move |(i, p)| {
            ((i % w) as u32, (i / w) as u32, [p[0], p[1], p[2]])
        })
    }

    /// Binary PPM (P6).
    pub fn write_ppm<W: Write>(&self, out: W) -> Result<(), VisionError> {
        PnmEncoder::new(out)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(&self.data, self.width, self.height, ExtendedColorType::Rgb8)
            .map_err(|e| VisionError::Encoding(e.to_string()))
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.data.len() + 32);
        self.write_ppm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, VisionError> {
        let mut buf = Vec::new();
        PngEncoder::new(&mut buf)
            .write_image(&self.data, self.width, self.height, ExtendedColorType::Rgb8)
            .map_err(|e| VisionError::Encoding(e.to_string()))?;
        Ok(buf)
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self, VisionError> {
        let decoded = image::load(Cursor::new(bytes), ImageFormat::Pnm)
            .map_err(|e| VisionError::Encoding(e.to_string()))?
            .into_rgb8();
        let (w, h) = decoded.dimensions();
        Self::from_raw(w, h, decoded.into_raw())
    }

    pub fn save_ppm(&self, path: &Path) -> Result<(), VisionError> {
        std::fs::write(path, self.to_ppm_bytes()).map_err(|e| VisionError::Io(path.display().to_string(), e.to_string()))
    }

    pub fn load_ppm(path: &Path) -> Result<Self, VisionError> {
        let bytes = std::fs::read(path).map_err(|e| VisionError::Io(path.display().to_string(), e.to_string()))?;
        Self::from_ppm_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_and_header() {
        let mut img = Image::filled(5, 3, [10, 20, 30]);
        img.set(4, 2, [255, 0, 128]);
        let bytes = img.to_ppm_bytes();
        assert!(bytes.starts_with(b"P6"));
        assert_eq!(bytes.len() - 3 * 15, bytes.len() - img.as_raw().len());
        assert!(bytes.ends_with(&[255, 0, 128]));
        assert_eq!(Image::from_ppm_bytes(&bytes).unwrap(), img);
    }

    #[test]
    fn raw_length_is_checked() {
        assert!(Image::from_raw(2, 2, vec![0; 11]).is_err());
        assert!(Image::from_raw(2, 2, vec![0; 12]).is_ok());
    }

    #[test]
    fn png_encodes() {
        let png = Image::filled(4, 4, [1, 2, 3]).to_png_bytes().unwrap();
        assert_eq!(&png[1..4], b"PNG");
    }
}
