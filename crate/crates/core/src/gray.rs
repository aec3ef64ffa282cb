//! Dense 8-bit grayscale raster, the sole image representation in the pipeline.

use crate::error::{Error, Result};

/// Row-major 8-bit intensity image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    /// Builds an image, validating that `pixels.len() == width * height`.
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        let expected = width as u64 * height as u64;
        if expected > u32::MAX as u64 {
            return Err(Error::Input(format!(
                "image of {width}x{height} exceeds the supported pixel count"
            )));
        }
        if pixels.len() as u64 != expected {
            return Err(Error::Input(format!(
                "pixel buffer length {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// Total pixel count; fits in `u32` by construction.
    pub fn total_pixels(&self) -> u32 {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }
}

const R_WEIGHT: f64 = 0.299;
const G_WEIGHT: f64 = 0.587;
const B_WEIGHT: f64 = 0.114;

/// Converts packed RGB triples to grayscale with the BT.601 luma weights,
/// rounding half up and clamping to `[0, 255]`.
pub fn to_grayscale(rgb_pixels: &[[u8; 3]], width: u32, height: u32) -> Result<GrayImage> {
    let expected = width as u64 * height as u64;
    if rgb_pixels.len() as u64 != expected {
        return Err(Error::Input(format!(
            "rgb buffer length {} does not match {width}x{height}",
            rgb_pixels.len()
        )));
    }
    let pixels = rgb_pixels
        .iter()
        .map(|&[r, g, b]| {
            let y = R_WEIGHT * r as f64 + G_WEIGHT * g as f64 + B_WEIGHT * b as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(width, height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_and_white_map_to_extremes() {
        let img = to_grayscale(&[[0, 0, 0], [255, 255, 255]], 2, 1).unwrap();
        assert_eq!(img.pixels(), &[0, 255]);
    }

    #[test]
    fn bt601_weights_round_half_up() {
        // 0.299*100 + 0.587*150 + 0.114*200 = 140.75 -> 141
        let img = to_grayscale(&[[100, 150, 200]], 1, 1).unwrap();
        assert_eq!(img.get(0, 0), 141);
    }

    #[test]
    fn gray_inputs_are_preserved() {
        for v in 0..=255u8 {
            let img = to_grayscale(&[[v, v, v]], 1, 1).unwrap();
            assert_eq!(img.get(0, 0), v);
        }
    }

    #[test]
    fn conversion_is_deterministic() {
        let rgb: Vec<[u8; 3]> = (0..64).map(|i| [i as u8, (i * 3) as u8, 200]).collect();
        let a = to_grayscale(&rgb, 8, 8).unwrap();
        let b = to_grayscale(&rgb, 8, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let err = to_grayscale(&[[0, 0, 0]], 2, 2).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn zero_sized_images_are_rejected() {
        assert!(GrayImage::new(0, 4, vec![]).is_err());
        assert!(GrayImage::new(4, 0, vec![]).is_err());
    }
}
