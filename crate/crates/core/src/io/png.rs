//! PNG input images and masks.
//!
//! Inputs are accepted at 8 or 16 bits per channel and normalized to [0, 1].
//! Synthetic data is linear; for real captures the caller declares the
//! encoding gamma and values are linearized as `value^gamma` on load. Masks
//! are grayscale PNGs where any value above half intensity marks a valid
//! pixel.

use std::path::Path;

use image::DynamicImage;
use nalgebra::Vector3;

use crate::error::{CpsError, Result};
use crate::map::VectorMap;

/// Load an RGB image as a linear-intensity map. `gamma` is the encoding
/// exponent of the file (1.0 = already linear, 2.2 = typical sRGB-like).
pub fn load_image_png(path: impl AsRef<Path>, gamma: f64) -> Result<VectorMap> {
    let path = path.as_ref();
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(CpsError::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    let img = image::open(path)?;
    let (data, width, height) = match img {
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) | DynamicImage::ImageLuma16(_) => {
            let rgb = img.to_rgb16();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let data: Vec<Vector3<f64>> = rgb
                .pixels()
                .map(|p| Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) / 65535.0)
                .collect();
            (data, w, h)
        }
        _ => {
            let rgb = img.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let data: Vec<Vector3<f64>> = rgb
                .pixels()
                .map(|p| Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0)
                .collect();
            (data, w, h)
        }
    };
    let data = if gamma != 1.0 {
        data.into_iter().map(|v| v.map(|c| c.powf(gamma))).collect()
    } else {
        data
    };
    let mask = vec![true; width * height];
    VectorMap::from_parts(width, height, data, mask)
}

/// Load a mask: pixels with luma above half intensity are valid.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<(Vec<bool>, usize, usize)> {
    let img = image::open(path.as_ref())?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mask = img.pixels().map(|p| p[0] > 127).collect();
    Ok((mask, w, h))
}

/// Write a mask as an 8-bit grayscale PNG (255 = valid).
pub fn save_mask_png(path: impl AsRef<Path>, mask: &[bool], width: usize, height: usize) -> Result<()> {
    if mask.len() != width * height {
        return Err(CpsError::ShapeMismatch(format!(
            "mask has {} entries for {width}x{height}",
            mask.len()
        )));
    }
    let buf: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(width as u32, height as u32, buf)
        .expect("buffer length checked above");
    img.save(path.as_ref())?;
    Ok(())
}

/// Write an 8-bit preview of a float image: clamp to [0, 1], encode with
/// `1/gamma`, invalid pixels black. Quantized previews are for inspection
/// only; the float maps are the authoritative artifacts.
pub fn save_preview_png(path: impl AsRef<Path>, map: &VectorMap, gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(CpsError::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    let mut buf = Vec::with_capacity(map.len() * 3);
    for i in 0..map.len() {
        if map.is_valid(i) {
            for c in map.data()[i].iter() {
                let enc = c.clamp(0.0, 1.0).powf(1.0 / gamma);
                buf.push((enc * 255.0).round() as u8);
            }
        } else {
            buf.extend_from_slice(&[0, 0, 0]);
        }
    }
    let img = image::RgbImage::from_raw(map.width() as u32, map.height() as u32, buf)
        .expect("buffer sized from map");
    img.save(path.as_ref())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use tempfile::tempdir;

    #[test]
    fn mask_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mask.png");
        let mask = vec![true, false, false, true, true, false];
        save_mask_png(&path, &mask, 3, 2).unwrap();
        let (back, w, h) = load_mask_png(&path).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(back, mask);
    }

    #[test]
    fn eight_bit_image_loads_normalized() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = image::RgbImage::from_fn(2, 1, |x, _| {
            if x == 0 {
                image::Rgb([255, 0, 128])
            } else {
                image::Rgb([0, 51, 0])
            }
        });
        img.save(&path).unwrap();
        let m = load_image_png(&path, 1.0).unwrap();
        assert_relative_eq!(m.get(0, 0).x, 1.0);
        assert_relative_eq!(m.get(0, 0).z, 128.0 / 255.0);
        assert_relative_eq!(m.get(1, 0).y, 0.2);
    }

    #[test]
    fn gamma_linearizes_on_load() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.png");
        image::RgbImage::from_pixel(1, 1, image::Rgb([128, 128, 128]))
            .save(&path)
            .unwrap();
        let m = load_image_png(&path, 2.2).unwrap();
        assert_relative_eq!(m.get(0, 0).x, (128.0f64 / 255.0).powf(2.2), epsilon = 1e-12);
    }

    #[test]
    fn sixteen_bit_precision_is_kept() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img16.png");
        let img = image::ImageBuffer::<image::Rgb<u16>, _>::from_pixel(1, 1, image::Rgb([13107, 0, 65535]));
        img.save(&path).unwrap();
        let m = load_image_png(&path, 1.0).unwrap();
        assert_relative_eq!(m.get(0, 0).x, 0.2, epsilon = 1e-9);
        assert_relative_eq!(m.get(0, 0).z, 1.0);
    }

    #[test]
    fn preview_encodes_and_blacks_invalid() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("prev.png");
        let mut m = VectorMap::filled(2, 1, Vector3::new(0.25, 0.5, 2.0));
        m.set_valid(1, 0, false);
        save_preview_png(&path, &m, 1.0).unwrap();
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!(img.get_pixel(0, 0).0, [64, 128, 255]);
        assert_eq!(img.get_pixel(1, 0).0, [0, 0, 0]);
    }
}
