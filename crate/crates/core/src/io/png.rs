//! 8-bit PNG images. Color is gamma-encoded with exponent 2.2 on disk and
//! linear in memory; alpha and masks are stored linearly.

use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ColorType, DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use super::IoError;
use crate::buffer::ImageBuffer;

pub const DISPLAY_GAMMA: f64 = 2.2;

#[inline]
pub fn encode_srgb(linear: f64) -> u8 {
    (linear.clamp(0.0, 1.0).powf(1.0 / DISPLAY_GAMMA) * 255.0).round() as u8
}

#[inline]
pub fn decode_srgb(v: u8) -> f64 {
    (v as f64 / 255.0).powf(DISPLAY_GAMMA)
}

#[inline]
pub fn encode_linear(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Quantises a linear color buffer to what an 8-bit PNG round trip yields,
/// expressed in display-referred `[0, 1]` units.
pub fn display_referred(linear: &ImageBuffer) -> ImageBuffer {
    linear.map(|v| encode_srgb(v) as f64 / 255.0)
}

fn decode(path: &Path) -> Result<DynamicImage, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn expect_color_type(img: &DynamicImage, want: ColorType, path: &Path) -> Result<(), IoError> {
    if img.color() == want {
        Ok(())
    } else {
        Err(IoError::Decode {
            path: path.to_path_buf(),
            message: format!("expected {want:?} PNG, found {:?}", img.color()),
        })
    }
}

/// Loads an 8-bit RGB PNG into linear light.
pub fn load_color_png(path: &Path) -> Result<ImageBuffer, IoError> {
    let img = decode(path)?;
    expect_color_type(&img, ColorType::Rgb8, path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.as_bytes().iter().map(|&v| decode_srgb(v)).collect();
    ImageBuffer::from_vec(w, h, 3, data).map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads an 8-bit grayscale PNG as linear values in `[0, 1]`.
pub fn load_gray_png(path: &Path) -> Result<ImageBuffer, IoError> {
    let img = decode(path)?;
    expect_color_type(&img, ColorType::L8, path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.as_bytes().iter().map(|&v| v as f64 / 255.0).collect();
    ImageBuffer::from_vec(w, h, 1, data).map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn encode_png(bytes: &[u8], width: usize, height: usize, color: ExtendedColorType) -> Vec<u8> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(bytes, width as u32, height as u32, color)
        .expect("in-memory PNG encoding cannot fail for matching buffer sizes");
    out
}

/// Writes a linear 3-channel buffer as a gamma-encoded RGB PNG.
pub fn save_color_png(path: &Path, buf: &ImageBuffer) -> Result<(), IoError> {
    assert_eq!(buf.channels(), 3, "color PNG needs 3 channels");
    let bytes: Vec<u8> = buf.data().iter().map(|&v| encode_srgb(v)).collect();
    let png = encode_png(&bytes, buf.width(), buf.height(), ExtendedColorType::Rgb8);
    super::write_bytes(path, &png)
}

/// Writes a 1-channel buffer linearly as a grayscale PNG.
pub fn save_gray_png(path: &Path, buf: &ImageBuffer) -> Result<(), IoError> {
    assert_eq!(buf.channels(), 1, "gray PNG needs 1 channel");
    let bytes: Vec<u8> = buf.data().iter().map(|&v| encode_linear(v)).collect();
    let png = encode_png(&bytes, buf.width(), buf.height(), ExtendedColorType::L8);
    super::write_bytes(path, &png)
}
