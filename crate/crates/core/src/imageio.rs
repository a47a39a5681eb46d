//! PNG I/O for row-major float images and binary masks.

use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};

pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a `width × height × 3` row-major image with values in `[0, 1]`.
pub fn save_rgb(path: &Path, hwc: &[f32], width: usize, height: usize) -> Result<()> {
    if hwc.len() != width * height * 3 {
        return Err(Error::shape(
            format!("{width}x{height}x3"),
            format!("{} values", hwc.len()),
        ));
    }
    let buf: Vec<u8> = hwc.iter().map(|&v| to_u8(v)).collect();
    let img = RgbImage::from_raw(width as u32, height as u32, buf).expect("length checked");
    img.save(path)?;
    Ok(())
}

/// Reads an RGB image as row-major floats in `[0, 1]`; returns `(pixels, width, height)`.
pub fn load_rgb(path: &Path) -> Result<(Vec<f32>, usize, usize)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
    Ok((data, w as usize, h as usize))
}

pub fn save_mask(path: &Path, mask: &[u8], size: usize) -> Result<()> {
    let buf: Vec<u8> = mask.iter().map(|&m| if m > 0 { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(size as u32, size as u32, buf)
        .ok_or_else(|| Error::shape(format!("{size}x{size}"), format!("{} values", mask.len())))?;
    img.save(path)?;
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<(Vec<u8>, usize)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    if w != h {
        return Err(Error::shape("square mask", format!("{w}x{h}")));
    }
    let data = img.into_raw().into_iter().map(|b| (b >= 128) as u8).collect();
    Ok((data, w as usize))
}
