//! 8-bit PNG input and output.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use zp3_core::image::{Domain, Image};

use crate::error::{CliError, CliResult};

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 3-channel pixel-domain image.
pub fn write_rgb(path: &Path, img: &Image) -> CliResult<()> {
    if img.channels() != 3 {
        return Err(CliError::usage("only 3-channel images can be written as RGB"));
    }
    let mut out = RgbImage::new(img.width() as u32, img.height() as u32);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let (x, y) = (x as usize, y as usize);
        *px = Rgb([0, 1, 2].map(|c| to_u8(img.get(x, y, c))));
    }
    out.save(path).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

/// Writes a single-channel image as grayscale.
pub fn write_gray(path: &Path, img: &Image) -> CliResult<()> {
    let mut out = GrayImage::new(img.width() as u32, img.height() as u32);
    for (x, y, px) in out.enumerate_pixels_mut() {
        *px = Luma([to_u8(img.get(x as usize, y as usize, 0))]);
    }
    out.save(path).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

pub fn read_rgb(path: &Path) -> CliResult<Image> {
    let img = image::open(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    Ok(Image::from_vec(w, h, 3, Domain::Pixel, data)?)
}

/// Reads a mask; pixels brighter than half are foreground.
pub fn read_mask(path: &Path) -> CliResult<Image> {
    let img = image::open(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let gray = img.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = gray.into_raw().into_iter().map(|v| if v > 127 { 1.0 } else { 0.0 }).collect();
    Ok(Image::from_vec(w, h, 1, Domain::Pixel, data)?)
}
