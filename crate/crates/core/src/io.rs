//! Lossless raster and array files.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use ndarray::{Array2, Array3};

use crate::error::{OmniError, Result};
use crate::pyramid::Mask;

fn img_err(path: &Path) -> impl FnOnce(image::ImageError) -> OmniError + '_ {
    move |source| OmniError::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| OmniError::io(dir, e))?;
    }
    Ok(())
}

/// Round to the nearest 8-bit level.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_rgb_png(path: &Path, x: &Array3<f32>) -> Result<()> {
    let (c, h, w) = x.dim();
    if c != 3 {
        return Err(OmniError::shape("write_rgb_png", "3 channels", c));
    }
    ensure_parent(path)?;
    let img = RgbImage::from_fn(w as u32, h as u32, |px, py| {
        let (px, py) = (px as usize, py as usize);
        Rgb([
            quantize(x[[0, py, px]]),
            quantize(x[[1, py, px]]),
            quantize(x[[2, py, px]]),
        ])
    });
    img.save(path).map_err(img_err(path))
}

/// Any readable raster as `3×H×W` in `[0, 1]`.
pub fn read_rgb_png(path: &Path) -> Result<Array3<f32>> {
    let img = image::open(path).map_err(img_err(path))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Array3::from_shape_fn((3, h, w), |(c, y, x)| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    }))
}

pub fn write_mask_png(path: &Path, m: &Mask) -> Result<()> {
    let (h, w) = m.dim();
    ensure_parent(path)?;
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if m[[y as usize, x as usize]] { 255 } else { 0 }])
    });
    img.save(path).map_err(img_err(path))
}

/// Nonzero pixels are foreground.
pub fn read_mask_png(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(img_err(path))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Array2::from_shape_fn((h, w), |(y, x)| {
        img.get_pixel(x as u32, y as u32)[0] > 0
    }))
}

pub fn write_rgb8_png(path: &Path, rgb: &Array3<u8>) -> Result<()> {
    let (h, w, _) = rgb.dim();
    ensure_parent(path)?;
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([rgb[[y, x, 0]], rgb[[y, x, 1]], rgb[[y, x, 2]]])
    });
    img.save(path).map_err(img_err(path))
}

/// Little-endian `f32` array in NumPy's `.npy` v1 format.
pub fn write_npy_f32(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(OmniError::Length {
            context: "write_npy_f32",
            expected: shape.iter().product(),
            actual: data.len(),
        });
    }
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    let tuple = if dims.len() == 1 {
        format!("({},)", dims[0])
    } else {
        format!("({})", dims.join(", "))
    };
    let mut header = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {tuple}, }}");
    // magic (6) + version (2) + header length (2) + header, padded to 64 with a trailing newline
    let total = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - total % 64) % 64));
    header.push('\n');
    let mut out = Vec::with_capacity(10 + header.len() + 4 * data.len());
    out.extend_from_slice(b"\x93NUMPY\x01\x00");
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    ensure_parent(path)?;
    let mut f = fs::File::create(path).map_err(|e| OmniError::io(path, e))?;
    f.write_all(&out).map_err(|e| OmniError::io(path, e))
}

pub fn write_string(path: &Path, s: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, s).map_err(|e| OmniError::io(path, e))
}

pub fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| OmniError::io(path, e))
}
