//! PNG loading and saving, plus bilinear resizing to model dimensions.
//!
//! Inputs may be 8- or 16-bit gray or RGB (alpha is dropped with a warning);
//! values normalize to [0,1]. Outputs are always 16-bit, keeping the
//! quantization error (~7.6e-6) far below any meaningful perturbation
//! budget so saved images preserve the ε-ball after reload.

use grasp_core::image::{ImageTensor, PixelRange};
use grasp_core::{Error, Result};
use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use std::path::Path;

pub fn load_png(path: &Path) -> Result<ImageTensor> {
    let img = image::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot decode {}: {e}", path.display())))?;
    let (tensor, had_alpha) = match img {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
            (ImageTensor::new(h as usize, w as usize, 1, data, PixelRange::UNIT)?, false)
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect();
            (ImageTensor::new(h as usize, w as usize, 1, data, PixelRange::UNIT)?, false)
        }
        DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.pixels().flat_map(|p| p.0).map(|v| v as f64 / 255.0).collect();
            (ImageTensor::new(h as usize, w as usize, 3, data, PixelRange::UNIT)?, false)
        }
        DynamicImage::ImageRgb16(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.pixels().flat_map(|p| p.0).map(|v| v as f64 / 65535.0).collect();
            (ImageTensor::new(h as usize, w as usize, 3, data, PixelRange::UNIT)?, false)
        }
        other => {
            let buf = other.to_rgb16();
            let (w, h) = buf.dimensions();
            let data = buf.pixels().flat_map(|p| p.0).map(|v| v as f64 / 65535.0).collect();
            (ImageTensor::new(h as usize, w as usize, 3, data, PixelRange::UNIT)?, true)
        }
    };
    if had_alpha {
        log::warn!("{}: unsupported layout converted to RGB (alpha dropped)", path.display());
    }
    Ok(tensor)
}

/// Writes a [0,1] tensor as 16-bit gray or RGB PNG.
pub fn save_png_16bit(path: &Path, tensor: &ImageTensor) -> Result<()> {
    let (h, w, c) = tensor.shape();
    let quantize = |v: f64| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
    let io_err =
        |e: image::ImageError| Error::InvalidInput(format!("cannot write {}: {e}", path.display()));
    match c {
        1 => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(
                w as u32,
                h as u32,
                |x, y| Luma([quantize(tensor.get(y as usize, x as usize, 0))]),
            );
            buf.save(path).map_err(io_err)
        }
        3 => {
            let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
                ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
                    Rgb([
                        quantize(tensor.get(y as usize, x as usize, 0)),
                        quantize(tensor.get(y as usize, x as usize, 1)),
                        quantize(tensor.get(y as usize, x as usize, 2)),
                    ])
                });
            buf.save(path).map_err(io_err)
        }
        other => Err(Error::InvalidInput(format!("cannot save {other}-channel image"))),
    }
}

/// Bilinear resize with pixel-center alignment.
pub fn resize_bilinear(t: &ImageTensor, new_h: usize, new_w: usize) -> Result<ImageTensor> {
    let (h, w, c) = t.shape();
    if h == 0 || w == 0 || new_h == 0 || new_w == 0 {
        return Err(Error::InvalidInput("cannot resize empty images".into()));
    }
    if (h, w) == (new_h, new_w) {
        return Ok(t.clone());
    }
    let scale_y = h as f64 / new_h as f64;
    let scale_x = w as f64 / new_w as f64;
    let mut data = vec![0.0; new_h * new_w * c];
    for y in 0..new_h {
        for x in 0..new_w {
            let sy = ((y as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
            let sx = ((x as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
            let y0 = sy.floor() as usize;
            let x0 = sx.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            let fy = sy - y0 as f64;
            let fx = sx - x0 as f64;
            for ch in 0..c {
                let top = t.get(y0, x0, ch) * (1.0 - fx) + t.get(y0, x1, ch) * fx;
                let bottom = t.get(y1, x0, ch) * (1.0 - fx) + t.get(y1, x1, ch) * fx;
                data[(y * new_w + x) * c + ch] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    ImageTensor::new(new_h, new_w, c, data, t.pixel_range())
}
