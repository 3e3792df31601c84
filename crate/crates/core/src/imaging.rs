//! Pixel-level primitives shared by the dataset pipeline, the feature
//! extractors and the audit module.
//!
//! Images are `H x W x 3` arrays of `f32` intensities in `[0, 1]`,
//! channel-last. All geometric operations here are deterministic pure
//! functions.

use std::path::Path;

use image::ImageReader;
use ndarray::Array3;

use crate::error::{Error, Result};

/// Load a PNG/TIFF/JPEG file as an `[0,1]` RGB pixel array.
pub fn load_pixels(path: &Path) -> Result<Array3<f32>> {
    let decode = |p: &Path| -> std::result::Result<Array3<f32>, String> {
        let img = ImageReader::open(p)
            .map_err(|e| e.to_string())?
            .decode()
            .map_err(|e| e.to_string())?;
        let rgb = img.to_rgb32f();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let mut out = Array3::<f32>::zeros((h, w, 3));
        for (x, y, px) in rgb.enumerate_pixels() {
            for c in 0..3 {
                out[[y as usize, x as usize, c]] = px.0[c].clamp(0.0, 1.0);
            }
        }
        Ok(out)
    };
    decode(path).map_err(|reason| Error::ImageDecode {
        path: path.to_path_buf(),
        reason,
    })
}

/// Save an `[0,1]` RGB pixel array as an 8-bit PNG.
pub fn save_png(pixels: &Array3<f32>, path: &Path) -> Result<()> {
    let (h, w, _) = pixels.dim();
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                to_u8(pixels[[y, x, 0]]),
                to_u8(pixels[[y, x, 1]]),
                to_u8(pixels[[y, x, 2]]),
            ];
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img.save(path).map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Centered `h x w` window of `src`; odd remainders leave the extra pixel on
/// the bottom/right margin.
pub fn center_crop(src: &Array3<f32>, h: usize, w: usize) -> Result<Array3<f32>> {
    let (sh, sw, _) = src.dim();
    if h > sh || w > sw {
        return Err(Error::CropExceedsImage {
            req_h: h,
            req_w: w,
            src_h: sh,
            src_w: sw,
        });
    }
    let top = (sh - h) / 2;
    let left = (sw - w) / 2;
    Ok(crop_at(src, top, left, h, w))
}

/// Window of `src` starting at `(top, left)`. Caller guarantees bounds.
pub fn crop_at(src: &Array3<f32>, top: usize, left: usize, h: usize, w: usize) -> Array3<f32> {
    src.slice(ndarray::s![top..top + h, left..left + w, ..])
        .to_owned()
}

/// Horizontal mirror (left-right flip).
pub fn hflip(src: &Array3<f32>) -> Array3<f32> {
    let mut out = src.clone();
    out.invert_axis(ndarray::Axis(1));
    out
}

/// Resample to `out_h x out_w` by exact pixel-area overlap weighting.
///
/// Acts as a box filter when downscaling and as piecewise-constant area
/// interpolation when upscaling; either direction preserves the overall
/// mean intensity.
pub fn resize_area(src: &Array3<f32>, out_h: usize, out_w: usize) -> Array3<f32> {
    let (sh, sw, ch) = src.dim();
    if sh == out_h && sw == out_w {
        return src.clone();
    }
    let row_spans = area_spans(sh, out_h);
    let col_spans = area_spans(sw, out_w);
    let mut out = Array3::<f32>::zeros((out_h, out_w, ch));
    for (oy, rs) in row_spans.iter().enumerate() {
        for (ox, cs) in col_spans.iter().enumerate() {
            let mut acc = [0.0f64; 3];
            let mut total = 0.0f64;
            for &(y, wy) in rs {
                for &(x, wx) in cs {
                    let w = wy * wx;
                    total += w;
                    for c in 0..ch {
                        acc[c] += w * src[[y, x, c]] as f64;
                    }
                }
            }
            for c in 0..ch {
                out[[oy, ox, c]] = (acc[c] / total) as f32;
            }
        }
    }
    out
}

/// For each output index, the list of overlapping source indices and the
/// length of the overlap between the output cell and that source cell.
fn area_spans(src_len: usize, out_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let start = o as f64 * scale;
            let end = (o + 1) as f64 * scale;
            let first = start.floor() as usize;
            let last = ((end - 1e-9).floor() as usize).min(src_len - 1);
            (first..=last)
                .map(|s| {
                    let overlap = (end.min((s + 1) as f64) - start.max(s as f64)).max(0.0);
                    (s, overlap)
                })
                .collect()
        })
        .collect()
}

/// Root-mean-square difference between two equally sized images.
pub fn rms_distance(a: &Array3<f32>, b: &Array3<f32>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let n = a.len() as f64;
    let sum: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    (sum / n).sqrt()
}
