use image::imageops::{self, FilterType};
use image::{DynamicImage, ImageBuffer, Luma};

use super::config::PreprocessConfig;
use crate::error::{Error, Result};
use crate::geometry::{Affine2, ImageGrid};

/// Result of preprocessing one section.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub image: ImageGrid,
    /// Raw pixels per working pixel.
    pub downsample_factor: f64,
}

impl Preprocessed {
    /// Maps raw-image pixel coordinates to working coordinates.
    ///
    /// Pixel centers sit at integer coordinates in both frames, so the map is
    /// `x_w = (x_raw + 0.5) / f - 0.5`.
    pub fn raw_to_working(&self) -> Affine2<f64> {
        raw_to_working(self.downsample_factor)
    }
}

pub fn raw_to_working(downsample_factor: f64) -> Affine2<f64> {
    Affine2::translation(0.5, 0.5)
        .then(&Affine2::scale(1.0 / downsample_factor, 1.0 / downsample_factor))
        .then(&Affine2::translation(-0.5, -0.5))
}

/// Working dimensions for a raw size: the longer side shrinks to at most
/// `max_dim`, the aspect ratio is kept.
pub fn working_size(width: usize, height: usize, max_dim: usize) -> (usize, usize) {
    let longest = width.max(height);
    if longest <= max_dim {
        return (width, height);
    }
    let ratio = max_dim as f64 / longest as f64;
    let w = ((width as f64 * ratio).round() as usize).clamp(1, max_dim);
    let h = ((height as f64 * ratio).round() as usize).clamp(1, max_dim);
    (w, h)
}

/// Grayscale, optional inversion, percentile stretch to [0,1], then
/// area-aware downsampling.
pub fn preprocess(
    raw: &DynamicImage,
    cfg: &PreprocessConfig,
    working_max_dim: usize,
    spacing_um: f64,
) -> Result<Preprocessed> {
    let (w, h) = (raw.width() as usize, raw.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::InvalidValue("image has zero size".into()));
    }
    let rgb = raw.to_rgb32f();
    let [wr, wg, wb] = cfg.grayscale_weights;
    let wsum = wr + wg + wb;
    let mut lum: Vec<f32> = rgb
        .pixels()
        .map(|p| {
            let v = (wr * p[0] as f64 + wg * p[1] as f64 + wb * p[2] as f64) / wsum;
            let v = v.clamp(0.0, 1.0) as f32;
            if cfg.invert {
                1.0 - v
            } else {
                v
            }
        })
        .collect();

    let lo = percentile(&lum, cfg.percentile_low);
    let hi = percentile(&lum, cfg.percentile_high);
    if hi > lo {
        let span = hi - lo;
        for v in &mut lum {
            *v = ((*v - lo) / span).clamp(0.0, 1.0);
        }
    } else {
        // Flat image: nothing to stretch.
        lum.iter_mut().for_each(|v| *v = 0.0);
    }

    let (ww, wh) = working_size(w, h, working_max_dim);
    let factor = w as f64 / ww as f64;
    let data = if (ww, wh) == (w, h) {
        lum
    } else {
        let buf: ImageBuffer<Luma<f32>, Vec<f32>> =
            ImageBuffer::from_raw(w as u32, h as u32, lum).expect("buffer size matches dimensions");
        imageops::resize(&buf, ww as u32, wh as u32, FilterType::Triangle)
            .into_raw()
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect()
    };
    let image = ImageGrid::new(ww, wh, data, spacing_um * factor)?;
    Ok(Preprocessed {
        image,
        downsample_factor: factor,
    })
}

/// Nearest-rank percentile, `q` in [0, 100].
fn percentile(values: &[f32], q: f64) -> f32 {
    let mut sorted: Vec<f32> = values.to_vec();
    let k = (((q / 100.0) * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1);
    let (_, v, _) = sorted.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *v
}

/// Quantizes a [0,1] grid to 8-bit grayscale.
pub fn to_gray8(img: &ImageGrid) -> image::GrayImage {
    let data = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    image::GrayImage::from_raw(img.width() as u32, img.height() as u32, data)
        .expect("buffer size matches dimensions")
}
