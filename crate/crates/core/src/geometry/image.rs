use crate::error::{Error, Result};

use super::{Affine2, Point2};

/// Single-channel image with intensities in `[0, 1]` and a physical pixel
/// size in microns.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f32>,
    spacing_um: f64,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, data: Vec<f32>, spacing_um: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidValue(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                what: format!(
                    "image data has {} values, expected {}x{}",
                    data.len(),
                    width,
                    height
                ),
            });
        }
        if !(spacing_um > 0.0 && spacing_um.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "spacing_um must be positive, got {spacing_um}"
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            spacing_um,
        })
    }

    /// Builds an image from a per-pixel function; values are clamped to `[0, 1]`.
    ///
    /// Panics on zero dimensions or non-positive spacing.
    pub fn from_fn(
        width: usize,
        height: usize,
        spacing_um: f64,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert!(spacing_um > 0.0, "spacing must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self {
            width,
            height,
            data,
            spacing_um,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32, spacing_um: f64) -> Self {
        Self::from_fn(width, height, spacing_um, |_, _| value)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn spacing_um(&self) -> f64 {
        self.spacing_um
    }

    pub fn with_spacing(mut self, spacing_um: f64) -> Self {
        assert!(spacing_um > 0.0, "spacing must be positive");
        self.spacing_um = spacing_um;
        self
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample at a continuous position, `None` outside the pixel-center hull.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f32> {
        let (wm, hm) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(x >= 0.0 && y >= 0.0 && x <= wm && y <= hm) {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let r0 = y0 * self.width;
        let r1 = y1 * self.width;
        let (v00, v10) = (self.data[r0 + x0], self.data[r0 + x1]);
        let (v01, v11) = (self.data[r1 + x0], self.data[r1 + x1]);
        let top = v00 + (v10 - v00) * fx;
        let bottom = v01 + (v11 - v01) * fx;
        Some(top + (bottom - top) * fy)
    }

    /// Separable Gaussian blur with edge clamping.
    pub fn gaussian_blur(&self, sigma: f64) -> ImageGrid {
        if sigma <= 0.0 {
            return self.clone();
        }
        let data = gaussian_blur_raw(&self.data, self.width, self.height, sigma);
        Self {
            width: self.width,
            height: self.height,
            data,
            spacing_um: self.spacing_um,
        }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32)
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur over an arbitrary real-valued buffer.
pub(crate) fn gaussian_blur_raw(data: &[f32], width: usize, height: usize, sigma: f64) -> Vec<f32> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (width as isize, height as isize);
    let mut tmp = vec![0f32; data.len()];
    for y in 0..h {
        let row = &data[(y * w) as usize..((y + 1) * w) as usize];
        for x in 0..w {
            let mut acc = 0f32;
            for (i, kv) in k.iter().enumerate() {
                let xx = (x + i as isize - r).clamp(0, w - 1);
                acc += kv * row[xx as usize];
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0f32; data.len()];
    for y in 0..h {
        for (i, kv) in k.iter().enumerate() {
            let yy = (y + i as isize - r).clamp(0, h - 1);
            let src = &tmp[(yy * w) as usize..((yy + 1) * w) as usize];
            let dst = &mut out[(y * w) as usize..((y + 1) * w) as usize];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Resamples `moving` into a `target_shape` grid: output pixel `(x, y)`
/// takes the bilinear sample of `moving` at `a^-1 (x, y)`, or `fill` where
/// that falls outside `moving`.
pub fn warp_image(
    a: &Affine2<f64>,
    moving: &ImageGrid,
    target_shape: (usize, usize),
    fill: f32,
) -> Result<ImageGrid> {
    let (w, h) = target_shape;
    if w == 0 || h == 0 {
        return Err(Error::InvalidValue(format!(
            "target shape must be positive, got {w}x{h}"
        )));
    }
    let inv = a.invert()?;
    let mut vals = Vec::new();
    let mut mask = Vec::new();
    warp_sample_into(&inv, moving, w, h, &mut vals, &mut mask);
    let fill = fill.clamp(0.0, 1.0);
    for (v, m) in vals.iter_mut().zip(&mask) {
        if !m {
            *v = fill;
        }
    }
    Ok(ImageGrid {
        width: w,
        height: h,
        data: vals,
        spacing_um: moving.spacing_um,
    })
}

/// Fills `vals`/`mask` with samples of `moving` at `inv (x, y)` for every
/// pixel of a `w` x `h` grid. Invalid samples get value 0 and mask `false`.
pub(crate) fn warp_sample_into(
    inv: &Affine2<f64>,
    moving: &ImageGrid,
    w: usize,
    h: usize,
    vals: &mut Vec<f32>,
    mask: &mut Vec<bool>,
) {
    vals.clear();
    mask.clear();
    vals.reserve(w * h);
    mask.reserve(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = inv.apply_point(Point2::new(x as f64, y as f64));
            match moving.sample_bilinear(p.x, p.y) {
                Some(v) => {
                    vals.push(v);
                    mask.push(true);
                }
                None => {
                    vals.push(0.0);
                    mask.push(false);
                }
            }
        }
    }
}
