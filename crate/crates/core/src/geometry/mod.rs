//! Homogeneous 2D affine algebra, point mapping, image resampling and
//! least-squares affine fitting.
//!
//! Transforms map pixel coordinates at a working resolution to pixel
//! coordinates in a target frame. Pixel `(i, j)` has its center at the
//! continuous coordinate `(i, j)`.

mod affine;
mod fit;
pub(crate) mod image;

pub use affine::{compose, Affine2, Point2, DEFAULT_SINGULARITY_THRESHOLD};
pub use fit::{fit_affine_least_squares, fit_affine_least_squares_with_cap, residuals, DEFAULT_CONDITION_CAP};
pub use image::{warp_image, ImageGrid};

pub(crate) use image::warp_sample_into;

/// Mean displacement between where two transforms send the four corners of
/// a `width` x `height` image.
pub fn corner_error(a: &Affine2<f64>, b: &Affine2<f64>, width: usize, height: usize) -> f64 {
    let (w, h) = ((width.max(1) - 1) as f64, (height.max(1) - 1) as f64);
    let corners = [
        Point2::new(0.0, 0.0),
        Point2::new(w, 0.0),
        Point2::new(0.0, h),
        Point2::new(w, h),
    ];
    corners
        .iter()
        .map(|&c| a.apply_point(c).distance(b.apply_point(c)))
        .sum::<f64>()
        / 4.0
}
