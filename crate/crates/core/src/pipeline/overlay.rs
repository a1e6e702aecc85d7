use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::metrics::BoundingBox;

pub const STROKE_WIDTH: i64 = 2;
/// Middle-section (reference) boxes.
pub const YELLOW: Rgb<u8> = Rgb([255, 215, 0]);
/// Registered boxes from other sections.
pub const GREEN: Rgb<u8> = Rgb([0, 200, 60]);
pub const RED: Rgb<u8> = Rgb([230, 30, 30]);

/// Copy of `image` with each box stroked inward from its rounded edges.
/// Boxes reaching outside the frame are clipped.
pub fn draw_boxes(image: &RgbImage, boxes: &[(BoundingBox<f64>, Rgb<u8>)]) -> RgbImage {
    let mut out = image.clone();
    let (w, h) = (out.width() as i64, out.height() as i64);
    let mut put = |x: i64, y: i64, c: Rgb<u8>| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            out.put_pixel(x as u32, y as u32, c);
        }
    };
    for (b, color) in boxes {
        if ![b.x_min, b.y_min, b.x_max, b.y_max].iter().all(|v| v.is_finite()) {
            continue;
        }
        let clamp = |v: f64| v.round().clamp(-1e6, 1e6) as i64;
        let (x0, y0, x1, y1) = (clamp(b.x_min), clamp(b.y_min), clamp(b.x_max), clamp(b.y_max));
        // only the visible span is walked, so huge boxes stay cheap
        let (xs, xe) = (x0.max(-1), x1.min(w));
        let (ys, ye) = (y0.max(-1), y1.min(h));
        for k in 0..STROKE_WIDTH {
            for x in xs..=xe {
                put(x, y0 + k, *color);
                put(x, y1 - k, *color);
            }
            for y in ys..=ye {
                put(x0 + k, y, *color);
                put(x1 - k, y, *color);
            }
        }
    }
    out
}

pub fn render_overlay(image: &RgbImage, boxes: &[(BoundingBox<f64>, Rgb<u8>)], path: &Path) -> Result<()> {
    save_rgb(&draw_boxes(image, boxes), path)
}

/// Small crosses at each point, clipped to the frame.
pub fn draw_points(image: &mut RgbImage, points: &[Point2<f64>], color: Rgb<u8>) {
    let (w, h) = (image.width() as i64, image.height() as i64);
    for p in points {
        if !(p.x.is_finite() && p.y.is_finite()) {
            continue;
        }
        let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
        for d in -2..=2 {
            for (x, y) in [(cx + d, cy), (cx, cy + d)] {
                if (0..w).contains(&x) && (0..h).contains(&y) {
                    image.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
}

pub(crate) fn save_rgb(image: &RgbImage, path: &Path) -> Result<()> {
    image.save(path).map_err(|e| Error::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
