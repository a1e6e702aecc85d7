use crate::geometry::ImageGrid;

/// Smallest side length a coarsened level may have.
pub const MIN_LEVEL_SIDE: usize = 16;
const PRESMOOTH_SIGMA: f64 = 1.0;

/// Multi-resolution pyramid, coarsest level first.
///
/// Each coarsening blurs, then keeps every second pixel, so coarse pixel
/// `(i, j)` sits at fine coordinate `(2i, 2j)` and the pixel spacing doubles.
/// `levels` is clamped so that no level drops below [`MIN_LEVEL_SIDE`].
pub fn build_pyramid(image: &ImageGrid, levels: usize) -> Vec<ImageGrid> {
    let mut out = vec![image.clone()];
    while out.len() < levels.max(1) {
        let fine = out.last().unwrap();
        let (w, h) = (fine.width().div_ceil(2), fine.height().div_ceil(2));
        if w < MIN_LEVEL_SIDE || h < MIN_LEVEL_SIDE {
            break;
        }
        let blurred = fine.gaussian_blur(PRESMOOTH_SIGMA);
        let coarse = ImageGrid::from_fn(w, h, fine.spacing_um() * 2.0, |x, y| {
            blurred.get(2 * x, 2 * y)
        });
        out.push(coarse);
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(w: usize, h: usize) -> ImageGrid {
        ImageGrid::from_fn(w, h, 1.0, |x, y| {
            if (100..140).contains(&x) && (60..90).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Intensity-weighted centroid in physical units.
    fn centroid_um(img: &ImageGrid) -> (f64, f64) {
        let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
        for y in 0..img.height() {
            for x in 0..img.width() {
                let v = img.get(x, y) as f64;
                sx += v * x as f64;
                sy += v * y as f64;
                s += v;
            }
        }
        (sx / s * img.spacing_um(), sy / s * img.spacing_um())
    }

    #[test]
    fn single_level_is_original() {
        let img = square(64, 64);
        let p = build_pyramid(&img, 1);
        assert_eq!(p, vec![img]);
    }

    #[test]
    fn factor_two_schedule() {
        let p = build_pyramid(&square(256, 256), 3);
        let shapes: Vec<_> = p.iter().map(|l| l.shape()).collect();
        assert_eq!(shapes, vec![(64, 64), (128, 128), (256, 256)]);
        assert_eq!(p[0].spacing_um(), 4.0);
    }

    #[test]
    fn clamps_small_images() {
        let p = build_pyramid(&ImageGrid::filled(40, 40, 0.5, 1.0), 5);
        // 40 -> 20 -> (10 rejected)
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].shape(), (20, 20));
    }

    #[test]
    fn centroid_stable_across_levels() {
        let p = build_pyramid(&square(256, 256), 3);
        let coarse_px = p[0].spacing_um();
        let reference = centroid_um(p.last().unwrap());
        for level in &p {
            let c = centroid_um(level);
            assert!(
                (c.0 - reference.0).abs() <= coarse_px && (c.1 - reference.1).abs() <= coarse_px,
                "{c:?} vs {reference:?}"
            );
        }
    }
}
