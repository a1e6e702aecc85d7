use crate::geometry::image::gaussian_blur_raw;
use crate::geometry::{ImageGrid, Point2};

use super::{FeatureConfig, Keypoint};

const PATCH_SIDE: usize = 8;
const PATCH_STRIDE: f64 = 4.0;
/// Smoothing matched to the 4x patch stride.
const DESCRIPTOR_SIGMA: f64 = 2.0;
const HARRIS_K: f32 = 0.04;
const ORIENTATION_BINS: usize = 36;
const ORIENTATION_RADIUS: isize = 9;

pub const DESCRIPTOR_LEN: usize = PATCH_SIDE * PATCH_SIDE;

/// Distance from a keypoint to the farthest descriptor sample along one axis.
fn patch_reach() -> f64 {
    (PATCH_SIDE as f64 - 1.0) / 2.0 * PATCH_STRIDE
}

/// Harris corners with non-maximum suppression, strongest first.
pub fn detect_keypoints(image: &ImageGrid, cfg: &FeatureConfig) -> Vec<Keypoint> {
    let (w, h) = image.shape();
    let reach = patch_reach();
    let margin = reach.ceil() as usize + 1;
    if w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }

    let smooth = gaussian_blur_raw(image.data(), w, h, cfg.smoothing_sigma);
    let mut ixx = vec![0f32; w * h];
    let mut iyy = vec![0f32; w * h];
    let mut ixy = vec![0f32; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let gx = 0.5 * (smooth[i + 1] - smooth[i - 1]);
            let gy = 0.5 * (smooth[i + w] - smooth[i - w]);
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let ixx = gaussian_blur_raw(&ixx, w, h, cfg.integration_sigma);
    let iyy = gaussian_blur_raw(&iyy, w, h, cfg.integration_sigma);
    let ixy = gaussian_blur_raw(&ixy, w, h, cfg.integration_sigma);
    let response: Vec<f32> = (0..w * h)
        .map(|i| {
            let tr = ixx[i] + iyy[i];
            ixx[i] * iyy[i] - ixy[i] * ixy[i] - HARRIS_K * tr * tr
        })
        .collect();

    let peak = response.iter().copied().fold(0f32, f32::max);
    if peak <= 0.0 {
        return Vec::new();
    }
    let threshold = (cfg.detection_threshold as f32 * peak).max(f32::MIN_POSITIVE);

    let r = cfg.nms_radius as isize;
    let mut candidates = Vec::new();
    for y in margin..h - margin {
        'px: for x in margin..w - margin {
            let v = response[y * w + x];
            if v < threshold {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                        continue;
                    }
                    let o = response[yy as usize * w + xx as usize];
                    // ties resolved toward the earlier raster position
                    let earlier = (yy, xx) < (y as isize, x as isize);
                    if o > v || (o == v && earlier) {
                        continue 'px;
                    }
                }
            }
            candidates.push((v, x, y));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));

    let desc_img = ImageGrid::from_fn(w, h, image.spacing_um(), |x, y| image.get(x, y))
        .gaussian_blur(DESCRIPTOR_SIGMA);
    let mut out = Vec::with_capacity(candidates.len().min(cfg.max_keypoints));
    for (v, x, y) in candidates {
        if out.len() >= cfg.max_keypoints {
            break;
        }
        let position = Point2::new(x as f64, y as f64);
        let angle = dominant_orientation(&desc_img, x, y);
        if let Some(descriptor) = describe(&desc_img, position, angle) {
            out.push(Keypoint {
                position,
                response: v as f64,
                descriptor,
            });
        }
    }
    out
}

/// Peak of the magnitude-weighted gradient-direction histogram around a
/// pixel, in radians. Aligning patches to it makes descriptors rotation
/// invariant.
fn dominant_orientation(img: &ImageGrid, x: usize, y: usize) -> f64 {
    let (w, h) = img.shape();
    let sigma2 = 2.0 * (ORIENTATION_RADIUS as f64 / 2.0).powi(2);
    let mut hist = [0f64; ORIENTATION_BINS];
    for dy in -ORIENTATION_RADIUS..=ORIENTATION_RADIUS {
        for dx in -ORIENTATION_RADIUS..=ORIENTATION_RADIUS {
            let d2 = (dx * dx + dy * dy) as f64;
            if d2 > (ORIENTATION_RADIUS * ORIENTATION_RADIUS) as f64 {
                continue;
            }
            let (xx, yy) = (x as isize + dx, y as isize + dy);
            if xx < 1 || yy < 1 || xx >= w as isize - 1 || yy >= h as isize - 1 {
                continue;
            }
            let (xx, yy) = (xx as usize, yy as usize);
            let gx = (img.get(xx + 1, yy) - img.get(xx - 1, yy)) as f64;
            let gy = (img.get(xx, yy + 1) - img.get(xx, yy - 1)) as f64;
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let a = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
            let bin = ((a / std::f64::consts::TAU * ORIENTATION_BINS as f64) as usize) % ORIENTATION_BINS;
            hist[bin] += mag * (-d2 / sigma2).exp();
        }
    }
    for _ in 0..2 {
        let prev = hist;
        for b in 0..ORIENTATION_BINS {
            let l = prev[(b + ORIENTATION_BINS - 1) % ORIENTATION_BINS];
            let r = prev[(b + 1) % ORIENTATION_BINS];
            hist[b] = 0.25 * l + 0.5 * prev[b] + 0.25 * r;
        }
    }
    let mut best = 0;
    for b in 1..ORIENTATION_BINS {
        if hist[b] > hist[best] {
            best = b;
        }
    }
    let l = hist[(best + ORIENTATION_BINS - 1) % ORIENTATION_BINS];
    let r = hist[(best + 1) % ORIENTATION_BINS];
    let c = hist[best];
    let denom = l - 2.0 * c + r;
    let offset = if denom.abs() > 1e-12 { 0.5 * (l - r) / denom } else { 0.0 };
    (best as f64 + 0.5 + offset) * std::f64::consts::TAU / ORIENTATION_BINS as f64
}

/// Mean-subtracted, L2-normalized 8x8 patch sampled at stride 4 on a grid
/// rotated by `angle`. `None` for flat patches or patches leaving the image.
fn describe(img: &ImageGrid, at: Point2<f64>, angle: f64) -> Option<Vec<f32>> {
    let reach = patch_reach();
    let (s, c) = angle.sin_cos();
    let mut d = Vec::with_capacity(DESCRIPTOR_LEN);
    for j in 0..PATCH_SIDE {
        for i in 0..PATCH_SIDE {
            let u = -reach + i as f64 * PATCH_STRIDE;
            let v = -reach + j as f64 * PATCH_STRIDE;
            d.push(img.sample_bilinear(at.x + c * u - s * v, at.y + s * u + c * v)?);
        }
    }
    let mean = d.iter().sum::<f32>() / d.len() as f32;
    d.iter_mut().for_each(|v| *v -= mean);
    let norm = d.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm < 1e-6 {
        return None;
    }
    d.iter_mut().for_each(|v| *v /= norm);
    Some(d)
}
