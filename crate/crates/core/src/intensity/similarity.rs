use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;

/// Intensity similarity maximized by stage 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimilarityMetric {
    MutualInformation { bins: usize },
    CrossCorrelation,
}

impl Default for SimilarityMetric {
    fn default() -> Self {
        SimilarityMetric::MutualInformation { bins: 32 }
    }
}

impl SimilarityMetric {
    pub fn validate(&self) -> Result<()> {
        match self {
            SimilarityMetric::MutualInformation { bins } if *bins < 2 => Err(Error::InvalidValue(
                format!("mutual information needs at least 2 bins, got {bins}"),
            )),
            _ => Ok(()),
        }
    }

    /// Metric over paired samples where `mask` is set; `None` when undefined
    /// (empty overlap, or zero variance for correlation).
    pub(crate) fn evaluate_raw(&self, a: &[f32], b: &[f32], mask: Option<&[bool]>) -> Option<f64> {
        match *self {
            SimilarityMetric::MutualInformation { bins } => mi_raw(a, b, mask, bins),
            SimilarityMetric::CrossCorrelation => cc_raw(a, b, mask),
        }
    }
}

#[inline]
fn bin_of(v: f32, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f32) as usize).min(bins - 1)
}

fn check_inputs(a: &ImageGrid, b: &ImageGrid, mask: Option<&[bool]>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            a: a.shape(),
            b: b.shape(),
        });
    }
    if let Some(m) = mask {
        if m.len() != a.data().len() {
            return Err(Error::LengthMismatch {
                what: format!("mask has {} entries for {} pixels", m.len(), a.data().len()),
            });
        }
    }
    Ok(())
}

/// Mutual information (nats) of the joint equal-width histogram over `[0, 1]`,
/// counted over the pixels where `overlap_mask` is set (all pixels if `None`).
pub fn mutual_information(
    a: &ImageGrid,
    b: &ImageGrid,
    bins: usize,
    overlap_mask: Option<&[bool]>,
) -> Result<f64> {
    SimilarityMetric::MutualInformation { bins }.validate()?;
    check_inputs(a, b, overlap_mask)?;
    mi_raw(a.data(), b.data(), overlap_mask, bins).ok_or(Error::EmptyOverlap)
}

/// Shannon entropy (nats) of an image's marginal histogram.
pub fn entropy(image: &ImageGrid, bins: usize) -> f64 {
    let mut counts = vec![0u64; bins.max(1)];
    for &v in image.data() {
        counts[bin_of(v, bins.max(1))] += 1;
    }
    let n = image.data().len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub(crate) fn mi_raw(a: &[f32], b: &[f32], mask: Option<&[bool]>, bins: usize) -> Option<f64> {
    let mut joint = vec![0u32; bins * bins];
    let mut n = 0u64;
    match mask {
        Some(m) => {
            for ((&x, &y), _) in a.iter().zip(b).zip(m).filter(|(_, &m)| m) {
                joint[bin_of(x, bins) * bins + bin_of(y, bins)] += 1;
                n += 1;
            }
        }
        None => {
            for (&x, &y) in a.iter().zip(b) {
                joint[bin_of(x, bins) * bins + bin_of(y, bins)] += 1;
            }
            n = a.len() as u64;
        }
    }
    if n == 0 {
        return None;
    }
    let mut pa = vec![0u64; bins];
    let mut pb = vec![0u64; bins];
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j] as u64;
            pa[i] += c;
            pb[j] += c;
        }
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for i in 0..bins {
        if pa[i] == 0 {
            continue;
        }
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c == 0 {
                continue;
            }
            let c = c as f64;
            mi += c / nf * (c * nf / (pa[i] as f64 * pb[j] as f64)).ln();
        }
    }
    Some(mi)
}

/// Global Pearson correlation over the overlap.
pub fn cross_correlation(a: &ImageGrid, b: &ImageGrid, overlap_mask: Option<&[bool]>) -> Result<f64> {
    check_inputs(a, b, overlap_mask)?;
    if let Some(m) = overlap_mask {
        if !m.iter().any(|&v| v) {
            return Err(Error::EmptyOverlap);
        }
    }
    cc_raw(a.data(), b.data(), overlap_mask).ok_or(Error::DegenerateVariance)
}

pub(crate) fn cc_raw(a: &[f32], b: &[f32], mask: Option<&[bool]>) -> Option<f64> {
    let selected = |i: usize| mask.is_none_or(|m| m[i]);
    let (mut n, mut sa, mut sb) = (0f64, 0f64, 0f64);
    for i in (0..a.len()).filter(|&i| selected(i)) {
        n += 1.0;
        sa += a[i] as f64;
        sb += b[i] as f64;
    }
    if n == 0.0 {
        return None;
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut sab, mut saa, mut sbb) = (0f64, 0f64, 0f64);
    for i in (0..a.len()).filter(|&i| selected(i)) {
        let (x, y) = (a[i] as f64 - ma, b[i] as f64 - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    let denom = (saa * sbb).sqrt();
    if !(denom > 1e-300) || saa < 1e-18 * n || sbb < 1e-18 * n {
        return None;
    }
    Some((sab / denom).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn structured(w: usize, h: usize) -> ImageGrid {
        ImageGrid::from_fn(w, h, 1.0, |x, y| {
            let (fx, fy) = (x as f32 / w as f32, y as f32 / h as f32);
            (0.5 + 0.25 * (fx * 17.0).sin() + 0.2 * (fy * 11.0 + fx * 3.0).cos()).clamp(0.0, 1.0)
        })
    }

    fn noise(w: usize, h: usize, seed: u64) -> ImageGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageGrid::from_fn(w, h, 1.0, |_, _| rng.random::<f32>())
    }

    #[test]
    fn mi_of_self_is_entropy() {
        let img = structured(64, 48);
        let mi = mutual_information(&img, &img, 32, None).unwrap();
        assert!((mi - entropy(&img, 32)).abs() < 1e-9);
    }

    #[test]
    fn mi_with_constant_is_zero() {
        let img = structured(64, 48);
        let c = ImageGrid::filled(64, 48, 0.3, 1.0);
        assert!(mutual_information(&img, &c, 32, None).unwrap().abs() < 1e-9);
    }

    #[test]
    fn mi_of_independent_noise_is_small() {
        let a = noise(256, 256, 1);
        let b = noise(256, 256, 2);
        let mi = mutual_information(&a, &b, 32, None).unwrap();
        // finite-sample bias ~ (bins-1)^2 / (2N) = 0.0073
        assert!(mi <= 0.05, "{mi}");
        assert!(mi >= 0.0);
    }

    #[test]
    fn mi_errors() {
        let a = structured(10, 10);
        let b = structured(10, 11);
        assert!(matches!(
            mutual_information(&a, &b, 32, None),
            Err(Error::ShapeMismatch { .. })
        ));
        let mask = vec![false; 100];
        assert!(matches!(
            mutual_information(&a, &a, 32, Some(&mask)),
            Err(Error::EmptyOverlap)
        ));
        assert!(mutual_information(&a, &a, 1, None).is_err());
    }

    #[test]
    fn mi_respects_mask() {
        let a = structured(32, 32);
        let junk = noise(32, 32, 9);
        // b equals a on the left half only
        let b = ImageGrid::from_fn(32, 32, 1.0, |x, y| if x < 16 { a.get(x, y) } else { junk.get(x, y) });
        let mask: Vec<bool> = (0..32 * 32).map(|i| i % 32 < 16).collect();
        let left = ImageGrid::from_fn(16, 32, 1.0, |x, y| a.get(x, y));
        let mi = mutual_information(&a, &b, 16, Some(&mask)).unwrap();
        assert!((mi - entropy(&left, 16)).abs() < 1e-9);
    }

    #[test]
    fn cc_cases() {
        let img = structured(40, 30);
        let inv = ImageGrid::from_fn(40, 30, 1.0, |x, y| 1.0 - img.get(x, y));
        let lin = ImageGrid::from_fn(40, 30, 1.0, |x, y| 0.5 * img.get(x, y) + 0.2);
        assert!((cross_correlation(&img, &img, None).unwrap() - 1.0).abs() < 1e-9);
        assert!((cross_correlation(&img, &inv, None).unwrap() + 1.0).abs() < 1e-9);
        assert!((cross_correlation(&img, &lin, None).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cc_degenerate() {
        let img = structured(20, 20);
        let c = ImageGrid::filled(20, 20, 0.5, 1.0);
        assert!(matches!(
            cross_correlation(&img, &c, None),
            Err(Error::DegenerateVariance)
        ));
    }

    proptest::proptest! {
        #[test]
        fn mi_symmetric_and_nonnegative(s1 in 0u64..500, s2 in 0u64..500, bins in 2usize..40) {
            let a = noise(24, 24, s1);
            let b = ImageGrid::from_fn(24, 24, 1.0, |x, y| (a.get(x, y) * 0.5 + noise(24, 24, s2).get(x, y) * 0.5).min(1.0));
            let ab = mutual_information(&a, &b, bins, None).unwrap();
            let ba = mutual_information(&b, &a, bins, None).unwrap();
            proptest::prop_assert!((ab - ba).abs() <= 1e-12);
            proptest::prop_assert!(ab >= -1e-12);
        }
    }
}
