#![allow(dead_code)]

use image::DynamicImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sectionalign::geometry::Affine2;
use sectionalign::pipeline::{preprocess, PreprocessConfig};
use sectionalign::synthetic::{make_series, random_planted, PhantomSpec, PlantedRange, SeriesArtifacts, SyntheticSeries};
use sectionalign::ImageGrid;

pub fn gray(img: &image::RgbImage) -> ImageGrid {
    preprocess(
        &DynamicImage::ImageRgb8(img.clone()),
        &PreprocessConfig::default(),
        1024,
        1.0,
    )
    .unwrap()
    .image
}

/// Two-section phantom with a random planted motion; returns the series and
/// both preprocessed sections.
pub fn phantom_pair(seed: u64, range: &PlantedRange, artifacts: &SeriesArtifacts) -> (SyntheticSeries, ImageGrid, ImageGrid) {
    let spec = PhantomSpec {
        seed,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let planted = random_planted(&mut rng, range, spec.width, spec.height);
    let series = make_series(&spec, 2, &[planted], artifacts).unwrap();
    let fixed = gray(&series.sections[0]);
    let moving = gray(&series.sections[1]);
    (series, fixed, moving)
}

/// Two-section phantom moved by an explicit transform (section-0 to section-1 coordinates).
pub fn phantom_pair_with(seed: u64, planted: Affine2<f64>, artifacts: &SeriesArtifacts) -> (SyntheticSeries, ImageGrid, ImageGrid) {
    let spec = PhantomSpec {
        seed,
        ..Default::default()
    };
    let series = make_series(&spec, 2, &[planted], artifacts).unwrap();
    let fixed = gray(&series.sections[0]);
    let moving = gray(&series.sections[1]);
    (series, fixed, moving)
}
