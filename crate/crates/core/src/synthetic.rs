//! Tissue-like phantoms with known geometry: textured tissue (optionally a
//! thin needle-biopsy strip), glomerulus-like discs, simulated stains,
//! planted affine motion between sections, occlusion and noise.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Affine2, ImageGrid, Point2};
use crate::metrics::{transform_box, write_annotations, AnnotationRecord, BoundingBox};
use crate::pipeline::{SectionEntry, SeriesManifest, StainLabel};
use crate::propagation::{propagate, select_middle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub blob_count: usize,
    /// Range of disc radii in pixels.
    pub blob_radius: (f64, f64),
    pub texture_amplitude: f64,
    /// Small bright dots scattered through the tissue outside the discs.
    pub nucleus_count: usize,
    /// Confine tissue to a thin horizontal strip (aspect ratio >= 4:1).
    pub needle_biopsy: bool,
    pub spacing_um: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 400,
            height: 200,
            blob_count: 5,
            blob_radius: (9.0, 13.0),
            texture_amplitude: 0.25,
            nucleus_count: 400,
            needle_biopsy: true,
            spacing_um: 1.0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::InvalidValue("phantom canvas must be at least 32x32".into()));
        }
        if !(self.blob_radius.0 > 0.0 && self.blob_radius.0 <= self.blob_radius.1) {
            return Err(Error::InvalidValue("blob radius range must be positive and ordered".into()));
        }
        if !(self.spacing_um > 0.0) {
            return Err(Error::InvalidValue("spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Smoothly interpolated lattice noise in `[-1, 1]`.
#[derive(Debug, Clone)]
struct ValueNoise {
    cell: f64,
    cols: usize,
    rows: usize,
    offset: (f64, f64),
    lattice: Vec<f32>,
}

impl ValueNoise {
    fn new(rng: &mut impl Rng, cell: f64, width: f64, height: f64) -> Self {
        // padded so transformed sample positions slightly off-canvas stay defined
        let pad = width.max(height);
        let cols = ((width + 2.0 * pad) / cell).ceil() as usize + 2;
        let rows = ((height + 2.0 * pad) / cell).ceil() as usize + 2;
        let lattice = (0..cols * rows).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        Self {
            cell,
            cols,
            rows,
            offset: (pad, pad),
            lattice,
        }
    }

    fn at(&self, x: f64, y: f64) -> f32 {
        let gx = ((x + self.offset.0) / self.cell).clamp(0.0, (self.cols - 2) as f64);
        let gy = ((y + self.offset.1) / self.cell).clamp(0.0, (self.rows - 2) as f64);
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let smooth = |t: f64| (t * t * (3.0 - 2.0 * t)) as f32;
        let (tx, ty) = (smooth(gx - ix as f64), smooth(gy - iy as f64));
        let v = |i: usize, j: usize| self.lattice[j * self.cols + i];
        let top = v(ix, iy) + (v(ix + 1, iy) - v(ix, iy)) * tx;
        let bottom = v(ix, iy + 1) + (v(ix + 1, iy + 1) - v(ix, iy + 1)) * tx;
        top + (bottom - top) * ty
    }
}

#[derive(Debug, Clone)]
struct Nucleus {
    center: Point2<f64>,
    radius: f64,
    strength: f32,
}

const NUCLEUS_CELL: f64 = 8.0;

#[derive(Debug, Clone)]
struct Blob {
    center: Point2<f64>,
    radius: f64,
    phase: f64,
}

const RIM_WIDTH: f64 = 2.5;
const TISSUE_BASE: f32 = 0.45;
const RIM_VALUE: f32 = 0.12;

/// Analytic phantom in section-0 coordinates.
#[derive(Debug, Clone)]
pub struct Phantom {
    spec: PhantomSpec,
    coarse: ValueNoise,
    fine: ValueNoise,
    blob_noise: ValueNoise,
    center: Point2<f64>,
    half_length: f64,
    half_thickness: f64,
    wave: (f64, f64, f64),
    blobs: Vec<Blob>,
    nuclei: Vec<Nucleus>,
    /// Nucleus indices bucketed by `NUCLEUS_CELL` squares over the canvas.
    nucleus_grid: Vec<Vec<usize>>,
    grid_cols: usize,
}

impl Phantom {
    pub fn new(spec: &PhantomSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (w, h) = (spec.width as f64, spec.height as f64);
        let coarse = ValueNoise::new(&mut rng, 11.0, w, h);
        let fine = ValueNoise::new(&mut rng, 4.5, w, h);
        let blob_noise = ValueNoise::new(&mut rng, 3.0, w, h);
        let center = Point2::new((w - 1.0) / 2.0, (h - 1.0) / 2.0);
        let (half_length, half_thickness) = if spec.needle_biopsy {
            (0.40 * w, (0.18 * h).min(0.40 * w / 4.4))
        } else {
            (0.42 * w, 0.40 * h)
        };
        let wave = (
            rng.random_range(0.06..0.12),
            rng.random_range(0.8..1.6) * std::f64::consts::PI / half_length,
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let mut phantom = Self {
            spec: spec.clone(),
            coarse,
            fine,
            blob_noise,
            center,
            half_length,
            half_thickness,
            wave,
            blobs: Vec::new(),
            nuclei: Vec::new(),
            nucleus_grid: Vec::new(),
            grid_cols: 0,
        };
        phantom.place_blobs(&mut rng)?;
        phantom.place_nuclei(&mut rng);
        Ok(phantom)
    }

    fn place_blobs(&mut self, rng: &mut impl Rng) -> Result<()> {
        let (rmin, rmax) = self.spec.blob_radius;
        for _ in 0..self.spec.blob_count {
            let mut placed = false;
            for _ in 0..10_000 {
                let r = rng.random_range(rmin..=rmax);
                let p = Point2::new(
                    self.center.x + rng.random_range(-1.0..1.0) * (self.half_length - self.half_thickness),
                    self.center.y + rng.random_range(-1.0..1.0) * self.half_thickness,
                );
                // fully inside tissue with a margin, and apart from other blobs
                if self.tissue_depth(p) < r + RIM_WIDTH + 3.0 {
                    continue;
                }
                if self
                    .blobs
                    .iter()
                    .any(|b| b.center.distance(p) < b.radius + r + 2.0 * RIM_WIDTH + 4.0)
                {
                    continue;
                }
                self.blobs.push(Blob {
                    center: p,
                    radius: r,
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                });
                placed = true;
                break;
            }
            if !placed {
                return Err(Error::InvalidValue(format!(
                    "cannot fit {} blobs of radius {:?} into the tissue",
                    self.spec.blob_count, self.spec.blob_radius
                )));
            }
        }
        Ok(())
    }

    fn place_nuclei(&mut self, rng: &mut impl Rng) {
        let (w, h) = (self.spec.width as f64, self.spec.height as f64);
        for _ in 0..self.spec.nucleus_count {
            for _ in 0..1000 {
                let p = Point2::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
                let r = rng.random_range(2.2..3.8);
                if self.tissue_depth(p) < r + 1.0 {
                    continue;
                }
                if self.blobs.iter().any(|b| b.center.distance(p) < b.radius + RIM_WIDTH + r + 1.0) {
                    continue;
                }
                self.nuclei.push(Nucleus {
                    center: p,
                    radius: r,
                    strength: rng.random_range(0.35..0.55),
                });
                break;
            }
        }
        self.grid_cols = (w / NUCLEUS_CELL).ceil() as usize;
        let rows = (h / NUCLEUS_CELL).ceil() as usize;
        self.nucleus_grid = vec![Vec::new(); self.grid_cols * rows];
        for (k, n) in self.nuclei.iter().enumerate() {
            let (x0, x1) = (n.center.x - n.radius, n.center.x + n.radius);
            let (y0, y1) = (n.center.y - n.radius, n.center.y + n.radius);
            let cx = |x: f64| ((x / NUCLEUS_CELL).floor().max(0.0) as usize).min(self.grid_cols - 1);
            let cy = |y: f64| ((y / NUCLEUS_CELL).floor().max(0.0) as usize).min(rows - 1);
            for gy in cy(y0)..=cy(y1) {
                for gx in cx(x0)..=cx(x1) {
                    self.nucleus_grid[gy * self.grid_cols + gx].push(k);
                }
            }
        }
    }

    fn nucleus_at(&self, p: Point2<f64>) -> f32 {
        if self.nuclei.is_empty() || p.x < 0.0 || p.y < 0.0 {
            return 0.0;
        }
        let (gx, gy) = ((p.x / NUCLEUS_CELL) as usize, (p.y / NUCLEUS_CELL) as usize);
        if gx >= self.grid_cols || gy * self.grid_cols + gx >= self.nucleus_grid.len() {
            return 0.0;
        }
        self.nucleus_grid[gy * self.grid_cols + gx]
            .iter()
            .map(|&k| {
                let n = &self.nuclei[k];
                let q = n.center.distance(p) / n.radius;
                if q < 1.0 {
                    n.strength * (1.0 - q * q) as f32
                } else {
                    0.0
                }
            })
            .fold(0.0, f32::max)
    }

    /// Signed distance (positive inside) to the tissue boundary, approximately.
    fn tissue_depth(&self, p: Point2<f64>) -> f64 {
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        if self.spec.needle_biopsy {
            let (amp, freq, phase) = self.wave;
            let local = self.half_thickness * (1.0 + amp * (freq * dx + phase).sin());
            // stadium: rounded ends of radius `local`
            let reach = self.half_length - local;
            let ex = (dx.abs() - reach).max(0.0);
            local - ex.hypot(dy)
        } else {
            let (a, b) = (self.half_length, self.half_thickness);
            let k = ((dx / a).powi(2) + (dy / b).powi(2)).sqrt();
            (1.0 - k) * a.min(b)
        }
    }

    /// Tissue density in `[0, 1]` at a section-0 position.
    pub fn value(&self, x: f64, y: f64) -> f32 {
        let p = Point2::new(x, y);
        for b in &self.blobs {
            let rho = b.center.distance(p);
            if rho <= b.radius {
                let radial = 0.5 + 0.5 * (3.0 * std::f64::consts::PI * rho / b.radius + b.phase).cos();
                return (0.78 + 0.2 * self.blob_noise.at(x, y) * radial as f32).clamp(0.0, 1.0);
            }
            if rho <= b.radius + RIM_WIDTH {
                return RIM_VALUE;
            }
        }
        let alpha = (self.tissue_depth(p) + 0.5).clamp(0.0, 1.0) as f32;
        if alpha == 0.0 {
            return 0.0;
        }
        let amp = self.spec.texture_amplitude as f32;
        let texture = 0.6 * self.coarse.at(x, y) + 0.4 * self.fine.at(x, y);
        alpha * (TISSUE_BASE + amp * texture + self.nucleus_at(p)).clamp(0.05, 1.0)
    }

    /// Renders the phantom as seen through `geometry` (section-0 coordinates
    /// to output coordinates).
    pub fn render(&self, geometry: &Affine2<f64>) -> Result<ImageGrid> {
        let inv = geometry.invert()?;
        Ok(ImageGrid::from_fn(
            self.spec.width,
            self.spec.height,
            self.spec.spacing_um,
            |x, y| {
                let p = inv.apply_point(Point2::new(x as f64, y as f64));
                self.value(p.x, p.y)
            },
        ))
    }

    /// Tight boxes of the discs, section-0 coordinates.
    pub fn blob_boxes(&self) -> Vec<BoundingBox<f64>> {
        self.blobs
            .iter()
            .map(|b| BoundingBox {
                x_min: b.center.x - b.radius,
                y_min: b.center.y - b.radius,
                x_max: b.center.x + b.radius,
                y_max: b.center.y + b.radius,
            })
            .collect()
    }
}

/// Renders a phantom and its exact blob boxes.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(ImageGrid, Vec<BoundingBox<f64>>)> {
    let phantom = Phantom::new(spec)?;
    Ok((phantom.render(&Affine2::identity())?, phantom.blob_boxes()))
}

/// Strictly increasing map of `[0, 1]` onto itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransferCurve {
    Linear,
    Gamma { gamma: f64 },
    Sigmoid { gain: f64, midpoint: f64 },
}

impl TransferCurve {
    pub fn apply(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        match *self {
            TransferCurve::Linear => v,
            TransferCurve::Gamma { gamma } => v.powf(gamma),
            TransferCurve::Sigmoid { gain, midpoint } => {
                let s = |t: f64| 1.0 / (1.0 + (-gain * (t - midpoint)).exp());
                (s(v) - s(0.0)) / (s(1.0) - s(0.0))
            }
        }
    }
}

/// How a stain turns tissue density into color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StainProfile {
    pub name: String,
    pub curve: TransferCurve,
    /// Color of fully stained tissue, each channel in `[0, 1]`.
    pub hue: [f64; 3],
}

impl StainProfile {
    pub fn for_label(label: StainLabel) -> Self {
        use TransferCurve::*;
        let (curve, hue) = match label {
            StainLabel::HE => (Linear, [0.55, 0.2, 0.55]),
            StainLabel::PAS => (Gamma { gamma: 0.7 }, [0.75, 0.1, 0.55]),
            StainLabel::JMS => (Gamma { gamma: 1.5 }, [0.2, 0.2, 0.2]),
            StainLabel::C4d => (Sigmoid { gain: 6.0, midpoint: 0.5 }, [0.55, 0.35, 0.2]),
            StainLabel::CD45 => (Gamma { gamma: 1.8 }, [0.5, 0.3, 0.15]),
            StainLabel::EVG => (Sigmoid { gain: 8.0, midpoint: 0.4 }, [0.35, 0.15, 0.3]),
            StainLabel::PV => (Gamma { gamma: 0.55 }, [0.3, 0.35, 0.7]),
            StainLabel::MSB => (Sigmoid { gain: 5.0, midpoint: 0.6 }, [0.7, 0.15, 0.25]),
            StainLabel::Other => (Linear, [0.4, 0.4, 0.4]),
        };
        Self {
            name: label.as_str().to_string(),
            curve,
            hue,
        }
    }

    /// Brightfield rendering: unstained background is white.
    pub fn render(&self, density: &ImageGrid, noise_sigma: f64, rng: &mut impl Rng) -> RgbImage {
        let normal = Normal::new(0.0, noise_sigma.max(0.0)).unwrap();
        RgbImage::from_fn(density.width() as u32, density.height() as u32, |x, y| {
            let mut c = self.curve.apply(density.get(x as usize, y as usize) as f64);
            if noise_sigma > 0.0 {
                c += normal.sample(rng);
            }
            let c = c.clamp(0.0, 1.0);
            let ch = |k: usize| (255.0 * (1.0 - 0.92 * c * (1.0 - self.hue[k]))).round() as u8;
            Rgb([ch(0), ch(1), ch(2)])
        })
    }
}

/// Bounds for randomly drawn section-to-section motion, about the canvas center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedRange {
    pub max_rotation_deg: f64,
    /// Fraction of the canvas width.
    pub max_translation_frac: f64,
    pub scale: (f64, f64),
}

impl Default for PlantedRange {
    fn default() -> Self {
        Self {
            max_rotation_deg: 15.0,
            max_translation_frac: 0.08,
            scale: (0.92, 1.08),
        }
    }
}

pub fn random_planted(rng: &mut impl Rng, range: &PlantedRange, width: usize, height: usize) -> Affine2<f64> {
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let theta = rng.random_range(-range.max_rotation_deg..=range.max_rotation_deg).to_radians();
    let t = range.max_translation_frac * width as f64;
    let (tx, ty) = (rng.random_range(-t..=t), rng.random_range(-t..=t));
    let (lo, hi) = range.scale;
    let (sx, sy) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
    Affine2::translation(-cx, -cy)
        .then(&Affine2::scale(sx, sy))
        .then(&Affine2::rotation(theta))
        .then(&Affine2::translation(cx + tx, cy + ty))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SeriesArtifacts {
    /// Fraction of tissue area removed per section, in `[0, 0.5]`.
    pub occlusion_fraction: f64,
    pub noise_sigma: f64,
    /// One per section, or a single profile reused for all; empty means H&E.
    pub stains: Vec<StainProfile>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSeries {
    pub sections: Vec<RgbImage>,
    /// Stain names actually used per section.
    pub stain_names: Vec<String>,
    /// Section `t` geometry relative to section 0.
    pub geometry: Vec<Affine2<f64>>,
    /// As given: maps section `t` coordinates to section `t + 1`.
    pub planted: Vec<Affine2<f64>>,
    /// Registration convention: maps section `t + 1` into section `t`.
    pub ground_truth_pairs: Vec<Affine2<f64>>,
    /// `boxes[t][k]` is blob `k` in section `t`.
    pub boxes: Vec<Vec<BoundingBox<f64>>>,
}

/// Renders `planted.len() + 1` sections, section `t + 1` being section `t`'s
/// geometry moved by `planted[t]`.
pub fn make_series(
    spec: &PhantomSpec,
    sections: usize,
    planted: &[Affine2<f64>],
    artifacts: &SeriesArtifacts,
) -> Result<SyntheticSeries> {
    if sections == 0 {
        return Err(Error::EmptySeries);
    }
    if planted.len() + 1 != sections {
        return Err(Error::LengthMismatch {
            what: format!("{} sections need {} planted transforms, got {}", sections, sections - 1, planted.len()),
        });
    }
    if !(0.0..=0.5).contains(&artifacts.occlusion_fraction) {
        return Err(Error::InvalidValue(format!(
            "occlusion_fraction must lie in [0, 0.5], got {}",
            artifacts.occlusion_fraction
        )));
    }
    let stains = match artifacts.stains.len() {
        0 => vec![StainProfile::for_label(StainLabel::HE); sections],
        1 => vec![artifacts.stains[0].clone(); sections],
        n if n == sections => artifacts.stains.clone(),
        n => {
            return Err(Error::LengthMismatch {
                what: format!("{n} stain profiles for {sections} sections"),
            })
        }
    };

    let phantom = Phantom::new(spec)?;
    let mut geometry = vec![Affine2::identity()];
    let mut boxes = vec![phantom.blob_boxes()];
    for (t, p) in planted.iter().enumerate() {
        geometry.push(geometry[t].then(p));
        let next = boxes[t].iter().map(|b| transform_box(p, b)).collect();
        boxes.push(next);
    }
    let ground_truth_pairs = planted.iter().map(|p| p.invert()).collect::<Result<Vec<_>>>()?;

    let mut images = Vec::with_capacity(sections);
    for (t, g) in geometry.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(t as u64 + 1)));
        let mut density = phantom.render(g)?;
        if artifacts.occlusion_fraction > 0.0 {
            density = occlude(&density, artifacts.occlusion_fraction, &mut rng);
        }
        images.push(stains[t].render(&density, artifacts.noise_sigma, &mut rng));
    }
    Ok(SyntheticSeries {
        sections: images,
        stain_names: stains.iter().map(|s| s.name.clone()).collect(),
        geometry,
        planted: planted.to_vec(),
        ground_truth_pairs,
        boxes,
    })
}

/// Blanks random elliptical patches of tissue until `fraction` of the
/// tissue pixels are gone.
fn occlude(density: &ImageGrid, fraction: f64, rng: &mut impl Rng) -> ImageGrid {
    let (w, h) = density.shape();
    let tissue: Vec<usize> = (0..w * h).filter(|&i| density.data()[i] > 0.02).collect();
    if tissue.is_empty() {
        return density.clone();
    }
    let target = (fraction * tissue.len() as f64).ceil() as usize;
    let mut removed = vec![false; w * h];
    let mut count = 0;
    let scale = (w.min(h) as f64) * 0.12;
    for _ in 0..1000 {
        if count >= target {
            break;
        }
        let c = tissue[rng.random_range(0..tissue.len())];
        let (cx, cy) = ((c % w) as f64, (c / w) as f64);
        let (a, b) = (rng.random_range(0.8..2.5) * scale, rng.random_range(0.6..1.5) * scale);
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (s, co) = theta.sin_cos();
        let ext = a.max(b).ceil() as isize;
        for y in (cy as isize - ext).max(0)..(cy as isize + ext + 1).min(h as isize) {
            for x in (cx as isize - ext).max(0)..(cx as isize + ext + 1).min(w as isize) {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let (u, v) = (co * dx + s * dy, -s * dx + co * dy);
                if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                    let i = y as usize * w + x as usize;
                    if !removed[i] {
                        removed[i] = true;
                        if density.data()[i] > 0.02 {
                            count += 1;
                        }
                    }
                }
            }
        }
    }
    ImageGrid::from_fn(w, h, density.spacing_um(), |x, y| {
        if removed[y * w + x] {
            0.0
        } else {
            density.get(x, y)
        }
    })
}

/// Everything needed to generate a ready-to-run synthetic case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub case_id: String,
    pub phantom: PhantomSpec,
    pub sections: usize,
    pub planted: PlantedRange,
    pub occlusion_fraction: f64,
    pub noise_sigma: f64,
    /// Stains cycled over the sections.
    pub stains: Vec<StainLabel>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            case_id: "synthetic".into(),
            phantom: PhantomSpec::default(),
            sections: 8,
            // consecutive sections drift; keep each step small so the
            // series stays inside the canvas
            planted: PlantedRange {
                max_rotation_deg: 3.0,
                max_translation_frac: 0.02,
                scale: (0.98, 1.02),
            },
            occlusion_fraction: 0.0,
            noise_sigma: 0.01,
            stains: vec![StainLabel::HE, StainLabel::PAS, StainLabel::JMS, StainLabel::C4d],
        }
    }
}

/// Draws the planted motion from the phantom seed and renders the series.
pub fn generate_series(cfg: &SynthConfig) -> Result<SyntheticSeries> {
    if cfg.sections == 0 {
        return Err(Error::EmptySeries);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.phantom.seed.wrapping_add(0x5eed));
    let planted: Vec<_> = (1..cfg.sections)
        .map(|_| random_planted(&mut rng, &cfg.planted, cfg.phantom.width, cfg.phantom.height))
        .collect();
    let stains = if cfg.stains.is_empty() {
        Vec::new()
    } else {
        (0..cfg.sections)
            .map(|t| StainProfile::for_label(cfg.stains[t % cfg.stains.len()]))
            .collect()
    };
    let artifacts = SeriesArtifacts {
        occlusion_fraction: cfg.occlusion_fraction,
        noise_sigma: cfg.noise_sigma,
        stains,
    };
    make_series(&cfg.phantom, cfg.sections, &planted, &artifacts)
}

/// Ground truth written next to a synthetic case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub case_id: String,
    pub section_ids: Vec<String>,
    pub middle_index: usize,
    /// Entry `t` maps section `t + 1` into section `t`.
    pub pair_transforms: Vec<Affine2<f64>>,
    /// Entry `t` maps section `t` into the middle section.
    pub global_transforms: Vec<Affine2<f64>>,
}

impl SyntheticSeries {
    pub fn section_ids(&self) -> Vec<String> {
        (0..self.sections.len()).map(|t| format!("S{t:02}")).collect()
    }

    pub fn annotations(&self, case_id: &str) -> Vec<AnnotationRecord> {
        let ids = self.section_ids();
        let mut out = Vec::new();
        for (t, boxes) in self.boxes.iter().enumerate() {
            for (k, b) in boxes.iter().enumerate() {
                out.push(AnnotationRecord {
                    case_id: case_id.to_string(),
                    section_id: ids[t].clone(),
                    glomerulus_id: format!("G{k:02}"),
                    x_min: b.x_min,
                    y_min: b.y_min,
                    x_max: b.x_max,
                    y_max: b.y_max,
                });
            }
        }
        out
    }

    pub fn ground_truth(&self, case_id: &str) -> Result<GroundTruth> {
        let middle_index = select_middle(self.sections.len())?;
        Ok(GroundTruth {
            case_id: case_id.to_string(),
            section_ids: self.section_ids(),
            middle_index,
            pair_transforms: self.ground_truth_pairs.clone(),
            global_transforms: propagate(&self.ground_truth_pairs, middle_index)?,
        })
    }

    /// Writes section PNGs, `manifest.json`, `annotations.csv` and
    /// `ground_truth.json` into `dir`, returning the manifest path.
    pub fn write_bundle(&self, case_id: &str, spacing_um: f64, dir: &Path) -> Result<PathBuf> {
        let write_err = |path: &Path, e: &dyn std::fmt::Display| Error::Write {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(|e| write_err(dir, &e))?;
        let ids = self.section_ids();
        let mut sections = Vec::with_capacity(ids.len());
        for (t, img) in self.sections.iter().enumerate() {
            let name = format!("section_{t:02}.png");
            let path = dir.join(&name);
            img.save(&path).map_err(|e| write_err(&path, &e))?;
            let stain_label = StainLabel::ALL
                .into_iter()
                .find(|l| l.as_str() == self.stain_names[t])
                .unwrap_or(StainLabel::Other);
            sections.push(SectionEntry {
                section_id: ids[t].clone(),
                image_path: PathBuf::from(name),
                stain_label,
                spacing_um,
            });
        }
        let manifest = SeriesManifest {
            case_id: case_id.to_string(),
            sections,
            annotations_path: Some(PathBuf::from("annotations.csv")),
        };

        let path = dir.join("annotations.csv");
        let file = std::fs::File::create(&path).map_err(|e| write_err(&path, &e))?;
        write_annotations(&self.annotations(case_id), file)?;

        let path = dir.join("ground_truth.json");
        let text = serde_json::to_string_pretty(&self.ground_truth(case_id)?).map_err(|e| write_err(&path, &e))?;
        std::fs::write(&path, text + "\n").map_err(|e| write_err(&path, &e))?;

        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| write_err(&path, &e))?;
        std::fs::write(&path, text + "\n").map_err(|e| write_err(&path, &e))?;
        Ok(path)
    }
}
