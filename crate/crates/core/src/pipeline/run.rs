use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::PipelineConfig;
use super::manifest::SeriesManifest;
use super::overlay::{draw_boxes, draw_points, save_rgb, GREEN, RED, YELLOW};
use super::pair::{register_pair, PairOutcome};
use super::preprocess::{preprocess, raw_to_working, to_gray8, Preprocessed};
use crate::error::{Error, Result};
use crate::geometry::{warp_image, Affine2, ImageGrid};
use crate::intensity::write_trace_csv;
use crate::metrics::{
    evaluate_series, read_annotations, tracks_from_annotations, transform_box, GlomerulusTrack, MetricsReport,
};
use crate::propagation::{assemble_series, SectionInfo, SeriesRegistration};

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub preprocess_ms: f64,
    pub register_ms: f64,
    pub propagate_ms: f64,
    pub metrics_ms: f64,
}

/// Everything a run produced, before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub registration: SeriesRegistration,
    pub preprocessed: Vec<Preprocessed>,
    pub pairs: Vec<PairOutcome>,
    /// Tracks in working coordinates, when the manifest names annotations.
    pub tracks: Option<Vec<GlomerulusTrack>>,
    pub metrics: Option<MetricsReport>,
    pub timings: Timings,
}

impl RunOutputs {
    /// Pairs where some enabled stage failed.
    pub fn fallback_pairs(&self) -> Vec<usize> {
        self.pairs
            .iter()
            .filter(|p| p.diagnostics.fallback)
            .map(|p| p.diagnostics.pair)
            .collect()
    }

    pub fn is_partial(&self) -> bool {
        self.pairs.iter().any(|p| p.diagnostics.fallback)
    }

    /// Section `t`'s working image resampled into the middle section's frame.
    pub fn warped(&self, t: usize) -> Result<ImageGrid> {
        let m = self.registration.middle_index;
        let target = &self.preprocessed[m].image;
        if t == m {
            return Ok(self.preprocessed[t].image.clone());
        }
        warp_image(
            &self.registration.global_transforms[t],
            &self.preprocessed[t].image,
            target.shape(),
            0.0,
        )
    }
}

/// Per-pair RNG seed derived from the run seed.
fn pair_seed(base: u64, run_seed: u64, pair: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = run_seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(pair as u64 + 1))
        ^ base;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    let reader = image::ImageReader::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingImage(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    reader
        .with_guessed_format()?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Preprocesses every section, registers consecutive pairs (fixed = lower
/// index) on a pool of `worker_count` threads, chains the results into the
/// middle frame and evaluates annotations when present.
///
/// Pair failures do not abort the run; they fall back to the identity and
/// are flagged in the pair diagnostics.
pub fn run_pipeline(manifest: &SeriesManifest, cfg: &PipelineConfig) -> Result<RunOutputs> {
    cfg.validate()?;
    if manifest.sections.is_empty() {
        return Err(Error::EmptySeries);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count.max(1))
        .build()
        .map_err(|e| Error::InvalidValue(format!("cannot build worker pool: {e}")))?;
    let mut timings = Timings::default();

    let clock = Instant::now();
    let preprocessed: Vec<Preprocessed> = pool.install(|| {
        manifest
            .sections
            .par_iter()
            .map(|s| {
                let raw = decode(&s.image_path)?;
                preprocess(&raw, &cfg.preprocess, cfg.working_max_dim, s.spacing_um)
            })
            .collect::<Result<_>>()
    })?;
    timings.preprocess_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let stages = cfg.method.stages();
    let pairs: Vec<PairOutcome> = pool.install(|| {
        (0..manifest.sections.len() - 1)
            .into_par_iter()
            .map(|t| {
                let mut features = cfg.features.clone();
                features.seed = pair_seed(cfg.features.seed, cfg.seed, t);
                let out = register_pair(
                    t,
                    &preprocessed[t].image,
                    &preprocessed[t + 1].image,
                    stages,
                    &features,
                    &cfg.refine,
                );
                log::info!(
                    "pair {t}: {} fallback={}",
                    out.diagnostics.stage_used,
                    out.diagnostics.fallback
                );
                out
            })
            .collect()
    });
    timings.register_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let mut registration = assemble_series(manifest.section_ids(), pairs.iter().map(|p| p.transform).collect())?;
    registration.case_id = Some(manifest.case_id.clone());
    registration.method = Some(cfg.method.as_str().to_string());
    registration.sections = manifest
        .sections
        .iter()
        .zip(&preprocessed)
        .map(|(s, p)| SectionInfo {
            section_id: s.section_id.clone(),
            downsample_factor: p.downsample_factor,
            working_width: p.image.width(),
            working_height: p.image.height(),
            spacing_um: p.image.spacing_um(),
        })
        .collect();
    registration.pair_diagnostics = pairs.iter().map(|p| p.diagnostics.clone()).collect();
    timings.propagate_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let (tracks, metrics) = match &manifest.annotations_path {
        Some(path) => {
            let records = read_annotations(File::open(path)?, &path.display().to_string())?;
            let to_working: Vec<_> = preprocessed.iter().map(|p| p.raw_to_working()).collect();
            let tracks = tracks_from_annotations(
                &records,
                Some(&manifest.case_id),
                &registration.section_ids,
                &to_working,
            )?;
            let spacing = preprocessed[registration.middle_index].image.spacing_um();
            let report = evaluate_series(&tracks, &registration, spacing)?;
            (Some(tracks), Some(report))
        }
        None => (None, None),
    };
    timings.metrics_ms = clock.elapsed().as_secs_f64() * 1e3;

    Ok(RunOutputs {
        registration,
        preprocessed,
        pairs,
        tracks,
        metrics,
        timings,
    })
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    use std::io::Write;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// File-name-safe form of a section id.
fn file_stem(t: usize, id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{t:02}_{clean}")
}

fn gray_to_rgb(img: &ImageGrid) -> image::RgbImage {
    image::DynamicImage::ImageLuma8(to_gray8(img)).to_rgb8()
}

/// Writes `metrics_summary.json` and `metrics_rows.csv`.
pub fn write_metrics(report: &MetricsReport, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    write_json(&report.summary, &out_dir.join("metrics_summary.json"))?;
    let path = out_dir.join("metrics_rows.csv");
    let file = File::create(&path).map_err(|e| Error::Write {
        path: path.clone(),
        message: e.to_string(),
    })?;
    report.write_rows_csv(BufWriter::new(file))
}

#[derive(Serialize)]
struct PairStatus<'a> {
    pair: usize,
    stage_used: &'a str,
    fallback: bool,
    stage1_error: Option<&'a str>,
    stage2_error: Option<&'a str>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    case_id: &'a str,
    method: &'a str,
    sections: usize,
    middle_index: usize,
    fallback_pairs: Vec<usize>,
    pairs: Vec<PairStatus<'a>>,
    timings: &'a Timings,
    config: &'a PipelineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<&'a crate::metrics::MetricsSummary>,
}

/// Writes the run's artifacts into `out_dir` and returns the paths written.
///
/// Always: `registration.json`, `run_summary.json`; with annotations:
/// metrics files; per the config toggles: `warped/`, `overlays/`, `traces/`.
pub fn write_outputs(
    outputs: &RunOutputs,
    manifest: &SeriesManifest,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    create_dir(out_dir)?;
    let mut written = Vec::new();
    let reg = &outputs.registration;

    let path = out_dir.join("registration.json");
    write_json(reg, &path)?;
    written.push(path);

    if let Some(report) = &outputs.metrics {
        write_metrics(report, out_dir)?;
        written.push(out_dir.join("metrics_summary.json"));
        written.push(out_dir.join("metrics_rows.csv"));
    }

    if cfg.outputs.warped_images {
        let dir = out_dir.join("warped");
        create_dir(&dir)?;
        for t in 0..reg.len() {
            let path = dir.join(format!("{}.png", file_stem(t, &reg.section_ids[t])));
            to_gray8(&outputs.warped(t)?).save(&path).map_err(|e| Error::Write {
                path: path.clone(),
                message: e.to_string(),
            })?;
            written.push(path);
        }
    }

    if cfg.outputs.overlays {
        written.extend(write_overlays(outputs, &out_dir.join("overlays"))?);
    }

    if cfg.outputs.traces {
        let dir = out_dir.join("traces");
        create_dir(&dir)?;
        for p in &outputs.pairs {
            let path = dir.join(format!("pair_{:02}.csv", p.diagnostics.pair));
            let file = File::create(&path).map_err(|e| Error::Write {
                path: path.clone(),
                message: e.to_string(),
            })?;
            write_trace_csv(&p.trace, BufWriter::new(file))?;
            written.push(path);
        }
    }

    let summary = RunSummary {
        case_id: &manifest.case_id,
        method: cfg.method.as_str(),
        sections: reg.len(),
        middle_index: reg.middle_index,
        fallback_pairs: outputs.fallback_pairs(),
        pairs: outputs
            .pairs
            .iter()
            .map(|p| PairStatus {
                pair: p.diagnostics.pair,
                stage_used: &p.diagnostics.stage_used,
                fallback: p.diagnostics.fallback,
                stage1_error: p.diagnostics.stage1_error.as_deref(),
                stage2_error: p.diagnostics.stage2_error.as_deref(),
            })
            .collect(),
        timings: &outputs.timings,
        config: cfg,
        metrics: outputs.metrics.as_ref().map(|m| &m.summary),
    };
    let path = out_dir.join("run_summary.json");
    write_json(&summary, &path)?;
    written.push(path);
    Ok(written)
}

/// Warped sections with the middle-section boxes in yellow and each
/// section's registered boxes in green, plus per-pair stage-1 match views.
fn write_overlays(outputs: &RunOutputs, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let reg = &outputs.registration;
    let m = reg.middle_index;
    let mut written = Vec::new();
    for t in 0..reg.len() {
        if t == m {
            continue;
        }
        let mut boxes = Vec::new();
        for track in outputs.tracks.iter().flatten() {
            if let (Some(reference), Some(b)) = (track.boxes.get(&m), track.boxes.get(&t)) {
                boxes.push((*reference, YELLOW));
                boxes.push((transform_box(&reg.global_transforms[t], b), GREEN));
            }
        }
        let image = draw_boxes(&gray_to_rgb(&outputs.warped(t)?), &boxes);
        let path = dir.join(format!("{}.png", file_stem(t, &reg.section_ids[t])));
        save_rgb(&image, &path)?;
        written.push(path);
    }
    for p in &outputs.pairs {
        if p.inlier_points.is_empty() {
            continue;
        }
        let t = p.diagnostics.pair;
        let mut image = gray_to_rgb(&outputs.preprocessed[t].image);
        let fixed: Vec<_> = p.inlier_points.iter().map(|(_, f)| *f).collect();
        let mapped: Vec<_> = p
            .inlier_points
            .iter()
            .map(|(mv, _)| p.transform.apply_point(*mv))
            .collect();
        draw_points(&mut image, &fixed, GREEN);
        draw_points(&mut image, &mapped, RED);
        let path = dir.join(format!("matches_pair_{t:02}.png"));
        save_rgb(&image, &path)?;
        written.push(path);
        let path = dir.join(format!("matches_pair_{t:02}.json"));
        write_json(
            &serde_json::json!({
                "pair": t,
                "stage1": p.diagnostics.stage1,
                "inliers": p.inlier_points.iter().map(|(a, b)| [[a.x, a.y], [b.x, b.y]]).collect::<Vec<_>>(),
            }),
            &path,
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Recomputes metrics from a saved registration and an annotation CSV.
pub fn evaluate_files(registration: &Path, annotations: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(registration)?;
    let reg: SeriesRegistration = serde_json::from_str(&text).map_err(|e| Error::Parse {
        source_name: registration.display().to_string(),
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    reg.validate()?;
    let records = read_annotations(File::open(annotations)?, &annotations.display().to_string())?;
    let to_working: Vec<Affine2<f64>> = if reg.sections.is_empty() {
        Vec::new()
    } else {
        reg.sections.iter().map(|s| raw_to_working(s.downsample_factor)).collect()
    };
    let tracks = tracks_from_annotations(&records, reg.case_id.as_deref(), &reg.section_ids, &to_working)?;
    let spacing = match reg.sections.get(reg.middle_index) {
        Some(s) => s.spacing_um,
        None => {
            log::warn!("registration has no section spacing; assuming 1 um per pixel");
            1.0
        }
    };
    evaluate_series(&tracks, &reg, spacing)
}
