//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use image::DynamicImage;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sectionalign::geometry::{corner_error, Affine2, ImageGrid, Point2};
use sectionalign::intensity::{cross_correlation, entropy, mutual_information, refine_affine, RefineConfig};
use sectionalign::metrics::{
    box_iou, center_distance, circle_iou, transform_box, BoundingBox, BoundingCircle, MetricsSummary,
};
use sectionalign::pipeline::{preprocess, register_pair, Method, PipelineConfig, StainLabel};
use sectionalign::propagation::{propagate, select_middle};
use sectionalign::synthetic::{
    make_series, random_planted, PhantomSpec, PlantedRange, SeriesArtifacts, StainProfile, SyntheticSeries,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gray(img: &image::RgbImage) -> ImageGrid {
    preprocess(
        &DynamicImage::ImageRgb8(img.clone()),
        &PipelineConfig::default().preprocess,
        1024,
        1.0,
    )
    .unwrap()
    .image
}

fn phantom_pair(seed: u64, range: &PlantedRange, artifacts: &SeriesArtifacts) -> (SyntheticSeries, ImageGrid, ImageGrid) {
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

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sectionalign"))
        .args(args)
        .output()
        .expect("cli runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report_format() -> Outcome {
    let summary = MetricsSummary {
        method: Some("two_stage".into()),
        distance_mean_um: Some(1.0),
        distance_median_um: Some(1.0),
        box_iou_mean: Some(1.0),
        circle_iou_mean: Some(1.0),
        rows: 1,
        tracks_evaluated: 1,
        tracks_skipped: vec![],
    };
    let json = serde_json::to_value(&summary).unwrap();
    let keys = ["distance_mean_um", "distance_median_um", "box_iou_mean", "circle_iou_mean"];
    let missing: Vec<_> = keys.iter().filter(|k| json.get(**k).is_none()).collect();
    outcome(
        missing.is_empty(),
        format!("summary aggregates present (missing: {missing:?}); dataset table not reproducible here"),
    )
}

fn mc_circle_iou(a: &BoundingCircle<f64>, b: &BoundingCircle<f64>, samples: usize, rng: &mut SmallRng) -> f64 {
    let x0 = (a.cx - a.r).max(b.cx - b.r);
    let x1 = (a.cx + a.r).min(b.cx + b.r);
    let y0 = (a.cy - a.r).max(b.cy - b.r);
    let y1 = (a.cy + a.r).min(b.cy + b.r);
    let inside = |c: &BoundingCircle<f64>, x: f64, y: f64| (x - c.cx).powi(2) + (y - c.cy).powi(2) <= c.r * c.r;
    let mut hits = 0usize;
    for _ in 0..samples {
        let x = x0 + (x1 - x0) * rng.random::<f64>();
        let y = y0 + (y1 - y0) * rng.random::<f64>();
        if inside(a, x, y) && inside(b, x, y) {
            hits += 1;
        }
    }
    let inter = (x1 - x0) * (y1 - y0) * hits as f64 / samples as f64;
    let union = std::f64::consts::PI * (a.r * a.r + b.r * b.r) - inter;
    inter / union
}

fn circle_iou_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut sampler = SmallRng::seed_from_u64(20);
    let mut worst = 0f64;
    let mut disputed = 0;
    for _ in 0..1000 {
        let ra: f64 = rng.random_range(1.0..20.0);
        let rb: f64 = rng.random_range(1.0..20.0);
        let a = BoundingCircle::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), ra).unwrap();
        let b = BoundingCircle::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0), rb).unwrap();
        let d = (a.cx - b.cx).hypot(a.cy - b.cy);
        let expected = if d >= ra + rb {
            0.0
        } else if d <= (ra - rb).abs() {
            (ra.min(rb) / ra.max(rb)).powi(2)
        } else {
            let screen = mc_circle_iou(&a, &b, 1_000_000, &mut sampler);
            if (screen - circle_iou(&a, &b)).abs() <= 5e-4 {
                screen
            } else {
                disputed += 1;
                mc_circle_iou(&a, &b, 10_000_000, &mut sampler)
            }
        };
        worst = worst.max((circle_iou(&a, &b) - expected).abs());
    }
    outcome(
        worst <= 1e-3,
        format!("max |closed form - oracle| = {worst:.2e} over 1000 pairs (Monte Carlo; {disputed} disputed pairs at 1e7 samples)"),
    )
}

fn box_iou_oracle() -> Outcome {
    const RES: usize = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0f64;
    for _ in 0..1000 {
        let mut random_box = |spread: f64| {
            let x = rng.random_range(-spread..spread);
            let y = rng.random_range(-spread..spread);
            BoundingBox::new(x, y, x + rng.random_range(0.5..30.0), y + rng.random_range(0.5..30.0)).unwrap()
        };
        let a = random_box(10.0);
        let b = random_box(25.0);
        let (hx0, hx1) = (a.x_min.min(b.x_min), a.x_max.max(b.x_max));
        let (hy0, hy1) = (a.y_min.min(b.y_min), a.y_max.max(b.y_max));
        // cell centers of a RES x RES raster over the hull; boxes are axis
        // aligned, so the count inside factors into per-axis counts
        let covered = |h0: f64, h1: f64, lo: f64, hi: f64| -> Vec<bool> {
            (0..RES)
                .map(|i| {
                    let c = h0 + (i as f64 + 0.5) * (h1 - h0) / RES as f64;
                    c >= lo && c <= hi
                })
                .collect()
        };
        let ax = covered(hx0, hx1, a.x_min, a.x_max);
        let ay = covered(hy0, hy1, a.y_min, a.y_max);
        let bx = covered(hx0, hx1, b.x_min, b.x_max);
        let by = covered(hy0, hy1, b.y_min, b.y_max);
        let count = |v: &[bool]| v.iter().filter(|&&c| c).count() as f64;
        let both = |u: &[bool], w: &[bool]| u.iter().zip(w).filter(|(p, q)| **p && **q).count() as f64;
        let na = count(&ax) * count(&ay);
        let nb = count(&bx) * count(&by);
        let ni = both(&ax, &bx) * both(&ay, &by);
        let raster = ni / (na + nb - ni);
        worst = worst.max((box_iou(&a, &b) - raster).abs());
    }
    outcome(worst <= 1e-3, format!("max |closed form - raster| = {worst:.2e} over 1000 pairs"))
}

fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> Vec<Affine2<f64>> {
    (0..n)
        .map(|_| {
            Affine2::scale(rng.random_range(0.85..1.15), rng.random_range(0.85..1.15))
                .then(&Affine2::rotation(rng.random_range(-0.5..0.5)))
                .then(&Affine2::translation(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0)))
        })
        .collect()
}

fn propagation_chains() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_map, mut worst_mid) = (0f64, 0f64);
    for sections in 2..=15 {
        let m = select_middle(sections).unwrap();
        for _ in 0..100 {
            let pairs = random_chain(&mut rng, sections - 1);
            let global = propagate(&pairs, m).unwrap();
            let id = Affine2::identity();
            for (i, v) in global[m].matrix().iter().flatten().zip(id.matrix().iter().flatten()) {
                worst_mid = worst_mid.max((i - v).abs());
            }
            let p = Point2::new(rng.random_range(0.0..300.0), rng.random_range(0.0..150.0));
            for (t, g) in global.iter().enumerate() {
                // pair t maps section t + 1 into section t
                let mut q = p;
                let mut s = t;
                while s < m {
                    q = pairs[s].invert().unwrap().apply_point(q);
                    s += 1;
                }
                while s > m {
                    q = pairs[s - 1].apply_point(q);
                    s -= 1;
                }
                let r = g.apply_point(p);
                worst_map = worst_map.max((r.x - q.x).abs().max((r.y - q.y).abs()));
            }
        }
    }
    outcome(
        worst_map <= 1e-9 && worst_mid <= 1e-12,
        format!("chained vs composed max {worst_map:.2e}; middle vs identity max {worst_mid:.2e}"),
    )
}

fn clean_recovery() -> Outcome {
    let cfg = PipelineConfig::default();
    let mut errors = Vec::new();
    for seed in 0..20 {
        let (series, fixed, moving) = phantom_pair(seed, &PlantedRange::default(), &SeriesArtifacts::default());
        let (w, h) = fixed.shape();
        let out = register_pair(0, &fixed, &moving, Method::TwoStage.stages(), &cfg.features, &cfg.refine);
        errors.push(corner_error(&out.transform, &series.ground_truth_pairs[0], w, h));
    }
    let good = errors.iter().filter(|e| **e <= 1.5).count();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    outcome(good >= 19, format!("{good}/20 within 1.5 px corner error (worst {worst:.3} px)"))
}

fn mean_center_distance(series: &SyntheticSeries, estimate: &Affine2<f64>) -> f64 {
    let d: Vec<f64> = series.boxes[1]
        .iter()
        .zip(&series.boxes[0])
        .map(|(moving, fixed)| center_distance(&transform_box(estimate, moving), fixed, 1.0))
        .collect();
    d.iter().sum::<f64>() / d.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn robustness_ordering() -> Outcome {
    let cfg = PipelineConfig::default();
    let artifacts = SeriesArtifacts {
        occlusion_fraction: 0.3,
        noise_sigma: 0.02,
        stains: vec![
            StainProfile::for_label(StainLabel::HE),
            StainProfile::for_label(StainLabel::PAS),
        ],
    };
    let methods = [Method::TwoStage, Method::Stage1Only, Method::Stage2Only];
    let mut dist = vec![Vec::new(); methods.len()];
    for seed in 0..20 {
        let (series, fixed, moving) = phantom_pair(seed, &PlantedRange::default(), &artifacts);
        for (k, m) in methods.iter().enumerate() {
            let out = register_pair(0, &fixed, &moving, m.stages(), &cfg.features, &cfg.refine);
            dist[k].push(mean_center_distance(&series, &out.transform));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (two, s1, s2) = (mean(&dist[0]), mean(&dist[1]), mean(&dist[2]));
    let med2 = median(&dist[2]);
    let catastrophic = dist[2].iter().filter(|d| **d > 10.0 * med2).count();
    outcome(
        two <= s1 && two <= s2 && catastrophic >= 1,
        format!(
            "mean distance two_stage {two:.2}, stage1_only {s1:.2}, stage2_only {s2:.2} um; \
             stage2_only catastrophic {catastrophic} (median {med2:.2})"
        ),
    )
}

fn multi_stain_mi() -> Outcome {
    let range = PlantedRange {
        max_rotation_deg: 5.0,
        max_translation_frac: 8.0 / 400.0,
        scale: (1.0, 1.0),
    };
    let artifacts = SeriesArtifacts {
        stains: vec![
            StainProfile::for_label(StainLabel::HE),
            StainProfile::for_label(StainLabel::JMS),
        ],
        ..Default::default()
    };
    let mut good = 0;
    let mut worst = 0f64;
    for seed in 0..20 {
        let (series, fixed, moving) = phantom_pair(seed, &range, &artifacts);
        let (w, h) = fixed.shape();
        let r = refine_affine(&fixed, &moving, &Affine2::identity(), &RefineConfig::default()).unwrap();
        let e = corner_error(&r.transform, &series.ground_truth_pairs[0], w, h);
        worst = worst.max(e);
        if e <= 2.0 {
            good += 1;
        }
    }
    outcome(good >= 18, format!("{good}/20 within 2 px corner error (worst {worst:.3} px)"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("case");
    let synth = cli(&["synth", "--out", path_str(&case), "--sections", "4", "--occlusion", "0.2"]);
    if !synth.status.success() {
        return outcome(false, "synth failed");
    }
    let manifest = case.join("manifest.json");
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let status = cli(&[
            "register",
            "--manifest",
            path_str(&manifest),
            "--out",
            path_str(&out),
            "--seed",
            "9",
            "--workers",
            workers,
        ])
        .status;
        let read = |f: &str| std::fs::read(out.join(f)).unwrap_or_default();
        (status.code(), read("registration.json"), read("metrics_summary.json"), read("metrics_rows.csv"))
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "8");
    let same_rerun = a == b;
    let same_workers = a == c;
    outcome(
        same_rerun && same_workers && !a.1.is_empty(),
        format!("rerun byte-identical: {same_rerun}; workers 1 vs 8 identical: {same_workers}"),
    )
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("case");
    let reg = dir.path().join("reg");
    let eval = dir.path().join("eval");
    let steps = [
        cli(&["synth", "--out", path_str(&case)]),
        cli(&[
            "register",
            "--manifest",
            path_str(&case.join("manifest.json")),
            "--out",
            path_str(&reg),
        ]),
        cli(&[
            "evaluate",
            "--registration",
            path_str(&reg.join("registration.json")),
            "--annotations",
            path_str(&case.join("annotations.csv")),
            "--out",
            path_str(&eval),
        ]),
    ];
    if let Some(bad) = steps.iter().position(|o| !o.status.success()) {
        return outcome(
            false,
            format!("step {bad} failed: {}", String::from_utf8_lossy(&steps[bad].stderr)),
        );
    }
    let text = std::fs::read_to_string(eval.join("metrics_summary.json")).unwrap();
    let s: MetricsSummary = serde_json::from_str(&text).unwrap();
    let (d, b, c) = (
        s.distance_mean_um.unwrap_or(f64::INFINITY),
        s.box_iou_mean.unwrap_or(0.0),
        s.circle_iou_mean.unwrap_or(0.0),
    );
    outcome(
        d <= 5.0 && b >= 0.9 && c >= 0.85,
        format!("distance {d:.3} um, box IoU {b:.3}, circle IoU {c:.3} over {} rows", s.rows),
    )
}

fn mi_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (w, h) = (64, 48);
    let data: Vec<f32> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
    let other: Vec<f32> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
    let img = ImageGrid::new(w, h, data.clone(), 1.0).unwrap();
    let img2 = ImageGrid::new(w, h, other, 1.0).unwrap();
    let flat = ImageGrid::new(w, h, vec![0.4; w * h], 1.0).unwrap();
    let inverse = ImageGrid::new(w, h, data.iter().map(|v| 1.0 - v).collect(), 1.0).unwrap();
    let bins = 32;
    let self_err = (mutual_information(&img, &img, bins, None).unwrap() - entropy(&img, bins)).abs();
    let sym_err = (mutual_information(&img, &img2, bins, None).unwrap()
        - mutual_information(&img2, &img, bins, None).unwrap())
    .abs();
    let flat_mi = mutual_information(&img, &flat, bins, None).unwrap().abs();
    let cc_self = (cross_correlation(&img, &img, None).unwrap() - 1.0).abs();
    let cc_inv = (cross_correlation(&img, &inverse, None).unwrap() + 1.0).abs();
    outcome(
        self_err <= 1e-9 && sym_err <= 1e-12 && flat_mi <= 1e-9 && cc_self <= 1e-9 && cc_inv <= 1e-9,
        format!(
            "MI(I,I)-H {self_err:.1e}, asymmetry {sym_err:.1e}, MI(I,c) {flat_mi:.1e}, \
             CC(I,I)-1 {cc_self:.1e}, CC(I,1-I)+1 {cc_inv:.1e}"
        ),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, u64, Check); 10] = [
        (1, "report format", 5, report_format),
        (2, "circle IoU oracle", 60, circle_iou_oracle),
        (3, "box IoU oracle", 60, box_iou_oracle),
        (4, "propagation chains", 10, propagation_chains),
        (5, "clean affine recovery", 300, clean_recovery),
        (6, "robustness ordering", 600, robustness_ordering),
        (7, "multi-stain MI", 300, multi_stain_mi),
        (8, "determinism", 120, determinism),
        (9, "end-to-end benchmark", 180, end_to_end),
        (10, "MI properties", 5, mi_properties),
    ];
    let mut failed = 0;
    for (n, name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n:2} {}: {name}: {} [{:.1}s of {budget}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
