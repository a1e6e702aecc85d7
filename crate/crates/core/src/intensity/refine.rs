use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{warp_sample_into, Affine2, ImageGrid};

use super::pyramid::build_pyramid;
use super::SimilarityMetric;

const PARAMS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub metric: SimilarityMetric,
    pub pyramid_levels: usize,
    pub max_iterations_per_level: usize,
    /// Initial pattern-search step per parameter at the coarsest level:
    /// `[tx, ty, rotation, log_scale_x, log_scale_y, shear]`, translations in
    /// level pixels. Non-translation steps halve at each finer level.
    pub parameter_scales: [f64; PARAMS],
    /// Minimum relative metric gain for a move to count as an improvement.
    pub convergence_tol: f64,
    pub step_shrink: f64,
    /// A level stops once every step is below this fraction of its initial value.
    pub min_step_fraction: f64,
    /// Candidates whose overlap covers less than this fraction of the fixed
    /// image are rejected.
    pub min_overlap_fraction: f64,
    /// Trust region on the linear part: candidates whose linear part, relative
    /// to the initialization's, has a singular value outside
    /// `[1/max_scale_change, max_scale_change]` are rejected.
    pub max_scale_change: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            metric: SimilarityMetric::default(),
            pyramid_levels: 3,
            max_iterations_per_level: 200,
            parameter_scales: [2.0, 2.0, 0.04, 0.04, 0.04, 0.04],
            convergence_tol: 1e-6,
            step_shrink: 0.5,
            min_step_fraction: 1.0 / 64.0,
            min_overlap_fraction: 0.25,
            max_scale_change: 1.3,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidValue(format!("refine config: {m}")));
        self.metric.validate()?;
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be at least 1");
        }
        if self.max_iterations_per_level == 0 {
            return bad("max_iterations_per_level must be positive");
        }
        if self.parameter_scales.iter().any(|s| !(*s > 0.0)) {
            return bad("parameter_scales must be positive");
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_shrink must lie in (0, 1)");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be non-negative");
        }
        if !(self.min_step_fraction > 0.0 && self.min_step_fraction < 1.0) {
            return bad("min_step_fraction must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.min_overlap_fraction) {
            return bad("min_overlap_fraction must lie in [0, 1]");
        }
        if !(self.max_scale_change > 1.0) {
            return bad("max_scale_change must exceed 1");
        }
        Ok(())
    }
}

/// One accepted pattern-search position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    /// 0 is the coarsest level.
    pub level: usize,
    pub iteration: usize,
    pub metric: f64,
    pub params: [f64; PARAMS],
}

#[derive(Debug, Clone)]
pub struct Refinement {
    /// Full transform (initialization included) mapping moving into fixed.
    pub transform: Affine2<f64>,
    /// Per level, non-decreasing in `metric`.
    pub trace: Vec<TracePoint>,
    /// Metric of the initialization at full resolution.
    pub initial_metric: f64,
    /// Metric of `transform` at full resolution; never below `initial_metric`.
    pub final_metric: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Perturbation about `center`: scale, shear, rotate, then translate.
fn delta_transform(p: &[f64; PARAMS], cx: f64, cy: f64) -> Affine2<f64> {
    Affine2::translation(-cx, -cy)
        .then(&Affine2::scale(p[3].exp(), p[4].exp()))
        .then(&Affine2::new(1.0, p[5], 0.0, 0.0, 1.0, 0.0))
        .then(&Affine2::rotation(p[2]))
        .then(&Affine2::translation(cx + p[0], cy + p[1]))
}

/// Re-expresses a full-resolution transform at a level whose pixels are `factor` fine pixels.
fn to_level(a: &Affine2<f64>, factor: f64) -> Affine2<f64> {
    Affine2::scale(factor, factor)
        .then(a)
        .then(&Affine2::scale(1.0 / factor, 1.0 / factor))
}

fn to_fine(a: &Affine2<f64>, factor: f64) -> Affine2<f64> {
    to_level(a, 1.0 / factor)
}

struct LevelEvaluator<'a> {
    fixed: &'a ImageGrid,
    moving: &'a ImageGrid,
    base: Affine2<f64>,
    center: (f64, f64),
    metric: SimilarityMetric,
    min_overlap: usize,
    /// Inverse of the initialization's linear part, `[a, b, c, d]`.
    init_linear_inv: [f64; 4],
    max_scale_change: f64,
    vals: Vec<f32>,
    mask: Vec<bool>,
    evaluations: usize,
}

impl<'a> LevelEvaluator<'a> {
    fn new(
        fixed: &'a ImageGrid,
        moving: &'a ImageGrid,
        base: Affine2<f64>,
        init: &Affine2<f64>,
        cfg: &RefineConfig,
    ) -> Self {
        let n = fixed.width() * fixed.height();
        let [[a, b], [c, d]] = init.linear();
        let det = a * d - b * c;
        Self {
            fixed,
            moving,
            base,
            center: (
                (fixed.width() as f64 - 1.0) / 2.0,
                (fixed.height() as f64 - 1.0) / 2.0,
            ),
            metric: cfg.metric,
            min_overlap: ((cfg.min_overlap_fraction * n as f64).ceil() as usize).max(1),
            init_linear_inv: [d / det, -b / det, -c / det, a / det],
            max_scale_change: cfg.max_scale_change,
            vals: Vec::with_capacity(n),
            mask: Vec::with_capacity(n),
            evaluations: 0,
        }
    }

    fn candidate(&self, p: &[f64; PARAMS]) -> Affine2<f64> {
        self.base.then(&delta_transform(p, self.center.0, self.center.1))
    }

    /// Singular values of the candidate's linear part relative to the
    /// initialization, largest first.
    fn relative_stretch(&self, t: &Affine2<f64>) -> (f64, f64) {
        let [[a, b], [c, d]] = t.linear();
        let [p, q, r, s] = self.init_linear_inv;
        let (m00, m01, m10, m11) = (a * p + b * r, a * q + b * s, c * p + d * r, c * q + d * s);
        let e = m00 * m00 + m01 * m01 + m10 * m10 + m11 * m11;
        let det = (m00 * m11 - m01 * m10).abs();
        let disc = (e * e - 4.0 * det * det).max(0.0).sqrt();
        (((e + disc) / 2.0).sqrt(), ((e - disc) / 2.0).max(0.0).sqrt())
    }

    /// Metric of a full candidate transform, `None` if singular,
    /// under-overlapping or outside the trust region.
    fn eval_transform(&mut self, t: &Affine2<f64>) -> Option<f64> {
        self.evaluations += 1;
        let (hi, lo) = self.relative_stretch(t);
        if hi > self.max_scale_change || lo < 1.0 / self.max_scale_change {
            return None;
        }
        let inv = t.invert().ok()?;
        warp_sample_into(
            &inv,
            self.moving,
            self.fixed.width(),
            self.fixed.height(),
            &mut self.vals,
            &mut self.mask,
        );
        let overlap = self.mask.iter().filter(|&&m| m).count();
        if overlap < self.min_overlap {
            return None;
        }
        self.metric
            .evaluate_raw(self.fixed.data(), &self.vals, Some(&self.mask))
            .filter(|v| v.is_finite())
    }

    fn eval(&mut self, p: &[f64; PARAMS]) -> Option<f64> {
        let t = self.candidate(p);
        self.eval_transform(&t)
    }
}

/// Multi-resolution affine refinement maximizing an intensity similarity.
///
/// At each pyramid level a Hooke-Jeeves pattern search perturbs the current
/// estimate by a 6-parameter affine about the fixed image center. The
/// result is never worse than `init` at full resolution.
pub fn refine_affine(
    fixed: &ImageGrid,
    moving: &ImageGrid,
    init: &Affine2<f64>,
    cfg: &RefineConfig,
) -> Result<Refinement> {
    cfg.validate()?;
    if !init.is_valid() {
        return Err(Error::SingularTransform {
            det: init.det(),
        });
    }
    init.invert()?;

    let levels = build_pyramid(fixed, cfg.pyramid_levels)
        .len()
        .min(build_pyramid(moving, cfg.pyramid_levels).len());
    let fixed_pyr = build_pyramid(fixed, levels);
    let moving_pyr = build_pyramid(moving, levels);

    let mut full_eval = LevelEvaluator::new(fixed, moving, *init, init, cfg);
    let initial_metric = full_eval.eval_transform(init).ok_or(Error::EmptyOverlap)?;

    let mut current = *init;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut evaluations = full_eval.evaluations;

    for (level, (f, m)) in fixed_pyr.iter().zip(&moving_pyr).enumerate() {
        let factor = (1usize << (levels - 1 - level)) as f64;
        let mut ev = LevelEvaluator::new(f, m, to_level(&current, factor), init, cfg);
        let mut steps = cfg.parameter_scales;
        for s in steps.iter_mut().skip(2) {
            *s /= (1usize << level) as f64;
        }
        let (best, iters) = pattern_search(&mut ev, steps, cfg, level, &mut trace);
        iterations += iters;
        evaluations += ev.evaluations;
        if let Some(p) = best {
            current = to_fine(&ev.candidate(&p), factor);
        }
    }

    let mut final_metric = full_eval.eval_transform(&current).unwrap_or(f64::NEG_INFINITY);
    evaluations += 1;
    if !(final_metric >= initial_metric) {
        current = *init;
        final_metric = initial_metric;
    }
    Ok(Refinement {
        transform: current,
        trace,
        initial_metric,
        final_metric,
        iterations,
        evaluations,
    })
}

/// Hooke-Jeeves search from the zero perturbation. Returns the best
/// parameters (`None` if the start itself cannot be evaluated) and the
/// number of exploratory sweeps.
fn pattern_search(
    ev: &mut LevelEvaluator<'_>,
    mut steps: [f64; PARAMS],
    cfg: &RefineConfig,
    level: usize,
    trace: &mut Vec<TracePoint>,
) -> (Option<[f64; PARAMS]>, usize) {
    let min_steps: Vec<f64> = steps.iter().map(|s| s * cfg.min_step_fraction).collect();
    let mut p = [0.0; PARAMS];
    let Some(mut fp) = ev.eval(&p) else {
        return (None, 0);
    };
    trace.push(TracePoint {
        level,
        iteration: 0,
        metric: fp,
        params: p,
    });
    let improves = |new: f64, old: f64| new > old + cfg.convergence_tol * old.abs().max(1e-12);

    let mut iter = 0;
    while iter < cfg.max_iterations_per_level
        && steps.iter().zip(&min_steps).any(|(s, m)| s >= m)
    {
        iter += 1;
        let (q, fq) = explore(ev, p, fp, &steps, &improves);
        if !improves(fq, fp) {
            steps.iter_mut().for_each(|s| *s *= cfg.step_shrink);
            continue;
        }
        let (mut prev, mut cur, mut fcur) = (p, q, fq);
        trace.push(TracePoint {
            level,
            iteration: iter,
            metric: fcur,
            params: cur,
        });
        // pattern moves along the last successful direction
        while iter < cfg.max_iterations_per_level {
            let mut jump = cur;
            for i in 0..PARAMS {
                jump[i] = 2.0 * cur[i] - prev[i];
            }
            let fj = ev.eval(&jump).unwrap_or(f64::NEG_INFINITY);
            iter += 1;
            let (r, fr) = explore(ev, jump, fj, &steps, &improves);
            if !improves(fr, fcur) {
                break;
            }
            prev = cur;
            cur = r;
            fcur = fr;
            trace.push(TracePoint {
                level,
                iteration: iter,
                metric: fcur,
                params: cur,
            });
        }
        p = cur;
        fp = fcur;
    }
    (Some(p), iter)
}

fn explore(
    ev: &mut LevelEvaluator<'_>,
    base: [f64; PARAMS],
    fbase: f64,
    steps: &[f64; PARAMS],
    improves: &impl Fn(f64, f64) -> bool,
) -> ([f64; PARAMS], f64) {
    let (mut p, mut fp) = (base, fbase);
    for i in 0..PARAMS {
        for dir in [1.0, -1.0] {
            let mut q = p;
            q[i] += dir * steps[i];
            if let Some(fq) = ev.eval(&q) {
                if improves(fq, fp) {
                    p = q;
                    fp = fq;
                    break;
                }
            }
        }
    }
    (p, fp)
}

/// Writes a convergence trace as CSV: `level,iteration,metric,tx,ty,rotation,log_sx,log_sy,shear`.
pub fn write_trace_csv<W: Write>(trace: &[TracePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record([
        "level", "iteration", "metric", "tx", "ty", "rotation", "log_sx", "log_sy", "shear",
    ])
    .map_err(io)?;
    for t in trace {
        let mut rec = vec![t.level.to_string(), t.iteration.to_string(), t.metric.to_string()];
        rec.extend(t.params.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
