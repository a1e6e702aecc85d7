//! Evaluation metrics: physical distance between box centers, box IoU and
//! IoU of the circles inscribed in the boxes, aggregated the way a results
//! table reports them (mean and median distance, mean box IoU, mean circle IoU).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Affine2, Point2};
use crate::propagation::SeriesRegistration;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub x_min: T,
    pub y_min: T,
    pub x_max: T,
    pub y_max: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || !(x_min < x_max) || !(y_min < y_max) {
            return Err(Error::InvalidValue(format!(
                "bounding box needs x_min < x_max and y_min < y_max, got ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn center(&self) -> Point2<T> {
        let two = T::lit(2.0);
        Point2::new((self.x_min + self.x_max) / two, (self.y_min + self.y_max) / two)
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn corners(&self) -> [Point2<T>; 4] {
        [
            Point2::new(self.x_min, self.y_min),
            Point2::new(self.x_max, self.y_min),
            Point2::new(self.x_min, self.y_max),
            Point2::new(self.x_max, self.y_max),
        ]
    }

    /// Scales coordinates about the origin, e.g. to move between resolutions.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            x_min: self.x_min * factor,
            y_min: self.y_min * factor,
            x_max: self.x_max * factor,
            y_max: self.y_max * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingCircle<T> {
    pub cx: T,
    pub cy: T,
    pub r: T,
}

impl<T: Scalar> BoundingCircle<T> {
    pub fn new(cx: T, cy: T, r: T) -> Result<Self> {
        if !(r > T::zero()) || !cx.is_finite() || !cy.is_finite() || !r.is_finite() {
            return Err(Error::InvalidValue(format!("circle radius must be positive, got {r}")));
        }
        Ok(Self { cx, cy, r })
    }

    pub fn area(&self) -> T {
        T::lit(std::f64::consts::PI) * self.r * self.r
    }
}

/// Axis-aligned hull of the four box corners mapped through `a`.
pub fn transform_box<T: Scalar>(a: &Affine2<T>, bbox: &BoundingBox<T>) -> BoundingBox<T> {
    let mapped = bbox.corners().map(|c| a.apply_point(c));
    let (mut x_min, mut y_min) = (T::infinity(), T::infinity());
    let (mut x_max, mut y_max) = (T::neg_infinity(), T::neg_infinity());
    for p in mapped {
        x_min = x_min.min(p.x);
        y_min = y_min.min(p.y);
        x_max = x_max.max(p.x);
        y_max = y_max.max(p.y);
    }
    BoundingBox {
        x_min,
        y_min,
        x_max,
        y_max,
    }
}

/// Distance between box centers, in microns.
pub fn center_distance<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>, spacing_um: T) -> T {
    a.center().distance(b.center()) * spacing_um
}

pub fn box_iou<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(T::zero());
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(T::zero());
    let inter = iw * ih;
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}

/// Largest circle contained in the box.
pub fn inscribed_circle<T: Scalar>(bbox: &BoundingBox<T>) -> BoundingCircle<T> {
    let c = bbox.center();
    // min(width, height) / 2, taken from the rounded center so containment is exact
    let r = (c.x - bbox.x_min)
        .min(bbox.x_max - c.x)
        .min(c.y - bbox.y_min)
        .min(bbox.y_max - c.y);
    BoundingCircle { cx: c.x, cy: c.y, r }
}

/// Area of the intersection of two circles.
pub fn circle_intersection_area<T: Scalar>(a: &BoundingCircle<T>, b: &BoundingCircle<T>) -> T {
    // canonical argument order makes the result exactly symmetric
    let (a, b) = if (a.r, a.cx, a.cy) >= (b.r, b.cx, b.cy) {
        (a, b)
    } else {
        (b, a)
    };
    let (ra, rb) = (a.r, b.r);
    let d = (a.cx - b.cx).abs().hypot((a.cy - b.cy).abs());
    let pi = T::lit(std::f64::consts::PI);
    if d >= ra + rb {
        return T::zero();
    }
    if d <= ra - rb {
        return pi * rb * rb;
    }
    let two = T::lit(2.0);
    let one = T::one();
    let ca = ((d * d + ra * ra - rb * rb) / (two * d * ra)).max(-one).min(one);
    let cb = ((d * d + rb * rb - ra * ra) / (two * d * rb)).max(-one).min(one);
    let k = ((-d + ra + rb) * (d + ra - rb) * (d - ra + rb) * (d + ra + rb)).max(T::zero());
    let area = ra * ra * ca.acos() + rb * rb * cb.acos() - k.sqrt() / two;
    area.max(T::zero()).min(pi * rb * rb)
}

/// IoU of two circles from the closed-form lens area.
pub fn circle_iou<T: Scalar>(a: &BoundingCircle<T>, b: &BoundingCircle<T>) -> T {
    let inter = circle_intersection_area(a, b);
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}

/// One glomerulus followed across sections; keys are section indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlomerulusTrack {
    pub glomerulus_id: String,
    pub boxes: BTreeMap<usize, BoundingBox<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub glomerulus_id: String,
    pub section_index: usize,
    pub section_id: String,
    pub distance_um: f64,
    pub box_iou: f64,
    pub circle_iou: f64,
}

/// The four headline aggregates plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub distance_mean_um: Option<f64>,
    pub distance_median_um: Option<f64>,
    pub box_iou_mean: Option<f64>,
    pub circle_iou_mean: Option<f64>,
    pub rows: usize,
    pub tracks_evaluated: usize,
    pub tracks_skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub summary: MetricsSummary,
}

impl MetricsReport {
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    })
}

/// Compares every non-middle box, mapped into the middle frame, against the
/// same track's middle-section box. Boxes are in working-resolution pixels
/// of their own section; `spacing_um` is the middle section's working spacing.
pub fn evaluate_series(
    tracks: &[GlomerulusTrack],
    reg: &SeriesRegistration,
    spacing_um: f64,
) -> Result<MetricsReport> {
    reg.validate()?;
    let m = reg.middle_index;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut evaluated = 0;
    for track in tracks {
        let Some(reference) = track.boxes.get(&m) else {
            log::warn!(
                "track {} has no box on the middle section; skipped",
                track.glomerulus_id
            );
            skipped.push(track.glomerulus_id.clone());
            continue;
        };
        evaluated += 1;
        let ref_circle = inscribed_circle(reference);
        for (&t, bbox) in &track.boxes {
            if t == m {
                continue;
            }
            let Some(global) = reg.global_transforms.get(t) else {
                return Err(Error::IndexOutOfRange {
                    index: t,
                    len: reg.len(),
                });
            };
            let mapped = transform_box(global, bbox);
            rows.push(MetricsRow {
                glomerulus_id: track.glomerulus_id.clone(),
                section_index: t,
                section_id: reg.section_ids[t].clone(),
                distance_um: center_distance(&mapped, reference, spacing_um),
                box_iou: box_iou(&mapped, reference),
                circle_iou: circle_iou(&inscribed_circle(&mapped), &ref_circle),
            });
        }
    }
    if evaluated == 0 && !tracks.is_empty() {
        return Err(Error::NoMiddleAnnotation);
    }
    let dist: Vec<f64> = rows.iter().map(|r| r.distance_um).collect();
    let biou: Vec<f64> = rows.iter().map(|r| r.box_iou).collect();
    let ciou: Vec<f64> = rows.iter().map(|r| r.circle_iou).collect();
    let summary = MetricsSummary {
        method: reg.method.clone(),
        distance_mean_um: mean(&dist),
        distance_median_um: median(&dist),
        box_iou_mean: mean(&biou),
        circle_iou_mean: mean(&ciou),
        rows: rows.len(),
        tracks_evaluated: evaluated,
        tracks_skipped: skipped,
    };
    Ok(MetricsReport { rows, summary })
}

/// One line of an annotation CSV
/// (`case_id,section_id,glomerulus_id,x_min,y_min,x_max,y_max`), pixels at
/// annotation resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub case_id: String,
    pub section_id: String,
    pub glomerulus_id: String,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

pub fn read_annotations<R: Read>(input: R, source_name: &str) -> Result<Vec<AnnotationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<AnnotationRecord>().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            location: format!("record {}", i + 1),
            message: e.to_string(),
        })?;
        BoundingBox::new(rec.x_min, rec.y_min, rec.x_max, rec.y_max).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            location: format!("record {}", i + 1),
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(records: &[AnnotationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Groups annotation records into tracks in working-resolution coordinates.
///
/// Only records whose `case_id` matches (when given) and whose section is in
/// the registration are used. `to_working[t]` maps annotation pixels of
/// section `t` to its working pixels.
pub fn tracks_from_annotations(
    records: &[AnnotationRecord],
    case_id: Option<&str>,
    section_ids: &[String],
    to_working: &[Affine2<f64>],
) -> Result<Vec<GlomerulusTrack>> {
    let index: BTreeMap<&str, usize> = section_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut tracks: BTreeMap<String, GlomerulusTrack> = BTreeMap::new();
    for r in records {
        if case_id.is_some_and(|c| c != r.case_id) {
            continue;
        }
        let Some(&t) = index.get(r.section_id.as_str()) else {
            log::warn!("annotation for unknown section {} ignored", r.section_id);
            continue;
        };
        let raw = BoundingBox::new(r.x_min, r.y_min, r.x_max, r.y_max)?;
        let bbox = to_working.get(t).map_or(raw, |a| transform_box(a, &raw));
        let track = tracks
            .entry(r.glomerulus_id.clone())
            .or_insert_with(|| GlomerulusTrack {
                glomerulus_id: r.glomerulus_id.clone(),
                boxes: BTreeMap::new(),
            });
        if track.boxes.insert(t, bbox).is_some() {
            return Err(Error::Parse {
                source_name: "annotations".into(),
                location: format!("section {} glomerulus {}", r.section_id, r.glomerulus_id),
                message: "duplicate box".into(),
            });
        }
    }
    Ok(tracks.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::assemble_series;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type B = BoundingBox<f64>;
    type C = BoundingCircle<f64>;

    fn bx(a: f64, b: f64, c: f64, d: f64) -> B {
        B::new(a, b, c, d).unwrap()
    }

    #[test]
    fn box_validation() {
        assert!(B::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(B::new(0.0, 2.0, 1.0, 1.0).is_err());
        assert!(B::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(C::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn transform_box_cases() {
        let b = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(transform_box(&Affine2::identity(), &b), b);
        assert_eq!(
            transform_box(&Affine2::translation(5.0, 0.0), &b),
            bx(5.0, 0.0, 15.0, 10.0)
        );
        // (x, y) -> (-y, x) by hand: corners (0,0) (2,0) (0,4) (2,4) -> (0,0) (0,2) (-4,0) (-4,2)
        let r = transform_box(&Affine2::rotation(std::f64::consts::FRAC_PI_2), &bx(0.0, 0.0, 2.0, 4.0));
        let expect = bx(-4.0, 0.0, 0.0, 2.0);
        assert!((r.x_min - expect.x_min).abs() < 1e-12);
        assert!((r.y_min - expect.y_min).abs() < 1e-12);
        assert!((r.x_max - expect.x_max).abs() < 1e-12);
        assert!((r.y_max - expect.y_max).abs() < 1e-12);
    }

    #[test]
    fn center_distance_cases() {
        let b = bx(0.0, 0.0, 4.0, 4.0);
        assert_eq!(center_distance(&b, &b, 1.0), 0.0);
        let a = bx(8.0, 8.0, 12.0, 12.0);
        let c = bx(11.0, 12.0, 15.0, 16.0);
        assert!((center_distance(&a, &c, 1.0) - 5.0).abs() < 1e-12);
        let d = bx(9.0, 8.0, 13.0, 12.0);
        assert!((center_distance(&a, &d, 2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn box_iou_cases() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &bx(5.0, 5.0, 6.0, 6.0)), 0.0);
        let v = box_iou(&a, &bx(1.0, 1.0, 3.0, 3.0));
        assert!((v - 1.0 / 7.0).abs() < 1e-9);
        // raster oracle for the same pair
        assert!((v - raster_box_iou(&a, &bx(1.0, 1.0, 3.0, 3.0), 2000)).abs() < 1e-3);
    }

    #[test]
    fn inscribed_cases() {
        assert_eq!(inscribed_circle(&bx(0.0, 0.0, 4.0, 2.0)), C { cx: 2.0, cy: 1.0, r: 1.0 });
        assert_eq!(inscribed_circle(&bx(0.0, 0.0, 10.0, 10.0)), C { cx: 5.0, cy: 5.0, r: 5.0 });
        assert_eq!(inscribed_circle(&bx(1.0, 1.0, 2.0, 5.0)), C { cx: 1.5, cy: 3.0, r: 0.5 });
    }

    #[test]
    fn circle_iou_cases() {
        let a = C::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(circle_iou(&a, &a), 1.0);
        assert_eq!(circle_iou(&a, &C::new(2.0, 0.0, 1.0).unwrap()), 0.0);
        let v = circle_iou(&a, &C::new(1.0, 0.0, 1.0).unwrap());
        assert!((v - 0.2430).abs() < 1e-3, "{v}");
        // containment
        let small = C::new(0.2, 0.0, 0.5).unwrap();
        assert!((circle_iou(&a, &small) - 0.25).abs() < 1e-12);
    }

    /// Fraction of a fine grid over the hull covered by both boxes vs either.
    fn raster_box_iou(a: &B, b: &B, res: usize) -> f64 {
        let (x0, y0) = (a.x_min.min(b.x_min), a.y_min.min(b.y_min));
        let (x1, y1) = (a.x_max.max(b.x_max), a.y_max.max(b.y_max));
        let (dx, dy) = ((x1 - x0) / res as f64, (y1 - y0) / res as f64);
        let inside = |bb: &B, x: f64, y: f64| x >= bb.x_min && x < bb.x_max && y >= bb.y_min && y < bb.y_max;
        let (mut inter, mut uni) = (0u64, 0u64);
        for j in 0..res {
            let y = y0 + (j as f64 + 0.5) * dy;
            for i in 0..res {
                let x = x0 + (i as f64 + 0.5) * dx;
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += (ia && ib) as u64;
                uni += (ia || ib) as u64;
            }
        }
        inter as f64 / uni as f64
    }

    #[test]
    fn circle_iou_matches_monte_carlo_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = C::new(0.0, 0.0, rng.random_range(0.1..10.0)).unwrap();
            let b = C::new(rng.random_range(0.0..25.0), 0.0, rng.random_range(0.1..10.0)).unwrap();
            let exact = circle_iou(&a, &b);
            if exact == 0.0 || exact == (a.r.min(b.r) / a.r.max(b.r)).powi(2) {
                continue;
            }
            let (x0, x1) = ((a.cx - a.r).min(b.cx - b.r), (a.cx + a.r).max(b.cx + b.r));
            let (y0, y1) = (-(a.r.max(b.r)), a.r.max(b.r));
            let (mut inter, mut uni) = (0u64, 0u64);
            for _ in 0..400_000 {
                let x = rng.random_range(x0..x1);
                let y = rng.random_range(y0..y1);
                let ia = (x - a.cx).powi(2) + (y - a.cy).powi(2) <= a.r * a.r;
                let ib = (x - b.cx).powi(2) + (y - b.cy).powi(2) <= b.r * b.r;
                inter += (ia && ib) as u64;
                uni += (ia || ib) as u64;
            }
            assert!((exact - inter as f64 / uni as f64).abs() < 5e-3);
        }
    }

    #[test]
    fn evaluate_identity_perfect() {
        let reg = assemble_series(
            vec!["a".into(), "b".into(), "c".into()],
            vec![Affine2::identity(); 2],
        )
        .unwrap();
        let b = bx(10.0, 10.0, 30.0, 40.0);
        let track = GlomerulusTrack {
            glomerulus_id: "g1".into(),
            boxes: (0..3).map(|t| (t, b)).collect(),
        };
        let rep = evaluate_series(&[track], &reg, 1.0).unwrap();
        assert_eq!(rep.summary.rows, 2);
        assert_eq!(rep.summary.distance_mean_um, Some(0.0));
        assert_eq!(rep.summary.box_iou_mean, Some(1.0));
        assert_eq!(rep.summary.circle_iou_mean, Some(1.0));
    }

    #[test]
    fn evaluate_planted_offset() {
        let reg = assemble_series(vec!["a".into(), "b".into()], vec![Affine2::identity()]).unwrap();
        let track = GlomerulusTrack {
            glomerulus_id: "g".into(),
            boxes: [(0, bx(30.0, 40.0, 50.0, 60.0)), (1, bx(0.0, 0.0, 20.0, 20.0))]
                .into_iter()
                .collect(),
        };
        let rep = evaluate_series(&[track], &reg, 1.0).unwrap();
        assert!((rep.summary.distance_mean_um.unwrap() - 50.0).abs() < 1e-12);
        assert!((rep.summary.distance_median_um.unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_skips_and_errors() {
        let reg = assemble_series(vec!["a".into(), "b".into()], vec![Affine2::identity()]).unwrap();
        let no_mid = GlomerulusTrack {
            glomerulus_id: "x".into(),
            boxes: [(0, bx(0.0, 0.0, 1.0, 1.0))].into_iter().collect(),
        };
        assert!(matches!(
            evaluate_series(&[no_mid.clone()], &reg, 1.0),
            Err(Error::NoMiddleAnnotation)
        ));
        let ok = GlomerulusTrack {
            glomerulus_id: "y".into(),
            boxes: [(0, bx(0.0, 0.0, 1.0, 1.0)), (1, bx(0.0, 0.0, 1.0, 1.0))]
                .into_iter()
                .collect(),
        };
        let rep = evaluate_series(&[no_mid, ok], &reg, 1.0).unwrap();
        assert_eq!(rep.summary.tracks_skipped, vec!["x".to_string()]);
        assert_eq!(rep.summary.rows, 1);
    }

    #[test]
    fn summary_has_table_columns() {
        let reg = assemble_series(vec!["a".into(), "b".into()], vec![Affine2::identity()]).unwrap();
        let track = GlomerulusTrack {
            glomerulus_id: "g".into(),
            boxes: [(0, bx(0.0, 0.0, 2.0, 2.0)), (1, bx(1.0, 1.0, 3.0, 3.0))]
                .into_iter()
                .collect(),
        };
        let rep = evaluate_series(&[track], &reg, 1.0).unwrap();
        let v = serde_json::to_value(&rep.summary).unwrap();
        for k in ["distance_mean_um", "distance_median_um", "box_iou_mean", "circle_iou_mean"] {
            assert!(v[k].is_f64(), "{k}");
        }
        let mut buf = Vec::new();
        rep.write_rows_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("glomerulus_id,section_index,section_id,distance_um,box_iou,circle_iou"));
    }

    #[test]
    fn annotations_round_trip_and_tracks() {
        let recs = vec![
            AnnotationRecord {
                case_id: "c1".into(),
                section_id: "s0".into(),
                glomerulus_id: "g1".into(),
                x_min: 10.0,
                y_min: 10.0,
                x_max: 20.0,
                y_max: 30.0,
            },
            AnnotationRecord {
                case_id: "c2".into(),
                section_id: "s0".into(),
                glomerulus_id: "g1".into(),
                x_min: 0.0,
                y_min: 0.0,
                x_max: 1.0,
                y_max: 1.0,
            },
        ];
        let mut buf = Vec::new();
        write_annotations(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("case_id,section_id,glomerulus_id,x_min,y_min,x_max,y_max"));
        let back = read_annotations(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, recs);
        let tracks = tracks_from_annotations(
            &back,
            Some("c1"),
            &["s0".to_string()],
            &[Affine2::scale(0.5, 0.5)],
        )
        .unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].boxes[&0], bx(5.0, 5.0, 10.0, 15.0));
    }

    #[test]
    fn bad_annotation_reports_record() {
        let text = "case_id,section_id,glomerulus_id,x_min,y_min,x_max,y_max\nc,s,g,5,5,1,1\n";
        match read_annotations(text.as_bytes(), "ann.csv") {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "record 1"),
            other => panic!("{other:?}"),
        }
    }

    fn circle() -> impl Strategy<Value = C> {
        (-10.0f64..10.0, -10.0f64..10.0, 0.1f64..10.0).prop_map(|(x, y, r)| C { cx: x, cy: y, r })
    }

    fn abox() -> impl Strategy<Value = B> {
        (-10.0f64..10.0, -10.0f64..10.0, 0.1f64..10.0, 0.1f64..10.0)
            .prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn ious_are_symmetric(a in circle(), b in circle(), p in abox(), q in abox()) {
            prop_assert_eq!(circle_iou(&a, &b), circle_iou(&b, &a));
            prop_assert_eq!(box_iou(&p, &q), box_iou(&q, &p));
            let v = circle_iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn inscribed_is_contained(p in abox()) {
            let c = inscribed_circle(&p);
            prop_assert!(c.r <= c.cx - p.x_min && c.r <= p.x_max - c.cx);
            prop_assert!(c.r <= c.cy - p.y_min && c.r <= p.y_max - c.cy);
            prop_assert_eq!(circle_iou(&c, &c), 1.0);
            prop_assert_eq!(box_iou(&p, &p), 1.0);
        }

        #[test]
        fn circle_iou_is_lipschitz(a in circle(), b in circle()) {
            let d = (a.cx - b.cx).hypot(a.cy - b.cy);
            // away from tangency and containment
            prop_assume!(d > (a.r - b.r).abs() + 1e-3 && d < a.r + b.r - 1e-3);
            let eps = 1e-6;
            let moved = C { cx: a.cx + eps, ..a };
            prop_assert!((circle_iou(&moved, &b) - circle_iou(&a, &b)).abs() <= 10.0 * eps);
        }
    }
}
