//! Lane-level evaluation: longitudinal resampling, the inlier-ratio lane match,
//! F1 / precision / recall / AP and near/far localization errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, CostMatrix};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// A 3D lane polyline ordered by longitudinal position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Lane<T> {
    pub points: Vec<[T; 3]>,
    pub category: usize,
    #[serde(default = "one")]
    pub confidence: T,
}

fn one<T: Scalar>() -> T {
    T::one()
}

pub type GroundTruthLane<T> = Lane<T>;

impl<T: Scalar> Lane<T> {
    pub fn new(points: Vec<[T; 3]>, category: usize) -> Self {
        Self {
            points,
            category,
            confidence: T::one(),
        }
    }

    /// At least two points with non-decreasing `y`.
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(invalid(format!("lane has {} points, needs at least 2", self.points.len())));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("lane coordinates must be finite"));
        }
        if let Some(i) = self.points.windows(2).position(|w| w[1][1] < w[0][1]) {
            return Err(invalid(format!("lane y decreases after point {i}")));
        }
        Ok(())
    }

    /// Linear interpolation of `(x, z)` at `y`, or `None` outside the lane extent.
    pub fn interpolate(&self, y: T) -> Option<[T; 2]> {
        let pts = &self.points;
        let first = pts.first()?;
        let last = pts.last()?;
        if !(y >= first[1] && y <= last[1]) {
            return None;
        }
        // first knot with knot.y >= y
        let hi = pts.partition_point(|p| p[1] < y);
        let b = pts[hi];
        if b[1] == y || hi == 0 {
            return Some([b[0], b[2]]);
        }
        let a = pts[hi - 1];
        let t = (y - a[1]) / (b[1] - a[1]);
        Some([a[0] + (b[0] - a[0]) * t, a[2] + (b[2] - a[2]) * t])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LaneFrame<T> {
    pub frame_id: String,
    pub lanes: Vec<Lane<T>>,
}

/// Lane sampled at fixed longitudinal stations.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledLane<T> {
    /// `(x, z)` per station; meaningful only where `valid` is set.
    pub points: Vec<[T; 2]>,
    pub valid: Vec<bool>,
}

impl<T: Scalar> ResampledLane<T> {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

pub fn resample_lane<T: Scalar>(lane: &Lane<T>, y_samples: &[T]) -> Result<ResampledLane<T>> {
    lane.validate()?;
    if y_samples.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("y samples must be strictly ascending"));
    }
    let mut points = Vec::with_capacity(y_samples.len());
    let mut valid = Vec::with_capacity(y_samples.len());
    for &y in y_samples {
        match lane.interpolate(y) {
            Some(p) => {
                points.push(p);
                valid.push(true);
            }
            None => {
                points.push([T::nan(), T::nan()]);
                valid.push(false);
            }
        }
    }
    Ok(ResampledLane { points, valid })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalConfig<T> {
    pub thresholds: Vec<T>,
    pub y_samples: Vec<T>,
    /// Stations with `y` below this are "near".
    pub near_far_split: T,
    pub ap_conf_steps: Vec<T>,
    pub min_inlier_ratio: T,
}

impl<T: Scalar> Default for EvalConfig<T> {
    fn default() -> Self {
        Self {
            thresholds: vec![T::of(1.5), T::of(0.5)],
            y_samples: (1..=100).map(T::of_usize).collect(),
            near_far_split: T::of(40.0),
            ap_conf_steps: (1..=19).map(|i| T::of_usize(i) / T::of(20.0)).collect(),
            min_inlier_ratio: T::of(0.75),
        }
    }
}

/// Statistics of one admissible `(pred, gt)` lane pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStats<T> {
    pub inliers: usize,
    pub gt_samples: usize,
    /// Mean over gt stations of the point distance clipped at the threshold.
    pub mean_distance: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneMatch<T> {
    /// `(pred, gt)` pairs sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub stats: Vec<PairStats<T>>,
    /// Lanes with at least one valid station; the others take no part in counting.
    pub scored_preds: Vec<usize>,
    pub scored_gts: Vec<usize>,
}

fn pair_stats<T: Scalar>(pred: &ResampledLane<T>, gt: &ResampledLane<T>, threshold: T) -> PairStats<T> {
    let mut inliers = 0;
    let mut gt_samples = 0;
    let mut clipped = T::zero();
    for i in 0..gt.valid.len() {
        if !gt.valid[i] {
            continue;
        }
        gt_samples += 1;
        let d = if pred.valid[i] {
            let dx = pred.points[i][0] - gt.points[i][0];
            let dz = pred.points[i][1] - gt.points[i][1];
            (dx * dx + dz * dz).sqrt()
        } else {
            T::infinity()
        };
        if d <= threshold {
            inliers += 1;
        }
        clipped = clipped + d.min(threshold);
    }
    let mean_distance = if gt_samples > 0 {
        clipped / T::of_usize(gt_samples)
    } else {
        T::zero()
    };
    PairStats {
        inliers,
        gt_samples,
        mean_distance,
    }
}

fn admissible<T: Scalar>(s: &PairStats<T>, min_ratio: T) -> bool {
    s.gt_samples > 0 && T::of_usize(s.inliers) >= min_ratio * T::of_usize(s.gt_samples)
}

fn match_resampled<T: Scalar>(
    preds: &[ResampledLane<T>],
    gts: &[ResampledLane<T>],
    threshold: T,
    min_ratio: T,
) -> LaneMatch<T> {
    let mut cost = CostMatrix::infeasible(preds.len(), gts.len());
    let mut table = vec![None; preds.len() * gts.len()];
    for (p, pr) in preds.iter().enumerate() {
        for (g, gr) in gts.iter().enumerate() {
            let s = pair_stats(pr, gr, threshold);
            if admissible(&s, min_ratio) {
                cost.set(p, g, s.mean_distance);
                table[p * gts.len() + g] = Some(s);
            }
        }
    }
    let m = solve_assignment(&cost);
    let stats = m
        .pairs
        .iter()
        .map(|&(p, g)| table[p * gts.len() + g].expect("matched pairs are admissible"))
        .collect();
    LaneMatch {
        pairs: m.pairs,
        stats,
        scored_preds: (0..preds.len()).filter(|&p| preds[p].valid_count() > 0).collect(),
        scored_gts: (0..gts.len()).filter(|&g| gts[g].valid_count() > 0).collect(),
    }
}

/// One-to-one lane matching. A pair is admissible when at least `min_inlier_ratio`
/// of the gt stations lie within `threshold` of the prediction; admissible pairs are
/// assigned by minimum total clipped mean distance.
pub fn match_lanes<T: Scalar>(
    preds: &[Lane<T>],
    gts: &[Lane<T>],
    threshold: T,
    cfg: &EvalConfig<T>,
) -> Result<LaneMatch<T>> {
    if !(threshold > T::zero()) {
        return Err(invalid("distance threshold must be positive"));
    }
    let rp = resample_all(preds, &cfg.y_samples)?;
    let rg = resample_all(gts, &cfg.y_samples)?;
    Ok(match_resampled(&rp, &rg, threshold, cfg.min_inlier_ratio))
}

fn resample_all<T: Scalar>(lanes: &[Lane<T>], ys: &[T]) -> Result<Vec<ResampledLane<T>>> {
    lanes.iter().map(|l| resample_lane(l, ys)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FrameStats<T> {
    pub frame_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(skip)]
    errors: ErrorAccumulator<T>,
}

/// Per-lane mean absolute errors, summed over matched lanes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct ErrorAccumulator<T> {
    x_near: T,
    x_far: T,
    z_near: T,
    z_far: T,
    near_lanes: usize,
    far_lanes: usize,
}

impl<T: Scalar> ErrorAccumulator<T> {
    fn merge(&mut self, o: &Self) {
        self.x_near = self.x_near + o.x_near;
        self.x_far = self.x_far + o.x_far;
        self.z_near = self.z_near + o.z_near;
        self.z_far = self.z_far + o.z_far;
        self.near_lanes += o.near_lanes;
        self.far_lanes += o.far_lanes;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalReport<T> {
    pub threshold: T,
    pub f1: T,
    pub precision: T,
    pub recall: T,
    pub ap: T,
    pub x_err_near: T,
    pub x_err_far: T,
    pub z_err_near: T,
    pub z_err_far: T,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frames: Option<Vec<FrameStats<T>>>,
}

struct PreparedFrame<T> {
    frame_id: String,
    preds: Vec<ResampledLane<T>>,
    confidences: Vec<T>,
    gts: Vec<ResampledLane<T>>,
}

fn frame_stats<T: Scalar>(
    f: &PreparedFrame<T>,
    threshold: T,
    min_conf: Option<T>,
    cfg: &EvalConfig<T>,
) -> FrameStats<T> {
    let kept: Vec<usize> = (0..f.preds.len())
        .filter(|&i| min_conf.is_none_or(|c| f.confidences[i] >= c))
        .collect();
    let preds: Vec<ResampledLane<T>> = kept.iter().map(|&i| f.preds[i].clone()).collect();
    let m = match_resampled(&preds, &f.gts, threshold, cfg.min_inlier_ratio);
    let tp = m.pairs.len();
    let mut errors = ErrorAccumulator::default();
    for &(p, g) in &m.pairs {
        let (pr, gr) = (&preds[p], &f.gts[g]);
        let mut near = (T::zero(), T::zero(), 0usize);
        let mut far = (T::zero(), T::zero(), 0usize);
        for (i, y) in cfg.y_samples.iter().enumerate() {
            if !(pr.valid[i] && gr.valid[i]) {
                continue;
            }
            let ex = (pr.points[i][0] - gr.points[i][0]).abs();
            let ez = (pr.points[i][1] - gr.points[i][1]).abs();
            let acc = if *y < cfg.near_far_split { &mut near } else { &mut far };
            acc.0 = acc.0 + ex;
            acc.1 = acc.1 + ez;
            acc.2 += 1;
        }
        if near.2 > 0 {
            let n = T::of_usize(near.2);
            errors.x_near = errors.x_near + near.0 / n;
            errors.z_near = errors.z_near + near.1 / n;
            errors.near_lanes += 1;
        }
        if far.2 > 0 {
            let n = T::of_usize(far.2);
            errors.x_far = errors.x_far + far.0 / n;
            errors.z_far = errors.z_far + far.1 / n;
            errors.far_lanes += 1;
        }
    }
    FrameStats {
        frame_id: f.frame_id.clone(),
        tp,
        fp: m.scored_preds.len() - tp,
        fn_: m.scored_gts.len() - tp,
        errors,
    }
}

fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::of_usize(num) / T::of_usize(den)
    }
}

/// All-point interpolated area under the precision/recall points of a confidence sweep.
fn average_precision<T: Scalar>(mut points: Vec<(T, T)>) -> T {
    points.sort_by(|a, b| crate::scalar::total_cmp(a.0, b.0));
    let mut ap = T::zero();
    let mut prev_recall = T::zero();
    for i in 0..points.len() {
        let r = points[i].0;
        if r <= prev_recall {
            continue;
        }
        let p = points[i..].iter().map(|q| q.1).fold(T::zero(), T::max);
        ap = ap + (r - prev_recall) * p;
        prev_recall = r;
    }
    ap
}

/// Evaluates aligned prediction and ground truth frames, one report per threshold.
pub fn evaluate<T: Scalar>(
    pred_frames: &[LaneFrame<T>],
    gt_frames: &[LaneFrame<T>],
    cfg: &EvalConfig<T>,
    per_frame: bool,
) -> Result<Vec<EvalReport<T>>> {
    let mut preds: Vec<&LaneFrame<T>> = pred_frames.iter().collect();
    let mut gts: Vec<&LaneFrame<T>> = gt_frames.iter().collect();
    preds.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    gts.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    let pred_ids: Vec<&str> = preds.iter().map(|f| f.frame_id.as_str()).collect();
    let gt_ids: Vec<&str> = gts.iter().map(|f| f.frame_id.as_str()).collect();
    if pred_ids != gt_ids {
        let missing = gt_ids
            .iter()
            .chain(&pred_ids)
            .find(|id| !pred_ids.contains(id) || !gt_ids.contains(id))
            .copied()
            .unwrap_or("<duplicate>");
        return Err(invalid(format!("prediction and ground truth frame ids differ (e.g. `{missing}`)")));
    }
    if let Some(t) = cfg.thresholds.iter().find(|t| !(**t > T::zero())) {
        return Err(invalid(format!("distance threshold {t} must be positive")));
    }
    let prepared: Vec<PreparedFrame<T>> = preds
        .par_iter()
        .zip(gts.par_iter())
        .map(|(p, g)| {
            Ok(PreparedFrame {
                frame_id: p.frame_id.clone(),
                preds: resample_all(&p.lanes, &cfg.y_samples)?,
                confidences: p.lanes.iter().map(|l| l.confidence).collect(),
                gts: resample_all(&g.lanes, &cfg.y_samples)?,
            })
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(cfg.thresholds.len());
    for &threshold in &cfg.thresholds {
        let frames: Vec<FrameStats<T>> = prepared
            .par_iter()
            .map(|f| frame_stats(f, threshold, None, cfg))
            .collect();
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        let mut errors = ErrorAccumulator::default();
        for f in &frames {
            tp += f.tp;
            fp += f.fp;
            fn_ += f.fn_;
            errors.merge(&f.errors);
        }
        let precision: T = ratio(tp, tp + fp);
        let recall: T = ratio(tp, tp + fn_);
        let f1 = if precision + recall > T::zero() {
            T::of(2.0) * precision * recall / (precision + recall)
        } else {
            T::zero()
        };
        let sweep: Vec<(T, T)> = cfg
            .ap_conf_steps
            .par_iter()
            .filter_map(|&c| {
                let (mut tp, mut fp, mut fn_) = (0, 0, 0);
                for f in &prepared {
                    let s = frame_stats(f, threshold, Some(c), cfg);
                    tp += s.tp;
                    fp += s.fp;
                    fn_ += s.fn_;
                }
                (tp + fp > 0).then(|| (ratio(tp, tp + fn_), ratio(tp, tp + fp)))
            })
            .collect();
        let mean = |sum: T, n: usize| if n == 0 { T::zero() } else { sum / T::of_usize(n) };
        reports.push(EvalReport {
            threshold,
            f1,
            precision,
            recall,
            ap: average_precision(sweep),
            x_err_near: mean(errors.x_near, errors.near_lanes),
            x_err_far: mean(errors.x_far, errors.far_lanes),
            z_err_near: mean(errors.z_near, errors.near_lanes),
            z_err_far: mean(errors.z_far, errors.far_lanes),
            tp,
            fp,
            fn_,
            frames: per_frame.then_some(frames),
        });
    }
    Ok(reports)
}
