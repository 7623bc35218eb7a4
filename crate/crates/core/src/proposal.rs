//! Keypoint proposals: top-N selection from the foreground map, lateral offsets, and PointNMS.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::AnchorGrid;
use crate::scalar::{total_cmp, Scalar};

/// A lane keypoint anchored at a BEV grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Keypoint<T> {
    /// `(row, col)` of the originating anchor.
    pub grid_index: (usize, usize),
    /// Anchor lateral position (m).
    pub x: T,
    /// Anchor longitudinal position (m).
    pub y: T,
    /// Regressed lateral offset (m).
    pub dx: T,
    /// Regressed height (m).
    pub z: T,
    pub fg_score: T,
    pub class_scores: Vec<T>,
}

impl<T: Scalar> Keypoint<T> {
    pub fn anchor(grid: &AnchorGrid<T>, row: usize, col: usize) -> Self {
        let [x, y] = grid.position(row, col);
        Self {
            grid_index: (row, col),
            x,
            y,
            dx: T::zero(),
            z: T::zero(),
            fg_score: T::zero(),
            class_scores: Vec::new(),
        }
    }

    pub fn refined_x(&self) -> T {
        self.x + self.dx
    }

    pub fn row(&self) -> usize {
        self.grid_index.0
    }

    /// Refined `(x + dx, y, z)`.
    pub fn point(&self) -> [T; 3] {
        [self.refined_x(), self.y, self.z]
    }

    /// Proposal confidence: the maximum class score (zero with no classes).
    pub fn confidence(&self) -> T {
        self.class_scores.iter().copied().fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet<T> {
    pub keypoints: Vec<Keypoint<T>>,
    /// Proposals allotted per target keypoint.
    pub repeats_n: usize,
}

impl<T: Scalar> ProposalSet<T> {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn with_repeats(mut self, repeats_n: usize) -> Self {
        self.repeats_n = repeats_n;
        self
    }

    /// Number of target keypoints this proposal budget is sized for (`N / n`).
    pub fn target_count(&self) -> usize {
        self.keypoints.len() / self.repeats_n.max(1)
    }

    pub fn refined_points(&self) -> Vec<[T; 2]> {
        self.keypoints.iter().map(|k| [k.refined_x(), k.y]).collect()
    }

    pub fn confidences(&self) -> Vec<T> {
        self.keypoints.iter().map(Keypoint::confidence).collect()
    }

    pub fn set_class_scores(&mut self, scores: Vec<Vec<T>>) -> Result<()> {
        if scores.len() != self.keypoints.len() {
            return Err(invalid(format!(
                "{} class score vectors for {} proposals",
                scores.len(),
                self.keypoints.len()
            )));
        }
        for (k, s) in self.keypoints.iter_mut().zip(scores) {
            k.class_scores = s;
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            keypoints: indices.iter().map(|&i| self.keypoints[i].clone()).collect(),
            repeats_n: 1,
        }
    }
}

/// Picks the `n` highest-scoring cells of a row-major `rows x cols` score map.
/// Equal scores are ordered by `(row, col)`.
pub fn select_topn_proposals<T: Scalar>(
    score_map: &[T],
    grid: &AnchorGrid<T>,
    n: usize,
) -> Result<ProposalSet<T>> {
    if score_map.len() != grid.len() {
        return Err(invalid(format!(
            "score map has {} cells, grid has {}",
            score_map.len(),
            grid.len()
        )));
    }
    if n > grid.len() {
        return Err(invalid(format!("cannot select {n} proposals from {} cells", grid.len())));
    }
    let mut order: Vec<usize> = (0..score_map.len()).collect();
    let by_score = |a: &usize, b: &usize| descending(score_map[*a], score_map[*b]).then(a.cmp(b));
    if n < order.len() && n > 0 {
        order.select_nth_unstable_by(n - 1, by_score);
    }
    order.truncate(n);
    order.sort_by(by_score);
    let keypoints = order
        .into_iter()
        .map(|i| {
            let mut k = Keypoint::anchor(grid, i / grid.cols, i % grid.cols);
            k.fg_score = score_map[i];
            k
        })
        .collect();
    Ok(ProposalSet {
        keypoints,
        repeats_n: 1,
    })
}

/// Stores regressed offsets and heights. Anchor positions are left untouched.
pub fn apply_offsets<T: Scalar>(mut proposals: ProposalSet<T>, dx: &[T], z: &[T]) -> Result<ProposalSet<T>> {
    if dx.len() != proposals.len() || z.len() != proposals.len() {
        return Err(invalid(format!(
            "offset lengths ({}, {}) do not match {} proposals",
            dx.len(),
            z.len(),
            proposals.len()
        )));
    }
    for ((k, &dx), &z) in proposals.keypoints.iter_mut().zip(dx).zip(z) {
        k.dx = dx;
        k.z = z;
    }
    Ok(proposals)
}

/// Integer axis-aligned box `[x1, y1, x2, y2]`.
pub type IntBox = [i64; 4];

pub fn box_area(b: &IntBox) -> i64 {
    (b[2] - b[0]).max(0) * (b[3] - b[1]).max(0)
}

/// Intersection over union. Degenerate pairs with empty union score zero.
pub fn box_iou<T: Scalar>(a: &IntBox, b: &IntBox) -> T {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0);
    let inter = w * h;
    let union = box_area(a) + box_area(b) - inter;
    if union <= 0 {
        return T::zero();
    }
    T::from_i64(inter).unwrap() / T::from_i64(union).unwrap()
}

/// Greedy box suppression. Returns kept indices in descending score order.
pub fn box_nms<T: Scalar>(boxes: &[IntBox], scores: &[T], iou_thresh: T) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len(), "one score per box");
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| descending(scores[a], scores[b]).then(a.cmp(&b)));
    let mut suppressed = vec![false; boxes.len()];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && box_iou::<T>(&boxes[i], &boxes[j]) > iou_thresh {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// PointNMS configuration. `r` scales meters into the integer box lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PointNmsParams<T> {
    pub thresh_x: T,
    pub thresh_y: T,
    pub r: T,
    pub iou_thresh: T,
}

impl<T: Scalar> PointNmsParams<T> {
    pub fn new(thresh_x: T, thresh_y: T) -> Self {
        Self {
            thresh_x,
            thresh_y,
            r: T::of(10.0),
            iou_thresh: T::of(0.1),
        }
    }

    /// Lateral window of twice the widest anchor spacing; longitudinal window of half
    /// the narrowest row gap, so suppression never crosses rows.
    pub fn for_grid(grid: &AnchorGrid<T>) -> Self {
        Self::new(
            T::of(2.0) * grid.max_lateral_spacing(),
            T::of(0.5) * grid.min_row_spacing(),
        )
    }
}

/// Boxes of `r * thresh_x` by `r * thresh_y` centered on the scaled points,
/// rounded half away from zero.
pub fn point_boxes<T: Scalar>(points: &[[T; 2]], params: &PointNmsParams<T>) -> Vec<IntBox> {
    let half = params.r / T::of(2.0);
    points
        .iter()
        .map(|&[x, y]| {
            let x1 = x * params.r - half * params.thresh_x;
            let x2 = x * params.r + half * params.thresh_x;
            let y1 = y * params.r - half * params.thresh_y;
            let y2 = y * params.r + half * params.thresh_y;
            [round_i64(x1), round_i64(y1), round_i64(x2), round_i64(y2)]
        })
        .collect()
}

pub fn point_nms<T: Scalar>(points: &[[T; 2]], scores: &[T], params: &PointNmsParams<T>) -> Vec<usize> {
    let boxes = point_boxes(points, params);
    box_nms(&boxes, scores, params.iou_thresh)
}

/// PointNMS over refined proposal positions, scored by max class probability.
pub fn point_nms_proposals<T: Scalar>(proposals: &[Keypoint<T>], params: &PointNmsParams<T>) -> Vec<usize> {
    let points: Vec<[T; 2]> = proposals.iter().map(|k| [k.refined_x(), k.y]).collect();
    let scores: Vec<T> = proposals.iter().map(Keypoint::confidence).collect();
    point_nms(&points, &scores, params)
}

fn round_i64<T: Scalar>(v: T) -> i64 {
    v.round().to_i64().expect("box coordinate out of i64 range")
}

/// Descending order with NaN last.
fn descending<T: Scalar>(a: T, b: T) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => total_cmp(b, a),
    }
}
