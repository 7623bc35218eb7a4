//! Brute-force reference implementations for small inputs. They share no code with
//! the production kernels beyond the data types.

use crate::assignment::{CostMatrix, Matching};
use crate::error::{invalid, Result};
use crate::graph::AdjacencyMatrix;
use crate::proposal::PointNmsParams;
use crate::scalar::Scalar;

pub const ORACLE_NMS_MAX_POINTS: usize = 512;
pub const ORACLE_ASSIGNMENT_MAX_DIM: usize = 7;
pub const ORACLE_PATHS_MAX_NODES: usize = 12;

fn round_half_away(v: f64) -> i64 {
    let r = v.abs().floor() + if v.abs().fract() >= 0.5 { 1.0 } else { 0.0 };
    (r as i64) * if v < 0.0 { -1 } else { 1 }
}

/// Pairwise greedy suppression: visit points by descending score (index on ties) and
/// keep one iff its box overlaps no kept box by more than the IoU threshold.
pub fn oracle_nms<T: Scalar>(points: &[[T; 2]], scores: &[T], params: &PointNmsParams<T>) -> Result<Vec<usize>> {
    if points.len() > ORACLE_NMS_MAX_POINTS {
        return Err(invalid(format!("oracle_nms limited to {ORACLE_NMS_MAX_POINTS} points")));
    }
    if points.len() != scores.len() {
        return Err(invalid("one score per point"));
    }
    let r = params.r.as_f64();
    let (tx, ty) = (params.thresh_x.as_f64(), params.thresh_y.as_f64());
    let boxes: Vec<[i64; 4]> = points
        .iter()
        .map(|p| {
            let (x, y) = (p[0].as_f64() * r, p[1].as_f64() * r);
            [
                round_half_away(x - r / 2.0 * tx),
                round_half_away(y - r / 2.0 * ty),
                round_half_away(x + r / 2.0 * tx),
                round_half_away(y + r / 2.0 * ty),
            ]
        })
        .collect();
    let iou = |a: &[i64; 4], b: &[i64; 4]| -> f64 {
        let area = |q: &[i64; 4]| ((q[2] - q[0]).max(0) * (q[3] - q[1]).max(0)) as f64;
        let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0) as f64;
        let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0) as f64;
        let union = area(a) + area(b) - iw * ih;
        if union > 0.0 {
            iw * ih / union
        } else {
            0.0
        }
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    // selection sort keeps the oracle free of comparator subtleties
    for i in 0..order.len() {
        let mut best = i;
        for j in i + 1..order.len() {
            let (a, b) = (order[j], order[best]);
            let (sa, sb) = (scores[a].as_f64(), scores[b].as_f64());
            if sa > sb || (sa == sb && a < b) {
                best = j;
            }
        }
        order.swap(i, best);
    }
    let thr = params.iou_thresh.as_f64();
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if kept.iter().all(|&k| iou(&boxes[k], &boxes[i]) <= thr) {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Enumerates every partial one-to-one matching over feasible entries and returns the
/// best by (most pairs, least total cost, lexicographically smallest pair list).
pub fn oracle_assignment<T: Scalar>(cost: &CostMatrix<T>) -> Result<Matching> {
    let (rows, cols) = (cost.rows(), cost.cols());
    if rows > ORACLE_ASSIGNMENT_MAX_DIM || cols > ORACLE_ASSIGNMENT_MAX_DIM {
        return Err(invalid(format!(
            "oracle_assignment limited to {ORACLE_ASSIGNMENT_MAX_DIM}x{ORACLE_ASSIGNMENT_MAX_DIM}"
        )));
    }
    struct Search<'a, T> {
        cost: &'a CostMatrix<T>,
        used: Vec<bool>,
        current: Vec<(usize, usize)>,
        best: Option<(Vec<(usize, usize)>, T)>,
    }
    impl<T: Scalar> Search<'_, T> {
        fn visit(&mut self, r: usize) {
            if r == self.cost.rows() {
                let total = self
                    .current
                    .iter()
                    .fold(T::zero(), |acc, &(i, j)| acc + self.cost.get(i, j));
                let better = match &self.best {
                    None => true,
                    Some((pairs, c)) => {
                        self.current.len() > pairs.len()
                            || (self.current.len() == pairs.len()
                                && (total < *c || (total == *c && self.current < *pairs)))
                    }
                };
                if better {
                    self.best = Some((self.current.clone(), total));
                }
                return;
            }
            for c in 0..self.cost.cols() {
                if !self.used[c] && self.cost.is_feasible(r, c) {
                    self.used[c] = true;
                    self.current.push((r, c));
                    self.visit(r + 1);
                    self.current.pop();
                    self.used[c] = false;
                }
            }
            self.visit(r + 1);
        }
    }
    let mut search = Search {
        cost,
        used: vec![false; cols],
        current: Vec::new(),
        best: None,
    };
    search.visit(0);
    let pairs = search.best.map(|(p, _)| p).unwrap_or_default();
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &pairs {
        row_used[r] = true;
        col_used[c] = true;
    }
    Ok(Matching {
        pairs,
        unmatched_proposals: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_gts: (0..cols).filter(|&c| !col_used[c]).collect(),
    })
}

/// Minimum-weight simple paths between one start and one end node.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePath<T> {
    pub start: usize,
    pub end: usize,
    pub weight: T,
    /// Every simple path attaining `weight`.
    pub best_paths: Vec<Vec<usize>>,
}

/// Exhaustive search over simple paths of the graph with edges `p > t_a`, for every
/// (start, end) terminal pair with at least one path. Ordered by `(start, end)`.
pub fn oracle_paths<T: Scalar>(adjacency: &AdjacencyMatrix<T>, t_a: T) -> Result<Vec<OraclePath<T>>> {
    let n = adjacency.size();
    if n > ORACLE_PATHS_MAX_NODES {
        return Err(invalid(format!("oracle_paths limited to {ORACLE_PATHS_MAX_NODES} nodes")));
    }
    let edge = |i: usize, j: usize| i != j && adjacency.get(i, j) > t_a;
    let out_deg: Vec<usize> = (0..n).map(|i| (0..n).filter(|&j| edge(i, j)).count()).collect();
    let in_deg: Vec<usize> = (0..n).map(|j| (0..n).filter(|&i| edge(i, j)).count()).collect();
    let is_end = |v: usize| in_deg[v] > 0 && out_deg[v] == 0;

    let mut results = Vec::new();
    for s in (0..n).filter(|&v| in_deg[v] == 0 && out_deg[v] > 0) {
        let mut best: Vec<Option<(T, Vec<Vec<usize>>)>> = vec![None; n];
        let mut path = vec![s];
        let mut on_path = vec![false; n];
        on_path[s] = true;
        enumerate(adjacency, &edge, &mut path, &mut on_path, &mut |p: &[usize]| {
            let last = *p.last().unwrap();
            if !is_end(last) {
                return;
            }
            let w = p
                .windows(2)
                .fold(T::zero(), |acc, e| acc + (T::one() - adjacency.get(e[0], e[1])));
            match &mut best[last] {
                Some((bw, paths)) if w == *bw => paths.push(p.to_vec()),
                Some((bw, _)) if w > *bw => {}
                slot => *slot = Some((w, vec![p.to_vec()])),
            }
        });
        for (e, b) in best.into_iter().enumerate() {
            if let Some((weight, best_paths)) = b {
                results.push(OraclePath {
                    start: s,
                    end: e,
                    weight,
                    best_paths,
                });
            }
        }
    }
    Ok(results)
}

fn enumerate<T: Scalar>(
    adjacency: &AdjacencyMatrix<T>,
    edge: &dyn Fn(usize, usize) -> bool,
    path: &mut Vec<usize>,
    on_path: &mut Vec<bool>,
    visit: &mut dyn FnMut(&[usize]),
) {
    visit(path);
    let last = *path.last().unwrap();
    for next in 0..adjacency.size() {
        if !on_path[next] && edge(last, next) {
            on_path[next] = true;
            path.push(next);
            enumerate(adjacency, edge, path, on_path, visit);
            path.pop();
            on_path[next] = false;
        }
    }
}
