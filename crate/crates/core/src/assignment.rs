//! Proposal-to-ground-truth matching under spatial constraints, and connection targets.
//!
//! The assignment objective is lexicographic: first the number of feasible pairs is
//! maximized, then their total cost is minimized. Among equally good matchings the
//! one with the lexicographically smallest sorted pair list is returned.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::AnchorGrid;
use crate::graph::AdjacencyMatrix;
use crate::metrics::Lane;
use crate::proposal::Keypoint;
use crate::scalar::Scalar;

/// Lateral tolerance between the refined proposal and the ground truth (m).
pub const MAX_REFINED_LATERAL_GAP: f64 = 1.0;
/// Lateral tolerance between the fixed anchor and the ground truth (m).
pub const MAX_ANCHOR_LATERAL_GAP: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GroundTruthKeypoint<T> {
    pub lane_id: usize,
    pub order_in_lane: usize,
    /// Anchor row the keypoint lies on.
    pub row: usize,
    pub x: T,
    pub y: T,
    pub z: T,
    pub category: usize,
}

/// Rectangular cost matrix. Infeasible entries hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    rows: usize,
    cols: usize,
    costs: Vec<T>,
}

impl<T: Scalar> CostMatrix<T> {
    pub fn new(rows: usize, cols: usize, costs: Vec<T>) -> Result<Self> {
        if costs.len() != rows * cols {
            return Err(invalid(format!(
                "cost matrix has {} entries, expected {rows}x{cols}",
                costs.len()
            )));
        }
        if costs.iter().any(|c| c.is_nan() || *c < T::zero() || *c == T::neg_infinity()) {
            return Err(invalid("costs must be non-negative or +inf"));
        }
        Ok(Self { rows, cols, costs })
    }

    pub fn infeasible(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            costs: vec![T::infinity(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.costs[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.costs[r * self.cols + c] = v;
    }

    pub fn is_feasible(&self, r: usize, c: usize) -> bool {
        self.get(r, c).is_finite()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// `(proposal, ground truth)` pairs sorted by proposal.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_proposals: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

impl Matching {
    fn from_pairs(mut pairs: Vec<(usize, usize)>, rows: usize, cols: usize) -> Self {
        pairs.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c) in &pairs {
            row_used[r] = true;
            col_used[c] = true;
        }
        Self {
            pairs,
            unmatched_proposals: (0..rows).filter(|&r| !row_used[r]).collect(),
            unmatched_gts: (0..cols).filter(|&c| !col_used[c]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Total cost accumulated in pair order.
    pub fn total_cost<T: Scalar>(&self, cost: &CostMatrix<T>) -> T {
        self.pairs.iter().fold(T::zero(), |acc, &(r, c)| acc + cost.get(r, c))
    }

    pub fn gt_of(&self, proposal: usize) -> Option<usize> {
        self.pairs.iter().find(|(p, _)| *p == proposal).map(|(_, g)| *g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CostWeights<T> {
    pub lambda_dist: T,
    pub lambda_cls: T,
}

impl<T: Scalar> Default for CostWeights<T> {
    fn default() -> Self {
        Self {
            lambda_dist: T::one(),
            lambda_cls: T::one(),
        }
    }
}

/// Samples ground truth lanes at every grid row inside their longitudinal extent.
pub fn gt_keypoints_from_lanes<T: Scalar>(lanes: &[Lane<T>], grid: &AnchorGrid<T>) -> Result<Vec<GroundTruthKeypoint<T>>> {
    let mut out = Vec::new();
    for (lane_id, lane) in lanes.iter().enumerate() {
        lane.validate()?;
        let mut order = 0;
        for row in 0..grid.rows {
            let y = grid.row_y(row);
            if let Some([x, z]) = lane.interpolate(y) {
                out.push(GroundTruthKeypoint {
                    lane_id,
                    order_in_lane: order,
                    row,
                    x,
                    y,
                    z,
                    category: lane.category,
                });
                order += 1;
            }
        }
    }
    Ok(out)
}

/// True when none of the spatial rejection rules fires.
pub fn spatially_feasible<T: Scalar>(p: &Keypoint<T>, g: &GroundTruthKeypoint<T>) -> bool {
    (p.refined_x() - g.x).abs() <= T::of(MAX_REFINED_LATERAL_GAP)
        && (p.x - g.x).abs() <= T::of(MAX_ANCHOR_LATERAL_GAP)
        && p.row() == g.row
}

/// `lambda_dist * |x + dx - x_gt| + lambda_cls * (1 - p[class_gt])`, or `+inf` where
/// the spatial rules reject the pair.
pub fn build_cost_matrix<T: Scalar>(
    proposals: &[Keypoint<T>],
    gts: &[GroundTruthKeypoint<T>],
    weights: CostWeights<T>,
) -> CostMatrix<T> {
    let mut m = CostMatrix::infeasible(proposals.len(), gts.len());
    for (r, p) in proposals.iter().enumerate() {
        for (c, g) in gts.iter().enumerate() {
            if !spatially_feasible(p, g) {
                continue;
            }
            let class_p = p.class_scores.get(g.category).copied().unwrap_or(T::zero());
            let cost =
                weights.lambda_dist * (p.refined_x() - g.x).abs() + weights.lambda_cls * (T::one() - class_p);
            m.set(r, c, cost.max(T::zero()));
        }
    }
    m
}

/// Optimal one-to-one assignment over feasible entries.
pub fn solve_assignment<T: Scalar>(cost: &CostMatrix<T>) -> Matching {
    let feasible = |r: usize, c: usize| cost.is_feasible(r, c);
    let mut pairs = Vec::new();
    for (rows, cols) in components(cost.rows, cost.cols, &feasible) {
        let sub = |r: usize, c: usize| cost.get(r, c).as_f64();
        pairs.extend(lex_min_assignment(&rows, &cols, &feasible, &sub));
    }
    Matching::from_pairs(pairs, cost.rows, cost.cols)
}

/// Connected components of the feasibility graph that contain at least one edge,
/// each as ascending `(rows, cols)`.
fn components(rows: usize, cols: usize, feasible: &dyn Fn(usize, usize) -> bool) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut parent: Vec<usize> = (0..rows + cols).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut has_edge = vec![false; rows + cols];
    for r in 0..rows {
        for c in 0..cols {
            if feasible(r, c) {
                has_edge[r] = true;
                has_edge[rows + c] = true;
                let (a, b) = (find(&mut parent, r), find(&mut parent, rows + c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>, Vec<usize>)> = Vec::new();
    for v in 0..rows + cols {
        if !has_edge[v] {
            continue;
        }
        let root = find(&mut parent, v);
        let idx = match groups.iter().position(|g| g.0 == root) {
            Some(i) => i,
            None => {
                groups.push((root, Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        if v < rows {
            groups[idx].1.push(v);
        } else {
            groups[idx].2.push(v - rows);
        }
    }
    groups.into_iter().map(|(_, r, c)| (r, c)).collect()
}

/// Hungarian solution of a dense problem with infeasible entries priced at a big-M.
struct DenseSolution {
    /// Column assigned to each row, if any (possibly an infeasible one).
    row_to_col: Vec<Option<usize>>,
    row_dual: Vec<f64>,
    col_dual: Vec<f64>,
    value: f64,
}

impl DenseSolution {
    fn without(mut self, ri: usize, cj: Option<usize>, pair_cost: f64) -> Self {
        self.value -= pair_cost;
        self.row_to_col.remove(ri);
        self.row_dual.remove(ri);
        if let Some(cj) = cj {
            self.col_dual.remove(cj);
            for c in self.row_to_col.iter_mut().flatten() {
                if *c > cj {
                    *c -= 1;
                }
            }
        }
        self
    }
}

/// Shortest augmenting path Hungarian method on an `n x m` matrix with `n <= m`.
/// Returns the column of every row plus dual potentials `u`, `v` with
/// `c[i][j] - u[i] - v[j] >= 0`, tight on the assignment.
fn hungarian_rows_le_cols(n: usize, m: usize, c: &dyn Fn(usize, usize) -> f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    (assign, u[1..].to_vec(), v[1..].to_vec())
}

fn solve_dense(n: usize, m: usize, c: &dyn Fn(usize, usize) -> f64) -> DenseSolution {
    if n == 0 || m == 0 {
        return DenseSolution {
            row_to_col: vec![None; n],
            row_dual: vec![0.0; n],
            col_dual: vec![0.0; m],
            value: 0.0,
        };
    }
    if n <= m {
        let (assign, u, v) = hungarian_rows_le_cols(n, m, c);
        let value = assign.iter().enumerate().map(|(i, &j)| c(i, j)).sum();
        DenseSolution {
            row_to_col: assign.into_iter().map(Some).collect(),
            row_dual: u,
            col_dual: v,
            value,
        }
    } else {
        let ct = |i: usize, j: usize| c(j, i);
        let (assign, u, v) = hungarian_rows_le_cols(m, n, &ct);
        let mut row_to_col = vec![None; n];
        for (col, &row) in assign.iter().enumerate() {
            row_to_col[row] = Some(col);
        }
        let value = assign.iter().enumerate().map(|(j, &i)| c(i, j)).sum();
        DenseSolution {
            row_to_col,
            row_dual: v,
            col_dual: u,
            value,
        }
    }
}

/// Lexicographically smallest optimal matching of one component.
fn lex_min_assignment(
    rows: &[usize],
    cols: &[usize],
    feasible: &dyn Fn(usize, usize) -> bool,
    cost: &dyn Fn(usize, usize) -> f64,
) -> Vec<(usize, usize)> {
    let max_cost = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .filter(|&(r, c)| feasible(r, c))
        .map(|(r, c)| cost(r, c))
        .fold(0.0f64, f64::max);
    let big = (max_cost + 1.0) * (rows.len().min(cols.len()) as f64 + 1.0) * 2.0;
    let tol = 1e-9 * big * (rows.len().max(cols.len()) as f64 + 1.0);
    let priced = |r: usize, c: usize| if feasible(r, c) { cost(r, c) } else { big };
    let solve = |fr: &[usize], fc: &[usize]| solve_dense(fr.len(), fc.len(), &|i, j| priced(fr[i], fc[j]));

    let mut free_rows = rows.to_vec();
    let mut free_cols = cols.to_vec();
    // `sol.value` is always the optimum of the still-free subproblem
    let mut sol = solve(&free_rows, &free_cols);
    let mut pairs = Vec::new();

    for &r in rows {
        let ri = free_rows.iter().position(|&x| x == r).expect("row still free");
        let current = sol.row_to_col[ri].filter(|&cj| feasible(r, free_cols[cj]));
        let mut chosen: Option<(usize, Option<DenseSolution>)> = None;
        for cj in 0..free_cols.len() {
            let c = free_cols[cj];
            if !feasible(r, c) || priced(r, c) - sol.row_dual[ri] - sol.col_dual[cj] > tol {
                continue;
            }
            if current == Some(cj) {
                chosen = Some((cj, None));
                break;
            }
            let fr: Vec<usize> = free_rows.iter().copied().filter(|&x| x != r).collect();
            let fc: Vec<usize> = free_cols.iter().copied().filter(|&x| x != c).collect();
            let trial = solve(&fr, &fc);
            if (priced(r, c) + trial.value - sol.value).abs() <= tol {
                chosen = Some((cj, Some(trial)));
                break;
            }
        }
        match chosen {
            Some((cj, trial)) => {
                let c = free_cols[cj];
                pairs.push((r, c));
                free_rows.remove(ri);
                free_cols.remove(cj);
                sol = match trial {
                    Some(t) => t,
                    None => sol.without(ri, Some(cj), priced(r, c)),
                };
            }
            None => {
                let held_column = sol.row_to_col[ri].is_some();
                free_rows.remove(ri);
                sol = if held_column {
                    solve(&free_rows, &free_cols)
                } else {
                    sol.without(ri, None, 0.0)
                };
            }
        }
    }
    pairs
}

/// Matches proposals against ground truth keypoints. Unless `strongest` is set, each
/// ground truth keypoint is offered `repeats_n` times; pairs report original gt indices.
pub fn match_keypoints<T: Scalar>(
    proposals: &[Keypoint<T>],
    gts: &[GroundTruthKeypoint<T>],
    repeats_n: usize,
    strongest: bool,
    weights: CostWeights<T>,
) -> Result<Matching> {
    if repeats_n == 0 {
        return Err(invalid("repeats_n must be at least 1"));
    }
    let copies = if strongest { 1 } else { repeats_n };
    let base = build_cost_matrix(proposals, gts, weights);
    let mut expanded = CostMatrix::infeasible(proposals.len(), gts.len() * copies);
    for r in 0..proposals.len() {
        for g in 0..gts.len() {
            for k in 0..copies {
                expanded.set(r, g * copies + k, base.get(r, g));
            }
        }
    }
    let m = solve_assignment(&expanded);
    let pairs = m.pairs.into_iter().map(|(r, c)| (r, c / copies)).collect();
    Ok(Matching::from_pairs(pairs, proposals.len(), gts.len()))
}

/// 0/1 connection targets over `size` proposals: along every ground truth lane, each
/// matched keypoint points at the proposal of the next matched keypoint.
pub fn build_connection_targets<T: Scalar>(
    matching: &Matching,
    gts: &[GroundTruthKeypoint<T>],
    size: usize,
) -> Result<AdjacencyMatrix<T>> {
    let mut proposal_of = vec![None; gts.len()];
    for &(p, g) in &matching.pairs {
        if p >= size || g >= gts.len() {
            return Err(invalid(format!("pair ({p}, {g}) out of range")));
        }
        // lowest proposal wins when a gt was matched more than once
        if proposal_of[g].is_none() {
            proposal_of[g] = Some(p);
        }
    }
    let mut order: Vec<usize> = (0..gts.len()).collect();
    order.sort_by_key(|&g| (gts[g].lane_id, gts[g].order_in_lane));
    let mut targets = AdjacencyMatrix::zeros(size);
    let mut prev: Option<(usize, usize)> = None;
    for g in order {
        let Some(p) = proposal_of[g] else {
            continue;
        };
        if let Some((lane, q)) = prev {
            if lane == gts[g].lane_id && q != p {
                targets.set(q, p, T::one());
            }
        }
        prev = Some((gts[g].lane_id, p));
    }
    Ok(targets)
}
