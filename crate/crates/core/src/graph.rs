//! Directed keypoint graphs and lane extraction by shortest paths.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::proposal::Keypoint;
use crate::scalar::{total_cmp, Scalar};

/// Square matrix of directed connection probabilities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix<T> {
    size: usize,
    probs: Vec<T>,
}

impl<T: Scalar> AdjacencyMatrix<T> {
    pub fn new(size: usize, probs: Vec<T>) -> Result<Self> {
        if probs.len() != size * size {
            return Err(invalid(format!(
                "adjacency has {} entries, expected {size}x{size}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
            return Err(invalid(format!("adjacency probability {p} outside [0, 1]")));
        }
        Ok(Self { size, probs })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let size = rows.len();
        if let Some(r) = rows.iter().position(|r| r.len() != size) {
            return Err(invalid(format!(
                "adjacency row {r} has {} entries, expected {size}",
                rows[r].len()
            )));
        }
        Self::new(size, rows.concat())
    }

    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            probs: vec![T::zero(); size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.probs[i * self.size + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: T) {
        assert!(p >= T::zero() && p <= T::one(), "probability outside [0, 1]");
        self.probs[i * self.size + j] = p;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.probs.chunks(self.size.max(1)).map(<[T]>::to_vec).take(self.size).collect()
    }

    /// Restriction to `indices`, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let mut probs = Vec::with_capacity(indices.len() * indices.len());
        for &i in indices {
            for &j in indices {
                probs.push(self.get(i, j));
            }
        }
        Self {
            size: indices.len(),
            probs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub from: usize,
    pub to: usize,
    pub prob: T,
}

/// Edges whose probability exceeds the connection threshold. Self loops are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedLaneGraph<T> {
    pub node_count: usize,
    /// Sorted by `(from, to)`.
    pub edges: Vec<Edge<T>>,
    pub threshold: T,
    out_edges: Vec<Vec<(usize, T)>>,
    in_degree: Vec<usize>,
}

impl<T: Scalar> DirectedLaneGraph<T> {
    pub fn out_degree(&self, node: usize) -> usize {
        self.out_edges[node].len()
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.in_degree[node]
    }

    pub fn successors(&self, node: usize) -> &[(usize, T)] {
        &self.out_edges[node]
    }

    pub fn edge_prob(&self, from: usize, to: usize) -> Option<T> {
        self.out_edges[from].iter().find(|(j, _)| *j == to).map(|(_, p)| *p)
    }
}

pub fn threshold_adjacency<T: Scalar>(adjacency: &AdjacencyMatrix<T>, t_a: T) -> DirectedLaneGraph<T> {
    let n = adjacency.size();
    let mut edges = Vec::new();
    let mut out_edges = vec![Vec::new(); n];
    let mut in_degree = vec![0; n];
    for (i, out) in out_edges.iter_mut().enumerate() {
        for j in 0..n {
            let p = adjacency.get(i, j);
            if i != j && p > t_a {
                edges.push(Edge { from: i, to: j, prob: p });
                out.push((j, p));
                in_degree[j] += 1;
            }
        }
    }
    DirectedLaneGraph {
        node_count: n,
        edges,
        threshold: t_a,
        out_edges,
        in_degree,
    }
}

/// Start nodes (no incoming, some outgoing) and end nodes (some incoming, no outgoing),
/// each ascending.
pub fn find_terminals<T: Scalar>(graph: &DirectedLaneGraph<T>) -> (Vec<usize>, Vec<usize>) {
    let starts = (0..graph.node_count)
        .filter(|&i| graph.in_degree(i) == 0 && graph.out_degree(i) > 0)
        .collect();
    let ends = (0..graph.node_count)
        .filter(|&i| graph.in_degree(i) > 0 && graph.out_degree(i) == 0)
        .collect();
    (starts, ends)
}

#[derive(Debug, Clone, Copy)]
struct Frontier<T> {
    cost: T,
    node: usize,
}

impl<T: Scalar> PartialEq for Frontier<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Frontier<T> {}

impl<T: Scalar> PartialOrd for Frontier<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Frontier<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        total_cmp(self.cost, other.cost).then(self.node.cmp(&other.node))
    }
}

/// Single-source shortest paths under edge weight `1 - p`.
/// Returns `(distance, predecessor)` per node; unreachable nodes have infinite distance.
pub fn shortest_path_tree<T: Scalar>(graph: &DirectedLaneGraph<T>, source: usize) -> (Vec<T>, Vec<Option<usize>>) {
    let n = graph.node_count;
    let mut dist = vec![T::infinity(); n];
    let mut prev = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[source] = T::zero();
    heap.push(Reverse(Frontier {
        cost: T::zero(),
        node: source,
    }));
    while let Some(Reverse(Frontier { cost, node })) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        for &(next, p) in graph.successors(node) {
            let candidate = cost + (T::one() - p);
            if candidate < dist[next] {
                dist[next] = candidate;
                prev[next] = Some(node);
                heap.push(Reverse(Frontier {
                    cost: candidate,
                    node: next,
                }));
            }
        }
    }
    (dist, prev)
}

fn trace_path(prev: &[Option<usize>], source: usize, target: usize) -> Vec<usize> {
    let mut path = vec![target];
    let mut cur = target;
    while cur != source {
        cur = prev[cur].expect("target reachable from source");
        path.push(cur);
    }
    path.reverse();
    path
}

/// Sum of `1 - p` along `path`, accumulated front to back.
pub fn path_weight<T: Scalar>(adjacency: &AdjacencyMatrix<T>, path: &[usize]) -> T {
    path.windows(2)
        .fold(T::zero(), |acc, w| acc + (T::one() - adjacency.get(w[0], w[1])))
}

/// An extracted lane: a start-to-end keypoint path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LaneInstance<T> {
    pub path: Vec<usize>,
    /// Refined `(x + dx, y, z)` per path node.
    pub points: Vec<[T; 3]>,
    pub category: usize,
    pub confidence: T,
}

/// Lane class from the argmax of the mean class distribution (lowest id on ties);
/// lane confidence is the mean per-keypoint maximum class score.
pub fn aggregate_lane_attributes<T: Scalar>(keypoints: &[&Keypoint<T>]) -> Result<(usize, T)> {
    let Some(first) = keypoints.first() else {
        return Err(invalid("cannot aggregate attributes of an empty lane"));
    };
    let classes = first.class_scores.len();
    if keypoints.iter().any(|k| k.class_scores.len() != classes) {
        return Err(invalid("keypoints disagree on the number of classes"));
    }
    let count = T::of_usize(keypoints.len());
    let mut mean = vec![T::zero(); classes];
    for k in keypoints {
        for (m, s) in mean.iter_mut().zip(&k.class_scores) {
            *m = *m + *s;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / count);
    let mut category = 0;
    for (c, m) in mean.iter().enumerate() {
        if *m > mean[category] {
            category = c;
        }
    }
    let confidence = keypoints.iter().map(|k| k.confidence()).sum::<T>() / count;
    Ok((category, confidence))
}

/// Lanes as shortest start-to-end paths of the thresholded graph, ordered by
/// `(start, end)`. Unreachable pairs are skipped.
pub fn extract_lanes<T: Scalar>(
    keypoints: &[Keypoint<T>],
    adjacency: &AdjacencyMatrix<T>,
    t_a: T,
) -> Result<Vec<LaneInstance<T>>> {
    if adjacency.size() != keypoints.len() {
        return Err(invalid(format!(
            "adjacency is {0}x{0} for {1} keypoints",
            adjacency.size(),
            keypoints.len()
        )));
    }
    let graph = threshold_adjacency(adjacency, t_a);
    let (starts, ends) = find_terminals(&graph);
    let mut lanes = Vec::new();
    for &s in &starts {
        let (dist, prev) = shortest_path_tree(&graph, s);
        for &e in &ends {
            if !dist[e].is_finite() {
                continue;
            }
            let path = trace_path(&prev, s, e);
            let members: Vec<&Keypoint<T>> = path.iter().map(|&i| &keypoints[i]).collect();
            let (category, confidence) = aggregate_lane_attributes(&members)?;
            lanes.push(LaneInstance {
                points: members.iter().map(|k| k.point()).collect(),
                path,
                category,
                confidence,
            });
        }
    }
    Ok(lanes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(y: f64, classes: Vec<f64>) -> Keypoint<f64> {
        Keypoint {
            grid_index: (0, 0),
            x: 0.0,
            y,
            dx: 0.0,
            z: 0.0,
            fg_score: 1.0,
            class_scores: classes,
        }
    }

    fn adj(n: usize, entries: &[(usize, usize, f64)]) -> AdjacencyMatrix<f64> {
        let mut a = AdjacencyMatrix::zeros(n);
        for &(i, j, p) in entries {
            a.set(i, j, p);
        }
        a
    }

    #[test]
    fn zero_matrix_has_no_edges() {
        assert!(threshold_adjacency(&AdjacencyMatrix::<f64>::zeros(5), 0.5).edges.is_empty());
    }

    #[test]
    fn single_edge() {
        let g = threshold_adjacency(&adj(3, &[(0, 1, 0.9), (1, 2, 0.4)]), 0.5);
        assert_eq!(g.edges, vec![Edge { from: 0, to: 1, prob: 0.9 }]);
    }

    #[test]
    fn diagonal_is_ignored() {
        let g = threshold_adjacency(&adj(2, &[(0, 0, 1.0), (1, 1, 1.0)]), 0.5);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn chain_terminals() {
        let g = threshold_adjacency(&adj(3, &[(0, 1, 1.0), (1, 2, 1.0)]), 0.5);
        assert_eq!(find_terminals(&g), (vec![0], vec![2]));
    }

    #[test]
    fn isolated_node_is_not_terminal() {
        let g = threshold_adjacency(&adj(4, &[(0, 1, 1.0), (1, 2, 1.0)]), 0.5);
        let (s, e) = find_terminals(&g);
        assert!(!s.contains(&3) && !e.contains(&3));
    }

    #[test]
    fn two_chains() {
        let g = threshold_adjacency(&adj(4, &[(0, 1, 0.8), (2, 3, 0.8)]), 0.5);
        assert_eq!(find_terminals(&g), (vec![0, 2], vec![1, 3]));
    }

    #[test]
    fn five_node_chain_is_one_lane() {
        let kps: Vec<_> = (0..5).map(|i| kp(i as f64, vec![1.0])).collect();
        let a = adj(5, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0)]);
        let lanes = extract_lanes(&kps, &a, 0.5).unwrap();
        assert_eq!(lanes.len(), 1);
        assert_eq!(lanes[0].path, vec![0, 1, 2, 3, 4]);
        assert_eq!(lanes[0].points[2], [0.0, 2.0, 0.0]);
    }

    #[test]
    fn merge_yields_two_lanes_sharing_suffix() {
        // 0 -> 2 <- 1, 2 -> 3 -> 4
        let kps: Vec<_> = (0..5).map(|i| kp(i as f64, vec![1.0])).collect();
        let a = adj(5, &[(0, 2, 0.9), (1, 2, 0.9), (2, 3, 0.9), (3, 4, 0.9)]);
        let lanes = extract_lanes(&kps, &a, 0.5).unwrap();
        let paths: Vec<_> = lanes.iter().map(|l| l.path.clone()).collect();
        assert_eq!(paths, vec![vec![0, 2, 3, 4], vec![1, 2, 3, 4]]);
    }

    #[test]
    fn diamond_prefers_stronger_branch() {
        // s=0, a=1, b=2, e=3 ; via a: 0.1 + 0.1, via b: 0.4 + 0.4
        let kps: Vec<_> = (0..4).map(|i| kp(i as f64, vec![1.0])).collect();
        let a = adj(4, &[(0, 1, 0.9), (1, 3, 0.9), (0, 2, 0.6), (2, 3, 0.6)]);
        let lanes = extract_lanes(&kps, &a, 0.5).unwrap();
        assert_eq!(lanes.len(), 1);
        assert_eq!(lanes[0].path, vec![0, 1, 3]);
    }

    #[test]
    fn pure_cycle_yields_nothing() {
        let kps: Vec<_> = (0..3).map(|i| kp(i as f64, vec![1.0])).collect();
        let a = adj(3, &[(0, 1, 0.9), (1, 2, 0.9), (2, 0, 0.9)]);
        assert!(extract_lanes(&kps, &a, 0.5).unwrap().is_empty());
    }

    #[test]
    fn unreachable_pairs_are_skipped() {
        let kps: Vec<_> = (0..4).map(|i| kp(i as f64, vec![1.0])).collect();
        let a = adj(4, &[(0, 1, 0.9), (2, 3, 0.9)]);
        let lanes = extract_lanes(&kps, &a, 0.5).unwrap();
        let paths: Vec<_> = lanes.iter().map(|l| l.path.clone()).collect();
        assert_eq!(paths, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let kps = vec![kp(0.0, vec![1.0])];
        assert!(extract_lanes(&kps, &AdjacencyMatrix::zeros(2), 0.5).is_err());
    }

    #[test]
    fn one_hot_lane_attributes() {
        let k = kp(0.0, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(aggregate_lane_attributes(&[&k, &k, &k]).unwrap(), (3, 1.0));
    }

    #[test]
    fn tied_mean_prefers_lowest_class() {
        let a = kp(0.0, vec![0.6, 0.4]);
        let b = kp(1.0, vec![0.4, 0.6]);
        let (c, conf) = aggregate_lane_attributes(&[&a, &b]).unwrap();
        assert_eq!(c, 0);
        assert!((conf - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_lane_is_rejected() {
        assert!(aggregate_lane_attributes::<f64>(&[]).is_err());
    }

    #[test]
    fn probabilities_are_validated() {
        assert!(AdjacencyMatrix::new(1, vec![1.5]).is_err());
        assert!(AdjacencyMatrix::from_rows(&[vec![0.1, 0.2], vec![0.3]]).is_err());
        assert!(AdjacencyMatrix::<f64>::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]).is_ok());
    }
}
