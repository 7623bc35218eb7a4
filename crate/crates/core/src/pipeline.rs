//! Inference-time post-processing of one frame: PointNMS, adjacency restriction to the
//! kept keypoints and lane extraction.

use crate::error::Result;
use crate::graph::{extract_lanes, AdjacencyMatrix, LaneInstance};
use crate::metrics::{Lane, LaneFrame};
use crate::proposal::{point_nms_proposals, Keypoint, PointNmsParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostProcessConfig<T> {
    pub t_a: T,
    /// `None` skips suppression and extracts over every keypoint.
    pub nms: Option<PointNmsParams<T>>,
    pub min_lane_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostProcessOutput<T> {
    /// Surviving keypoint indices, ascending.
    pub kept: Vec<usize>,
    /// Lanes whose paths index the original keypoint list.
    pub lanes: Vec<LaneInstance<T>>,
}

pub fn post_process<T: Scalar>(
    keypoints: &[Keypoint<T>],
    adjacency: &AdjacencyMatrix<T>,
    cfg: &PostProcessConfig<T>,
) -> Result<PostProcessOutput<T>> {
    let kept: Vec<usize> = match &cfg.nms {
        Some(params) => {
            let mut k = point_nms_proposals(keypoints, params);
            k.sort_unstable();
            k
        }
        None => (0..keypoints.len()).collect(),
    };
    let sub_points: Vec<Keypoint<T>> = kept.iter().map(|&i| keypoints[i].clone()).collect();
    let sub_adj = adjacency.submatrix(&kept);
    let mut lanes = extract_lanes(&sub_points, &sub_adj, cfg.t_a)?;
    lanes.retain(|l| l.path.len() >= cfg.min_lane_points);
    for lane in &mut lanes {
        lane.path.iter_mut().for_each(|i| *i = kept[*i]);
    }
    Ok(PostProcessOutput { kept, lanes })
}

pub fn lanes_to_frame<T: Scalar>(frame_id: &str, lanes: &[LaneInstance<T>]) -> LaneFrame<T> {
    LaneFrame {
        frame_id: frame_id.to_string(),
        lanes: lanes
            .iter()
            .map(|l| Lane {
                points: l.points.clone(),
                category: l.category,
                confidence: l.confidence,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BenchStats {
    pub frames: usize,
    pub iterations: usize,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub mean_kept: f64,
    pub mean_lanes: f64,
}

/// Times `post_process` on every frame `iterations` times on the calling thread.
pub fn benchmark<T: Scalar>(
    frames: &[(Vec<Keypoint<T>>, AdjacencyMatrix<T>)],
    cfg: &PostProcessConfig<T>,
    iterations: usize,
) -> Result<BenchStats> {
    let mut samples = Vec::with_capacity(frames.len() * iterations);
    let (mut kept, mut lanes) = (0usize, 0usize);
    for _ in 0..iterations {
        for (keypoints, adjacency) in frames {
            let start = std::time::Instant::now();
            let out = post_process(keypoints, adjacency, cfg)?;
            samples.push(start.elapsed().as_secs_f64() * 1e3);
            kept += out.kept.len();
            lanes += out.lanes.len();
        }
    }
    samples.sort_by(f64::total_cmp);
    let runs = samples.len().max(1) as f64;
    let pick = |q: f64| {
        if samples.is_empty() {
            0.0
        } else {
            samples[((samples.len() - 1) as f64 * q).round() as usize]
        }
    };
    Ok(BenchStats {
        frames: frames.len(),
        iterations,
        median_ms: pick(0.5),
        p99_ms: pick(0.99),
        mean_kept: kept as f64 / runs,
        mean_lanes: lanes as f64 / runs,
    })
}
