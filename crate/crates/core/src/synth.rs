//! Seeded synthetic scenes with known ground truth: lanes sampled on grid rows,
//! multiple noisy proposals per ground truth keypoint and a matching adjacency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::assignment::GroundTruthKeypoint;
use crate::error::{invalid, Result};
use crate::geometry::AnchorGrid;
use crate::graph::AdjacencyMatrix;
use crate::io::{quantize, PredictionFrame};
use crate::metrics::{Lane, LaneFrame};
use crate::pipeline::{lanes_to_frame, post_process, PostProcessConfig};
use crate::proposal::{apply_offsets, select_topn_proposals, Keypoint};
use crate::scalar::Scalar;

/// Lateral gap between neighbouring random lanes (m).
pub const LANE_GAP: f64 = 3.5;
pub const MAX_RANDOM_LANES: usize = 5;
const FIT_ATTEMPTS: usize = 64;

/// `x(y) = c0 + c1 y + c2 y^2 + c3 y^3`, `z(y) = z0 + z1 y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LaneModel<T> {
    pub x_coeffs: [T; 4],
    pub z_coeffs: [T; 2],
    pub category: usize,
}

impl<T: Scalar> LaneModel<T> {
    pub fn x(&self, y: T) -> T {
        let c = &self.x_coeffs;
        c[0] + y * (c[1] + y * (c[2] + y * c[3]))
    }

    pub fn z(&self, y: T) -> T {
        self.z_coeffs[0] + self.z_coeffs[1] * y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorMode {
    /// Distractor probabilities drawn from `[0, 0.9 t_a)`, never forming edges.
    BelowThreshold,
    /// Distractor probabilities drawn from `[0, 1)`.
    Unrestricted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SceneSpec<T> {
    pub seed: u64,
    pub lane_count: usize,
    /// Explicit lane models; drawn from the seed when absent.
    pub lanes: Option<Vec<LaneModel<T>>>,
    pub sigma_x: T,
    pub sigma_z: T,
    pub repeats_n: usize,
    pub dropout_p: T,
    /// Probability that a non-lane keypoint pair receives a distractor probability.
    pub distractor_edge_rate: T,
    pub distractor_mode: DistractorMode,
    pub t_a: T,
    pub categories: usize,
}

impl<T: Scalar> Default for SceneSpec<T> {
    fn default() -> Self {
        Self {
            seed: 0,
            lane_count: 3,
            lanes: None,
            sigma_x: T::zero(),
            sigma_z: T::zero(),
            repeats_n: 2,
            dropout_p: T::zero(),
            distractor_edge_rate: T::zero(),
            distractor_mode: DistractorMode::BelowThreshold,
            t_a: T::of(0.5),
            categories: 21,
        }
    }
}

impl<T: Scalar> SceneSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x >= T::zero() && self.sigma_z >= T::zero()) {
            return Err(invalid("noise sigma must be non-negative"));
        }
        if !(self.dropout_p >= T::zero() && self.dropout_p < T::one()) {
            return Err(invalid("dropout_p must lie in [0, 1)"));
        }
        if self.repeats_n == 0 {
            return Err(invalid("repeats_n must be at least 1"));
        }
        if !(self.distractor_edge_rate >= T::zero() && self.distractor_edge_rate <= T::one()) {
            return Err(invalid("distractor_edge_rate must lie in [0, 1]"));
        }
        if !(self.t_a >= T::zero() && self.t_a < T::one()) {
            return Err(invalid("t_a must lie in [0, 1)"));
        }
        if self.categories < 2 {
            return Err(invalid("at least two categories are needed"));
        }
        match &self.lanes {
            Some(models) if models.iter().any(|m| m.category >= self.categories) => {
                Err(invalid("lane category outside the category range"))
            }
            None if self.lane_count > MAX_RANDOM_LANES => Err(invalid(format!(
                "at most {MAX_RANDOM_LANES} random lanes fit the lateral range"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene<T> {
    pub gt: LaneFrame<T>,
    /// Ground truth keypoints, lane by lane, one per grid row.
    pub gt_keypoints: Vec<GroundTruthKeypoint<T>>,
    pub prediction: PredictionFrame<T>,
    /// Index into `gt_keypoints` of the keypoint each proposal was generated from.
    pub proposal_sources: Vec<usize>,
}

impl<T: Scalar> SyntheticScene<T> {
    /// Row-major foreground score map with the proposals' scores and zeros elsewhere.
    pub fn score_map(&self, grid: &AnchorGrid<T>) -> Vec<T> {
        let mut map = vec![T::zero(); grid.len()];
        for k in &self.prediction.keypoints {
            let cell = k.grid_index.0 * grid.cols + k.grid_index.1;
            map[cell] = map[cell].max(k.fg_score);
        }
        map
    }
}

fn fits<T: Scalar>(model: &LaneModel<T>, grid: &AnchorGrid<T>) -> bool {
    (0..grid.rows).all(|r| {
        let (lo, hi) = grid.row_x_span(r);
        let x = model.x(grid.row_y(r));
        x.is_finite() && x >= lo && x <= hi
    })
}

fn random_models<T: Scalar>(spec: &SceneSpec<T>, grid: &AnchorGrid<T>, rng: &mut ChaCha8Rng) -> Result<Vec<LaneModel<T>>> {
    let y0 = grid.row_y(0).as_f64();
    let count = spec.lane_count;
    for _ in 0..FIT_ATTEMPTS {
        // shared shape keeps the lanes parallel and LANE_GAP apart
        let c1 = rng.random_range(-0.01..0.01);
        let c2 = rng.random_range(-8e-5..8e-5);
        let c3 = rng.random_range(-3e-7..3e-7);
        let shift = rng.random_range(-0.3..0.3);
        let models: Vec<LaneModel<T>> = (0..count)
            .map(|k| {
                let offset = (k as f64 - (count as f64 - 1.0) / 2.0) * LANE_GAP + shift;
                // expand the shape about y0 into plain polynomial coefficients
                let x_coeffs = [
                    offset - c1 * y0 + c2 * y0 * y0 - c3 * y0 * y0 * y0,
                    c1 - 2.0 * c2 * y0 + 3.0 * c3 * y0 * y0,
                    c2 - 3.0 * c3 * y0,
                    c3,
                ];
                let z0 = rng.random_range(-0.2..0.2);
                let z1 = rng.random_range(-0.02..0.02);
                LaneModel {
                    x_coeffs: x_coeffs.map(T::of),
                    z_coeffs: [T::of(z0), T::of(z1)],
                    category: rng.random_range(1..spec.categories),
                }
            })
            .collect();
        if models.iter().all(|m| fits(m, grid)) {
            return Ok(models);
        }
    }
    Err(invalid(format!("could not fit {count} lanes inside the grid")))
}

fn class_scores<T: Scalar>(category: usize, categories: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let top = rng.random_range(0.6..0.95);
    let rest = (1.0 - top) / (categories - 1) as f64;
    (0..categories)
        .map(|c| q(T::of(if c == category { top } else { rest })))
        .collect()
}

// Every generated value is already at file precision, so written scenes reload
// bit-identically and noiseless proposals refine exactly onto the ground truth.
fn q<T: Scalar>(v: T) -> T {
    T::of(quantize(v.as_f64()))
}

/// Rounds to the micrometre lattice.
fn on_lattice<T: Scalar>(v: T) -> T {
    T::of((v.as_f64() * 1e6).round() / 1e6)
}

fn normal(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite positive sigma"))
}

/// Deterministic per seed. Fails when an explicit lane leaves the grid's lateral range.
pub fn generate_scene<T: Scalar>(spec: &SceneSpec<T>, grid: &AnchorGrid<T>) -> Result<SyntheticScene<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let models = match &spec.lanes {
        Some(models) => {
            if let Some(i) = models.iter().position(|m| !fits(m, grid)) {
                return Err(invalid(format!("lane {i} leaves the grid's lateral range")));
            }
            models.clone()
        }
        None => random_models(spec, grid, &mut rng)?,
    };
    let noise_x = normal(spec.sigma_x.as_f64());
    let noise_z = normal(spec.sigma_z.as_f64());
    let dropout = spec.dropout_p.as_f64();

    let mut gt_lanes = Vec::with_capacity(models.len());
    let mut gt_keypoints = Vec::new();
    let mut keypoints = Vec::new();
    let mut sources = Vec::new();
    // per lane, the proposal indices of each gt keypoint that kept at least one
    let mut chains: Vec<Vec<Vec<usize>>> = Vec::with_capacity(models.len());
    for (lane_id, m) in models.iter().enumerate() {
        let mut points = Vec::with_capacity(grid.rows);
        let mut chain = Vec::new();
        for row in 0..grid.rows {
            let y = q(grid.row_y(row));
            let (x, z) = (on_lattice(m.x(y)), on_lattice(m.z(y)));
            points.push([x, y, z]);
            let g = gt_keypoints.len();
            gt_keypoints.push(GroundTruthKeypoint {
                lane_id,
                order_in_lane: row,
                row,
                x,
                y,
                z,
                category: m.category,
            });
            let mut group = Vec::new();
            for col in grid.nearest_cols(row, x, spec.repeats_n) {
                if dropout > 0.0 && rng.random::<f64>() < dropout {
                    continue;
                }
                let mut k = Keypoint::anchor(grid, row, col);
                k.x = q(k.x);
                k.y = y;
                let ex = noise_x.map_or(0.0, |n| n.sample(&mut rng));
                let ez = noise_z.map_or(0.0, |n| n.sample(&mut rng));
                k.dx = q(x - k.x + T::of(ex));
                k.z = q(z + T::of(ez));
                k.fg_score = q(T::of(rng.random_range(0.6..1.0)));
                k.class_scores = class_scores(m.category, spec.categories, &mut rng);
                group.push(keypoints.len());
                keypoints.push(k);
                sources.push(g);
            }
            if !group.is_empty() {
                chain.push(group);
            }
        }
        chains.push(chain);
        gt_lanes.push(Lane::new(points, m.category));
    }

    let size = keypoints.len();
    let mut adjacency = AdjacencyMatrix::zeros(size);
    for chain in &chains {
        for pair in chain.windows(2) {
            for &p in &pair[0] {
                for &q in &pair[1] {
                    adjacency.set(p, q, T::one());
                }
            }
        }
    }
    let rate = spec.distractor_edge_rate.as_f64();
    if rate > 0.0 {
        let cap = match spec.distractor_mode {
            DistractorMode::BelowThreshold => 0.9 * spec.t_a.as_f64(),
            DistractorMode::Unrestricted => 1.0,
        };
        for i in 0..size {
            for j in 0..size {
                if i != j && adjacency.get(i, j) == T::zero() && rng.random::<f64>() < rate {
                    adjacency.set(i, j, q(T::of(rng.random_range(0.0..cap))));
                }
            }
        }
    }

    let frame_id = format!("synth_{:06}", spec.seed);
    Ok(SyntheticScene {
        gt: LaneFrame {
            frame_id: frame_id.clone(),
            lanes: gt_lanes,
        },
        gt_keypoints,
        prediction: PredictionFrame {
            frame_id,
            categories: spec.categories,
            keypoints,
            adjacency,
            camera: None,
        },
        proposal_sources: sources,
    })
}

/// Fraction of ground truth keypoints with a keypoint on the same row whose refined
/// lateral position lies within `tol`.
pub fn keypoint_recall<T: Scalar>(gts: &[GroundTruthKeypoint<T>], keypoints: &[Keypoint<T>], tol: T) -> T {
    if gts.is_empty() {
        return T::one();
    }
    let hit = gts
        .iter()
        .filter(|g| {
            keypoints
                .iter()
                .any(|k| k.row() == g.row && (k.refined_x() - g.x).abs() <= tol)
        })
        .count();
    T::of_usize(hit) / T::of_usize(gts.len())
}

/// Runs a scene through the whole inference path: top-N selection on the score map,
/// offset application, PointNMS and lane extraction.
pub fn run_scene_pipeline<T: Scalar>(
    scene: &SyntheticScene<T>,
    grid: &AnchorGrid<T>,
    cfg: &PostProcessConfig<T>,
) -> Result<LaneFrame<T>> {
    let frame = &scene.prediction;
    let mut by_cell = vec![None; grid.len()];
    for (i, k) in frame.keypoints.iter().enumerate() {
        by_cell[k.grid_index.0 * grid.cols + k.grid_index.1] = Some(i);
    }
    let selected = select_topn_proposals(&scene.score_map(grid), grid, frame.keypoints.len())?;
    let origin: Vec<usize> = selected
        .keypoints
        .iter()
        .map(|k| by_cell[k.grid_index.0 * grid.cols + k.grid_index.1].expect("selected cells carry a proposal"))
        .collect();
    let dx: Vec<T> = origin.iter().map(|&i| frame.keypoints[i].dx).collect();
    let z: Vec<T> = origin.iter().map(|&i| frame.keypoints[i].z).collect();
    let mut proposals = apply_offsets(selected, &dx, &z)?;
    proposals.set_class_scores(origin.iter().map(|&i| frame.keypoints[i].class_scores.clone()).collect())?;
    let adjacency = frame.adjacency.submatrix(&origin);
    let out = post_process(&proposals.keypoints, &adjacency, cfg)?;
    Ok(lanes_to_frame(&frame.frame_id, &out.lanes))
}

/// Benchmark workload: a noisy five-lane scene with sub-threshold distractors on a
/// dense adjacency, truncated to its first `keypoints` proposals.
pub fn benchmark_frame(keypoints: usize, grid: &AnchorGrid<f64>, seed: u64) -> Result<PredictionFrame<f64>> {
    let spec = SceneSpec {
        seed,
        lane_count: MAX_RANDOM_LANES,
        sigma_x: 0.05,
        sigma_z: 0.02,
        repeats_n: keypoints.div_ceil(MAX_RANDOM_LANES * grid.rows).max(2),
        distractor_edge_rate: 0.05,
        ..SceneSpec::default()
    };
    let mut frame = generate_scene(&spec, grid)?.prediction;
    if frame.keypoints.len() < keypoints {
        return Err(invalid(format!("grid too small for {keypoints} benchmark keypoints")));
    }
    let keep: Vec<usize> = (0..keypoints).collect();
    frame.keypoints.truncate(keypoints);
    frame.adjacency = frame.adjacency.submatrix(&keep);
    Ok(frame)
}
