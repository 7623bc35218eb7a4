//! 3D lane post-processing toolkit: anchor grids, keypoint proposals and NMS,
//! graph-based lane extraction, training-time assignment, the connection head
//! forward pass and lane-level evaluation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the common instantiations.

pub mod assignment;
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod head;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod proposal;
pub mod scalar;
pub mod synth;

pub use assignment::{
    build_connection_targets, build_cost_matrix, match_keypoints, solve_assignment, CostMatrix, CostWeights,
    GroundTruthKeypoint, Matching,
};
pub use config::{ModelConfig, PipelineDefaults, Preset};
pub use error::{Error, Result};
pub use geometry::{
    bilinear_sample, build_custom_grid, build_uniform_grid, project_grid_to_image, unproject_pixel_to_ground,
    AnchorGrid, CameraModel, CameraPose, CustomGridParams, FeatureMap, GridMode, ProjectionMap,
};
pub use graph::{extract_lanes, find_terminals, threshold_adjacency, AdjacencyMatrix, DirectedLaneGraph, LaneInstance};
pub use head::{adjacency_forward, positional_encode, ConnectionFeatures, HeadWeights};
pub use io::PredictionFrame;
pub use metrics::{evaluate, match_lanes, resample_lane, EvalConfig, EvalReport, GroundTruthLane, Lane, LaneFrame};
pub use pipeline::{post_process, PostProcessConfig};
pub use proposal::{apply_offsets, box_nms, point_nms, select_topn_proposals, Keypoint, PointNmsParams, ProposalSet};
pub use scalar::Scalar;
pub use synth::{generate_scene, SceneSpec, SyntheticScene};

pub type KeypointF32 = Keypoint<f32>;
pub type KeypointF64 = Keypoint<f64>;
pub type AnchorGridF32 = AnchorGrid<f32>;
pub type AnchorGridF64 = AnchorGrid<f64>;
pub type CameraModelF32 = CameraModel<f32>;
pub type CameraModelF64 = CameraModel<f64>;
pub type AdjacencyMatrixF32 = AdjacencyMatrix<f32>;
pub type AdjacencyMatrixF64 = AdjacencyMatrix<f64>;
pub type LaneInstanceF32 = LaneInstance<f32>;
pub type LaneInstanceF64 = LaneInstance<f64>;
pub type LaneFrameF32 = LaneFrame<f32>;
pub type LaneFrameF64 = LaneFrame<f64>;
pub type PredictionFrameF32 = PredictionFrame<f32>;
pub type PredictionFrameF64 = PredictionFrame<f64>;
pub type HeadWeightsF32 = HeadWeights<f32>;
pub type HeadWeightsF64 = HeadWeights<f64>;
pub type EvalReportF32 = EvalReport<f32>;
pub type EvalReportF64 = EvalReport<f64>;
