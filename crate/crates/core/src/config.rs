//! Shipped model presets and pipeline defaults.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Lite,
    Base,
    Large,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Lite, Preset::Base, Preset::Large];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Lite => "lite",
            Preset::Base => "base",
            Preset::Large => "large",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// Sizes of one model variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: Preset,
    pub bev_rows: usize,
    pub bev_cols: usize,
    /// Keypoints kept after PointNMS (`S`).
    pub strongest: usize,
    /// Proposals per target keypoint (`n`).
    pub repeats_n: usize,
}

impl ModelConfig {
    pub fn preset(preset: Preset) -> Self {
        let (bev_rows, bev_cols, strongest, repeats_n) = match preset {
            Preset::Lite => (56, 32, 256, 2),
            Preset::Base => (56, 64, 256, 2),
            Preset::Large => (72, 128, 384, 4),
        };
        Self {
            preset,
            bev_rows,
            bev_cols,
            strongest,
            repeats_n,
        }
    }

    /// Proposals selected from the score map, `N = S * n`.
    pub fn proposals(&self) -> usize {
        self.strongest * self.repeats_n
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::preset(Preset::Base)
    }
}

/// Engineering defaults shared by the library and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PipelineDefaults<T> {
    pub t_a: T,
    pub eval_thresholds: Vec<T>,
    pub near_far_split: T,
    pub nms_r: T,
    pub nms_iou: T,
    pub pe_dims_per_axis: usize,
    pub categories: usize,
    pub bev_width: T,
    pub bev_origin: T,
    pub y_range: [T; 2],
    pub x_range: [T; 2],
    pub spacing_near: T,
    pub spacing_far: T,
    pub min_lane_points: usize,
}

impl<T: Scalar> Default for PipelineDefaults<T> {
    fn default() -> Self {
        Self {
            t_a: T::of(0.5),
            eval_thresholds: vec![T::of(1.5), T::of(0.5)],
            near_far_split: T::of(40.0),
            nms_r: T::of(10.0),
            nms_iou: T::of(0.1),
            pe_dims_per_axis: 32,
            categories: 21,
            bev_width: T::of(20.0),
            bev_origin: T::of(3.0),
            y_range: [T::of(3.0), T::of(103.0)],
            x_range: [T::of(-10.0), T::of(10.0)],
            spacing_near: T::of(0.5),
            spacing_far: T::of(1.5),
            min_lane_points: 2,
        }
    }
}
