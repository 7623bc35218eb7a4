#![allow(dead_code)]

use lanekit::{build_uniform_grid, AnchorGrid, CameraModel, CameraPose};
use rand::Rng;

pub fn base_grid() -> AnchorGrid<f64> {
    build_uniform_grid(56, 64, [3.0, 103.0], [-10.0, 10.0]).unwrap()
}

/// Forward camera 1.2-2.2 m above ground, pitched 1-6 degrees down, small yaw and roll.
pub fn random_camera<R: Rng>(rng: &mut R) -> CameraModel<f64> {
    let deg = std::f64::consts::PI / 180.0;
    let f = rng.random_range(900.0..1400.0);
    CameraModel::from_pose(&CameraPose {
        height: rng.random_range(1.2..2.2),
        pitch: rng.random_range(1.0..6.0) * deg,
        yaw: rng.random_range(-3.0..3.0) * deg,
        roll: rng.random_range(-2.0..2.0) * deg,
        fx: f,
        fy: f * rng.random_range(0.98..1.02),
        cx: rng.random_range(940.0..980.0),
        cy: rng.random_range(520.0..560.0),
        image_size: (1080, 1920),
    })
}
