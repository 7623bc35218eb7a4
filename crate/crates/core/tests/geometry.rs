mod common;

use lanekit::geometry::{custom_row_span, custom_row_spacings};
use lanekit::{
    build_custom_grid, build_uniform_grid, project_grid_to_image, unproject_pixel_to_ground, AnchorGrid,
    CameraModel, CustomGridParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mat_vec(m: &[[f64; 4]; 4], p: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2] + m[i][3];
    }
    out
}

#[test]
fn projection_matches_hand_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grid = common::base_grid();
    for _ in 0..20 {
        let cam = common::random_camera(&mut rng);
        let pmap = project_grid_to_image(&grid, &cam, 0.0);
        for r in (0..grid.rows).step_by(5) {
            for c in (0..grid.cols).step_by(7) {
                let [x, y] = grid.position(r, c);
                let pc = mat_vec(&cam.extrinsic, [x, y, 0.0]);
                let k = cam.intrinsic;
                let u = (k[0][0] * pc[0] + k[0][1] * pc[1] + k[0][2] * pc[2]) / pc[2];
                let v = (k[1][1] * pc[1] + k[1][2] * pc[2]) / pc[2];
                match pmap.pixel(r, c) {
                    Some(px) => assert!((px[0] - u).abs() < 1e-6 && (px[1] - v).abs() < 1e-6),
                    None => assert!(pc[2] <= 0.0 || u < 0.0 || v < 0.0 || u > 1919.0 || v > 1079.0),
                }
            }
        }
    }
}

#[test]
fn round_trip_over_random_poses() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = common::base_grid();
    let mut checked = 0;
    for _ in 0..100 {
        let cam = common::random_camera(&mut rng);
        let pmap = project_grid_to_image(&grid, &cam, 0.0);
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                if let Some(px) = pmap.pixel(r, c) {
                    let p = unproject_pixel_to_ground(&cam, px, 0.0).unwrap();
                    let [x, y] = grid.position(r, c);
                    assert!((p[0] - x).abs() <= 1e-6 && (p[1] - y).abs() <= 1e-6, "cell ({r},{c})");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn round_trip_at_raised_ground_height() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cam = common::random_camera(&mut rng);
    let grid = common::base_grid();
    let pmap = project_grid_to_image(&grid, &cam, 0.3);
    let (r, c) = (20, 32);
    let px = pmap.pixel(r, c).unwrap();
    let p = unproject_pixel_to_ground(&cam, px, 0.3).unwrap();
    assert!((p[1] - grid.row_y(r)).abs() < 1e-6);
    assert_eq!(p[2], 0.3);
}

fn mean_near_row_gap(grid: &AnchorGrid<f64>, cam: &CameraModel<f64>) -> f64 {
    let third = grid.rows / 3;
    let gaps: Vec<f64> = (0..third)
        .map(|r| {
            let a = cam.project([0.0, grid.row_y(r), 0.0]).unwrap();
            let b = cam.project([0.0, grid.row_y(r + 1), 0.0]).unwrap();
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        })
        .collect();
    gaps.iter().sum::<f64>() / gaps.len() as f64
}

#[test]
fn custom_grid_denser_in_near_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let uniform = build_uniform_grid(56, 64, [3.0, 103.0], [-10.0, 10.0]).unwrap();
    let mut params = CustomGridParams::new(56, 64);
    params.normalize_to_range = Some([3.0, 103.0]);
    let custom = build_custom_grid(&params).unwrap();
    for _ in 0..100 {
        let cam = common::random_camera(&mut rng);
        assert!(mean_near_row_gap(&custom, &cam) < mean_near_row_gap(&uniform, &cam));
    }
}

#[test]
fn custom_row_endpoints_exact() {
    for rows in 2..80 {
        for w in [10.0, 20.0, 33.3] {
            assert_eq!(custom_row_span(0, rows, w), (w / 4.0, 3.0 * w / 4.0));
            assert_eq!(custom_row_span(rows - 1, rows, w), (0.0, w));
        }
    }
}

#[test]
fn normalized_span_covers_range() {
    let mut p = CustomGridParams::new(5, 4);
    p.normalize_to_range = Some([0.0, 100.0]);
    let g = build_custom_grid(&p).unwrap();
    let total: f64 = g.row_spacing.iter().sum();
    assert!((total - 100.0).abs() < 1e-9);
    assert!((g.row_y(g.rows - 1) - 100.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn custom_spacings_affine_and_increasing(rows in 2usize..120) {
        let s = custom_row_spacings::<f64>(rows, 0.5, 1.5);
        prop_assert_eq!(s[0], 0.5);
        prop_assert!((s[rows - 1] - 1.5).abs() < 1e-12);
        let step = 1.0 / (rows - 1) as f64;
        for w in s.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!((w[1] - w[0] - step).abs() < 1e-12);
        }
    }

    #[test]
    fn custom_rows_have_constant_width_count(rows in 2usize..60, cols in 2usize..40) {
        let g = build_custom_grid(&CustomGridParams::<f64>::new(rows, cols)).unwrap();
        prop_assert_eq!(g.len(), rows * cols);
        for r in 1..rows {
            prop_assert!(g.row_y(r) > g.row_y(r - 1));
            let (lo, hi) = g.row_x_span(r);
            prop_assert!((lo + hi).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_corners_match_ranges(rows in 2usize..40, cols in 2usize..40, y0 in -5.0f64..5.0, x0 in -20.0f64..-1.0) {
        let g = build_uniform_grid(rows, cols, [y0, y0 + 50.0], [x0, -x0]).unwrap();
        prop_assert_eq!(g.position(0, 0), [x0, y0]);
        prop_assert!((g.position(rows - 1, cols - 1)[0] + x0).abs() < 1e-12);
        prop_assert!((g.position(rows - 1, cols - 1)[1] - y0 - 50.0).abs() < 1e-12);
    }
}
