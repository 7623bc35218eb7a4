mod common;

use lanekit::synth::{DistractorMode, SceneSpec};
use lanekit::{extract_lanes, find_terminals, generate_scene, threshold_adjacency, AdjacencyMatrix, Keypoint};
use proptest::prelude::*;

fn keypoints_by_y(n: usize) -> Vec<Keypoint<f64>> {
    (0..n)
        .map(|i| Keypoint {
            grid_index: (i, 0),
            x: 0.0,
            y: 3.0 + i as f64,
            dx: 0.0,
            z: 0.0,
            fg_score: 1.0,
            class_scores: vec![0.3, 0.7],
        })
        .collect()
}

fn random_adjacency() -> impl Strategy<Value = AdjacencyMatrix<f64>> {
    (1usize..25).prop_flat_map(|n| {
        prop::collection::vec(prop_oneof![3 => Just(0.0), 2 => 0.0f64..1.0], n * n)
            .prop_map(move |v| AdjacencyMatrix::new(n, v).unwrap())
    })
}

proptest! {
    #[test]
    fn raising_threshold_never_adds_edges(a in random_adjacency(), lo in 0.0f64..0.99, step in 0.0f64..0.5) {
        let hi = (lo + step).min(0.999);
        let g_lo = threshold_adjacency(&a, lo);
        let g_hi = threshold_adjacency(&a, hi);
        for e in &g_hi.edges {
            prop_assert!(g_lo.edge_prob(e.from, e.to).is_some());
        }
        let brute = (0..a.size()).flat_map(|i| (0..a.size()).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && a.get(i, j) > lo)
            .count();
        prop_assert_eq!(g_lo.edges.len(), brute);
    }

    #[test]
    fn forward_only_adjacency_gives_increasing_paths(a in random_adjacency()) {
        let n = a.size();
        let mut fwd = a.clone();
        for i in 0..n {
            for j in 0..=i {
                fwd.set(i, j, 0.0);
            }
        }
        let kps = keypoints_by_y(n);
        for lane in extract_lanes(&kps, &fwd, 0.5).unwrap() {
            for w in lane.points.windows(2) {
                prop_assert!(w[1][1] > w[0][1]);
            }
            let (starts, ends) = find_terminals(&threshold_adjacency(&fwd, 0.5));
            prop_assert!(starts.contains(&lane.path[0]));
            prop_assert!(ends.contains(lane.path.last().unwrap()));
            let mut seen = lane.path.clone();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), lane.path.len());
        }
    }
}

#[test]
fn true_lanes_recovered_despite_distractors() {
    let grid = common::base_grid();
    for seed in 0..30 {
        let spec = SceneSpec {
            seed,
            repeats_n: 1,
            distractor_edge_rate: 0.05,
            distractor_mode: DistractorMode::BelowThreshold,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec, &grid).unwrap();
        let lanes = extract_lanes(&scene.prediction.keypoints, &scene.prediction.adjacency, 0.5).unwrap();
        assert_eq!(lanes.len(), scene.gt.lanes.len());
        for lane in &lanes {
            let gt = &scene.gt.lanes[scene.gt_keypoints[scene.proposal_sources[lane.path[0]]].lane_id];
            assert_eq!(lane.points.len(), gt.points.len());
            for (p, g) in lane.points.iter().zip(&gt.points) {
                assert!((p[0] - g[0]).abs() < 1e-9 && p[1] == g[1] && p[2] == g[2]);
            }
            assert_eq!(lane.category, gt.category);
        }
    }
}

#[test]
fn strong_distractors_lose_to_unit_edges() {
    // distractors above t_a add shortcuts, but the true chain keeps weight zero
    let grid = common::base_grid();
    for seed in 0..20 {
        let spec = SceneSpec {
            seed,
            repeats_n: 1,
            distractor_edge_rate: 0.002,
            distractor_mode: DistractorMode::Unrestricted,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&spec, &grid).unwrap();
        let a = &scene.prediction.adjacency;
        for lane in extract_lanes(&scene.prediction.keypoints, a, 0.5).unwrap() {
            let w = lanekit::graph::path_weight(a, &lane.path);
            let lane_ids: Vec<usize> = lane
                .path
                .iter()
                .map(|&p| scene.gt_keypoints[scene.proposal_sources[p]].lane_id)
                .collect();
            if w == 0.0 {
                assert!(lane_ids.windows(2).all(|p| p[0] == p[1]));
            }
        }
    }
}
