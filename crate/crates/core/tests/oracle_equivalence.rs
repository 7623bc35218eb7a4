use lanekit::graph::path_weight;
use lanekit::oracle::{oracle_assignment, oracle_nms, oracle_paths};
use lanekit::proposal::IntBox;
use lanekit::{box_nms, extract_lanes, point_nms, solve_assignment, AdjacencyMatrix, CostMatrix, Keypoint, PointNmsParams};
use proptest::prelude::*;

fn points_and_scores() -> impl Strategy<Value = (Vec<[f64; 2]>, Vec<f64>)> {
    (0usize..200).prop_flat_map(|n| {
        (
            prop::collection::vec((-4.0f64..4.0, 0usize..4, -0.3f64..0.3), n),
            prop::collection::vec(prop_oneof![(0u8..6).prop_map(|k| k as f64 / 5.0), 0.0f64..1.0], n),
        )
            .prop_map(|(pts, scores)| {
                let pts = pts.into_iter().map(|(x, row, jitter)| [x, 3.0 + row as f64 * 1.8 + jitter]).collect();
                (pts, scores)
            })
    })
}

fn cost_matrix() -> impl Strategy<Value = CostMatrix<f64>> {
    (0usize..=7, 0usize..=7).prop_flat_map(|(r, c)| {
        let entry = prop_oneof![
            3 => (0u8..5).prop_map(|k| k as f64),
            3 => 0.0f64..4.0,
            2 => Just(f64::INFINITY),
        ];
        prop::collection::vec(entry, r * c).prop_map(move |v| CostMatrix::new(r, c, v).unwrap())
    })
}

fn adjacency() -> impl Strategy<Value = AdjacencyMatrix<f64>> {
    (0usize..=12, 0.1f64..0.4).prop_flat_map(|(n, density)| {
        let entry = prop_oneof![
            2 => (0u8..5).prop_map(|k| 0.55 + 0.1 * k as f64),
            2 => 0.0f64..1.0,
        ];
        prop::collection::vec((0.0f64..1.0, entry), n * n).prop_map(move |v| {
            let probs = v.into_iter().map(|(u, p)| if u < density { p } else { 0.0 }).collect();
            AdjacencyMatrix::new(n, probs).unwrap()
        })
    })
}

fn dummy_keypoints(n: usize) -> Vec<Keypoint<f64>> {
    (0..n)
        .map(|i| Keypoint {
            grid_index: (i, 0),
            x: 0.0,
            y: i as f64,
            dx: 0.0,
            z: 0.0,
            fg_score: 1.0,
            class_scores: vec![1.0],
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn point_nms_matches_oracle((pts, scores) in points_and_scores(), tx in 0.2f64..1.5, ty in 0.2f64..2.0) {
        let params = PointNmsParams::new(tx, ty);
        prop_assert_eq!(point_nms(&pts, &scores, &params), oracle_nms(&pts, &scores, &params).unwrap());
    }

    #[test]
    fn box_nms_keeps_only_low_overlap(raw in prop::collection::vec((0i64..40, 0i64..40, 1i64..15, 1i64..15, 0.0f64..1.0), 0..60)) {
        let boxes: Vec<IntBox> = raw.iter().map(|&(x, y, w, h, _)| [x, y, x + w, y + h]).collect();
        let scores: Vec<f64> = raw.iter().map(|r| r.4).collect();
        let keep = box_nms(&boxes, &scores, 0.1);
        for (a, &i) in keep.iter().enumerate() {
            for &j in &keep[..a] {
                prop_assert!(lanekit::proposal::box_iou::<f64>(&boxes[i], &boxes[j]) <= 0.1);
                prop_assert!(scores[j] >= scores[i]);
            }
        }
        // every dropped box overlaps a kept box that outranks it
        for i in 0..boxes.len() {
            if !keep.contains(&i) {
                prop_assert!(keep.iter().any(|&k| lanekit::proposal::box_iou::<f64>(&boxes[i], &boxes[k]) > 0.1
                    && (scores[k] > scores[i] || (scores[k] == scores[i] && k < i))));
            }
        }
    }

    #[test]
    fn assignment_matches_oracle(cost in cost_matrix()) {
        let fast = solve_assignment(&cost);
        let brute = oracle_assignment(&cost).unwrap();
        prop_assert_eq!(fast.len(), brute.len());
        prop_assert_eq!(fast.total_cost(&cost), brute.total_cost(&cost));
        prop_assert_eq!(&fast.pairs, &brute.pairs);
        prop_assert!(fast.pairs.iter().all(|&(r, c)| cost.is_feasible(r, c)));
    }

    #[test]
    fn extraction_matches_path_oracle(a in adjacency(), t_a in prop_oneof![Just(0.5), 0.3f64..0.7]) {
        let kps = dummy_keypoints(a.size());
        let lanes = extract_lanes(&kps, &a, t_a).unwrap();
        let brute = oracle_paths(&a, t_a).unwrap();
        prop_assert_eq!(lanes.len(), brute.len());
        for (lane, best) in lanes.iter().zip(&brute) {
            prop_assert_eq!((lane.path[0], *lane.path.last().unwrap()), (best.start, best.end));
            prop_assert_eq!(path_weight(&a, &lane.path), best.weight);
            prop_assert!(best.best_paths.contains(&lane.path));
            for w in lane.path.windows(2) {
                prop_assert!(a.get(w[0], w[1]) > t_a);
            }
        }
    }
}
