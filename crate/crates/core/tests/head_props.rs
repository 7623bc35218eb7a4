use lanekit::head::Affine;
use lanekit::{adjacency_forward, positional_encode, ConnectionFeatures, HeadWeights};
use proptest::prelude::*;

const DIMS: usize = 8;

/// Loop-by-loop recomputation written independently of the library layers.
fn naive(input: &ConnectionFeatures<f64>, w: &HeadWeights<f64>) -> Vec<Vec<f64>> {
    fn layer(a: &Affine<f64>, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; a.outputs];
        for o in 0..a.outputs {
            let mut acc = a.bias[o];
            for i in 0..a.inputs {
                acc += a.weight[o * a.inputs + i] * x[i];
            }
            y[o] = acc;
        }
        y
    }
    let encode = |p: [f64; 2]| {
        let mut v = Vec::new();
        for axis in p {
            for k in 0..DIMS / 2 {
                let f = 10000f64.powf(2.0 * k as f64 / DIMS as f64);
                v.push((axis / f).sin());
                v.push((axis / f).cos());
            }
        }
        v
    };
    let n = input.positions.len();
    let mut ori = Vec::new();
    let mut dst = Vec::new();
    for i in 0..n {
        let mut x = encode(input.positions[i]);
        x.extend(&input.features[i]);
        let h: Vec<f64> = layer(&w.origin.first, &x).into_iter().map(|v| v.max(0.0)).collect();
        ori.push(layer(&w.origin.second, &h));
        let h: Vec<f64> = layer(&w.dest.first, &x).into_iter().map(|v| v.max(0.0)).collect();
        dst.push(layer(&w.dest.second, &h));
    }
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut logit = w.last.bias[0];
            for k in 0..w.last.inputs {
                logit += w.last.weight[k] * ori[i][k] * dst[j][k];
            }
            a[i][j] = 1.0 / (1.0 + (-logit).exp());
        }
    }
    a
}

fn scene() -> impl Strategy<Value = (ConnectionFeatures<f64>, u64)> {
    (1usize..12, 1usize..5).prop_flat_map(|(s, dc)| {
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dc), s),
            prop::collection::vec((-10.0f64..10.0, 3.0f64..103.0), s),
            any::<u64>(),
        )
            .prop_map(|(features, pos, seed)| {
                let positions = pos.into_iter().map(|(x, y)| [x, y]).collect();
                (ConnectionFeatures { features, positions }, seed)
            })
    })
}

proptest! {
    #[test]
    fn forward_matches_naive_loops((input, seed) in scene()) {
        let dc = input.features[0].len();
        let w = HeadWeights::seeded(2 * DIMS + dc, 16, 8, seed);
        let a = adjacency_forward(&input, &w, DIMS).unwrap();
        let want = naive(&input, &w);
        for i in 0..want.len() {
            for j in 0..want.len() {
                prop_assert!((a.get(i, j) - want[i][j]).abs() <= 1e-9);
                prop_assert!(a.get(i, j) > 0.0 && a.get(i, j) < 1.0);
            }
        }
    }

    #[test]
    fn permutation_equivariant((input, seed) in scene(), shuffle in any::<u64>()) {
        let n = input.positions.len();
        let dc = input.features[0].len();
        let w = HeadWeights::seeded(2 * DIMS + dc, 16, 8, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = shuffle;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let permuted = ConnectionFeatures {
            features: perm.iter().map(|&p| input.features[p].clone()).collect(),
            positions: perm.iter().map(|&p| input.positions[p]).collect(),
        };
        let a = adjacency_forward(&input, &w, DIMS).unwrap();
        let b = adjacency_forward(&permuted, &w, DIMS).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(b.get(i, j), a.get(perm[i], perm[j]));
            }
        }
    }

    #[test]
    fn encoding_norm_is_dims(x in -100.0f64..100.0, y in -100.0f64..200.0) {
        let pe = positional_encode([x, y], 32).unwrap();
        let n2: f64 = pe.iter().map(|v| v * v).sum();
        prop_assert!((n2 - 32.0).abs() < 1e-9);
    }
}

#[test]
fn random_weights_are_directed() {
    let input = ConnectionFeatures {
        features: vec![vec![0.2, -0.4], vec![0.9, 0.1], vec![-0.5, 0.3]],
        positions: vec![[0.0, 5.0], [0.3, 7.0], [-0.2, 9.0]],
    };
    let w = HeadWeights::<f64>::seeded(2 * DIMS + 2, 16, 8, 3);
    let a = adjacency_forward(&input, &w, DIMS).unwrap();
    let mut asym: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            asym = asym.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    assert!(asym > 0.0);
}

#[test]
fn zero_final_layer_is_one_half() {
    let mut w = HeadWeights::<f64>::seeded(2 * DIMS + 1, 8, 4, 1);
    w.last = Affine::zeros(4, 1);
    let input = ConnectionFeatures {
        features: vec![vec![1.0]; 5],
        positions: (0..5).map(|i| [i as f64, 3.0 * i as f64]).collect(),
    };
    let a = adjacency_forward(&input, &w, DIMS).unwrap();
    assert!(a.as_slice().iter().all(|p| *p == 0.5));
}
