//! Forward pass of the connection head: positional encoding, origin/destination
//! projections and the pairwise sigmoid scorer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::AdjacencyMatrix;
use crate::scalar::Scalar;

/// Dense layer `y = W x + b` with `W` stored row-major as `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Affine<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Affine<T> {
    pub fn new(inputs: usize, outputs: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weight.len() != inputs * outputs || bias.len() != outputs {
            return Err(invalid(format!(
                "affine layer {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(invalid("affine parameters must be finite"));
        }
        Ok(Self {
            inputs,
            outputs,
            weight,
            bias,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weight
            .chunks(self.inputs.max(1))
            .take(self.outputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + *w * *v))
            .collect()
    }
}

/// Two affine layers with a ReLU in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Mlp<T> {
    pub first: Affine<T>,
    pub second: Affine<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let hidden: Vec<T> = self.first.apply(x).into_iter().map(|v| v.max(T::zero())).collect();
        self.second.apply(&hidden)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HeadWeights<T> {
    pub origin: Mlp<T>,
    pub dest: Mlp<T>,
    /// `d -> 1` scorer.
    pub last: Affine<T>,
}

impl<T: Scalar> HeadWeights<T> {
    pub fn input_dim(&self) -> usize {
        self.origin.first.inputs
    }

    pub fn validate(&self) -> Result<()> {
        let (o, d) = (&self.origin, &self.dest);
        if o.first.outputs != o.second.inputs || d.first.outputs != d.second.inputs {
            return Err(invalid("MLP hidden dimensions do not chain"));
        }
        if o.first.inputs != d.first.inputs {
            return Err(invalid("origin and destination MLPs take different input sizes"));
        }
        if o.second.outputs != d.second.outputs || o.second.outputs != self.last.inputs {
            return Err(invalid("projection width does not match the final layer"));
        }
        if self.last.outputs != 1 {
            return Err(invalid("final layer must produce a single logit"));
        }
        Ok(())
    }

    /// Deterministic uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn seeded(d_in: usize, d_hidden: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |inputs: usize, outputs: usize| {
            let bound = 1.0 / (inputs as f64).sqrt();
            let mut draw = || T::of(rng.random_range(-bound..=bound));
            let weight = (0..inputs * outputs).map(|_| draw()).collect();
            let bias = (0..outputs).map(|_| draw()).collect();
            Affine {
                inputs,
                outputs,
                weight,
                bias,
            }
        };
        let origin = Mlp {
            first: layer(d_in, d_hidden),
            second: layer(d_hidden, d),
        };
        let dest = Mlp {
            first: layer(d_in, d_hidden),
            second: layer(d_hidden, d),
        };
        let last = layer(d, 1);
        Self { origin, dest, last }
    }
}

/// Per-keypoint connection features with refined `(x + dx, y)` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionFeatures<T> {
    pub features: Vec<Vec<T>>,
    pub positions: Vec<[T; 2]>,
}

/// Sinusoidal encoding of each axis into `dims_per_axis` values, `x` first.
pub fn positional_encode<T: Scalar>(position: [T; 2], dims_per_axis: usize) -> Result<Vec<T>> {
    if dims_per_axis == 0 || dims_per_axis % 2 != 0 {
        return Err(invalid("dims_per_axis must be a positive even number"));
    }
    let mut out = Vec::with_capacity(2 * dims_per_axis);
    let base = T::of(10000.0);
    let dims = T::of_usize(dims_per_axis);
    for p in position {
        for k in 0..dims_per_axis / 2 {
            let freq = base.powf(T::of_usize(2 * k) / dims);
            let (s, c) = (p / freq).sin_cos();
            out.push(s);
            out.push(c);
        }
    }
    Ok(out)
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// `A[i][j] = sigmoid(last(origin(f_i) * dest(f_j)))` with `f_i = [pe_i, feature_i]`.
pub fn adjacency_forward<T: Scalar>(
    input: &ConnectionFeatures<T>,
    weights: &HeadWeights<T>,
    dims_per_axis: usize,
) -> Result<AdjacencyMatrix<T>> {
    weights.validate()?;
    if input.features.len() != input.positions.len() {
        return Err(invalid(format!(
            "{} feature rows for {} positions",
            input.features.len(),
            input.positions.len()
        )));
    }
    let size = input.positions.len();
    let mut origin = Vec::with_capacity(size);
    let mut dest = Vec::with_capacity(size);
    for (f, p) in input.features.iter().zip(&input.positions) {
        let mut x = positional_encode(*p, dims_per_axis)?;
        x.extend_from_slice(f);
        if x.len() != weights.input_dim() {
            return Err(invalid(format!(
                "head expects {} inputs, encoding plus features give {}",
                weights.input_dim(),
                x.len()
            )));
        }
        origin.push(weights.origin.apply(&x));
        dest.push(weights.dest.apply(&x));
    }
    let mut probs = Vec::with_capacity(size * size);
    let w = &weights.last.weight;
    let b = weights.last.bias[0];
    for o in &origin {
        for d in &dest {
            let logit = o.iter().zip(d).zip(w).fold(b, |acc, ((a, c), wk)| acc + *wk * *a * *c);
            probs.push(sigmoid(logit));
        }
    }
    AdjacencyMatrix::new(size, probs)
}
