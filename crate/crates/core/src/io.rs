//! JSON and CSV file formats. Writers are deterministic: object keys are sorted and
//! every float is rounded to 9 significant digits before printing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{AnchorGrid, CameraModel, ProjectionMap};
use crate::graph::AdjacencyMatrix;
use crate::head::{Affine, HeadWeights, Mlp};
use crate::metrics::LaneFrame;
use crate::proposal::Keypoint;
use crate::scalar::Scalar;

pub const DEFAULT_CATEGORIES: usize = 21;
/// Frames with more keypoints than this store the adjacency as sparse triplets.
pub const SPARSE_ADJACENCY_ABOVE: usize = 512;

/// One frame of network outputs: keypoints plus their connection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFrame<T> {
    pub frame_id: String,
    pub categories: usize,
    pub keypoints: Vec<Keypoint<T>>,
    pub adjacency: AdjacencyMatrix<T>,
    /// Path of an associated camera file.
    pub camera: Option<String>,
}

impl<T: Scalar> PredictionFrame<T> {
    pub fn validate(&self) -> Result<()> {
        let n = self.keypoints.len();
        if self.adjacency.size() != n {
            return Err(Error::Validation(format!(
                "adjacency is {0}x{0} for {n} keypoints",
                self.adjacency.size()
            )));
        }
        let unit = |v: T| v >= T::zero() && v <= T::one();
        for (i, k) in self.keypoints.iter().enumerate() {
            if k.class_scores.len() != self.categories {
                return Err(Error::Validation(format!(
                    "keypoints[{i}].class_scores has {} entries, expected {}",
                    k.class_scores.len(),
                    self.categories
                )));
            }
            if !unit(k.fg_score) || !k.class_scores.iter().all(|s| unit(*s)) {
                return Err(Error::Validation(format!("keypoints[{i}] scores must lie in [0, 1]")));
            }
            if ![k.x, k.y, k.dx, k.z].iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!("keypoints[{i}] coordinates must be finite")));
            }
        }
        if let Some(p) = self.adjacency.as_slice().iter().position(|p| !unit(*p)) {
            return Err(Error::Validation(format!(
                "adjacency[{}][{}] outside [0, 1]",
                p / n.max(1),
                p % n.max(1)
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
#[serde(bound = "T: Scalar")]
enum AdjacencyWire<T> {
    Dense(Vec<Vec<T>>),
    Sparse { size: usize, entries: Vec<(usize, usize, T)> },
}

fn default_categories() -> usize {
    DEFAULT_CATEGORIES
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct PredictionFrameWire<T> {
    frame_id: String,
    #[serde(default = "default_categories")]
    categories: usize,
    keypoints: Vec<Keypoint<T>>,
    adjacency: AdjacencyWire<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    camera: Option<String>,
}

impl<T: Scalar> Serialize for PredictionFrame<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.adjacency.size();
        let adjacency = if n > SPARSE_ADJACENCY_ABOVE {
            let entries = self
                .adjacency
                .as_slice()
                .iter()
                .enumerate()
                .filter(|(_, p)| **p != T::zero())
                .map(|(k, p)| (k / n, k % n, *p))
                .collect();
            AdjacencyWire::Sparse { size: n, entries }
        } else {
            AdjacencyWire::Dense(self.adjacency.rows())
        };
        PredictionFrameWire {
            frame_id: self.frame_id.clone(),
            categories: self.categories,
            keypoints: self.keypoints.clone(),
            adjacency,
            camera: self.camera.clone(),
        }
        .serialize(s)
    }
}

fn adjacency_from_wire<T: Scalar>(wire: AdjacencyWire<T>) -> Result<AdjacencyMatrix<T>> {
    match wire {
        AdjacencyWire::Dense(rows) => {
            let n = rows.len();
            if let Some(i) = rows.iter().position(|r| r.len() != n) {
                return Err(Error::Validation(format!(
                    "adjacency is not square: row {i} has {} entries for {n} rows",
                    rows[i].len()
                )));
            }
            Ok(AdjacencyMatrix::new(n, rows.into_iter().flatten().collect())?)
        }
        AdjacencyWire::Sparse { size, entries } => {
            let mut a = AdjacencyMatrix::zeros(size);
            for (i, j, p) in entries {
                if i >= size || j >= size {
                    return Err(Error::Validation(format!("sparse adjacency entry ({i}, {j}) outside {size}x{size}")));
                }
                a.set(i, j, p);
            }
            Ok(a)
        }
    }
}

/// Parses JSON text, reporting the offending field path on schema violations.
pub fn from_json_str<D: DeserializeOwned>(text: &str) -> Result<D> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::Parse {
            field,
            message: e.into_inner().to_string(),
        }
    })
}

fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path)?;
    from_json_str(&text).map_err(|e| match e {
        Error::Parse { field, message } => Error::Parse {
            field,
            message: format!("{message} (in {})", path.display()),
        },
        other => other,
    })
}

/// Rounds `v` to 9 significant digits.
pub fn quantize(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

fn quantize_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => Value::from(quantize(n.as_f64().expect("f64 number"))),
        Value::Array(items) => Value::Array(items.into_iter().map(quantize_value).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, quantize_value(v))).collect()),
        other => other,
    }
}

/// Deterministic pretty JSON: sorted keys, floats at 9 significant digits.
pub fn to_json_string<S: Serialize>(value: &S) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Validation(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&quantize_value(v)).map_err(|e| Error::Validation(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn parse_prediction_frame<T: Scalar>(text: &str) -> Result<PredictionFrame<T>> {
    frame_from_wire(from_json_str(text)?)
}

fn frame_from_wire<T: Scalar>(wire: PredictionFrameWire<T>) -> Result<PredictionFrame<T>> {
    let frame = PredictionFrame {
        frame_id: wire.frame_id,
        categories: wire.categories,
        keypoints: wire.keypoints,
        adjacency: adjacency_from_wire(wire.adjacency)?,
        camera: wire.camera,
    };
    frame.validate()?;
    Ok(frame)
}

pub fn load_prediction_frame<T: Scalar>(path: &Path) -> Result<PredictionFrame<T>> {
    frame_from_wire(read_json(path)?)
}

pub fn save_prediction_frame<T: Scalar>(path: &Path, frame: &PredictionFrame<T>) -> Result<()> {
    frame.validate()?;
    write_json(path, frame)
}

/// Loads a lane file (ground truth or predicted lanes) and validates every lane.
pub fn load_lane_frame<T: Scalar>(path: &Path) -> Result<LaneFrame<T>> {
    let frame: LaneFrame<T> = read_json(path)?;
    validate_lane_frame(&frame)?;
    Ok(frame)
}

pub fn parse_lane_frame<T: Scalar>(text: &str) -> Result<LaneFrame<T>> {
    let frame: LaneFrame<T> = from_json_str(text)?;
    validate_lane_frame(&frame)?;
    Ok(frame)
}

fn validate_lane_frame<T: Scalar>(frame: &LaneFrame<T>) -> Result<()> {
    for (i, lane) in frame.lanes.iter().enumerate() {
        lane.validate()
            .map_err(|e| Error::Validation(format!("frame `{}` lanes[{i}]: {e}", frame.frame_id)))?;
    }
    Ok(())
}

/// Alias of [`load_lane_frame`] for ground truth files.
pub fn load_ground_truth<T: Scalar>(path: &Path) -> Result<LaneFrame<T>> {
    load_lane_frame(path)
}

pub fn save_lane_frame<T: Scalar>(path: &Path, frame: &LaneFrame<T>) -> Result<()> {
    validate_lane_frame(frame)?;
    write_json(path, frame)
}

/// `*.json` files of a directory in name order.
pub fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "json"));
    files.sort();
    Ok(files)
}

/// Loads every lane file of a directory, in parallel.
pub fn load_lane_dir<T: Scalar>(dir: &Path) -> Result<Vec<LaneFrame<T>>> {
    json_files(dir)?.par_iter().map(|p| load_lane_frame(p)).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraWire {
    intrinsic: Vec<f64>,
    extrinsic: Vec<f64>,
    image_size: [usize; 2],
}

/// Camera file: row-major `intrinsic` (9) and `extrinsic` (16) plus `image_size` `[h, w]`.
pub fn parse_camera(text: &str) -> Result<CameraModel<f64>> {
    let wire: CameraWire = from_json_str(text)?;
    if wire.intrinsic.len() != 9 {
        return Err(Error::Validation(format!("intrinsic has {} values, expected 9", wire.intrinsic.len())));
    }
    if wire.extrinsic.len() != 16 {
        return Err(Error::Validation(format!("extrinsic has {} values, expected 16", wire.extrinsic.len())));
    }
    let mut k = [[0.0; 3]; 3];
    let mut e = [[0.0; 4]; 4];
    for (i, v) in wire.intrinsic.iter().enumerate() {
        k[i / 3][i % 3] = *v;
    }
    for (i, v) in wire.extrinsic.iter().enumerate() {
        e[i / 4][i % 4] = *v;
    }
    CameraModel::new(k, e, (wire.image_size[0], wire.image_size[1])).map_err(|e| Error::Validation(e.to_string()))
}

pub fn load_camera(path: &Path) -> Result<CameraModel<f64>> {
    parse_camera(&fs::read_to_string(path)?)
}

pub fn save_camera(path: &Path, camera: &CameraModel<f64>) -> Result<()> {
    let wire = CameraWire {
        intrinsic: camera.intrinsic.iter().flatten().copied().collect(),
        extrinsic: camera.extrinsic.iter().flatten().copied().collect(),
        image_size: [camera.image_size.0, camera.image_size.1],
    };
    write_json(path, &wire)
}

fn affine_rows<T: Scalar>(a: &Affine<T>) -> Vec<Vec<T>> {
    a.weight.chunks(a.inputs.max(1)).map(<[T]>::to_vec).collect()
}

fn affine_from_rows<T: Scalar>(name: &str, rows: Vec<Vec<T>>, bias: Vec<T>) -> Result<Affine<T>> {
    let outputs = rows.len();
    let inputs = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != inputs) {
        return Err(Error::Validation(format!("{name}: weight rows differ in length")));
    }
    Affine::new(inputs, outputs, rows.into_iter().flatten().collect(), bias)
        .map_err(|e| Error::Validation(format!("{name}: {e}")))
}

/// Weights file: flat object of named row-major arrays (`origin.w1`, ..., `final.b`).
pub fn parse_head_weights<T: Scalar>(text: &str) -> Result<HeadWeights<T>> {
    let mut named: BTreeMap<String, Value> = from_json_str(text)?;
    let mut take = |key: &str| -> Result<Value> {
        named.remove(key).ok_or_else(|| Error::Parse {
            field: key.to_string(),
            message: "missing field".into(),
        })
    };
    fn decode<D: DeserializeOwned>(key: &str, v: Value) -> Result<D> {
        serde_json::from_value(v).map_err(|e| Error::Parse {
            field: key.to_string(),
            message: e.to_string(),
        })
    }
    let mut mlp = |prefix: &str| -> Result<Mlp<T>> {
        let w1 = decode(&format!("{prefix}.w1"), take(&format!("{prefix}.w1"))?)?;
        let b1 = decode(&format!("{prefix}.b1"), take(&format!("{prefix}.b1"))?)?;
        let w2 = decode(&format!("{prefix}.w2"), take(&format!("{prefix}.w2"))?)?;
        let b2 = decode(&format!("{prefix}.b2"), take(&format!("{prefix}.b2"))?)?;
        Ok(Mlp {
            first: affine_from_rows(&format!("{prefix}.w1"), w1, b1)?,
            second: affine_from_rows(&format!("{prefix}.w2"), w2, b2)?,
        })
    };
    let origin = mlp("origin")?;
    let dest = mlp("dest")?;
    let w = decode("final.w", take("final.w")?)?;
    let b = decode("final.b", take("final.b")?)?;
    let last = affine_from_rows("final.w", w, b)?;
    if let Some(extra) = named.keys().next() {
        return Err(Error::Parse {
            field: extra.clone(),
            message: "unknown field".into(),
        });
    }
    let weights = HeadWeights { origin, dest, last };
    weights.validate().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(weights)
}

pub fn head_weights_to_json<T: Scalar>(weights: &HeadWeights<T>) -> Result<String> {
    let mut named: BTreeMap<&str, Value> = BTreeMap::new();
    let to = |v: Vec<Vec<T>>| serde_json::to_value(v).expect("finite weights serialize");
    let tb = |v: &Vec<T>| serde_json::to_value(v).expect("finite weights serialize");
    named.insert("origin.w1", to(affine_rows(&weights.origin.first)));
    named.insert("origin.b1", tb(&weights.origin.first.bias));
    named.insert("origin.w2", to(affine_rows(&weights.origin.second)));
    named.insert("origin.b2", tb(&weights.origin.second.bias));
    named.insert("dest.w1", to(affine_rows(&weights.dest.first)));
    named.insert("dest.b1", tb(&weights.dest.first.bias));
    named.insert("dest.w2", to(affine_rows(&weights.dest.second)));
    named.insert("dest.b2", tb(&weights.dest.second.bias));
    named.insert("final.w", to(affine_rows(&weights.last)));
    named.insert("final.b", tb(&weights.last.bias));
    to_json_string(&named)
}

pub fn load_head_weights<T: Scalar>(path: &Path) -> Result<HeadWeights<T>> {
    parse_head_weights(&fs::read_to_string(path)?)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Validation(format!("csv: {e}"))
}

/// Grid export with columns `row,col,x,y`.
pub fn write_grid_csv<T: Scalar, W: std::io::Write>(out: W, grid: &AnchorGrid<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "x", "y"]).map_err(csv_error)?;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let [x, y] = grid.position(r, c);
            w.serialize((r, c, quantize(x.as_f64()), quantize(y.as_f64())))
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Projection export with columns `row,col,u,v,valid`; invalid cells leave `u,v` empty.
pub fn write_projection_csv<T: Scalar, W: std::io::Write>(out: W, pmap: &ProjectionMap<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "u", "v", "valid"]).map_err(csv_error)?;
    for r in 0..pmap.rows {
        for c in 0..pmap.cols {
            let (u, v) = match pmap.pixel(r, c) {
                Some([u, v]) => (Some(quantize(u.as_f64())), Some(quantize(v.as_f64()))),
                None => (None, None),
            };
            w.serialize((r, c, u, v, u.is_some())).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}
