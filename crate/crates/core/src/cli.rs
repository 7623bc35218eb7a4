//! Command-line front end. `run_cli` returns the process exit code: 0 on success,
//! 1 on validation or I/O failures, 2 on usage errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::assignment::{build_connection_targets, gt_keypoints_from_lanes, match_keypoints, CostWeights, GroundTruthKeypoint, Matching};
use crate::config::{ModelConfig, PipelineDefaults, Preset};
use crate::error::{Error, Result};
use crate::geometry::{build_custom_grid, build_uniform_grid, project_grid_to_image, AnchorGrid, CustomGridParams};
use crate::io::{
    json_files, load_camera, load_lane_dir, load_lane_frame, load_prediction_frame, save_lane_frame,
    save_prediction_frame, write_grid_csv, write_json, write_projection_csv, PredictionFrame,
};
use crate::metrics::{evaluate, EvalConfig};
use crate::pipeline::{benchmark, lanes_to_frame, post_process, PostProcessConfig};
use crate::proposal::{point_nms_proposals, PointNmsParams};
use crate::synth::{benchmark_frame, generate_scene, SceneSpec};

pub const THREADS_ENV: &str = "LANEKIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lanekit", version, about = "3D lane keypoint post-processing and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Export the anchor grid as CSV (row,col,x,y).
    Grid {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project the anchor grid into a camera image (row,col,u,v,valid).
    Project {
        #[arg(long)]
        camera: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0.0)]
        ground_height: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PointNMS over a prediction frame; writes kept indices.
    Nms {
        #[arg(long)]
        frame: PathBuf,
        #[command(flatten)]
        nms: NmsArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract lane instances from prediction frames (file or directory).
    Extract {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        t_a: f64,
        #[arg(long, default_value_t = 2)]
        min_lane_points: usize,
        /// Extract over all keypoints without PointNMS.
        #[arg(long)]
        no_nms: bool,
        #[command(flatten)]
        nms: NmsArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Match a prediction frame's keypoints against ground truth lanes.
    Match {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 2)]
        repeats: usize,
        #[arg(long)]
        strongest: bool,
        #[arg(long, default_value_t = 1.0)]
        lambda_dist: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_cls: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate predicted lanes against ground truth lanes.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.5, 0.5])]
        threshold: Vec<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        per_frame: bool,
    },
    /// Write synthetic prediction and ground truth frames.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        lanes: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_x: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_z: f64,
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        distractor_rate: f64,
        /// Consecutive seeds starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        frames: usize,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time PointNMS plus lane extraction.
    Bench {
        #[arg(long, default_value_t = 512)]
        keypoints: usize,
        /// Benchmark these prediction frames instead of a synthetic workload.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        #[arg(long, default_value_t = 0.5)]
        t_a: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GridKind {
    Uniform,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    Lite,
    Base,
    Large,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    grid: GridKind,
    #[arg(long, value_enum, default_value = "base")]
    preset: PresetArg,
    /// Override the preset's BEV rows.
    #[arg(long)]
    rows: Option<usize>,
    /// Override the preset's BEV columns.
    #[arg(long)]
    cols: Option<usize>,
    /// Rescale custom spacings over `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    normalize: Option<Vec<f64>>,
}

impl GridArgs {
    fn build(&self) -> Result<AnchorGrid<f64>> {
        let preset = match self.preset {
            PresetArg::Lite => Preset::Lite,
            PresetArg::Base => Preset::Base,
            PresetArg::Large => Preset::Large,
        };
        let model = ModelConfig::preset(preset);
        let d = PipelineDefaults::<f64>::default();
        let rows = self.rows.unwrap_or(model.bev_rows);
        let cols = self.cols.unwrap_or(model.bev_cols);
        match self.grid {
            GridKind::Uniform => build_uniform_grid(rows, cols, d.y_range, d.x_range),
            GridKind::Custom => {
                let mut p = CustomGridParams::new(rows, cols);
                p.width = d.bev_width;
                p.origin = d.bev_origin;
                p.normalize_to_range = self.normalize.as_ref().map(|v| [v[0], v[1]]);
                build_custom_grid(&p)
            }
        }
    }
}

#[derive(Debug, Args)]
struct NmsArgs {
    /// Lateral window (m); defaults to twice the widest anchor spacing of the grid.
    #[arg(long)]
    thresh_x: Option<f64>,
    /// Longitudinal window (m); defaults to half the narrowest row gap of the grid.
    #[arg(long)]
    thresh_y: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    r: f64,
    #[arg(long, default_value_t = 0.1)]
    iou: f64,
    #[command(flatten)]
    grid: GridArgs,
}

impl NmsArgs {
    fn params(&self) -> Result<PointNmsParams<f64>> {
        let defaults = PointNmsParams::for_grid(&self.grid.build()?);
        let params = PointNmsParams {
            thresh_x: self.thresh_x.unwrap_or(defaults.thresh_x),
            thresh_y: self.thresh_y.unwrap_or(defaults.thresh_y),
            r: self.r,
            iou_thresh: self.iou,
        };
        if !(params.thresh_x > 0.0 && params.thresh_y > 0.0 && params.r > 0.0) {
            return Err(Error::InvalidArgument("thresh-x, thresh-y and r must be positive".into()));
        }
        Ok(params)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_json<S: Serialize>(out: Option<&Path>, value: &S) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => emit(None, &crate::io::to_json_string(value)?),
    }
}

fn frame_paths(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        json_files(input)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

#[derive(Serialize)]
struct MatchOutput<'a> {
    frame_id: &'a str,
    matching: &'a Matching,
    gt_keypoints: &'a [GroundTruthKeypoint<f64>],
    /// Positive connection targets as `(from, to)` proposal pairs.
    targets: Vec<(usize, usize)>,
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Grid { grid, out } => {
            let g = grid.build()?;
            let mut buf = Vec::new();
            write_grid_csv(&mut buf, &g)?;
            emit(out.as_deref(), &String::from_utf8_lossy(&buf))
        }
        Command::Project {
            camera,
            grid,
            ground_height,
            out,
        } => {
            let cam = load_camera(&camera)?;
            let pmap = project_grid_to_image(&grid.build()?, &cam, ground_height);
            let mut buf = Vec::new();
            write_projection_csv(&mut buf, &pmap)?;
            emit(out.as_deref(), &String::from_utf8_lossy(&buf))
        }
        Command::Nms { frame, nms, out } => {
            let f: PredictionFrame<f64> = load_prediction_frame(&frame)?;
            let kept = point_nms_proposals(&f.keypoints, &nms.params()?);
            emit_json(out.as_deref(), &kept)
        }
        Command::Extract {
            frame,
            t_a,
            min_lane_points,
            no_nms,
            nms,
            out,
        } => {
            if !(0.0..1.0).contains(&t_a) {
                return Err(Error::InvalidArgument("t-a must lie in [0, 1)".into()));
            }
            let cfg = PostProcessConfig {
                t_a,
                nms: if no_nms { None } else { Some(nms.params()?) },
                min_lane_points,
            };
            let paths = frame_paths(&frame)?;
            let frames = paths
                .par_iter()
                .map(|p| {
                    let f: PredictionFrame<f64> = load_prediction_frame(p)?;
                    let lanes = post_process(&f.keypoints, &f.adjacency, &cfg)?.lanes;
                    Ok(lanes_to_frame(&f.frame_id, &lanes))
                })
                .collect::<Result<Vec<_>>>()?;
            if frame.is_dir() {
                let dir = out.ok_or_else(|| Error::InvalidArgument("--out directory required for a frame directory".into()))?;
                frames
                    .par_iter()
                    .try_for_each(|f| save_lane_frame(&dir.join(format!("{}.json", f.frame_id)), f))
            } else {
                emit_json(out.as_deref(), &frames[0])
            }
        }
        Command::Match {
            frame,
            gt,
            repeats,
            strongest,
            lambda_dist,
            lambda_cls,
            grid,
            out,
        } => {
            let f: PredictionFrame<f64> = load_prediction_frame(&frame)?;
            let lanes = load_lane_frame::<f64>(&gt)?;
            let gts = gt_keypoints_from_lanes(&lanes.lanes, &grid.build()?)?;
            let weights = CostWeights {
                lambda_dist,
                lambda_cls,
            };
            let matching = match_keypoints(&f.keypoints, &gts, repeats, strongest, weights)?;
            let t = build_connection_targets(&matching, &gts, f.keypoints.len())?;
            let n = t.size();
            let targets = (0..n * n)
                .filter(|k| t.as_slice()[*k] > 0.0)
                .map(|k| (k / n, k % n))
                .collect();
            emit_json(
                out.as_deref(),
                &MatchOutput {
                    frame_id: &f.frame_id,
                    matching: &matching,
                    gt_keypoints: &gts,
                    targets,
                },
            )
        }
        Command::Eval {
            pred,
            gt,
            threshold,
            report,
            per_frame,
        } => {
            let preds = load_lane_dir::<f64>(&pred)?;
            let gts = load_lane_dir::<f64>(&gt)?;
            let cfg = EvalConfig {
                thresholds: threshold,
                ..EvalConfig::default()
            };
            let reports = evaluate(&preds, &gts, &cfg, per_frame)?;
            emit_json(report.as_deref(), &reports)
        }
        Command::Synth {
            seed,
            lanes,
            noise_x,
            noise_z,
            dropout,
            n,
            distractor_rate,
            frames,
            grid,
            out,
        } => {
            let g = grid.build()?;
            (0..frames as u64).into_par_iter().try_for_each(|k| {
                let spec = SceneSpec {
                    seed: seed + k,
                    lane_count: lanes,
                    sigma_x: noise_x,
                    sigma_z: noise_z,
                    repeats_n: n,
                    dropout_p: dropout,
                    distractor_edge_rate: distractor_rate,
                    ..SceneSpec::default()
                };
                let scene = generate_scene(&spec, &g)?;
                let name = format!("{}.json", scene.gt.frame_id);
                save_prediction_frame(&out.join("pred").join(&name), &scene.prediction)?;
                save_lane_frame(&out.join("gt").join(&name), &scene.gt)
            })
        }
        Command::Bench {
            keypoints,
            frames,
            iterations,
            t_a,
            seed,
        } => {
            let grid = build_uniform_grid(56, 64, [3.0, 103.0], [-10.0, 10.0])?;
            let loaded: Vec<PredictionFrame<f64>> = match &frames {
                Some(dir) => frame_paths(dir)?.iter().map(|p| load_prediction_frame(p)).collect::<Result<_>>()?,
                None => vec![benchmark_frame(keypoints, &grid, seed)?],
            };
            let cfg = PostProcessConfig {
                t_a,
                nms: Some(PointNmsParams::for_grid(&grid)),
                min_lane_points: 2,
            };
            let inputs: Vec<_> = loaded.into_iter().map(|f| (f.keypoints, f.adjacency)).collect();
            let stats = benchmark(&inputs, &cfg, iterations.max(1))?;
            emit(None, &format!("{}\n", serde_json::to_string(&stats).map_err(|e| Error::Validation(e.to_string()))?))
        }
    }
}

fn thread_pool() -> std::result::Result<rayon::ThreadPool, String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got `{value}`"))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| e.to_string())
}

/// Parses `argv` (including the program name) and runs the selected subcommand.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let pool = match thread_pool() {
        Ok(pool) => pool,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
