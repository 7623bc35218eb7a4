//! BEV anchor lattices and the pinhole mapping between ground points and image pixels.
//!
//! Ego frame: `x` lateral (right), `y` forward, `z` up, meters.
//! Camera frame: OpenCV convention (`x` right, `y` down, `z` along the optical axis).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

pub type Mat3<T> = [[T; 3]; 3];
pub type Mat4<T> = [[T; 4]; 4];

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Pinhole camera with an ego-to-camera rigid transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CameraModel<T> {
    pub intrinsic: Mat3<T>,
    /// Maps ego coordinates to camera coordinates: `p_cam = R p_ego + t`.
    pub extrinsic: Mat4<T>,
    /// `(height, width)` in pixels.
    pub image_size: (usize, usize),
}

/// Convenience parameterization of a forward-looking camera mounted above the ego origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose<T> {
    /// Mounting height above the ground plane (m).
    pub height: T,
    /// Downward pitch (rad).
    pub pitch: T,
    /// Heading about the ego up axis, positive to the left (rad).
    pub yaw: T,
    /// Rotation about the optical axis (rad).
    pub roll: T,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub image_size: (usize, usize),
}

impl<T: Scalar> CameraModel<T> {
    pub fn new(intrinsic: Mat3<T>, extrinsic: Mat4<T>, image_size: (usize, usize)) -> Result<Self> {
        let camera = Self {
            intrinsic,
            extrinsic,
            image_size,
        };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsic;
        if k.iter().flatten().chain(self.extrinsic.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(invalid("camera matrices must be finite"));
        }
        if k[1][0] != T::zero() || k[2][0] != T::zero() || k[2][1] != T::zero() {
            return Err(invalid("intrinsic matrix must be upper-triangular"));
        }
        if k[0][0] <= T::zero() || k[1][1] <= T::zero() || k[2][2] <= T::zero() {
            return Err(invalid("intrinsic focal entries must be positive"));
        }
        let tol = T::of(ORTHONORMAL_TOL);
        let r = self.rotation();
        for i in 0..3 {
            for j in 0..3 {
                let dot = (0..3).map(|m| r[i][m] * r[j][m]).sum::<T>();
                let expected = if i == j { T::one() } else { T::zero() };
                if (dot - expected).abs() > tol {
                    return Err(invalid("extrinsic rotation block is not orthonormal"));
                }
            }
        }
        if (det3(&r) - T::one()).abs() > tol {
            return Err(invalid("extrinsic rotation must have determinant +1"));
        }
        let last = self.extrinsic[3];
        if last[0] != T::zero() || last[1] != T::zero() || last[2] != T::zero() || last[3] != T::one() {
            return Err(invalid("extrinsic last row must be [0, 0, 0, 1]"));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(invalid("image size must be non-zero"));
        }
        Ok(())
    }

    pub fn from_pose(pose: &CameraPose<T>) -> Self {
        let (z, o) = (T::zero(), T::one());
        // level camera looking along +y
        let base = [[o, z, z], [z, z, -o], [z, o, z]];
        let (sy, cy) = pose.yaw.sin_cos();
        let yaw = [[cy, sy, z], [-sy, cy, z], [z, z, o]];
        let (sp, cp) = pose.pitch.sin_cos();
        let pitch = [[o, z, z], [z, cp, -sp], [z, sp, cp]];
        let (sr, cr) = pose.roll.sin_cos();
        let roll = [[cr, -sr, z], [sr, cr, z], [z, z, o]];
        let r = matmul3(&roll, &matmul3(&pitch, &matmul3(&base, &yaw)));
        let center = [z, z, pose.height];
        let rc = matvec3(&r, &center);
        let mut extrinsic = [[z; 4]; 4];
        for i in 0..3 {
            extrinsic[i][..3].copy_from_slice(&r[i]);
            extrinsic[i][3] = -rc[i];
        }
        extrinsic[3][3] = o;
        let intrinsic = [[pose.fx, z, pose.cx], [z, pose.fy, pose.cy], [z, z, o]];
        Self {
            intrinsic,
            extrinsic,
            image_size: pose.image_size,
        }
    }

    pub fn rotation(&self) -> Mat3<T> {
        let e = &self.extrinsic;
        [
            [e[0][0], e[0][1], e[0][2]],
            [e[1][0], e[1][1], e[1][2]],
            [e[2][0], e[2][1], e[2][2]],
        ]
    }

    pub fn translation(&self) -> [T; 3] {
        [self.extrinsic[0][3], self.extrinsic[1][3], self.extrinsic[2][3]]
    }

    /// Camera center in ego coordinates.
    pub fn center(&self) -> [T; 3] {
        let rt = transpose3(&self.rotation());
        let c = matvec3(&rt, &self.translation());
        [-c[0], -c[1], -c[2]]
    }

    pub fn ego_to_camera(&self, p: [T; 3]) -> [T; 3] {
        let q = matvec3(&self.rotation(), &p);
        let t = self.translation();
        [q[0] + t[0], q[1] + t[1], q[2] + t[2]]
    }

    /// Projects an ego-frame point. Returns `None` when it is not in front of the camera.
    pub fn project(&self, p: [T; 3]) -> Option<[T; 2]> {
        let pc = self.ego_to_camera(p);
        if pc[2] <= T::epsilon() {
            return None;
        }
        let h = matvec3(&self.intrinsic, &pc);
        Some([h[0] / h[2], h[1] / h[2]])
    }

    pub fn contains_pixel(&self, px: [T; 2]) -> bool {
        let (h, w) = self.image_size;
        px[0] >= T::zero()
            && px[1] >= T::zero()
            && px[0] <= T::of_usize(w - 1)
            && px[1] <= T::of_usize(h - 1)
    }
}

/// Lattice layout of the BEV anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    Uniform,
    Custom,
}

/// `rows x cols` anchor lattice, row-major, row 0 nearest to the ego vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid<T> {
    pub rows: usize,
    pub cols: usize,
    /// `(x, y)` per anchor, row-major.
    pub positions: Vec<[T; 2]>,
    /// Longitudinal gap leading into each row (m).
    pub row_spacing: Vec<T>,
    pub mode: GridMode,
}

impl<T: Scalar> AnchorGrid<T> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, row: usize, col: usize) -> [T; 2] {
        self.positions[row * self.cols + col]
    }

    pub fn row_y(&self, row: usize) -> T {
        self.positions[row * self.cols][1]
    }

    pub fn row_x_span(&self, row: usize) -> (T, T) {
        (self.position(row, 0)[0], self.position(row, self.cols - 1)[0])
    }

    /// Lateral gap between neighbouring anchors in `row`.
    pub fn lateral_spacing(&self, row: usize) -> T {
        self.position(row, 1)[0] - self.position(row, 0)[0]
    }

    pub fn min_row_spacing(&self) -> T {
        (1..self.rows)
            .map(|r| self.row_y(r) - self.row_y(r - 1))
            .fold(T::infinity(), T::min)
    }

    pub fn max_lateral_spacing(&self) -> T {
        (0..self.rows)
            .map(|r| self.lateral_spacing(r))
            .fold(T::zero(), T::max)
    }

    /// Row whose longitudinal coordinate equals `y` within `tol`.
    pub fn row_of(&self, y: T, tol: T) -> Option<usize> {
        (0..self.rows).find(|&r| (self.row_y(r) - y).abs() <= tol)
    }

    /// Nearest anchor columns in `row` to lateral position `x`, closest first.
    pub fn nearest_cols(&self, row: usize, x: T, count: usize) -> Vec<usize> {
        let mut cols: Vec<usize> = (0..self.cols).collect();
        cols.sort_by(|&a, &b| {
            let da = (self.position(row, a)[0] - x).abs();
            let db = (self.position(row, b)[0] - x).abs();
            crate::scalar::total_cmp(da, db).then(a.cmp(&b))
        });
        cols.truncate(count);
        cols
    }
}

pub fn build_uniform_grid<T: Scalar>(
    rows: usize,
    cols: usize,
    y_range: [T; 2],
    x_range: [T; 2],
) -> Result<AnchorGrid<T>> {
    if rows < 2 || cols < 2 {
        return Err(invalid("uniform grid needs at least 2 rows and 2 columns"));
    }
    if !(y_range[1] > y_range[0]) || !(x_range[1] > x_range[0]) {
        return Err(invalid("grid ranges must satisfy min < max"));
    }
    let dy = (y_range[1] - y_range[0]) / T::of_usize(rows - 1);
    let mut positions = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let y = lerp(y_range[0], y_range[1], r, rows);
        for c in 0..cols {
            positions.push([lerp(x_range[0], x_range[1], c, cols), y]);
        }
    }
    Ok(AnchorGrid {
        rows,
        cols,
        positions,
        row_spacing: vec![dy; rows],
        mode: GridMode::Uniform,
    })
}

/// Parameters of the near-dense anchor layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CustomGridParams<T> {
    pub rows: usize,
    pub cols: usize,
    /// Spacing leading into the nearest row (m).
    pub spacing_near: T,
    /// Spacing leading into the farthest row (m).
    pub spacing_far: T,
    /// Lateral extent of the farthest row (m).
    pub width: T,
    /// Longitudinal reference the spacings accumulate from (m).
    pub origin: T,
    /// Rescale the spacings so that they accumulate exactly over this range.
    pub normalize_to_range: Option<[T; 2]>,
}

impl<T: Scalar> CustomGridParams<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            spacing_near: T::of(0.5),
            spacing_far: T::of(1.5),
            width: T::of(20.0),
            origin: T::of(3.0),
            normalize_to_range: None,
        }
    }
}

/// Raw `[x_start, x_end]` of `row` in the `[0, width]` frame: the nearest row covers
/// the middle half, the farthest row the full width, interpolated linearly.
pub fn custom_row_span<T: Scalar>(row: usize, rows: usize, width: T) -> (T, T) {
    let t = T::of_usize(row) / T::of_usize(rows - 1);
    let four = T::of(4.0);
    let start = width / four * (T::one() - t);
    let end = width * T::of(3.0) / four * (T::one() - t) + width * t;
    (start, end)
}

/// Per-row spacing, affine in the row index from `spacing_near` to `spacing_far`.
pub fn custom_row_spacings<T: Scalar>(rows: usize, near: T, far: T) -> Vec<T> {
    let step = (far - near) / T::of_usize(rows - 1);
    (0..rows).map(|i| near + T::of_usize(i) * step).collect()
}

pub fn build_custom_grid<T: Scalar>(params: &CustomGridParams<T>) -> Result<AnchorGrid<T>> {
    let p = params;
    if p.rows < 2 || p.cols < 2 {
        return Err(invalid("custom grid needs at least 2 rows and 2 columns"));
    }
    if !(p.spacing_near > T::zero()) || !(p.spacing_near < p.spacing_far) {
        return Err(invalid("custom grid needs 0 < spacing_near < spacing_far"));
    }
    if !(p.width > T::zero()) {
        return Err(invalid("custom grid width must be positive"));
    }
    let mut spacing = custom_row_spacings(p.rows, p.spacing_near, p.spacing_far);
    let origin = match p.normalize_to_range {
        Some([lo, hi]) => {
            if !(hi > lo) {
                return Err(invalid("normalize_to_range must satisfy min < max"));
            }
            let total: T = spacing.iter().copied().sum();
            let factor = (hi - lo) / total;
            spacing.iter_mut().for_each(|s| *s = *s * factor);
            lo
        }
        None => p.origin,
    };
    let half = p.width / T::of(2.0);
    let mut positions = Vec::with_capacity(p.rows * p.cols);
    let mut y = origin;
    for (r, s) in spacing.iter().enumerate() {
        y = y + *s;
        let (start, end) = custom_row_span(r, p.rows, p.width);
        for c in 0..p.cols {
            positions.push([lerp(start, end, c, p.cols) - half, y]);
        }
    }
    if let Some([_, hi]) = p.normalize_to_range {
        // pin the far edge against accumulated rounding
        let last = (p.rows - 1) * p.cols;
        positions[last..].iter_mut().for_each(|q| q[1] = hi);
    }
    Ok(AnchorGrid {
        rows: p.rows,
        cols: p.cols,
        positions,
        row_spacing: spacing,
        mode: GridMode::Custom,
    })
}

fn lerp<T: Scalar>(lo: T, hi: T, i: usize, n: usize) -> T {
    if i + 1 == n {
        return hi;
    }
    let t = T::of_usize(i) / T::of_usize(n - 1);
    lo + (hi - lo) * t
}

/// Sub-pixel image coordinates for every anchor of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMap<T> {
    pub rows: usize,
    pub cols: usize,
    /// `(u, v)` per anchor, row-major. Meaningful only where `valid` is set.
    pub pixel_coords: Vec<[T; 2]>,
    pub valid: Vec<bool>,
    pub image_size: (usize, usize),
}

impl<T: Scalar> ProjectionMap<T> {
    pub fn pixel(&self, row: usize, col: usize) -> Option<[T; 2]> {
        let i = row * self.cols + col;
        self.valid[i].then_some(self.pixel_coords[i])
    }
}

pub fn project_grid_to_image<T: Scalar>(
    grid: &AnchorGrid<T>,
    camera: &CameraModel<T>,
    ground_height: T,
) -> ProjectionMap<T> {
    let mut pixel_coords = Vec::with_capacity(grid.len());
    let mut valid = Vec::with_capacity(grid.len());
    for &[x, y] in &grid.positions {
        match camera.project([x, y, ground_height]) {
            Some(px) if camera.contains_pixel(px) => {
                pixel_coords.push(px);
                valid.push(true);
            }
            Some(px) => {
                pixel_coords.push(px);
                valid.push(false);
            }
            None => {
                pixel_coords.push([T::nan(), T::nan()]);
                valid.push(false);
            }
        }
    }
    ProjectionMap {
        rows: grid.rows,
        cols: grid.cols,
        pixel_coords,
        valid,
        image_size: camera.image_size,
    }
}

/// Intersects the viewing ray of `pixel` with the plane `z = ground_height`.
pub fn unproject_pixel_to_ground<T: Scalar>(
    camera: &CameraModel<T>,
    pixel: [T; 2],
    ground_height: T,
) -> Result<[T; 3]> {
    let ray_cam = solve_upper3(&camera.intrinsic, [pixel[0], pixel[1], T::one()]);
    let ray = matvec3(&transpose3(&camera.rotation()), &ray_cam);
    let center = camera.center();
    let norm = (ray[0] * ray[0] + ray[1] * ray[1] + ray[2] * ray[2]).sqrt();
    if ray[2].abs() <= T::of(1e-9) * norm {
        return Err(Error::NoIntersection);
    }
    let s = (ground_height - center[2]) / ray[2];
    if !(s > T::zero()) {
        return Err(Error::NoIntersection);
    }
    Ok([
        center[0] + s * ray[0],
        center[1] + s * ray[1],
        ground_height,
    ])
}

/// Dense `height x width x channels` feature tensor, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(invalid(format!(
                "feature data has {} values, expected {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> &[T] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    fn at_mut(&mut self, row: usize, col: usize) -> &mut [T] {
        let i = (row * self.width + col) * self.channels;
        &mut self.data[i..i + self.channels]
    }
}

/// Samples `features` at every projected anchor. Pixel coordinates are rescaled from
/// the image resolution to the feature resolution with pixel-center alignment.
/// Invalid anchors, and anchors falling outside the feature map, produce zeros.
pub fn bilinear_sample<T: Scalar>(features: &FeatureMap<T>, pmap: &ProjectionMap<T>) -> FeatureMap<T> {
    let mut out = FeatureMap::zeros(pmap.rows, pmap.cols, features.channels);
    let (img_h, img_w) = pmap.image_size;
    let half = T::of(0.5);
    let su = T::of_usize(features.width) / T::of_usize(img_w);
    let sv = T::of_usize(features.height) / T::of_usize(img_h);
    let max_u = T::of_usize(features.width - 1);
    let max_v = T::of_usize(features.height - 1);
    for r in 0..pmap.rows {
        for c in 0..pmap.cols {
            let Some([u, v]) = pmap.pixel(r, c) else {
                continue;
            };
            let fu = (u + half) * su - half;
            let fv = (v + half) * sv - half;
            if !(fu >= T::zero() && fv >= T::zero() && fu <= max_u && fv <= max_v) {
                continue;
            }
            let u0 = fu.floor();
            let v0 = fv.floor();
            let (au, av) = (fu - u0, fv - v0);
            let u0 = u0.to_usize().unwrap_or(0);
            let v0 = v0.to_usize().unwrap_or(0);
            let u1 = (u0 + 1).min(features.width - 1);
            let v1 = (v0 + 1).min(features.height - 1);
            let taps = [
                (v0, u0, (T::one() - au) * (T::one() - av)),
                (v0, u1, au * (T::one() - av)),
                (v1, u0, (T::one() - au) * av),
                (v1, u1, au * av),
            ];
            let dst = out.at_mut(r, c);
            for (vv, uu, w) in taps {
                if w == T::zero() {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(features.at(vv, uu)) {
                    *d = *d + w * *s;
                }
            }
        }
    }
    out
}

pub(crate) fn matmul3<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut m = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

pub(crate) fn matvec3<T: Scalar>(a: &Mat3<T>, v: &[T; 3]) -> [T; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn transpose3<T: Scalar>(a: &Mat3<T>) -> Mat3<T> {
    let mut m = *a;
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[j][i];
        }
    }
    m
}

fn det3<T: Scalar>(a: &Mat3<T>) -> T {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Back substitution for an upper-triangular system.
fn solve_upper3<T: Scalar>(k: &Mat3<T>, b: [T; 3]) -> [T; 3] {
    let z = b[2] / k[2][2];
    let y = (b[1] - k[1][2] * z) / k[1][1];
    let x = (b[0] - k[0][1] * y - k[0][2] * z) / k[0][0];
    [x, y, z]
}
