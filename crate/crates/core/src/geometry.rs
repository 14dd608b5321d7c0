//! Rigid transforms, pinhole back-projection and yaw-only oriented boxes.
//!
//! Camera frames follow the optical convention: `z` forward along the depth
//! axis, `x` right, `y` down. The global frame is `z`-up with the ground plane
//! at `z = 0`. Boxes only rotate about the vertical axis.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point3 = nalgebra::Point3<f64>;

/// Tolerance used when validating rotation matrices.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal with determinant +1 (deviation {0:e})")]
    NotARotation(f64),
    #[error("box size components must be finite and > 0, got ({0}, {1}, {2})")]
    InvalidBoxSize(f64, f64, f64),
    #[error("box center and yaw must be finite")]
    NonFiniteBox,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("depth image is {got_w}x{got_h} but intrinsics expect {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("depth pixel ({u}, {v}) holds invalid value {value}")]
    InvalidDepth { u: usize, v: usize, value: f64 },
    #[error("degenerate rectangle [{0}, {1}] x [{2}, {3}]")]
    DegenerateRect(f64, f64, f64, f64),
}

/// Maps an angle onto `[-pi, pi)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = yaw - two_pi * ((yaw + PI) / two_pi).floor();
    if r >= PI {
        r -= two_pi;
    }
    if r < -PI {
        r = -PI;
    }
    r
}

/// Proper rigid motion `p -> R p + t`.
///
/// For a sensor this stores the sensor-to-global map, i.e. the inverse of the
/// extrinsic matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let deviation = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det_err = (rotation.determinant() - 1.0).abs();
        let worst = deviation.max(det_err);
        if !worst.is_finite() || worst > ORTHONORMAL_TOLERANCE || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NotARotation(worst));
        }
        Ok(Self { rotation, translation })
    }

    /// Rotation about the global `z` axis followed by a translation.
    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self.compose(other)` applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn transform_point(t: &RigidTransform, p: &Point3) -> Point3 {
    t.apply(p)
}

/// Axis-aligned rectangle in the global XY plane, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self, GeometryError> {
        let r = Self { min_x, min_y, max_x, max_y };
        r.validate()?;
        Ok(r)
    }

    /// Rectangle of the given size centered on `(cx, cy)`.
    pub fn centered(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = [self.min_x, self.min_y, self.max_x, self.max_y]
            .iter()
            .all(|v| v.is_finite())
            && self.max_x > self.min_x
            && self.max_y > self.min_y;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::DegenerateRect(self.min_x, self.max_x, self.min_y, self.max_y))
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.min_x, self.min_y, self.max_x, self.max_y)
    }
}

impl FromStr for Rect {
    type Err = String;

    /// Parses `min_x,min_y,max_x,max_y`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad rectangle value {t:?}: {e}")))
            .collect::<Result<_, _>>()?;
        if vals.len() != 4 {
            return Err(format!("rectangle needs 4 values, got {}", vals.len()));
        }
        Rect::new(vals[0], vals[1], vals[2], vals[3]).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Car,
    Cyclist,
    Pedestrian,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 3] = [ObjectClass::Car, ObjectClass::Cyclist, ObjectClass::Pedestrian];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectClass::Car => "car",
            ObjectClass::Cyclist => "cyclist",
            ObjectClass::Pedestrian => "pedestrian",
        }
    }

    /// Small integer code used by binary encodings.
    pub fn code(&self) -> u32 {
        match self {
            ObjectClass::Car => 0,
            ObjectClass::Cyclist => 1,
            ObjectClass::Pedestrian => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "car" => Ok(ObjectClass::Car),
            "cyclist" => Ok(ObjectClass::Cyclist),
            "pedestrian" => Ok(ObjectClass::Pedestrian),
            other => Err(format!("unknown object class {other:?}")),
        }
    }
}

/// 3D box rotated about the vertical axis.
///
/// `length` runs along the heading (local `x`), `width` along local `y`,
/// `height` along `z`. The center is the geometric center of the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox3D {
    pub center: Point3,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    yaw: f64,
    pub class: ObjectClass,
}

impl OrientedBox3D {
    pub fn new(
        center: Point3,
        length: f64,
        width: f64,
        height: f64,
        yaw: f64,
        class: ObjectClass,
    ) -> Result<Self, GeometryError> {
        for s in [length, width, height] {
            if !(s.is_finite() && s > 0.0) {
                return Err(GeometryError::InvalidBoxSize(length, width, height));
            }
        }
        if !(center.coords.iter().all(|v| v.is_finite()) && yaw.is_finite()) {
            return Err(GeometryError::NonFiniteBox);
        }
        Ok(Self {
            center,
            length,
            width,
            height,
            yaw: normalize_yaw(yaw),
            class,
        })
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn set_yaw(&mut self, yaw: f64) {
        self.yaw = normalize_yaw(yaw);
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    pub fn half_extents(&self) -> Vector3<f64> {
        Vector3::new(self.length / 2.0, self.width / 2.0, self.height / 2.0)
    }

    /// Length of the space diagonal.
    pub fn diagonal(&self) -> f64 {
        (self.length * self.length + self.width * self.width + self.height * self.height).sqrt()
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.center.z - self.height / 2.0, self.center.z + self.height / 2.0)
    }

    /// Expresses a global point in the box frame (origin at the center,
    /// `x` along the heading).
    pub fn to_local(&self, p: &Point3) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        Vector3::new(c * dx + s * dy, -s * dx + c * dy, p.z - self.center.z)
    }

    /// Maps a box-frame offset back to the global frame.
    pub fn to_global(&self, local: &Vector3<f64>) -> Point3 {
        let (s, c) = self.yaw.sin_cos();
        Point3::new(
            self.center.x + c * local.x - s * local.y,
            self.center.y + s * local.x + c * local.y,
            self.center.z + local.z,
        )
    }

    /// Boundary-inclusive containment test.
    pub fn contains(&self, p: &Point3) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= self.length / 2.0 && l.y.abs() <= self.width / 2.0 && l.z.abs() <= self.height / 2.0
    }

    /// Footprint corners in counter-clockwise order, starting at the
    /// front-left corner `(+l/2, +w/2)`.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        let (s, c) = self.yaw.sin_cos();
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[x, y]| [self.center.x + c * x - s * y, self.center.y + s * x + c * y])
    }

    /// Axis-aligned bounds `(min, max)` of the box.
    pub fn aabb(&self) -> (Point3, Point3) {
        let bev = self.bev_corners();
        let (z0, z1) = self.z_range();
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, z0);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, z1);
        for [x, y] in bev {
            lo.x = lo.x.min(x);
            lo.y = lo.y.min(y);
            hi.x = hi.x.max(x);
            hi.y = hi.y.max(y);
        }
        (lo, hi)
    }

    pub fn corners(&self) -> [Point3; 8] {
        box_corners(self)
    }
}

/// The eight corners of a box.
///
/// Indices 0..4 are the bottom face and 4..8 the top face; within each face
/// the order matches [`OrientedBox3D::bev_corners`] (counter-clockwise from
/// the front-left corner).
pub fn box_corners(b: &OrientedBox3D) -> [Point3; 8] {
    let bev = b.bev_corners();
    let (z0, z1) = b.z_range();
    let mut out = [Point3::origin(); 8];
    for (i, [x, y]) in bev.iter().enumerate() {
        out[i] = Point3::new(*x, *y, z0);
        out[i + 4] = Point3::new(*x, *y, z1);
    }
    out
}

/// Indices of the points lying inside `b` (boundary inclusive).
pub fn points_in_box(points: &[Point3], b: &OrientedBox3D) -> Vec<usize> {
    let (lo, hi) = b.aabb();
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| in_aabb(p, &lo, &hi) && b.contains(p))
        .map(|(i, _)| i)
        .collect()
}

/// Number of points inside `b`; same predicate as [`points_in_box`].
pub fn count_points_in_box(points: &[Point3], b: &OrientedBox3D) -> usize {
    let (lo, hi) = b.aabb();
    points.iter().filter(|p| in_aabb(p, &lo, &hi) && b.contains(p)).count()
}

#[inline]
fn in_aabb(p: &Point3, lo: &Point3, hi: &Point3) -> bool {
    p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z
}

/// Distance along a unit ray to the nearest box surface in front of the
/// origin, using the slab test in the box frame. If the origin is inside the
/// box the exit distance is returned.
pub fn ray_box_intersect(origin: &Point3, direction: &Vector3<f64>, b: &OrientedBox3D) -> Option<f64> {
    debug_assert!((direction.norm() - 1.0).abs() < 1e-9, "direction must be unit length");
    let o = b.to_local(origin);
    let (s, c) = b.yaw().sin_cos();
    let d = Vector3::new(c * direction.x + s * direction.y, -s * direction.x + c * direction.y, direction.z);
    let half = b.half_extents();

    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        if d[axis].abs() < 1e-15 {
            if o[axis].abs() > half[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[axis];
        let mut t0 = (-half[axis] - o[axis]) * inv;
        let mut t1 = (half[axis] - o[axis]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_near > 0.0 {
        Some(t_near)
    } else if t_far > 0.0 {
        Some(t_far)
    } else {
        None
    }
}

/// Pinhole intrinsics. Pixel `(u, v)` is addressed by its integer index,
/// which is also the coordinate of its center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub focal: f64,
    pub cu: f64,
    pub cv: f64,
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
}

impl CameraIntrinsics {
    pub fn new(
        focal: f64,
        cu: f64,
        cv: f64,
        width: usize,
        height: usize,
        hfov_deg: f64,
    ) -> Result<Self, GeometryError> {
        let intr = Self {
            focal,
            cu,
            cv,
            width,
            height,
            hfov_deg,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn from_fov(width: usize, height: usize, hfov_deg: f64) -> Result<Self, GeometryError> {
        if !(hfov_deg > 0.0 && hfov_deg < 180.0) {
            return Err(GeometryError::InvalidIntrinsics(format!("fov {hfov_deg} out of (0, 180)")));
        }
        let focal = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(focal, width as f64 / 2.0, height as f64 / 2.0, width, height, hfov_deg)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidIntrinsics(m));
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return bad(format!("focal length {} must be > 0", self.focal));
        }
        if self.width == 0 || self.height == 0 {
            return bad("resolution must be non-zero".into());
        }
        if !(self.cu >= 0.0 && self.cu < self.width as f64) {
            return bad(format!("C_u {} outside [0, {})", self.cu, self.width));
        }
        if !(self.cv >= 0.0 && self.cv < self.height as f64) {
            return bad(format!("C_v {} outside [0, {})", self.cv, self.height));
        }
        let implied = 2.0 * ((self.width as f64 / 2.0) / self.focal).atan().to_degrees();
        if (implied - self.hfov_deg).abs() > 0.1 {
            return bad(format!("fov {} disagrees with focal length (implies {implied:.3})", self.hfov_deg));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Intrinsics of the image obtained by keeping every `factor`-th pixel.
    pub fn downsampled(&self, factor: usize) -> Result<Self, GeometryError> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "factor {factor} does not divide {}x{}",
                self.width, self.height
            )));
        }
        let k = factor as f64;
        Self::new(
            self.focal / k,
            self.cu / k,
            self.cv / k,
            self.width / factor,
            self.height / factor,
            self.hfov_deg,
        )
    }

    /// Camera-frame point for pixel `(u, v)` at planar depth `d`.
    #[inline]
    pub fn back_project(&self, u: f64, v: f64, d: f64) -> Point3 {
        Point3::new((u - self.cu) * d / self.focal, (v - self.cv) * d / self.focal, d)
    }

    /// Pixel coordinates and planar depth of a camera-frame point, if it is
    /// in front of the camera.
    pub fn project(&self, p: &Point3) -> Option<(f64, f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.focal * p.x / p.z + self.cu, self.focal * p.y / p.z + self.cv, p.z))
    }

    /// Unit camera-frame direction through the center of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vector3<f64> {
        Vector3::new((u as f64 - self.cu) / self.focal, (v as f64 - self.cv) / self.focal, 1.0).normalize()
    }
}

/// Row-major planar-depth image in meters. Values at or beyond `max_range`
/// (including `+inf`) mark pixels without a return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub max_range: f64,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn filled(width: usize, height: usize, max_range: f64, value: f64) -> Self {
        Self {
            width,
            height,
            max_range,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, d: f64) {
        self.data[v * self.width + u] = d;
    }

    #[inline]
    pub fn is_return(&self, d: f64) -> bool {
        d < self.max_range
    }

    /// Keeps every `factor`-th pixel in both directions.
    pub fn downsample(&self, factor: usize) -> Result<Self, GeometryError> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "factor {factor} does not divide {}x{}",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let mut data = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                data.push(self.get(u * factor, v * factor));
            }
        }
        Ok(Self {
            width: w,
            height: h,
            max_range: self.max_range,
            data,
        })
    }

    /// Number of pixels carrying a return.
    pub fn return_count(&self) -> usize {
        self.data.iter().filter(|d| self.is_return(**d)).count()
    }
}

/// Back-projects every returning pixel, keeping its pixel index.
pub fn back_project_pixels(
    image: &DepthImage,
    intr: &CameraIntrinsics,
) -> Result<Vec<([usize; 2], Point3)>, GeometryError> {
    if image.width != intr.width || image.height != intr.height {
        return Err(GeometryError::DimensionMismatch {
            want_w: intr.width,
            want_h: intr.height,
            got_w: image.width,
            got_h: image.height,
        });
    }
    let mut out = Vec::with_capacity(image.data.len());
    for v in 0..image.height {
        for u in 0..image.width {
            let d = image.get(u, v);
            if d.is_nan() || d < 0.0 {
                return Err(GeometryError::InvalidDepth { u, v, value: d });
            }
            if !image.is_return(d) {
                continue;
            }
            out.push(([u, v], intr.back_project(u as f64, v as f64, d)));
        }
    }
    Ok(out)
}

/// Camera-frame points for every returning pixel, in row-major order.
pub fn depth_to_points(image: &DepthImage, intr: &CameraIntrinsics) -> Result<Vec<Point3>, GeometryError> {
    Ok(back_project_pixels(image, intr)?.into_iter().map(|(_, p)| p).collect())
}

/// Area of a simple polygon (shoelace formula; positive for CCW order).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

fn cross_edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Clips `subject` to the left half-plane of the directed edge `a -> b`.
fn clip_halfplane(subject: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let n = subject.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let s = subject[i];
        let e = subject[(i + 1) % n];
        let ds = cross_edge(a, b, s);
        let de = cross_edge(a, b, e);
        let s_in = ds >= 0.0;
        let e_in = de >= 0.0;
        if s_in != e_in {
            let t = ds / (ds - de);
            out.push([s[0] + (e[0] - s[0]) * t, s[1] + (e[1] - s[1]) * t]);
        }
        if e_in {
            out.push(e);
        }
    }
    out
}

/// Sutherland-Hodgman clipping of a convex or concave `subject` against a
/// convex CCW `clip` polygon.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut poly = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if poly.len() < 3 {
            return Vec::new();
        }
        poly = clip_halfplane(&poly, clip[i], clip[(i + 1) % n]);
    }
    if poly.len() < 3 {
        Vec::new()
    } else {
        poly
    }
}

/// Intersection areas below this are treated as touching, not overlapping.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Area of the intersection of two box footprints.
pub fn bev_intersection_area(a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
    let (alo, ahi) = a.aabb();
    let (blo, bhi) = b.aabb();
    if alo.x > bhi.x || blo.x > ahi.x || alo.y > bhi.y || blo.y > ahi.y {
        return 0.0;
    }
    let area = polygon_area(&clip_convex(&a.bev_corners(), &b.bev_corners()));
    if area < DEGENERATE_AREA {
        0.0
    } else {
        area
    }
}
