//! Detection stage.
//!
//! [`OracleDetector`] stands in for a learned point-cloud detector: it looks
//! at how many points fall inside each ground-truth car and emits a box whose
//! error shrinks and whose score grows with that count. [`FileDetector`]
//! replays detections produced elsewhere. Voxel grouping and anchor grids are
//! the data-preparation steps a learned detector would consume.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use thiserror::Error;

use crate::geometry::{count_points_in_box, ObjectClass, OrientedBox3D, Point3, Rect};
use crate::preprocess::{PointCloud, SensorId, GROUND_EPSILON};
use crate::scene::dataset::parse_box;
use crate::scene::GroundTruthObject;
use crate::seeding::{rng_for, Stream};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read detections from {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid detector parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: OrientedBox3D,
    pub score: f64,
    /// Sensor that produced the box; `None` for the fusion center.
    pub source_sensor: Option<SensorId>,
}

impl Detection {
    pub fn new(bbox: OrientedBox3D, score: f64, source_sensor: Option<SensorId>) -> Result<Self, DetectorError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(DetectorError::ScoreOutOfRange(score));
        }
        Ok(Self {
            bbox,
            score,
            source_sensor,
        })
    }
}

/// Where a detector runs. The two central stages see different clouds: the
/// early-fused cloud of all sensors, or the far-field cloud of hybrid fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Sensor(SensorId),
    Early,
    FarField,
}

impl Stage {
    pub fn source_sensor(&self) -> Option<SensorId> {
        match self {
            Stage::Sensor(id) => Some(*id),
            _ => None,
        }
    }

    fn code(&self) -> u64 {
        match self {
            Stage::Sensor(id) => *id as u64,
            Stage::Early => 1 << 32,
            Stage::FarField => 2 << 32,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Sensor(id) => write!(f, "{id}"),
            Stage::Early => f.write_str("-"),
            Stage::FarField => f.write_str("far"),
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "-" | "early" => Ok(Stage::Early),
            "far" => Ok(Stage::FarField),
            _ => s
                .parse()
                .map(Stage::Sensor)
                .map_err(|_| format!("bad sensor id {s:?} (expected an integer, '-' or 'far')")),
        }
    }
}

/// What a detector knows about its input besides the cloud itself.
#[derive(Debug, Clone, Copy)]
pub struct DetectionContext<'a> {
    pub frame_id: u64,
    pub stage: Stage,
    /// Used only by the oracle.
    pub ground_truth: &'a [GroundTruthObject],
}

pub trait Detector: Send + Sync {
    fn detect(&self, cloud: &PointCloud, ctx: &DetectionContext<'_>) -> Vec<Detection>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreModel {
    /// `1 / (1 + (midpoint / n)^steepness)`, a logistic curve in `ln n`.
    Logistic { midpoint: f64, steepness: f64 },
    Constant(f64),
}

impl ScoreModel {
    pub fn score(&self, n: usize) -> f64 {
        match *self {
            ScoreModel::Logistic { midpoint, steepness } => {
                if n == 0 {
                    return 0.0;
                }
                1.0 / (1.0 + (midpoint / n as f64).powf(steepness))
            }
            ScoreModel::Constant(s) => s,
        }
    }
}

/// Spurious boxes: a Poisson number per detector call, placed uniformly in
/// `area` with scores uniform in `[0, max_score)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FalsePositives {
    pub rate: f64,
    pub max_score: f64,
    pub area: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub min_points: usize,
    /// Center error per axis is `center_noise / sqrt(n)` meters.
    pub center_noise: f64,
    /// Size error per dimension is `size_noise / sqrt(n)` meters.
    pub size_noise: f64,
    /// Yaw error is `yaw_noise / sqrt(n)` radians.
    pub yaw_noise: f64,
    pub score: ScoreModel,
    pub false_positives: Option<FalsePositives>,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            min_points: 20,
            center_noise: 0.75,
            size_noise: 0.45,
            yaw_noise: 0.375,
            score: ScoreModel::Logistic {
                midpoint: 50.0,
                steepness: 1.5,
            },
            false_positives: None,
        }
    }
}

impl DetectorParams {
    /// Exact boxes for every car with at least one point, score 1.
    pub fn perfect() -> Self {
        Self {
            min_points: 1,
            center_noise: 0.0,
            size_noise: 0.0,
            yaw_noise: 0.0,
            score: ScoreModel::Constant(1.0),
            false_positives: None,
        }
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::InvalidParams(m.into()));
        if self.min_points == 0 {
            return bad("min_points must be >= 1");
        }
        if [self.center_noise, self.size_noise, self.yaw_noise].iter().any(|v| !(*v >= 0.0)) {
            return bad("noise scales must be >= 0");
        }
        match self.score {
            ScoreModel::Logistic { midpoint, steepness } if !(midpoint > 0.0 && steepness > 0.0) => {
                return bad("logistic midpoint and steepness must be > 0")
            }
            ScoreModel::Constant(s) if !(0.0..=1.0).contains(&s) => return bad("constant score must be in [0, 1]"),
            _ => {}
        }
        if let Some(fp) = self.false_positives {
            if !(fp.rate >= 0.0) || !(0.0..=1.0).contains(&fp.max_score) {
                return bad("false-positive rate must be >= 0 and max score in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Per-object seed of the oracle's box noise. The same object gets the same
/// error direction in every stage, so more points always means a smaller
/// error.
fn unit_noise(seed: u64, frame_id: u64, object_id: u64) -> [f64; 7] {
    let mut rng = rng_for(seed, Stream::Detector, frame_id, object_id);
    std::array::from_fn(|_| rng.sample(StandardNormal))
}

/// Oracle detections given the point count inside each ground-truth box.
///
/// `counts[i]` belongs to `ground_truth[i]`. Only cars are detected.
pub fn oracle_detect_counts(
    ground_truth: &[GroundTruthObject],
    counts: &[usize],
    params: &DetectorParams,
    seed: u64,
    frame_id: u64,
    stage: Stage,
) -> Vec<Detection> {
    assert_eq!(ground_truth.len(), counts.len(), "one count per object");
    let mut out = Vec::new();
    for (obj, &n) in ground_truth.iter().zip(counts) {
        if obj.class() != ObjectClass::Car || n < params.min_points {
            continue;
        }
        let k = 1.0 / (n as f64).sqrt();
        let e = unit_noise(seed, frame_id, obj.object_id);
        let b = &obj.bbox;
        let (c, s, y) = (params.center_noise * k, params.size_noise * k, params.yaw_noise * k);
        let bbox = OrientedBox3D::new(
            Point3::new(b.center.x + c * e[0], b.center.y + c * e[1], b.center.z + c * e[2]),
            (b.length + s * e[3]).max(0.05 * b.length),
            (b.width + s * e[4]).max(0.05 * b.width),
            (b.height + s * e[5]).max(0.05 * b.height),
            b.yaw() + y * e[6],
            b.class,
        )
        .expect("perturbed box stays valid");
        out.push(Detection {
            bbox,
            score: params.score.score(n).clamp(0.0, 1.0),
            source_sensor: stage.source_sensor(),
        });
    }
    if let Some(fp) = params.false_positives {
        out.extend(false_positives(&fp, seed, frame_id, stage));
    }
    out
}

fn false_positives(fp: &FalsePositives, seed: u64, frame_id: u64, stage: Stage) -> Vec<Detection> {
    let mut rng = rng_for(seed, Stream::FalsePositives, frame_id, stage.code());
    let count = match Poisson::new(fp.rate) {
        Ok(p) => p.sample(&mut rng) as usize,
        Err(_) => 0,
    };
    let a = fp.area;
    (0..count)
        .map(|_| {
            let center = Point3::new(rng.random_range(a.min_x..=a.max_x), rng.random_range(a.min_y..=a.max_y), 0.8);
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let bbox = OrientedBox3D::new(center, 4.3, 1.85, 1.6, yaw, ObjectClass::Car).unwrap();
            Detection {
                bbox,
                score: rng.random_range(0.0..1.0) * fp.max_score,
                source_sensor: stage.source_sensor(),
            }
        })
        .collect()
}

/// Points of `cloud` inside each ground-truth box.
pub fn object_point_counts(points: &[Point3], ground_truth: &[GroundTruthObject]) -> Vec<usize> {
    ground_truth.iter().map(|o| count_points_in_box(points, &o.bbox)).collect()
}

pub fn oracle_detect(
    pc: &PointCloud,
    ground_truth: &[GroundTruthObject],
    params: &DetectorParams,
    seed: u64,
    frame_id: u64,
    stage: Stage,
) -> Vec<Detection> {
    let counts = object_point_counts(&pc.points, ground_truth);
    oracle_detect_counts(ground_truth, &counts, params, seed, frame_id, stage)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleDetector {
    pub params: DetectorParams,
    pub seed: u64,
}

impl OracleDetector {
    pub fn new(params: DetectorParams, seed: u64) -> Result<Self, DetectorError> {
        params.validate()?;
        Ok(Self { params, seed })
    }

    pub fn detect_counts(&self, ctx: &DetectionContext<'_>, counts: &[usize]) -> Vec<Detection> {
        oracle_detect_counts(ctx.ground_truth, counts, &self.params, self.seed, ctx.frame_id, ctx.stage)
    }
}

impl Detector for OracleDetector {
    fn detect(&self, cloud: &PointCloud, ctx: &DetectionContext<'_>) -> Vec<Detection> {
        oracle_detect(cloud, ctx.ground_truth, &self.params, self.seed, ctx.frame_id, ctx.stage)
    }
}

pub fn format_detection_line(frame_id: u64, stage: Stage, d: &Detection) -> String {
    let b = &d.bbox;
    format!(
        "{frame_id} {stage} {} {} {} {} {} {} {} {} {}",
        b.class,
        b.center.x,
        b.center.y,
        b.center.z,
        b.length,
        b.width,
        b.height,
        b.yaw(),
        d.score
    )
}

/// Writes detections in the text format read by [`FileDetector`].
pub fn write_detections<W: Write>(w: &mut W, records: &[(u64, Stage, Vec<Detection>)]) -> io::Result<()> {
    writeln!(w, "# frame_id sensor_id class cx cy cz l w h yaw score")?;
    for (frame, stage, dets) in records {
        for d in dets {
            writeln!(w, "{}", format_detection_line(*frame, *stage, d))?;
        }
    }
    Ok(())
}

pub type DetectionTable = BTreeMap<(u64, Stage), Vec<Detection>>;

/// Parses a detection file. Lines are
/// `frame_id sensor_id class cx cy cz l w h yaw score`; `sensor_id` is `-`
/// for detections on the early-fused cloud and `far` for the hybrid
/// far-field cloud. Lines starting with `#` are comments.
pub fn read_detections<R: Read>(r: R) -> Result<DetectionTable, DetectorError> {
    let mut table = DetectionTable::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|source| DetectorError::Io {
            path: "<reader>".into(),
            source,
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |message: String| DetectorError::Parse { line: n, message };
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 11 {
            return Err(perr(format!("expected 11 fields, got {}", t.len())));
        }
        let frame: u64 = t[0].parse().map_err(|e| perr(format!("bad frame id {:?}: {e}", t[0])))?;
        let stage: Stage = t[1].parse().map_err(perr)?;
        let class: ObjectClass = t[2].parse().map_err(perr)?;
        let bbox = parse_box(class, &t[3..10], n).map_err(|e| match e {
            crate::scene::dataset::DatasetError::Parse { line, message } => DetectorError::Parse { line, message },
            other => perr(other.to_string()),
        })?;
        let score: f64 = t[10].parse().map_err(|e| perr(format!("bad score {:?}: {e}", t[10])))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(perr(format!("score {score} outside [0, 1]")));
        }
        table.entry((frame, stage)).or_default().push(Detection {
            bbox,
            score,
            source_sensor: stage.source_sensor(),
        });
    }
    Ok(table)
}

fn read_table(path: &Path) -> Result<DetectionTable, DetectorError> {
    let file = std::fs::File::open(path).map_err(|source| DetectorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_detections(file)
}

/// Detections of one frame and sensor from a detection file.
pub fn load_external_detections(path: &Path, frame_id: u64, stage: Stage) -> Result<Vec<Detection>, DetectorError> {
    Ok(read_table(path)?.remove(&(frame_id, stage)).unwrap_or_default())
}

/// Replays externally produced detections, ignoring the cloud. Missing
/// (frame, stage) entries yield no detections.
#[derive(Debug, Clone, Default)]
pub struct FileDetector {
    table: HashMap<(u64, Stage), Vec<Detection>>,
}

impl FileDetector {
    pub fn load(path: &Path) -> Result<Self, DetectorError> {
        Ok(Self::from_table(read_table(path)?))
    }

    pub fn from_table(table: DetectionTable) -> Self {
        Self {
            table: table.into_iter().collect(),
        }
    }
}

impl Detector for FileDetector {
    fn detect(&self, _cloud: &PointCloud, ctx: &DetectionContext<'_>) -> Vec<Detection> {
        self.table.get(&(ctx.frame_id, ctx.stage)).cloned().unwrap_or_default()
    }
}

pub const DEFAULT_MAX_POINTS_PER_VOXEL: usize = 35;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGridSpec {
    pub voxel_size: [f64; 3],
    pub max_points_per_voxel: usize,
    pub extent: Rect,
    pub z_range: (f64, f64),
}

impl VoxelGridSpec {
    pub fn new(voxel_size: [f64; 3], extent: Rect, height_cutoff: f64) -> Result<Self, DetectorError> {
        let spec = Self {
            voxel_size,
            max_points_per_voxel: DEFAULT_MAX_POINTS_PER_VOXEL,
            extent,
            z_range: (GROUND_EPSILON, height_cutoff),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.voxel_size.iter().any(|v| !(*v > 0.0)) || self.max_points_per_voxel == 0 {
            return Err(DetectorError::InvalidParams("voxel sizes must be > 0 and T >= 1".into()));
        }
        Ok(())
    }

    /// Voxel holding `p`, counted from the extent's minimum corner. Points on
    /// a boundary fall in the higher voxel.
    pub fn index_of(&self, p: &Point3) -> [i64; 3] {
        let [vx, vy, vz] = self.voxel_size;
        [
            ((p.x - self.extent.min_x) / vx).floor() as i64,
            ((p.y - self.extent.min_y) / vy).floor() as i64,
            ((p.z - self.z_range.0) / vz).floor() as i64,
        ]
    }
}

/// Groups points by voxel, keeping a seeded uniform sample of at most `T`
/// points per voxel (in input order).
pub fn voxelize(pc: &PointCloud, spec: &VoxelGridSpec, seed: u64) -> BTreeMap<[i64; 3], Vec<Point3>> {
    let mut groups: BTreeMap<[i64; 3], Vec<Point3>> = BTreeMap::new();
    for p in &pc.points {
        groups.entry(spec.index_of(p)).or_default().push(*p);
    }
    let t = spec.max_points_per_voxel;
    let mut rng = rng_for(seed, Stream::Voxel, 0, 0);
    for pts in groups.values_mut() {
        if pts.len() > t {
            let mut keep = rand::seq::index::sample(&mut rng, pts.len(), t).into_vec();
            keep.sort_unstable();
            *pts = keep.into_iter().map(|i| pts[i]).collect();
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorGridSpec {
    pub size: [f64; 3],
    pub stride: f64,
    pub z_center: f64,
    pub orientations: [f64; 2],
}

impl AnchorGridSpec {
    pub fn new(stride: f64) -> Result<Self, DetectorError> {
        if !(stride > 0.0) {
            return Err(DetectorError::InvalidParams(format!("anchor stride {stride} must be > 0")));
        }
        Ok(Self {
            size: [3.9, 1.6, 1.56],
            stride,
            z_center: 1.0,
            orientations: [0.0, std::f64::consts::FRAC_PI_2],
        })
    }

    /// Grid positions along each axis of `area`.
    pub fn grid_shape(&self, area: &Rect) -> (usize, usize) {
        let n = |extent: f64| ((extent / self.stride - 1e-9).ceil() as usize).max(1);
        (n(area.width()), n(area.height()))
    }
}

/// Anchors at `min + i * stride` over `area`, two orientations per position,
/// ordered by row, column, orientation.
pub fn anchor_grid(spec: &AnchorGridSpec, area: &Rect) -> Vec<OrientedBox3D> {
    let (nx, ny) = spec.grid_shape(area);
    let [l, w, h] = spec.size;
    let mut out = Vec::with_capacity(nx * ny * 2);
    for j in 0..ny {
        for i in 0..nx {
            let c = Point3::new(
                area.min_x + i as f64 * spec.stride,
                area.min_y + j as f64 * spec.stride,
                spec.z_center,
            );
            for yaw in spec.orientations {
                out.push(OrientedBox3D::new(c, l, w, h, yaw, ObjectClass::Car).expect("anchor size is positive"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::iou3d;
    use crate::preprocess::CloudFrame;
    use proptest::prelude::*;

    fn car(id: u64, x: f64) -> GroundTruthObject {
        GroundTruthObject {
            object_id: id,
            bbox: OrientedBox3D::new(Point3::new(x, 0.0, 0.8), 4.2, 1.8, 1.6, 0.3, ObjectClass::Car).unwrap(),
        }
    }

    fn cloud_in(b: &OrientedBox3D, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|k| {
                let t = k as f64 / n.max(1) as f64 - 0.5;
                b.to_global(&nalgebra::Vector3::new(t * b.length * 0.9, t * b.width * 0.5, 0.0))
            })
            .collect()
    }

    #[test]
    fn no_points_no_detection() {
        let gt = [car(1, 0.0)];
        let pc = PointCloud::new(vec![], CloudFrame::Global, None);
        assert!(oracle_detect(&pc, &gt, &DetectorParams::default(), 0, 0, Stage::Early).is_empty());
    }

    #[test]
    fn error_vanishes_with_many_points() {
        let gt = [car(1, 0.0)];
        let d = oracle_detect_counts(&gt, &[100_000_000], &DetectorParams::default(), 0, 0, Stage::Early);
        assert!(iou3d(&d[0].bbox, &gt[0].bbox) > 0.999);
        assert!(d[0].score > 0.999);
    }

    #[test]
    fn perfect_mode_returns_truth() {
        let gt = [car(1, 0.0), car(2, 10.0), car(3, 20.0)];
        let mut pts = cloud_in(&gt[0].bbox, 1);
        pts.extend(cloud_in(&gt[2].bbox, 50));
        let pc = PointCloud::new(pts, CloudFrame::Global, None);
        let d = oracle_detect(&pc, &gt, &DetectorParams::perfect(), 5, 0, Stage::Sensor(2));
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].bbox, gt[0].bbox);
        assert_eq!(d[1].bbox, gt[2].bbox);
        assert!(d.iter().all(|x| x.score == 1.0 && x.source_sensor == Some(2)));
    }

    #[test]
    fn only_cars_are_detected() {
        let mut ped = car(4, 0.0);
        ped.bbox.class = ObjectClass::Pedestrian;
        assert!(oracle_detect_counts(&[ped], &[500], &DetectorParams::perfect(), 0, 0, Stage::Early).is_empty());
    }

    #[test]
    fn calibrated_iou_rises_with_density() {
        // mean IOU over many objects, binned by density
        let params = DetectorParams {
            min_points: 60,
            ..DetectorParams::default()
        };
        let densities = [60usize, 80, 150, 300, 1000, 5000];
        let mut means = Vec::new();
        for &n in &densities {
            let mut sum = 0.0;
            for id in 0..400 {
                let gt = [car(id, 0.0)];
                let d = oracle_detect_counts(&gt, &[n], &params, 1, 0, Stage::Early);
                sum += iou3d(&d[0].bbox, &gt[0].bbox);
            }
            means.push(sum / 400.0);
        }
        assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
        assert!(means[0] < 0.9 && means[5] > 0.97, "{means:?}");
        assert!(oracle_detect_counts(&[car(0, 0.0)], &[59], &params, 1, 0, Stage::Early).is_empty());
    }

    #[test]
    fn score_model_is_monotone() {
        let m = DetectorParams::default().score;
        assert_eq!(m.score(0), 0.0);
        assert!((m.score(50) - 0.5).abs() < 1e-12);
        assert!((1..500).all(|n| m.score(n + 1) > m.score(n)));
    }

    #[test]
    fn false_positives_off_by_default_and_seeded() {
        let area = Rect::new(-40.0, -30.0, 40.0, 10.0).unwrap();
        let params = DetectorParams {
            false_positives: Some(FalsePositives {
                rate: 3.0,
                max_score: 0.3,
                area,
            }),
            ..DetectorParams::default()
        };
        let a = oracle_detect_counts(&[], &[], &params, 8, 2, Stage::Early);
        assert_eq!(a, oracle_detect_counts(&[], &[], &params, 8, 2, Stage::Early));
        assert!(a.iter().all(|d| d.score < 0.3 && area.contains(d.bbox.center.x, d.bbox.center.y)));
        let total: usize = (0..200)
            .map(|f| oracle_detect_counts(&[], &[], &params, 8, f, Stage::Early).len())
            .sum();
        assert!((total as f64 / 200.0 - 3.0).abs() < 0.5);
    }

    #[test]
    fn params_validation() {
        assert!(DetectorParams::default().validate().is_ok());
        let p = DetectorParams {
            min_points: 0,
            ..DetectorParams::default()
        };
        assert!(OracleDetector::new(p, 0).is_err());
        assert!(Detection::new(car(0, 0.0).bbox, 1.5, None).is_err());
    }

    #[test]
    fn detection_file_round_trip() {
        let gt = [car(1, 0.0), car(2, 7.0)];
        let dets = oracle_detect_counts(&gt, &[80, 300], &DetectorParams::default(), 3, 4, Stage::Sensor(1));
        let central = oracle_detect_counts(&gt, &[400, 400], &DetectorParams::default(), 3, 4, Stage::Early);
        let far = oracle_detect_counts(&gt, &[30, 0], &DetectorParams::default(), 3, 4, Stage::FarField);
        let records = vec![(4, Stage::Sensor(1), dets.clone()), (4, Stage::Early, central.clone()), (4, Stage::FarField, far.clone())];
        let mut buf = Vec::new();
        write_detections(&mut buf, &records).unwrap();
        let table = read_detections(buf.as_slice()).unwrap();
        assert_eq!(table[&(4, Stage::Sensor(1))], dets);
        assert_eq!(table[&(4, Stage::Early)], central);
        assert_eq!(table[&(4, Stage::FarField)], far);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dets.txt");
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(load_external_detections(&path, 4, Stage::Sensor(1)).unwrap(), dets);
        assert!(load_external_detections(&path, 9, Stage::Sensor(1)).unwrap().is_empty());
        let fd = FileDetector::load(&path).unwrap();
        let ctx = DetectionContext {
            frame_id: 4,
            stage: Stage::Early,
            ground_truth: &[],
        };
        assert_eq!(fd.detect(&PointCloud::empty_global(), &ctx), central);
    }

    #[test]
    fn detection_file_errors() {
        assert!(read_detections("".as_bytes()).unwrap().is_empty());
        let bad_yaw = "0 1 car 0 0 0.8 4 1.8 1.6 0.1 0.9\n0 1 car 0 0 0.8 4 1.8 1.6 x 0.9\n";
        match read_detections(bad_yaw.as_bytes()) {
            Err(DetectorError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("yaw"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let bad_score = "0 1 car 0 0 0.8 4 1.8 1.6 0.1 1.2\n";
        assert!(matches!(read_detections(bad_score.as_bytes()), Err(DetectorError::Parse { line: 1, .. })));
    }

    #[test]
    fn voxel_examples() {
        let area = Rect::new(-40.0, -20.0, 40.0, 20.0).unwrap();
        let spec = VoxelGridSpec::new([0.2, 0.2, 0.4], area, 4.0).unwrap();
        let origin = Point3::new(-40.0, -20.0, GROUND_EPSILON);
        let one = voxelize(&PointCloud::new(vec![origin], CloudFrame::Global, None), &spec, 0);
        assert_eq!(one.keys().copied().collect::<Vec<_>>(), vec![[0, 0, 0]]);

        let many: Vec<Point3> = (0..100).map(|k| Point3::new(0.01 + k as f64 * 1e-3, 0.05, 1.0)).collect();
        let v = voxelize(&PointCloud::new(many.clone(), CloudFrame::Global, None), &spec, 3);
        assert_eq!(v.len(), 1);
        let kept = v.values().next().unwrap();
        assert_eq!(kept.len(), 35);
        assert!(kept.iter().all(|p| many.contains(p)));

        let edge = Point3::new(-40.0 + 0.25, -20.0, 0.3);
        assert_eq!(spec.index_of(&edge)[0], 1);
    }

    #[test]
    fn anchor_examples() {
        let area = Rect::new(-40.0, -30.0, 40.0, 10.0).unwrap();
        let spec = AnchorGridSpec::new(0.4).unwrap();
        let anchors = anchor_grid(&spec, &area);
        assert_eq!(anchors.len(), 40_000);
        assert!(anchors.iter().all(|a| (a.length, a.width, a.height) == (3.9, 1.6, 1.56)));
        assert!(anchors.iter().all(|a| a.center.x < area.max_x && a.center.y < area.max_y));

        let coarse = AnchorGridSpec::new(80.0).unwrap();
        assert_eq!(coarse.grid_shape(&area), (1, 1));
        assert_eq!(anchor_grid(&coarse, &area).len(), 2);
        assert!(AnchorGridSpec::new(0.0).is_err());
    }

    proptest! {
        #[test]
        fn voxelize_partitions_input(pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.0f64..3.0), 0..300), seed in 0u64..1000) {
            let area = Rect::new(-5.0, -5.0, 5.0, 5.0).unwrap();
            let mut spec = VoxelGridSpec::new([0.5, 0.5, 0.5], area, 4.0).unwrap();
            spec.max_points_per_voxel = usize::MAX;
            let points: Vec<Point3> = pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let pc = PointCloud::new(points.clone(), CloudFrame::Global, None);
            let all = voxelize(&pc, &spec, seed);
            prop_assert_eq!(all.values().map(Vec::len).sum::<usize>(), points.len());
            for (idx, group) in &all {
                for p in group {
                    prop_assert_eq!(spec.index_of(p), *idx);
                }
            }
            spec.max_points_per_voxel = 3;
            let sub = voxelize(&pc, &spec, seed);
            for (idx, group) in &sub {
                prop_assert!(group.len() <= 3);
                prop_assert!(group.iter().all(|p| all[idx].contains(p)));
            }
        }

        #[test]
        fn more_points_never_lose_a_detection(n in 0usize..500, extra in 0usize..500, id in 0u64..50) {
            let gt = [car(id, 0.0)];
            let p = DetectorParams::default();
            let a = oracle_detect_counts(&gt, &[n], &p, 2, 0, Stage::Early);
            let b = oracle_detect_counts(&gt, &[n + extra], &p, 2, 0, Stage::Early);
            prop_assert!(a.len() <= b.len());
            if let (Some(x), Some(y)) = (a.first(), b.first()) {
                prop_assert!(iou3d(&y.bbox, &gt[0].bbox) >= iou3d(&x.bbox, &gt[0].bbox) - 1e-9);
                prop_assert!(y.score >= x.score);
            }
        }
    }
}
