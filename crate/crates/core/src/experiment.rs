//! Experiment runner: dataset generation, scheme comparison, sensor-set
//! sweeps, region-of-interest studies and point-density analysis.
//!
//! Every command reads frames, reduces each to a [`FrameObservation`] (the
//! point count of every sensor inside every ground-truth box), runs the
//! detector and fusion on that, and writes tab-separated tables. Lines
//! starting with `#` in the tables are comments; the first other line holds
//! the column names.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::comms::{cost_of_frame, CostReport, EncodingConfig};
use crate::detector::{Detection, DetectorError, DetectorParams, FileDetector, OracleDetector, Stage};
use crate::detector::{oracle_detect_counts, DetectionContext, Detector};
use crate::fusion::{late_fuse, nms, FusionConfig, FusionError, Payload, Scheme, DEFAULT_NMS_IOU};
use crate::geometry::{points_in_box, ObjectClass, OrientedBox3D, Rect};
use crate::metrics::{density_cdf, iou_vs_density, match_detections, precision_recall, DensityCdf, PrCurve};
use crate::preprocess::{PointCloud, SensorId};
use crate::scene::dataset::{self, DatasetError};
use crate::scene::{Frame, FrameGenerator, GroundTruthObject, ScenarioConfig, SceneError};

pub const DEFAULT_KAPPAS: [f64; 3] = [0.7, 0.8, 0.9];
/// Largest sensor count for which every subset is enumerated.
pub const MAX_SUBSET_SENSORS: usize = 8;
/// Bins of the IOU-versus-density table.
pub const DENSITY_BINS: usize = 200;
/// Matching threshold used to pair detections with objects when measuring
/// IOU against density; low so that poor boxes still show up.
pub const DENSITY_MATCH_KAPPA: f64 = 0.1;
/// Precision level at which sweeps report recall.
pub const SWEEP_PRECISION: f64 = 0.95;
pub const SCENARIO_FILE: &str = "scenario.toml";
/// Frames rendered in parallel per batch when streaming.
const BATCH: usize = 16;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset directory {0} does not exist")]
    MissingDataset(String),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ExperimentError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SensorSets {
    /// The scenario's full sensor set.
    Full,
    /// Every non-empty subset.
    AllSubsets,
    Explicit(Vec<Vec<SensorId>>),
}

/// Where frames come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameSource {
    /// Render frames in memory from the experiment's scenario and seed.
    Generate,
    /// Read frames written by [`cmd_generate`].
    Dataset(PathBuf),
}

#[derive(Debug, Clone)]
pub enum DetectorChoice {
    Oracle(DetectorParams),
    External(FileDetector),
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub frames: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub sensor_sets: SensorSets,
    pub kappas: Vec<f64>,
    pub roi: Option<Rect>,
    pub out_dir: PathBuf,
    pub source: FrameSource,
    pub detector: DetectorChoice,
    /// Overrides the scenario's hybrid radius.
    pub hybrid_radius: Option<f64>,
    pub encoding: EncodingConfig,
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioConfig, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            scenario,
            frames: 200,
            seed: 1,
            schemes: Scheme::ALL.to_vec(),
            sensor_sets: SensorSets::Full,
            kappas: DEFAULT_KAPPAS.to_vec(),
            roi: None,
            out_dir: out_dir.into(),
            source: FrameSource::Generate,
            detector: DetectorChoice::Oracle(DetectorParams::default()),
            hybrid_radius: None,
            encoding: EncodingConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Invalid(m));
        self.scenario.validate()?;
        if self.frames == 0 {
            return bad("frames must be >= 1".into());
        }
        if self.kappas.is_empty() || self.kappas.iter().any(|k| !(*k > 0.0 && *k < 1.0)) {
            return bad(format!("kappas {:?} must be non-empty and inside (0, 1)", self.kappas));
        }
        if self.schemes.is_empty() {
            return bad("no fusion scheme selected".into());
        }
        if let Some(r) = self.hybrid_radius {
            if !(r >= 0.0) {
                return bad(format!("hybrid radius {r} must be >= 0"));
            }
        }
        if let Some(roi) = &self.roi {
            roi.validate().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        }
        if let DetectorChoice::Oracle(p) = &self.detector {
            p.validate()?;
        }
        self.resolve_sets()?;
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        self.hybrid_radius.unwrap_or(self.scenario.hybrid_radius)
    }

    pub fn fusion_config(&self, scheme: Scheme) -> Result<FusionConfig> {
        Ok(FusionConfig::new(scheme, self.radius())?)
    }

    /// Region in which objects and detections are scored.
    pub fn region(&self) -> Rect {
        self.roi.unwrap_or(self.scenario.detection_area)
    }

    /// Requested sensor sets, each sorted, in a stable order.
    pub fn resolve_sets(&self) -> Result<Vec<Vec<SensorId>>> {
        let ids = self.scenario.sensor_ids();
        match &self.sensor_sets {
            SensorSets::Full => Ok(vec![ids]),
            SensorSets::AllSubsets => {
                if ids.len() > MAX_SUBSET_SENSORS {
                    return Err(ExperimentError::Invalid(format!(
                        "all_subsets supports at most {MAX_SUBSET_SENSORS} sensors, scenario has {}",
                        ids.len()
                    )));
                }
                Ok(all_subsets(&ids))
            }
            SensorSets::Explicit(sets) => {
                let mut out = Vec::new();
                for set in sets {
                    let mut s = set.clone();
                    s.sort_unstable();
                    s.dedup();
                    if s.is_empty() {
                        return Err(ExperimentError::Invalid("empty sensor set".into()));
                    }
                    if let Some(bad) = s.iter().find(|id| !ids.contains(id)) {
                        return Err(ExperimentError::Invalid(format!("sensor {bad} is not in the scenario")));
                    }
                    if !out.contains(&s) {
                        out.push(s);
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Non-empty subsets ordered by size, then lexicographically.
pub fn all_subsets(ids: &[SensorId]) -> Vec<Vec<SensorId>> {
    let n = ids.len();
    let mut sets: Vec<Vec<SensorId>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ids[i]).collect())
        .collect();
    sets.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    sets
}

pub fn set_label(set: &[SensorId]) -> String {
    set.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("+")
}

/// A frame reduced to what detection and fusion need.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub frame_id: u64,
    pub ground_truth: Vec<GroundTruthObject>,
    /// `counts[k][i]`: points of the k-th scenario sensor inside object `i`.
    pub counts: Vec<Vec<usize>>,
    /// As `counts`, but only points at or beyond the hybrid radius.
    pub far_counts: Vec<Vec<usize>>,
    /// Cloud size of each sensor.
    pub points: Vec<usize>,
    /// Far-field cloud size of each sensor.
    pub far_points: Vec<usize>,
}

pub fn observe_frame(frame: &Frame, scenario: &ScenarioConfig, radius: f64) -> Result<FrameObservation> {
    let r2 = radius * radius;
    let mut obs = FrameObservation {
        frame_id: frame.frame_id,
        ground_truth: frame.ground_truth.clone(),
        counts: Vec::new(),
        far_counts: Vec::new(),
        points: Vec::new(),
        far_points: Vec::new(),
    };
    for s in &scenario.sensors {
        let cloud = frame.cloud(s.id).ok_or(DatasetError::MissingSensor {
            frame: frame.frame_id,
            sensor: s.id,
        })?;
        let is_far = |i: usize| {
            let p = &cloud.points[i];
            let (dx, dy) = (p.x - s.position[0], p.y - s.position[1]);
            dx * dx + dy * dy >= r2
        };
        let mut counts = Vec::with_capacity(frame.ground_truth.len());
        let mut far = Vec::with_capacity(frame.ground_truth.len());
        for o in &frame.ground_truth {
            let idx = points_in_box(&cloud.points, &o.bbox);
            far.push(idx.iter().filter(|&&i| is_far(i)).count());
            counts.push(idx.len());
        }
        obs.points.push(cloud.len());
        obs.far_points.push((0..cloud.len()).filter(|&i| is_far(i)).count());
        obs.counts.push(counts);
        obs.far_counts.push(far);
    }
    Ok(obs)
}

/// Frame ids and truths of the source, streamed through `f` in batches so
/// clouds never pile up in memory.
fn for_each_frame_batch(spec: &ExperimentSpec, mut f: impl FnMut(Vec<Frame>) -> Result<()>) -> Result<()> {
    match &spec.source {
        FrameSource::Generate => {
            let mut generator = FrameGenerator::new(&spec.scenario, spec.seed)?;
            let mut left = spec.frames;
            while left > 0 {
                let n = left.min(BATCH);
                let truths: Vec<_> = (0..n).map(|_| generator.next_ground_truth()).collect();
                let frames = truths
                    .into_par_iter()
                    .map(|(id, gt)| generator.render(id, gt))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                f(frames)?;
                left -= n;
            }
        }
        FrameSource::Dataset(dir) => {
            if !dir.is_dir() {
                return Err(ExperimentError::MissingDataset(dir.display().to_string()));
            }
            let ids = dataset::list_frames(dir)?;
            let ids = &ids[..ids.len().min(spec.frames)];
            let sensors = spec.scenario.sensor_ids();
            for chunk in ids.chunks(BATCH) {
                let frames = chunk
                    .par_iter()
                    .map(|&id| dataset::load_frame(dir, id, &sensors))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                f(frames)?;
            }
        }
    }
    Ok(())
}

pub fn observe_frames(spec: &ExperimentSpec) -> Result<Vec<FrameObservation>> {
    let radius = spec.radius();
    let mut out = Vec::new();
    for_each_frame_batch(spec, |frames| {
        let obs = frames
            .par_iter()
            .map(|f| observe_frame(f, &spec.scenario, radius))
            .collect::<Result<Vec<_>>>()?;
        out.extend(obs);
        Ok(())
    })?;
    Ok(out)
}

/// Runs the experiment's detector over observations. The oracle consumes point
/// counts; external detections are looked up by frame and stage.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    spec: &'a ExperimentSpec,
    oracle: Option<OracleDetector>,
    all_ids: Vec<SensorId>,
}

impl<'a> Evaluator<'a> {
    pub fn new(spec: &'a ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let oracle = match &spec.detector {
            DetectorChoice::Oracle(p) => Some(OracleDetector::new(*p, spec.seed)?),
            DetectorChoice::External(_) => None,
        };
        Ok(Self {
            spec,
            oracle,
            all_ids: spec.scenario.sensor_ids(),
        })
    }

    fn index_of(&self, id: SensorId) -> usize {
        self.all_ids.iter().position(|&s| s == id).expect("sensor ids validated")
    }

    /// One detector call followed by per-node NMS.
    fn detect(&self, obs: &FrameObservation, stage: Stage, counts: impl FnOnce() -> Vec<usize>) -> Vec<Detection> {
        let raw = match (&self.oracle, &self.spec.detector) {
            (Some(o), _) => {
                oracle_detect_counts(&obs.ground_truth, &counts(), &o.params, o.seed, obs.frame_id, stage)
            }
            (None, DetectorChoice::External(fd)) => {
                let ctx = DetectionContext {
                    frame_id: obs.frame_id,
                    stage,
                    ground_truth: &obs.ground_truth,
                };
                fd.detect(&PointCloud::empty_global(), &ctx)
            }
            _ => unreachable!(),
        };
        nms(&raw, DEFAULT_NMS_IOU)
    }

    /// Stage for a central detector run over `set`. External detections only
    /// exist per sensor and for the full set.
    fn central_stage(&self, set: &[SensorId], stage: Stage) -> Result<Stage> {
        if self.oracle.is_some() || set == self.all_ids.as_slice() {
            return Ok(stage);
        }
        if set.len() == 1 && stage == Stage::Early {
            return Ok(Stage::Sensor(set[0]));
        }
        Err(ExperimentError::Invalid(format!(
            "external detections cannot serve {stage:?} on sensor subset {}",
            set_label(set)
        )))
    }

    /// Fused detections and per-sensor payloads for one frame.
    pub fn run(&self, obs: &FrameObservation, set: &[SensorId], scheme: Scheme) -> Result<(Vec<Detection>, Vec<Payload>)> {
        let fc = self.spec.fusion_config(scheme)?;
        let idx: Vec<usize> = set.iter().map(|&s| self.index_of(s)).collect();
        let sum = |table: &[Vec<usize>]| -> Vec<usize> {
            (0..obs.ground_truth.len()).map(|i| idx.iter().map(|&k| table[k][i]).sum()).collect()
        };
        let local = || -> Vec<Vec<Detection>> {
            idx.iter()
                .map(|&k| self.detect(obs, Stage::Sensor(self.all_ids[k]), || obs.counts[k].clone()))
                .collect()
        };
        let payload = |k: usize, points: usize, boxes: usize| Payload {
            sensor_id: self.all_ids[k],
            points,
            boxes,
        };
        match scheme {
            Scheme::Early => {
                let stage = self.central_stage(set, Stage::Early)?;
                let dets = self.detect(obs, stage, || sum(&obs.counts));
                Ok((dets, idx.iter().map(|&k| payload(k, obs.points[k], 0)).collect()))
            }
            Scheme::Late => {
                let lists = local();
                let payloads = idx.iter().zip(&lists).map(|(&k, l)| payload(k, 0, l.len())).collect();
                Ok((late_fuse(&lists, &fc), payloads))
            }
            Scheme::Hybrid => {
                let lists = local();
                let far_total: usize = idx.iter().map(|&k| obs.far_points[k]).sum();
                let mut all = if far_total > 0 {
                    let stage = self.central_stage(set, Stage::FarField)?;
                    self.detect(obs, stage, || sum(&obs.far_counts))
                } else {
                    Vec::new()
                };
                all.extend(lists.iter().flatten().copied());
                let payloads = idx
                    .iter()
                    .zip(&lists)
                    .map(|(&k, l)| payload(k, obs.far_points[k], l.len()))
                    .collect();
                Ok((nms(&all, fc.hybrid_nms_iou_threshold), payloads))
            }
        }
    }

    /// Ground-truth cars and car detections inside the scoring region.
    pub fn scored(&self, obs: &FrameObservation, dets: &[Detection]) -> (Vec<OrientedBox3D>, Vec<Detection>) {
        let region = self.spec.region();
        let inside = |b: &OrientedBox3D| b.class == ObjectClass::Car && region.contains(b.center.x, b.center.y);
        let gt = obs.ground_truth.iter().map(|o| o.bbox).filter(inside).collect();
        let dets = dets.iter().filter(|d| inside(&d.bbox)).copied().collect();
        (gt, dets)
    }

    /// Densities of the scored cars as seen by `set` (early-fused).
    pub fn densities(&self, obs: &FrameObservation, set: &[SensorId]) -> Vec<usize> {
        let region = self.spec.region();
        let idx: Vec<usize> = set.iter().map(|&s| self.index_of(s)).collect();
        obs.ground_truth
            .iter()
            .enumerate()
            .filter(|(_, o)| o.class() == ObjectClass::Car && region.contains(o.bbox.center.x, o.bbox.center.y))
            .map(|(i, _)| idx.iter().map(|&k| obs.counts[k][i]).sum())
            .collect()
    }
}

/// Scored results of one scheme on one sensor set over all frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub set: Vec<SensorId>,
    pub gt_frames: Vec<Vec<OrientedBox3D>>,
    pub det_frames: Vec<Vec<Detection>>,
    pub cost: CostReport,
    pub elapsed_ms: f64,
}

impl SchemeResult {
    pub fn curve(&self, kappa: f64) -> PrCurve {
        precision_recall(&self.gt_frames, &self.det_frames, kappa)
    }

    pub fn ap(&self, kappa: f64) -> Option<f64> {
        self.curve(kappa).average_precision()
    }
}

pub fn evaluate(
    ev: &Evaluator<'_>,
    observations: &[FrameObservation],
    set: &[SensorId],
    scheme: Scheme,
) -> Result<SchemeResult> {
    let start = Instant::now();
    let per_frame = observations
        .par_iter()
        .map(|obs| ev.run(obs, set, scheme).map(|(d, p)| (ev.scored(obs, &d), p)))
        .collect::<Result<Vec<_>>>()?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
    let mut cost = CostReport::empty(scheme);
    let mut gt_frames = Vec::with_capacity(per_frame.len());
    let mut det_frames = Vec::with_capacity(per_frame.len());
    for ((gt, dets), payloads) in per_frame {
        cost.merge(&cost_of_frame(scheme, &payloads, &ev.spec.encoding));
        gt_frames.push(gt);
        det_frames.push(dets);
    }
    Ok(SchemeResult {
        scheme,
        set: set.to_vec(),
        gt_frames,
        det_frames,
        cost,
        elapsed_ms,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_table(dir: &Path, name: &str, comment: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut s = String::new();
    for line in comment.lines() {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "{}", header.join("\t"));
    for r in rows {
        let _ = writeln!(s, "{}", r.join("\t"));
    }
    let path = dir.join(name);
    fs::write(&path, s).map_err(io_err(&path))?;
    Ok(path)
}

fn write_curve(dir: &Path, name: &str, comment: &str, curve: &PrCurve) -> Result<PathBuf> {
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .map(|p| vec![p.tau.to_string(), p.precision.to_string(), p.recall.to_string()])
        .collect();
    write_table(dir, name, comment, &["tau", "precision", "recall"], &rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateReport {
    pub frames: usize,
    pub files: usize,
}

/// Renders `spec.frames` frames and writes them under `spec.out_dir`,
/// together with the scenario they came from.
pub fn cmd_generate(spec: &ExperimentSpec) -> Result<GenerateReport> {
    spec.validate()?;
    let dir = &spec.out_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let scenario_path = dir.join(SCENARIO_FILE);
    fs::write(&scenario_path, spec.scenario.to_toml_string()?).map_err(io_err(&scenario_path))?;
    let gen_spec = ExperimentSpec {
        source: FrameSource::Generate,
        ..spec.clone()
    };
    let mut frames = 0;
    let mut files = 0;
    for_each_frame_batch(&gen_spec, |batch| {
        batch.par_iter().try_for_each(|f| dataset::save_frame(dir, f))?;
        frames += batch.len();
        files += batch.iter().map(|f| f.clouds.len() + 1).sum::<usize>();
        Ok(())
    })?;
    Ok(GenerateReport { frames, files })
}

/// Loads the scenario stored with a dataset.
pub fn load_dataset_scenario(dir: &Path) -> Result<ScenarioConfig> {
    if !dir.is_dir() {
        return Err(ExperimentError::MissingDataset(dir.display().to_string()));
    }
    Ok(ScenarioConfig::load(dir.join(SCENARIO_FILE))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub scheme: Scheme,
    pub kappa: f64,
    pub ap: Option<f64>,
    pub kbit_per_sensor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub frames: usize,
    pub rows: Vec<CompareRow>,
    pub results: Vec<SchemeResult>,
}

impl CompareReport {
    pub fn ap(&self, scheme: Scheme, kappa: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.scheme == scheme && r.kappa == kappa).and_then(|r| r.ap)
    }

    pub fn cost(&self, scheme: Scheme) -> Option<f64> {
        self.rows.iter().find(|r| r.scheme == scheme).map(|r| r.kbit_per_sensor)
    }
}

/// AP per scheme and kappa plus mean communication cost, for the first
/// requested sensor set (the full set by default).
///
/// Writes `compare.tsv`, `cost.tsv`, `pr_<scheme>.tsv` (first kappa) and
/// `timing.tsv`. Only the timing table varies between runs.
pub fn cmd_compare_schemes(spec: &ExperimentSpec) -> Result<CompareReport> {
    let ev = Evaluator::new(spec)?;
    let set = ev.spec.resolve_sets()?.remove(0);
    let obs = observe_frames(spec)?;
    compare_observations(&ev, &obs, &set, true)
}

pub fn compare_observations(
    ev: &Evaluator<'_>,
    obs: &[FrameObservation],
    set: &[SensorId],
    write: bool,
) -> Result<CompareReport> {
    let spec = ev.spec;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for &scheme in &spec.schemes {
        let res = evaluate(ev, obs, set, scheme)?;
        for &kappa in &spec.kappas {
            rows.push(CompareRow {
                scheme,
                kappa,
                ap: res.ap(kappa),
                kbit_per_sensor: res.cost.mean_kbit(),
            });
        }
        results.push(res);
    }
    if write {
        let dir = &spec.out_dir;
        let note = format!(
            "scheme comparison over {} frames, sensors {}, hybrid radius {} m\nap: interpolated average precision at IOU threshold kappa (empty when no ground truth)\nkbit_per_sensor: mean data sent per sensor per frame",
            obs.len(),
            set_label(set),
            spec.radius()
        );
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.scheme.to_string(), r.kappa.to_string(), fmt_opt(r.ap), r.kbit_per_sensor.to_string()])
            .collect();
        write_table(dir, "compare.tsv", &note, &["scheme", "kappa", "ap", "kbit_per_sensor"], &table)?;
        let mut cost_rows = Vec::new();
        for res in &results {
            for (s, kbit) in res.cost.per_sensor_kbit() {
                cost_rows.push(vec![res.scheme.to_string(), s.to_string(), kbit.to_string()]);
            }
            let name = format!("pr_{}.tsv", res.scheme);
            write_curve(dir, &name, &format!("{} fusion, kappa {}", res.scheme, spec.kappas[0]), &res.curve(spec.kappas[0]))?;
        }
        write_table(dir, "cost.tsv", "mean kbit per frame sent by each sensor", &["scheme", "sensor", "kbit"], &cost_rows)?;
        let timing: Vec<Vec<String>> = results
            .iter()
            .map(|r| vec![r.scheme.to_string(), (r.elapsed_ms / obs.len().max(1) as f64).to_string()])
            .collect();
        write_table(dir, "timing.tsv", "wall-clock detection and fusion time, hardware dependent", &["scheme", "ms_per_frame"], &timing)?;
    }
    Ok(CompareReport {
        frames: obs.len(),
        rows,
        results,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub set: Vec<SensorId>,
    pub scheme: Scheme,
    pub kappa: f64,
    pub ap: Option<f64>,
    pub recall_at_precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Best set per cardinality by early-fusion AP at the first kappa.
    pub best: BTreeMap<usize, Vec<SensorId>>,
}

impl SweepReport {
    pub fn row(&self, set: &[SensorId], scheme: Scheme, kappa: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.set == set && r.scheme == scheme && r.kappa == kappa)
    }
}

/// Early and late fusion AP for every requested sensor set.
///
/// Writes `sweep.tsv`, `sweep_top.tsv` (three best sets per cardinality) and
/// `pr_best_<n>.tsv` for the best set of each cardinality.
pub fn cmd_sensor_sweep(spec: &ExperimentSpec) -> Result<SweepReport> {
    let ev = Evaluator::new(spec)?;
    let obs = observe_frames(spec)?;
    sweep_observations(&ev, &obs, true)
}

pub fn sweep_observations(ev: &Evaluator<'_>, obs: &[FrameObservation], write: bool) -> Result<SweepReport> {
    let spec = ev.spec;
    let sets = spec.resolve_sets()?;
    let k0 = spec.kappas[0];
    let mut rows = Vec::new();
    let mut early_curves = BTreeMap::new();
    for set in &sets {
        for scheme in [Scheme::Early, Scheme::Late] {
            let res = evaluate(ev, obs, set, scheme)?;
            for &kappa in &spec.kappas {
                let curve = res.curve(kappa);
                rows.push(SweepRow {
                    set: set.clone(),
                    scheme,
                    kappa,
                    ap: curve.average_precision(),
                    recall_at_precision: curve.recall_at_precision(SWEEP_PRECISION),
                });
                if scheme == Scheme::Early && kappa == k0 {
                    early_curves.insert(set.clone(), curve);
                }
            }
        }
    }
    let ap_of = |set: &[SensorId], scheme| {
        rows.iter()
            .find(|r: &&SweepRow| r.set == set && r.scheme == scheme && r.kappa == k0)
            .and_then(|r| r.ap)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let mut by_card: BTreeMap<usize, Vec<&Vec<SensorId>>> = BTreeMap::new();
    for set in &sets {
        by_card.entry(set.len()).or_default().push(set);
    }
    let mut best = BTreeMap::new();
    let mut top_rows = Vec::new();
    for (card, mut members) in by_card {
        // stable sort keeps the enumeration order on ties
        members.sort_by(|a, b| ap_of(b, Scheme::Early).total_cmp(&ap_of(a, Scheme::Early)));
        best.insert(card, members[0].clone());
        for (rank, set) in members.iter().take(3).enumerate() {
            let r = |scheme| rows.iter().find(|r| &r.set == *set && r.scheme == scheme && r.kappa == k0).unwrap();
            top_rows.push(vec![
                card.to_string(),
                (rank + 1).to_string(),
                set_label(set),
                fmt_opt(r(Scheme::Early).ap),
                fmt_opt(r(Scheme::Late).ap),
                r(Scheme::Early).recall_at_precision.to_string(),
            ]);
        }
    }
    if write {
        let dir = &spec.out_dir;
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    set_label(&r.set),
                    r.set.len().to_string(),
                    r.scheme.to_string(),
                    r.kappa.to_string(),
                    fmt_opt(r.ap),
                    r.recall_at_precision.to_string(),
                ]
            })
            .collect();
        let note = format!("sensor-set sweep over {} frames\nrecall_at_p: recall at precision {SWEEP_PRECISION}", obs.len());
        write_table(dir, "sweep.tsv", &note, &["set", "cardinality", "scheme", "kappa", "ap", "recall_at_p"], &table)?;
        write_table(
            dir,
            "sweep_top.tsv",
            &format!("three best sets per cardinality by early-fusion AP at kappa {k0}"),
            &["cardinality", "rank", "set", "ap_early", "ap_late", "recall_at_p_early"],
            &top_rows,
        )?;
        for (card, set) in &best {
            let note = format!("early fusion of best {card}-sensor set {}, kappa {k0}", set_label(set));
            write_curve(dir, &format!("pr_best_{card}.tsv"), &note, &early_curves[set])?;
        }
    }
    Ok(SweepReport { rows, best })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiRow {
    pub set: Vec<SensorId>,
    pub scheme: Scheme,
    pub kappa: f64,
    pub ap: Option<f64>,
    pub objects: usize,
}

/// AP restricted to the ROI for each requested set and each of its single
/// sensors. Writes `roi.tsv`; an ROI without objects leaves `ap` empty.
pub fn cmd_roi_study(spec: &ExperimentSpec) -> Result<Vec<RoiRow>> {
    if spec.roi.is_none() {
        return Err(ExperimentError::Invalid("roi study needs a region of interest".into()));
    }
    let ev = Evaluator::new(spec)?;
    let obs = observe_frames(spec)?;
    roi_observations(&ev, &obs, true)
}

pub fn roi_observations(ev: &Evaluator<'_>, obs: &[FrameObservation], write: bool) -> Result<Vec<RoiRow>> {
    let spec = ev.spec;
    let mut sets: Vec<Vec<SensorId>> = Vec::new();
    for set in spec.resolve_sets()? {
        for &s in &set {
            if !sets.contains(&vec![s]) {
                sets.push(vec![s]);
            }
        }
        if !sets.contains(&set) {
            sets.push(set);
        }
    }
    let mut rows = Vec::new();
    for set in &sets {
        for &scheme in &spec.schemes {
            let res = evaluate(ev, obs, set, scheme)?;
            let objects = res.gt_frames.iter().map(Vec::len).sum();
            for &kappa in &spec.kappas {
                rows.push(RoiRow {
                    set: set.clone(),
                    scheme,
                    kappa,
                    ap: res.ap(kappa),
                    objects,
                });
            }
        }
    }
    if write {
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![set_label(&r.set), r.scheme.to_string(), r.kappa.to_string(), fmt_opt(r.ap), r.objects.to_string()])
            .collect();
        let note = format!("AP inside roi {} over {} frames; ap empty when the roi holds no cars", spec.region(), obs.len());
        write_table(&spec.out_dir, "roi.tsv", &note, &["set", "scheme", "kappa", "ap", "objects"], &table)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub cdfs: Vec<(Vec<SensorId>, DensityCdf)>,
    pub bins: Vec<crate::metrics::DensityBin>,
}

/// Point-density CDFs per sensor set and the IOU-versus-density table.
///
/// With the default full set, every single sensor is analysed as well.
/// Writes `density_cdf.tsv` and `iou_density.tsv`; the latter pools the
/// early-fusion detections of all analysed sets.
pub fn cmd_density_analysis(spec: &ExperimentSpec) -> Result<DensityReport> {
    let ev = Evaluator::new(spec)?;
    let obs = observe_frames(spec)?;
    density_observations(&ev, &obs, true)
}

pub fn density_observations(ev: &Evaluator<'_>, obs: &[FrameObservation], write: bool) -> Result<DensityReport> {
    let spec = ev.spec;
    let mut sets = spec.resolve_sets()?;
    if spec.sensor_sets == SensorSets::Full {
        sets.extend(spec.scenario.sensor_ids().into_iter().map(|s| vec![s]));
    }
    let mut cdfs = Vec::new();
    let mut samples: Vec<(usize, f64)> = Vec::new();
    for set in &sets {
        let dens: Vec<Vec<usize>> = obs.iter().map(|o| ev.densities(o, set)).collect();
        cdfs.push((set.clone(), density_cdf(&dens.concat())));
        let res = evaluate(ev, obs, set, Scheme::Early)?;
        for ((gt, det), d) in res.gt_frames.iter().zip(&res.det_frames).zip(&dens) {
            let m = match_detections(gt, det, DENSITY_MATCH_KAPPA, f64::NEG_INFINITY);
            samples.extend(m.pairs.iter().map(|&(g, _, iou)| (d[g], iou)));
        }
    }
    let bins = iou_vs_density(&samples, DENSITY_BINS);
    if write {
        let dir = &spec.out_dir;
        let mut rows = Vec::new();
        for (set, cdf) in &cdfs {
            for &(d, f) in &cdf.steps {
                rows.push(vec![set_label(set), d.to_string(), f.to_string()]);
            }
        }
        let note = format!("empirical CDF of car point density (points inside the true box), {} frames", obs.len());
        write_table(dir, "density_cdf.tsv", &note, &["set", "density", "cdf"], &rows)?;
        let rows: Vec<Vec<String>> = bins
            .iter()
            .map(|b| vec![b.center.to_string(), b.mean_iou.to_string(), b.count.to_string()])
            .collect();
        let note = format!("mean IOU of early-fusion detections matched at IOU >= {DENSITY_MATCH_KAPPA}, {DENSITY_BINS} uniform density bins");
        write_table(dir, "iou_density.tsv", &note, &["density", "mean_iou", "count"], &rows)?;
    }
    Ok(DensityReport { cdfs, bins })
}
