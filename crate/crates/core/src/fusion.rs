//! Early, late and hybrid fusion of sensor outputs at the fusion center.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::detector::{Detection, DetectionContext, Detector, Stage};
use crate::metrics::iou3d;
use crate::preprocess::{CloudFrame, PointCloud, PreprocessError, SensorId};
use crate::scene::{GroundTruthObject, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Early,
    Late,
    Hybrid,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Early, Scheme::Hybrid, Scheme::Late];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Early => "early",
            Scheme::Late => "late",
            Scheme::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "early" => Ok(Scheme::Early),
            "late" => Ok(Scheme::Late),
            "hybrid" => Ok(Scheme::Hybrid),
            _ => Err(format!("unknown scheme {s:?} (expected early, late or hybrid)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Frame(#[from] PreprocessError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub scheme: Scheme,
    pub nms_iou_threshold: f64,
    /// Threshold of the final merge in hybrid fusion.
    pub hybrid_nms_iou_threshold: f64,
    pub hybrid_radius: f64,
}

pub const DEFAULT_NMS_IOU: f64 = 0.1;

impl FusionConfig {
    pub fn new(scheme: Scheme, hybrid_radius: f64) -> Result<Self, FusionError> {
        let cfg = Self {
            scheme,
            nms_iou_threshold: DEFAULT_NMS_IOU,
            hybrid_nms_iou_threshold: DEFAULT_NMS_IOU,
            hybrid_radius,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn for_scenario(scenario: &ScenarioConfig, scheme: Scheme) -> Self {
        Self::new(scheme, scenario.hybrid_radius).expect("scenario radius validated on load")
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let unit = |t: f64| t > 0.0 && t < 1.0;
        if !unit(self.nms_iou_threshold) || !unit(self.hybrid_nms_iou_threshold) {
            return Err(FusionError::InvalidConfig("NMS thresholds must lie in (0, 1)".into()));
        }
        if !(self.hybrid_radius >= 0.0) {
            return Err(FusionError::InvalidConfig(format!("hybrid radius {} must be >= 0", self.hybrid_radius)));
        }
        Ok(())
    }
}

/// Concatenates global clouds in input order.
pub fn early_fuse(clouds: &[&PointCloud]) -> Result<PointCloud, FusionError> {
    let mut points = Vec::with_capacity(clouds.iter().map(|c| c.len()).sum());
    for c in clouds {
        c.expect_frame(CloudFrame::Global)?;
        points.extend_from_slice(&c.points);
    }
    Ok(PointCloud::new(points, CloudFrame::Global, None))
}

/// Suppression priority: higher score, then fusion-center boxes, then lower
/// sensor id, then input position.
fn priority_order(dets: &[Detection]) -> Vec<usize> {
    let key = |d: &Detection| d.source_sensor.map_or(0, |s| s as u32 + 1);
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        dets[j]
            .score
            .total_cmp(&dets[i].score)
            .then(key(&dets[i]).cmp(&key(&dets[j])))
            .then(i.cmp(&j))
    });
    order
}

/// Greedy non-maximum suppression with volumetric IOU. A box survives iff its
/// IOU with every box kept before it is at most `iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in priority_order(dets) {
        let d = dets[i];
        if kept.iter().all(|k| iou3d(&k.bbox, &d.bbox) <= iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

pub fn late_fuse(per_sensor: &[Vec<Detection>], cfg: &FusionConfig) -> Vec<Detection> {
    let all: Vec<Detection> = per_sensor.iter().flatten().copied().collect();
    nms(&all, cfg.nms_iou_threshold)
}

/// Points at horizontal distance `>= radius` from `position`. Radius 0 keeps
/// everything and an infinite radius keeps nothing.
pub fn far_field(pc: &PointCloud, position: [f64; 2], radius: f64) -> PointCloud {
    let r2 = radius * radius;
    let points = pc
        .points
        .iter()
        .filter(|p| {
            let (dx, dy) = (p.x - position[0], p.y - position[1]);
            dx * dx + dy * dy >= r2
        })
        .copied()
        .collect();
    PointCloud::new(points, pc.frame, pc.source_sensor)
}

/// What one sensor delivers: its preprocessed cloud and the detections its
/// local detector found in that cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorOutput {
    pub sensor_id: SensorId,
    pub position: [f64; 2],
    pub cloud: PointCloud,
    pub detections: Vec<Detection>,
}

/// Hybrid fusion: each sensor's far-field points are early-fused and run
/// through `detector` at the center; the result is merged with every
/// sensor's own boxes by NMS. An empty far-field cloud skips the central
/// detector.
pub fn hybrid_fuse(
    outputs: &[SensorOutput],
    cfg: &FusionConfig,
    detector: &dyn Detector,
    frame_id: u64,
    ground_truth: &[GroundTruthObject],
) -> Result<Vec<Detection>, FusionError> {
    let far: Vec<PointCloud> = outputs
        .iter()
        .map(|o| far_field(&o.cloud, o.position, cfg.hybrid_radius))
        .collect();
    let fused = early_fuse(&far.iter().collect::<Vec<_>>())?;
    let mut all = if fused.is_empty() {
        Vec::new()
    } else {
        let ctx = DetectionContext {
            frame_id,
            stage: Stage::FarField,
            ground_truth,
        };
        detector.detect(&fused, &ctx)
    };
    all.extend(outputs.iter().flat_map(|o| o.detections.iter().copied()));
    Ok(nms(&all, cfg.hybrid_nms_iou_threshold))
}

/// What one sensor sends under a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Payload {
    pub sensor_id: SensorId,
    pub points: usize,
    pub boxes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutput {
    pub detections: Vec<Detection>,
    pub payloads: Vec<Payload>,
}

/// One frame through a fusion scheme, from preprocessed sensor clouds to the
/// fused detection list. Every detector output is passed through NMS before
/// it leaves its node.
pub fn run_scheme(
    cfg: &FusionConfig,
    sensors: &[(SensorId, [f64; 2], &PointCloud)],
    detector: &dyn Detector,
    frame_id: u64,
    ground_truth: &[GroundTruthObject],
) -> Result<SchemeOutput, FusionError> {
    let detect = |cloud: &PointCloud, stage| {
        let ctx = DetectionContext {
            frame_id,
            stage,
            ground_truth,
        };
        nms(&detector.detect(cloud, &ctx), cfg.nms_iou_threshold)
    };
    let local = |points_of: &dyn Fn(&PointCloud) -> usize| -> Vec<(SensorOutput, Payload)> {
        sensors
            .iter()
            .map(|&(id, position, cloud)| {
                let detections = detect(cloud, Stage::Sensor(id));
                let payload = Payload {
                    sensor_id: id,
                    points: points_of(cloud),
                    boxes: detections.len(),
                };
                let out = SensorOutput {
                    sensor_id: id,
                    position,
                    cloud: cloud.clone(),
                    detections,
                };
                (out, payload)
            })
            .collect()
    };
    match cfg.scheme {
        Scheme::Early => {
            let clouds: Vec<&PointCloud> = sensors.iter().map(|s| s.2).collect();
            let fused = early_fuse(&clouds)?;
            let payloads = sensors
                .iter()
                .map(|&(id, _, c)| Payload {
                    sensor_id: id,
                    points: c.len(),
                    boxes: 0,
                })
                .collect();
            Ok(SchemeOutput {
                detections: detect(&fused, Stage::Early),
                payloads,
            })
        }
        Scheme::Late => {
            let (outs, payloads): (Vec<_>, Vec<_>) = local(&|_| 0).into_iter().unzip();
            let lists: Vec<Vec<Detection>> = outs.into_iter().map(|o| o.detections).collect();
            Ok(SchemeOutput {
                detections: late_fuse(&lists, cfg),
                payloads,
            })
        }
        Scheme::Hybrid => {
            let mut outs = Vec::new();
            let mut payloads = Vec::new();
            for ((out, mut payload), s) in local(&|_| 0).into_iter().zip(sensors) {
                payload.points = far_field(s.2, s.1, cfg.hybrid_radius).len();
                outs.push(out);
                payloads.push(payload);
            }
            let nms_detector = NmsDetector {
                inner: detector,
                threshold: cfg.nms_iou_threshold,
            };
            Ok(SchemeOutput {
                detections: hybrid_fuse(&outs, cfg, &nms_detector, frame_id, ground_truth)?,
                payloads,
            })
        }
    }
}

struct NmsDetector<'a> {
    inner: &'a dyn Detector,
    threshold: f64,
}

impl Detector for NmsDetector<'_> {
    fn detect(&self, cloud: &PointCloud, ctx: &DetectionContext<'_>) -> Vec<Detection> {
        nms(&self.inner.detect(cloud, ctx), self.threshold)
    }
}
