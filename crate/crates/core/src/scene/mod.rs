//! Synthetic driving scenarios observed by infrastructure depth cameras.
//!
//! A [`ScenarioConfig`] describes the detection area, sensor poses, lane
//! paths and traffic statistics. [`traffic`] spawns ground-truth objects,
//! [`render`] produces noisy depth images and point clouds, and [`dataset`]
//! reads and writes the on-disk frame format.

pub mod dataset;
pub mod render;
pub mod traffic;

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, GeometryError, ObjectClass, Point3, Rect, RigidTransform};
use crate::preprocess::SensorId;

pub use render::{generate_frames, render_depth, downsample_depth, Frame, FrameGenerator, RenderOptions};
pub use traffic::{spawn_objects, GroundTruthObject, TrafficSimulator};

const T_JUNCTION_TOML: &str = include_str!("../../configs/t_junction.toml");
const ROUNDABOUT_TOML: &str = include_str!("../../configs/roundabout.toml");

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("failed to parse scenario config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialize scenario config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("cannot read scenario config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    TJunction,
    Roundabout,
    Custom,
}

impl std::str::FromStr for ScenarioName {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "t_junction" => Ok(ScenarioName::TJunction),
            "roundabout" => Ok(ScenarioName::Roundabout),
            "custom" => Ok(ScenarioName::Custom),
            other => Err(SceneError::UnknownScenario(other.to_string())),
        }
    }
}

/// One infrastructure depth camera.
///
/// `extrinsic` maps camera-frame points (x right, y down, z forward) to the
/// global frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SensorRecord", into = "SensorRecord")]
pub struct SensorConfig {
    pub id: SensorId,
    pub intrinsics: CameraIntrinsics,
    pub extrinsic: RigidTransform,
    pub mount_height: f64,
    pub position: [f64; 2],
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

impl SensorConfig {
    /// Builds a camera on a post at `position`, optical axis at heading
    /// `yaw_deg` and tilted down by `pitch_deg`.
    pub fn from_pose(
        id: SensorId,
        position: [f64; 2],
        mount_height: f64,
        yaw_deg: f64,
        pitch_deg: f64,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self, SceneError> {
        if !(mount_height > 0.0 && mount_height.is_finite()) {
            return Err(SceneError::Invalid(format!("sensor {id}: mount height {mount_height} must be > 0")));
        }
        let (sy, cy) = yaw_deg.to_radians().sin_cos();
        let (sp, cp) = pitch_deg.to_radians().sin_cos();
        let forward = Vector3::new(cp * cy, cp * sy, -sp);
        let right = Vector3::new(sy, -cy, 0.0);
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        let extrinsic = RigidTransform::new(rotation, Vector3::new(position[0], position[1], mount_height))?;
        Ok(Self {
            id,
            intrinsics,
            extrinsic,
            mount_height,
            position,
            yaw_deg,
            pitch_deg,
        })
    }

    pub fn origin(&self) -> Point3 {
        Point3::from(*self.extrinsic.translation())
    }

    /// Same pose with stride-downsampled intrinsics.
    pub fn downsampled(&self, factor: usize) -> Result<Self, SceneError> {
        Ok(Self {
            intrinsics: self.intrinsics.downsampled(factor)?,
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.intrinsics.validate()?;
        if !(self.mount_height > 0.0) || (self.extrinsic.translation().z - self.mount_height).abs() > 1e-12 {
            return Err(SceneError::Invalid(format!(
                "sensor {}: extrinsic height must equal mount height {}",
                self.id, self.mount_height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SensorRecord {
    id: SensorId,
    position: [f64; 2],
    mount_height: f64,
    yaw_deg: f64,
    pitch_deg: f64,
    #[serde(default = "default_width")]
    width: usize,
    #[serde(default = "default_height")]
    height: usize,
    #[serde(default = "default_hfov")]
    hfov_deg: f64,
}

fn default_width() -> usize {
    400
}
fn default_height() -> usize {
    300
}
fn default_hfov() -> f64 {
    90.0
}

impl TryFrom<SensorRecord> for SensorConfig {
    type Error = SceneError;

    fn try_from(r: SensorRecord) -> Result<Self, Self::Error> {
        let intr = CameraIntrinsics::from_fov(r.width, r.height, r.hfov_deg)?;
        SensorConfig::from_pose(r.id, r.position, r.mount_height, r.yaw_deg, r.pitch_deg, intr)
    }
}

impl From<SensorConfig> for SensorRecord {
    fn from(s: SensorConfig) -> Self {
        Self {
            id: s.id,
            position: s.position,
            mount_height: s.mount_height,
            yaw_deg: s.yaw_deg,
            pitch_deg: s.pitch_deg,
            width: s.intrinsics.width,
            height: s.intrinsics.height,
            hfov_deg: s.intrinsics.hfov_deg,
        }
    }
}

/// A value per object class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassTable<T> {
    pub car: T,
    pub cyclist: T,
    pub pedestrian: T,
}

impl<T: Copy> ClassTable<T> {
    pub fn get(&self, class: ObjectClass) -> T {
        match class {
            ObjectClass::Car => self.car,
            ObjectClass::Cyclist => self.cyclist,
            ObjectClass::Pedestrian => self.pedestrian,
        }
    }
}

/// Uniform size ranges `[min, max]` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeRange {
    pub length: [f64; 2],
    pub width: [f64; 2],
    pub height: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Road,
    Sidewalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanePath {
    pub kind: PathKind,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateralJitter {
    pub road: f64,
    pub sidewalk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    pub detection_area: Rect,
    pub sensors: Vec<SensorConfig>,
    pub max_objects: usize,
    pub spawn_probabilities: ClassTable<f64>,
    pub object_lifespan_frames: usize,
    pub noise_sigma: f64,
    pub height_cutoff: f64,
    /// Depth assigned to pixels without a return.
    pub max_range: f64,
    /// Stride between kept pixels when building point clouds.
    pub downsample_factor: usize,
    /// Simulated seconds between frames.
    pub frame_interval: f64,
    /// Default near-field radius for hybrid fusion.
    pub hybrid_radius: f64,
    pub voxel_size: [f64; 3],
    pub anchor_stride: f64,
    pub object_sizes: ClassTable<SizeRange>,
    pub speeds: ClassTable<f64>,
    pub lateral_jitter: LateralJitter,
    #[serde(default)]
    pub paths: Vec<LanePath>,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, SceneError> {
        let cfg: ScenarioConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, SceneError> {
        Ok(toml::to_string(self)?)
    }

    pub fn sensor(&self, id: SensorId) -> Option<&SensorConfig> {
        self.sensors.iter().find(|s| s.id == id)
    }

    pub fn sensor_ids(&self) -> Vec<SensorId> {
        self.sensors.iter().map(|s| s.id).collect()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(m));
        self.detection_area.validate()?;
        if self.sensors.is_empty() {
            return bad("scenario has no sensors".into());
        }
        let mut ids = self.sensor_ids();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("sensor ids must be unique".into());
        }
        for s in &self.sensors {
            s.validate()?;
            if s.intrinsics.width % self.downsample_factor.max(1) != 0
                || s.intrinsics.height % self.downsample_factor.max(1) != 0
            {
                return bad(format!("downsample factor {} does not divide sensor {} resolution", self.downsample_factor, s.id));
            }
        }
        let p = self.spawn_probabilities;
        let probs = [p.car, p.cyclist, p.pedestrian];
        if probs.iter().any(|v| !(*v >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad(format!("spawn probabilities {probs:?} must be nonnegative and sum to 1"));
        }
        if self.object_lifespan_frames == 0 {
            return bad("object lifespan must be at least one frame".into());
        }
        if !(self.noise_sigma >= 0.0) || !(self.height_cutoff > 0.0) || !(self.max_range > 0.0) {
            return bad("noise sigma, height cutoff and max range must be nonnegative/positive".into());
        }
        if self.downsample_factor == 0 || !(self.frame_interval > 0.0) || !(self.hybrid_radius >= 0.0) {
            return bad("downsample factor, frame interval and hybrid radius out of range".into());
        }
        if self.voxel_size.iter().any(|v| !(*v > 0.0)) || !(self.anchor_stride > 0.0) {
            return bad("voxel size and anchor stride must be > 0".into());
        }
        for class in ObjectClass::ALL {
            let r = self.object_sizes.get(class);
            for [lo, hi] in [r.length, r.width, r.height] {
                if !(lo > 0.0 && hi >= lo) {
                    return bad(format!("size range for {class} must satisfy 0 < min <= max"));
                }
            }
            if !(self.speeds.get(class) >= 0.0) {
                return bad(format!("speed for {class} must be >= 0"));
            }
        }
        for (i, path) in self.paths.iter().enumerate() {
            if path.points.len() < 2 {
                return bad(format!("path {i} needs at least two points"));
            }
        }
        if self.max_objects > 0 {
            let has_road = self.paths.iter().any(|p| p.kind == PathKind::Road);
            let has_walk = self.paths.iter().any(|p| p.kind == PathKind::Sidewalk);
            if (p.car + p.cyclist > 0.0 && !has_road) || (p.pedestrian > 0.0 && !has_walk) {
                return bad("every class with nonzero spawn probability needs a matching path".into());
            }
        }
        Ok(())
    }

    /// A custom scenario with the given area and sensors and the default
    /// traffic statistics, but no lane paths and no objects.
    pub fn custom(detection_area: Rect, sensors: Vec<SensorConfig>) -> Self {
        let mut cfg = Self::from_toml_str(T_JUNCTION_TOML).expect("shipped config is valid");
        cfg.name = ScenarioName::Custom;
        cfg.detection_area = detection_area;
        cfg.sensors = sensors;
        cfg.paths.clear();
        cfg.max_objects = 0;
        cfg
    }
}

/// Loads one of the shipped scenarios. `custom` yields an empty custom
/// scenario, which fails validation because it has no sensors.
pub fn build_scenario(name: &str) -> Result<ScenarioConfig, SceneError> {
    match name.parse::<ScenarioName>()? {
        ScenarioName::TJunction => ScenarioConfig::from_toml_str(T_JUNCTION_TOML),
        ScenarioName::Roundabout => ScenarioConfig::from_toml_str(ROUNDABOUT_TOML),
        ScenarioName::Custom => {
            let base = ScenarioConfig::from_toml_str(T_JUNCTION_TOML)?;
            let cfg = ScenarioConfig::custom(base.detection_area, Vec::new());
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_scenarios() {
        let t = build_scenario("t_junction").unwrap();
        assert_eq!(t.sensors.len(), 6);
        assert_eq!((t.detection_area.width(), t.detection_area.height()), (80.0, 40.0));
        assert!(t.sensors.iter().all(|s| s.mount_height == 5.2));
        let r = build_scenario("roundabout").unwrap();
        assert_eq!(r.sensors.len(), 8);
        assert_eq!((r.detection_area.width(), r.detection_area.height()), (96.0, 96.0));
        assert!(r.sensors.iter().all(|s| s.mount_height == 8.0));
        for s in t.sensors.iter().chain(&r.sensors) {
            assert_eq!((s.intrinsics.width, s.intrinsics.height), (400, 300));
            assert_eq!(s.intrinsics.hfov_deg, 90.0);
            assert_eq!(s.extrinsic.translation().z, s.mount_height);
        }
        assert_eq!(t.max_objects, 30);
        assert_eq!(t.object_lifespan_frames, 4);
        assert_eq!(t.noise_sigma, 0.015);
        assert_eq!((t.spawn_probabilities.car, t.spawn_probabilities.cyclist), (0.6, 0.2));
    }

    #[test]
    fn custom_without_sensors_rejected() {
        assert!(matches!(build_scenario("custom"), Err(SceneError::Invalid(_))));
        assert!(matches!(build_scenario("highway"), Err(SceneError::UnknownScenario(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let t = build_scenario("t_junction").unwrap();
        let text = t.to_toml_string().unwrap();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn validation_catches_bad_probabilities_and_duplicate_ids() {
        let mut t = build_scenario("t_junction").unwrap();
        t.spawn_probabilities.car = 0.7;
        assert!(t.validate().is_err());
        let mut t = build_scenario("t_junction").unwrap();
        t.sensors[1].id = t.sensors[0].id;
        assert!(t.validate().is_err());
    }

    #[test]
    fn camera_axes_follow_pose() {
        let intr = CameraIntrinsics::from_fov(400, 300, 90.0).unwrap();
        let s = SensorConfig::from_pose(0, [1.0, 2.0], 5.0, 90.0, 0.0, intr).unwrap();
        // optical axis points along +y, image down is global -z
        let fwd = s.extrinsic.apply_vector(&Vector3::z());
        let down = s.extrinsic.apply_vector(&Vector3::y());
        let right = s.extrinsic.apply_vector(&Vector3::x());
        assert!((fwd - Vector3::y()).norm() < 1e-12);
        assert!((down + Vector3::z()).norm() < 1e-12);
        assert!((right - Vector3::x()).norm() < 1e-12);
        assert!(SensorConfig::from_pose(0, [0.0, 0.0], 0.0, 0.0, 0.0, intr).is_err());
    }
}
