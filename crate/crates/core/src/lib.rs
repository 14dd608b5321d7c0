//! Cooperative 3D object detection with static infrastructure depth sensors.
//!
//! A scene simulator renders noisy depth images from several roadside
//! sensors, the sensor-side pipeline turns them into cropped global point
//! clouds, and a fusion center combines them with early, late or hybrid
//! fusion. Detection quality and communication cost are measured with the
//! tools in [`metrics`] and [`comms`]; [`experiment`] ties it all together.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comms;
pub mod detector;
pub mod experiment;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod preprocess;
pub mod scene;
pub mod seeding;

pub use detector::{Detection, Detector, DetectorParams, OracleDetector, Stage};
pub use fusion::{FusionConfig, Scheme};
pub use geometry::{ObjectClass, OrientedBox3D, Point3, Rect};
pub use preprocess::{PointCloud, SensorId};
pub use scene::{build_scenario, Frame, ScenarioConfig, SensorConfig};
