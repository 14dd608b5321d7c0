//! Per-sensor preprocessing: alignment to the global frame and cropping to
//! the detection area below the height cutoff.

use thiserror::Error;

use crate::geometry::{Point3, Rect};
use crate::scene::SensorConfig;

pub type SensorId = u16;

/// Points just below the ground plane are kept so depth noise does not eat
/// ground returns.
pub const GROUND_EPSILON: f64 = -0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CloudFrame {
    Sensor(SensorId),
    Global,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("expected a cloud in frame {expected:?}, got {got:?}")]
    FrameMismatch { expected: CloudFrame, got: CloudFrame },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame: CloudFrame,
    pub source_sensor: Option<SensorId>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame: CloudFrame, source_sensor: Option<SensorId>) -> Self {
        debug_assert!(points.iter().all(|p| p.coords.iter().all(|v| v.is_finite())));
        Self {
            points,
            frame,
            source_sensor,
        }
    }

    pub fn empty_global() -> Self {
        Self::new(Vec::new(), CloudFrame::Global, None)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn expect_frame(&self, expected: CloudFrame) -> Result<(), PreprocessError> {
        if self.frame == expected {
            Ok(())
        } else {
            Err(PreprocessError::FrameMismatch {
                expected,
                got: self.frame,
            })
        }
    }
}

pub fn to_global(pc: &PointCloud, sensor: &SensorConfig) -> Result<PointCloud, PreprocessError> {
    pc.expect_frame(CloudFrame::Sensor(sensor.id))?;
    let points = pc.points.iter().map(|p| sensor.extrinsic.apply(p)).collect();
    Ok(PointCloud::new(points, CloudFrame::Global, Some(sensor.id)))
}

/// Inverse of [`to_global`].
pub fn to_sensor(pc: &PointCloud, sensor: &SensorConfig) -> Result<PointCloud, PreprocessError> {
    pc.expect_frame(CloudFrame::Global)?;
    let inv = sensor.extrinsic.inverse();
    let points = pc.points.iter().map(|p| inv.apply(p)).collect();
    Ok(PointCloud::new(points, CloudFrame::Sensor(sensor.id), Some(sensor.id)))
}

#[inline]
pub fn in_crop(p: &Point3, area: &Rect, height_cutoff: f64) -> bool {
    area.contains(p.x, p.y) && p.z <= height_cutoff && p.z >= GROUND_EPSILON
}

/// Keeps points inside `area` (inclusive) with `GROUND_EPSILON <= z <= height_cutoff`.
pub fn crop(pc: &PointCloud, area: &Rect, height_cutoff: f64) -> Result<PointCloud, PreprocessError> {
    pc.expect_frame(CloudFrame::Global)?;
    let points = pc
        .points
        .iter()
        .filter(|p| in_crop(p, area, height_cutoff))
        .copied()
        .collect();
    Ok(PointCloud::new(points, CloudFrame::Global, pc.source_sensor))
}

/// Rounds coordinates to `f32` precision, the storage precision of the
/// dataset and wire formats, so in-memory and reloaded clouds agree exactly.
pub fn quantize_f32(pc: &mut PointCloud) {
    for p in pc.points.iter_mut() {
        p.x = p.x as f32 as f64;
        p.y = p.y as f32 as f64;
        p.z = p.z as f32 as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, RigidTransform};
    use nalgebra::{Matrix3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sensor_with(extrinsic: RigidTransform) -> SensorConfig {
        SensorConfig {
            id: 3,
            intrinsics: CameraIntrinsics::from_fov(400, 300, 90.0).unwrap(),
            extrinsic,
            mount_height: extrinsic.translation().z.max(0.1),
            position: [extrinsic.translation().x, extrinsic.translation().y],
            yaw_deg: 0.0,
            pitch_deg: 0.0,
        }
    }

    #[test]
    fn identity_extrinsic_keeps_points() {
        let s = sensor_with(RigidTransform::identity());
        let pc = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)], CloudFrame::Sensor(3), Some(3));
        let g = to_global(&pc, &s).unwrap();
        assert_eq!(g.points, pc.points);
        assert_eq!(g.frame, CloudFrame::Global);
    }

    #[test]
    fn camera_looking_along_negative_x() {
        // camera axes (right, down, forward) expressed in the global frame
        let right = Vector3::new(0.0, 1.0, 0.0);
        let down = Vector3::new(0.0, 0.0, -1.0);
        let forward = Vector3::new(-1.0, 0.0, 0.0);
        let r = Matrix3::from_columns(&[right, down, forward]);
        let ext = RigidTransform::new(r, Vector3::new(10.0, 0.0, 5.2)).unwrap();
        let s = sensor_with(ext);
        let pc = PointCloud::new(
            vec![Point3::new(0.0, 0.0, 4.0), Point3::new(1.0, 2.0, 3.0)],
            CloudFrame::Sensor(3),
            Some(3),
        );
        let g = to_global(&pc, &s).unwrap();
        assert!((g.points[0] - Point3::new(6.0, 0.0, 5.2)).norm() < 1e-12);
        let direct = r * Vector3::new(1.0, 2.0, 3.0) + Vector3::new(10.0, 0.0, 5.2);
        assert!((g.points[1].coords - direct).norm() < 1e-12);
        let back = to_sensor(&g, &s).unwrap();
        for (a, b) in back.points.iter().zip(&pc.points) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn wrong_frame_rejected() {
        let s = sensor_with(RigidTransform::identity());
        let pc = PointCloud::new(vec![], CloudFrame::Sensor(4), Some(4));
        assert!(matches!(to_global(&pc, &s), Err(PreprocessError::FrameMismatch { .. })));
        let area = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(crop(&pc, &area, 4.0).is_err());
    }

    #[test]
    fn height_cutoff_is_inclusive() {
        let area = Rect::new(-10.0, -10.0, 10.0, 10.0).unwrap();
        let pc = PointCloud::new(
            vec![Point3::new(0.0, 0.0, 4.0), Point3::new(0.0, 0.0, 4.01), Point3::new(0.0, 0.0, -0.2)],
            CloudFrame::Global,
            None,
        );
        let c = crop(&pc, &area, 4.0).unwrap();
        assert_eq!(c.points, vec![Point3::new(0.0, 0.0, 4.0)]);
        assert!(crop(&PointCloud::empty_global(), &area, 4.0).unwrap().is_empty());
    }

    #[test]
    fn crop_fraction_tracks_area_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let area = Rect::new(-40.0, -20.0, 40.0, 20.0).unwrap();
        let n = 200_000;
        let pts = (0..n)
            .map(|_| Point3::new(rng.random_range(-80.0..80.0), rng.random_range(-20.0..20.0), 1.0))
            .collect();
        let c = crop(&PointCloud::new(pts, CloudFrame::Global, None), &area, 4.0).unwrap();
        let frac = c.len() as f64 / n as f64;
        // binomial std at p = 0.5 is ~0.0011
        assert!((frac - 0.5).abs() < 0.006, "{frac}");
        let again = crop(&c, &area, 4.0).unwrap();
        assert_eq!(again, c);
    }
}
