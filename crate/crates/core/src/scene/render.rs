//! Depth rendering by ray casting against box primitives and the ground
//! plane, and assembly of per-frame sensor point clouds.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::traffic::{GroundTruthObject, TrafficSimulator};
use super::{ScenarioConfig, SceneError, SensorConfig};
use crate::geometry::{
    depth_to_points, ray_box_intersect, CameraIntrinsics, DepthImage, GeometryError, OrientedBox3D,
};
use crate::preprocess::{crop, quantize_f32, to_global, CloudFrame, PointCloud};
use crate::seeding::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Standard deviation of the additive Gaussian depth noise, meters.
    pub noise_sigma: f64,
    /// Depth written to pixels without a return.
    pub max_range: f64,
}

impl RenderOptions {
    pub fn from_scenario(cfg: &ScenarioConfig) -> Self {
        Self {
            noise_sigma: cfg.noise_sigma,
            max_range: cfg.max_range,
        }
    }

    pub fn noiseless(max_range: f64) -> Self {
        Self {
            noise_sigma: 0.0,
            max_range,
        }
    }
}

/// Inclusive pixel rectangle that can contain a box's image.
fn pixel_bounds(sensor: &SensorConfig, b: &OrientedBox3D) -> Option<[usize; 4]> {
    let intr = &sensor.intrinsics;
    let to_cam = sensor.extrinsic.inverse();
    let cam: Vec<_> = b.corners().iter().map(|c| to_cam.apply(c)).collect();
    if cam.iter().all(|p| p.z <= 0.0) {
        return None;
    }
    let full = [0, intr.width - 1, 0, intr.height - 1];
    if cam.iter().any(|p| p.z <= 1e-3) {
        return Some(full);
    }
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &cam {
        let (u, v, _) = intr.project(p)?;
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    let (w, h) = (intr.width as f64, intr.height as f64);
    if u1 < -1.0 || v1 < -1.0 || u0 > w || v0 > h {
        return None;
    }
    let clamp = |x: f64, hi: usize| x.max(0.0).min(hi as f64) as usize;
    Some([
        clamp(u0.floor() - 1.0, intr.width - 1),
        clamp(u1.ceil() + 1.0, intr.width - 1),
        clamp(v0.floor() - 1.0, intr.height - 1),
        clamp(v1.ceil() + 1.0, intr.height - 1),
    ])
}

/// Noise-free planar depth of the nearest surface along pixel `(u, v)`, or
/// `None` when nothing is hit.
fn trace_pixel(
    sensor: &SensorConfig,
    origin: &crate::geometry::Point3,
    objects: &[(OrientedBox3D, [usize; 4])],
    u: usize,
    v: usize,
) -> Option<f64> {
    let ray_cam = sensor.intrinsics.pixel_ray(u, v);
    let dir: Vector3<f64> = sensor.extrinsic.apply_vector(&ray_cam);
    let mut nearest = if dir.z < 0.0 { -origin.z / dir.z } else { f64::INFINITY };
    for (b, [u0, u1, v0, v1]) in objects {
        if u < *u0 || u > *u1 || v < *v0 || v > *v1 {
            continue;
        }
        if let Some(t) = ray_box_intersect(origin, &dir, b) {
            nearest = nearest.min(t);
        }
    }
    // ray length -> planar depth along the optical axis
    let depth = nearest * ray_cam.z;
    depth.is_finite().then_some(depth)
}

/// Renders the sensor's depth image of a scene made of `objects` on the
/// ground plane `z = 0`.
///
/// Pixels whose nearest hit is at or beyond `max_range` (or that hit nothing)
/// hold `max_range`. Returns carry i.i.d. Gaussian noise drawn in row-major
/// order from a generator seeded with `seed`.
pub fn render_depth(sensor: &SensorConfig, objects: &[OrientedBox3D], opts: &RenderOptions, seed: u64) -> DepthImage {
    let intr: &CameraIntrinsics = &sensor.intrinsics;
    let origin = sensor.origin();
    let visible: Vec<(OrientedBox3D, [usize; 4])> = objects
        .iter()
        .filter_map(|b| pixel_bounds(sensor, b).map(|r| (*b, r)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut image = DepthImage::filled(intr.width, intr.height, opts.max_range, opts.max_range);
    for v in 0..intr.height {
        for u in 0..intr.width {
            let Some(depth) = trace_pixel(sensor, &origin, &visible, u, v) else { continue };
            if depth >= opts.max_range {
                continue;
            }
            let noise = if opts.noise_sigma > 0.0 {
                opts.noise_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            image.set(u, v, (depth + noise).max(0.0));
        }
    }
    image
}

/// Stride-downsamples a depth image and its intrinsics together.
pub fn downsample_depth(
    image: &DepthImage,
    intr: &CameraIntrinsics,
    factor: usize,
) -> Result<(DepthImage, CameraIntrinsics), GeometryError> {
    Ok((image.downsample(factor)?, intr.downsampled(factor)?))
}

/// One simulation instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u64,
    /// Preprocessed clouds (global frame, cropped), one per sensor in
    /// scenario order.
    pub clouds: Vec<PointCloud>,
    pub ground_truth: Vec<GroundTruthObject>,
    /// Post-noise depth images, only populated when requested.
    pub depth_images: Vec<DepthImage>,
}

impl Frame {
    pub fn cloud(&self, sensor: crate::preprocess::SensorId) -> Option<&PointCloud> {
        self.clouds.iter().find(|c| c.source_sensor == Some(sensor))
    }
}

/// Seed of the depth noise for one sensor in one frame.
pub fn noise_seed(seed: u64, frame_id: u64, sensor: crate::preprocess::SensorId) -> u64 {
    rng_for(seed, Stream::DepthNoise, frame_id, sensor as u64).random()
}

/// Renders one sensor and runs the sensor-side pipeline: back-projection,
/// alignment to the global frame, `f32` quantization and cropping.
pub fn sensor_view(
    cfg: &ScenarioConfig,
    sensor: &SensorConfig,
    boxes: &[OrientedBox3D],
    seed: u64,
) -> Result<(DepthImage, PointCloud), SceneError> {
    let image = render_depth(sensor, boxes, &RenderOptions::from_scenario(cfg), seed);
    let points = depth_to_points(&image, &sensor.intrinsics)?;
    let local = PointCloud::new(points, CloudFrame::Sensor(sensor.id), Some(sensor.id));
    let mut global = to_global(&local, sensor).expect("frame tag set above");
    quantize_f32(&mut global);
    let cropped = crop(&global, &cfg.detection_area, cfg.height_cutoff).expect("global cloud");
    Ok((image, cropped))
}

/// Produces frames in order. Sensors render at the scenario's downsampled
/// resolution directly, which selects exactly the rays of the stride-sampled
/// full-resolution image.
pub struct FrameGenerator<'a> {
    cfg: &'a ScenarioConfig,
    seed: u64,
    traffic: TrafficSimulator<'a>,
    sensors: Vec<SensorConfig>,
    keep_depth: bool,
}

impl<'a> FrameGenerator<'a> {
    pub fn new(cfg: &'a ScenarioConfig, seed: u64) -> Result<Self, SceneError> {
        let sensors = cfg
            .sensors
            .iter()
            .map(|s| s.downsampled(cfg.downsample_factor))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            cfg,
            seed,
            traffic: TrafficSimulator::new(cfg, seed),
            sensors,
            keep_depth: false,
        })
    }

    /// Retain depth images in the produced frames.
    pub fn keep_depth(mut self, keep: bool) -> Self {
        self.keep_depth = keep;
        self
    }

    /// Sensors as rendered (downsampled intrinsics).
    pub fn render_sensors(&self) -> &[SensorConfig] {
        &self.sensors
    }

    /// Advances the traffic and returns the ground truth of the next frame
    /// without rendering it.
    pub fn next_ground_truth(&mut self) -> (u64, Vec<GroundTruthObject>) {
        let id = self.traffic.next_frame_id();
        (id, self.traffic.step())
    }

    pub fn render(&self, frame_id: u64, ground_truth: Vec<GroundTruthObject>) -> Result<Frame, SceneError> {
        let boxes: Vec<OrientedBox3D> = ground_truth.iter().map(|o| o.bbox).collect();
        let views = self
            .sensors
            .par_iter()
            .map(|s| sensor_view(self.cfg, s, &boxes, noise_seed(self.seed, frame_id, s.id)))
            .collect::<Result<Vec<_>, _>>()?;
        let (depth_images, clouds): (Vec<_>, Vec<_>) = views.into_iter().unzip();
        Ok(Frame {
            frame_id,
            clouds,
            ground_truth,
            depth_images: if self.keep_depth { depth_images } else { Vec::new() },
        })
    }
}

impl Iterator for FrameGenerator<'_> {
    type Item = Result<Frame, SceneError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (id, gt) = self.next_ground_truth();
        Some(self.render(id, gt))
    }
}

/// Generates the first `count` frames of a scenario, rendering frames in
/// parallel. Output is independent of the worker count.
pub fn generate_frames(cfg: &ScenarioConfig, seed: u64, count: usize) -> Result<Vec<Frame>, SceneError> {
    let mut generator = FrameGenerator::new(cfg, seed)?;
    let truths: Vec<_> = (0..count).map(|_| generator.next_ground_truth()).collect();
    truths
        .into_par_iter()
        .map(|(id, gt)| generator.render(id, gt))
        .collect()
}
