//! Ground-truth traffic: objects spawned on lane paths, moving at constant
//! per-class speed, each alive for a fixed number of frames.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::{LanePath, PathKind, ScenarioConfig};
use crate::geometry::{bev_intersection_area, ObjectClass, OrientedBox3D, Point3};
use crate::seeding::{rng_for, Stream};

/// Placement attempts per free slot before the slot is left empty.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub object_id: u64,
    pub bbox: OrientedBox3D,
}

impl GroundTruthObject {
    pub fn class(&self) -> ObjectClass {
        self.bbox.class
    }
}

struct PreparedPath {
    kind: PathKind,
    points: Vec<[f64; 2]>,
    /// Cumulative arc length at each vertex.
    arc: Vec<f64>,
}

impl PreparedPath {
    fn new(p: &LanePath) -> Self {
        let mut arc = vec![0.0];
        for w in p.points.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            arc.push(arc.last().unwrap() + d);
        }
        Self {
            kind: p.kind,
            points: p.points.clone(),
            arc,
        }
    }

    fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    /// Position and heading at arc length `s`, clamped to the path.
    fn pose_at(&self, s: f64, reversed: bool) -> ([f64; 2], f64) {
        let len = self.length();
        let s = s.clamp(0.0, len);
        let s = if reversed { len - s } else { s };
        let mut seg = self.arc.partition_point(|&a| a <= s).saturating_sub(1);
        seg = seg.min(self.points.len() - 2);
        // skip zero-length segments
        while seg + 1 < self.points.len() - 1 && self.arc[seg + 1] - self.arc[seg] <= 0.0 {
            seg += 1;
        }
        let (a, b) = (self.points[seg], self.points[seg + 1]);
        let seg_len = (self.arc[seg + 1] - self.arc[seg]).max(f64::MIN_POSITIVE);
        let t = ((s - self.arc[seg]) / seg_len).clamp(0.0, 1.0);
        let pos = [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t];
        let mut heading = (b[1] - a[1]).atan2(b[0] - a[0]);
        if reversed {
            heading += std::f64::consts::PI;
        }
        (pos, heading)
    }
}

struct Track {
    object_id: u64,
    spawn_frame: i64,
    /// Pose at each age `0..lifespan`.
    boxes: Vec<OrientedBox3D>,
}

impl Track {
    fn at(&self, frame: i64) -> Option<&OrientedBox3D> {
        let age = frame - self.spawn_frame;
        if age < 0 {
            return None;
        }
        self.boxes.get(age as usize)
    }
}

/// Steps the scenario's traffic one frame at a time.
///
/// Before each frame, expired objects are removed and every free slot (up to
/// `max_objects`) draws a class and tries to place a new object whose whole
/// remaining trajectory overlaps no other object's footprint. Objects present
/// at the first frame start at a random age so that expiry is staggered.
pub struct TrafficSimulator<'a> {
    cfg: &'a ScenarioConfig,
    seed: u64,
    next_frame: u64,
    next_object_id: u64,
    live: Vec<Track>,
    paths: Vec<PreparedPath>,
    class_dist: Option<WeightedIndex<f64>>,
}

impl<'a> TrafficSimulator<'a> {
    pub fn new(cfg: &'a ScenarioConfig, seed: u64) -> Self {
        let p = cfg.spawn_probabilities;
        Self {
            cfg,
            seed,
            next_frame: 0,
            next_object_id: 0,
            live: Vec::new(),
            paths: cfg.paths.iter().map(PreparedPath::new).collect(),
            class_dist: WeightedIndex::new([p.car, p.cyclist, p.pedestrian]).ok(),
        }
    }

    pub fn next_frame_id(&self) -> u64 {
        self.next_frame
    }

    /// Ground truth for the next frame.
    pub fn step(&mut self) -> Vec<GroundTruthObject> {
        let frame = self.next_frame as i64;
        let lifespan = self.cfg.object_lifespan_frames as i64;
        self.live.retain(|t| t.spawn_frame + lifespan > frame);

        let mut rng = rng_for(self.seed, Stream::Traffic, self.next_frame, 0);
        let free = self.cfg.max_objects.saturating_sub(self.live.len());
        if let Some(dist) = &self.class_dist {
            for _ in 0..free {
                let class = ObjectClass::ALL[dist.sample(&mut rng)];
                for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                    if let Some(track) = self.propose(class, frame, &mut rng) {
                        if !self.collides(&track, frame) {
                            self.next_object_id += 1;
                            self.live.push(track);
                            break;
                        }
                    }
                }
            }
        }
        self.next_frame += 1;

        self.live
            .iter()
            .filter_map(|t| {
                t.at(frame).map(|b| GroundTruthObject {
                    object_id: t.object_id,
                    bbox: *b,
                })
            })
            .collect()
    }

    fn propose<R: Rng>(&self, class: ObjectClass, frame: i64, rng: &mut R) -> Option<Track> {
        let kind = match class {
            ObjectClass::Car | ObjectClass::Cyclist => PathKind::Road,
            ObjectClass::Pedestrian => PathKind::Sidewalk,
        };
        let candidates: Vec<&PreparedPath> = self.paths.iter().filter(|p| p.kind == kind && p.length() > 0.0).collect();
        if candidates.is_empty() {
            return None;
        }
        let path = candidates[rng.random_range(0..candidates.len())];
        let reversed = kind == PathKind::Sidewalk && rng.random_bool(0.5);
        let sizes = self.cfg.object_sizes.get(class);
        let draw = |r: &mut R, [lo, hi]: [f64; 2]| if hi > lo { r.random_range(lo..=hi) } else { lo };
        let (length, width, height) = (draw(rng, sizes.length), draw(rng, sizes.width), draw(rng, sizes.height));
        let jitter = match kind {
            PathKind::Road => self.cfg.lateral_jitter.road,
            PathKind::Sidewalk => self.cfg.lateral_jitter.sidewalk,
        };
        let lateral = if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 };
        let s_now = rng.random_range(0.0..path.length());
        let lifespan = self.cfg.object_lifespan_frames;
        let age_now = if frame == 0 { rng.random_range(0..lifespan) } else { 0 };
        let step = self.cfg.speeds.get(class) * self.cfg.frame_interval;

        let boxes = (0..lifespan)
            .map(|age| {
                let s = s_now + step * (age as f64 - age_now as f64);
                let (pos, heading) = path.pose_at(s, reversed);
                let (sn, cs) = heading.sin_cos();
                let center = Point3::new(pos[0] - sn * lateral, pos[1] + cs * lateral, height / 2.0);
                OrientedBox3D::new(center, length, width, height, heading, class)
            })
            .collect::<Result<Vec<_>, _>>()
            .ok()?;
        Some(Track {
            object_id: self.next_object_id,
            spawn_frame: frame - age_now as i64,
            boxes,
        })
    }

    fn collides(&self, track: &Track, from_frame: i64) -> bool {
        let end = track.spawn_frame + track.boxes.len() as i64;
        (from_frame..end).any(|f| {
            let Some(mine) = track.at(f) else { return false };
            self.live
                .iter()
                .filter_map(|other| other.at(f))
                .any(|b| bev_intersection_area(mine, b) > 0.0)
        })
    }
}

/// Ground truth of frame `frame_id`, replaying the simulation from frame 0.
pub fn spawn_objects(cfg: &ScenarioConfig, seed: u64, frame_id: u64) -> Vec<GroundTruthObject> {
    let mut sim = TrafficSimulator::new(cfg, seed);
    loop {
        let objects = sim.step();
        if sim.next_frame_id() > frame_id {
            return objects;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::build_scenario;
    use std::collections::HashMap;

    #[test]
    fn deterministic_per_seed() {
        let cfg = build_scenario("t_junction").unwrap();
        let a = spawn_objects(&cfg, 42, 0);
        let b = spawn_objects(&cfg, 42, 0);
        assert_eq!(a, b);
        assert!(!a.is_empty() && a.len() <= cfg.max_objects);
        assert_ne!(a, spawn_objects(&cfg, 43, 0));
        assert_eq!(spawn_objects(&cfg, 42, 5), spawn_objects(&cfg, 42, 5));
    }

    #[test]
    fn footprints_never_overlap() {
        for name in ["t_junction", "roundabout"] {
            let cfg = build_scenario(name).unwrap();
            let mut sim = TrafficSimulator::new(&cfg, 3);
            for _ in 0..40 {
                let objs = sim.step();
                assert!(objs.len() <= cfg.max_objects);
                for i in 0..objs.len() {
                    for j in i + 1..objs.len() {
                        assert_eq!(bev_intersection_area(&objs[i].bbox, &objs[j].bbox), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn objects_live_exactly_their_lifespan() {
        let cfg = build_scenario("t_junction").unwrap();
        let mut sim = TrafficSimulator::new(&cfg, 9);
        let mut seen: HashMap<u64, Vec<u64>> = HashMap::new();
        let frames = 30;
        for f in 0..frames {
            for o in sim.step() {
                seen.entry(o.object_id).or_default().push(f);
            }
        }
        let lifespan = cfg.object_lifespan_frames as u64;
        for frames_seen in seen.values() {
            let first = frames_seen[0];
            let last = *frames_seen.last().unwrap();
            assert_eq!(last - first + 1, frames_seen.len() as u64, "contiguous");
            // objects at the edges of the window may be truncated
            if first > 0 && last < frames - 1 {
                assert_eq!(frames_seen.len() as u64, lifespan);
            } else {
                assert!(frames_seen.len() as u64 <= lifespan);
            }
        }
    }

    #[test]
    fn objects_stay_near_detection_area() {
        for name in ["t_junction", "roundabout"] {
            let cfg = build_scenario(name).unwrap();
            let mut sim = TrafficSimulator::new(&cfg, 1);
            let a = cfg.detection_area;
            for _ in 0..20 {
                for o in sim.step() {
                    let d = o.bbox.diagonal();
                    let c = o.bbox.center;
                    assert!(c.x >= a.min_x - d && c.x <= a.max_x + d && c.y >= a.min_y - d && c.y <= a.max_y + d);
                    let range = cfg.object_sizes.get(o.class());
                    assert!(o.bbox.length >= range.length[0] && o.bbox.length <= range.length[1]);
                }
            }
        }
    }

    #[test]
    fn class_frequencies_follow_spawn_probabilities() {
        let cfg = build_scenario("roundabout").unwrap();
        let mut sim = TrafficSimulator::new(&cfg, 2024);
        let mut first_seen: HashMap<u64, ObjectClass> = HashMap::new();
        while first_seen.len() < 10_000 {
            for o in sim.step() {
                first_seen.entry(o.object_id).or_insert(o.class());
            }
        }
        let n = first_seen.len() as f64;
        let frac = |c| first_seen.values().filter(|&&k| k == c).count() as f64 / n;
        assert!((frac(ObjectClass::Car) - 0.6).abs() < 0.02, "{}", frac(ObjectClass::Car));
        assert!((frac(ObjectClass::Cyclist) - 0.2).abs() < 0.02);
        assert!((frac(ObjectClass::Pedestrian) - 0.2).abs() < 0.02);
    }
}
