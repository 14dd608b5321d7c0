//! Coverage of a shipped scenario: how many cars each sensor sees, and which
//! cars no sensor sees at all.
//!
//! cargo run --release --example coverage_map -- [t_junction|roundabout] [frames]

use coopdet::experiment::{observe_frames, ExperimentSpec};
use coopdet::geometry::ObjectClass;
use coopdet::scene::build_scenario;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("t_junction");
    let frames: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let scenario = build_scenario(name)?;
    let mut spec = ExperimentSpec::new(scenario.clone(), std::env::temp_dir());
    spec.frames = frames;
    let obs = observe_frames(&spec)?;

    let area = scenario.detection_area;
    let n_sensors = scenario.sensors.len();
    let mut seen_by = vec![0usize; n_sensors];
    let mut points = vec![0usize; n_sensors];
    let (mut cars, mut blind) = (0usize, 0usize);
    let mut blind_spots = Vec::new();
    for o in &obs {
        for (k, p) in o.points.iter().enumerate() {
            points[k] += p;
        }
        for (i, gt) in o.ground_truth.iter().enumerate() {
            let c = gt.bbox.center;
            if gt.class() != ObjectClass::Car || !area.contains(c.x, c.y) {
                continue;
            }
            cars += 1;
            let mut any = false;
            for (k, counts) in o.counts.iter().enumerate() {
                if counts[i] > 0 {
                    seen_by[k] += 1;
                    any = true;
                }
            }
            if !any {
                blind += 1;
                blind_spots.push((c.x, c.y));
            }
        }
    }
    println!("{name}: {frames} frames, {cars} cars inside {area}");
    for (k, s) in scenario.sensors.iter().enumerate() {
        println!(
            "  sensor {} at ({:.1}, {:.1}) yaw {:>6.1} pitch {:>5.1}: sees {:>5.1}% of cars, {:>6} points/frame",
            s.id,
            s.position[0],
            s.position[1],
            s.yaw_deg,
            s.pitch_deg,
            100.0 * seen_by[k] as f64 / cars.max(1) as f64,
            points[k] / frames.max(1)
        );
    }
    println!("  cars seen by no sensor: {blind}");
    for (x, y) in blind_spots.iter().take(20) {
        println!("    ({x:.1}, {y:.1})");
    }
    Ok(())
}
