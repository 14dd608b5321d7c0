//! Early, hybrid and late fusion side by side on a shipped scenario with the
//! calibrated oracle detector: AP at each IOU threshold and data sent per
//! sensor.
//!
//! cargo run --release --example fusion_schemes -- [t_junction|roundabout] [frames] [seed]

use coopdet::experiment::{compare_observations, observe_frames, Evaluator, ExperimentSpec};
use coopdet::scene::build_scenario;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("t_junction");
    let frames: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let seed: u64 = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(1);

    let mut spec = ExperimentSpec::new(build_scenario(name)?, std::env::temp_dir());
    spec.frames = frames;
    spec.seed = seed;
    let ev = Evaluator::new(&spec)?;
    let obs = observe_frames(&spec)?;
    let report = compare_observations(&ev, &obs, &spec.scenario.sensor_ids(), false)?;

    println!("{name}, {frames} frames, seed {seed}, hybrid radius {} m", spec.radius());
    print!("{:<8}", "scheme");
    for k in &spec.kappas {
        print!("  AP@{k:<5}");
    }
    println!("  kbit/sensor/frame");
    for scheme in &spec.schemes {
        print!("{:<8}", scheme.to_string());
        for &k in &spec.kappas {
            let ap = report.ap(*scheme, k).map_or("-".to_string(), |v| format!("{v:.4}"));
            print!("  {ap:<8}");
        }
        println!("  {:.3}", report.cost(*scheme).unwrap_or(0.0));
    }
    Ok(())
}
