//! Early and late fusion over every sensor subset; prints the best set of
//! each size with its recall at 95% precision.
//!
//! cargo run --release --example sensor_sweep -- [t_junction|roundabout] [frames]

use coopdet::experiment::{observe_frames, set_label, sweep_observations, Evaluator, ExperimentSpec, SensorSets};
use coopdet::scene::build_scenario;
use coopdet::Scheme;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("t_junction");
    let frames: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(100);

    let mut spec = ExperimentSpec::new(build_scenario(name)?, std::env::temp_dir());
    spec.frames = frames;
    spec.sensor_sets = SensorSets::AllSubsets;
    spec.kappas = vec![0.7];
    let ev = Evaluator::new(&spec)?;
    let obs = observe_frames(&spec)?;
    let report = sweep_observations(&ev, &obs, false)?;

    let sets = report.rows.len() / 2;
    println!("{name}: {sets} sensor sets, {frames} frames, AP at IOU 0.7");
    println!("{:<4} {:<14} {:>8} {:>8} {:>10}", "n", "best set", "early", "late", "recall@.95");
    for (n, set) in &report.best {
        let e = report.row(set, Scheme::Early, 0.7).unwrap();
        let l = report.row(set, Scheme::Late, 0.7).unwrap();
        println!(
            "{n:<4} {:<14} {:>8.4} {:>8.4} {:>10.4}",
            set_label(set),
            e.ap.unwrap_or(0.0),
            l.ap.unwrap_or(0.0),
            e.recall_at_precision
        );
    }
    Ok(())
}
