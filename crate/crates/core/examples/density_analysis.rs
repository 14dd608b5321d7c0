//! How many points land on each car, per sensor and for the full set, and
//! how box accuracy grows with that count.
//!
//! cargo run --release --example density_analysis -- [t_junction|roundabout] [frames]

use coopdet::experiment::{density_observations, observe_frames, set_label, Evaluator, ExperimentSpec};
use coopdet::scene::build_scenario;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("t_junction");
    let frames: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(100);

    let mut spec = ExperimentSpec::new(build_scenario(name)?, std::env::temp_dir());
    spec.frames = frames;
    let ev = Evaluator::new(&spec)?;
    let obs = observe_frames(&spec)?;
    let report = density_observations(&ev, &obs, false)?;

    println!("{:<14} {:>7} {:>7} {:>7} {:>7}", "set", "F(0)", "F(20)", "F(100)", "F(500)");
    for (set, cdf) in &report.cdfs {
        print!("{:<14}", set_label(set));
        for d in [0, 20, 100, 500] {
            print!(" {:>7.3}", cdf.eval(d));
        }
        println!();
    }

    // coarse view of the 200-bin table: pool into ten groups
    println!("\nmean IOU by density");
    for chunk in report.bins.chunks(report.bins.len().div_ceil(10).max(1)) {
        let n: usize = chunk.iter().map(|b| b.count).sum();
        let iou = chunk.iter().map(|b| b.mean_iou * b.count as f64).sum::<f64>() / n as f64;
        println!("  ~{:>6.0} points  {:.3}  ({n} boxes)", chunk[0].center, iou);
    }
    Ok(())
}
