//! Evaluating detections produced elsewhere: write oracle boxes to a
//! detection file, then score them through the file-backed detector exactly
//! as an external model's output would be.
//!
//! cargo run --release --example external_detections -- [frames]

use std::fs::File;
use std::io::BufWriter;

use coopdet::detector::{write_detections, DetectionContext, FileDetector};
use coopdet::experiment::{compare_observations, observe_frames, DetectorChoice, Evaluator, ExperimentSpec};
use coopdet::fusion::early_fuse;
use coopdet::scene::generate_frames;
use coopdet::{build_scenario, Detector, DetectorParams, OracleDetector, Scheme, Stage};

fn main() -> anyhow::Result<()> {
    let frames: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let cfg = build_scenario("t_junction")?;
    let seed = 5;
    let oracle = OracleDetector::new(DetectorParams::default(), seed)?;

    let mut records = Vec::new();
    for f in generate_frames(&cfg, seed, frames)? {
        let ctx = |stage| DetectionContext {
            frame_id: f.frame_id,
            stage,
            ground_truth: &f.ground_truth,
        };
        for c in &f.clouds {
            let stage = Stage::Sensor(c.source_sensor.unwrap());
            records.push((f.frame_id, stage, oracle.detect(c, &ctx(stage))));
        }
        let fused = early_fuse(&f.clouds.iter().collect::<Vec<_>>())?;
        records.push((f.frame_id, Stage::Early, oracle.detect(&fused, &ctx(Stage::Early))));
    }
    let dir = tempfile_dir()?;
    let path = dir.join("detections.txt");
    write_detections(&mut BufWriter::new(File::create(&path)?), &records)?;
    println!("wrote {} records to {}", records.len(), path.display());

    let mut spec = ExperimentSpec::new(cfg, &dir);
    spec.frames = frames;
    spec.seed = seed;
    spec.schemes = vec![Scheme::Early, Scheme::Late];
    let obs = observe_frames(&spec)?;
    let direct = compare_observations(&Evaluator::new(&spec)?, &obs, &spec.scenario.sensor_ids(), false)?;
    spec.detector = DetectorChoice::External(FileDetector::load(&path)?);
    let replay = compare_observations(&Evaluator::new(&spec)?, &obs, &spec.scenario.sensor_ids(), false)?;
    for s in [Scheme::Early, Scheme::Late] {
        println!(
            "{s:<6} oracle AP@0.7 {:.4}  from file {:.4}",
            direct.ap(s, 0.7).unwrap_or(0.0),
            replay.ap(s, 0.7).unwrap_or(0.0)
        );
    }
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join("coopdet_external");
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
