//! Renders one sensor of a shipped scenario, back-projects its depth image
//! and checks that every return re-projects onto the pixel it came from.
//!
//! cargo run --release --example render_and_backproject -- [t_junction|roundabout] [sensor]

use coopdet::geometry::back_project_pixels;
use coopdet::scene::render::{render_depth, RenderOptions};
use coopdet::scene::{build_scenario, spawn_objects};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("t_junction");
    let id: u16 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0);

    let cfg = build_scenario(name)?;
    let sensor = cfg
        .sensor(id)
        .ok_or_else(|| anyhow::anyhow!("no sensor {id} in {name}"))?
        .downsampled(cfg.downsample_factor)?;
    let boxes: Vec<_> = spawn_objects(&cfg, 7, 0).into_iter().map(|o| o.bbox).collect();
    let image = render_depth(&sensor, &boxes, &RenderOptions::noiseless(cfg.max_range), 0);
    let intr = &sensor.intrinsics;

    let mut exact = 0;
    let pixels = back_project_pixels(&image, intr)?;
    for ([u, v], p) in &pixels {
        let (pu, pv, _) = intr.project(p).expect("returns lie in front of the camera");
        if (pu.round() as usize, pv.round() as usize) == (*u, *v) {
            exact += 1;
        }
    }
    let (near, far) = pixels
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), (_, p)| (a.min(p.z), b.max(p.z)));
    println!("sensor {id} of {name}: {}x{} pixels, focal {:.2}", intr.width, intr.height, intr.focal);
    println!("{} objects in the scene, {} returns, depth {near:.2}..{far:.2} m", boxes.len(), pixels.len());
    println!("{exact}/{} returns re-project onto their pixel", pixels.len());

    let noisy = render_depth(&sensor, &boxes, &RenderOptions::from_scenario(&cfg), 1);
    let diffs: Vec<f64> = noisy
        .data
        .iter()
        .zip(&image.data)
        .filter(|(_, c)| image.is_return(**c))
        .map(|(n, c)| n - c)
        .collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt();
    println!("depth noise: std {std:.4} m over {} returns (configured {})", diffs.len(), cfg.noise_sigma);
    Ok(())
}
