//! Input preparation for a voxel-based detector: voxelize an early-fused
//! cloud and lay out the anchor grid over the detection area.
//!
//! cargo run --release --example voxel_anchor_prep -- [t_junction|roundabout]

use coopdet::detector::{anchor_grid, voxelize, AnchorGridSpec, VoxelGridSpec};
use coopdet::fusion::early_fuse;
use coopdet::scene::generate_frames;
use coopdet::build_scenario;

fn main() -> anyhow::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "t_junction".into());
    let cfg = build_scenario(&name)?;
    let frame = generate_frames(&cfg, 1, 1)?.remove(0);
    let cloud = early_fuse(&frame.clouds.iter().collect::<Vec<_>>())?;

    let grid = VoxelGridSpec::new(cfg.voxel_size, cfg.detection_area, cfg.height_cutoff)?;
    let voxels = voxelize(&cloud, &grid, 1);
    let kept: usize = voxels.values().map(Vec::len).sum();
    let full = voxels.values().filter(|v| v.len() == grid.max_points_per_voxel).count();
    println!("{} points -> {} occupied voxels of {:?} m", cloud.len(), voxels.len(), cfg.voxel_size);
    println!("{kept} points kept, {full} voxels at the {}-point cap", grid.max_points_per_voxel);

    let anchors_spec = AnchorGridSpec::new(cfg.anchor_stride)?;
    let (nx, ny) = anchors_spec.grid_shape(&cfg.detection_area);
    let anchors = anchor_grid(&anchors_spec, &cfg.detection_area);
    println!("anchor grid {nx} x {ny}, {} anchors of size {:?}", anchors.len(), anchors_spec.size);
    Ok(())
}
