//! Late fusion over the wire: one thread per sensor encodes its boxes, the
//! fusion center decodes, assembles complete frames and merges them.
//!
//! cargo run --release --example fusion_center -- [frames]

use std::sync::mpsc;
use std::thread;

use coopdet::comms::{decode_message, encode_message, FrameAssembler, Message, MessageBody};
use coopdet::detector::DetectionContext;
use coopdet::fusion::{late_fuse, nms, DEFAULT_NMS_IOU};
use coopdet::metrics::average_precision;
use coopdet::scene::generate_frames;
use coopdet::{build_scenario, Detector, DetectorParams, FusionConfig, ObjectClass, OracleDetector, Scheme, Stage};

fn main() -> anyhow::Result<()> {
    let frames: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let cfg = build_scenario("t_junction")?;
    let data = generate_frames(&cfg, 3, frames)?;
    let oracle = OracleDetector::new(DetectorParams::default(), 3)?;

    let (tx, rx) = mpsc::channel::<Vec<u8>>();
    let bytes_sent = thread::scope(|s| {
        let mut workers = Vec::new();
        for sensor in &cfg.sensors {
            let tx = tx.clone();
            let (data, oracle) = (&data, &oracle);
            workers.push(s.spawn(move || {
                let mut sent = 0;
                for f in data {
                    let ctx = DetectionContext {
                        frame_id: f.frame_id,
                        stage: Stage::Sensor(sensor.id),
                        ground_truth: &f.ground_truth,
                    };
                    let dets = nms(&oracle.detect(f.cloud(sensor.id).unwrap(), &ctx), DEFAULT_NMS_IOU);
                    let msg = Message {
                        frame_id: f.frame_id as u32,
                        sensor_id: sensor.id,
                        body: MessageBody::from_detections(&dets),
                    };
                    let bytes = encode_message(&msg).expect("small message");
                    sent += bytes.len();
                    tx.send(bytes).expect("fusion center alive");
                }
                sent
            }));
        }
        drop(tx);
        workers.into_iter().map(|w| w.join().unwrap()).sum::<usize>()
    });

    let assembler = FrameAssembler::new(cfg.sensor_ids());
    let fcfg = FusionConfig::new(Scheme::Late, cfg.hybrid_radius)?;
    let mut fused = vec![Vec::new(); frames];
    for bytes in rx {
        if let Some((frame, msgs)) = assembler.submit(decode_message(&bytes)?)? {
            let lists: Vec<_> = msgs.iter().map(|m| m.to_detections().unwrap()).collect();
            fused[frame as usize] = late_fuse(&lists, &fcfg);
        }
    }
    assert!(assembler.pending_frames().is_empty());

    let gt: Vec<Vec<_>> = data
        .iter()
        .map(|f| {
            f.ground_truth
                .iter()
                .filter(|o| o.class() == ObjectClass::Car && cfg.detection_area.contains(o.bbox.center.x, o.bbox.center.y))
                .map(|o| o.bbox)
                .collect()
        })
        .collect();
    println!("{frames} frames from {} sensors, {bytes_sent} bytes on the wire", cfg.sensors.len());
    println!(
        "late fusion AP@0.7 {:.4}, {} fused boxes",
        average_precision(&gt, &fused, 0.7).unwrap_or(0.0),
        fused.iter().map(Vec::len).sum::<usize>()
    );
    Ok(())
}
