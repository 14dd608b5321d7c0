//! On-disk dataset format.
//!
//! ```text
//! <root>/frame_000000/sensor_<id>.cppc   binary point cloud, global frame
//! <root>/frame_000000/ground_truth.txt   one object per line
//! ```
//!
//! Point cloud files are little-endian: magic `CPPC`, version `u16`, point
//! count `u32`, then `count` triples of `f32` (x, y, z). Ground-truth lines
//! hold `id class cx cy cz l w h yaw` separated by whitespace; lines starting
//! with `#` are comments.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::traffic::GroundTruthObject;
use super::Frame;
use crate::geometry::{ObjectClass, OrientedBox3D, Point3};
use crate::preprocess::{CloudFrame, PointCloud, SensorId};

pub const CLOUD_MAGIC: [u8; 4] = *b"CPPC";
pub const CLOUD_VERSION: u16 = 1;
pub const GROUND_TRUTH_FILE: &str = "ground_truth.txt";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("bad point cloud magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported point cloud version {0}")]
    UnsupportedVersion(u16),
    #[error("point cloud truncated: expected {expected} bytes of points, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset {0} has no frames")]
    Empty(String),
    #[error("frame {frame} is missing the cloud of sensor {sensor}")]
    MissingSensor { frame: u64, sensor: SensorId },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_point_cloud<W: Write>(w: &mut W, pc: &PointCloud) -> io::Result<()> {
    w.write_all(&CLOUD_MAGIC)?;
    w.write_all(&CLOUD_VERSION.to_le_bytes())?;
    w.write_all(&(pc.points.len() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(pc.points.len() * 12);
    for p in &pc.points {
        for v in [p.x, p.y, p.z] {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)
}

pub fn read_point_cloud<R: Read>(r: &mut R, sensor: Option<SensorId>) -> Result<PointCloud, DatasetError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|source| DatasetError::Io {
        path: "<reader>".into(),
        source,
    })?;
    decode_point_cloud(&bytes, sensor)
}

pub fn decode_point_cloud(bytes: &[u8], sensor: Option<SensorId>) -> Result<PointCloud, DatasetError> {
    if bytes.len() < 10 {
        return Err(DatasetError::Truncated {
            expected: 10,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != CLOUD_MAGIC {
        return Err(DatasetError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CLOUD_VERSION {
        return Err(DatasetError::UnsupportedVersion(version));
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let body = &bytes[10..];
    if body.len() != count * 12 {
        return Err(DatasetError::Truncated {
            expected: count * 12,
            found: body.len(),
        });
    }
    let f = |i: usize| f32::from_le_bytes(body[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
    let points = (0..count).map(|k| Point3::new(f(3 * k), f(3 * k + 1), f(3 * k + 2))).collect();
    Ok(PointCloud::new(points, CloudFrame::Global, sensor))
}

pub fn format_ground_truth_line(o: &GroundTruthObject) -> String {
    let b = &o.bbox;
    format!(
        "{} {} {} {} {} {} {} {} {}",
        o.object_id,
        b.class,
        b.center.x,
        b.center.y,
        b.center.z,
        b.length,
        b.width,
        b.height,
        b.yaw()
    )
}

pub fn write_ground_truth<W: Write>(w: &mut W, objects: &[GroundTruthObject]) -> io::Result<()> {
    writeln!(w, "# id class cx cy cz l w h yaw")?;
    for o in objects {
        writeln!(w, "{}", format_ground_truth_line(o))?;
    }
    Ok(())
}

/// Parses `cx cy cz l w h yaw` tokens into a box.
pub(crate) fn parse_box(class: ObjectClass, tokens: &[&str], line: usize) -> Result<OrientedBox3D, DatasetError> {
    const NAMES: [&str; 7] = ["cx", "cy", "cz", "l", "w", "h", "yaw"];
    let mut v = [0.0; 7];
    for (k, name) in NAMES.iter().enumerate() {
        v[k] = tokens[k].parse::<f64>().map_err(|e| DatasetError::Parse {
            line,
            message: format!("bad {name} value {:?}: {e}", tokens[k]),
        })?;
    }
    OrientedBox3D::new(Point3::new(v[0], v[1], v[2]), v[3], v[4], v[5], v[6], class).map_err(|e| DatasetError::Parse {
        line,
        message: e.to_string(),
    })
}

pub fn read_ground_truth<R: Read>(r: R) -> Result<Vec<GroundTruthObject>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: "<reader>".into(),
            source,
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 9 {
            return Err(DatasetError::Parse {
                line: n,
                message: format!("expected 9 fields, got {}", tokens.len()),
            });
        }
        let object_id = tokens[0].parse().map_err(|e| DatasetError::Parse {
            line: n,
            message: format!("bad id {:?}: {e}", tokens[0]),
        })?;
        let class = tokens[1].parse().map_err(|message| DatasetError::Parse { line: n, message })?;
        let bbox = parse_box(class, &tokens[2..], n)?;
        out.push(GroundTruthObject { object_id, bbox });
    }
    Ok(out)
}

pub fn frame_dir(root: &Path, frame_id: u64) -> PathBuf {
    root.join(format!("frame_{frame_id:06}"))
}

pub fn cloud_file_name(sensor: SensorId) -> String {
    format!("sensor_{sensor}.cppc")
}

/// Writes one frame's clouds and ground truth under `root`.
pub fn save_frame(root: &Path, frame: &Frame) -> Result<(), DatasetError> {
    let dir = frame_dir(root, frame.frame_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for pc in &frame.clouds {
        let sensor = pc.source_sensor.expect("dataset clouds carry their sensor id");
        let path = dir.join(cloud_file_name(sensor));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        write_point_cloud(&mut w, pc).and_then(|_| w.flush()).map_err(io_err(&path))?;
    }
    let path = dir.join(GROUND_TRUTH_FILE);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    write_ground_truth(&mut w, &frame.ground_truth)
        .and_then(|_| w.flush())
        .map_err(io_err(&path))
}

/// Loads one frame. Clouds are returned in the order of `sensors`.
pub fn load_frame(root: &Path, frame_id: u64, sensors: &[SensorId]) -> Result<Frame, DatasetError> {
    let dir = frame_dir(root, frame_id);
    let mut clouds = Vec::with_capacity(sensors.len());
    for &s in sensors {
        let path = dir.join(cloud_file_name(s));
        if !path.exists() {
            return Err(DatasetError::MissingSensor { frame: frame_id, sensor: s });
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        clouds.push(decode_point_cloud(&bytes, Some(s))?);
    }
    let path = dir.join(GROUND_TRUTH_FILE);
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let ground_truth = read_ground_truth(file)?;
    Ok(Frame {
        frame_id,
        clouds,
        ground_truth,
        depth_images: Vec::new(),
    })
}

/// Sorted frame ids present under `root`.
pub fn list_frames(root: &Path) -> Result<Vec<u64>, DatasetError> {
    let entries = fs::read_dir(root).map_err(io_err(root))?;
    let mut ids = Vec::new();
    for e in entries {
        let e = e.map_err(io_err(root))?;
        let name = e.file_name();
        let name = name.to_string_lossy();
        if let Some(id) = name.strip_prefix("frame_").and_then(|s| s.parse::<u64>().ok()) {
            if e.path().is_dir() {
                ids.push(id);
            }
        }
    }
    ids.sort_unstable();
    if ids.is_empty() {
        return Err(DatasetError::Empty(root.display().to_string()));
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_scenario, generate_frames};
    use proptest::prelude::*;

    #[test]
    fn frame_round_trip_on_disk() {
        let cfg = build_scenario("t_junction").unwrap();
        let frames = generate_frames(&cfg, 4, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for f in &frames {
            save_frame(dir.path(), f).unwrap();
        }
        assert_eq!(list_frames(dir.path()).unwrap(), vec![0, 1]);
        let ids = cfg.sensor_ids();
        for f in &frames {
            let back = load_frame(dir.path(), f.frame_id, &ids).unwrap();
            assert_eq!(&back, f);
        }
        assert!(matches!(load_frame(dir.path(), 0, &[42]), Err(DatasetError::MissingSensor { .. })));
    }

    #[test]
    fn cloud_header_errors() {
        let pc = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)], CloudFrame::Global, Some(0));
        let mut bytes = Vec::new();
        write_point_cloud(&mut bytes, &pc).unwrap();
        assert_eq!(bytes.len(), 10 + 12);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_point_cloud(&bad, None), Err(DatasetError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_point_cloud(&bad, None), Err(DatasetError::UnsupportedVersion(9))));
        assert!(matches!(decode_point_cloud(&bytes[..15], None), Err(DatasetError::Truncated { .. })));
    }

    #[test]
    fn ground_truth_parse_errors_name_the_line() {
        let text = "# header\n1 car 0 0 0.8 4 1.8 1.6 0.1\n2 car 0 0 0.8 4 1.8 1.6 oops\n";
        match read_ground_truth(text.as_bytes()) {
            Err(DatasetError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("yaw"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_ground_truth("1 truck 0 0 0 1 1 1 0\n".as_bytes()).is_err());
        assert!(read_ground_truth("".as_bytes()).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn cloud_bytes_round_trip(pts in proptest::collection::vec((-1e4f32..1e4, -1e4f32..1e4, -10f32..10.0), 0..64)) {
            let pc = PointCloud::new(
                pts.iter().map(|&(x, y, z)| Point3::new(x as f64, y as f64, z as f64)).collect(),
                CloudFrame::Global,
                Some(2),
            );
            let mut bytes = Vec::new();
            write_point_cloud(&mut bytes, &pc).unwrap();
            prop_assert_eq!(read_point_cloud(&mut bytes.as_slice(), Some(2)).unwrap(), pc);
        }
    }
}
