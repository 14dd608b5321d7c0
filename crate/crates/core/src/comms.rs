//! Sensor to fusion-center messages: cost accounting, the framed binary wire
//! format, and per-frame assembly at the center.
//!
//! Wire header, little-endian, 17 bytes:
//!
//! ```text
//! magic "CPMF" | version u16 | frame_id u32 | sensor_id u16 | payload_type u8 | payload_length u32
//! ```
//!
//! Payload type 0 carries points as `x y z` f32 triples; type 1 carries boxes
//! as `class u32, cx cy cz l w h yaw score` (f32), 36 bytes each.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use thiserror::Error;

use crate::detector::Detection;
use crate::fusion::{Payload, Scheme};
use crate::geometry::{ObjectClass, OrientedBox3D, Point3};
use crate::preprocess::{CloudFrame, PointCloud, SensorId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingConfig {
    pub bits_per_point: u64,
    pub bits_per_box: u64,
    pub header_bits: u64,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            bits_per_point: 96,
            bits_per_box: 288,
            header_bits: 104,
        }
    }
}

impl EncodingConfig {
    /// Bits one sensor sends for `payload` under `scheme`.
    pub fn bits(&self, scheme: Scheme, payload: &Payload) -> u64 {
        let points = payload.points as u64 * self.bits_per_point;
        let boxes = payload.boxes as u64 * self.bits_per_box;
        self.header_bits
            + match scheme {
                Scheme::Early => points,
                Scheme::Late => boxes,
                Scheme::Hybrid => points + boxes,
            }
    }
}

/// Data volume per sensor, averaged over `frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub scheme: Scheme,
    /// Total bits sent by each sensor over all frames.
    pub bits: BTreeMap<SensorId, u64>,
    pub frames: usize,
}

impl CostReport {
    pub fn empty(scheme: Scheme) -> Self {
        Self {
            scheme,
            bits: BTreeMap::new(),
            frames: 0,
        }
    }

    /// Mean kbit per frame for each sensor.
    pub fn per_sensor_kbit(&self) -> BTreeMap<SensorId, f64> {
        let f = self.frames.max(1) as f64;
        self.bits.iter().map(|(&s, &b)| (s, b as f64 / 1000.0 / f)).collect()
    }

    /// Mean kbit per sensor per frame.
    pub fn mean_kbit(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        let total: u64 = self.bits.values().sum();
        total as f64 / 1000.0 / self.bits.len() as f64 / self.frames.max(1) as f64
    }

    pub fn merge(&mut self, other: &CostReport) {
        assert_eq!(self.scheme, other.scheme, "cannot merge costs of different schemes");
        for (&s, &b) in &other.bits {
            *self.bits.entry(s).or_default() += b;
        }
        self.frames += other.frames;
    }
}

pub fn cost_of_frame(scheme: Scheme, payloads: &[Payload], enc: &EncodingConfig) -> CostReport {
    let mut bits = BTreeMap::new();
    for p in payloads {
        *bits.entry(p.sensor_id).or_default() += enc.bits(scheme, p);
    }
    CostReport {
        scheme,
        bits,
        frames: 1,
    }
}

pub const WIRE_MAGIC: [u8; 4] = *b"CPMF";
pub const WIRE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 17;
pub const POINT_LEN: usize = 12;
pub const BOX_LEN: usize = 36;

/// A box as it travels on the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireBox {
    pub class: u32,
    /// `cx cy cz l w h yaw score`
    pub values: [f32; 8],
}

impl WireBox {
    pub fn from_detection(d: &Detection) -> Self {
        let b = &d.bbox;
        Self {
            class: b.class.code(),
            values: [b.center.x, b.center.y, b.center.z, b.length, b.width, b.height, b.yaw(), d.score].map(|v| v as f32),
        }
    }

    /// Back to a detection; `None` if the fields do not describe a valid box.
    pub fn to_detection(&self, sensor: Option<SensorId>) -> Option<Detection> {
        let class = ObjectClass::from_code(self.class)?;
        let v = self.values.map(|x| x as f64);
        let bbox = OrientedBox3D::new(Point3::new(v[0], v[1], v[2]), v[3], v[4], v[5], v[6], class).ok()?;
        Detection::new(bbox, v[7], sensor).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    Points(Vec<[f32; 3]>),
    Boxes(Vec<WireBox>),
}

impl MessageBody {
    pub fn from_cloud(pc: &PointCloud) -> Self {
        MessageBody::Points(pc.points.iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect())
    }

    pub fn from_detections(dets: &[Detection]) -> Self {
        MessageBody::Boxes(dets.iter().map(WireBox::from_detection).collect())
    }

    fn type_code(&self) -> u8 {
        match self {
            MessageBody::Points(_) => 0,
            MessageBody::Boxes(_) => 1,
        }
    }

    fn byte_len(&self) -> usize {
        match self {
            MessageBody::Points(p) => p.len() * POINT_LEN,
            MessageBody::Boxes(b) => b.len() * BOX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub frame_id: u32,
    pub sensor_id: SensorId,
    pub body: MessageBody,
}

impl Message {
    pub fn to_cloud(&self) -> Option<PointCloud> {
        match &self.body {
            MessageBody::Points(p) => Some(PointCloud::new(
                p.iter().map(|q| Point3::new(q[0] as f64, q[1] as f64, q[2] as f64)).collect(),
                CloudFrame::Global,
                Some(self.sensor_id),
            )),
            MessageBody::Boxes(_) => None,
        }
    }

    /// Decoded detections; invalid boxes are dropped.
    pub fn to_detections(&self) -> Option<Vec<Detection>> {
        match &self.body {
            MessageBody::Boxes(b) => Some(b.iter().filter_map(|w| w.to_detection(Some(self.sensor_id))).collect()),
            MessageBody::Points(_) => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {found} (expected {WIRE_VERSION})")]
    VersionMismatch { found: u16 },
    #[error("truncated message: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown payload type {0}")]
    UnknownPayloadType(u8),
    #[error("payload length {length} is not a multiple of the {record}-byte record size")]
    MisalignedPayload { length: usize, record: usize },
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("payload of {0} bytes does not fit the u32 length field")]
    TooLarge(usize),
}

pub fn encode_message(m: &Message) -> Result<Vec<u8>, CodecError> {
    let len = m.body.byte_len();
    let len32 = u32::try_from(len).map_err(|_| CodecError::TooLarge(len))?;
    let mut out = Vec::with_capacity(HEADER_LEN + len);
    out.extend_from_slice(&WIRE_MAGIC);
    out.extend_from_slice(&WIRE_VERSION.to_le_bytes());
    out.extend_from_slice(&m.frame_id.to_le_bytes());
    out.extend_from_slice(&m.sensor_id.to_le_bytes());
    out.push(m.body.type_code());
    out.extend_from_slice(&len32.to_le_bytes());
    match &m.body {
        MessageBody::Points(pts) => {
            for p in pts {
                for v in p {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        MessageBody::Boxes(boxes) => {
            for b in boxes {
                out.extend_from_slice(&b.class.to_le_bytes());
                for v in &b.values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

fn f32_at(b: &[u8], i: usize) -> f32 {
    f32::from_le_bytes(b[i..i + 4].try_into().unwrap())
}

/// Decodes one message from the front of `bytes`, returning it and the
/// number of bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Message, usize), CodecError> {
    let truncated = |needed| CodecError::Truncated {
        needed,
        available: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(HEADER_LEN));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != WIRE_MAGIC {
        return Err(CodecError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != WIRE_VERSION {
        return Err(CodecError::VersionMismatch { found: version });
    }
    let frame_id = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let sensor_id = u16::from_le_bytes([bytes[10], bytes[11]]);
    let kind = bytes[12];
    let length = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
    let record = match kind {
        0 => POINT_LEN,
        1 => BOX_LEN,
        other => return Err(CodecError::UnknownPayloadType(other)),
    };
    let end = HEADER_LEN.checked_add(length).ok_or(truncated(usize::MAX))?;
    if bytes.len() < end {
        return Err(truncated(end));
    }
    if !length.is_multiple_of(record) {
        return Err(CodecError::MisalignedPayload { length, record });
    }
    let body = &bytes[HEADER_LEN..end];
    let n = length / record;
    let body = if kind == 0 {
        MessageBody::Points((0..n).map(|k| std::array::from_fn(|j| f32_at(body, k * POINT_LEN + 4 * j))).collect())
    } else {
        MessageBody::Boxes(
            (0..n)
                .map(|k| {
                    let o = k * BOX_LEN;
                    WireBox {
                        class: u32::from_le_bytes(body[o..o + 4].try_into().unwrap()),
                        values: std::array::from_fn(|j| f32_at(body, o + 4 + 4 * j)),
                    }
                })
                .collect(),
        )
    };
    Ok((
        Message {
            frame_id,
            sensor_id,
            body,
        },
        end,
    ))
}

/// Decodes a buffer holding exactly one message.
pub fn decode_message(bytes: &[u8]) -> Result<Message, CodecError> {
    let (m, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(CodecError::TrailingBytes(bytes.len() - used));
    }
    Ok(m)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AssemblyError {
    #[error("sensor {0} is not part of this fusion center")]
    UnknownSensor(SensorId),
    #[error("sensor {sensor} already reported frame {frame}")]
    Duplicate { frame: u32, sensor: SensorId },
}

/// Collects messages from concurrently reporting sensors and releases a
/// frame once every expected sensor has reported it.
#[derive(Debug)]
pub struct FrameAssembler {
    expected: Vec<SensorId>,
    pending: Mutex<HashMap<u32, BTreeMap<SensorId, Message>>>,
}

impl FrameAssembler {
    pub fn new(mut expected: Vec<SensorId>) -> Self {
        expected.sort_unstable();
        expected.dedup();
        Self {
            expected,
            pending: Mutex::new(HashMap::new()),
        }
    }

    /// Adds a message. Returns the frame's messages, ordered by sensor id,
    /// when this message completes it.
    pub fn submit(&self, m: Message) -> Result<Option<(u32, Vec<Message>)>, AssemblyError> {
        if self.expected.binary_search(&m.sensor_id).is_err() {
            return Err(AssemblyError::UnknownSensor(m.sensor_id));
        }
        let mut pending = self.pending.lock().expect("assembler lock poisoned");
        let frame = m.frame_id;
        let slot = pending.entry(frame).or_default();
        if slot.contains_key(&m.sensor_id) {
            return Err(AssemblyError::Duplicate {
                frame,
                sensor: m.sensor_id,
            });
        }
        slot.insert(m.sensor_id, m);
        if slot.len() == self.expected.len() {
            let done = pending.remove(&frame).unwrap();
            return Ok(Some((frame, done.into_values().collect())));
        }
        Ok(None)
    }

    /// Frames still waiting for at least one sensor.
    pub fn pending_frames(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.pending.lock().expect("assembler lock poisoned").keys().copied().collect();
        v.sort_unstable();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn cost_examples() {
        let enc = EncodingConfig::default();
        let none = Payload {
            sensor_id: 0,
            points: 0,
            boxes: 0,
        };
        for s in Scheme::ALL {
            assert_eq!(cost_of_frame(s, &[none], &enc).mean_kbit(), 0.104);
        }
        let one_box = Payload { boxes: 1, ..none };
        assert!((cost_of_frame(Scheme::Late, &[one_box], &enc).mean_kbit() - 0.392).abs() < 1e-12);
        let pts = Payload { points: 5000, ..none };
        assert!((cost_of_frame(Scheme::Early, &[pts], &enc).mean_kbit() - 480.104).abs() < 1e-9);
        let both = Payload {
            points: 10,
            boxes: 2,
            ..none
        };
        assert_eq!(enc.bits(Scheme::Hybrid, &both), 104 + 960 + 576);
        assert_eq!(enc.bits(Scheme::Late, &both), 104 + 576);
    }

    #[test]
    fn costs_average_over_sensors_and_frames() {
        let enc = EncodingConfig::default();
        let p = |s, n| Payload {
            sensor_id: s,
            points: n,
            boxes: 0,
        };
        let mut r = cost_of_frame(Scheme::Early, &[p(0, 1000), p(1, 0)], &enc);
        r.merge(&cost_of_frame(Scheme::Early, &[p(0, 3000), p(1, 2000)], &enc));
        assert_eq!(r.frames, 2);
        let per = r.per_sensor_kbit();
        assert!((per[&0] - (0.104 + 192.0)).abs() < 1e-9);
        assert!((r.mean_kbit() - (0.104 + 144.0)).abs() < 1e-9);
    }

    #[test]
    fn empty_point_message() {
        let m = Message {
            frame_id: 7,
            sensor_id: 2,
            body: MessageBody::Points(vec![]),
        };
        let bytes = encode_message(&m).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(decode_message(&bytes).unwrap(), m);
    }

    #[test]
    fn corruption_classes() {
        let m = Message {
            frame_id: 1,
            sensor_id: 0,
            body: MessageBody::Points(vec![[1.0, 2.0, 3.0]; 4]),
        };
        let good = encode_message(&m).unwrap();
        let mut bad = good.clone();
        bad[1] = b'X';
        assert!(matches!(decode_message(&bad), Err(CodecError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(decode_message(&bad), Err(CodecError::VersionMismatch { found: 2 }));
        let mut bad = good.clone();
        bad[13..17].copy_from_slice(&1000u32.to_le_bytes());
        assert!(matches!(decode_message(&bad), Err(CodecError::Truncated { .. })));
        assert!(matches!(decode_message(&good[..10]), Err(CodecError::Truncated { .. })));
        let mut bad = good.clone();
        bad[12] = 9;
        assert_eq!(decode_message(&bad), Err(CodecError::UnknownPayloadType(9)));
        let mut long = good.clone();
        long.push(0);
        assert_eq!(decode_message(&long), Err(CodecError::TrailingBytes(1)));
    }

    #[test]
    fn detections_survive_the_wire_at_f32_precision() {
        let b = OrientedBox3D::new(Point3::new(1.5, -2.25, 0.75), 4.5, 1.75, 1.5, 0.5, ObjectClass::Car).unwrap();
        let d = Detection::new(b, 0.75, Some(3)).unwrap();
        let m = Message {
            frame_id: 0,
            sensor_id: 3,
            body: MessageBody::from_detections(&[d]),
        };
        let back = decode_message(&encode_message(&m).unwrap()).unwrap();
        assert_eq!(back.to_detections().unwrap(), vec![d]);
    }

    #[test]
    fn assembler_waits_for_all_sensors() {
        let asm = Arc::new(FrameAssembler::new(vec![0, 1, 2]));
        let msg = |f, s| Message {
            frame_id: f,
            sensor_id: s,
            body: MessageBody::Boxes(vec![]),
        };
        assert_eq!(asm.submit(msg(0, 1)).unwrap(), None);
        assert!(matches!(asm.submit(msg(0, 1)), Err(AssemblyError::Duplicate { .. })));
        assert!(matches!(asm.submit(msg(0, 9)), Err(AssemblyError::UnknownSensor(9))));

        let released: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = [0u16, 2]
                .into_iter()
                .map(|s| {
                    let asm = Arc::clone(&asm);
                    scope.spawn(move || {
                        let mut out = Vec::new();
                        for f in 0..50 {
                            if let Some(done) = asm.submit(msg(f, s)).unwrap() {
                                out.push(done);
                            }
                        }
                        out
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
        });
        // only frame 0 had sensor 1
        assert_eq!(released.len(), 1);
        let (frame, batch) = &released[0];
        assert_eq!(*frame, 0);
        assert_eq!(batch.iter().map(|m| m.sensor_id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(asm.pending_frames().len(), 49);
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        let pts = proptest::collection::vec(proptest::array::uniform3(proptest::num::f32::ANY), 0..20).prop_map(MessageBody::Points);
        let boxes = proptest::collection::vec(
            (any::<u32>(), proptest::array::uniform8(proptest::num::f32::ANY)).prop_map(|(class, values)| WireBox { class, values }),
            0..10,
        )
        .prop_map(MessageBody::Boxes);
        (any::<u32>(), any::<u16>(), prop_oneof![pts, boxes]).prop_map(|(frame_id, sensor_id, body)| Message {
            frame_id,
            sensor_id,
            body,
        })
    }

    proptest! {
        #[test]
        fn encode_decode_is_byte_exact(m in arb_message()) {
            let bytes = encode_message(&m).unwrap();
            let back = decode_message(&bytes).unwrap();
            // compare through bytes so NaN payloads count as equal
            prop_assert_eq!(encode_message(&back).unwrap(), bytes);
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode_message(&bytes);
        }
    }
}
