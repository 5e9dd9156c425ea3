//! Wire format for all client/server traffic.
//!
//! Every message is a 10-byte envelope followed by its payload:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "NARP"
//! 4       1     version (1)
//! 5       1     msg_type
//! 6       4     payload_len (u32, little-endian)
//! 10      n     payload
//! ```
//!
//! Payload fields are written in declaration order, little-endian. On a byte
//! stream the envelope's `payload_len` delimits messages; over a
//! message-oriented socket each socket message carries exactly one envelope.

use std::io::{self, Read};

use thiserror::Error;

use crate::geometry::{check_rotation, CameraIntrinsics, GeometryError, Pose};

pub const MAGIC: [u8; 4] = *b"NARP";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Upper bound accepted by the stream reader; a full-HD RGB frame is ~6 MiB.
pub const MAX_PAYLOAD_LEN: u32 = 64 << 20;

pub const POSE_PAYLOAD_LEN: usize = 1 + 8 + 16 * 4;
pub const INTRINSICS_PAYLOAD_LEN: usize = 1 + 2 + 2 + 4 * 4;
pub const HEARTBEAT_PAYLOAD_LEN: usize = 8;
const FRAME_FIXED_LEN: usize = 1 + 8 + 4 + 2 + 2 + 1 + 4;

/// Small integer naming one viewpoint stream; 0 is the left eye and 1 the
/// right eye by convention.
pub type ViewpointLabel = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    Hello = 0x01,
    Intrinsics = 0x02,
    Pose = 0x03,
    Frame = 0x04,
    Ping = 0x05,
    Pong = 0x06,
}

impl TryFrom<u8> for MessageType {
    type Error = DecodeError;

    fn try_from(v: u8) -> Result<Self, DecodeError> {
        Ok(match v {
            0x01 => Self::Hello,
            0x02 => Self::Intrinsics,
            0x03 => Self::Pose,
            0x04 => Self::Frame,
            0x05 => Self::Ping,
            0x06 => Self::Pong,
            other => return Err(DecodeError::UnknownType(other)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ImageEncoding {
    RawRgb8 = 0,
    Png = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelloMessage {
    pub client_id: String,
    pub viewpoint_labels: Vec<ViewpointLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntrinsicsMessage {
    pub viewpoint_label: ViewpointLabel,
    pub intrinsics: CameraIntrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePacket {
    pub viewpoint_label: ViewpointLabel,
    pub timestamp_ms: u64,
    /// Row-major camera-to-world matrix, meters.
    pub pose: [f32; 16],
}

impl PosePacket {
    pub fn new(viewpoint_label: ViewpointLabel, timestamp_ms: u64, pose: &Pose) -> Self {
        Self { viewpoint_label, timestamp_ms, pose: pose.to_row_major() }
    }

    pub fn to_pose(&self) -> Result<Pose, GeometryError> {
        Pose::from_row_major(&self.pose)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePacket {
    pub viewpoint_label: ViewpointLabel,
    pub echoed_timestamp_ms: u64,
    pub render_time_ms: f32,
    pub width_px: u16,
    pub height_px: u16,
    pub encoding: ImageEncoding,
    pub image: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(HelloMessage),
    Intrinsics(IntrinsicsMessage),
    Pose(PosePacket),
    Frame(FramePacket),
    Ping { nonce: u64 },
    Pong { nonce: u64 },
}

impl Message {
    pub fn message_type(&self) -> MessageType {
        match self {
            Message::Hello(_) => MessageType::Hello,
            Message::Intrinsics(_) => MessageType::Intrinsics,
            Message::Pose(_) => MessageType::Pose,
            Message::Frame(_) => MessageType::Frame,
            Message::Ping { .. } => MessageType::Ping,
            Message::Pong { .. } => MessageType::Pong,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invariant violation: {0}")]
pub struct InvariantViolation(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("bad magic {0:02X?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type 0x{0:02X}")]
    UnknownType(u8),
    #[error("truncated: need {needed} bytes, have {available}")]
    TruncatedPayload { needed: usize, available: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error(transparent)]
    Invalid(#[from] InvariantViolation),
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

fn violation<T>(msg: impl Into<String>) -> Result<T, InvariantViolation> {
    Err(InvariantViolation(msg.into()))
}

fn validate_labels(labels: &[ViewpointLabel]) -> Result<(), InvariantViolation> {
    if labels.is_empty() {
        return violation("viewpoint_count must be at least 1");
    }
    if labels.len() > usize::from(u8::MAX) {
        return violation("too many viewpoint labels");
    }
    let mut seen = [false; 256];
    for &l in labels {
        if std::mem::replace(&mut seen[usize::from(l)], true) {
            return violation(format!("duplicate viewpoint label {l}"));
        }
    }
    Ok(())
}

/// Pose packet checks: bottom row (0,0,0,1) within 1e-6 and an orthonormal,
/// right-handed rotation block within 1e-4.
pub fn validate_pose_matrix(m: &[f32; 16]) -> Result<(), InvariantViolation> {
    if !m.iter().all(|x| x.is_finite()) {
        return violation("pose matrix has non-finite entries");
    }
    let bottom = [m[12], m[13], m[14], m[15]];
    if bottom.iter().zip([0.0, 0.0, 0.0, 1.0]).any(|(a, b)| (f64::from(*a) - b).abs() > 1e-6) {
        return violation("pose bottom row must be (0, 0, 0, 1)");
    }
    let r = nalgebra::Matrix3::from_fn(|i, j| f64::from(m[i * 4 + j]));
    check_rotation(&r, 1e-4).map_err(InvariantViolation)
}

fn validate_frame(f: &FramePacket) -> Result<(), InvariantViolation> {
    if f.encoding == ImageEncoding::RawRgb8 {
        let expected = 3 * usize::from(f.width_px) * usize::from(f.height_px);
        if f.image.len() != expected {
            return violation(format!(
                "RAW_RGB8 image is {} bytes, expected 3×{}×{} = {expected}",
                f.image.len(),
                f.width_px,
                f.height_px
            ));
        }
    }
    if u32::try_from(f.image.len()).is_err() {
        return violation("image larger than 4 GiB");
    }
    Ok(())
}

pub fn validate(msg: &Message) -> Result<(), InvariantViolation> {
    match msg {
        Message::Hello(h) => {
            if h.client_id.len() > usize::from(u16::MAX) {
                return violation("client_id longer than 65535 bytes");
            }
            validate_labels(&h.viewpoint_labels)
        }
        Message::Intrinsics(i) => i.intrinsics.validate().map_err(|e| InvariantViolation(e.to_string())),
        Message::Pose(p) => validate_pose_matrix(&p.pose),
        Message::Frame(f) => validate_frame(f),
        Message::Ping { .. } | Message::Pong { .. } => Ok(()),
    }
}

pub fn encode_message(msg: &Message) -> Result<Vec<u8>, InvariantViolation> {
    validate(msg)?;
    let mut payload = Vec::with_capacity(payload_capacity(msg));
    match msg {
        Message::Hello(h) => {
            payload.extend_from_slice(&(h.client_id.len() as u16).to_le_bytes());
            payload.extend_from_slice(h.client_id.as_bytes());
            payload.push(h.viewpoint_labels.len() as u8);
            payload.extend_from_slice(&h.viewpoint_labels);
        }
        Message::Intrinsics(m) => {
            let i = &m.intrinsics;
            payload.push(m.viewpoint_label);
            payload.extend_from_slice(&i.width_px.to_le_bytes());
            payload.extend_from_slice(&i.height_px.to_le_bytes());
            for v in [i.fx, i.fy, i.cx, i.cy] {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        Message::Pose(p) => {
            payload.push(p.viewpoint_label);
            payload.extend_from_slice(&p.timestamp_ms.to_le_bytes());
            for v in p.pose {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        Message::Frame(f) => {
            payload.push(f.viewpoint_label);
            payload.extend_from_slice(&f.echoed_timestamp_ms.to_le_bytes());
            payload.extend_from_slice(&f.render_time_ms.to_le_bytes());
            payload.extend_from_slice(&f.width_px.to_le_bytes());
            payload.extend_from_slice(&f.height_px.to_le_bytes());
            payload.push(f.encoding as u8);
            payload.extend_from_slice(&(f.image.len() as u32).to_le_bytes());
            payload.extend_from_slice(&f.image);
        }
        Message::Ping { nonce } | Message::Pong { nonce } => payload.extend_from_slice(&nonce.to_le_bytes()),
    }
    let len = u32::try_from(payload.len()).map_err(|_| InvariantViolation("payload exceeds u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.message_type() as u8);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

fn payload_capacity(msg: &Message) -> usize {
    match msg {
        Message::Hello(h) => 3 + h.client_id.len() + h.viewpoint_labels.len(),
        Message::Intrinsics(_) => INTRINSICS_PAYLOAD_LEN,
        Message::Pose(_) => POSE_PAYLOAD_LEN,
        Message::Frame(f) => FRAME_FIXED_LEN + f.image.len(),
        Message::Ping { .. } | Message::Pong { .. } => HEARTBEAT_PAYLOAD_LEN,
    }
}

/// Parsed and checked envelope header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub msg_type: MessageType,
    pub payload_len: u32,
}

/// Validates the first bytes of an envelope. Fewer than [`HEADER_LEN`] bytes
/// with a matching magic prefix is reported as truncation.
pub fn decode_header(bytes: &[u8]) -> Result<Header, DecodeError> {
    let n = bytes.len().min(4);
    if bytes[..n] != MAGIC[..n] {
        return Err(DecodeError::BadMagic(bytes[..n].to_vec()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::TruncatedPayload { needed: HEADER_LEN, available: bytes.len() });
    }
    if bytes[4] != VERSION {
        return Err(DecodeError::UnsupportedVersion(bytes[4]));
    }
    let msg_type = MessageType::try_from(bytes[5])?;
    let payload_len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
    Ok(Header { msg_type, payload_len })
}

/// Decodes exactly one message occupying all of `bytes`.
pub fn decode_message(bytes: &[u8]) -> Result<Message, DecodeError> {
    let header = decode_header(bytes)?;
    let needed = HEADER_LEN + header.payload_len as usize;
    if bytes.len() < needed {
        return Err(DecodeError::TruncatedPayload { needed, available: bytes.len() });
    }
    if bytes.len() > needed {
        return Err(DecodeError::LengthMismatch(format!(
            "{} trailing bytes after a {}-byte payload",
            bytes.len() - needed,
            header.payload_len
        )));
    }
    decode_payload(header.msg_type, &bytes[HEADER_LEN..])
}

/// Reads one envelope from a byte stream. Returns `Ok(None)` on a clean EOF at
/// a message boundary.
pub fn read_message<R: Read>(reader: &mut R) -> Result<Option<Message>, ReadError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let h = decode_header(&header)?;
    if h.payload_len > MAX_PAYLOAD_LEN {
        return Err(DecodeError::LengthMismatch(format!(
            "payload_len {} exceeds the {MAX_PAYLOAD_LEN}-byte limit",
            h.payload_len
        ))
        .into());
    }
    let mut payload = vec![0u8; h.payload_len as usize];
    reader.read_exact(&mut payload)?;
    Ok(Some(decode_payload(h.msg_type, &payload)?))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::LengthMismatch(format!(
                "payload of {} bytes ends inside a field at offset {} (needs {n} more)",
                self.buf.len(),
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32, DecodeError> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn finish(self) -> Result<(), DecodeError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            extra => Err(DecodeError::LengthMismatch(format!("{extra} unparsed payload bytes"))),
        }
    }
}

fn decode_payload(msg_type: MessageType, payload: &[u8]) -> Result<Message, DecodeError> {
    let mut c = Cursor { buf: payload, pos: 0 };
    let msg = match msg_type {
        MessageType::Hello => {
            let id_len = usize::from(c.u16()?);
            let id = std::str::from_utf8(c.take(id_len)?)
                .map_err(|e| InvariantViolation(format!("client_id is not UTF-8: {e}")))?
                .to_owned();
            let count = usize::from(c.u8()?);
            let labels = c.take(count)?.to_vec();
            Message::Hello(HelloMessage { client_id: id, viewpoint_labels: labels })
        }
        MessageType::Intrinsics => {
            let viewpoint_label = c.u8()?;
            let width_px = c.u16()?;
            let height_px = c.u16()?;
            let (fx, fy, cx, cy) = (c.f32()?, c.f32()?, c.f32()?, c.f32()?);
            let intrinsics = CameraIntrinsics { width_px, height_px, fx, fy, cx, cy };
            Message::Intrinsics(IntrinsicsMessage { viewpoint_label, intrinsics })
        }
        MessageType::Pose => {
            let viewpoint_label = c.u8()?;
            let timestamp_ms = c.u64()?;
            let mut pose = [0f32; 16];
            for v in &mut pose {
                *v = c.f32()?;
            }
            Message::Pose(PosePacket { viewpoint_label, timestamp_ms, pose })
        }
        MessageType::Frame => {
            let viewpoint_label = c.u8()?;
            let echoed_timestamp_ms = c.u64()?;
            let render_time_ms = c.f32()?;
            let width_px = c.u16()?;
            let height_px = c.u16()?;
            let encoding = match c.u8()? {
                0 => ImageEncoding::RawRgb8,
                1 => ImageEncoding::Png,
                other => return Err(InvariantViolation(format!("unknown image encoding {other}")).into()),
            };
            let image_len = c.u32()? as usize;
            let image = c.take(image_len)?.to_vec();
            Message::Frame(FramePacket {
                viewpoint_label,
                echoed_timestamp_ms,
                render_time_ms,
                width_px,
                height_px,
                encoding,
                image,
            })
        }
        MessageType::Ping => Message::Ping { nonce: c.u64()? },
        MessageType::Pong => Message::Pong { nonce: c.u64()? },
    };
    c.finish()?;
    validate(&msg)?;
    Ok(msg)
}
