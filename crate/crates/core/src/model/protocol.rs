//! Framed little-endian scorer protocol.
//!
//! ```text
//! frame    = "SJSC" | version u16 | opcode u16 | seq u64 | payload_len u64 | payload
//! score    = n_images u32 | height u32 | width u32 | channels u32 | space u8 | f32 data
//! response = n_images u32 | n_classes u32 | f32 scores, row-major
//! ```
//!
//! Capabilities replies carry a JSON object. Servers report failures with an
//! error frame (opcode `0xFFFF`) holding a UTF-8 message.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageTensor};

use super::{ModelAdapter, ScoreRequest};

pub const MAGIC: [u8; 4] = *b"SJSC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;
/// Frames larger than this are rejected before allocation.
pub const MAX_PAYLOAD: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Opcode {
    Echo,
    Score,
    Capabilities,
    Error,
}

impl Opcode {
    pub fn code(self) -> u16 {
        match self {
            Opcode::Echo => 0,
            Opcode::Score => 1,
            Opcode::Capabilities => 2,
            Opcode::Error => 0xFFFF,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            0 => Some(Opcode::Echo),
            1 => Some(Opcode::Score),
            2 => Some(Opcode::Capabilities),
            0xFFFF => Some(Opcode::Error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: Opcode,
    pub seq: u64,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(opcode: Opcode, seq: u64, payload: Vec<u8>) -> Self {
        Self {
            opcode,
            seq,
            payload,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.payload.len());
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&self.opcode.code().to_le_bytes());
        buf.extend_from_slice(&self.seq.to_le_bytes());
        buf.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        buf.extend_from_slice(&self.payload);
        buf
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }
}

/// Outcome of reading one frame off a stream.
#[derive(Debug)]
pub enum ReadOutcome {
    Frame(Frame),
    /// Stream closed cleanly before a new header started.
    Closed,
    /// Header was readable but invalid. The payload (if its length was sane)
    /// has been consumed so the stream stays aligned.
    Malformed { seq: u64, reason: String },
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn read_frame<R: Read>(r: &mut R) -> io::Result<ReadOutcome> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_full(r, &mut header)?;
    if got == 0 {
        return Ok(ReadOutcome::Closed);
    }
    if got < HEADER_LEN {
        return Err(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            "stream closed inside a frame header",
        ));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    let opcode = u16::from_le_bytes([header[6], header[7]]);
    let seq = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let len = u64::from_le_bytes(header[16..24].try_into().unwrap());

    if len > MAX_PAYLOAD {
        return Ok(ReadOutcome::Malformed {
            seq,
            reason: format!("payload length {len} exceeds limit"),
        });
    }
    let mut payload = vec![0u8; len as usize];
    if read_full(r, &mut payload)? < payload.len() {
        return Err(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            "stream closed inside a frame payload",
        ));
    }

    if header[..4] != MAGIC {
        return Ok(ReadOutcome::Malformed {
            seq,
            reason: format!("bad magic {:02x?}", &header[..4]),
        });
    }
    if version != VERSION {
        return Ok(ReadOutcome::Malformed {
            seq,
            reason: format!("unsupported version {version}"),
        });
    }
    match Opcode::from_code(opcode) {
        Some(opcode) => Ok(ReadOutcome::Frame(Frame {
            opcode,
            seq,
            payload,
        })),
        None => Ok(ReadOutcome::Malformed {
            seq,
            reason: format!("unknown opcode {opcode}"),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub deterministic: bool,
    pub input_space: WireSpace,
    pub n_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireSpace {
    Raw01,
    Normalized,
}

impl From<ColorSpace> for WireSpace {
    fn from(s: ColorSpace) -> Self {
        match s {
            ColorSpace::Raw01 => WireSpace::Raw01,
            ColorSpace::Normalized => WireSpace::Normalized,
        }
    }
}

impl From<WireSpace> for ColorSpace {
    fn from(s: WireSpace) -> Self {
        match s {
            WireSpace::Raw01 => ColorSpace::Raw01,
            WireSpace::Normalized => ColorSpace::Normalized,
        }
    }
}

pub fn encode_score_request(batch: &[ImageTensor]) -> Result<Vec<u8>> {
    let first = batch
        .first()
        .ok_or_else(|| Error::invalid_argument("empty batch"))?;
    let values: usize = batch.iter().map(|i| i.data().len()).sum();
    let mut buf = Vec::with_capacity(17 + 4 * values);
    buf.extend_from_slice(&(batch.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(first.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(first.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(first.channels() as u32).to_le_bytes());
    buf.push(match first.space() {
        ColorSpace::Raw01 => 0,
        ColorSpace::Normalized => 1,
    });
    for img in batch {
        if !img.same_shape(first) || img.space() != first.space() {
            return Err(Error::invalid_argument("batch mixes shapes or spaces"));
        }
        for v in img.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

fn u32_at(buf: &[u8], at: usize) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Protocol("payload too short".into()))
}

fn f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

pub fn decode_score_request(payload: &[u8]) -> Result<Vec<ImageTensor>> {
    let n = u32_at(payload, 0)? as usize;
    let h = u32_at(payload, 4)? as usize;
    let w = u32_at(payload, 8)? as usize;
    let c = u32_at(payload, 12)? as usize;
    let space = match payload.get(16) {
        Some(0) => ColorSpace::Raw01,
        Some(1) => ColorSpace::Normalized,
        Some(s) => return Err(Error::Protocol(format!("unknown space tag {s}"))),
        None => return Err(Error::Protocol("payload too short".into())),
    };
    let per_image = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::Protocol("image dims overflow".into()))?;
    let expected = per_image
        .checked_mul(n)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(17))
        .ok_or_else(|| Error::Protocol("image dims overflow".into()))?;
    if payload.len() != expected || n == 0 {
        return Err(Error::Protocol(format!(
            "score request payload is {} bytes, expected {expected} for {n} images",
            payload.len()
        )));
    }
    payload[17..]
        .chunks_exact(per_image * 4)
        .map(|chunk| {
            ImageTensor::new(h, w, c, f32s(chunk), space)
                .map_err(|e| Error::Protocol(format!("bad image in request: {e}")))
        })
        .collect()
}

pub fn encode_score_response(rows: &[Vec<f32>]) -> Vec<u8> {
    let n_classes = rows.first().map_or(0, Vec::len);
    let mut buf = Vec::with_capacity(8 + 4 * rows.len() * n_classes);
    buf.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(n_classes as u32).to_le_bytes());
    for v in rows.iter().flatten() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_score_response(payload: &[u8]) -> Result<Vec<Vec<f32>>> {
    let n = u32_at(payload, 0)? as usize;
    let k = u32_at(payload, 4)? as usize;
    let expected = n
        .checked_mul(k)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(8))
        .ok_or_else(|| Error::Protocol("response dims overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Protocol(format!(
            "score response payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    if k == 0 {
        return Ok(vec![Vec::new(); n]);
    }
    Ok(f32s(&payload[8..]).chunks(k).map(<[f32]>::to_vec).collect())
}

fn error_frame(seq: u64, msg: &str) -> Frame {
    Frame::new(Opcode::Error, seq, msg.as_bytes().to_vec())
}

/// Answers one request frame with `model`.
pub fn handle_frame(model: &dyn ModelAdapter, frame: &Frame) -> Frame {
    match frame.opcode {
        Opcode::Echo => Frame::new(Opcode::Echo, frame.seq, frame.payload.clone()),
        Opcode::Capabilities => {
            let caps = Capabilities {
                deterministic: model.deterministic(),
                input_space: model.input_space().into(),
                n_classes: model.n_classes(),
            };
            let json = serde_json::to_vec(&caps).expect("capabilities serialize");
            Frame::new(Opcode::Capabilities, frame.seq, json)
        }
        Opcode::Score => {
            let result = decode_score_request(&frame.payload).and_then(|batch| {
                model.score_batch(&ScoreRequest::new(&batch, 0)?)
            });
            match result {
                Ok(vectors) => {
                    let rows: Vec<Vec<f32>> = vectors.into_iter().map(|v| v.scores).collect();
                    Frame::new(Opcode::Score, frame.seq, encode_score_response(&rows))
                }
                Err(e) => error_frame(frame.seq, &e.to_string()),
            }
        }
        Opcode::Error => error_frame(frame.seq, "error frames are not requests"),
    }
}

/// Serves requests from `reader` until the stream closes. Malformed frames
/// get an error frame back and the connection stays open.
pub fn serve<R: Read, W: Write>(model: &dyn ModelAdapter, reader: &mut R, writer: &mut W) -> Result<()> {
    loop {
        match read_frame(reader)? {
            ReadOutcome::Closed => return Ok(()),
            ReadOutcome::Malformed { seq, reason } => {
                error_frame(seq, &reason).write_to(writer)?;
            }
            ReadOutcome::Frame(frame) => {
                handle_frame(model, &frame).write_to(writer)?;
            }
        }
    }
}

/// Accepts connections forever, one thread per connection.
pub fn serve_tcp(
    model: std::sync::Arc<dyn ModelAdapter>,
    listener: std::net::TcpListener,
) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let model = model.clone();
        std::thread::spawn(move || {
            let mut reader = match stream.try_clone() {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("scorer connection setup failed: {e}");
                    return;
                }
            };
            let mut writer = stream;
            if let Err(e) = serve(model.as_ref(), &mut reader, &mut writer) {
                log::warn!("scorer connection closed: {e}");
            }
        });
    }
    Ok(())
}
