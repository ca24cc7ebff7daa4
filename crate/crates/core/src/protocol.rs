//! Length-prefixed binary frames between the split-inference client and
//! server.
//!
//! ```text
//! magic "SSIP" | version u16 | type u8 | payload_len u32 | payload
//! ```
//!
//! All integers are little-endian. Payloads:
//!
//! * request (1): `session u64 | n u32 | n x token u32`
//! * response (2): `session u64 | compute_us u64 | n u32 | n x token u32`
//! * error (3): `code u16 | len u32 | len bytes UTF-8 message`

use std::io::{ErrorKind, Read, Write};

use crate::codec::Cursor;
use crate::error::{Error, Result};
use crate::store::TokenId;

pub const FRAME_MAGIC: &[u8; 4] = b"SSIP";
pub const PROTOCOL_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 11;
/// Payloads above this size are rejected before allocation.
pub const MAX_PAYLOAD: u32 = 64 << 20;
/// Token id transmitted for words outside the vocabulary.
pub const OOV_TOKEN_ID: TokenId = u32::MAX;

pub const ERR_UNSUPPORTED_VERSION: u16 = 1;
pub const ERR_MALFORMED_FRAME: u16 = 2;
pub const ERR_BAD_TOKEN: u16 = 3;
pub const ERR_UNEXPECTED_FRAME: u16 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceRequest {
    pub session_id: u64,
    pub token_ids: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceResponse {
    pub session_id: u64,
    pub output_ids: Vec<TokenId>,
    pub server_compute_micros: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorFrame {
    pub code: u16,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameBody {
    Request(InferenceRequest),
    Response(InferenceResponse),
    Error(ErrorFrame),
}

impl FrameBody {
    pub fn type_code(&self) -> u8 {
        match self {
            FrameBody::Request(_) => 1,
            FrameBody::Response(_) => 2,
            FrameBody::Error(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub version: u16,
    pub body: FrameBody,
}

impl Frame {
    pub fn new(body: FrameBody) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            body,
        }
    }

    pub fn request(session_id: u64, token_ids: Vec<TokenId>) -> Self {
        Self::new(FrameBody::Request(InferenceRequest {
            session_id,
            token_ids,
        }))
    }

    pub fn error(code: u16, message: impl Into<String>) -> Self {
        Self::new(FrameBody::Error(ErrorFrame {
            code,
            message: message.into(),
        }))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        match &self.body {
            FrameBody::Request(r) => {
                payload.extend_from_slice(&r.session_id.to_le_bytes());
                put_ids(&mut payload, &r.token_ids);
            }
            FrameBody::Response(r) => {
                payload.extend_from_slice(&r.session_id.to_le_bytes());
                payload.extend_from_slice(&r.server_compute_micros.to_le_bytes());
                put_ids(&mut payload, &r.output_ids);
            }
            FrameBody::Error(e) => {
                payload.extend_from_slice(&e.code.to_le_bytes());
                payload.extend_from_slice(&(e.message.len() as u32).to_le_bytes());
                payload.extend_from_slice(e.message.as_bytes());
            }
        }
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.body.type_code());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Decodes exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (version, kind, len) = parse_header(bytes)?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != len as usize {
            return Err(Error::Protocol(format!(
                "payload length {} does not match header {}",
                payload.len(),
                len
            )));
        }
        decode_payload(version, kind, payload)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    /// Reads one frame. Returns `Ok(None)` on a clean end of stream before
    /// any header byte.
    pub fn read_from(mut r: impl Read) -> Result<Option<Self>> {
        let mut header = [0u8; HEADER_LEN];
        match read_full(&mut r, &mut header)? {
            0 => return Ok(None),
            n if n < HEADER_LEN => {
                return Err(Error::Protocol(
                    "connection closed inside frame header".into(),
                ))
            }
            _ => {}
        }
        let (version, kind, len) = parse_header(&header)?;
        let mut payload = vec![0u8; len as usize];
        if read_full(&mut r, &mut payload)? < payload.len() {
            return Err(Error::Protocol(
                "connection closed inside frame payload".into(),
            ));
        }
        decode_payload(version, kind, &payload).map(Some)
    }
}

fn put_ids(buf: &mut Vec<u8>, ids: &[TokenId]) {
    buf.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    for id in ids {
        buf.extend_from_slice(&id.to_le_bytes());
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

fn parse_header(bytes: &[u8]) -> Result<(u16, u8, u32)> {
    let mut cur = Cursor::new(bytes);
    let proto = |e: Error| Error::Protocol(e.to_string());
    if cur.bytes(4).map_err(proto)? != FRAME_MAGIC {
        return Err(Error::Protocol("bad frame magic".into()));
    }
    let version = cur.u16().map_err(proto)?;
    let kind = cur.u8().map_err(proto)?;
    let len = cur.u32().map_err(proto)?;
    if !(1..=3).contains(&kind) {
        return Err(Error::Protocol(format!("unknown frame type {kind}")));
    }
    if len > MAX_PAYLOAD {
        return Err(Error::Protocol(format!(
            "payload of {len} bytes exceeds limit"
        )));
    }
    Ok((version, kind, len))
}

fn decode_payload(version: u16, kind: u8, payload: &[u8]) -> Result<Frame> {
    let proto = |e: Error| Error::Protocol(e.to_string());
    let mut cur = Cursor::new(payload);
    let read_ids = |cur: &mut Cursor<'_>| -> Result<Vec<TokenId>> {
        let n = cur.u32().map_err(proto)? as usize;
        if n > cur.remaining() / 4 {
            return Err(Error::Protocol(format!("token count {n} exceeds payload")));
        }
        (0..n).map(|_| cur.u32().map_err(proto)).collect()
    };
    let body = match kind {
        1 => {
            let session_id = cur.u64().map_err(proto)?;
            FrameBody::Request(InferenceRequest {
                session_id,
                token_ids: read_ids(&mut cur)?,
            })
        }
        2 => {
            let session_id = cur.u64().map_err(proto)?;
            let server_compute_micros = cur.u64().map_err(proto)?;
            FrameBody::Response(InferenceResponse {
                session_id,
                output_ids: read_ids(&mut cur)?,
                server_compute_micros,
            })
        }
        _ => {
            let code = cur.u16().map_err(proto)?;
            let len = cur.u32().map_err(proto)? as usize;
            let message = std::str::from_utf8(cur.bytes(len).map_err(proto)?)
                .map_err(|_| Error::Protocol("error message is not UTF-8".into()))?
                .to_owned();
            FrameBody::Error(ErrorFrame { code, message })
        }
    };
    if cur.remaining() != 0 {
        return Err(Error::Protocol(format!(
            "{} unexpected trailing payload bytes",
            cur.remaining()
        )));
    }
    Ok(Frame { version, body })
}
