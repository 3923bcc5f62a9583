//! Length-prefixed framing shared by the TCP and WebSocket listeners.
//!
//! A frame is a 4-byte big-endian payload length followed by the message as
//! canonical JSON. WebSocket text messages carry the payload alone.

use sceneweave_core::canonical;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;
pub const PREFIX_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    UserRequest,
    Speech,
    Snapshot,
    Event,
    Warning,
    Usage,
    HandPose,
    Pick,
    Release,
    ConfigAck,
}

impl MessageType {
    pub const ALL: [MessageType; 10] = [
        MessageType::UserRequest,
        MessageType::Speech,
        MessageType::Snapshot,
        MessageType::Event,
        MessageType::Warning,
        MessageType::Usage,
        MessageType::HandPose,
        MessageType::Pick,
        MessageType::Release,
        MessageType::ConfigAck,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub session_id: String,
    pub sequence: u64,
    pub body: Value,
}

impl WireMessage {
    pub fn new(kind: MessageType, session_id: impl Into<String>, sequence: u64, body: Value) -> Self {
        WireMessage { kind, session_id: session_id.into(), sequence, body }
    }

    pub fn to_canonical_json(&self) -> String {
        canonical::to_string(self)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame of {len} bytes exceeds the {MAX_FRAME_LEN} byte limit")]
    FrameTooLarge { len: usize },
    #[error("truncated frame: need {needed} bytes, have {available}")]
    TruncatedFrame { needed: usize, available: usize },
    #[error("malformed message: {0}")]
    Malformed(String),
}

/// Parses one message payload (no prefix).
pub fn decode_body(payload: &[u8]) -> Result<WireMessage, FrameError> {
    let text = std::str::from_utf8(payload).map_err(|e| FrameError::Malformed(e.to_string()))?;
    serde_json::from_str(text).map_err(|e| FrameError::Malformed(e.to_string()))
}

pub fn encode_frame(message: &WireMessage) -> Result<Vec<u8>, FrameError> {
    let payload = message.to_canonical_json();
    if payload.len() > MAX_FRAME_LEN {
        return Err(FrameError::FrameTooLarge { len: payload.len() });
    }
    let mut out = Vec::with_capacity(PREFIX_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload.as_bytes());
    Ok(out)
}

/// Decodes the frame at the start of `bytes` and returns it with the number
/// of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(WireMessage, usize), FrameError> {
    if bytes.len() < PREFIX_LEN {
        return Err(FrameError::TruncatedFrame { needed: PREFIX_LEN, available: bytes.len() });
    }
    let len = u32::from_be_bytes(bytes[..PREFIX_LEN].try_into().expect("four bytes")) as usize;
    if len > MAX_FRAME_LEN {
        return Err(FrameError::FrameTooLarge { len });
    }
    let end = PREFIX_LEN + len;
    if bytes.len() < end {
        return Err(FrameError::TruncatedFrame { needed: end, available: bytes.len() });
    }
    Ok((decode_body(&bytes[PREFIX_LEN..end])?, end))
}

/// What a stream reader saw.
#[derive(Debug)]
pub enum ReadOutcome {
    Message(WireMessage),
    /// The frame was skipped; the stream is still aligned.
    Rejected(FrameError),
    Closed,
}

/// Reads one frame. Oversized and malformed frames are consumed and
/// reported so the connection can carry on.
pub async fn read_frame<R: AsyncRead + Unpin>(reader: &mut R) -> std::io::Result<ReadOutcome> {
    let mut prefix = [0u8; PREFIX_LEN];
    match reader.read_exact(&mut prefix).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(ReadOutcome::Closed),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME_LEN {
        let skipped = tokio::io::copy(&mut reader.take(len as u64), &mut tokio::io::sink()).await?;
        if (skipped as usize) < len {
            return Ok(ReadOutcome::Closed);
        }
        return Ok(ReadOutcome::Rejected(FrameError::FrameTooLarge { len }));
    }
    let mut payload = vec![0u8; len];
    match reader.read_exact(&mut payload).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(ReadOutcome::Closed),
        Err(e) => return Err(e),
    }
    Ok(match decode_body(&payload) {
        Ok(m) => ReadOutcome::Message(m),
        Err(e) => ReadOutcome::Rejected(e),
    })
}

pub async fn write_frame<W: AsyncWrite + Unpin>(writer: &mut W, message: &WireMessage) -> std::io::Result<()> {
    let bytes = encode_frame(message).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    writer.write_all(&bytes).await?;
    writer.flush().await
}
