use super::Message;
use std::io::Read;
use thiserror::Error;

/// Hard payload cap; frames above this are rejected on both paths.
pub const MAX_FRAME_BYTES: usize = 1 << 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame payload exceeds {MAX_FRAME_BYTES} bytes")]
    FrameTooLarge,
    #[error("incomplete frame")]
    Incomplete,
    #[error("malformed payload: {0}")]
    Parse(String),
}

/// Encodes one message as a 4-byte big-endian length header plus a UTF-8
/// JSON payload.
pub fn encode_frame(msg: &Message) -> Result<Vec<u8>, FrameError> {
    let payload = serde_json::to_vec(msg).map_err(|e| FrameError::Parse(e.to_string()))?;
    if payload.len() > MAX_FRAME_BYTES {
        return Err(FrameError::FrameTooLarge);
    }
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Decodes one frame from the front of `bytes`, returning the message and
/// the number of bytes consumed. Total over arbitrary input: never panics.
pub fn decode_frame(bytes: &[u8]) -> Result<(Message, usize), FrameError> {
    if bytes.len() < 4 {
        return Err(FrameError::Incomplete);
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(FrameError::FrameTooLarge);
    }
    if bytes.len() < 4 + len {
        return Err(FrameError::Incomplete);
    }
    let msg = serde_json::from_slice(&bytes[4..4 + len])
        .map_err(|e| FrameError::Parse(e.to_string()))?;
    Ok((msg, 4 + len))
}

/// Reads exactly one frame from a stream. Returns `Ok(None)` on clean EOF
/// at a frame boundary.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Option<Message>, super::BusError> {
    let mut header = [0u8; 4];
    match reader.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(FrameError::FrameTooLarge.into());
    }
    let mut payload = vec![0u8; len];
    reader.read_exact(&mut payload).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            super::BusError::Frame(FrameError::Incomplete)
        } else {
            e.into()
        }
    })?;
    let msg =
        serde_json::from_slice(&payload).map_err(|e| FrameError::Parse(e.to_string()))?;
    Ok(Some(msg))
}
