//! Binary frame layout: version, step, width, height, then row-major storage
//! as `f32`, all little-endian.

use kinon::NetworkState;

pub const FRAME_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 17;

#[derive(Clone, Debug, PartialEq)]
pub struct FrameMessage {
    pub version: u8,
    pub step: u64,
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("frame too short for its header: {0} bytes")]
    Truncated(usize),
    #[error("unsupported frame version {0}")]
    Version(u8),
    #[error("frame of {width}x{height} needs {expected} bytes, got {actual}")]
    Length { width: u32, height: u32, expected: usize, actual: usize },
}

/// Byte length of a frame with `width * height` values.
pub fn frame_len(width: u32, height: u32) -> usize {
    HEADER_LEN + 4 * width as usize * height as usize
}

/// Grid dimensions of a state. Rings and edge lists are one row.
pub fn dimensions(state: &NetworkState) -> (u32, u32) {
    let (w, h) = state.topology().frame_dims();
    (w as u32, h as u32)
}

impl FrameMessage {
    pub fn from_state(state: &NetworkState) -> Self {
        let (width, height) = dimensions(state);
        FrameMessage { version: FRAME_VERSION, step: state.step(), width, height, values: state.storage().iter().map(|&v| v as f32).collect() }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(frame_len(self.width, self.height));
        out.push(self.version);
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError::Truncated(bytes.len()));
        }
        let version = bytes[0];
        if version != FRAME_VERSION {
            return Err(FrameError::Version(version));
        }
        let step = u64::from_le_bytes(bytes[1..9].try_into().unwrap());
        let width = u32::from_le_bytes(bytes[9..13].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[13..17].try_into().unwrap());
        let expected = frame_len(width, height);
        if bytes.len() != expected {
            return Err(FrameError::Length { width, height, expected, actual: bytes.len() });
        }
        let values = bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(FrameMessage { version, step, width, height, values })
    }
}
