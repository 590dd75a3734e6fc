//! Length-prefixed framing for carrying sealed frames over a byte stream.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Upper bound on a single message; larger prefixes are treated as corruption.
pub const MAX_MESSAGE_LEN: usize = 1 << 30;

pub fn write_message<W: Write>(w: &mut W, bytes: &[u8]) -> Result<()> {
    let len = u32::try_from(bytes.len())
        .map_err(|_| Error::EncodingOverflow(format!("message of {} bytes", bytes.len())))?;
    w.write_all(&len.to_le_bytes())
        .and_then(|_| w.write_all(bytes))
        .and_then(|_| w.flush())
        .map_err(|e| Error::Transport(e.to_string()))
}

pub fn read_message<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut prefix = [0u8; 4];
    r.read_exact(&mut prefix)
        .map_err(|e| Error::Transport(e.to_string()))?;
    let len = u32::from_le_bytes(prefix) as usize;
    if len > MAX_MESSAGE_LEN {
        return Err(Error::Transport(format!(
            "message length {len} exceeds limit"
        )));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Transport(e.to_string()))?;
    Ok(buf)
}
