//! Portable Float Map reader and writer.
//!
//! Header: `PF` (3 channels) or `Pf` (1 channel), `width height`, then a
//! scale whose sign gives the byte order (negative = little-endian). Rows
//! are stored bottom to top.

use std::path::Path;

use super::IoError;
use crate::buffer::ImageBuffer;

/// Encodes a 1- or 3-channel buffer as little-endian PFM.
pub fn encode_pfm(buf: &ImageBuffer) -> Vec<u8> {
    let ch = buf.channels();
    assert!(ch == 1 || ch == 3, "PFM holds 1 or 3 channels, got {ch}");
    let tag = if ch == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", buf.width(), buf.height()).into_bytes();
    let row_len = buf.width() * ch;
    for row in buf.data().chunks(row_len.max(1)).rev() {
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<ImageBuffer, IoError> {
    let bad = |msg: &str| IoError::Decode {
        path: path.to_path_buf(),
        message: msg.to_string(),
    };
    // four whitespace-separated header tokens, then one whitespace byte
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PFM header"));
        }
        let tok =
            std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII PFM header"))?;
        tokens.push(tok.to_string());
    }
    if pos >= bytes.len() {
        return Err(bad("missing PFM payload"));
    }
    pos += 1;
    let channels = match tokens[0].as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(bad(&format!("unknown PFM tag {other:?}"))),
    };
    let width: usize = tokens[1].parse().map_err(|_| bad("bad PFM width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad PFM height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad PFM scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("PFM scale must be nonzero"));
    }
    let little = scale < 0.0;
    let count = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() != count * 4 {
        return Err(bad(&format!(
            "PFM payload has {} bytes, expected {}",
            payload.len(),
            count * 4
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| {
            let raw = [b[0], b[1], b[2], b[3]];
            let v = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            v as f64
        })
        .collect();
    let row_len = width * channels;
    let mut data = Vec::with_capacity(count);
    if row_len > 0 {
        for row in values.chunks(row_len).rev() {
            data.extend_from_slice(row);
        }
    }
    ImageBuffer::from_vec(width, height, channels, data).map_err(|e| bad(&e.to_string()))
}

pub fn read_pfm(path: &Path) -> Result<ImageBuffer, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn write_pfm(path: &Path, buf: &ImageBuffer) -> Result<(), IoError> {
    super::write_bytes(path, &encode_pfm(buf))
}
