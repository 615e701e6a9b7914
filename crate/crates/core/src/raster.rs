//! Binary portable graymap (`P5`) export of `[0, 1]` images.
//!
//! Images are written with maxval 65535 (two big-endian bytes per sample).
//! Reading also accepts 8-bit files.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

const MAXVAL: f64 = 65535.0;

/// Encode `values` (clamped to `[0, 1]`) as a 16-bit PGM byte stream.
pub fn encode_pgm(values: &Array2<f64>) -> Vec<u8> {
    let (rows, cols) = values.dim();
    let mut out = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    out.reserve(rows * cols * 2);
    for &v in values {
        let q = (v.clamp(0.0, 1.0) * MAXVAL).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn write_pgm(path: &Path, values: &Array2<f64>) -> Result<()> {
    fs::write(path, encode_pgm(values))?;
    Ok(())
}

/// Parse the next whitespace-delimited header integer, skipping `#` comments.
fn header_field(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => {
                return Err(Error::Format {
                    offset: *pos as u64,
                    reason: "header ends early".into(),
                })
            }
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(Error::Format {
            offset: start as u64,
            reason: "expected a decimal header field".into(),
        })
}

/// Decode a binary PGM into values scaled to `[0, 1]` by its maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format {
            offset: 0,
            reason: "expected magic \"P5\"".into(),
        });
    }
    let mut pos = 2;
    let cols = header_field(bytes, &mut pos)?;
    let rows = header_field(bytes, &mut pos)?;
    let maxval = header_field(bytes, &mut pos)?;
    if !(1..=65535).contains(&maxval) {
        return Err(Error::Format {
            offset: pos as u64,
            reason: format!("maxval {maxval} outside 1..=65535"),
        });
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Format {
            offset: pos as u64,
            reason: "missing whitespace after maxval".into(),
        });
    }
    pos += 1;
    let width = if maxval > 255 { 2 } else { 1 };
    let needed = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(width))
        .ok_or(Error::Format {
            offset: pos as u64,
            reason: "image dimensions overflow".into(),
        })?;
    let data = &bytes[pos..];
    if data.len() < needed {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            reason: format!("pixel data truncated: {needed} bytes expected, {} present", data.len()),
        });
    }
    let scale = maxval as f64;
    let pixels: Vec<f64> = data[..needed]
        .chunks_exact(width)
        .map(|c| {
            let raw = if width == 2 { u16::from_be_bytes([c[0], c[1]]) } else { c[0] as u16 };
            raw as f64 / scale
        })
        .collect();
    Array2::from_shape_vec((rows, cols), pixels).map_err(|e| Error::Shape(e.to_string()))
}

pub fn read_pgm(path: &Path) -> Result<Array2<f64>> {
    decode_pgm(&fs::read(path)?)
}
