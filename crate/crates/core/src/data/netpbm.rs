//! Binary PPM (P6) and PGM (P5) with maxval up to 255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::{Real, Shape, Tensor};

/// `round-half-up(v · 255)`, clamped to a byte.
pub fn quantize<T: Real>(v: T) -> u8 {
    (v.as_f64() * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn encode_ppm<T: Real>(t: &Tensor<T>) -> Result<Vec<u8>> {
    if t.channels() != 3 {
        return Err(Error::invalid(format!("PPM needs 3 channels, got {}", t.shape())));
    }
    let mut out = format!("P6\n{} {}\n255\n", t.width(), t.height()).into_bytes();
    let plane = t.shape().plane();
    out.reserve(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            out.push(quantize(t.data()[c * plane + i]));
        }
    }
    Ok(out)
}

pub fn encode_pgm<T: Real>(t: &Tensor<T>) -> Result<Vec<u8>> {
    if t.channels() != 1 {
        return Err(Error::invalid(format!("PGM needs 1 channel, got {}", t.shape())));
    }
    let mut out = format!("P5\n{} {}\n255\n", t.width(), t.height()).into_bytes();
    out.extend(t.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

pub fn write_ppm<T: Real>(path: &Path, t: &Tensor<T>) -> Result<()> {
    write_atomic(path, &encode_ppm(t)?)
}

pub fn write_pgm<T: Real>(path: &Path, t: &Tensor<T>) -> Result<()> {
    write_atomic(path, &encode_pgm(t)?)
}

pub fn read_ppm(path: &Path) -> Result<Tensor<f32>> {
    decode(&std::fs::read(path)?, 3)
}

pub fn read_pgm(path: &Path) -> Result<Tensor<f32>> {
    decode(&std::fs::read(path)?, 1)
}

/// Decodes a P6 (`channels == 3`) or P5 (`channels == 1`) image into values
/// in `[0, 1]`.
pub fn decode(bytes: &[u8], channels: usize) -> Result<Tensor<f32>> {
    let want = if channels == 3 { "P6" } else { "P5" };
    let magic = bytes.get(..2).ok_or_else(|| Error::MalformedHeader("file shorter than magic number".into()))?;
    if magic != want.as_bytes() {
        return Err(match magic {
            b"P1" | b"P2" | b"P3" | b"P4" | b"P5" | b"P6" | b"P7" => Error::UnsupportedFormat(format!(
                "{} where {want} was expected",
                String::from_utf8_lossy(magic)
            )),
            _ => Error::MalformedHeader(format!("bad magic number {:?}", String::from_utf8_lossy(magic))),
        });
    }
    let mut pos = 2;
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("maxval {maxval} (only 1..=255 is supported)")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::MalformedHeader("missing whitespace after maxval".into())),
    }
    let shape = Shape::new(channels, height, width).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let expected = shape.len();
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(Error::TruncatedPayload { expected, found: raster.len() });
    }
    let scale = 1.0 / maxval as f32;
    let plane = shape.plane();
    let mut data = vec![0.0f32; expected];
    for (i, px) in raster[..expected].chunks_exact(channels).enumerate() {
        for (c, &b) in px.iter().enumerate() {
            data[c * plane + i] = b as f32 * scale;
        }
    }
    Tensor::from_vec(shape, data)
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(_) => break,
            None => return Err(Error::MalformedHeader(format!("header ends before {what}"))),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedHeader(format!("expected a number for {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedHeader(format!("{what} out of range")))
}
