//! Portable float map reading and writing.
//!
//! `Pf` is the single-channel variant, `PF` the three-channel one. The header
//! is ASCII — magic, width, height, scale — followed by rows of raw 32-bit
//! floats stored bottom-to-top. A negative scale marks little-endian payloads
//! (what we write); positive marks big-endian (accepted on read).
//!
//! The format has no mask channel, so invalid pixels are stored as NaN and
//! any pixel with a non-finite component is marked invalid on read.

use std::fs;
use std::path::Path;

use crate::error::{CpsError, Result};
use crate::map::{ScalarMap, VectorMap};

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    little_endian: bool,
    data_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let bad = |msg: String| CpsError::Pfm(format!("{}: {msg}", path.display()));

    // Three whitespace-separated tokens after the magic, then exactly one
    // whitespace byte before the payload.
    let mut pos = 0usize;
    let mut token = |expect_name: &str| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad(format!("missing {expect_name} in header")));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token("magic")?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(bad(format!("unknown magic {other:?}"))),
    };
    let width: usize = token("width")?
        .parse()
        .map_err(|e| bad(format!("bad width: {e}")))?;
    let height: usize = token("height")?
        .parse()
        .map_err(|e| bad(format!("bad height: {e}")))?;
    let scale: f64 = token("scale")?
        .parse()
        .map_err(|e| bad(format!("bad scale: {e}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad(format!("scale must be finite and nonzero, got {scale}")));
    }
    if width == 0 || height == 0 {
        return Err(bad(format!("degenerate dimensions {width}x{height}")));
    }
    // Single whitespace byte separates the scale token from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("header not terminated by whitespace".into()));
    }
    Ok(Header {
        channels,
        width,
        height,
        little_endian: scale < 0.0,
        data_offset: pos + 1,
    })
}

fn read_payload(bytes: &[u8], h: &Header, path: &Path) -> Result<Vec<f64>> {
    let count = h.width * h.height * h.channels;
    let need = count * 4;
    let payload = &bytes[h.data_offset..];
    if payload.len() < need {
        return Err(CpsError::Pfm(format!(
            "{}: payload holds {} bytes, need {need}",
            path.display(),
            payload.len()
        )));
    }
    let mut flat = vec![0.0f64; count];
    for (i, chunk) in payload[..need].chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if h.little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        flat[i] = v as f64;
    }
    Ok(flat)
}

/// Map a file-order (bottom-to-top) flat index to our top-left-origin index.
fn flip_index(i: usize, width: usize, height: usize) -> usize {
    let row = i / width;
    let col = i % width;
    (height - 1 - row) * width + col
}

pub fn read_scalar_pfm(path: impl AsRef<Path>) -> Result<ScalarMap> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let h = parse_header(&bytes, path)?;
    if h.channels != 1 {
        return Err(CpsError::Pfm(format!(
            "{}: expected single-channel Pf, found 3-channel PF",
            path.display()
        )));
    }
    let flat = read_payload(&bytes, &h, path)?;
    let mut data = vec![0.0; flat.len()];
    let mut mask = vec![false; flat.len()];
    for (i, v) in flat.iter().enumerate() {
        let j = flip_index(i, h.width, h.height);
        if v.is_finite() {
            data[j] = *v;
            mask[j] = true;
        }
    }
    ScalarMap::from_parts(h.width, h.height, data, mask)
}

pub fn read_vector_pfm(path: impl AsRef<Path>) -> Result<VectorMap> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let h = parse_header(&bytes, path)?;
    if h.channels != 3 {
        return Err(CpsError::Pfm(format!(
            "{}: expected 3-channel PF, found single-channel Pf",
            path.display()
        )));
    }
    let flat = read_payload(&bytes, &h, path)?;
    let n = h.width * h.height;
    let mut data = vec![nalgebra::Vector3::zeros(); n];
    let mut mask = vec![false; n];
    for i in 0..n {
        let j = flip_index(i, h.width, h.height);
        let v = nalgebra::Vector3::new(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
        if v.iter().all(|c| c.is_finite()) {
            data[j] = v;
            mask[j] = true;
        }
    }
    VectorMap::from_parts(h.width, h.height, data, mask)
}

fn write_pfm(
    path: &Path,
    magic: &str,
    width: usize,
    height: usize,
    values: impl Iterator<Item = f32>,
) -> Result<()> {
    let mut out = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a scalar map; invalid pixels become NaN.
pub fn write_scalar_pfm(path: impl AsRef<Path>, map: &ScalarMap) -> Result<()> {
    let (w, hgt) = (map.width(), map.height());
    let values = (0..w * hgt).map(move |i| {
        let j = flip_index(i, w, hgt);
        if map.is_valid(j) {
            map.data()[j] as f32
        } else {
            f32::NAN
        }
    });
    write_pfm(path.as_ref(), "Pf", w, hgt, values)
}

/// Write a 3-vector map; invalid pixels become NaN in all channels.
pub fn write_vector_pfm(path: impl AsRef<Path>, map: &VectorMap) -> Result<()> {
    let (w, hgt) = (map.width(), map.height());
    let values = (0..w * hgt).flat_map(move |i| {
        let j = flip_index(i, w, hgt);
        let v = if map.is_valid(j) {
            map.data()[j].map(|c| c as f32)
        } else {
            nalgebra::Vector3::from_element(f32::NAN)
        };
        [v.x, v.y, v.z]
    });
    write_pfm(path.as_ref(), "PF", w, hgt, values)
}
