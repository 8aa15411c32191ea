//! Greyscale PFM: `Pf`, width and height, a scale whose sign gives the
//! byte order (negative = little-endian), then 32-bit floats with the
//! bottom row first. Nodata is stored as NaN.

use std::path::Path;

use super::{header_tokens, read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::raster::RasterGrid;

/// Encodes as little-endian with scale −1.0.
pub fn encode_pfm(grid: &RasterGrid) -> Vec<u8> {
    let (w, h) = grid.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for v in &grid.data()[y * w..(y + 1) * w] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<RasterGrid> {
    let magic = bytes.get(..2).ok_or(Error::TruncatedFile("PFM"))?;
    match magic {
        b"Pf" => {}
        b"PF" => return Err(Error::UnsupportedColorPfm),
        other => {
            return Err(Error::BadMagic {
                format: "PFM",
                found: String::from_utf8_lossy(other).into_owned(),
            })
        }
    }
    let (tokens, start) = header_tokens(bytes, 4, "PFM")?;
    if tokens[0] != "Pf" {
        return Err(Error::BadMagic {
            format: "PFM",
            found: tokens[0].clone(),
        });
    }
    let dim = |s: &str, name: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::BadHeader(format!("PFM {name} `{s}` is not a size")))
    };
    let w = dim(&tokens[1], "width")?;
    let h = dim(&tokens[2], "height")?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| Error::BadHeader(format!("PFM scale `{}` is not a number", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::BadHeader("PFM scale must be non-zero".into()));
    }
    let little = scale < 0.0;
    let n = w
        .checked_mul(h)
        .ok_or_else(|| Error::BadHeader("PFM size overflows".into()))?;
    let body = &bytes[start..];
    if body.len() < n * 4 {
        return Err(Error::TruncatedFile("PFM"));
    }
    let mut data = vec![0.0f64; n];
    for (k, chunk) in body[..n * 4].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, x) = (k / w, k % w);
        data[(h - 1 - row) * w + x] = v as f64;
    }
    RasterGrid::from_samples(w, h, data)
}

pub fn write_pfm(path: impl AsRef<Path>, grid: &RasterGrid) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pfm(grid))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<RasterGrid> {
    decode_pfm(&read_bytes(path.as_ref())?)
}
