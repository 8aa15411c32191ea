//! Binary PGM (`P5`) with maxval 255 or 65535. 16-bit samples are
//! big-endian. Masks are written as 0/255; label maps write nodata as
//! maxval.

use std::path::Path;

use super::{header_tokens, read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::raster::{Grid, LabelGrid, Mask};

#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub maxval: u16,
    pub pixels: Grid<u16>,
}

fn check_maxval(maxval: u32) -> Result<()> {
    if maxval == 255 || maxval == 65535 {
        Ok(())
    } else {
        Err(Error::MaxvalUnsupported(maxval))
    }
}

pub fn encode_pgm(img: &PgmImage) -> Result<Vec<u8>> {
    check_maxval(img.maxval as u32)?;
    let (w, h) = img.pixels.dims();
    let mut out = format!("P5\n{w} {h}\n{}\n", img.maxval).into_bytes();
    for &v in img.pixels.data() {
        if v > img.maxval {
            return Err(Error::param(
                "pixels",
                format!("value {v} exceeds maxval {}", img.maxval),
            ));
        }
        if img.maxval == 255 {
            out.push(v as u8);
        } else {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PgmImage> {
    let magic = bytes.get(..2).ok_or(Error::TruncatedFile("PGM"))?;
    if magic != b"P5" {
        return Err(Error::BadMagic {
            format: "PGM",
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let (tokens, start) = header_tokens(bytes, 4, "PGM")?;
    let num = |s: &str, name: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::BadHeader(format!("PGM {name} `{s}` is not a number")))
    };
    let w = num(&tokens[1], "width")?;
    let h = num(&tokens[2], "height")?;
    let maxval = num(&tokens[3], "maxval")?;
    check_maxval(u32::try_from(maxval).unwrap_or(u32::MAX))?;
    let wide = maxval == 65535;
    let n = w
        .checked_mul(h)
        .ok_or_else(|| Error::BadHeader("PGM size overflows".into()))?;
    let need = if wide { 2 * n } else { n };
    let body = &bytes[start..];
    if body.len() < need {
        return Err(Error::TruncatedFile("PGM"));
    }
    let data = if wide {
        body[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        body[..need].iter().map(|b| *b as u16).collect()
    };
    Ok(PgmImage {
        maxval: maxval as u16,
        pixels: Grid::from_vec(w, h, data)?,
    })
}

pub fn write_pgm(path: impl AsRef<Path>, img: &PgmImage) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(img)?)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<PgmImage> {
    decode_pgm(&read_bytes(path.as_ref())?)
}

pub fn mask_to_pgm(mask: &Mask) -> PgmImage {
    PgmImage {
        maxval: 255,
        pixels: mask.map(|b| if *b { 255 } else { 0 }),
    }
}

/// Any non-zero sample is `true`.
pub fn pgm_to_mask(img: &PgmImage) -> Mask {
    img.pixels.map(|v| *v != 0)
}

/// 8-bit when every label is below 255, otherwise 16-bit. Unlabelled
/// pixels become maxval.
pub fn labels_to_pgm(labels: &LabelGrid) -> Result<PgmImage> {
    let top = labels.data().iter().flatten().copied().max().unwrap_or(0);
    if top == u16::MAX {
        return Err(Error::param("labels", "label 65535 is reserved for nodata"));
    }
    let maxval = if top < 255 { 255 } else { 65535 };
    Ok(PgmImage {
        maxval,
        pixels: labels.map(|l| l.unwrap_or(maxval)),
    })
}

pub fn pgm_to_labels(img: &PgmImage) -> LabelGrid {
    img.pixels.map(|v| (*v != img.maxval).then_some(*v))
}
