//! File formats: PFM rasters, PGM masks and label maps, JSON stack
//! manifests.

mod manifest;
mod pfm;
mod pgm;

use std::path::Path;

use crate::error::{Error, Result};

pub use manifest::{load_stack, write_stack, LoadedStack, ManifestEntry, NodataPolicy, StackManifest};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use pgm::{
    decode_pgm, encode_pgm, labels_to_pgm, mask_to_pgm, pgm_to_labels, pgm_to_mask, read_pgm, write_pgm, PgmImage,
};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Splits a Netpbm-style header into `count` whitespace-separated tokens
/// after skipping `#` comments. Returns the tokens and the offset of the
/// first data byte (one whitespace byte after the last token).
pub(crate) fn header_tokens(bytes: &[u8], count: usize, format: &'static str) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        if i >= bytes.len() {
            return Err(Error::TruncatedFile(format));
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(Error::TruncatedFile(format));
    }
    Ok((tokens, i + 1))
}
