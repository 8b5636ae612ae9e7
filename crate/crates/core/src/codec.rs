//! Shared container for binary artifacts (checkpoints, buffer snapshots):
//! `magic[8] | version u32 | header_len u32 | JSON header | raw payload`,
//! integers little endian.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const VERSION: u32 = 1;
const MAX_HEADER: usize = 64 << 20;

pub fn write_blob<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[u8]) -> Vec<u8> {
    let header = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(payload);
    out
}

pub fn read_blob<'a, H: DeserializeOwned>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<(H, &'a [u8])> {
    if bytes.len() < 16 || &bytes[..8] != magic {
        return Err(Error::format(format!(
            "missing {} magic",
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if len > MAX_HEADER || 16 + len > bytes.len() {
        return Err(Error::format("header length exceeds file"));
    }
    let header = serde_json::from_slice(&bytes[16..16 + len])
        .map_err(|e| Error::format(format!("bad header: {e}")))?;
    Ok((header, &bytes[16 + len..]))
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(Error::at_path(dir))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::at_path(path)(e.error))?;
    Ok(())
}
