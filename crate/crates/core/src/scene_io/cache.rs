//! Native point-cloud cache.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, `u64` point count,
//! then `count * 3` f32 coordinates followed by `count * 3` f32 colors.
//! Loading a cache reproduces the saved cloud bit for bit.

use std::path::Path;

use super::{SceneError, ScenePointCloud};

pub const CACHE_MAGIC: &[u8; 8] = b"COVCLOUD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;

pub fn save_cache(cloud: &ScenePointCloud, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(HEADER_LEN + cloud.len() * 24);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for v in cloud.points().iter().chain(cloud.colors()).flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| SceneError::io(path, e))
}

pub(super) fn parse_cache(bytes: &[u8], path: &Path) -> Result<ScenePointCloud, SceneError> {
    let malformed = |reason: String| SceneError::MalformedFile {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(malformed("truncated cache header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(SceneError::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("cache version {version}"),
        });
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let expected = count
        .checked_mul(24)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| malformed(format!("absurd point count {count}")))?;
    if bytes.len() != expected {
        return Err(malformed(format!(
            "expected {expected} bytes for {count} points, found {}",
            bytes.len()
        )));
    }
    let floats: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let triples = |s: &[f32]| -> Vec<[f32; 3]> {
        s.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    };
    let (p, c) = floats.split_at(count * 3);
    ScenePointCloud::new(triples(p), triples(c)).map_err(malformed)
}
