//! `BUBDB1` container.
//!
//! Header (little-endian): 8-byte magic, `u32` version, `u32` record count, `u16`
//! patch side, `u8` channels, `u8` flags (bit 0: training corpus). Each record then
//! takes a fixed stride: four `f32` features `[E, phi, psi, m]`, the patch as `u8`
//! intensities and the mask as one `0`/`1` byte per pixel, both row-major.

use std::path::Path;

use super::BubbleDb;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::imgproc::{BitMask, Raster};
use crate::record::BubbleRecord;

pub const BDB_MAGIC: &[u8; 8] = b"BUBDB1\0\0";
pub const BDB_VERSION: u32 = 1;

const HEADER: usize = 20;
const FLAG_CORPUS: u8 = 1;

fn stride(side: usize) -> usize {
    16 + 2 * side * side
}

pub fn encode_db(db: &BubbleDb) -> Vec<u8> {
    let side = db.side();
    let mut out = Vec::with_capacity(HEADER + db.len() * stride(side));
    out.extend_from_slice(BDB_MAGIC);
    out.extend_from_slice(&BDB_VERSION.to_le_bytes());
    out.extend_from_slice(&(db.len() as u32).to_le_bytes());
    out.extend_from_slice(&(side as u16).to_le_bytes());
    out.push(1);
    out.push(if db.is_corpus() { FLAG_CORPUS } else { 0 });
    for r in db.records() {
        for v in r.features.to_array() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&r.patch.to_u8());
        out.extend(r.mask.bits().iter().map(|&b| b as u8));
    }
    out
}

pub fn decode_db(bytes: &[u8]) -> Result<BubbleDb> {
    let head = &bytes[..bytes.len().min(BDB_MAGIC.len())];
    if head != &BDB_MAGIC[..head.len()] {
        return Err(Error::BadMagic {
            expected: BDB_MAGIC.to_vec(),
            found: head.to_vec(),
        });
    }
    if bytes.len() < HEADER {
        return Err(Error::Truncated {
            expected: HEADER as u64,
            actual: bytes.len() as u64,
        });
    }
    let u32_at = |p: usize| u32::from_le_bytes(bytes[p..p + 4].try_into().expect("4 bytes"));
    let version = u32_at(8);
    if version != BDB_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: BDB_VERSION,
        });
    }
    let count = u32_at(12) as usize;
    let side = u16::from_le_bytes([bytes[16], bytes[17]]) as usize;
    let channels = bytes[18];
    let flags = bytes[19];
    if channels != 1 {
        return Err(Error::Format(format!("only 1-channel patches are supported, found {channels}")));
    }
    if flags & !FLAG_CORPUS != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#04x}")));
    }
    if count > 0 && side == 0 {
        return Err(Error::Format("records with zero patch side".into()));
    }
    let expected = HEADER as u64 + count as u64 * stride(side) as u64;
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after {count} records",
            bytes.len() as u64 - expected
        )));
    }
    let px = side * side;
    let records = bytes[HEADER..]
        .chunks_exact(stride(side))
        .enumerate()
        .map(|(i, rec)| {
            let f: Vec<f64> = rec[..16]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            let features = FeatureVector::new(f[0], f[1], f[2], f[3]);
            if !features.is_valid() {
                return Err(Error::Format(format!("record {i}: features out of range {f:?}")));
            }
            let patch = Raster::from_vec(side, side, rec[16..16 + px].iter().map(|&b| b as f32 / 255.0).collect())?;
            let mask_bytes = &rec[16 + px..];
            if let Some(b) = mask_bytes.iter().find(|&&b| b > 1) {
                return Err(Error::Format(format!("record {i}: mask byte {b} is not 0 or 1")));
            }
            let mask = BitMask::from_vec(side, side, mask_bytes.iter().map(|&b| b == 1).collect())?;
            Ok(BubbleRecord { patch, mask, features })
        })
        .collect::<Result<Vec<_>>>()?;
    BubbleDb::new(records, flags & FLAG_CORPUS != 0)
}

pub fn save_db(db: &BubbleDb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_db(db)).map_err(|e| Error::io(path, e))
}

pub fn load_db(path: impl AsRef<Path>) -> Result<BubbleDb> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_db(&bytes)
}
