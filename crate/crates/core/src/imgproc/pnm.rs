//! Binary PGM (P5, 8-bit) and PBM (P4) codecs.

use std::fs;
use std::path::Path;

use super::raster::{BitMask, Raster};
use crate::error::{Error, Result};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8], fields: usize) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::Truncated {
            expected: 2,
            actual: bytes.len() as u64,
        });
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut values = [0usize; 3];
    for slot in values.iter_mut().take(fields) {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed PNM header".into()));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("PNM header value out of range".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after PNM header".into())),
    }
    Ok(Header {
        magic,
        width: values[0],
        height: values[1],
        maxval: if fields == 3 { values[2] } else { 1 },
        data_start: pos,
    })
}

pub fn encode_pgm(img: &Raster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Raster> {
    let h = parse_header(bytes, 3)?;
    if &h.magic != b"P5" {
        return Err(Error::BadMagic {
            expected: b"P5".to_vec(),
            found: h.magic.to_vec(),
        });
    }
    if h.maxval == 0 || h.maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {}", h.maxval)));
    }
    let n = h.width * h.height;
    let body = &bytes[h.data_start..];
    if body.len() < n {
        return Err(Error::Truncated {
            expected: (h.data_start + n) as u64,
            actual: bytes.len() as u64,
        });
    }
    let scale = h.maxval as f32;
    Raster::from_vec(h.width, h.height, body[..n].iter().map(|&b| b as f32 / scale).collect())
}

pub fn encode_pbm(mask: &BitMask) -> Vec<u8> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let stride = w.div_ceil(8);
    for y in 0..h {
        let mut row = vec![0u8; stride];
        for x in 0..w {
            if mask.get(x, y) {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend(row);
    }
    out
}

pub fn decode_pbm(bytes: &[u8]) -> Result<BitMask> {
    let h = parse_header(bytes, 2)?;
    if &h.magic != b"P4" {
        return Err(Error::BadMagic {
            expected: b"P4".to_vec(),
            found: h.magic.to_vec(),
        });
    }
    let stride = h.width.div_ceil(8);
    let body = &bytes[h.data_start..];
    if body.len() < stride * h.height {
        return Err(Error::Truncated {
            expected: (h.data_start + stride * h.height) as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(BitMask::from_fn(h.width, h.height, |x, y| {
        body[y * stride + x / 8] & (0x80 >> (x % 8)) != 0
    }))
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Raster) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    decode_pgm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_pbm(path: impl AsRef<Path>, mask: &BitMask) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pbm(mask)).map_err(|e| Error::io(path, e))
}

pub fn read_pbm(path: impl AsRef<Path>) -> Result<BitMask> {
    let path = path.as_ref();
    decode_pbm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
