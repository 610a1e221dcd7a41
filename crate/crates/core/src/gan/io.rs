//! `.bgm` model files.
//!
//! Layout (little-endian): magic, `u32` version, `u32` tensor count, then per tensor
//! `u8` kind tag, `u8` rank, `u32` dims, `f32` data; then the optimizer state as a
//! `u32` count followed by tensors in the same encoding (first moments of the
//! generator, second moments of the generator, the same for the discriminator, and a
//! final two-element tensor with the step counts); then a `u32`-length JSON echo of
//! the configuration.

use std::path::Path;

use super::layers::{Tensor, TensorKind};
use super::{Adam, GanConfig, GanModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BGM_MAGIC: &[u8; 7] = b"BGANv1\0";
pub const BGM_VERSION: u32 = 1;

const TAG_FIRST_MOMENT: u8 = 5;
const TAG_SECOND_MOMENT: u8 = 6;
const TAG_STEPS: u8 = 7;

fn put_tensor(out: &mut Vec<u8>, tag: u8, shape: &[usize], data: impl Iterator<Item = f64>) {
    out.push(tag);
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Serializes a model. `f64` models are stored at `f32` precision.
pub fn encode_model<T: Scalar>(model: &GanModel<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BGM_MAGIC);
    out.extend_from_slice(&BGM_VERSION.to_le_bytes());
    let arch = model.architecture();
    let tensors: Vec<&Tensor<T>> = model
        .generator
        .tensors()
        .into_iter()
        .chain(model.discriminator.tensors())
        .collect();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (info, t) in arch.iter().zip(&tensors) {
        put_tensor(&mut out, info.kind.tag(), &t.shape, t.data.iter().map(|v| v.as_f64()));
    }
    let moments = [
        (TAG_FIRST_MOMENT, &model.opt_g.m),
        (TAG_SECOND_MOMENT, &model.opt_g.v),
        (TAG_FIRST_MOMENT, &model.opt_d.m),
        (TAG_SECOND_MOMENT, &model.opt_d.v),
    ];
    let count = moments.iter().map(|(_, m)| m.len()).sum::<usize>() + 1;
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for (tag, m) in moments {
        for row in m {
            put_tensor(&mut out, tag, &[row.len()], row.iter().map(|v| v.as_f64()));
        }
    }
    let steps = [model.opt_g.steps as f64, model.opt_d.steps as f64];
    put_tensor(&mut out, TAG_STEPS, &[2], steps.into_iter());
    let json = serde_json::to_vec(&model.config).expect("config serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                expected: end as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn tensor(&mut self) -> Result<(u8, Vec<usize>, Vec<f32>)> {
        let tag = self.u8()?;
        let rank = self.u8()? as usize;
        let shape = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = self.take(len.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok((tag, shape, data))
    }
}

fn cast_vec<T: Scalar>(v: &[f32]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x as f64)).collect()
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<GanModel<T>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(BGM_MAGIC.len()).map_err(|_| Error::BadMagic {
        expected: BGM_MAGIC.to_vec(),
        found: bytes.to_vec(),
    })?;
    if magic != BGM_MAGIC {
        return Err(Error::BadMagic {
            expected: BGM_MAGIC.to_vec(),
            found: magic.to_vec(),
        });
    }
    let version = r.u32()?;
    if version != BGM_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: BGM_VERSION,
        });
    }
    let n = r.u32()? as usize;
    let params = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    let m = r.u32()? as usize;
    let state = (0..m).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    let json_len = r.u32()? as usize;
    let config: GanConfig = serde_json::from_slice(r.take(json_len)?)?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let mut model = GanModel::<T>::zeroed(&config)?;
    let arch = model.architecture();
    if params.len() != arch.len() {
        return Err(Error::Format(format!(
            "expected {} parameter tensors for this configuration, found {}",
            arch.len(),
            params.len()
        )));
    }
    for (info, (tag, shape, _)) in arch.iter().zip(&params) {
        if TensorKind::from_tag(*tag) != Some(info.kind) || *shape != info.shape {
            return Err(Error::Format(format!(
                "{}: expected {:?} {:?}, found tag {} shape {:?}",
                info.name, info.kind, info.shape, tag, shape
            )));
        }
    }
    let n_g = model.generator.tensors().len();
    for (dst, (_, _, data)) in model.generator.tensors_mut().into_iter().zip(&params[..n_g]) {
        dst.data = cast_vec(data);
    }
    for (dst, (_, _, data)) in model.discriminator.tensors_mut().into_iter().zip(&params[n_g..]) {
        dst.data = cast_vec(data);
    }

    let n_d = arch.len() - n_g;
    if state.len() != 2 * n_g + 2 * n_d + 1 {
        return Err(Error::Format(format!(
            "expected {} optimizer tensors, found {}",
            2 * arch.len() + 1,
            state.len()
        )));
    }
    let moments = |slice: &[(u8, Vec<usize>, Vec<f32>)], tag: u8, sizes: &[usize]| -> Result<Vec<Vec<T>>> {
        slice
            .iter()
            .zip(sizes)
            .map(|((t, _, data), &len)| {
                if *t != tag || data.len() != len {
                    Err(Error::Format("optimizer state does not match the parameters".into()))
                } else {
                    Ok(cast_vec(data))
                }
            })
            .collect()
    };
    let g_sizes: Vec<usize> = arch[..n_g].iter().map(|i| i.shape.iter().product()).collect();
    let d_sizes: Vec<usize> = arch[n_g..].iter().map(|i| i.shape.iter().product()).collect();
    let (gm, rest) = state.split_at(n_g);
    let (gv, rest) = rest.split_at(n_g);
    let (dm, rest) = rest.split_at(n_d);
    let (dv, rest) = rest.split_at(n_d);
    let (tag, _, steps) = &rest[0];
    if *tag != TAG_STEPS || steps.len() != 2 {
        return Err(Error::Format("missing optimizer step counts".into()));
    }
    model.opt_g = Adam {
        m: moments(gm, TAG_FIRST_MOMENT, &g_sizes)?,
        v: moments(gv, TAG_SECOND_MOMENT, &g_sizes)?,
        steps: steps[0] as u64,
    };
    model.opt_d = Adam {
        m: moments(dm, TAG_FIRST_MOMENT, &d_sizes)?,
        v: moments(dv, TAG_SECOND_MOMENT, &d_sizes)?,
        steps: steps[1] as u64,
    };
    if !model.is_finite() {
        return Err(Error::Format("model contains non-finite parameters".into()));
    }
    Ok(model)
}

pub fn save_model<T: Scalar>(model: &GanModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<GanModel<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
