//! Binary weights file.
//!
//! Little-endian layout:
//!
//! ```text
//! "GRWT" | version u16 | M u32 | N u32 | Nz u32 | k u32 | slope f32 | L u32 | Lz u32
//! | count u32 | count x (name_len u16, name, kind u8, ndim u8, dims u32.., offset u64)
//! | payload | sha256 of everything before it
//! ```
//!
//! `kind` is 0 for f32 and 1 for u32 tensors; offsets are relative to the
//! payload start. The scale table and the hyper-latent frequency tables are
//! stored as `entropy.scale_table` (f32) and `entropy.hyper_freqs` (u32).

use std::collections::BTreeMap;
use std::path::Path;

use gric_core::codec::{ModelConfig, ModelDims, ModelWeights};
use gric_core::probability::{FactorizedCdf, ScaleTable};
use gric_core::Tensor;
use sha2::{Digest, Sha256};

use crate::error::{GricError, Result};

pub const MAGIC: &[u8; 4] = b"GRWT";
pub const VERSION: u16 = 1;
const SCALE_TABLE: &str = "entropy.scale_table";
const HYPER_FREQS: &str = "entropy.hyper_freqs";

enum Payload<'a> {
    F32(&'a [f32]),
    U32(Vec<u32>),
}

fn bad(msg: impl Into<String>) -> GricError {
    GricError::Weights(msg.into())
}

/// Serializes `weights`; the returned hash is the trailing SHA-256.
pub fn to_bytes(weights: &ModelWeights) -> (Vec<u8>, [u8; 32]) {
    let c = &weights.config;
    let mut entries: Vec<(String, Vec<usize>, Payload)> = weights
        .tensors
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec(), Payload::F32(t.data())))
        .collect();
    entries.push((
        SCALE_TABLE.into(),
        vec![weights.scale_table.levels().len()],
        Payload::F32(weights.scale_table.levels()),
    ));
    let tables = weights.hyper_cdf.tables();
    let width = 2 * weights.hyper_cdf.support() as usize + 2;
    entries.push((
        HYPER_FREQS.into(),
        vec![tables.len(), width],
        Payload::U32(tables.iter().flat_map(|t| t.frequencies()).collect()),
    ));

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        c.dims.latent_channels,
        c.dims.main_channels,
        c.dims.hyper_channels,
        c.dims.patch_size,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.leaky_slope.to_le_bytes());
    out.extend_from_slice(&c.latent_support.to_le_bytes());
    out.extend_from_slice(&c.hyper_support.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, shape, payload) in &entries {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(matches!(payload, Payload::U32(_)) as u8);
        out.push(shape.len() as u8);
        for d in shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * shape.iter().product::<usize>() as u64;
    }
    for (_, _, payload) in &entries {
        match payload {
            Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    let hash: [u8; 32] = Sha256::digest(&out).into();
    out.extend_from_slice(&hash);
    (out, hash)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.data.len());
        let end = end.ok_or_else(|| bad("file ends inside the header"))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses and hash-checks a weights file. Tensor shapes are validated when a
/// codec is built from the result.
pub fn from_bytes(bytes: &[u8]) -> Result<ModelWeights> {
    if bytes.len() < 4 + 32 || &bytes[..4] != MAGIC {
        return Err(bad("not a weights file (bad magic)"));
    }
    let (body, stored) = bytes.split_at(bytes.len() - 32);
    let hash: [u8; 32] = Sha256::digest(body).into();
    if hash[..] != stored[..] {
        return Err(bad("content hash mismatch"));
    }
    let mut cur = Cursor { data: body, pos: 4 };
    let version = cur.u16()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dims = ModelDims {
        latent_channels: cur.u32()? as usize,
        main_channels: cur.u32()? as usize,
        hyper_channels: cur.u32()? as usize,
        patch_size: cur.u32()? as usize,
    };
    let mut config = ModelConfig::new(dims);
    config.leaky_slope = f32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    config.latent_support = cur.u32()?;
    config.hyper_support = cur.u32()?;
    config.validate()?;

    let count = cur.u32()? as usize;
    let mut directory = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| bad("tensor name is not UTF-8"))?
            .to_string();
        let kind = cur.u8()?;
        let ndim = cur.u8()? as usize;
        let shape = (0..ndim)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let offset = cur.u64()?;
        directory.push((name, kind, shape, offset));
    }
    let payload = &body[cur.pos..];
    let mut floats = BTreeMap::new();
    let mut ints = BTreeMap::new();
    for (name, kind, shape, offset) in directory {
        let n = shape
            .iter()
            .try_fold(1usize, |a, d| a.checked_mul(*d))
            .ok_or_else(|| bad(format!("{name}: shape overflows")))?;
        let start = usize::try_from(offset).map_err(|_| bad("offset overflows"))?;
        let end = n
            .checked_mul(4)
            .and_then(|b| start.checked_add(b))
            .filter(|e| *e <= payload.len())
            .ok_or_else(|| bad(format!("{name}: data outside the payload")))?;
        let words = payload[start..end].chunks_exact(4).map(|c| c.try_into().unwrap());
        let duplicate = match kind {
            0 => {
                let data = words.map(f32::from_le_bytes).collect();
                let t = Tensor::new(&shape, data).map_err(|e| bad(format!("{name}: {e}")))?;
                floats.insert(name.clone(), t).is_some()
            }
            1 => ints.insert(name.clone(), (shape, words.map(u32::from_le_bytes).collect::<Vec<_>>())).is_some(),
            k => return Err(bad(format!("{name}: unknown tensor kind {k}"))),
        };
        if duplicate {
            return Err(bad(format!("duplicate tensor {name}")));
        }
    }

    let scale = floats.remove(SCALE_TABLE).ok_or_else(|| bad("missing scale table"))?;
    let scale_table = ScaleTable::new(scale.into_data())?;
    let (shape, freqs) = ints.remove(HYPER_FREQS).ok_or_else(|| bad("missing hyper tables"))?;
    let width = 2 * config.hyper_support as usize + 2;
    if shape != [dims.hyper_channels, width] {
        return Err(bad(format!("hyper tables have shape {shape:?}")));
    }
    let rows: Vec<Vec<u32>> = freqs.chunks(width).map(<[u32]>::to_vec).collect();
    let hyper_cdf = FactorizedCdf::from_frequencies(config.hyper_support, &rows)?;
    Ok(ModelWeights {
        config,
        tensors: floats,
        scale_table,
        hyper_cdf,
        hash,
    })
}

/// Fills in `weights.hash` from the serialized form.
pub fn seal(weights: &mut ModelWeights) {
    weights.hash = to_bytes(weights).1;
}

pub fn save(weights: &ModelWeights, path: &Path) -> Result<[u8; 32]> {
    let (bytes, hash) = to_bytes(weights);
    std::fs::write(path, bytes).map_err(|e| GricError::io(format!("writing {}", path.display()), e))?;
    Ok(hash)
}

/// Reads a weights file. Any failure, including a missing file, is a
/// weights error.
pub fn load(path: &Path) -> Result<ModelWeights> {
    let bytes = std::fs::read(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    from_bytes(&bytes)
}

pub fn hex(hash: &[u8]) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}
