//! Compressed-image container.
//!
//! ```text
//! "GRIC" | version u16 | mode u8 | height u32 | width u32 | padded_height u32
//! | padded_width u32 | weights sha256 [32] | hyper_len u32 | hyper | latent | crc32
//! ```
//!
//! All integers are little-endian; the CRC covers every preceding byte.

use gric_core::codec::{Bitstream, EntropyMode};

use crate::error::{GricError, Result};

pub const MAGIC: &[u8; 4] = b"GRIC";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 1 + 4 * 4 + 32 + 4;

fn bad(msg: impl Into<String>) -> GricError {
    GricError::Stream(msg.into())
}

pub fn to_bytes(bs: &Bitstream) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + bs.hyper.len() + bs.latent.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(bs.mode.tag());
    for v in [bs.height, bs.width, bs.padded_height, bs.padded_width] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&bs.weights_hash);
    out.extend_from_slice(&(bs.hyper.len() as u32).to_le_bytes());
    out.extend_from_slice(&bs.hyper);
    out.extend_from_slice(&bs.latent);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Bitstream> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(bad("container is truncated"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("not a compressed image (bad magic)"));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(bad("checksum mismatch"));
    }
    let u32_at = |p: usize| u32::from_le_bytes(body[p..p + 4].try_into().unwrap()) as usize;
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mode = EntropyMode::from_tag(body[6]).ok_or_else(|| bad(format!("unknown mode tag {}", body[6])))?;
    let weights_hash: [u8; 32] = body[23..55].try_into().unwrap();
    let hyper_len = u32_at(55);
    let rest = &body[HEADER_LEN..];
    if hyper_len > rest.len() {
        return Err(bad("hyper stream length exceeds the container"));
    }
    Ok(Bitstream {
        mode,
        height: u32_at(7),
        width: u32_at(11),
        padded_height: u32_at(15),
        padded_width: u32_at(19),
        weights_hash,
        hyper: rest[..hyper_len].to_vec(),
        latent: rest[hyper_len..].to_vec(),
    })
}
