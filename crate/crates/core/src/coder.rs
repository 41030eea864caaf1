//! Byte-wise range coder over 16-bit frequency tables.
//!
//! The encoder keeps a 64-bit `low` (33 significant bits, bit 32 is the
//! carry) and a 32-bit `range`. Every symbol narrows the interval by
//! `range / 2^16` units; whenever `range` drops below `2^24` one byte is
//! shifted out, so `range >= 2^24` holds after every renormalization. Bytes
//! equal to `0xFF` are held back until a carry can no longer reach them.
//!
//! Because the coding interval never leaves `[0, 2^32)`, the first byte the
//! classic scheme would emit is always zero; it is dropped, and the decoder
//! primes itself with four bytes instead of five. A flush emits four bytes.
//! The decoder consumes exactly the bytes the encoder produced, so reading
//! past the end is reported as truncation.
//!
//! Symbols outside a table's support are coded as the escape bucket followed
//! by their 16-bit two's-complement value at uniform probability `2^-16`.
//! Decoding with a table sequence that differs from the encoder's is not
//! detected here; the container checksum is the only guard.

use alloc::vec::Vec;

use crate::probability::{QuantizedPmf, PRECISION_BITS, TOTAL_FREQUENCY};

const TOP: u32 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CoderError {
    #[error("range-coded stream ended early")]
    Truncated,
    #[error("range-coded stream is inconsistent with its probability tables")]
    Corrupt,
    #[error("symbol {0} cannot be coded (escape values must fit in 16 bits)")]
    Unencodable(i32),
    #[error("symbol has zero frequency")]
    ZeroFrequency,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    first: bool,
    out: Vec<u8>,
    flushed: bool,
}

impl Default for Encoder {
    fn default() -> Self {
        Self::new()
    }
}

impl Encoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            first: true,
            out: Vec::new(),
            flushed: false,
        }
    }

    pub fn range(&self) -> u32 {
        self.range
    }

    /// Narrows the interval to `[cumulative, cumulative + frequency)` out of
    /// `2^16`.
    pub fn encode(&mut self, cumulative: u32, frequency: u32) -> Result<(), CoderError> {
        assert!(!self.flushed, "encode after flush");
        if frequency == 0 {
            return Err(CoderError::ZeroFrequency);
        }
        debug_assert!(cumulative + frequency <= TOTAL_FREQUENCY);
        let r = self.range >> PRECISION_BITS;
        self.low += r as u64 * cumulative as u64;
        self.range = r * frequency;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        debug_assert!(self.range >= TOP);
        Ok(())
    }

    pub fn encode_symbol(&mut self, pmf: &QuantizedPmf, symbol: i32) -> Result<(), CoderError> {
        let slot = pmf.slot(symbol);
        if slot.escaped {
            let raw = i16::try_from(symbol).map_err(|_| CoderError::Unencodable(symbol))?;
            self.encode(slot.cumulative, slot.frequency)?;
            self.encode(raw as u16 as u32, 1)
        } else {
            self.encode(slot.cumulative, slot.frequency)
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.emit(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
                if self.pending == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn emit(&mut self, byte: u8) {
        if self.first {
            self.first = false;
            debug_assert_eq!(byte, 0);
        } else {
            self.out.push(byte);
        }
    }

    /// Terminates the stream. Calling it again returns the same bytes.
    pub fn flush(&mut self) -> &[u8] {
        if !self.flushed {
            for _ in 0..5 {
                self.shift_low();
            }
            self.flushed = true;
        }
        &self.out
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.flush();
        self.out
    }

    /// Bytes emitted so far, not counting state still held in the coder.
    pub fn bytes_written(&self) -> usize {
        self.out.len()
    }
}

#[derive(Clone, Debug)]
pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self, CoderError> {
        if data.len() < 4 {
            return Err(CoderError::Truncated);
        }
        let code = u32::from_be_bytes([data[0], data[1], data[2], data[3]]);
        Ok(Self {
            data,
            pos: 4,
            code,
            range: u32::MAX,
        })
    }

    pub fn range(&self) -> u32 {
        self.range
    }

    /// Bytes not yet consumed.
    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    /// Cumulative value the next symbol falls on.
    fn target(&self) -> Result<(u32, u32), CoderError> {
        let r = self.range >> PRECISION_BITS;
        let t = self.code / r;
        if t >= TOTAL_FREQUENCY {
            return Err(CoderError::Corrupt);
        }
        Ok((t, r))
    }

    fn consume(&mut self, r: u32, cumulative: u32, frequency: u32) -> Result<(), CoderError> {
        self.code -= r * cumulative;
        self.range = r * frequency;
        while self.range < TOP {
            let byte = *self.data.get(self.pos).ok_or(CoderError::Truncated)?;
            self.pos += 1;
            self.code = (self.code << 8) | byte as u32;
            self.range <<= 8;
        }
        Ok(())
    }

    pub fn decode_symbol(&mut self, pmf: &QuantizedPmf) -> Result<i32, CoderError> {
        let (t, r) = self.target()?;
        let bucket = pmf.bucket_for(t);
        let slot = pmf.bucket_slot(bucket);
        self.consume(r, slot.cumulative, slot.frequency)?;
        match pmf.bucket_symbol(bucket) {
            Some(s) => Ok(s),
            None => {
                let (raw, r) = self.target()?;
                self.consume(r, raw, 1)?;
                let value = raw as u16 as i16 as i32;
                if value >= pmf.min_symbol() && value <= pmf.max_symbol() {
                    return Err(CoderError::Corrupt);
                }
                Ok(value)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probability::ScaleTable;
    use crate::rng::Lcg64;
    use alloc::vec;

    fn uniform4() -> QuantizedPmf {
        QuantizedPmf::from_frequencies(0, &[16383, 16383, 16383, 16383, 4]).unwrap()
    }

    #[test]
    fn empty_stream() {
        let bytes = Encoder::new().finish();
        assert!(bytes.len() <= 8);
        let d = Decoder::new(&bytes).unwrap();
        assert_eq!(d.remaining(), 0);
    }

    #[test]
    fn flush_is_idempotent() {
        let mut e = Encoder::new();
        e.encode_symbol(&uniform4(), 2).unwrap();
        let a = e.flush().to_vec();
        let b = e.flush().to_vec();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_stream_length() {
        let pmf = uniform4();
        let mut rng = Lcg64::new(1);
        let mut e = Encoder::new();
        let symbols: Vec<i32> = (0..1000).map(|_| rng.below(4) as i32).collect();
        for &s in &symbols {
            e.encode_symbol(&pmf, s).unwrap();
        }
        let bytes = e.finish();
        assert!((248..=266).contains(&bytes.len()), "{}", bytes.len());
        let mut d = Decoder::new(&bytes).unwrap();
        for &s in &symbols {
            assert_eq!(d.decode_symbol(&pmf).unwrap(), s);
        }
        assert_eq!(d.remaining(), 0);
    }

    #[test]
    fn near_deterministic_table_costs_almost_nothing() {
        let pmf = QuantizedPmf::from_frequencies(0, &[65533, 1, 1, 1]).unwrap();
        let mut e = Encoder::new();
        for _ in 0..10_000 {
            e.encode_symbol(&pmf, 0).unwrap();
        }
        let bytes = e.finish();
        // 10^4 * -log2(65533/65536) = 0.66 bits, plus the 32-bit flush.
        assert!(bytes.len() <= 5, "{}", bytes.len());
    }

    #[test]
    fn escapes_round_trip() {
        let pmf = QuantizedPmf::gaussian(0.0, 1.0, 4);
        let symbols = [0, 5, -5, 300, -32768, 32767, 4, -4, 1000];
        let mut e = Encoder::new();
        for &s in &symbols {
            e.encode_symbol(&pmf, s).unwrap();
        }
        assert_eq!(e.encode_symbol(&pmf, 40_000), Err(CoderError::Unencodable(40_000)));
        let bytes = e.finish();
        let mut d = Decoder::new(&bytes).unwrap();
        for &s in &symbols {
            assert_eq!(d.decode_symbol(&pmf).unwrap(), s);
        }
    }

    #[test]
    fn truncation_is_detected() {
        let pmf = QuantizedPmf::gaussian(0.0, 3.0, 20);
        let mut rng = Lcg64::new(3);
        let mut e = Encoder::new();
        for _ in 0..500 {
            e.encode_symbol(&pmf, rng.below(11) as i32 - 5).unwrap();
        }
        let bytes = e.finish();
        assert_eq!(Decoder::new(&bytes[..3]).unwrap_err(), CoderError::Truncated);
        let mut d = Decoder::new(&bytes[..bytes.len() / 2]).unwrap();
        let mut err = None;
        for _ in 0..500 {
            if let Err(e) = d.decode_symbol(&pmf) {
                err = Some(e);
                break;
            }
        }
        assert_eq!(err, Some(CoderError::Truncated));
    }

    #[test]
    fn carries_propagate_through_ff_runs() {
        // Tables concentrated on the top bucket push `low` toward the carry
        // boundary and exercise pending 0xFF bytes.
        let top = QuantizedPmf::from_frequencies(0, &[1, 1, 65533, 1]).unwrap();
        let mixed = QuantizedPmf::gaussian(0.0, 0.5, 2);
        let mut rng = Lcg64::new(11);
        let mut seq = vec![];
        let mut e = Encoder::new();
        for i in 0..20_000 {
            let (pmf, s) = if i % 7 == 0 {
                (&mixed, rng.below(5) as i32 - 2)
            } else {
                (&top, 2)
            };
            e.encode_symbol(pmf, s).unwrap();
            seq.push((pmf.clone(), s));
        }
        let bytes = e.finish();
        let mut d = Decoder::new(&bytes).unwrap();
        for (pmf, s) in &seq {
            assert_eq!(d.decode_symbol(pmf).unwrap(), *s);
        }
        assert_eq!(d.remaining(), 0);
    }

    #[test]
    fn range_invariant_holds_on_both_sides() {
        let t = ScaleTable::default();
        let mut rng = Lcg64::new(4);
        let tables: Vec<QuantizedPmf> = (0..16)
            .map(|i| QuantizedPmf::gaussian(rng.symmetric(3.0) as f64, t.level(i * 4) as f64, 30))
            .collect();
        let mut e = Encoder::new();
        let mut seq = vec![];
        for _ in 0..2000 {
            let k = rng.below(16) as usize;
            let s = rng.below(41) as i32 - 20;
            e.encode_symbol(&tables[k], s).unwrap();
            assert!(e.range() >= TOP);
            seq.push((k, s));
        }
        let bytes = e.finish();
        let mut d = Decoder::new(&bytes).unwrap();
        for (k, s) in seq {
            assert_eq!(d.decode_symbol(&tables[k]).unwrap(), s);
            assert!(d.range() >= TOP);
        }
    }
}
