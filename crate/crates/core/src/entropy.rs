//! Order-0 range coder used for both the base layer and the internal
//! residual coder.
//!
//! Payload layout: one mode byte followed by the range-coded body.
//!
//! | mode | model                                                        |
//! |------|--------------------------------------------------------------|
//! | 0    | adaptive order-0: counts start at 1, +32 per coded symbol,   |
//! |      | all counts halved (rounding up) once the total exceeds       |
//! |      | `max(2^16, 2 · alphabet)`                                    |
//! | 1    | flat: every symbol has frequency 1                           |
//!
//! The encoder codes with both models and keeps the shorter body (mode 0 on
//! a tie), which bounds the cost of incompressible input to one byte plus the
//! coder flush.
//!
//! The body is a carry-propagating range coder with a 64-bit `low` and a
//! 32-bit `range`, renormalized a byte at a time whenever `range < 2^24`. The
//! decoder consumes exactly the bytes the encoder wrote; running out is
//! reported as truncation and leftovers as corruption.

use crate::error::{invalid, Error, Result};

pub const MAX_ALPHABET: usize = 1 << 16;

const TOP: u32 = 1 << 24;
const INCREMENT: u32 = 32;
const RESCALE_FLOOR: u32 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodingModel {
    Adaptive = 0,
    Uniform = 1,
}

impl CodingModel {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Self::Adaptive),
            1 => Ok(Self::Uniform),
            other => Err(Error::CorruptPayload(format!("unknown coding mode {other}"))),
        }
    }
}

/// Cumulative frequencies over a Fenwick tree so that lookups stay
/// logarithmic for the 2047- and 65536-symbol alphabets.
struct AdaptiveModel {
    counts: Vec<u32>,
    tree: Vec<u32>,
    total: u32,
    limit: u32,
}

impl AdaptiveModel {
    fn new(alphabet: usize) -> Self {
        let mut model = Self {
            counts: vec![1; alphabet],
            tree: vec![0; alphabet + 1],
            total: alphabet as u32,
            limit: RESCALE_FLOOR.max(2 * alphabet as u32),
        };
        model.rebuild();
        model
    }

    fn rebuild(&mut self) {
        let n = self.counts.len();
        self.tree.iter_mut().for_each(|t| *t = 0);
        for i in 1..=n {
            self.tree[i] += self.counts[i - 1];
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                self.tree[parent] += self.tree[i];
            }
        }
        self.total = self.counts.iter().sum();
    }

    /// Sum of counts of symbols `< symbol`.
    fn cum(&self, symbol: usize) -> u32 {
        let mut i = symbol;
        let mut sum = 0;
        while i > 0 {
            sum += self.tree[i];
            i &= i - 1;
        }
        sum
    }

    /// Symbol whose interval contains `target`, and that interval's low end.
    fn find(&self, target: u32) -> (usize, u32) {
        let n = self.counts.len();
        let mut pos = 0;
        let mut rem = target;
        let mut step = 1usize << (usize::BITS - 1 - n.leading_zeros());
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        (pos, target - rem)
    }

    fn update(&mut self, symbol: usize) {
        self.counts[symbol] += INCREMENT;
        self.total += INCREMENT;
        let mut i = symbol + 1;
        while i < self.tree.len() {
            self.tree[i] += INCREMENT;
            i += i & i.wrapping_neg();
        }
        if self.total > self.limit {
            self.counts.iter_mut().for_each(|c| *c = c.div_ceil(2));
            self.rebuild();
        }
    }
}

struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl RangeEncoder {
    fn new(out: Vec<u8>) -> Self {
        Self { low: 0, range: u32::MAX, cache: 0, cache_size: 1, out }
    }

    fn encode(&mut self, cum: u32, freq: u32, total: u32) {
        let r = self.range / total;
        self.low += u64::from(r) * u64::from(cum);
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
    scale: u32,
}

impl<'a> RangeDecoder<'a> {
    fn new(data: &'a [u8]) -> Result<Self> {
        if data.len() < 5 {
            return Err(Error::TruncatedPayload);
        }
        if data[0] != 0 {
            return Err(Error::CorruptPayload("range coder lead byte is not zero".into()));
        }
        Ok(Self {
            data,
            pos: 5,
            range: u32::MAX,
            code: u32::from_be_bytes(data[1..5].try_into().unwrap()),
            scale: 1,
        })
    }

    fn target(&mut self, total: u32) -> Result<u32> {
        self.scale = self.range / total;
        let v = self.code / self.scale;
        if v >= total {
            return Err(Error::CorruptPayload("code outside coding interval".into()));
        }
        Ok(v)
    }

    fn consume(&mut self, cum: u32, freq: u32) -> Result<()> {
        self.code -= self.scale * cum;
        self.range = self.scale * freq;
        while self.range < TOP {
            let byte = *self.data.get(self.pos).ok_or(Error::TruncatedPayload)?;
            self.pos += 1;
            self.code = (self.code << 8) | u32::from(byte);
            self.range <<= 8;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::CorruptPayload(format!(
                "{} trailing bytes after last symbol",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn check_alphabet(alphabet: usize) -> Result<()> {
    if !(2..=MAX_ALPHABET).contains(&alphabet) {
        return Err(invalid(format!("alphabet size must be in [2, {MAX_ALPHABET}], got {alphabet}")));
    }
    Ok(())
}

/// Encodes with a fixed model. Mostly useful for tests and benchmarks;
/// [`entropy_encode`] picks the model itself.
pub fn entropy_encode_with(symbols: &[u32], alphabet: usize, model: CodingModel) -> Result<Vec<u8>> {
    check_alphabet(alphabet)?;
    if let Some(s) = symbols.iter().find(|&&s| s as usize >= alphabet) {
        return Err(invalid(format!("symbol {s} outside alphabet of {alphabet}")));
    }
    let mut enc = RangeEncoder::new(vec![model as u8]);
    match model {
        CodingModel::Adaptive => {
            let mut m = AdaptiveModel::new(alphabet);
            for &s in symbols {
                let s = s as usize;
                enc.encode(m.cum(s), m.counts[s], m.total);
                m.update(s);
            }
        }
        CodingModel::Uniform => {
            for &s in symbols {
                enc.encode(s, 1, alphabet as u32);
            }
        }
    }
    Ok(enc.finish())
}

pub fn entropy_encode(symbols: &[u32], alphabet: usize) -> Result<Vec<u8>> {
    let adaptive = entropy_encode_with(symbols, alphabet, CodingModel::Adaptive)?;
    let uniform = entropy_encode_with(symbols, alphabet, CodingModel::Uniform)?;
    Ok(if uniform.len() < adaptive.len() { uniform } else { adaptive })
}

pub fn entropy_decode(payload: &[u8], count: usize, alphabet: usize) -> Result<Vec<u32>> {
    check_alphabet(alphabet)?;
    let (&mode, body) = payload.split_first().ok_or(Error::TruncatedPayload)?;
    let mode = CodingModel::from_byte(mode)?;
    let mut dec = RangeDecoder::new(body)?;
    let mut out = Vec::with_capacity(count);
    match mode {
        CodingModel::Adaptive => {
            let mut m = AdaptiveModel::new(alphabet);
            for _ in 0..count {
                let v = dec.target(m.total)?;
                let (s, cum) = m.find(v);
                dec.consume(cum, m.counts[s])?;
                m.update(s);
                out.push(s as u32);
            }
        }
        CodingModel::Uniform => {
            for _ in 0..count {
                let s = dec.target(alphabet as u32)?;
                dec.consume(s, 1)?;
                out.push(s);
            }
        }
    }
    dec.finish()?;
    Ok(out)
}
