//! Stochastic numbers and their gate-level arithmetic.
//!
//! A value is carried by the density of ones in a [`BitStream`]. Under the
//! unipolar convention a stream with a fraction `x` of ones means `x`; under
//! the bipolar convention it means `2x - 1`. Multiplication is a single gate
//! (AND for unipolar, XNOR for bipolar) and scaled addition is a multiplexer
//! driven by an independent select stream.
//!
//! All gate operations assume their operands were drawn from independent
//! substreams. Feeding a stream into both inputs of a multiplier does not
//! square it: `xnor_mul(a, a)` is all ones.

mod lfsr;

pub use lfsr::{lfsr_stream, LfsrState, DEFAULT_LFSR_TAPS, DEFAULT_LFSR_WIDTH};

use rand::Rng;

use crate::error::{contract, Error, Result};

const WORD_BITS: usize = 64;

/// Value range convention of a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Priori {
    /// Values in `[0, 1]`.
    Unipolar,
    /// Values in `[-1, 1]`.
    Bipolar,
}

impl Priori {
    pub fn range(self) -> (f64, f64) {
        match self {
            Priori::Unipolar => (0.0, 1.0),
            Priori::Bipolar => (-1.0, 1.0),
        }
    }

    /// Bit probability that encodes `value`, after a range check.
    pub fn probability_of(self, value: f64) -> Result<f64> {
        if !value.is_finite() {
            return Err(Error::Numeric(value));
        }
        let (lo, hi) = self.range();
        if value < lo || value > hi {
            return Err(Error::Range { value, lo, hi });
        }
        Ok(match self {
            Priori::Unipolar => value,
            Priori::Bipolar => (value + 1.0) / 2.0,
        })
    }

    /// Value carried by a bit probability.
    pub fn value_of(self, p: f64) -> f64 {
        match self {
            Priori::Unipolar => p,
            Priori::Bipolar => 2.0 * p - 1.0,
        }
    }
}

/// A packed stochastic bit stream.
///
/// Bits are stored little-endian within `u64` words; bits past `len` in the
/// last word are always zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitStream {
    words: Vec<u64>,
    len: usize,
    priori: Priori,
}

impl BitStream {
    fn zeroed(len: usize, priori: Priori) -> Result<Self> {
        if len == 0 {
            return Err(contract("bit stream length must be at least 1"));
        }
        Ok(Self {
            words: vec![0; len.div_ceil(WORD_BITS)],
            len,
            priori,
        })
    }

    pub fn zeros(len: usize, priori: Priori) -> Result<Self> {
        Self::zeroed(len, priori)
    }

    pub fn ones(len: usize, priori: Priori) -> Result<Self> {
        let mut s = Self::zeroed(len, priori)?;
        s.words.iter_mut().for_each(|w| *w = !0);
        s.mask_tail();
        Ok(s)
    }

    /// Build a stream from individual bits.
    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I, priori: Priori) -> Result<Self> {
        let mut words = Vec::new();
        let mut len = 0usize;
        for b in bits {
            if len.is_multiple_of(WORD_BITS) {
                words.push(0);
            }
            if b {
                *words.last_mut().unwrap() |= 1 << (len % WORD_BITS);
            }
            len += 1;
        }
        if len == 0 {
            return Err(contract("bit stream length must be at least 1"));
        }
        Ok(Self { words, len, priori })
    }

    /// Parse a string of `0`/`1` characters, first character is bit 0.
    pub fn parse(bits: &str, priori: Priori) -> Result<Self> {
        let bits = bits
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(contract(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(bits, priori)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn priori(&self) -> Priori {
        self.priori
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.bit(i))
    }

    pub fn popcount(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Fraction of ones, `x`.
    pub fn mean(&self) -> f64 {
        self.popcount() as f64 / self.len as f64
    }

    /// Reinterpret the same bits under another convention.
    pub fn with_priori(mut self, priori: Priori) -> Self {
        self.priori = priori;
        self
    }

    fn mask_tail(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << rem) - 1;
        }
    }

    fn zip_words(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Self {
        let mut out = Self {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            len: self.len,
            priori: self.priori,
        };
        out.mask_tail();
        out
    }
}

/// Draw `len` independent bits, each one with probability `p`.
pub fn bernoulli_stream<R: Rng + ?Sized>(
    p: f64,
    len: usize,
    priori: Priori,
    rng: &mut R,
) -> Result<BitStream> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Range {
            value: p,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let mut s = BitStream::zeroed(len, priori)?;
    if p >= 1.0 {
        return BitStream::ones(len, priori);
    }
    if p > 0.0 {
        for (wi, w) in s.words.iter_mut().enumerate() {
            let n = (len - wi * WORD_BITS).min(WORD_BITS);
            let mut acc = 0u64;
            for b in 0..n {
                if rng.random::<f64>() < p {
                    acc |= 1 << b;
                }
            }
            *w = acc;
        }
    }
    Ok(s)
}

/// Encode `value` as a stream of i.i.d. Bernoulli bits.
pub fn encode<R: Rng + ?Sized>(
    value: f64,
    len: usize,
    priori: Priori,
    rng: &mut R,
) -> Result<BitStream> {
    let p = priori.probability_of(value)?;
    bernoulli_stream(p, len, priori, rng)
}

/// Value carried by a stream: `x` (unipolar) or `2x - 1` (bipolar).
pub fn decode(stream: &BitStream) -> f64 {
    let k = stream.popcount() as i64;
    let n = stream.len as i64;
    match stream.priori {
        Priori::Unipolar => k as f64 / n as f64,
        // (2k - N) / N in integers first, so that NOT-ing the stream
        // negates the result exactly.
        Priori::Bipolar => (2 * k - n) as f64 / n as f64,
    }
}

fn check_pair(a: &BitStream, b: &BitStream, want: Option<Priori>, op: &str) -> Result<()> {
    if a.len != b.len {
        return Err(contract(format!(
            "{op}: stream lengths differ ({} vs {})",
            a.len, b.len
        )));
    }
    if let Some(p) = want {
        if a.priori != p || b.priori != p {
            return Err(contract(format!("{op}: operands must be {p:?}")));
        }
    } else if a.priori != b.priori {
        return Err(contract(format!("{op}: operands use different priori")));
    }
    Ok(())
}

/// Bipolar multiplication: bitwise XNOR.
pub fn xnor_mul(a: &BitStream, b: &BitStream) -> Result<BitStream> {
    check_pair(a, b, Some(Priori::Bipolar), "xnor_mul")?;
    Ok(a.zip_words(b, |x, y| !(x ^ y)))
}

/// Unipolar multiplication: bitwise AND.
pub fn and_mul(a: &BitStream, b: &BitStream) -> Result<BitStream> {
    check_pair(a, b, Some(Priori::Unipolar), "and_mul")?;
    Ok(a.zip_words(b, |x, y| x & y))
}

/// Multiplexer addition: takes `a` where `select` is one, `b` elsewhere.
///
/// With a select stream of probability `s` the result carries
/// `s * decode(a) + (1 - s) * decode(b)`.
pub fn scaled_add(a: &BitStream, b: &BitStream, select: &BitStream) -> Result<BitStream> {
    check_pair(a, b, None, "scaled_add")?;
    if select.len != a.len {
        return Err(contract(format!(
            "scaled_add: select length {} differs from operand length {}",
            select.len, a.len
        )));
    }
    let mut out = a.clone();
    for ((o, &bw), &sw) in out.words.iter_mut().zip(&b.words).zip(&select.words) {
        *o = (*o & sw) | (bw & !sw);
    }
    Ok(out)
}

/// Bipolar negation: bitwise NOT.
pub fn negate(a: &BitStream) -> Result<BitStream> {
    if a.priori != Priori::Bipolar {
        return Err(contract("negate: operand must be bipolar"));
    }
    let mut out = a.clone();
    out.words.iter_mut().for_each(|w| *w = !*w);
    out.mask_tail();
    Ok(out)
}
