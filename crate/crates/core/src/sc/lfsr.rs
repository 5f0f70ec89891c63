use crate::error::{contract, Result};

use super::{BitStream, Priori};

pub const DEFAULT_LFSR_WIDTH: u32 = 16;
/// Maximal-length Fibonacci taps for a 16-bit register (x^16 + x^15 + x^13 + x^4 + 1).
pub const DEFAULT_LFSR_TAPS: [u32; 4] = [16, 15, 13, 4];

/// Fibonacci linear-feedback shift register.
///
/// Taps are numbered 1..=width in the usual polynomial notation. The register
/// shifts right; the feedback bit enters at the top.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LfsrState {
    width: u32,
    taps: Vec<u32>,
    register: u32,
}

impl LfsrState {
    pub fn new(width: u32, taps: &[u32], seed: u32) -> Result<Self> {
        if !(2..=32).contains(&width) {
            return Err(contract(format!("LFSR width {width} must be in 2..=32")));
        }
        if taps.is_empty() || taps.iter().any(|&t| t == 0 || t > width) {
            return Err(contract(format!("LFSR taps {taps:?} must lie in 1..={width}")));
        }
        let register = seed & Self::mask_for(width);
        if register == 0 {
            return Err(contract("LFSR register must not be all-zero"));
        }
        Ok(Self {
            width,
            taps: taps.to_vec(),
            register,
        })
    }

    /// 16-bit register with the default maximal-length taps.
    pub fn default_with_seed(seed: u32) -> Result<Self> {
        Self::new(DEFAULT_LFSR_WIDTH, &DEFAULT_LFSR_TAPS, seed)
    }

    fn mask_for(width: u32) -> u32 {
        if width == 32 {
            u32::MAX
        } else {
            (1 << width) - 1
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn taps(&self) -> &[u32] {
        &self.taps
    }

    pub fn register(&self) -> u32 {
        self.register
    }

    /// Advance one step and return the new register word.
    pub fn step(&mut self) -> u32 {
        let fb = self
            .taps
            .iter()
            .fold(0, |acc, &t| acc ^ (self.register >> (self.width - t)))
            & 1;
        self.register = (self.register >> 1) | (fb << (self.width - 1));
        self.register
    }

    /// Number of steps until the register returns to its current state.
    ///
    /// Gives up after `2^width` steps and returns `None`; a register that
    /// collapses onto a shorter cycle not containing the start never returns.
    pub fn period(&self) -> Option<u64> {
        let mut probe = self.clone();
        let start = probe.register;
        let limit = 1u64 << self.width;
        (1..=limit).find(|_| probe.step() == start)
    }

    pub fn is_maximal(&self) -> bool {
        self.period() == Some((1u64 << self.width) - 1)
    }
}

/// Comparator stream generator: bit `i` is one when the `i`-th LFSR word,
/// read as a fraction of `2^width`, is below the target probability.
pub fn lfsr_stream(
    value: f64,
    len: usize,
    priori: Priori,
    lfsr: &mut LfsrState,
) -> Result<BitStream> {
    let p = priori.probability_of(value)?;
    if lfsr.register == 0 {
        return Err(contract("LFSR register must not be all-zero"));
    }
    let threshold = p * (1u64 << lfsr.width) as f64;
    BitStream::from_bits((0..len).map(|_| (lfsr.step() as f64) < threshold), priori)
}
