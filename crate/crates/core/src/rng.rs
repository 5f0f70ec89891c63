//! Deterministic, labelled random substreams.
//!
//! Every stochastic operand in the simulator draws from its own substream,
//! addressed by a root seed and a [`Label`]. Two operands that must be
//! statistically independent (the inputs of an XNOR multiplier, say) are given
//! different labels; the same `(seed, label)` pair always replays the same bits.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Role an operand plays inside an update datapath.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Theta = 1,
    Gradient = 2,
    LearningRate = 3,
    Select = 4,
    Velocity = 5,
    Momentum = 6,
    VelocitySelect = 7,
    VelocityReencode = 8,
    Device = 9,
    Shuffle = 10,
    Init = 11,
    Other = 12,
}

/// Address of a substream: `(tensor, index, role, step)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Label {
    pub tensor: u32,
    pub index: u64,
    pub role: Role,
    pub step: u64,
}

impl Label {
    pub const fn new(tensor: u32, index: u64, role: Role, step: u64) -> Self {
        Self {
            tensor,
            index,
            role,
            step,
        }
    }

    /// Label with only a role set; handy for one-off draws in tests and tools.
    pub const fn role(role: Role) -> Self {
        Self::new(0, 0, role, 0)
    }

    fn fold(&self) -> u64 {
        let mut h = splitmix64(self.tensor as u64 ^ 0x6d65_6d73_6300_0000);
        h = splitmix64(h ^ self.index);
        h = splitmix64(h ^ self.role as u64);
        splitmix64(h ^ self.step)
    }
}

/// SplitMix64 finalizer, used to fold label fields into a stream id.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seeded generator positioned on one substream.
///
/// Backed by ChaCha8: the root seed becomes the key and the folded label the
/// stream id, so substreams are independent by construction.
#[derive(Clone, Debug)]
pub struct RngState {
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64, label: Label) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(label.fold());
        Self { inner }
    }

    /// Generator on the root stream of `seed`.
    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, Label::role(Role::Other))
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
