//! Exact algebra of X-monomials `X_S f(Z)` on a chain of `L` spins.
//!
//! Sites are numbered `0..L`. A set of sites is a `u64` mask with bit `x`
//! for site `x`; a classical configuration uses the same layout with bit
//! value 1 meaning `σ_x = +1`. Dense matrices use the Z-product basis in
//! lexicographic order with site 0 as the most significant bit (see
//! [`dense_index`]).

mod diag;
mod monomial;
mod sum;

pub use diag::DiagFn;
pub use monomial::{MonomialJson, XMonomial};
pub use sum::{local_components, NormValue, OperatorSum, Parity, SumJson};

use serde::{Deserialize, Serialize};

pub use num_complex::Complex64 as C64;

/// Longest chain representable by a `u64` site mask.
pub const MAX_CHAIN: usize = 63;

/// Coefficients whose magnitude falls below this are dropped from normal forms.
pub const DEFAULT_DROP_TOL: f64 = 1e-14;

/// A non-empty discrete interval `[lo, hi]` of sites (inclusive).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", try_from = "[usize; 2]")]
pub struct Interval {
    pub lo: usize,
    pub hi: usize,
}

impl Interval {
    pub fn new(lo: usize, hi: usize) -> Self {
        assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: usize) -> Self {
        Interval { lo: x, hi: x }
    }

    /// Number of sites, `|I|`.
    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mask(&self) -> u64 {
        range_mask(self.lo, self.hi)
    }

    pub fn contains(&self, x: usize) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// `Ī = [lo - 1, hi + 1] ∩ {0..L}`.
    pub fn extended(&self, chain_len: usize) -> Interval {
        Interval { lo: self.lo.saturating_sub(1), hi: (self.hi + 1).min(chain_len - 1) }
    }

    /// Sites within distance `n` of the interval, clipped to the chain.
    pub fn grown(&self, n: usize, chain_len: usize) -> Interval {
        Interval { lo: self.lo.saturating_sub(n), hi: (self.hi + n).min(chain_len - 1) }
    }

    /// Smallest interval containing every set bit, if any.
    pub fn hull_of_mask(mask: u64) -> Option<Interval> {
        if mask == 0 {
            return None;
        }
        Some(Interval { lo: mask.trailing_zeros() as usize, hi: 63 - mask.leading_zeros() as usize })
    }

    pub fn hull_opt(a: Option<Interval>, b: Option<Interval>) -> Option<Interval> {
        match (a, b) {
            (Some(a), Some(b)) => Some(a.hull(&b)),
            (a, None) => a,
            (None, b) => b,
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = usize> {
        self.lo..=self.hi
    }
}

impl From<Interval> for [usize; 2] {
    fn from(iv: Interval) -> Self {
        [iv.lo, iv.hi]
    }
}

impl TryFrom<[usize; 2]> for Interval {
    type Error = String;
    fn try_from(v: [usize; 2]) -> Result<Self, Self::Error> {
        if v[0] <= v[1] {
            Ok(Interval { lo: v[0], hi: v[1] })
        } else {
            Err(format!("interval [{}, {}] is empty", v[0], v[1]))
        }
    }
}

/// Mask with bits `lo..=hi` set.
pub fn range_mask(lo: usize, hi: usize) -> u64 {
    debug_assert!(lo <= hi && hi < 64);
    let width = hi - lo + 1;
    let ones = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    ones << lo
}

/// Iterate over the sites of a mask in increasing order.
pub fn sites_of(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let x = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(x)
        }
    })
}

/// A classical Z-basis configuration `σ ∈ {±1}^L`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    bits: u64,
    len: usize,
}

impl SpinConfig {
    pub fn new(bits: u64, len: usize) -> Self {
        assert!(len <= MAX_CHAIN);
        SpinConfig { bits: bits & range_mask_or_zero(len), len }
    }

    pub fn all_down(len: usize) -> Self {
        SpinConfig::new(0, len)
    }

    pub fn from_spins(spins: &[i8]) -> Self {
        let bits = spins.iter().enumerate().filter(|(_, &s)| s > 0).fold(0u64, |b, (x, _)| b | (1 << x));
        SpinConfig::new(bits, spins.len())
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn spin(&self, x: usize) -> f64 {
        spin(self.bits, x)
    }

    pub fn flip(&self, mask: u64) -> SpinConfig {
        SpinConfig::new(self.bits ^ mask, self.len)
    }

    pub fn dense_index(&self) -> usize {
        dense_index(self.bits, self.len)
    }

    pub fn from_dense_index(index: usize, len: usize) -> Self {
        SpinConfig::new(config_of_index(index, len), len)
    }

    /// All `2^L` configurations in dense-basis order.
    pub fn all(len: usize) -> impl Iterator<Item = SpinConfig> {
        (0..1usize << len).map(move |i| SpinConfig::from_dense_index(i, len))
    }
}

fn range_mask_or_zero(len: usize) -> u64 {
    if len == 0 {
        0
    } else {
        range_mask(0, len - 1)
    }
}

/// `σ_x ∈ {±1}` read from a configuration word.
#[inline]
pub fn spin(bits: u64, x: usize) -> f64 {
    if bits >> x & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Dense-basis index of a configuration word: site 0 is the most significant bit.
#[inline]
pub fn dense_index(bits: u64, len: usize) -> usize {
    if len == 0 {
        return 0;
    }
    (bits.reverse_bits() >> (64 - len)) as usize
}

/// Inverse of [`dense_index`].
#[inline]
pub fn config_of_index(index: usize, len: usize) -> u64 {
    if len == 0 {
        return 0;
    }
    (index as u64).reverse_bits() >> (64 - len)
}

pub(crate) fn check_chain(len: usize) -> crate::Result<()> {
    if len == 0 || len > MAX_CHAIN {
        Err(crate::Error::ChainLength(len))
    } else {
        Ok(())
    }
}
