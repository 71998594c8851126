//! Key types accepted by the index.
//!
//! Two 8-byte representations are supported: IEEE doubles (the geographic
//! families) and unsigned 64-bit integers (the synthetic integer families).
//! Models always work on `f64` offsets from a node's lower bound, so integer
//! keys keep full precision inside narrow ranges.

use std::fmt::{Debug, Display};

use rand::Rng;

/// Whether a key family is stored as integers or reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyKind {
    Real,
    Integer,
}

impl KeyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyKind::Real => "real",
            KeyKind::Integer => "int",
        }
    }

    /// Step between consecutive adversarial keys (1e-13 for reals, 1 for integers).
    pub fn default_increment(self) -> f64 {
        match self {
            KeyKind::Real => 1e-13,
            KeyKind::Integer => 1.0,
        }
    }
}

pub trait Key: Copy + PartialOrd + Debug + Display + Default + Send + Sync + 'static {
    const KIND: KeyKind;

    /// `self - base` as a double. Callers guarantee `self >= base`.
    fn offset_from(self, base: Self) -> f64;

    /// A key strictly inside `(lo, hi)`, or `None` once the range can no
    /// longer be halved at this representation's resolution.
    fn halve(lo: Self, hi: Self) -> Option<Self>;

    /// One key unit below, saturating at the representable minimum.
    fn unit_below(self) -> Self;

    /// One key unit above, saturating at the representable maximum.
    fn unit_above(self) -> Self;

    /// Smallest representable key greater than `self` (saturating).
    fn succ(self) -> Self;

    /// Domain used by an index bulk-loaded from no keys.
    fn full_domain() -> (Self, Self);

    fn to_f64(self) -> f64;

    /// Nearest representable key (integers round and saturate).
    fn from_f64(x: f64) -> Self;

    /// `self + steps * increment`; integer keys use a rounded increment of at least 1.
    fn offset_by(self, steps: u64, increment: f64) -> Self;

    fn to_bits(self) -> u64;

    /// Order-preserving map onto `u64` (reals: sign-flipped bit pattern).
    fn to_ordered(self) -> u64;

    fn from_ordered(bits: u64) -> Self;

    fn from_bits(bits: u64) -> Self;

    /// Uniform draw from `[lo, hi)`; returns `lo` for an empty range.
    fn uniform_in<R: Rng + ?Sized>(lo: Self, hi: Self, rng: &mut R) -> Self;
}

impl Key for f64 {
    const KIND: KeyKind = KeyKind::Real;

    fn offset_from(self, base: Self) -> f64 {
        self - base
    }

    fn halve(lo: Self, hi: Self) -> Option<Self> {
        let mid = lo + (hi - lo) / 2.0;
        let mid = if mid.is_finite() { mid } else { lo / 2.0 + hi / 2.0 };
        (lo < mid && mid < hi).then_some(mid)
    }

    fn unit_below(self) -> Self {
        let y = self - 1.0;
        if y < self {
            y
        } else {
            self.next_down()
        }
    }

    fn unit_above(self) -> Self {
        let y = self + 1.0;
        if y > self {
            y
        } else {
            self.next_up()
        }
    }

    fn succ(self) -> Self {
        if self < f64::MAX {
            self.next_up()
        } else {
            self
        }
    }

    fn full_domain() -> (Self, Self) {
        (-f64::MAX / 2.0, f64::MAX / 2.0)
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn offset_by(self, steps: u64, increment: f64) -> Self {
        self + steps as f64 * increment
    }

    fn to_bits(self) -> u64 {
        f64::to_bits(self)
    }

    fn from_bits(bits: u64) -> Self {
        f64::from_bits(bits)
    }

    fn to_ordered(self) -> u64 {
        let b = f64::to_bits(self);
        if b >> 63 == 1 {
            !b
        } else {
            b | 1 << 63
        }
    }

    fn from_ordered(bits: u64) -> Self {
        f64::from_bits(if bits >> 63 == 1 { bits & !(1 << 63) } else { !bits })
    }

    fn uniform_in<R: Rng + ?Sized>(lo: Self, hi: Self, rng: &mut R) -> Self {
        if !(lo < hi) {
            return lo;
        }
        let x = lo + rng.random::<f64>() * (hi - lo);
        if x < hi {
            x
        } else {
            lo
        }
    }
}

impl Key for u64 {
    const KIND: KeyKind = KeyKind::Integer;

    fn offset_from(self, base: Self) -> f64 {
        (self - base) as f64
    }

    fn halve(lo: Self, hi: Self) -> Option<Self> {
        (hi > lo && hi - lo >= 2).then(|| lo + (hi - lo) / 2)
    }

    fn unit_below(self) -> Self {
        self.saturating_sub(1)
    }

    fn unit_above(self) -> Self {
        self.saturating_add(1)
    }

    fn succ(self) -> Self {
        self.saturating_add(1)
    }

    fn full_domain() -> (Self, Self) {
        (0, u64::MAX)
    }

    fn to_ordered(self) -> u64 {
        self
    }

    fn from_ordered(bits: u64) -> Self {
        bits
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn from_f64(x: f64) -> Self {
        if x <= 0.0 {
            0
        } else if x >= u64::MAX as f64 {
            u64::MAX
        } else {
            x.round() as u64
        }
    }

    fn offset_by(self, steps: u64, increment: f64) -> Self {
        let inc = (increment.round() as u64).max(1);
        self.saturating_add(steps.saturating_mul(inc))
    }

    fn to_bits(self) -> u64 {
        self
    }

    fn from_bits(bits: u64) -> Self {
        bits
    }

    fn uniform_in<R: Rng + ?Sized>(lo: Self, hi: Self, rng: &mut R) -> Self {
        if hi <= lo {
            lo
        } else {
            rng.random_range(lo..hi)
        }
    }
}
