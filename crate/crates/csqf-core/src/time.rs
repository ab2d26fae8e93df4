//! Exact time arithmetic on integer nanoseconds.
//!
//! All durations in the engine are whole nanoseconds. File formats speak
//! microseconds; the loaders convert on the boundary. Keeping everything
//! integral makes ceiling divisions, divisibility checks and hyper-cycle
//! LCMs exact — no float rounding can shift a packet into the wrong cycle.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// A non-negative duration in whole nanoseconds.
#[derive(
    Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Nanos(u64);

pub const NS_PER_US: u64 = 1_000;
pub const NS_PER_MS: u64 = 1_000_000;

impl Nanos {
    pub const ZERO: Nanos = Nanos(0);

    pub const fn from_ns(ns: u64) -> Nanos {
        Nanos(ns)
    }

    pub const fn from_us(us: u64) -> Nanos {
        Nanos(us * NS_PER_US)
    }

    pub const fn from_ms(ms: u64) -> Nanos {
        Nanos(ms * NS_PER_MS)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    /// Truncating; exact for every value produced by the µs-based loaders.
    pub const fn as_us(self) -> u64 {
        self.0 / NS_PER_US
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_mul(self, k: u64) -> Option<Nanos> {
        self.0.checked_mul(k).map(Nanos)
    }

    pub fn checked_sub(self, rhs: Nanos) -> Option<Nanos> {
        self.0.checked_sub(rhs.0).map(Nanos)
    }

    pub fn is_multiple_of(self, unit: Nanos) -> bool {
        !unit.is_zero() && self.0.is_multiple_of(unit.0)
    }

    /// How many `unit`-sized cycles cover this duration: ⌈self / unit⌉.
    pub fn div_ceil(self, unit: Nanos) -> u64 {
        debug_assert!(!unit.is_zero());
        self.0.div_ceil(unit.0)
    }

    /// Exact quotient; caller must know `unit` divides `self`.
    pub fn div_exact(self, unit: Nanos) -> u64 {
        debug_assert!(self.is_multiple_of(unit) || self.is_zero());
        self.0 / unit.0
    }

    /// Truncating quotient: in which `unit`-cycle does instant `self` fall.
    pub fn div_floor(self, unit: Nanos) -> u64 {
        debug_assert!(!unit.is_zero());
        self.0 / unit.0
    }

    /// Round up to the next whole microsecond.
    pub fn ceil_to_us(self) -> Nanos {
        Nanos(self.0.div_ceil(NS_PER_US) * NS_PER_US)
    }
}

impl Add for Nanos {
    type Output = Nanos;
    fn add(self, rhs: Nanos) -> Nanos {
        Nanos(self.0.checked_add(rhs.0).expect("duration overflow"))
    }
}

impl AddAssign for Nanos {
    fn add_assign(&mut self, rhs: Nanos) {
        *self = *self + rhs;
    }
}

impl Sub for Nanos {
    type Output = Nanos;
    fn sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0.checked_sub(rhs.0).expect("duration underflow"))
    }
}

impl Sum for Nanos {
    fn sum<I: Iterator<Item = Nanos>>(iter: I) -> Nanos {
        iter.fold(Nanos::ZERO, Add::add)
    }
}

impl fmt::Debug for Nanos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Nanos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 >= NS_PER_MS && self.0.is_multiple_of(NS_PER_MS) {
            write!(f, "{}ms", self.0 / NS_PER_MS)
        } else if self.0 >= NS_PER_US && self.0.is_multiple_of(NS_PER_US) {
            write!(f, "{}us", self.0 / NS_PER_US)
        } else {
            write!(f, "{}ns", self.0)
        }
    }
}
