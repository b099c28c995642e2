//! Floating-point operation accounting.
//!
//! Counting rules, used uniformly by the classic recursions and the sparse
//! kernel: one FLOP per scalar multiply, add (or subtract), or divide; no
//! fused operations. Counts are a function of problem structure only, never
//! of numeric values, so repeated runs and different states produce
//! identical totals.

use std::fmt;
use std::ops::{Add, AddAssign, Mul};

/// Tally of scalar floating-point operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopCount {
    pub mul: u64,
    pub add: u64,
    pub div: u64,
}

impl FlopCount {
    pub const ZERO: FlopCount = FlopCount { mul: 0, add: 0, div: 0 };

    pub const fn new(mul: u64, add: u64, div: u64) -> Self {
        FlopCount { mul, add, div }
    }

    pub fn total(&self) -> u64 {
        self.mul + self.add + self.div
    }

    /// Serialized form matching the bench CSV columns `mul,add,div,total`.
    pub fn csv_fields(&self) -> String {
        format!("{},{},{},{}", self.mul, self.add, self.div, self.total())
    }
}

impl Add for FlopCount {
    type Output = FlopCount;
    fn add(self, rhs: FlopCount) -> FlopCount {
        FlopCount {
            mul: self.mul + rhs.mul,
            add: self.add + rhs.add,
            div: self.div + rhs.div,
        }
    }
}

impl AddAssign for FlopCount {
    fn add_assign(&mut self, rhs: FlopCount) {
        self.mul += rhs.mul;
        self.add += rhs.add;
        self.div += rhs.div;
    }
}

impl Mul<u64> for FlopCount {
    type Output = FlopCount;
    fn mul(self, k: u64) -> FlopCount {
        FlopCount {
            mul: self.mul * k,
            add: self.add * k,
            div: self.div * k,
        }
    }
}

impl fmt::Display for FlopCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mul={} add={} div={} total={}",
            self.mul,
            self.add,
            self.div,
            self.total()
        )
    }
}
