//! Closed real intervals used for certified sums.

use serde::{Deserialize, Serialize};
use std::ops::Add;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted bracket [{lo}, {hi}]");
        Bracket { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Bracket { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Multiply by a bracket of non-negative factors.
    pub fn scale(&self, f: Bracket) -> Self {
        debug_assert!(f.lo >= 0.0 && self.lo >= 0.0);
        Bracket::new(self.lo * f.lo, self.hi * f.hi)
    }

    /// Widen outward by a relative amount, absorbing floating-point rounding.
    pub fn widen(&self, rel: f64) -> Self {
        Bracket::new(
            self.lo - rel * self.lo.abs(),
            self.hi + rel * self.hi.abs(),
        )
    }
}

impl Add for Bracket {
    type Output = Bracket;
    fn add(self, o: Bracket) -> Bracket {
        Bracket::new(self.lo + o.lo, self.hi + o.hi)
    }
}
