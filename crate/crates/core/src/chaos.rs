//! Hermite polynomials and second-chaos moments.
//!
//! Hermite polynomials use the normalization under which the multiple Wiener
//! integral of a unit vector satisfies `I_n(phi^{(x)n}) = n! H_n(W(phi))`, i.e.
//!
//! ```text
//! H_0 = 1, H_1(x) = x, H_2(x) = (x^2 - 1)/2, H_3(x) = (x^3 - 3x)/6, ...
//! (n+1) H_{n+1}(x) = x H_n(x) - H_{n-1}(x)
//! ```
//!
//! This is `He_n / n!`, not the physicists' family. All second-chaos
//! constants in the crate (the factor 2 in `E[I_2 I_2]`, the `1/8` in the
//! limiting constant) depend on this choice.

use crate::error::{Error, Result};

/// Order of a Hermite polynomial, capped for recurrence stability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct HermiteIndex(u32);

impl HermiteIndex {
    pub const MAX: u32 = 64;

    pub fn new(order: u32) -> Result<Self> {
        if order <= Self::MAX {
            Ok(Self(order))
        } else {
            Err(Error::Domain(format!(
                "Hermite order {order} exceeds the cap {}",
                Self::MAX
            )))
        }
    }

    pub fn order(self) -> u32 {
        self.0
    }
}

/// `H_n(x)` via the three-term recurrence.
pub fn hermite(order: HermiteIndex, x: f64) -> f64 {
    let n = order.0;
    if n == 0 {
        return 1.0;
    }
    let (mut prev, mut cur) = (1.0, x);
    for k in 1..n {
        let next = (x * cur - prev) / (k as f64 + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `scale * x^2 - 1`; with `scale = 1/Var(x)` this is the second-chaos element
/// `2 H_2(x / sd)` of a centered Gaussian `x`.
pub fn centered_square(x: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::Domain(format!("scale={scale} must be positive")));
    }
    Ok(scale * x * x - 1.0)
}

/// `E[I_2(h (x) h) I_2(g (x) g)] = 2 <h, g>^2`.
///
/// Only the full contraction of the product formula has non-zero mean.
pub fn i2_pair_moment(inner: f64) -> f64 {
    2.0 * inner * inner
}
