//! The limiting constant
//!
//! ```text
//! sigma^2 = (1/8) sum_{c,d in Z} (rho_alpha(c) rho_beta(d))^2
//!         = (1/8) (sum_c rho_alpha(c)^2) (sum_d rho_beta(d)^2)
//! ```
//!
//! evaluated by truncated summation with a rigorous bound on the omitted
//! mass. The one-axis tail uses `rho_g(c) = phi''(xi)` for `phi(x) = x^{2g}`
//! and some `xi` in `(c-1, c+1)`, which gives
//! `|rho_g(c)| <= 2g|2g-1| (c-1)^{2g-2}` for `c >= 2`, followed by an
//! integral comparison of `sum_{m >= N} m^{4g-4}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{rho, HurstPair};
use crate::numeric::CompensatedSum;

/// Largest per-axis cutoff tried by [`sigma`].
pub const CUTOFF_CAP: u64 = 100_000_000;

/// A partial sum of `sigma^2` together with a bound on what was left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesResult {
    /// Partial sum over `|c|, |d| <= cutoff`; a lower bound for `sigma^2`.
    pub value: f64,
    pub cutoff: u64,
    /// `value + tail_bound` is an upper bound for `sigma^2`.
    pub tail_bound: f64,
}

impl SeriesResult {
    pub fn sigma(&self) -> f64 {
        self.value.sqrt()
    }
}

fn check_regime(h: &HurstPair) -> Result<()> {
    if h.series_convergent() {
        Ok(())
    } else {
        Err(Error::Regime(format!(
            "the series for sigma diverges unless alpha < 3/4 and beta < 3/4 (got alpha={}, beta={})",
            h.alpha(),
            h.beta()
        )))
    }
}

/// Running one-axis sum `rho(0)^2 + 2 sum_{c=1}^{N} rho(c)^2`.
#[derive(Debug, Clone)]
struct AxisSum {
    gamma: f64,
    cutoff: u64,
    one_sided: CompensatedSum,
}

impl AxisSum {
    fn new(gamma: f64) -> Self {
        Self {
            gamma,
            cutoff: 0,
            one_sided: CompensatedSum::new(),
        }
    }

    fn extend_to(&mut self, cutoff: u64) {
        for c in self.cutoff + 1..=cutoff {
            let r = rho(self.gamma, c as i64);
            self.one_sided.add(r * r);
        }
        self.cutoff = self.cutoff.max(cutoff);
    }

    fn total(&self) -> f64 {
        4.0 + 2.0 * self.one_sided.value()
    }

    /// Upper bound on `sum_{c > cutoff} rho(c)^2`.
    fn tail(&self) -> f64 {
        one_sided_tail_bound(self.gamma, self.cutoff)
    }
}

/// Upper bound on `sum_{c > cutoff} rho_gamma(c)^2`, valid for `gamma < 3/4`.
pub fn one_sided_tail_bound(gamma: f64, cutoff: u64) -> f64 {
    if cutoff == 0 {
        let r1 = rho(gamma, 1);
        return r1 * r1 + one_sided_tail_bound(gamma, 1);
    }
    let a = 2.0 * gamma * (2.0 * gamma - 1.0).abs();
    if a == 0.0 {
        return 0.0;
    }
    // sum_{m >= N} m^{-q} <= N^{-q} + N^{1-q}/(q-1), q = 4 - 4 gamma > 1
    let q = 4.0 - 4.0 * gamma;
    let nf = cutoff as f64;
    a * a * (nf.powf(-q) + nf.powf(1.0 - q) / (q - 1.0))
}

fn combine(a: &AxisSum, b: &AxisSum) -> SeriesResult {
    let (sa, sb) = (a.total(), b.total());
    let (ta, tb) = (2.0 * a.tail(), 2.0 * b.tail());
    SeriesResult {
        value: sa * sb / 8.0,
        cutoff: a.cutoff,
        tail_bound: (ta * sb + tb * sa + ta * tb) / 8.0,
    }
}

/// Partial sum of `sigma^2` over `|c|, |d| <= cutoff` in factorized form.
pub fn sigma_squared_partial(h: &HurstPair, cutoff: u64) -> Result<SeriesResult> {
    check_regime(h)?;
    let mut a = AxisSum::new(h.alpha());
    let mut b = AxisSum::new(h.beta());
    a.extend_to(cutoff);
    b.extend_to(cutoff);
    Ok(combine(&a, &b))
}

/// Direct double sum over `(c, d)`; an independent route to the same partial
/// sum, quadratic in the cutoff.
pub fn sigma_squared_direct(h: &HurstPair, cutoff: u64) -> Result<f64> {
    check_regime(h)?;
    let n = cutoff as i64;
    let mut acc = CompensatedSum::new();
    for c in -n..=n {
        let rc = rho(h.alpha(), c);
        for d in -n..=n {
            let t = rc * rho(h.beta(), d);
            acc.add(t * t);
        }
    }
    Ok(acc.value() / 8.0)
}

/// Smallest doubling cutoff (from 64) whose tail bound is within `tol`
/// relative to the partial sum.
pub fn sigma_series(h: &HurstPair, tol: f64) -> Result<SeriesResult> {
    check_regime(h)?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol={tol} must be positive")));
    }
    let mut a = AxisSum::new(h.alpha());
    let mut b = AxisSum::new(h.beta());
    let mut cutoff = 64u64;
    loop {
        a.extend_to(cutoff);
        b.extend_to(cutoff);
        let res = combine(&a, &b);
        if res.tail_bound <= tol * res.value {
            return Ok(res);
        }
        if cutoff >= CUTOFF_CAP || unreachable_at_cap(&a, &b, tol) {
            return Err(Error::NoConvergence { cap: CUTOFF_CAP });
        }
        cutoff = (cutoff * 2).min(CUTOFF_CAP);
    }
}

// The tail bound at the cap can be bracketed from the current sums: the axis
// totals only grow, and never past total + 2 * tail.
fn unreachable_at_cap(a: &AxisSum, b: &AxisSum, tol: f64) -> bool {
    let (sa, sb) = (a.total(), b.total());
    let ta = 2.0 * one_sided_tail_bound(a.gamma, CUTOFF_CAP);
    let tb = 2.0 * one_sided_tail_bound(b.gamma, CUTOFF_CAP);
    let tail_low = (ta * sb + tb * sa + ta * tb) / 8.0;
    let value_high = (sa + 2.0 * a.tail()) * (sb + 2.0 * b.tail()) / 8.0;
    tail_low > tol * value_high
}

/// `sigma_{alpha,beta}` with relative tail tolerance `tol` on `sigma^2`.
pub fn sigma(h: &HurstPair, tol: f64) -> Result<f64> {
    Ok(sigma_series(h, tol)?.sigma())
}
