//! One-sample Kolmogorov–Smirnov test against a normal law.

use serde::Serialize;
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernel::HurstPair;
use crate::weight::WeightFunction;

use super::moments::{exact_second_moment, MomentCheck};
use super::report::{RefProvenance, VerifyReport};

/// Smallest sample accepted by [`ks_normality`].
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `P(K > x)` for the Kolmogorov distribution.
///
/// Uses `2 sum (-1)^{k-1} exp(-2 k^2 x^2)` for `x >= 1`, where it converges
/// in a handful of terms, and the equivalent theta-function form
/// `1 - sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2))` below.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let p = if x >= 1.0 {
        let mut s = 0.0;
        for k in 1..=100 {
            let term = (-2.0 * (k * k) as f64 * x * x).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        2.0 * s
    } else {
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let mut s = 0.0;
        for k in 1..=100 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * c).exp();
            s += term;
            if term < 1e-300 {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s
    };
    p.clamp(0.0, 1.0)
}

/// KS statistic of `samples` against `N(mean, sd^2)` and its asymptotic
/// p-value.
pub fn ks_normality(samples: &[f64], mean: f64, sd: f64) -> Result<KsResult> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Domain(format!("sd={sd} must be positive and finite")));
    }
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Invalid(format!(
            "KS test needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let law = Normal::new(mean, sd).map_err(|e| Error::Domain(e.to_string()))?;
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    let statistic = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            ((i + 1) as f64 / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_survival(m.sqrt() * statistic),
    })
}

/// `X^n_(1,1)` with `f = 1` against `N(0, exact finite-n variance)`.
/// Passes when `p > alpha_level`.
pub fn clt_ks_check(h: &HurstPair, n: usize, replications: usize, seed: u64, alpha_level: f64) -> Result<VerifyReport> {
    let weight = WeightFunction::ConstantOne;
    let t = [1.0, 1.0];
    let variance = exact_second_moment(h, &weight, n, t)?;
    let samples = MomentCheck {
        hurst: *h,
        weight,
        n,
        t,
        replications,
        seed,
    }
    .samples()?;
    let r = ks_normality(&samples, 0.0, variance.sqrt())?;
    Ok(VerifyReport {
        test: "ks_normality".into(),
        params: json!({
            "alpha": h.alpha(), "beta": h.beta(), "weight": "constant_one", "n": n,
            "t": t, "M": replications, "seed": seed, "level": alpha_level,
        }),
        estimate: r.statistic,
        // asymptotic sd of sqrt(M) D is about 0.26
        se: 0.26 / (replications as f64).sqrt(),
        reference: variance,
        provenance: RefProvenance::ExactKernel,
        pass: r.p_value > alpha_level,
        detail: json!({ "p_value": r.p_value }),
    })
}
