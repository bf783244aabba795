//! Exact finite-n moments of `X^n` and their Monte Carlo counterparts.
//!
//! Gaussian integration by parts gives
//!
//! ```text
//! E[X^n_t] = n^{2(a+b)-1} sum_{k,l} E[f''(W_{k-1,l-1})] <delta_kl, 1_kl>^2
//! ```
//!
//! and for `f = 1` or `f = x` Wick's theorem reduces `E[(X^n_t)^2]` to
//! products of one-dimensional kernel sums, because every covariance of the
//! sheet factorizes over the two coordinates.

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::fieldsim::SheetSampler;
use crate::kernel::{diagonal_inner_factor, k_gamma_unchecked, rho, HurstPair, Point};
use crate::numeric::{grid_floor, mean_se, ols_slope, variance_se, CompensatedSum};
use crate::quadrature::integrate_rect;
use crate::rng::Purpose;
use crate::sigma::sigma_series;
use crate::weight::WeightFunction;

use super::engine::{map_fields, seed_for_n, statistic_at};
use super::report::{RefProvenance, VerifyReport};

/// Relative tail tolerance used whenever a check needs `sigma^2`.
pub const SIGMA_TOL: f64 = 1e-10;

fn grid_counts(n: usize, t: Point) -> (usize, usize) {
    (grid_floor(n, t[0]), grid_floor(n, t[1]))
}

/// `sum_{k <= count} d(k)^2` for the diagonal inner-product factor `d`.
fn squared_inner_sum(gamma: f64, n: usize, count: usize) -> f64 {
    (1..=count)
        .map(|k| diagonal_inner_factor(gamma, n, k).powi(2))
        .collect::<CompensatedSum>()
        .value()
}

/// Exact `E[X^n_t]`.
pub fn exact_mean(h: &HurstPair, f: &WeightFunction, n: usize, t: Point) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    // fail on weights without f'' even when the answer would be trivial
    f.second_derivative_mean(0.0)?;
    if f.is_affine() {
        return Ok(0.0);
    }
    let (kk, ll) = grid_counts(n, t);
    let nf = n as f64;
    let pre = nf.powf(2.0 * h.sum() - 1.0);
    if let WeightFunction::Square = f {
        // E f'' = 2 everywhere: the double sum factorizes
        let sa = squared_inner_sum(h.alpha(), n, kk);
        let sb = squared_inner_sum(h.beta(), n, ll);
        return Ok(2.0 * pre * sa * sb);
    }
    exact_mean_direct(h, f, n, kk, ll).map(|s| pre * s)
}

fn exact_mean_direct(h: &HurstPair, f: &WeightFunction, n: usize, kk: usize, ll: usize) -> Result<f64> {
    let nf = n as f64;
    let da: Vec<f64> = (1..=kk).map(|k| diagonal_inner_factor(h.alpha(), n, k)).collect();
    let db: Vec<f64> = (1..=ll).map(|l| diagonal_inner_factor(h.beta(), n, l)).collect();
    let mut acc = CompensatedSum::new();
    for (k, a) in da.iter().enumerate() {
        let va = (k as f64 / nf).powf(2.0 * h.alpha());
        for (l, b) in db.iter().enumerate() {
            let v = va * (l as f64 / nf).powf(2.0 * h.beta());
            acc.add(f.second_derivative_mean(v)? * (a * b).powi(2));
        }
    }
    Ok(acc.value())
}

/// One-coordinate kernel sums entering the exact second moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisMoments {
    /// `sum M(i,k)^2`
    pub m2: f64,
    /// `sum K(a_i, a_k) M(i,k)^2`
    pub k_m2: f64,
    /// `sum M(i,k) C(i,i) C(k,k)`
    pub m_cc_diag: f64,
    /// `sum M(i,k) C(i,k) C(k,i)`
    pub m_cc_cross: f64,
}

/// `M(i,k) = E[d_i d_k]` for unit-interval increments of length `1/n`,
/// `C(i,k) = E[B(a_i) d_k]` with `a_i = (i-1)/n`, summed over `i, k <= count`.
pub fn axis_moments(gamma: f64, n: usize, count: usize) -> AxisMoments {
    let nf = n as f64;
    let scale = 0.5 * nf.powf(-2.0 * gamma);
    let node = |i: usize| (i - 1) as f64 / nf;
    let c = |i: usize, k: usize| {
        k_gamma_unchecked(gamma, node(i), k as f64 / nf) - k_gamma_unchecked(gamma, node(i), node(k))
    };
    let mut m2 = CompensatedSum::new();
    let mut k_m2 = CompensatedSum::new();
    let mut diag = CompensatedSum::new();
    let mut cross = CompensatedSum::new();
    for i in 1..=count {
        for k in 1..=count {
            let m = scale * rho(gamma, k as i64 - i as i64);
            m2.add(m * m);
            k_m2.add(k_gamma_unchecked(gamma, node(i), node(k)) * m * m);
            diag.add(m * c(i, i) * c(k, k));
            cross.add(m * c(i, k) * c(k, i));
        }
    }
    AxisMoments {
        m2: m2.value(),
        k_m2: k_m2.value(),
        m_cc_diag: diag.value(),
        m_cc_cross: cross.value(),
    }
}

/// Exact `E[(X^n_t)^2]` for `f = 1` and `f = x`.
pub fn exact_second_moment(h: &HurstPair, f: &WeightFunction, n: usize, t: Point) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    let (kk, ll) = grid_counts(n, t);
    let pre = (n as f64).powf(4.0 * h.sum() - 2.0);
    let a = axis_moments(h.alpha(), n, kk);
    let b = axis_moments(h.beta(), n, ll);
    match f {
        WeightFunction::ConstantOne => Ok(pre * 2.0 * a.m2 * b.m2),
        WeightFunction::Identity => Ok(pre
            * (2.0 * a.k_m2 * b.k_m2
                + 4.0 * a.m_cc_diag * b.m_cc_diag
                + 4.0 * a.m_cc_cross * b.m_cc_cross)),
        other => Err(Error::Invalid(format!(
            "no exact second moment for weight {other}"
        ))),
    }
}

/// `sigma^2 int_0^{t1} int_0^{t2} E[f(W(u,v))^2] du dv`.
pub fn limit_second_moment(h: &HurstPair, f: &WeightFunction, t: Point, sigma_sq: f64) -> f64 {
    let (a2, b2) = (2.0 * h.alpha(), 2.0 * h.beta());
    sigma_sq * integrate_rect(t[0], t[1], |u, v| f.square_mean(u.powf(a2) * v.powf(b2)))
}

/// Exact means over a ladder of `n` and the fitted log–log slope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanDecay {
    pub n_list: Vec<usize>,
    pub means: Vec<f64>,
    /// `1 - 2(alpha + beta)`
    pub target_slope: f64,
    /// Least-squares slope of `log |mean|` on `log n`; absent when every
    /// mean is zero.
    pub slope: Option<f64>,
    /// `C = |mean(n_0)| n_0^{2(a+b)-1}` at the smallest `n`.
    pub fitted_constant: f64,
    pub fitted_bound_holds: bool,
    /// `sup_v |E f''(N(0,v))|`, which bounds `C` whenever
    /// `|<delta, 1>| <= n^{-2(a+b)}` (alpha, beta <= 1/2).
    pub a_priori_constant: Option<f64>,
    pub a_priori_bound_holds: Option<bool>,
}

/// Exact `E[X^n_t]` for each `n` in `n_list`.
pub fn mean_decay(h: &HurstPair, f: &WeightFunction, t: Point, n_list: &[usize]) -> Result<MeanDecay> {
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("n_list must be strictly increasing with at least two values".into()));
    }
    let means = n_list
        .iter()
        .map(|&n| exact_mean(h, f, n, t))
        .collect::<Result<Vec<_>>>()?;
    let target_slope = 1.0 - 2.0 * h.sum();
    let rate = |n: usize| (n as f64).powf(target_slope);
    let nonzero: Vec<(f64, f64)> = n_list
        .iter()
        .zip(&means)
        .filter(|(_, m)| **m != 0.0)
        .map(|(&n, m)| ((n as f64).ln(), m.abs().ln()))
        .collect();
    let slope = (nonzero.len() >= 2).then(|| {
        let (x, y): (Vec<f64>, Vec<f64>) = nonzero.into_iter().unzip();
        ols_slope(&x, &y)
    });
    let within = |c: f64| {
        n_list
            .iter()
            .zip(&means)
            .all(|(&n, m)| m.abs() <= c * rate(n) * (1.0 + 1e-12))
    };
    let fitted_constant = means[0].abs() / rate(n_list[0]);
    let a_priori_constant = if h.alpha() <= 0.5 && h.beta() <= 0.5 {
        Some(f.second_derivative_mean_bound()?)
    } else {
        None
    };
    Ok(MeanDecay {
        n_list: n_list.to_vec(),
        fitted_bound_holds: within(fitted_constant),
        a_priori_bound_holds: a_priori_constant.map(within),
        means,
        target_slope,
        slope,
        fitted_constant,
        a_priori_constant,
    })
}

impl MeanDecay {
    /// Pass when the slope is within `slope_tol` of the target (vacuous if
    /// all means vanish) and the a-priori bound holds.
    pub fn report(&self, h: &HurstPair, f: &WeightFunction, t: Point, slope_tol: f64) -> VerifyReport {
        let slope_ok = self
            .slope
            .map_or(true, |s| (s - self.target_slope).abs() <= slope_tol);
        let bound_ok = self.a_priori_bound_holds.unwrap_or(true);
        VerifyReport {
            test: "mean_decay".into(),
            params: json!({
                "alpha": h.alpha(), "beta": h.beta(), "weight": f.name(), "t": t,
                "n_list": self.n_list, "slope_tol": slope_tol,
            }),
            estimate: self.slope.unwrap_or(f64::NAN),
            se: 0.0,
            reference: self.target_slope,
            provenance: RefProvenance::ExactKernel,
            pass: slope_ok && bound_ok,
            detail: serde_json::to_value(self).expect("serializable"),
        }
    }
}

/// Settings shared by the finite-n moment checks.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub hurst: HurstPair,
    pub weight: WeightFunction,
    pub n: usize,
    pub t: Point,
    pub replications: usize,
    pub seed: u64,
}

impl MomentCheck {
    pub(crate) fn samples(&self) -> Result<Vec<f64>> {
        if self.replications < 2 {
            return Err(Error::Invalid("at least two replications are needed".into()));
        }
        let sampler = SheetSampler::preferred(self.hurst, self.n)?;
        let t = [self.t];
        map_fields(
            &sampler,
            seed_for_n(self.seed, self.n),
            self.replications,
            Purpose::Sheet,
            |inc, field| Ok(statistic_at(inc, field, &self.weight, &t)?[0]),
        )
    }

    fn params(&self) -> serde_json::Value {
        json!({
            "alpha": self.hurst.alpha(), "beta": self.hurst.beta(), "weight": self.weight.name(),
            "n": self.n, "t": self.t, "M": self.replications, "seed": self.seed,
        })
    }

    /// Monte Carlo mean of `X^n_t` against [`exact_mean`], within 4 SE.
    pub fn mean(&self) -> Result<VerifyReport> {
        let reference = exact_mean(&self.hurst, &self.weight, self.n, self.t)?;
        let (estimate, se) = mean_se(&self.samples()?);
        Ok(VerifyReport {
            test: "finite_n_mean".into(),
            params: self.params(),
            estimate,
            se,
            reference,
            provenance: RefProvenance::ExactKernel,
            pass: (estimate - reference).abs() <= 4.0 * se,
            detail: serde_json::Value::Null,
        })
    }

    /// Monte Carlo variance of `X^n_t` against the exact second moment
    /// (the mean is zero for the weights it supports), within 4 SE.
    pub fn variance(&self) -> Result<VerifyReport> {
        let reference = exact_second_moment(&self.hurst, &self.weight, self.n, self.t)?;
        let (estimate, se) = variance_se(&self.samples()?);
        Ok(VerifyReport {
            test: "finite_n_variance".into(),
            params: self.params(),
            estimate,
            se,
            reference,
            provenance: RefProvenance::ExactKernel,
            pass: (estimate - reference).abs() <= 4.0 * se,
            detail: serde_json::Value::Null,
        })
    }
}

/// `E[(X^n_t)^2]` at two resolutions against its limit.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentLimit {
    pub hurst: HurstPair,
    pub weight: WeightFunction,
    pub t: Point,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub replications: usize,
    pub seed: u64,
    /// Largest relative gap allowed at `n_fine`.
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
struct LevelEstimate {
    n: usize,
    estimate: f64,
    se: f64,
    gap: f64,
    exact: Option<f64>,
}

impl SecondMomentLimit {
    fn level(&self, n: usize, reference: f64) -> Result<LevelEstimate> {
        let check = MomentCheck {
            hurst: self.hurst,
            weight: self.weight.clone(),
            n,
            t: self.t,
            replications: self.replications,
            seed: self.seed,
        };
        let squares: Vec<f64> = check.samples()?.iter().map(|x| x * x).collect();
        let (estimate, se) = mean_se(&squares);
        Ok(LevelEstimate {
            n,
            estimate,
            se,
            gap: (estimate - reference).abs(),
            exact: exact_second_moment(&self.hurst, &self.weight, n, self.t).ok(),
        })
    }

    /// Pass when the gap to the limit shrinks from `n_coarse` to `n_fine` and
    /// is within `rel_tol` (relative) at `n_fine`.
    pub fn run(&self) -> Result<VerifyReport> {
        if !self.hurst.admissible() {
            return Err(Error::Regime(
                "the second-moment limit needs alpha, beta <= 1/2".into(),
            ));
        }
        if self.n_coarse >= self.n_fine {
            return Err(Error::Invalid("n_coarse must be below n_fine".into()));
        }
        let sigma_sq = sigma_series(&self.hurst, SIGMA_TOL)?.value;
        let reference = limit_second_moment(&self.hurst, &self.weight, self.t, sigma_sq);
        let coarse = self.level(self.n_coarse, reference)?;
        let fine = self.level(self.n_fine, reference)?;
        let pass = fine.gap < coarse.gap && fine.gap <= self.rel_tol * reference.abs();
        Ok(VerifyReport {
            test: "second_moment_limit".into(),
            params: json!({
                "alpha": self.hurst.alpha(), "beta": self.hurst.beta(),
                "weight": self.weight.name(), "t": self.t,
                "n": [self.n_coarse, self.n_fine], "M": self.replications,
                "seed": self.seed, "rel_tol": self.rel_tol,
            }),
            estimate: fine.estimate,
            se: fine.se,
            reference,
            provenance: RefProvenance::Quadrature,
            pass,
            detail: json!({ "levels": [coarse, fine], "sigma_squared": sigma_sq }),
        })
    }
}
