//! Randomized property suites: kernel formulas against corner expansions of
//! the sheet covariance, and sampler output against the kernel.

use rayon::prelude::*;
use serde_json::json;

use crate::error::Result;
use crate::fieldsim::{FactorMethod, SheetSampler};
use crate::kernel::{cov_point, delta_incr_inner, incr_cov, point_rect_cov, HurstPair, Point, Rect};
use crate::rng::{Purpose, RngStream};

use super::engine::{replicate, seed_for_n};
use super::report::{RefProvenance, VerifyReport};

/// Absolute tolerance for kernel formulas against their expansions.
pub const KERNEL_TOL: f64 = 1e-10;
/// Slack allowed on the rectangle-covariance bound.
pub const BOUND_SLACK: f64 = 1e-12;
/// Largest grid used by the kernel suite.
const SUITE_MAX_N: usize = 32;

fn node(n: usize, i: usize, j: usize) -> Point {
    [i as f64 / n as f64, j as f64 / n as f64]
}

/// `E[Delta_ij Delta_kl]` as the signed sum of 16 sheet covariances.
pub fn incr_cov_expansion(h: &HurstPair, n: usize, i: usize, j: usize, k: usize, l: usize) -> Result<f64> {
    let corners = |a: usize, b: usize| {
        [
            (node(n, a, b), 1.0),
            (node(n, a - 1, b), -1.0),
            (node(n, a, b - 1), -1.0),
            (node(n, a - 1, b - 1), 1.0),
        ]
    };
    let mut acc = 0.0;
    for (p, sp) in corners(i, j) {
        for (q, sq) in corners(k, l) {
            acc += sp * sq * cov_point(h, p, q)?;
        }
    }
    Ok(acc)
}

/// `E[W(p) Delta_r]` as the signed sum of 4 sheet covariances.
pub fn point_rect_expansion(h: &HurstPair, p: Point, r: &Rect) -> Result<f64> {
    Ok(cov_point(h, p, [r.t1, r.t2])? - cov_point(h, p, [r.s1, r.t2])? - cov_point(h, p, [r.t1, r.s2])?
        + cov_point(h, p, [r.s1, r.s2])?)
}

fn unit(rng: &mut RngStream) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `(lo, hi)`, never hitting the ends.
fn open_uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    loop {
        let x = lo + (hi - lo) * unit(rng);
        if x > lo && x < hi {
            return x;
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct CaseOutcome {
    incr_err: f64,
    inner_err: f64,
    bound_excess: f64,
}

fn kernel_case(seed: u64, r: u64) -> Result<CaseOutcome> {
    let mut rng = RngStream::new(seed, r, Purpose::Auxiliary);
    let h = HurstPair::new(open_uniform(&mut rng, 0.0, 1.0), open_uniform(&mut rng, 0.0, 1.0))?;
    let n = 1 + rng.index(SUITE_MAX_N);
    let mut idx = || 1 + rng.index(n);
    let (i, j, k, l) = (idx(), idx(), idx(), idx());
    let incr_err = (incr_cov(&h, n, i, j, k, l)? - incr_cov_expansion(&h, n, i, j, k, l)?).abs();
    let corner = [(k - 1) as f64 / n as f64, (l - 1) as f64 / n as f64];
    let inner_err = (delta_incr_inner(&h, n, k, l, i, j)? - point_rect_expansion(&h, corner, &Rect::cell(n, i, j)?)?).abs();

    // the bound needs alpha, beta <= 1/2
    let hb = HurstPair::new(open_uniform(&mut rng, 0.0, 0.5), open_uniform(&mut rng, 0.0, 0.5))?;
    let mut interval = || {
        let (a, b) = (unit(&mut rng), unit(&mut rng));
        (a.min(b), a.max(b))
    };
    let (s1, t1) = interval();
    let (s2, t2) = interval();
    let rect = Rect::new(s1, t1, s2, t2)?;
    let p = [unit(&mut rng), unit(&mut rng)];
    let bound = (t1 - s1).powf(2.0 * hb.alpha()) * (t2 - s2).powf(2.0 * hb.beta());
    let bound_excess = point_rect_cov(&hb, p, &rect)?.abs() - bound;
    Ok(CaseOutcome {
        incr_err,
        inner_err,
        bound_excess,
    })
}

/// `cases` randomized checks of `incr_cov`, `delta_incr_inner` and the
/// rectangle bound `|E[W(p) Delta_r]| <= |r_1|^{2a} |r_2|^{2b}`.
pub fn kernel_property_suite(cases: usize, seed: u64) -> Result<Vec<VerifyReport>> {
    let outcomes = replicate(cases, |r| kernel_case(seed, r))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let max = |g: fn(&CaseOutcome) -> f64| outcomes.iter().map(g).fold(f64::NEG_INFINITY, f64::max);
    let violations = outcomes.iter().filter(|o| o.bound_excess > BOUND_SLACK).count();
    let params = json!({ "cases": cases, "seed": seed, "max_n": SUITE_MAX_N });
    let incr = max(|o| o.incr_err);
    let inner = max(|o| o.inner_err);
    Ok(vec![
        VerifyReport {
            test: "kernel_incr_cov_expansion".into(),
            params: params.clone(),
            estimate: incr,
            se: 0.0,
            reference: 0.0,
            provenance: RefProvenance::ExactKernel,
            pass: incr <= KERNEL_TOL,
            detail: json!({ "tolerance": KERNEL_TOL }),
        },
        VerifyReport {
            test: "kernel_delta_incr_inner_expansion".into(),
            params: params.clone(),
            estimate: inner,
            se: 0.0,
            reference: 0.0,
            provenance: RefProvenance::ExactKernel,
            pass: inner <= KERNEL_TOL,
            detail: json!({ "tolerance": KERNEL_TOL }),
        },
        VerifyReport {
            test: "kernel_rectangle_bound".into(),
            params,
            estimate: violations as f64,
            se: 0.0,
            reference: 0.0,
            provenance: RefProvenance::ClosedForm,
            pass: violations == 0,
            detail: json!({ "slack": BOUND_SLACK, "max_excess": max(|o| o.bound_excess) }),
        },
    ])
}

/// Empirical second moments of all increments of an `n x n` draw.
#[derive(Debug, Clone)]
pub struct EmpiricalCovariance {
    /// Cells in column-major order of the increment matrix.
    pub cells: Vec<(usize, usize)>,
    /// `(a, b, mean of x_a x_b, SE)` for `a <= b`.
    pub entries: Vec<(usize, usize, f64, f64)>,
}

/// Sampler checks at one `(hurst, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerCheck {
    pub hurst: HurstPair,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    /// Smallest fraction of entries that must lie within 4 SE.
    pub min_fraction: f64,
}

impl SamplerCheck {
    fn stream_seed(&self, method: FactorMethod) -> u64 {
        let base = seed_for_n(self.seed, self.n);
        match method {
            FactorMethod::Cholesky => base,
            FactorMethod::Circulant => base ^ 0x0c1c_u64.rotate_left(40),
        }
    }

    /// Mean products (the field is centered) with their standard errors.
    pub fn empirical(&self, method: FactorMethod) -> Result<EmpiricalCovariance> {
        let sampler = SheetSampler::new(self.hurst, self.n, method)?;
        let seed = self.stream_seed(method);
        let draws: Vec<Vec<f64>> = replicate(self.replications, |r| {
            let mut rng = RngStream::new(seed, r, Purpose::Sheet);
            sampler.sample_increments(&mut rng).values().as_slice().to_vec()
        });
        let n = self.n;
        let cells: Vec<(usize, usize)> = (0..n).flat_map(|j| (0..n).map(move |i| (i + 1, j + 1))).collect();
        let d = cells.len();
        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
        let m = self.replications as f64;
        let entries = pairs
            .par_iter()
            .map(|&(a, b)| {
                let prods: Vec<f64> = draws.iter().map(|x| x[a] * x[b]).collect();
                let (mean, se) = crate::numeric::mean_se(&prods);
                debug_assert!(m >= 2.0);
                (a, b, mean, se)
            })
            .collect();
        Ok(EmpiricalCovariance { cells, entries })
    }

    fn params(&self, method: &str) -> serde_json::Value {
        json!({
            "alpha": self.hurst.alpha(), "beta": self.hurst.beta(), "n": self.n,
            "M": self.replications, "seed": self.seed, "method": method,
        })
    }

    /// Fraction of covariance entries within 4 SE of `incr_cov`.
    pub fn exactness(&self, method: FactorMethod) -> Result<VerifyReport> {
        let emp = self.empirical(method)?;
        let mut within = 0usize;
        let mut max_z: f64 = 0.0;
        for &(a, b, mean, se) in &emp.entries {
            let (i, j) = emp.cells[a];
            let (k, l) = emp.cells[b];
            let exact = incr_cov(&self.hurst, self.n, i, j, k, l)?;
            let z = (mean - exact).abs() / se;
            max_z = max_z.max(z);
            if z <= 4.0 {
                within += 1;
            }
        }
        let fraction = within as f64 / emp.entries.len() as f64;
        let name = match method {
            FactorMethod::Cholesky => "cholesky",
            FactorMethod::Circulant => "circulant",
        };
        Ok(VerifyReport {
            test: format!("sampler_exactness_{name}"),
            params: self.params(name),
            estimate: fraction,
            se: (fraction * (1.0 - fraction) / emp.entries.len() as f64).sqrt(),
            reference: self.min_fraction,
            provenance: RefProvenance::ExactKernel,
            pass: fraction >= self.min_fraction,
            detail: json!({ "entries": emp.entries.len(), "max_z": max_z }),
        })
    }

    /// Two-sample comparison of the Cholesky and circulant paths.
    pub fn agreement(&self) -> Result<VerifyReport> {
        let chol = self.empirical(FactorMethod::Cholesky)?;
        let circ = self.empirical(FactorMethod::Circulant)?;
        let mut within = 0usize;
        let mut max_z: f64 = 0.0;
        for (x, y) in chol.entries.iter().zip(&circ.entries) {
            let z = (x.2 - y.2).abs() / x.3.hypot(y.3);
            max_z = max_z.max(z);
            if z <= 4.0 {
                within += 1;
            }
        }
        let total = chol.entries.len();
        let fraction = within as f64 / total as f64;
        Ok(VerifyReport {
            test: "sampler_agreement".into(),
            params: self.params("cholesky_vs_circulant"),
            estimate: fraction,
            se: (fraction * (1.0 - fraction) / total as f64).sqrt(),
            reference: self.min_fraction,
            provenance: RefProvenance::MonteCarlo,
            pass: fraction >= self.min_fraction,
            detail: json!({ "entries": total, "max_z": max_z }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_kernel_suite_passes() {
        let reports = kernel_property_suite(2000, 1).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert!(r.pass, "{}", r.to_json());
        }
    }

    #[test]
    fn kernel_suite_is_deterministic() {
        let a = kernel_property_suite(200, 5).unwrap();
        let b = kernel_property_suite(200, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_json(), y.to_json());
        }
    }

    #[test]
    fn tiny_sampler_check() {
        let check = SamplerCheck {
            hurst: HurstPair::new(0.35, 0.4).unwrap(),
            n: 3,
            replications: 4000,
            seed: 2,
            min_fraction: 0.99,
        };
        let e = check.empirical(FactorMethod::Circulant).unwrap();
        assert_eq!(e.entries.len(), 9 * 10 / 2);
        assert!(check.exactness(FactorMethod::Cholesky).unwrap().pass);
        assert!(check.agreement().unwrap().pass);
    }
}
