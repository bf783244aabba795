//! Closed-form covariance structure of the fractional Brownian sheet.
//!
//! The sheet `W` with Hurst indices `(alpha, beta)` is the centered Gaussian
//! field on `[0,1]^2` with covariance
//!
//! ```text
//! E[W(s1,t1) W(s2,t2)] = K_alpha(s1,s2) * K_beta(t1,t2)
//! K_g(x,y) = (x^{2g} + y^{2g} - |x-y|^{2g}) / 2
//! ```
//!
//! Everything else in the crate (the sampler, the moment formulas, the
//! limiting constant) is checked against the functions in this module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the unit square, `(s, t)`.
pub type Point = [f64; 2];

/// Hurst indices of the sheet along the two coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstPair {
    alpha: f64,
    beta: f64,
}

impl HurstPair {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_gamma("alpha", alpha)?;
        check_gamma("beta", beta)?;
        Ok(Self { alpha, beta })
    }

    /// The Brownian sheet, `alpha = beta = 1/2`.
    pub fn brownian() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sum(&self) -> f64 {
        self.alpha + self.beta
    }

    /// True in the regime covered by the central limit theorem:
    /// `alpha < 1/2`, `beta < 1/2` and `alpha + beta > 1/2`.
    pub fn admissible(&self) -> bool {
        self.alpha < 0.5 && self.beta < 0.5 && self.alpha + self.beta > 0.5
    }

    /// True when the series defining the limiting constant converges.
    pub fn series_convergent(&self) -> bool {
        self.alpha < 0.75 && self.beta < 0.75
    }
}

/// The rectangle `[s1,t1] x [s2,t2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub s1: f64,
    pub t1: f64,
    pub s2: f64,
    pub t2: f64,
}

impl Rect {
    pub fn new(s1: f64, t1: f64, s2: f64, t2: f64) -> Result<Self> {
        for (name, v) in [("s1", s1), ("t1", t1), ("s2", s2), ("t2", t2)] {
            check_unit(name, v)?;
        }
        if s1 > t1 || s2 > t2 {
            return Err(Error::Domain(format!(
                "rectangle corners out of order: [{s1},{t1}]x[{s2},{t2}]"
            )));
        }
        Ok(Self { s1, t1, s2, t2 })
    }

    /// Grid cell `(i, j)` (1-based) of the uniform `n x n` grid.
    pub fn cell(n: usize, i: usize, j: usize) -> Result<Self> {
        check_index("i", i, n)?;
        check_index("j", j, n)?;
        let nf = n as f64;
        Self::new(
            (i - 1) as f64 / nf,
            i as f64 / nf,
            (j - 1) as f64 / nf,
            j as f64 / nf,
        )
    }
}

fn check_gamma(name: &str, gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name}={gamma} must lie in (0,1)")))
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name}={x} must lie in [0,1]")))
    }
}

pub(crate) fn check_index(name: &'static str, value: usize, n: usize) -> Result<()> {
    if value >= 1 && value <= n {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { name, value, n })
    }
}

/// `|x|^p` with `0^p = 0` for the positive exponents used here.
#[inline]
pub(crate) fn abs_pow(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(p)
    }
}

/// One-dimensional fractional Brownian motion covariance `K_gamma(s1, s2)`.
pub fn k_gamma(gamma: f64, s1: f64, s2: f64) -> Result<f64> {
    check_gamma("gamma", gamma)?;
    check_unit("s1", s1)?;
    check_unit("s2", s2)?;
    Ok(k_gamma_unchecked(gamma, s1, s2))
}

#[inline]
pub(crate) fn k_gamma_unchecked(gamma: f64, s1: f64, s2: f64) -> f64 {
    let p = 2.0 * gamma;
    if s1 == s2 {
        return abs_pow(s1, p);
    }
    0.5 * (abs_pow(s1, p) + abs_pow(s2, p) - abs_pow(s1 - s2, p))
}

/// Sheet covariance `E[W(p1) W(p2)]`.
pub fn cov_point(h: &HurstPair, p1: Point, p2: Point) -> Result<f64> {
    Ok(k_gamma(h.alpha, p1[0], p2[0])? * k_gamma(h.beta, p1[1], p2[1])?)
}

/// Second central difference of `x -> |x|^{2 gamma}` at integer lag `c`:
/// `|c+1|^{2g} + |c-1|^{2g} - 2|c|^{2g}`.
///
/// For large lags the direct form cancels catastrophically, so the even
/// binomial series of `(1+x)^p + (1-x)^p - 2` with `x = 1/|c|` is used.
pub fn rho(gamma: f64, c: i64) -> f64 {
    let p = 2.0 * gamma;
    let a = c.unsigned_abs();
    if a < RHO_SERIES_FROM {
        let cf = a as f64;
        return abs_pow(cf + 1.0, p) + abs_pow(cf - 1.0, p) - 2.0 * abs_pow(cf, p);
    }
    let cf = a as f64;
    let x2 = 1.0 / (cf * cf);
    let mut coeff = 1.0; // binom(p, 2k)
    let mut xpow = 1.0;
    let mut sum = 0.0;
    for k in 1..=60u32 {
        let kk = 2.0 * k as f64;
        coeff *= (p - kk + 2.0) * (p - kk + 1.0) / ((kk - 1.0) * kk);
        xpow *= x2;
        let term = coeff * xpow;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    2.0 * sum * cf.powf(p)
}

const RHO_SERIES_FROM: u64 = 16;

/// Covariance of the cell increments `(i, j)` and `(k, l)` of the `n x n`
/// grid: `n^{-2(alpha+beta)} rho_alpha(k-i) rho_beta(l-j) / 4`.
pub fn incr_cov(h: &HurstPair, n: usize, i: usize, j: usize, k: usize, l: usize) -> Result<f64> {
    for (name, v) in [("i", i), ("j", j), ("k", k), ("l", l)] {
        check_index(name, v, n)?;
    }
    Ok(incr_cov_lag(h, n, k as i64 - i as i64, l as i64 - j as i64))
}

/// `incr_cov` as a function of the lags only (the increment field is stationary).
pub fn incr_cov_lag(h: &HurstPair, n: usize, c: i64, d: i64) -> f64 {
    let nf = n as f64;
    0.25 * nf.powf(-2.0 * h.sum()) * rho(h.alpha, c) * rho(h.beta, d)
}

/// Covariance between the sheet at `l` and its rectangular increment over `r`.
pub fn point_rect_cov(h: &HurstPair, l: Point, r: &Rect) -> Result<f64> {
    check_unit("l1", l[0])?;
    check_unit("l2", l[1])?;
    Ok(point_rect_cov_unchecked(h, l, r))
}

#[inline]
pub(crate) fn point_rect_cov_unchecked(h: &HurstPair, l: Point, r: &Rect) -> f64 {
    let da = k_gamma_unchecked(h.alpha, l[0], r.t1) - k_gamma_unchecked(h.alpha, l[0], r.s1);
    let db = k_gamma_unchecked(h.beta, l[1], r.t2) - k_gamma_unchecked(h.beta, l[1], r.s2);
    da * db
}

/// Inner product of the corner indicator `1_[0,(k-1)/n]x[0,(l-1)/n]` with the
/// indicator of cell `(i, j)`.
pub fn delta_incr_inner(
    h: &HurstPair,
    n: usize,
    k: usize,
    l: usize,
    i: usize,
    j: usize,
) -> Result<f64> {
    check_index("k", k, n)?;
    check_index("l", l, n)?;
    let cell = Rect::cell(n, i, j)?;
    let nf = n as f64;
    Ok(point_rect_cov_unchecked(
        h,
        [(k - 1) as f64 / nf, (l - 1) as f64 / nf],
        &cell,
    ))
}

/// Coordinate factor of `delta_incr_inner` on the diagonal `k = i`:
/// `(i^{2g} - (i-1)^{2g} - 1) / (2 n^{2g})`.
pub(crate) fn diagonal_inner_factor(gamma: f64, n: usize, i: usize) -> f64 {
    let p = 2.0 * gamma;
    let a = (i - 1) as f64;
    let b = i as f64;
    0.5 * (n as f64).powf(-p) * (abs_pow(b, p) - abs_pow(a, p) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn node(n: usize, i: usize, j: usize) -> Point {
        [i as f64 / n as f64, j as f64 / n as f64]
    }

    // 16-term expansion of E[Delta_{i,j} Delta_{k,l}] over the corner nodes.
    fn incr_cov_oracle(h: &HurstPair, n: usize, i: usize, j: usize, k: usize, l: usize) -> f64 {
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
                acc += sp * sq * cov_point(h, p, q).unwrap();
            }
        }
        acc
    }

    fn point_rect_oracle(h: &HurstPair, l: Point, r: &Rect) -> f64 {
        cov_point(h, l, [r.t1, r.t2]).unwrap() - cov_point(h, l, [r.s1, r.t2]).unwrap()
            - cov_point(h, l, [r.t1, r.s2]).unwrap()
            + cov_point(h, l, [r.s1, r.s2]).unwrap()
    }

    #[test]
    fn hurst_validation_and_regime() {
        assert!(HurstPair::new(0.0, 0.3).is_err());
        assert!(HurstPair::new(0.3, 1.0).is_err());
        assert!(HurstPair::new(0.35, 0.35).unwrap().admissible());
        assert!(!HurstPair::new(0.2, 0.25).unwrap().admissible());
        assert!(!HurstPair::brownian().admissible());
        assert!(!HurstPair::new(0.8, 0.3).unwrap().series_convergent());
    }

    #[test]
    fn k_gamma_examples() {
        assert_relative_eq!(k_gamma(0.5, 0.3, 0.7).unwrap(), 0.3, epsilon = 1e-15);
        assert_relative_eq!(k_gamma(0.3, 1.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        let expected = 0.5 * (0.25f64.powf(0.7) + 0.5f64.powf(0.7) - 0.25f64.powf(0.7));
        assert_relative_eq!(k_gamma(0.35, 0.25, 0.5).unwrap(), expected, epsilon = 1e-15);
        assert!(k_gamma(1.2, 0.1, 0.2).is_err());
        assert!(k_gamma(0.3, -0.1, 0.2).is_err());
    }

    #[test]
    fn cov_point_examples() {
        let h = HurstPair::new(0.35, 0.4).unwrap();
        assert_eq!(cov_point(&h, [0.0, 0.6], [0.3, 0.9]).unwrap(), 0.0);
        assert_eq!(cov_point(&h, [0.6, 0.0], [0.3, 0.9]).unwrap(), 0.0);
        assert_relative_eq!(cov_point(&h, [1.0, 1.0], [1.0, 1.0]).unwrap(), 1.0);
        let b = HurstPair::brownian();
        let v = cov_point(&b, [0.2, 0.9], [0.7, 0.4]).unwrap();
        assert_relative_eq!(v, 0.2 * 0.4, epsilon = 1e-15);
    }

    #[test]
    fn rho_examples() {
        for g in [0.1, 0.35, 0.5, 0.7] {
            assert_eq!(rho(g, 0), 2.0);
        }
        assert_eq!(rho(0.5, 3), 0.0);
        let direct = 6f64.powf(0.6) + 4f64.powf(0.6) - 2.0 * 5f64.powf(0.6);
        assert_relative_eq!(rho(0.3, 5), direct, epsilon = 1e-15);
        // negative, as the second difference of a concave power
        assert!(rho(0.3, 5) < 0.0);
        // finite second difference of x^0.6 with unit step
        let phi = |x: f64| x.powf(0.6);
        assert_relative_eq!(rho(0.3, 5), phi(6.0) - 2.0 * phi(5.0) + phi(4.0), epsilon = 1e-15);
    }

    #[test]
    fn rho_series_branch_matches_direct_form() {
        for g in [0.05, 0.2, 0.35, 0.49, 0.6, 0.74, 0.9] {
            let p = 2.0 * g;
            for c in [16i64, 17, 40, 100] {
                let cf = c as f64;
                let direct = (cf + 1.0).powf(p) + (cf - 1.0).powf(p) - 2.0 * cf.powf(p);
                assert_relative_eq!(rho(g, c), direct, max_relative = 1e-7);
                assert_eq!(rho(g, c), rho(g, -c));
            }
        }
        // asymptotic form 2g(2g-1)c^{2g-2}
        let g = 0.35;
        let c = 1_000_000i64;
        let lead = 2.0 * g * (2.0 * g - 1.0) * (c as f64).powf(2.0 * g - 2.0);
        assert_relative_eq!(rho(g, c), lead, max_relative = 1e-9);
    }

    #[test]
    fn incr_cov_examples() {
        let h = HurstPair::new(0.35, 0.4).unwrap();
        let n = 16;
        let v = incr_cov(&h, n, 3, 5, 3, 5).unwrap();
        assert_relative_eq!(v, (n as f64).powf(-1.5), max_relative = 1e-14);
        let b = HurstPair::brownian();
        assert_eq!(incr_cov(&b, 8, 2, 2, 4, 2).unwrap(), 0.0);
        let h = HurstPair::new(0.35, 0.35).unwrap();
        assert_relative_eq!(
            incr_cov(&h, 8, 1, 1, 3, 2).unwrap(),
            incr_cov_oracle(&h, 8, 1, 1, 3, 2),
            epsilon = 1e-12
        );
        assert!(matches!(
            incr_cov(&h, 8, 0, 1, 1, 1),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(incr_cov(&h, 8, 1, 9, 1, 1).is_err());
    }

    #[test]
    fn point_rect_cov_examples() {
        let h = HurstPair::new(0.3, 0.4).unwrap();
        let r = Rect::new(0.25, 0.75, 0.25, 0.75).unwrap();
        assert_eq!(point_rect_cov(&h, [0.0, 0.5], &r).unwrap(), 0.0);
        let flat = Rect::new(0.4, 0.4, 0.1, 0.9).unwrap();
        assert_eq!(point_rect_cov(&h, [0.5, 0.5], &flat).unwrap(), 0.0);
        assert_relative_eq!(
            point_rect_cov(&h, [0.5, 0.5], &r).unwrap(),
            point_rect_oracle(&h, [0.5, 0.5], &r),
            epsilon = 1e-14
        );
        assert!(Rect::new(0.5, 0.4, 0.0, 1.0).is_err());
    }

    #[test]
    fn delta_incr_inner_examples() {
        let h = HurstPair::new(0.35, 0.4).unwrap();
        for (i, j) in [(1, 1), (3, 7), (8, 2)] {
            assert_eq!(delta_incr_inner(&h, 8, 1, 5, i, j).unwrap(), 0.0);
            assert_eq!(delta_incr_inner(&h, 8, 4, 1, i, j).unwrap(), 0.0);
        }
        let n = 16;
        let cell = Rect::cell(n, 5, 7).unwrap();
        let l = [4.0 / 16.0, 6.0 / 16.0];
        assert_relative_eq!(
            delta_incr_inner(&h, n, 5, 7, 5, 7).unwrap(),
            point_rect_oracle(&h, l, &cell),
            epsilon = 1e-14
        );
        // Brownian sheet: overlap area of the cell with the corner rectangle
        let b = HurstPair::brownian();
        let n = 8;
        assert_eq!(delta_incr_inner(&b, n, 3, 3, 3, 3).unwrap(), 0.0);
        assert_relative_eq!(
            delta_incr_inner(&b, n, 5, 6, 2, 4).unwrap(),
            1.0 / 64.0,
            epsilon = 1e-15
        );
        assert_eq!(delta_incr_inner(&b, n, 5, 6, 5, 4).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_factor_matches_inner_product() {
        let h = HurstPair::new(0.3, 0.45).unwrap();
        let n = 12;
        for i in 1..=n {
            for j in [1, 4, 12] {
                let direct = delta_incr_inner(&h, n, i, j, i, j).unwrap();
                let fact = diagonal_inner_factor(h.alpha(), n, i)
                    * diagonal_inner_factor(h.beta(), n, j);
                assert_relative_eq!(direct, fact, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn stationarity_under_index_shift() {
        let h = HurstPair::new(0.3, 0.45).unwrap();
        let n = 20;
        let base = incr_cov(&h, n, 2, 3, 7, 5).unwrap();
        for s in 1..10 {
            let shifted = incr_cov(&h, n, 2 + s, 3 + s, 7 + s, 5 + s).unwrap();
            assert_relative_eq!(base, shifted, max_relative = 1e-14);
        }
    }

    mod props {
        use super::*;
        use nalgebra::DMatrix;
        use proptest::prelude::*;

        fn hurst() -> impl Strategy<Value = HurstPair> {
            (0.02f64..0.98, 0.02f64..0.98).prop_map(|(a, b)| HurstPair::new(a, b).unwrap())
        }

        fn admissible() -> impl Strategy<Value = HurstPair> {
            (0.01f64..0.49, 0.01f64..0.49)
                .prop_filter("alpha+beta>1/2", |(a, b)| a + b > 0.5)
                .prop_map(|(a, b)| HurstPair::new(a, b).unwrap())
        }

        proptest! {
            #[test]
            fn cov_point_is_symmetric(h in hurst(), a in 0.0f64..=1.0, b in 0.0f64..=1.0,
                                      c in 0.0f64..=1.0, d in 0.0f64..=1.0) {
                prop_assert_eq!(cov_point(&h, [a, b], [c, d]).unwrap(),
                                cov_point(&h, [c, d], [a, b]).unwrap());
            }

            #[test]
            fn gram_matrix_is_psd(h in hurst(),
                                  pts in prop::collection::vec((1usize..=16, 1usize..=16), 1..32)) {
                let n = 16.0;
                let m = pts.len();
                let g = DMatrix::from_fn(m, m, |a, b| {
                    let p = [pts[a].0 as f64 / n, pts[a].1 as f64 / n];
                    let q = [pts[b].0 as f64 / n, pts[b].1 as f64 / n];
                    cov_point(&h, p, q).unwrap()
                });
                let min = g.symmetric_eigenvalues().min();
                prop_assert!(min >= -1e-10, "min eigenvalue {}", min);
            }

            #[test]
            fn incr_cov_matches_expansion(h in hurst(), n in 1usize..=32,
                                          u in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0)) {
                let idx = |x: f64| 1 + ((x * n as f64) as usize).min(n - 1);
                let (i, j, k, l) = (idx(u.0), idx(u.1), idx(u.2), idx(u.3));
                let v = incr_cov(&h, n, i, j, k, l).unwrap();
                prop_assert!((v - incr_cov_oracle(&h, n, i, j, k, l)).abs() <= 1e-10);
            }

            #[test]
            fn lemma_bound_holds(h in admissible(), l1 in 0.0f64..=1.0, l2 in 0.0f64..=1.0,
                                 x in (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0)) {
                let r = Rect::new(x.0.min(x.1), x.0.max(x.1), x.2.min(x.3), x.2.max(x.3)).unwrap();
                let v = point_rect_cov(&h, [l1, l2], &r).unwrap();
                let bound = (r.t1 - r.s1).powf(2.0 * h.alpha()) * (r.t2 - r.s2).powf(2.0 * h.beta());
                prop_assert!(v.abs() <= bound + 1e-12);
            }
        }
    }
}
