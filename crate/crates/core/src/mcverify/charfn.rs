//! Joint characteristic functions of `X^n` at finitely many points against
//! the conditionally Gaussian limit, with or without a sheet functional `Z`:
//!
//! ```text
//! E[Z exp(i <lambda, X^n>)]  vs  E[Z exp(-lambda^T Q lambda / 2)]
//! ```
//!
//! Both sides are Monte Carlo averages (the right side over independent
//! sheets) with bootstrap standard errors.

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::fieldsim::{field_from_increments, GridField, IncrementField, SheetSampler};
use crate::kernel::{HurstPair, Point};
use crate::numeric::{grid_floor, CompensatedSum};
use crate::rng::{Purpose, RngStream};
use crate::sigma::sigma;
use crate::weight::WeightFunction;

use super::engine::{field_at, replicate, seed_for_n, statistic_at};
use super::moments::SIGMA_TOL;
use super::report::{RefProvenance, VerifyReport};

/// Largest `|lambda|` per coordinate accepted on a grid.
pub const MAX_LAMBDA: f64 = 5.0;
/// Default number of bootstrap resamples.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Per-coordinate values of the default lambda grid.
pub const DEFAULT_LAMBDA_VALUES: [f64; 6] = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];

/// The conditional covariance `Q` of the limit at points `t_1..t_m`,
/// discretized on a field's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrixQ {
    points: Vec<Point>,
    matrix: DMatrix<f64>,
}

impl CovMatrixQ {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `lambda^T Q lambda`.
    pub fn quadratic_form(&self, lambda: &[f64]) -> f64 {
        let m = self.points.len();
        let mut acc = CompensatedSum::new();
        for a in 0..m {
            for b in 0..m {
                acc.add(lambda[a] * self.matrix[(a, b)] * lambda[b]);
            }
        }
        acc.value()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_points(points: &[Point]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Invalid("at least one point is required".into()));
    }
    for p in points {
        if !p.iter().all(|x| (0.0..=1.0).contains(x)) {
            return Err(Error::Domain(format!("point {p:?} is outside the unit square")));
        }
    }
    Ok(())
}

/// `C_ab = sigma^2 n^{-2} sum f(W(lower-left node))^2` over the cells of the
/// rectangle `[0, t_a /\ t_b]`.
pub fn build_q(field: &GridField, f: &WeightFunction, sigma_val: f64, points: &[Point]) -> Result<CovMatrixQ> {
    check_points(points)?;
    let n = field.n();
    // P[I][J] = sum_{i <= I, j <= J} f(W_{i-1,j-1})^2
    let mut prefix = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 1..=n {
        let mut row = 0.0;
        for j in 1..=n {
            row += f.eval(field.node(i - 1, j - 1)).powi(2);
            prefix[(i, j)] = prefix[(i - 1, j)] + row;
        }
    }
    let idx: Vec<(usize, usize)> = points
        .iter()
        .map(|p| (grid_floor(n, p[0]), grid_floor(n, p[1])))
        .collect();
    let scale = sigma_val * sigma_val / (n * n) as f64;
    let m = points.len();
    let matrix = DMatrix::from_fn(m, m, |a, b| {
        scale * prefix[(idx[a].0.min(idx[b].0), idx[a].1.min(idx[b].1))]
    });
    Ok(CovMatrixQ {
        points: points.to_vec(),
        matrix,
    })
}

/// All `m`-vectors with coordinates from `values`.
pub fn product_grid(values: &[f64], m: usize) -> Vec<Vec<f64>> {
    let mut grid = vec![Vec::new()];
    for _ in 0..m {
        grid = grid
            .into_iter()
            .flat_map(|g| {
                values.iter().map(move |v| {
                    let mut next = g.clone();
                    next.push(*v);
                    next
                })
            })
            .collect();
    }
    grid
}

/// Bounded functionals of the sheet used as the `Z` of stable convergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SheetFunctional {
    /// `cos W(1,1)`
    CosTerminal,
    /// `1{W(1/2,1/2) > 0}`
    PositiveMidpoint,
}

impl SheetFunctional {
    pub fn eval(self, field: &GridField) -> f64 {
        match self {
            Self::CosTerminal => field_at(field, [1.0, 1.0]).cos(),
            Self::PositiveMidpoint => {
                if field_at(field, [0.5, 0.5]) > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for SheetFunctional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cos_terminal" | "cos" => Ok(Self::CosTerminal),
            "positive_midpoint" | "indicator" => Ok(Self::PositiveMidpoint),
            other => Err(Error::Invalid(format!("unknown sheet functional {other:?}"))),
        }
    }
}

/// A two-resolution comparison of characteristic functions.
#[derive(Debug, Clone, PartialEq)]
pub struct CharFnCheck {
    pub hurst: HurstPair,
    pub weight: WeightFunction,
    pub points: Vec<Point>,
    pub lambda_grid: Vec<Vec<f64>>,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub replications: usize,
    pub seed: u64,
    pub bootstrap: usize,
    /// `None` for the plain characteristic function.
    pub functional: Option<SheetFunctional>,
}

/// Per-lambda comparison at one resolution.
#[derive(Debug, Clone, Serialize)]
pub struct LevelComparison {
    pub n: usize,
    /// `(re, im)` of the left side per lambda.
    pub empirical: Vec<[f64; 2]>,
    /// Right side per lambda (real).
    pub reference: Vec<f64>,
    pub abs_diff: Vec<f64>,
    pub combined_se: Vec<f64>,
    /// `sup_lambda |difference|`
    pub sup_diff: f64,
    /// `sup_lambda (|difference| - 4 SE)`
    pub sup_excess: f64,
    /// `sqrt(max(0, mean_lambda(|difference|^2 - SE^2)))`: the RMS gap with
    /// the Monte Carlo noise floor removed.
    pub rms_gap: f64,
}

// One replication: statistic values and Z on the left; Q and Z on the right.
struct LeftDraw {
    x: Vec<f64>,
    z: f64,
}

struct RightDraw {
    q: CovMatrixQ,
    z: f64,
}

/// Per-replication integrands for every lambda, stored lambda-major.
struct Integrands {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Integrands {
    fn means(&self, idx: Option<&[usize]>) -> Vec<[f64; 2]> {
        let mean = |v: &Vec<f64>| match idx {
            None => v.iter().copied().collect::<CompensatedSum>().value() / v.len() as f64,
            Some(ix) => ix.iter().map(|&k| v[k]).collect::<CompensatedSum>().value() / ix.len() as f64,
        };
        self.re.iter().zip(&self.im).map(|(r, i)| [mean(r), mean(i)]).collect()
    }
}

impl CharFnCheck {
    fn validate(&self) -> Result<()> {
        check_points(&self.points)?;
        let m = self.points.len();
        if self.lambda_grid.is_empty() {
            return Err(Error::Invalid("lambda grid is empty".into()));
        }
        for l in &self.lambda_grid {
            if l.len() != m {
                return Err(Error::Mismatch(format!(
                    "lambda {l:?} has {} coordinates for {m} points",
                    l.len()
                )));
            }
            if l.iter().any(|x| !(x.abs() <= MAX_LAMBDA)) {
                return Err(Error::Domain(format!("lambda {l:?} exceeds {MAX_LAMBDA} in a coordinate")));
            }
        }
        if self.n_coarse == 0 || self.n_coarse >= self.n_fine {
            return Err(Error::Invalid("need 0 < n_coarse < n_fine".into()));
        }
        if self.replications < 2 || self.bootstrap < 2 {
            return Err(Error::Invalid("need at least two replications and two resamples".into()));
        }
        Ok(())
    }

    fn z(&self, field: &GridField) -> f64 {
        self.functional.map_or(1.0, |z| z.eval(field))
    }

    /// Draw per-replication sheets at `n_fine` and, when `n_coarse` divides
    /// it, reuse each sheet at `n_coarse` by block-summing its increments.
    /// Otherwise the coarse level gets its own streams.
    fn draws<T, F>(&self, purpose: Purpose, job: F) -> Result<(Vec<T>, Vec<T>)>
    where
        T: Send,
        F: Fn(&IncrementField, &GridField) -> Result<T> + Sync + Send,
    {
        let fine_sampler = SheetSampler::preferred(self.hurst, self.n_fine)?;
        let shared = self.n_fine.is_multiple_of(self.n_coarse);
        let seed = seed_for_n(self.seed, self.n_fine);
        let pairs: Vec<Result<(Option<T>, T)>> = replicate(self.replications, |r| {
            let mut rng = RngStream::new(seed, r, purpose);
            let (inc, field) = fine_sampler.sample_field(&mut rng);
            let coarse = if shared {
                let c = inc.coarsen(self.n_coarse)?;
                let cf = field_from_increments(&c);
                Some(job(&c, &cf)?)
            } else {
                None
            };
            Ok((coarse, job(&inc, &field)?))
        });
        let mut coarse = Vec::with_capacity(self.replications);
        let mut fine = Vec::with_capacity(self.replications);
        for p in pairs {
            let (c, f) = p?;
            if let Some(c) = c {
                coarse.push(c);
            }
            fine.push(f);
        }
        if !shared {
            let sampler = SheetSampler::preferred(self.hurst, self.n_coarse)?;
            let seed = seed_for_n(self.seed, self.n_coarse);
            let own: Vec<Result<T>> = replicate(self.replications, |r| {
                let mut rng = RngStream::new(seed, r, purpose);
                let (inc, field) = sampler.sample_field(&mut rng);
                job(&inc, &field)
            });
            coarse = own.into_iter().collect::<Result<_>>()?;
        }
        Ok((coarse, fine))
    }

    fn left_integrands(&self, draws: &[LeftDraw]) -> Integrands {
        let (re, im) = self
            .lambda_grid
            .iter()
            .map(|l| {
                draws
                    .iter()
                    .map(|d| {
                        let phase: f64 = l.iter().zip(&d.x).map(|(a, b)| a * b).sum();
                        (d.z * phase.cos(), d.z * phase.sin())
                    })
                    .unzip()
            })
            .unzip();
        Integrands { re, im }
    }

    fn right_integrands(&self, draws: &[RightDraw]) -> Integrands {
        let re = self
            .lambda_grid
            .iter()
            .map(|l| draws.iter().map(|d| d.z * (-0.5 * d.q.quadratic_form(l)).exp()).collect())
            .collect();
        let im = vec![vec![0.0; draws.len()]; self.lambda_grid.len()];
        Integrands { re, im }
    }

    /// Bootstrap standard errors (complex modulus) per lambda.
    fn bootstrap_se(&self, level_seed: u64, left: &Integrands, right: &Integrands) -> (Vec<f64>, Vec<f64>) {
        let m = self.replications;
        let resamples: Vec<(Vec<[f64; 2]>, Vec<[f64; 2]>)> = replicate(self.bootstrap, |b| {
            let mut rng = RngStream::new(level_seed, b, Purpose::Bootstrap);
            let li: Vec<usize> = (0..m).map(|_| rng.index(m)).collect();
            let ri: Vec<usize> = (0..m).map(|_| rng.index(m)).collect();
            (left.means(Some(&li)), right.means(Some(&ri)))
        });
        let se = |pick: &dyn Fn(&(Vec<[f64; 2]>, Vec<[f64; 2]>)) -> &Vec<[f64; 2]>| -> Vec<f64> {
            (0..self.lambda_grid.len())
                .map(|k| {
                    let vals: Vec<[f64; 2]> = resamples.iter().map(|r| pick(r)[k]).collect();
                    let var = |c: usize| {
                        let mean = vals.iter().map(|v| v[c]).sum::<f64>() / vals.len() as f64;
                        vals.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64
                    };
                    (var(0) + var(1)).sqrt()
                })
                .collect()
        };
        (se(&|r| &r.0), se(&|r| &r.1))
    }

    fn compare(&self, n: usize, left: &[LeftDraw], right: &[RightDraw]) -> LevelComparison {
        let li = self.left_integrands(left);
        let ri = self.right_integrands(right);
        let empirical = li.means(None);
        let reference: Vec<f64> = ri.means(None).iter().map(|c| c[0]).collect();
        let (se_l, se_r) = self.bootstrap_se(seed_for_n(self.seed, n), &li, &ri);
        let abs_diff: Vec<f64> = empirical
            .iter()
            .zip(&reference)
            .map(|(e, r)| (e[0] - r).hypot(e[1]))
            .collect();
        let combined_se: Vec<f64> = se_l.iter().zip(&se_r).map(|(a, b)| a.hypot(*b)).collect();
        let sup_diff = abs_diff.iter().copied().fold(0.0, f64::max);
        let sup_excess = abs_diff
            .iter()
            .zip(&combined_se)
            .map(|(d, s)| d - 4.0 * s)
            .fold(f64::NEG_INFINITY, f64::max);
        let excess_sq: f64 = abs_diff
            .iter()
            .zip(&combined_se)
            .map(|(d, s)| d * d - s * s)
            .sum::<f64>()
            / abs_diff.len() as f64;
        LevelComparison {
            n,
            empirical,
            reference,
            abs_diff,
            combined_se,
            sup_diff,
            sup_excess,
            rms_gap: excess_sq.max(0.0).sqrt(),
        }
    }

    /// Both resolutions.
    pub fn levels(&self) -> Result<(LevelComparison, LevelComparison)> {
        self.validate()?;
        let sigma_val = sigma(&self.hurst, SIGMA_TOL)?;
        let (left_c, left_f) = self.draws(Purpose::Sheet, |inc, field| {
            Ok(LeftDraw {
                x: statistic_at(inc, field, &self.weight, &self.points)?,
                z: self.z(field),
            })
        })?;
        let (right_c, right_f) = self.draws(Purpose::Reference, |_, field| {
            Ok(RightDraw {
                q: build_q(field, &self.weight, sigma_val, &self.points)?,
                z: self.z(field),
            })
        })?;
        Ok((
            self.compare(self.n_coarse, &left_c, &right_c),
            self.compare(self.n_fine, &left_f, &right_f),
        ))
    }

    /// Pass when the RMS gap shrinks from `n_coarse` to `n_fine` (or is
    /// already zero at `n_fine`), and at `n_fine` every grid point satisfies
    /// `|difference| <= 4 SE + slack` with `slack` that decrease.
    pub fn run(&self) -> Result<VerifyReport> {
        let (coarse, fine) = self.levels()?;
        let slack = (coarse.rms_gap - fine.rms_gap).max(0.0);
        let shrinks = fine.rms_gap < coarse.rms_gap || fine.rms_gap == 0.0;
        let within = fine.sup_excess <= slack;
        let worst = fine
            .abs_diff
            .iter()
            .zip(&fine.combined_se)
            .enumerate()
            .max_by(|a, b| (a.1 .0 - 4.0 * a.1 .1).total_cmp(&(b.1 .0 - 4.0 * b.1 .1)))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let test = if self.functional.is_some() {
            "stable_convergence"
        } else {
            "charfn_compare"
        };
        Ok(VerifyReport {
            test: test.into(),
            params: json!({
                "alpha": self.hurst.alpha(), "beta": self.hurst.beta(),
                "weight": self.weight.name(), "points": self.points,
                "lambda_grid": self.lambda_grid, "n": [self.n_coarse, self.n_fine],
                "M": self.replications, "seed": self.seed, "bootstrap": self.bootstrap,
                "functional": self.functional,
            }),
            estimate: fine.sup_diff,
            se: fine.combined_se[worst],
            reference: 0.0,
            provenance: RefProvenance::MonteCarlo,
            pass: shrinks && within,
            detail: json!({
                "slack": slack,
                "gap_shrinks": shrinks,
                "within_tolerance": within,
                "levels": [coarse, fine],
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldsim::FactorMethod;
    use approx::assert_relative_eq;

    fn draw(h: HurstPair, n: usize, r: u64) -> GridField {
        let s = SheetSampler::new(h, n, FactorMethod::Circulant).unwrap();
        s.sample_field(&mut RngStream::new(3, r, Purpose::Auxiliary)).1
    }

    #[test]
    fn constant_weight_q_is_deterministic() {
        let h = HurstPair::new(0.3, 0.4).unwrap();
        let field = draw(h, 10, 0);
        let pts = [[0.55, 1.0], [1.0, 0.35], [0.29, 0.9]];
        let q = build_q(&field, &WeightFunction::ConstantOne, 1.5, &pts).unwrap();
        let fl = |x: f64| (10.0 * x).floor() / 10.0;
        for a in 0..3 {
            for b in 0..3 {
                let e = 2.25 * fl(pts[a][0].min(pts[b][0])) * fl(pts[a][1].min(pts[b][1]));
                assert_relative_eq!(q.matrix()[(a, b)], e, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn identity_single_point_q() {
        let h = HurstPair::new(0.35, 0.35).unwrap();
        let field = draw(h, 8, 1);
        let q = build_q(&field, &WeightFunction::Identity, 2.0, &[[1.0, 1.0]]).unwrap();
        let mut s = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                s += field.node(i, j).powi(2);
            }
        }
        assert_relative_eq!(q.matrix()[(0, 0)], 4.0 * s / 64.0, max_relative = 1e-12);
    }

    #[test]
    fn q_is_symmetric_psd() {
        let h = HurstPair::new(0.25, 0.45).unwrap();
        for r in 0..50 {
            let field = draw(h, 16, r);
            let mut rng = RngStream::new(11, r, Purpose::Auxiliary);
            let pts: Vec<Point> = (0..4)
                .map(|_| [rng.index(1001) as f64 / 1000.0, rng.index(1001) as f64 / 1000.0])
                .collect();
            let q = build_q(&field, &WeightFunction::Cosine, 1.3, &pts).unwrap();
            assert_eq!(q.matrix(), &q.matrix().transpose());
            assert!(q.min_eigenvalue() >= -1e-10);
        }
        assert!(build_q(&draw(h, 4, 0), &WeightFunction::Cosine, 1.0, &[[1.2, 0.0]]).is_err());
    }

    #[test]
    fn grid_has_all_combinations() {
        let g = product_grid(&DEFAULT_LAMBDA_VALUES, 2);
        assert_eq!(g.len(), 36);
        assert!(g.contains(&vec![-0.5, 2.0]));
        assert_eq!(product_grid(&[1.0], 3), vec![vec![1.0, 1.0, 1.0]]);
    }

    fn small_check(functional: Option<SheetFunctional>) -> CharFnCheck {
        CharFnCheck {
            hurst: HurstPair::new(0.35, 0.35).unwrap(),
            weight: WeightFunction::ConstantOne,
            points: vec![[1.0, 1.0]],
            lambda_grid: vec![vec![0.0], vec![1.0], vec![-2.0]],
            n_coarse: 4,
            n_fine: 8,
            replications: 400,
            seed: 9,
            bootstrap: 20,
            functional,
        }
    }

    #[test]
    fn zero_lambda_gives_one_on_both_sides() {
        let (c, f) = small_check(None).levels().unwrap();
        for level in [c, f] {
            assert_eq!(level.empirical[0], [1.0, 0.0]);
            assert_eq!(level.reference[0], 1.0);
        }
    }

    #[test]
    fn constant_weight_reference_is_gaussian() {
        let check = small_check(None);
        let s2 = sigma(&check.hurst, SIGMA_TOL).unwrap().powi(2);
        let (_, f) = check.levels().unwrap();
        assert_relative_eq!(f.reference[1], (-0.5 * s2).exp(), max_relative = 1e-12);
        assert_relative_eq!(f.reference[2], (-2.0 * s2).exp(), max_relative = 1e-12);
    }

    #[test]
    fn stable_reference_factorizes_for_constant_weight() {
        let check = small_check(Some(SheetFunctional::CosTerminal));
        let s2 = sigma(&check.hurst, SIGMA_TOL).unwrap().powi(2);
        let (_, f) = check.levels().unwrap();
        // lambda = 0 gives the mean of Z on each side
        let ez = f.reference[0];
        assert!(f.empirical[0][1] == 0.0);
        for (k, l) in check.lambda_grid.iter().enumerate() {
            assert_relative_eq!(f.reference[k], ez * (-0.5 * s2 * l[0] * l[0]).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn validation() {
        let mut c = small_check(None);
        c.lambda_grid = vec![vec![6.0]];
        assert!(c.run().is_err());
        let mut c = small_check(None);
        c.lambda_grid = vec![vec![1.0, 1.0]];
        assert!(c.run().is_err());
        let mut c = small_check(None);
        c.n_coarse = 8;
        assert!(c.run().is_err());
    }

    #[test]
    fn independent_levels_when_not_nested() {
        let mut c = small_check(None);
        c.n_coarse = 3;
        let (coarse, fine) = c.levels().unwrap();
        assert_eq!(coarse.n, 3);
        assert_eq!(fine.n, 8);
    }
}
