//! Weighted quadratic variations of a simulated sheet and the discretized
//! limiting process.
//!
//! ```text
//! X^n(s,t) = n^{-1} sum_{i<=[ns], j<=[nt]} f(W((i-1)/n,(j-1)/n)) (n^{2(a+b)} Delta_{i,j}^2 - 1)
//! X(s,t)   = sigma sum_{i<=[ns], j<=[nt]} f(W((i-1)/n,(j-1)/n)) Delta_{i,j} B
//! ```
//!
//! with `B` a Brownian sheet independent of `W`.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fieldsim::{field_from_increments, GridField, IncrementField, Provenance};
use crate::kernel::HurstPair;
use crate::numeric::grid_floor;
use crate::rng::Purpose;
use crate::weight::WeightFunction;

/// Partial sums `S_{I,J}`, `0 <= I, J <= n`, with `S_{0,.} = S_{.,0} = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSums {
    n: usize,
    values: DMatrix<f64>,
}

impl PartialSums {
    /// Accumulate `summand(i, j)` over `1 <= i <= I`, `1 <= j <= J`.
    fn accumulate<F: FnMut(usize, usize) -> f64>(n: usize, mut summand: F) -> Self {
        let mut s = DMatrix::zeros(n + 1, n + 1);
        for i in 1..=n {
            let mut row = 0.0;
            for j in 1..=n {
                row += summand(i, j);
                s[(i, j)] = s[(i - 1, j)] + row;
            }
        }
        Self { n, values: s }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// `S_{I,J}`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// `S_{[ns],[nt]}`.
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        self.values[(grid_floor(self.n, s), grid_floor(self.n, t))]
    }

    /// The `(I, J)` summand recovered by rectangular differencing.
    pub fn summand(&self, i: usize, j: usize) -> f64 {
        let s = &self.values;
        s[(i, j)] - s[(i - 1, j)] - s[(i, j - 1)] + s[(i - 1, j - 1)]
    }
}

/// The statistic `X^n` at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct QVProcess {
    hurst: HurstPair,
    weight: WeightFunction,
    sums: PartialSums,
}

impl QVProcess {
    pub fn n(&self) -> usize {
        self.sums.n
    }

    pub fn hurst(&self) -> &HurstPair {
        &self.hurst
    }

    pub fn weight(&self) -> &WeightFunction {
        &self.weight
    }

    pub fn partial_sums(&self) -> &PartialSums {
        &self.sums
    }
}

/// Compute `X^n` from a sampled field and its increments.
pub fn qv_process(field: &GridField, inc: &IncrementField, f: &WeightFunction) -> Result<QVProcess> {
    let n = inc.n();
    if field.n() != n {
        return Err(Error::Mismatch(format!("field n={} but increments n={n}", field.n())));
    }
    if field.hurst() != inc.hurst() {
        return Err(Error::Mismatch("field and increments have different Hurst indices".into()));
    }
    if field.provenance() != inc.provenance()
        || field_from_increments(inc).values() != field.values()
    {
        return Err(Error::Mismatch(
            "field is not the prefix sum of these increments".into(),
        ));
    }
    let nf = n as f64;
    let scale = nf.powf(2.0 * inc.hurst().sum());
    let values = inc.values();
    let sums = PartialSums::accumulate(n, |i, j| {
        let d = values[(i - 1, j - 1)];
        f.eval(field.node(i - 1, j - 1)) * (scale * d * d - 1.0) / nf
    });
    Ok(QVProcess {
        hurst: *inc.hurst(),
        weight: f.clone(),
        sums,
    })
}

/// `X^n(s, t) = S_{[ns],[nt]}`.
pub fn eval_qv(p: &QVProcess, s: f64, t: f64) -> f64 {
    p.sums.eval(s, t)
}

/// Discretized limit `sigma * int int f(W) dB` at every grid point.
pub fn limit_sample(
    field: &GridField,
    f: &WeightFunction,
    sigma_val: f64,
    driver: &IncrementField,
) -> Result<PartialSums> {
    if driver.n() != field.n() {
        return Err(Error::Mismatch(format!(
            "driver n={} but field n={}",
            driver.n(),
            field.n()
        )));
    }
    if !(sigma_val >= 0.0) {
        return Err(Error::Domain(format!("sigma={sigma_val} must be non-negative")));
    }
    if let Provenance::Stream(d) = driver.provenance() {
        if d.purpose == Purpose::Sheet {
            return Err(Error::Provenance(
                "driver was drawn from a sheet stream".into(),
            ));
        }
        if field.provenance() == driver.provenance() {
            return Err(Error::Provenance("driver and field share a stream".into()));
        }
    }
    let db = driver.values();
    Ok(PartialSums::accumulate(field.n(), |i, j| {
        sigma_val * f.eval(field.node(i - 1, j - 1)) * db[(i - 1, j - 1)]
    }))
}

/// CSV: a header row `n,alpha,beta,weight`, one row with those values, then
/// the `(n+1) x (n+1)` partial sums row by row with 17 significant digits.
pub fn write_partial_sums_csv<W: Write + ?Sized>(
    out: &mut W,
    hurst: &HurstPair,
    weight: &WeightFunction,
    sums: &PartialSums,
) -> std::io::Result<()> {
    writeln!(out, "n,alpha,beta,weight")?;
    writeln!(
        out,
        "{},{:.16e},{:.16e},{}",
        sums.n,
        hurst.alpha(),
        hurst.beta(),
        weight.name()
    )?;
    write_matrix_csv(out, &sums.values)
}

/// Rows of a matrix as comma-separated `{:.16e}` values.
pub fn write_matrix_csv<W: Write + ?Sized>(out: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{:.16e}", m[(i, j)]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
