//! Exact grid simulation of the fractional Brownian sheet.
//!
//! The covariance of the sheet is a tensor product, so the `n x n` field of
//! cell increments has covariance `M_alpha (x) M_beta` with
//! `M_g[i,k] = n^{-2g} rho_g(k-i) / 2` (fractional Gaussian noise). Given any
//! `F_g` with `F_g F_g^T = M_g` the field is `F_alpha Z F_beta^T` for an iid
//! standard normal matrix `Z`. Node values follow by 2D prefix sums.
//!
//! Two square-root operators are available:
//! * Cholesky: `F = L`, `O(n^3)` once, `O(n^3)` per sample.
//! * Circulant embedding: `F` is the first `n` rows of the symmetric square
//!   root of the `2n x 2n` circulant extension of `M_g`, applied by FFT.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{rho, HurstPair};
use crate::rng::{RngStream, StreamId};

/// Largest `n` accepted by the dense Cholesky factorization.
pub const MAX_CHOLESKY_N: usize = 4096;
/// Largest `n` accepted by the circulant embedding.
pub const MAX_CIRCULANT_N: usize = 1 << 22;
/// Negative embedding eigenvalues down to this are clipped to zero.
pub const EMBEDDING_CLIP: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorMethod {
    Cholesky,
    Circulant,
}

impl std::str::FromStr for FactorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Self::Cholesky),
            "circulant" => Ok(Self::Circulant),
            other => Err(Error::Invalid(format!("unknown factor method {other:?}"))),
        }
    }
}

/// Covariance matrix of one axis of cell increments.
pub fn increment_covariance(gamma: f64, n: usize) -> DMatrix<f64> {
    let scale = 0.5 * (n as f64).powf(-2.0 * gamma);
    DMatrix::from_fn(n, n, |i, k| scale * rho(gamma, k as i64 - i as i64))
}

#[derive(Clone)]
enum FactorOp {
    Cholesky(DMatrix<f64>),
    Circulant {
        /// `sqrt(lambda_k) / (2n)`
        scaled_sqrt_spectrum: Vec<f64>,
        min_eigenvalue: f64,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
}

/// Immutable square-root operator of `M_gamma` for one axis.
#[derive(Clone)]
pub struct FactorCache {
    gamma: f64,
    n: usize,
    op: FactorOp,
}

impl fmt::Debug for FactorCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FactorCache")
            .field("gamma", &self.gamma)
            .field("n", &self.n)
            .field("method", &self.method())
            .finish()
    }
}

/// Build the square-root operator of the 1D increment covariance.
pub fn factor_1d(gamma: f64, n: usize, method: FactorMethod) -> Result<FactorCache> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma={gamma} must lie in (0,1)")));
    }
    if n == 0 {
        return Err(Error::Domain("grid size n must be positive".into()));
    }
    let op = match method {
        FactorMethod::Cholesky => {
            if n > MAX_CHOLESKY_N {
                return Err(Error::TooLarge {
                    n,
                    what: "Cholesky factorization",
                });
            }
            let chol = increment_covariance(gamma, n).cholesky().ok_or_else(|| {
                Error::Domain(format!("increment covariance not positive definite (gamma={gamma}, n={n})"))
            })?;
            FactorOp::Cholesky(chol.unpack())
        }
        FactorMethod::Circulant => circulant_op(gamma, n)?,
    };
    Ok(FactorCache { gamma, n, op })
}

fn circulant_op(gamma: f64, n: usize) -> Result<FactorOp> {
    if n > MAX_CIRCULANT_N {
        return Err(Error::TooLarge {
            n,
            what: "circulant embedding",
        });
    }
    let size = 2 * n;
    let scale = 0.5 * (n as f64).powf(-2.0 * gamma);
    let mut row: Vec<Complex64> = (0..size)
        .map(|k| {
            let lag = k.min(size - k) as i64;
            Complex64::new(scale * rho(gamma, lag), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    forward.process(&mut row);
    let min_eigenvalue = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    if min_eigenvalue < EMBEDDING_CLIP {
        return Err(Error::NonPsdEmbedding { min_eigenvalue });
    }
    let scaled_sqrt_spectrum = row
        .iter()
        .map(|c| c.re.max(0.0).sqrt() / size as f64)
        .collect();
    Ok(FactorOp::Circulant {
        scaled_sqrt_spectrum,
        min_eigenvalue,
        forward,
        inverse,
    })
}

impl FactorCache {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn method(&self) -> FactorMethod {
        match self.op {
            FactorOp::Cholesky(_) => FactorMethod::Cholesky,
            FactorOp::Circulant { .. } => FactorMethod::Circulant,
        }
    }

    /// Number of iid normals consumed per output vector.
    pub fn input_dim(&self) -> usize {
        match self.op {
            FactorOp::Cholesky(_) => self.n,
            FactorOp::Circulant { .. } => 2 * self.n,
        }
    }

    /// Smallest eigenvalue of the circulant embedding before clipping.
    pub fn min_embedding_eigenvalue(&self) -> Option<f64> {
        match self.op {
            FactorOp::Cholesky(_) => None,
            FactorOp::Circulant { min_eigenvalue, .. } => Some(min_eigenvalue),
        }
    }

    /// Apply the operator to each column of `z` (`input_dim x m` to `n x m`).
    pub fn apply(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(z.nrows(), self.input_dim(), "operand has the wrong row count");
        match &self.op {
            FactorOp::Cholesky(l) => l * z,
            FactorOp::Circulant {
                scaled_sqrt_spectrum,
                forward,
                inverse,
                ..
            } => {
                let size = 2 * self.n;
                let m = z.ncols();
                let mut out = DMatrix::zeros(self.n, m);
                let mut buf = vec![Complex64::new(0.0, 0.0); size];
                // two real columns per complex transform; the operator is real
                let mut col = 0;
                while col < m {
                    let pair = col + 1 < m;
                    for (k, b) in buf.iter_mut().enumerate() {
                        let im = if pair { z[(k, col + 1)] } else { 0.0 };
                        *b = Complex64::new(z[(k, col)], im);
                    }
                    forward.process(&mut buf);
                    for (b, s) in buf.iter_mut().zip(scaled_sqrt_spectrum) {
                        *b *= *s;
                    }
                    inverse.process(&mut buf);
                    for i in 0..self.n {
                        out[(i, col)] = buf[i].re;
                        if pair {
                            out[(i, col + 1)] = buf[i].im;
                        }
                    }
                    col += 2;
                }
                out
            }
        }
    }

    /// The operator as an explicit `n x input_dim` matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        self.apply(&DMatrix::identity(self.input_dim(), self.input_dim()))
    }
}

/// Where a field's randomness came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Stream(StreamId),
    /// Built by hand from explicit values.
    Synthetic,
}

/// Cell increments `Delta_{i,j}` of a sheet on the uniform `n x n` grid.
/// Entry `(i-1, j-1)` of `values` holds `Delta_{i,j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementField {
    n: usize,
    hurst: HurstPair,
    values: DMatrix<f64>,
    provenance: Provenance,
}

impl IncrementField {
    pub fn from_values(hurst: HurstPair, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() || values.nrows() == 0 {
            return Err(Error::Mismatch(format!(
                "increment matrix must be square and non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(Self {
            n: values.nrows(),
            hurst,
            values,
            provenance: Provenance::Synthetic,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hurst(&self) -> &HurstPair {
        &self.hurst
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `Delta_{i,j}`, 1-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i - 1, j - 1)]
    }

    /// Increments of the same sheet on the coarser `n_coarse` grid, by block
    /// sums; `n_coarse` must divide `n`.
    pub fn coarsen(&self, n_coarse: usize) -> Result<Self> {
        if n_coarse == 0 || !self.n.is_multiple_of(n_coarse) {
            return Err(Error::Mismatch(format!(
                "cannot coarsen n={} to n={n_coarse}",
                self.n
            )));
        }
        let b = self.n / n_coarse;
        let values = DMatrix::from_fn(n_coarse, n_coarse, |a, c| {
            self.values.view((a * b, c * b), (b, b)).sum()
        });
        Ok(Self {
            n: n_coarse,
            hurst: self.hurst,
            values,
            provenance: self.provenance,
        })
    }
}

/// Sheet values `W(i/n, j/n)` at the `(n+1) x (n+1)` grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n: usize,
    hurst: HurstPair,
    values: DMatrix<f64>,
    provenance: Provenance,
}

impl GridField {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hurst(&self) -> &HurstPair {
        &self.hurst
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `W(i/n, j/n)`, 0-based node indices.
    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Rectangular second differences of the node values.
    pub fn redifference(&self) -> DMatrix<f64> {
        let w = &self.values;
        DMatrix::from_fn(self.n, self.n, |a, b| {
            w[(a + 1, b + 1)] - w[(a, b + 1)] - w[(a + 1, b)] + w[(a, b)]
        })
    }
}

/// Node values as 2D prefix sums of cell increments; zero on the axes.
pub fn field_from_increments(inc: &IncrementField) -> GridField {
    let n = inc.n;
    let mut w = DMatrix::zeros(n + 1, n + 1);
    for i in 1..=n {
        let mut row = 0.0;
        for j in 1..=n {
            row += inc.values[(i - 1, j - 1)];
            w[(i, j)] = w[(i - 1, j)] + row;
        }
    }
    GridField {
        n,
        hurst: inc.hurst,
        values: w,
        provenance: inc.provenance,
    }
}

/// Exact sampler of the increment field for one `(hurst, n, method)`.
#[derive(Debug, Clone)]
pub struct SheetSampler {
    hurst: HurstPair,
    n: usize,
    alpha_factor: FactorCache,
    beta_factor: FactorCache,
}

impl SheetSampler {
    pub fn new(hurst: HurstPair, n: usize, method: FactorMethod) -> Result<Self> {
        let alpha_factor = factor_1d(hurst.alpha(), n, method)?;
        let beta_factor = if hurst.beta() == hurst.alpha() {
            alpha_factor.clone()
        } else {
            factor_1d(hurst.beta(), n, method)?
        };
        Ok(Self {
            hurst,
            n,
            alpha_factor,
            beta_factor,
        })
    }

    /// Circulant if the embedding is valid, Cholesky otherwise.
    pub fn preferred(hurst: HurstPair, n: usize) -> Result<Self> {
        match Self::new(hurst, n, FactorMethod::Circulant) {
            Err(Error::NonPsdEmbedding { .. }) => Self::new(hurst, n, FactorMethod::Cholesky),
            other => other,
        }
    }

    pub fn hurst(&self) -> &HurstPair {
        &self.hurst
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn method(&self) -> FactorMethod {
        self.alpha_factor.method()
    }

    /// One exact draw of the increment field.
    pub fn sample_increments(&self, rng: &mut RngStream) -> IncrementField {
        let ka = self.alpha_factor.input_dim();
        let kb = self.beta_factor.input_dim();
        let mut z = vec![0.0; ka * kb];
        rng.fill_standard_normal(&mut z);
        let z = DMatrix::from_vec(ka, kb, z);
        // (F_b (F_a Z)^T)^T = F_a Z F_b^T
        let left = self.alpha_factor.apply(&z);
        let values = self.beta_factor.apply(&left.transpose()).transpose();
        IncrementField {
            n: self.n,
            hurst: self.hurst,
            values,
            provenance: Provenance::Stream(rng.id()),
        }
    }

    /// Increments and the node field of one draw.
    pub fn sample_field(&self, rng: &mut RngStream) -> (IncrementField, GridField) {
        let inc = self.sample_increments(rng);
        let field = field_from_increments(&inc);
        (inc, field)
    }
}

/// Cell increments of a standard Brownian sheet: iid `N(0, 1/n^2)`.
pub fn sample_white_increments(n: usize, rng: &mut RngStream) -> IncrementField {
    let mut z = vec![0.0; n * n];
    rng.fill_standard_normal(&mut z);
    let sd = 1.0 / n as f64;
    for x in z.iter_mut() {
        *x *= sd;
    }
    IncrementField {
        n,
        hurst: HurstPair::brownian(),
        values: DMatrix::from_vec(n, n, z),
        provenance: Provenance::Stream(rng.id()),
    }
}

/// Payload kind of a binary field dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpKind {
    Grid,
    Increments,
}

impl DumpKind {
    fn magic(self) -> [u8; 4] {
        match self {
            DumpKind::Grid => *b"FBSG",
            DumpKind::Increments => *b"FBSI",
        }
    }
}

/// Scale applied to Hurst indices stored as integers in dump headers.
pub const HURST_SCALE: f64 = 1e9;

/// Decoded binary dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub kind: DumpKind,
    pub n: u32,
    pub alpha: f64,
    pub beta: f64,
    /// Row-major values.
    pub values: Vec<f64>,
}

impl FieldDump {
    pub fn side(&self) -> usize {
        match self.kind {
            DumpKind::Grid => self.n as usize + 1,
            DumpKind::Increments => self.n as usize,
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Invalid(format!("I/O error: {e}"))
}

/// Binary dump: 16-byte header (`magic[4]`, `n: u32`, `alpha*1e9: u32`,
/// `beta*1e9: u32`, little endian) followed by row-major `f64` LE values.
pub fn write_dump<W: Write + ?Sized>(
    out: &mut W,
    kind: DumpKind,
    hurst: &HurstPair,
    values: &DMatrix<f64>,
) -> Result<()> {
    let n = match kind {
        DumpKind::Grid => values.nrows() - 1,
        DumpKind::Increments => values.nrows(),
    };
    let n = u32::try_from(n).map_err(|_| Error::Invalid("grid too large for dump header".into()))?;
    let mut header = [0u8; 16];
    header[..4].copy_from_slice(&kind.magic());
    header[4..8].copy_from_slice(&n.to_le_bytes());
    header[8..12].copy_from_slice(&((hurst.alpha() * HURST_SCALE).round() as u32).to_le_bytes());
    header[12..16].copy_from_slice(&((hurst.beta() * HURST_SCALE).round() as u32).to_le_bytes());
    out.write_all(&header).map_err(io_err)?;
    let mut buf = Vec::with_capacity(values.len() * 8);
    for i in 0..values.nrows() {
        for j in 0..values.ncols() {
            buf.extend_from_slice(&values[(i, j)].to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io_err)
}

pub fn read_dump<R: Read>(input: &mut R) -> Result<FieldDump> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header).map_err(io_err)?;
    let kind = match &header[..4] {
        b"FBSG" => DumpKind::Grid,
        b"FBSI" => DumpKind::Increments,
        other => return Err(Error::Invalid(format!("bad dump magic {other:?}"))),
    };
    let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().unwrap());
    let n = word(4);
    let alpha = word(8) as f64 / HURST_SCALE;
    let beta = word(12) as f64 / HURST_SCALE;
    let side = match kind {
        DumpKind::Grid => n as usize + 1,
        DumpKind::Increments => n as usize,
    };
    let mut bytes = vec![0u8; side * side * 8];
    input.read_exact(&mut bytes).map_err(io_err)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FieldDump {
        kind,
        n,
        alpha,
        beta,
        values,
    })
}
