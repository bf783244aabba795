//! Simulation and Monte Carlo verification of the central limit theorem for
//! weighted quadratic variations of fractional Brownian sheets.
//!
//! Module map:
//! * [`kernel`]: closed-form covariances and Hilbert-space inner products.
//! * [`chaos`]: Hermite polynomials and second-chaos moments.
//! * [`sigma`]: the limiting constant with a rigorous truncation bound.
//! * [`fieldsim`]: exact Cholesky / circulant-embedding grid samplers.
//! * [`qv`]: the statistic `X^n` and the discretized limit process.
//! * [`mcverify`]: exact finite-`n` moments and Monte Carlo checks.
//! * [`cli`]: the `fbsheet` command-line front end.

pub mod chaos;
pub mod cli;
pub mod error;
pub mod fieldsim;
pub mod kernel;
pub mod mcverify;
pub mod numeric;
pub mod quadrature;
pub mod qv;
pub mod rng;
pub mod sigma;
pub mod weight;

pub use error::{Error, Result};
pub use kernel::{HurstPair, Point, Rect};
