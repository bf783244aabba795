//! Monte Carlo verification of the finite-n behaviour and the limit theorem
//! for weighted quadratic variations.
//!
//! Every check returns a [`VerifyReport`]: an estimate with its standard
//! error, a reference value tagged with where it came from, and a verdict.
//! Randomness is drawn per replication from streams keyed by
//! `(seed, replication, purpose)`, so results do not depend on how many
//! worker threads run them.

mod charfn;
mod engine;
mod ks;
mod moments;
mod props;
mod report;

pub use charfn::{
    build_q, product_grid, CharFnCheck, CovMatrixQ, LevelComparison, SheetFunctional, BOOTSTRAP_RESAMPLES,
    DEFAULT_LAMBDA_VALUES, MAX_LAMBDA,
};
pub use engine::{field_at, map_fields, replicate, seed_for_n, statistic_at};
pub use ks::{clt_ks_check, kolmogorov_survival, ks_normality, KsResult, MIN_SAMPLES};
pub use moments::{
    axis_moments, exact_mean, exact_second_moment, limit_second_moment, mean_decay, AxisMoments, MeanDecay,
    MomentCheck, SecondMomentLimit, SIGMA_TOL,
};
pub use props::{
    incr_cov_expansion, kernel_property_suite, point_rect_expansion, EmpiricalCovariance, SamplerCheck,
    BOUND_SLACK, KERNEL_TOL,
};
pub use report::{render_table, to_json_string, RefProvenance, RoundTripFormatter, VerifyReport};
