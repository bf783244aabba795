//! Replication engine: one derived stream per replication, results collected
//! in replication order so reductions never depend on the worker count.

use rayon::prelude::*;

use crate::error::Result;
use crate::fieldsim::{GridField, IncrementField, SheetSampler};
use crate::kernel::Point;
use crate::numeric::grid_floor;
use crate::qv::qv_process;
use crate::rng::{Purpose, RngStream};
use crate::weight::WeightFunction;

/// Run `job(r)` for `r in 0..replications`, in parallel, returning results
/// in replication order.
pub fn replicate<T, F>(replications: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..replications as u64).into_par_iter().map(job).collect()
}

/// Per-resolution seed, so that runs at different `n` use unrelated streams.
pub fn seed_for_n(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0xd6e8_feb8_6659_fd93)
}

/// Draw one sheet per replication from `(seed, r, purpose)` and map it.
pub fn map_fields<T, F>(
    sampler: &SheetSampler,
    seed: u64,
    replications: usize,
    purpose: Purpose,
    job: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&IncrementField, &GridField) -> Result<T> + Sync + Send,
{
    (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, r, purpose);
            let (inc, field) = sampler.sample_field(&mut rng);
            job(&inc, &field)
        })
        .collect()
}

/// `X^n` evaluated at `points` for one draw.
pub fn statistic_at(
    inc: &IncrementField,
    field: &GridField,
    f: &WeightFunction,
    points: &[Point],
) -> Result<Vec<f64>> {
    let p = qv_process(field, inc, f)?;
    let sums = p.partial_sums();
    Ok(points.iter().map(|t| sums.eval(t[0], t[1])).collect())
}

/// Node value `W(t)` on the grid, at the lower-left node of `t`.
pub fn field_at(field: &GridField, t: Point) -> f64 {
    let n = field.n();
    field.node(grid_floor(n, t[0]), grid_floor(n, t[1]))
}
