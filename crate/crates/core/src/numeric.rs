//! Small numeric helpers shared by the series and Monte Carlo reductions.

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a slice.
pub fn sum(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<CompensatedSum>().value()
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = sum(xs) / m;
    let var = xs
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .collect::<CompensatedSum>()
        .value()
        / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Unbiased sample variance and its standard error, `sqrt((m4 - s^4) / M)`
/// with central moments estimated from the sample.
pub fn variance_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = sum(xs) / m;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).collect::<CompensatedSum>().value() / m;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).collect::<CompensatedSum>().value() / m;
    let var = m2 * m / (m - 1.0);
    (var, ((m4 - m2 * m2) / m).max(0.0).sqrt())
}

/// `floor(n * s)` with products within `1e-9` of an integer snapped to it,
/// so that e.g. `s = 0.29`, `n = 100` selects index 29.
pub fn grid_floor(n: usize, s: f64) -> usize {
    let x = n as f64 * s.clamp(0.0, 1.0);
    let r = x.round();
    let k = if (x - r).abs() <= 1e-9 * (1.0 + x) { r } else { x.floor() };
    (k as usize).min(n)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let mx = sum(x) / m;
    let my = sum(y) / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
