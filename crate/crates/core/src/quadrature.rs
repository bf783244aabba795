//! Gaussian expectations and rectangle integrals by Gauss quadrature.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;

/// Nodes of the Gauss–Hermite rule used for `E[g(N(0, v))]`.
pub const HERMITE_NODES: usize = 64;
/// Nodes per axis of the tensor Gauss–Legendre rule on rectangles.
pub const LEGENDRE_NODES: usize = 128;

fn hermite_rule() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(NonZeroUsize::new(HERMITE_NODES).unwrap()))
}

fn legendre_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(LEGENDRE_NODES).unwrap()))
}

/// `E[g(X)]` for `X ~ N(0, variance)`.
pub fn gaussian_expectation<F: Fn(f64) -> f64>(variance: f64, g: F) -> f64 {
    if variance <= 0.0 {
        return g(0.0);
    }
    let scale = (2.0 * variance).sqrt();
    hermite_rule().integrate(|x| g(scale * x)) / std::f64::consts::PI.sqrt()
}

/// `int_0^{t1} int_0^{t2} g(u, v) dv du` on the tensor Legendre grid.
pub fn integrate_rect<F: Fn(f64, f64) -> f64>(t1: f64, t2: f64, g: F) -> f64 {
    if t1 <= 0.0 || t2 <= 0.0 {
        return 0.0;
    }
    let rule = legendre_rule();
    rule.integrate(0.0, t1, |u| rule.integrate(0.0, t2, |v| g(u, v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_moments() {
        for v in [0.0, 0.1, 0.5, 1.0] {
            assert_relative_eq!(gaussian_expectation(v, |x| x * x), v, epsilon = 1e-12);
            assert_relative_eq!(gaussian_expectation(v, |x| x.powi(4)), 3.0 * v * v, epsilon = 1e-12);
            assert_relative_eq!(
                gaussian_expectation(v, |x| x.cos().powi(2)),
                0.5 * (1.0 + (-2.0 * v).exp()),
                epsilon = 1e-12
            );
            assert_relative_eq!(gaussian_expectation(v, |_| 1.0), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rectangle_integrals() {
        assert_relative_eq!(integrate_rect(1.0, 1.0, |u, v| u * v), 0.25, epsilon = 1e-13);
        assert_relative_eq!(integrate_rect(0.5, 1.0, |_, _| 1.0), 0.5, epsilon = 1e-13);
        // weakly singular power, as in E[W(u,v)^2] = u^{2a} v^{2b}
        let (a, b) = (0.35, 0.4);
        let exact = 1.0 / ((2.0 * a + 1.0) * (2.0 * b + 1.0));
        assert_relative_eq!(
            integrate_rect(1.0, 1.0, |u, v| u.powf(2.0 * a) * v.powf(2.0 * b)),
            exact,
            max_relative = 1e-6
        );
        assert_eq!(integrate_rect(0.0, 1.0, |_, _| 1.0), 0.0);
    }
}
