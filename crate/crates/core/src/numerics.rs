//! Root bracketing and fixed-node quadrature rules.

use std::num::NonZeroUsize;

use gauss_quad::laguerre::GaussLaguerre;
use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Bisection for a sign change of `f` on `[lo, hi]`, stopping when the bracket
/// is narrower than `tol`.
pub fn bisect<F: Fn(f64) -> f64>(
    what: &'static str,
    f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::RootNotBracketed { what, lo, hi });
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Gauss–Legendre rule on `[-1, 1]` stored as `(node, weight)` pairs.
#[derive(Clone, Debug)]
pub struct Legendre {
    pairs: Vec<(f64, f64)>,
}

impl Legendre {
    pub fn new(nodes: usize) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(nodes.max(1)).unwrap());
        Legendre {
            pairs: rule.as_node_weight_pairs().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `∫_a^b f`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        half * self
            .pairs
            .iter()
            .map(|&(x, w)| w * f(mid + half * x))
            .sum::<f64>()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.pairs
            .iter()
            .map(move |&(x, w)| (mid + half * x, half * w))
    }
}

/// Gauss–Laguerre rule for `∫_0^∞ e^{-u} f(u) du`.
#[derive(Clone, Debug)]
pub struct Laguerre {
    pairs: Vec<(f64, f64)>,
}

impl Laguerre {
    pub fn new(nodes: usize) -> Self {
        let rule = GaussLaguerre::new(
            NonZeroUsize::new(nodes.max(1)).unwrap(),
            gauss_quad::FiniteAboveNegOneF64::new(0.0).unwrap(),
        );
        Laguerre {
            pairs: rule.as_node_weight_pairs().to_vec(),
        }
    }

    /// `∫_0^∞ e^{-rate·x} f(x) dx` for `rate > 0`.
    pub fn integrate_decay<F: FnMut(f64) -> f64>(&self, rate: f64, mut f: F) -> f64 {
        self.pairs
            .iter()
            .map(|&(u, w)| w * f(u / rate))
            .sum::<f64>()
            / rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect("x^2-2", |x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn bisect_reports_missing_bracket() {
        let e = bisect("x^2+1", |x| x * x + 1.0, -1.0, 1.0, 1e-12).unwrap_err();
        assert!(matches!(e, Error::RootNotBracketed { .. }));
    }

    #[test]
    fn legendre_is_exact_for_polynomials() {
        let q = Legendre::new(8);
        let v = q.integrate(0.5, 1.0, |x| x.powi(9));
        assert!((v - (1.0 - 0.5f64.powi(10)) / 10.0).abs() < 1e-15);
    }

    #[test]
    fn laguerre_scaled_moments() {
        let q = Laguerre::new(32);
        // ∫ x^2 e^{-3x} dx = 2/27
        let v = q.integrate_decay(3.0, |x| x * x);
        assert!((v - 2.0 / 27.0).abs() < 1e-14);
    }
}
