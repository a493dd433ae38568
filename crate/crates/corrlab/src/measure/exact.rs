//! Closed-form Gaussian measures and the special constants of the small-sets
//! results.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

use super::Estimate;

/// `mu_1([-s, s])` through the error function; exact.
pub fn gauss_1d_interval(s: f64) -> Result<Estimate> {
    if s < 0.0 || s.is_nan() {
        return Err(Error::contract("interval halfwidth must be nonnegative"));
    }
    Ok(Estimate::exact(libm::erf(s / std::f64::consts::SQRT_2)))
}

/// `P(a <= X <= b)` for standard normal `X`, through erf differences.
pub fn gauss_1d_range(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    0.5 * (libm::erf(b / std::f64::consts::SQRT_2) - libm::erf(a / std::f64::consts::SQRT_2))
}

/// Standard Gaussian measure of an axis-aligned box: the product of the
/// one-dimensional interval measures.
pub fn box_measure(halfwidths: &[f64]) -> Result<Estimate> {
    let mut p = 1.0;
    for &w in halfwidths {
        p *= gauss_1d_interval(w)?.value;
    }
    Ok(Estimate::exact(p))
}

/// `P(chi^2_n <= r^2)` via the regularized lower incomplete gamma function.
pub fn ball_measure(n: usize, r: f64) -> Result<Estimate> {
    if r < 0.0 || r.is_nan() {
        return Err(Error::contract("ball radius must be nonnegative"));
    }
    if n == 0 {
        return Err(Error::contract("dimension must be at least 1"));
    }
    if r == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    Ok(Estimate::exact(gamma_lr(n as f64 / 2.0, r * r / 2.0)))
}

/// Volume of the Euclidean ball: `pi^(n/2) r^n / Gamma(1 + n/2)`.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    let nf = n as f64;
    let log_v = 0.5 * nf * std::f64::consts::PI.ln() + nf * r.ln() - ln_gamma(1.0 + nf / 2.0);
    log_v.exp()
}

/// The radius with `m(2 rho_n B) = (2 pi)^(n/2)`, in closed form
/// `rho_n = Gamma(1 + n/2)^(1/n) / sqrt(2)`, computed via log-gamma.
pub fn rho_n(n: usize) -> f64 {
    let nf = n as f64;
    (ln_gamma(1.0 + nf / 2.0) / nf).exp() / std::f64::consts::SQRT_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_interval_endpoints() {
        assert_eq!(gauss_1d_interval(0.0).unwrap().value, 0.0);
        assert!((gauss_1d_interval(40.0).unwrap().value - 1.0).abs() < 1e-15);
        // frozen from adaptive quadrature of the density over [-1, 1]
        assert!((gauss_1d_interval(1.0).unwrap().value - 0.6826894921370859).abs() < 1e-12);
        assert!(gauss_1d_interval(-0.1).is_err());
    }

    #[test]
    fn box_measure_products() {
        assert_eq!(box_measure(&[0.0, 1.0]).unwrap().value, 0.0);
        let p1 = gauss_1d_interval(1.0).unwrap().value;
        let p2 = box_measure(&[1.0, 1.0]).unwrap().value;
        assert!((p2 - p1 * p1).abs() < 1e-15);
        assert!((p2 - 0.46606496).abs() < 1e-7);
        let single = box_measure(&[0.7]).unwrap().value;
        assert_eq!(single, gauss_1d_interval(0.7).unwrap().value);
    }

    #[test]
    fn ball_measure_closed_forms() {
        assert_eq!(ball_measure(3, 0.0).unwrap().value, 0.0);
        // dimension 2: P = 1 - exp(-r^2/2); r = sqrt(2 ln 2) gives 1/2
        let r = (2.0 * 2f64.ln()).sqrt();
        assert!((ball_measure(2, r).unwrap().value - 0.5).abs() < 1e-12);
        // dimension 1 reduces to the interval measure
        let a = ball_measure(1, 1.3).unwrap().value;
        let b = gauss_1d_interval(1.3).unwrap().value;
        assert!((a - b).abs() < 1e-11);
    }

    #[test]
    fn ball_clt_limit() {
        let v = ball_measure(400, 20.0).unwrap().value;
        assert!((0.47..=0.53).contains(&v), "v = {v}");
    }

    #[test]
    fn ball_volumes() {
        assert!((ball_volume(2, 1.0) - std::f64::consts::PI).abs() < 1e-12);
        assert!((ball_volume(3, 1.0) - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-12);
        assert!((ball_volume(1, 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rho_defining_identity() {
        // oracle for n=1: solve 4 rho = sqrt(2 pi) directly
        let direct = (2.0 * std::f64::consts::PI).sqrt() / 4.0;
        assert!((rho_n(1) - direct).abs() < 1e-14);
        assert!((rho_n(1) - 0.626657).abs() < 1e-6);
        for n in 1..=50 {
            let lhs = ball_volume(n, 2.0 * rho_n(n));
            let rhs = (2.0 * std::f64::consts::PI).powf(n as f64 / 2.0);
            assert!(
                ((lhs - rhs) / rhs).abs() <= 1e-10,
                "n = {n}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn rho_asymptotics() {
        let n = 10_000usize;
        let asym = 0.5 * (n as f64 / std::f64::consts::E).sqrt();
        let ratio = rho_n(n) / asym;
        assert!((0.98..=1.02).contains(&ratio), "ratio = {ratio}");
    }
}
