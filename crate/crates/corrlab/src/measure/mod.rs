//! Exact and Monte Carlo evaluation of Gaussian measures, Lebesgue volumes,
//! and the special constants used by the inequality checks.

mod exact;
mod imhof;
mod mc;

pub use exact::{ball_measure, ball_volume, box_measure, gauss_1d_interval, gauss_1d_range, rho_n};
pub use imhof::{ellipsoid_measure, ellipsoid_measure_with, weighted_chi_square_cdf};
pub use mc::{
    lebesgue_volume, marginal_profile, mc_joint, mc_measure, IndicatorStats, JointEstimate,
};

use std::sync::Arc;

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::fill_std_normal;

/// How an [`Estimate`] was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Mc,
    Quadrature,
}

/// A numerical value with its standard error and sample count.
///
/// `method = exact` implies `std_error = 0`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    #[serde(rename = "se")]
    pub std_error: f64,
    #[serde(rename = "n")]
    pub samples: u64,
    pub method: Method,
}

impl Estimate {
    pub fn exact(value: f64) -> Estimate {
        Estimate {
            value,
            std_error: 0.0,
            samples: 0,
            method: Method::Exact,
        }
    }

    pub fn mc(value: f64, std_error: f64, samples: u64) -> Estimate {
        Estimate {
            value,
            std_error,
            samples,
            method: Method::Mc,
        }
    }

    pub fn quadrature(value: f64, bound: f64, evals: u64) -> Estimate {
        Estimate {
            value,
            std_error: bound,
            samples: evals,
            method: Method::Quadrature,
        }
    }

    /// Binomial proportion estimate from a hit count.
    pub fn proportion(hits: u64, samples: u64) -> Estimate {
        let n = samples as f64;
        let p = hits as f64 / n;
        Estimate::mc(p, (p * (1.0 - p) / n).sqrt(), samples)
    }
}

/// A centered Gaussian law: either standard in a given dimension, or the law
/// of `T z` for a square nonsingular factor `T` and standard `z`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum GaussianSpec {
    Standard { dim: usize },
    Shaped { factor: Vec<Vec<f64>> },
}

impl GaussianSpec {
    pub fn standard(dim: usize) -> GaussianSpec {
        GaussianSpec::Standard { dim }
    }

    pub fn shaped(factor: DMatrix<f64>) -> Result<GaussianSpec> {
        if factor.nrows() != factor.ncols() || factor.nrows() == 0 {
            return Err(Error::contract("shaped factor must be square and nonempty"));
        }
        let rows = (0..factor.nrows())
            .map(|i| factor.row(i).iter().copied().collect())
            .collect();
        Ok(GaussianSpec::Shaped { factor: rows })
    }

    pub fn dim(&self) -> usize {
        match self {
            GaussianSpec::Standard { dim } => *dim,
            GaussianSpec::Shaped { factor } => factor.len(),
        }
    }

    pub fn factor_matrix(&self) -> DMatrix<f64> {
        match self {
            GaussianSpec::Standard { dim } => DMatrix::identity(*dim, *dim),
            GaussianSpec::Shaped { factor } => {
                let n = factor.len();
                DMatrix::from_fn(n, n, |i, j| factor[i][j])
            }
        }
    }

    /// Covariance `T T^T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let t = self.factor_matrix();
        &t * t.transpose()
    }

    /// One-time compiled sampler for hot loops.
    pub fn sampler(&self) -> GaussianSampler {
        let flat = match self {
            GaussianSpec::Standard { .. } => None,
            GaussianSpec::Shaped { factor } => {
                Some(factor.iter().flat_map(|r| r.iter().copied()).collect())
            }
        };
        GaussianSampler {
            dim: self.dim(),
            factor_flat: flat,
        }
    }
}

/// Compiled sampler for a [`GaussianSpec`].
pub struct GaussianSampler {
    dim: usize,
    factor_flat: Option<Vec<f64>>, // row-major
}

impl GaussianSampler {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draw one vector: `z` receives the standard draws, `x` the shaped vector.
    #[inline]
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, z: &mut [f64], x: &mut [f64]) {
        fill_std_normal(rng, z);
        match &self.factor_flat {
            None => x.copy_from_slice(z),
            Some(t) => {
                let n = self.dim;
                for i in 0..n {
                    let row = &t[i * n..(i + 1) * n];
                    let mut s = 0.0;
                    for j in 0..n {
                        s += row[j] * z[j];
                    }
                    x[i] = s;
                }
            }
        }
    }
}

/// A rotation-invariant probability given as a radial law times the uniform
/// sphere measure.
#[derive(Clone)]
pub struct RadialMeasure {
    pub dim: usize,
    pub label: String,
    radial_cdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    radial_sampler: Arc<dyn Fn(&mut ChaCha8Rng) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for RadialMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RadialMeasure({}, dim={})", self.label, self.dim)
    }
}

impl RadialMeasure {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        radial_cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        radial_sampler: impl Fn(&mut ChaCha8Rng) -> f64 + Send + Sync + 'static,
    ) -> RadialMeasure {
        RadialMeasure {
            dim,
            label: label.into(),
            radial_cdf: Arc::new(radial_cdf),
            radial_sampler: Arc::new(radial_sampler),
        }
    }

    /// The radial law of the standard Gaussian in dimension `n` (chi).
    pub fn gaussian(n: usize) -> RadialMeasure {
        RadialMeasure::new(
            n,
            format!("gaussian-radial({n})"),
            move |r| {
                if r <= 0.0 {
                    0.0
                } else {
                    statrs::function::gamma::gamma_lr(n as f64 / 2.0, r * r / 2.0)
                }
            },
            move |rng| {
                let mut s = 0.0;
                let mut buf = [0.0f64];
                for _ in 0..n {
                    fill_std_normal(rng, &mut buf);
                    s += buf[0] * buf[0];
                }
                s.sqrt()
            },
        )
    }

    /// Uniform probability on the ball of radius `r` in dimension `n`.
    pub fn uniform_ball(n: usize, radius: f64) -> RadialMeasure {
        RadialMeasure::new(
            n,
            format!("uniform-ball({n}, r={radius})"),
            move |r| ((r / radius).clamp(0.0, 1.0)).powi(n as i32),
            move |rng| {
                use rand::Rng;
                let u: f64 = rng.random();
                radius * u.powf(1.0 / n as f64)
            },
        )
    }

    pub fn cdf(&self, r: f64) -> f64 {
        (self.radial_cdf)(r)
    }

    pub fn sample_radius(&self, rng: &mut ChaCha8Rng) -> f64 {
        (self.radial_sampler)(rng)
    }

    /// Draw one point: radius from the radial law, direction uniform on the
    /// sphere (normalized Gaussian).
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, scratch: &mut [f64], x: &mut [f64]) {
        let r = self.sample_radius(rng);
        fill_std_normal(rng, scratch);
        let nrm: f64 = scratch.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 {
            x.fill(0.0);
            if !x.is_empty() {
                x[0] = r;
            }
            return;
        }
        for i in 0..x.len() {
            x[i] = r * scratch[i] / nrm;
        }
    }

    /// Grid check of the CDF invariants: nonnegative at 0, nondecreasing,
    /// limit 1.
    pub fn validate(&self, r_max: f64, steps: usize) -> Result<()> {
        let mut prev = self.cdf(0.0);
        if prev < 0.0 {
            return Err(Error::contract("radial cdf negative at 0"));
        }
        for k in 1..=steps {
            let r = r_max * k as f64 / steps as f64;
            let c = self.cdf(r);
            if c + 1e-12 < prev {
                return Err(Error::contract("radial cdf must be nondecreasing"));
            }
            prev = c;
        }
        if prev < 1.0 - 1e-6 {
            return Err(Error::contract("radial cdf does not reach 1"));
        }
        Ok(())
    }
}

/// The measure a Monte Carlo estimator samples from.
#[derive(Clone, Debug)]
pub enum MeasureSpec {
    Gaussian(GaussianSpec),
    Radial(RadialMeasure),
}

impl MeasureSpec {
    pub fn dim(&self) -> usize {
        match self {
            MeasureSpec::Gaussian(g) => g.dim(),
            MeasureSpec::Radial(r) => r.dim,
        }
    }
}
