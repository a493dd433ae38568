//! Chunked Monte Carlo estimators.
//!
//! Every estimator splits its sample budget into fixed-size chunks; chunk `i`
//! draws from `stream.derive(label, i)` and partial results merge in chunk
//! order, so values are invariant to the number of workers. Comparisons use
//! common random numbers: all indicators of a compared expression are scored
//! on one shared sample and the slack's standard error comes from the delta
//! method over the joint indicator covariances.

use crate::bodies::Body;
use crate::error::{Error, Result};
use crate::randomness::{chunked_reduce, Stream};
use serde::{Deserialize, Serialize};

use super::{ball_volume, box_measure, Estimate, GaussianSpec, MeasureSpec};

/// Joint counts of a family of indicators scored on one common sample.
#[derive(Clone, Debug)]
pub struct IndicatorStats {
    pub samples: u64,
    pub counts: Vec<u64>,
    /// `pair_counts[i][j]` for `i < j`: samples where both indicators hit.
    pub pair_counts: Vec<Vec<u64>>,
}

impl IndicatorStats {
    pub fn prop(&self, i: usize) -> f64 {
        self.counts[i] as f64 / self.samples as f64
    }

    pub fn estimate(&self, i: usize) -> Estimate {
        Estimate::proportion(self.counts[i], self.samples)
    }

    fn pair_prop(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.prop(i);
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.pair_counts[a][b - a - 1] as f64 / self.samples as f64
    }

    /// Per-draw covariance of indicators `i` and `j`.
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.pair_prop(i, j) - self.prop(i) * self.prop(j)
    }

    /// Delta-method standard error of `g . p_hat`.
    pub fn delta_se(&self, gradient: &[f64]) -> f64 {
        let k = gradient.len();
        let mut var = 0.0;
        for i in 0..k {
            for j in 0..k {
                var += gradient[i] * gradient[j] * self.cov(i, j);
            }
        }
        (var.max(0.0) / self.samples as f64).sqrt()
    }
}

/// Score `k` indicators over `n_samples` common draws of `spec`.
pub fn mc_indicator_stats(
    spec: &MeasureSpec,
    n_samples: u64,
    stream: &Stream,
    label: &str,
    fns: &[&(dyn Fn(&[f64]) -> bool + Sync)],
) -> IndicatorStats {
    let k = fns.len();
    assert!(k <= 64, "indicator engine limited to 64 indicators");
    let dim = spec.dim();
    let gaussian = match spec {
        MeasureSpec::Gaussian(g) => Some(g.sampler()),
        MeasureSpec::Radial(_) => None,
    };
    let radial = match spec {
        MeasureSpec::Radial(r) => Some(r.clone()),
        _ => None,
    };

    let stats = chunked_reduce(
        n_samples,
        stream,
        label,
        || IndicatorStats {
            samples: 0,
            counts: vec![0; k],
            pair_counts: (0..k).map(|i| vec![0; k - i - 1]).collect(),
        },
        |acc, rng, count| {
            let mut z = vec![0.0; dim];
            let mut x = vec![0.0; dim];
            for _ in 0..count {
                match (&gaussian, &radial) {
                    (Some(g), _) => g.sample_into(rng, &mut z, &mut x),
                    (_, Some(r)) => r.sample_into(rng, &mut z, &mut x),
                    _ => unreachable!(),
                }
                let mut mask: u64 = 0;
                for (i, f) in fns.iter().enumerate() {
                    if f(&x) {
                        mask |= 1 << i;
                    }
                }
                for i in 0..k {
                    if mask & (1 << i) != 0 {
                        acc.counts[i] += 1;
                        for j in i + 1..k {
                            if mask & (1 << j) != 0 {
                                acc.pair_counts[i][j - i - 1] += 1;
                            }
                        }
                    }
                }
            }
            acc.samples += count;
        },
        |mut a, b| {
            a.samples += b.samples;
            for (x, y) in a.counts.iter_mut().zip(&b.counts) {
                *x += y;
            }
            for (row_a, row_b) in a.pair_counts.iter_mut().zip(&b.pair_counts) {
                for (x, y) in row_a.iter_mut().zip(row_b) {
                    *x += y;
                }
            }
            a
        },
    );
    stats
}

/// Indicator-mean estimate of the Gaussian measure of a body.
pub fn mc_measure(
    body: &Body,
    spec: &GaussianSpec,
    n_samples: u64,
    stream: &Stream,
) -> Result<Estimate> {
    if n_samples == 0 {
        return Err(Error::contract("sample count must be at least 1"));
    }
    let compiled = body.compiled(spec.dim())?;
    let eval = |x: &[f64]| compiled.eval(x);
    let stats = mc_indicator_stats(
        &MeasureSpec::Gaussian(spec.clone()),
        n_samples,
        stream,
        "mc_measure",
        &[&eval],
    );
    Ok(stats.estimate(0))
}

/// Measures of two bodies and of their intersection from one common sample,
/// plus the indicator covariances needed for slack standard errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JointEstimate {
    pub p_a: Estimate,
    pub p_b: Estimate,
    pub p_ab: Estimate,
    /// Per-draw covariances: `[cov(A,B), cov(A,AB), cov(B,AB)]`.
    pub cov_terms: [f64; 3],
}

impl JointEstimate {
    pub fn slack(&self) -> f64 {
        self.p_ab.value - self.p_a.value * self.p_b.value
    }

    /// Delta-method standard error of `p_ab - p_a p_b`.
    pub fn slack_se(&self) -> f64 {
        let (pa, pb) = (self.p_a.value, self.p_b.value);
        let var_a = pa * (1.0 - pa);
        let var_b = pb * (1.0 - pb);
        let pab = self.p_ab.value;
        let var_ab = pab * (1.0 - pab);
        let [cov_ab, cov_a_ab, cov_b_ab] = self.cov_terms;
        let var = var_ab + pb * pb * var_a + pa * pa * var_b - 2.0 * pb * cov_a_ab
            - 2.0 * pa * cov_b_ab
            + 2.0 * pa * pb * cov_ab;
        (var.max(0.0) / self.p_ab.samples as f64).sqrt()
    }
}

/// One common sample scores both bodies and their intersection.
pub fn mc_joint(
    a: &Body,
    b: &Body,
    spec: &GaussianSpec,
    n_samples: u64,
    stream: &Stream,
) -> Result<JointEstimate> {
    if n_samples == 0 {
        return Err(Error::contract("sample count must be at least 1"));
    }
    let ca = a.compiled(spec.dim())?;
    let cb = b.compiled(spec.dim())?;
    let fa = |x: &[f64]| ca.eval(x);
    let fb = |x: &[f64]| cb.eval(x);
    let stats = mc_indicator_stats(
        &MeasureSpec::Gaussian(spec.clone()),
        n_samples,
        stream,
        "mc_joint",
        &[&fa, &fb],
    );
    Ok(joint_from_pair_stats(&stats))
}

/// Build a [`JointEstimate`] from a two-indicator stats table (A at 0, B at 1).
pub fn joint_from_pair_stats(stats: &IndicatorStats) -> JointEstimate {
    let n = stats.samples;
    let c_ab = stats.pair_counts[0][0];
    let p_ab = Estimate::proportion(c_ab, n);
    let (pa, pb, pab) = (stats.prop(0), stats.prop(1), p_ab.value);
    JointEstimate {
        p_a: stats.estimate(0),
        p_b: stats.estimate(1),
        p_ab,
        cov_terms: [
            pab - pa * pb,
            pab - pa * pab,
            pab - pb * pab,
        ],
    }
}

/// Lebesgue volume: closed form for boxes and balls, otherwise hit-rate over
/// uniform samples in the bounding ball times the exact ball volume.
pub fn lebesgue_volume(body: &Body, dim: usize, n_samples: u64, stream: &Stream) -> Result<Estimate> {
    if let Some(v) = exact_volume(body, dim) {
        return Ok(Estimate::exact(v));
    }
    let radius = body.bounding_radius();
    if !radius.is_finite() {
        return Err(Error::Unbounded);
    }
    let compiled = body.compiled(dim)?;
    let ball = super::RadialMeasure::uniform_ball(dim, radius);
    let eval = |x: &[f64]| compiled.eval(x);
    let stats = mc_indicator_stats(
        &MeasureSpec::Radial(ball),
        n_samples,
        stream,
        "lebesgue_volume",
        &[&eval],
    );
    let vol_ball = ball_volume(dim, radius);
    let p = stats.estimate(0);
    Ok(Estimate::mc(
        p.value * vol_ball,
        p.std_error * vol_ball,
        n_samples,
    ))
}

fn exact_volume(body: &Body, dim: usize) -> Option<f64> {
    match body {
        Body::Ball { radius } => Some(ball_volume(dim, *radius)),
        Body::AxisBox { halfwidths } => {
            Some(halfwidths.iter().map(|w| 2.0 * w).product())
        }
        Body::Scaled { factor, inner } => {
            exact_volume(inner, dim).map(|v| v * factor.powi(dim as i32))
        }
        Body::MinkowskiSum { .. } => body
            .exact_minkowski_reduction()
            .and_then(|r| exact_volume(&r, dim)),
        _ => None,
    }
}

/// Conditional-slice estimates `f(t) = mu_{n-1}{ y : (t e_axis + y) in body }`
/// over a sorted grid, one common (n-1)-dimensional sample across all grid
/// points. The slice coordinate is fixed exactly; the conditional law of the
/// remaining coordinates under the standard Gaussian does not depend on `t`.
pub fn marginal_profile(
    body: &Body,
    axis: usize,
    grid: &[f64],
    spec: &GaussianSpec,
    n_samples: u64,
    stream: &Stream,
) -> Result<Vec<Estimate>> {
    let dim = spec.dim();
    if !matches!(spec, GaussianSpec::Standard { .. }) {
        return Err(Error::contract(
            "marginal_profile requires the standard Gaussian spec",
        ));
    }
    if axis >= dim {
        return Err(Error::DimensionMismatch {
            context: "marginal axis",
            expected: dim,
            got: axis,
        });
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::contract("grid must be sorted"));
    }
    let compiled = body.compiled(dim)?;
    let g = grid.to_vec();
    let counts = chunked_reduce(
        n_samples,
        stream,
        "marginal_profile",
        || vec![0u64; g.len()],
        |acc, rng, count| {
            let mut y = vec![0.0; dim - 1];
            let mut x = vec![0.0; dim];
            for _ in 0..count {
                crate::randomness::fill_std_normal(rng, &mut y);
                for (i, v) in y.iter().enumerate() {
                    let slot = if i < axis { i } else { i + 1 };
                    x[slot] = *v;
                }
                for (ti, t) in g.iter().enumerate() {
                    x[axis] = *t;
                    if compiled.eval(&x) {
                        acc[ti] += 1;
                    }
                }
            }
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                *x += y;
            }
            a
        },
    );
    Ok(counts
        .into_iter()
        .map(|c| Estimate::proportion(c, n_samples))
        .collect())
}

/// Exact measure when a closed form exists for the body under the standard
/// Gaussian: balls, boxes, slabs, axis-aligned or rotated ellipsoids.
pub fn exact_gaussian_measure(body: &Body, dim: usize) -> Option<Result<Estimate>> {
    match body {
        Body::Ball { radius } => Some(super::ball_measure(dim, *radius)),
        Body::AxisBox { halfwidths } => Some(box_measure(halfwidths)),
        Body::Slab { halfwidth, .. } => Some(super::gauss_1d_interval(*halfwidth)),
        Body::Ellipsoid { radii, .. } => Some(super::ellipsoid_measure(radii)),
        Body::Scaled { factor, inner } => match inner.scale(*factor) {
            Ok(Body::Scaled { .. }) => None,
            Ok(reduced) => exact_gaussian_measure(&reduced, dim),
            Err(e) => Some(Err(e)),
        },
        Body::MinkowskiSum { .. } => body
            .exact_minkowski_reduction()
            .and_then(|r| exact_gaussian_measure(&r, dim)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{ball_measure, gauss_1d_interval};

    fn stream() -> Stream {
        Stream::root(77)
    }

    #[test]
    fn huge_ball_has_measure_one() {
        let est = mc_measure(
            &Body::ball(1e3).unwrap(),
            &GaussianSpec::standard(3),
            10_000,
            &stream().derive("huge", 0),
        )
        .unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn ball_matches_closed_form_2d() {
        let est = mc_measure(
            &Body::ball(1.0).unwrap(),
            &GaussianSpec::standard(2),
            1_000_000,
            &stream().derive("ball2", 0),
        )
        .unwrap();
        let exact = 1.0 - (-0.5f64).exp();
        assert!(
            (est.value - exact).abs() <= 3.0 * est.std_error,
            "{} vs {exact}",
            est.value
        );
    }

    #[test]
    fn box_matches_product_oracle() {
        let est = mc_measure(
            &Body::axis_box(vec![1.0, 1.0, 1.0]).unwrap(),
            &GaussianSpec::standard(3),
            400_000,
            &stream().derive("box3", 0),
        )
        .unwrap();
        let exact = box_measure(&[1.0, 1.0, 1.0]).unwrap().value;
        assert!((est.value - exact).abs() <= 3.0 * est.std_error);
    }

    #[test]
    fn joint_full_space_slack_is_exactly_zero() {
        let full = Body::ball(1e6).unwrap();
        let b = Body::axis_box(vec![1.0, 1.0]).unwrap();
        let j = mc_joint(
            &full,
            &b,
            &GaussianSpec::standard(2),
            100_000,
            &stream().derive("full", 0),
        )
        .unwrap();
        assert_eq!(j.p_a.value, 1.0);
        assert_eq!(j.p_ab.value, j.p_b.value);
        assert_eq!(j.slack(), 0.0);
    }

    #[test]
    fn joint_self_intersection() {
        let b = Body::ball(1.0).unwrap();
        let j = mc_joint(
            &b,
            &b,
            &GaussianSpec::standard(2),
            100_000,
            &stream().derive("self", 0),
        )
        .unwrap();
        assert_eq!(j.p_ab.value, j.p_a.value);
        let p = j.p_a.value;
        assert!((j.slack() - p * (1.0 - p)).abs() < 1e-15);
        assert!(j.slack() >= 0.0);
        assert!(j.p_ab.value <= j.p_a.value.min(j.p_b.value));
    }

    #[test]
    fn orthogonal_slabs_are_independent() {
        let a = Body::slab(vec![1.0, 0.0], 1.0).unwrap();
        let b = Body::slab(vec![0.0, 1.0], 1.0).unwrap();
        let j = mc_joint(
            &a,
            &b,
            &GaussianSpec::standard(2),
            1_000_000,
            &stream().derive("orth", 0),
        )
        .unwrap();
        assert!(
            j.slack().abs() <= 3.0 * j.slack_se(),
            "slack {} se {}",
            j.slack(),
            j.slack_se()
        );
    }

    #[test]
    fn monotone_containment_is_per_sample() {
        let big = Body::axis_ellipsoid(vec![1.0, 2.0]).unwrap();
        let small = big.scale(0.7).unwrap();
        let j = mc_joint(
            &small,
            &big,
            &GaussianSpec::standard(2),
            50_000,
            &stream().derive("mono", 0),
        )
        .unwrap();
        assert_eq!(j.p_ab.value, j.p_a.value); // small inside big, per sample
        assert!(j.p_a.value <= j.p_b.value);
    }

    #[test]
    fn volume_closed_forms_and_mc() {
        let s = stream().derive("vol", 0);
        let pi = std::f64::consts::PI;
        let v = lebesgue_volume(&Body::ball(1.0).unwrap(), 2, 10, &s).unwrap();
        assert_eq!(v.method, super::super::Method::Exact);
        assert!((v.value - pi).abs() < 1e-12);

        let vb = lebesgue_volume(&Body::axis_box(vec![1.0, 2.0]).unwrap(), 2, 10, &s).unwrap();
        assert!((vb.value - 8.0).abs() < 1e-12);

        let mink =
            Body::minkowski_sum(Body::ball(1.0).unwrap(), Body::ball(1.0).unwrap()).unwrap();
        let vm = lebesgue_volume(&mink, 2, 10, &s).unwrap();
        assert!((vm.value - 4.0 * pi).abs() <= (3.0 * vm.std_error).max(1e-12));

        // genuine MC path: intersection of ball and box
        let inter = Body::intersection(vec![
            Body::ball(1.0).unwrap(),
            Body::axis_box(vec![0.8, 0.8]).unwrap(),
        ])
        .unwrap();
        let vi = lebesgue_volume(&inter, 2, 400_000, &s).unwrap();
        // oracle by fine grid: area of {|x|<=1} ∩ [-0.8,0.8]^2
        let m = 2000;
        let mut hits = 0u64;
        for i in 0..m {
            for jj in 0..m {
                let x = -0.8 + 1.6 * (i as f64 + 0.5) / m as f64;
                let y = -0.8 + 1.6 * (jj as f64 + 0.5) / m as f64;
                if x * x + y * y <= 1.0 {
                    hits += 1;
                }
            }
        }
        let oracle = 1.6 * 1.6 * hits as f64 / (m * m) as f64;
        assert!(
            (vi.value - oracle).abs() <= 3.0 * vi.std_error + 1e-3,
            "{} vs {oracle}",
            vi.value
        );

        assert!(matches!(
            lebesgue_volume(&Body::slab(vec![1.0, 0.0], 1.0).unwrap(), 2, 10, &s),
            Err(Error::Unbounded)
        ));
    }

    #[test]
    fn marginal_profile_slices() {
        let s = stream().derive("marg", 0);
        let grid: Vec<f64> = (-10..=10).map(|k| k as f64 * 0.25).collect();
        let ball = Body::ball(2.0).unwrap();
        let prof = marginal_profile(&ball, 0, &grid, &GaussianSpec::standard(2), 200_000, &s)
            .unwrap();
        let mid = grid.iter().position(|t| *t == 0.0).unwrap();
        let oracle = gauss_1d_interval(2.0).unwrap().value;
        assert!((prof[mid].value - oracle).abs() <= 3.0 * prof[mid].std_error);
        // symmetry within noise
        for k in 0..grid.len() {
            let k2 = grid.len() - 1 - k;
            let se = (prof[k].std_error.powi(2) + prof[k2].std_error.powi(2)).sqrt();
            assert!((prof[k].value - prof[k2].value).abs() <= 3.0 * se + 1e-12);
        }

        // product structure of a box: constant inside, zero outside
        let bx = Body::axis_box(vec![1.0, 1.0]).unwrap();
        let prof = marginal_profile(&bx, 0, &grid, &GaussianSpec::standard(2), 100_000, &s)
            .unwrap();
        let inner = gauss_1d_interval(1.0).unwrap().value;
        for (t, e) in grid.iter().zip(&prof) {
            if t.abs() <= 1.0 {
                assert!((e.value - inner).abs() <= 3.0 * e.std_error);
            } else {
                assert_eq!(e.value, 0.0);
            }
        }
        // all inside-grid estimates share the sample, hence are identical
        let first_inside = prof[grid.iter().position(|t| t.abs() <= 1.0).unwrap()].value;
        for (t, e) in grid.iter().zip(&prof) {
            if t.abs() < 1.0 {
                assert_eq!(e.value, first_inside);
            }
        }
    }

    #[test]
    fn scaling_law_bound() {
        let s = stream();
        let bodies = [
            Body::ball(0.9).unwrap(),
            Body::axis_box(vec![0.7, 1.1, 0.9]).unwrap(),
            Body::axis_ellipsoid(vec![0.6, 1.4, 1.0]).unwrap(),
        ];
        for (i, body) in bodies.iter().enumerate() {
            let c: f64 = 1.5;
            let n = 3;
            let base = mc_measure(
                body,
                &GaussianSpec::standard(n),
                200_000,
                &s.derive("scale-law", i as u64),
            )
            .unwrap();
            let scaled = mc_measure(
                &body.scale(c).unwrap(),
                &GaussianSpec::standard(n),
                200_000,
                &s.derive("scale-law", i as u64),
            )
            .unwrap();
            let bound = c.powi(n as i32) * base.value;
            let se = (scaled.std_error.powi(2)
                + (c.powi(n as i32) * base.std_error).powi(2))
            .sqrt();
            assert!(scaled.value <= bound + 3.0 * se);
        }
    }

    #[test]
    fn std_error_scales_like_inverse_sqrt_n() {
        let b = Body::ball(1.2).unwrap();
        let spec = GaussianSpec::standard(3);
        let e1 = mc_measure(&b, &spec, 50_000, &stream().derive("se", 0)).unwrap();
        let e2 = mc_measure(&b, &spec, 200_000, &stream().derive("se", 1)).unwrap();
        let ratio = e1.std_error / e2.std_error;
        assert!((ratio - 2.0).abs() <= 0.4, "ratio = {ratio}");
    }

    #[test]
    fn shaped_spec_sampling() {
        // X = T z with T = [[1,0],[0.9, sqrt(1-0.81)]]: corr(X1,X2) = 0.9.
        let t = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.9, (1.0f64 - 0.81).sqrt()]);
        let spec = GaussianSpec::shaped(t).unwrap();
        let slab = Body::slab(vec![1.0, 0.0], 1.0).unwrap();
        let est = mc_measure(&slab, &spec, 400_000, &stream().derive("shaped", 0)).unwrap();
        let oracle = gauss_1d_interval(1.0).unwrap().value;
        assert!((est.value - oracle).abs() <= 3.0 * est.std_error);
    }
}
