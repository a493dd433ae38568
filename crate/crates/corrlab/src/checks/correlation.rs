//! Correlation-style checks: the conjectured product bound itself, its
//! ball-intersection and small-sets specializations, and the 2^(n/2) bound.

use serde_json::json;

use crate::bodies::Body;
use crate::error::{Error, Result};
use crate::measure::{ball_measure, mc_joint, rho_n, Estimate, GaussianSpec, MeasureSpec};
use crate::randomness::Stream;

use super::{inputs_digest, CheckReport};

fn product_estimate(pa: &Estimate, pb: &Estimate, cov_ab: f64) -> Estimate {
    let n = pa.samples.max(1) as f64;
    let var = pb.value * pb.value * pa.std_error * pa.std_error
        + pa.value * pa.value * pb.std_error * pb.std_error
        + 2.0 * pa.value * pb.value * cov_ab / n;
    Estimate::mc(pa.value * pb.value, var.max(0.0).sqrt(), pa.samples)
}

fn digest_bodies(name: &str, bodies: &[&Body], spec: &GaussianSpec, stream: &Stream) -> String {
    inputs_digest(&json!({
        "check": name,
        "bodies": bodies,
        "spec": spec,
        "stream": stream.path(),
    }))
}

/// `mu(A n B) >= mu(A) mu(B)` from one common-random-number sample.
pub fn correlation_check(
    a: &Body,
    b: &Body,
    spec: &GaussianSpec,
    n_samples: u64,
    stream: &Stream,
) -> Result<CheckReport> {
    let joint = mc_joint(a, b, spec, n_samples, stream)?;
    let rhs = product_estimate(&joint.p_a, &joint.p_b, joint.cov_terms[0]);
    Ok(CheckReport::lower_bound(
        "correlation",
        joint.p_ab,
        rhs,
        joint.slack(),
        joint.slack_se(),
        digest_bodies("correlation", &[a, b], spec, stream),
    ))
}

/// `mu(A n rB) >= mu(A) mu(rB)` with the ball factor exact.
pub fn ball_intersection_check(
    a: &Body,
    r: f64,
    spec: &GaussianSpec,
    n_samples: u64,
    stream: &Stream,
) -> Result<CheckReport> {
    if r <= 0.0 {
        return Err(Error::contract("ball radius must be positive"));
    }
    if !matches!(spec, GaussianSpec::Standard { .. }) {
        return Err(Error::contract(
            "ball_intersection_check needs the standard Gaussian",
        ));
    }
    let n = spec.dim();
    let q = ball_measure(n, r)?.value;
    let ball = Body::ball(r)?;
    let joint = mc_joint(a, &ball, spec, n_samples, stream)?;
    let (pa, pab) = (joint.p_a.value, joint.p_ab.value);
    let slack = pab - q * pa;
    // hybrid: the ball factor carries no noise
    let var_a = pa * (1.0 - pa);
    let var_ab = pab * (1.0 - pab);
    let cov_a_ab = pab - pa * pab;
    let var = var_ab + q * q * var_a - 2.0 * q * cov_a_ab;
    let slack_se = (var.max(0.0) / n_samples as f64).sqrt();
    let rhs = Estimate::mc(q * pa, q * joint.p_a.std_error, n_samples);
    Ok(CheckReport::lower_bound(
        "ball_intersection",
        joint.p_ab,
        rhs,
        slack,
        slack_se,
        digest_bodies("ball_intersection", &[a], spec, stream),
    )
    .with_details(json!({ "r": r, "ball_measure": q })))
}

/// Correlation check for bodies certified inside the critical ball
/// `rho_n B`; refuses inputs whose bounding radius exceeds it.
pub fn small_sets_check(
    a: &Body,
    b: &Body,
    spec: &GaussianSpec,
    n_samples: u64,
    stream: &Stream,
) -> Result<CheckReport> {
    if !matches!(spec, GaussianSpec::Standard { .. }) {
        return Err(Error::contract("small_sets_check needs the standard Gaussian"));
    }
    let limit = rho_n(spec.dim());
    for body in [a, b] {
        let radius = body.bounding_radius();
        if !(radius <= limit) {
            return Err(Error::Containment { radius, limit });
        }
    }
    let report = correlation_check(a, b, spec, n_samples, stream)?;
    let details = json!({
        "containment": {
            "rho_n": limit,
            "radius_a": a.bounding_radius(),
            "radius_b": b.bounding_radius(),
        }
    });
    Ok(CheckReport {
        name: "small_sets".into(),
        ..report
    }
    .with_details(details))
}

/// `2^(n/2) mu(A n B) >= mu(A) mu(B)`.
pub fn pow2_bound_check(
    a: &Body,
    b: &Body,
    spec: &GaussianSpec,
    n_samples: u64,
    stream: &Stream,
) -> Result<CheckReport> {
    let joint = mc_joint(a, b, spec, n_samples, stream)?;
    let factor = 2f64.powf(spec.dim() as f64 / 2.0);
    let (pa, pb, pab) = (joint.p_a.value, joint.p_b.value, joint.p_ab.value);
    let slack = factor * pab - pa * pb;
    let var_a = pa * (1.0 - pa);
    let var_b = pb * (1.0 - pb);
    let var_ab = pab * (1.0 - pab);
    let [cov_ab, cov_a_ab, cov_b_ab] = joint.cov_terms;
    let var = factor * factor * var_ab + pb * pb * var_a + pa * pa * var_b
        - 2.0 * factor * pb * cov_a_ab
        - 2.0 * factor * pa * cov_b_ab
        + 2.0 * pa * pb * cov_ab;
    let slack_se = (var.max(0.0) / n_samples as f64).sqrt();
    let lhs = Estimate::mc(
        factor * pab,
        factor * joint.p_ab.std_error,
        n_samples,
    );
    let rhs = product_estimate(&joint.p_a, &joint.p_b, cov_ab);
    Ok(CheckReport::lower_bound(
        "pow2_bound",
        lhs,
        rhs,
        slack,
        slack_se,
        digest_bodies("pow2_bound", &[a, b], spec, stream),
    )
    .with_details(json!({ "factor": factor })))
}
