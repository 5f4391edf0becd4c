//! Information thresholds every bound inverts against, and the shared
//! monotone-curve inversion driver.

use crate::error::{Error, Result};
use crate::model::{AccuracySpec, BoundMethod, BoundReport, CurvePoint, NormTag};

/// Default cap on the number of inversion steps.
pub const DEFAULT_STEP_CAP: u64 = 10_000_000;

/// `(1 / (2 eps^2)) * ln(1 / (2.4 delta))`.
///
/// Non-positive when `delta >= 1/2.4`, in which case every bound is trivial.
pub fn rate_threshold(spec: &AccuracySpec) -> f64 {
    let eps = spec.eps();
    confidence_gap_bound(spec.delta()) / (2.0 * eps * eps)
}

/// KL divergence between Bernoulli(x) and Bernoulli(y), natural log.
pub fn bernoulli_kl(x: f64, y: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
    xlogx_over_y(x, y) + xlogx_over_y(1.0 - x, 1.0 - y)
}

fn xlogx_over_y(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else if q == 0.0 {
        f64::INFINITY
    } else {
        p * (p / q).ln()
    }
}

/// Lower bound `ln(1 / (2.4 delta))` on `d(1 - delta, delta)`.
pub fn confidence_gap_bound(delta: f64) -> f64 {
    (1.0 / (2.4 * delta)).ln()
}

/// Exact `d(1 - delta, delta)` that [`confidence_gap_bound`] lower-bounds
/// for `delta < 1/2`.
pub fn confidence_gap_exact(delta: f64) -> f64 {
    bernoulli_kl(1.0 - delta, delta)
}

/// Walks `t = 1, 2, ...` and returns the first `t` whose information value
/// meets the threshold.
///
/// `value_at` is called with consecutive `t` starting at 1 and must describe
/// a nondecreasing curve. A non-positive threshold yields `tau = 1` flagged
/// as trivial.
pub fn invert_monotone<F>(
    method: BoundMethod,
    threshold: f64,
    cap: u64,
    mut value_at: F,
) -> Result<BoundReport>
where
    F: FnMut(u64) -> Result<f64>,
{
    let mut curve = Vec::new();
    let mut t = 1u64;
    loop {
        let value = value_at(t)?;
        if value.is_nan() {
            return Err(Error::Numerical(format!(
                "information value is NaN at t={t}"
            )));
        }
        curve.push(CurvePoint { t, value });
        if value >= threshold {
            return Ok(BoundReport {
                tau: t,
                method,
                threshold,
                trivial: threshold <= 0.0,
                norm: NormTag::default(),
                curve,
            });
        }
        if t >= cap {
            return Err(Error::IterationCap { cap, threshold });
        }
        t += 1;
    }
}
