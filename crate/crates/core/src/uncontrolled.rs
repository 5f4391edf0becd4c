//! Lower bounds for uncontrolled systems `x_{t+1} = A x_t + w_t`.
//!
//! The information available after `t` observations is governed by
//! `S_t = sum_{s=1}^{t-1} Gamma_{s-1}(A)`, where `Gamma_s(A)` is the
//! finite-time controllability gramian. Two bounds are inverted against the
//! rate threshold: the exact `lambda_min(S_t)` curve, and the looser scalar
//! curve `phi_{|lambda_d(A)|}(t)` driven by the smallest eigenvalue amplitude.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AccuracySpec, BoundMethod, BoundReport, Matrix};
use crate::spectral::{self, block_diagonalize, eigenvalues_sorted, schur_sorted};
use crate::threshold::{invert_monotone, rate_threshold, DEFAULT_STEP_CAP};

/// Below this `|1 - a^2|` the closed form of `phi` loses accuracy and the
/// running sum is used instead.
const PHI_CLOSED_FORM_MIN_GAP: f64 = 1e-4;

fn require_square(a: &Matrix) -> Result<usize> {
    if !a.is_square() {
        return Err(Error::Dimension("A must be square".into()));
    }
    Ok(a.rows())
}

/// Incremental `Gamma_{t-1}(A)` and `S_t`, starting at `t = 1`.
#[derive(Debug, Clone)]
pub struct GramianAccumulator {
    a: DMatrix<f64>,
    t: u64,
    gamma: DMatrix<f64>,
    s: DMatrix<f64>,
}

impl GramianAccumulator {
    pub fn new(a: &Matrix) -> Result<Self> {
        let d = require_square(a)?;
        Ok(GramianAccumulator {
            a: a.as_dmatrix().clone(),
            t: 1,
            gamma: DMatrix::identity(d, d),
            s: DMatrix::zeros(d, d),
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// `Gamma_{t-1}(A)`.
    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// `S_t`.
    pub fn sum(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// Advances from `t` to `t + 1`.
    pub fn step(&mut self) {
        self.s += &self.gamma;
        let next = &self.a * &self.gamma * self.a.transpose();
        self.gamma = next + DMatrix::identity(self.a.nrows(), self.a.nrows());
        self.t += 1;
    }

    /// `lambda_min(S_t)`.
    pub fn info(&self) -> Result<f64> {
        if self.t == 1 {
            return Ok(0.0);
        }
        spectral::lambda_min_sym(&self.s)
    }
}

/// `Gamma_s(A) = sum_{k=0}^{s} A^k (A^k)^T`.
pub fn gramian(a: &Matrix, s: u64) -> Result<DMatrix<f64>> {
    let mut acc = GramianAccumulator::new(a)?;
    for _ in 0..s {
        acc.step();
    }
    Ok(acc.gamma)
}

/// `S_t = sum_{s=1}^{t-1} Gamma_{s-1}(A)`.
pub fn cumulative_gramian(a: &Matrix, t: u64) -> Result<DMatrix<f64>> {
    if t == 0 {
        return Err(Error::InvalidInput("t must be at least 1".into()));
    }
    let mut acc = GramianAccumulator::new(a)?;
    while acc.t < t {
        acc.step();
    }
    Ok(acc.s)
}

/// `lambda_min(S_t)`; zero at `t = 1`.
pub fn cumulative_info(a: &Matrix, t: u64) -> Result<f64> {
    let s = cumulative_gramian(a, t)?;
    if t == 1 {
        return Ok(0.0);
    }
    spectral::lambda_min_sym(&s)
}

/// `phi_a(t) = sum_{s=1}^{t-1} sum_{k=0}^{s-1} a^{2k}`.
pub fn phi(a: f64, t: u64) -> Result<f64> {
    if !a.is_finite() || a < 0.0 {
        return Err(Error::InvalidInput(format!(
            "a must be a finite nonnegative number (got {a})"
        )));
    }
    if t == 0 {
        return Err(Error::InvalidInput("t must be at least 1".into()));
    }
    if t == 1 {
        return Ok(0.0);
    }
    if a == 0.0 {
        return Ok((t - 1) as f64);
    }
    if a == 1.0 {
        let t = t as f64;
        return Ok(t * (t - 1.0) / 2.0);
    }
    let gap = (1.0 - a) * (1.0 + a);
    if gap.abs() < PHI_CLOSED_FORM_MIN_GAP {
        return Ok(phi_running(a, t));
    }
    // a^{2t} - 1 through expm1 keeps the numerator accurate near a = 1.
    let tf = t as f64;
    let numerator = (2.0 * tf * a.ln()).exp_m1() + tf * gap;
    Ok(numerator / (gap * gap))
}

fn phi_running(a: f64, t: u64) -> f64 {
    let a2 = a * a;
    let mut inner = 1.0;
    let mut total = 0.0;
    for _ in 1..t {
        total += inner;
        inner = 1.0 + a2 * inner;
    }
    total
}

/// Smallest `tau` with `lambda_min(S_tau)` at or above the rate threshold.
pub fn tau_gramian(a: &Matrix, spec: &AccuracySpec) -> Result<BoundReport> {
    tau_gramian_capped(a, spec, DEFAULT_STEP_CAP)
}

pub fn tau_gramian_capped(a: &Matrix, spec: &AccuracySpec, cap: u64) -> Result<BoundReport> {
    let mut acc = GramianAccumulator::new(a)?;
    invert_monotone(BoundMethod::Gramian, rate_threshold(spec), cap, |t| {
        while acc.t() < t {
            acc.step();
        }
        acc.info()
    })
}

/// Smallest `tau` with `phi_{|lambda_d(A)|}(tau)` at or above the rate
/// threshold.
pub fn tau_spectral(a: &Matrix, spec: &AccuracySpec) -> Result<BoundReport> {
    tau_spectral_capped(a, spec, DEFAULT_STEP_CAP)
}

pub fn tau_spectral_capped(a: &Matrix, spec: &AccuracySpec, cap: u64) -> Result<BoundReport> {
    require_square(a)?;
    let amplitude = eigenvalues_sorted(a)?.min_amplitude();
    tau_phi(amplitude, rate_threshold(spec), cap, BoundMethod::Spectral)
}

/// Inverts `phi_amplitude` by running summation; never evaluates
/// `amplitude^{2t}` on its own, so unstable amplitudes saturate to infinity
/// only after the threshold is crossed.
pub(crate) fn tau_phi(
    amplitude: f64,
    threshold: f64,
    cap: u64,
    method: BoundMethod,
) -> Result<BoundReport> {
    let a2 = amplitude * amplitude;
    let mut inner = 1.0;
    let mut total = 0.0;
    invert_monotone(method, threshold, cap, |t| {
        if t > 1 {
            total += inner;
            inner = 1.0 + a2 * inner;
        }
        Ok(total)
    })
}

/// `(1/2) tr((A - A')^T (A - A') S_t)`: expected log-likelihood ratio of
/// `t` observations under `A` against `A'`.
pub fn expected_llr(a: &Matrix, a_prime: &Matrix, t: u64) -> Result<f64> {
    require_square(a)?;
    if a.rows() != a_prime.rows() || a.cols() != a_prime.cols() {
        return Err(Error::Dimension("A and A' must have the same shape".into()));
    }
    let diff = a.as_dmatrix() - a_prime.as_dmatrix();
    let s = cumulative_gramian(a, t)?;
    Ok(0.5 * (diff.transpose() * diff * s).trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfusingKind {
    GramianDirection,
    SchurSpectral,
}

/// Alternative system `A'` that is hard to distinguish from `A`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusingInstance {
    pub a_prime: Matrix,
    pub distance: f64,
    pub kind: ConfusingKind,
}

/// `A' = A - 2 eps q q^T` with `q` a unit eigenvector of `S_t` for
/// `lambda_min(S_t)`.
pub fn confusing_gramian(a: &Matrix, spec: &AccuracySpec, t: u64) -> Result<ConfusingInstance> {
    require_square(a)?;
    if t < 2 {
        return Err(Error::Precondition(format!(
            "gramian confusing instance needs t >= 2 (got {t})"
        )));
    }
    let s = cumulative_gramian(a, t)?;
    let (_, q) = spectral::min_eigenpair_sym(&s)?;
    let delta = (&q * q.transpose()) * (2.0 * spec.eps());
    build_instance(a, delta, ConfusingKind::GramianDirection)
}

/// `A' = A - 2 eps E_k(B_k) Q^T` from the amplitude-sorted Schur form.
///
/// `E_k` is zero except for its trailing block `J`, which is `1` for a real
/// trailing eigenvalue and `P^{-1} / ||P^{-1}||_F` for a complex pair.
pub fn confusing_schur(a: &Matrix, spec: &AccuracySpec) -> Result<ConfusingInstance> {
    require_square(a)?;
    let form = schur_sorted(a)?;
    let block = form.trailing_block();
    let d = a.rows();
    let mut e = DMatrix::<f64>::zeros(d, d);
    if block.size == 1 {
        e[(block.offset, block.offset)] = 1.0;
    } else {
        let bk = form.trailing_matrix();
        let bk = Matrix2::new(bk[(0, 0)], bk[(0, 1)], bk[(1, 0)], bk[(1, 1)]);
        let bd = block_diagonalize(&bk)?;
        let p_inv = bd.p.try_inverse().ok_or_else(|| {
            Error::Numerical("block diagonalization produced a singular P".into())
        })?;
        let j = p_inv / p_inv.norm();
        e.view_mut((block.offset, block.offset), (2, 2))
            .copy_from(&j);
    }
    let delta = e * form.q.transpose() * (2.0 * spec.eps());
    build_instance(a, delta, ConfusingKind::SchurSpectral)
}

fn build_instance(
    a: &Matrix,
    delta: DMatrix<f64>,
    kind: ConfusingKind,
) -> Result<ConfusingInstance> {
    let distance = delta.norm();
    let a_prime = Matrix::from_dmatrix(a.as_dmatrix() - delta)?;
    Ok(ConfusingInstance {
        a_prime,
        distance,
        kind,
    })
}

/// Whether `2 eps <= ||A - A'||_F < 3 eps`.
///
/// A relative slack of 1e-12 on the lower edge absorbs rounding in
/// constructions that target exactly `2 eps`.
pub fn check_locally_stable_gap(a: &Matrix, a_prime: &Matrix, spec: &AccuracySpec) -> bool {
    if a.rows() != a_prime.rows() || a.cols() != a_prime.cols() {
        return false;
    }
    let dist = (a.as_dmatrix() - a_prime.as_dmatrix()).norm();
    let eps = spec.eps();
    dist >= 2.0 * eps * (1.0 - 1e-12) && dist < 3.0 * eps
}
