//! Lower bounds for controlled systems `x_{t+1} = A x_t + B u_t + w_t`.
//!
//! The bound is driven by `lambda_min` of the joint second moment
//! `Sigma_T = sum_{t=0}^{T-1} E[z_t z_t^T]` with `z_t = [x_t; u_t]`. Constant
//! and affine-feedback policies have exact moment recursions; any other
//! policy is evaluated by Monte Carlo.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AccuracySpec, BoundMethod, BoundReport, ControlledSystem};
use crate::sim;
use crate::spectral::{lambda_min_sym2, min_eigenpair_sym};
use crate::threshold::{invert_monotone, rate_threshold, DEFAULT_STEP_CAP};

/// Observation history handed to an external policy at time `t`.
pub struct PolicyInput<'a> {
    /// `x_1 .. x_t` (`x_0 = 0` is implicit).
    pub states: &'a [DVector<f64>],
    /// `u_0 .. u_{t-1}`.
    pub inputs: &'a [DVector<f64>],
    pub state_dim: usize,
}

impl PolicyInput<'_> {
    pub fn t(&self) -> usize {
        self.states.len()
    }

    /// `x_t`.
    pub fn current_state(&self) -> DVector<f64> {
        self.states
            .last()
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.state_dim))
    }
}

pub type ExternalPolicy = Arc<dyn Fn(&PolicyInput<'_>) -> DVector<f64> + Send + Sync>;

/// Causal input policy.
#[derive(Clone)]
pub enum Policy {
    /// `u_t = u`.
    Constant(DVector<f64>),
    /// `u_t = K x_t + c`.
    Feedback { k: DMatrix<f64>, c: DVector<f64> },
    /// Arbitrary function of past observations; Monte Carlo only.
    External(ExternalPolicy),
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Constant(u) => f.debug_tuple("Constant").field(&u.as_slice()).finish(),
            Policy::Feedback { k, c } => f
                .debug_struct("Feedback")
                .field("k", k)
                .field("c", &c.as_slice())
                .finish(),
            Policy::External(_) => f.write_str("External(..)"),
        }
    }
}

impl Policy {
    pub fn constant(u: &[f64]) -> Self {
        Policy::Constant(DVector::from_row_slice(u))
    }

    pub fn validate(&self, sys: &ControlledSystem) -> Result<()> {
        let (d, p) = (sys.state_dim(), sys.input_dim());
        match self {
            Policy::Constant(u) if u.len() != p => Err(Error::Dimension(format!(
                "constant input has length {}, expected {p}",
                u.len()
            ))),
            Policy::Feedback { k, c } if k.nrows() != p || k.ncols() != d => {
                Err(Error::Dimension(format!(
                    "feedback gain is {}x{}, expected {p}x{d}",
                    k.nrows(),
                    k.ncols()
                )))
            }
            Policy::Feedback { c, .. } if c.len() != p => Err(Error::Dimension(format!(
                "feedback offset has length {}, expected {p}",
                c.len()
            ))),
            _ => Ok(()),
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, Policy::External(_))
    }

    /// `(K, c)` with constant inputs expressed as `K = 0`.
    fn affine_parts(&self, sys: &ControlledSystem) -> Option<(DMatrix<f64>, DVector<f64>)> {
        match self {
            Policy::Constant(u) => {
                Some((DMatrix::zeros(sys.input_dim(), sys.state_dim()), u.clone()))
            }
            Policy::Feedback { k, c } => Some((k.clone(), c.clone())),
            Policy::External(_) => None,
        }
    }

    /// `u_t` given the history up to time `t`.
    pub fn input(&self, history: &PolicyInput<'_>) -> DVector<f64> {
        match self {
            Policy::Constant(u) => u.clone(),
            Policy::Feedback { k, c } => k * history.current_state() + c,
            Policy::External(f) => f(history),
        }
    }
}

/// `Sigma_T = sum_{t=0}^{T-1} E[z_t z_t^T]`, `z_t = [x_t; u_t]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointMoment {
    pub horizon: u64,
    pub sigma: DMatrix<f64>,
    /// Entrywise standard errors (Monte Carlo only).
    pub stderr: Option<DMatrix<f64>>,
}

/// Exact first/second moment recursion for affine policies.
struct ExactMoments {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    k: DMatrix<f64>,
    c: DVector<f64>,
    closed_loop: DMatrix<f64>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    sigma: DMatrix<f64>,
    horizon: u64,
}

impl ExactMoments {
    fn new(sys: &ControlledSystem, policy: &Policy) -> Result<Self> {
        policy.validate(sys)?;
        let (k, c) = policy.affine_parts(sys).ok_or_else(|| {
            Error::Precondition("exact moments need a constant or feedback policy".into())
        })?;
        let (d, p) = (sys.state_dim(), sys.input_dim());
        let a = sys.a().as_dmatrix().clone();
        let b = sys.b().as_dmatrix().clone();
        let closed_loop = &a + &b * &k;
        Ok(ExactMoments {
            a,
            b,
            k,
            c,
            closed_loop,
            mean: DVector::zeros(d),
            cov: DMatrix::zeros(d, d),
            sigma: DMatrix::zeros(d + p, d + p),
            horizon: 0,
        })
    }

    /// Adds `E[z_t z_t^T]` for `t = horizon`, then advances the state moments.
    fn step(&mut self) {
        let d = self.a.nrows();
        let p = self.b.ncols();
        let xx = &self.cov + &self.mean * self.mean.transpose();
        let mean_u = &self.k * &self.mean + &self.c;
        let xu = &xx * self.k.transpose() + &self.mean * self.c.transpose();
        let uu = &self.k * &xx * self.k.transpose()
            + &self.k * &self.mean * self.c.transpose()
            + &self.c * (&self.k * &self.mean).transpose()
            + &self.c * self.c.transpose();
        {
            let mut s = self.sigma.view_mut((0, 0), (d, d));
            s += &xx;
        }
        {
            let mut s = self.sigma.view_mut((0, d), (d, p));
            s += &xu;
        }
        {
            let mut s = self.sigma.view_mut((d, 0), (p, d));
            s += xu.transpose();
        }
        {
            let mut s = self.sigma.view_mut((d, d), (p, p));
            s += &uu;
        }
        self.mean = &self.a * &self.mean + &self.b * mean_u;
        self.cov =
            &self.closed_loop * &self.cov * self.closed_loop.transpose() + DMatrix::identity(d, d);
        self.horizon += 1;
    }
}

/// Exact joint moment for constant or affine-feedback policies.
pub fn joint_moment_exact(
    sys: &ControlledSystem,
    policy: &Policy,
    horizon: u64,
) -> Result<JointMoment> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let mut m = ExactMoments::new(sys, policy)?;
    for _ in 0..horizon {
        m.step();
    }
    Ok(JointMoment {
        horizon,
        sigma: m.sigma,
        stderr: None,
    })
}

/// Per-trial `sum_{t=0}^{T-1} z_t z_t^T` from one seeded trajectory.
fn trial_moment(
    sys: &ControlledSystem,
    policy: &Policy,
    horizon: u64,
    seed: u64,
    trial: u64,
) -> Result<DMatrix<f64>> {
    let traj = sim::simulate_controlled_trial(sys, policy, horizon as usize, seed, trial)?;
    let (d, p) = (sys.state_dim(), sys.input_dim());
    let inputs = traj
        .inputs
        .as_ref()
        .expect("controlled trajectory has inputs");
    let mut acc = DMatrix::zeros(d + p, d + p);
    let mut z = DVector::zeros(d + p);
    for (t, u) in inputs.iter().enumerate().take(horizon as usize) {
        if t > 0 {
            match traj.states.get(t - 1) {
                Some(x) => z.rows_mut(0, d).copy_from(x),
                None => break,
            }
        }
        z.rows_mut(d, p).copy_from(u);
        acc.ger(1.0, &z, &z, 1.0);
    }
    Ok(acc)
}

/// Monte Carlo estimate of the joint moment with entrywise standard errors.
///
/// Trial `i` draws from substream `i` of `seed`; results are aggregated in
/// trial order, so the output does not depend on thread scheduling.
pub fn joint_moment_mc(
    sys: &ControlledSystem,
    policy: &Policy,
    horizon: u64,
    trials: u64,
    seed: u64,
) -> Result<JointMoment> {
    if trials < 2 {
        return Err(Error::InvalidInput(
            "Monte Carlo moments need at least 2 trials".into(),
        ));
    }
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    policy.validate(sys)?;
    let samples: Vec<DMatrix<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| trial_moment(sys, policy, horizon, seed, i))
        .collect::<Result<_>>()?;
    let (mean, stderr) = sim::mean_and_stderr(&samples);
    Ok(JointMoment {
        horizon,
        sigma: mean,
        stderr: Some(stderr),
    })
}

/// How `tau_controlled` evaluates the joint moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentEvaluation {
    Exact,
    /// Simulates `trials` trajectories up to `max_horizon`.
    MonteCarlo {
        trials: u64,
        seed: u64,
        max_horizon: u64,
    },
}

/// Stall tolerance for `lambda_min(Sigma_2)`: below it the input direction
/// is treated as unexcited.
const STALL_TOL: f64 = 1e-12;

fn stall_check(sigma: &DMatrix<f64>) -> Result<()> {
    let (lmin, v) = min_eigenpair_sym(sigma)?;
    if lmin <= STALL_TOL * sigma.norm().max(1.0) {
        return Err(Error::Unreachable {
            direction: v.iter().copied().collect(),
        });
    }
    Ok(())
}

/// Smallest `tau` with `lambda_min(Sigma_tau)` at or above the rate threshold.
///
/// With unit-covariance noise the null space of `Sigma_T` is fixed from
/// `T = 2` on for affine policies, so a singular `Sigma_2` means the
/// threshold can never be reached.
pub fn tau_controlled(
    sys: &ControlledSystem,
    spec: &AccuracySpec,
    policy: &Policy,
    eval: MomentEvaluation,
) -> Result<BoundReport> {
    tau_controlled_capped(sys, spec, policy, eval, DEFAULT_STEP_CAP)
}

pub fn tau_controlled_capped(
    sys: &ControlledSystem,
    spec: &AccuracySpec,
    policy: &Policy,
    eval: MomentEvaluation,
    cap: u64,
) -> Result<BoundReport> {
    let threshold = rate_threshold(spec);
    match eval {
        MomentEvaluation::Exact => {
            let mut m = ExactMoments::new(sys, policy)?;
            invert_monotone(BoundMethod::Controlled, threshold, cap, |t| {
                while m.horizon < t {
                    m.step();
                }
                if t == 2 {
                    stall_check(&m.sigma)?;
                }
                crate::spectral::lambda_min_sym(&m.sigma)
            })
        }
        MomentEvaluation::MonteCarlo {
            trials,
            seed,
            max_horizon,
        } => {
            if trials < 2 {
                return Err(Error::InvalidInput(
                    "Monte Carlo moments need at least 2 trials".into(),
                ));
            }
            policy.validate(sys)?;
            let cumulative = mc_cumulative_moments(sys, policy, max_horizon, trials, seed)?;
            let cap = cap.min(max_horizon);
            invert_monotone(BoundMethod::Controlled, threshold, cap, |t| {
                let sigma = &cumulative[t as usize - 1];
                if t == 2 {
                    stall_check(sigma)?;
                }
                crate::spectral::lambda_min_sym(sigma)
            })
        }
    }
}

/// Monte Carlo `Sigma_T` for every `T = 1..=max_horizon`.
fn mc_cumulative_moments(
    sys: &ControlledSystem,
    policy: &Policy,
    max_horizon: u64,
    trials: u64,
    seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    let (d, p) = (sys.state_dim(), sys.input_dim());
    let n = d + p;
    let horizon = max_horizon as usize;
    let per_trial: Vec<Vec<DMatrix<f64>>> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<Vec<DMatrix<f64>>> {
            let traj = sim::simulate_controlled_trial(sys, policy, horizon, seed, i)?;
            let inputs = traj
                .inputs
                .as_ref()
                .expect("controlled trajectory has inputs");
            let mut terms = Vec::with_capacity(horizon);
            let mut z = DVector::zeros(n);
            for t in 0..horizon {
                if t > 0 {
                    if let Some(x) = traj.states.get(t - 1) {
                        z.rows_mut(0, d).copy_from(x);
                    }
                }
                if let Some(u) = inputs.get(t) {
                    z.rows_mut(d, p).copy_from(u);
                }
                terms.push(&z * z.transpose());
            }
            Ok(terms)
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / trials as f64;
    let mut out = Vec::with_capacity(horizon);
    let mut running = DMatrix::zeros(n, n);
    for t in 0..horizon {
        let mut term = DMatrix::zeros(n, n);
        for trial in &per_trial {
            term += &trial[t];
        }
        running += term * scale;
        out.push(running.clone());
    }
    Ok(out)
}

/// Scalar-system sums `(varphi_tau(a), phi_tau(a, b), psi_tau(a, b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSums {
    pub varphi: f64,
    pub phi_ab: f64,
    pub psi: f64,
}

/// Running evaluation of [`ScalarSums`] for `tau = 1, 2, ...`.
#[derive(Debug, Clone)]
struct ScalarSumsAccumulator {
    a: f64,
    b: f64,
    tau: u64,
    // sum_{k<t} a^{2k} and sum_{k<t} a^k b for the next t.
    geometric: f64,
    drift: f64,
    sums: ScalarSums,
}

impl ScalarSumsAccumulator {
    fn new(a: f64, b: f64) -> Self {
        ScalarSumsAccumulator {
            a,
            b,
            tau: 1,
            geometric: 1.0,
            drift: b,
            sums: ScalarSums {
                varphi: 0.0,
                phi_ab: 0.0,
                psi: 0.0,
            },
        }
    }

    fn step(&mut self) {
        self.sums.varphi += self.geometric;
        self.sums.phi_ab += self.drift * self.drift;
        self.sums.psi += self.drift;
        self.geometric = 1.0 + self.a * self.a * self.geometric;
        self.drift = self.b + self.a * self.drift;
        self.tau += 1;
    }
}

pub fn scalar_sums(a: f64, b: f64, tau: u64) -> Result<ScalarSums> {
    if tau == 0 {
        return Err(Error::InvalidInput("tau must be at least 1".into()));
    }
    let mut acc = ScalarSumsAccumulator::new(a, b);
    while acc.tau < tau {
        acc.step();
    }
    Ok(acc.sums)
}

/// Which input-input entry the scalar information matrix uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScalarVariant {
    /// `(tau - 1) u^2`, with the closed-form minimum eigenvalue.
    Paper,
    /// `tau u^2`, matching the joint moment summed over `t = 0..tau-1`.
    #[default]
    Theorem2,
}

impl ScalarVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalarVariant::Paper => "paper",
            ScalarVariant::Theorem2 => "theorem2",
        }
    }
}

/// 2x2 information matrix `[[p, r], [r, q]]` for the scalar system.
pub fn scalar_info_matrix(sums: &ScalarSums, tau: u64, u: f64, variant: ScalarVariant) -> [f64; 3] {
    let u2 = u * u;
    let input_count = match variant {
        ScalarVariant::Paper => (tau - 1) as f64,
        ScalarVariant::Theorem2 => tau as f64,
    };
    [
        sums.varphi + sums.phi_ab * u2,
        input_count * u2,
        sums.psi * u2,
    ]
}

fn f_from_sums(sums: &ScalarSums, tau: u64, u: f64, variant: ScalarVariant) -> f64 {
    match variant {
        ScalarVariant::Paper => f_closed_form(sums, tau, u),
        ScalarVariant::Theorem2 => {
            let [p, q, r] = scalar_info_matrix(sums, tau, u, variant);
            lambda_min_sym2(p, q, r)
        }
    }
}

/// Closed-form smallest eigenvalue with input entry `(tau - 1) u^2`:
/// `(tr - sqrt(D)) / 2`, evaluated as `2 det / (tr + sqrt(D))`.
fn f_closed_form(sums: &ScalarSums, tau: u64, u: f64) -> f64 {
    let u2 = u * u;
    let n = (tau - 1) as f64;
    let ScalarSums {
        varphi,
        phi_ab,
        psi,
    } = *sums;
    let trace = varphi + (phi_ab + n) * u2;
    let spread = varphi + (phi_ab - n) * u2;
    let root = (spread * spread + 4.0 * psi * psi * u2 * u2).sqrt();
    let det = varphi * n * u2 + (phi_ab * n - psi * psi) * u2 * u2;
    if trace + root <= 0.0 {
        return 0.5 * (trace - root);
    }
    2.0 * det / (trace + root)
}

/// `f_{a,b,tau}(u)`: smallest eigenvalue of the scalar information matrix.
pub fn f_scalar(a: f64, b: f64, tau: u64, u: f64, variant: ScalarVariant) -> Result<f64> {
    let sums = scalar_sums(a, b, tau)?;
    Ok(f_from_sums(&sums, tau, u, variant))
}

/// Smallest `tau` with `f_{a,b,tau}(u)` at or above the rate threshold.
pub fn tau_scalar_constant(
    a: f64,
    b: f64,
    spec: &AccuracySpec,
    u: f64,
    variant: ScalarVariant,
) -> Result<BoundReport> {
    tau_scalar_constant_capped(a, b, spec, u, variant, DEFAULT_STEP_CAP)
}

pub fn tau_scalar_constant_capped(
    a: f64,
    b: f64,
    spec: &AccuracySpec,
    u: f64,
    variant: ScalarVariant,
    cap: u64,
) -> Result<BoundReport> {
    let threshold = rate_threshold(spec);
    if u == 0.0 && threshold > 0.0 {
        return Err(Error::Unreachable {
            direction: vec![0.0, 1.0],
        });
    }
    let mut acc = ScalarSumsAccumulator::new(a, b);
    invert_monotone(BoundMethod::Controlled, threshold, cap, |tau| {
        while acc.tau < tau {
            acc.step();
        }
        Ok(f_from_sums(&acc.sums, tau, u, variant))
    })
}

/// Outcome of the constant-input amplitude search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDesign {
    pub ustar: f64,
    pub taustar: u64,
    /// `tau(u)` was nonincreasing over the pre-scan grid.
    pub monotone: bool,
    /// The input does not reach the state, or `tau(u)` was constant on the grid.
    pub flat_objective: bool,
    /// `(u, tau)` pairs from the pre-scan; `None` where the step cap was hit.
    pub scan: Vec<(f64, Option<u64>)>,
}

const DESIGN_GRID_POINTS: usize = 50;
const GOLDEN_ITERATIONS: usize = 60;

/// Minimizes `tau_scalar_constant` over `u` in `(0, umax]`.
///
/// A 50-point pre-scan checks whether `tau(u)` is nonincreasing; a
/// golden-section search over `u^2` then refines the minimizer, and a
/// non-monotone scan additionally triggers an exhaustive refinement around
/// the best grid point. Ties prefer the larger amplitude.
pub fn design_constant_input(
    a: f64,
    b: f64,
    spec: &AccuracySpec,
    umax: f64,
    variant: ScalarVariant,
) -> Result<InputDesign> {
    design_constant_input_capped(a, b, spec, umax, variant, DEFAULT_STEP_CAP)
}

pub fn design_constant_input_capped(
    a: f64,
    b: f64,
    spec: &AccuracySpec,
    umax: f64,
    variant: ScalarVariant,
    cap: u64,
) -> Result<InputDesign> {
    if !(umax > 0.0 && umax.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "umax must be positive (got {umax})"
        )));
    }
    let tau_at = |u: f64| -> Result<Option<u64>> {
        match tau_scalar_constant_capped(a, b, spec, u, variant, cap) {
            Ok(r) => Ok(Some(r.tau)),
            Err(Error::IterationCap { .. }) | Err(Error::Unreachable { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };

    // The largest amplitude is the most informative; if it cannot reach the
    // threshold within the cap, nothing smaller will.
    if tau_at(umax)?.is_none() {
        return Err(Error::IterationCap {
            cap,
            threshold: rate_threshold(spec),
        });
    }

    let scan: Vec<(f64, Option<u64>)> = (1..=DESIGN_GRID_POINTS)
        .map(|i| {
            let u = umax * i as f64 / DESIGN_GRID_POINTS as f64;
            tau_at(u).map(|t| (u, t))
        })
        .collect::<Result<_>>()?;
    let as_cost = |t: Option<u64>| t.unwrap_or(u64::MAX);
    let monotone = scan.windows(2).all(|w| as_cost(w[1].1) <= as_cost(w[0].1));
    let finite: Vec<u64> = scan.iter().filter_map(|&(_, t)| t).collect();
    let flat_objective = b == 0.0 || finite.windows(2).all(|w| w[0] == w[1]);

    let mut candidates: Vec<(f64, u64)> = scan
        .iter()
        .filter_map(|&(u, t)| t.map(|t| (u, t)))
        .collect();

    // Golden-section search on s = u^2 in [0, umax^2].
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, umax * umax);
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let mut f1 = as_cost(tau_at(x1.sqrt())?);
    let mut f2 = as_cost(tau_at(x2.sqrt())?);
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = as_cost(tau_at(x1.sqrt())?);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = as_cost(tau_at(x2.sqrt())?);
        }
    }
    let s_best = 0.5 * (lo + hi);
    if let Some(t) = tau_at(s_best.sqrt())? {
        candidates.push((s_best.sqrt(), t));
    }

    if !monotone {
        let best = scan
            .iter()
            .enumerate()
            .min_by_key(|(_, &(_, t))| as_cost(t))
            .map(|(i, _)| i)
            .expect("non-empty scan");
        let left = if best == 0 { 0.0 } else { scan[best - 1].0 };
        let right = scan.get(best + 1).map(|s| s.0).unwrap_or(umax);
        for i in 1..DESIGN_GRID_POINTS {
            let u = left + (right - left) * i as f64 / DESIGN_GRID_POINTS as f64;
            if let Some(t) = tau_at(u)? {
                candidates.push((u, t));
            }
        }
    }

    let (ustar, taustar) = candidates
        .into_iter()
        .min_by(|x, y| x.1.cmp(&y.1).then(y.0.total_cmp(&x.0)))
        .expect("umax itself is a finite candidate");
    Ok(InputDesign {
        ustar,
        taustar,
        monotone,
        flat_objective,
        scan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Matrix;
    use crate::spectral::lambda_min_sym;
    use crate::uncontrolled::cumulative_gramian;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(eps: f64, delta: f64) -> AccuracySpec {
        AccuracySpec::new(eps, delta).unwrap()
    }

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_major(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn joint_moment_hand_recursion() {
        let sys = ControlledSystem::scalar(0.0, 1.0);
        let jm = joint_moment_exact(&sys, &Policy::constant(&[1.0]), 2).unwrap();
        assert_eq!(
            jm.sigma,
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])
        );
    }

    #[test]
    fn joint_moment_single_step() {
        let sys = ControlledSystem::new(
            m(2, 2, &[0.5, 0.1, 0.0, 0.3]),
            m(2, 2, &[1.0, 0.0, 0.2, 1.0]),
        )
        .unwrap();
        let jm = joint_moment_exact(&sys, &Policy::constant(&[2.0, -1.0]), 1).unwrap();
        let mut expect = DMatrix::zeros(4, 4);
        expect
            .view_mut((2, 2), (2, 2))
            .copy_from(&DMatrix::from_row_slice(2, 2, &[4.0, -2.0, -2.0, 1.0]));
        assert_eq!(jm.sigma, expect);
    }

    #[test]
    fn zero_input_reproduces_uncontrolled_sum() {
        let a = m(2, 2, &[0.9, 0.2, -0.1, 0.7]);
        let sys = ControlledSystem::new(a.clone(), m(2, 1, &[1.0, 0.5])).unwrap();
        for t in [1u64, 2, 5, 30] {
            let jm = joint_moment_exact(&sys, &Policy::constant(&[0.0]), t).unwrap();
            let s = cumulative_gramian(&a, t).unwrap();
            assert!((jm.sigma.view((0, 0), (2, 2)) - &s).norm() <= 1e-12 * (1.0 + s.norm()));
            assert!(jm.sigma.view((0, 2), (2, 1)).norm() == 0.0);
            assert!(jm.sigma[(2, 2)] == 0.0);
        }
    }

    #[test]
    fn moment_lambda_min_nondecreasing() {
        let sys =
            ControlledSystem::new(m(2, 2, &[0.9, 0.3, 0.0, 0.5]), m(2, 1, &[0.0, 1.0])).unwrap();
        let policies = [
            Policy::constant(&[1.5]),
            Policy::Feedback {
                k: DMatrix::from_row_slice(1, 2, &[-0.2, -0.4]),
                c: DVector::from_row_slice(&[0.7]),
            },
        ];
        for policy in &policies {
            let mut prev = f64::NEG_INFINITY;
            for t in 1..60 {
                let jm = joint_moment_exact(&sys, policy, t).unwrap();
                let l = lambda_min_sym(&jm.sigma).unwrap();
                assert!(l >= prev - 1e-9 * jm.sigma.norm(), "{policy:?} t={t}");
                prev = l;
            }
        }
    }

    #[test]
    fn tau_controlled_matches_scalar_path() {
        let s = spec(0.1, 0.05);
        let sys = ControlledSystem::scalar(0.0, 1.0);
        let exact =
            tau_controlled(&sys, &s, &Policy::constant(&[1.0]), MomentEvaluation::Exact).unwrap();
        let scalar = tau_scalar_constant(0.0, 1.0, &s, 1.0, ScalarVariant::Theorem2).unwrap();
        assert_eq!(exact.tau, scalar.tau);
        for (x, y) in exact.curve.iter().zip(&scalar.curve) {
            assert!((x.value - y.value).abs() <= 1e-9 * (1.0 + x.value.abs()));
        }
    }

    #[test]
    fn tau_controlled_zero_input_unreachable() {
        let sys = ControlledSystem::scalar(0.5, 1.0);
        let r = tau_controlled(
            &sys,
            &spec(0.1, 0.05),
            &Policy::constant(&[0.0]),
            MomentEvaluation::Exact,
        );
        match r {
            Err(Error::Unreachable { direction }) => {
                assert!(direction[0].abs() < 1e-12 && (direction[1].abs() - 1.0).abs() < 1e-12);
            }
            other => panic!("expected unreachable, got {other:?}"),
        }
        assert!(matches!(
            tau_scalar_constant(0.5, 1.0, &spec(0.1, 0.05), 0.0, ScalarVariant::Theorem2),
            Err(Error::Unreachable { .. })
        ));
    }

    #[test]
    fn pure_feedback_is_unidentifiable() {
        let sys = ControlledSystem::scalar(0.5, 1.0);
        let policy = Policy::Feedback {
            k: DMatrix::from_element(1, 1, -0.3),
            c: DVector::zeros(1),
        };
        let r = tau_controlled(&sys, &spec(0.1, 0.05), &policy, MomentEvaluation::Exact);
        assert!(matches!(r, Err(Error::Unreachable { .. })));
    }

    #[test]
    fn feedback_stabilizer_has_finite_bound() {
        let sys =
            ControlledSystem::new(m(2, 2, &[1.2, 0.5, 0.0, 0.8]), m(2, 1, &[1.0, 0.0])).unwrap();
        let policy = Policy::Feedback {
            k: DMatrix::from_row_slice(1, 2, &[-0.9, -0.2]),
            c: DVector::from_row_slice(&[1.0]),
        };
        let r = tau_controlled(&sys, &spec(0.1, 0.05), &policy, MomentEvaluation::Exact).unwrap();
        assert!(r.tau > 2);
        assert!(r.curve.windows(2).all(|w| w[1].value >= w[0].value - 1e-9));
    }

    #[test]
    fn scalar_sums_examples() {
        let s = scalar_sums(0.0, 1.0, 2).unwrap();
        assert_eq!((s.varphi, s.phi_ab, s.psi), (1.0, 1.0, 1.0));
        let s = scalar_sums(0.0, 1.0, 9).unwrap();
        assert_eq!((s.varphi, s.phi_ab, s.psi), (8.0, 8.0, 8.0));
        let s = scalar_sums(0.7, -1.3, 1).unwrap();
        assert_eq!((s.varphi, s.phi_ab, s.psi), (0.0, 0.0, 0.0));
    }

    #[test]
    fn scalar_sums_match_direct_summation() {
        for &a in &[-0.9_f64, -0.2, 0.0, 0.5, 0.95, 1.0, 1.05] {
            for &b in &[-1.0, 0.3, 2.0] {
                for tau in [1u64, 2, 3, 10, 50] {
                    let mut direct = ScalarSums {
                        varphi: 0.0,
                        phi_ab: 0.0,
                        psi: 0.0,
                    };
                    for t in 1..tau {
                        let g: f64 = (0..t).map(|k| a.powi(2 * k as i32)).sum();
                        let h: f64 = (0..t).map(|k| a.powi(k as i32) * b).sum();
                        direct.varphi += g;
                        direct.phi_ab += h * h;
                        direct.psi += h;
                    }
                    let got = scalar_sums(a, b, tau).unwrap();
                    let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * (1.0 + y.abs());
                    assert!(close(got.varphi, direct.varphi), "a={a} b={b} tau={tau}");
                    assert!(close(got.phi_ab, direct.phi_ab), "a={a} b={b} tau={tau}");
                    assert!(close(got.psi, direct.psi), "a={a} b={b} tau={tau}");
                }
            }
        }
    }

    #[test]
    fn f_scalar_examples() {
        let v = f_scalar(0.0, 1.0, 2, 1.0, ScalarVariant::Paper).unwrap();
        assert_relative_eq!(v, (3.0 - 5f64.sqrt()) / 2.0, max_relative = 1e-12);
        assert_eq!(
            f_scalar(0.4, 1.0, 7, 0.0, ScalarVariant::Paper).unwrap(),
            0.0
        );
        assert_eq!(
            f_scalar(0.4, 1.0, 7, 0.0, ScalarVariant::Theorem2).unwrap(),
            0.0
        );
        let v = f_scalar(0.0, 1.0, 2, 1.0, ScalarVariant::Theorem2).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn closed_form_agrees_with_textbook_formula() {
        // Well-conditioned inputs, where the literal (tr - sqrt(D)) / 2 is accurate.
        for &(a, b, tau, u) in &[
            (0.5, 1.0, 10u64, 1.0),
            (0.9, 0.5, 30, 2.0),
            (-0.3, 2.0, 5, 0.7),
        ] {
            let s = scalar_sums(a, b, tau).unwrap();
            let n = (tau - 1) as f64;
            let u2: f64 = u * u;
            let literal = 0.5
                * (s.varphi + (s.phi_ab + n) * u2
                    - ((s.varphi + (s.phi_ab - n) * u2).powi(2) + 4.0 * s.psi * s.psi * u2 * u2)
                        .sqrt());
            assert_relative_eq!(
                f_scalar(a, b, tau, u, ScalarVariant::Paper).unwrap(),
                literal,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn tau_scalar_input_never_reaches_state() {
        let s = spec(0.1, 0.05);
        for variant in [ScalarVariant::Paper, ScalarVariant::Theorem2] {
            assert_eq!(
                tau_scalar_constant(0.0, 0.0, &s, 1.0, variant).unwrap().tau,
                108
            );
        }
    }

    #[test]
    fn tau_scalar_matches_tau_controlled_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let s = spec(0.1, 0.05);
        for _ in 0..10 {
            let a = rng.random_range(-0.95..1.05);
            let b = rng.random_range(0.5..2.0);
            let u = rng.random_range(0.5..2.0);
            let sys = ControlledSystem::scalar(a, b);
            let exact =
                tau_controlled(&sys, &s, &Policy::constant(&[u]), MomentEvaluation::Exact).unwrap();
            let scalar = tau_scalar_constant(a, b, &s, u, ScalarVariant::Theorem2).unwrap();
            assert_eq!(exact.tau, scalar.tau, "a={a} b={b} u={u}");
        }
    }

    #[test]
    fn large_amplitude_limit() {
        let s = spec(0.1, 0.05);
        let t3 = tau_scalar_constant(0.5, 1.0, &s, 1e3, ScalarVariant::Theorem2)
            .unwrap()
            .tau;
        let t6 = tau_scalar_constant(0.5, 1.0, &s, 1e6, ScalarVariant::Theorem2)
            .unwrap()
            .tau;
        assert!(t6 <= t3);
        assert_eq!(t6, 2);
    }

    #[test]
    fn design_prefers_maximal_amplitude() {
        let s = spec(0.1, 0.05);
        let d = design_constant_input(0.5, 1.0, &s, 2.0, ScalarVariant::Theorem2).unwrap();
        assert!(d.monotone);
        assert_eq!(d.ustar, 2.0);
        assert_eq!(
            d.taustar,
            tau_scalar_constant(0.5, 1.0, &s, 2.0, ScalarVariant::Theorem2)
                .unwrap()
                .tau
        );
        assert_eq!(d.scan.len(), 50);
    }

    #[test]
    fn design_flat_when_input_cannot_reach_state() {
        let d = design_constant_input(0.5, 0.0, &spec(0.1, 0.05), 2.0, ScalarVariant::Theorem2)
            .unwrap();
        assert!(d.flat_objective);
        assert_eq!(d.ustar, 2.0);
    }

    #[test]
    fn design_tiny_amplitude_hits_cap() {
        let r = design_constant_input_capped(
            0.5,
            1.0,
            &spec(0.1, 0.05),
            1e-4,
            ScalarVariant::Theorem2,
            100_000,
        );
        assert!(matches!(r, Err(Error::IterationCap { .. })));
    }

    #[test]
    fn mc_moments_deterministic_and_exact_at_t1() {
        let sys = ControlledSystem::scalar(0.5, 1.0);
        let p = Policy::constant(&[1.5]);
        let m1 = joint_moment_mc(&sys, &p, 1, 2, 4).unwrap();
        assert_eq!(
            m1.sigma,
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.25])
        );
        let a = joint_moment_mc(&sys, &p, 8, 50, 9).unwrap();
        let b = joint_moment_mc(&sys, &p, 8, 50, 9).unwrap();
        assert_eq!(a, b);
        assert!(joint_moment_mc(&sys, &p, 8, 1, 9).is_err());
    }

    #[test]
    fn external_policy_matches_constant_by_monte_carlo() {
        let sys = ControlledSystem::scalar(0.5, 1.0);
        let ext = Policy::External(Arc::new(|_h: &PolicyInput<'_>| {
            DVector::from_element(1, 1.0)
        }));
        let x = joint_moment_mc(&sys, &ext, 6, 200, 1).unwrap();
        let y = joint_moment_mc(&sys, &Policy::constant(&[1.0]), 6, 200, 1).unwrap();
        assert_eq!(x.sigma, y.sigma);
        assert!(matches!(
            joint_moment_exact(&sys, &ext, 3),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn tau_controlled_monte_carlo_path() {
        let sys = ControlledSystem::scalar(0.0, 1.0);
        let s = spec(0.3, 0.1);
        let exact =
            tau_controlled(&sys, &s, &Policy::constant(&[1.0]), MomentEvaluation::Exact).unwrap();
        let mc = tau_controlled(
            &sys,
            &s,
            &Policy::constant(&[1.0]),
            MomentEvaluation::MonteCarlo {
                trials: 4000,
                seed: 3,
                max_horizon: 100,
            },
        )
        .unwrap();
        assert!(
            (mc.tau as i64 - exact.tau as i64).abs() <= 2,
            "{} vs {}",
            mc.tau,
            exact.tau
        );
    }

    #[test]
    fn policy_dimension_checks() {
        let sys = ControlledSystem::scalar(0.5, 1.0);
        assert!(joint_moment_exact(&sys, &Policy::constant(&[1.0, 2.0]), 3).is_err());
        let bad = Policy::Feedback {
            k: DMatrix::zeros(2, 1),
            c: DVector::zeros(1),
        };
        assert!(joint_moment_exact(&sys, &bad, 3).is_err());
    }
}
