//! Seeded simulation, least-squares estimation and the Monte Carlo harness
//! that measures empirical sample complexity.
//!
//! Every trial draws from its own ChaCha8 substream: the generator is seeded
//! from the run seed and switched to stream `trial`. Noise is consumed in the
//! same order by every entry point, so a trial simulated on its own and the
//! same trial advanced inside the harness see identical data.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controlled::{Policy, PolicyInput};
use crate::error::{Error, Result};
use crate::model::{AccuracySpec, ControlledSystem, Matrix, UncontrolledSystem};
use crate::uncontrolled::{tau_gramian, tau_spectral};

/// Generator and sampler identifier recorded in every report.
pub const PRNG_ID: &str =
    "rand_chacha-0.9 ChaCha8Rng(seed_from_u64(seed), stream=trial) + rand_distr-0.5 StandardNormal";

/// Ridge added to the normal equations of every least-squares fit.
pub const OLS_RIDGE: f64 = 1e-10;

/// Trials stop once the state norm exceeds this.
pub const HALT_NORM: f64 = 1e150;

const GEOMETRIC_RATIO: f64 = 1.2;
const STABILITY_WINDOW: usize = 3;
const REFINE_POINTS: usize = 32;

/// Generator for `trial` under run seed `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix, with the signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// One realization of a simulated system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// `x_1 .. x_T`, shorter if the trial halted.
    pub states: Vec<DVector<f64>>,
    /// `u_0 .. u_{T-1}` for controlled systems.
    pub inputs: Option<Vec<DVector<f64>>>,
    pub seed: u64,
    pub horizon: usize,
    /// Time index of the first state whose norm exceeded [`HALT_NORM`].
    pub halted_at: Option<usize>,
}

impl Trajectory {
    /// Builds a trajectory from explicit data, for estimator checks on
    /// synthetic sequences.
    pub fn from_states(
        states: Vec<DVector<f64>>,
        inputs: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        if let Some(u) = &inputs {
            if u.len() != states.len() {
                return Err(Error::Dimension(format!(
                    "{} inputs for {} states",
                    u.len(),
                    states.len()
                )));
            }
        }
        let horizon = states.len();
        Ok(Trajectory {
            states,
            inputs,
            seed: 0,
            horizon,
            halted_at: None,
        })
    }

    /// `x_t`, with `x_0 = 0`.
    pub fn state(&self, t: usize, d: usize) -> Option<DVector<f64>> {
        if t == 0 {
            Some(DVector::zeros(d))
        } else {
            self.states.get(t - 1).cloned()
        }
    }
}

pub fn simulate_uncontrolled(
    sys: &UncontrolledSystem,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    simulate_uncontrolled_trial(sys, horizon, seed, 0)
}

pub fn simulate_uncontrolled_trial(
    sys: &UncontrolledSystem,
    horizon: usize,
    seed: u64,
    trial: u64,
) -> Result<Trajectory> {
    let mut rng = trial_rng(seed, trial);
    let d = sys.dim();
    let mut traj = simulate_uncontrolled_with_noise(sys, horizon, |_| gaussian(&mut rng, d))?;
    traj.seed = seed;
    Ok(traj)
}

/// Simulates with caller-supplied noise `w_t` for `t = 0 .. horizon-1`.
pub fn simulate_uncontrolled_with_noise<F>(
    sys: &UncontrolledSystem,
    horizon: usize,
    mut noise: F,
) -> Result<Trajectory>
where
    F: FnMut(usize) -> DVector<f64>,
{
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let a = sys.a().as_dmatrix();
    let d = sys.dim();
    let mut x = DVector::zeros(d);
    let mut states = Vec::with_capacity(horizon);
    let mut halted_at = None;
    for t in 0..horizon {
        let w = noise(t);
        if w.len() != d {
            return Err(Error::Dimension(format!(
                "noise has length {}, expected {d}",
                w.len()
            )));
        }
        x = a * &x + w;
        states.push(x.clone());
        if x.norm() > HALT_NORM {
            halted_at = Some(t + 1);
            break;
        }
    }
    Ok(Trajectory {
        states,
        inputs: None,
        seed: 0,
        horizon,
        halted_at,
    })
}

pub fn simulate_controlled(
    sys: &ControlledSystem,
    policy: &Policy,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    simulate_controlled_trial(sys, policy, horizon, seed, 0)
}

pub fn simulate_controlled_trial(
    sys: &ControlledSystem,
    policy: &Policy,
    horizon: usize,
    seed: u64,
    trial: u64,
) -> Result<Trajectory> {
    let mut rng = trial_rng(seed, trial);
    let d = sys.state_dim();
    let mut traj = simulate_controlled_with_noise(sys, policy, horizon, |_| gaussian(&mut rng, d))?;
    traj.seed = seed;
    Ok(traj)
}

/// Simulates with caller-supplied noise; the policy is queried before the
/// noise of the same step is drawn.
pub fn simulate_controlled_with_noise<F>(
    sys: &ControlledSystem,
    policy: &Policy,
    horizon: usize,
    mut noise: F,
) -> Result<Trajectory>
where
    F: FnMut(usize) -> DVector<f64>,
{
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    policy.validate(sys)?;
    let a = sys.a().as_dmatrix();
    let b = sys.b().as_dmatrix();
    let d = sys.state_dim();
    let mut states: Vec<DVector<f64>> = Vec::with_capacity(horizon);
    let mut inputs: Vec<DVector<f64>> = Vec::with_capacity(horizon);
    let mut x = DVector::zeros(d);
    let mut halted_at = None;
    for t in 0..horizon {
        let u = policy_input(policy, &x, &states, &inputs, sys)?;
        let w = noise(t);
        if w.len() != d {
            return Err(Error::Dimension(format!(
                "noise has length {}, expected {d}",
                w.len()
            )));
        }
        x = a * &x + w + b * &u;
        inputs.push(u);
        states.push(x.clone());
        if x.norm() > HALT_NORM {
            halted_at = Some(t + 1);
            break;
        }
    }
    Ok(Trajectory {
        states,
        inputs: Some(inputs),
        seed: 0,
        horizon,
        halted_at,
    })
}

fn policy_input(
    policy: &Policy,
    x: &DVector<f64>,
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
    sys: &ControlledSystem,
) -> Result<DVector<f64>> {
    let u = match policy {
        Policy::Constant(u) => u.clone(),
        Policy::Feedback { k, c } => k * x + c,
        Policy::External(f) => f(&PolicyInput {
            states,
            inputs,
            state_dim: sys.state_dim(),
        }),
    };
    if u.len() != sys.input_dim() {
        return Err(Error::Dimension(format!(
            "policy returned an input of length {}, expected {}",
            u.len(),
            sys.input_dim()
        )));
    }
    Ok(u)
}

/// `Y Z^T (Z Z^T + ridge I)^{-1}` from accumulated cross and Gram matrices.
fn ridge_solve(yz: &DMatrix<f64>, zz: &DMatrix<f64>) -> DMatrix<f64> {
    let m = zz.nrows();
    let reg = zz + DMatrix::identity(m, m) * OLS_RIDGE;
    let rhs = yz.transpose();
    let sol = match reg.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => reg
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| DMatrix::from_element(m, yz.nrows(), f64::NAN)),
    };
    sol.transpose()
}

fn check_estimation_window(traj: &Trajectory, t: usize) -> Result<()> {
    if t < 2 || t > traj.horizon {
        return Err(Error::InvalidInput(format!(
            "estimation time t={t} must lie in [2, {}]",
            traj.horizon
        )));
    }
    Ok(())
}

/// Least-squares `A_hat_t` from `x_0 .. x_t`.
pub fn ols_uncontrolled(traj: &Trajectory, t: usize) -> Result<Matrix> {
    check_estimation_window(traj, t)?;
    let d = traj
        .states
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
    let mut zz = DMatrix::zeros(d, d);
    let mut yz = DMatrix::zeros(d, d);
    // s = 0 has x_0 = 0 and contributes nothing.
    for s in 1..t.min(traj.states.len()) {
        let z = &traj.states[s - 1];
        let y = &traj.states[s];
        zz.ger(1.0, z, z, 1.0);
        yz.ger(1.0, y, z, 1.0);
    }
    Matrix::from_dmatrix(ridge_solve(&yz, &zz))
}

fn stacked(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

/// Least-squares `(A_hat_t, B_hat_t)` from regressors `z_s = [x_s; u_s]`.
pub fn ols_controlled(traj: &Trajectory, t: usize) -> Result<(Matrix, Matrix)> {
    check_estimation_window(traj, t)?;
    let inputs = traj
        .inputs
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("trajectory has no inputs".into()))?;
    let d = traj
        .states
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
    let p = inputs[0].len();
    let mut zz = DMatrix::zeros(d + p, d + p);
    let mut yz = DMatrix::zeros(d, d + p);
    for (s, u) in inputs.iter().enumerate().take(t.min(traj.states.len())) {
        let x = traj.state(s, d).expect("s is within the recorded states");
        let z = stacked(&x, u);
        zz.ger(1.0, &z, &z, 1.0);
        yz.ger(1.0, &traj.states[s], &z, 1.0);
    }
    let theta = ridge_solve(&yz, &zz);
    let a_hat = theta.view((0, 0), (d, d)).into_owned();
    let b_hat = theta.view((0, d), (d, p)).into_owned();
    Ok((Matrix::from_dmatrix(a_hat)?, Matrix::from_dmatrix(b_hat)?))
}

/// Log-likelihood ratio of `x_0 .. x_t` under `A` against `A'`.
pub fn log_likelihood_ratio(
    traj: &Trajectory,
    a: &Matrix,
    a_prime: &Matrix,
    t: usize,
) -> Result<f64> {
    if t == 0 || t > traj.states.len() {
        return Err(Error::InvalidInput(format!(
            "t={t} exceeds the {} recorded states",
            traj.states.len()
        )));
    }
    let d = a.rows();
    let (a, ap) = (a.as_dmatrix(), a_prime.as_dmatrix());
    let mut total = 0.0;
    for s in 0..t {
        let x = traj.state(s, d).expect("s < t <= recorded states");
        let next = &traj.states[s];
        total += 0.5 * ((next - ap * &x).norm_squared() - (next - a * &x).norm_squared());
    }
    Ok(total)
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
}

/// Monte Carlo mean of the log-likelihood ratio over trajectories of `sys`.
pub fn llr_monte_carlo(
    sys: &UncontrolledSystem,
    a_prime: &Matrix,
    t: usize,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    if trials < 2 {
        return Err(Error::InvalidInput("need at least 2 trials".into()));
    }
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let traj = simulate_uncontrolled_trial(sys, t, seed, i)?;
            log_likelihood_ratio(&traj, sys.a(), a_prime, t)
        })
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        mean,
        stderr: (var / n).sqrt(),
        trials,
    })
}

/// Entrywise mean and standard error of the mean, summed in slice order.
pub fn mean_and_stderr(samples: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = samples.len() as f64;
    let (r, c) = samples[0].shape();
    let mut mean = DMatrix::zeros(r, c);
    for s in samples {
        mean += s;
    }
    mean /= n;
    let mut var = DMatrix::zeros(r, c);
    for s in samples {
        let dev = s - &mean;
        var += dev.component_mul(&dev);
    }
    var /= n - 1.0;
    let stderr = var.map(|v| (v / n).sqrt());
    (mean, stderr)
}

/// System under identification in the empirical harness.
#[derive(Debug, Clone, Copy)]
pub enum Identified<'a> {
    Uncontrolled(&'a UncontrolledSystem),
    Controlled(&'a ControlledSystem, &'a Policy),
}

impl Identified<'_> {
    fn state_dim(&self) -> usize {
        match self {
            Identified::Uncontrolled(s) => s.dim(),
            Identified::Controlled(s, _) => s.state_dim(),
        }
    }

    fn regressor_dim(&self) -> usize {
        match self {
            Identified::Uncontrolled(s) => s.dim(),
            Identified::Controlled(s, _) => s.state_dim() + s.input_dim(),
        }
    }

    /// `[A]` or `[A B]`.
    fn parameters(&self) -> DMatrix<f64> {
        match self {
            Identified::Uncontrolled(s) => s.a().as_dmatrix().clone(),
            Identified::Controlled(s, _) => {
                let (d, p) = (s.state_dim(), s.input_dim());
                let mut theta = DMatrix::zeros(d, d + p);
                theta.view_mut((0, 0), (d, d)).copy_from(s.a().as_dmatrix());
                theta.view_mut((0, d), (d, p)).copy_from(s.b().as_dmatrix());
                theta
            }
        }
    }
}

/// Per-trial state of the lockstep harness.
#[derive(Clone)]
struct TrialState {
    rng: ChaCha8Rng,
    x: DVector<f64>,
    t: usize,
    zz: DMatrix<f64>,
    yz: DMatrix<f64>,
    halted: bool,
    // Full history, kept only for external policies.
    states: Vec<DVector<f64>>,
    inputs: Vec<DVector<f64>>,
}

impl TrialState {
    fn new(target: &Identified<'_>, seed: u64, trial: u64) -> Self {
        let (d, m) = (target.state_dim(), target.regressor_dim());
        TrialState {
            rng: trial_rng(seed, trial),
            x: DVector::zeros(d),
            t: 0,
            zz: DMatrix::zeros(m, m),
            yz: DMatrix::zeros(d, m),
            halted: false,
            states: Vec::new(),
            inputs: Vec::new(),
        }
    }

    fn advance(&mut self, to: usize, target: &Identified<'_>) -> Result<()> {
        while self.t < to && !self.halted {
            let d = self.x.len();
            let (z, next) = match target {
                Identified::Uncontrolled(sys) => {
                    let w = gaussian(&mut self.rng, d);
                    let next = sys.a().as_dmatrix() * &self.x + w;
                    (self.x.clone(), next)
                }
                Identified::Controlled(sys, policy) => {
                    let u = policy_input(policy, &self.x, &self.states, &self.inputs, sys)?;
                    let w = gaussian(&mut self.rng, d);
                    let next = sys.a().as_dmatrix() * &self.x + w + sys.b().as_dmatrix() * &u;
                    if matches!(policy, Policy::External(_)) {
                        self.states.push(next.clone());
                        self.inputs.push(u.clone());
                    }
                    (stacked(&self.x, &u), next)
                }
            };
            if next.norm() > HALT_NORM {
                self.halted = true;
                break;
            }
            self.zz.ger(1.0, &z, &z, 1.0);
            self.yz.ger(1.0, &next, &z, 1.0);
            self.x = next;
            self.t += 1;
        }
        Ok(())
    }

    fn error(&self, theta: &DMatrix<f64>) -> f64 {
        (ridge_solve(&self.yz, &self.zz) - theta).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessPoint {
    pub t: usize,
    pub fraction: f64,
}

/// First stable time at which the estimator meets the accuracy target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalComplexity {
    /// First checkpoint with success fraction at least `1 - delta` that stays
    /// there for the next three checkpoints.
    pub tau_hat: u64,
    pub success_curve: Vec<SuccessPoint>,
    pub trials: u64,
    pub seed: u64,
    pub prng: String,
}

struct Harness<'a> {
    target: Identified<'a>,
    theta: DMatrix<f64>,
    eps: f64,
}

impl Harness<'_> {
    fn fraction_at(&self, trials: &mut [TrialState], t: usize) -> Result<f64> {
        let target = self.target;
        trials
            .par_iter_mut()
            .try_for_each(|s| s.advance(t, &target))?;
        let hits = trials
            .par_iter()
            .map(|s| usize::from(s.error(&self.theta) <= self.eps))
            .sum::<usize>();
        Ok(hits as f64 / trials.len() as f64)
    }
}

fn next_checkpoint(t: usize, tmax: usize) -> usize {
    let grown = (t as f64 * GEOMETRIC_RATIO).ceil() as usize;
    grown.max(t + 1).min(tmax)
}

/// Earliest index `j` such that `passes[j..]` passes for the window, with the
/// window truncated at the end of the sequence only if `complete` is set.
fn stable_start(passes: &[bool], complete: bool) -> Option<usize> {
    (0..passes.len()).find(|&j| {
        let end = j + STABILITY_WINDOW + 1;
        if end > passes.len() && !complete {
            return false;
        }
        passes[j..end.min(passes.len())].iter().all(|&p| p)
    })
}

/// Runs `trials` seeded least-squares identifications in lockstep and
/// reports the first stable time the success fraction reaches `1 - delta`.
///
/// Checkpoints follow a geometric grid (ratio 1.2) starting at `t = 2`; once
/// a stable crossing is found, the gap before it is re-simulated on a dense
/// grid from a snapshot. Near `tmax` the stability window is truncated to the
/// checkpoints that remain.
pub fn empirical_sample_complexity(
    target: Identified<'_>,
    spec: &AccuracySpec,
    trials: u64,
    seed: u64,
    tmax: usize,
) -> Result<EmpiricalComplexity> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    if tmax < 2 {
        return Err(Error::InvalidInput("tmax must be at least 2".into()));
    }
    if let Identified::Controlled(sys, policy) = target {
        policy.validate(sys)?;
    }
    let harness = Harness {
        target,
        theta: target.parameters(),
        eps: spec.eps(),
    };
    let goal = 1.0 - spec.delta();
    let mut states: Vec<TrialState> = (0..trials)
        .map(|i| TrialState::new(&target, seed, i))
        .collect();

    let mut coarse: Vec<SuccessPoint> = Vec::new();
    // Snapshots taken right after evaluating the most recent coarse checkpoints.
    let mut snapshots: VecDeque<(usize, Vec<TrialState>)> = VecDeque::new();
    let mut t = 2usize;
    let crossing = loop {
        let fraction = harness.fraction_at(&mut states, t)?;
        coarse.push(SuccessPoint { t, fraction });
        snapshots.push_back((coarse.len() - 1, states.clone()));
        if snapshots.len() > STABILITY_WINDOW + 2 {
            snapshots.pop_front();
        }
        let passes: Vec<bool> = coarse.iter().map(|p| p.fraction >= goal).collect();
        if let Some(k) = stable_start(&passes, t == tmax) {
            break k;
        }
        if t == tmax {
            return Err(Error::HorizonExhausted {
                horizon: tmax,
                final_fraction: fraction,
            });
        }
        t = next_checkpoint(t, tmax);
    };

    let mut curve = coarse.clone();
    let mut tau_hat = coarse[crossing].t;
    if crossing > 0 {
        let lo = coarse[crossing - 1].t;
        let hi = coarse[crossing].t;
        let mut replay = snapshots
            .iter()
            .find(|(idx, _)| *idx == crossing - 1)
            .map(|(_, s)| s.clone())
            .expect("snapshot window covers the checkpoint before the crossing");
        let gap = hi - lo;
        let mut grid: Vec<usize> = if gap - 1 <= REFINE_POINTS {
            (lo + 1..hi).collect()
        } else {
            (1..=REFINE_POINTS)
                .map(|i| lo + (i * gap) / (REFINE_POINTS + 1))
                .collect()
        };
        grid.dedup();
        let mut refined = Vec::with_capacity(grid.len());
        for r in grid {
            let fraction = harness.fraction_at(&mut replay, r)?;
            refined.push(SuccessPoint { t: r, fraction });
        }
        let merged: Vec<SuccessPoint> =
            refined.iter().chain(&coarse[crossing..]).copied().collect();
        let passes: Vec<bool> = merged.iter().map(|p| p.fraction >= goal).collect();
        let complete = coarse.last().map(|p| p.t) == Some(tmax);
        if let Some(j) = stable_start(&passes, complete) {
            tau_hat = merged[j].t;
        }
        curve.extend(refined);
        curve.sort_by_key(|p| p.t);
    }

    Ok(EmpiricalComplexity {
        tau_hat: tau_hat as u64,
        success_curve: curve,
        trials,
        seed,
        prng: PRNG_ID.to_string(),
    })
}

/// Theoretical bounds next to the empirical sample complexity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub eps: f64,
    pub delta: f64,
    pub trials: u64,
    pub seed: u64,
    pub tmax: usize,
    pub prng: String,
    pub tau_gramian: u64,
    pub tau_spectral: u64,
    pub tau_hat: u64,
    /// `tau_hat / tau_gramian`.
    pub ratio: f64,
    pub success_curve: Vec<SuccessPoint>,
}

pub fn tightness_report(
    sys: &UncontrolledSystem,
    spec: &AccuracySpec,
    trials: u64,
    seed: u64,
    tmax: usize,
) -> Result<TightnessReport> {
    let gram = tau_gramian(sys.a(), spec)?;
    let spectral = tau_spectral(sys.a(), spec)?;
    let emp = empirical_sample_complexity(Identified::Uncontrolled(sys), spec, trials, seed, tmax)?;
    Ok(TightnessReport {
        eps: spec.eps(),
        delta: spec.delta(),
        trials,
        seed,
        tmax,
        prng: emp.prng,
        tau_gramian: gram.tau,
        tau_spectral: spectral.tau,
        tau_hat: emp.tau_hat,
        ratio: emp.tau_hat as f64 / gram.tau as f64,
        success_curve: emp.success_curve,
    })
}
