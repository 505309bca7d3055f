//! Policy-gradient estimators.
//!
//! * REINFORCE with baseline: `(1/T) Σ_t ∇log π(a_t|s_t) (G_t − V̂(s_t))`.
//! * Fixed-grid quadrature: `Σ_i w_i π(a_i|s) ∇log π(a_i|s) Â(s, a_i)` with
//!   trapezoid weights over the action box (one action dimension only).
//! * Monte Carlo integration: `(1/N_S) Σ_k ∇log π(a_k|s) Â(s, a_k)` with
//!   `a_k` drawn from the unclipped Gaussian.
//!
//! The all-action estimators average their per-state value over the visited
//! states of a trajectory. Every estimate is formed as `J_μ(s)ᵀ c`, where `c`
//! is the weighted sum of `∂log π/∂μ` terms, so each state costs a single
//! backward pass through the mean network regardless of how many actions are
//! integrated.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critic::{AdvantageFn, Baseline};
use crate::envs::Trajectory;
use crate::error::{Error, Result};
use crate::nn::{mlp_backward_cached, mlp_forward_cached, GradVector};
use crate::policy::{ActionBox, GaussianPolicy};
use crate::rng::{self, Rng};
use crate::stats::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EstimatorKind {
    Reinforce,
    Quadrature { points: usize },
    Mc { samples: usize },
}

impl EstimatorKind {
    /// `N` for quadrature, `N_S` for Monte Carlo, 1 for REINFORCE.
    pub fn actions_per_state(&self) -> usize {
        match *self {
            Self::Reinforce => 1,
            Self::Quadrature { points } => points,
            Self::Mc { samples } => samples,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Reinforce => write!(f, "reinforce"),
            Self::Quadrature { points } => write!(f, "quad-{points}"),
            Self::Mc { samples } => write!(f, "mc-{samples}"),
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    /// Accepts `reinforce`, `mc-<N_S>` and `quad-<N>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "reinforce" {
            return Ok(Self::Reinforce);
        }
        let bad = || Error::argument(format!("unknown estimator `{s}` (reinforce, mc-N, quad-N)"));
        let (head, n) = s.split_once('-').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        match head {
            "mc" if n >= 1 => Ok(Self::Mc { samples: n }),
            "quad" | "quadrature" if n >= 2 => Ok(Self::Quadrature { points: n }),
            _ => Err(bad()),
        }
    }
}

/// A gradient estimate with its sampling metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub grad: GradVector,
    pub kind: EstimatorKind,
    /// Number of states averaged.
    pub states: usize,
}

/// Evenly spaced actions over an interval with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub points: usize,
    pub low: f64,
    pub high: f64,
}

impl QuadratureSpec {
    pub fn new(points: usize, low: f64, high: f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::argument("quadrature needs N ≥ 2 points"));
        }
        if !(low < high && low.is_finite() && high.is_finite()) {
            return Err(Error::argument("quadrature interval must be finite with low < high"));
        }
        Ok(Self { points, low, high })
    }

    /// Grid over a one-dimensional action box.
    pub fn over_box(points: usize, action_box: &ActionBox) -> Result<Self> {
        if action_box.dim() != 1 {
            return Err(Error::unsupported(
                "fixed-grid quadrature is only available for one action dimension",
            ));
        }
        Self::new(points, action_box.low[0], action_box.high[0])
    }

    pub fn spacing(&self) -> f64 {
        (self.high - self.low) / (self.points - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let da = self.spacing();
        (0..self.points)
            .map(|i| if i + 1 == self.points { self.high } else { self.low + da * i as f64 })
            .collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        let da = self.spacing();
        (0..self.points)
            .map(|i| if i == 0 || i + 1 == self.points { 0.5 * da } else { da })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McSpec {
    pub samples: usize,
}

impl McSpec {
    pub fn new(samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::argument("Monte Carlo needs N_S ≥ 1"));
        }
        Ok(Self { samples })
    }
}

/// REINFORCE with baseline over one trajectory.
pub fn reinforce_estimate(
    traj: &Trajectory,
    policy: &GaussianPolicy,
    baseline: &dyn Baseline,
) -> Result<GradientEstimate> {
    if traj.is_empty() {
        return Err(Error::argument("REINFORCE needs a nonempty trajectory"));
    }
    let inv_t = 1.0 / traj.len() as f64;
    let mut grad = GradVector::zeros(policy.param_dim());
    for t in 0..traj.len() {
        let s = &traj.states[t];
        let acts = mlp_forward_cached(&policy.mean.params, &policy.mean.layers, s)?;
        let mu = acts.last().expect("output layer");
        let coef = traj.returns[t] - baseline.value(s)?;
        let upstream: Vec<f64> = policy
            .mean_sensitivity(mu, &traj.actions[t])
            .iter()
            .map(|d| d * coef)
            .collect();
        mlp_backward_cached(&policy.mean.params, &policy.mean.layers, &acts, &upstream, inv_t, &mut grad)?;
    }
    finish(grad, EstimatorKind::Reinforce, traj.len())
}

fn finish(grad: GradVector, kind: EstimatorKind, states: usize) -> Result<GradientEstimate> {
    crate::error::ensure_finite(&grad, "gradient estimate")?;
    Ok(GradientEstimate { grad, kind, states })
}

/// `∂/∂μ` weight of the quadrature estimate at one state.
fn quadrature_upstream(
    policy: &GaussianPolicy,
    adv: &dyn AdvantageFn,
    s: &[f64],
    mu: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<f64>> {
    if policy.action_dim() != 1 {
        return Err(Error::unsupported(
            "fixed-grid quadrature is only available for one action dimension",
        ));
    }
    let actions: Vec<Vec<f64>> = spec.grid().into_iter().map(|a| vec![a]).collect();
    let advs = adv.advantages(s, &actions)?;
    let var = policy.sigma[0] * policy.sigma[0];
    let mut acc = CompensatedSum::new();
    for ((a, w), adv) in actions.iter().zip(spec.weights()).zip(advs) {
        let dens = policy.density_given_mean(mu, a);
        acc.add(w * dens * (a[0] - mu[0]) / var * adv);
    }
    Ok(vec![acc.value()])
}

/// `∂/∂μ` weight of the Monte Carlo estimate at one state.
fn mc_upstream(
    policy: &GaussianPolicy,
    adv: &dyn AdvantageFn,
    s: &[f64],
    mu: &[f64],
    spec: McSpec,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let actions: Vec<Vec<f64>> = (0..spec.samples).map(|_| policy.sample_around(mu, rng)).collect();
    let advs = adv.advantages(s, &actions)?;
    let inv_n = 1.0 / spec.samples as f64;
    let mut c = vec![0.0; policy.action_dim()];
    for (a, adv) in actions.iter().zip(advs) {
        for (ci, d) in c.iter_mut().zip(policy.mean_sensitivity(mu, a)) {
            *ci += d * adv * inv_n;
        }
    }
    Ok(c)
}

fn single_state(
    policy: &GaussianPolicy,
    s: &[f64],
    kind: EstimatorKind,
    upstream: impl FnOnce(&[f64]) -> Result<Vec<f64>>,
) -> Result<GradientEstimate> {
    let acts = mlp_forward_cached(&policy.mean.params, &policy.mean.layers, s)?;
    let c = upstream(acts.last().expect("output layer"))?;
    let mut grad = GradVector::zeros(policy.param_dim());
    mlp_backward_cached(&policy.mean.params, &policy.mean.layers, &acts, &c, 1.0, &mut grad)?;
    finish(grad, kind, 1)
}

/// Fixed-grid trapezoid estimate of `∫ ∇_θ π(a|s) Â(s, a) da` at one state.
pub fn quadrature_estimate(
    policy: &GaussianPolicy,
    adv: &dyn AdvantageFn,
    s: &[f64],
    spec: &QuadratureSpec,
) -> Result<GradientEstimate> {
    let kind = EstimatorKind::Quadrature { points: spec.points };
    single_state(policy, s, kind, |mu| quadrature_upstream(policy, adv, s, mu, spec))
}

/// Monte Carlo estimate `(1/N_S) Σ_k ∇log π(a_k|s) Â(s, a_k)` at one state.
pub fn mc_estimate(
    policy: &GaussianPolicy,
    adv: &dyn AdvantageFn,
    s: &[f64],
    spec: McSpec,
    rng: &mut Rng,
) -> Result<GradientEstimate> {
    let kind = EstimatorKind::Mc { samples: spec.samples };
    single_state(policy, s, kind, |mu| mc_upstream(policy, adv, s, mu, spec, rng))
}

/// All-action estimate averaged over `states`: `(1/T) Σ_t Ẑ(s_t)`.
pub fn all_action_estimate(
    kind: EstimatorKind,
    states: &[Vec<f64>],
    policy: &GaussianPolicy,
    adv: &dyn AdvantageFn,
    rng: &mut Rng,
) -> Result<GradientEstimate> {
    if states.is_empty() {
        return Err(Error::argument("all-action estimate needs at least one state"));
    }
    let quad = match kind {
        EstimatorKind::Quadrature { points } => Some(QuadratureSpec::over_box(points, &policy.action_box)?),
        EstimatorKind::Mc { samples } => {
            McSpec::new(samples)?;
            None
        }
        EstimatorKind::Reinforce => {
            return Err(Error::argument("REINFORCE is not an all-action estimator"));
        }
    };
    let inv_t = 1.0 / states.len() as f64;
    let mut grad = GradVector::zeros(policy.param_dim());
    for s in states {
        let acts = mlp_forward_cached(&policy.mean.params, &policy.mean.layers, s)?;
        let mu = acts.last().expect("output layer");
        let c = match (&quad, kind) {
            (Some(q), _) => quadrature_upstream(policy, adv, s, mu, q)?,
            (None, EstimatorKind::Mc { samples }) => mc_upstream(policy, adv, s, mu, McSpec { samples }, rng)?,
            _ => unreachable!("checked above"),
        };
        mlp_backward_cached(&policy.mean.params, &policy.mean.layers, &acts, &c, inv_t, &mut grad)?;
    }
    finish(grad, kind, states.len())
}

/// The configured estimator over one trajectory.
pub fn trajectory_estimate(
    kind: EstimatorKind,
    traj: &Trajectory,
    policy: &GaussianPolicy,
    adv: &dyn AdvantageFn,
    baseline: &dyn Baseline,
    rng: &mut Rng,
) -> Result<GradientEstimate> {
    match kind {
        EstimatorKind::Reinforce => reinforce_estimate(traj, policy, baseline),
        _ => all_action_estimate(kind, &traj.states, policy, adv, rng),
    }
}

/// Empirical law-of-total-variance split of the Monte Carlo estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub n_s: usize,
    /// Trace covariance of the per-state means.
    pub var_state: f64,
    /// Mean over states of the within-state trace covariance.
    pub expected_cond_var: f64,
    /// Trace covariance of all draws pooled.
    pub total_var: f64,
    /// Delete-one-state jackknife standard error of `var_state`.
    pub var_state_se: f64,
}

/// Draws `reps` Monte Carlo estimates at each state and splits their variance.
///
/// `var_state` and `total_var` use population moments over states and over all
/// draws; within-state covariances use the unbiased `reps − 1` denominator.
/// States are processed in parallel, each on its own derived random stream.
pub fn variance_decomposition(
    policy: &GaussianPolicy,
    adv: &dyn AdvantageFn,
    states: &[Vec<f64>],
    spec: McSpec,
    reps: usize,
    rng: &mut Rng,
) -> Result<Decomposition> {
    if reps < 2 {
        return Err(Error::argument("variance decomposition needs reps ≥ 2"));
    }
    if states.is_empty() {
        return Err(Error::argument("variance decomposition needs at least one state"));
    }
    let seed = rng::fork(rng);
    // Per state: (mean vector, within-state sum of squared deviations).
    let per_state: Vec<(Vec<f64>, f64)> = states
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = rng::stream(seed, i as u64);
            let draws: Vec<GradVector> = (0..reps)
                .map(|_| mc_estimate(policy, adv, s, spec, &mut r).map(|e| e.grad))
                .collect::<Result<_>>()?;
            let d = policy.param_dim();
            let mean: Vec<f64> = (0..d)
                .map(|j| crate::stats::mean(&draws.iter().map(|g| g[j]).collect::<Vec<_>>()))
                .collect();
            let ss = draws.iter().map(|g| crate::stats::sq_dist(g, &mean)).sum::<f64>();
            Ok((mean, ss))
        })
        .collect::<Result<_>>()?;

    let n = per_state.len() as f64;
    let d = policy.param_dim();
    let grand: Vec<f64> = (0..d).map(|j| per_state.iter().map(|(m, _)| m[j]).sum::<f64>() / n).collect();
    let dev: Vec<f64> = per_state.iter().map(|(m, _)| crate::stats::sq_dist(m, &grand)).collect();
    let var_state = crate::stats::mean(&dev);
    let within_ss: f64 = per_state.iter().map(|(_, ss)| ss).sum();
    let expected_cond_var = within_ss / (n * (reps - 1) as f64);
    let total_var = (within_ss + reps as f64 * dev.iter().sum::<f64>()) / (n * reps as f64);

    let var_state_se = if per_state.len() < 2 {
        0.0
    } else {
        let means: Vec<&Vec<f64>> = per_state.iter().map(|(m, _)| m).collect();
        let loo: Vec<f64> = (0..means.len())
            .map(|i| {
                let others: Vec<&Vec<f64>> = means.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, m)| *m).collect();
                let k = others.len() as f64;
                let g: Vec<f64> = (0..d).map(|j| others.iter().map(|m| m[j]).sum::<f64>() / k).collect();
                others.iter().map(|m| crate::stats::sq_dist(m, &g)).sum::<f64>() / k
            })
            .collect();
        let lbar = crate::stats::mean(&loo);
        ((n - 1.0) / n * loo.iter().map(|v| (v - lbar) * (v - lbar)).sum::<f64>()).sqrt()
    };
    Ok(Decomposition {
        n_s: spec.samples,
        var_state,
        expected_cond_var,
        total_var,
        var_state_se,
    })
}
