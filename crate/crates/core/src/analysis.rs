//! Gradient-MSE protocol, the `1/N_S` fit and empirical checks of the three
//! estimator theorems.
//!
//! The MSE protocol freezes a trained agent, forms a reference gradient by
//! averaging many REINFORCE estimates, then measures the squared error of
//! fresh Monte Carlo estimates for each `N_S`. Every Monte Carlo cell runs on
//! its own derived random stream so results do not depend on thread count.
//!
//! All "satisfied" verdicts allow three combined standard errors of slack.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::critic::{advantage_mse, AdvantageFn, Baseline};
use crate::envs::{rollout, EnvSpec};
use crate::error::{Error, Result};
use crate::estimators::{reinforce_estimate, trajectory_estimate, EstimatorKind, McSpec};
use crate::nn::GradVector;
use crate::policy::GaussianPolicy;
use crate::rng::{self, Rng};
use crate::stats::{self, CompensatedSum, Estimate};
use crate::trainer::{train_agent_for, Agent};

/// Standard errors of slack allowed by every verdict.
pub const SLACK_SE: f64 = 3.0;

/// Averaged REINFORCE gradient with its componentwise standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGradient {
    pub grad: GradVector,
    pub se: Vec<f64>,
    pub rollouts: usize,
}

impl ReferenceGradient {
    pub fn norm(&self) -> f64 {
        self.grad.norm()
    }
}

/// Mean of `n_rollouts` independent REINFORCE estimates on fresh rollouts.
pub fn reference_gradient(
    spec: &EnvSpec,
    policy: &GaussianPolicy,
    baseline: &dyn Baseline,
    n_rollouts: usize,
    rng: &mut Rng,
) -> Result<ReferenceGradient> {
    if n_rollouts == 0 {
        return Err(Error::argument("reference gradient needs at least one rollout"));
    }
    let seed = rng::fork(rng);
    let grads: Vec<Vec<f64>> = (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let traj = rollout(spec, policy, &mut r)?;
            Ok(reinforce_estimate(&traj, policy, baseline)?.grad.into_inner())
        })
        .collect::<Result<_>>()?;
    let (mean, se) = stats::vector_mean_se(&grads);
    Ok(ReferenceGradient {
        grad: mean.into(),
        se,
        rollouts: n_rollouts,
    })
}

/// Mean squared distance of `n_estimates` fresh estimates from `target`.
///
/// Each estimate uses a new rollout and, for the all-action estimators, new
/// action samples.
#[allow(clippy::too_many_arguments)]
pub fn estimator_mse(
    spec: &EnvSpec,
    policy: &GaussianPolicy,
    kind: EstimatorKind,
    adv: &dyn AdvantageFn,
    baseline: &dyn Baseline,
    n_estimates: usize,
    target: &[f64],
    rng: &mut Rng,
) -> Result<Estimate> {
    if n_estimates < 2 {
        return Err(Error::argument("MSE needs at least two estimates"));
    }
    if target.len() != policy.param_dim() {
        return Err(Error::argument(format!(
            "target gradient has {} entries, policy has {} parameters",
            target.len(),
            policy.param_dim()
        )));
    }
    let seed = rng::fork(rng);
    let sq: Vec<f64> = (0..n_estimates)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let traj = rollout(spec, policy, &mut r)?;
            let est = trajectory_estimate(kind, &traj, policy, adv, baseline, &mut r)?;
            Ok(stats::sq_dist(&est.grad, target))
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::of_mean(&sq))
}

/// One row of the MSE sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub n_s: usize,
    pub mse: f64,
    pub n_estimates: usize,
    pub se: f64,
    pub reference_norm: f64,
}

/// Monte Carlo MSE against `reference` for each sample count in `ns`.
pub fn mse_sweep(
    spec: &EnvSpec,
    policy: &GaussianPolicy,
    adv: &dyn AdvantageFn,
    ns: &[usize],
    n_estimates: usize,
    reference: &ReferenceGradient,
    rng: &mut Rng,
) -> Result<Vec<MseRow>> {
    if ns.is_empty() {
        return Err(Error::argument("MSE sweep needs at least one N_S"));
    }
    let seed = rng::fork(rng);
    ns.iter()
        .enumerate()
        .map(|(j, &n)| {
            let mc = McSpec::new(n)?;
            let mut r = rng::stream(seed, j as u64);
            let kind = EstimatorKind::Mc { samples: mc.samples };
            // the baseline is unused by all-action estimators
            let e = estimator_mse(spec, policy, kind, adv, &NoBaseline, n_estimates, &reference.grad, &mut r)?;
            Ok(MseRow {
                n_s: n,
                mse: e.value,
                n_estimates,
                se: e.se,
                reference_norm: reference.norm(),
            })
        })
        .collect()
}

struct NoBaseline;

impl Baseline for NoBaseline {
    fn value(&self, _: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

/// Least-squares fit `mse ≈ c0 + c1 / N_S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseFit {
    pub c0: f64,
    pub c1: f64,
    pub r_squared: f64,
}

pub fn fit_inverse_n(rows: &[MseRow]) -> Result<InverseFit> {
    let mut distinct: Vec<usize> = rows.iter().map(|r| r.n_s).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::argument("1/N fit needs distinct N_S values"));
    }
    if rows.len() < 3 {
        return Err(Error::argument("1/N fit needs at least three rows"));
    }
    let x: Vec<f64> = rows.iter().map(|r| 1.0 / r.n_s as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    let (c0, c1, r_squared) = stats::linear_fit(&x, &y)?;
    Ok(InverseFit { c0, c1, r_squared })
}

/// An agent trained for `config.sweep.warmup_episodes` and then frozen.
pub fn warm_agent(config: &ExperimentConfig, seed: u64) -> Result<Agent> {
    let (record, agent) = train_agent_for(config, seed, config.sweep.warmup_episodes)?;
    match record.failure {
        Some(f) => Err(Error::Numeric(format!("warm-up training failed: {f}"))),
        None => Ok(agent),
    }
}

/// Outcome of the freeze, reference, sweep and fit pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub reference: ReferenceGradient,
    pub rows: Vec<MseRow>,
    pub fit: Option<InverseFit>,
}

/// The full MSE protocol with the learned critics of a warmed-up agent.
pub fn run_mse_protocol(config: &ExperimentConfig) -> Result<SweepOutcome> {
    let spec = config.env_spec()?;
    let agent = warm_agent(config, config.seed)?;
    let mut r = rng::stream(config.seed, streams::SWEEP);
    let sw = &config.sweep;
    let reference = reference_gradient(&spec, &agent.policy, &agent.critics, sw.reference_rollouts, &mut r)?;
    let rows = mse_sweep(&spec, &agent.policy, &agent.critics, &sw.ns, sw.estimates, &reference, &mut r)?;
    let fit = fit_inverse_n(&rows).ok();
    Ok(SweepOutcome { reference, rows, fit })
}

/// Derived-stream indices used by the analysis pipelines; disjoint from the
/// trainer's.
pub mod streams {
    pub const SWEEP: u64 = 16;
    pub const DECOMPOSITION: u64 = 17;
    pub const THEOREM: u64 = 18;
}

/// Visited states of `rollouts` fresh trajectories, in rollout order.
pub fn visited_states(spec: &EnvSpec, policy: &GaussianPolicy, rollouts: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
    let mut states = Vec::new();
    for _ in 0..rollouts {
        states.extend(rollout(spec, policy, rng)?.states);
    }
    Ok(states)
}

/// `n` pairs `(s, a)` with `s` uniform over the visited states of a fresh
/// rollout and `a` drawn from the unclipped policy at `s`.
pub fn advantage_sample(
    spec: &EnvSpec,
    policy: &GaussianPolicy,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    use rand::Rng as _;
    let seed = rng::fork(rng);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let traj = rollout(spec, policy, &mut r)?;
            let t = r.random_range(0..traj.len());
            let s = traj.states[t].clone();
            let a = policy.sample_around(&policy.mean_action(&s)?, &mut r);
            Ok((s, a))
        })
        .collect()
}

/// Verdict of a theorem check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub lhs: f64,
    pub rhs: f64,
    pub terms: BTreeMap<String, f64>,
    pub satisfied: bool,
    /// Combined standard error of `lhs − rhs`.
    pub se: f64,
}

impl TheoremReport {
    fn new(lhs: f64, rhs: f64, se: f64, terms: &[(&str, f64)]) -> Self {
        Self {
            lhs,
            rhs,
            satisfied: lhs <= rhs + SLACK_SE * se,
            se,
            terms: terms.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.get(name).copied()
    }
}

/// Sample sizes used by the theorem checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckSizes {
    /// Estimates per MSE measurement.
    pub estimates: usize,
    /// `(s, a)` pairs for `L`, `L_Â` and `ξ`.
    pub samples: usize,
    /// Rollouts whose visited states are probed for the score bound.
    pub bound_rollouts: usize,
}

impl CheckSizes {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            estimates: config.sweep.estimates,
            samples: config.sweep.estimates.max(10_000),
            bound_rollouts: config.sweep.states.max(1),
        }
    }
}

/// Single-sample MSE `E‖∇log π(a|s) A(s, a) − target‖²` over `sample`.
pub fn single_sample_mse(
    policy: &GaussianPolicy,
    oracle: &dyn AdvantageFn,
    sample: &[(Vec<f64>, Vec<f64>)],
    target: &[f64],
) -> Result<Estimate> {
    if sample.len() < 2 {
        return Err(Error::argument("single-sample MSE needs at least two pairs"));
    }
    let sq: Vec<f64> = sample
        .par_iter()
        .map(|(s, a)| {
            let mut g = policy.score(s, a)?;
            g.scale(oracle.advantage(s, a)?);
            Ok(stats::sq_dist(&g, target))
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::of_mean(&sq))
}

/// Empirical check of `L^MC_{N_S} ≤ M L_Â + (L + M L_Â d) / N_S`.
///
/// `lhs` is the MSE of the trajectory-averaged Monte Carlo estimate with
/// `critic` against `reference`; `L` is measured against the same reference
/// so both sides share its error.
#[allow(clippy::too_many_arguments)]
pub fn theorem1_check(
    spec: &EnvSpec,
    policy: &GaussianPolicy,
    critic: &dyn AdvantageFn,
    oracle: &dyn AdvantageFn,
    mc: McSpec,
    reference: &[f64],
    sizes: CheckSizes,
    rng: &mut Rng,
) -> Result<TheoremReport> {
    let kind = EstimatorKind::Mc { samples: mc.samples };
    let lhs = estimator_mse(spec, policy, kind, critic, &NoBaseline, sizes.estimates, reference, rng)?;
    let probe = visited_states(spec, policy, sizes.bound_rollouts, rng)?;
    let m = policy.score_norm_bound(&probe)?.m;
    let adv_pairs = advantage_sample(spec, policy, sizes.samples, rng)?;
    let l_adv = advantage_mse(critic, oracle, &adv_pairs)?;
    let l_pairs = advantage_sample(spec, policy, sizes.samples, rng)?;
    let l = single_sample_mse(policy, oracle, &l_pairs, reference)?;

    let d = policy.param_dim() as f64;
    let n = mc.samples as f64;
    let rhs = m * l_adv.value + (l.value + m * l_adv.value * d) / n;
    let se_rhs = ((m * (1.0 + d / n) * l_adv.se).powi(2) + (l.se / n).powi(2)).sqrt();
    let se = lhs.se.hypot(se_rhs);
    Ok(TheoremReport::new(
        lhs.value,
        rhs,
        se,
        &[
            ("M", m),
            ("L_adv", l_adv.value),
            ("L", l.value),
            ("d", d),
            ("N_S", n),
            ("lhs_se", lhs.se),
            ("L_adv_se", l_adv.se),
            ("L_se", l.se),
        ],
    ))
}

/// Empirical check of `L_R ≤ L + M ξ` against the true gradient `truth`.
///
/// `ξ` is the mean of `(G_0 − V̂(s_0) − A(s_0, a_0))²` over fresh rollouts.
#[allow(clippy::too_many_arguments)]
pub fn theorem2_check(
    spec: &EnvSpec,
    policy: &GaussianPolicy,
    v_net: &dyn Baseline,
    oracle: &dyn AdvantageFn,
    truth: &[f64],
    n_rollouts: usize,
    sizes: CheckSizes,
    rng: &mut Rng,
) -> Result<TheoremReport> {
    let l_r = estimator_mse(spec, policy, EstimatorKind::Reinforce, &NoAdvantage, v_net, n_rollouts, truth, rng)?;
    let probe = visited_states(spec, policy, sizes.bound_rollouts, rng)?;
    let m = policy.score_norm_bound(&probe)?.m;
    let pairs = advantage_sample(spec, policy, sizes.samples, rng)?;
    let l = single_sample_mse(policy, oracle, &pairs, truth)?;

    let seed = rng::fork(rng);
    let resid: Vec<f64> = (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let traj = rollout(spec, policy, &mut r)?;
            let (s0, a0) = (&traj.states[0], &traj.actions[0]);
            let e = traj.returns[0] - v_net.value(s0)? - oracle.advantage(s0, a0)?;
            Ok(e * e)
        })
        .collect::<Result<_>>()?;
    let xi = Estimate::of_mean(&resid);

    let rhs = l.value + m * xi.value;
    let se = (l_r.se.powi(2) + l.se.powi(2) + (m * xi.se).powi(2)).sqrt();
    Ok(TheoremReport::new(
        l_r.value,
        rhs,
        se,
        &[
            ("L_R", l_r.value),
            ("L", l.value),
            ("M", m),
            ("xi", xi.value),
            ("d", policy.param_dim() as f64),
            ("L_R_se", l_r.se),
            ("L_se", l.se),
            ("xi_se", xi.se),
        ],
    ))
}

struct NoAdvantage;

impl AdvantageFn for NoAdvantage {
    fn advantage(&self, _: &[f64], _: &[f64]) -> Result<f64> {
        Err(Error::argument("REINFORCE does not query an advantage"))
    }
}

/// A concave quadratic `J(θ) = ½θᵀHθ + bᵀθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub h: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Smoothness constant: the largest `|λ(H)|`.
    pub mu: f64,
}

impl Quadratic {
    /// Fails unless `H` is square, symmetric and negative semidefinite.
    pub fn new(h: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !h.is_square() || h.nrows() != b.len() || b.is_empty() {
            return Err(Error::argument("H must be square and match b"));
        }
        let scale = h.amax().max(1.0);
        if (&h - h.transpose()).amax() > 1e-12 * scale {
            return Err(Error::argument("H must be symmetric"));
        }
        let eig = SymmetricEigen::new(h.clone()).eigenvalues;
        let top = eig.max();
        if top > 1e-12 * scale {
            return Err(Error::argument(format!("H has a positive eigenvalue {top}")));
        }
        let mu = eig.amax();
        Ok(Self { h, b, mu })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta.dot(&(&self.h * theta)) + self.b.dot(theta)
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.h * theta + &self.b
    }
}

/// Expected objective after one noisy biased step and the lower bound at one θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Point {
    pub theta: Vec<f64>,
    pub j: f64,
    /// Monte Carlo mean of `J(θ + δĝ)`.
    pub empirical: f64,
    pub se: f64,
    /// `J(θ + δ(∇J + β)) + ½δ² tr(HΣ)`.
    pub exact: f64,
    pub bound: f64,
    pub bound_holds: bool,
    pub matches_exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Report {
    pub points: Vec<Theorem3Point>,
    pub delta: f64,
    pub mu: f64,
    pub satisfied: bool,
    pub matches_exact: bool,
}

impl Theorem3Report {
    /// Summary at the point of smallest bound margin.
    pub fn summary(&self) -> TheoremReport {
        let worst = self
            .points
            .iter()
            .min_by(|a, b| (a.empirical - a.bound).total_cmp(&(b.empirical - b.bound)))
            .expect("at least one point");
        let max_z = self
            .points
            .iter()
            .map(|p| if p.se > 0.0 { (p.empirical - p.exact).abs() / p.se } else { 0.0 })
            .fold(0.0, f64::max);
        // the inequality is J_{k+1} ≥ bound, so bound plays the "lhs ≤ rhs" role
        TheoremReport {
            lhs: worst.bound,
            rhs: worst.empirical,
            se: worst.se,
            satisfied: self.satisfied,
            terms: [
                ("points", self.points.len() as f64),
                ("delta", self.delta),
                ("mu", self.mu),
                ("worst_margin", worst.empirical - worst.bound),
                ("max_exact_z", max_z),
                ("matches_exact", if self.matches_exact { 1.0 } else { 0.0 }),
            ]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
        }
    }
}

/// Rounding allowance for comparisons that carry no sampling error.
fn rounding(scale: f64) -> f64 {
    1e-9 * (1.0 + scale.abs())
}

/// Symmetric square root factor `F` with `F Fᵀ = Σ` for a PSD `Σ`.
fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = cov.amax().max(1.0);
    if !cov.is_square() || (cov - cov.transpose()).amax() > 1e-12 * scale {
        return Err(Error::argument("noise covariance must be square and symmetric"));
    }
    let eig = SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.min() < -1e-12 * scale {
        return Err(Error::argument("noise covariance must be positive semidefinite"));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Checks the one-step lower bound for stochastic ascent with a biased,
/// noisy gradient `ĝ = ∇J(θ) + β(θ) + ε`, `ε ~ N(0, Σ)`:
///
/// `E J(θ + δĝ) ≥ J(θ) + δ‖∇J‖²/2 + δ[(∇J − β/2)·β − tr Σ]`.
///
/// At `δ = 1/μ` this is the stated inequality with its gradient term read as
/// `‖∇J‖²/(2μ)`. Draws come in antithetic pairs `±ε`; `n_trials` counts draws.
pub fn theorem3_check(
    q: &Quadratic,
    thetas: &[DVector<f64>],
    bias_fn: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    noise_cov: &DMatrix<f64>,
    delta: f64,
    n_trials: usize,
    rng: &mut Rng,
) -> Result<Theorem3Report> {
    if !(delta > 0.0) {
        return Err(Error::argument("step size must be positive"));
    }
    if delta * q.mu > 1.0 + 1e-12 {
        return Err(Error::Precondition(format!(
            "step size {delta} exceeds 1/μ = {}",
            1.0 / q.mu
        )));
    }
    if n_trials < 4 {
        return Err(Error::argument("need at least four trials"));
    }
    if thetas.is_empty() {
        return Err(Error::argument("need at least one θ"));
    }
    let d = q.dim();
    if noise_cov.nrows() != d {
        return Err(Error::argument("noise covariance has the wrong size"));
    }
    let factor = psd_factor(noise_cov)?;
    let tr_cov = noise_cov.trace();
    let tr_h_cov = (&q.h * noise_cov).trace();
    let pairs = n_trials / 2;

    let mut points = Vec::with_capacity(thetas.len());
    for theta in thetas {
        if theta.len() != d {
            return Err(Error::argument("θ has the wrong dimension"));
        }
        let j = q.value(theta);
        let g = q.gradient(theta);
        let beta = bias_fn(theta);
        if beta.len() != d {
            return Err(Error::argument("bias has the wrong dimension"));
        }
        let mean_step = theta + delta * (&g + &beta);
        let exact = q.value(&mean_step) + 0.5 * delta * delta * tr_h_cov;
        let bound = j + 0.5 * delta * g.norm_squared() + delta * ((&g - 0.5 * &beta).dot(&beta) - tr_cov);

        let mut samples = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
            let eps = delta * (&factor * z);
            samples.push(0.5 * (q.value(&(&mean_step + &eps)) + q.value(&(&mean_step - &eps))));
        }
        let mut acc = CompensatedSum::new();
        samples.iter().for_each(|&x| acc.add(x));
        let empirical = acc.value() / pairs as f64;
        let se = stats::standard_error(&samples);
        let tol = SLACK_SE * se + rounding(exact);
        points.push(Theorem3Point {
            theta: theta.iter().copied().collect(),
            j,
            empirical,
            se,
            exact,
            bound,
            bound_holds: empirical >= bound - tol,
            matches_exact: (empirical - exact).abs() <= tol,
        });
    }
    Ok(Theorem3Report {
        satisfied: points.iter().all(|p| p.bound_holds),
        matches_exact: points.iter().all(|p| p.matches_exact),
        points,
        delta,
        mu: q.mu,
    })
}

/// A five-dimensional concave quadratic with spread curvature, a fixed bias
/// direction and a grid of evaluation points.
///
/// The bias direction spans only eigen-directions with `|λ| ≤ μ/2`, where the
/// bound holds for every θ.
#[derive(Debug, Clone)]
pub struct Theorem3Problem {
    pub quadratic: Quadratic,
    pub bias_direction: DVector<f64>,
    pub thetas: Vec<DVector<f64>>,
}

impl Theorem3Problem {
    pub fn standard() -> Self {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -0.7, -0.4, -0.2, -0.1]));
        let b = DVector::from_element(5, 1.0);
        let quadratic = Quadratic::new(h, b).expect("valid curvature");
        let bias_direction = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0, 1.0]).normalize();
        let thetas = vec![
            DVector::zeros(5),
            DVector::from_element(5, 1.0),
            DVector::from_element(5, -2.0),
            DVector::from_vec(vec![3.0, -1.0, 0.5, 4.0, -3.0]),
            DVector::from_vec(vec![1.0, 1.0 / 0.7, 2.5, 5.0, 10.0]),
        ];
        Self {
            quadratic,
            bias_direction,
            thetas,
        }
    }

    /// Checks one `(bias magnitude, noise scale)` cell at `δ = 1/μ` with
    /// isotropic noise `Σ = scale² I`.
    pub fn check(&self, bias: f64, noise: f64, n_trials: usize, rng: &mut Rng) -> Result<Theorem3Report> {
        let d = self.quadratic.dim();
        let beta = bias * &self.bias_direction;
        let cov = DMatrix::identity(d, d) * (noise * noise);
        theorem3_check(
            &self.quadratic,
            &self.thetas,
            &|_| beta.clone(),
            &cov,
            1.0 / self.quadratic.mu,
            n_trials,
            rng,
        )
    }
}

/// One cell of the theorem-3 grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Cell {
    pub bias: f64,
    pub noise: f64,
    pub report: Theorem3Report,
}

pub const THEOREM3_BIASES: [f64; 3] = [0.0, 0.1, 0.5];
pub const THEOREM3_NOISES: [f64; 3] = [0.0, 0.1, 0.5];

/// The standard problem over the `bias × noise` grid, one derived stream per cell.
pub fn theorem3_grid(seed: u64, n_trials: usize) -> Result<Vec<Theorem3Cell>> {
    let problem = Theorem3Problem::standard();
    let mut cells = Vec::new();
    for (i, &bias) in THEOREM3_BIASES.iter().enumerate() {
        for (j, &noise) in THEOREM3_NOISES.iter().enumerate() {
            let mut r = rng::stream(seed, (i * THEOREM3_NOISES.len() + j) as u64);
            let report = problem.check(bias, noise, n_trials, &mut r)?;
            cells.push(Theorem3Cell { bias, noise, report });
        }
    }
    Ok(cells)
}
