//! Gaussian policy with a network mean and a fixed diagonal covariance.
//!
//! Executed actions are clipped to the action box, but the density and score
//! are those of the unclipped Gaussian. The estimators integrate against the
//! parametric density, so this mismatch is deliberate and only affects what the
//! environment sees.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::nn::{GradVector, Mlp, ParamVector};
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Multiplier applied to the grid maximum of the squared score norm.
pub const SCORE_BOUND_SAFETY: f64 = 1.1;
/// Default per-dimension resolution of the score-bound action grid.
pub const SCORE_BOUND_POINTS: usize = 64;

/// Per-dimension closed interval of admissible actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBox {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::argument("action box bounds must be non-empty and equal length"));
        }
        for (i, (l, h)) in low.iter().zip(&high).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::argument(format!(
                    "action box dimension {i}: need finite low < high, got [{l}, {h}]"
                )));
            }
        }
        Ok(Self { low, high })
    }

    pub fn symmetric(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn clip(&self, a: &mut [f64]) {
        for ((x, l), h) in a.iter_mut().zip(&self.low).zip(&self.high) {
            *x = x.clamp(*l, *h);
        }
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.iter()
            .zip(self.low.iter().zip(&self.high))
            .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Analytic,
    GridMaximized,
}

/// Bound `M` on the squared norm of the score over probed states and the action box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBound {
    pub m: f64,
    /// Largest squared score norm actually observed, before the safety factor.
    pub observed_max: f64,
    pub method: BoundMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub sigma: Vec<f64>,
    pub action_box: ActionBox,
}

impl GaussianPolicy {
    pub fn new(mean: Mlp, sigma: Vec<f64>, action_box: ActionBox) -> Result<Self> {
        if sigma.len() != mean.output_width() || action_box.dim() != mean.output_width() {
            return Err(Error::argument(format!(
                "mean net outputs {} values but sigma has {} and the action box {}",
                mean.output_width(),
                sigma.len(),
                action_box.dim()
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::argument(format!("sigma entries must be positive, got {s}")));
        }
        Ok(Self {
            mean,
            sigma,
            action_box,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn state_dim(&self) -> usize {
        self.mean.input_width()
    }

    pub fn param_dim(&self) -> usize {
        self.mean.param_dim()
    }

    pub fn params(&self) -> &ParamVector {
        &self.mean.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.mean.params
    }

    /// Unclipped mean `μ(s)`.
    pub fn mean_action(&self, s: &[f64]) -> Result<Vec<f64>> {
        let mu = self.mean.forward(s)?;
        ensure_finite(&mu, "policy mean")?;
        Ok(mu)
    }

    /// Log density of `a` under `N(mu, diag σ²)`.
    pub fn log_prob_given_mean(&self, mu: &[f64], a: &[f64]) -> f64 {
        let mut lp = -0.5 * self.sigma.len() as f64 * LN_2PI;
        for ((ai, mi), si) in a.iter().zip(mu).zip(&self.sigma) {
            let z = (ai - mi) / si;
            lp -= 0.5 * z * z + si.ln();
        }
        lp
    }

    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        self.check_action(a)?;
        let mu = self.mean_action(s)?;
        Ok(self.log_prob_given_mean(&mu, a))
    }

    /// Density at `a`; only meaningful for low action dimension.
    pub fn density_given_mean(&self, mu: &[f64], a: &[f64]) -> f64 {
        self.log_prob_given_mean(mu, a).exp()
    }

    /// `∂ log π / ∂μ = (a − μ)/σ²`, the upstream vector fed to the mean network.
    pub fn mean_sensitivity(&self, mu: &[f64], a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(mu)
            .zip(&self.sigma)
            .map(|((ai, mi), si)| (ai - mi) / (si * si))
            .collect()
    }

    /// `∇_θ log π(a|s)`.
    pub fn score(&self, s: &[f64], a: &[f64]) -> Result<GradVector> {
        self.check_action(a)?;
        let mu = self.mean_action(s)?;
        let upstream = self.mean_sensitivity(&mu, a);
        self.mean.backward(s, &upstream)
    }

    /// Draw from the unclipped Gaussian around `mu`.
    pub fn sample_around(&self, mu: &[f64], rng: &mut Rng) -> Vec<f64> {
        mu.iter()
            .zip(&self.sigma)
            .map(|(m, s)| {
                let eps: f64 = StandardNormal.sample(rng);
                m + s * eps
            })
            .collect()
    }

    /// Deterministic action `clip(μ(s))`.
    pub fn mean_action_clipped(&self, s: &[f64]) -> Result<Vec<f64>> {
        let mut mu = self.mean_action(s)?;
        self.action_box.clip(&mut mu);
        Ok(mu)
    }

    /// Executed action: `clip(μ(s) + σ ⊙ ε)`.
    ///
    /// The noise is added to the raw mean, so a mean far outside the box
    /// saturates every draw at the nearest edge.
    pub fn sample(&self, s: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let mu = self.mean_action(s)?;
        let mut a = self.sample_around(&mu, rng);
        self.action_box.clip(&mut a);
        Ok(a)
    }

    /// Grid-maximized bound on `‖∇_θ log π‖²` with the default resolution.
    pub fn score_norm_bound(&self, states: &[Vec<f64>]) -> Result<ScoreBound> {
        self.score_norm_bound_with(states, SCORE_BOUND_POINTS)
    }

    /// Grid-maximized bound using `points` evenly spaced actions per dimension.
    ///
    /// For each state the mean Jacobian is formed once; the squared score norm
    /// at action `a` is then `uᵀ G u` with `u = (a − μ)/σ²` and `G = J Jᵀ`.
    pub fn score_norm_bound_with(&self, states: &[Vec<f64>], points: usize) -> Result<ScoreBound> {
        if states.is_empty() {
            return Err(Error::argument("score bound needs at least one state"));
        }
        if points < 2 {
            return Err(Error::argument("score bound grid needs ≥ 2 points per dimension"));
        }
        let da = self.action_dim();
        let total = (points as f64).powi(da as i32);
        if total > 4.0e6 {
            return Err(Error::unsupported(format!(
                "action grid of {points}^{da} points is too large"
            )));
        }
        let mut observed = 0.0f64;
        for s in states {
            let mu = self.mean_action(s)?;
            let rows: Vec<GradVector> = (0..da)
                .map(|i| {
                    let mut e = vec![0.0; da];
                    e[i] = 1.0;
                    self.mean.backward(s, &e)
                })
                .collect::<Result<_>>()?;
            let mut gram = vec![0.0; da * da];
            for i in 0..da {
                for j in 0..da {
                    gram[i * da + j] = crate::stats::dot(&rows[i], &rows[j]);
                }
            }
            let mut idx = vec![0usize; da];
            let mut u = vec![0.0; da];
            loop {
                for k in 0..da {
                    let (l, h) = (self.action_box.low[k], self.action_box.high[k]);
                    let a = l + (h - l) * idx[k] as f64 / (points - 1) as f64;
                    u[k] = (a - mu[k]) / (self.sigma[k] * self.sigma[k]);
                }
                let mut q = 0.0;
                for i in 0..da {
                    for j in 0..da {
                        q += u[i] * gram[i * da + j] * u[j];
                    }
                }
                observed = observed.max(q);
                // odometer increment over the tensor grid
                let mut k = 0;
                while k < da {
                    idx[k] += 1;
                    if idx[k] < points {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == da {
                    break;
                }
            }
        }
        Ok(ScoreBound {
            m: SCORE_BOUND_SAFETY * observed,
            observed_max: observed,
            method: BoundMethod::GridMaximized,
        })
    }

    fn check_action(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.action_dim() {
            return Err(Error::Shape {
                layer: self.mean.layers.len() - 1,
                expected: self.action_dim(),
                got: a.len(),
            });
        }
        Ok(())
    }
}
