//! Learned critics and exact advantage oracles.
//!
//! `V̂` is fitted by least squares on discounted returns and `Q̂` by
//! semi-gradient expected SARSA; their difference is the advantage consumed by
//! the all-action estimators. For the bandit and the LQR the true advantage is
//! known, which is what [`AdvantageOracle`] provides.

use serde::{Deserialize, Serialize};

use crate::envs::{EnvKind, EnvSpec, LqrValue, Trajectory, Transition};
use crate::error::{Error, Result};
use crate::nn::{mlp_backward_cached, mlp_forward_cached, GradVector, LayerSpec, Mlp, Optimizer, OptimizerKind};
use crate::policy::GaussianPolicy;
use crate::rng::Rng;
use crate::stats::Estimate;

/// An advantage function `A(s, a)`.
pub trait AdvantageFn: Sync {
    fn advantage(&self, s: &[f64], a: &[f64]) -> Result<f64>;

    /// Advantages of several actions at one state.
    fn advantages(&self, s: &[f64], actions: &[Vec<f64>]) -> Result<Vec<f64>> {
        actions.iter().map(|a| self.advantage(s, a)).collect()
    }
}

/// A state-value baseline `V(s)`.
pub trait Baseline: Sync {
    fn value(&self, s: &[f64]) -> Result<f64>;
}

impl Baseline for Mlp {
    fn value(&self, s: &[f64]) -> Result<f64> {
        self.forward_scalar(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticConfig {
    pub q_hidden: Vec<usize>,
    pub v_hidden: Vec<usize>,
    pub lr_q: f64,
    pub lr_v: f64,
    /// Next-action samples averaged in the expected SARSA target.
    pub k: usize,
    /// Regression epochs over each new episode.
    pub v_epochs: usize,
    /// Expected SARSA passes over each new episode.
    pub q_epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Both networks predict values in units of this scale. Adam moves each
    /// weight by about `lr` per step, so returns far from unit size need it.
    pub value_scale: f64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            q_hidden: vec![32, 32],
            v_hidden: vec![32, 32],
            lr_q: 0.01,
            lr_v: 0.01,
            k: 16,
            v_epochs: 1,
            q_epochs: 1,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            value_scale: 1.0,
        }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("critic.k must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("critic.batch_size must be ≥ 1".into()));
        }
        if !(self.value_scale > 0.0 && self.value_scale.is_finite()) {
            return Err(Error::Config("critic.value_scale must be > 0".into()));
        }
        if !(self.lr_q >= 0.0 && self.lr_v >= 0.0) {
            return Err(Error::Config("critic learning rates must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Minibatch gradient descent on `½(V̂(s_t) − G_t)²` over every visited state.
///
/// Minibatches are taken in visiting order. Returns the mean loss seen during
/// each epoch.
pub fn fit_v(
    v_net: &mut Mlp,
    opt: &mut Optimizer,
    trajectories: &[Trajectory],
    epochs: usize,
    lr_v: f64,
    batch_size: usize,
) -> Result<Vec<f64>> {
    if trajectories.is_empty() {
        return Err(Error::argument("fit_v needs at least one trajectory"));
    }
    if batch_size == 0 {
        return Err(Error::argument("batch size must be ≥ 1"));
    }
    let pairs: Vec<(&[f64], f64)> = trajectories
        .iter()
        .flat_map(|t| t.states.iter().map(Vec::as_slice).zip(t.returns.iter().copied()))
        .collect();
    let mut losses = Vec::with_capacity(epochs);
    let mut grad = GradVector::zeros(v_net.param_dim());
    for _ in 0..epochs {
        let mut loss = 0.0;
        for batch in pairs.chunks(batch_size) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &(s, g) in batch {
                let acts = mlp_forward_cached(&v_net.params, &v_net.layers, s)?;
                let err = acts.last().expect("output layer")[0] - g;
                loss += 0.5 * err * err;
                mlp_backward_cached(&v_net.params, &v_net.layers, &acts, &[err], scale, &mut grad)?;
            }
            opt.descend(&mut v_net.params, &grad, lr_v);
        }
        let loss = loss / pairs.len() as f64;
        if !loss.is_finite() {
            return Err(Error::numeric("value regression loss is not finite (lr_v too large?)"));
        }
        losses.push(loss);
    }
    crate::error::ensure_finite(&v_net.params, "value network parameters")?;
    Ok(losses)
}

fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(s.len() + a.len());
    x.extend_from_slice(s);
    x.extend_from_slice(a);
    x
}

/// One semi-gradient expected SARSA step; returns the target used.
///
/// The target is `r` for terminal transitions and otherwise
/// `r + γ (1/K) Σ_k Q̂(s', a'_k)` with `a'_k` drawn from the policy as it would
/// be executed. No gradient flows through the target.
pub fn expected_sarsa_update(
    q_net: &mut Mlp,
    opt: &mut Optimizer,
    transition: &Transition<'_>,
    policy: &GaussianPolicy,
    k: usize,
    gamma: f64,
    lr_q: f64,
    rng: &mut Rng,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::argument("expected SARSA needs K ≥ 1"));
    }
    let target = if transition.done || gamma == 0.0 {
        transition.reward
    } else {
        let mut acc = 0.0;
        for _ in 0..k {
            let a_next = policy.sample(transition.next_state, rng)?;
            acc += q_net.forward_scalar(&concat(transition.next_state, &a_next))?;
        }
        transition.reward + gamma * acc / k as f64
    };
    if !target.is_finite() {
        return Err(Error::numeric("expected SARSA target is not finite"));
    }
    let x = concat(transition.state, transition.action);
    let acts = mlp_forward_cached(&q_net.params, &q_net.layers, &x)?;
    let err = acts.last().expect("output layer")[0] - target;
    let mut grad = GradVector::zeros(q_net.param_dim());
    mlp_backward_cached(&q_net.params, &q_net.layers, &acts, &[err], 1.0, &mut grad)?;
    opt.descend(&mut q_net.params, &grad, lr_q);
    crate::error::ensure_finite(&q_net.params, "Q network parameters")?;
    Ok(target)
}

/// The learned pair `(Q̂, V̂)` with its training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticPair {
    pub q_net: Mlp,
    pub v_net: Mlp,
    pub q_opt: Optimizer,
    pub v_opt: Optimizer,
    pub config: CriticConfig,
}

impl CriticPair {
    pub fn new(config: CriticConfig, state_dim: usize, action_dim: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let q_net = Mlp::random(LayerSpec::chain(state_dim + action_dim, &config.q_hidden, 1), rng)?;
        let v_net = Mlp::random(LayerSpec::chain(state_dim, &config.v_hidden, 1), rng)?;
        Ok(Self {
            q_opt: Optimizer::new(config.optimizer, q_net.param_dim()),
            v_opt: Optimizer::new(config.optimizer, v_net.param_dim()),
            q_net,
            v_net,
            config,
        })
    }

    pub fn q_value(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.config.value_scale * self.q_net.forward_scalar(&concat(s, a))?)
    }

    pub fn v_value(&self, s: &[f64]) -> Result<f64> {
        Ok(self.config.value_scale * self.v_net.forward_scalar(s)?)
    }

    /// Critic update after one episode: `V̂` regression passes, then expected
    /// SARSA passes over the episode's transitions in order.
    pub fn observe(
        &mut self,
        traj: &Trajectory,
        policy: &GaussianPolicy,
        gamma: f64,
        rng: &mut Rng,
    ) -> Result<()> {
        let scaled;
        let traj = if self.config.value_scale == 1.0 {
            traj
        } else {
            let c = 1.0 / self.config.value_scale;
            let mut t = traj.clone();
            t.rewards.iter_mut().chain(t.returns.iter_mut()).for_each(|r| *r *= c);
            scaled = t;
            &scaled
        };
        fit_v(
            &mut self.v_net,
            &mut self.v_opt,
            std::slice::from_ref(traj),
            self.config.v_epochs,
            self.config.lr_v,
            self.config.batch_size,
        )?;
        for _ in 0..self.config.q_epochs {
            for tr in traj.transitions() {
                expected_sarsa_update(&mut self.q_net, &mut self.q_opt, &tr, policy, self.config.k, gamma, self.config.lr_q, rng)?;
            }
        }
        Ok(())
    }
}

impl AdvantageFn for CriticPair {
    fn advantage(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.q_value(s, a)? - self.v_value(s)?)
    }

    fn advantages(&self, s: &[f64], actions: &[Vec<f64>]) -> Result<Vec<f64>> {
        let v = self.v_value(s)?;
        let c = self.config.value_scale;
        let mut x = concat(s, &actions.first().cloned().unwrap_or_default());
        actions
            .iter()
            .map(|a| {
                x.truncate(s.len());
                x.extend_from_slice(a);
                Ok(c * self.q_net.forward_scalar(&x)? - v)
            })
            .collect()
    }
}

impl Baseline for CriticPair {
    fn value(&self, s: &[f64]) -> Result<f64> {
        self.v_value(s)
    }
}

/// Adapts a closure `(s, a) ↦ A(s, a)` into an [`AdvantageFn`].
pub struct FnAdvantage<F>(pub F);

impl<F> AdvantageFn for FnAdvantage<F>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    fn advantage(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok((self.0)(s, a))
    }
}

/// Exact advantage of the current policy where it is known in closed form.
#[derive(Debug, Clone)]
pub enum AdvantageOracle {
    /// `A(a) = scale·(‖μ − a*‖² + Σσ² − ‖a − a*‖²)` for the stateless bandit.
    Bandit {
        target: Vec<f64>,
        scale: f64,
        mean: Vec<f64>,
        sigma: Vec<f64>,
    },
    /// `Q − V` from the exact quadratic value functions.
    Lqr(Box<LqrValue>),
}

impl AdvantageOracle {
    /// Builds the oracle for `policy` on `spec`; unsupported for the pendulum.
    pub fn for_policy(spec: &EnvSpec, policy: &GaussianPolicy) -> Result<Self> {
        match &spec.kind {
            EnvKind::Bandit(p) => Ok(Self::Bandit {
                target: p.target.clone(),
                scale: p.reward_scale,
                mean: policy.mean_action(&vec![0.0; spec.state_dim])?,
                sigma: policy.sigma.clone(),
            }),
            EnvKind::Lqr(_) => Ok(Self::Lqr(Box::new(LqrValue::evaluate(spec, policy)?))),
            EnvKind::Pendulum(_) => Err(Error::unsupported("no advantage oracle for the pendulum")),
        }
    }

    pub fn q_value(&self, s: &[f64], a: &[f64]) -> f64 {
        match self {
            Self::Bandit { target, scale, .. } => -scale * crate::stats::sq_dist(a, target),
            Self::Lqr(v) => v.q_value(s, a),
        }
    }
}

impl AdvantageFn for AdvantageOracle {
    fn advantage(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.q_value(s, a) - self.value(s)?)
    }
}

impl Baseline for AdvantageOracle {
    fn value(&self, s: &[f64]) -> Result<f64> {
        Ok(match self {
            Self::Bandit {
                target,
                scale,
                mean,
                sigma,
            } => -scale * (crate::stats::sq_dist(mean, target) + crate::stats::sq_norm(sigma)),
            Self::Lqr(v) => v.value(s),
        })
    }
}

/// `A(s, a) + offset`: a critic with a known uniform bias.
pub struct Shifted<'a> {
    pub base: &'a dyn AdvantageFn,
    pub offset: f64,
}

impl AdvantageFn for Shifted<'_> {
    fn advantage(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.base.advantage(s, a)? + self.offset)
    }
}

/// Mean squared difference between two advantage functions over `sample`.
pub fn advantage_mse(
    critic: &dyn AdvantageFn,
    oracle: &dyn AdvantageFn,
    sample: &[(Vec<f64>, Vec<f64>)],
) -> Result<Estimate> {
    if sample.is_empty() {
        return Err(Error::argument("advantage MSE needs a nonempty sample"));
    }
    let sq: Vec<f64> = sample
        .iter()
        .map(|(s, a)| {
            let d = critic.advantage(s, a)? - oracle.advantage(s, a)?;
            Ok(d * d)
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::of_mean(&sq))
}
