//! Desk-scale environments with known or cheaply computable ground truth.
//!
//! * `bandit`: one step, stateless, reward `−scale·‖a − a*‖² + noise`. The
//!   policy gradient is available by quadrature.
//! * `lqr`: linear dynamics with quadratic cost. For a linear-mean Gaussian
//!   policy the action-value function is quadratic and is computed exactly by
//!   [`LqrValue::evaluate`].
//! * `pendulum`: an inverted pendulum balancing task used for learning curves.
//!
//! Episodes are truncated at the horizon with no terminal bootstrap, and the
//! returns satisfy `G_t = r_t + γ G_{t+1}` with `G_{T−1} = r_{T−1}`.

use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Uniform};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::nn::{Activation, GradVector};
use crate::policy::{ActionBox, GaussianPolicy};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditParams {
    pub target: Vec<f64>,
    pub noise_std: f64,
    pub reward_scale: f64,
}

/// Matrices are row-major: `a` is n×n, `b` is n×m, `q_cost` n×n, `r_cost` m×m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub q_cost: Vec<f64>,
    pub r_cost: Vec<f64>,
    pub init_mean: Vec<f64>,
    /// Per-coordinate std of the Gaussian initial state; zero gives a point mass.
    pub init_std: Vec<f64>,
}

/// Angle is measured from upright; state is `(angle, angular velocity)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub damping: f64,
    pub dt: f64,
    /// Initial angle drawn uniformly from `[−init_angle, init_angle]`.
    pub init_angle: f64,
    pub init_velocity: f64,
    /// The episode ends once `|angle|` exceeds this.
    pub fall_angle: f64,
    pub angle_weight: f64,
    pub velocity_weight: f64,
    pub torque_weight: f64,
    /// Extra cost charged on the step where the pole falls.
    pub fall_penalty: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            damping: 0.1,
            dt: 0.05,
            init_angle: 0.1,
            init_velocity: 0.1,
            fall_angle: 0.8,
            angle_weight: 1.0,
            velocity_weight: 0.1,
            torque_weight: 0.001,
            fall_penalty: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvKind {
    Bandit(BanditParams),
    Lqr(LqrParams),
    Pendulum(PendulumParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_box: ActionBox,
    pub gamma: f64,
    pub horizon: usize,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma = {} must lie in [0, 1)", self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be ≥ 1".into()));
        }
        if self.action_box.dim() != self.action_dim {
            return Err(Error::Config("action box dimension differs from action_dim".into()));
        }
        match &self.kind {
            EnvKind::Bandit(p) => {
                if p.target.len() != self.action_dim {
                    return Err(Error::Config("bandit target must have action_dim entries".into()));
                }
                if p.noise_std < 0.0 {
                    return Err(Error::Config("bandit noise_std must be ≥ 0".into()));
                }
            }
            EnvKind::Lqr(p) => {
                let (n, m) = (self.state_dim, self.action_dim);
                let checks = [
                    ("a", p.a.len(), n * n),
                    ("b", p.b.len(), n * m),
                    ("q_cost", p.q_cost.len(), n * n),
                    ("r_cost", p.r_cost.len(), m * m),
                    ("init_mean", p.init_mean.len(), n),
                    ("init_std", p.init_std.len(), n),
                ];
                for (name, got, want) in checks {
                    if got != want {
                        return Err(Error::Config(format!(
                            "lqr.{name} has {got} entries, expected {want}"
                        )));
                    }
                }
            }
            EnvKind::Pendulum(p) => {
                if self.state_dim != 2 || self.action_dim != 1 {
                    return Err(Error::Config("pendulum has state_dim 2 and action_dim 1".into()));
                }
                if !(p.mass > 0.0 && p.length > 0.0 && p.dt > 0.0 && p.fall_angle > 0.0) {
                    return Err(Error::Config("pendulum mass, length, dt, fall_angle must be > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            EnvKind::Bandit(_) => "bandit",
            EnvKind::Lqr(_) => "lqr",
            EnvKind::Pendulum(_) => "pendulum",
        }
    }
}

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub fn env_reset(spec: &EnvSpec, rng: &mut Rng) -> Vec<f64> {
    match &spec.kind {
        EnvKind::Bandit(_) => vec![0.0; spec.state_dim],
        EnvKind::Lqr(p) => p
            .init_mean
            .iter()
            .zip(&p.init_std)
            .map(|(m, s)| {
                if *s == 0.0 {
                    *m
                } else {
                    let e: f64 = StandardNormal.sample(rng);
                    m + s * e
                }
            })
            .collect(),
        EnvKind::Pendulum(p) => {
            let mut draw = |half: f64| {
                if half > 0.0 {
                    Uniform::new_inclusive(-half, half).expect("finite").sample(rng)
                } else {
                    0.0
                }
            };
            let angle = draw(p.init_angle);
            let vel = draw(p.init_velocity);
            vec![angle, vel]
        }
    }
}

fn mat_vec(m: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|i| m[i * cols..(i + 1) * cols].iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn quad_form(m: &[f64], n: usize, v: &[f64]) -> f64 {
    crate::stats::dot(v, &mat_vec(m, n, n, v))
}

pub fn env_step(spec: &EnvSpec, state: &[f64], action: &[f64], rng: &mut Rng) -> Result<Step> {
    ensure_finite(state, "environment state")?;
    ensure_finite(action, "action")?;
    let step = match &spec.kind {
        EnvKind::Bandit(p) => {
            let cost: f64 = action.iter().zip(&p.target).map(|(a, t)| (a - t) * (a - t)).sum();
            let noise = if p.noise_std > 0.0 {
                let e: f64 = StandardNormal.sample(rng);
                p.noise_std * e
            } else {
                0.0
            };
            Step {
                next_state: state.to_vec(),
                reward: -p.reward_scale * cost + noise,
                done: true,
            }
        }
        EnvKind::Lqr(p) => {
            let (n, m) = (spec.state_dim, spec.action_dim);
            let ax = mat_vec(&p.a, n, n, state);
            let bu = mat_vec(&p.b, n, m, action);
            let next: Vec<f64> = ax.iter().zip(&bu).map(|(x, y)| x + y).collect();
            let reward = -(quad_form(&p.q_cost, n, state) + quad_form(&p.r_cost, m, action));
            Step {
                next_state: next,
                reward,
                done: false,
            }
        }
        EnvKind::Pendulum(p) => {
            let (angle, vel) = (state[0], state[1]);
            let torque = action[0];
            let accel = (p.gravity / p.length) * angle.sin()
                + torque / (p.mass * p.length * p.length)
                - p.damping * vel;
            let new_vel = vel + p.dt * accel;
            let new_angle = angle + p.dt * new_vel;
            let fell = new_angle.abs() > p.fall_angle;
            let mut reward = -(p.angle_weight * angle * angle
                + p.velocity_weight * vel * vel
                + p.torque_weight * torque * torque);
            if fell {
                reward -= p.fall_penalty;
            }
            Step {
                next_state: vec![new_angle, new_vel],
                reward,
                done: fell,
            }
        }
    };
    ensure_finite(&step.next_state, "next state")?;
    if !step.reward.is_finite() {
        return Err(Error::numeric("non-finite reward"));
    }
    Ok(step)
}

/// One episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    pub next_states: Vec<Vec<f64>>,
    /// Environment-signalled termination; truncation at the horizon is not terminal.
    pub terminal: Vec<bool>,
}

/// `(s, a, r, s', done)` as consumed by the critic.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub state: &'a [f64],
    pub action: &'a [f64],
    pub reward: f64,
    pub next_state: &'a [f64],
    pub done: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Undiscounted sum of rewards.
    pub fn score(&self) -> f64 {
        crate::stats::sum(&self.rewards)
    }

    /// Transitions with the final step treated as terminal (no bootstrap past the horizon).
    pub fn transitions(&self) -> impl Iterator<Item = Transition<'_>> {
        let last = self.len().saturating_sub(1);
        (0..self.len()).map(move |t| Transition {
            state: &self.states[t],
            action: &self.actions[t],
            reward: self.rewards[t],
            next_state: &self.next_states[t],
            done: self.terminal[t] || t == last,
        })
    }
}

/// `G_t = r_t + γ G_{t+1}`, `G_{T−1} = r_{T−1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut g = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        g[t] = acc;
    }
    g
}

pub fn rollout(spec: &EnvSpec, policy: &GaussianPolicy, rng: &mut Rng) -> Result<Trajectory> {
    let mut s = env_reset(spec, rng);
    let mut traj = Trajectory {
        states: Vec::with_capacity(spec.horizon),
        actions: Vec::with_capacity(spec.horizon),
        rewards: Vec::with_capacity(spec.horizon),
        returns: Vec::new(),
        next_states: Vec::with_capacity(spec.horizon),
        terminal: Vec::with_capacity(spec.horizon),
    };
    for _ in 0..spec.horizon {
        let a = policy.sample(&s, rng)?;
        let step = env_step(spec, &s, &a, rng)?;
        traj.states.push(s);
        traj.actions.push(a);
        traj.rewards.push(step.reward);
        traj.terminal.push(step.done);
        traj.next_states.push(step.next_state.clone());
        s = step.next_state;
        if step.done {
            break;
        }
    }
    traj.returns = discounted_returns(&traj.rewards, spec.gamma);
    Ok(traj)
}

/// Exact value functions of a linear-mean Gaussian policy on an LQR.
///
/// `V(x) = xᵀPx + pᵀx + c` and
/// `Q(x, a) = −xᵀQ_c x − aᵀR_c a + γ V(Ax + Ba)`,
/// with actions taken unclipped from `N(Kx + k, diag σ²)`.
#[derive(Debug, Clone)]
pub struct LqrValue {
    pub p: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q_cost: DMatrix<f64>,
    r_cost: DMatrix<f64>,
    gamma: f64,
    pub iterations: usize,
}

pub const LQR_TOLERANCE: f64 = 1e-10;
const LQR_MAX_ITERS: usize = 2_000_000;

impl LqrValue {
    pub fn evaluate(spec: &EnvSpec, policy: &GaussianPolicy) -> Result<Self> {
        let p = match &spec.kind {
            EnvKind::Lqr(p) => p,
            _ => return Err(Error::unsupported("LQR value oracle needs an lqr environment")),
        };
        let (n, m) = (spec.state_dim, spec.action_dim);
        if policy.mean.layers.len() != 1 || policy.mean.layers[0].activation != Activation::Identity {
            return Err(Error::unsupported(
                "LQR value oracle needs a policy mean that is linear in the state",
            ));
        }
        if policy.state_dim() != n || policy.action_dim() != m {
            return Err(Error::argument("policy dimensions do not match the LQR"));
        }
        let blocks = policy.params().unflatten(&policy.mean.layers)?;
        let gain = DMatrix::from_row_slice(m, n, &blocks[0].0);
        let offset = DVector::from_column_slice(&blocks[0].1);
        let a = DMatrix::from_row_slice(n, n, &p.a);
        let b = DMatrix::from_row_slice(n, m, &p.b);
        let q_cost = DMatrix::from_row_slice(n, n, &p.q_cost);
        let r_cost = DMatrix::from_row_slice(m, m, &p.r_cost);
        let noise = DMatrix::from_diagonal(&DVector::from_iterator(
            m,
            policy.sigma.iter().map(|s| s * s),
        ));
        let gamma = spec.gamma;

        let closed = &a + &b * &gain;
        let radius = closed
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if radius * gamma.sqrt() >= 1.0 {
            return Err(Error::Divergence(format!(
                "closed-loop spectral radius {radius:.6} ≥ 1/√γ = {:.6}",
                1.0 / gamma.sqrt()
            )));
        }
        let h = &b * &offset;
        let kr = gain.transpose() * &r_cost;
        let quad_stage = -(&q_cost + &kr * &gain);
        let lin_stage = -2.0 * (&kr * &offset);
        let const_stage = -((offset.transpose() * &r_cost * &offset)[(0, 0)] + (&r_cost * &noise).trace());

        let mut pm = DMatrix::<f64>::zeros(n, n);
        let mut lin = DVector::<f64>::zeros(n);
        let mut c = 0.0;
        let closed_t = closed.transpose();
        for it in 1..=LQR_MAX_ITERS {
            let p_next = &quad_stage + gamma * (&closed_t * &pm * &closed);
            let lin_next = &lin_stage + gamma * (2.0 * (&closed_t * &pm * &h) + &closed_t * &lin);
            let c_next = const_stage
                + gamma
                    * ((h.transpose() * &pm * &h)[(0, 0)]
                        + (b.transpose() * &pm * &b * &noise).trace()
                        + lin.dot(&h)
                        + c);
            let delta = (&p_next - &pm)
                .amax()
                .max((&lin_next - &lin).amax())
                .max((c_next - c).abs());
            let scale = 1.0f64.max(p_next.amax()).max(c_next.abs());
            pm = p_next;
            lin = lin_next;
            c = c_next;
            if !c.is_finite() {
                return Err(Error::Divergence("LQR policy evaluation overflowed".into()));
            }
            if delta <= LQR_TOLERANCE * scale {
                // symmetrize away round-off
                let pm = 0.5 * (&pm + pm.transpose());
                return Ok(Self {
                    p: pm,
                    linear: lin,
                    constant: c,
                    a,
                    b,
                    q_cost,
                    r_cost,
                    gamma,
                    iterations: it,
                });
            }
        }
        Err(Error::Divergence("LQR policy evaluation did not converge".into()))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        (x.transpose() * &self.p * &x)[(0, 0)] + self.linear.dot(&x) + self.constant
    }

    pub fn q_value(&self, x: &[f64], u: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let uv = DVector::from_column_slice(u);
        let next = &self.a * &xv + &self.b * &uv;
        let stage = (xv.transpose() * &self.q_cost * &xv)[(0, 0)] + (uv.transpose() * &self.r_cost * &uv)[(0, 0)];
        let v_next = (next.transpose() * &self.p * &next)[(0, 0)] + self.linear.dot(&next) + self.constant;
        -stage + self.gamma * v_next
    }

    pub fn advantage(&self, x: &[f64], u: &[f64]) -> f64 {
        self.q_value(x, u) - self.value(x)
    }
}

/// `Q^π(s, a)` for an LQR with a linear-mean policy.
pub fn lqr_oracle_q(spec: &EnvSpec, policy: &GaussianPolicy, s: &[f64], a: &[f64]) -> Result<f64> {
    Ok(LqrValue::evaluate(spec, policy)?.q_value(s, a))
}

/// Number of trapezoid intervals used by [`bandit_oracle_gradient`] (2¹⁴).
pub const BANDIT_ORACLE_INTERVALS: usize = 1 << 14;

/// Policy gradient of the bandit by trapezoidal quadrature over `μ ± 8σ`.
pub fn bandit_oracle_gradient(spec: &EnvSpec, policy: &GaussianPolicy) -> Result<GradVector> {
    bandit_oracle_gradient_with(spec, policy, BANDIT_ORACLE_INTERVALS)
}

/// As [`bandit_oracle_gradient`] with a chosen number of intervals.
pub fn bandit_oracle_gradient_with(
    spec: &EnvSpec,
    policy: &GaussianPolicy,
    intervals: usize,
) -> Result<GradVector> {
    let p = match &spec.kind {
        EnvKind::Bandit(p) => p,
        _ => return Err(Error::unsupported("bandit oracle gradient needs a bandit")),
    };
    if spec.action_dim != 1 {
        return Err(Error::unsupported("bandit oracle gradient is one-dimensional"));
    }
    if intervals < 1 {
        return Err(Error::argument("need at least one interval"));
    }
    let s = vec![0.0; spec.state_dim];
    let mu = policy.mean_action(&s)?;
    let sigma = policy.sigma[0];
    let (lo, hi) = (mu[0] - 8.0 * sigma, mu[0] + 8.0 * sigma);
    let da = (hi - lo) / intervals as f64;
    // ∫ ∇_θπ(a) Q(a) da = (∂μ/∂θ)ᵀ ∫ π(a) (a − μ)/σ² Q(a) da
    let mut acc = crate::stats::CompensatedSum::new();
    for i in 0..=intervals {
        let a = lo + da * i as f64;
        let w = if i == 0 || i == intervals { 0.5 * da } else { da };
        let q = -p.reward_scale * (a - p.target[0]) * (a - p.target[0]);
        let dens = policy.density_given_mean(&mu, &[a]);
        acc.add(w * dens * (a - mu[0]) / (sigma * sigma) * q);
    }
    policy.mean.backward(&s, &[acc.value()])
}

/// Builds the zero-state bandit spec used by tests and presets.
pub fn bandit_spec(target: f64, noise_std: f64, half_width: f64) -> Result<EnvSpec> {
    let spec = EnvSpec {
        kind: EnvKind::Bandit(BanditParams {
            target: vec![target],
            noise_std,
            reward_scale: 1.0,
        }),
        state_dim: 1,
        action_dim: 1,
        action_box: ActionBox::symmetric(1, half_width)?,
        gamma: 0.0,
        horizon: 1,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Mlp};
    use crate::rng;

    fn lqr_1d(gamma: f64, init_std: f64) -> EnvSpec {
        EnvSpec {
            kind: EnvKind::Lqr(LqrParams {
                a: vec![1.0],
                b: vec![1.0],
                q_cost: vec![1.0],
                r_cost: vec![1.0],
                init_mean: vec![1.0],
                init_std: vec![init_std],
            }),
            state_dim: 1,
            action_dim: 1,
            action_box: ActionBox::symmetric(1, 50.0).unwrap(),
            gamma,
            horizon: 50,
        }
    }

    fn linear_policy(gain: &[f64], bias: &[f64], sigma: f64, n: usize, m: usize) -> GaussianPolicy {
        let spec = vec![LayerSpec::new(n, m, Activation::Identity)];
        let mut p = gain.to_vec();
        p.extend_from_slice(bias);
        GaussianPolicy::new(
            Mlp::new(spec, p.into()).unwrap(),
            vec![sigma; m],
            ActionBox::symmetric(m, 50.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn bandit_reset_is_zero_state() {
        let spec = bandit_spec(0.5, 0.1, 3.0).unwrap();
        assert_eq!(env_reset(&spec, &mut rng::from_seed(0)), vec![0.0]);
    }

    #[test]
    fn bandit_exact_target_reward_zero() {
        let spec = bandit_spec(0.5, 0.0, 3.0).unwrap();
        let step = env_step(&spec, &[0.0], &[0.5], &mut rng::from_seed(0)).unwrap();
        assert_eq!(step.reward, 0.0);
        assert!(step.done);
    }

    #[test]
    fn lqr_point_mass_reset_and_identity_dynamics() {
        let mut spec = lqr_1d(0.9, 0.0);
        assert_eq!(env_reset(&spec, &mut rng::from_seed(0)), vec![1.0]);
        spec.state_dim = 2;
        spec.action_dim = 2;
        spec.action_box = ActionBox::symmetric(2, 5.0).unwrap();
        spec.kind = EnvKind::Lqr(LqrParams {
            a: vec![1.0, 0.0, 0.0, 1.0],
            b: vec![1.0, 0.0, 0.0, 1.0],
            q_cost: vec![0.0; 4],
            r_cost: vec![0.0; 4],
            init_mean: vec![0.0; 2],
            init_std: vec![0.0; 2],
        });
        spec.validate().unwrap();
        let step = env_step(&spec, &[1.0, 0.0], &[0.0, 1.0], &mut rng::from_seed(0)).unwrap();
        assert_eq!(step.next_state, vec![1.0, 1.0]);
    }

    fn pendulum_spec() -> EnvSpec {
        EnvSpec {
            kind: EnvKind::Pendulum(PendulumParams::default()),
            state_dim: 2,
            action_dim: 1,
            action_box: ActionBox::symmetric(1, 5.0).unwrap(),
            gamma: 0.95,
            horizon: 200,
        }
    }

    #[test]
    fn pendulum_reset_range() {
        let spec = pendulum_spec();
        let mut r = rng::from_seed(4);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for _ in 0..10_000 {
            let s = env_reset(&spec, &mut r);
            lo = lo.min(s[0]);
            hi = hi.max(s[0]);
        }
        assert!(lo >= -0.1 && hi <= 0.1);
        assert!(lo < -0.099 && hi > 0.099);
    }

    #[test]
    fn pendulum_upright_equilibrium() {
        let spec = pendulum_spec();
        let step = env_step(&spec, &[0.0, 0.0], &[0.0], &mut rng::from_seed(0)).unwrap();
        assert!(step.next_state.iter().all(|v| v.abs() < 1e-6));
        assert_eq!(step.reward, 0.0);
        assert!(!step.done);
    }

    #[test]
    fn pendulum_one_step_by_hand() {
        let spec = pendulum_spec();
        let p = PendulumParams::default();
        let (th, om, u): (f64, f64, f64) = (0.2, -0.3, 1.5);
        let acc = p.gravity * th.sin() + u - p.damping * om;
        let om2 = om + p.dt * acc;
        let th2 = th + p.dt * om2;
        let step = env_step(&spec, &[th, om], &[u], &mut rng::from_seed(0)).unwrap();
        assert!((step.next_state[0] - th2).abs() < 1e-15);
        assert!((step.next_state[1] - om2).abs() < 1e-15);
        let r = -(th * th + 0.1 * om * om + 0.001 * u * u);
        assert!((step.reward - r).abs() < 1e-15);
    }

    #[test]
    fn pendulum_fall_terminates_with_penalty() {
        let spec = pendulum_spec();
        let step = env_step(&spec, &[0.79, 2.0], &[0.0], &mut rng::from_seed(0)).unwrap();
        assert!(step.done);
        assert!(step.reward < -100.0);
    }

    #[test]
    fn non_finite_state_is_numeric_error() {
        let spec = lqr_1d(0.9, 0.0);
        assert!(matches!(
            env_step(&spec, &[f64::NAN], &[0.0], &mut rng::from_seed(0)),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn bandit_rollout_has_one_step() {
        let spec = bandit_spec(0.5, 0.2, 3.0).unwrap();
        let pol = linear_policy(&[0.0], &[0.1], 0.3, 1, 1);
        let traj = rollout(&spec, &pol, &mut rng::from_seed(1)).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.returns[0], traj.rewards[0]);
    }

    #[test]
    fn zero_gamma_returns_equal_rewards() {
        let mut spec = lqr_1d(0.0, 0.3);
        spec.gamma = 0.0;
        let pol = linear_policy(&[-0.5], &[0.0], 0.1, 1, 1);
        let traj = rollout(&spec, &pol, &mut rng::from_seed(2)).unwrap();
        assert_eq!(traj.returns, traj.rewards);
    }

    #[test]
    fn returns_match_direct_sum() {
        let spec = lqr_1d(0.9, 0.5);
        let pol = linear_policy(&[-0.5], &[0.05], 0.2, 1, 1);
        let traj = rollout(&spec, &pol, &mut rng::from_seed(3)).unwrap();
        for t in 0..traj.len() {
            let direct: f64 = traj.rewards[t..]
                .iter()
                .enumerate()
                .map(|(k, r)| 0.9f64.powi(k as i32) * r)
                .sum();
            assert!((direct - traj.returns[t]).abs() < 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn rollouts_are_reproducible() {
        let spec = pendulum_spec();
        let mut r0 = rng::from_seed(8);
        let net = Mlp::random(LayerSpec::chain(2, &[8], 1), &mut r0).unwrap();
        let pol = GaussianPolicy::new(net, vec![0.5], spec.action_box.clone()).unwrap();
        let a = rollout(&spec, &pol, &mut rng::from_seed(21)).unwrap();
        let b = rollout(&spec, &pol, &mut rng::from_seed(21)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lqr_zero_costs_give_zero_q() {
        let mut spec = lqr_1d(0.9, 0.0);
        if let EnvKind::Lqr(p) = &mut spec.kind {
            p.q_cost = vec![0.0];
            p.r_cost = vec![0.0];
        }
        let pol = linear_policy(&[-0.5], &[0.0], 0.1, 1, 1);
        let v = LqrValue::evaluate(&spec, &pol).unwrap();
        assert_eq!(v.q_value(&[0.7], &[-0.3]), 0.0);
    }

    #[test]
    fn lqr_zero_gamma_is_stage_reward() {
        let spec = lqr_1d(0.0, 0.0);
        let pol = linear_policy(&[-0.5], &[0.0], 0.1, 1, 1);
        let q = lqr_oracle_q(&spec, &pol, &[0.7], &[-0.3]).unwrap();
        assert!((q + (0.49 + 0.09)).abs() < 1e-14);
    }

    #[test]
    fn lqr_value_is_action_average_of_q() {
        let spec = lqr_1d(0.9, 0.0);
        let pol = linear_policy(&[-0.5], &[0.2], 0.3, 1, 1);
        let v = LqrValue::evaluate(&spec, &pol).unwrap();
        // Q is quadratic in a, so a 3-point Gauss–Hermite rule integrates it exactly.
        let x = [0.8];
        let mu = -0.5 * 0.8 + 0.2;
        let nodes = [-(3.0f64).sqrt(), 0.0, 3.0f64.sqrt()];
        let weights = [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0];
        let avg: f64 = nodes
            .iter()
            .zip(weights)
            .map(|(z, w)| w * v.q_value(&x, &[mu + 0.3 * z]))
            .sum();
        assert!((avg - v.value(&x)).abs() < 1e-9);
    }

    #[test]
    fn lqr_unstable_loop_is_divergence() {
        let spec = lqr_1d(0.9, 0.0);
        let pol = linear_policy(&[0.2], &[0.0], 0.1, 1, 1);
        assert!(matches!(LqrValue::evaluate(&spec, &pol), Err(Error::Divergence(_))));
    }

    #[test]
    fn lqr_symmetric_under_sign_flip() {
        let spec = lqr_1d(0.9, 0.0);
        let pol = linear_policy(&[-0.5], &[0.0], 0.1, 1, 1);
        let v = LqrValue::evaluate(&spec, &pol).unwrap();
        for (s, a) in [(0.3, 0.1), (-1.2, 0.7), (2.0, -1.5)] {
            assert!((v.q_value(&[s], &[a]) - v.q_value(&[-s], &[-a])).abs() < 1e-12);
        }
    }

    #[test]
    fn lqr_requires_linear_policy() {
        let spec = lqr_1d(0.9, 0.0);
        let net = Mlp::zeros(LayerSpec::chain(1, &[4], 1)).unwrap();
        let pol = GaussianPolicy::new(net, vec![0.1], ActionBox::symmetric(1, 5.0).unwrap()).unwrap();
        assert!(matches!(LqrValue::evaluate(&spec, &pol), Err(Error::Unsupported(_))));
    }

    #[test]
    fn bandit_oracle_zero_at_target() {
        let spec = bandit_spec(0.5, 0.0, 5.0).unwrap();
        let pol = linear_policy(&[0.0], &[0.5], 0.3, 1, 1);
        let g = bandit_oracle_gradient(&spec, &pol).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn bandit_oracle_linear_in_reward_scale() {
        let mut spec = bandit_spec(0.5, 0.0, 5.0).unwrap();
        let pol = linear_policy(&[0.0], &[-0.3], 0.4, 1, 1);
        let g1 = bandit_oracle_gradient(&spec, &pol).unwrap();
        if let EnvKind::Bandit(p) = &mut spec.kind {
            p.reward_scale = 2.0;
        }
        let g2 = bandit_oracle_gradient(&spec, &pol).unwrap();
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn bandit_oracle_matches_closed_form_and_resolution() {
        // d/dμ E[−(a − a*)²] = −2(μ − a*); the bias gradient is exactly that.
        let spec = bandit_spec(0.5, 0.0, 5.0).unwrap();
        let pol = linear_policy(&[0.0], &[-0.3], 0.4, 1, 1);
        let g = bandit_oracle_gradient(&spec, &pol).unwrap();
        assert!((g[1] - (-2.0 * (-0.3 - 0.5))).abs() < 1e-10, "{g:?}");
        let g2 = bandit_oracle_gradient_with(&spec, &pol, 2 * BANDIT_ORACLE_INTERVALS).unwrap();
        assert!((g[1] - g2[1]).abs() < 1e-10);
    }
}
