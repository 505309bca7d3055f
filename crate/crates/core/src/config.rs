//! Experiment configuration.
//!
//! Config files are TOML with one level of sections. A file only needs the keys
//! it changes: it is layered over the preset for its `env.kind`, section by
//! section. The `[estimator]` table is replaced as a whole when present.
//! [`KEYS_HELP`] lists every key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::critic::CriticConfig;
use crate::envs::{BanditParams, EnvKind, EnvSpec, LqrParams, PendulumParams};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::nn::{LayerSpec, Mlp};
use crate::policy::{ActionBox, GaussianPolicy};
use crate::rng::Rng;

/// Every config key with a one-line description, shown by `--help`.
pub const KEYS_HELP: &str = "\
Config keys (TOML; unspecified keys come from the preset for env.kind):
  seed                        master seed (overridden by ALLACT_SEED)
  [env]       kind            bandit | lqr | pendulum
              gamma           discount in [0, 1)
              horizon         episode length T
              state_dim       bandit only: width of the constant zero state
              action_low      per-dimension lower action bound
              action_high     per-dimension upper action bound
  [bandit]    target, noise_std, reward_scale
  [lqr]       a, b, q_cost, r_cost (row-major), init_mean, init_std
  [pendulum]  mass, length, gravity, damping, dt, init_angle, init_velocity,
              fall_angle, angle_weight, velocity_weight, torque_weight,
              fall_penalty
  [policy]    hidden          hidden widths of the mean network (tanh)
              sigma           fixed per-dimension standard deviation
              lr              policy step size
              lr_decay        constant | inv_sqrt
              grad_clip       optional cap on the gradient norm
              init            optional explicit parameter vector
  [critic]    q_hidden, v_hidden, lr_q, lr_v,
              k               next-action samples in the expected SARSA target
              v_epochs        value-regression epochs per episode
              q_epochs        expected SARSA passes per episode
              batch_size      value-regression minibatch size
              value_scale     output unit of both value networks
              optimizer       adam | sgd
  [estimator] kind            reinforce | mc | quadrature
              samples         N_S for mc
              points          N for quadrature
  [train]     episodes, seeds (number of runs), solve_threshold, window
  [sweep]     warmup_episodes training episodes before freezing,
              ns              N_S values,
              estimates       estimates per N_S,
              reference_rollouts,
              reps            draws per state in the variance split,
              states          states in the variance split
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvName {
    Bandit,
    Lqr,
    Pendulum,
}

impl std::str::FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bandit" => Ok(Self::Bandit),
            "lqr" => Ok(Self::Lqr),
            "pendulum" => Ok(Self::Pendulum),
            _ => Err(Error::Config(format!("unknown env.kind `{s}` (bandit, lqr, pendulum)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub kind: EnvName,
    pub gamma: f64,
    pub horizon: usize,
    pub state_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrDecay {
    Constant,
    /// `δ_k = δ / √(k + 1)` at episode `k`.
    InvSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    pub sigma: Vec<f64>,
    pub lr: f64,
    pub lr_decay: LrDecay,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
}

impl PolicyConfig {
    /// Step size at episode `k`.
    pub fn step_size(&self, k: usize) -> f64 {
        match self.lr_decay {
            LrDecay::Constant => self.lr,
            LrDecay::InvSqrt => self.lr / ((k + 1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub seeds: usize,
    pub solve_threshold: f64,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub warmup_episodes: usize,
    pub ns: Vec<usize>,
    pub estimates: usize,
    pub reference_rollouts: usize,
    pub reps: usize,
    pub states: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            warmup_episodes: 200,
            ns: (0..10).map(|i| 1 << i).collect(),
            estimates: 1000,
            reference_rollouts: 10_000,
            reps: 1000,
            states: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub env: EnvSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandit: Option<BanditParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr: Option<LqrParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pendulum: Option<PendulumParams>,
    pub policy: PolicyConfig,
    pub critic: CriticConfig,
    pub estimator: EstimatorKind,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    /// Default configuration for `bandit`, `lqr` or `pendulum`.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name.parse::<EnvName>()? {
            EnvName::Bandit => Self {
                seed: 0,
                env: EnvSection {
                    kind: EnvName::Bandit,
                    gamma: 0.0,
                    horizon: 1,
                    state_dim: 1,
                    action_low: vec![-3.0],
                    action_high: vec![3.0],
                },
                bandit: Some(BanditParams {
                    target: vec![0.5],
                    noise_std: 0.1,
                    reward_scale: 1.0,
                }),
                lqr: None,
                pendulum: None,
                policy: PolicyConfig {
                    hidden: vec![8],
                    sigma: vec![0.3],
                    lr: 0.005,
                    lr_decay: LrDecay::Constant,
                    grad_clip: None,
                    init: None,
                },
                critic: CriticConfig {
                    q_hidden: vec![32],
                    v_hidden: vec![],
                    lr_q: 0.05,
                    lr_v: 0.05,
                    ..CriticConfig::default()
                },
                estimator: EstimatorKind::Mc { samples: 64 },
                train: TrainConfig {
                    episodes: 200,
                    seeds: 25,
                    solve_threshold: -0.1,
                    window: 20,
                },
                sweep: SweepConfig {
                    warmup_episodes: 500,
                    ..SweepConfig::default()
                },
            },
            EnvName::Lqr => Self {
                seed: 0,
                env: EnvSection {
                    kind: EnvName::Lqr,
                    gamma: 0.9,
                    horizon: 50,
                    state_dim: 1,
                    action_low: vec![-10.0],
                    action_high: vec![10.0],
                },
                bandit: None,
                lqr: Some(LqrParams {
                    a: vec![1.0],
                    b: vec![1.0],
                    q_cost: vec![1.0],
                    r_cost: vec![1.0],
                    init_mean: vec![0.0],
                    init_std: vec![1.0],
                }),
                pendulum: None,
                policy: PolicyConfig {
                    hidden: vec![],
                    sigma: vec![0.1],
                    lr: 0.01,
                    lr_decay: LrDecay::Constant,
                    grad_clip: Some(10.0),
                    init: Some(vec![-0.5, 0.0]),
                },
                critic: CriticConfig {
                    q_hidden: vec![32],
                    v_hidden: vec![32],
                    lr_q: 0.01,
                    lr_v: 0.01,
                    ..CriticConfig::default()
                },
                estimator: EstimatorKind::Mc { samples: 64 },
                train: TrainConfig {
                    episodes: 300,
                    seeds: 25,
                    solve_threshold: -5.0,
                    window: 50,
                },
                sweep: SweepConfig {
                    reference_rollouts: 2000,
                    ..SweepConfig::default()
                },
            },
            EnvName::Pendulum => Self {
                seed: 0,
                env: EnvSection {
                    kind: EnvName::Pendulum,
                    gamma: 0.95,
                    horizon: 200,
                    state_dim: 2,
                    action_low: vec![-5.0],
                    action_high: vec![5.0],
                },
                bandit: None,
                lqr: None,
                pendulum: Some(PendulumParams::default()),
                policy: PolicyConfig {
                    hidden: vec![16],
                    sigma: vec![1.0],
                    lr: 0.02,
                    lr_decay: LrDecay::Constant,
                    grad_clip: Some(10.0),
                    init: None,
                },
                critic: CriticConfig {
                    lr_q: 0.003,
                    q_epochs: 4,
                    value_scale: 100.0,
                    ..CriticConfig::default()
                },
                estimator: EstimatorKind::Mc { samples: 64 },
                train: TrainConfig {
                    episodes: 400,
                    seeds: 25,
                    solve_threshold: -150.0,
                    window: 100,
                },
                sweep: SweepConfig::default(),
            },
        })
    }

    /// Parses TOML text layered over the preset named by its `env.kind`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let kind = user
            .get("env")
            .and_then(|e| e.get("kind"))
            .map(|k| {
                k.as_str()
                    .ok_or_else(|| Error::Config("env.kind must be a string".into()))
            })
            .transpose()?
            .unwrap_or("bandit");
        let base = Self::preset(kind)?;
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(format!("{e}")))?;
        for (key, value) in user {
            match (merged.get_mut(&key), value) {
                (Some(toml::Value::Table(into)), toml::Value::Table(from)) if key != "estimator" => {
                    into.extend(from);
                }
                (_, value) => {
                    merged.insert(key, value);
                }
            }
        }
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.env_spec()?;
        self.critic.validate()?;
        let t = &self.train;
        if t.episodes == 0 || t.seeds == 0 || t.window == 0 {
            return Err(Error::Config("train.episodes, train.seeds and train.window must be ≥ 1".into()));
        }
        if t.window > t.episodes {
            return Err(Error::Config("train.window must not exceed train.episodes".into()));
        }
        let p = &self.policy;
        if p.sigma.len() != self.env.action_low.len() {
            return Err(Error::Config("policy.sigma needs one entry per action dimension".into()));
        }
        if p.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("policy.sigma entries must be > 0".into()));
        }
        if !(p.lr >= 0.0) {
            return Err(Error::Config("policy.lr must be ≥ 0".into()));
        }
        if let EstimatorKind::Quadrature { points } = self.estimator {
            if points < 2 || self.env.action_low.len() != 1 {
                return Err(Error::Config(
                    "quadrature needs points ≥ 2 and a one-dimensional action".into(),
                ));
            }
        }
        if let EstimatorKind::Mc { samples: 0 } = self.estimator {
            return Err(Error::Config("estimator.samples must be ≥ 1".into()));
        }
        let s = &self.sweep;
        if s.estimates < 2 || s.reps < 2 || s.states == 0 || s.reference_rollouts == 0 || s.ns.contains(&0) {
            return Err(Error::Config(
                "sweep needs estimates ≥ 2, reps ≥ 2, states ≥ 1, reference_rollouts ≥ 1, ns entries ≥ 1".into(),
            ));
        }
        Ok(())
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        let missing = |s: &str| Error::Config(format!("env.kind = {s} needs a [{s}] section"));
        let (kind, state_dim) = match self.env.kind {
            EnvName::Bandit => (
                EnvKind::Bandit(self.bandit.clone().ok_or_else(|| missing("bandit"))?),
                self.env.state_dim,
            ),
            EnvName::Lqr => {
                let p = self.lqr.clone().ok_or_else(|| missing("lqr"))?;
                let n = p.init_mean.len();
                (EnvKind::Lqr(p), n)
            }
            EnvName::Pendulum => (
                EnvKind::Pendulum(self.pendulum.clone().ok_or_else(|| missing("pendulum"))?),
                2,
            ),
        };
        let action_box = ActionBox::new(self.env.action_low.clone(), self.env.action_high.clone())
            .map_err(|e| Error::Config(e.to_string()))?;
        let spec = EnvSpec {
            kind,
            state_dim,
            action_dim: action_box.dim(),
            action_box,
            gamma: self.env.gamma,
            horizon: self.env.horizon,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Policy with freshly initialized (or configured) mean-network parameters.
    pub fn build_policy(&self, rng: &mut Rng) -> Result<GaussianPolicy> {
        let spec = self.env_spec()?;
        let layers = LayerSpec::chain(spec.state_dim, &self.policy.hidden, spec.action_dim);
        let mut net = Mlp::random(layers, rng)?;
        if let Some(init) = &self.policy.init {
            if init.len() != net.param_dim() {
                return Err(Error::Config(format!(
                    "policy.init has {} entries, the mean network has {}",
                    init.len(),
                    net.param_dim()
                )));
            }
            net = Mlp::new(net.layers, init.clone().into())?;
        }
        GaussianPolicy::new(net, self.policy.sigma.clone(), spec.action_box)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_round_trip() {
        for name in ["bandit", "lqr", "pendulum"] {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn partial_file_layers_over_preset() {
        let cfg = ExperimentConfig::from_toml_str(
            "[env]\nkind = \"pendulum\"\nhorizon = 50\n[estimator]\nkind = \"reinforce\"\n",
        )
        .unwrap();
        assert_eq!(cfg.env.horizon, 50);
        assert_eq!(cfg.env.gamma, 0.95);
        assert_eq!(cfg.estimator, EstimatorKind::Reinforce);
        assert!(cfg.pendulum.is_some());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("[policy]\nlearning_rate = 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(ExperimentConfig::from_toml_str("[env]\nkind = \"cartpole\"\n").is_err());
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("[env]\ngamma = 1.0\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml_str("[train]\nwindow = 500\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn explicit_policy_init_is_used() {
        let cfg = ExperimentConfig::preset("lqr").unwrap();
        let pol = cfg.build_policy(&mut crate::rng::from_seed(0)).unwrap();
        assert_eq!(pol.params().0, vec![-0.5, 0.0]);
    }
}
