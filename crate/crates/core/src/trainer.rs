//! Actor-critic training loop and learning-curve statistics.
//!
//! Each episode: one rollout, a critic update on it, a gradient estimate over
//! its visited states, and one ascent step `θ ← θ + δ_k ĝ`. Runs that differ
//! only in the estimator share their initialization and rollout streams, so
//! they differ only through the estimator and its own random draws.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::critic::CriticPair;
use crate::envs::rollout;
use crate::error::{Error, Result};
use crate::estimators::trajectory_estimate;
use crate::policy::GaussianPolicy;
use crate::rng;
use crate::stats;

/// Derived-stream indices used by a training run.
mod streams {
    pub const INIT: u64 = 0;
    pub const ROLLOUT: u64 = 1;
    pub const CRITIC: u64 = 2;
    pub const ESTIMATOR: u64 = 3;
}

/// The learned objects of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: GaussianPolicy,
    pub critics: CriticPair,
}

impl Agent {
    /// Freshly initialized policy and critics for `seed`.
    pub fn init(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        let spec = config.env_spec()?;
        let mut r = rng::stream(seed, streams::INIT);
        let policy = config.build_policy(&mut r)?;
        let critics = CriticPair::new(config.critic.clone(), spec.state_dim, spec.action_dim, &mut r)?;
        Ok(Self { policy, critics })
    }
}

/// Per-episode outcome of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub estimator: String,
    /// Undiscounted episode scores.
    pub scores: Vec<f64>,
    /// `G_0` of each episode.
    pub discounted_returns: Vec<f64>,
    /// Cumulative environment steps at the end of each episode.
    pub env_steps: Vec<u64>,
    pub episode_seconds: Vec<f64>,
    /// SHA-256 of the final policy parameters (little-endian f64 bytes).
    pub final_digest: String,
    /// Set when the run stopped early on a numeric failure.
    pub failure: Option<String>,
}

/// Equality ignores wall-clock timings, which are never reproducible.
impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.estimator == other.estimator
            && self.scores == other.scores
            && self.discounted_returns == other.discounted_returns
            && self.env_steps == other.env_steps
            && self.final_digest == other.final_digest
            && self.failure == other.failure
    }
}

impl RunRecord {
    pub fn episodes(&self) -> usize {
        self.scores.len()
    }
}

/// SHA-256 hex digest of a parameter vector.
pub fn params_digest(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Trains with `config.train.episodes` episodes; see [`train_agent`].
pub fn train(config: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    train_agent(config, seed).map(|(record, _)| record)
}

/// Trains one agent and returns its record and final state.
///
/// Configuration problems are returned as errors. A numeric failure during
/// training (for example a non-finite gradient) ends the run early and is
/// reported in [`RunRecord::failure`].
pub fn train_agent(config: &ExperimentConfig, seed: u64) -> Result<(RunRecord, Agent)> {
    train_agent_for(config, seed, config.train.episodes)
}

/// As [`train_agent`] with an explicit episode budget.
pub fn train_agent_for(config: &ExperimentConfig, seed: u64, episodes: usize) -> Result<(RunRecord, Agent)> {
    config.validate()?;
    let spec = config.env_spec()?;
    let mut agent = Agent::init(config, seed)?;
    let mut roll_rng = rng::stream(seed, streams::ROLLOUT);
    let mut critic_rng = rng::stream(seed, streams::CRITIC);
    let mut est_rng = rng::stream(seed, streams::ESTIMATOR);

    let mut record = RunRecord {
        seed,
        estimator: config.estimator.to_string(),
        scores: Vec::with_capacity(episodes),
        discounted_returns: Vec::with_capacity(episodes),
        env_steps: Vec::with_capacity(episodes),
        episode_seconds: Vec::with_capacity(episodes),
        final_digest: String::new(),
        failure: None,
    };
    let mut steps = 0u64;
    for k in 0..episodes {
        let start = Instant::now();
        let outcome = (|| -> Result<(f64, f64, usize)> {
            let traj = rollout(&spec, &agent.policy, &mut roll_rng)?;
            agent.critics.observe(&traj, &agent.policy, spec.gamma, &mut critic_rng)?;
            let est = trajectory_estimate(
                config.estimator,
                &traj,
                &agent.policy,
                &agent.critics,
                &agent.critics,
                &mut est_rng,
            )?;
            let mut grad = est.grad;
            if let Some(clip) = config.policy.grad_clip {
                let n = grad.norm();
                if n > clip {
                    grad.scale(clip / n);
                }
            }
            agent.policy.params_mut().add_scaled(&grad, config.policy.step_size(k));
            crate::error::ensure_finite(agent.policy.params(), "policy parameters")?;
            Ok((traj.score(), traj.returns[0], traj.len()))
        })();
        match outcome {
            Ok((score, ret, len)) => {
                steps += len as u64;
                record.scores.push(score);
                record.discounted_returns.push(ret);
                record.env_steps.push(steps);
                record.episode_seconds.push(start.elapsed().as_secs_f64());
            }
            Err(e) if e.is_numeric() => {
                record.failure = Some(format!("episode {k}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    record.final_digest = params_digest(agent.policy.params());
    Ok((record, agent))
}

/// Independent runs for each seed, in parallel; results are in seed order.
pub fn train_seeds(config: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<RunRecord>> {
    seeds.par_iter().map(|&s| train(config, s)).collect()
}

/// Run seeds `seed, seed + 1, …` for `config.train.seeds` runs.
pub fn run_seeds(config: &ExperimentConfig) -> Vec<u64> {
    (0..config.train.seeds as u64).map(|i| config.seed.wrapping_add(i)).collect()
}

/// Cumulative environment steps at the first episode whose trailing
/// `window`-episode mean score reaches `threshold`.
pub fn steps_to_solve(record: &RunRecord, threshold: f64, window: usize) -> Option<u64> {
    if window == 0 || record.scores.len() < window {
        return None;
    }
    let mut acc: f64 = record.scores[..window - 1].iter().sum();
    for i in window - 1..record.scores.len() {
        acc += record.scores[i];
        if acc / window as f64 >= threshold {
            return Some(record.env_steps[i]);
        }
        acc -= record.scores[i + 1 - window];
    }
    None
}

/// Mean with a Student-t 90% confidence band at one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub episode: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Per-episode mean score across runs with `mean ± t_{0.95, n−1} · sd/√n`.
pub fn aggregate_runs(records: &[RunRecord]) -> Result<Vec<BandPoint>> {
    if records.len() < 2 {
        return Err(Error::argument("aggregation needs at least two runs"));
    }
    let len = records[0].episodes();
    if records.iter().any(|r| r.episodes() != len) {
        return Err(Error::argument("runs have different lengths"));
    }
    let n = records.len();
    let t = stats::student_t_quantile(0.95, (n - 1) as f64)?;
    Ok((0..len)
        .map(|e| {
            // sort so the band does not depend on run order
            let mut xs: Vec<f64> = records.iter().map(|r| r.scores[e]).collect();
            xs.sort_by(f64::total_cmp);
            let (mean, se) = stats::mean_se(&xs);
            BandPoint {
                episode: e,
                mean,
                lower: mean - t * se,
                upper: mean + t * se,
            }
        })
        .collect())
}
