//! Rollout storage, collection and generalized advantage estimation.

use ndarray::Array2;
use rayon::prelude::*;

use crate::env::BoundEnv;
use crate::error::Result;
use crate::neural::{policy, NetworkWeights};
use crate::reward::Termination;
use crate::rng::{derive_seed, Role, Stream};
use crate::robot::{RobotModel, NUM_JOINTS};
use crate::sim::Terrain;

use super::domain_rand::{randomize_domain, DomainRandomizationConfig};

/// Experience of one synchronous rollout, env-major: the row for
/// (env, t) is `env * steps + t`.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub steps: usize,
    pub observations: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// Episode ended at this transition (fall or truncation).
    pub dones: Vec<bool>,
    /// Value bootstrap for each env's state after the final step.
    pub last_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.n_envs * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, env: usize, t: usize) -> usize {
        env * self.steps + t
    }
}

/// An environment slot owned by the trainer: the simulated env plus its
/// randomization state, exploration stream, and episode accumulators.
pub struct EnvSlot {
    pub env: BoundEnv,
    pub exploration: Stream,
    pub env_index: u64,
    pub reset_count: u64,
    pub master_seed: u64,
    pub episode_return: f64,
    pub episode_len: usize,
    base_model: RobotModel,
    base_terrain: Terrain,
    dr_config: DomainRandomizationConfig,
}

/// A finished episode's summary.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeRecord {
    pub total_reward: f64,
    pub length: usize,
    pub fell: bool,
}

impl EnvSlot {
    pub fn new(
        params: crate::env::EnvParams,
        base_model: RobotModel,
        base_terrain: Terrain,
        dr_config: DomainRandomizationConfig,
        master_seed: u64,
        env_index: u64,
    ) -> Self {
        let dr_seed = derive_seed(master_seed, Role::DomainRandomization, env_index << 24);
        let (model, terrain) = randomize_domain(&base_model, &base_terrain, &dr_config, dr_seed);
        let reset_seed = derive_seed(master_seed, Role::Reset, env_index << 24);
        let env = BoundEnv::new(params, model, terrain, reset_seed);
        EnvSlot {
            env,
            exploration: Stream::derived(master_seed, Role::Exploration, env_index),
            env_index,
            reset_count: 0,
            master_seed,
            episode_return: 0.0,
            episode_len: 0,
            base_model,
            base_terrain,
            dr_config,
        }
    }

    /// Start a fresh episode with a new domain draw.
    pub fn begin_new_episode(&mut self) {
        self.reset_count += 1;
        let idx = (self.env_index << 24) | self.reset_count;
        let dr_seed = derive_seed(self.master_seed, Role::DomainRandomization, idx);
        let (model, terrain) =
            randomize_domain(&self.base_model, &self.base_terrain, &self.dr_config, dr_seed);
        let reset_seed = derive_seed(self.master_seed, Role::Reset, idx);
        self.env.reset_with(model, terrain, reset_seed);
        self.episode_return = 0.0;
        self.episode_len = 0;
    }
}

/// Per-env trajectory produced by the parallel rollout.
struct EnvTrajectory {
    observations: Vec<f64>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    last_value: f64,
    episodes: Vec<EpisodeRecord>,
    blowups: usize,
}

/// Roll every environment `steps` control steps under the shared policy
/// snapshot. Exploration is Gaussian in target-position space; episodes
/// that end are restarted with fresh domain randomization. Timeouts
/// bootstrap the truncated return with the critic's estimate of the
/// terminal state.
pub fn collect_rollouts(
    actor: &NetworkWeights,
    critic: &NetworkWeights,
    slots: &mut [EnvSlot],
    steps: usize,
    gamma: f64,
    explore: bool,
) -> Result<(RolloutBuffer, Vec<EpisodeRecord>, usize)> {
    let obs_dim = actor.input_dim();
    let log_std = actor
        .log_std
        .clone()
        .expect("actor must carry a log-std head");

    let trajectories: Vec<Result<EnvTrajectory>> = slots
        .par_iter_mut()
        .map(|slot| -> Result<EnvTrajectory> {
            let mut tr = EnvTrajectory {
                observations: Vec::with_capacity(steps * obs_dim),
                actions: Vec::with_capacity(steps * NUM_JOINTS),
                log_probs: Vec::with_capacity(steps),
                rewards: Vec::with_capacity(steps),
                values: Vec::with_capacity(steps),
                dones: Vec::with_capacity(steps),
                last_value: 0.0,
                episodes: Vec::new(),
                blowups: 0,
            };
            for _ in 0..steps {
                let obs = slot.env.observe();
                let mean = actor.forward(&obs.values)?;
                let value = critic.forward(&obs.values)?[0];
                let action = if explore {
                    policy::sample_action(&mean, &log_std, &mut slot.exploration)
                } else {
                    mean.clone()
                };
                let logp = policy::log_prob(&mean, &log_std, &action);

                let mut action_arr = [0.0; NUM_JOINTS];
                action_arr.copy_from_slice(&action);
                let outcome = match slot.env.step_control(&action_arr) {
                    Ok(o) => o,
                    Err(crate::error::BounderError::DynamicsBlowup { .. }) => {
                        // Treat as a fall: log, reset, keep training.
                        tr.blowups += 1;
                        tr.observations.extend_from_slice(&obs.values);
                        tr.actions.extend_from_slice(&action);
                        tr.log_probs.push(logp);
                        tr.values.push(value);
                        tr.rewards.push(0.0);
                        tr.dones.push(true);
                        tr.episodes.push(EpisodeRecord {
                            total_reward: slot.episode_return,
                            length: slot.episode_len + 1,
                            fell: true,
                        });
                        slot.begin_new_episode();
                        continue;
                    }
                    Err(e) => return Err(e),
                };

                let mut reward = outcome.reward.total;
                slot.episode_len += 1;

                let done = match outcome.termination {
                    Termination::Continue => false,
                    Termination::Fallen(_) => {
                        slot.episode_return += reward;
                        tr.episodes.push(EpisodeRecord {
                            total_reward: slot.episode_return,
                            length: slot.episode_len,
                            fell: true,
                        });
                        slot.begin_new_episode();
                        true
                    }
                    Termination::Timeout => {
                        // Truncation: bootstrap with V(s_T).
                        let terminal_obs = slot.env.peek_observation();
                        let v_term = critic.forward(&terminal_obs.values)?[0];
                        reward += gamma * v_term;
                        slot.episode_return += outcome.reward.total;
                        tr.episodes.push(EpisodeRecord {
                            total_reward: slot.episode_return,
                            length: slot.episode_len,
                            fell: false,
                        });
                        slot.begin_new_episode();
                        true
                    }
                };
                if !done {
                    slot.episode_return += reward;
                }

                tr.observations.extend_from_slice(&obs.values);
                tr.actions.extend_from_slice(&action);
                tr.log_probs.push(logp);
                tr.values.push(value);
                tr.rewards.push(reward);
                tr.dones.push(done);
            }
            // Bootstrap value for the (non-terminal) state after the
            // final step; peeked so the IMU cache still advances exactly
            // once per control step.
            let obs = slot.env.peek_observation();
            tr.last_value = critic.forward(&obs.values)?[0];
            Ok(tr)
        })
        .collect();

    let n_envs = slots.len();
    let mut buffer = RolloutBuffer {
        n_envs,
        steps,
        observations: Array2::zeros((n_envs * steps, obs_dim)),
        actions: Array2::zeros((n_envs * steps, NUM_JOINTS)),
        log_probs: vec![0.0; n_envs * steps],
        rewards: vec![0.0; n_envs * steps],
        values: vec![0.0; n_envs * steps],
        dones: vec![false; n_envs * steps],
        last_values: vec![0.0; n_envs],
        advantages: vec![0.0; n_envs * steps],
        returns: vec![0.0; n_envs * steps],
    };
    let mut episodes = Vec::new();
    let mut blowups = 0;
    for (env, tr) in trajectories.into_iter().enumerate() {
        let tr = tr?;
        for t in 0..steps {
            let row = buffer.row(env, t);
            buffer
                .observations
                .row_mut(row)
                .iter_mut()
                .zip(&tr.observations[t * obs_dim..(t + 1) * obs_dim])
                .for_each(|(dst, src)| *dst = *src);
            buffer
                .actions
                .row_mut(row)
                .iter_mut()
                .zip(&tr.actions[t * NUM_JOINTS..(t + 1) * NUM_JOINTS])
                .for_each(|(dst, src)| *dst = *src);
            buffer.log_probs[row] = tr.log_probs[t];
            buffer.rewards[row] = tr.rewards[t];
            buffer.values[row] = tr.values[t];
            buffer.dones[row] = tr.dones[t];
        }
        buffer.last_values[env] = tr.last_value;
        episodes.extend(tr.episodes);
        blowups += tr.blowups;
    }
    Ok((buffer, episodes, blowups))
}

/// Generalized advantage estimation over the buffer, followed by global
/// normalization of the advantages to zero mean and unit variance.
/// Returns are advantages + values (computed before normalization).
pub fn compute_gae(buffer: &mut RolloutBuffer, gamma: f64, lambda: f64) {
    for env in 0..buffer.n_envs {
        let mut acc = 0.0;
        for t in (0..buffer.steps).rev() {
            let row = buffer.row(env, t);
            let not_done = if buffer.dones[row] { 0.0 } else { 1.0 };
            let next_value = if t + 1 < buffer.steps {
                buffer.values[buffer.row(env, t + 1)]
            } else {
                buffer.last_values[env]
            };
            let delta =
                buffer.rewards[row] + gamma * next_value * not_done - buffer.values[row];
            acc = delta + gamma * lambda * not_done * acc;
            buffer.advantages[row] = acc;
            buffer.returns[row] = acc + buffer.values[row];
        }
    }

    let n = buffer.len() as f64;
    let mean = buffer.advantages.iter().sum::<f64>() / n;
    let var = buffer
        .advantages
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if std > 1e-12 {
        for a in &mut buffer.advantages {
            *a = (*a - mean) / std;
        }
    } else {
        for a in &mut buffer.advantages {
            *a -= mean;
        }
    }
}
