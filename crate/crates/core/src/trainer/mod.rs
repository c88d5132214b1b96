//! PPO fine-tuning of the pre-fitted actor.
//!
//! Synchronous on-policy training: collect rollouts from parallel
//! environments under an immutable policy snapshot, estimate advantages
//! with GAE, then run clipped-surrogate updates on the actor and a
//! squared-error update on the critic.

pub mod domain_rand;
pub mod rollout;

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use crate::env::EnvParams;
use crate::error::{BounderError, Result};
use crate::neural::{
    backprop, csv_io, optimizer_step, policy, Gradients, MlpSpec, NetworkWeights, OptimizerState,
};
use crate::rng::{Role, Stream};
use crate::robot::{RobotModel, NUM_JOINTS};
use crate::sim::Terrain;

pub use domain_rand::{randomize_domain, DomainRandomizationConfig};
pub use rollout::{collect_rollouts, compute_gae, EnvSlot, EpisodeRecord, RolloutBuffer};

/// PPO hyperparameters. The published setup fixes the discounted
/// objective, 160 parallel environments and the iteration budget; the
/// remaining values are standard clipped-surrogate practice with a small
/// actor learning rate to protect the pre-fitted behavior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub n_envs: usize,
    pub rollout_length: usize,
    pub iterations: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub checkpoint_interval: usize,
    pub init_action_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            epochs: 4,
            minibatch_size: 4096,
            learning_rate: 1e-4,
            n_envs: 160,
            rollout_length: 400,
            iterations: 4000,
            value_coef: 0.5,
            entropy_coef: 0.0,
            checkpoint_interval: 100,
            init_action_std: 0.1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(BounderError::Config("ppo.gamma must be in (0, 1]".into()));
        }
        if !(self.clip_epsilon > 0.0) {
            return Err(BounderError::Config("ppo.clip_epsilon must be > 0".into()));
        }
        if self.n_envs == 0 || self.rollout_length == 0 {
            return Err(BounderError::Config(
                "ppo.n_envs and ppo.rollout_length must be >= 1".into(),
            ));
        }
        if self.minibatch_size == 0 || self.epochs == 0 {
            return Err(BounderError::Config(
                "ppo.minibatch_size and ppo.epochs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostics of one PPO update.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// A minibatch view used by the PPO loss.
pub struct PpoBatch<'a> {
    pub observations: &'a Array2<f64>,
    pub actions: &'a Array2<f64>,
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

/// Total PPO loss (policy + value_coef * value - entropy_coef * entropy)
/// for a batch, without gradients. Shares no state with the gradient
/// path beyond the forward passes.
pub fn ppo_total_loss(
    actor: &NetworkWeights,
    critic: &NetworkWeights,
    batch: &PpoBatch<'_>,
    cfg: &PpoConfig,
) -> f64 {
    let n = batch.old_log_probs.len();
    let means = actor.forward_batch(batch.observations);
    let values = critic.forward_batch(batch.observations);
    let log_std = actor.log_std.as_ref().expect("actor log-std");

    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;
    for s in 0..n {
        let mean_row: Vec<f64> = means.row(s).to_vec();
        let action_row: Vec<f64> = batch.actions.row(s).to_vec();
        let lp = policy::log_prob(&mean_row, log_std, &action_row);
        let ratio = (lp - batch.old_log_probs[s]).exp();
        let adv = batch.advantages[s];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv;
        policy_loss -= unclipped.min(clipped);
        let err = batch.returns[s] - values[(s, 0)];
        value_loss += err * err;
    }
    policy_loss /= n as f64;
    value_loss /= n as f64;
    let entropy = policy::entropy(log_std);
    policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
}

/// PPO loss with analytic gradients for both networks.
pub fn ppo_loss_and_grads(
    actor: &NetworkWeights,
    critic: &NetworkWeights,
    batch: &PpoBatch<'_>,
    cfg: &PpoConfig,
) -> (UpdateDiagnostics, Gradients, Gradients) {
    let n = batch.old_log_probs.len();
    let nf = n as f64;
    let log_std = actor.log_std.as_ref().expect("actor log-std");
    let action_dim = actor.output_dim();

    let actor_cache = actor.forward_cached(batch.observations);
    let critic_cache = critic.forward_cached(batch.observations);
    let means = actor_cache.output();
    let values = critic_cache.output();

    let mut dl_dmean = Array2::zeros((n, action_dim));
    let mut dl_dlogstd = Array1::zeros(action_dim);
    let mut dl_dvalue = Array2::zeros((n, 1));
    let mut diag = UpdateDiagnostics::default();
    let mut clipped_count = 0usize;

    for s in 0..n {
        let mean_row: Vec<f64> = means.row(s).to_vec();
        let action_row: Vec<f64> = batch.actions.row(s).to_vec();
        let lp = policy::log_prob(&mean_row, log_std, &action_row);
        let ratio = (lp - batch.old_log_probs[s]).exp();
        let adv = batch.advantages[s];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv;
        diag.policy_loss -= unclipped.min(clipped);
        diag.approx_kl += batch.old_log_probs[s] - lp;
        if (ratio - 1.0).abs() > cfg.clip_epsilon {
            clipped_count += 1;
        }

        // Gradient flows only through the unclipped branch when it is
        // the minimum (ties included: min picks the unclipped side).
        if unclipped <= clipped {
            let coef = -adv * ratio / nf;
            let dmean = policy::dlogp_dmean(&mean_row, log_std, &action_row);
            for j in 0..action_dim {
                dl_dmean[(s, j)] = coef * dmean[j];
            }
            let dstd = policy::dlogp_dlogstd(&mean_row, log_std, &action_row);
            for j in 0..action_dim {
                dl_dlogstd[j] += coef * dstd[j];
            }
        }

        let err = batch.returns[s] - values[(s, 0)];
        diag.value_loss += err * err;
        dl_dvalue[(s, 0)] = cfg.value_coef * (-2.0) * err / nf;
    }

    diag.policy_loss /= nf;
    diag.value_loss /= nf;
    diag.approx_kl /= nf;
    diag.clip_fraction = clipped_count as f64 / nf;
    diag.entropy = policy::entropy(log_std);

    // Entropy bonus: d(-c_e * H)/d(log_std_j) = -c_e.
    dl_dlogstd -= cfg.entropy_coef;

    let mut actor_grads = backprop(actor, &actor_cache, &dl_dmean);
    actor_grads.log_std = Some(dl_dlogstd);
    let critic_grads = backprop(critic, &critic_cache, &dl_dvalue);
    (diag, actor_grads, critic_grads)
}

/// One PPO update over the buffer: `epochs` passes of shuffled
/// minibatches (the final partial minibatch is included).
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    actor: &mut NetworkWeights,
    critic: &mut NetworkWeights,
    actor_opt: &mut OptimizerState,
    critic_opt: &mut OptimizerState,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    shuffle: &mut Stream,
) -> Result<UpdateDiagnostics> {
    let n = buffer.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut diag_acc = UpdateDiagnostics::default();
    let mut batches = 0usize;

    for _ in 0..cfg.epochs {
        // Fisher-Yates with the trainer's seeded stream.
        for i in (1..n).rev() {
            let j = (shuffle.next_u64() % ((i + 1) as u64)) as usize;
            order.swap(i, j);
        }
        let mut start = 0;
        while start < n {
            let end = (start + cfg.minibatch_size).min(n);
            let idx = &order[start..end];
            let obs = gather_rows(&buffer.observations, idx);
            let actions = gather_rows(&buffer.actions, idx);
            let old_lp: Vec<f64> = idx.iter().map(|&i| buffer.log_probs[i]).collect();
            let adv: Vec<f64> = idx.iter().map(|&i| buffer.advantages[i]).collect();
            let ret: Vec<f64> = idx.iter().map(|&i| buffer.returns[i]).collect();
            let batch = PpoBatch {
                observations: &obs,
                actions: &actions,
                old_log_probs: &old_lp,
                advantages: &adv,
                returns: &ret,
            };
            let (diag, actor_grads, critic_grads) = ppo_loss_and_grads(actor, critic, &batch, cfg);
            if !diag.policy_loss.is_finite()
                || !diag.value_loss.is_finite()
                || !actor_grads.is_finite()
                || !critic_grads.is_finite()
            {
                return Err(BounderError::Numerical(
                    "non-finite PPO loss or gradient".into(),
                ));
            }
            optimizer_step(actor_opt, actor, &actor_grads);
            optimizer_step(critic_opt, critic, &critic_grads);

            diag_acc.policy_loss += diag.policy_loss;
            diag_acc.value_loss += diag.value_loss;
            diag_acc.entropy += diag.entropy;
            diag_acc.clip_fraction += diag.clip_fraction;
            diag_acc.approx_kl += diag.approx_kl;
            batches += 1;
            start = end;
        }
    }
    let b = batches as f64;
    diag_acc.policy_loss /= b;
    diag_acc.value_loss /= b;
    diag_acc.entropy /= b;
    diag_acc.clip_fraction /= b;
    diag_acc.approx_kl /= b;
    Ok(diag_acc)
}

fn gather_rows(src: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), src.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&src.row(i));
    }
    out
}

/// Everything `train` needs beyond the PPO hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub env_params: EnvParams,
    pub base_model: RobotModel,
    pub base_terrain: Terrain,
    pub domain_randomization: DomainRandomizationConfig,
    pub actor_spec: MlpSpec,
    pub critic_spec: MlpSpec,
    pub master_seed: u64,
    /// Pre-fitted actor weights; random initialization when absent.
    pub init_actor: Option<NetworkWeights>,
    pub out_dir: PathBuf,
    /// Hash of the resolved run config, recorded in checkpoint metadata.
    pub config_hash: u64,
}

/// One reward-curve row.
#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_episode_reward: f64,
    pub mean_episode_length: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub episodes_completed: usize,
    pub blowups: usize,
}

/// Output of a training run.
pub struct TrainOutput {
    pub actor: NetworkWeights,
    pub critic: NetworkWeights,
    pub reward_curve: Vec<IterationStats>,
    pub final_checkpoint: PathBuf,
}

/// Run the synchronous PPO loop: collect, GAE, update, checkpoint.
pub fn train(setup: &TrainSetup, cfg: &PpoConfig, quiet: bool) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut actor = match &setup.init_actor {
        Some(w) => {
            let mut w = w.clone();
            if w.log_std.is_none() {
                w = w.with_action_std(cfg.init_action_std);
            }
            w
        }
        None => {
            let mut stream = Stream::derived(setup.master_seed, Role::NetworkInit, 0);
            NetworkWeights::init(&setup.actor_spec, &mut stream)
                .with_action_std(cfg.init_action_std)
        }
    };
    if actor.input_dim() != setup.actor_spec.input_dim()
        || actor.output_dim() != NUM_JOINTS
    {
        return Err(BounderError::Dimension {
            expected: setup.actor_spec.input_dim(),
            got: actor.input_dim(),
            context: "actor weights vs configured observation width".into(),
        });
    }
    // The critic is always randomly initialized; pre-fitting covers the
    // actor only.
    let mut critic = {
        let mut stream = Stream::derived(setup.master_seed, Role::NetworkInit, 1);
        NetworkWeights::init(&setup.critic_spec, &mut stream)
    };

    let mut actor_opt = OptimizerState::adam(cfg.learning_rate);
    let mut critic_opt = OptimizerState::adam(cfg.learning_rate);

    let mut slots: Vec<EnvSlot> = (0..cfg.n_envs)
        .map(|i| {
            EnvSlot::new(
                setup.env_params.clone(),
                setup.base_model.clone(),
                setup.base_terrain.clone(),
                setup.domain_randomization,
                setup.master_seed,
                i as u64,
            )
        })
        .collect();

    let checkpoints_dir = setup.out_dir.join("checkpoints");
    std::fs::create_dir_all(&checkpoints_dir)
        .map_err(|e| BounderError::io(checkpoints_dir.display().to_string(), e))?;

    let mut reward_curve = Vec::with_capacity(cfg.iterations);
    let mut last_reward = f64::NAN;
    let mut last_len = f64::NAN;

    for iteration in 0..cfg.iterations {
        let snapshot = (actor.clone(), critic.clone(), actor_opt.clone(), critic_opt.clone());

        let (mut buffer, episodes, blowups) = collect_rollouts(
            &actor,
            &critic,
            &mut slots,
            cfg.rollout_length,
            cfg.gamma,
            true,
        )?;
        compute_gae(&mut buffer, cfg.gamma, cfg.gae_lambda);

        let mut shuffle = Stream::derived(
            setup.master_seed,
            Role::MinibatchShuffle,
            iteration as u64,
        );
        let diag = match ppo_update(
            &mut actor,
            &mut critic,
            &mut actor_opt,
            &mut critic_opt,
            &buffer,
            cfg,
            &mut shuffle,
        ) {
            Ok(d) => d,
            Err(e) => {
                // Restore the snapshot and keep going.
                actor = snapshot.0;
                critic = snapshot.1;
                actor_opt = snapshot.2;
                critic_opt = snapshot.3;
                if !quiet {
                    println!("iter={iteration} update aborted: {e}");
                }
                UpdateDiagnostics::default()
            }
        };

        if !episodes.is_empty() {
            last_reward =
                episodes.iter().map(|e| e.total_reward).sum::<f64>() / episodes.len() as f64;
            last_len =
                episodes.iter().map(|e| e.length as f64).sum::<f64>() / episodes.len() as f64;
        }
        let stats = IterationStats {
            iteration,
            mean_episode_reward: last_reward,
            mean_episode_length: last_len,
            clip_fraction: diag.clip_fraction,
            approx_kl: diag.approx_kl,
            episodes_completed: episodes.len(),
            blowups,
        };
        if !quiet {
            println!(
                "iter={} reward={:.3} ep_len={:.1} clip_frac={:.3}",
                iteration, stats.mean_episode_reward, stats.mean_episode_length,
                stats.clip_fraction
            );
        }
        reward_curve.push(stats);

        if cfg.checkpoint_interval > 0 && (iteration + 1) % cfg.checkpoint_interval == 0 {
            write_checkpoint(
                &checkpoints_dir,
                iteration + 1,
                &actor,
                &critic,
                setup,
            )?;
        }
    }

    let final_checkpoint =
        write_checkpoint(&checkpoints_dir, cfg.iterations, &actor, &critic, setup)?;

    Ok(TrainOutput {
        actor,
        critic,
        reward_curve,
        final_checkpoint,
    })
}

/// Write a checkpoint directory: actor/critic weight CSVs plus a plain
/// metadata file.
fn write_checkpoint(
    dir: &Path,
    iteration: usize,
    actor: &NetworkWeights,
    critic: &NetworkWeights,
    setup: &TrainSetup,
) -> Result<PathBuf> {
    let path = dir.join(format!("iter_{iteration:06}"));
    std::fs::create_dir_all(&path).map_err(|e| BounderError::io(path.display().to_string(), e))?;
    csv_io::export_csv(actor, &path.join("actor.csv"))?;
    csv_io::export_csv(critic, &path.join("critic.csv"))?;
    let meta = format!(
        "iteration = {}\nconfig_hash = {:016x}\nmaster_seed = {}\n",
        iteration, setup.config_hash, setup.master_seed
    );
    let meta_path = path.join("meta.txt");
    std::fs::write(&meta_path, meta)
        .map_err(|e| BounderError::io(meta_path.display().to_string(), e))?;
    Ok(path)
}

/// Write the reward curve CSV.
pub fn write_reward_curve(path: &Path, curve: &[IterationStats]) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from(
        "iteration,mean_episode_reward,mean_episode_length,clip_fraction,approx_kl,episodes_completed,blowups\n",
    );
    for s in curve {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.iteration,
            s.mean_episode_reward,
            s.mean_episode_length,
            s.clip_fraction,
            s.approx_kl,
            s.episodes_completed,
            s.blowups
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| BounderError::io(path.display().to_string(), e))
}
