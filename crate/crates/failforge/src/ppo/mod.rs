//! PPO training loop for the adversary: rollout collection, GAE, clipped
//! surrogate updates over shuffled minibatch epochs, and snapshot
//! production.

pub mod buffer;
pub mod loss;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::digest::json_digest;
use crate::env::{catalog_hash, AdversaryEnv, EnvConfig, ObsMode, PolicyProfile};
use crate::error::{Error, Result};
use crate::nn::adam::{adam_step, clip_global_norm, AdamState};
use crate::nn::dist::{entropy, softmax};
use crate::nn::snapshot::PolicySnapshot;
use crate::nn::ActorCriticNet;
use crate::rng::SeedStream;

pub use buffer::{collect_rollouts, compute_gae, RolloutBuffer};
pub use loss::{batch_loss_and_grads, normalize_advantages, ppo_clip_loss, total_objective, value_loss, BatchSample};

/// PPO hyperparameters. Defaults follow the reference configuration:
/// lr 3e-4, 2048-step rollouts, batch 64, 10 epochs, gamma 0.99,
/// lambda 0.95, ent_coef 0, vf_coef 0.5, max_grad_norm 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub n_steps: usize,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub clip_eps: f64,
    pub total_steps: usize,
    pub seed: u64,
    pub advantage_normalization: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            n_steps: 2048,
            batch_size: 64,
            n_epochs: 10,
            gamma: 0.99,
            lambda: 0.95,
            ent_coef: 0.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            clip_eps: 0.2,
            total_steps: 50_000,
            seed: 0,
            advantage_normalization: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("train.gamma", "must lie in [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("train.lambda", "must lie in [0,1]"));
        }
        if self.clip_eps <= 0.0 {
            return Err(Error::config("train.clip_eps", "must be > 0"));
        }
        if self.n_steps < 1 || self.batch_size < 1 {
            return Err(Error::config("train", "n_steps and batch_size must be >= 1"));
        }
        if self.n_steps % self.batch_size != 0 {
            return Err(Error::config(
                "train.batch_size",
                format!("must divide n_steps ({})", self.n_steps),
            ));
        }
        if self.total_steps < 1 {
            return Err(Error::config("train.total_steps", "must be >= 1"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::config("train.learning_rate", "must be > 0"));
        }
        Ok(())
    }
}

/// One row per update iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: usize,
    pub mean_episode_reward: f64,
    pub failure_rate: f64,
    pub l_clip: f64,
    pub l_vf: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub policy_entropy: f64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Collection ran in parallel (changes transition order). This build
    /// collects sequentially; the flag is recorded for reproducibility.
    pub parallel_collection: bool,
    pub records: Vec<TrainRecord>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,mean_episode_reward,failure_rate,l_clip,l_vf,entropy,grad_norm,policy_entropy,wall_clock_s\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.iteration,
                r.mean_episode_reward,
                r.failure_rate,
                r.l_clip,
                r.l_vf,
                r.entropy,
                r.grad_norm,
                r.policy_entropy,
                r.wall_clock_s
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub iteration: usize,
    pub reason: String,
}

/// Training output. On a non-finite loss the loop aborts cleanly:
/// `snapshot` is the last iteration that completed with finite losses and
/// `aborted` carries the diagnostic.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub snapshot: PolicySnapshot,
    pub log: TrainingLog,
    pub aborted: Option<AbortInfo>,
}

/// Trains a fresh adversary for the given environment and policy under
/// test. Fully deterministic in `(configs, seed)`.
pub fn train(
    train_config: &TrainConfig,
    env_config: &EnvConfig,
    profile: &PolicyProfile,
    seed: u64,
) -> Result<TrainResult> {
    train_config.validate()?;
    env_config.validate()?;
    profile.validate()?;
    let mut init_rng = SeedStream::derive(seed, &[0x494E_4954]); // "INIT"
    let n_actions = env_config.catalog.len();
    let net = match env_config.observation {
        ObsMode::Features => ActorCriticNet::new_mlp(crate::env::FEATURE_DIM, n_actions, &mut init_rng)?,
        ObsMode::Raster => ActorCriticNet::new_desk_cnn(
            crate::env::RASTER_CHANNELS,
            crate::env::RASTER_SIZE,
            crate::env::RASTER_SIZE,
            n_actions,
            &mut init_rng,
        )?,
    };
    train_from_net(train_config, env_config, profile, seed, net)
}

/// Like [`train`] but starting from a given network (resume or tests).
pub fn train_from_net(
    train_config: &TrainConfig,
    env_config: &EnvConfig,
    profile: &PolicyProfile,
    seed: u64,
    mut net: ActorCriticNet,
) -> Result<TrainResult> {
    train_config.validate()?;
    let start = Instant::now();
    let mut rng = SeedStream::derive(seed, &[0x5452_4149_4E]); // "TRAIN"
    let env_seed = SeedStream::derive(seed, &[0x454E_56]).state(); // "ENV"
    let mut env = AdversaryEnv::new(env_config.clone(), *profile, env_seed)?;
    let mut adam = AdamState::new(net.param_count());
    let catalog_digest = catalog_hash(&env_config.catalog);
    let config_digest = json_digest(&(train_config, env_config, profile));
    let snapshot_of = |net: &ActorCriticNet| {
        PolicySnapshot::from_net(net, catalog_digest.clone(), config_digest.clone(), seed)
    };

    let mut log = TrainingLog {
        parallel_collection: false,
        records: Vec::new(),
    };
    let mut last_good = snapshot_of(&net);
    let canonical_obs = env.observe();

    let mut steps_done = 0usize;
    let mut iteration = 0usize;
    while steps_done < train_config.total_steps {
        iteration += 1;
        let result = run_iteration(&mut net, &mut env, &mut adam, train_config, &mut rng);
        let stats = match result {
            Ok(stats) => stats,
            Err(Error::Numeric(reason)) => {
                log::warn!("aborting at iteration {iteration}: {reason}");
                return Ok(TrainResult {
                    snapshot: last_good,
                    log,
                    aborted: Some(AbortInfo { iteration, reason }),
                });
            }
            Err(e) => return Err(e),
        };
        steps_done += train_config.n_steps;
        last_good = snapshot_of(&net);
        let policy_entropy = {
            let (logits, _, _) = net.forward(canonical_obs.data())?;
            entropy(&softmax(&logits)?)?
        };
        log.records.push(TrainRecord {
            iteration,
            mean_episode_reward: stats.mean_episode_reward,
            failure_rate: stats.failure_rate,
            l_clip: stats.l_clip,
            l_vf: stats.l_vf,
            entropy: stats.entropy,
            grad_norm: stats.grad_norm,
            policy_entropy,
            wall_clock_s: start.elapsed().as_secs_f64(),
        });
        log::debug!(
            "iter {iteration}: reward {:.2}, failure rate {:.3}, entropy {:.3}",
            stats.mean_episode_reward,
            stats.failure_rate,
            policy_entropy
        );
    }
    Ok(TrainResult {
        snapshot: last_good,
        log,
        aborted: None,
    })
}

struct IterationStats {
    mean_episode_reward: f64,
    failure_rate: f64,
    l_clip: f64,
    l_vf: f64,
    entropy: f64,
    grad_norm: f64,
}

fn run_iteration(
    net: &mut ActorCriticNet,
    env: &mut AdversaryEnv,
    adam: &mut AdamState,
    cfg: &TrainConfig,
    rng: &mut SeedStream,
) -> Result<IterationStats> {
    let buf = collect_rollouts(env, net, cfg.n_steps, rng)?;
    let (advantages, returns) = compute_gae(
        &buf.rewards,
        &buf.values,
        &buf.dones,
        buf.bootstrap_value,
        cfg.gamma,
        cfg.lambda,
    )?;

    let episode_rewards: Vec<f64> = buf
        .rewards
        .iter()
        .zip(&buf.dones)
        .filter(|(_, &d)| d)
        .map(|(&r, _)| r)
        .collect();
    let mean_episode_reward = if episode_rewards.is_empty() {
        0.0
    } else {
        episode_rewards.iter().sum::<f64>() / episode_rewards.len() as f64
    };
    let failure_rate = if episode_rewards.is_empty() {
        0.0
    } else {
        episode_rewards.iter().filter(|&&r| r == 1000.0).count() as f64
            / episode_rewards.len() as f64
    };

    let mut indices: Vec<usize> = (0..buf.len()).collect();
    let mut l_clip_acc = 0.0;
    let mut l_vf_acc = 0.0;
    let mut entropy_acc = 0.0;
    let mut grad_norm_acc = 0.0;
    let mut batches = 0usize;
    for _ in 0..cfg.n_epochs {
        rng.shuffle(&mut indices);
        for chunk in indices.chunks(cfg.batch_size) {
            let mut batch_advantages: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();
            if cfg.advantage_normalization {
                normalize_advantages(&mut batch_advantages);
            }
            let samples: Vec<BatchSample<'_>> = chunk
                .iter()
                .zip(&batch_advantages)
                .map(|(&i, &adv)| BatchSample {
                    obs: &buf.observations[i],
                    action: buf.actions[i],
                    log_prob_old: buf.log_probs_old[i],
                    advantage: adv,
                    ret: returns[i],
                })
                .collect();
            let eval = batch_loss_and_grads(net, &samples, cfg.clip_eps, cfg.vf_coef, cfg.ent_coef)?;
            let mut flat = eval.grads.to_flat();
            let norm = clip_global_norm(&mut flat, cfg.max_grad_norm);
            let mut params = net.to_flat();
            adam_step(&mut params, &flat, adam, cfg.learning_rate)?;
            net.apply_flat(&params)?;
            l_clip_acc += eval.l_clip;
            l_vf_acc += eval.l_vf;
            entropy_acc += eval.entropy;
            grad_norm_acc += norm;
            batches += 1;
        }
    }
    let b = batches.max(1) as f64;
    Ok(IterationStats {
        mean_episode_reward,
        failure_rate,
        l_clip: l_clip_acc / b,
        l_vf: l_vf_acc / b,
        entropy: entropy_acc / b,
        grad_norm: grad_norm_acc / b,
    })
}
