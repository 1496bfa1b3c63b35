//! Rollout storage and generalized advantage estimation.

use crate::env::{AdversaryEnv, Observation};
use crate::error::{Error, Result};
use crate::nn::dist::{categorical_sample, log_softmax};
use crate::nn::ActorCriticNet;
use crate::rng::SeedStream;

/// Parallel arrays of one rollout's transitions plus the computed
/// advantage and return arrays.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub observations: Vec<Observation>,
    pub actions: Vec<usize>,
    pub log_probs_old: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Critic estimate at the observation after the last transition; used
    /// for bootstrapping only when that transition is not terminal.
    pub bootstrap_value: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Digest over everything the policy update consumes.
    pub fn digest(&self) -> String {
        let mut nums: Vec<f64> = Vec::new();
        nums.extend(self.actions.iter().map(|&a| a as f64));
        nums.extend(&self.log_probs_old);
        nums.extend(&self.values);
        nums.extend(&self.rewards);
        nums.extend(self.dones.iter().map(|&d| if d { 1.0 } else { 0.0 }));
        for obs in &self.observations {
            nums.extend(obs.data());
        }
        crate::digest::f64_digest(&nums)
    }
}

/// Fills a buffer by stepping the environment with the acting network.
/// Episodes auto-reset on termination.
pub fn collect_rollouts(
    env: &mut AdversaryEnv,
    net: &ActorCriticNet,
    n_steps: usize,
    rng: &mut SeedStream,
) -> Result<RolloutBuffer> {
    if n_steps < 1 {
        return Err(Error::Contract("n_steps must be >= 1".into()));
    }
    let mut buf = RolloutBuffer::default();
    let mut obs = env.observe();
    for _ in 0..n_steps {
        let (logits, value, _) = net.forward(obs.data())?;
        let log_probs = log_softmax(&logits)?;
        let probs: Vec<f64> = log_probs.iter().map(|&l| l.exp()).collect();
        let action = categorical_sample(&probs, rng)?;
        let (_post_obs, reward, done) = env.step(action)?;
        buf.observations.push(obs);
        buf.actions.push(action);
        buf.log_probs_old.push(log_probs[action]);
        buf.values.push(value);
        buf.rewards.push(reward);
        buf.dones.push(done);
        obs = if done { env.reset()? } else { env.observe() };
    }
    buf.bootstrap_value = if *buf.dones.last().unwrap() {
        0.0
    } else {
        net.forward(obs.data())?.1
    };
    Ok(buf)
}

/// Backward GAE recursion. `bootstrap_value` is used only when the final
/// transition is not terminal; no advantage leaks across `done = true`.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Contract(format!(
            "length mismatch: rewards {n}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let nonterminal = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n {
            values[t + 1]
        } else {
            bootstrap_value
        };
        let delta = rewards[t] + gamma * next_value * nonterminal - values[t];
        carry = delta + gamma * lambda * nonterminal * carry;
        advantages[t] = carry;
    }
    let returns = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    Ok((advantages, returns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, EpisodeMode, PolicyProfile, ProfileKind};

    fn test_env(mode: EpisodeMode) -> AdversaryEnv {
        let mut cfg = EnvConfig::default();
        cfg.episode = mode;
        AdversaryEnv::new(cfg, PolicyProfile::preset(ProfileKind::Robust), 17).unwrap()
    }

    fn test_net(rng: &mut SeedStream) -> ActorCriticNet {
        ActorCriticNet::new_mlp(crate::env::FEATURE_DIM, 9, rng).unwrap()
    }

    #[test]
    fn single_step_mode_fills_all_done() {
        let mut rng = SeedStream::new(1);
        let net = test_net(&mut rng);
        let mut env = test_env(EpisodeMode::Single);
        let buf = collect_rollouts(&mut env, &net, 4, &mut rng).unwrap();
        assert_eq!(buf.len(), 4);
        assert!(buf.dones.iter().all(|&d| d));
    }

    #[test]
    fn multi_step_mode_done_pattern() {
        let mut rng = SeedStream::new(1);
        let net = test_net(&mut rng);
        let mut env = test_env(EpisodeMode::Multi(2));
        let buf = collect_rollouts(&mut env, &net, 4, &mut rng).unwrap();
        assert_eq!(buf.dones, vec![false, true, false, true]);
        assert_eq!(buf.rewards[0], 0.0);
        assert_eq!(buf.rewards[2], 0.0);
    }

    #[test]
    fn collection_is_deterministic() {
        let run = || {
            let mut rng = SeedStream::new(5);
            let net = test_net(&mut rng);
            let mut env = test_env(EpisodeMode::Single);
            collect_rollouts(&mut env, &net, 16, &mut rng).unwrap().digest()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_steps_is_contract_error() {
        let mut rng = SeedStream::new(1);
        let net = test_net(&mut rng);
        let mut env = test_env(EpisodeMode::Single);
        assert!(collect_rollouts(&mut env, &net, 0, &mut rng).is_err());
    }

    #[test]
    fn single_terminal_step_gae() {
        let (adv, ret) = compute_gae(&[1.0], &[0.3], &[true], 0.0, 0.99, 0.95).unwrap();
        assert!((adv[0] - 0.7).abs() < 1e-15);
        assert!((ret[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_reduces_to_td_error() {
        let rewards = [1.0, -0.5, 2.0];
        let values = [0.2, 0.4, -0.1];
        let dones = [false, false, true];
        let gamma = 0.9;
        let (adv, _) = compute_gae(&rewards, &values, &dones, 0.7, gamma, 0.0).unwrap();
        for t in 0..3 {
            let next = if dones[t] {
                0.0
            } else if t + 1 < 3 {
                values[t + 1]
            } else {
                0.7
            };
            let delta = rewards[t] + gamma * next - values[t];
            assert!((adv[t] - delta).abs() < 1e-15, "t = {t}");
        }
    }

    /// Brute-force double-loop oracle: A_t = sum_k (gamma * lambda)^k
    /// delta_{t+k}, truncated at episode boundaries.
    pub fn gae_oracle(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        bootstrap: f64,
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let n = rewards.len();
        let delta = |t: usize| -> f64 {
            let next = if dones[t] {
                0.0
            } else if t + 1 < n {
                values[t + 1]
            } else {
                bootstrap
            };
            rewards[t] + gamma * next - values[t]
        };
        (0..n)
            .map(|t| {
                let mut acc = 0.0;
                let mut w = 1.0;
                for k in t..n {
                    acc += w * delta(k);
                    if dones[k] {
                        break;
                    }
                    w *= gamma * lambda;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn gae_matches_double_loop_oracle() {
        let mut rng = SeedStream::new(2024);
        for _ in 0..100 {
            let n = 1 + rng.next_below(10);
            let rewards: Vec<f64> = (0..n).map(|_| rng.next_normal() * 5.0).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
            let dones: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.3).collect();
            let bootstrap = rng.next_normal();
            let (adv, ret) =
                compute_gae(&rewards, &values, &dones, bootstrap, 0.99, 0.95).unwrap();
            let oracle = gae_oracle(&rewards, &values, &dones, bootstrap, 0.99, 0.95);
            for t in 0..n {
                assert!((adv[t] - oracle[t]).abs() <= 1e-10, "t = {t}");
                assert!((ret[t] - (adv[t] + values[t])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        assert!(compute_gae(&[1.0, 2.0], &[0.0], &[true, false], 0.0, 0.99, 0.95).is_err());
    }
}
