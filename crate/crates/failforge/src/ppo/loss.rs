//! The clipped-surrogate objective, value loss, entropy bonus, and their
//! exact gradients wrt the network parameters.

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::dist::{entropy_with_grad, log_softmax};
use crate::nn::{ActorCriticGrads, ActorCriticNet};

/// Mean over the batch of `min(r * A, clip(r, 1 - eps, 1 + eps) * A)`
/// with `r = exp(log_new - log_old)`.
pub fn ppo_clip_loss(
    log_probs_new: &[f64],
    log_probs_old: &[f64],
    advantages: &[f64],
    clip_eps: f64,
) -> Result<f64> {
    let n = log_probs_new.len();
    if log_probs_old.len() != n || advantages.len() != n {
        return Err(Error::Contract("clip loss length mismatch".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let ratio = (log_probs_new[i] - log_probs_old[i]).exp();
        if !ratio.is_finite() {
            return Err(Error::Numeric(format!("non-finite ratio at index {i}")));
        }
        let unclipped = ratio * advantages[i];
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantages[i];
        total += unclipped.min(clipped);
    }
    Ok(total / n as f64)
}

/// Mean squared error between critic values and returns.
pub fn value_loss(values: &[f64], returns: &[f64]) -> Result<f64> {
    if values.len() != returns.len() {
        return Err(Error::Contract("value loss length mismatch".into()));
    }
    let n = values.len() as f64;
    Ok(values
        .iter()
        .zip(returns)
        .map(|(v, r)| (v - r) * (v - r))
        .sum::<f64>()
        / n)
}

/// The ascended objective `L = L_clip - c1 * L_vf + c2 * H`. Training
/// descends `-L`.
pub fn total_objective(l_clip: f64, l_vf: f64, entropy: f64, c1: f64, c2: f64) -> f64 {
    l_clip - c1 * l_vf + c2 * entropy
}

/// One minibatch element, referencing buffer storage.
#[derive(Debug, Clone, Copy)]
pub struct BatchSample<'a> {
    pub obs: &'a Observation,
    pub action: usize,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Loss components and exact parameter gradients of the descended loss
/// `-L` over one minibatch.
#[derive(Debug, Clone)]
pub struct BatchEval {
    /// The descended scalar, `-(L_clip - c1 L_vf + c2 H)`.
    pub loss: f64,
    pub l_clip: f64,
    pub l_vf: f64,
    pub entropy: f64,
    pub grads: ActorCriticGrads,
}

/// Evaluates the full objective and its gradient over a minibatch.
///
/// Gradients are assembled analytically: for the clip term the derivative
/// wrt the selected action's new log-probability is `r * A` on the
/// unclipped branch and 0 where the clip binds, chained through
/// `d log_softmax / d logits = e_a - p`.
pub fn batch_loss_and_grads(
    net: &ActorCriticNet,
    samples: &[BatchSample<'_>],
    clip_eps: f64,
    vf_coef: f64,
    ent_coef: f64,
) -> Result<BatchEval> {
    if samples.is_empty() {
        return Err(Error::Contract("empty minibatch".into()));
    }
    let m = samples.len() as f64;
    let mut grads = ActorCriticGrads::zeros_like(net);
    let mut l_clip = 0.0;
    let mut l_vf = 0.0;
    let mut entropy_sum = 0.0;
    for s in samples {
        let (logits, value, cache) = net.forward(s.obs.data())?;
        let log_p = log_softmax(&logits)?;
        let p: Vec<f64> = log_p.iter().map(|&l| l.exp()).collect();
        if s.action >= p.len() {
            return Err(Error::Contract(format!("action {} out of range", s.action)));
        }
        let ratio = (log_p[s.action] - s.log_prob_old).exp();
        if !ratio.is_finite() {
            return Err(Error::Numeric("non-finite probability ratio".into()));
        }
        let unclipped = ratio * s.advantage;
        let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * s.advantage;
        l_clip += unclipped.min(clipped) / m;
        // d L_clip / d log_p_new: active only on the unclipped branch.
        let d_lpn = (if unclipped <= clipped { unclipped } else { 0.0 }) / m;

        let (h, dh_dlogits) = entropy_with_grad(&logits)?;
        entropy_sum += h / m;

        let err = value - s.ret;
        l_vf += err * err / m;

        // Descended loss: -L_clip - c2 * H contribute through the logits,
        // c1 * L_vf through the value head.
        let mut d_logits = vec![0.0; p.len()];
        for i in 0..p.len() {
            let indicator = if i == s.action { 1.0 } else { 0.0 };
            let d_clip = d_lpn * (indicator - p[i]);
            d_logits[i] = -(d_clip + ent_coef * dh_dlogits[i] / m);
        }
        let d_value = vf_coef * 2.0 * err / m;
        let sample_grads = net.backward(&cache, &d_logits, d_value)?;
        grads.accumulate(&sample_grads);
    }
    let loss = -total_objective(l_clip, l_vf, entropy_sum, vf_coef, ent_coef);
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    Ok(BatchEval {
        loss,
        l_clip,
        l_vf,
        entropy: entropy_sum,
        grads,
    })
}

/// Normalizes advantages in place to zero mean and unit variance. Batches
/// with (near-)constant advantages map to all zeros rather than blowing up.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.len() < 2 {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        advantages.iter_mut().for_each(|a| *a = 0.0);
        return;
    }
    advantages.iter_mut().for_each(|a| *a = (*a - mean) / std);
}
