//! The clipped-surrogate policy update.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::Agent;
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::ppo::adam::{clip_grad_norm, Adam, GradBuffer};
use crate::ppo::config::PpoConfig;
use crate::ppo::gae::compute_gae;
use crate::ppo::rollout::{CollectBuffer, Transition};
use crate::scalar::Scalar;

/// Samples per graph during the update. Bounds peak activation memory; the
/// gradient mean over the minibatch is unaffected because each backward pass
/// is seeded with the inverse minibatch size.
const CHUNK: usize = 32;

/// Mean diagnostics of one update call.
#[derive(Clone, Copy, Debug, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub category_loss: f64,
    /// Mean pre-clip global gradient norm.
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// A collect laid out per sample, with the advantages the update consumes.
pub struct Flat<'a> {
    pub transitions: Vec<&'a Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Advantage estimation per stream, then normalization over the collect.
pub fn flatten<'a>(buffer: &'a CollectBuffer, cfg: &PpoConfig) -> Result<Flat<'a>> {
    let mut transitions = Vec::with_capacity(buffer.len());
    let mut advantages = Vec::with_capacity(buffer.len());
    let mut returns = Vec::with_capacity(buffer.len());
    for (stream, &bootstrap) in buffer.streams.iter().zip(&buffer.bootstraps) {
        let rewards: Vec<f64> = stream.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = stream.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = stream.iter().map(|t| t.done).collect();
        let (adv, ret) =
            compute_gae(&rewards, &values, &dones, bootstrap, cfg.gamma, cfg.gae_lambda)?;
        transitions.extend(stream.iter());
        advantages.extend(adv);
        returns.extend(ret);
    }
    if transitions.is_empty() {
        return Err(Error::argument("cannot update from an empty collect"));
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in advantages.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
    Ok(Flat { transitions, advantages, returns })
}

/// Per-sample policy loss `-min(ratio * A, clip(ratio) * A)`. Once the ratio
/// saturates the clip range, the gradient through it vanishes.
pub fn clipped_policy_loss<T: Scalar>(
    g: &mut Graph<T>,
    ratio: NodeId,
    advantage: f64,
    clip: f64,
) -> Result<NodeId> {
    let surr = g.scale(ratio, advantage);
    let clipped = g.clamp(ratio, 1.0 - clip, 1.0 + clip)?;
    let surr_clipped = g.scale(clipped, advantage);
    let lower = g.minimum(surr, surr_clipped)?;
    Ok(g.neg(lower))
}

/// One optimization pass over a collect: three shuffled epochs of clipped
/// policy updates with value, entropy, and (where trained) category terms.
pub fn ppo_update<T: Scalar>(
    agent: &mut Agent<T>,
    adam: &mut Adam,
    buffer: &CollectBuffer,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    cfg.validate()?;
    let flat = flatten(buffer, cfg)?;
    let n = flat.transitions.len();
    let lambda = agent.variant().lambda();

    let mut stats = UpdateStats::default();
    let mut sample_count = 0.0;
    let mut indices: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.repeat_per_collect {
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        for minibatch in indices.chunks(cfg.minibatch) {
            let mut grads = GradBuffer::new();
            let inv = 1.0 / minibatch.len() as f64;
            for chunk in minibatch.chunks(CHUNK) {
                let mut g = Graph::new();
                let bound = agent.params().bind(&mut g, true);
                let mut chunk_loss = None;
                for &idx in chunk {
                    let t = flat.transitions[idx];
                    let (adv, ret) = (flat.advantages[idx], flat.returns[idx]);
                    let frame = agent.frame_tensor(&t.frame)?;
                    let nodes = agent.training_forward(&mut g, &bound, &frame, t.cats.as_deref())?;

                    let logp_rows = g.log_softmax_rows(nodes.action_logits)?;
                    let logp = g.pick_elem(logp_rows, t.action)?;
                    let shifted = g.add_const(logp, -t.log_prob);
                    let ratio = g.exp(shifted);
                    let policy = clipped_policy_loss(&mut g, ratio, adv, cfg.clip)?;

                    let value = g.pick_elem(nodes.value, 0)?;
                    let err = g.add_const(value, -ret);
                    let verr = g.mul(err, err)?;

                    let probs = g.softmax(nodes.action_logits)?;
                    let plogp = g.mul(probs, logp_rows)?;
                    let neg_entropy = g.sum_all(plogp);
                    let entropy = g.neg(neg_entropy);

                    let mut loss = policy;
                    let vterm = g.scale(verr, cfg.value_coef);
                    loss = g.add(loss, vterm)?;
                    let eterm = g.scale(entropy, -cfg.entropy_coef);
                    loss = g.add(loss, eterm)?;
                    if let Some(cat) = nodes.cat_loss {
                        let cterm = g.scale(cat, lambda);
                        loss = g.add(loss, cterm)?;
                        stats.category_loss += g.value(cat).item().as_f64();
                    }

                    stats.policy_loss += g.value(policy).item().as_f64();
                    stats.value_loss += g.value(verr).item().as_f64();
                    stats.entropy += g.value(entropy).item().as_f64();
                    sample_count += 1.0;

                    chunk_loss = Some(match chunk_loss {
                        None => loss,
                        Some(acc) => g.add(acc, loss)?,
                    });
                }
                let total = chunk_loss.expect("chunks are never empty");
                g.backward_seeded(total, T::of(inv))?;
                for (name, id) in bound.iter() {
                    if let Some(grad) = g.grad(id) {
                        grads.accumulate(name, grad);
                    }
                }
            }
            stats.grad_norm += clip_grad_norm(&mut grads, cfg.max_grad_norm)?;
            adam.step(agent.params_mut(), &grads)?;
            stats.minibatches += 1;
        }
    }
    stats.policy_loss /= sample_count;
    stats.value_loss /= sample_count;
    stats.entropy /= sample_count;
    stats.category_loss /= sample_count;
    stats.grad_norm /= stats.minibatches as f64;
    Ok(stats)
}
