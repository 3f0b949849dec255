use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParamStore, Var};
use crate::catalog::Category;
use crate::error::Result;
use crate::eval::f1_action_set;
use crate::model::{DecodeMode, PolicyModel};
use crate::sequence::ActionSequence;
use crate::state::StateInput;

#[derive(Debug, Clone, PartialEq)]
pub struct ScstDiag {
    pub r_sample: f64,
    pub r_greedy: f64,
    pub sampled: ActionSequence,
    pub greedy: ActionSequence,
}

/// `(r(A^g) - r(A^s)) * sum_t log p(a^s_t)` with `A^s` sampled and `A^g`
/// decoded greedily from the same state `h`.
#[allow(clippy::too_many_arguments)]
pub fn scst_loss(
    model: &PolicyModel,
    g: &mut Graph,
    store: &ParamStore,
    state: &StateInput,
    h: Var,
    label: &ActionSequence,
    rng: &mut ChaCha8Rng,
    run: [bool; 3],
) -> Result<(Var, ScstDiag)> {
    let sample = model.rollout(g, store, state, h, &mut DecodeMode::Sample(rng), run)?;
    let greedy = model.rollout(g, store, state, h, &mut DecodeMode::Greedy, run)?;
    let r_sample = f1_action_set(&sample.sequence, label);
    let r_greedy = f1_action_set(&greedy.sequence, label);
    let loss = match sample.log_prob {
        Some(lp) => g.scale(lp, r_greedy - r_sample),
        None => g.vector(vec![0.0]),
    };
    Ok((
        loss,
        ScstDiag {
            r_sample,
            r_greedy,
            sampled: sample.sequence,
            greedy: greedy.sequence,
        },
    ))
}

/// The same loss with `A^s` and `r(A^g)` held fixed: the sampled sequence is
/// teacher-forced, so the loss is a deterministic function of the
/// parameters.
#[allow(clippy::too_many_arguments)]
pub fn scst_loss_frozen(
    model: &PolicyModel,
    g: &mut Graph,
    store: &ParamStore,
    state: &StateInput,
    h: Var,
    label: &ActionSequence,
    sampled: &ActionSequence,
    r_greedy: f64,
    run: [bool; 3],
) -> Result<Var> {
    let forced = model.rollout(g, store, state, h, &mut DecodeMode::Forced(sampled.actions()), run)?;
    let r_sample = f1_action_set(sampled, label);
    Ok(match forced.log_prob {
        Some(lp) => g.scale(lp, r_greedy - r_sample),
        None => g.vector(vec![0.0]),
    })
}

/// Gate targets: whether the label buys anything of each category.
pub fn gate_targets(model: &PolicyModel, label: &ActionSequence) -> Vec<f64> {
    Category::ALL
        .iter()
        .map(|&c| if label.has_category(&model.catalog, c) { 1.0 } else { 0.0 })
        .collect()
}

/// Summed binary cross-entropy of the three gates.
pub fn gate_loss(model: &PolicyModel, g: &mut Graph, store: &ParamStore, h: Var, label: &ActionSequence) -> Result<Var> {
    let logits = model.gate_logits(g, store, h)?;
    Ok(g.bce_with_logits(logits, gate_targets(model, label)))
}

/// Teacher-forced negative log-likelihood of the label's category segments.
pub fn mle_warmup_loss(
    model: &PolicyModel,
    g: &mut Graph,
    store: &ParamStore,
    state: &StateInput,
    h: Var,
    label: &ActionSequence,
) -> Result<Var> {
    let forced = model.rollout(g, store, state, h, &mut DecodeMode::Forced(label.actions()), [true; 3])?;
    Ok(match forced.log_prob {
        Some(lp) => g.scale(lp, -1.0),
        None => g.vector(vec![0.0]),
    })
}
