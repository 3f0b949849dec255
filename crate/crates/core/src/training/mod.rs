//! Losses, few-shot adaptation and the Reptile meta-training loop.
//!
//! Each meta-iteration samples one training match with repetition. Its
//! player tasks are processed in slot order: starting from the current
//! meta-parameters `theta`, a fresh Adam takes `K` steps on the support
//! rounds (giving `theta'`), the same optimizer takes one step per target
//! round (giving `theta''`), and `theta` moves to
//! `theta + eps * (theta'' - theta)`.

mod losses;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{interpolate_params, Adam, AdamConfig, Grads, Graph, ParamStore};
use crate::dataset::{EpisodeTask, RoundExample};
use crate::embeddings::EMBED_PARAM;
use crate::error::{Error, Result};
use crate::eval::{evaluate_policy, f1_action_set, F1Mode, TaskPolicy};
use crate::model::{gate_decisions, DecodeMode, PolicyModel};
use crate::sequence::ActionSequence;

pub use losses::{gate_loss, gate_targets, mle_warmup_loss, scst_loss, scst_loss_frozen, ScstDiag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Teacher-forced likelihood plus gate loss.
    Warmup,
    /// Self-critical policy gradient plus gate loss.
    Scst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonSchedule {
    Constant,
    /// `eps_0 * (1 - i / N)` at iteration `i` of `N`.
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Support rounds per task.
    pub k: usize,
    pub inner_lr: f64,
    pub inner_steps_per_shot: usize,
    pub meta_epsilon: f64,
    pub epsilon_schedule: EpsilonSchedule,
    pub meta_iterations: usize,
    /// Passes over the training matches spent in the warm-up phase.
    pub warmup_epochs: usize,
    /// Player tasks used from each sampled match.
    pub batch_width: usize,
    pub gate_loss_weight: f64,
    /// Apply the gates during training rollouts.
    pub gates_in_training: bool,
    /// Stop gate gradients at the encoder output.
    pub detach_gate_encoder: bool,
    pub freeze_embeddings: bool,
    /// Dev evaluation period in meta-iterations; 0 disables early stopping.
    pub eval_every: usize,
    /// Dev evaluations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 5,
            inner_lr: 1e-3,
            inner_steps_per_shot: 1,
            meta_epsilon: 1.0,
            epsilon_schedule: EpsilonSchedule::Linear,
            meta_iterations: 200,
            warmup_epochs: 2,
            batch_width: 10,
            gate_loss_weight: 1.0,
            gates_in_training: false,
            detach_gate_encoder: false,
            freeze_embeddings: false,
            eval_every: 0,
            patience: 5,
            seed: 17,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.meta_epsilon) {
            return Err(Error::Config("meta_epsilon must lie in [0, 1]".into()));
        }
        if !self.inner_lr.is_finite() || self.inner_lr < 0.0 {
            return Err(Error::Config("inner_lr must be a nonnegative number".into()));
        }
        if self.batch_width == 0 {
            return Err(Error::Config("batch_width must be at least 1".into()));
        }
        Ok(())
    }

    pub fn epsilon_at(&self, iteration: usize) -> f64 {
        match self.epsilon_schedule {
            EpsilonSchedule::Constant => self.meta_epsilon,
            EpsilonSchedule::Linear => {
                let n = self.meta_iterations.max(1) as f64;
                self.meta_epsilon * (1.0 - iteration as f64 / n)
            }
        }
    }

    fn adam(&self) -> Adam {
        Adam::new(AdamConfig {
            lr: self.inner_lr,
            ..AdamConfig::default()
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub seq_loss: f64,
    pub gate_loss: f64,
    pub r_sample: f64,
    pub r_greedy: f64,
}

/// Loss gradients for one round example.
pub fn example_grads(
    model: &PolicyModel,
    store: &ParamStore,
    example: &RoundExample,
    phase: Phase,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Grads, StepStats)> {
    let mut g = Graph::new();
    let h = model.state_repr(&mut g, store, &example.state)?;
    let gate_input = if config.detach_gate_encoder {
        let value = g.value(h).to_vec();
        g.vector(value)
    } else {
        h
    };
    let gates = gate_loss(model, &mut g, store, gate_input, &example.label)?;
    let mut stats = StepStats {
        gate_loss: g.scalar(gates),
        ..StepStats::default()
    };
    let seq = match phase {
        Phase::Warmup => mle_warmup_loss(model, &mut g, store, &example.state, h, &example.label)?,
        Phase::Scst => {
            let run = if config.gates_in_training {
                let z = model.gate_logits(&mut g, store, h)?;
                let p = g.value(z).iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect::<Vec<_>>();
                gate_decisions([p[0], p[1], p[2]])
            } else {
                [true; 3]
            };
            let (loss, diag) = scst_loss(model, &mut g, store, &example.state, h, &example.label, rng, run)?;
            stats.r_sample = diag.r_sample;
            stats.r_greedy = diag.r_greedy;
            loss
        }
    };
    stats.seq_loss = g.scalar(seq);
    let weighted = g.scale(gates, config.gate_loss_weight);
    let total = g.add(seq, weighted);
    g.check_finite()?;
    let mut grads = g.backward(total);
    if config.freeze_embeddings {
        grads.remove(EMBED_PARAM);
    }
    Ok((grads, stats))
}

fn mean_stats(stats: &[StepStats]) -> StepStats {
    let n = stats.len().max(1) as f64;
    let mut m = StepStats::default();
    for s in stats {
        m.seq_loss += s.seq_loss / n;
        m.gate_loss += s.gate_loss / n;
        m.r_sample += s.r_sample / n;
        m.r_greedy += s.r_greedy / n;
    }
    m
}

/// `K` Adam steps from `theta` on the task's first `K` support rounds, in
/// round order. `theta` itself is left untouched; the optimizer is returned
/// so the caller can continue with it.
pub fn inner_adapt(
    model: &PolicyModel,
    theta: &ParamStore,
    task: &EpisodeTask,
    phase: Phase,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ParamStore, Adam, StepStats)> {
    config.validate()?;
    if task.support.len() < config.k {
        return Err(Error::InsufficientSupport {
            have: task.support.len(),
            need: config.k,
        });
    }
    let mut params = theta.clone();
    let mut adam = config.adam();
    let mut stats = Vec::new();
    for example in &task.support[..config.k] {
        for _ in 0..config.inner_steps_per_shot {
            let (grads, s) = example_grads(model, &params, example, phase, config, rng)?;
            adam.step(&mut params, &grads)?;
            stats.push(s);
        }
    }
    Ok((params, adam, mean_stats(&stats)))
}

/// One pass over the target rounds, one step each, continuing `adam`.
pub fn target_pass(
    model: &PolicyModel,
    params: &mut ParamStore,
    adam: &mut Adam,
    task: &EpisodeTask,
    phase: Phase,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepStats> {
    let mut stats = Vec::with_capacity(task.target.len());
    for example in &task.target {
        let (grads, s) = example_grads(model, params, example, phase, config, rng)?;
        adam.step(params, &grads)?;
        stats.push(s);
    }
    Ok(mean_stats(&stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    pub match_id: String,
    pub phase: Phase,
    pub epsilon: f64,
    pub seq_loss: f64,
    pub gate_loss: f64,
    pub r_sample: f64,
    pub r_greedy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MetaOutcome {
    pub params: ParamStore,
    pub log: Vec<LogRecord>,
    /// Iteration whose parameters were returned (the last one unless early
    /// stopping picked an earlier dev optimum).
    pub best_iteration: usize,
}

/// Tasks grouped by match, in order of first appearance.
pub fn group_by_match(tasks: &[EpisodeTask]) -> Vec<Vec<&EpisodeTask>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&EpisodeTask>> = BTreeMap::new();
    for t in tasks {
        let entry = groups.entry(t.match_id.as_str()).or_default();
        if entry.is_empty() {
            order.push(&t.match_id);
        }
        entry.push(t);
    }
    order
        .into_iter()
        .map(|id| {
            let mut g = groups.remove(id).unwrap_or_default();
            g.sort_by_key(|t| t.player_slot);
            g
        })
        .collect()
}

/// Reptile meta-training from `theta0`. `on_iteration` sees every log
/// record with the current parameters (for checkpointing and logging).
pub fn meta_train(
    model: &PolicyModel,
    theta0: &ParamStore,
    train_tasks: &[EpisodeTask],
    dev_tasks: Option<&[EpisodeTask]>,
    config: &TrainConfig,
    mut on_iteration: impl FnMut(&LogRecord, &ParamStore) -> Result<()>,
) -> Result<MetaOutcome> {
    config.validate()?;
    model.check_params(theta0)?;
    let groups = group_by_match(train_tasks);
    if groups.is_empty() {
        return Err(Error::EmptyInput("no training tasks"));
    }
    let warmup_iterations = config.warmup_epochs * groups.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = theta0.clone();
    let mut log = Vec::with_capacity(config.meta_iterations);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut stale = 0usize;
    for iteration in 0..config.meta_iterations {
        let group = &groups[rng.gen_range(0..groups.len())];
        let phase = if iteration < warmup_iterations { Phase::Warmup } else { Phase::Scst };
        let epsilon = config.epsilon_at(iteration);
        let mut stats = Vec::new();
        for task in group.iter().take(config.batch_width) {
            let (mut adapted, mut adam, _) = inner_adapt(model, &theta, task, phase, config, &mut rng)?;
            stats.push(target_pass(model, &mut adapted, &mut adam, task, phase, config, &mut rng)?);
            theta = interpolate_params(&theta, &adapted, epsilon)?;
        }
        if !theta.all_finite() {
            return Err(Error::NonFinite { op: "meta_update" });
        }
        let m = mean_stats(&stats);
        let mut record = LogRecord {
            iteration,
            match_id: group[0].match_id.clone(),
            phase,
            epsilon,
            seq_loss: m.seq_loss,
            gate_loss: m.gate_loss,
            r_sample: m.r_sample,
            r_greedy: m.r_greedy,
            dev_f1: None,
        };
        let mut stop = false;
        if let Some(dev) = dev_tasks.filter(|d| !d.is_empty() && config.eval_every > 0) {
            if (iteration + 1) % config.eval_every == 0 {
                let policy = AdaptedPolicy {
                    model,
                    theta: &theta,
                    config,
                    phase: Phase::Scst,
                };
                let f1 = evaluate_policy(&policy, dev, &model.catalog, F1Mode::Set, 1)?.f1;
                record.dev_f1 = Some(f1);
                if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                    best = Some((f1, iteration, theta.clone()));
                    stale = 0;
                } else {
                    stale += 1;
                    stop = stale >= config.patience;
                }
            }
        }
        on_iteration(&record, &theta)?;
        log.push(record);
        if stop {
            break;
        }
    }
    let last = log.len().saturating_sub(1);
    let (params, best_iteration) = match best {
        Some((_, it, p)) => (p, it),
        None => (theta, last),
    };
    Ok(MetaOutcome {
        params,
        log,
        best_iteration,
    })
}

/// Stable per-task seed, independent of evaluation order.
pub fn task_seed(base: u64, task: &EpisodeTask) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ base;
    for b in task.match_id.bytes().chain((task.player_slot as u64).to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Adapts to each task's support rounds, then decodes its target rounds
/// greedily.
pub struct AdaptedPolicy<'a> {
    pub model: &'a PolicyModel,
    pub theta: &'a ParamStore,
    pub config: &'a TrainConfig,
    pub phase: Phase,
}

impl TaskPolicy for AdaptedPolicy<'_> {
    fn name(&self) -> String {
        "Meta-learned policy".into()
    }

    fn fingerprint(&self) -> String {
        format!(
            "adapted k={} lr={} {} seed={}",
            self.config.k,
            self.config.inner_lr,
            self.model.flags.fingerprint(),
            self.config.seed
        )
    }

    fn predict_task(&self, task: &EpisodeTask) -> Result<Vec<ActionSequence>> {
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed(self.config.seed, task));
        let (adapted, _, _) = inner_adapt(self.model, self.theta, task, self.phase, self.config, &mut rng)?;
        task.target
            .iter()
            .map(|e| self.model.generate(&adapted, &e.state, &mut DecodeMode::Greedy))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub lr: f64,
    pub max_steps: usize,
    pub warmup_steps: usize,
    pub check_every: usize,
    pub target_f1: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lr: 3e-3,
            max_steps: 500,
            warmup_steps: 300,
            check_every: 25,
            target_f1: 0.95,
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub steps: usize,
    pub support_f1: f64,
    /// `(step, support F1)` at every check.
    pub trace: Vec<(usize, f64)>,
    /// Greedy reward of every self-critical step.
    pub rewards: Vec<f64>,
    pub losses: Vec<f64>,
}

/// Mean F1 of greedy generation (gates applied) over `examples`.
pub fn greedy_f1(model: &PolicyModel, params: &ParamStore, examples: &[RoundExample]) -> Result<f64> {
    let mut total = 0.0;
    for e in examples {
        total += f1_action_set(&model.generate(params, &e.state, &mut DecodeMode::Greedy)?, &e.label);
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Fits one task's support rounds from `theta`: warm-up steps first, then
/// self-critical steps, cycling through the rounds, until the support F1
/// reaches the target or the step budget runs out.
pub fn fit_support(model: &PolicyModel, theta: &ParamStore, task: &EpisodeTask, fit: &FitConfig) -> Result<(ParamStore, FitReport)> {
    if task.support.is_empty() {
        return Err(Error::InsufficientSupport { have: 0, need: 1 });
    }
    let config = TrainConfig {
        inner_lr: fit.lr,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(fit.seed);
    let mut params = theta.clone();
    let mut adam = config.adam();
    let mut report = FitReport {
        steps: 0,
        support_f1: greedy_f1(model, &params, &task.support)?,
        trace: Vec::new(),
        rewards: Vec::new(),
        losses: Vec::new(),
    };
    report.trace.push((0, report.support_f1));
    for step in 0..fit.max_steps {
        if report.support_f1 >= fit.target_f1 {
            break;
        }
        let example = &task.support[step % task.support.len()];
        let phase = if step < fit.warmup_steps { Phase::Warmup } else { Phase::Scst };
        let (grads, stats) = example_grads(model, &params, example, phase, &config, &mut rng)?;
        adam.step(&mut params, &grads)?;
        report.steps = step + 1;
        report.losses.push(stats.seq_loss);
        if phase == Phase::Scst {
            report.rewards.push(stats.r_greedy);
        }
        if report.steps.is_multiple_of(fit.check_every) || report.steps == fit.max_steps {
            report.support_f1 = greedy_f1(model, &params, &task.support)?;
            report.trace.push((report.steps, report.support_f1));
        }
    }
    Ok((params, report))
}
