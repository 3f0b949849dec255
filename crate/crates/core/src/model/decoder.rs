use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::encoder::gate_decisions;
use super::{task_name, PolicyModel, MAX_PURCHASES_PER_CATEGORY};
use crate::autodiff::{Graph, ParamStore, Var};
use crate::catalog::{legal_action_mask, ActionId, Category, Dollars, Inventory};
use crate::embeddings::EMBED_PARAM;
use crate::error::{Error, Result};
use crate::sequence::ActionSequence;
use crate::state::StateInput;

pub enum DecodeMode<'a> {
    /// Argmax of the masked distribution; ties go to the lowest action id.
    Greedy,
    /// Draw from the masked distribution.
    Sample(&'a mut ChaCha8Rng),
    /// Teacher forcing: emit exactly these actions. An action the mask
    /// rejects is admitted at that step so its log-probability stays finite.
    Forced(&'a [ActionId]),
}

/// Output of one category decoder (or of the single shared decoder).
#[derive(Debug, Clone)]
pub struct Segment {
    /// Emitted actions, ending with `End`.
    pub actions: Vec<ActionId>,
    /// Log-probability node of each emitted action.
    pub log_probs: Vec<Var>,
    pub spent: Dollars,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub sequence: ActionSequence,
    pub segments: Vec<(Option<Category>, Segment)>,
    /// Sum of all step log-probabilities; `None` when no decoder ran.
    pub log_prob: Option<Var>,
    pub spent: Dollars,
}

impl Rollout {
    pub fn steps(&self) -> usize {
        self.segments.iter().map(|(_, s)| s.log_probs.len()).sum()
    }
}

fn argmax_legal(logp: &[f64], mask: &[bool]) -> ActionId {
    let mut best: Option<ActionId> = None;
    for (a, (&lp, &ok)) in logp.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|b| lp > logp[b]) {
            best = Some(a);
        }
    }
    best.expect("End is always legal")
}

fn sample_legal(logp: &[f64], mask: &[bool], rng: &mut ChaCha8Rng) -> ActionId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (a, (&lp, &ok)) in logp.iter().zip(mask).enumerate() {
        if ok {
            acc += lp.exp();
            last = Some(a);
            if u < acc {
                return a;
            }
        }
    }
    last.expect("End is always legal")
}

impl PolicyModel {
    fn step_mask(
        &self,
        task: Option<Category>,
        cash: Dollars,
        inventory: &Inventory,
        counts: &[usize; 3],
        current: usize,
        allowed: [bool; 3],
    ) -> Vec<bool> {
        match task {
            Some(c) if counts[c.index()] >= MAX_PURCHASES_PER_CATEGORY => {
                let mut m = vec![false; self.vocab_size()];
                m[self.catalog.end_action()] = true;
                m
            }
            Some(c) => legal_action_mask(&self.catalog, cash, inventory, Some(c)),
            None => {
                let mut m = legal_action_mask(&self.catalog, cash, inventory, None);
                for (a, ok) in m.iter_mut().enumerate().take(self.catalog.len()) {
                    let c = self.catalog.category(a).index();
                    *ok &= c >= current && allowed[c] && counts[c] < MAX_PURCHASES_PER_CATEGORY;
                }
                m
            }
        }
    }

    /// Runs one decoder from state `h`, spending from `cash` and adding to
    /// `inventory`. `task = None` selects the single shared decoder, which
    /// may only move forward through the categories marked in `allowed`.
    #[allow(clippy::too_many_arguments)]
    pub fn decode_segment(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        h: Var,
        task: Option<Category>,
        cash: &mut Dollars,
        inventory: &mut Inventory,
        mode: &mut DecodeMode<'_>,
        allowed: [bool; 3],
    ) -> Result<Segment> {
        let p = format!("decoder.{}", task_name(task));
        let init = g.param(store, &format!("{p}.init"))?;
        let lstm_w = g.param(store, &format!("{p}.lstm_w"))?;
        let lstm_b = g.param(store, &format!("{p}.lstm_b"))?;
        let out1 = g.param(store, &format!("{p}.out1"))?;
        let out2 = g.param(store, &format!("{p}.out2"))?;
        let table = g.param(store, EMBED_PARAM)?;
        let hs = self.config.lstm_hidden;
        let end = self.catalog.end_action();

        let mut state_h = g.matmul(init, h);
        let mut state_c = g.vector(vec![0.0; hs]);
        let mut prev = self.catalog.start_action();
        let mut counts = [0usize; 3];
        let mut current = 0usize;
        let mut segment = Segment {
            actions: Vec::new(),
            log_probs: Vec::new(),
            spent: 0,
        };
        loop {
            let x = g.row(table, prev);
            let hc = g.lstm_cell(x, state_h, state_c, lstm_w, lstm_b);
            state_h = g.slice(hc, 0, hs);
            state_c = g.slice(hc, hs, hs);
            let hidden = g.matmul(out1, state_h);
            let hidden = g.relu(hidden);
            let logits = g.matmul(out2, hidden);

            let mut mask = self.step_mask(task, *cash, inventory, &counts, current, allowed);
            let step = segment.actions.len();
            let forced = match mode {
                DecodeMode::Forced(seq) => {
                    let a = seq.get(step).copied().unwrap_or(end);
                    if a >= self.catalog.start_action() {
                        return Err(Error::UnknownWeapon(a));
                    }
                    mask[a] = true;
                    Some(a)
                }
                _ => None,
            };
            let logp = g.masked_log_softmax(logits, Rc::from(mask.as_slice()));
            let action = match (forced, &mut *mode) {
                (Some(a), _) => a,
                (None, DecodeMode::Sample(rng)) => sample_legal(g.value(logp), &mask, rng),
                (None, _) => argmax_legal(g.value(logp), &mask),
            };
            segment.log_probs.push(g.pick(logp, action));
            segment.actions.push(action);
            if action == end {
                break;
            }
            let price = self.catalog.price(action);
            *cash -= price;
            segment.spent += price;
            inventory.add(action);
            let c = self.catalog.category(action).index();
            counts[c] += 1;
            current = current.max(c);
            prev = action;
        }
        Ok(segment)
    }

    /// Decodes a full purchase from `h`. Category decoders run in gun,
    /// grenade, equipment order for the categories marked in `run`, sharing
    /// the remaining budget and the growing inventory.
    pub fn rollout(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        state: &StateInput,
        h: Var,
        mode: &mut DecodeMode<'_>,
        run: [bool; 3],
    ) -> Result<Rollout> {
        let mut cash = state.budget;
        let mut inventory = state.own_weapons.clone();
        let mut segments = Vec::new();
        if self.flags.single_decoder {
            if run.iter().any(|&r| r) {
                let seg = self.decode_segment(g, store, h, None, &mut cash, &mut inventory, mode, run)?;
                segments.push((None, seg));
            }
        } else {
            for c in Category::ALL {
                if !run[c.index()] {
                    continue;
                }
                let seg = match mode {
                    DecodeMode::Forced(seq) => {
                        let mut part: Vec<ActionId> = seq
                            .iter()
                            .copied()
                            .filter(|&a| self.catalog.action_category(a) == Some(c))
                            .collect();
                        part.push(self.catalog.end_action());
                        let mut sub = DecodeMode::Forced(&part);
                        self.decode_segment(g, store, h, Some(c), &mut cash, &mut inventory, &mut sub, run)?
                    }
                    _ => self.decode_segment(g, store, h, Some(c), &mut cash, &mut inventory, mode, run)?,
                };
                segments.push((Some(c), seg));
            }
        }
        let end = self.catalog.end_action();
        let purchases: Vec<ActionId> = segments
            .iter()
            .flat_map(|(_, s)| s.actions.iter().copied().filter(|&a| a != end))
            .collect();
        let steps: Vec<Var> = segments.iter().flat_map(|(_, s)| s.log_probs.iter().copied()).collect();
        let log_prob = (!steps.is_empty()).then(|| g.sum(&steps));
        Ok(Rollout {
            sequence: ActionSequence::from_purchases(purchases, &self.catalog),
            spent: state.budget - cash,
            segments,
            log_prob,
        })
    }

    /// Encodes `state`, consults the gates (unless disabled) and decodes.
    pub fn generate(&self, store: &ParamStore, state: &StateInput, mode: &mut DecodeMode<'_>) -> Result<ActionSequence> {
        let mut g = Graph::new();
        let h = self.state_repr(&mut g, store, state)?;
        let run = if self.flags.gates {
            let z = self.gate_logits(&mut g, store, h)?;
            let p = g.sigmoid(z);
            let v = g.value(p);
            gate_decisions([v[0], v[1], v[2]])
        } else {
            [true; 3]
        };
        Ok(self.rollout(&mut g, store, state, h, mode, run)?.sequence)
    }

    /// Log-probability of `sequence` under teacher forcing with every
    /// decoder running.
    pub fn sequence_log_prob(&self, store: &ParamStore, state: &StateInput, sequence: &ActionSequence) -> Result<f64> {
        let mut g = Graph::new();
        let h = self.state_repr(&mut g, store, state)?;
        let r = self.rollout(&mut g, store, state, h, &mut DecodeMode::Forced(sequence.actions()), [true; 3])?;
        Ok(r.log_prob.map_or(0.0, |v| g.scalar(v)))
    }
}
