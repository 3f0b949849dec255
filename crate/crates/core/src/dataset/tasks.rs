//! Few-shot task construction: one task per player slot, with the first
//! `k` eligible rounds as support and the remaining eligible rounds as target.

use std::fmt;

use serde::Serialize;

use super::labels::label_sequence;
use super::records::{MatchRecord, PLAYERS};
use crate::catalog::Catalog;
use crate::sequence::ActionSequence;
use crate::state::StateInput;

/// Pistol rounds and the rounds right after them carry no usable history.
pub const EXCLUDED_ROUNDS: [u32; 4] = [1, 2, 16, 17];

pub fn is_eligible(round_index: u32) -> bool {
    !EXCLUDED_ROUNDS.contains(&round_index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundExample {
    pub round_index: u32,
    pub state: StateInput,
    pub label: ActionSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTask {
    pub match_id: String,
    pub player_slot: usize,
    pub support: Vec<RoundExample>,
    pub target: Vec<RoundExample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskSkip {
    pub match_id: String,
    pub eligible_rounds: usize,
    pub needed: usize,
    pub detail: String,
}

impl fmt::Display for TaskSkip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "match {}: skipped ({} eligible rounds, need {}){}",
            self.match_id,
            self.eligible_rounds,
            self.needed,
            if self.detail.is_empty() { String::new() } else { format!(": {}", self.detail) }
        )
    }
}

/// Builds the ten player tasks of `m`, or a skip diagnostic when the match
/// has fewer than `k + 1` eligible rounds.
pub fn build_tasks(m: &MatchRecord, k: usize, catalog: &Catalog) -> Result<Vec<EpisodeTask>, TaskSkip> {
    let eligible: Vec<usize> = (0..m.rounds.len())
        .filter(|&i| is_eligible(m.rounds[i].round_index))
        .collect();
    let skip = |detail: String| TaskSkip {
        match_id: m.match_id.clone(),
        eligible_rounds: eligible.len(),
        needed: k + 1,
        detail,
    };
    if k == 0 || eligible.len() < k + 1 {
        return Err(skip(String::new()));
    }
    let mut tasks = Vec::with_capacity(PLAYERS);
    for slot in 0..PLAYERS {
        let mut examples = Vec::with_capacity(eligible.len());
        for (n, &pos) in eligible.iter().enumerate() {
            let round = &m.rounds[pos];
            let label = label_sequence(&round.purchases[slot], catalog).map_err(|e| skip(e.to_string()))?;
            examples.push(RoundExample {
                round_index: round.round_index,
                state: StateInput::from_match(m, pos, slot, &eligible[..n]),
                label,
            });
        }
        let target = examples.split_off(k);
        tasks.push(EpisodeTask {
            match_id: m.match_id.clone(),
            player_slot: slot,
            support: examples,
            target,
        });
    }
    Ok(tasks)
}

/// Tasks of every usable match, plus the skip diagnostics.
pub fn build_all_tasks(matches: &[MatchRecord], k: usize, catalog: &Catalog) -> (Vec<EpisodeTask>, Vec<TaskSkip>) {
    let mut tasks = Vec::new();
    let mut skips = Vec::new();
    for m in matches {
        match build_tasks(m, k, catalog) {
            Ok(t) => tasks.extend(t),
            Err(s) => skips.push(s),
        }
    }
    (tasks, skips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::{n_round_match, simple_catalog};

    #[test]
    fn thirty_rounds_k5() {
        let cat = simple_catalog();
        let m = n_round_match(&cat, 30);
        let tasks = build_tasks(&m, 5, &cat).unwrap();
        assert_eq!(tasks.len(), 10);
        for t in &tasks {
            let support: Vec<_> = t.support.iter().map(|e| e.round_index).collect();
            assert_eq!(support, [3, 4, 5, 6, 7]);
            assert_eq!(t.target.len(), 21);
            assert!(t
                .support
                .iter()
                .chain(&t.target)
                .all(|e| !EXCLUDED_ROUNDS.contains(&e.round_index)));
        }
    }

    #[test]
    fn short_match_skipped() {
        let cat = simple_catalog();
        let m = n_round_match(&cat, 6);
        let skip = build_tasks(&m, 5, &cat).unwrap_err();
        assert_eq!(skip.eligible_rounds, 4);
        assert_eq!(skip.needed, 6);
    }

    #[test]
    fn history_is_prior_eligible_rounds() {
        let cat = simple_catalog();
        let m = n_round_match(&cat, 20);
        let tasks = build_tasks(&m, 5, &cat).unwrap();
        let t = &tasks[0];
        assert_eq!(t.support[0].state.history.len(), 0);
        assert_eq!(t.support[4].state.history.len(), 4);
        // round 18 follows 3..=15: 13 eligible rounds before it
        let r18 = t.target.iter().find(|e| e.round_index == 18).unwrap();
        assert_eq!(r18.state.history.len(), 13);
    }
}
