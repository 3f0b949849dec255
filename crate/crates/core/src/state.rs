//! The per-player, per-round model input.

use serde::{Deserialize, Serialize};

use crate::catalog::{Dollars, Inventory};
use crate::dataset::{MatchRecord, RoundRecord, PLAYERS, TEAM_SIZE};

/// One past round as seen by the history encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Weapons held at the end of the buy period.
    pub final_weapons: Inventory,
    pub performance_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateInput {
    pub own_weapons: Inventory,
    /// Own team in slot order, the agent included.
    pub team_weapons: Vec<Inventory>,
    /// Opposing team in slot order.
    pub opp_weapons: Vec<Inventory>,
    /// All ten accounts: self, then teammates, then opponents, each group in
    /// slot order.
    pub money: Vec<Dollars>,
    pub history: Vec<HistoryEntry>,
    /// Cash available for this round's purchase.
    pub budget: Dollars,
}

impl StateInput {
    /// State of `slot` at the start of `round`, with `history` taken from
    /// the earlier rounds in `prior`.
    pub fn at_round(round: &RoundRecord, slot: usize, prior: &[&RoundRecord]) -> StateInput {
        let start = &round.round_start;
        let mates = round.teammates(slot);
        let opps = round.opponents(slot);
        let mut money = Vec::with_capacity(PLAYERS);
        money.push(start[slot].account);
        money.extend(mates.iter().filter(|&&s| s != slot).map(|&s| start[s].account));
        money.extend(opps.iter().map(|&s| start[s].account));
        let history = prior
            .iter()
            .map(|r| HistoryEntry {
                final_weapons: r.buy_end[slot].weapons.clone(),
                performance_score: r.round_end[slot].performance_score,
            })
            .collect();
        debug_assert_eq!(mates.len(), TEAM_SIZE);
        StateInput {
            own_weapons: start[slot].weapons.clone(),
            team_weapons: mates.iter().map(|&s| start[s].weapons.clone()).collect(),
            opp_weapons: opps.iter().map(|&s| start[s].weapons.clone()).collect(),
            money,
            history,
            budget: start[slot].account,
        }
    }

    /// Convenience for callers holding a whole match.
    pub fn from_match(m: &MatchRecord, round_pos: usize, slot: usize, eligible_prior: &[usize]) -> StateInput {
        let prior: Vec<&RoundRecord> = eligible_prior.iter().map(|&i| &m.rounds[i]).collect();
        StateInput::at_round(&m.rounds[round_pos], slot, &prior)
    }
}
