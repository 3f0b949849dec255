use serde::Serialize;

use super::records::{CapturePoint, MatchRecord};
use crate::catalog::Catalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RejectReason {
    /// Purchase-label prices do not add up to the recorded `cash_spent`.
    InconsistentSpend,
    NegativeAccount,
    NegativeCashSpent,
    NegativeItemsValue,
    NegativeScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub match_id: String,
    pub round_index: u32,
    pub player_slot: usize,
    pub reason: RejectReason,
}

/// Drops every match with an inconsistent or negative record. Survivors keep
/// their input order; the report holds the first offence of each dropped match.
pub fn clean_matches(matches: Vec<MatchRecord>, catalog: &Catalog) -> (Vec<MatchRecord>, Vec<Rejection>) {
    let mut kept = Vec::with_capacity(matches.len());
    let mut rejected = Vec::new();
    for m in matches {
        match first_violation(&m, catalog) {
            Some(r) => rejected.push(r),
            None => kept.push(m),
        }
    }
    (kept, rejected)
}

fn first_violation(m: &MatchRecord, catalog: &Catalog) -> Option<Rejection> {
    let reject = |round_index, player_slot, reason| {
        Some(Rejection {
            match_id: m.match_id.clone(),
            round_index,
            player_slot,
            reason,
        })
    };
    for round in &m.rounds {
        for point in [CapturePoint::RoundStart, CapturePoint::BuyEnd, CapturePoint::RoundEnd] {
            for s in round.snapshots(point) {
                let reason = if s.account < 0 {
                    Some(RejectReason::NegativeAccount)
                } else if s.cash_spent < 0 {
                    Some(RejectReason::NegativeCashSpent)
                } else if s.items_value < 0 {
                    Some(RejectReason::NegativeItemsValue)
                } else if s.performance_score.is_nan() || s.performance_score < 0.0 {
                    Some(RejectReason::NegativeScore)
                } else {
                    None
                };
                if let Some(reason) = reason {
                    return reject(round.round_index, s.player_slot, reason);
                }
            }
        }
        for (slot, purchases) in round.purchases.iter().enumerate() {
            let spent: i64 = purchases.iter().map(|&id| catalog.price(id)).sum();
            if spent != round.buy_end[slot].cash_spent {
                return reject(round.round_index, slot, RejectReason::InconsistentSpend);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::{one_round_match, simple_catalog};

    #[test]
    fn consistent_spend_kept() {
        let cat = simple_catalog();
        let m = one_round_match(&cat, vec![1], 2700);
        let (kept, rejected) = clean_matches(vec![m], &cat);
        assert_eq!(kept.len(), 1);
        assert!(rejected.is_empty());
    }

    #[test]
    fn inconsistent_spend_dropped() {
        let cat = simple_catalog();
        let m = one_round_match(&cat, vec![1], 2000);
        let (kept, rejected) = clean_matches(vec![m], &cat);
        assert!(kept.is_empty());
        assert_eq!(rejected[0].reason, RejectReason::InconsistentSpend);
        assert_eq!(rejected[0].player_slot, 0);
    }

    #[test]
    fn negative_account_dropped() {
        let cat = simple_catalog();
        let mut m = one_round_match(&cat, vec![1], 2700);
        m.rounds[0].round_end[3].account = -50;
        let (kept, rejected) = clean_matches(vec![m], &cat);
        assert!(kept.is_empty());
        assert_eq!(rejected[0].reason, RejectReason::NegativeAccount);
        assert_eq!(rejected[0].player_slot, 3);
    }

    #[test]
    fn order_preserved() {
        let cat = simple_catalog();
        let mut a = one_round_match(&cat, vec![], 0);
        a.match_id = "a".into();
        let mut b = one_round_match(&cat, vec![1], 1);
        b.match_id = "b".into();
        let mut c = one_round_match(&cat, vec![], 0);
        c.match_id = "c".into();
        let (kept, _) = clean_matches(vec![a, b, c], &cat);
        let ids: Vec<_> = kept.iter().map(|m| m.match_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
    }
}
