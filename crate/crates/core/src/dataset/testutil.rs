use super::records::{MatchRecord, PlayerRoundSnapshot, RoundRecord, Side, PLAYERS, SIDE_SWAP_ROUND};
use crate::catalog::fixtures::spec;
use crate::catalog::{Catalog, Category, Dollars, Inventory, WeaponId, DEFAULT_GRENADE_CAP, DEFAULT_MAX_CASH};

/// pistol 500, rifle 2700, flash 200 (limit 2), smoke 300, vest 650, kit 400.
pub fn simple_catalog() -> Catalog {
    Catalog::new(
        vec![
            spec(0, "pistol", Category::Gun, 500, 1),
            spec(1, "rifle", Category::Gun, 2700, 1),
            spec(2, "flash", Category::Grenade, 200, 2),
            spec(3, "smoke", Category::Grenade, 300, 1),
            spec(4, "vest", Category::Equipment, 650, 1),
            spec(5, "kit", Category::Equipment, 400, 1),
        ],
        DEFAULT_MAX_CASH,
        DEFAULT_GRENADE_CAP,
    )
    .unwrap()
}

fn snapshot(slot: usize, team: Side, account: Dollars, spent: Dollars, weapons: Inventory, score: f64) -> PlayerRoundSnapshot {
    PlayerRoundSnapshot {
        player_slot: slot,
        team,
        account,
        cash_spent: spent,
        weapons,
        items_value: 0,
        performance_score: score,
    }
}

fn round(catalog: &Catalog, round_index: u32, slot0: (Vec<WeaponId>, Dollars)) -> RoundRecord {
    let first_half = round_index < SIDE_SWAP_ROUND;
    let mut rs = Vec::new();
    let mut be = Vec::new();
    let mut re = Vec::new();
    let mut purchases = Vec::new();
    for slot in 0..PLAYERS {
        let team = if (slot < 5) == first_half { Side::T } else { Side::Ct };
        let (bought, spent) = if slot == 0 { slot0.clone() } else { (vec![], 0) };
        let inv = Inventory::from_ids(&bought);
        let account = 4000 + 100 * slot as Dollars;
        let mut rs_snap = snapshot(slot, team, account, 0, Inventory::new(), 0.0);
        rs_snap.items_value = 0;
        rs.push(rs_snap);
        let mut be_snap = snapshot(slot, team, account - spent, spent, inv.clone(), 0.0);
        be_snap.items_value = catalog.cost(&bought).unwrap();
        be.push(be_snap);
        re.push(snapshot(slot, team, account - spent, spent, inv, round_index as f64));
        purchases.push(bought);
    }
    RoundRecord {
        round_index,
        round_start: rs,
        buy_end: be,
        round_end: re,
        purchases,
    }
}

/// One round where slot 0 buys `purchases` and reports `cash_spent`; all
/// other players buy nothing.
pub fn one_round_match(catalog: &Catalog, purchases: Vec<WeaponId>, cash_spent: Dollars) -> MatchRecord {
    MatchRecord {
        match_id: "m0".into(),
        rounds: vec![round(catalog, 1, (purchases, cash_spent))],
    }
}

/// Rounds `1..=n`; slot 0 buys the rifle in odd rounds.
pub fn n_round_match(catalog: &Catalog, n: u32) -> MatchRecord {
    MatchRecord {
        match_id: format!("m{n}"),
        rounds: (1..=n)
            .map(|r| {
                let buy = if r % 2 == 1 { vec![1] } else { vec![] };
                let spent = catalog.cost(&buy).unwrap();
                round(catalog, r, (buy, spent))
            })
            .collect(),
    }
}
