//! Synthetic matches with recoverable per-player purchase preferences.
//!
//! Every player is assigned one of a fixed number of preference profiles: a
//! ranking of the weapons within each category. Each round the player draws
//! one economy level `u ~ U(0, 1)`; the gun, grenade and equipment counts are
//! the inverse CDFs of the configured count distributions at `u`, so each
//! count's marginal frequency matches its target while richer rounds buy
//! more of everything. Items are then picked greedily by preference under the
//! legality mask, and the round-start account is set to the purchase cost
//! plus a random slack, which keeps every label consistent with its spend.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::records::{MatchRecord, PlayerRoundSnapshot, RoundRecord, Side, PLAYERS, SIDE_SWAP_ROUND};
use crate::catalog::{Catalog, Category, Dollars, GunSubtype, Inventory, WeaponId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub rounds_per_match: u32,
    pub profiles: usize,
    /// Frequencies of buying 0, 1, 2, 3, 4 guns in a round.
    pub gun_count_freq: [f64; 5],
    pub grenade_count_freq: [f64; 5],
    pub equipment_count_freq: [f64; 5],
    pub survival_prob: f64,
    /// Unspent cash on top of the purchase cost is drawn from `[0, slack_max]`.
    pub slack_max: Dollars,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rounds_per_match: 30,
            profiles: 4,
            gun_count_freq: [0.359, 0.616, 0.024, 0.001, 0.0],
            grenade_count_freq: [0.194, 0.126, 0.146, 0.164, 0.370],
            equipment_count_freq: [0.383, 0.503, 0.107, 0.007, 0.0],
            survival_prob: 0.4,
            slack_max: 800,
        }
    }
}

/// Per-category weapon rankings, most preferred first.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceProfile {
    pub ranking: [Vec<WeaponId>; 3],
}

impl PreferenceProfile {
    fn random(catalog: &Catalog, rng: &mut ChaCha8Rng) -> Self {
        let rank = |category: Category, rng: &mut ChaCha8Rng| {
            let mut scored: Vec<(f64, WeaponId)> = catalog
                .in_category(category)
                .map(|w| {
                    // primary guns are preferred over pistols by every profile
                    let bonus = match w.gun_subtype {
                        Some(GunSubtype::Pistol) => 0.0,
                        Some(_) => 1.0,
                        None => 0.0,
                    };
                    (rng.gen::<f64>() + bonus, w.id)
                })
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            scored.into_iter().map(|(_, id)| id).collect::<Vec<_>>()
        };
        let guns = rank(Category::Gun, rng);
        let grenades = rank(Category::Grenade, rng);
        let equipment = rank(Category::Equipment, rng);
        PreferenceProfile {
            ranking: [guns, grenades, equipment],
        }
    }

    /// Picks `count` items of `category` greedily by preference; stops early
    /// when nothing is legal.
    fn pick(&self, catalog: &Catalog, category: Category, count: usize, inventory: &mut Inventory) -> Vec<WeaponId> {
        let mut bought = Vec::new();
        for _ in 0..count {
            let next = self.ranking[category.index()]
                .iter()
                .copied()
                .find(|&id| catalog.can_buy(id, Dollars::MAX, inventory));
            match next {
                Some(id) => {
                    inventory.add(id);
                    bought.push(id);
                }
                None => break,
            }
        }
        bought
    }
}

/// Smallest `k` with `cdf(k) > u`.
fn inverse_cdf(freq: &[f64; 5], u: f64) -> usize {
    let total: f64 = freq.iter().sum();
    let mut acc = 0.0;
    for (k, f) in freq.iter().enumerate() {
        acc += f / total;
        if u < acc {
            return k;
        }
    }
    freq.iter().rposition(|&f| f > 0.0).unwrap_or(0)
}

fn items_value(catalog: &Catalog, inv: &Inventory) -> Dollars {
    inv.iter().map(|(id, c)| catalog.price(id) * c as Dollars).sum()
}

pub fn synth_matches(seed: u64, n_matches: usize, catalog: &Catalog, profiles: usize) -> Vec<MatchRecord> {
    let config = SynthConfig {
        profiles,
        ..SynthConfig::default()
    };
    synth_matches_with(seed, n_matches, catalog, &config)
}

pub fn synth_matches_with(seed: u64, n_matches: usize, catalog: &Catalog, config: &SynthConfig) -> Vec<MatchRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles: Vec<PreferenceProfile> = (0..config.profiles.max(1))
        .map(|_| PreferenceProfile::random(catalog, &mut rng))
        .collect();
    (0..n_matches)
        .map(|i| {
            let match_seed = rng.gen::<u64>();
            synth_match(format!("synth-{seed}-{i:05}"), match_seed, catalog, config, &profiles)
        })
        .collect()
}

fn synth_match(
    match_id: String,
    seed: u64,
    catalog: &Catalog,
    config: &SynthConfig,
    profiles: &[PreferenceProfile],
) -> MatchRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assigned: Vec<usize> = (0..PLAYERS).map(|_| rng.gen_range(0..profiles.len())).collect();
    let mut carried: Vec<Inventory> = vec![Inventory::new(); PLAYERS];
    let mut rounds = Vec::with_capacity(config.rounds_per_match as usize);
    for round_index in 1..=config.rounds_per_match.min(30) {
        let first_half = round_index < SIDE_SWAP_ROUND;
        if round_index == 1 || round_index == SIDE_SWAP_ROUND {
            carried = vec![Inventory::new(); PLAYERS];
        }
        let mut round_start = Vec::with_capacity(PLAYERS);
        let mut buy_end = Vec::with_capacity(PLAYERS);
        let mut round_end = Vec::with_capacity(PLAYERS);
        let mut purchases = Vec::with_capacity(PLAYERS);
        for slot in 0..PLAYERS {
            let team = if (slot < 5) == first_half { Side::T } else { Side::Ct };
            let profile = &profiles[assigned[slot]];
            let start_inv = carried[slot].clone();
            let u: f64 = rng.gen();
            let mut inv = start_inv.clone();
            let mut bought = Vec::new();
            for (category, freq) in [
                (Category::Gun, &config.gun_count_freq),
                (Category::Grenade, &config.grenade_count_freq),
                (Category::Equipment, &config.equipment_count_freq),
            ] {
                bought.extend(profile.pick(catalog, category, inverse_cdf(freq, u), &mut inv));
            }
            let cost: Dollars = bought.iter().map(|&id| catalog.price(id)).sum();
            let slack = rng.gen_range(0..=config.slack_max.max(0));
            let account = (cost + slack).min(catalog.max_cash().max(cost));
            let score = f64::from(rng.gen_range(0u32..=4)) + if bought.is_empty() { 0.0 } else { 1.0 };
            let survived = rng.gen_bool(config.survival_prob.clamp(0.0, 1.0));
            let mut end_inv = Inventory::new();
            if survived {
                for (id, c) in inv.iter() {
                    if catalog.category(id) != Category::Grenade {
                        for _ in 0..c {
                            end_inv.add(id);
                        }
                    }
                }
            }
            let reward = rng.gen_range(1400..=3500);
            round_start.push(PlayerRoundSnapshot {
                player_slot: slot,
                team,
                account,
                cash_spent: 0,
                items_value: items_value(catalog, &start_inv),
                weapons: start_inv,
                performance_score: 0.0,
            });
            buy_end.push(PlayerRoundSnapshot {
                player_slot: slot,
                team,
                account: account - cost,
                cash_spent: cost,
                items_value: items_value(catalog, &inv),
                weapons: inv,
                performance_score: 0.0,
            });
            round_end.push(PlayerRoundSnapshot {
                player_slot: slot,
                team,
                account: (account - cost + reward).min(catalog.max_cash()),
                cash_spent: cost,
                items_value: items_value(catalog, &end_inv),
                weapons: end_inv.clone(),
                performance_score: score,
            });
            carried[slot] = end_inv;
            purchases.push(bought);
        }
        rounds.push(RoundRecord {
            round_index,
            round_start,
            buy_end,
            round_end,
            purchases,
        });
    }
    MatchRecord { match_id, rounds }
}
