use std::fmt::Write as _;

use serde::Serialize;

use super::records::MatchRecord;
use crate::catalog::{Catalog, Category};
use crate::error::{Error, Result};

/// Per-category distribution of purchases per (player, round), bucketed
/// 0, 1, 2, 3, 4+.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurchaseCountStats {
    /// `counts[category][bucket]`
    pub counts: [[u64; 5]; 3],
    pub pairs: u64,
}

impl PurchaseCountStats {
    pub fn frequency(&self, category: Category, bucket: usize) -> f64 {
        self.counts[category.index()][bucket] as f64 / self.pairs as f64
    }

    pub fn row(&self, category: Category) -> [f64; 5] {
        std::array::from_fn(|b| self.frequency(category, b))
    }

    /// Plain-text table: one row per category, one column per count.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>7} {:>7} {:>7} {:>7} {:>7}", "Type", "0", "1", "2", "3", "4");
        for category in Category::ALL {
            let label = match category {
                Category::Gun => "Gun",
                Category::Grenade => "Grenade",
                Category::Equipment => "Equipment",
            };
            let _ = write!(out, "{label:<10}");
            for f in self.row(category) {
                let _ = write!(out, " {:>6.1}%", 100.0 * f);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "({} player-rounds)", self.pairs);
        out
    }
}

pub fn purchase_count_stats(matches: &[MatchRecord], catalog: &Catalog) -> Result<PurchaseCountStats> {
    let mut counts = [[0u64; 5]; 3];
    let mut pairs = 0u64;
    for m in matches {
        for round in &m.rounds {
            for purchases in &round.purchases {
                let mut per = [0usize; 3];
                for &id in purchases {
                    per[catalog.weapon(id)?.category.index()] += 1;
                }
                for (c, n) in per.iter().enumerate() {
                    counts[c][(*n).min(4)] += 1;
                }
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::EmptyInput("no player-rounds to count"));
    }
    Ok(PurchaseCountStats { counts, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::{one_round_match, simple_catalog};

    #[test]
    fn single_rifle_round() {
        let cat = simple_catalog();
        let mut m = one_round_match(&cat, vec![1], 2700);
        // keep only slot 0's pair by counting one round with one player
        m.rounds[0].purchases.truncate(1);
        let s = purchase_count_stats(&[m], &cat).unwrap();
        assert_eq!(s.row(Category::Gun), [0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.row(Category::Grenade), [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.row(Category::Equipment), [1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn equipment_zero_and_two() {
        let cat = simple_catalog();
        let mut m = one_round_match(&cat, vec![], 0);
        m.rounds[0].purchases = vec![vec![], vec![4, 5]];
        let s = purchase_count_stats(&[m], &cat).unwrap();
        assert_eq!(s.row(Category::Equipment), [0.5, 0.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn rows_sum_to_one_and_empty_errors() {
        let cat = simple_catalog();
        let m = one_round_match(&cat, vec![1, 2], 2900);
        let s = purchase_count_stats(&[m], &cat).unwrap();
        for c in Category::ALL {
            assert!((s.row(c).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(purchase_count_stats(&[], &cat).is_err());
        assert!(s.to_table().starts_with("Type"));
    }
}
