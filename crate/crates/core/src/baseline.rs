//! Training-free greedy purchasing: the most expensive affordable gun, then
//! grenades, then equipment.

use crate::catalog::{Catalog, Category, Dollars, Inventory, WeaponId};
use crate::sequence::ActionSequence;

/// Most expensive weapon of `category` that `cash` and `inventory` allow;
/// ties go to the lowest id.
fn best_affordable(catalog: &Catalog, category: Category, cash: Dollars, inventory: &Inventory) -> Option<WeaponId> {
    catalog
        .in_category(category)
        .filter(|w| catalog.can_buy(w.id, cash, inventory))
        .min_by_key(|w| (std::cmp::Reverse(w.price), w.id))
        .map(|w| w.id)
}

pub fn greedy_purchase(catalog: &Catalog, cash: Dollars, inventory: &Inventory) -> ActionSequence {
    let mut cash = cash;
    let mut inventory = inventory.clone();
    let mut bought = Vec::new();
    let mut buy = |id: WeaponId, cash: &mut Dollars, inventory: &mut Inventory| {
        *cash -= catalog.price(id);
        inventory.add(id);
        bought.push(id);
    };
    if let Some(id) = best_affordable(catalog, Category::Gun, cash, &inventory) {
        buy(id, &mut cash, &mut inventory);
    }
    for category in [Category::Grenade, Category::Equipment] {
        while let Some(id) = best_affordable(catalog, category, cash, &inventory) {
            buy(id, &mut cash, &mut inventory);
        }
    }
    ActionSequence::from_purchases(bought, catalog)
}
