use serde::{Deserialize, Serialize};

use crate::catalog::{ActionId, Catalog, Category, Dollars, WeaponId};

/// Ordered atomic purchase actions terminated by a single `End`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSequence {
    actions: Vec<ActionId>,
}

impl ActionSequence {
    /// Appends `End` to `purchases`, which must all be weapon actions.
    pub fn from_purchases(purchases: Vec<WeaponId>, catalog: &Catalog) -> Self {
        debug_assert!(purchases.iter().all(|&a| catalog.is_weapon_action(a)));
        let mut actions = purchases;
        actions.push(catalog.end_action());
        ActionSequence { actions }
    }

    pub fn end_only(catalog: &Catalog) -> Self {
        ActionSequence {
            actions: vec![catalog.end_action()],
        }
    }

    /// Every action including the trailing `End`.
    pub fn actions(&self) -> &[ActionId] {
        &self.actions
    }

    /// Purchases only (the trailing `End` dropped).
    pub fn purchases(&self) -> &[WeaponId] {
        &self.actions[..self.actions.len().saturating_sub(1)]
    }

    pub fn is_empty_purchase(&self) -> bool {
        self.actions.len() <= 1
    }

    pub fn in_category(&self, catalog: &Catalog, category: Category) -> Vec<WeaponId> {
        self.purchases()
            .iter()
            .copied()
            .filter(|&a| catalog.action_category(a) == Some(category))
            .collect()
    }

    pub fn has_category(&self, catalog: &Catalog, category: Category) -> bool {
        self.purchases()
            .iter()
            .any(|&a| catalog.action_category(a) == Some(category))
    }

    pub fn cost(&self, catalog: &Catalog) -> Dollars {
        self.purchases().iter().map(|&a| catalog.price(a)).sum()
    }

    pub fn names(&self, catalog: &Catalog) -> Vec<String> {
        self.actions
            .iter()
            .map(|&a| match catalog.get(a) {
                Some(w) => w.name.clone(),
                None if a == catalog.end_action() => "End".to_string(),
                None => "Start".to_string(),
            })
            .collect()
    }
}
