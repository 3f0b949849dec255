//! The weapon economy: identities, prices, quantity limits and the
//! legality mask shared by the decoders and the greedy baseline.
//!
//! Action vocabulary layout: weapon purchase actions occupy ids
//! `0..n_weapons` (the catalog ids), followed by `End` and `Start`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type WeaponId = usize;
pub type Dollars = i64;

/// Atomic action id: a weapon id, or one of the two control tokens.
pub type ActionId = usize;

pub const DEFAULT_MAX_CASH: Dollars = 16000;
pub const DEFAULT_GRENADE_CAP: u32 = 4;

const DEFAULT_CATALOG: &str = include_str!("../data/catalog.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Gun,
    Grenade,
    Equipment,
}

impl Category {
    /// Purchase order within a round.
    pub const ALL: [Category; 3] = [Category::Gun, Category::Grenade, Category::Equipment];

    pub fn index(self) -> usize {
        match self {
            Category::Gun => 0,
            Category::Grenade => 1,
            Category::Equipment => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Gun => "gun",
            Category::Grenade => "grenade",
            Category::Equipment => "equipment",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GunSubtype {
    Pistol,
    Shotgun,
    Smg,
    Rifle,
    Lmg,
    Sniper,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeaponSpec {
    pub id: WeaponId,
    pub name: String,
    pub category: Category,
    pub gun_subtype: Option<GunSubtype>,
    pub price: Dollars,
    pub quantity_limit: u32,
}

/// On-disk form; numeric fields are signed so invalid values can be reported.
#[derive(Debug, Deserialize)]
struct RawWeapon {
    id: usize,
    name: String,
    category: Category,
    #[serde(default)]
    gun_subtype: Option<GunSubtype>,
    price: i64,
    quantity_limit: i64,
}

#[derive(Debug, Deserialize)]
struct RawCatalog {
    #[serde(default)]
    #[allow(dead_code)]
    provenance: Option<String>,
    #[serde(default = "default_max_cash")]
    max_cash: Dollars,
    #[serde(default = "default_grenade_cap")]
    grenade_cap: u32,
    weapons: Vec<RawWeapon>,
}

fn default_max_cash() -> Dollars {
    DEFAULT_MAX_CASH
}

fn default_grenade_cap() -> u32 {
    DEFAULT_GRENADE_CAP
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    weapons: Vec<WeaponSpec>,
    max_cash: Dollars,
    grenade_cap: u32,
}

impl Catalog {
    /// Builds a catalog from weapon records, validating every invariant.
    pub fn new(mut weapons: Vec<WeaponSpec>, max_cash: Dollars, grenade_cap: u32) -> Result<Self> {
        if weapons.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        if max_cash <= 0 {
            return Err(Error::Config(format!("max_cash must be positive, got {max_cash}")));
        }
        for w in &weapons {
            if w.price < 0 {
                return Err(Error::InvalidPrice { id: w.id, price: w.price });
            }
            if w.quantity_limit < 1 {
                return Err(Error::InvalidQuantityLimit {
                    id: w.id,
                    limit: w.quantity_limit as i64,
                });
            }
            if w.gun_subtype.is_some() != (w.category == Category::Gun) {
                return Err(Error::SubtypeMismatch { id: w.id });
            }
        }
        weapons.sort_by_key(|w| w.id);
        for pair in weapons.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateId(pair[0].id));
            }
        }
        for (expected, w) in weapons.iter().enumerate() {
            if w.id != expected {
                return Err(Error::NonContiguousIds(expected));
            }
        }
        Ok(Catalog {
            weapons,
            max_cash,
            grenade_cap,
        })
    }

    /// Parses a JSON catalog document (see `data/catalog.json`).
    pub fn from_json_str(doc: &str) -> Result<Self> {
        let raw: RawCatalog = serde_json::from_str(doc)?;
        let mut weapons = Vec::with_capacity(raw.weapons.len());
        for w in raw.weapons {
            if w.price < 0 {
                return Err(Error::InvalidPrice { id: w.id, price: w.price });
            }
            if w.quantity_limit < 1 || w.quantity_limit > u32::MAX as i64 {
                return Err(Error::InvalidQuantityLimit {
                    id: w.id,
                    limit: w.quantity_limit,
                });
            }
            weapons.push(WeaponSpec {
                id: w.id,
                name: w.name,
                category: w.category,
                gun_subtype: w.gun_subtype,
                price: w.price,
                quantity_limit: w.quantity_limit as u32,
            });
        }
        Catalog::new(weapons, raw.max_cash, raw.grenade_cap)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Catalog::from_json_str(&doc)
    }

    /// The shipped 44-weapon fixture.
    pub fn default_fixture() -> Self {
        Catalog::from_json_str(DEFAULT_CATALOG).expect("bundled catalog fixture is valid")
    }

    pub fn to_json_string(&self) -> String {
        let mut out = String::from("{\n");
        out.push_str(&format!("  \"max_cash\": {},\n", self.max_cash));
        out.push_str(&format!("  \"grenade_cap\": {},\n", self.grenade_cap));
        out.push_str("  \"weapons\": [\n");
        for (i, w) in self.weapons.iter().enumerate() {
            let line = serde_json::to_string(w).expect("weapon spec serializes");
            out.push_str("    ");
            out.push_str(&line);
            out.push_str(if i + 1 < self.weapons.len() { ",\n" } else { "\n" });
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn weapons(&self) -> &[WeaponSpec] {
        &self.weapons
    }

    pub fn len(&self) -> usize {
        self.weapons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weapons.is_empty()
    }

    pub fn max_cash(&self) -> Dollars {
        self.max_cash
    }

    pub fn grenade_cap(&self) -> u32 {
        self.grenade_cap
    }

    pub fn get(&self, id: WeaponId) -> Option<&WeaponSpec> {
        self.weapons.get(id)
    }

    pub fn weapon(&self, id: WeaponId) -> Result<&WeaponSpec> {
        self.get(id).ok_or(Error::UnknownWeapon(id))
    }

    pub fn price(&self, id: WeaponId) -> Dollars {
        self.weapons[id].price
    }

    pub fn category(&self, id: WeaponId) -> Category {
        self.weapons[id].category
    }

    pub fn in_category(&self, category: Category) -> impl Iterator<Item = &WeaponSpec> {
        self.weapons.iter().filter(move |w| w.category == category)
    }

    pub fn end_action(&self) -> ActionId {
        self.weapons.len()
    }

    pub fn start_action(&self) -> ActionId {
        self.weapons.len() + 1
    }

    pub fn vocab_size(&self) -> usize {
        self.weapons.len() + 2
    }

    pub fn is_weapon_action(&self, action: ActionId) -> bool {
        action < self.weapons.len()
    }

    /// Category of a weapon action; `None` for control tokens.
    pub fn action_category(&self, action: ActionId) -> Option<Category> {
        self.weapons.get(action).map(|w| w.category)
    }

    pub fn max_price(&self) -> Dollars {
        self.weapons.iter().map(|w| w.price).max().unwrap_or(0)
    }

    /// Total cost of a list of weapon ids.
    pub fn cost(&self, ids: &[WeaponId]) -> Result<Dollars> {
        ids.iter()
            .map(|&id| self.weapon(id).map(|w| w.price))
            .sum()
    }

    /// Whether buying `id` is allowed right now.
    pub fn can_buy(&self, id: WeaponId, cash: Dollars, inventory: &Inventory) -> bool {
        let w = &self.weapons[id];
        if w.price > cash || inventory.count(id) >= w.quantity_limit {
            return false;
        }
        if w.category == Category::Grenade && inventory.category_count(self, Category::Grenade) >= self.grenade_cap {
            return false;
        }
        true
    }

    /// Validates an inventory against per-weapon limits and the grenade cap.
    pub fn check_inventory(&self, inventory: &Inventory) -> Result<()> {
        for (&id, &count) in &inventory.counts {
            let w = self.weapon(id)?;
            if count > w.quantity_limit {
                return Err(Error::InventoryOverLimit { id, count });
            }
        }
        let grenades = inventory.category_count(self, Category::Grenade);
        if grenades > self.grenade_cap {
            return Err(Error::Config(format!(
                "inventory holds {grenades} grenades, cap is {}",
                self.grenade_cap
            )));
        }
        Ok(())
    }
}

/// Weapons currently held: weapon id -> count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Inventory {
    counts: BTreeMap<WeaponId, u32>,
}

impl Inventory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an inventory from a weapon list with repetitions.
    pub fn from_ids(ids: &[WeaponId]) -> Self {
        let mut inv = Inventory::new();
        for &id in ids {
            inv.add(id);
        }
        inv
    }

    pub fn count(&self, id: WeaponId) -> u32 {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    pub fn add(&mut self, id: WeaponId) {
        *self.counts.entry(id).or_insert(0) += 1;
    }

    pub fn remove(&mut self, id: WeaponId) -> bool {
        match self.counts.get_mut(&id) {
            Some(c) if *c > 1 => {
                *c -= 1;
                true
            }
            Some(_) => {
                self.counts.remove(&id);
                true
            }
            None => false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn category_count(&self, catalog: &Catalog, category: Category) -> u32 {
        self.counts
            .iter()
            .filter(|(&id, _)| catalog.get(id).is_some_and(|w| w.category == category))
            .map(|(_, &c)| c)
            .sum()
    }

    /// Held weapons expanded by multiplicity, ascending id.
    pub fn ids(&self) -> Vec<WeaponId> {
        self.counts
            .iter()
            .flat_map(|(&id, &c)| std::iter::repeat_n(id, c as usize))
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (WeaponId, u32)> + '_ {
        self.counts.iter().map(|(&id, &c)| (id, c))
    }
}

/// Boolean mask over the action vocabulary. A weapon action is legal iff it
/// is affordable, below its quantity limit (and the aggregate grenade cap),
/// and matches `category` when a filter is given. `End` is always legal;
/// `Start` never is.
pub fn legal_action_mask(
    catalog: &Catalog,
    cash: Dollars,
    inventory: &Inventory,
    category: Option<Category>,
) -> Vec<bool> {
    let grenades_full = inventory.category_count(catalog, Category::Grenade) >= catalog.grenade_cap;
    let mut mask = Vec::with_capacity(catalog.vocab_size());
    for w in &catalog.weapons {
        let legal = w.price <= cash
            && inventory.count(w.id) < w.quantity_limit
            && !(w.category == Category::Grenade && grenades_full)
            && category.is_none_or(|c| c == w.category);
        mask.push(legal);
    }
    mask.push(true);
    mask.push(false);
    mask
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn spec(id: usize, name: &str, category: Category, price: Dollars, limit: u32) -> WeaponSpec {
        WeaponSpec {
            id,
            name: name.to_string(),
            category,
            gun_subtype: (category == Category::Gun).then_some(GunSubtype::Rifle),
            price,
            quantity_limit: limit,
        }
    }

    /// pistol 500, rifle 2700, flash 200 (limit 2), smoke 300, vest 650.
    pub fn small() -> Catalog {
        Catalog::new(
            vec![
                spec(0, "pistol", Category::Gun, 500, 1),
                spec(1, "rifle", Category::Gun, 2700, 1),
                spec(2, "flash", Category::Grenade, 200, 2),
                spec(3, "smoke", Category::Grenade, 300, 1),
                spec(4, "vest", Category::Equipment, 650, 1),
            ],
            DEFAULT_MAX_CASH,
            DEFAULT_GRENADE_CAP,
        )
        .unwrap()
    }
}
