use crate::catalog::{Catalog, WeaponId};
use crate::error::Result;
use crate::sequence::ActionSequence;

/// Orders a purchase multiset into a label: guns, then grenades, then
/// equipment; descending price within a category; ascending id on ties.
pub fn label_sequence(purchases: &[WeaponId], catalog: &Catalog) -> Result<ActionSequence> {
    for &id in purchases {
        catalog.weapon(id)?;
    }
    let mut sorted = purchases.to_vec();
    sorted.sort_by_key(|&id| {
        let w = &catalog.weapons()[id];
        (w.category, std::cmp::Reverse(w.price), id)
    });
    Ok(ActionSequence::from_purchases(sorted, catalog))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::fixtures::small;
    use crate::error::Error;
    use proptest::prelude::*;

    #[test]
    fn category_then_price_order() {
        // small(): 0 pistol 500, 1 rifle 2700, 2 flash 200, 3 smoke 300, 4 vest 650
        let cat = small();
        let seq = label_sequence(&[2, 1, 4], &cat).unwrap();
        assert_eq!(seq.actions(), &[1, 2, 4, cat.end_action()]);
    }

    #[test]
    fn empty_is_end() {
        let cat = small();
        assert_eq!(label_sequence(&[], &cat).unwrap().actions(), &[cat.end_action()]);
    }

    #[test]
    fn equal_price_ties_by_id() {
        let cat = crate::catalog::Catalog::default_fixture();
        // HE Grenade (36) and Smoke Grenade (37) both cost 300
        assert_eq!(cat.price(36), cat.price(37));
        let seq = label_sequence(&[37, 36], &cat).unwrap();
        assert_eq!(seq.purchases(), &[36, 37]);
    }

    #[test]
    fn unknown_weapon() {
        assert!(matches!(label_sequence(&[99], &small()), Err(Error::UnknownWeapon(99))));
    }

    proptest! {
        #[test]
        fn idempotent_and_permutation_stable(mut ids in proptest::collection::vec(0usize..44, 0..8), seed in any::<u64>()) {
            let cat = crate::catalog::Catalog::default_fixture();
            let a = label_sequence(&ids, &cat).unwrap();
            let again = label_sequence(a.purchases(), &cat).unwrap();
            prop_assert_eq!(&a, &again);
            use rand::{seq::SliceRandom, SeedableRng};
            ids.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, label_sequence(&ids, &cat).unwrap());
        }
    }
}
