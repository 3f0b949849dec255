use proptest::prelude::*;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{Graph, ParamStore, Tensor};
use crate::catalog::{Catalog, Category, Inventory};
use crate::dataset::{build_all_tasks, synth_matches};
use crate::state::{HistoryEntry, StateInput};

fn model() -> PolicyModel {
    PolicyModel::new(Catalog::default_fixture(), ModelConfig::default(), AblationFlags::default()).unwrap()
}

fn states(n_matches: usize, seed: u64) -> Vec<StateInput> {
    let cat = Catalog::default_fixture();
    let (tasks, _) = build_all_tasks(&synth_matches(seed, n_matches, &cat, 4), 5, &cat);
    tasks
        .into_iter()
        .flat_map(|t| t.support.into_iter().chain(t.target).map(|e| e.state))
        .collect()
}

fn zero(store: &mut ParamStore, name: &str) {
    let shape = store.tensor(name).unwrap().shape().to_vec();
    store.set(name, Tensor::zeros(shape)).unwrap();
}

fn set(store: &mut ParamStore, name: &str, data: Vec<f64>) {
    let shape = store.tensor(name).unwrap().shape().to_vec();
    store.set(name, Tensor::new(shape, data).unwrap()).unwrap();
}

fn unit_pool() -> ParamStore {
    let mut s = ParamStore::new();
    s.insert("p.w", Tensor::new(vec![1, 1], vec![1.0]).unwrap()).unwrap();
    s.insert("p.b", Tensor::new(vec![1], vec![0.0]).unwrap()).unwrap();
    s.insert("p.v", Tensor::new(vec![1, 1], vec![1.0]).unwrap()).unwrap();
    s
}

#[test]
fn attention_single_and_identical_items() {
    let m = model();
    let store = m.init_params(1).unwrap();
    let mut g = Graph::new();
    let x = g.vector((0..32).map(|i| i as f64 * 0.1).collect());
    let out = attention_pool(&mut g, &store, "weapon_pool", &[x]).unwrap();
    assert_eq!(g.value(out), g.value(x));
    let copies = attention_pool(&mut g, &store, "weapon_pool", &[x, x, x]).unwrap();
    for (a, b) in g.value(copies).iter().zip(g.value(x)) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn attention_hand_example() {
    let store = unit_pool();
    let mut g = Graph::new();
    let a = g.vector(vec![0.5]);
    let b = g.vector(vec![-0.5]);
    let out = attention_pool(&mut g, &store, "p", &[a, b]).unwrap();
    let (sa, sb) = (0.5f64.tanh().exp(), (-0.5f64).tanh().exp());
    let alpha = sa / (sa + sb);
    let expect = alpha * 0.5 + (1.0 - alpha) * -0.5;
    assert!((g.value(out)[0] - expect).abs() < 1e-15);
    // the quoted figures are truncated to four places
    assert!((alpha - 0.7158).abs() < 2e-4);
    assert!((g.value(out)[0] - 0.2158).abs() < 2e-4);
}

#[test]
fn attention_rejects_bad_input() {
    let store = unit_pool();
    let mut g = Graph::new();
    assert!(attention_pool(&mut g, &store, "p", &[]).is_err());
    let x = g.vector(vec![1.0, 2.0]);
    assert!(attention_pool(&mut g, &store, "p", &[x]).is_err());
}

#[test]
fn history_weight_examples() {
    assert_eq!(history_weights(&[5.0]), [1.0]);
    assert_eq!(history_weights(&[2.0, 2.0]), [0.5, 0.5]);
    assert_eq!(history_weights(&[1.0, 3.0]), [0.25, 0.75]);
    assert_eq!(history_weights(&[0.0, 0.0, 0.0, 0.0]), [0.25; 4]);
}

#[test]
fn round_attr_single_round_is_its_pooled_vector() {
    let m = model();
    let store = m.init_params(2).unwrap();
    let entry = HistoryEntry {
        final_weapons: Inventory::from_ids(&[24, 41]),
        performance_score: 3.0,
    };
    let mut g = Graph::new();
    let h_r = m.round_attr_encode(&mut g, &store, std::slice::from_ref(&entry)).unwrap();
    let pooled = m.pool_inventory(&mut g, &store, &entry.final_weapons).unwrap();
    assert_eq!(g.value(h_r), g.value(pooled));
    let empty = m.round_attr_encode(&mut g, &store, &[]).unwrap();
    assert_eq!(g.value(empty), store.tensor("rae.null").unwrap().data());
}

#[test]
fn rae_off_uses_null_vector() {
    let mut m = model();
    m.flags.rae = false;
    let store = m.init_params(2).unwrap();
    let s = states(1, 4).into_iter().find(|s| !s.history.is_empty()).unwrap();
    let mut g = Graph::new();
    let enc = m.encode(&mut g, &store, &s).unwrap();
    assert_eq!(g.value(enc.h_r), store.tensor("rae.null").unwrap().data());
}

#[test]
fn economy_examples() {
    let m = model();
    let mut store = m.init_params(3).unwrap();
    // one hidden unit sums the normalized inputs; output 0 copies it
    let eh = m.config.economy_hidden;
    let mut w1 = vec![0.0; eh * 10];
    w1[..10].iter_mut().for_each(|w| *w = 1.0);
    set(&mut store, "economy.w1", w1);
    let mut w2 = vec![0.0; m.config.d_c * eh];
    w2[0] = 1.0;
    set(&mut store, "economy.w2", w2);
    let mut g = Graph::new();
    let out = m.economy_encode(&mut g, &store, &[16_000; 10]).unwrap();
    assert!((g.value(out)[0] - 10.0).abs() < 1e-12);

    zero(&mut store, "economy.w1");
    zero(&mut store, "economy.w2");
    let bias: Vec<f64> = (0..m.config.d_c).map(|i| i as f64 - 3.0).collect();
    set(&mut store, "economy.b2", bias.clone());
    let mut g = Graph::new();
    let out = m.economy_encode(&mut g, &store, &[1234; 10]).unwrap();
    assert_eq!(g.value(out), bias.as_slice());

    assert!(matches!(
        m.economy_encode(&mut g, &store, &[0; 9]),
        Err(crate::Error::WrongArity { expected: 10, got: 9, .. })
    ));
}

#[test]
fn state_repr_shape_and_zero_case() {
    let m = model();
    let mut store = m.init_params(4).unwrap();
    let s = &states(1, 1)[7];
    let mut g = Graph::new();
    let h = m.state_repr(&mut g, &store, s).unwrap();
    assert_eq!(g.value(h).len(), m.config.d_h);
    zero(&mut store, "state.w1");
    let mut g = Graph::new();
    let h = m.state_repr(&mut g, &store, s).unwrap();
    assert!(g.value(h).iter().all(|&x| x == 0.0));
}

#[test]
fn invalid_states_rejected() {
    let m = model();
    let store = m.init_params(4).unwrap();
    let base = states(1, 1)[0].clone();
    let mut s = base.clone();
    s.money.pop();
    assert!(m.generate(&store, &s, &mut DecodeMode::Greedy).is_err());
    let mut s = base.clone();
    s.team_weapons.pop();
    assert!(m.generate(&store, &s, &mut DecodeMode::Greedy).is_err());
    let mut s = base;
    s.history.push(HistoryEntry {
        final_weapons: Inventory::new(),
        performance_score: -1.0,
    });
    assert!(m.generate(&store, &s, &mut DecodeMode::Greedy).is_err());
}

#[test]
fn gate_examples() {
    let m = model();
    let mut store = m.init_params(5).unwrap();
    let s = &states(1, 2)[3];
    for c in Category::ALL {
        zero(&mut store, &format!("gate.{}.w2", c.name()));
    }
    let p = m.gate_forward(&store, s).unwrap();
    assert_eq!(p, [0.5; 3]);
    assert_eq!(gate_decisions(p), [true; 3]);
    set(&mut store, "gate.gun.b2", vec![10.0]);
    assert!(m.gate_forward(&store, s).unwrap()[0] > 0.9999);
    assert_eq!(gate_decisions([0.6, 0.4, 0.5]), [true, false, true]);
}

#[test]
fn all_gates_closed_gives_end() {
    let m = model();
    let mut store = m.init_params(5).unwrap();
    for c in Category::ALL {
        zero(&mut store, &format!("gate.{}.w2", c.name()));
        set(&mut store, &format!("gate.{}.b2", c.name()), vec![-10.0]);
    }
    for s in states(1, 3).iter().take(20) {
        let seq = m.generate(&store, s, &mut DecodeMode::Greedy).unwrap();
        assert_eq!(seq.actions(), &[m.catalog.end_action()]);
    }
}

fn flat_decoders(store: &mut ParamStore) {
    // zero output weights give equal logits, so greedy picks the lowest legal id
    for c in Category::ALL {
        zero(store, &format!("decoder.{}.out2", c.name()));
    }
}

#[test]
fn budget_zero_emits_end() {
    let m = model();
    let store = m.init_params(6).unwrap();
    let mut s = states(1, 3)[0].clone();
    s.budget = 0;
    let mut g = Graph::new();
    let h = m.state_repr(&mut g, &store, &s).unwrap();
    for c in Category::ALL {
        let mut cash = 0;
        let mut inv = s.own_weapons.clone();
        let seg = m
            .decode_segment(&mut g, &store, h, Some(c), &mut cash, &mut inv, &mut DecodeMode::Greedy, [true; 3])
            .unwrap();
        assert_eq!(seg.actions, [m.catalog.end_action()]);
        assert_eq!(seg.spent, 0);
    }
}

#[test]
fn fifth_step_is_forced_end() {
    let m = model();
    let mut store = m.init_params(6).unwrap();
    flat_decoders(&mut store);
    let mut s = states(1, 3)[0].clone();
    s.own_weapons = Inventory::new();
    s.budget = 16_000;
    let mut g = Graph::new();
    let h = m.state_repr(&mut g, &store, &s).unwrap();
    let mut cash = s.budget;
    let mut inv = Inventory::new();
    let seg = m
        .decode_segment(&mut g, &store, h, Some(Category::Gun), &mut cash, &mut inv, &mut DecodeMode::Greedy, [true; 3])
        .unwrap();
    assert_eq!(seg.actions, [0, 1, 2, 3, m.catalog.end_action()]);
    assert_eq!(g.value(seg.log_probs[4]), &[0.0]);
    assert_eq!(seg.spent, 200 + 200 + 200 + 400);
    assert_eq!(cash, 16_000 - seg.spent);
}

#[test]
fn gun_spending_everything_starves_later_decoders() {
    let m = model();
    let mut store = m.init_params(6).unwrap();
    flat_decoders(&mut store);
    let mut s = states(1, 3)[0].clone();
    s.own_weapons = Inventory::new();
    s.budget = 200;
    let mut g = Graph::new();
    let h = m.state_repr(&mut g, &store, &s).unwrap();
    let r = m.rollout(&mut g, &store, &s, h, &mut DecodeMode::Greedy, [true; 3]).unwrap();
    let end = m.catalog.end_action();
    assert_eq!(r.segments[0].1.actions, [0, end]);
    assert_eq!(r.segments[1].1.actions, [end]);
    assert_eq!(r.segments[2].1.actions, [end]);
    assert_eq!(r.sequence.actions(), &[0, end]);
    assert_eq!(r.spent, 200);
}

#[test]
fn greedy_is_deterministic() {
    let m = model();
    let store = m.init_params(7).unwrap();
    for s in states(1, 5).iter().take(10) {
        let a = m.generate(&store, s, &mut DecodeMode::Greedy).unwrap();
        let b = m.generate(&store, s, &mut DecodeMode::Greedy).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn sampled_step_log_probs_match_recomputation() {
    for single in [false, true] {
        let mut m = model();
        m.flags.single_decoder = single;
        let store = m.init_params(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for s in states(1, 6).iter().take(15) {
            let mut g = Graph::new();
            let h = m.state_repr(&mut g, &store, s).unwrap();
            let r = m.rollout(&mut g, &store, s, h, &mut DecodeMode::Sample(&mut rng), [true; 3]).unwrap();
            let summed: f64 = r.segments.iter().flat_map(|(_, seg)| &seg.log_probs).map(|&v| g.scalar(v)).sum();
            let again = m.sequence_log_prob(&store, s, &r.sequence).unwrap();
            assert!((summed - again).abs() < 1e-12, "{summed} vs {again}");
        }
    }
}

#[test]
fn single_decoder_respects_category_order_and_gates() {
    let mut m = model();
    m.flags.single_decoder = true;
    let store = m.init_params(9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for s in states(2, 7).iter().take(100) {
        let mut s = s.clone();
        s.budget = rng.gen_range(0..=16_000);
        let mut g = Graph::new();
        let h = m.state_repr(&mut g, &store, &s).unwrap();
        let r = m
            .rollout(&mut g, &store, &s, h, &mut DecodeMode::Sample(&mut rng), [true, false, true])
            .unwrap();
        let cats: Vec<usize> = r.sequence.purchases().iter().map(|&a| m.catalog.category(a).index()).collect();
        assert!(cats.windows(2).all(|w| w[0] <= w[1]));
        assert!(!cats.contains(&1));
        for c in 0..3 {
            assert!(cats.iter().filter(|&&x| x == c).count() <= MAX_PURCHASES_PER_CATEGORY);
        }
    }
}

#[test]
fn mask_soundness_sampled() {
    for single in [false, true] {
        let mut m = model();
        m.flags.single_decoder = single;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pool = states(2, 8);
        for trial in 0..300 {
            let store = m.init_params(trial).unwrap();
            let mut s = pool[rng.gen_range(0..pool.len())].clone();
            s.budget = rng.gen_range(0..=16_000);
            let seq = m.generate(&store, &s, &mut DecodeMode::Sample(&mut rng)).unwrap();
            assert!(seq.cost(&m.catalog) <= s.budget);
            let mut inv = s.own_weapons.clone();
            for &a in seq.purchases() {
                inv.add(a);
            }
            // the starting inventory may already break a limit only if the data did
            if m.catalog.check_inventory(&s.own_weapons).is_ok() {
                m.catalog.check_inventory(&inv).unwrap();
            }
            let cats: Vec<_> = seq.purchases().iter().map(|&a| m.catalog.category(a)).collect();
            assert!(cats.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

#[test]
fn params_and_embeddings() {
    let m = model();
    let mut store = m.init_params(11).unwrap();
    m.check_params(&store).unwrap();
    assert_eq!(store.tensor("state.w1").unwrap().shape(), &[64, 4 * 32 + 16]);
    assert!(store.tensor("gate.gun.b1").unwrap().data().iter().all(|&x| x == 0.0));
    let table = Tensor::zeros(vec![46, 32]);
    m.load_embeddings(&mut store, &table).unwrap();
    assert_eq!(store.tensor(crate::embeddings::EMBED_PARAM).unwrap(), &table);
    assert!(m.load_embeddings(&mut store, &Tensor::zeros(vec![46, 8])).is_err());

    let mut single = m.clone();
    single.flags.single_decoder = true;
    assert!(single.check_params(&store).is_err());
    let s_store = single.init_params(11).unwrap();
    assert!(s_store.contains("decoder.single.lstm_w"));
    assert!(!s_store.contains("decoder.gun.lstm_w"));
    assert_eq!(m.init_params(11).unwrap(), m.init_params(11).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn team_permutation_invariance(seed in any::<u64>(), idx in 0usize..200) {
        let m = model();
        let store = m.init_params(seed % 17).unwrap();
        let pool = states(1, 12);
        let s = &pool[idx % pool.len()];
        let mut shuffled = s.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        shuffled.team_weapons.shuffle(&mut rng);
        shuffled.opp_weapons.shuffle(&mut rng);
        let mut g1 = Graph::new();
        let h1 = m.state_repr(&mut g1, &store, s).unwrap();
        let mut g2 = Graph::new();
        let h2 = m.state_repr(&mut g2, &store, &shuffled).unwrap();
        prop_assert_eq!(g1.value(h1), g2.value(h2));
    }
}
