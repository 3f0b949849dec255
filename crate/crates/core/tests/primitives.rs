//! Finite-difference checks for every differentiable primitive, at 100
//! random points each.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roundbuy::autodiff::{grad_check, Graph, ParamStore, Tensor, Var};
use roundbuy::Result;

const TOL: f64 = 1e-4;
const POINTS: u64 = 100;

fn random_store(rng: &mut ChaCha8Rng, shapes: &[(&str, Vec<usize>)]) -> ParamStore {
    let mut store = ParamStore::new();
    for (name, shape) in shapes {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        store.insert(*name, Tensor::new(shape.clone(), data).unwrap()).unwrap();
    }
    store
}

/// Reduces a node to a scalar with fixed random weights so every output
/// coordinate contributes a distinct amount.
fn project(g: &mut Graph, v: Var, seed: u64) -> Var {
    let n = g.value(v).len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let w = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = g.constant(vec![1, n], w);
    let flat = if g.shape(v).len() == 1 { v } else { g.concat(&[v]) };
    g.matmul(w, flat)
}

fn check<F>(shapes: &[(&str, Vec<usize>)], f: F)
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    for seed in 0..POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = random_store(&mut rng, shapes);
        let report = grad_check(&store, &[], |g, s| {
            let out = f(g, s)?;
            Ok(project(g, out, seed))
        })
        .unwrap();
        assert!(
            report.max_rel_error <= TOL,
            "seed {seed}: rel error {} at {:?}",
            report.max_rel_error,
            report.worst
        );
    }
}

#[test]
fn matmul_matrix_vector() {
    check(&[("a", vec![3, 4]), ("x", vec![4])], |g, s| {
        let a = g.param(s, "a")?;
        let x = g.param(s, "x")?;
        Ok(g.matmul(a, x))
    });
}

#[test]
fn matmul_matrix_matrix() {
    check(&[("a", vec![2, 3]), ("b", vec![3, 4])], |g, s| {
        let a = g.param(s, "a")?;
        let b = g.param(s, "b")?;
        Ok(g.matmul(a, b))
    });
}

#[test]
fn add_mul_scale_sum() {
    check(&[("a", vec![5]), ("b", vec![5])], |g, s| {
        let a = g.param(s, "a")?;
        let b = g.param(s, "b")?;
        let sum = g.add(a, b);
        let prod = g.mul(sum, a);
        let scaled = g.scale(prod, -0.7);
        Ok(g.sum(&[scaled, b, a]))
    });
}

#[test]
fn concat_slice_pick() {
    check(&[("a", vec![3]), ("b", vec![2])], |g, s| {
        let a = g.param(s, "a")?;
        let b = g.param(s, "b")?;
        let c = g.concat(&[a, b, a]);
        let sl = g.slice(c, 2, 3);
        let p = g.pick(c, 4);
        let sq = g.mul(sl, sl);
        let p3 = g.concat(&[p, p, p]);
        Ok(g.add(sq, p3))
    });
}

#[test]
fn elementwise_nonlinearities() {
    check(&[("a", vec![6])], |g, s| {
        let a = g.param(s, "a")?;
        let t = g.tanh(a);
        let r = g.relu(a);
        let sg = g.sigmoid(a);
        Ok(g.concat(&[t, r, sg]))
    });
}

#[test]
fn softmax_vector() {
    check(&[("a", vec![5])], |g, s| {
        let a = g.param(s, "a")?;
        Ok(g.softmax(a))
    });
}

#[test]
fn masked_log_softmax_vector() {
    let mask: Rc<[bool]> = Rc::from(vec![true, false, true, true, false, true]);
    check(&[("a", vec![6])], move |g, s| {
        let a = g.param(s, "a")?;
        Ok(g.masked_log_softmax(a, mask.clone()))
    });
}

#[test]
fn weighted_sum_of_vectors() {
    check(&[("w", vec![3]), ("x0", vec![4]), ("x1", vec![4]), ("x2", vec![4])], |g, s| {
        let w = g.param(s, "w")?;
        let items = [g.param(s, "x0")?, g.param(s, "x1")?, g.param(s, "x2")?];
        Ok(g.weighted_sum(w, &items))
    });
}

#[test]
fn embedding_row_lookup() {
    check(&[("table", vec![5, 3])], |g, s| {
        let t = g.param(s, "table")?;
        let r1 = g.row(t, 1);
        let r4 = g.row(t, 4);
        let r1b = g.row(t, 1);
        let prod = g.mul(r1, r4);
        Ok(g.add(prod, r1b))
    });
}

#[test]
fn lstm_cell_step() {
    check(
        &[("x", vec![3]), ("h", vec![2]), ("c", vec![2]), ("w", vec![8, 5]), ("b", vec![8])],
        |g, s| {
            let x = g.param(s, "x")?;
            let h = g.param(s, "h")?;
            let c = g.param(s, "c")?;
            let w = g.param(s, "w")?;
            let b = g.param(s, "b")?;
            let out = g.lstm_cell(x, h, c, w, b);
            // second step feeds the first step's state back in
            let h1 = g.slice(out, 0, 2);
            let c1 = g.slice(out, 2, 2);
            let out2 = g.lstm_cell(x, h1, c1, w, b);
            Ok(g.concat(&[out, out2]))
        },
    );
}

#[test]
fn bce_with_logits_scalar() {
    check(&[("z", vec![3])], |g, s| {
        let z = g.param(s, "z")?;
        Ok(g.bce_with_logits(z, vec![1.0, 0.0, 1.0]))
    });
}

#[test]
fn constant_function_has_zero_error() {
    let mut store = ParamStore::new();
    store.insert("x", Tensor::from_vec(vec![0.3, -1.0])).unwrap();
    let report = grad_check(&store, &[], |g, _| Ok(g.vector(vec![4.2]))).unwrap();
    assert_eq!(report.max_rel_error, 0.0);
}

#[test]
fn linear_function_is_near_exact() {
    let mut store = ParamStore::new();
    store.insert("x", Tensor::from_vec(vec![0.3, -1.0, 2.5])).unwrap();
    let a = vec![1.5, -2.0, 0.25];
    let report = grad_check(&store, &["x"], |g, s| {
        let x = g.param(s, "x")?;
        let a = g.constant(vec![1, 3], a.clone());
        Ok(g.matmul(a, x))
    })
    .unwrap();
    assert!(report.max_rel_error <= 1e-9, "{}", report.max_rel_error);
}

#[test]
fn non_finite_point_is_diagnosed() {
    let mut store = ParamStore::new();
    store.insert("x", Tensor::from_vec(vec![1e308])).unwrap();
    let err = grad_check(&store, &[], |g, s| {
        let x = g.param(s, "x")?;
        let big = g.scale(x, 100.0);
        g.sum_all(big);
        Ok(g.sum_all(big))
    })
    .unwrap_err();
    assert!(err.to_string().contains("scale"), "{err}");
}
