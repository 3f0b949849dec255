//! The gradient-check suite run by the `gradcheck` command: every
//! differentiable primitive at random points, then the composed
//! state-encoder and frozen self-critical loss graph.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{grad_check, GradCheckReport, Graph, ParamStore, Tensor, Var};
use crate::catalog::Catalog;
use crate::dataset::{build_all_tasks, synth_matches};
use crate::error::Result;
use crate::model::{AblationFlags, ModelConfig, PolicyModel};
use crate::training::{gate_loss, scst_loss, scst_loss_frozen};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub points: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= GRADCHECK_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub lines: Vec<CheckLine>,
}

impl SuiteReport {
    pub fn max_rel_error(&self) -> f64 {
        self.lines.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.lines.iter().all(CheckLine::passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(&format!(
                "{:<28} points={:<4} coords={:<6} max_rel_err={:.3e} {}\n",
                l.name,
                l.points,
                l.coordinates,
                l.max_rel_error,
                if l.passed() { "ok" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "overall max_rel_err={:.3e} tolerance={:.0e} {}\n",
            self.max_rel_error(),
            GRADCHECK_TOLERANCE,
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

type Shapes = &'static [(&'static str, &'static [usize])];
type Body = Box<dyn Fn(&mut Graph, &ParamStore) -> Result<Var>>;

fn random_store(rng: &mut ChaCha8Rng, shapes: Shapes) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for (name, shape) in shapes {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        store.insert(*name, Tensor::new(shape.to_vec(), data)?)?;
    }
    Ok(store)
}

/// Random fixed projection to a scalar.
fn project(g: &mut Graph, v: Var, seed: u64) -> Var {
    let n = g.value(v).len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1_e995);
    let w = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = g.constant(vec![1, n], w);
    let flat = if g.shape(v).len() == 1 { v } else { g.concat(&[v]) };
    g.matmul(w, flat)
}

fn primitives() -> Vec<(&'static str, Shapes, Body)> {
    let mask: Rc<[bool]> = Rc::from(vec![true, false, true, true, false, true]);
    vec![
        (
            "matmul",
            &[("a", &[3, 4]), ("b", &[4, 2]), ("x", &[4])],
            Box::new(|g, s| {
                let a = g.param(s, "a")?;
                let b = g.param(s, "b")?;
                let x = g.param(s, "x")?;
                let ab = g.matmul(a, b);
                let ax = g.matmul(a, x);
                let flat = g.concat(&[ab]);
                Ok(g.concat(&[flat, ax]))
            }),
        ),
        (
            "add/mul/scale/sum",
            &[("a", &[5]), ("b", &[5])],
            Box::new(|g, s| {
                let a = g.param(s, "a")?;
                let b = g.param(s, "b")?;
                let sum = g.add(a, b);
                let prod = g.mul(sum, a);
                let scaled = g.scale(prod, -0.7);
                let total = g.sum_all(scaled);
                let s3 = g.sum(&[scaled, b, a]);
                let t = g.concat(&[total, total, total, total, total]);
                Ok(g.add(s3, t))
            }),
        ),
        (
            "concat/slice/pick",
            &[("a", &[3]), ("b", &[2])],
            Box::new(|g, s| {
                let a = g.param(s, "a")?;
                let b = g.param(s, "b")?;
                let c = g.concat(&[a, b, a]);
                let sl = g.slice(c, 2, 3);
                let p = g.pick(c, 4);
                let sq = g.mul(sl, sl);
                let p3 = g.concat(&[p, p, p]);
                Ok(g.add(sq, p3))
            }),
        ),
        (
            "tanh/relu/sigmoid",
            &[("a", &[6])],
            Box::new(|g, s| {
                let a = g.param(s, "a")?;
                let t = g.tanh(a);
                let r = g.relu(a);
                let sg = g.sigmoid(a);
                Ok(g.concat(&[t, r, sg]))
            }),
        ),
        (
            "softmax",
            &[("a", &[5])],
            Box::new(|g, s| {
                let a = g.param(s, "a")?;
                Ok(g.softmax(a))
            }),
        ),
        (
            "masked_log_softmax",
            &[("a", &[6])],
            Box::new(move |g, s| {
                let a = g.param(s, "a")?;
                Ok(g.masked_log_softmax(a, mask.clone()))
            }),
        ),
        (
            "weighted_sum",
            &[("w", &[3]), ("x0", &[4]), ("x1", &[4]), ("x2", &[4])],
            Box::new(|g, s| {
                let w = g.param(s, "w")?;
                let items = [g.param(s, "x0")?, g.param(s, "x1")?, g.param(s, "x2")?];
                Ok(g.weighted_sum(w, &items))
            }),
        ),
        (
            "embedding_row",
            &[("table", &[5, 3])],
            Box::new(|g, s| {
                let t = g.param(s, "table")?;
                let r1 = g.row(t, 1);
                let r4 = g.row(t, 4);
                let prod = g.mul(r1, r4);
                let r1b = g.row(t, 1);
                Ok(g.add(prod, r1b))
            }),
        ),
        (
            "lstm_cell",
            &[("x", &[3]), ("h", &[2]), ("c", &[2]), ("w", &[8, 5]), ("b", &[8])],
            Box::new(|g, s| {
                let x = g.param(s, "x")?;
                let h = g.param(s, "h")?;
                let c = g.param(s, "c")?;
                let w = g.param(s, "w")?;
                let b = g.param(s, "b")?;
                let out = g.lstm_cell(x, h, c, w, b);
                let h1 = g.slice(out, 0, 2);
                let c1 = g.slice(out, 2, 2);
                let out2 = g.lstm_cell(x, h1, c1, w, b);
                Ok(g.concat(&[out, out2]))
            }),
        ),
        (
            "bce_with_logits",
            &[("z", &[3])],
            Box::new(|g, s| {
                let z = g.param(s, "z")?;
                Ok(g.bce_with_logits(z, vec![1.0, 0.0, 1.0]))
            }),
        ),
    ]
}

fn fold(line: &mut CheckLine, report: &GradCheckReport) {
    line.points += 1;
    line.coordinates += report.coordinates;
    line.max_rel_error = line.max_rel_error.max(report.max_rel_error);
}

/// A small model so that every coordinate can be perturbed.
pub fn gradcheck_model_config() -> ModelConfig {
    ModelConfig {
        d_emb: 3,
        d_h: 4,
        lstm_hidden: 3,
        gate_hidden: 2,
        economy_hidden: 2,
        d_c: 2,
        out_hidden: 3,
    }
}

/// Checks the full state representation feeding the frozen self-critical
/// loss plus the gate loss, for `states` synthetic rounds. A constant is
/// added to the greedy reward so the advantage never vanishes.
pub fn check_composed(states: usize, seed: u64) -> Result<CheckLine> {
    let catalog = Catalog::default_fixture();
    let model = PolicyModel::new(catalog.clone(), gradcheck_model_config(), AblationFlags::default())?;
    let (tasks, _) = build_all_tasks(&synth_matches(seed, 1, &catalog, 4), 5, &catalog);
    let examples: Vec<_> = tasks.iter().flat_map(|t| t.target.iter()).collect();
    let mut line = CheckLine {
        name: "state_repr -> scst (frozen)".into(),
        points: 0,
        coordinates: 0,
        max_rel_error: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..states {
        let ex = examples[(i * 37 + 5) % examples.len()];
        let store = model.init_params(seed + i as u64)?;
        let mut g = Graph::new();
        let h = model.state_repr(&mut g, &store, &ex.state)?;
        let (_, diag) = scst_loss(&model, &mut g, &store, &ex.state, h, &ex.label, &mut rng, [true; 3])?;
        let report = grad_check(&store, &[], |g, s| {
            let h = model.state_repr(g, s, &ex.state)?;
            let seq = scst_loss_frozen(&model, g, s, &ex.state, h, &ex.label, &diag.sampled, diag.r_greedy + 0.7, [true; 3])?;
            let gates = gate_loss(&model, g, s, h, &ex.label)?;
            Ok(g.add(seq, gates))
        })?;
        fold(&mut line, &report);
    }
    Ok(line)
}

/// Every primitive at `points` random points, then the composed graph at
/// `composed_states` rounds.
pub fn gradcheck_suite(points: usize, composed_states: usize) -> Result<SuiteReport> {
    let mut lines = Vec::new();
    for (name, shapes, body) in primitives() {
        let mut line = CheckLine {
            name: name.into(),
            points: 0,
            coordinates: 0,
            max_rel_error: 0.0,
        };
        for seed in 0..points as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let store = random_store(&mut rng, shapes)?;
            let report = grad_check(&store, &[], |g, s| {
                let out = body(g, s)?;
                Ok(project(g, out, seed))
            })?;
            fold(&mut line, &report);
        }
        lines.push(line);
    }
    lines.push(check_composed(composed_states, 11)?);
    Ok(SuiteReport { lines })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let report = gradcheck_suite(3, 1).unwrap();
        assert_eq!(report.lines.len(), 11);
        assert!(report.passed(), "{}", report.to_text());
        assert!(report.to_text().ends_with("PASS\n"));
    }
}
