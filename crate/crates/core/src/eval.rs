//! F1 scoring and the per-task evaluation harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baseline::greedy_purchase;
use crate::catalog::{Catalog, Category, WeaponId};
use crate::dataset::EpisodeTask;
use crate::error::{Error, Result};
use crate::sequence::ActionSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Mode {
    /// Duplicates collapse.
    #[default]
    Set,
    /// Duplicates count; the intersection takes the smaller multiplicity.
    Multiset,
}

fn f1_from_counts(common: usize, pred: usize, truth: usize) -> f64 {
    match (pred, truth) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ if common == 0 => 0.0,
        // 2PR / (P + R) reduces to one correctly rounded division
        _ => (2 * common) as f64 / (pred + truth) as f64,
    }
}

/// F1 between two purchase lists under `mode`.
pub fn f1_score(pred: &[WeaponId], truth: &[WeaponId], mode: F1Mode) -> f64 {
    match mode {
        F1Mode::Set => {
            let p: BTreeSet<_> = pred.iter().collect();
            let t: BTreeSet<_> = truth.iter().collect();
            f1_from_counts(p.intersection(&t).count(), p.len(), t.len())
        }
        F1Mode::Multiset => {
            let count = |xs: &[WeaponId]| {
                let mut m = BTreeMap::new();
                for &x in xs {
                    *m.entry(x).or_insert(0usize) += 1;
                }
                m
            };
            let (p, t) = (count(pred), count(truth));
            let common = p.iter().map(|(k, &n)| n.min(t.get(k).copied().unwrap_or(0))).sum();
            f1_from_counts(common, pred.len(), truth.len())
        }
    }
}

/// Set F1 of the purchases of two sequences; `End` is not an item.
pub fn f1_action_set(pred: &ActionSequence, truth: &ActionSequence) -> f64 {
    f1_score(pred.purchases(), truth.purchases(), F1Mode::Set)
}

/// F1 of both sequences restricted to `category`.
pub fn f1_category(pred: &ActionSequence, truth: &ActionSequence, catalog: &Catalog, category: Category, mode: F1Mode) -> f64 {
    f1_score(&pred.in_category(catalog, category), &truth.in_category(catalog, category), mode)
}

/// Running sums of per-pair scores.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScoreSums {
    pub overall: f64,
    pub per_category: [f64; 3],
    pub pairs: usize,
}

impl ScoreSums {
    pub fn add(&mut self, pred: &ActionSequence, truth: &ActionSequence, catalog: &Catalog, mode: F1Mode) {
        self.overall += f1_score(pred.purchases(), truth.purchases(), mode);
        for c in Category::ALL {
            self.per_category[c.index()] += f1_category(pred, truth, catalog, c, mode);
        }
        self.pairs += 1;
    }

    pub fn merge(&mut self, other: &ScoreSums) {
        self.overall += other.overall;
        for k in 0..3 {
            self.per_category[k] += other.per_category[k];
        }
        self.pairs += other.pairs;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub f1: f64,
    pub f1_gun: f64,
    pub f1_grenade: f64,
    pub f1_equipment: f64,
    pub pairs: usize,
    pub tasks: usize,
    pub fingerprint: String,
}

impl EvalReport {
    pub fn from_sums(method: &str, sums: &ScoreSums, tasks: usize, fingerprint: String) -> Result<Self> {
        if sums.pairs == 0 {
            return Err(Error::EmptyInput("no (player, round) pairs evaluated"));
        }
        let n = sums.pairs as f64;
        Ok(EvalReport {
            method: method.to_string(),
            f1: sums.overall / n,
            f1_gun: sums.per_category[0] / n,
            f1_grenade: sums.per_category[1] / n,
            f1_equipment: sums.per_category[2] / n,
            pairs: sums.pairs,
            tasks,
            fingerprint,
        })
    }

    pub fn per_category(&self) -> [f64; 3] {
        [self.f1_gun, self.f1_grenade, self.f1_equipment]
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Text table with one row per report.
pub fn reports_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$} | {:>7} {:>7} {:>10} {:>8}", "Method", "F1", "F1-gun", "F1-grenade", "F1-equip");
    let _ = writeln!(out, "{}", "-".repeat(width + 38));
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$} | {:>7.4} {:>7.4} {:>10.4} {:>8.4}",
            r.method, r.f1, r.f1_gun, r.f1_grenade, r.f1_equipment
        );
    }
    out
}

/// Produces one prediction per target round of a task.
pub trait TaskPolicy: Sync {
    fn name(&self) -> String;
    fn fingerprint(&self) -> String {
        self.name()
    }
    fn predict_task(&self, task: &EpisodeTask) -> Result<Vec<ActionSequence>>;
}

/// The greedy rule applied to each target round's budget and inventory.
pub struct GreedyPolicy<'a> {
    pub catalog: &'a Catalog,
}

impl TaskPolicy for GreedyPolicy<'_> {
    fn name(&self) -> String {
        "Greedy Algorithm".into()
    }

    fn predict_task(&self, task: &EpisodeTask) -> Result<Vec<ActionSequence>> {
        Ok(task
            .target
            .iter()
            .map(|e| greedy_purchase(self.catalog, e.state.budget, &e.state.own_weapons))
            .collect())
    }
}

/// Replays the ground truth.
pub struct ReplayPolicy;

impl TaskPolicy for ReplayPolicy {
    fn name(&self) -> String {
        "Replay".into()
    }

    fn predict_task(&self, task: &EpisodeTask) -> Result<Vec<ActionSequence>> {
        Ok(task.target.iter().map(|e| e.label.clone()).collect())
    }
}

/// Always buys nothing.
pub struct EndOnlyPolicy<'a> {
    pub catalog: &'a Catalog,
}

impl TaskPolicy for EndOnlyPolicy<'_> {
    fn name(&self) -> String {
        "End only".into()
    }

    fn predict_task(&self, task: &EpisodeTask) -> Result<Vec<ActionSequence>> {
        Ok(task.target.iter().map(|_| ActionSequence::end_only(self.catalog)).collect())
    }
}

fn score_task(policy: &dyn TaskPolicy, task: &EpisodeTask, catalog: &Catalog, mode: F1Mode) -> Result<ScoreSums> {
    let preds = policy.predict_task(task)?;
    if preds.len() != task.target.len() {
        return Err(Error::WrongArity {
            what: "task predictions",
            expected: task.target.len(),
            got: preds.len(),
        });
    }
    let mut sums = ScoreSums::default();
    for (pred, example) in preds.iter().zip(&task.target) {
        sums.add(pred, &example.label, catalog, mode);
    }
    Ok(sums)
}

/// Scores `policy` on the target rounds of every task. Tasks are spread
/// over `threads` workers; sums are merged in task order, so the result
/// does not depend on the thread count.
pub fn evaluate_policy(
    policy: &dyn TaskPolicy,
    tasks: &[EpisodeTask],
    catalog: &Catalog,
    mode: F1Mode,
    threads: usize,
) -> Result<EvalReport> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput("no tasks to evaluate"));
    }
    let per_task: Vec<Result<ScoreSums>> = if threads <= 1 || tasks.len() == 1 {
        tasks.iter().map(|t| score_task(policy, t, catalog, mode)).collect()
    } else {
        let chunk = tasks.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = tasks
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|t| score_task(policy, t, catalog, mode))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        })
    };
    let mut sums = ScoreSums::default();
    for s in per_task {
        sums.merge(&s?);
    }
    let fingerprint = format!("{} mode={:?}", policy.fingerprint(), mode).to_lowercase();
    EvalReport::from_sums(&policy.name(), &sums, tasks.len(), fingerprint)
}

/// Worker count for evaluation: the machine's parallelism, capped at 8.
pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get().min(8))
}
