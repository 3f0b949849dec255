//! Action vocabulary and CBOW pretraining of action embeddings.
//!
//! The CBOW model ties its input and output embeddings: the logit of a
//! target token is `E[target] · mean(E[context]) + b[target]`, with a full
//! softmax over the vocabulary. Training is full-batch Adam over the
//! deduplicated (context, target) pairs of the corpus, one step per epoch.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax, Adam, AdamConfig, Grads, ParamStore, Tensor};
use crate::catalog::{ActionId, Catalog};
use crate::error::{Error, Result};
use crate::sequence::ActionSequence;

/// Parameter name of the embedding table in every checkpoint.
pub const EMBED_PARAM: &str = "embed.actions";
const BIAS_PARAM: &str = "cbow.bias";

#[derive(Debug, Clone, PartialEq)]
pub struct ActionVocab {
    tokens: Vec<String>,
}

impl ActionVocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn end(&self) -> ActionId {
        self.tokens.len() - 2
    }

    pub fn start(&self) -> ActionId {
        self.tokens.len() - 1
    }

    /// Whitespace-free token name, suitable for the text export.
    pub fn token(&self, id: ActionId) -> &str {
        &self.tokens[id]
    }

    pub fn id_of(&self, token: &str) -> Option<ActionId> {
        self.tokens.iter().position(|t| t == token)
    }
}

/// Weapon actions keep their catalog ids; `End` and `Start` follow.
pub fn build_vocab(catalog: &Catalog) -> ActionVocab {
    let mut tokens: Vec<String> = catalog
        .weapons()
        .iter()
        .map(|w| w.name.split_whitespace().collect::<Vec<_>>().join("_"))
        .collect();
    tokens.push("<end>".into());
    tokens.push("<start>".into());
    ActionVocab { tokens }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CbowConfig {
    pub window: usize,
    pub d_emb: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            window: 2,
            d_emb: 32,
            epochs: 300,
            lr: 0.01,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CbowOutput {
    /// `[vocab, d_emb]`
    pub embeddings: Tensor,
    /// Mean cross-entropy before each epoch's update, then once after the last.
    pub losses: Vec<f64>,
}

type Examples = BTreeMap<(Vec<ActionId>, ActionId), f64>;

fn collect_examples(sequences: &[ActionSequence], window: usize, vocab: usize) -> Result<Examples> {
    let mut examples = Examples::new();
    for seq in sequences {
        let tokens = seq.actions();
        for (t, &target) in tokens.iter().enumerate() {
            if target >= vocab {
                return Err(Error::UnknownWeapon(target));
            }
            let lo = t.saturating_sub(window);
            let hi = (t + window + 1).min(tokens.len());
            let mut context: Vec<ActionId> = tokens[lo..t].iter().chain(&tokens[t + 1..hi]).copied().collect();
            if context.is_empty() {
                continue;
            }
            context.sort_unstable();
            *examples.entry((context, target)).or_insert(0.0) += 1.0;
        }
    }
    Ok(examples)
}

/// Mean loss and, when `grads` is given, its gradient with respect to the
/// table `e: [v, d]` and bias `b: [v]`.
fn loss_and_grad(examples: &Examples, e: &[f64], b: &[f64], d: usize, mut grads: Option<(&mut [f64], &mut [f64])>) -> f64 {
    let v = b.len();
    let total: f64 = examples.values().sum();
    let mut loss = 0.0;
    let mut mean = vec![0.0; d];
    let mut logits = vec![0.0; v];
    for ((context, target), &count) in examples {
        let inv = 1.0 / context.len() as f64;
        mean.iter_mut().for_each(|m| *m = 0.0);
        for &c in context {
            mean.iter_mut().zip(&e[c * d..(c + 1) * d]).for_each(|(m, x)| *m += inv * x);
        }
        for (k, z) in logits.iter_mut().enumerate() {
            *z = b[k] + e[k * d..(k + 1) * d].iter().zip(&mean).map(|(a, m)| a * m).sum::<f64>();
        }
        let p = softmax(&logits);
        loss += count * -p[*target].ln();
        if let Some((ge, gb)) = grads.as_mut() {
            let w = count / total;
            let mut dmean = vec![0.0; d];
            for k in 0..v {
                let dz = w * (p[k] - if k == *target { 1.0 } else { 0.0 });
                gb[k] += dz;
                for j in 0..d {
                    ge[k * d + j] += dz * mean[j];
                    dmean[j] += dz * e[k * d + j];
                }
            }
            for &c in context {
                ge[c * d..(c + 1) * d]
                    .iter_mut()
                    .zip(&dmean)
                    .for_each(|(g, dm)| *g += inv * dm);
            }
        }
    }
    loss / total
}

pub fn cbow_train(vocab: &ActionVocab, sequences: &[ActionSequence], config: &CbowConfig) -> Result<CbowOutput> {
    if sequences.is_empty() {
        return Err(Error::EmptyInput("embedding corpus is empty"));
    }
    if config.window == 0 || config.d_emb == 0 {
        return Err(Error::Config("window and d_emb must be at least 1".into()));
    }
    let (v, d) = (vocab.len(), config.d_emb);
    let examples = collect_examples(sequences, config.window, v)?;
    if examples.is_empty() {
        return Err(Error::EmptyInput("embedding corpus has no token with context"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init: Vec<f64> = (0..v * d).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let mut store = ParamStore::new();
    store.insert(EMBED_PARAM, Tensor::new(vec![v, d], init)?)?;
    store.insert(BIAS_PARAM, Tensor::zeros(vec![v]))?;
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let mut ge = vec![0.0; v * d];
        let mut gb = vec![0.0; v];
        let loss = loss_and_grad(
            &examples,
            store.tensor(EMBED_PARAM)?.data(),
            store.tensor(BIAS_PARAM)?.data(),
            d,
            Some((&mut ge, &mut gb)),
        );
        losses.push(loss);
        let mut grads = Grads::default();
        grads.insert(EMBED_PARAM, ge);
        grads.insert(BIAS_PARAM, gb);
        adam.step(&mut store, &grads)?;
    }
    losses.push(loss_and_grad(
        &examples,
        store.tensor(EMBED_PARAM)?.data(),
        store.tensor(BIAS_PARAM)?.data(),
        d,
        None,
    ));
    if !store.all_finite() {
        return Err(Error::NonFinite { op: "cbow" });
    }
    Ok(CbowOutput {
        embeddings: store.tensor(EMBED_PARAM)?.clone(),
        losses,
    })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// One line per token: the token name followed by its vector.
pub fn export_embeddings(vocab: &ActionVocab, table: &Tensor) -> Result<String> {
    if table.shape().len() != 2 || table.shape()[0] != vocab.len() {
        return Err(Error::ShapeMismatch {
            op: "export_embeddings",
            detail: format!("table {:?} for vocabulary of {}", table.shape(), vocab.len()),
        });
    }
    let mut out = String::new();
    for id in 0..vocab.len() {
        out.push_str(vocab.token(id));
        for x in table.row(id) {
            let _ = write!(out, " {x:.17e}");
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Graph};
    use crate::catalog::fixtures::spec;
    use crate::catalog::{Category, DEFAULT_GRENADE_CAP, DEFAULT_MAX_CASH};
    use std::rc::Rc;

    fn four_tokens() -> Catalog {
        Catalog::new(
            vec![
                spec(0, "A", Category::Gun, 100, 1),
                spec(1, "B", Category::Gun, 100, 1),
                spec(2, "C", Category::Gun, 100, 1),
                spec(3, "D", Category::Gun, 100, 1),
            ],
            DEFAULT_MAX_CASH,
            DEFAULT_GRENADE_CAP,
        )
        .unwrap()
    }

    fn toy_corpus(cat: &Catalog) -> Vec<ActionSequence> {
        let mut seqs = Vec::new();
        for _ in 0..20 {
            seqs.push(ActionSequence::from_purchases(vec![0, 1], cat));
            seqs.push(ActionSequence::from_purchases(vec![1, 0], cat));
            seqs.push(ActionSequence::from_purchases(vec![2, 3], cat));
            seqs.push(ActionSequence::from_purchases(vec![3, 2], cat));
        }
        seqs
    }

    #[test]
    fn vocab_sizes() {
        let full = build_vocab(&Catalog::default_fixture());
        assert_eq!(full.len(), 46);
        assert_eq!(full.end(), 44);
        assert_eq!(full.start(), 45);
        assert!(full.tokens.iter().all(|t| !t.contains(char::is_whitespace)));
        let three = Catalog::new(
            vec![
                spec(0, "a", Category::Gun, 1, 1),
                spec(1, "b", Category::Grenade, 1, 1),
                spec(2, "c", Category::Equipment, 1, 1),
            ],
            DEFAULT_MAX_CASH,
            DEFAULT_GRENADE_CAP,
        )
        .unwrap();
        assert_eq!(build_vocab(&three).len(), 5);
    }

    #[test]
    fn non_contiguous_ids_rejected_before_vocab() {
        let r = Catalog::new(
            vec![spec(0, "a", Category::Gun, 1, 1), spec(2, "b", Category::Gun, 1, 1)],
            DEFAULT_MAX_CASH,
            DEFAULT_GRENADE_CAP,
        );
        assert!(r.is_err());
    }

    #[test]
    fn cooccurring_tokens_are_closer() {
        let cat = four_tokens();
        let vocab = build_vocab(&cat);
        let out = cbow_train(&vocab, &toy_corpus(&cat), &CbowConfig::default()).unwrap();
        let e = &out.embeddings;
        assert_eq!(e.shape(), &[6, 32]);
        let ab = cosine(e.row(0), e.row(1));
        let ac = cosine(e.row(0), e.row(2));
        let cd = cosine(e.row(2), e.row(3));
        assert!(ab - ac >= 0.2, "cos(A,B)={ab} cos(A,C)={ac}");
        assert!(cd - ac >= 0.2, "cos(C,D)={cd} cos(A,C)={ac}");
    }

    #[test]
    fn category_clusters_are_tighter() {
        let cat = Catalog::default_fixture();
        let vocab = build_vocab(&cat);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let by_cat: Vec<Vec<usize>> = Category::ALL
            .iter()
            .map(|&c| cat.in_category(c).map(|w| w.id).collect())
            .collect();
        let corpus: Vec<ActionSequence> = (0..600)
            .map(|_| {
                let pool = &by_cat[rng.gen_range(0..3)];
                let n = rng.gen_range(2..=4);
                ActionSequence::from_purchases((0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect(), &cat)
            })
            .collect();
        let out = cbow_train(&vocab, &corpus, &CbowConfig::default()).unwrap();
        let (mut intra, mut inter) = (Vec::new(), Vec::new());
        for a in 0..cat.len() {
            for b in a + 1..cat.len() {
                let c = cosine(out.embeddings.row(a), out.embeddings.row(b));
                if cat.category(a) == cat.category(b) {
                    intra.push(c);
                } else {
                    inter.push(c);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&intra) > mean(&inter), "intra {} inter {}", mean(&intra), mean(&inter));
    }

    #[test]
    fn loss_monotone_on_toy_corpus() {
        let cat = four_tokens();
        let out = cbow_train(&build_vocab(&cat), &toy_corpus(&cat), &CbowConfig::default()).unwrap();
        for w in out.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "loss rose from {} to {}", w[0], w[1]);
        }
        assert!(out.losses.last().unwrap() < &out.losses[0]);
    }

    #[test]
    fn deterministic_under_seed() {
        let cat = four_tokens();
        let vocab = build_vocab(&cat);
        let cfg = CbowConfig {
            epochs: 20,
            ..CbowConfig::default()
        };
        let a = cbow_train(&vocab, &toy_corpus(&cat), &cfg).unwrap();
        let b = cbow_train(&vocab, &toy_corpus(&cat), &cfg).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn empty_corpus_errors() {
        let cat = four_tokens();
        assert!(matches!(
            cbow_train(&build_vocab(&cat), &[], &CbowConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn start_row_untouched_by_context() {
        // Start never appears in a corpus, so it only receives the
        // softmax-negative gradient; it must stay finite and distinct.
        let cat = four_tokens();
        let vocab = build_vocab(&cat);
        let out = cbow_train(&vocab, &toy_corpus(&cat), &CbowConfig::default()).unwrap();
        assert!(out.embeddings.row(vocab.start()).iter().all(|x| x.is_finite()));
    }

    /// The hand-written gradient agrees with the tape on the same loss.
    #[test]
    fn manual_gradient_matches_tape() {
        let cat = four_tokens();
        let corpus = toy_corpus(&cat)[..4].to_vec();
        let examples = collect_examples(&corpus, 2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (v, d) = (6, 5);
        let mut store = ParamStore::new();
        store
            .insert(EMBED_PARAM, Tensor::new(vec![v, d], (0..v * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .unwrap();
        store
            .insert(BIAS_PARAM, Tensor::new(vec![v], (0..v).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .unwrap();
        let total: f64 = examples.values().sum();
        let build = |g: &mut Graph, s: &ParamStore| -> Result<crate::autodiff::Var> {
            let e = g.param(s, EMBED_PARAM)?;
            let b = g.param(s, BIAS_PARAM)?;
            let mut terms = Vec::new();
            for ((context, target), &count) in &examples {
                let rows: Vec<_> = context.iter().map(|&c| g.row(e, c)).collect();
                let sum = g.sum(&rows);
                let mean = g.scale(sum, 1.0 / context.len() as f64);
                let z = g.matmul(e, mean);
                let z = g.add(z, b);
                let lp = g.masked_log_softmax(z, Rc::from(vec![true; v]));
                let pick = g.pick(lp, *target);
                terms.push(g.scale(pick, -count / total));
            }
            Ok(g.sum(&terms))
        };
        let report = grad_check(&store, &[EMBED_PARAM, BIAS_PARAM], build).unwrap();
        assert!(report.max_rel_error <= 1e-6, "{report:?}");

        let mut g = Graph::new();
        let loss = build(&mut g, &store).unwrap();
        let tape = g.backward(loss);
        let mut ge = vec![0.0; v * d];
        let mut gb = vec![0.0; v];
        let manual = loss_and_grad(
            &examples,
            store.tensor(EMBED_PARAM).unwrap().data(),
            store.tensor(BIAS_PARAM).unwrap().data(),
            d,
            Some((&mut ge, &mut gb)),
        );
        assert!((manual - g.scalar(loss)).abs() < 1e-12);
        for (a, b) in tape.get(EMBED_PARAM).unwrap().iter().zip(&ge) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in tape.get(BIAS_PARAM).unwrap().iter().zip(&gb) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn export_format() {
        let cat = four_tokens();
        let vocab = build_vocab(&cat);
        let t = Tensor::new(vec![6, 2], (0..12).map(f64::from).collect()).unwrap();
        let text = export_embeddings(&vocab, &t).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[4].starts_with("<end> "));
        let parsed: Vec<f64> = lines[1].split(' ').skip(1).map(|x| x.parse().unwrap()).collect();
        assert_eq!(parsed, [2.0, 3.0]);
        assert!(export_embeddings(&vocab, &Tensor::zeros(vec![5, 2])).is_err());
    }
}
