//! The purchase policy: hierarchical-attention state encoder, per-category
//! gates, and masked LSTM decoders.
//!
//! All parameters live in one [`ParamStore`] under these names (`d` is the
//! embedding size, `H` the LSTM size, `V` the vocabulary size):
//!
//! | name | shape |
//! |---|---|
//! | `embed.actions` | `[V, d]` |
//! | `weapon_pool.{w,b,v,null}` | `[d, d]`, `[d]`, `[1, d]`, `[d]` |
//! | `ally_pool.{w,b,v}`, `enemy_pool.{w,b,v}` | as above, no null |
//! | `rae.null` | `[d]` |
//! | `economy.{w1,b1,w2,b2}` | `[E, 10]`, `[E]`, `[d_c, E]`, `[d_c]` |
//! | `state.{w1,w2}` | `[d_h, 4d + d_c]`, `[d_h, d_h]` |
//! | `gate.<cat>.{w1,b1,w2,b2}` | `[G, d_h]`, `[G]`, `[1, G]`, `[1]` |
//! | `decoder.<task>.init` | `[H, d_h]` |
//! | `decoder.<task>.{lstm_w,lstm_b}` | `[4H, d + H]`, `[4H]` |
//! | `decoder.<task>.{out1,out2}` | `[O, H]`, `[V, O]` |
//!
//! `<cat>` is `gun`, `grenade` or `equipment`; `<task>` is a category name,
//! or `single` for the shared-decoder ablation.

mod decoder;
mod encoder;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tensor};
use crate::catalog::{Catalog, Category};
use crate::embeddings::EMBED_PARAM;
use crate::error::{Error, Result};

pub use decoder::{DecodeMode, Rollout, Segment};
pub use encoder::{attention_pool, gate_decisions, history_weights, Encoded};

pub const GATE_THRESHOLD: f64 = 0.5;
pub const MAX_PURCHASES_PER_CATEGORY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub d_h: usize,
    pub lstm_hidden: usize,
    pub gate_hidden: usize,
    pub economy_hidden: usize,
    pub d_c: usize,
    pub out_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_emb: 32,
            d_h: 64,
            lstm_hidden: 64,
            gate_hidden: 32,
            economy_hidden: 32,
            d_c: 16,
            out_hidden: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Use the round attribute encoder; when off `h_r` is the null vector.
    pub rae: bool,
    /// Consult the gates at inference; when off every decoder runs.
    pub gates: bool,
    /// One decoder over the whole vocabulary instead of one per category.
    pub single_decoder: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            rae: true,
            gates: true,
            single_decoder: false,
        }
    }
}

impl AblationFlags {
    pub fn fingerprint(&self) -> String {
        format!(
            "rae={} gates={} decoder={}",
            if self.rae { "on" } else { "off" },
            if self.gates { "on" } else { "off" },
            if self.single_decoder { "single" } else { "multi" }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub catalog: Catalog,
    pub config: ModelConfig,
    pub flags: AblationFlags,
}

pub(crate) fn task_name(category: Option<Category>) -> &'static str {
    match category {
        Some(c) => c.name(),
        None => "single",
    }
}

impl PolicyModel {
    pub fn new(catalog: Catalog, config: ModelConfig, flags: AblationFlags) -> Result<Self> {
        let dims = [
            config.d_emb,
            config.d_h,
            config.lstm_hidden,
            config.gate_hidden,
            config.economy_hidden,
            config.d_c,
            config.out_hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        Ok(PolicyModel { catalog, config, flags })
    }

    pub fn vocab_size(&self) -> usize {
        self.catalog.vocab_size()
    }

    /// Every parameter name and shape, in initialization order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let ModelConfig {
            d_emb: d,
            d_h,
            lstm_hidden: h,
            gate_hidden: gh,
            economy_hidden: eh,
            d_c,
            out_hidden: o,
        } = self.config;
        let v = self.vocab_size();
        let mut shapes: Vec<(String, Vec<usize>)> = vec![(EMBED_PARAM.into(), vec![v, d])];
        for pool in ["weapon_pool", "ally_pool", "enemy_pool"] {
            shapes.push((format!("{pool}.w"), vec![d, d]));
            shapes.push((format!("{pool}.b"), vec![d]));
            shapes.push((format!("{pool}.v"), vec![1, d]));
        }
        shapes.push(("weapon_pool.null".into(), vec![d]));
        shapes.push(("rae.null".into(), vec![d]));
        shapes.push(("economy.w1".into(), vec![eh, crate::dataset::PLAYERS]));
        shapes.push(("economy.b1".into(), vec![eh]));
        shapes.push(("economy.w2".into(), vec![d_c, eh]));
        shapes.push(("economy.b2".into(), vec![d_c]));
        shapes.push(("state.w1".into(), vec![d_h, 4 * d + d_c]));
        shapes.push(("state.w2".into(), vec![d_h, d_h]));
        for c in Category::ALL {
            let p = format!("gate.{}", c.name());
            shapes.push((format!("{p}.w1"), vec![gh, d_h]));
            shapes.push((format!("{p}.b1"), vec![gh]));
            shapes.push((format!("{p}.w2"), vec![1, gh]));
            shapes.push((format!("{p}.b2"), vec![1]));
        }
        let tasks: Vec<Option<Category>> = if self.flags.single_decoder {
            vec![None]
        } else {
            Category::ALL.iter().copied().map(Some).collect()
        };
        for t in tasks {
            let p = format!("decoder.{}", task_name(t));
            shapes.push((format!("{p}.init"), vec![h, d_h]));
            shapes.push((format!("{p}.lstm_w"), vec![4 * h, d + h]));
            shapes.push((format!("{p}.lstm_b"), vec![4 * h]));
            shapes.push((format!("{p}.out1"), vec![o, h]));
            shapes.push((format!("{p}.out2"), vec![v, o]));
        }
        shapes
    }

    /// Xavier-uniform matrices, zero biases, attention vectors drawn from
    /// N(0, 0.1^2), small uniform null vectors and embeddings.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            let n: usize = shape.iter().product();
            let last = name.rsplit('.').next().unwrap_or("");
            let data: Vec<f64> = if name == EMBED_PARAM || last == "null" {
                (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect()
            } else if last == "v" {
                let normal = Normal::new(0.0, 0.1).expect("valid deviation");
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            } else if shape.len() == 2 {
                let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-a..a)).collect()
            } else {
                vec![0.0; n]
            };
            store.insert(name, Tensor::new(shape, data)?)?;
        }
        Ok(store)
    }

    /// Checks that `store` holds every parameter with the expected shape.
    pub fn check_params(&self, store: &ParamStore) -> Result<()> {
        for (name, shape) in self.param_shapes() {
            let t = store.get(&name).ok_or_else(|| Error::MissingParam(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "check_params",
                    detail: format!("`{name}` is {:?}, expected {shape:?}", t.shape()),
                });
            }
        }
        Ok(())
    }

    /// Replaces the embedding table with a pretrained one.
    pub fn load_embeddings(&self, store: &mut ParamStore, table: &Tensor) -> Result<()> {
        let want = [self.vocab_size(), self.config.d_emb];
        if table.shape() != want {
            return Err(Error::ShapeMismatch {
                op: "load_embeddings",
                detail: format!("table is {:?}, model expects {want:?}", table.shape()),
            });
        }
        store.set(EMBED_PARAM, table.clone())
    }
}

#[cfg(test)]
mod tests;
