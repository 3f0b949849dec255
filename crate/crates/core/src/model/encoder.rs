use super::PolicyModel;
use crate::autodiff::{Graph, ParamStore, Var};
use crate::catalog::{Dollars, Inventory};
use crate::dataset::{PLAYERS, TEAM_SIZE};
use crate::embeddings::EMBED_PARAM;
use crate::error::{Error, Result};
use crate::state::{HistoryEntry, StateInput};

/// `u_t = tanh(W x_t + b)`, `alpha = softmax(v . u)`, returns `sum_t alpha_t x_t`.
/// Parameters are read from `<prefix>.{w,b,v}`.
pub fn attention_pool(g: &mut Graph, store: &ParamStore, prefix: &str, items: &[Var]) -> Result<Var> {
    if items.is_empty() {
        return Err(Error::EmptyInput("attention pooling over zero items"));
    }
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    let v = g.param(store, &format!("{prefix}.v"))?;
    let d = g.shape(w)[1];
    for &x in items {
        if g.value(x).len() != d {
            return Err(Error::ShapeMismatch {
                op: "attention_pool",
                detail: format!("item of length {} for `{prefix}` expecting {d}", g.value(x).len()),
            });
        }
    }
    let scores: Vec<Var> = items
        .iter()
        .map(|&x| {
            let u = g.matmul(w, x);
            let u = g.add(u, b);
            let u = g.tanh(u);
            g.matmul(v, u)
        })
        .collect();
    let scores = g.concat(&scores);
    let alpha = g.softmax(scores);
    Ok(g.weighted_sum(alpha, items))
}

/// Scores normalized to sum to one; uniform when they sum to zero.
pub fn history_weights(scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().sum();
    if total > 0.0 {
        scores.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / scores.len() as f64; scores.len()]
    }
}

/// Intermediate vectors of one state encoding.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub p_s: Var,
    pub z_a: Var,
    pub z_e: Var,
    pub h_r: Var,
    pub h_c: Var,
    pub h: Var,
}

impl PolicyModel {
    pub fn validate_state(&self, state: &StateInput) -> Result<()> {
        if state.money.len() != PLAYERS {
            return Err(Error::WrongArity {
                what: "money",
                expected: PLAYERS,
                got: state.money.len(),
            });
        }
        for (what, team) in [("team_weapons", &state.team_weapons), ("opp_weapons", &state.opp_weapons)] {
            if team.len() != TEAM_SIZE {
                return Err(Error::WrongArity {
                    what,
                    expected: TEAM_SIZE,
                    got: team.len(),
                });
            }
        }
        if state.money.iter().any(|&m| m < 0) || state.budget < 0 {
            return Err(Error::InvalidState("negative money".into()));
        }
        if state.history.iter().any(|h| !h.performance_score.is_finite() || h.performance_score < 0.0) {
            return Err(Error::InvalidState("performance scores must be finite and nonnegative".into()));
        }
        let inventories = std::iter::once(&state.own_weapons)
            .chain(&state.team_weapons)
            .chain(&state.opp_weapons)
            .chain(state.history.iter().map(|h| &h.final_weapons));
        for inv in inventories {
            for (id, _) in inv.iter() {
                self.catalog.weapon(id)?;
            }
        }
        Ok(())
    }

    /// Weapon-level pooling of one player's inventory; the learned null
    /// vector stands in for an empty inventory.
    pub fn pool_inventory(&self, g: &mut Graph, store: &ParamStore, inventory: &Inventory) -> Result<Var> {
        if inventory.is_empty() {
            return g.param(store, "weapon_pool.null");
        }
        let table = g.param(store, EMBED_PARAM)?;
        let items: Vec<Var> = inventory.ids().into_iter().map(|id| g.row(table, id)).collect();
        attention_pool(g, store, "weapon_pool", &items)
    }

    /// Team-level pooling. Members are visited in a canonical order so the
    /// result does not depend on how the team is listed.
    fn pool_team(&self, g: &mut Graph, store: &ParamStore, prefix: &str, team: &[Inventory]) -> Result<Var> {
        let mut members: Vec<(Vec<usize>, &Inventory)> = team.iter().map(|inv| (inv.ids(), inv)).collect();
        members.sort_by(|a, b| a.0.cmp(&b.0));
        let mut items = Vec::with_capacity(members.len());
        for (_, inv) in members {
            items.push(self.pool_inventory(g, store, inv)?);
        }
        attention_pool(g, store, prefix, &items)
    }

    pub fn round_attr_encode(&self, g: &mut Graph, store: &ParamStore, history: &[HistoryEntry]) -> Result<Var> {
        if history.is_empty() || !self.flags.rae {
            return g.param(store, "rae.null");
        }
        let mut pooled = Vec::with_capacity(history.len());
        for entry in history {
            pooled.push(self.pool_inventory(g, store, &entry.final_weapons)?);
        }
        let scores: Vec<f64> = history.iter().map(|h| h.performance_score).collect();
        let weights = g.vector(history_weights(&scores));
        Ok(g.weighted_sum(weights, &pooled))
    }

    pub fn economy_encode(&self, g: &mut Graph, store: &ParamStore, money: &[Dollars]) -> Result<Var> {
        if money.len() != PLAYERS {
            return Err(Error::WrongArity {
                what: "money",
                expected: PLAYERS,
                got: money.len(),
            });
        }
        let scale = 1.0 / self.catalog.max_cash() as f64;
        let x = g.vector(money.iter().map(|&m| m as f64 * scale).collect());
        let w1 = g.param(store, "economy.w1")?;
        let b1 = g.param(store, "economy.b1")?;
        let w2 = g.param(store, "economy.w2")?;
        let b2 = g.param(store, "economy.b2")?;
        let hidden = g.matmul(w1, x);
        let hidden = g.add(hidden, b1);
        let hidden = g.relu(hidden);
        let out = g.matmul(w2, hidden);
        Ok(g.add(out, b2))
    }

    /// `h = W_h2 ReLU(W_h1 [p_s; z_a; z_e; h_r; h_c])`.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, state: &StateInput) -> Result<Encoded> {
        self.validate_state(state)?;
        let p_s = self.pool_inventory(g, store, &state.own_weapons)?;
        let z_a = self.pool_team(g, store, "ally_pool", &state.team_weapons)?;
        let z_e = self.pool_team(g, store, "enemy_pool", &state.opp_weapons)?;
        let h_r = self.round_attr_encode(g, store, &state.history)?;
        let h_c = self.economy_encode(g, store, &state.money)?;
        let joint = g.concat(&[p_s, z_a, z_e, h_r, h_c]);
        let w1 = g.param(store, "state.w1")?;
        let w2 = g.param(store, "state.w2")?;
        let hidden = g.matmul(w1, joint);
        let hidden = g.relu(hidden);
        let h = g.matmul(w2, hidden);
        Ok(Encoded {
            p_s,
            z_a,
            z_e,
            h_r,
            h_c,
            h,
        })
    }

    pub fn state_repr(&self, g: &mut Graph, store: &ParamStore, state: &StateInput) -> Result<Var> {
        Ok(self.encode(g, store, state)?.h)
    }

    /// The three gate logits, ordered gun, grenade, equipment.
    pub fn gate_logits(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Var> {
        let mut logits = Vec::with_capacity(3);
        for c in crate::catalog::Category::ALL {
            let p = format!("gate.{}", c.name());
            let w1 = g.param(store, &format!("{p}.w1"))?;
            let b1 = g.param(store, &format!("{p}.b1"))?;
            let w2 = g.param(store, &format!("{p}.w2"))?;
            let b2 = g.param(store, &format!("{p}.b2"))?;
            let hidden = g.matmul(w1, h);
            let hidden = g.add(hidden, b1);
            let hidden = g.relu(hidden);
            let z = g.matmul(w2, hidden);
            logits.push(g.add(z, b2));
        }
        Ok(g.concat(&logits))
    }

    /// Gate probabilities for `state`, ordered gun, grenade, equipment.
    pub fn gate_forward(&self, store: &ParamStore, state: &StateInput) -> Result<[f64; 3]> {
        let mut g = Graph::new();
        let h = self.state_repr(&mut g, store, state)?;
        let z = self.gate_logits(&mut g, store, h)?;
        let p = g.sigmoid(z);
        let v = g.value(p);
        Ok([v[0], v[1], v[2]])
    }
}

/// Which decoders run for the given gate probabilities.
pub fn gate_decisions(probs: [f64; 3]) -> [bool; 3] {
    probs.map(|p| p >= super::GATE_THRESHOLD)
}
