//! Per-round match records and their JSON document form.
//!
//! One document per match:
//!
//! ```json
//! {
//!   "match_id": "m0001",
//!   "rounds": [{
//!     "round_index": 1,
//!     "snapshots": {
//!       "round_start": [{"player_slot": 0, "team": "T", "account": 800, "cash_spent": 0,
//!                        "weapons": [0], "items_value": 200, "performance_score": 0}, ...],
//!       "buy_end": [...],
//!       "round_end": [...]
//!     },
//!     "purchases": [[4, 35], [], ...]
//!   }, ...]
//! }
//! ```
//!
//! Each snapshot list holds exactly 10 players (slots 0-9, five per team);
//! `purchases` holds one weapon-id list per player slot.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::catalog::{Catalog, Dollars, Inventory, WeaponId};
use crate::error::{Error, Result};

pub const PLAYERS: usize = 10;
pub const TEAM_SIZE: usize = 5;
pub const MAX_ROUNDS: u32 = 30;
pub const SIDE_SWAP_ROUND: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "T")]
    T,
    #[serde(rename = "CT")]
    Ct,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::T => "T",
            Side::Ct => "CT",
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::T => Side::Ct,
            Side::Ct => Side::T,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapturePoint {
    RoundStart,
    BuyEnd,
    RoundEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerRoundSnapshot {
    pub player_slot: usize,
    pub team: Side,
    pub account: Dollars,
    pub cash_spent: Dollars,
    pub weapons: Inventory,
    pub items_value: Dollars,
    pub performance_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round_index: u32,
    /// Indexed by player slot.
    pub round_start: Vec<PlayerRoundSnapshot>,
    pub buy_end: Vec<PlayerRoundSnapshot>,
    pub round_end: Vec<PlayerRoundSnapshot>,
    /// Raw purchased weapon ids per player slot, in recorded order.
    pub purchases: Vec<Vec<WeaponId>>,
}

impl RoundRecord {
    pub fn snapshots(&self, point: CapturePoint) -> &[PlayerRoundSnapshot] {
        match point {
            CapturePoint::RoundStart => &self.round_start,
            CapturePoint::BuyEnd => &self.buy_end,
            CapturePoint::RoundEnd => &self.round_end,
        }
    }

    pub fn side_of(&self, slot: usize) -> Side {
        self.round_start[slot].team
    }

    /// Slots on `slot`'s side, in slot order (including `slot`).
    pub fn teammates(&self, slot: usize) -> Vec<usize> {
        let side = self.side_of(slot);
        (0..PLAYERS).filter(|&s| self.side_of(s) == side).collect()
    }

    pub fn opponents(&self, slot: usize) -> Vec<usize> {
        let side = self.side_of(slot);
        (0..PLAYERS).filter(|&s| self.side_of(s) != side).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    pub match_id: String,
    pub rounds: Vec<RoundRecord>,
}

impl MatchRecord {
    pub fn round(&self, round_index: u32) -> Option<&RoundRecord> {
        self.rounds.iter().find(|r| r.round_index == round_index)
    }

    pub fn to_json(&self) -> Value {
        let snapshot = |s: &PlayerRoundSnapshot| {
            serde_json::json!({
                "player_slot": s.player_slot,
                "team": s.team.as_str(),
                "account": s.account,
                "cash_spent": s.cash_spent,
                "weapons": s.weapons.ids(),
                "items_value": s.items_value,
                "performance_score": s.performance_score,
            })
        };
        let rounds: Vec<Value> = self
            .rounds
            .iter()
            .map(|r| {
                serde_json::json!({
                    "round_index": r.round_index,
                    "snapshots": {
                        "round_start": r.round_start.iter().map(snapshot).collect::<Vec<_>>(),
                        "buy_end": r.buy_end.iter().map(snapshot).collect::<Vec<_>>(),
                        "round_end": r.round_end.iter().map(snapshot).collect::<Vec<_>>(),
                    },
                    "purchases": r.purchases,
                })
            })
            .collect();
        serde_json::json!({ "match_id": self.match_id, "rounds": rounds })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("match serializes")
    }

    /// Parses and validates one match document.
    pub fn from_json_str(doc: &str, catalog: &Catalog) -> Result<Self> {
        let value: Value = serde_json::from_str(doc).map_err(|e| Error::Schema {
            match_id: "<unknown>".into(),
            field: "<document>".into(),
            detail: e.to_string(),
        })?;
        parse_match(&value, catalog)
    }
}

struct Ctx<'a> {
    match_id: &'a str,
}

impl Ctx<'_> {
    fn err(&self, field: &str, detail: impl Into<String>) -> Error {
        Error::Schema {
            match_id: self.match_id.to_string(),
            field: field.to_string(),
            detail: detail.into(),
        }
    }

    fn get<'v>(&self, obj: &'v Map<String, Value>, path: &str, key: &str) -> Result<&'v Value> {
        obj.get(key)
            .ok_or_else(|| self.err(&format!("{path}.{key}"), "missing field"))
    }

    fn object<'v>(&self, v: &'v Value, path: &str) -> Result<&'v Map<String, Value>> {
        v.as_object().ok_or_else(|| self.err(path, "expected an object"))
    }

    fn array<'v>(&self, v: &'v Value, path: &str) -> Result<&'v Vec<Value>> {
        v.as_array().ok_or_else(|| self.err(path, "expected an array"))
    }

    fn int(&self, v: &Value, path: &str) -> Result<i64> {
        v.as_i64().ok_or_else(|| self.err(path, "expected an integer"))
    }

    fn number(&self, v: &Value, path: &str) -> Result<f64> {
        v.as_f64().ok_or_else(|| self.err(path, "expected a number"))
    }

    fn weapon_list(&self, v: &Value, path: &str, catalog: &Catalog) -> Result<Vec<WeaponId>> {
        let mut ids = Vec::new();
        for (k, item) in self.array(v, path)?.iter().enumerate() {
            let p = format!("{path}[{k}]");
            let id = self.int(item, &p)?;
            if id < 0 || catalog.get(id as usize).is_none() {
                return Err(self.err(&p, format!("unknown weapon id {id}")));
            }
            ids.push(id as usize);
        }
        Ok(ids)
    }
}

fn parse_match(value: &Value, catalog: &Catalog) -> Result<MatchRecord> {
    let unknown = Ctx { match_id: "<unknown>" };
    let root = unknown.object(value, "$")?;
    let match_id = unknown
        .get(root, "$", "match_id")?
        .as_str()
        .ok_or_else(|| unknown.err("$.match_id", "expected a string"))?
        .to_string();
    let cx = Ctx { match_id: &match_id };
    let rounds_v = cx.array(cx.get(root, "$", "rounds")?, "$.rounds")?;
    if rounds_v.len() > MAX_ROUNDS as usize {
        return Err(cx.err("$.rounds", format!("{} rounds exceeds the maximum of {MAX_ROUNDS}", rounds_v.len())));
    }
    let mut rounds = Vec::with_capacity(rounds_v.len());
    for (ri, rv) in rounds_v.iter().enumerate() {
        let path = format!("$.rounds[{ri}]");
        let ro = cx.object(rv, &path)?;
        let idx_path = format!("{path}.round_index");
        let round_index = cx.int(cx.get(ro, &path, "round_index")?, &idx_path)?;
        if !(1..=MAX_ROUNDS as i64).contains(&round_index) {
            return Err(cx.err(&idx_path, format!("{round_index} outside [1, {MAX_ROUNDS}]")));
        }
        let round_index = round_index as u32;
        if let Some(prev) = rounds.last().map(|r: &RoundRecord| r.round_index) {
            if round_index <= prev {
                return Err(cx.err(&idx_path, "round indices must be strictly increasing"));
            }
        }
        let snaps_path = format!("{path}.snapshots");
        let snaps = cx.object(cx.get(ro, &path, "snapshots")?, &snaps_path)?;
        let mut lists = Vec::with_capacity(3);
        for key in ["round_start", "buy_end", "round_end"] {
            let list_path = format!("{snaps_path}.{key}");
            let list = cx.array(cx.get(snaps, &snaps_path, key)?, &list_path)?;
            lists.push(parse_snapshots(&cx, list, &list_path, round_index, catalog)?);
        }
        let purchases_path = format!("{path}.purchases");
        let pv = cx.array(cx.get(ro, &path, "purchases")?, &purchases_path)?;
        if pv.len() != PLAYERS {
            return Err(Error::PlayerCountMismatch {
                match_id: match_id.clone(),
                round: round_index,
                found: pv.len(),
            });
        }
        let purchases = pv
            .iter()
            .enumerate()
            .map(|(k, v)| cx.weapon_list(v, &format!("{purchases_path}[{k}]"), catalog))
            .collect::<Result<Vec<_>>>()?;
        let round_end = lists.pop().expect("three lists");
        let buy_end = lists.pop().expect("three lists");
        let round_start = lists.pop().expect("three lists");
        rounds.push(RoundRecord {
            round_index,
            round_start,
            buy_end,
            round_end,
            purchases,
        });
    }
    Ok(MatchRecord { match_id, rounds })
}

fn parse_snapshots(
    cx: &Ctx<'_>,
    list: &[Value],
    path: &str,
    round: u32,
    catalog: &Catalog,
) -> Result<Vec<PlayerRoundSnapshot>> {
    if list.len() != PLAYERS {
        return Err(Error::PlayerCountMismatch {
            match_id: cx.match_id.to_string(),
            round,
            found: list.len(),
        });
    }
    let mut slots: Vec<Option<PlayerRoundSnapshot>> = vec![None; PLAYERS];
    for (k, v) in list.iter().enumerate() {
        let p = format!("{path}[{k}]");
        let o = cx.object(v, &p)?;
        let field = |key: &str| cx.get(o, &p, key);
        let fp = |key: &str| format!("{p}.{key}");
        let slot = cx.int(field("player_slot")?, &fp("player_slot"))?;
        if !(0..PLAYERS as i64).contains(&slot) {
            return Err(cx.err(&fp("player_slot"), format!("slot {slot} outside 0-9")));
        }
        let team: Side = serde_json::from_value(field("team")?.clone())
            .map_err(|_| cx.err(&fp("team"), "expected \"T\" or \"CT\""))?;
        let snap = PlayerRoundSnapshot {
            player_slot: slot as usize,
            team,
            account: cx.int(field("account")?, &fp("account"))?,
            cash_spent: cx.int(field("cash_spent")?, &fp("cash_spent"))?,
            weapons: Inventory::from_ids(&cx.weapon_list(field("weapons")?, &fp("weapons"), catalog)?),
            items_value: cx.int(field("items_value")?, &fp("items_value"))?,
            performance_score: cx.number(field("performance_score")?, &fp("performance_score"))?,
        };
        let entry = &mut slots[slot as usize];
        if entry.is_some() {
            return Err(cx.err(&fp("player_slot"), format!("duplicate slot {slot}")));
        }
        *entry = Some(snap);
    }
    let snaps: Vec<PlayerRoundSnapshot> = slots.into_iter().map(|s| s.expect("10 unique slots")).collect();
    let t_count = snaps.iter().filter(|s| s.team == Side::T).count();
    if t_count != TEAM_SIZE {
        return Err(Error::PlayerCountMismatch {
            match_id: cx.match_id.to_string(),
            round,
            found: t_count,
        });
    }
    Ok(snaps)
}

/// Match documents under `root` (`*.json`), sorted by file name.
pub fn match_files(root: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Parses every match document under `root` in lexicographic file order.
pub fn ingest_matches(root: &Path, catalog: &Catalog) -> Result<Vec<MatchRecord>> {
    match_files(root)?
        .into_iter()
        .map(|path| {
            let doc = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            MatchRecord::from_json_str(&doc, catalog)
        })
        .collect()
}

/// Writes one document per match as `<match_id>.json` under `dir`.
pub fn write_matches(dir: &Path, matches: &[MatchRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for m in matches {
        let path = dir.join(format!("{}.json", m.match_id));
        std::fs::write(&path, m.to_json_string()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
