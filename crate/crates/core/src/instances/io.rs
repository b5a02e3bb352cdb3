//! Versioned JSON instance files.
//!
//! ```json
//! {
//!   "version": 1,
//!   "num_states": 2, "num_actions": 1,
//!   "admissible": [[0], [0]],
//!   "transitions": [[[0.5, 0.5]], [[1.0, 0.0]]],
//!   "rewards": [{"s": 0, "a": 0, "r": 1.0}, {"s": 1, "a": 0, "r": 2.0}],
//!   "reward_resolution": 1,
//!   "metadata": {}
//! }
//! ```
//!
//! `transitions` is either dense (per state, per admissible action in the
//! listed order, a full row) or a list of sparse records `{s, a, s2, p}`.
//! Floats are written in shortest round-trip form, so reading back a written
//! file reproduces every probability and reward exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, VarMdpError};
use crate::mdp::{FiniteMdp, MdpBuilder, Resolution, DENSE_STATE_LIMIT};

pub const INSTANCE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct InstanceDoc {
    version: u32,
    num_states: usize,
    num_actions: usize,
    admissible: Vec<Vec<usize>>,
    transitions: Transitions,
    rewards: Vec<RewardRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reward_resolution: Option<ResolutionRepr>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    metadata: Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Transitions {
    Dense(Vec<Vec<Vec<f64>>>),
    Sparse(Vec<SparseRecord>),
}

#[derive(Debug, Serialize, Deserialize)]
struct SparseRecord {
    s: usize,
    a: usize,
    s2: usize,
    p: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RewardRecord {
    s: usize,
    a: usize,
    r: f64,
}

/// A decimal step as a number, any other rational as `"numer/denom"`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ResolutionRepr {
    Number(f64),
    Text(String),
}

impl ResolutionRepr {
    fn of(res: Resolution) -> Self {
        match Resolution::from_f64(res.step()) {
            Some(r) if r == res => Self::Number(res.step()),
            _ => Self::Text(format!("{}/{}", res.numer(), res.denom())),
        }
    }

    fn parse(&self) -> Result<Resolution> {
        let bad = |m: String| VarMdpError::Parse {
            location: "reward_resolution".into(),
            message: m,
        };
        match self {
            Self::Number(x) => Resolution::from_f64(*x)
                .ok_or_else(|| bad(format!("{x} is not a positive decimal step"))),
            Self::Text(t) => {
                let (n, d) = t.split_once('/').unwrap_or((t.as_str(), "1"));
                let n: i64 = n
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad numerator in {t:?}")))?;
                let d: i64 = d
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("bad denominator in {t:?}")))?;
                Resolution::new(n, d).map_err(|e| bad(e.to_string()))
            }
        }
    }
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> VarMdpError {
    VarMdpError::Parse {
        location: location.into(),
        message: message.into(),
    }
}

/// Serializes `mdp` with optional free-form metadata.
pub fn write_instance_string(mdp: &FiniteMdp, metadata: Option<&Value>) -> Result<String> {
    let n = mdp.num_states();
    let admissible: Vec<Vec<usize>> = (0..n).map(|s| mdp.actions(s).to_vec()).collect();
    let transitions = if n <= DENSE_STATE_LIMIT {
        Transitions::Dense(
            (0..n)
                .map(|s| {
                    mdp.pairs(s)
                        .map(|k| {
                            let mut row = vec![0.0; n];
                            mdp.row(k).for_each(|t, p| row[t] += p);
                            row
                        })
                        .collect()
                })
                .collect(),
        )
    } else {
        let mut records = Vec::new();
        for k in 0..mdp.num_pairs() {
            let (s, a) = (mdp.pair_state(k), mdp.pair_action(k));
            mdp.row(k).for_each(|s2, p| {
                if p != 0.0 {
                    records.push(SparseRecord { s, a, s2, p });
                }
            });
        }
        Transitions::Sparse(records)
    };
    let rewards = (0..mdp.num_pairs())
        .map(|k| RewardRecord {
            s: mdp.pair_state(k),
            a: mdp.pair_action(k),
            r: mdp.reward(k),
        })
        .collect();
    let doc = InstanceDoc {
        version: INSTANCE_VERSION,
        num_states: n,
        num_actions: mdp.num_actions(),
        admissible,
        transitions,
        rewards,
        reward_resolution: mdp.resolution().map(ResolutionRepr::of),
        metadata: metadata.cloned().unwrap_or(Value::Null),
    };
    serde_json::to_string(&doc).map_err(|e| parse_err("document", e.to_string()))
}

/// Writes `mdp` to `path`.
pub fn write_instance(mdp: &FiniteMdp, path: &Path, metadata: Option<&Value>) -> Result<()> {
    fs::write(path, write_instance_string(mdp, metadata)?)?;
    Ok(())
}

/// Reads an instance file; model invariants are left to `validate`.
pub fn read_instance(path: &Path) -> Result<(FiniteMdp, Value)> {
    read_instance_str(&fs::read_to_string(path)?)
}

/// Parses an instance document and its metadata.
pub fn read_instance_str(text: &str) -> Result<(FiniteMdp, Value)> {
    let head: Value = serde_json::from_str(text).map_err(|e| {
        parse_err(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    match head.get("version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(INSTANCE_VERSION) => {}
        Some(v) => {
            return Err(VarMdpError::SchemaVersion {
                found: u32::try_from(v).unwrap_or(u32::MAX),
                expected: INSTANCE_VERSION,
            })
        }
        None => return Err(parse_err("version", "missing or not an unsigned integer")),
    }
    let doc: InstanceDoc =
        serde_json::from_value(head).map_err(|e| parse_err("document", e.to_string()))?;
    let n = doc.num_states;
    if doc.admissible.len() != n {
        return Err(parse_err(
            "admissible",
            format!("{} lists for {n} states", doc.admissible.len()),
        ));
    }

    let mut rewards: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, rec) in doc.rewards.iter().enumerate() {
        if rewards.insert((rec.s, rec.a), rec.r).is_some() {
            return Err(parse_err(
                format!("rewards[{i}]"),
                format!("duplicate reward for (s={},a={})", rec.s, rec.a),
            ));
        }
    }
    let mut rows: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    match doc.transitions {
        Transitions::Dense(per_state) => {
            if per_state.len() != n {
                return Err(parse_err(
                    "transitions",
                    format!("{} state blocks for {n} states", per_state.len()),
                ));
            }
            for (s, block) in per_state.into_iter().enumerate() {
                if block.len() != doc.admissible[s].len() {
                    return Err(parse_err(
                        format!("transitions[{s}]"),
                        format!(
                            "{} rows for {} admissible actions",
                            block.len(),
                            doc.admissible[s].len()
                        ),
                    ));
                }
                for (j, row) in block.into_iter().enumerate() {
                    if row.len() != n {
                        return Err(parse_err(
                            format!("transitions[{s}][{j}]"),
                            format!("row has {} entries, expected {n}", row.len()),
                        ));
                    }
                    rows.insert(
                        (s, doc.admissible[s][j]),
                        row.into_iter().enumerate().collect(),
                    );
                }
            }
        }
        Transitions::Sparse(records) => {
            for (i, rec) in records.into_iter().enumerate() {
                if rec.s >= n || rec.s2 >= n {
                    return Err(parse_err(
                        format!("transitions[{i}]"),
                        "state index out of range",
                    ));
                }
                if !doc.admissible[rec.s].contains(&rec.a) {
                    return Err(parse_err(
                        format!("transitions[{i}]"),
                        format!("action {} is not admissible in state {}", rec.a, rec.s),
                    ));
                }
                rows.entry((rec.s, rec.a))
                    .or_default()
                    .push((rec.s2, rec.p));
            }
        }
    }

    let mut builder = MdpBuilder::new(n, doc.num_actions);
    if let Some(repr) = &doc.reward_resolution {
        builder.set_resolution(Some(repr.parse()?));
    }
    for (s, acts) in doc.admissible.iter().enumerate() {
        for &a in acts {
            let r = rewards
                .remove(&(s, a))
                .ok_or_else(|| parse_err("rewards", format!("missing reward for (s={s},a={a})")))?;
            let row = rows.remove(&(s, a)).unwrap_or_default();
            builder.pair(s, a, r, row);
        }
    }
    if let Some(((s, a), _)) = rewards.into_iter().next() {
        return Err(parse_err(
            "rewards",
            format!("reward for non-admissible pair (s={s},a={a})"),
        ));
    }
    let mdp = builder.build().map_err(|e| match e {
        VarMdpError::Malformed(m) => parse_err("document", m),
        other => other,
    })?;
    Ok((mdp, doc.metadata))
}
