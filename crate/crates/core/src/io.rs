//! Model input and output: the line-based triple format and model JSON.
//!
//! Triple format, one item per line, `#` starts a comment:
//!
//! ```text
//! @states s0 s1 s2        optional; fixes the state order and closes the set
//! @initial s0
//! s0 a 1/2 s1             src action prob dst
//! s1 b                    declares an action with no transitions
//! ```
//!
//! Probabilities may be written `n/d` or as decimals. The writer always
//! emits the canonical form, so `write(parse(write(m)))` is byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use certimdp_opt::rational::{format_q, parse_lenient, serde_q_map};
use certimdp_opt::Q;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Labeling, Mdp, MdpBuilder};

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

/// Parses the triple format.
pub fn parse_triples(text: &str) -> Result<Mdp> {
    let mut b = MdpBuilder::new();
    let mut declared: Option<BTreeSet<String>> = None;
    let mut initial: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok[0] {
            "@states" => {
                if declared.is_some() || !b.is_empty() {
                    return parse_err(line_no, "@states must come first and only once");
                }
                let mut set = BTreeSet::new();
                for &s in &tok[1..] {
                    if !set.insert(s.to_string()) {
                        return parse_err(line_no, format!("duplicate state {s}"));
                    }
                    b.state(s);
                }
                declared = Some(set);
            }
            "@initial" => {
                if tok.len() != 2 || initial.is_some() {
                    return parse_err(line_no, "expected a single `@initial <state>`");
                }
                initial = Some(tok[1].to_string());
            }
            h if h.starts_with('@') => return parse_err(line_no, format!("unknown header {h}")),
            _ => {
                let check = |s: &str| -> Result<()> {
                    match &declared {
                        Some(d) if !d.contains(s) => parse_err(line_no, format!("unknown state {s}")),
                        _ => Ok(()),
                    }
                };
                match tok.len() {
                    2 => {
                        check(tok[0])?;
                        b.action(tok[0], tok[1]);
                    }
                    4 => {
                        check(tok[0])?;
                        check(tok[3])?;
                        let p = parse_lenient(tok[2]).map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
                        b.transition(tok[0], tok[1], p, tok[3])
                            .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
                    }
                    _ => return parse_err(line_no, "expected `src action prob dst`"),
                }
            }
        }
    }
    let Some(init) = initial else {
        return parse_err(0, "missing @initial");
    };
    if let Some(d) = &declared {
        if !d.contains(&init) {
            return parse_err(0, format!("unknown initial state {init}"));
        }
    }
    b.build(&init)
}

/// Canonical triple text for `m`.
pub fn write_triples(m: &Mdp) -> String {
    let mut out = String::new();
    let _ = write!(out, "@states");
    for s in m.states() {
        let _ = write!(out, " {}", m.name(s));
    }
    out.push('\n');
    if !m.is_empty() {
        let _ = writeln!(out, "@initial {}", m.name(m.initial()));
    }
    for s in m.states() {
        for c in m.choices(s) {
            if c.dist.is_empty() {
                let _ = writeln!(out, "{} {}", m.name(s), c.action);
            }
            for (t, p) in &c.dist {
                let _ = writeln!(out, "{} {} {} {}", m.name(s), c.action, format_q(p), m.name(*t));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceJson {
    pub state: String,
    pub action: String,
    #[serde(with = "serde_q_map")]
    pub dist: BTreeMap<String, Q>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub schema: String,
    pub states: Vec<String>,
    pub initial: String,
    pub choices: Vec<ChoiceJson>,
}

pub const MODEL_SCHEMA: &str = "certimdp-model/1";

impl ModelJson {
    pub fn from_mdp(m: &Mdp) -> ModelJson {
        let choices = m
            .pairs()
            .map(|p| {
                let c = m.choice(p);
                ChoiceJson {
                    state: m.name(p.0).to_string(),
                    action: c.action.clone(),
                    dist: c.dist.iter().map(|(t, q)| (m.name(*t).to_string(), q.clone())).collect(),
                }
            })
            .collect();
        ModelJson {
            schema: MODEL_SCHEMA.into(),
            states: m.names().to_vec(),
            initial: if m.is_empty() { String::new() } else { m.name(m.initial()).to_string() },
            choices,
        }
    }

    pub fn to_mdp(&self) -> Result<Mdp> {
        if self.schema != MODEL_SCHEMA {
            return Err(Error::Schema(format!("expected schema {MODEL_SCHEMA}")));
        }
        let mut b = MdpBuilder::new();
        for s in &self.states {
            if b.has_state(s) {
                return Err(Error::Model(format!("duplicate state {s}")));
            }
            b.state(s);
        }
        let known = |s: &str| {
            if b.has_state(s) {
                Ok(())
            } else {
                Err(Error::Model(format!("unknown state {s}")))
            }
        };
        for c in &self.choices {
            known(&c.state)?;
            for t in c.dist.keys() {
                known(t)?;
            }
        }
        for c in &self.choices {
            if b.has_action(&c.state, &c.action) {
                return Err(Error::Model(format!("duplicate action {}:{}", c.state, c.action)));
            }
            b.action(&c.state, &c.action);
            for (t, p) in &c.dist {
                b.transition(&c.state, &c.action, p.clone(), t)?;
            }
        }
        b.build(&self.initial)
    }
}

pub fn parse_model_json(text: &str) -> Result<Mdp> {
    let j: ModelJson = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    j.to_mdp()
}

pub fn write_model_json(m: &Mdp) -> String {
    serde_json::to_string_pretty(&ModelJson::from_mdp(m)).expect("model serializes")
}

/// Parses either format, choosing JSON when the text starts with `{`.
pub fn parse_model(text: &str) -> Result<Mdp> {
    if text.trim_start().starts_with('{') {
        parse_model_json(text)
    } else {
        parse_triples(text)
    }
}

/// Labeling JSON: `{"state": ["label", ...], ...}`.
pub fn parse_labeling(m: &Mdp, text: &str) -> Result<Labeling> {
    let map: BTreeMap<String, Vec<String>> = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    Labeling::from_map(m, &map)
}
