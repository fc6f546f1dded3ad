//! A strict subset of the HOA format.
//!
//! Supported headers: `HOA`, `States`, one `Start`, `AP`, `Alias`,
//! `Acceptance`, `acc-name` (ignored), `properties` and `name`. Edges need
//! explicit labels; acceptance marks are state-based. Acceptance must be
//! `t`, `Inf(m)` or a disjunction of conjunctions with at most one `Inf`.
//! Each atomic proposition names an MDP state; a letter (an MDP state)
//! makes exactly the proposition with its name true.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::automata::{Automaton, DeterministicAutomaton, UnambiguityFlag, Uba};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Label {
    True,
    False,
    Ap(usize),
    Not(Box<Label>),
    And(Box<Label>, Box<Label>),
    Or(Box<Label>, Box<Label>),
}

impl Label {
    pub fn eval(&self, val: &dyn Fn(usize) -> bool) -> bool {
        match self {
            Label::True => true,
            Label::False => false,
            Label::Ap(i) => val(*i),
            Label::Not(a) => !a.eval(val),
            Label::And(a, b) => a.eval(val) && b.eval(val),
            Label::Or(a, b) => a.eval(val) || b.eval(val),
        }
    }

    fn write(&self, out: &mut String) {
        match self {
            Label::True => out.push('t'),
            Label::False => out.push('f'),
            Label::Ap(i) => {
                let _ = write!(out, "{i}");
            }
            Label::Not(a) => {
                out.push('!');
                a.write_atom(out);
            }
            Label::And(a, b) => {
                a.write_atom(out);
                out.push_str(" & ");
                b.write_atom(out);
            }
            Label::Or(a, b) => {
                a.write_atom(out);
                out.push_str(" | ");
                b.write_atom(out);
            }
        }
    }

    fn write_atom(&self, out: &mut String) {
        if matches!(self, Label::And(..) | Label::Or(..)) {
            out.push('(');
            self.write(out);
            out.push(')');
        } else {
            self.write(out);
        }
    }
}

/// One Rabin pair in terms of marks: `⋀ Fin(fin) ∧ Inf(inf)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkPair {
    pub fin: BTreeSet<usize>,
    /// `None` means no `Inf` constraint.
    pub inf: Option<usize>,
}

/// Parsed document before instantiation over a concrete alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hoa {
    pub num_states: usize,
    pub start: usize,
    pub aps: Vec<String>,
    pub num_marks: usize,
    pub pairs: Vec<MarkPair>,
    pub deterministic: bool,
    pub unambiguous: bool,
    pub marks: Vec<BTreeSet<usize>>,
    pub edges: Vec<Vec<(Label, usize)>>,
}

fn herr<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Automaton(msg.into()))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(usize),
    Str(String),
    Ident(String),
    Alias(String),
    Sym(char),
}

fn tokenize(s: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let cs: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '"' {
            let mut j = i + 1;
            let mut v = String::new();
            while j < cs.len() && cs[j] != '"' {
                if cs[j] == '\\' && j + 1 < cs.len() {
                    j += 1;
                }
                v.push(cs[j]);
                j += 1;
            }
            if j >= cs.len() {
                return herr("unterminated string");
            }
            out.push(Tok::Str(v));
            i = j + 1;
        } else if c.is_ascii_digit() {
            let mut j = i;
            while j < cs.len() && cs[j].is_ascii_digit() {
                j += 1;
            }
            let t: String = cs[i..j].iter().collect();
            out.push(Tok::Int(t.parse().map_err(|_| Error::Automaton(format!("bad integer {t}")))?));
            i = j;
        } else if c.is_alphabetic() || c == '_' || c == '@' {
            let mut j = i + 1;
            while j < cs.len() && (cs[j].is_alphanumeric() || cs[j] == '_' || cs[j] == '-' || cs[j] == '.') {
                j += 1;
            }
            let t: String = cs[i..j].iter().collect();
            out.push(if let Some(a) = t.strip_prefix('@') { Tok::Alias(a.to_string()) } else { Tok::Ident(t) });
            i = j;
        } else if "!&|()[]{}".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return herr(format!("unexpected character {c:?}"));
        }
    }
    Ok(out)
}

struct LabelParser<'a> {
    toks: &'a [Tok],
    pos: usize,
    aliases: &'a BTreeMap<String, Label>,
    num_aps: usize,
}

impl LabelParser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn or(&mut self) -> Result<Label> {
        let mut l = self.and()?;
        while self.peek() == Some(&Tok::Sym('|')) {
            self.pos += 1;
            l = Label::Or(Box::new(l), Box::new(self.and()?));
        }
        Ok(l)
    }

    fn and(&mut self) -> Result<Label> {
        let mut l = self.unary()?;
        while self.peek() == Some(&Tok::Sym('&')) {
            self.pos += 1;
            l = Label::And(Box::new(l), Box::new(self.unary()?));
        }
        Ok(l)
    }

    fn unary(&mut self) -> Result<Label> {
        let t = self.peek().cloned();
        self.pos += 1;
        match t {
            Some(Tok::Sym('!')) => Ok(Label::Not(Box::new(self.unary()?))),
            Some(Tok::Sym('(')) => {
                let l = self.or()?;
                if self.peek() != Some(&Tok::Sym(')')) {
                    return herr("expected `)` in label");
                }
                self.pos += 1;
                Ok(l)
            }
            Some(Tok::Ident(s)) if s == "t" => Ok(Label::True),
            Some(Tok::Ident(s)) if s == "f" => Ok(Label::False),
            Some(Tok::Int(i)) if i < self.num_aps => Ok(Label::Ap(i)),
            Some(Tok::Alias(a)) => self.aliases.get(&a).cloned().ok_or_else(|| Error::Automaton(format!("unknown alias @{a}"))),
            other => herr(format!("bad label token {other:?}")),
        }
    }
}

/// Acceptance expression as a disjunction of mark pairs.
fn parse_acceptance(toks: &[Tok]) -> Result<Vec<MarkPair>> {
    #[derive(Clone)]
    enum Atom {
        Fin(usize),
        Inf(usize),
    }
    // Disjunction of conjunctions of atoms; parentheses only around conjunctions.
    let mut disjuncts: Vec<Vec<Atom>> = vec![Vec::new()];
    let mut i = 0;
    let mut depth = 0;
    let mut only_true = false;
    while i < toks.len() {
        match &toks[i] {
            Tok::Ident(f) if (f == "Fin" || f == "Inf") => {
                let (Some(Tok::Sym('(')), Some(Tok::Int(m)), Some(Tok::Sym(')'))) = (toks.get(i + 1), toks.get(i + 2), toks.get(i + 3)) else {
                    return herr("malformed Fin/Inf atom");
                };
                disjuncts.last_mut().expect("nonempty").push(if f == "Fin" { Atom::Fin(*m) } else { Atom::Inf(*m) });
                i += 4;
            }
            Tok::Ident(t) if t == "t" && toks.len() == 1 => {
                only_true = true;
                i += 1;
            }
            Tok::Sym('&') => i += 1,
            Tok::Sym('|') if depth == 0 => {
                disjuncts.push(Vec::new());
                i += 1;
            }
            Tok::Sym('(') => {
                depth += 1;
                i += 1;
            }
            Tok::Sym(')') if depth > 0 => {
                depth -= 1;
                i += 1;
            }
            other => return herr(format!("unsupported acceptance token {other:?}")),
        }
    }
    if only_true {
        return Ok(vec![MarkPair { fin: BTreeSet::new(), inf: None }]);
    }
    if depth != 0 {
        return herr("unbalanced acceptance");
    }
    disjuncts
        .into_iter()
        .map(|conj| {
            if conj.is_empty() {
                return herr("empty acceptance disjunct");
            }
            let mut pair = MarkPair { fin: BTreeSet::new(), inf: None };
            for a in conj {
                match a {
                    Atom::Fin(m) => {
                        pair.fin.insert(m);
                    }
                    Atom::Inf(m) => {
                        if pair.inf.replace(m).is_some() {
                            return herr("generalized Büchi conjunctions are not supported");
                        }
                    }
                }
            }
            Ok(pair)
        })
        .collect()
}

/// Parses a HOA-subset document.
pub fn parse_hoa(text: &str) -> Result<Hoa> {
    let (header, body) = text.split_once("--BODY--").ok_or_else(|| Error::Automaton("missing --BODY--".into()))?;
    let body = body.split("--END--").next().unwrap_or("");
    let mut num_states = None;
    let mut start = None;
    let mut aps: Option<Vec<String>> = None;
    let mut aliases: BTreeMap<String, Label> = BTreeMap::new();
    let mut acceptance: Option<(usize, Vec<MarkPair>)> = None;
    let (mut deterministic, mut unambiguous) = (false, false);
    let mut saw_version = false;
    for raw in header.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(':').ok_or_else(|| Error::Automaton(format!("bad header line {line}")))?;
        let toks = tokenize(rest)?;
        match key.trim() {
            "HOA" => saw_version = true,
            "States" => match toks.as_slice() {
                [Tok::Int(n)] => num_states = Some(*n),
                _ => return herr("bad States header"),
            },
            "Start" => match toks.as_slice() {
                [Tok::Int(n)] if start.is_none() => start = Some(*n),
                _ => return herr("exactly one single-state Start header is supported"),
            },
            "AP" => {
                let Some(Tok::Int(n)) = toks.first() else {
                    return herr("bad AP header");
                };
                let names: Vec<String> = toks[1..]
                    .iter()
                    .map(|t| match t {
                        Tok::Str(s) => Ok(s.clone()),
                        _ => herr("AP names must be quoted"),
                    })
                    .collect::<Result<_>>()?;
                if names.len() != *n {
                    return herr("AP count mismatch");
                }
                aps = Some(names);
            }
            "Alias" => {
                let Some(Tok::Alias(name)) = toks.first() else {
                    return herr("bad Alias header");
                };
                let num_aps = aps.as_ref().map_or(0, Vec::len);
                let mut p = LabelParser { toks: &toks[1..], pos: 0, aliases: &aliases, num_aps };
                let l = p.or()?;
                if p.pos != toks.len() - 1 {
                    return herr("trailing tokens in alias");
                }
                aliases.insert(name.clone(), l);
            }
            "Acceptance" => {
                let Some(Tok::Int(n)) = toks.first() else {
                    return herr("bad Acceptance header");
                };
                acceptance = Some((*n, parse_acceptance(&toks[1..])?));
            }
            "acc-name" | "name" | "tool" => {}
            "properties" => {
                for t in &toks {
                    match t {
                        Tok::Ident(p) if p == "deterministic" => deterministic = true,
                        Tok::Ident(p) if p == "unambiguous" => unambiguous = true,
                        _ => {}
                    }
                }
            }
            other => return herr(format!("unsupported header {other}")),
        }
    }
    if !saw_version {
        return herr("missing HOA version header");
    }
    let n = num_states.ok_or_else(|| Error::Automaton("missing States".into()))?;
    let start = start.ok_or_else(|| Error::Automaton("missing Start".into()))?;
    if start >= n {
        return herr("Start out of range");
    }
    let aps = aps.unwrap_or_default();
    let (num_marks, pairs) = acceptance.ok_or_else(|| Error::Automaton("missing Acceptance".into()))?;
    for p in &pairs {
        if p.fin.iter().chain(p.inf.iter()).any(|&m| m >= num_marks) {
            return herr("acceptance mark out of range");
        }
    }
    let mut marks = vec![BTreeSet::new(); n];
    let mut edges: Vec<Vec<(Label, usize)>> = vec![Vec::new(); n];
    let mut seen_state = vec![false; n];
    let mut current: Option<usize> = None;
    for raw in body.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("State:") {
            let toks = tokenize(rest)?;
            let Some(Tok::Int(q)) = toks.first() else {
                return herr("bad State line");
            };
            if *q >= n || seen_state[*q] {
                return herr(format!("state {q} out of range or repeated"));
            }
            seen_state[*q] = true;
            let mut i = 1;
            if let Some(Tok::Str(_)) = toks.get(i) {
                i += 1;
            }
            if toks.get(i) == Some(&Tok::Sym('{')) {
                i += 1;
                while let Some(Tok::Int(m)) = toks.get(i) {
                    if *m >= num_marks {
                        return herr("mark out of range");
                    }
                    marks[*q].insert(*m);
                    i += 1;
                }
                if toks.get(i) != Some(&Tok::Sym('}')) {
                    return herr("unterminated mark set");
                }
                i += 1;
            }
            if i != toks.len() {
                return herr("trailing tokens on State line");
            }
            current = Some(*q);
            continue;
        }
        let q = current.ok_or_else(|| Error::Automaton("edge before State".into()))?;
        let toks = tokenize(line)?;
        if toks.first() != Some(&Tok::Sym('[')) {
            return herr("edges need explicit labels");
        }
        let close = toks.iter().position(|t| *t == Tok::Sym(']')).ok_or_else(|| Error::Automaton("unterminated label".into()))?;
        let mut p = LabelParser { toks: &toks[1..close], pos: 0, aliases: &aliases, num_aps: aps.len() };
        let label = p.or()?;
        if p.pos != close - 1 {
            return herr("trailing tokens in label");
        }
        match &toks[close + 1..] {
            [Tok::Int(d)] if *d < n => edges[q].push((label, *d)),
            [Tok::Int(_), Tok::Sym('{'), ..] => return herr("transition-based acceptance is not supported"),
            _ => return herr("bad edge destination"),
        }
    }
    Ok(Hoa { num_states: n, start, aps, num_marks, pairs, deterministic, unambiguous, marks, edges })
}

/// Canonical text; `parse_hoa(write_hoa(h)) == h`.
pub fn write_hoa(h: &Hoa) -> String {
    let mut out = String::from("HOA: v1\n");
    let _ = writeln!(out, "States: {}", h.num_states);
    let _ = writeln!(out, "Start: {}", h.start);
    let _ = write!(out, "AP: {}", h.aps.len());
    for a in &h.aps {
        let _ = write!(out, " \"{}\"", a.replace('\\', "\\\\").replace('"', "\\\""));
    }
    out.push('\n');
    let acc: Vec<String> = h
        .pairs
        .iter()
        .map(|p| {
            let mut atoms: Vec<String> = p.fin.iter().map(|m| format!("Fin({m})")).collect();
            atoms.extend(p.inf.iter().map(|m| format!("Inf({m})")));
            if atoms.is_empty() {
                "t".to_string()
            } else if h.pairs.len() > 1 && atoms.len() > 1 {
                format!("({})", atoms.join(" & "))
            } else {
                atoms.join(" & ")
            }
        })
        .collect();
    let _ = writeln!(out, "Acceptance: {} {}", h.num_marks, acc.join(" | "));
    let mut props = Vec::new();
    if h.deterministic {
        props.push("deterministic");
    }
    if h.unambiguous {
        props.push("unambiguous");
    }
    if !props.is_empty() {
        let _ = writeln!(out, "properties: {}", props.join(" "));
    }
    out.push_str("--BODY--\n");
    for q in 0..h.num_states {
        let _ = write!(out, "State: {q}");
        if !h.marks[q].is_empty() {
            let ms: Vec<String> = h.marks[q].iter().map(usize::to_string).collect();
            let _ = write!(out, " {{{}}}", ms.join(" "));
        }
        out.push('\n');
        for (l, d) in &h.edges[q] {
            out.push('[');
            l.write(&mut out);
            let _ = writeln!(out, "] {d}");
        }
    }
    out.push_str("--END--\n");
    out
}

impl Hoa {
    fn is_buchi(&self) -> bool {
        matches!(self.pairs.as_slice(), [MarkPair { fin, inf: Some(_) }] if fin.is_empty())
    }

    /// Evaluates edge labels for every letter of `alphabet`.
    pub fn instantiate(&self, alphabet: &[String]) -> Result<Automaton> {
        let letter_of: BTreeMap<&str, usize> = alphabet.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let ap_letter: Vec<usize> = self
            .aps
            .iter()
            .map(|a| letter_of.get(a.as_str()).copied().ok_or_else(|| Error::Automaton(format!("alphabet mismatch: {a} is not a state"))))
            .collect::<Result<_>>()?;
        let mut delta = vec![vec![Vec::new(); alphabet.len()]; self.num_states];
        for (q, row) in self.edges.iter().enumerate() {
            for (label, d) in row {
                for (l, succ) in delta[q].iter_mut().enumerate() {
                    if label.eval(&|ap| ap_letter[ap] == l) {
                        succ.push(*d);
                    }
                }
            }
        }
        for row in delta.iter_mut() {
            for succ in row.iter_mut() {
                succ.sort_unstable();
                succ.dedup();
            }
        }
        let max_out = delta.iter().flatten().map(Vec::len).max().unwrap_or(0);
        let min_out = delta.iter().flatten().map(Vec::len).min().unwrap_or(0);
        let marked = |m: usize| -> BTreeSet<usize> { (0..self.num_states).filter(|&q| self.marks[q].contains(&m)).collect() };
        if max_out > 1 && self.deterministic {
            return herr("declared deterministic but has two edges on one letter");
        }
        if max_out <= 1 && min_out == 1 {
            let all: BTreeSet<usize> = (0..self.num_states).collect();
            let acceptance = self
                .pairs
                .iter()
                .map(|p| {
                    let f = p.inf.map_or_else(|| all.clone(), marked);
                    let fin: BTreeSet<usize> = p.fin.iter().flat_map(|&m| marked(m)).collect();
                    (f, all.difference(&fin).copied().collect())
                })
                .collect();
            return Ok(Automaton::Deterministic(DeterministicAutomaton {
                num_states: self.num_states,
                initial: self.start,
                alphabet: alphabet.to_vec(),
                delta: delta.into_iter().map(|r| r.into_iter().map(|s| s[0]).collect()).collect(),
                acceptance,
            }));
        }
        if self.deterministic {
            return herr("automaton incomplete");
        }
        if !self.is_buchi() {
            return herr("nondeterministic or partial automata need Büchi acceptance");
        }
        let flag = if max_out <= 1 {
            UnambiguityFlag::Verified
        } else if self.unambiguous {
            UnambiguityFlag::Trusted
        } else {
            return herr("nondeterministic automaton without the unambiguous property");
        };
        Ok(Automaton::Uba(Uba {
            num_states: self.num_states,
            initial: self.start,
            alphabet: alphabet.to_vec(),
            delta,
            accepting: marked(self.pairs[0].inf.expect("Büchi")),
            unambiguous: flag,
        }))
    }
}

/// Parses and instantiates over `alphabet` in one step.
pub fn parse_automaton(text: &str, alphabet: &[String]) -> Result<Automaton> {
    parse_hoa(text)?.instantiate(alphabet)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alphabet() -> Vec<String> {
        ["s0", "s1", "s2", "s3", "s4"].iter().map(|s| s.to_string()).collect()
    }

    const ACCEPT_ALL: &str = "HOA: v1\nStates: 1\nStart: 0\nAP: 0\nAcceptance: 1 Inf(0)\n--BODY--\nState: 0 {0}\n[t] 0\n--END--\n";

    /// Tracks whether the current letter is s1 or s4; two Rabin pairs.
    const P1: &str = r#"HOA: v1
States: 3
Start: 0
AP: 2 "s1" "s4"
Alias: @one 0
Alias: @four 1
acc-name: Rabin 2
Acceptance: 4 (Fin(0) & Inf(1)) | (Fin(2) & Inf(3))
properties: deterministic
--BODY--
State: 0 {2 3}
[@one] 1
[@four & !@one] 2
[!@one & !@four] 0
State: 1 {1 2 3}
[@one] 1
[@four] 2
[!(@one | @four)] 0
State: 2 {3}
[0] 1
[1] 2
[!0 & !1] 0
--END--
"#;

    #[test]
    fn accept_all_is_deterministic_and_a_uba() {
        let a = parse_automaton(ACCEPT_ALL, &alphabet()).unwrap();
        let Automaton::Deterministic(d) = &a else { panic!() };
        assert_eq!(d.acceptance, vec![(BTreeSet::from([0]), BTreeSet::from([0]))]);
        assert!(a.as_uba().is_some());
    }

    #[test]
    fn rabin_pairs_follow_fin_and_inf_marks() {
        let Automaton::Deterministic(d) = parse_automaton(P1, &alphabet()).unwrap() else { panic!() };
        // Pair 1: F = {q1}, E = Q; pair 2: F = Q, E = {q2}.
        assert_eq!(d.acceptance[0], (BTreeSet::from([1]), BTreeSet::from([0, 1, 2])));
        assert_eq!(d.acceptance[1], (BTreeSet::from([0, 1, 2]), BTreeSet::from([2])));
        assert_eq!(d.delta[0], vec![0, 1, 0, 0, 2]);
    }

    #[test]
    fn undeclared_nondeterminism_is_rejected() {
        let t = "HOA: v1\nStates: 2\nStart: 0\nAP: 1 \"s0\"\nAcceptance: 1 Inf(0)\n--BODY--\nState: 0\n[0] 0\n[0] 1\n[!0] 0\nState: 1 {0}\n[t] 1\n--END--\n";
        assert!(parse_automaton(t, &alphabet()).is_err());
        let flagged = t.replace("--BODY--", "properties: unambiguous\n--BODY--");
        let Automaton::Uba(u) = parse_automaton(&flagged, &alphabet()).unwrap() else { panic!() };
        assert_eq!(u.unambiguous, UnambiguityFlag::Trusted);
        assert_eq!(u.delta[0][0], vec![0, 1]);
    }

    #[test]
    fn unsupported_inputs_fail_loudly() {
        let gen_buchi = ACCEPT_ALL.replace("Acceptance: 1 Inf(0)", "Acceptance: 2 Inf(0) & Inf(1)");
        assert!(parse_hoa(&gen_buchi).is_err());
        let parity = ACCEPT_ALL.replace("Acceptance: 1 Inf(0)", "Acceptance: 1 Inf(0)\nparity: yes");
        assert!(parse_hoa(&parity).is_err());
        let unknown_ap = ACCEPT_ALL.replace("AP: 0", "AP: 1 \"zz\"");
        assert!(parse_automaton(&unknown_ap, &alphabet()).is_err());
        let trans = ACCEPT_ALL.replace("[t] 0", "[t] 0 {0}");
        assert!(parse_hoa(&trans).is_err());
    }

    #[test]
    fn writer_round_trips() {
        for doc in [ACCEPT_ALL, P1] {
            let h = parse_hoa(doc).unwrap();
            assert_eq!(parse_hoa(&write_hoa(&h)).unwrap(), h);
        }
    }
}
