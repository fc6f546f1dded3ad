//! JSON import/export of LP and MILP models, plus LP-format text export.
//!
//! Variables are referenced by name; rationals are canonical `"num/den"`
//! strings. On import, rows of the shape `x - M·b <= 0` with `b` binary,
//! `x >= 0` and `M > 0` additionally register the indicator `b = 0 ⟹ x = 0`;
//! the row itself is kept.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::lp::{Constraint, LinearProgram, Relation, Sense};
use crate::milp::{Indicator, MilpModel};
use crate::rational::{serde_q, serde_q_map, serde_q_opt, Q};
use crate::OptError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VarJson {
    name: String,
    #[serde(default, with = "serde_q_opt", skip_serializing_if = "Option::is_none")]
    lower: Option<Q>,
    #[serde(default, with = "serde_q_opt", skip_serializing_if = "Option::is_none")]
    upper: Option<Q>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    binary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowJson {
    #[serde(with = "serde_q_map")]
    coeffs: BTreeMap<String, Q>,
    rel: Relation,
    #[serde(with = "serde_q")]
    rhs: Q,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndicatorJson {
    binary: String,
    var: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    sense: Sense,
    variables: Vec<VarJson>,
    #[serde(with = "serde_q_map")]
    objective: BTreeMap<String, Q>,
    constraints: Vec<RowJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    indicators: Vec<IndicatorJson>,
}

/// Serializes `model` to canonical JSON.
pub fn milp_to_json(model: &MilpModel) -> String {
    let names: Vec<&str> = model.lp.variables.iter().map(|v| v.name.as_str()).collect();
    let binaries: BTreeSet<usize> = model.binaries.iter().copied().collect();
    let strict: BTreeSet<usize> = model.strict_rows.iter().copied().collect();
    let terms = |coeffs: &[(usize, Q)]| -> BTreeMap<String, Q> {
        coeffs.iter().map(|(j, c)| (names[*j].to_string(), c.clone())).collect()
    };
    let json = ModelJson {
        sense: model.lp.sense,
        variables: model
            .lp
            .variables
            .iter()
            .enumerate()
            .map(|(j, v)| VarJson {
                name: v.name.clone(),
                lower: v.lower.clone(),
                upper: v.upper.clone(),
                binary: binaries.contains(&j),
            })
            .collect(),
        objective: terms(&model.lp.objective),
        constraints: model
            .lp
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| RowJson {
                coeffs: terms(&c.coeffs),
                rel: c.relation,
                rhs: c.rhs.clone(),
                strict: strict.contains(&i),
            })
            .collect(),
        indicators: model
            .indicators
            .iter()
            .map(|ind| IndicatorJson {
                binary: names[ind.binary].to_string(),
                var: names[ind.var].to_string(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&json).expect("model serializes")
}

/// Parses a model from JSON, detecting big-M rows as indicators.
pub fn milp_from_json(text: &str) -> Result<MilpModel, OptError> {
    let json: ModelJson = serde_json::from_str(text).map_err(|e| OptError::Format(e.to_string()))?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut lp = LinearProgram::new(json.sense);
    let mut binaries = Vec::new();
    for v in &json.variables {
        if index.contains_key(&v.name) {
            return Err(OptError::Format(format!("duplicate variable {}", v.name)));
        }
        let j = lp.add_var(v.name.clone(), v.lower.clone(), v.upper.clone());
        index.insert(v.name.clone(), j);
        if v.binary {
            binaries.push(j);
        }
    }
    let resolve = |m: &BTreeMap<String, Q>| -> Result<Vec<(usize, Q)>, OptError> {
        m.iter()
            .map(|(n, c)| {
                index
                    .get(n)
                    .map(|&j| (j, c.clone()))
                    .ok_or_else(|| OptError::Format(format!("unknown variable {n}")))
            })
            .collect()
    };
    let objective = resolve(&json.objective)?;
    lp.set_objective(json.sense, objective);
    let mut strict_rows = Vec::new();
    for row in &json.constraints {
        if row.strict && row.rel == Relation::Eq {
            return Err(OptError::Format("strict equality row".into()));
        }
        let i = lp.add_constraint(resolve(&row.coeffs)?, row.rel, row.rhs.clone());
        if row.strict {
            strict_rows.push(i);
        }
    }
    let mut model = MilpModel {
        lp,
        binaries,
        indicators: Vec::new(),
        strict_rows,
    };
    for ind in &json.indicators {
        let binary = *index
            .get(&ind.binary)
            .ok_or_else(|| OptError::Format(format!("unknown variable {}", ind.binary)))?;
        let var = *index
            .get(&ind.var)
            .ok_or_else(|| OptError::Format(format!("unknown variable {}", ind.var)))?;
        push_indicator(&mut model, Indicator { binary, var })?;
    }
    let detected: Vec<Indicator> = model
        .lp
        .constraints
        .iter()
        .filter_map(|c| big_m_indicator(&model, c))
        .collect();
    for ind in detected {
        push_indicator(&mut model, ind)?;
    }
    Ok(model)
}

fn push_indicator(model: &mut MilpModel, ind: Indicator) -> Result<(), OptError> {
    if !model.binaries.contains(&ind.binary) {
        return Err(OptError::Format(format!(
            "indicator on non-binary {}",
            model.lp.variables[ind.binary].name
        )));
    }
    let lower_ok = model.lp.variables[ind.var]
        .lower
        .as_ref()
        .is_some_and(|l| !l.is_negative());
    if !lower_ok {
        return Err(OptError::Format(format!(
            "indicator-linked variable {} is not nonnegative",
            model.lp.variables[ind.var].name
        )));
    }
    if !model.indicators.contains(&ind) {
        model.indicators.push(ind);
    }
    Ok(())
}

/// Recognizes `x - M·b <= 0` (or its negation as `>= 0`).
fn big_m_indicator(model: &MilpModel, c: &Constraint) -> Option<Indicator> {
    if c.coeffs.len() != 2 || !c.rhs.is_zero() || c.relation == Relation::Eq {
        return None;
    }
    let flip = c.relation == Relation::Ge;
    let norm = |v: &Q| if flip { -v.clone() } else { v.clone() };
    let (j0, c0) = (&c.coeffs[0].0, norm(&c.coeffs[0].1));
    let (j1, c1) = (&c.coeffs[1].0, norm(&c.coeffs[1].1));
    let pick = |x: usize, cx: &Q, b: usize, cb: &Q| -> Option<Indicator> {
        let nonneg = model.lp.variables[x].lower.as_ref().is_some_and(|l| !l.is_negative());
        (cx.is_positive() && cb.is_negative() && model.binaries.contains(&b) && !model.binaries.contains(&x) && nonneg)
            .then_some(Indicator { binary: b, var: x })
    };
    pick(*j0, &c0, *j1, &c1).or_else(|| pick(*j1, &c1, *j0, &c0))
}

fn lcm_of_denominators<'a>(values: impl Iterator<Item = &'a Q>) -> BigInt {
    values.fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

fn lp_term(out: &mut String, first: &mut bool, coeff: &BigInt, name: &str) {
    let sign = if coeff.is_negative() { "-" } else { "+" };
    if *first && !coeff.is_negative() {
        let _ = write!(out, " {} {}", coeff, name);
    } else {
        let _ = write!(out, " {} {} {}", sign, coeff.abs(), name);
    }
    *first = false;
}

fn lp_row(out: &mut String, names: &[String], coeffs: &[(usize, Q)]) -> BigInt {
    let scale = lcm_of_denominators(coeffs.iter().map(|(_, c)| c));
    let mut first = true;
    for (j, c) in coeffs {
        let v = (c * Q::from(scale.clone())).to_integer();
        lp_term(out, &mut first, &v, &names[*j]);
    }
    if first {
        out.push_str(" 0");
    }
    scale
}

/// Exports `model` in CPLEX LP text format for cross-checking with external solvers.
///
/// Every row and the objective are scaled by the least common multiple of
/// their denominators, so the exported objective value is a positive
/// multiple of the original. Fractional bounds become scaled rows.
pub fn milp_to_lp_format(model: &MilpModel) -> String {
    let names: Vec<String> = model
        .lp
        .variables
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let clean: String = v
                .name
                .chars()
                .map(|ch| if ch.is_ascii_alphanumeric() || ch == '_' { ch } else { '_' })
                .collect();
            format!("v{j}_{clean}")
        })
        .collect();
    let mut out = String::new();
    out.push_str(match model.lp.sense {
        Sense::Maximize => "Maximize\n",
        _ => "Minimize\n",
    });
    out.push_str(" obj:");
    let objective = match model.lp.sense {
        Sense::Feasibility => Vec::new(),
        _ => model.lp.objective.clone(),
    };
    lp_row(&mut out, &names, &objective);
    out.push_str("\nSubject To\n");
    let strict: BTreeSet<usize> = model.strict_rows.iter().copied().collect();
    let mut rows: Vec<(String, Vec<(usize, Q)>, Relation, Q)> = model
        .lp
        .constraints
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let tag = if strict.contains(&i) { format!("c{i}_strict") } else { format!("c{i}") };
            (tag, c.coeffs.clone(), c.relation, c.rhs.clone())
        })
        .collect();
    let mut bounds = String::new();
    for (j, v) in model.lp.variables.iter().enumerate() {
        let integral = |b: &Option<Q>| b.as_ref().map_or(true, |x| x.is_integer());
        if integral(&v.lower) && integral(&v.upper) {
            match (&v.lower, &v.upper) {
                (Some(l), Some(u)) => {
                    let _ = writeln!(bounds, " {} <= {} <= {}", l.to_integer(), names[j], u.to_integer());
                }
                (Some(l), None) => {
                    let _ = writeln!(bounds, " {} >= {}", names[j], l.to_integer());
                }
                (None, Some(u)) => {
                    let _ = writeln!(bounds, " -inf <= {} <= {}", names[j], u.to_integer());
                }
                (None, None) => {
                    let _ = writeln!(bounds, " {} free", names[j]);
                }
            }
        } else {
            let _ = writeln!(bounds, " {} free", names[j]);
            if let Some(l) = &v.lower {
                rows.push((format!("lb{j}"), vec![(j, Q::one())], Relation::Ge, l.clone()));
            }
            if let Some(u) = &v.upper {
                rows.push((format!("ub{j}"), vec![(j, Q::one())], Relation::Le, u.clone()));
            }
        }
    }
    for (tag, coeffs, rel, rhs) in &rows {
        let _ = write!(out, " {tag}:");
        let scale = lcm_of_denominators(coeffs.iter().map(|(_, c)| c).chain(std::iter::once(rhs)));
        let mut first = true;
        for (j, c) in coeffs {
            lp_term(&mut out, &mut first, &(c * Q::from(scale.clone())).to_integer(), &names[*j]);
        }
        if first {
            out.push_str(" 0");
        }
        let op = match rel {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " {op} {}", (rhs * Q::from(scale)).to_integer());
    }
    out.push_str("Bounds\n");
    out.push_str(&bounds);
    if !model.binaries.is_empty() {
        out.push_str("Binaries\n");
        for &b in &model.binaries {
            let _ = writeln!(out, " {}", names[b]);
        }
    }
    out.push_str("End\n");
    out
}
