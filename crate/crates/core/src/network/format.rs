//! The `.hbn` network file and `.evid` evidence file, both JSON.
//!
//! ```json
//! {
//!   "variables": [
//!     {"name": "A", "kind": "discrete", "values": ["a0", "a1"]},
//!     {"name": "X", "kind": "continuous", "range": [0.0, 10.0]}
//!   ],
//!   "cpds": [
//!     {"child": "A", "parents": [], "kind": "table",
//!      "params": {"rows": [{"given": [], "p": [0.3, 0.7]}]}},
//!     {"child": "X", "parents": ["A"], "kind": "clg",
//!      "params": {"blocks": [
//!        {"given": ["a0"], "intercept": 2.0, "weights": [], "variance": 1.0},
//!        {"given": ["a1"], "uniform": true}]}}
//!   ]
//! }
//! ```
//!
//! `given` lists the states of the discrete parents, in parent order. Softmax
//! blocks carry `{"given": [...], "regions": [{"alpha": [...], "p": [...]}]}`
//! and uniform CPDs take empty params. Evidence files map variable names to a
//! state label (or index) for discrete variables and a number for continuous
//! ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};

use super::{ClgBlock, Cpd, CpdBody, Evidence, HybridNetwork, Region, Value, VarId, Variable, VariableKind};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    variables: Vec<RawVariable>,
    cpds: Vec<RawCpd>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariable {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCpd {
    child: String,
    #[serde(default)]
    parents: Vec<String>,
    kind: String,
    #[serde(default)]
    params: Json,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::syntax(format!("line {}, column {}", e.line(), e.column()), e.to_string())
}

/// Parses and validates a network.
pub fn parse_network(text: &str) -> Result<HybridNetwork> {
    let raw: RawNetwork = serde_json::from_str(text).map_err(json_error)?;

    let mut variables = Vec::with_capacity(raw.variables.len());
    for (i, v) in raw.variables.into_iter().enumerate() {
        let at = format!("variables[{i}]");
        let kind = match v.kind.as_str() {
            "discrete" => {
                if v.range.is_some() {
                    return Err(Error::syntax(format!("{at}.range"), "discrete variables take `values`"));
                }
                let states = v
                    .values
                    .ok_or_else(|| Error::syntax(format!("{at}.values"), "missing state list"))?;
                VariableKind::Discrete { states }
            }
            "continuous" => {
                if v.values.is_some() {
                    return Err(Error::syntax(format!("{at}.values"), "continuous variables take `range`"));
                }
                let [low, high] = v
                    .range
                    .ok_or_else(|| Error::syntax(format!("{at}.range"), "missing [low, high] range"))?;
                VariableKind::Continuous { low, high }
            }
            other => {
                return Err(Error::syntax(
                    format!("{at}.kind"),
                    format!("unknown variable kind \"{other}\" (expected \"discrete\" or \"continuous\")"),
                ))
            }
        };
        variables.push(Variable { id: i, name: v.name, kind });
    }

    let lookup = |name: &str, at: &str| -> Result<VarId> {
        variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::syntax(at, format!("unknown variable \"{name}\"")))
    };

    let mut cpds = Vec::with_capacity(raw.cpds.len());
    for (i, c) in raw.cpds.iter().enumerate() {
        let at = format!("cpds[{i}]");
        let child = lookup(&c.child, &format!("{at}.child"))?;
        let parents = c
            .parents
            .iter()
            .enumerate()
            .map(|(j, p)| lookup(p, &format!("{at}.parents[{j}]")))
            .collect::<Result<Vec<_>>>()?;
        let body = parse_body(&variables, &parents, &c.kind, &c.params, &at)?;
        cpds.push(Cpd { child, parents, body });
    }

    HybridNetwork::validated(variables, cpds)
}

/// Discrete parents of a family: (parent id, its state labels).
fn discrete_parents<'a>(variables: &'a [Variable], parents: &[VarId]) -> Vec<&'a [String]> {
    parents
        .iter()
        .filter_map(|&p| match &variables[p].kind {
            VariableKind::Discrete { states } => Some(states.as_slice()),
            VariableKind::Continuous { .. } => None,
        })
        .collect()
}

fn block_index(states: &[&[String]], given: &Json, at: &str) -> Result<usize> {
    let given: Vec<String> = serde_json::from_value(given.clone())
        .map_err(|e| Error::syntax(format!("{at}.given"), e.to_string()))?;
    if given.len() != states.len() {
        return Err(Error::syntax(
            format!("{at}.given"),
            format!("{} labels for {} discrete parents", given.len(), states.len()),
        ));
    }
    let mut index = 0;
    for (label, parent_states) in given.iter().zip(states) {
        let s = parent_states
            .iter()
            .position(|x| x == label)
            .ok_or_else(|| Error::syntax(format!("{at}.given"), format!("unknown parent state \"{label}\"")))?;
        index = index * parent_states.len() + s;
    }
    Ok(index)
}

fn field<'a>(obj: &'a Json, key: &str, at: &str) -> Result<&'a Json> {
    obj.get(key)
        .ok_or_else(|| Error::syntax(format!("{at}.{key}"), "missing field"))
}

fn floats(v: &Json, at: &str) -> Result<Vec<f64>> {
    serde_json::from_value(v.clone()).map_err(|e| Error::syntax(at, e.to_string()))
}

fn float(v: &Json, at: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::syntax(at, "expected a number"))
}

fn array<'a>(v: &'a Json, at: &str) -> Result<&'a Vec<Json>> {
    v.as_array().ok_or_else(|| Error::syntax(at, "expected a list"))
}

/// Places each keyed entry at its block index, requiring full coverage.
fn collect_blocks<T>(entries: Vec<(usize, T)>, count: usize, at: &str) -> Result<Vec<T>> {
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    for (index, item) in entries {
        if slots[index].replace(item).is_some() {
            return Err(Error::syntax(at, format!("parent assignment #{index} given twice")));
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::syntax(at, format!("parent assignment #{i} missing"))))
        .collect()
}

fn parse_body(variables: &[Variable], parents: &[VarId], kind: &str, params: &Json, at: &str) -> Result<CpdBody> {
    let states = discrete_parents(variables, parents);
    let count: usize = states.iter().map(|s| s.len()).product();
    let params_at = format!("{at}.params");
    match kind {
        "table" => {
            let rows_at = format!("{params_at}.rows");
            let mut entries = Vec::new();
            for (r, row) in array(field(params, "rows", &params_at)?, &rows_at)?.iter().enumerate() {
                let row_at = format!("{rows_at}[{r}]");
                let index = block_index(&states, field(row, "given", &row_at)?, &row_at)?;
                let p = floats(field(row, "p", &row_at)?, &format!("{row_at}.p"))?;
                entries.push((index, p));
            }
            Ok(CpdBody::Table {
                rows: collect_blocks(entries, count, &rows_at)?,
            })
        }
        "clg" => {
            let blocks_at = format!("{params_at}.blocks");
            let mut entries = Vec::new();
            for (b, block) in array(field(params, "blocks", &params_at)?, &blocks_at)?.iter().enumerate() {
                let block_at = format!("{blocks_at}[{b}]");
                let index = block_index(&states, field(block, "given", &block_at)?, &block_at)?;
                let parsed = if block.get("uniform").and_then(Json::as_bool) == Some(true) {
                    ClgBlock::Uniform
                } else {
                    ClgBlock::Linear {
                        intercept: float(field(block, "intercept", &block_at)?, &format!("{block_at}.intercept"))?,
                        weights: floats(field(block, "weights", &block_at)?, &format!("{block_at}.weights"))?,
                        variance: float(field(block, "variance", &block_at)?, &format!("{block_at}.variance"))?,
                    }
                };
                entries.push((index, parsed));
            }
            Ok(CpdBody::Clg {
                blocks: collect_blocks(entries, count, &blocks_at)?,
            })
        }
        "softmax" => {
            let blocks_at = format!("{params_at}.blocks");
            let mut entries = Vec::new();
            for (b, block) in array(field(params, "blocks", &params_at)?, &blocks_at)?.iter().enumerate() {
                let block_at = format!("{blocks_at}[{b}]");
                let index = block_index(&states, field(block, "given", &block_at)?, &block_at)?;
                let regions_at = format!("{block_at}.regions");
                let mut regions = Vec::new();
                for (r, region) in array(field(block, "regions", &block_at)?, &regions_at)?.iter().enumerate() {
                    let region_at = format!("{regions_at}[{r}]");
                    regions.push(Region {
                        alpha: floats(field(region, "alpha", &region_at)?, &format!("{region_at}.alpha"))?,
                        p: floats(field(region, "p", &region_at)?, &format!("{region_at}.p"))?,
                    });
                }
                entries.push((index, regions));
            }
            Ok(CpdBody::Softmax {
                blocks: collect_blocks(entries, count, &blocks_at)?,
            })
        }
        "uniform" => Ok(CpdBody::Uniform),
        other => Err(Error::syntax(
            format!("{at}.kind"),
            format!("unknown CPD kind \"{other}\" (expected table, clg, softmax or uniform)"),
        )),
    }
}

/// State labels of the discrete parents for block `index`.
fn given_labels(states: &[&[String]], mut index: usize) -> Vec<String> {
    let mut labels = vec![String::new(); states.len()];
    for (slot, parent_states) in labels.iter_mut().zip(states).rev() {
        *slot = parent_states[index % parent_states.len()].clone();
        index /= parent_states.len();
    }
    labels
}

pub fn serialize_network(net: &HybridNetwork) -> String {
    let variables = net
        .variables
        .iter()
        .map(|v| match &v.kind {
            VariableKind::Discrete { states } => RawVariable {
                name: v.name.clone(),
                kind: "discrete".into(),
                values: Some(states.clone()),
                range: None,
            },
            VariableKind::Continuous { low, high } => RawVariable {
                name: v.name.clone(),
                kind: "continuous".into(),
                values: None,
                range: Some([*low, *high]),
            },
        })
        .collect();

    let cpds = net
        .cpds
        .iter()
        .map(|cpd| {
            let states = discrete_parents(&net.variables, &cpd.parents);
            let params = match &cpd.body {
                CpdBody::Table { rows } => json!({
                    "rows": rows.iter().enumerate()
                        .map(|(i, p)| json!({"given": given_labels(&states, i), "p": p}))
                        .collect::<Vec<_>>()
                }),
                CpdBody::Clg { blocks } => json!({
                    "blocks": blocks.iter().enumerate().map(|(i, b)| match b {
                        ClgBlock::Linear { intercept, weights, variance } => json!({
                            "given": given_labels(&states, i),
                            "intercept": intercept,
                            "weights": weights,
                            "variance": variance,
                        }),
                        ClgBlock::Uniform => json!({"given": given_labels(&states, i), "uniform": true}),
                    }).collect::<Vec<_>>()
                }),
                CpdBody::Softmax { blocks } => json!({
                    "blocks": blocks.iter().enumerate().map(|(i, regions)| json!({
                        "given": given_labels(&states, i),
                        "regions": regions.iter()
                            .map(|r| json!({"alpha": r.alpha, "p": r.p}))
                            .collect::<Vec<_>>(),
                    })).collect::<Vec<_>>()
                }),
                CpdBody::Uniform => Json::Object(Map::new()),
            };
            RawCpd {
                child: net.variables[cpd.child].name.clone(),
                parents: cpd.parents.iter().map(|&p| net.variables[p].name.clone()).collect(),
                kind: cpd.body.kind_name().into(),
                params,
            }
        })
        .collect();

    let mut text = serde_json::to_string_pretty(&RawNetwork { variables, cpds }).expect("network serializes");
    text.push('\n');
    text
}

pub fn parse_evidence(text: &str, net: &HybridNetwork) -> Result<Evidence> {
    let raw: BTreeMap<String, Json> = serde_json::from_str(text).map_err(json_error)?;
    let mut evidence = Evidence::new();
    for (name, value) in raw {
        let var = net
            .find(&name)
            .ok_or_else(|| Error::syntax(name.clone(), "unknown variable"))?;
        let parsed = match (&net.variables[var].kind, &value) {
            (VariableKind::Discrete { states }, Json::String(label)) => Value::Discrete(
                states
                    .iter()
                    .position(|s| s == label)
                    .ok_or_else(|| Error::syntax(name.clone(), format!("unknown state \"{label}\"")))?,
            ),
            (VariableKind::Discrete { .. }, Json::Number(n)) => Value::Discrete(
                n.as_u64()
                    .ok_or_else(|| Error::syntax(name.clone(), "state index must be a non-negative integer"))?
                    as usize,
            ),
            (VariableKind::Continuous { .. }, Json::Number(n)) => Value::Continuous(n.as_f64().unwrap_or(f64::NAN)),
            _ => return Err(Error::syntax(name.clone(), "value does not match the variable kind")),
        };
        if !net.domain(var).contains(parsed) {
            return Err(Error::Domain(format!("evidence {name} = {value} outside its domain")));
        }
        evidence.insert(var, parsed);
    }
    Ok(evidence)
}

pub fn serialize_evidence(evidence: &Evidence, net: &HybridNetwork) -> String {
    let mut map = Map::new();
    for (var, value) in evidence.iter() {
        let v = &net.variables[var];
        let json = match (&v.kind, value) {
            (VariableKind::Discrete { states }, Value::Discrete(s)) => Json::String(states[s].clone()),
            (_, Value::Continuous(x)) => json!(x),
            (_, Value::Discrete(s)) => json!(s),
        };
        map.insert(v.name.clone(), json);
    }
    let mut text = serde_json::to_string_pretty(&Json::Object(map)).expect("evidence serializes");
    text.push('\n');
    text
}
