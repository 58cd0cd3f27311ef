//! Hybrid Bayesian networks: variables, conditional distributions, evidence and validation.
//!
//! A network is a DAG over discrete and bounded continuous variables. Every
//! variable owns exactly one CPD from four families:
//!
//! * `Table` – discrete child with discrete parents.
//! * `Clg` – conditional linear Gaussian; continuous child whose mean is linear
//!   in its continuous parents, one block per joint discrete-parent assignment.
//! * `Softmax` – generalized softmax; discrete child with continuous (and
//!   optionally discrete) parents, mixing `R` region distributions.
//! * `Uniform` – continuous root, flat over its range.
//!
//! Parent assignments are indexed in mixed radix with the first listed discrete
//! parent most significant.

mod format;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use format::{parse_evidence, parse_network, serialize_evidence, serialize_network};

pub type VarId = usize;

/// Tolerance for a distribution summing to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Discrete(usize),
    Continuous(f64),
}

impl Value {
    pub fn as_discrete(self) -> Option<usize> {
        match self {
            Value::Discrete(s) => Some(s),
            Value::Continuous(_) => None,
        }
    }

    pub fn as_continuous(self) -> Option<f64> {
        match self {
            Value::Continuous(x) => Some(x),
            Value::Discrete(_) => None,
        }
    }
}

/// The value space of a variable, stripped of labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    Discrete { cardinality: usize },
    Continuous { low: f64, high: f64 },
}

impl Domain {
    pub fn is_discrete(&self) -> bool {
        matches!(self, Domain::Discrete { .. })
    }

    pub fn cardinality(&self) -> Option<usize> {
        match *self {
            Domain::Discrete { cardinality } => Some(cardinality),
            Domain::Continuous { .. } => None,
        }
    }

    pub fn contains(&self, value: Value) -> bool {
        match (*self, value) {
            (Domain::Discrete { cardinality }, Value::Discrete(s)) => s < cardinality,
            (Domain::Continuous { low, high }, Value::Continuous(x)) => x >= low && x <= high,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VariableKind {
    Discrete { states: Vec<String> },
    Continuous { low: f64, high: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub kind: VariableKind,
}

impl Variable {
    pub fn discrete(id: VarId, name: &str, states: &[&str]) -> Self {
        Variable {
            id,
            name: name.to_string(),
            kind: VariableKind::Discrete {
                states: states.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn continuous(id: VarId, name: &str, low: f64, high: f64) -> Self {
        Variable {
            id,
            name: name.to_string(),
            kind: VariableKind::Continuous { low, high },
        }
    }

    pub fn domain(&self) -> Domain {
        match &self.kind {
            VariableKind::Discrete { states } => Domain::Discrete {
                cardinality: states.len(),
            },
            VariableKind::Continuous { low, high } => Domain::Continuous {
                low: *low,
                high: *high,
            },
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, VariableKind::Discrete { .. })
    }
}

/// One linear-Gaussian block of a CLG, selected by a discrete-parent assignment.
#[derive(Clone, Debug, PartialEq)]
pub enum ClgBlock {
    Linear {
        intercept: f64,
        weights: Vec<f64>,
        variance: f64,
    },
    /// Flat over the child's range, independent of continuous parents.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    /// `alpha[0]` is the bias, `alpha[1..]` the weights on continuous parents.
    pub alpha: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CpdBody {
    /// One row per parent assignment, each row a distribution over the child.
    Table { rows: Vec<Vec<f64>> },
    Clg { blocks: Vec<ClgBlock> },
    /// One region list per discrete-parent assignment.
    Softmax { blocks: Vec<Vec<Region>> },
    Uniform,
}

impl CpdBody {
    pub fn kind_name(&self) -> &'static str {
        match self {
            CpdBody::Table { .. } => "table",
            CpdBody::Clg { .. } => "clg",
            CpdBody::Softmax { .. } => "softmax",
            CpdBody::Uniform => "uniform",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cpd {
    pub child: VarId,
    pub parents: Vec<VarId>,
    pub body: CpdBody,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridNetwork {
    pub variables: Vec<Variable>,
    pub cpds: Vec<Cpd>,
}

/// Observed values keyed by variable id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evidence {
    values: BTreeMap<VarId, Value>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, var: VarId, value: Value) -> Option<Value> {
        self.values.insert(var, value)
    }

    pub fn with(mut self, var: VarId, value: Value) -> Self {
        self.values.insert(var, value);
        self
    }

    pub fn get(&self, var: VarId) -> Option<Value> {
        self.values.get(&var).copied()
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.values.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, Value)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }

    pub fn restrict(&self, scope: &[VarId]) -> Evidence {
        Evidence {
            values: self
                .values
                .iter()
                .filter(|(k, _)| scope.contains(k))
                .map(|(&k, &v)| (k, v))
                .collect(),
        }
    }

    pub fn check(&self, net: &HybridNetwork) -> Result<()> {
        for (var, value) in self.iter() {
            let v = net
                .variables
                .get(var)
                .ok_or_else(|| Error::Contract(format!("evidence on unknown variable id {var}")))?;
            if !v.domain().contains(value) {
                return Err(Error::Domain(format!(
                    "evidence value {value:?} outside the domain of {}",
                    v.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// The variable or CPD the rule applies to.
    pub subject: String,
    pub rule: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.subject, self.rule, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn push(&mut self, subject: impl Into<String>, rule: &str, detail: impl Into<String>) {
        self.violations.push(Violation {
            subject: subject.into(),
            rule: rule.to_string(),
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub mod rules {
    pub const UNIQUE_NAMES: &str = "unique names";
    pub const ID_ORDER: &str = "ids match positions";
    pub const CARDINALITY: &str = "cardinality >= 2";
    pub const BOUNDED_RANGE: &str = "bounded range";
    pub const ONE_CPD: &str = "one CPD per variable";
    pub const UNKNOWN_VARIABLE: &str = "unknown variable";
    pub const DUPLICATE_PARENT: &str = "distinct parents";
    pub const ACYCLIC: &str = "acyclic";
    pub const CHILD_KIND: &str = "child kind";
    pub const PARENT_KIND: &str = "parent kind";
    pub const SHAPE: &str = "parameter shape";
    pub const NONNEGATIVE: &str = "nonnegative probabilities";
    pub const ROW_SUM: &str = "row sum ≠ 1";
    pub const VARIANCE: &str = "variance > 0";
    pub const FINITE: &str = "finite parameters";
}

impl HybridNetwork {
    pub fn new(variables: Vec<Variable>, cpds: Vec<Cpd>) -> Self {
        HybridNetwork { variables, cpds }
    }

    /// Builds a network and rejects it unless every invariant holds.
    pub fn validated(variables: Vec<Variable>, cpds: Vec<Cpd>) -> Result<Self> {
        let net = HybridNetwork { variables, cpds };
        let report = net.validate();
        if report.is_ok() {
            Ok(net)
        } else {
            Err(Error::Validation(report))
        }
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id]
    }

    pub fn domain(&self, id: VarId) -> Domain {
        self.variables[id].domain()
    }

    pub fn find(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn cpd_of(&self, child: VarId) -> Option<&Cpd> {
        self.cpds.iter().find(|c| c.child == child)
    }

    pub fn is_discrete(&self) -> bool {
        self.variables.iter().all(Variable::is_discrete)
    }

    pub fn continuous_count(&self) -> usize {
        self.variables.iter().filter(|v| !v.is_discrete()).count()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_network(self)
    }

    /// Topological order, lowest id first among ready variables.
    pub fn topological_order(&self) -> Result<Vec<VarId>> {
        let n = self.variables.len();
        let mut indegree = vec![0usize; n];
        let mut children: Vec<Vec<VarId>> = vec![Vec::new(); n];
        for cpd in &self.cpds {
            for &p in &cpd.parents {
                if p >= n || cpd.child >= n {
                    return Err(Error::Contract("CPD references an unknown variable".into()));
                }
                indegree[cpd.child] += 1;
                children[p].push(cpd.child);
            }
        }
        let mut ready: BTreeSet<VarId> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != n {
            return Err(Error::Contract("network graph has a cycle".into()));
        }
        Ok(order)
    }

    /// Evaluates the CPD of `child` at a full assignment indexed by variable id.
    pub fn eval_family(&self, cpd: &Cpd, full: &[Value]) -> Result<f64> {
        cpd.eval_with(self, full[cpd.child], |i| full[cpd.parents[i]])
    }
}

/// Checks every structural and numerical invariant of a network.
pub fn validate_network(net: &HybridNetwork) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = net.variables.len();

    let mut names = HashSet::new();
    for (i, v) in net.variables.iter().enumerate() {
        if v.id != i {
            report.push(&v.name, rules::ID_ORDER, format!("id {} at position {i}", v.id));
        }
        if !names.insert(v.name.as_str()) {
            report.push(&v.name, rules::UNIQUE_NAMES, "name used twice");
        }
        match &v.kind {
            VariableKind::Discrete { states } => {
                if states.len() < 2 {
                    report.push(&v.name, rules::CARDINALITY, format!("{} states", states.len()));
                }
            }
            VariableKind::Continuous { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    report.push(&v.name, rules::BOUNDED_RANGE, format!("range [{low}, {high}]"));
                }
            }
        }
    }

    let mut cpd_count = vec![0usize; n];
    for cpd in &net.cpds {
        if cpd.child >= n {
            report.push(format!("cpd #{}", cpd.child), rules::UNKNOWN_VARIABLE, "child id out of range");
            continue;
        }
        cpd_count[cpd.child] += 1;
    }
    for (i, &count) in cpd_count.iter().enumerate() {
        if count != 1 {
            report.push(&net.variables[i].name, rules::ONE_CPD, format!("{count} CPDs"));
        }
    }

    let mut structurally_sound = true;
    for cpd in net.cpds.iter().filter(|c| c.child < n) {
        let subject = format!("cpd({})", net.variables[cpd.child].name);
        let mut seen = HashSet::new();
        for &p in &cpd.parents {
            if p >= n {
                report.push(&subject, rules::UNKNOWN_VARIABLE, format!("parent id {p}"));
                structurally_sound = false;
            } else if p == cpd.child || !seen.insert(p) {
                report.push(&subject, rules::DUPLICATE_PARENT, format!("parent {}", net.variables[p].name));
                structurally_sound = false;
            }
        }
    }
    if !structurally_sound {
        return report;
    }

    if net.topological_order().is_err() {
        report.push("graph", rules::ACYCLIC, "the parent relation contains a cycle");
    }

    for cpd in net.cpds.iter().filter(|c| c.child < n) {
        validate_cpd(net, cpd, &mut report);
    }
    report
}

fn validate_cpd(net: &HybridNetwork, cpd: &Cpd, report: &mut ValidationReport) {
    let child = &net.variables[cpd.child];
    let subject = format!("cpd({})", child.name);
    let discrete_parents: Vec<usize> = cpd
        .parents
        .iter()
        .filter_map(|&p| net.domain(p).cardinality())
        .collect();
    let continuous_parents = cpd.parents.len() - discrete_parents.len();
    let assignments: usize = discrete_parents.iter().product();

    match &cpd.body {
        CpdBody::Table { rows } => {
            let Some(k) = child.domain().cardinality() else {
                report.push(&subject, rules::CHILD_KIND, "table child must be discrete");
                return;
            };
            if continuous_parents > 0 {
                report.push(&subject, rules::PARENT_KIND, "table parents must be discrete");
                return;
            }
            if rows.len() != assignments {
                report.push(&subject, rules::SHAPE, format!("{} rows, expected {assignments}", rows.len()));
                return;
            }
            for (r, row) in rows.iter().enumerate() {
                check_distribution(report, &subject, &format!("row {r}"), row, k);
            }
        }
        CpdBody::Clg { blocks } => {
            if child.is_discrete() {
                report.push(&subject, rules::CHILD_KIND, "clg child must be continuous");
                return;
            }
            if blocks.len() != assignments {
                report.push(&subject, rules::SHAPE, format!("{} blocks, expected {assignments}", blocks.len()));
                return;
            }
            for (b, block) in blocks.iter().enumerate() {
                if let ClgBlock::Linear {
                    intercept,
                    weights,
                    variance,
                } = block
                {
                    if weights.len() != continuous_parents {
                        report.push(
                            &subject,
                            rules::SHAPE,
                            format!("block {b}: {} weights, expected {continuous_parents}", weights.len()),
                        );
                    }
                    if !intercept.is_finite() || weights.iter().any(|w| !w.is_finite()) {
                        report.push(&subject, rules::FINITE, format!("block {b}"));
                    }
                    if !(variance.is_finite() && *variance > 0.0) {
                        report.push(&subject, rules::VARIANCE, format!("block {b}: variance {variance}"));
                    }
                }
            }
        }
        CpdBody::Softmax { blocks } => {
            let Some(k) = child.domain().cardinality() else {
                report.push(&subject, rules::CHILD_KIND, "softmax child must be discrete");
                return;
            };
            if blocks.len() != assignments {
                report.push(&subject, rules::SHAPE, format!("{} blocks, expected {assignments}", blocks.len()));
                return;
            }
            for (b, regions) in blocks.iter().enumerate() {
                if regions.is_empty() {
                    report.push(&subject, rules::SHAPE, format!("block {b}: no regions"));
                }
                for (r, region) in regions.iter().enumerate() {
                    if region.alpha.len() != continuous_parents + 1 {
                        report.push(
                            &subject,
                            rules::SHAPE,
                            format!(
                                "block {b} region {r}: {} alpha entries, expected {}",
                                region.alpha.len(),
                                continuous_parents + 1
                            ),
                        );
                    }
                    if region.alpha.iter().any(|a| !a.is_finite()) {
                        report.push(&subject, rules::FINITE, format!("block {b} region {r}"));
                    }
                    check_distribution(report, &subject, &format!("block {b} region {r}"), &region.p, k);
                }
            }
        }
        CpdBody::Uniform => {
            if child.is_discrete() {
                report.push(&subject, rules::CHILD_KIND, "uniform child must be continuous");
            }
            if !cpd.parents.is_empty() {
                report.push(&subject, rules::PARENT_KIND, "uniform CPD takes no parents");
            }
        }
    }
}

fn check_distribution(report: &mut ValidationReport, subject: &str, what: &str, p: &[f64], k: usize) {
    if p.len() != k {
        report.push(subject, rules::SHAPE, format!("{what}: {} entries, expected {k}", p.len()));
        return;
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        report.push(subject, rules::NONNEGATIVE, format!("{what}: {p:?}"));
        return;
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        report.push(subject, rules::ROW_SUM, format!("{what} sums to {sum}"));
    }
}

pub(crate) fn gaussian_density(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// Region weights `w^r`, computed with the maximum score subtracted.
pub fn softmax_region_weights(regions: &[Region], z: &[f64]) -> Vec<f64> {
    let scores: Vec<f64> = regions
        .iter()
        .map(|r| r.alpha[0] + r.alpha[1..].iter().zip(z).map(|(a, x)| a * x).sum::<f64>())
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl Cpd {
    /// Probability (discrete child) or density (continuous child) of `child`
    /// given parent values listed in `self.parents` order.
    pub fn eval(&self, net: &HybridNetwork, child: Value, parents: &[Value]) -> Result<f64> {
        if parents.len() != self.parents.len() {
            return Err(Error::Contract(format!(
                "{} parent values for {} parents",
                parents.len(),
                self.parents.len()
            )));
        }
        self.eval_with(net, child, |i| parents[i])
    }

    pub(crate) fn eval_with(&self, net: &HybridNetwork, child: Value, parent: impl Fn(usize) -> Value) -> Result<f64> {
        let child_domain = net.domain(self.child);
        if !child_domain.contains(child) {
            return Err(Error::Domain(format!(
                "{child:?} outside the domain of {}",
                net.variables[self.child].name
            )));
        }
        let (block, z) = self.split_parents(net, &parent)?;
        Ok(match &self.body {
            CpdBody::Table { rows } => rows[block][child.as_discrete().unwrap_or(0)],
            CpdBody::Clg { blocks } => {
                let x = child.as_continuous().unwrap_or(0.0);
                match &blocks[block] {
                    ClgBlock::Linear {
                        intercept,
                        weights,
                        variance,
                    } => {
                        let mean = intercept + weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>();
                        gaussian_density(x, mean, *variance)
                    }
                    ClgBlock::Uniform => uniform_density(child_domain),
                }
            }
            CpdBody::Softmax { blocks } => {
                let j = child.as_discrete().unwrap_or(0);
                let regions = &blocks[block];
                softmax_region_weights(regions, &z)
                    .iter()
                    .zip(regions)
                    .map(|(w, r)| w * r.p[j])
                    .sum()
            }
            CpdBody::Uniform => uniform_density(child_domain),
        })
    }

    /// Draws a child value. Continuous draws outside the child's range are
    /// clamped to the nearest bound; the flag reports whether that happened.
    pub fn sample<R: Rng + ?Sized>(&self, net: &HybridNetwork, parents: &[Value], rng: &mut R) -> Result<(Value, bool)> {
        if parents.len() != self.parents.len() {
            return Err(Error::Contract(format!(
                "{} parent values for {} parents",
                parents.len(),
                self.parents.len()
            )));
        }
        self.sample_with(net, |i| parents[i], rng)
    }

    pub(crate) fn sample_with<R: Rng + ?Sized>(
        &self,
        net: &HybridNetwork,
        parent: impl Fn(usize) -> Value,
        rng: &mut R,
    ) -> Result<(Value, bool)> {
        let (block, z) = self.split_parents(net, &parent)?;
        let domain = net.domain(self.child);
        let draw_categorical = |p: &[f64], rng: &mut R| Value::Discrete(sample_categorical(p, rng));
        Ok(match &self.body {
            CpdBody::Table { rows } => (draw_categorical(&rows[block], rng), false),
            CpdBody::Softmax { blocks } => {
                let regions = &blocks[block];
                let w = softmax_region_weights(regions, &z);
                let k = regions[0].p.len();
                let p: Vec<f64> = (0..k).map(|j| w.iter().zip(regions).map(|(w, r)| w * r.p[j]).sum()).collect();
                (draw_categorical(&p, rng), false)
            }
            CpdBody::Clg { blocks } => match &blocks[block] {
                ClgBlock::Linear {
                    intercept,
                    weights,
                    variance,
                } => {
                    let mean = intercept + weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>();
                    let e: f64 = rng.sample(StandardNormal);
                    clamp_to(domain, mean + variance.sqrt() * e)
                }
                ClgBlock::Uniform => (sample_uniform(domain, rng), false),
            },
            CpdBody::Uniform => (sample_uniform(domain, rng), false),
        })
    }

    /// Discrete-parent block index and the continuous parent vector.
    fn split_parents(&self, net: &HybridNetwork, parent: &impl Fn(usize) -> Value) -> Result<(usize, Vec<f64>)> {
        let mut block = 0usize;
        let mut z = Vec::new();
        for (i, &p) in self.parents.iter().enumerate() {
            let value = parent(i);
            let domain = net.domain(p);
            if !domain.contains(value) {
                return Err(Error::Domain(format!(
                    "parent value {value:?} outside the domain of {}",
                    net.variables[p].name
                )));
            }
            match (domain, value) {
                (Domain::Discrete { cardinality }, Value::Discrete(s)) => block = block * cardinality + s,
                (_, Value::Continuous(x)) => z.push(x),
                _ => unreachable!("domain check covers kind mismatches"),
            }
        }
        Ok((block, z))
    }
}

fn uniform_density(domain: Domain) -> f64 {
    match domain {
        Domain::Continuous { low, high } => 1.0 / (high - low),
        Domain::Discrete { cardinality } => 1.0 / cardinality as f64,
    }
}

fn sample_uniform<R: Rng + ?Sized>(domain: Domain, rng: &mut R) -> Value {
    match domain {
        Domain::Continuous { low, high } => Value::Continuous(low + (high - low) * rng.random::<f64>()),
        Domain::Discrete { cardinality } => Value::Discrete(rng.random_range(0..cardinality)),
    }
}

fn clamp_to(domain: Domain, x: f64) -> (Value, bool) {
    match domain {
        Domain::Continuous { low, .. } if x < low => (Value::Continuous(low), true),
        Domain::Continuous { high, .. } if x > high => (Value::Continuous(high), true),
        _ => (Value::Continuous(x), false),
    }
}

/// Inverse-CDF draw from an (approximately) normalized probability vector.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    // Rounding left `u` past the last bucket: return the last positive entry.
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}
