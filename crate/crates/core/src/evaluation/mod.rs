//! Ground truth by discretization, KL-error, benchmark networks and the
//! experiment suite.

mod experiment;
mod networks;

pub use experiment::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentRow, LW_PILOT_SAMPLES};
pub use networks::{
    benchmark, build_thermostat_network, build_traffic_dbn, scenario, Benchmark, Scenario, ScenarioKind,
};

use crate::clique_tree::build_clique_tree;
use crate::error::{Error, Result};
use crate::exact::{shafer_shenoy_propagate, ExactPosterior};
use crate::gmm::normal_cdf;
use crate::network::{ClgBlock, Cpd, CpdBody, Domain, Evidence, HybridNetwork, Value, VarId, Variable, VariableKind};
use crate::sampler::bin_index;

/// Floor applied to the approximate distribution inside `kl_error`.
pub const KL_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscretizationSpec {
    pub bins: usize,
}

impl Default for DiscretizationSpec {
    fn default() -> Self {
        DiscretizationSpec { bins: 100 }
    }
}

impl DiscretizationSpec {
    fn check(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Contract("discretization needs at least two bins".into()));
        }
        Ok(())
    }

    pub fn midpoint(&self, low: f64, high: f64, bin: usize) -> f64 {
        low + (high - low) * (bin as f64 + 0.5) / self.bins as f64
    }

    pub fn bin_of(&self, low: f64, high: f64, x: f64) -> usize {
        bin_index(x, low, high, self.bins)
    }
}

/// Probability of each equal-width bin of `[low, high]` under N(mean, variance),
/// with the mass outside the range added to the boundary bins.
pub fn gaussian_bins(mean: f64, variance: f64, low: f64, high: f64, bins: usize) -> Vec<f64> {
    let sd = variance.sqrt();
    let width = (high - low) / bins as f64;
    let mut cdf: Vec<f64> = (0..=bins).map(|b| normal_cdf((low + width * b as f64 - mean) / sd)).collect();
    cdf[0] = 0.0;
    cdf[bins] = 1.0;
    let mut p: Vec<f64> = cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    let s: f64 = p.iter().sum();
    for x in &mut p {
        *x /= s;
    }
    p
}

/// Replaces every continuous variable by a `bins`-state discrete one.
pub fn discretize_network(net: &HybridNetwork, spec: &DiscretizationSpec) -> Result<HybridNetwork> {
    spec.check()?;
    let bins = spec.bins;
    let variables: Vec<Variable> = net
        .variables
        .iter()
        .map(|v| match &v.kind {
            VariableKind::Discrete { .. } => v.clone(),
            VariableKind::Continuous { low, high } => Variable {
                id: v.id,
                name: v.name.clone(),
                kind: VariableKind::Discrete {
                    states: (0..bins).map(|b| format!("{:.6}", spec.midpoint(*low, *high, b))).collect(),
                },
            },
        })
        .collect();
    let cpds = net
        .cpds
        .iter()
        .map(|cpd| discretize_cpd(net, cpd, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(HybridNetwork::new(variables, cpds))
}

fn discretize_cpd(net: &HybridNetwork, cpd: &Cpd, spec: &DiscretizationSpec) -> Result<Cpd> {
    let bins = spec.bins;
    let card = |v: VarId| net.domain(v).cardinality().unwrap_or(bins);
    let parent_cards: Vec<usize> = cpd.parents.iter().map(|&p| card(p)).collect();
    let n_rows: usize = parent_cards.iter().product();
    let child_domain = net.domain(cpd.child);
    let mut rows = Vec::with_capacity(n_rows);
    let mut digits = vec![0usize; cpd.parents.len()];
    for _ in 0..n_rows {
        let parents: Vec<Value> = cpd
            .parents
            .iter()
            .zip(&digits)
            .map(|(&p, &s)| match net.domain(p) {
                Domain::Discrete { .. } => Value::Discrete(s),
                Domain::Continuous { low, high } => Value::Continuous(spec.midpoint(low, high, s)),
            })
            .collect();
        let mut row = match child_domain {
            Domain::Discrete { cardinality } => (0..cardinality)
                .map(|j| cpd.eval(net, Value::Discrete(j), &parents))
                .collect::<Result<Vec<f64>>>()?,
            Domain::Continuous { low, high } => match &cpd.body {
                CpdBody::Clg { blocks } => {
                    let mut block = 0;
                    let mut z = vec![];
                    for (&p, v) in cpd.parents.iter().zip(&parents) {
                        match v {
                            Value::Discrete(s) => block = block * card(p) + s,
                            Value::Continuous(x) => z.push(*x),
                        }
                    }
                    match &blocks[block] {
                        ClgBlock::Linear {
                            intercept,
                            weights,
                            variance,
                        } => {
                            let mean = intercept + weights.iter().zip(&z).map(|(w, x)| w * x).sum::<f64>();
                            gaussian_bins(mean, *variance, low, high, bins)
                        }
                        ClgBlock::Uniform => vec![1.0 / bins as f64; bins],
                    }
                }
                CpdBody::Uniform => vec![1.0 / bins as f64; bins],
                other => {
                    return Err(Error::Contract(format!(
                        "{} CPD cannot have a continuous child",
                        other.kind_name()
                    )))
                }
            },
        };
        let s: f64 = row.iter().sum();
        for x in &mut row {
            *x /= s;
        }
        rows.push(row);
        for d in (0..digits.len()).rev() {
            digits[d] += 1;
            if digits[d] < parent_cards[d] {
                break;
            }
            digits[d] = 0;
        }
    }
    Ok(Cpd {
        child: cpd.child,
        parents: cpd.parents.clone(),
        body: CpdBody::Table { rows },
    })
}

/// Maps continuous evidence values to their bins.
pub fn discretize_evidence(net: &HybridNetwork, evidence: &Evidence, spec: &DiscretizationSpec) -> Result<Evidence> {
    evidence.check(net)?;
    let mut out = Evidence::new();
    for (v, value) in evidence.iter() {
        let mapped = match (net.domain(v), value) {
            (Domain::Continuous { low, high }, Value::Continuous(x)) => Value::Discrete(spec.bin_of(low, high, x)),
            (_, other) => other,
        };
        out.insert(v, mapped);
    }
    Ok(out)
}

/// `sum_b p_b ln(p_b / max(q_b, KL_FLOOR))`, with `0 ln 0 = 0`.
pub fn kl_error(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Contract(format!("distributions of sizes {} and {}", p.len(), q.len())));
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b.max(KL_FLOOR)).ln())
        .sum::<f64>()
        .max(0.0))
}

/// Exact posterior of the discretized network.
pub fn discretized_posterior(
    net: &HybridNetwork,
    evidence: &Evidence,
    spec: &DiscretizationSpec,
) -> Result<ExactPosterior> {
    let discrete = discretize_network(net, spec)?;
    let ev = discretize_evidence(net, evidence, spec)?;
    let tree = build_clique_tree(&discrete, usize::MAX)?;
    shafer_shenoy_propagate(&tree, &discrete, &ev)
}

/// Discretized exact posterior of one variable.
pub fn reference_marginal(net: &HybridNetwork, evidence: &Evidence, query: VarId, spec: &DiscretizationSpec) -> Result<Vec<f64>> {
    discretized_posterior(net, evidence, spec)?.marginal(query)
}
