//! Approximate clique-tree propagation. Clique potentials and messages are
//! density trees learned from importance-weighted samples: an initial
//! calibration pass with prior-fit proposals, then repeated sweeps in which
//! each clique samples from its current potential.

use std::collections::BTreeMap;

use rand::Rng;

use crate::clique_tree::{build_clique_tree, intersect, CliqueTree, DEFAULT_MAX_CONTINUOUS};
use crate::density_tree::{dt_learn, scope_of, DensityTree, ScopeVar, TreeConfig, WeightedSampleSet};
use crate::error::{Error, Result};
use crate::gmm::log_sum_exp;
use crate::network::{Cpd, Domain, Evidence, HybridNetwork, Value, VarId};
use crate::rng::{stream, Stream};
use crate::sampler::{bin_index, clip_weights, prior_sample};

/// Refinements whose effective sample size falls below this are flagged.
pub const LOW_ESS: f64 = 10.0;

/// Default share of refinement samples drawn from the prior fit.
pub const DEFENSIVE_SHARE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationConfig {
    pub samples: usize,
    pub passes: usize,
    pub tree: TreeConfig,
    pub bins: usize,
    /// Early stop when no single-variable marginal moves more than this in
    /// total variation between passes.
    pub convergence: f64,
    pub max_continuous_per_clique: usize,
    /// Share of each refinement's proposal drawn from the clique's prior fit
    /// rather than its current potential.
    pub defensive: f64,
    pub seed: u64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            samples: 1000,
            passes: 6,
            tree: TreeConfig::default(),
            bins: 100,
            convergence: 1e-3,
            max_continuous_per_clique: DEFAULT_MAX_CONTINUOUS,
            defensive: DEFENSIVE_SHARE,
            seed: 0,
        }
    }
}

impl PropagationConfig {
    pub fn check(&self) -> Result<()> {
        if self.samples == 0 || self.bins < 2 || self.tree.components == 0 {
            return Err(Error::Contract("samples and components must be positive and bins at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.defensive) {
            return Err(Error::Contract("defensive share must lie in [0, 1]".into()));
        }
        if !(self.tree.em.lambda >= 0.0) || !(self.tree.pseudocount >= 0.0) {
            return Err(Error::Contract("lambda and pseudocount must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Potential,
    Message { to: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    /// 0 during calibration, then the 1-based pass index.
    pub pass: usize,
    pub clique: usize,
    pub target: Target,
    pub ess: f64,
    pub clipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Marginal {
    Discrete(Vec<f64>),
    Histogram { low: f64, high: f64, probs: Vec<f64> },
}

impl Marginal {
    pub fn probs(&self) -> &[f64] {
        match self {
            Marginal::Discrete(p) => p,
            Marginal::Histogram { probs, .. } => probs,
        }
    }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Clone, Debug)]
pub struct ApproxState {
    pub net: HybridNetwork,
    pub evidence: Evidence,
    pub tree: CliqueTree,
    pub config: PropagationConfig,
    /// Clique scopes without evidence variables.
    pub free: Vec<Vec<ScopeVar>>,
    pub potentials: Vec<Option<DensityTree>>,
    pub messages: BTreeMap<(usize, usize), DensityTree>,
    pub prior_proposals: Vec<Option<DensityTree>>,
    pub passes_done: usize,
    pub diagnostics: Vec<Refinement>,
    /// Largest marginal change of each completed pass.
    pub pass_changes: Vec<f64>,
    pub warnings: Vec<String>,
    next_task: u64,
    log_uniform: Vec<f64>,
    scratch: Vec<Value>,
}

impl ApproxState {
    fn new(net: &HybridNetwork, tree: &CliqueTree, evidence: &Evidence, config: &PropagationConfig) -> Result<Self> {
        config.check()?;
        evidence.check(net)?;
        let free: Vec<Vec<ScopeVar>> = tree
            .cliques
            .iter()
            .map(|c| {
                let ids: Vec<VarId> = c.scope.iter().copied().filter(|v| !evidence.contains(*v)).collect();
                scope_of(net, &ids)
            })
            .collect();
        let log_uniform = tree
            .cliques
            .iter()
            .zip(&free)
            .map(|(c, f)| {
                f.iter()
                    .filter(|s| !c.assigned_cpds.contains(&s.id))
                    .map(|s| match s.domain {
                        Domain::Continuous { low, high } => -(high - low).ln(),
                        Domain::Discrete { .. } => 0.0,
                    })
                    .sum()
            })
            .collect();
        let mut scratch = vec![Value::Discrete(0); net.len()];
        for (v, value) in evidence.iter() {
            scratch[v] = value;
        }
        Ok(ApproxState {
            net: net.clone(),
            evidence: evidence.clone(),
            tree: tree.clone(),
            config: config.clone(),
            potentials: vec![None; tree.len()],
            prior_proposals: vec![None; tree.len()],
            free,
            messages: BTreeMap::new(),
            passes_done: 0,
            diagnostics: vec![],
            pass_changes: vec![],
            warnings: vec![],
            next_task: 1,
            log_uniform,
            scratch,
        })
    }

    fn free_ids(&self, i: usize) -> Vec<VarId> {
        self.free[i].iter().map(|s| s.id).collect()
    }

    /// Free variables shared by cliques `i` and `j`.
    pub fn message_scope(&self, i: usize, j: usize) -> Vec<VarId> {
        intersect(&self.free_ids(i), &self.free_ids(j))
    }

    fn task_stream(&mut self) -> Stream {
        let s = stream(self.config.seed, self.next_task);
        self.next_task += 1;
        s
    }

    fn cpd(&self, child: VarId) -> Result<&Cpd> {
        self.net
            .cpd_of(child)
            .ok_or_else(|| Error::Contract(format!("no CPD for variable {child}")))
    }

    /// Log of the clique's target factor at `row`, a free-scope assignment:
    /// incoming messages except the one from `exclude`, the assigned CPDs with
    /// evidence substituted, and uniform constants.
    fn log_target(&self, i: usize, exclude: Option<usize>, row: &[Value], scratch: &mut [Value]) -> Result<f64> {
        for (s, v) in self.free[i].iter().zip(row) {
            if let (Domain::Continuous { low, high }, Value::Continuous(x)) = (s.domain, v) {
                if !(*x >= low && *x <= high) {
                    return Ok(f64::NEG_INFINITY);
                }
            }
            scratch[s.id] = *v;
        }
        let mut acc = self.log_uniform[i];
        for &child in &self.tree.cliques[i].assigned_cpds {
            let cpd = self.cpd(child)?;
            let p = cpd.eval_with(&self.net, scratch[child], |k| scratch[cpd.parents[k]])?;
            if p <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            acc += p.ln();
        }
        for k in self.tree.neighbors(i) {
            if Some(k) == exclude {
                continue;
            }
            if let Some(m) = self.messages.get(&(k, i)) {
                acc += m.log_eval_by(&|v| scratch[v]);
                if acc == f64::NEG_INFINITY {
                    break;
                }
            }
        }
        Ok(acc)
    }

    /// The target factor of clique `i` at a free-scope assignment.
    pub fn target_factor_eval(&self, i: usize, exclude: Option<usize>, row: &[Value]) -> Result<f64> {
        if row.len() != self.free[i].len() {
            return Err(Error::Contract(format!(
                "assignment has {} values for clique {i} with {} free variables",
                row.len(),
                self.free[i].len()
            )));
        }
        let mut scratch = self.scratch.clone();
        Ok(self.log_target(i, exclude, row, &mut scratch)?.exp())
    }

    /// Draws from `proposal`, weights by target over proposal, projects onto
    /// `keep` and learns a density tree.
    fn estimate(
        &mut self,
        i: usize,
        proposal: &DensityTree,
        exclude: Option<usize>,
        keep: &[VarId],
        target: Target,
        defensive: bool,
    ) -> Result<DensityTree> {
        let mut rng = self.task_stream();
        let m = self.config.samples;
        let share = if defensive { self.config.defensive } else { 0.0 };
        let prior = match &self.prior_proposals[i] {
            Some(p) if share > 0.0 && p.ids() == proposal.ids() => Some(p.clone()),
            _ => None,
        };
        let mut set = WeightedSampleSet::with_capacity(self.free[i].clone(), m);
        let mut log_w = Vec::with_capacity(m);
        let mut scratch = std::mem::take(&mut self.scratch);
        for _ in 0..m {
            let row = match &prior {
                Some(p) if rng.random::<f64>() < share => p.sample(&mut rng),
                _ => proposal.sample(&mut rng),
            };
            let at = |v: VarId| row[proposal.position(v).unwrap()];
            let mut lq = proposal.log_eval_by(&at);
            if let Some(p) = &prior {
                lq = log_sum_exp(&[(1.0 - share).ln() + lq, share.ln() + p.log_eval_by(&at)]);
            }
            if lq == f64::NEG_INFINITY {
                self.scratch = scratch;
                return Err(Error::Internal(format!("proposal of clique {i} drew a sample outside its support")));
            }
            let lt = match self.log_target(i, exclude, &row, &mut scratch) {
                Ok(v) => v,
                Err(e) => {
                    self.scratch = scratch;
                    return Err(e);
                }
            };
            log_w.push(lt - lq);
            set.push(&row, 0.0);
        }
        self.scratch = scratch;
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max.is_nan() {
            return Err(Error::DegenerateEvidence { clique: i });
        }
        for (w, l) in set.weights.iter_mut().zip(&log_w) {
            *w = (l - max).exp();
        }
        let clipped = clip_weights(&mut set.weights);
        let ess = set.effective_sample_size();
        if ess < LOW_ESS {
            self.warnings.push(format!(
                "clique {i}: effective sample size {ess:.2} below {LOW_ESS} ({target:?})"
            ));
        }
        self.diagnostics.push(Refinement {
            pass: self.passes_done,
            clique: i,
            target,
            ess,
            clipped,
        });
        let data = if keep.len() == set.width() { set } else { set.project(keep)? };
        let mut learn_rng = self.task_stream();
        dt_learn(&data, &self.config.tree, &mut learn_rng)
    }

    fn send(&mut self, i: usize, j: usize, proposal: &DensityTree, defensive: bool) -> Result<()> {
        let keep = self.message_scope(i, j);
        if keep.is_empty() {
            self.messages.remove(&(i, j));
            return Ok(());
        }
        let msg = self.estimate(i, proposal, Some(j), &keep, Target::Message { to: j }, defensive)?;
        if msg.ids() != keep {
            return Err(Error::Internal(format!("message {i}->{j} has the wrong scope")));
        }
        self.messages.insert((i, j), msg);
        Ok(())
    }

    /// Re-estimates the potential of clique `i`, sampling from its current one.
    pub fn refine_potential(&mut self, i: usize) -> Result<()> {
        if self.free[i].is_empty() {
            return Ok(());
        }
        let proposal = self.potentials[i]
            .clone()
            .or_else(|| self.prior_proposals[i].clone())
            .ok_or_else(|| Error::Contract(format!("clique {i} has no proposal; calibrate first")))?;
        let keep = self.free_ids(i);
        let psi = self.estimate(i, &proposal, None, &keep, Target::Potential, true)?;
        self.potentials[i] = Some(psi);
        Ok(())
    }

    /// Re-estimates the message `i -> j`, sampling from the potential of `i`.
    pub fn refine_message(&mut self, i: usize, j: usize) -> Result<()> {
        if self.free[i].is_empty() {
            return Ok(());
        }
        let proposal = self.potentials[i]
            .clone()
            .ok_or_else(|| Error::Contract(format!("clique {i} has no potential; calibrate first")))?;
        self.send(i, j, &proposal, true)
    }

    /// Single-variable posterior read off the smallest clique containing `var`.
    pub fn query_marginal(&self, var: VarId) -> Result<Marginal> {
        if var >= self.net.len() {
            return Err(Error::Contract(format!("unknown variable {var}")));
        }
        let domain = self.net.domain(var);
        let bins = self.config.bins;
        if let Some(value) = self.evidence.get(var) {
            return Ok(match (domain, value) {
                (Domain::Discrete { cardinality }, Value::Discrete(s)) => {
                    let mut p = vec![0.0; cardinality];
                    p[s] = 1.0;
                    Marginal::Discrete(p)
                }
                (Domain::Continuous { low, high }, Value::Continuous(x)) => {
                    let mut probs = vec![0.0; bins];
                    probs[bin_index(x, low, high, bins)] = 1.0;
                    Marginal::Histogram { low, high, probs }
                }
                _ => return Err(Error::Contract("evidence kind does not match its variable".into())),
            });
        }
        let home = (0..self.tree.len())
            .filter(|&i| self.free[i].iter().any(|s| s.id == var))
            .min_by_key(|&i| (self.free[i].len(), i))
            .ok_or_else(|| Error::Contract(format!("variable {var} is in no clique")))?;
        let psi = self.potentials[home]
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("clique {home} has no potential; calibrate first")))?;
        let marginal = psi.marginalize(&[var])?;
        Ok(match domain {
            Domain::Discrete { .. } => Marginal::Discrete(marginal.discrete_distribution()?),
            Domain::Continuous { low, high } => Marginal::Histogram {
                low,
                high,
                probs: marginal.continuous_bins(low, high, bins)?,
            },
        })
    }

    /// Marginals of every non-evidence variable, in id order.
    pub fn all_marginals(&self) -> Result<Vec<(VarId, Marginal)>> {
        (0..self.net.len())
            .filter(|v| !self.evidence.contains(*v))
            .map(|v| Ok((v, self.query_marginal(v)?)))
            .collect()
    }

    /// Runs up to `config.passes` sweeps; see `iterate_with`.
    pub fn iterate(&mut self) -> Result<()> {
        self.iterate_with(self.config.passes, |_| Ok(()))
    }

    /// Each pass is an upward sweep followed by a downward sweep; every
    /// visited clique refines its potential, then its messages in the sweep
    /// direction. `after_pass` runs after every pass. Stops early once no
    /// marginal moves by more than `config.convergence`.
    pub fn iterate_with(&mut self, passes: usize, mut after_pass: impl FnMut(&ApproxState) -> Result<()>) -> Result<()> {
        let rooted = self.tree.rooted(0);
        let mut previous = self.all_marginals()?;
        for _ in 0..passes {
            self.passes_done += 1;
            for i in rooted.postorder() {
                self.refine_potential(i)?;
                if let Some(p) = rooted.parent[i] {
                    self.refine_message(i, p)?;
                }
            }
            for &i in &rooted.preorder {
                self.refine_potential(i)?;
                for &c in &rooted.children[i] {
                    self.refine_message(i, c)?;
                }
            }
            let current = self.all_marginals()?;
            let change = previous
                .iter()
                .zip(&current)
                .map(|((_, a), (_, b))| total_variation(a.probs(), b.probs()))
                .fold(0.0, f64::max);
            self.pass_changes.push(change);
            after_pass(self)?;
            previous = current;
            if change < self.config.convergence {
                break;
            }
        }
        Ok(())
    }
}

/// Initial calibration: fits prior proposals, sends every message once along
/// the two-pass schedule rooted at clique 0 and estimates every potential.
pub fn calibrate_initial(
    net: &HybridNetwork,
    tree: &CliqueTree,
    evidence: &Evidence,
    config: &PropagationConfig,
) -> Result<ApproxState> {
    let mut state = ApproxState::new(net, tree, evidence, config)?;
    let prior = prior_sample(net, config.samples, &mut stream(config.seed, 0))?.samples;
    for i in 0..tree.len() {
        if state.free[i].is_empty() {
            continue;
        }
        let data = prior.project(&state.free_ids(i))?;
        let mut rng = state.task_stream();
        state.prior_proposals[i] = Some(dt_learn(&data, &config.tree, &mut rng)?);
    }
    let rooted = tree.rooted(0);
    for i in rooted.postorder() {
        if let (Some(p), Some(q)) = (rooted.parent[i], state.prior_proposals[i].clone()) {
            state.send(i, p, &q, false)?;
        }
    }
    for &i in &rooted.preorder {
        let Some(q) = state.prior_proposals[i].clone() else {
            continue;
        };
        let keep = state.free_ids(i);
        let psi = state.estimate(i, &q, None, &keep, Target::Potential, false)?;
        state.potentials[i] = Some(psi.clone());
        for &c in &rooted.children[i] {
            state.send(i, c, &psi, true)?;
        }
    }
    Ok(state)
}

/// Builds the clique tree, calibrates and iterates.
pub fn run_approx(net: &HybridNetwork, evidence: &Evidence, config: &PropagationConfig) -> Result<ApproxState> {
    let tree = build_clique_tree(net, config.max_continuous_per_clique)?;
    let mut state = calibrate_initial(net, &tree, evidence, config)?;
    state.iterate()?;
    Ok(state)
}
