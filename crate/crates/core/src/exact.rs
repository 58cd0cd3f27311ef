//! Exact Shafer-Shenoy propagation over purely discrete networks, plus a
//! brute-force enumeration oracle.

use std::collections::HashMap;

use crate::clique_tree::CliqueTree;
use crate::error::{Error, Result};
use crate::network::{Cpd, CpdBody, Evidence, HybridNetwork, Value, VarId};

/// Largest joint state space `brute_force_joint` will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 1 << 22;

/// Dense table over discrete variables; the last scope variable varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct TableFactor {
    pub scope: Vec<VarId>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

/// Visits every joint assignment of `cards` in row-major order, tracking one
/// linear offset per stride vector.
fn for_each_offset<const N: usize>(cards: &[usize], strides: [&[usize]; N], mut f: impl FnMut([usize; N])) {
    let total: usize = cards.iter().product();
    if total == 0 {
        return;
    }
    let dims = cards.len();
    let mut digits = vec![0usize; dims];
    let mut offsets = [0usize; N];
    for _ in 0..total {
        f(offsets);
        for d in (0..dims).rev() {
            digits[d] += 1;
            if digits[d] < cards[d] {
                for (o, s) in offsets.iter_mut().zip(&strides) {
                    *o += s[d];
                }
                break;
            }
            for (o, s) in offsets.iter_mut().zip(&strides) {
                *o -= (cards[d] - 1) * s[d];
            }
            digits[d] = 0;
        }
    }
}

impl TableFactor {
    pub fn new(scope: Vec<VarId>, cards: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if scope.len() != cards.len() {
            return Err(Error::Contract("scope and cardinality lists differ in length".into()));
        }
        let size: usize = cards.iter().product();
        if values.len() != size {
            return Err(Error::Contract(format!("{} values for a table of size {size}", values.len())));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Contract("factor entries must be nonnegative".into()));
        }
        Ok(TableFactor { scope, cards, values })
    }

    pub fn constant(scope: Vec<VarId>, cards: Vec<usize>, value: f64) -> Self {
        let size = cards.iter().product();
        TableFactor {
            scope,
            cards,
            values: vec![value; size],
        }
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.cards.len()];
        for d in (0..self.cards.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.cards[d + 1];
        }
        strides
    }

    /// Stride of each variable of `scope` inside this factor (0 when absent).
    fn strides_for(&self, scope: &[VarId]) -> Vec<usize> {
        let own = self.strides();
        scope
            .iter()
            .map(|v| self.scope.iter().position(|x| x == v).map_or(0, |i| own[i]))
            .collect()
    }

    pub fn card_of(&self, var: VarId) -> Option<usize> {
        self.scope.iter().position(|&v| v == var).map(|i| self.cards[i])
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn value_at(&self, assignment: &[usize]) -> f64 {
        let idx = assignment
            .iter()
            .zip(self.strides())
            .map(|(a, s)| a * s)
            .sum::<usize>();
        self.values[idx]
    }

    pub fn product(&self, other: &TableFactor) -> TableFactor {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        for (v, c) in other.scope.iter().zip(&other.cards) {
            if !scope.contains(v) {
                scope.push(*v);
                cards.push(*c);
            }
        }
        let fs = self.strides_for(&scope);
        let gs = other.strides_for(&scope);
        let mut values = Vec::with_capacity(cards.iter().product());
        for_each_offset(&cards, [&fs, &gs], |[i, j]| values.push(self.values[i] * other.values[j]));
        TableFactor { scope, cards, values }
    }

    /// Sums out `drop`, which must lie within the scope.
    pub fn marginalize(&self, drop: &[VarId]) -> Result<TableFactor> {
        if let Some(v) = drop.iter().find(|v| !self.scope.contains(v)) {
            return Err(Error::Contract(format!("variable {v} is not in the factor scope")));
        }
        let (scope, cards): (Vec<VarId>, Vec<usize>) = self
            .scope
            .iter()
            .zip(&self.cards)
            .filter(|(v, _)| !drop.contains(v))
            .map(|(v, c)| (*v, *c))
            .unzip();
        let kept = TableFactor::constant(scope, cards, 0.0);
        let ks = kept.strides_for(&self.scope);
        let own = self.strides();
        let mut out = kept;
        for_each_offset(&self.cards, [&own, &ks], |[i, k]| out.values[k] += self.values[i]);
        Ok(out)
    }

    pub fn marginal_onto(&self, keep: &[VarId]) -> Result<TableFactor> {
        let drop: Vec<VarId> = self.scope.iter().copied().filter(|v| !keep.contains(v)).collect();
        self.marginalize(&drop)
    }

    /// Zeroes every entry inconsistent with the discrete evidence.
    pub fn reduce(&mut self, evidence: &Evidence) {
        let strides = self.strides();
        for (d, &var) in self.scope.iter().enumerate() {
            let Some(Value::Discrete(observed)) = evidence.get(var) else {
                continue;
            };
            for (i, v) in self.values.iter_mut().enumerate() {
                if (i / strides[d]) % self.cards[d] != observed {
                    *v = 0.0;
                }
            }
        }
    }

    /// Scales entries to sum to one; returns the previous sum.
    pub fn normalize(&mut self) -> f64 {
        let total = self.sum();
        if total > 0.0 {
            for v in &mut self.values {
                *v /= total;
            }
        }
        total
    }

    /// Reorders the scope; `order` must be a permutation of it.
    pub fn permuted(&self, order: &[VarId]) -> Result<TableFactor> {
        if order.len() != self.scope.len() || order.iter().any(|v| !self.scope.contains(v)) {
            return Err(Error::Contract("permutation must cover the scope exactly".into()));
        }
        let cards: Vec<usize> = order.iter().map(|&v| self.card_of(v).unwrap()).collect();
        let s = self.strides_for(order);
        let mut values = Vec::with_capacity(self.values.len());
        for_each_offset(&cards, [&s], |[i]| values.push(self.values[i]));
        Ok(TableFactor {
            scope: order.to_vec(),
            cards,
            values,
        })
    }
}

fn discrete_card(net: &HybridNetwork, var: VarId) -> Result<usize> {
    net.domain(var)
        .cardinality()
        .ok_or_else(|| Error::Contract(format!("{} is continuous; exact inference needs a discrete network", net.variables[var].name)))
}

/// A CPD as a factor over `parents ++ [child]`.
pub fn cpd_factor(net: &HybridNetwork, cpd: &Cpd) -> Result<TableFactor> {
    let scope: Vec<VarId> = cpd.parents.iter().copied().chain([cpd.child]).collect();
    let cards = scope
        .iter()
        .map(|&v| discrete_card(net, v))
        .collect::<Result<Vec<_>>>()?;
    if let CpdBody::Table { rows } = &cpd.body {
        let values = rows.iter().flatten().copied().collect();
        return TableFactor::new(scope, cards, values);
    }
    let total: usize = cards.iter().product();
    let mut values = Vec::with_capacity(total);
    let mut digits = vec![0usize; cards.len()];
    for _ in 0..total {
        let parents: Vec<Value> = digits[..cpd.parents.len()].iter().map(|&s| Value::Discrete(s)).collect();
        values.push(cpd.eval(net, Value::Discrete(*digits.last().unwrap()), &parents)?);
        for d in (0..cards.len()).rev() {
            digits[d] += 1;
            if digits[d] < cards[d] {
                break;
            }
            digits[d] = 0;
        }
    }
    TableFactor::new(scope, cards, values)
}

/// Calibrated, normalized clique potentials.
#[derive(Clone, Debug)]
pub struct ExactPosterior {
    pub potentials: Vec<TableFactor>,
    tree: CliqueTree,
    evidence: Evidence,
    cards: Vec<usize>,
}

impl ExactPosterior {
    pub fn tree(&self) -> &CliqueTree {
        &self.tree
    }

    /// Posterior over one variable; evidence variables are point masses.
    pub fn marginal(&self, var: VarId) -> Result<Vec<f64>> {
        if let Some(Value::Discrete(s)) = self.evidence.get(var) {
            let mut p = vec![0.0; self.cards[var]];
            p[s] = 1.0;
            return Ok(p);
        }
        let home = self
            .tree
            .home_of(var)
            .ok_or_else(|| Error::Contract(format!("variable {var} is in no clique")))?;
        Ok(self.potentials[home].marginal_onto(&[var])?.values)
    }
}

/// Runs the two-pass Shafer-Shenoy schedule rooted at clique 0.
pub fn shafer_shenoy_propagate(tree: &CliqueTree, net: &HybridNetwork, evidence: &Evidence) -> Result<ExactPosterior> {
    propagate_with_root(tree, net, evidence, 0)
}

/// Largest clique table the exact engine will allocate.
pub const MAX_CLIQUE_ENTRIES: usize = 1 << 25;

pub fn propagate_with_root(tree: &CliqueTree, net: &HybridNetwork, evidence: &Evidence, root: usize) -> Result<ExactPosterior> {
    evidence.check(net)?;
    let cards = (0..net.len()).map(|v| discrete_card(net, v)).collect::<Result<Vec<_>>>()?;
    if tree.is_empty() {
        return Err(Error::Contract("empty clique tree".into()));
    }
    for c in &tree.cliques {
        let size = c.scope.iter().map(|&v| cards[v] as f64).product::<f64>();
        if size > MAX_CLIQUE_ENTRIES as f64 {
            return Err(Error::StateSpaceTooLarge(format!(
                "clique {} has {size} joint states",
                c.id
            )));
        }
    }

    let mut local = Vec::with_capacity(tree.len());
    for c in &tree.cliques {
        let mut phi = TableFactor::constant(c.scope.clone(), c.scope.iter().map(|&v| cards[v]).collect(), 1.0);
        for &child in &c.assigned_cpds {
            let cpd = net
                .cpd_of(child)
                .ok_or_else(|| Error::Contract(format!("no CPD for variable {child}")))?;
            phi = phi.product(&cpd_factor(net, cpd)?);
        }
        let mut phi = phi.permuted(&c.scope)?;
        phi.reduce(evidence);
        local.push(phi);
    }

    let rooted = tree.rooted(root);
    let mut messages: HashMap<(usize, usize), TableFactor> = HashMap::new();
    let send = |i: usize, j: usize, messages: &HashMap<(usize, usize), TableFactor>| -> Result<TableFactor> {
        let mut tau = local[i].clone();
        for k in tree.neighbors(i) {
            if k != j {
                tau = tau.product(&messages[&(k, i)]);
            }
        }
        tau.marginalize(&tree.complement(i, j))
    };
    for i in rooted.postorder() {
        if let Some(p) = rooted.parent[i] {
            let m = send(i, p, &messages)?;
            messages.insert((i, p), m);
        }
    }
    for &i in &rooted.preorder {
        for &c in &rooted.children[i] {
            let m = send(i, c, &messages)?;
            messages.insert((i, c), m);
        }
    }

    let mut potentials = Vec::with_capacity(tree.len());
    for (i, phi) in local.iter().enumerate() {
        let mut psi = phi.clone();
        for k in tree.neighbors(i) {
            psi = psi.product(&messages[&(k, i)]);
        }
        let mut psi = psi.permuted(&tree.cliques[i].scope)?;
        if psi.normalize() <= 0.0 {
            return Err(Error::ImpossibleEvidence);
        }
        potentials.push(psi);
    }

    Ok(ExactPosterior {
        potentials,
        tree: tree.with_evidence(evidence),
        evidence: evidence.clone(),
        cards,
    })
}

/// Posterior marginals of every variable by full enumeration.
pub fn brute_force_joint(net: &HybridNetwork, evidence: &Evidence) -> Result<Vec<Vec<f64>>> {
    evidence.check(net)?;
    let cards = (0..net.len()).map(|v| discrete_card(net, v)).collect::<Result<Vec<_>>>()?;
    let total = cards.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c));
    let total = match total {
        Some(t) if t <= BRUTE_FORCE_LIMIT => t,
        _ => {
            return Err(Error::StateSpaceTooLarge(format!(
                "joint state space exceeds {BRUTE_FORCE_LIMIT} assignments"
            )))
        }
    };
    let factors = net.cpds.iter().map(|c| cpd_factor(net, c)).collect::<Result<Vec<_>>>()?;
    let mut marginals: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    let mut digits = vec![0usize; net.len()];
    let mut mass = 0.0;
    for _ in 0..total {
        let consistent = evidence
            .iter()
            .all(|(v, value)| value == Value::Discrete(digits[v]));
        if consistent {
            let p: f64 = factors
                .iter()
                .map(|f| {
                    let a: Vec<usize> = f.scope.iter().map(|&v| digits[v]).collect();
                    f.value_at(&a)
                })
                .product();
            mass += p;
            for (v, &s) in digits.iter().enumerate() {
                marginals[v][s] += p;
            }
        }
        for d in (0..digits.len()).rev() {
            digits[d] += 1;
            if digits[d] < cards[d] {
                break;
            }
            digits[d] = 0;
        }
    }
    if mass <= 0.0 {
        return Err(Error::ImpossibleEvidence);
    }
    for m in &mut marginals {
        for p in m.iter_mut() {
            *p /= mass;
        }
    }
    Ok(marginals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clique_tree::build_clique_tree;
    use crate::network::Variable;

    fn f(scope: Vec<VarId>, cards: Vec<usize>, values: Vec<f64>) -> TableFactor {
        TableFactor::new(scope, cards, values).unwrap()
    }

    /// Naive product: loop over the union assignment space explicitly.
    fn naive_product(a: &TableFactor, b: &TableFactor) -> TableFactor {
        let mut scope = a.scope.clone();
        let mut cards = a.cards.clone();
        for (v, c) in b.scope.iter().zip(&b.cards) {
            if !scope.contains(v) {
                scope.push(*v);
                cards.push(*c);
            }
        }
        let total: usize = cards.iter().product();
        let mut values = Vec::new();
        for idx in 0..total {
            let mut rem = idx;
            let mut assign = vec![0; cards.len()];
            for d in (0..cards.len()).rev() {
                assign[d] = rem % cards[d];
                rem /= cards[d];
            }
            let pick = |t: &TableFactor| -> f64 {
                let a: Vec<usize> = t
                    .scope
                    .iter()
                    .map(|v| assign[scope.iter().position(|x| x == v).unwrap()])
                    .collect();
                t.value_at(&a)
            };
            values.push(pick(a) * pick(b));
        }
        f(scope, cards, values)
    }

    #[test]
    fn identity_product() {
        let a = f(vec![0], vec![2], vec![0.2, 0.8]);
        let one = TableFactor::constant(vec![0], vec![2], 1.0);
        assert_eq!(a.product(&one), a);
    }

    #[test]
    fn independent_product_is_outer_product() {
        let a = f(vec![0], vec![2], vec![0.5, 0.5]);
        let b = f(vec![1], vec![2], vec![0.1, 0.9]);
        assert_eq!(a.product(&b).values, vec![0.05, 0.45, 0.05, 0.45]);
    }

    #[test]
    fn overlapping_product_matches_naive_loop() {
        let mut state = 17u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let a = f(vec![2, 0, 1], vec![2, 3, 2], (0..12).map(|_| next()).collect());
        let b = f(vec![1, 3, 2], vec![2, 2, 2], (0..8).map(|_| next()).collect());
        let fast = a.product(&b);
        let slow = naive_product(&a, &b);
        assert_eq!(fast.scope, slow.scope);
        for (x, y) in fast.values.iter().zip(&slow.values) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn marginalize_row_sums() {
        let a = f(vec![0, 1], vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]);
        let m = a.marginalize(&[1]).unwrap();
        assert_eq!(m.scope, vec![0]);
        assert!((m.values[0] - 0.3).abs() < 1e-15 && (m.values[1] - 0.7).abs() < 1e-15);
        assert_eq!(a.marginalize(&[]).unwrap(), a);
        assert!(matches!(a.marginalize(&[5]), Err(Error::Contract(_))));
    }

    fn chain_ab() -> HybridNetwork {
        HybridNetwork::new(
            vec![Variable::discrete(0, "A", &["0", "1"]), Variable::discrete(1, "B", &["0", "1"])],
            vec![
                Cpd {
                    child: 0,
                    parents: vec![],
                    body: CpdBody::Table {
                        rows: vec![vec![0.5, 0.5]],
                    },
                },
                Cpd {
                    child: 1,
                    parents: vec![0],
                    body: CpdBody::Table {
                        rows: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                    },
                },
            ],
        )
    }

    #[test]
    fn bayes_rule_on_chain() {
        let net = chain_ab();
        let tree = build_clique_tree(&net, 4).unwrap();
        let ev = Evidence::new().with(1, Value::Discrete(0));
        let post = shafer_shenoy_propagate(&tree, &net, &ev).unwrap();
        let pa = post.marginal(0).unwrap();
        assert!((pa[0] - 0.45 / 0.55).abs() < 1e-12);
        let brute = brute_force_joint(&net, &ev).unwrap();
        assert!((brute[0][0] - 0.45 / 0.55).abs() < 1e-12);
        assert_eq!(post.marginal(1).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn single_node_prior() {
        let net = HybridNetwork::new(
            vec![Variable::discrete(0, "A", &["0", "1"])],
            vec![Cpd {
                child: 0,
                parents: vec![],
                body: CpdBody::Table {
                    rows: vec![vec![0.3, 0.7]],
                },
            }],
        );
        let tree = build_clique_tree(&net, 4).unwrap();
        let post = shafer_shenoy_propagate(&tree, &net, &Evidence::new()).unwrap();
        assert_eq!(post.marginal(0).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn impossible_evidence_is_an_error() {
        let mut net = chain_ab();
        net.cpds[1].body = CpdBody::Table {
            rows: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        };
        let tree = build_clique_tree(&net, 4).unwrap();
        let ev = Evidence::new().with(1, Value::Discrete(1));
        assert!(matches!(shafer_shenoy_propagate(&tree, &net, &ev), Err(Error::ImpossibleEvidence)));
        assert!(matches!(brute_force_joint(&net, &ev), Err(Error::ImpossibleEvidence)));
    }

    #[test]
    fn independent_variables_give_prior_product() {
        let net = HybridNetwork::new(
            vec![Variable::discrete(0, "A", &["0", "1"]), Variable::discrete(1, "B", &["0", "1", "2"])],
            vec![
                Cpd {
                    child: 0,
                    parents: vec![],
                    body: CpdBody::Table {
                        rows: vec![vec![0.25, 0.75]],
                    },
                },
                Cpd {
                    child: 1,
                    parents: vec![],
                    body: CpdBody::Table {
                        rows: vec![vec![0.2, 0.3, 0.5]],
                    },
                },
            ],
        );
        let m = brute_force_joint(&net, &Evidence::new()).unwrap();
        assert_eq!(m[0], vec![0.25, 0.75]);
        for (a, b) in m[1].iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn continuous_networks_are_refused() {
        let net = HybridNetwork::new(
            vec![Variable::continuous(0, "X", 0.0, 1.0)],
            vec![Cpd {
                child: 0,
                parents: vec![],
                body: CpdBody::Uniform,
            }],
        );
        assert!(matches!(brute_force_joint(&net, &Evidence::new()), Err(Error::Contract(_))));
    }
}
