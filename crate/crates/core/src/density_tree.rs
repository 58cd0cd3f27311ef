//! Density trees: discrete splits with path probabilities, and leaves holding
//! independent multinomials plus one diagonal Gaussian mixture over every
//! continuous variable of the scope.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gmm::{em_fit_with_rng, normal_cdf, DiagonalGmm, EmConfig};
use crate::network::{sample_categorical, Domain, Evidence, HybridNetwork, Value, VarId};

/// Lower bound applied to every learned edge probability before renormalizing.
pub const EDGE_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScopeVar {
    pub id: VarId,
    pub domain: Domain,
}

impl ScopeVar {
    pub fn of(net: &HybridNetwork, id: VarId) -> Self {
        ScopeVar { id, domain: net.domain(id) }
    }
}

pub fn scope_of(net: &HybridNetwork, ids: &[VarId]) -> Vec<ScopeVar> {
    ids.iter().map(|&id| ScopeVar::of(net, id)).collect()
}

/// Weighted full assignments over a scope, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSampleSet {
    pub scope: Vec<ScopeVar>,
    pub values: Vec<Value>,
    pub weights: Vec<f64>,
}

impl WeightedSampleSet {
    pub fn new(scope: Vec<ScopeVar>) -> Self {
        WeightedSampleSet {
            scope,
            values: vec![],
            weights: vec![],
        }
    }

    pub fn with_capacity(scope: Vec<ScopeVar>, rows: usize) -> Self {
        let width = scope.len();
        WeightedSampleSet {
            scope,
            values: Vec::with_capacity(rows * width),
            weights: Vec::with_capacity(rows),
        }
    }

    pub fn width(&self) -> usize {
        self.scope.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn push(&mut self, row: &[Value], weight: f64) {
        debug_assert_eq!(row.len(), self.width());
        self.values.extend_from_slice(row);
        self.weights.push(weight);
    }

    pub fn row(&self, i: usize) -> &[Value] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn position(&self, var: VarId) -> Option<usize> {
        self.scope.iter().position(|s| s.id == var)
    }

    pub fn value(&self, i: usize, var: VarId) -> Option<Value> {
        self.position(var).map(|p| self.row(i)[p])
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(&self.weights)
    }

    /// Same rows restricted to `keep`, in the order given.
    pub fn project(&self, keep: &[VarId]) -> Result<WeightedSampleSet> {
        let pos = keep
            .iter()
            .map(|&v| {
                self.position(v)
                    .ok_or_else(|| Error::Contract(format!("variable {v} is not in the sample scope")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = WeightedSampleSet::with_capacity(pos.iter().map(|&p| self.scope[p]).collect(), self.len());
        for i in 0..self.len() {
            let row = self.row(i);
            out.values.extend(pos.iter().map(|&p| row[p]));
            out.weights.push(self.weights[i]);
        }
        Ok(out)
    }
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Leaf {
    pub discrete: Vec<(VarId, Vec<f64>)>,
    pub continuous: Vec<VarId>,
    pub gmm: DiagonalGmm,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Split {
        var: VarId,
        probs: Vec<f64>,
        children: Vec<Node>,
    },
    Leaf(Leaf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityTree {
    pub scope: Vec<ScopeVar>,
    pub root: Node,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeConfig {
    pub min_leaf_samples: usize,
    pub components: usize,
    pub pseudocount: f64,
    pub em: EmConfig,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            min_leaf_samples: 25,
            components: 10,
            pseudocount: 1.0,
            em: EmConfig::default(),
        }
    }
}

impl Node {
    fn log_eval(&self, get: &dyn Fn(VarId) -> Value) -> f64 {
        match self {
            Node::Split { var, probs, children } => {
                let s = get(*var).as_discrete().unwrap_or(usize::MAX);
                match probs.get(s) {
                    Some(&p) if p > 0.0 => p.ln() + children[s].log_eval(get),
                    _ => f64::NEG_INFINITY,
                }
            }
            Node::Leaf(leaf) => {
                let mut acc = 0.0;
                for (var, p) in &leaf.discrete {
                    match get(*var).as_discrete().and_then(|s| p.get(s)) {
                        Some(&q) if q > 0.0 => acc += q.ln(),
                        _ => return f64::NEG_INFINITY,
                    }
                }
                if !leaf.continuous.is_empty() {
                    let x: Vec<f64> = leaf
                        .continuous
                        .iter()
                        .map(|&v| get(v).as_continuous().unwrap_or(f64::NAN))
                        .collect();
                    let l = leaf.gmm.log_density(&x);
                    if l.is_nan() {
                        return f64::NEG_INFINITY;
                    }
                    acc += l;
                }
                acc
            }
        }
    }

    fn leaves(&self) -> usize {
        match self {
            Node::Split { children, .. } => children.iter().map(Node::leaves).sum(),
            Node::Leaf(_) => 1,
        }
    }

    fn depth(&self) -> usize {
        match self {
            Node::Split { children, .. } => 1 + children.iter().map(Node::depth).max().unwrap_or(0),
            Node::Leaf(_) => 0,
        }
    }

    /// Split variables in preorder; the structural fingerprint of a tree.
    fn structure(&self, out: &mut Vec<Option<VarId>>) {
        match self {
            Node::Split { var, children, .. } => {
                out.push(Some(*var));
                for c in children {
                    c.structure(out);
                }
            }
            Node::Leaf(_) => out.push(None),
        }
    }
}

impl DensityTree {
    pub fn ids(&self) -> Vec<VarId> {
        self.scope.iter().map(|s| s.id).collect()
    }

    pub fn position(&self, var: VarId) -> Option<usize> {
        self.scope.iter().position(|s| s.id == var)
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaves()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn structure(&self) -> Vec<Option<VarId>> {
        let mut out = vec![];
        self.root.structure(&mut out);
        out
    }

    /// A single leaf: independent multinomials and the given mixture.
    pub fn leaf(scope: Vec<ScopeVar>, discrete: Vec<Vec<f64>>, gmm: DiagonalGmm) -> Result<Self> {
        let dvars: Vec<VarId> = scope.iter().filter(|s| s.domain.is_discrete()).map(|s| s.id).collect();
        let cvars: Vec<VarId> = scope.iter().filter(|s| !s.domain.is_discrete()).map(|s| s.id).collect();
        if dvars.len() != discrete.len() || cvars.len() != gmm.dim() {
            return Err(Error::Contract("leaf parameters do not match the scope".into()));
        }
        let tree = DensityTree {
            scope,
            root: Node::Leaf(Leaf {
                discrete: dvars.into_iter().zip(discrete).collect(),
                continuous: cvars,
                gmm,
            }),
        };
        tree.check()?;
        Ok(tree)
    }

    /// Checks the structural invariants.
    pub fn check(&self) -> Result<()> {
        fn walk(tree: &DensityTree, node: &Node, path: &mut Vec<VarId>) -> Result<()> {
            let close = |p: &[f64]| (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && p.iter().all(|x| *x >= 0.0);
            match node {
                Node::Split { var, probs, children } => {
                    let sv = tree.scope.iter().find(|s| s.id == *var);
                    let card = sv.and_then(|s| s.domain.cardinality());
                    if card != Some(probs.len()) || children.len() != probs.len() || path.contains(var) {
                        return Err(Error::Contract(format!("malformed split on variable {var}")));
                    }
                    if !close(probs) {
                        return Err(Error::Contract(format!("edge probabilities at split on {var} do not sum to 1")));
                    }
                    path.push(*var);
                    for c in children {
                        walk(tree, c, path)?;
                    }
                    path.pop();
                }
                Node::Leaf(leaf) => {
                    let expect_d: Vec<VarId> = tree
                        .scope
                        .iter()
                        .filter(|s| s.domain.is_discrete() && !path.contains(&s.id))
                        .map(|s| s.id)
                        .collect();
                    let got_d: Vec<VarId> = leaf.discrete.iter().map(|(v, _)| *v).collect();
                    let expect_c: Vec<VarId> =
                        tree.scope.iter().filter(|s| !s.domain.is_discrete()).map(|s| s.id).collect();
                    if expect_d != got_d || expect_c != leaf.continuous || leaf.gmm.dim() != expect_c.len() {
                        return Err(Error::Contract("leaf variables inconsistent with its path".into()));
                    }
                    for (v, p) in &leaf.discrete {
                        let card = tree.scope.iter().find(|s| s.id == *v).and_then(|s| s.domain.cardinality());
                        if card != Some(p.len()) || !close(p) {
                            return Err(Error::Contract(format!("leaf multinomial of variable {v} is malformed")));
                        }
                    }
                    DiagonalGmm::new(leaf.gmm.weights.clone(), leaf.gmm.means.clone(), leaf.gmm.variances.clone())?;
                }
            }
            Ok(())
        }
        walk(self, &self.root, &mut vec![])
    }

    fn check_row(&self, row: &[Value]) -> Result<()> {
        if row.len() != self.scope.len() {
            return Err(Error::Contract(format!(
                "assignment has {} values for a scope of {}",
                row.len(),
                self.scope.len()
            )));
        }
        for (s, v) in self.scope.iter().zip(row) {
            let kind_ok = matches!(
                (s.domain, v),
                (Domain::Discrete { .. }, Value::Discrete(_)) | (Domain::Continuous { .. }, Value::Continuous(_))
            );
            let in_range = match (s.domain, v) {
                (Domain::Discrete { cardinality }, Value::Discrete(x)) => *x < cardinality,
                (_, Value::Continuous(x)) => x.is_finite(),
                _ => false,
            };
            if !kind_ok || !in_range {
                return Err(Error::Contract(format!("value {v:?} is outside the domain of variable {}", s.id)));
            }
        }
        Ok(())
    }

    /// Density at an assignment listed in scope order.
    pub fn eval(&self, row: &[Value]) -> Result<f64> {
        Ok(self.log_eval(row)?.exp())
    }

    pub fn log_eval(&self, row: &[Value]) -> Result<f64> {
        self.check_row(row)?;
        Ok(self.log_eval_by(&|v| row[self.position(v).unwrap()]))
    }

    /// Log density with values supplied by variable id; no domain checks.
    pub fn log_eval_by(&self, get: &dyn Fn(VarId) -> Value) -> f64 {
        self.root.log_eval(get)
    }

    /// Draws one assignment in scope order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Value> {
        let mut row = vec![Value::Discrete(0); self.scope.len()];
        let mut node = &self.root;
        loop {
            match node {
                Node::Split { var, probs, children } => {
                    let s = sample_categorical(probs, rng);
                    row[self.position(*var).unwrap()] = Value::Discrete(s);
                    node = &children[s];
                }
                Node::Leaf(leaf) => {
                    for (var, p) in &leaf.discrete {
                        row[self.position(*var).unwrap()] = Value::Discrete(sample_categorical(p, rng));
                    }
                    if !leaf.continuous.is_empty() {
                        let x = leaf.gmm.sample(rng);
                        for (var, x) in leaf.continuous.iter().zip(x) {
                            row[self.position(*var).unwrap()] = Value::Continuous(x);
                        }
                    }
                    return row;
                }
            }
        }
    }

    /// Exact marginal over `keep`, which must be a subset of the scope.
    pub fn marginalize(&self, keep: &[VarId]) -> Result<DensityTree> {
        if let Some(v) = keep.iter().find(|v| self.position(**v).is_none()) {
            return Err(Error::Contract(format!("variable {v} is not in the tree scope")));
        }
        let scope: Vec<ScopeVar> = self.scope.iter().filter(|s| keep.contains(&s.id)).copied().collect();
        let root = marginalize_node(&self.root, &scope)?;
        Ok(DensityTree { scope, root })
    }

    /// Instantiates evidence variables; returns the normalized remaining
    /// density and the mass of the slice. A zero mass leaves the returned
    /// tree's probabilities unnormalized.
    pub fn condition(&self, evidence: &Evidence) -> Result<(DensityTree, f64)> {
        for (v, value) in evidence.iter() {
            let Some(p) = self.position(v) else {
                return Err(Error::Contract(format!("evidence variable {v} is not in the tree scope")));
            };
            let ok = match (self.scope[p].domain, value) {
                (Domain::Discrete { cardinality }, Value::Discrete(s)) => s < cardinality,
                (Domain::Continuous { .. }, Value::Continuous(x)) => x.is_finite(),
                _ => false,
            };
            if !ok {
                return Err(Error::Contract(format!("evidence value {value:?} is outside the domain of variable {v}")));
            }
        }
        let scope: Vec<ScopeVar> = self.scope.iter().filter(|s| !evidence.contains(s.id)).copied().collect();
        let (root, mass) = condition_node(&self.root, evidence);
        Ok((DensityTree { scope, root }, mass))
    }

    /// Probability of each bin of `[low, high]` for a tree over one continuous
    /// variable; mass beyond the range is folded into the boundary bins.
    pub fn continuous_bins(&self, low: f64, high: f64, bins: usize) -> Result<Vec<f64>> {
        if self.scope.len() != 1 || self.scope[0].domain.is_discrete() || bins == 0 {
            return Err(Error::Contract("binning needs a tree over a single continuous variable".into()));
        }
        let Node::Leaf(leaf) = &self.root else {
            return Err(Error::Internal("continuous tree with a split".into()));
        };
        let g = &leaf.gmm;
        let width = (high - low) / bins as f64;
        let cdf = |x: f64| -> f64 {
            (0..g.components())
                .map(|k| g.weights[k] * normal_cdf((x - g.means[k][0]) / g.variances[k][0].sqrt()))
                .sum()
        };
        let mut edges: Vec<f64> = (0..=bins).map(|b| cdf(low + width * b as f64)).collect();
        edges[0] = 0.0;
        edges[bins] = 1.0;
        let mut out: Vec<f64> = edges.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        let s: f64 = out.iter().sum();
        for p in &mut out {
            *p /= s;
        }
        Ok(out)
    }

    /// Probability vector for a tree over one discrete variable.
    pub fn discrete_distribution(&self) -> Result<Vec<f64>> {
        let card = match self.scope.as_slice() {
            [ScopeVar {
                domain: Domain::Discrete { cardinality },
                ..
            }] => *cardinality,
            _ => return Err(Error::Contract("distribution needs a tree over a single discrete variable".into())),
        };
        let mut p: Vec<f64> = (0..card).map(|s| self.log_eval_by(&|_| Value::Discrete(s)).exp()).collect();
        let total: f64 = p.iter().sum();
        for x in &mut p {
            *x /= total;
        }
        Ok(p)
    }

    /// Indented text rendering.
    pub fn dump(&self, net: Option<&HybridNetwork>) -> String {
        let name = |v: VarId| net.map_or_else(|| format!("v{v}"), |n| n.variables[v].name.clone());
        let mut out = String::new();
        let ids: Vec<String> = self.scope.iter().map(|s| name(s.id)).collect();
        let _ = writeln!(out, "density tree over [{}]", ids.join(", "));
        fn walk(node: &Node, indent: usize, name: &dyn Fn(VarId) -> String, out: &mut String) {
            let pad = "  ".repeat(indent);
            match node {
                Node::Split { var, probs, children } => {
                    for (s, (p, c)) in probs.iter().zip(children).enumerate() {
                        let _ = writeln!(out, "{pad}{} = {s} (p = {p:.6})", name(*var));
                        walk(c, indent + 1, name, out);
                    }
                }
                Node::Leaf(leaf) => {
                    for (v, p) in &leaf.discrete {
                        let ps: Vec<String> = p.iter().map(|x| format!("{x:.6}")).collect();
                        let _ = writeln!(out, "{pad}{}: [{}]", name(*v), ps.join(", "));
                    }
                    if !leaf.continuous.is_empty() {
                        let vars: Vec<String> = leaf.continuous.iter().map(|v| name(*v)).collect();
                        let _ = writeln!(out, "{pad}mixture over [{}]", vars.join(", "));
                        for k in 0..leaf.gmm.components() {
                            let m: Vec<String> = leaf.gmm.means[k].iter().map(|x| format!("{x:.4}")).collect();
                            let v: Vec<String> = leaf.gmm.variances[k].iter().map(|x| format!("{x:.4}")).collect();
                            let _ = writeln!(
                                out,
                                "{pad}  w = {:.6} mean = [{}] var = [{}]",
                                leaf.gmm.weights[k],
                                m.join(", "),
                                v.join(", ")
                            );
                        }
                    }
                }
            }
        }
        walk(&self.root, 1, &name, &mut out);
        out
    }
}

fn marginalize_node(node: &Node, scope: &[ScopeVar]) -> Result<Node> {
    let kept = |v: VarId| scope.iter().any(|s| s.id == v);
    match node {
        Node::Leaf(leaf) => {
            let dims: Vec<usize> = (0..leaf.continuous.len()).filter(|&i| kept(leaf.continuous[i])).collect();
            Ok(Node::Leaf(Leaf {
                discrete: leaf.discrete.iter().filter(|(v, _)| kept(*v)).cloned().collect(),
                continuous: dims.iter().map(|&i| leaf.continuous[i]).collect(),
                gmm: leaf.gmm.marginal(&dims),
            }))
        }
        Node::Split { var, probs, children } => {
            let children = children
                .iter()
                .map(|c| marginalize_node(c, scope))
                .collect::<Result<Vec<_>>>()?;
            if kept(*var) {
                Ok(Node::Split {
                    var: *var,
                    probs: probs.clone(),
                    children,
                })
            } else {
                let parts: Vec<(f64, Node)> = probs.iter().copied().zip(children).collect();
                mix(parts, scope)
            }
        }
    }
}

/// Exact convex combination of nodes over the same scope.
fn mix(parts: Vec<(f64, Node)>, scope: &[ScopeVar]) -> Result<Node> {
    let parts: Vec<(f64, Node)> = parts.into_iter().filter(|(w, _)| *w > 0.0).collect();
    if parts.is_empty() {
        return Err(Error::Internal("mixture of zero total weight".into()));
    }
    if parts.len() == 1 {
        return Ok(parts.into_iter().next().unwrap().1);
    }
    let split_var = parts.iter().find_map(|(_, n)| match n {
        Node::Split { var, .. } => Some(*var),
        Node::Leaf(_) => None,
    });
    let split_var = split_var.or_else(|| match &parts[0].1 {
        Node::Leaf(leaf) => leaf.discrete.first().map(|(v, _)| *v),
        Node::Split { .. } => unreachable!(),
    });
    let Some(u) = split_var else {
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        let continuous = match &parts[0].1 {
            Node::Leaf(leaf) => leaf.continuous.clone(),
            Node::Split { .. } => unreachable!(),
        };
        let gmms: Vec<(f64, &DiagonalGmm)> = parts
            .iter()
            .map(|(w, n)| match n {
                Node::Leaf(leaf) => (w / total, &leaf.gmm),
                Node::Split { .. } => unreachable!(),
            })
            .collect();
        return Ok(Node::Leaf(Leaf {
            discrete: vec![],
            continuous,
            gmm: DiagonalGmm::mixture(&gmms)?,
        }));
    };
    let card = scope
        .iter()
        .find(|s| s.id == u)
        .and_then(|s| s.domain.cardinality())
        .ok_or_else(|| Error::Internal(format!("split variable {u} missing from scope")))?;
    let mut probs = vec![0.0; card];
    let mut children = Vec::with_capacity(card);
    for (s, prob) in probs.iter_mut().enumerate() {
        let ev = Evidence::new().with(u, Value::Discrete(s));
        let branch: Vec<(f64, Node)> = parts
            .iter()
            .map(|(w, n)| {
                let (c, m) = condition_node(n, &ev);
                (w * m, c)
            })
            .collect();
        *prob = branch.iter().map(|(w, _)| w).sum();
        let rest: Vec<ScopeVar> = scope.iter().filter(|x| x.id != u).copied().collect();
        children.push(if *prob > 0.0 {
            mix(branch, &rest)?
        } else {
            branch.into_iter().next().unwrap().1
        });
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(Node::Split { var: u, probs, children })
}

fn condition_node(node: &Node, evidence: &Evidence) -> (Node, f64) {
    match node {
        Node::Split { var, probs, children } => {
            if let Some(value) = evidence.get(*var) {
                let s = value.as_discrete().unwrap_or(usize::MAX);
                return match probs.get(s) {
                    Some(&p) => {
                        let (c, m) = condition_node(&children[s], evidence);
                        (c, p * m)
                    }
                    None => (children[0].clone(), 0.0),
                };
            }
            let (kids, masses): (Vec<Node>, Vec<f64>) = children.iter().map(|c| condition_node(c, evidence)).unzip();
            let mut new_probs: Vec<f64> = probs.iter().zip(&masses).map(|(p, m)| p * m).collect();
            let mass: f64 = new_probs.iter().sum();
            if mass > 0.0 {
                for p in &mut new_probs {
                    *p /= mass;
                }
            } else {
                new_probs = probs.clone();
            }
            (
                Node::Split {
                    var: *var,
                    probs: new_probs,
                    children: kids,
                },
                mass,
            )
        }
        Node::Leaf(leaf) => {
            let mut mass = 1.0;
            let mut discrete = vec![];
            for (v, p) in &leaf.discrete {
                match evidence.get(*v) {
                    Some(value) => mass *= value.as_discrete().and_then(|s| p.get(s)).copied().unwrap_or(0.0),
                    None => discrete.push((*v, p.clone())),
                }
            }
            let mut continuous = leaf.continuous.clone();
            let mut gmm = leaf.gmm.clone();
            for (v, value) in evidence.iter() {
                if let Some(dim) = continuous.iter().position(|c| *c == v) {
                    let x = value.as_continuous().unwrap_or(f64::NAN);
                    let (g, m) = gmm.condition(dim, x);
                    gmm = g;
                    mass *= if m.is_nan() { 0.0 } else { m };
                    continuous.remove(dim);
                }
            }
            (Node::Leaf(Leaf { discrete, continuous, gmm }), mass)
        }
    }
}

/// Learns a density tree from weighted samples. Split choice uses unweighted
/// counts; every probability and mixture parameter uses the weights, rescaled
/// to average one per sample.
pub fn dt_learn<R: Rng + ?Sized>(data: &WeightedSampleSet, config: &TreeConfig, rng: &mut R) -> Result<DensityTree> {
    if data.is_empty() {
        return Err(Error::Learning("no samples to learn from".into()));
    }
    let total = data.total_weight();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Learning("samples have no positive total weight".into()));
    }
    if config.components == 0 {
        return Err(Error::Contract("at least one mixture component is required".into()));
    }
    let scale = data.len() as f64 / total;
    let weights: Vec<f64> = data.weights.iter().map(|w| w * scale).collect();
    let discrete: Vec<usize> = (0..data.width()).filter(|&p| data.scope[p].domain.is_discrete()).collect();
    let continuous: Vec<usize> = (0..data.width()).filter(|&p| !data.scope[p].domain.is_discrete()).collect();
    let learner = Learner {
        data,
        weights: &weights,
        config,
        continuous: &continuous,
    };
    let indices: Vec<usize> = (0..data.len()).collect();
    let root = learner.build(&indices, &discrete, rng)?;
    Ok(DensityTree {
        scope: data.scope.clone(),
        root,
    })
}

struct Learner<'a> {
    data: &'a WeightedSampleSet,
    weights: &'a [f64],
    config: &'a TreeConfig,
    continuous: &'a [usize],
}

impl Learner<'_> {
    fn state(&self, i: usize, p: usize) -> usize {
        self.data.row(i)[p].as_discrete().expect("discrete column")
    }

    fn card(&self, p: usize) -> usize {
        self.data.scope[p].domain.cardinality().unwrap()
    }

    /// Node weights, falling back to uniform when the node carries no weight.
    fn local_weights(&self, indices: &[usize]) -> Vec<f64> {
        let w: Vec<f64> = indices.iter().map(|&i| self.weights[i]).collect();
        if w.iter().sum::<f64>() > 0.0 {
            w
        } else {
            vec![1.0; indices.len()]
        }
    }

    fn build<R: Rng + ?Sized>(&self, indices: &[usize], candidates: &[usize], rng: &mut R) -> Result<Node> {
        if indices.len() >= self.config.min_leaf_samples {
            if let Some(p) = self.choose_split(indices, candidates) {
                return self.split(indices, candidates, p, rng);
            }
        }
        self.leaf(indices, candidates, rng)
    }

    fn choose_split(&self, indices: &[usize], candidates: &[usize]) -> Option<usize> {
        let mut best: Option<(f64, VarId, usize)> = None;
        for &p in candidates {
            let card = self.card(p);
            let mut counts = vec![0usize; card];
            for &i in indices {
                counts[self.state(i, p)] += 1;
            }
            if counts.contains(&0) {
                continue;
            }
            let mean = indices.len() as f64 / card as f64;
            let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / card as f64;
            let id = self.data.scope[p].id;
            let better = match best {
                None => true,
                Some((bv, bid, _)) => var < bv || (var == bv && id < bid),
            };
            if better {
                best = Some((var, id, p));
            }
        }
        best.map(|(_, _, p)| p)
    }

    fn split<R: Rng + ?Sized>(&self, indices: &[usize], candidates: &[usize], p: usize, rng: &mut R) -> Result<Node> {
        let card = self.card(p);
        let w = self.local_weights(indices);
        let mut groups = vec![vec![]; card];
        let mut mass = vec![0.0; card];
        for (&i, wi) in indices.iter().zip(&w) {
            let s = self.state(i, p);
            groups[s].push(i);
            mass[s] += wi;
        }
        let probs = floor_and_normalize(&mass);
        let rest: Vec<usize> = candidates.iter().copied().filter(|&c| c != p).collect();
        let children = groups
            .iter()
            .map(|g| self.build(g, &rest, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Node::Split {
            var: self.data.scope[p].id,
            probs,
            children,
        })
    }

    fn leaf<R: Rng + ?Sized>(&self, indices: &[usize], candidates: &[usize], rng: &mut R) -> Result<Node> {
        let w = self.local_weights(indices);
        let total: f64 = w.iter().sum();
        let alpha = self.config.pseudocount;
        let discrete = candidates
            .iter()
            .map(|&p| {
                let card = self.card(p);
                let mut counts = vec![alpha; card];
                for (&i, wi) in indices.iter().zip(&w) {
                    counts[self.state(i, p)] += wi;
                }
                let denom = total + card as f64 * alpha;
                (self.data.scope[p].id, counts.into_iter().map(|c| c / denom).collect::<Vec<f64>>())
            })
            .map(|(v, p)| (v, if alpha > 0.0 { p } else { floor_and_normalize(&p) }))
            .collect();
        let dim = self.continuous.len();
        let gmm = if dim == 0 {
            DiagonalGmm::empty()
        } else {
            let mut coords = Vec::with_capacity(indices.len() * dim);
            for &i in indices {
                let row = self.data.row(i);
                coords.extend(self.continuous.iter().map(|&p| row[p].as_continuous().expect("continuous column")));
            }
            em_fit_with_rng(&coords, dim, &w, self.config.components, &self.config.em, rng)?.model
        };
        Ok(Node::Leaf(Leaf {
            discrete,
            continuous: self.continuous.iter().map(|&p| self.data.scope[p].id).collect(),
            gmm,
        }))
    }
}

fn floor_and_normalize(mass: &[f64]) -> Vec<f64> {
    let total: f64 = mass.iter().sum();
    let mut p: Vec<f64> = mass
        .iter()
        .map(|m| if total > 0.0 { (m / total).max(EDGE_FLOOR) } else { 1.0 / mass.len() as f64 })
        .collect();
    let s: f64 = p.iter().sum();
    for x in &mut p {
        *x /= s;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn d(id: VarId, card: usize) -> ScopeVar {
        ScopeVar {
            id,
            domain: Domain::Discrete { cardinality: card },
        }
    }

    fn c(id: VarId) -> ScopeVar {
        ScopeVar {
            id,
            domain: Domain::Continuous { low: -50.0, high: 50.0 },
        }
    }

    fn split_tree() -> DensityTree {
        let leaf = |m: f64| {
            Node::Leaf(Leaf {
                discrete: vec![],
                continuous: vec![1],
                gmm: DiagonalGmm::single(vec![m], vec![1.0]).unwrap(),
            })
        };
        DensityTree {
            scope: vec![d(0, 2), c(1)],
            root: Node::Split {
                var: 0,
                probs: vec![0.3, 0.7],
                children: vec![leaf(-2.0), leaf(3.0)],
            },
        }
    }

    #[test]
    fn single_gaussian_peak() {
        let t = DensityTree::leaf(vec![c(0)], vec![], DiagonalGmm::single(vec![0.0], vec![1.0]).unwrap()).unwrap();
        assert!((t.eval(&[Value::Continuous(0.0)]).unwrap() - 0.398942).abs() < 1e-6);
    }

    #[test]
    fn path_product() {
        let t = split_tree();
        let at_mean = t.eval(&[Value::Discrete(0), Value::Continuous(-2.0)]).unwrap();
        assert!((at_mean - 0.3 * 0.398942280401).abs() < 1e-9);
        assert!(t.eval(&[Value::Discrete(0)]).is_err());
    }

    #[test]
    fn marginal_mixes_branches() {
        let t = split_tree();
        let m = t.marginalize(&[1]).unwrap();
        let x = 0.5;
        let expect = 0.3 * crate::network::gaussian_density(x, -2.0, 1.0) + 0.7 * crate::network::gaussian_density(x, 3.0, 1.0);
        assert!((m.eval(&[Value::Continuous(x)]).unwrap() - expect).abs() < 1e-12);
        assert_eq!(t.marginalize(&[0, 1]).unwrap(), t);
        assert!(t.marginalize(&[7]).is_err());
    }

    #[test]
    fn condition_on_branch() {
        let t = split_tree();
        let (c1, mass) = t.condition(&Evidence::new().with(0, Value::Discrete(1))).unwrap();
        assert!((mass - 0.7).abs() < 1e-15);
        assert_eq!(c1.ids(), vec![1]);
        let (same, one) = t.condition(&Evidence::new()).unwrap();
        assert_eq!(one, 1.0);
        assert_eq!(same, t);
    }

    #[test]
    fn branch_frequency() {
        let t = split_tree();
        let mut rng = stream(11, 0);
        let n = 100_000;
        let zeros = (0..n).filter(|_| t.sample(&mut rng)[0] == Value::Discrete(0)).count();
        assert!((zeros as f64 / n as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn degenerate_tree_samples_deterministically() {
        let t = DensityTree {
            scope: vec![d(0, 2), c(1)],
            root: Node::Split {
                var: 0,
                probs: vec![0.0, 1.0],
                children: vec![
                    Node::Leaf(Leaf {
                        discrete: vec![],
                        continuous: vec![1],
                        gmm: DiagonalGmm::single(vec![0.0], vec![1.0]).unwrap(),
                    }),
                    Node::Leaf(Leaf {
                        discrete: vec![],
                        continuous: vec![1],
                        gmm: DiagonalGmm::single(vec![4.0], vec![1e-18]).unwrap(),
                    }),
                ],
            },
        };
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            let r = t.sample(&mut rng);
            assert_eq!(r[0], Value::Discrete(1));
            assert!((r[1].as_continuous().unwrap() - 4.0).abs() < 1e-6);
        }
    }

    fn dataset(rows: &[(usize, usize)], w: f64) -> WeightedSampleSet {
        let mut s = WeightedSampleSet::new(vec![d(0, 2), d(1, 2)]);
        for (a, b) in rows {
            s.push(&[Value::Discrete(*a), Value::Discrete(*b)], w);
        }
        s
    }

    #[test]
    fn constant_variable_is_not_split() {
        let rows: Vec<(usize, usize)> = (0..100).map(|i| (0, i % 2)).collect();
        let t = dt_learn(&dataset(&rows, 1.0), &TreeConfig::default(), &mut stream(0, 0)).unwrap();
        assert_eq!(t.structure()[0], Some(1));
        assert!(!t.structure().contains(&Some(0)));
    }

    #[test]
    fn balanced_variable_wins() {
        let rows: Vec<(usize, usize)> = (0..100).map(|i| (usize::from(i % 10 == 0), i % 2)).collect();
        let t = dt_learn(&dataset(&rows, 1.0), &TreeConfig::default(), &mut stream(0, 0)).unwrap();
        assert_eq!(t.structure()[0], Some(1));
    }

    #[test]
    fn zero_weight_is_a_learning_error() {
        let rows = [(0, 0), (1, 1)];
        assert!(matches!(
            dt_learn(&dataset(&rows, 0.0), &TreeConfig::default(), &mut stream(0, 0)),
            Err(Error::Learning(_))
        ));
    }

    #[test]
    fn leaf_multinomial_uses_pseudocounts() {
        let rows = [(0, 0), (0, 0), (0, 1)];
        let t = dt_learn(&dataset(&rows, 1.0), &TreeConfig::default(), &mut stream(0, 0)).unwrap();
        let Node::Leaf(leaf) = &t.root else { panic!("expected a leaf") };
        assert!((leaf.discrete[0].1[0] - 4.0 / 5.0).abs() < 1e-12);
        assert!((leaf.discrete[1].1[0] - 3.0 / 5.0).abs() < 1e-12);
        t.check().unwrap();
    }
}
