#![allow(dead_code)]

use hybrid_bn::density_tree::{DensityTree, Leaf, Node, ScopeVar};
use hybrid_bn::gmm::DiagonalGmm;
use hybrid_bn::{Cpd, CpdBody, Domain, Evidence, HybridNetwork, Value, VarId, Variable};
use rand::Rng;

fn random_row<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Binary variables in a random DAG; each variable takes up to `max_parents`
/// parents among the earlier ones.
pub fn random_discrete_net<R: Rng>(rng: &mut R, n: usize, max_parents: usize) -> HybridNetwork {
    let mut vars = vec![];
    let mut cpds = vec![];
    for v in 0..n {
        vars.push(Variable::discrete(v, &format!("X{v}"), &["0", "1"]));
        let mut parents: Vec<VarId> = (0..v).filter(|_| rng.random_bool(0.4)).collect();
        while parents.len() > max_parents {
            let drop = rng.random_range(0..parents.len());
            parents.remove(drop);
        }
        let rows = (0..1usize << parents.len()).map(|_| random_row(rng, 2)).collect();
        cpds.push(Cpd {
            child: v,
            parents,
            body: CpdBody::Table { rows },
        });
    }
    HybridNetwork::validated(vars, cpds).expect("random network is valid")
}

/// Evidence on up to `max` distinct random variables.
pub fn random_evidence<R: Rng>(rng: &mut R, net: &HybridNetwork, max: usize) -> Evidence {
    let mut ev = Evidence::new();
    for _ in 0..rng.random_range(0..=max) {
        let v = rng.random_range(0..net.len());
        let card = net.domain(v).cardinality().unwrap();
        ev.insert(v, Value::Discrete(rng.random_range(0..card)));
    }
    ev
}

/// Discrete network from `(parents, rows)` per variable, all with
/// cardinality `card`.
pub fn table_net(card: usize, families: &[(&[VarId], Vec<Vec<f64>>)]) -> HybridNetwork {
    let states: Vec<String> = (0..card).map(|s| s.to_string()).collect();
    let states: Vec<&str> = states.iter().map(String::as_str).collect();
    let vars = (0..families.len()).map(|v| Variable::discrete(v, &format!("V{v}"), &states)).collect();
    let cpds = families
        .iter()
        .enumerate()
        .map(|(v, (parents, rows))| Cpd {
            child: v,
            parents: parents.to_vec(),
            body: CpdBody::Table { rows: rows.clone() },
        })
        .collect();
    HybridNetwork::validated(vars, cpds).expect("table network is valid")
}

pub const TREE_LOW: f64 = -10.0;
pub const TREE_HIGH: f64 = 10.0;

/// Scope used by `random_tree`: discrete ids 0 (card 2) and 1 (card 3),
/// continuous ids 2 and 3.
pub fn tree_scope() -> Vec<ScopeVar> {
    vec![
        ScopeVar { id: 0, domain: Domain::Discrete { cardinality: 2 } },
        ScopeVar { id: 1, domain: Domain::Discrete { cardinality: 3 } },
        ScopeVar { id: 2, domain: Domain::Continuous { low: TREE_LOW, high: TREE_HIGH } },
        ScopeVar { id: 3, domain: Domain::Continuous { low: TREE_LOW, high: TREE_HIGH } },
    ]
}

fn random_gmm<R: Rng>(rng: &mut R, dim: usize) -> DiagonalGmm {
    let k = rng.random_range(1..=3);
    let weights = random_row(rng, k);
    let means = (0..k).map(|_| (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
    let variances = (0..k).map(|_| (0..dim).map(|_| rng.random_range(0.3..3.0)).collect()).collect();
    DiagonalGmm::new(weights, means, variances).unwrap()
}

fn random_node<R: Rng>(rng: &mut R, scope: &[ScopeVar], path: &mut Vec<VarId>, depth: usize) -> Node {
    let open: Vec<&ScopeVar> = scope.iter().filter(|s| s.domain.is_discrete() && !path.contains(&s.id)).collect();
    if !open.is_empty() && depth < 2 && rng.random_bool(0.7) {
        let sv = open[rng.random_range(0..open.len())];
        let card = sv.domain.cardinality().unwrap();
        path.push(sv.id);
        let children = (0..card).map(|_| random_node(rng, scope, path, depth + 1)).collect();
        path.pop();
        return Node::Split {
            var: sv.id,
            probs: random_row(rng, card),
            children,
        };
    }
    let discrete = open
        .iter()
        .map(|s| (s.id, random_row(rng, s.domain.cardinality().unwrap())))
        .collect();
    let continuous: Vec<VarId> = scope.iter().filter(|s| !s.domain.is_discrete()).map(|s| s.id).collect();
    let gmm = if continuous.is_empty() {
        DiagonalGmm::empty()
    } else {
        random_gmm(rng, continuous.len())
    };
    Node::Leaf(Leaf {
        discrete,
        continuous,
        gmm,
    })
}

pub fn random_tree<R: Rng>(rng: &mut R) -> DensityTree {
    let scope = tree_scope();
    let root = random_node(rng, &scope, &mut vec![], 0);
    let tree = DensityTree { scope, root };
    tree.check().expect("random tree is well formed");
    tree
}

pub fn random_point<R: Rng>(rng: &mut R, scope: &[ScopeVar]) -> Vec<Value> {
    scope
        .iter()
        .map(|s| match s.domain {
            Domain::Discrete { cardinality } => Value::Discrete(rng.random_range(0..cardinality)),
            Domain::Continuous { .. } => Value::Continuous(rng.random_range(-6.0..6.0)),
        })
        .collect()
}

fn normal(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Density of the tree marginal over `keep` at `get`, by walking every path
/// and summing out dropped discrete variables and mixture dimensions.
pub fn oracle_marginal(node: &Node, keep: &[VarId], get: &dyn Fn(VarId) -> Value) -> f64 {
    match node {
        Node::Split { var, probs, children } => {
            if keep.contains(var) {
                let s = get(*var).as_discrete().unwrap();
                probs[s] * oracle_marginal(&children[s], keep, get)
            } else {
                probs.iter().zip(children).map(|(p, c)| p * oracle_marginal(c, keep, get)).sum()
            }
        }
        Node::Leaf(leaf) => {
            let mut acc = 1.0;
            for (v, p) in &leaf.discrete {
                if keep.contains(v) {
                    acc *= p[get(*v).as_discrete().unwrap()];
                }
            }
            let g = &leaf.gmm;
            let mix: f64 = (0..g.components())
                .map(|k| {
                    let mut c = g.weights[k];
                    for (d, v) in leaf.continuous.iter().enumerate() {
                        if keep.contains(v) {
                            c *= normal(get(*v).as_continuous().unwrap(), g.means[k][d], g.variances[k][d]);
                        }
                    }
                    c
                })
                .sum();
            acc * mix
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
