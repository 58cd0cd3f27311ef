//! Clique tree construction: moralize, triangulate by min-fill, connect the
//! maximal elimination cliques with a maximum-weight spanning tree over sepset
//! sizes, then assign each CPD to one covering clique.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::network::{Evidence, HybridNetwork, VarId};

pub const DEFAULT_MAX_CONTINUOUS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Clique {
    pub id: usize,
    /// Sorted variable ids.
    pub scope: Vec<VarId>,
    /// CPDs assigned here, identified by their child variable.
    pub assigned_cpds: Vec<VarId>,
    pub local_evidence: Evidence,
}

impl Clique {
    pub fn contains(&self, var: VarId) -> bool {
        self.scope.binary_search(&var).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliqueTree {
    pub cliques: Vec<Clique>,
    /// Undirected edges `(i, j)` with `i < j`.
    pub edges: Vec<(usize, usize)>,
    /// Cliques holding more continuous variables than the configured limit.
    pub oversized: Vec<usize>,
}

/// A rooting of the tree: parent links plus a pre-order visit.
#[derive(Clone, Debug)]
pub struct Rooted {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub preorder: Vec<usize>,
}

impl Rooted {
    pub fn postorder(&self) -> Vec<usize> {
        let mut order = self.preorder.clone();
        order.reverse();
        order
    }
}

impl CliqueTree {
    /// Assembles a tree from explicit scopes and edges, without checks or CPDs.
    pub fn from_parts(scopes: Vec<Vec<VarId>>, edges: Vec<(usize, usize)>) -> Self {
        let cliques = scopes
            .into_iter()
            .enumerate()
            .map(|(id, mut scope)| {
                scope.sort_unstable();
                scope.dedup();
                Clique {
                    id,
                    scope,
                    assigned_cpds: Vec::new(),
                    local_evidence: Evidence::new(),
                }
            })
            .collect();
        let edges = edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        CliqueTree {
            cliques,
            edges,
            oversized: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn sepset(&self, i: usize, j: usize) -> Vec<VarId> {
        intersect(&self.cliques[i].scope, &self.cliques[j].scope)
    }

    /// `C_i` minus the sepset shared with `j`.
    pub fn complement(&self, i: usize, j: usize) -> Vec<VarId> {
        let sep = self.sepset(i, j);
        self.cliques[i]
            .scope
            .iter()
            .copied()
            .filter(|v| !sep.contains(v))
            .collect()
    }

    pub fn is_tree(&self) -> bool {
        let n = self.cliques.len();
        if n == 0 {
            return self.edges.is_empty();
        }
        if self.edges.len() != n - 1 {
            return false;
        }
        let mut uf = UnionFind::new(n);
        self.edges.iter().all(|&(a, b)| a < n && b < n && uf.union(a, b))
    }

    pub fn rooted(&self, root: usize) -> Rooted {
        let n = self.cliques.len();
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut preorder = Vec::with_capacity(n);
        let mut visited = vec![false; n];
        let mut stack = vec![root];
        visited[root] = true;
        while let Some(i) = stack.pop() {
            preorder.push(i);
            let nbrs = self.neighbors(i);
            for &j in nbrs.iter().rev() {
                if !visited[j] {
                    visited[j] = true;
                    parent[j] = Some(i);
                    children[i].push(j);
                    stack.push(j);
                }
            }
        }
        for c in &mut children {
            c.sort_unstable();
        }
        Rooted {
            root,
            parent,
            children,
            preorder,
        }
    }

    /// Smallest clique (by scope size, then id) containing `var`.
    pub fn home_of(&self, var: VarId) -> Option<usize> {
        self.cliques
            .iter()
            .filter(|c| c.contains(var))
            .min_by_key(|c| (c.scope.len(), c.id))
            .map(|c| c.id)
    }

    /// Copies of the tree with `local_evidence` filled from `evidence`.
    pub fn with_evidence(&self, evidence: &Evidence) -> CliqueTree {
        let mut tree = self.clone();
        for c in &mut tree.cliques {
            c.local_evidence = evidence.restrict(&c.scope);
        }
        tree
    }

    pub fn dump(&self, net: &HybridNetwork) -> String {
        let names = |vars: &[VarId]| -> String {
            vars.iter()
                .map(|&v| net.variables[v].name.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut out = String::new();
        for c in &self.cliques {
            let _ = writeln!(out, "clique {}: {{{}}}", c.id, names(&c.scope));
            let _ = writeln!(out, "  cpds: [{}]", names(&c.assigned_cpds));
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "edge {a} -- {b}: sepset {{{}}}", names(&self.sepset(a, b)));
        }
        if !self.oversized.is_empty() {
            let _ = writeln!(out, "warning: cliques over the continuous limit: {:?}", self.oversized);
        }
        out
    }
}

pub(crate) fn intersect(a: &[VarId], b: &[VarId]) -> Vec<VarId> {
    a.iter().copied().filter(|v| b.binary_search(v).is_ok()).collect()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

fn moral_graph(net: &HybridNetwork) -> Vec<BTreeSet<VarId>> {
    let mut adj = vec![BTreeSet::new(); net.len()];
    for cpd in &net.cpds {
        let family: Vec<VarId> = cpd.parents.iter().copied().chain([cpd.child]).collect();
        for (i, &a) in family.iter().enumerate() {
            for &b in &family[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }
    adj
}

/// Min-fill elimination, ties broken by the lowest variable id.
/// Returns the elimination order and the clique formed at each step.
pub fn min_fill_elimination(net: &HybridNetwork) -> (Vec<VarId>, Vec<Vec<VarId>>) {
    let mut adj = moral_graph(net);
    let mut remaining: BTreeSet<VarId> = (0..net.len()).collect();
    let mut order = Vec::with_capacity(net.len());
    let mut cliques = Vec::with_capacity(net.len());
    while !remaining.is_empty() {
        let fill = |v: VarId, adj: &[BTreeSet<VarId>]| -> usize {
            let nbrs: Vec<VarId> = adj[v].iter().copied().collect();
            let mut missing = 0;
            for (i, &a) in nbrs.iter().enumerate() {
                for &b in &nbrs[i + 1..] {
                    if !adj[a].contains(&b) {
                        missing += 1;
                    }
                }
            }
            missing
        };
        let v = *remaining
            .iter()
            .min_by_key(|&&v| (fill(v, &adj), v))
            .expect("remaining is non-empty");
        let nbrs: Vec<VarId> = adj[v].iter().copied().collect();
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &a in &nbrs {
            adj[a].remove(&v);
        }
        let mut clique = nbrs;
        clique.push(v);
        clique.sort_unstable();
        cliques.push(clique);
        remaining.remove(&v);
        order.push(v);
    }
    (order, cliques)
}

fn is_subset(a: &[VarId], b: &[VarId]) -> bool {
    a.iter().all(|v| b.binary_search(v).is_ok())
}

/// Builds a clique tree for `net` and assigns its CPDs.
pub fn build_clique_tree(net: &HybridNetwork, max_continuous_per_clique: usize) -> Result<CliqueTree> {
    let (_, candidates) = min_fill_elimination(net);
    let mut scopes: Vec<Vec<VarId>> = Vec::new();
    for (k, c) in candidates.iter().enumerate() {
        let dominated = candidates.iter().enumerate().any(|(l, other)| {
            l != k && is_subset(c, other) && (c.len() < other.len() || l < k)
        });
        if !dominated {
            scopes.push(c.clone());
        }
    }

    let n = scopes.len();
    let mut candidates_edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            candidates_edges.push((intersect(&scopes[i], &scopes[j]).len(), i, j));
        }
    }
    candidates_edges.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut uf = UnionFind::new(n);
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    for (_, i, j) in candidates_edges {
        if uf.union(i, j) {
            edges.push((i, j));
        }
    }
    edges.sort_unstable();

    let mut tree = CliqueTree::from_parts(scopes, edges);
    tree.oversized = tree
        .cliques
        .iter()
        .filter(|c| c.scope.iter().filter(|&&v| !net.variables[v].is_discrete()).count() > max_continuous_per_clique)
        .map(|c| c.id)
        .collect();
    assign_cpds(&mut tree, net)?;
    Ok(tree)
}

/// Puts every CPD into the smallest covering clique, lowest id on ties.
pub fn assign_cpds(tree: &mut CliqueTree, net: &HybridNetwork) -> Result<()> {
    for c in &mut tree.cliques {
        c.assigned_cpds.clear();
    }
    let mut cpds: Vec<_> = net.cpds.iter().collect();
    cpds.sort_by_key(|c| c.child);
    for cpd in cpds {
        let mut family: Vec<VarId> = cpd.parents.iter().copied().chain([cpd.child]).collect();
        family.sort_unstable();
        let home = tree
            .cliques
            .iter()
            .filter(|c| is_subset(&family, &c.scope))
            .min_by_key(|c| (c.scope.len(), c.id))
            .map(|c| c.id)
            .ok_or_else(|| {
                Error::Internal(format!(
                    "no clique covers the family of {}",
                    net.variables[cpd.child].name
                ))
            })?;
        tree.cliques[home].assigned_cpds.push(cpd.child);
    }
    Ok(())
}

/// True iff, for every variable, the cliques containing it form a connected subtree.
pub fn verify_running_intersection(tree: &CliqueTree) -> bool {
    let vars: BTreeSet<VarId> = tree.cliques.iter().flat_map(|c| c.scope.iter().copied()).collect();
    for v in vars {
        let holders: Vec<usize> = tree.cliques.iter().filter(|c| c.contains(v)).map(|c| c.id).collect();
        let mut uf = UnionFind::new(tree.cliques.len());
        let mut joined = 0;
        for &(a, b) in &tree.edges {
            if tree.cliques[a].contains(v) && tree.cliques[b].contains(v) && uf.union(a, b) {
                joined += 1;
            }
        }
        if joined + 1 != holders.len() {
            return false;
        }
    }
    true
}
