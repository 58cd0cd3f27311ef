mod common;

use common::{random_discrete_net, random_evidence, table_net};
use hybrid_bn::clique_tree::verify_running_intersection;
use hybrid_bn::exact::propagate_with_root;
use hybrid_bn::rng::stream;
use hybrid_bn::{brute_force_joint, build_clique_tree, shafer_shenoy_propagate, CliqueTree, Evidence, Value};
use proptest::prelude::*;

fn intersection_size(tree: &CliqueTree, i: usize, j: usize) -> usize {
    tree.cliques[i].scope.iter().filter(|v| tree.cliques[j].contains(**v)).count()
}

/// Edges on the tree path from `a` to `b`.
fn path(tree: &CliqueTree, a: usize, b: usize) -> Vec<(usize, usize)> {
    let rooted = tree.rooted(a);
    let mut out = vec![];
    let mut at = b;
    while let Some(p) = rooted.parent[at] {
        out.push((p, at));
        at = p;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagation_matches_enumeration(seed in 0u64..10_000, n in 1usize..10, max_parents in 1usize..4) {
        let mut rng = stream(seed, 0);
        let net = random_discrete_net(&mut rng, n, max_parents);
        let ev = random_evidence(&mut rng, &net, 3);
        let tree = build_clique_tree(&net, usize::MAX).unwrap();
        let post = shafer_shenoy_propagate(&tree, &net, &ev).unwrap();
        let brute = brute_force_joint(&net, &ev).unwrap();
        for (v, expect) in brute.iter().enumerate() {
            let got = post.marginal(v).unwrap();
            for (a, b) in got.iter().zip(expect) {
                prop_assert!((a - b).abs() <= 1e-9, "variable {v}: {got:?} vs {expect:?}");
            }
        }
    }

    #[test]
    fn clique_tree_is_a_maximum_spanning_junction_tree(seed in 0u64..10_000, n in 2usize..12) {
        let mut rng = stream(seed, 1);
        let net = random_discrete_net(&mut rng, n, 3);
        let tree = build_clique_tree(&net, usize::MAX).unwrap();
        prop_assert!(tree.is_tree());
        prop_assert!(verify_running_intersection(&tree));
        for cpd in &net.cpds {
            let mut family = cpd.parents.clone();
            family.push(cpd.child);
            prop_assert!(tree.cliques.iter().any(|c| family.iter().all(|v| c.contains(*v))));
        }
        for i in 0..tree.len() {
            for j in i + 1..tree.len() {
                if tree.edges.contains(&(i, j)) {
                    continue;
                }
                let w = intersection_size(&tree, i, j);
                for (a, b) in path(&tree, i, j) {
                    prop_assert!(intersection_size(&tree, a, b) >= w);
                }
            }
        }
    }

    #[test]
    fn root_choice_does_not_change_marginals(seed in 0u64..10_000) {
        let mut rng = stream(seed, 2);
        let net = random_discrete_net(&mut rng, 8, 2);
        let ev = random_evidence(&mut rng, &net, 2);
        let tree = build_clique_tree(&net, usize::MAX).unwrap();
        let base = propagate_with_root(&tree, &net, &ev, 0).unwrap();
        let other = propagate_with_root(&tree, &net, &ev, tree.len() - 1).unwrap();
        for v in 0..net.len() {
            for (a, b) in base.marginal(v).unwrap().iter().zip(other.marginal(v).unwrap()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn adjacent_cliques_agree_on_sepsets() {
    for seed in 0..20 {
        let mut rng = stream(seed, 3);
        let net = random_discrete_net(&mut rng, 11, 3);
        let ev = random_evidence(&mut rng, &net, 3);
        let tree = build_clique_tree(&net, usize::MAX).unwrap();
        let post = shafer_shenoy_propagate(&tree, &net, &ev).unwrap();
        for &(i, j) in &tree.edges {
            let s = tree.sepset(i, j);
            let a = post.potentials[i].marginal_onto(&s).unwrap();
            let b = post.potentials[j].marginal_onto(&s).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn explaining_away() {
    let net = table_net(
        2,
        &[
            (&[], vec![vec![0.9, 0.1]]),
            (&[], vec![vec![0.9, 0.1]]),
            (&[0, 1], vec![vec![0.99, 0.01], vec![0.1, 0.9], vec![0.1, 0.9], vec![0.01, 0.99]]),
        ],
    );
    let tree = build_clique_tree(&net, usize::MAX).unwrap();
    let alarm = Evidence::new().with(2, Value::Discrete(1));
    let both = alarm.clone().with(1, Value::Discrete(1));
    let p_alarm = shafer_shenoy_propagate(&tree, &net, &alarm).unwrap().marginal(0).unwrap()[1];
    let p_both = shafer_shenoy_propagate(&tree, &net, &both).unwrap().marginal(0).unwrap()[1];
    let brute = brute_force_joint(&net, &alarm).unwrap()[0][1];
    assert!((p_alarm - brute).abs() < 1e-12);
    assert!(p_alarm > 0.4 && p_both < 0.15, "{p_alarm} {p_both}");
}
