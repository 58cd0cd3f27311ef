mod common;

use common::{oracle_marginal, random_point, random_tree, tree_scope, TREE_HIGH, TREE_LOW};
use hybrid_bn::density_tree::{dt_learn, DensityTree, Leaf, Node, TreeConfig, WeightedSampleSet};
use hybrid_bn::gmm::DiagonalGmm;
use hybrid_bn::rng::stream;
use hybrid_bn::{Evidence, Value, VarId};
use proptest::prelude::*;
use rand::Rng;

const KEEPS: [&[VarId]; 6] = [&[0, 1, 2, 3], &[0, 2], &[1, 3], &[2], &[0, 1], &[1]];

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() <= 1e-300
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn eval_and_marginal_match_enumeration(seed in 0u64..100_000) {
        let mut rng = stream(seed, 0);
        let tree = random_tree(&mut rng);
        for keep in KEEPS {
            let marginal = tree.marginalize(keep).unwrap();
            for _ in 0..50 {
                let row = random_point(&mut rng, &marginal.scope);
                let get = |v: VarId| row[marginal.position(v).unwrap()];
                let expect = oracle_marginal(&tree.root, keep, &get);
                let got = marginal.eval(&row).unwrap();
                prop_assert!(close(got, expect, 1e-9), "keep {keep:?}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn condition_then_eval_is_a_ratio(seed in 0u64..100_000) {
        let mut rng = stream(seed, 1);
        let tree = random_tree(&mut rng);
        for _ in 0..30 {
            let row = random_point(&mut rng, &tree.scope);
            let mut ev = Evidence::new();
            for (s, v) in tree.scope.iter().zip(&row) {
                if rng.random_bool(0.5) {
                    ev.insert(s.id, *v);
                }
            }
            let (cond, mass) = tree.condition(&ev).unwrap();
            let rest: Vec<Value> = cond.scope.iter().map(|s| row[tree.position(s.id).unwrap()]).collect();
            let joint = tree.eval(&row).unwrap();
            let product = cond.eval(&rest).unwrap() * mass;
            prop_assert!(close(joint, product, 1e-12), "{joint} vs {product}");
        }
    }
}

fn cell_counts(tree: &DensityTree, draws: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let bins = 20;
    let width = (TREE_HIGH - TREE_LOW) / bins as f64;
    let mut discrete = vec![0.0; 6];
    let mut continuous = vec![0.0; bins];
    let mut rng = stream(seed, 9);
    for _ in 0..draws {
        let row = tree.sample(&mut rng);
        assert!(tree.eval(&row).unwrap() > 0.0);
        let (a, b) = (row[0].as_discrete().unwrap(), row[1].as_discrete().unwrap());
        discrete[a * 3 + b] += 1.0;
        let x = row[2].as_continuous().unwrap();
        let k = (((x - TREE_LOW) / width).floor().max(0.0) as usize).min(bins - 1);
        continuous[k] += 1.0;
    }
    (discrete, continuous)
}

#[test]
fn samples_follow_the_density() {
    let n = 100_000;
    for seed in 0..3 {
        let tree = random_tree(&mut stream(seed, 2));
        let (discrete, continuous) = cell_counts(&tree, n, seed);
        let pair = tree.marginalize(&[0, 1]).unwrap();
        let single = tree.marginalize(&[2]).unwrap();
        let mut expected: Vec<f64> = (0..6)
            .map(|c| pair.eval(&[Value::Discrete(c / 3), Value::Discrete(c % 3)]).unwrap())
            .collect();
        expected.extend(single.continuous_bins(TREE_LOW, TREE_HIGH, 20).unwrap());
        for (count, p) in discrete.iter().chain(&continuous).zip(&expected) {
            let se = (n as f64 * p * (1.0 - p)).sqrt().max(1.0);
            assert!((count - n as f64 * p).abs() <= 3.0 * se, "seed {seed}: {count} vs {}", n as f64 * p);
        }
    }
}

fn generating_tree() -> DensityTree {
    let scope = tree_scope()[..3].to_vec();
    let leaf = |b: Vec<f64>, mean: f64| {
        Node::Leaf(Leaf {
            discrete: vec![(1, b)],
            continuous: vec![2],
            gmm: DiagonalGmm::single(vec![mean], vec![1.0]).unwrap(),
        })
    };
    let tree = DensityTree {
        scope,
        root: Node::Split {
            var: 0,
            probs: vec![0.4, 0.6],
            children: vec![leaf(vec![0.7, 0.2, 0.1], -3.0), leaf(vec![0.1, 0.3, 0.6], 4.0)],
        },
    };
    tree.check().unwrap();
    tree
}

fn draws(tree: &DensityTree, n: usize, seed: u64) -> WeightedSampleSet {
    let mut rng = stream(seed, 0);
    let mut set = WeightedSampleSet::new(tree.scope.clone());
    for _ in 0..n {
        set.push(&tree.sample(&mut rng), 1.0);
    }
    set
}

#[test]
fn learning_recovers_a_known_tree() {
    let truth = generating_tree();
    let data = draws(&truth, 10_000, 1);
    let learned = dt_learn(&data, &TreeConfig::default(), &mut stream(1, 1)).unwrap();
    let mut rng = stream(1, 2);
    let errors: Vec<f64> = (0..500)
        .map(|_| {
            let row = truth.sample(&mut rng);
            let t = truth.eval(&row).unwrap();
            (learned.eval(&row).unwrap() - t).abs() / t
        })
        .collect();
    assert!(common::mean(&errors) <= 0.10, "{}", common::mean(&errors));

    let flat = TreeConfig {
        min_leaf_samples: 20_000,
        ..TreeConfig::default()
    };
    let single = dt_learn(&data, &flat, &mut stream(1, 1)).unwrap();
    assert_eq!(single.leaf_count(), 1);
    let loglik = |t: &DensityTree| (0..data.len()).map(|i| t.log_eval(data.row(i)).unwrap()).sum::<f64>();
    assert!(loglik(&learned) > loglik(&single));
}

#[test]
fn doubling_weights_keeps_the_structure() {
    for seed in 0..10 {
        let tree = random_tree(&mut stream(seed, 3));
        let data = draws(&tree, 2000, seed);
        let mut heavier = data.clone();
        let mut rng = stream(seed, 4);
        for w in &mut heavier.weights {
            if rng.random_bool(0.3) {
                *w *= 2.0;
            }
        }
        let config = TreeConfig::default();
        let a = dt_learn(&data, &config, &mut stream(seed, 5)).unwrap();
        let b = dt_learn(&heavier, &config, &mut stream(seed, 5)).unwrap();
        assert_eq!(a.structure(), b.structure());
        assert_ne!(a, b);
    }
}
