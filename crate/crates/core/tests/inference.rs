mod common;

use adjfas::bayesnet::{
    bdeu_local_score, eliminate, fit_posterior, infer_conditional, is_local_maximum,
    joint_marginal, learn_structure, query, Factor, StructureConfig,
};
use adjfas::data::CategoricalTable;
use adjfas::seed::rng_from;
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng as _;

#[test]
fn elimination_matches_enumeration() {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let mut rng = rng_from(seed, &[]);
        let n = rng.random_range(3..=8);
        let dag = random_dag(&mut rng, n, 0.4);
        let params = random_params(&mut rng, &dag, 3);
        let target = rng.random_range(0..n);
        let mut evidence = Vec::new();
        for v in 0..n {
            if v != target && rng.random::<f64>() < 0.3 {
                evidence.push((v, rng.random_range(0..params.cardinalities()[v]) as u32));
            }
        }
        let got = infer_conditional(&params, target, &evidence).unwrap();
        let want = marginal(&params, &[target], &evidence);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
        let pair: Vec<usize> = (0..n)
            .filter(|&v| v != target)
            .take(1)
            .chain([target])
            .collect();
        let got = joint_marginal(&params, &pair);
        let want = marginal(&params, &pair, &[]);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst < 1e-10, "max abs error {worst}");
}

#[test]
fn soft_evidence_is_a_reweighted_joint() {
    let mut rng = rng_from(9, &[]);
    let dag = random_dag(&mut rng, 5, 0.5);
    let params = random_params(&mut rng, &dag, 3);
    let w: Vec<f64> = (0..params.cardinalities()[1])
        .map(|_| rng.random::<f64>())
        .collect();
    let got = query(&params, &[Factor::unary(1, w.clone())], &[3], &[]).unwrap();
    let mut want = vec![0.0; params.cardinalities()[3]];
    for (a, p) in joint(&params) {
        want[a[3] as usize] += p * w[a[1] as usize];
    }
    let s: f64 = want.iter().sum();
    for (g, v) in got.iter().zip(&want) {
        assert!((g - v / s).abs() < 1e-12);
    }
}

#[test]
fn zero_probability_evidence_is_an_error() {
    let dag = adjfas::graph::Admg::from_edges(&["A", "B"], None, &[("A", "B")], &[]).unwrap();
    let params = adjfas::bayesnet::ParamInstantiation::new(
        dag,
        vec![2, 2],
        vec![vec![1.0, 0.0], vec![0.5, 0.5, 0.5, 0.5]],
    )
    .unwrap();
    assert!(infer_conditional(&params, 1, &[(0, 1)]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elimination_order_does_not_matter(seed in 0u64..10_000, keep_n in 0usize..3) {
        let mut rng = rng_from(seed, &[]);
        let n = 6;
        let dag = random_dag(&mut rng, n, 0.5);
        let params = random_params(&mut rng, &dag, 3);
        let factors: Vec<Factor> = (0..n).map(|v| params.cpt_factor(v)).collect();
        let keep: Vec<usize> = (0..keep_n).collect();
        let mut order: Vec<usize> = (keep_n..n).collect();
        let a = eliminate(factors.clone(), &keep, Some(&order));
        order.shuffle(&mut rng);
        let b = eliminate(factors, &keep, Some(&order));
        prop_assert_eq!(a.values.len(), b.values.len());
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

fn sample_table(
    seed: u64,
    rows: usize,
) -> (adjfas::bayesnet::ParamInstantiation, CategoricalTable) {
    let mut rng = rng_from(seed, &[]);
    let dag = random_dag(&mut rng, 4, 0.6);
    let params = random_params(&mut rng, &dag, 3);
    let order = dag.topological_order();
    let mut a = vec![0u32; 4];
    let mut data = Vec::new();
    for _ in 0..rows {
        params.forward_sample(&order, &mut rng, &mut a);
        data.push(a.clone());
    }
    let names = params.names().to_vec();
    let cards = params.cardinalities().to_vec();
    (params, CategoricalTable::new(names, cards, &data).unwrap())
}

#[test]
fn bdeu_family_score_matches_closed_form() {
    let (_, table) = sample_table(4, 300);
    let ess = 2.0;
    for (node, parents) in [(0usize, vec![]), (1, vec![0]), (3, vec![1, 2])] {
        let r = table.cardinality(node);
        let q: usize = parents.iter().map(|&p| table.cardinality(p)).product();
        let mut vars = parents.clone();
        vars.push(node);
        let counts = table.counts(&vars);
        let mut want = 0.0;
        for j in 0..q {
            let n: Vec<u64> = (0..r).map(|k| counts.counts[j * r + k]).collect();
            want += ln_dirichlet_multinomial(&vec![ess / (q * r) as f64; r], &n);
        }
        let got = bdeu_local_score(&table, node, &parents, ess);
        assert!(
            (got - want).abs() < 1e-8,
            "{node} | {parents:?}: {got} vs {want}"
        );
    }
}

#[test]
fn hill_climbing_ends_at_a_local_maximum() {
    for seed in 0..5 {
        let (_, table) = sample_table(seed, 2000);
        let cfg = StructureConfig {
            seed,
            ..StructureConfig::default()
        };
        let dag = learn_structure(&table, &cfg);
        assert!(is_local_maximum(&table, &dag, cfg.ess, cfg.max_parents));
    }
}

#[test]
fn posterior_mean_converges_to_the_generating_cpts() {
    let (params, table) = sample_table(11, 200_000);
    let post = fit_posterior(params.dag(), &table, 1.0).unwrap();
    let mean = post.posterior_mean();
    let mut rows = 0;
    for v in 0..params.n() {
        let r = params.cardinalities()[v];
        let mut family = params.dag().parents(v).to_vec();
        family.push(v);
        let counts = table.counts(&family);
        for (j, (got, want)) in mean
            .cpt(v)
            .chunks(r)
            .zip(params.cpt(v).chunks(r))
            .enumerate()
        {
            let n: u64 = counts.counts[j * r..(j + 1) * r].iter().sum();
            if n < 5_000 {
                continue;
            }
            rows += 1;
            for (a, b) in got.iter().zip(want) {
                assert!((a - b).abs() < 0.03, "node {v} row {j}: {a} vs {b}");
            }
        }
    }
    assert!(rows >= 4);
}
