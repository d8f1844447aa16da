mod common;

use adjfas::graph::Admg;
use adjfas::seed::rng_from;
use common::*;
use rand::Rng as _;

fn random_admg(seed: u64, n: usize) -> Admg {
    let mut rng = rng_from(seed, &[]);
    let mut g = random_dag(&mut rng, n, 0.35);
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < 0.15 {
                g.add_bidirected(a, b).unwrap();
            }
        }
    }
    g
}

#[test]
fn m_separation_matches_path_enumeration() {
    let mut checked = 0;
    for seed in 0..60 {
        let g = random_admg(seed, 6);
        let mut rng = rng_from(seed, &[1]);
        for _ in 0..10 {
            let a = rng.random_range(0..6);
            let b = rng.random_range(0..6);
            if a == b {
                continue;
            }
            let rest: Vec<usize> = (0..6).filter(|&v| v != a && v != b).collect();
            let z: Vec<usize> = rest.into_iter().filter(|_| rng.random::<bool>()).collect();
            assert_eq!(
                g.m_separated(&[a], &[b], &z),
                m_separated_by_paths(&g, a, b, &z),
                "seed {seed}: {a} vs {b} given {z:?}"
            );
            checked += 1;
        }
    }
    assert!(checked > 400);
}

#[test]
fn latent_projection_preserves_separations_among_observed() {
    for seed in 0..40 {
        let mut rng = rng_from(seed, &[2]);
        let dag = random_dag(&mut rng, 7, 0.4);
        let observed: Vec<bool> = (0..7).map(|v| v < 4).collect();
        let g = dag.with_observed(observed).unwrap();
        let p = g.latent_projection().unwrap();
        assert_eq!(p.n(), 4);
        for a in 0..4 {
            for b in a + 1..4 {
                let rest: Vec<usize> = (0..4).filter(|&v| v != a && v != b).collect();
                for z in subsets(&rest) {
                    assert_eq!(
                        g.m_separated(&[a], &[b], &z),
                        p.m_separated(&[a], &[b], &z),
                        "seed {seed}: {a} vs {b} given {z:?}"
                    );
                }
            }
        }
    }
}

#[test]
fn accepted_sets_reproduce_the_interventional_distribution() {
    let mut accepted = 0;
    for seed in 0..40 {
        let mut rng = rng_from(seed, &[3]);
        let dag = random_dag(&mut rng, 6, 0.45);
        let Some((x, y)) = (0..6)
            .flat_map(|a| (0..6).map(move |b| (a, b)))
            .find(|&(a, b)| a != b && dag.is_ancestor(a, b))
        else {
            continue;
        };
        let params = random_params(&mut rng, &dag, 3);
        let rest: Vec<usize> = (0..6).filter(|&v| v != x && v != y).collect();
        let truth = true_id(&params, x, 0, y);
        let mut any = false;
        for z in subsets(&rest) {
            if dag.satisfies_adjustment_criterion(x, y, &z) {
                any = true;
                accepted += 1;
                let adj = adjusted(&params, x, 0, y, &z).expect("Dirichlet rows are positive");
                for (a, b) in adj.iter().zip(&truth) {
                    assert!(
                        (a - b).abs() < 1e-9,
                        "seed {seed}: {z:?} gives {adj:?} vs {truth:?}"
                    );
                }
            }
        }
        assert_eq!(any, dag.adjustment_set_exists(x, y));
        if any {
            let c = dag.canonical_adjustment_set(x, y);
            assert!(dag.satisfies_adjustment_criterion(x, y, &c));
        }
    }
    assert!(accepted > 40);
}

#[test]
fn json_round_trip_keeps_edges_and_flags() {
    for seed in 0..10 {
        let g = random_admg(seed, 5)
            .with_observed(vec![true, true, false, true, false])
            .unwrap();
        let back = Admg::from_json(&g.to_json()).unwrap();
        assert_eq!(back.directed_edges(), g.directed_edges());
        assert_eq!(back.bidirected_edges(), g.bidirected_edges());
        assert_eq!(back.observed_flags(), g.observed_flags());
        assert_eq!(back.names(), g.names());
    }
}

#[test]
fn confounded_pair_has_no_adjustment_set() {
    let g = Admg::from_edges(
        &["X", "Y", "W"],
        None,
        &[("X", "Y"), ("W", "X")],
        &[("X", "Y")],
    )
    .unwrap();
    assert!(!g.adjustment_set_exists(0, 1));
    assert!(!g.satisfies_adjustment_criterion(0, 1, &[2]));
}
