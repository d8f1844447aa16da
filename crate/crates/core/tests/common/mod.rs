//! Brute-force reference computations shared by the integration tests.
//!
//! Everything here works from raw CPT arrays and explicit enumeration so it
//! does not lean on the inference or graph code under test.

#![allow(dead_code)]

use adjfas::bayesnet::{sample_dirichlet, ParamInstantiation};
use adjfas::graph::Admg;
use adjfas::seed::Rng;
use rand::seq::SliceRandom;
use rand::Rng as _;

/// Random DAG over `n` nodes named `N0..`, edges following a random order.
pub fn random_dag(rng: &mut Rng, n: usize, p_edge: f64) -> Admg {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut g = Admg::empty((0..n).map(|i| format!("N{i}")));
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p_edge {
                g.add_directed(order[i], order[j]).unwrap();
            }
        }
    }
    g
}

pub fn random_params(rng: &mut Rng, dag: &Admg, max_card: usize) -> ParamInstantiation {
    let cards: Vec<usize> = (0..dag.n())
        .map(|_| rng.random_range(2..=max_card))
        .collect();
    let cpts = (0..dag.n())
        .map(|v| {
            let q: usize = dag.parents(v).iter().map(|&p| cards[p]).product();
            (0..q)
                .flat_map(|_| sample_dirichlet(&vec![1.0; cards[v]], rng))
                .collect()
        })
        .collect();
    ParamInstantiation::new(dag.clone(), cards, cpts).unwrap()
}

/// `P(v | pa(v))` read straight from the CPT array; parents are sorted and
/// the first parent is the most significant digit.
pub fn cpt_entry(p: &ParamInstantiation, v: usize, a: &[u32]) -> f64 {
    let cards = p.cardinalities();
    let mut parents = p.dag().parents(v).to_vec();
    parents.sort_unstable();
    let mut cfg = 0;
    for &u in &parents {
        cfg = cfg * cards[u] + a[u] as usize;
    }
    p.cpt(v)[cfg * cards[v] + a[v] as usize]
}

/// Every full assignment in odometer order (last node fastest).
pub fn assignments(cards: &[usize]) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for &k in cards {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..k as u32).map(move |s| {
                    let mut a = prefix.clone();
                    a.push(s);
                    a
                })
            })
            .collect();
    }
    out
}

pub fn joint(p: &ParamInstantiation) -> Vec<(Vec<u32>, f64)> {
    assignments(p.cardinalities())
        .into_iter()
        .map(|a| {
            let pr = (0..p.n()).map(|v| cpt_entry(p, v, &a)).product();
            (a, pr)
        })
        .collect()
}

/// Row-major `P(vars | evidence)` by summing the full joint.
pub fn marginal(p: &ParamInstantiation, vars: &[usize], evidence: &[(usize, u32)]) -> Vec<f64> {
    let cards = p.cardinalities();
    let size: usize = vars.iter().map(|&v| cards[v]).product();
    let mut out = vec![0.0; size];
    for (a, pr) in joint(p) {
        if evidence.iter().any(|&(v, s)| a[v] != s) {
            continue;
        }
        let idx = vars
            .iter()
            .fold(0, |acc, &v| acc * cards[v] + a[v] as usize);
        out[idx] += pr;
    }
    let s: f64 = out.iter().sum();
    out.iter().map(|v| v / s).collect()
}

/// `P(Y | do(X = xv))`: truncated factorization summed over everything.
pub fn true_id(p: &ParamInstantiation, x: usize, xv: u32, y: usize) -> Vec<f64> {
    let cards = p.cardinalities();
    let mut out = vec![0.0; cards[y]];
    for a in assignments(cards) {
        if a[x] != xv {
            continue;
        }
        let pr: f64 = (0..p.n())
            .filter(|&v| v != x)
            .map(|v| cpt_entry(p, v, &a))
            .product();
        out[a[y] as usize] += pr;
    }
    out
}

/// `Σ_z P(y | xv, z) P(z)` from the full joint; `None` if some `z` with
/// positive mass has `P(xv, z) = 0`.
pub fn adjusted(
    p: &ParamInstantiation,
    x: usize,
    xv: u32,
    y: usize,
    z: &[usize],
) -> Option<Vec<f64>> {
    let cards = p.cardinalities();
    let mut vars = z.to_vec();
    vars.push(x);
    vars.push(y);
    let m = marginal(p, &vars, &[]);
    let (kx, ky) = (cards[x], cards[y]);
    let mut out = vec![0.0; ky];
    for block in m.chunks(kx * ky) {
        let pz: f64 = block.iter().sum();
        let row = &block[xv as usize * ky..(xv as usize + 1) * ky];
        let pxz: f64 = row.iter().sum();
        if pz == 0.0 {
            continue;
        }
        if pxz == 0.0 {
            return None;
        }
        for k in 0..ky {
            out[k] += pz * row[k] / pxz;
        }
    }
    Some(out)
}

/// `ln(a (a+1) ... (a+n-1))`.
pub fn ln_rising(a: f64, n: u64) -> f64 {
    (0..n).map(|j| (a + j as f64).ln()).sum()
}

/// Dirichlet-multinomial probability of a particular sequence with counts
/// `n` under `Dirichlet(alpha)`, via rising factorials.
pub fn ln_dirichlet_multinomial(alpha: &[f64], n: &[u64]) -> f64 {
    let a: f64 = alpha.iter().sum();
    let total: u64 = n.iter().sum();
    alpha
        .iter()
        .zip(n)
        .map(|(&ak, &nk)| ln_rising(ak, nk))
        .sum::<f64>()
        - ln_rising(a, total)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mark {
    Tail,
    Arrow,
}

/// Edge list of an ADMG as `(a, b, mark at a, mark at b)`.
fn edges(g: &Admg) -> Vec<(usize, usize, Mark, Mark)> {
    let mut e: Vec<_> = g
        .directed_edges()
        .into_iter()
        .map(|(a, b)| (a, b, Mark::Tail, Mark::Arrow))
        .collect();
    e.extend(
        g.bidirected_edges()
            .into_iter()
            .map(|(a, b)| (a, b, Mark::Arrow, Mark::Arrow)),
    );
    e
}

/// m-separation by listing every simple path between `a` and `b` and
/// checking the collider rule on each.
pub fn m_separated_by_paths(g: &Admg, a: usize, b: usize, z: &[usize]) -> bool {
    let an_z = g.ancestors_mask(z);
    let es = edges(g);
    // adjacency: (neighbor, mark at self, mark at neighbor)
    let mut adj: Vec<Vec<(usize, Mark, Mark)>> = vec![vec![]; g.n()];
    for &(u, v, mu, mv) in &es {
        adj[u].push((v, mu, mv));
        adj[v].push((u, mv, mu));
    }
    fn dfs(
        node: usize,
        arrived_with_arrow: bool,
        target: usize,
        adj: &[Vec<(usize, Mark, Mark)>],
        visited: &mut Vec<bool>,
        z: &[usize],
        an_z: &[bool],
        start: bool,
    ) -> bool {
        if node == target {
            return true;
        }
        for &(next, mark_here, mark_next) in &adj[node] {
            if visited[next] {
                continue;
            }
            if !start {
                let collider = arrived_with_arrow && mark_here == Mark::Arrow;
                let open = if collider {
                    an_z[node]
                } else {
                    !z.contains(&node)
                };
                if !open {
                    continue;
                }
            }
            visited[next] = true;
            if dfs(
                next,
                mark_next == Mark::Arrow,
                target,
                adj,
                visited,
                z,
                an_z,
                false,
            ) {
                return true;
            }
            visited[next] = false;
        }
        false
    }
    let mut visited = vec![false; g.n()];
    visited[a] = true;
    !dfs(a, false, b, &adj, &mut visited, z, &an_z, true)
}

/// All subsets of `items`.
pub fn subsets(items: &[usize]) -> Vec<Vec<usize>> {
    (0..1u32 << items.len())
        .map(|m| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| m >> i & 1 == 1)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect()
}
