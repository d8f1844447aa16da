//! Greedy hill climbing over DAGs with the BDeu score.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use statrs::function::gamma::ln_gamma;

use crate::data::CategoricalTable;
use crate::graph::Admg;
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureConfig {
    /// BDeu equivalent sample size.
    pub ess: f64,
    pub max_parents: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            ess: 1.0,
            max_parents: 4,
            restarts: 5,
            seed: 0,
        }
    }
}

/// Improvements below this are treated as ties.
const SCORE_EPS: f64 = 1e-9;

/// BDeu log marginal likelihood of `node`'s family.
pub fn bdeu_local_score(table: &CategoricalTable, node: usize, parents: &[usize], ess: f64) -> f64 {
    let r = table.cardinality(node);
    let q: usize = parents.iter().map(|&p| table.cardinality(p)).product();
    let mut vars = parents.to_vec();
    vars.push(node);
    let counts = table.counts(&vars);
    let a_j = ess / q as f64;
    let a_jk = ess / (q * r) as f64;
    let lg_aj = ln_gamma(a_j);
    let lg_ajk = ln_gamma(a_jk);
    let mut score = 0.0;
    for block in counts.counts.chunks(r) {
        let n_j: u64 = block.iter().sum();
        if n_j == 0 {
            continue;
        }
        score += lg_aj - ln_gamma(a_j + n_j as f64);
        for &n in block {
            if n > 0 {
                score += ln_gamma(a_jk + n as f64) - lg_ajk;
            }
        }
    }
    score
}

/// BDeu score of a DAG whose nodes are the table's columns, in order.
pub fn bdeu_score(table: &CategoricalTable, dag: &Admg, ess: f64) -> f64 {
    (0..dag.n())
        .map(|v| bdeu_local_score(table, v, dag.parents(v), ess))
        .sum()
}

struct ScoreCache<'a> {
    table: &'a CategoricalTable,
    ess: f64,
    cache: HashMap<(usize, Vec<usize>), f64>,
}

impl<'a> ScoreCache<'a> {
    fn local(&mut self, node: usize, parents: &[usize]) -> f64 {
        let mut key = parents.to_vec();
        key.sort_unstable();
        if let Some(&s) = self.cache.get(&(node, key.clone())) {
            return s;
        }
        let s = bdeu_local_score(self.table, node, &key, self.ess);
        self.cache.insert((node, key), s);
        s
    }
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Add(usize, usize),
    Delete(usize, usize),
    Reverse(usize, usize),
}

fn without(list: &[usize], v: usize) -> Vec<usize> {
    list.iter().copied().filter(|&u| u != v).collect()
}

fn with(list: &[usize], v: usize) -> Vec<usize> {
    let mut out = list.to_vec();
    out.push(v);
    out
}

/// Score change of a legal move, or `None` if the move is not allowed.
fn move_delta(
    dag: &Admg,
    cache: &mut ScoreCache,
    max_parents: usize,
    a: usize,
    b: usize,
) -> Option<(Move, f64)> {
    let pa_b = dag.parents(b);
    if dag.has_directed(a, b) {
        let del = cache.local(b, &without(pa_b, a)) - cache.local(b, pa_b);
        // reversal: legal if no other directed path a ⇝ b
        let mut probe = dag.clone();
        probe.remove_directed(a, b);
        let pa_a = dag.parents(a);
        let rev = if pa_a.len() < max_parents && !probe.is_ancestor(a, b) {
            Some(del + cache.local(a, &with(pa_a, b)) - cache.local(a, pa_a))
        } else {
            None
        };
        match rev {
            Some(r) if r > del => Some((Move::Reverse(a, b), r)),
            _ => Some((Move::Delete(a, b), del)),
        }
    } else if !dag.has_directed(b, a) && pa_b.len() < max_parents && !dag.is_ancestor(b, a) {
        let add = cache.local(b, &with(pa_b, a)) - cache.local(b, pa_b);
        Some((Move::Add(a, b), add))
    } else {
        None
    }
}

fn climb(dag: &mut Admg, cache: &mut ScoreCache, max_parents: usize, pairs: &[(usize, usize)]) {
    loop {
        let mut best: Option<(Move, f64)> = None;
        for &(a, b) in pairs {
            if let Some((mv, delta)) = move_delta(dag, cache, max_parents, a, b) {
                let better = match best {
                    None => delta > SCORE_EPS,
                    Some((_, d)) => delta > d + SCORE_EPS,
                };
                if better {
                    best = Some((mv, delta));
                }
            }
        }
        let Some((mv, _)) = best else { return };
        match mv {
            Move::Add(a, b) => dag
                .add_directed(a, b)
                .expect("move was checked for acyclicity"),
            Move::Delete(a, b) => dag.remove_directed(a, b),
            Move::Reverse(a, b) => {
                dag.remove_directed(a, b);
                dag.add_directed(b, a)
                    .expect("move was checked for acyclicity");
            }
        }
    }
}

/// Learns a DAG over the table's columns by hill climbing from the empty
/// graph over single-edge additions, deletions and reversals.
///
/// Each restart visits candidate moves in a different random order, which
/// decides ties between equally scoring moves; the best-scoring result wins.
pub fn learn_structure(table: &CategoricalTable, cfg: &StructureConfig) -> Admg {
    let n = table.n_vars();
    let mut cache = ScoreCache {
        table,
        ess: cfg.ess,
        cache: HashMap::new(),
    };
    let base_pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let mut best: Option<(Admg, f64)> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut pairs = base_pairs.clone();
        if restart > 0 {
            pairs.shuffle(&mut rng_from(cfg.seed, &[restart as u64]));
        }
        let mut dag = Admg::empty(table.names().iter().cloned());
        climb(&mut dag, &mut cache, cfg.max_parents, &pairs);
        let score: f64 = (0..n).map(|v| cache.local(v, dag.parents(v))).sum();
        if best.as_ref().is_none_or(|(_, s)| score > s + SCORE_EPS) {
            best = Some((dag, score));
        }
    }
    best.map(|(d, _)| d)
        .unwrap_or_else(|| Admg::empty(table.names().iter().cloned()))
}

/// True iff no single legal edge move improves the BDeu score by more than
/// `SCORE_EPS`.
pub fn is_local_maximum(
    table: &CategoricalTable,
    dag: &Admg,
    ess: f64,
    max_parents: usize,
) -> bool {
    let mut cache = ScoreCache {
        table,
        ess,
        cache: HashMap::new(),
    };
    let n = dag.n();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            if let Some((_, delta)) = move_delta(dag, &mut cache, max_parents, a, b) {
                if delta > SCORE_EPS {
                    return false;
                }
            }
        }
    }
    true
}
