//! Exact inference by variable elimination with a min-fill ordering.

use std::collections::BTreeSet;

use super::ParamInstantiation;
use crate::error::{Error, Result};

/// A non-negative table over discrete variables, row-major in `vars` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub vars: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

impl Factor {
    pub fn new(vars: Vec<usize>, cards: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(vars.len(), cards.len());
        debug_assert_eq!(values.len(), cards.iter().product::<usize>());
        Self {
            vars,
            cards,
            values,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(Vec::new(), Vec::new(), vec![value])
    }

    /// Unary factor over `var`.
    pub fn unary(var: usize, values: Vec<f64>) -> Self {
        let k = values.len();
        Self::new(vec![var], vec![k], values)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    fn position(&self, var: usize) -> Option<usize> {
        self.vars.iter().position(|&v| v == var)
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        for (&v, &c) in other.vars.iter().zip(&other.cards) {
            if !vars.contains(&v) {
                vars.push(v);
                cards.push(c);
            }
        }
        let sa_own = strides(&self.cards);
        let sb_own = strides(&other.cards);
        let sa: Vec<usize> = vars
            .iter()
            .map(|&v| self.position(v).map_or(0, |i| sa_own[i]))
            .collect();
        let sb: Vec<usize> = vars
            .iter()
            .map(|&v| other.position(v).map_or(0, |i| sb_own[i]))
            .collect();
        let size: usize = cards.iter().product();
        let mut values = vec![0.0; size];
        let mut assign = vec![0usize; vars.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for out in values.iter_mut() {
            *out = self.values[ia] * other.values[ib];
            for d in (0..vars.len()).rev() {
                assign[d] += 1;
                ia += sa[d];
                ib += sb[d];
                if assign[d] < cards[d] {
                    break;
                }
                ia -= sa[d] * cards[d];
                ib -= sb[d] * cards[d];
                assign[d] = 0;
            }
        }
        Factor {
            vars,
            cards,
            values,
        }
    }

    /// Marginalizes out `var` (no-op if absent).
    pub fn sum_out(&self, var: usize) -> Factor {
        let Some(pos) = self.position(var) else {
            return self.clone();
        };
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        let k = self.cards[pos];
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for s in 0..k {
                let src = &self.values[(o * k + s) * inner..(o * k + s + 1) * inner];
                let dst = &mut values[o * inner..(o + 1) * inner];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
        Factor {
            vars,
            cards,
            values,
        }
    }

    /// Restricts `var` to `value` and drops it (no-op if absent).
    pub fn reduce(&self, var: usize, value: u32) -> Factor {
        let Some(pos) = self.position(var) else {
            return self.clone();
        };
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        let k = self.cards[pos];
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = (o * k + value as usize) * inner;
            values.extend_from_slice(&self.values[start..start + inner]);
        }
        Factor {
            vars,
            cards,
            values,
        }
    }

    /// Reorders axes to `order`, which must be a permutation of `vars`.
    pub fn permute(&self, order: &[usize]) -> Factor {
        debug_assert_eq!(order.len(), self.vars.len());
        if order == self.vars.as_slice() {
            return self.clone();
        }
        let own = strides(&self.cards);
        let cards: Vec<usize> = order
            .iter()
            .map(|&v| self.cards[self.position(v).unwrap()])
            .collect();
        let src_strides: Vec<usize> = order
            .iter()
            .map(|&v| own[self.position(v).unwrap()])
            .collect();
        let size = self.values.len();
        let mut values = Vec::with_capacity(size);
        let mut assign = vec![0usize; order.len()];
        let mut idx = 0usize;
        for _ in 0..size {
            values.push(self.values[idx]);
            for d in (0..order.len()).rev() {
                assign[d] += 1;
                idx += src_strides[d];
                if assign[d] < cards[d] {
                    break;
                }
                idx -= src_strides[d] * cards[d];
                assign[d] = 0;
            }
        }
        Factor {
            vars: order.to_vec(),
            cards,
            values,
        }
    }
}

/// Greedy min-fill elimination order (ties: smaller resulting clique, then
/// lower variable index).
fn min_fill_order(factors: &[Factor], to_eliminate: &[usize]) -> Vec<usize> {
    let max_var = factors
        .iter()
        .flat_map(|f| f.vars.iter().copied())
        .chain(to_eliminate.iter().copied())
        .max()
        .map_or(0, |m| m + 1);
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); max_var];
    for f in factors {
        for &a in &f.vars {
            for &b in &f.vars {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    let mut remaining: BTreeSet<usize> = to_eliminate.iter().copied().collect();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let best = *remaining
            .iter()
            .min_by_key(|&&v| {
                let nb: Vec<usize> = adj[v].iter().copied().collect();
                let mut fill = 0usize;
                for i in 0..nb.len() {
                    for j in i + 1..nb.len() {
                        if !adj[nb[i]].contains(&nb[j]) {
                            fill += 1;
                        }
                    }
                }
                (fill, nb.len(), v)
            })
            .unwrap();
        let nb: Vec<usize> = adj[best].iter().copied().collect();
        for &a in &nb {
            adj[a].remove(&best);
            for &b in &nb {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
        adj[best].clear();
        remaining.remove(&best);
        order.push(best);
    }
    order
}

/// Sums every variable not in `keep` out of the product of `factors`.
///
/// Returns a factor over `keep`, in that order. `order` overrides the
/// min-fill heuristic and must list exactly the eliminated variables.
pub fn eliminate(mut factors: Vec<Factor>, keep: &[usize], order: Option<&[usize]>) -> Factor {
    let all: BTreeSet<usize> = factors
        .iter()
        .flat_map(|f| f.vars.iter().copied())
        .collect();
    let to_eliminate: Vec<usize> = all.iter().copied().filter(|v| !keep.contains(v)).collect();
    let order = match order {
        Some(o) => o.to_vec(),
        None => min_fill_order(&factors, &to_eliminate),
    };
    for var in order {
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&var));
        factors = rest;
        if touching.is_empty() {
            continue;
        }
        let merged = touching
            .iter()
            .skip(1)
            .fold(touching[0].clone(), |acc, f| acc.product(f));
        factors.push(merged.sum_out(var));
    }
    let result = factors
        .iter()
        .fold(Factor::scalar(1.0), |acc, f| acc.product(f));
    // variables in `keep` that appear in no factor carry no information here
    debug_assert!(keep.iter().all(|v| result.vars.contains(v)));
    result.permute(keep)
}

/// Normalized `P(vars | evidence)` including optional extra factors (for
/// example soft evidence from selection indicators), as a row-major tensor in
/// `vars` order.
pub fn query(
    params: &ParamInstantiation,
    extra: &[Factor],
    vars: &[usize],
    evidence: &[(usize, u32)],
) -> Result<Vec<f64>> {
    let dag = params.dag();
    // nodes that are not ancestors of anything queried or observed sum to one
    let mut seeds: Vec<usize> = vars.to_vec();
    seeds.extend(evidence.iter().map(|&(v, _)| v));
    seeds.extend(extra.iter().flat_map(|f| f.vars.iter().copied()));
    let relevant = dag.ancestors_mask(&seeds);
    let mut factors: Vec<Factor> = (0..params.n())
        .filter(|&v| relevant[v])
        .map(|v| params.cpt_factor(v))
        .chain(extra.iter().cloned())
        .collect();
    for &(v, value) in evidence {
        for f in factors.iter_mut() {
            *f = f.reduce(v, value);
        }
    }
    let joint = eliminate(factors, vars, None);
    let total = joint.total();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroProbabilityEvidence);
    }
    Ok(joint.values.iter().map(|v| v / total).collect())
}

/// `P(target | evidence)`.
pub fn infer_conditional(
    params: &ParamInstantiation,
    target: usize,
    evidence: &[(usize, u32)],
) -> Result<Vec<f64>> {
    debug_assert!(evidence.iter().all(|&(v, _)| v != target));
    query(params, &[], &[target], evidence)
}

/// Joint marginal `P(vars)`; the empty set gives the scalar 1.
pub fn joint_marginal(params: &ParamInstantiation, vars: &[usize]) -> Vec<f64> {
    query(params, &[], vars, &[]).expect("a network without evidence has total mass one")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Admg;

    fn xy_net() -> ParamInstantiation {
        let dag = Admg::from_edges(&["X", "Y"], None, &[("X", "Y")], &[]).unwrap();
        ParamInstantiation::new(
            dag,
            vec![2, 3],
            vec![vec![0.3, 0.7], vec![0.2, 0.5, 0.3, 0.6, 0.1, 0.3]],
        )
        .unwrap()
    }

    #[test]
    fn conditional_on_parent_is_the_cpt_row() {
        let p = xy_net();
        let r = infer_conditional(&p, 1, &[(0, 1)]).unwrap();
        for (a, b) in r.iter().zip(&[0.6, 0.1, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn chain_marginal() {
        let p = xy_net();
        let r = infer_conditional(&p, 1, &[]).unwrap();
        let expected = [
            0.3 * 0.2 + 0.7 * 0.6,
            0.3 * 0.5 + 0.7 * 0.1,
            0.3 * 0.3 + 0.7 * 0.3,
        ];
        for (a, b) in r.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
        // posterior on the parent by Bayes' rule
        let post = infer_conditional(&p, 0, &[(1, 1)]).unwrap();
        let z = expected[1];
        assert!((post[0] - 0.3 * 0.5 / z).abs() < 1e-14);
    }

    #[test]
    fn empty_set_marginal_is_one() {
        assert_eq!(joint_marginal(&xy_net(), &[]), vec![1.0]);
    }

    #[test]
    fn independent_pair_is_outer_product() {
        let dag = Admg::empty(["A", "B"]);
        let p = ParamInstantiation::new(dag, vec![2, 2], vec![vec![0.25, 0.75], vec![0.4, 0.6]])
            .unwrap();
        let j = joint_marginal(&p, &[0, 1]);
        let expected = [0.1, 0.15, 0.3, 0.45];
        for (a, b) in j.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let swapped = joint_marginal(&p, &[1, 0]);
        assert!((swapped[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_evidence_is_flagged() {
        let dag = Admg::from_edges(&["A", "B"], None, &[("A", "B")], &[]).unwrap();
        let p = ParamInstantiation::new(
            dag,
            vec![2, 2],
            vec![vec![1.0, 0.0], vec![0.5, 0.5, 0.5, 0.5]],
        )
        .unwrap();
        assert!(matches!(
            infer_conditional(&p, 1, &[(0, 1)]),
            Err(Error::ZeroProbabilityEvidence)
        ));
    }

    #[test]
    fn factor_permute_round_trip() {
        let f = Factor::new(
            vec![3, 1, 2],
            vec![2, 3, 2],
            (0..12).map(|v| v as f64).collect(),
        );
        let g = f.permute(&[2, 3, 1]).permute(&[3, 1, 2]);
        assert_eq!(f, g);
    }
}
