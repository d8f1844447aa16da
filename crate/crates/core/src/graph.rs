//! Acyclic directed mixed graphs, m-separation and the adjustment criterion.
//!
//! A ground-truth model is usually a DAG whose latent variables are explicit
//! unobserved nodes; bidirected edges are supported for graphs where latent
//! confounding has already been projected out.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Admg {
    names: Vec<String>,
    observed: Vec<bool>,
    // all adjacency lists are kept sorted
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    spouses: Vec<Vec<usize>>,
}

fn insert_sorted(list: &mut Vec<usize>, v: usize) {
    if let Err(pos) = list.binary_search(&v) {
        list.insert(pos, v);
    }
}

fn remove_sorted(list: &mut Vec<usize>, v: usize) {
    if let Ok(pos) = list.binary_search(&v) {
        list.remove(pos);
    }
}

impl Admg {
    /// Graph without edges; every node observed.
    pub fn empty<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let n = names.len();
        Self {
            names,
            observed: vec![true; n],
            parents: vec![Vec::new(); n],
            children: vec![Vec::new(); n],
            spouses: vec![Vec::new(); n],
        }
    }

    pub fn with_observed(mut self, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != self.n() {
            return Err(Error::Validation(format!(
                "{} observed flags for {} nodes",
                observed.len(),
                self.n()
            )));
        }
        self.observed = observed;
        Ok(self)
    }

    pub fn from_edges<S: AsRef<str>>(
        names: &[S],
        observed: Option<Vec<bool>>,
        directed: &[(S, S)],
        bidirected: &[(S, S)],
    ) -> Result<Self> {
        let mut g = Admg::empty(names.iter().map(|s| s.as_ref().to_string()));
        let mut seen = std::collections::HashSet::new();
        for name in &g.names {
            if !seen.insert(name.clone()) {
                return Err(Error::Validation(format!("duplicate node `{name}`")));
            }
        }
        if let Some(obs) = observed {
            g = g.with_observed(obs)?;
        }
        for (a, b) in directed {
            let (a, b) = (g.index_of(a.as_ref())?, g.index_of(b.as_ref())?);
            g.add_directed(a, b)?;
        }
        for (a, b) in bidirected {
            let (a, b) = (g.index_of(a.as_ref())?, g.index_of(b.as_ref())?);
            g.add_bidirected(a, b)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn is_observed(&self, v: usize) -> bool {
        self.observed[v]
    }

    pub fn observed_flags(&self) -> &[bool] {
        &self.observed
    }

    pub fn observed_nodes(&self) -> Vec<usize> {
        (0..self.n()).filter(|&v| self.observed[v]).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn resolve<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.index_of(n.as_ref())).collect()
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn spouses(&self, v: usize) -> &[usize] {
        &self.spouses[v]
    }

    pub fn has_directed(&self, a: usize, b: usize) -> bool {
        self.children[a].binary_search(&b).is_ok()
    }

    pub fn has_bidirected(&self, a: usize, b: usize) -> bool {
        self.spouses[a].binary_search(&b).is_ok()
    }

    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        (0..self.n())
            .flat_map(|a| self.children[a].iter().map(move |&b| (a, b)))
            .collect()
    }

    pub fn bidirected_edges(&self) -> Vec<(usize, usize)> {
        (0..self.n())
            .flat_map(|a| {
                self.spouses[a]
                    .iter()
                    .filter(move |&&b| a < b)
                    .map(move |&b| (a, b))
            })
            .collect()
    }

    pub fn n_directed(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    /// Adds `a → b`, rejecting self-loops, duplicates and cycles.
    pub fn add_directed(&mut self, a: usize, b: usize) -> Result<()> {
        if a == b {
            return Err(Error::Validation(format!(
                "self-loop on `{}`",
                self.names[a]
            )));
        }
        if self.has_directed(a, b) {
            return Err(Error::Validation(format!(
                "duplicate edge {} -> {}",
                self.names[a], self.names[b]
            )));
        }
        if self.is_ancestor(b, a) {
            return Err(Error::Validation(format!(
                "edge {} -> {} would create a directed cycle",
                self.names[a], self.names[b]
            )));
        }
        insert_sorted(&mut self.children[a], b);
        insert_sorted(&mut self.parents[b], a);
        Ok(())
    }

    pub fn remove_directed(&mut self, a: usize, b: usize) {
        remove_sorted(&mut self.children[a], b);
        remove_sorted(&mut self.parents[b], a);
    }

    pub fn add_bidirected(&mut self, a: usize, b: usize) -> Result<()> {
        if a == b {
            return Err(Error::Validation(format!(
                "self-loop on `{}`",
                self.names[a]
            )));
        }
        if self.has_bidirected(a, b) {
            return Err(Error::Validation(format!(
                "duplicate edge {} <-> {}",
                self.names[a], self.names[b]
            )));
        }
        insert_sorted(&mut self.spouses[a], b);
        insert_sorted(&mut self.spouses[b], a);
        Ok(())
    }

    /// `a` is an ancestor of `b` (every node is its own ancestor).
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        self.ancestors_mask(&[b])[a]
    }

    /// `mask[v]` iff `v` is an ancestor of some seed (seeds included).
    pub fn ancestors_mask(&self, seeds: &[usize]) -> Vec<bool> {
        self.closure(seeds, &self.parents)
    }

    /// `mask[v]` iff `v` is a descendant of some seed (seeds included).
    pub fn descendants_mask(&self, seeds: &[usize]) -> Vec<bool> {
        self.closure(seeds, &self.children)
    }

    fn closure(&self, seeds: &[usize], next: &[Vec<usize>]) -> Vec<bool> {
        let mut mask = vec![false; self.n()];
        let mut stack: Vec<usize> = Vec::new();
        for &s in seeds {
            if !mask[s] {
                mask[s] = true;
                stack.push(s);
            }
        }
        while let Some(v) = stack.pop() {
            for &w in &next[v] {
                if !mask[w] {
                    mask[w] = true;
                    stack.push(w);
                }
            }
        }
        mask
    }

    pub fn topological_order(&self) -> Vec<usize> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.n()).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.n());
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        debug_assert_eq!(order.len(), self.n(), "directed part must be acyclic");
        order
    }

    /// True iff every path between `a` and `b` is blocked by `z`.
    ///
    /// Reachability over (node, arrived-through-arrowhead) states: a
    /// non-collider blocks when it is in `z`; a collider passes only when it is
    /// an ancestor of `z`. The three sets must be pairwise disjoint.
    pub fn m_separated(&self, a: &[usize], b: &[usize], z: &[usize]) -> bool {
        let n = self.n();
        let mut in_z = vec![false; n];
        for &v in z {
            in_z[v] = true;
        }
        let an_z = self.ancestors_mask(z);
        let mut target = vec![false; n];
        for &v in b {
            target[v] = true;
        }
        let mut seen = vec![[false; 2]; n];
        let mut queue = VecDeque::new();
        for &s in a {
            seen[s][0] = true;
            queue.push_back((s, false));
        }
        let mut visit = |queue: &mut VecDeque<(usize, bool)>, w: usize, head: bool| {
            let slot = &mut seen[w][head as usize];
            if !*slot {
                *slot = true;
                queue.push_back((w, head));
            }
        };
        while let Some((v, head)) = queue.pop_front() {
            if target[v] {
                return false;
            }
            if !head {
                if in_z[v] {
                    continue;
                }
                for &p in &self.parents[v] {
                    visit(&mut queue, p, false);
                }
                for &c in &self.children[v] {
                    visit(&mut queue, c, true);
                }
                for &s in &self.spouses[v] {
                    visit(&mut queue, s, true);
                }
            } else {
                if !in_z[v] {
                    for &c in &self.children[v] {
                        visit(&mut queue, c, true);
                    }
                }
                if an_z[v] {
                    for &p in &self.parents[v] {
                        visit(&mut queue, p, false);
                    }
                    for &s in &self.spouses[v] {
                        visit(&mut queue, s, true);
                    }
                }
            }
        }
        true
    }

    /// Nodes other than `x` lying on a directed path from `x` to `y`.
    pub fn causal_nodes(&self, x: usize, y: usize) -> Vec<usize> {
        let de = self.descendants_mask(&[x]);
        let an = self.ancestors_mask(&[y]);
        (0..self.n())
            .filter(|&v| v != x && de[v] && an[v])
            .collect()
    }

    /// Descendants of the causal nodes from `x` to `y`: no valid adjustment
    /// set may contain any of them.
    pub fn forbidden_set(&self, x: usize, y: usize) -> Vec<usize> {
        let cn = self.causal_nodes(x, y);
        let de = self.descendants_mask(&cn);
        (0..self.n()).filter(|&v| v != x && de[v]).collect()
    }

    /// Copy of the graph without the first edge of every proper causal path
    /// from `x` to `y`.
    pub fn proper_backdoor_graph(&self, x: usize, y: usize) -> Admg {
        let mut g = self.clone();
        let an_y = self.ancestors_mask(&[y]);
        for &c in &self.children[x] {
            if an_y[c] {
                g.remove_directed(x, c);
            }
        }
        g
    }

    /// Sound and complete adjustment criterion for the effect of `x` on `y`.
    ///
    /// Latent members of `z` make the set invalid: they cannot be measured.
    pub fn satisfies_adjustment_criterion(&self, x: usize, y: usize, z: &[usize]) -> bool {
        if z.iter().any(|&v| v == x || v == y || !self.observed[v]) {
            return false;
        }
        let forb = self.forbidden_set(x, y);
        if z.iter().any(|v| forb.contains(v)) {
            return false;
        }
        self.proper_backdoor_graph(x, y).m_separated(&[x], &[y], z)
    }

    /// The canonical candidate: observed ancestors of `{x, y}` that are not
    /// forbidden. Some observed adjustment set exists iff this one is valid.
    pub fn canonical_adjustment_set(&self, x: usize, y: usize) -> Vec<usize> {
        let an = self.ancestors_mask(&[x, y]);
        let forb = self.forbidden_set(x, y);
        (0..self.n())
            .filter(|&v| v != x && v != y && an[v] && self.observed[v] && !forb.contains(&v))
            .collect()
    }

    pub fn adjustment_set_exists(&self, x: usize, y: usize) -> bool {
        let z = self.canonical_adjustment_set(x, y);
        self.satisfies_adjustment_criterion(x, y, &z)
    }

    /// Marginalizes latent nodes into directed and bidirected edges among the
    /// observed nodes. Bidirected edges must not touch latent nodes.
    pub fn latent_projection(&self) -> Result<Admg> {
        let n = self.n();
        for (a, b) in self.bidirected_edges() {
            if !self.observed[a] || !self.observed[b] {
                return Err(Error::Validation(
                    "latent projection needs bidirected edges between observed nodes only".into(),
                ));
            }
        }
        let obs = self.observed_nodes();
        let mut new_index = vec![usize::MAX; n];
        for (i, &v) in obs.iter().enumerate() {
            new_index[v] = i;
        }
        // observed nodes reachable from `v` through latent-only intermediates
        let reach = |v: usize| -> Vec<usize> {
            let mut out = Vec::new();
            let mut seen = vec![false; n];
            let mut stack = self.children[v].clone();
            while let Some(w) = stack.pop() {
                if seen[w] {
                    continue;
                }
                seen[w] = true;
                if self.observed[w] {
                    out.push(w);
                } else {
                    stack.extend_from_slice(&self.children[w]);
                }
            }
            out.sort_unstable();
            out
        };
        let mut g = Admg::empty(obs.iter().map(|&v| self.names[v].clone()));
        for &a in &obs {
            for b in reach(a) {
                g.add_directed(new_index[a], new_index[b])?;
            }
        }
        for l in (0..n).filter(|&v| !self.observed[v]) {
            let r = reach(l);
            for i in 0..r.len() {
                for j in i + 1..r.len() {
                    let (a, b) = (new_index[r[i]], new_index[r[j]]);
                    if !g.has_bidirected(a, b) {
                        g.add_bidirected(a, b)?;
                    }
                }
            }
        }
        for (a, b) in self.bidirected_edges() {
            let (a, b) = (new_index[a], new_index[b]);
            if !g.has_bidirected(a, b) {
                g.add_bidirected(a, b)?;
            }
        }
        Ok(g)
    }

    pub fn to_json(&self) -> GraphJson {
        let pair = |(a, b): (usize, usize)| [self.names[a].clone(), self.names[b].clone()];
        GraphJson {
            nodes: self.names.clone(),
            observed: self.observed.clone(),
            directed: self.directed_edges().into_iter().map(pair).collect(),
            bidirected: self.bidirected_edges().into_iter().map(pair).collect(),
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self> {
        let observed = if json.observed.is_empty() {
            None
        } else {
            Some(json.observed.clone())
        };
        let directed: Vec<(&str, &str)> = json
            .directed
            .iter()
            .map(|[a, b]| (a.as_str(), b.as_str()))
            .collect();
        let bidirected: Vec<(&str, &str)> = json
            .bidirected
            .iter()
            .map(|[a, b]| (a.as_str(), b.as_str()))
            .collect();
        let names: Vec<&str> = json.nodes.iter().map(String::as_str).collect();
        Admg::from_edges(&names, observed, &directed, &bidirected)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let json: GraphJson = serde_json::from_str(&text)?;
        Admg::from_json(&json)
    }
}

/// On-disk graph format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<String>,
    #[serde(default)]
    pub observed: Vec<bool>,
    #[serde(default)]
    pub directed: Vec<[String; 2]>,
    #[serde(default)]
    pub bidirected: Vec<[String; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dag(names: &[&str], edges: &[(&str, &str)]) -> Admg {
        Admg::from_edges(names, None, edges, &[]).unwrap()
    }

    fn ids(g: &Admg, names: &[&str]) -> Vec<usize> {
        g.resolve(names).unwrap()
    }

    #[test]
    fn chain_and_collider() {
        let g = dag(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        assert!(g.m_separated(&[0], &[2], &[1]));
        assert!(!g.m_separated(&[0], &[2], &[]));

        let g = dag(&["A", "B", "C"], &[("A", "B"), ("C", "B")]);
        assert!(g.m_separated(&[0], &[2], &[]));
        assert!(!g.m_separated(&[0], &[2], &[1]));
    }

    #[test]
    fn collider_opened_by_descendant() {
        let g = dag(&["A", "B", "C", "D"], &[("A", "B"), ("C", "B"), ("B", "D")]);
        assert!(!g.m_separated(&[0], &[2], &[3]));
    }

    #[test]
    fn bidirected_edge_connects() {
        let g = Admg::from_edges(&["A", "B"], None, &[], &[("A", "B")]).unwrap();
        assert!(!g.m_separated(&[0], &[1], &[]));
        // A <-> B <-> C: B is a collider
        let g = Admg::from_edges(&["A", "B", "C"], None, &[], &[("A", "B"), ("B", "C")]).unwrap();
        assert!(g.m_separated(&[0], &[2], &[]));
        assert!(!g.m_separated(&[0], &[2], &[1]));
    }

    #[test]
    fn rejects_cycles_and_duplicates() {
        let mut g = dag(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        assert!(g.add_directed(2, 0).is_err());
        assert!(g.add_directed(0, 1).is_err());
        assert!(g.add_directed(1, 1).is_err());
        assert!(matches!(g.index_of("Q"), Err(Error::UnknownVariable(_))));
    }

    #[test]
    fn forbidden_sets() {
        let g = dag(&["X", "M", "Y"], &[("X", "M"), ("M", "Y")]);
        assert_eq!(g.forbidden_set(0, 2), ids(&g, &["M", "Y"]));

        let g = dag(&["X", "Y"], &[("X", "Y")]);
        assert_eq!(g.forbidden_set(0, 1), vec![1]);

        let g = dag(&["X", "M", "Y", "D"], &[("X", "M"), ("M", "Y"), ("M", "D")]);
        assert_eq!(g.forbidden_set(0, 2), ids(&g, &["M", "Y", "D"]));
    }

    fn fig1() -> (Admg, Admg, Admg) {
        let g1 = dag(&["C", "D", "AE"], &[("C", "D"), ("C", "AE"), ("D", "AE")]);
        let g2 = dag(&["C", "D", "AE"], &[("D", "C"), ("C", "AE"), ("D", "AE")]);
        let g3 = Admg::from_edges(
            &["C", "D", "AE", "L"],
            Some(vec![true, true, true, false]),
            &[
                ("C", "D"),
                ("C", "AE"),
                ("D", "AE"),
                ("L", "D"),
                ("L", "AE"),
            ],
            &[],
        )
        .unwrap();
        (g1, g2, g3)
    }

    #[test]
    fn confounded_drug_example() {
        let (g1, g2, g3) = fig1();
        let (c, d, ae) = (0, 1, 2);
        assert!(g1.satisfies_adjustment_criterion(d, ae, &[c]));
        assert!(!g1.satisfies_adjustment_criterion(d, ae, &[]));

        assert!(g2.satisfies_adjustment_criterion(d, ae, &[]));
        assert!(!g2.satisfies_adjustment_criterion(d, ae, &[c]));

        assert!(!g3.satisfies_adjustment_criterion(d, ae, &[]));
        assert!(!g3.satisfies_adjustment_criterion(d, ae, &[c]));
        assert!(!g3.satisfies_adjustment_criterion(d, ae, &[3]));
        assert!(!g3.adjustment_set_exists(d, ae));
        assert!(g1.adjustment_set_exists(d, ae));
    }

    #[test]
    fn m_bias() {
        let g = dag(
            &["X", "A", "M", "B", "Y"],
            &[("A", "X"), ("A", "M"), ("B", "M"), ("B", "Y"), ("X", "Y")],
        );
        let (x, y) = (0, 4);
        assert!(!g.satisfies_adjustment_criterion(x, y, &ids(&g, &["M"])));
        assert!(g.satisfies_adjustment_criterion(x, y, &[]));
        assert!(g.satisfies_adjustment_criterion(x, y, &ids(&g, &["A", "M"])));
    }

    #[test]
    fn projection_turns_latent_confounder_into_bidirected_edge() {
        let (_, _, g3) = fig1();
        let p = g3.latent_projection().unwrap();
        assert_eq!(p.n(), 3);
        assert!(p.has_bidirected(1, 2));
        assert_eq!(p.n_directed(), 3);
    }

    #[test]
    fn json_round_trip() {
        let (_, _, g3) = fig1();
        let back = Admg::from_json(&g3.to_json()).unwrap();
        assert_eq!(back, g3);
    }
}
