//! Discrete Bayesian networks: structure learning, Dirichlet posteriors over
//! CPT parameters, sampling, and exact inference.
//!
//! CPT layout: for node `i` with sorted parents `p_1 < … < p_k`, entry
//! `cpt[config * |i| + state]` where `config` indexes the parent assignment
//! row-major (first parent most significant). Each contiguous block of `|i|`
//! entries is one conditional distribution.

mod inference;
mod structure;

pub use inference::{eliminate, infer_conditional, joint_marginal, query, Factor};
pub use structure::{
    bdeu_local_score, bdeu_score, is_local_maximum, learn_structure, StructureConfig,
};

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::CategoricalTable;
use crate::error::{Error, Result};
use crate::graph::{Admg, GraphJson};
use crate::seed::Rng;

/// Number of parent configurations of `node`.
pub fn parent_configs(dag: &Admg, cards: &[usize], node: usize) -> usize {
    dag.parents(node).iter().map(|&p| cards[p]).product()
}

/// Parent configuration index of `node` under a full assignment.
pub fn parent_config_index(dag: &Admg, cards: &[usize], node: usize, assignment: &[u32]) -> usize {
    dag.parents(node)
        .iter()
        .fold(0, |acc, &p| acc * cards[p] + assignment[p] as usize)
}

/// Draws one probability vector from `Dirichlet(alpha)`.
///
/// Works in log space so rows with tiny concentrations never collapse to an
/// all-zero vector.
pub fn sample_dirichlet(alpha: &[f64], rng: &mut Rng) -> Vec<f64> {
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a >= 1.0 {
                let g: f64 = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
                g.ln()
            } else {
                // Gamma(a) = Gamma(a + 1) * U^(1/a)
                let g: f64 = Gamma::new(a + 1.0, 1.0)
                    .expect("positive shape")
                    .sample(rng);
                let u: f64 = 1.0 - rng.random::<f64>();
                g.ln() + u.ln() / a
            }
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Where an instantiation's randomness came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master: u64,
    pub tags: Vec<u64>,
}

/// A fully parameterized network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamInstantiation {
    dag: Admg,
    cards: Vec<usize>,
    cpts: Vec<Vec<f64>>,
    lineage: Option<SeedLineage>,
}

impl ParamInstantiation {
    pub fn new(dag: Admg, cards: Vec<usize>, cpts: Vec<Vec<f64>>) -> Result<Self> {
        if !dag.bidirected_edges().is_empty() {
            return Err(Error::Validation(
                "a Bayesian network cannot have bidirected edges".into(),
            ));
        }
        if cards.len() != dag.n() || cpts.len() != dag.n() {
            return Err(Error::Validation(
                "cardinalities/CPTs do not match the graph".into(),
            ));
        }
        for v in 0..dag.n() {
            let k = cards[v];
            let expected = k * parent_configs(&dag, &cards, v);
            if cpts[v].len() != expected {
                return Err(Error::Validation(format!(
                    "CPT of `{}` has {} entries, expected {expected}",
                    dag.name(v),
                    cpts[v].len()
                )));
            }
            for row in cpts[v].chunks(k) {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(0.0..=1.0 + 1e-12).contains(p)) || (sum - 1.0).abs() > 1e-9
                {
                    return Err(Error::Validation(format!(
                        "CPT row of `{}` is not a probability vector",
                        dag.name(v)
                    )));
                }
            }
        }
        Ok(Self {
            dag,
            cards,
            cpts,
            lineage: None,
        })
    }

    pub fn dag(&self) -> &Admg {
        &self.dag
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn n(&self) -> usize {
        self.dag.n()
    }

    pub fn names(&self) -> &[String] {
        self.dag.names()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.dag.index_of(name)
    }

    pub fn cpt(&self, v: usize) -> &[f64] {
        &self.cpts[v]
    }

    pub fn lineage(&self) -> Option<&SeedLineage> {
        self.lineage.as_ref()
    }

    pub fn with_lineage(mut self, lineage: SeedLineage) -> Self {
        self.lineage = Some(lineage);
        self
    }

    /// The CPT of `v` as a factor over `parents ++ [v]`.
    pub fn cpt_factor(&self, v: usize) -> Factor {
        let mut vars = self.dag.parents(v).to_vec();
        vars.push(v);
        let cards = vars.iter().map(|&u| self.cards[u]).collect();
        Factor::new(vars, cards, self.cpts[v].clone())
    }

    /// `P(v = state | parents as in assignment)`.
    pub fn prob(&self, v: usize, assignment: &[u32]) -> f64 {
        let cfg = parent_config_index(&self.dag, &self.cards, v, assignment);
        self.cpts[v][cfg * self.cards[v] + assignment[v] as usize]
    }

    /// Probability of a full assignment.
    pub fn joint_prob(&self, assignment: &[u32]) -> f64 {
        (0..self.n()).map(|v| self.prob(v, assignment)).product()
    }

    /// Ancestral sample of every node.
    pub fn forward_sample(&self, order: &[usize], rng: &mut Rng, out: &mut [u32]) {
        for &v in order {
            let cfg = parent_config_index(&self.dag, &self.cards, v, out);
            let k = self.cards[v];
            let row = &self.cpts[v][cfg * k..(cfg + 1) * k];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut state = k - 1;
            for (s, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    state = s;
                    break;
                }
            }
            out[v] = state as u32;
        }
    }

    /// The network after `do(x = value)`: incoming edges of `x` removed and
    /// its CPT replaced by a point mass.
    pub fn mutilate(&self, x: usize, value: u32) -> ParamInstantiation {
        let mut dag = self.dag.clone();
        for p in self.dag.parents(x).to_vec() {
            dag.remove_directed(p, x);
        }
        let mut cpts = self.cpts.clone();
        let mut point = vec![0.0; self.cards[x]];
        point[value as usize] = 1.0;
        cpts[x] = point;
        ParamInstantiation {
            dag,
            cards: self.cards.clone(),
            cpts,
            lineage: self.lineage.clone(),
        }
    }

    pub fn to_json(&self) -> ParamsJson {
        ParamsJson {
            dag: self.dag.to_json(),
            cardinalities: self.cards.clone(),
            cpts: self.cpts.clone(),
            lineage: self.lineage.clone(),
        }
    }

    pub fn from_json(json: &ParamsJson) -> Result<Self> {
        let dag = Admg::from_json(&json.dag)?;
        let mut p = Self::new(dag, json.cardinalities.clone(), json.cpts.clone())?;
        p.lineage = json.lineage.clone();
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsJson {
    pub dag: GraphJson,
    pub cardinalities: Vec<usize>,
    pub cpts: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage: Option<SeedLineage>,
}

/// A DAG with an independent Dirichlet posterior on every CPT row.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesNetPosterior {
    dag: Admg,
    cards: Vec<usize>,
    ess: f64,
    pseudo_counts: Vec<Vec<f64>>,
}

/// BDeu prior plus observed counts for every CPT row of `dag`.
///
/// The DAG's nodes must be the table's variables, in the same order.
pub fn fit_posterior(dag: &Admg, table: &CategoricalTable, ess: f64) -> Result<BayesNetPosterior> {
    if dag.names() != table.names() {
        return Err(Error::Validation(
            "network nodes must match the table's variables".into(),
        ));
    }
    if !(ess > 0.0) {
        return Err(Error::Validation(
            "equivalent sample size must be positive".into(),
        ));
    }
    let cards = table.cardinalities().to_vec();
    let pseudo_counts = (0..dag.n())
        .map(|v| {
            let mut vars = dag.parents(v).to_vec();
            vars.push(v);
            let counts = table.counts(&vars);
            let q = parent_configs(dag, &cards, v);
            let prior = ess / (cards[v] * q) as f64;
            counts.counts.iter().map(|&c| prior + c as f64).collect()
        })
        .collect();
    Ok(BayesNetPosterior {
        dag: dag.clone(),
        cards,
        ess,
        pseudo_counts,
    })
}

impl BayesNetPosterior {
    /// Posterior from explicit pseudo-count tensors (same layout as CPTs).
    pub fn from_pseudo_counts(
        dag: Admg,
        cards: Vec<usize>,
        pseudo_counts: Vec<Vec<f64>>,
        ess: f64,
    ) -> Result<Self> {
        if cards.len() != dag.n() || pseudo_counts.len() != dag.n() {
            return Err(Error::Validation(
                "pseudo-counts do not match the graph".into(),
            ));
        }
        for v in 0..dag.n() {
            let expected = cards[v] * parent_configs(&dag, &cards, v);
            if pseudo_counts[v].len() != expected {
                return Err(Error::Validation(format!(
                    "pseudo-count tensor of `{}` has {} entries, expected {expected}",
                    dag.name(v),
                    pseudo_counts[v].len()
                )));
            }
            if pseudo_counts[v]
                .iter()
                .any(|&a| !(a > 0.0) || !a.is_finite())
            {
                return Err(Error::Validation(format!(
                    "pseudo-counts of `{}` must be strictly positive and finite",
                    dag.name(v)
                )));
            }
        }
        Ok(Self {
            dag,
            cards,
            ess,
            pseudo_counts,
        })
    }

    pub fn dag(&self) -> &Admg {
        &self.dag
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    pub fn pseudo_counts(&self, v: usize) -> &[f64] {
        &self.pseudo_counts[v]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.dag.index_of(name)
    }

    /// One draw of every CPT row from its Dirichlet posterior.
    pub fn sample(&self, rng: &mut Rng) -> ParamInstantiation {
        let cpts = (0..self.dag.n())
            .map(|v| {
                self.pseudo_counts[v]
                    .chunks(self.cards[v])
                    .flat_map(|alpha| sample_dirichlet(alpha, rng))
                    .collect()
            })
            .collect();
        ParamInstantiation {
            dag: self.dag.clone(),
            cards: self.cards.clone(),
            cpts,
            lineage: None,
        }
    }

    pub fn posterior_mean(&self) -> ParamInstantiation {
        let cpts = (0..self.dag.n())
            .map(|v| {
                self.pseudo_counts[v]
                    .chunks(self.cards[v])
                    .flat_map(|alpha| {
                        let s: f64 = alpha.iter().sum();
                        alpha.iter().map(move |a| a / s)
                    })
                    .collect()
            })
            .collect();
        ParamInstantiation {
            dag: self.dag.clone(),
            cards: self.cards.clone(),
            cpts,
            lineage: None,
        }
    }

    pub fn to_json(&self) -> PosteriorJson {
        PosteriorJson {
            dag: self.dag.to_json(),
            cardinalities: self.cards.clone(),
            ess: self.ess,
            pseudo_counts: self.pseudo_counts.clone(),
        }
    }

    pub fn from_json(json: &PosteriorJson) -> Result<Self> {
        let dag = Admg::from_json(&json.dag)?;
        Self::from_pseudo_counts(
            dag,
            json.cardinalities.clone(),
            json.pseudo_counts.clone(),
            json.ess,
        )
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Sampling entry point with an explicit random stream.
pub fn sample_parameters(post: &BayesNetPosterior, rng: &mut Rng) -> ParamInstantiation {
    post.sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorJson {
    pub dag: GraphJson,
    pub cardinalities: Vec<usize>,
    pub ess: f64,
    pub pseudo_counts: Vec<Vec<f64>>,
}
