//! Scoring adjustment-set hypotheses against experimental arms and searching
//! for the best one.
//!
//! For a candidate set `Z` the likelihood of an arm `do(X = x)` is averaged
//! over parameter draws from the observational network posterior, where each
//! draw predicts the interventional outcome distribution through the
//! adjustment formula `Σ_z P(Y | x, z) P(z)`. The competing hypothesis that no
//! adjustment set exists scores each arm under a uniform Dirichlet prior.
//! Multinomial coefficients are dropped everywhere, so scores are comparable
//! only within one run.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bayesnet::{
    fit_posterior, learn_structure, query, BayesNetPosterior, Factor, ParamInstantiation,
    StructureConfig,
};
use crate::data::{g2_independence_test, Arm, CategoricalTable, ExperimentSummary, Population};
use crate::error::{Error, Result};
use crate::graph::GraphJson;
use crate::seed::{derive_seed, rng_from};

/// Scores closer than this (in log space) are ties.
pub const TIE_TOL: f64 = 1e-9;

/// Pools larger than this are refused unless a maximum subset size is set.
pub const MAX_FULL_POOL: usize = 16;

const TAG_STRUCTURE: u64 = 1;
const TAG_SCORE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// `Z` (listed in table column order) is an adjustment set.
    AdjustmentSet(Vec<String>),
    /// No adjustment set exists among the measured covariates.
    NotExists,
}

impl Hypothesis {
    pub fn set(&self) -> Option<&[String]> {
        match self {
            Hypothesis::AdjustmentSet(z) => Some(z),
            Hypothesis::NotExists => None,
        }
    }

    pub fn is_not_exists(&self) -> bool {
        matches!(self, Hypothesis::NotExists)
    }
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hypothesis::AdjustmentSet(z) => write!(f, "{{{}}}", z.join(",")),
            Hypothesis::NotExists => write!(f, "NOT_EXISTS"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FasConfig {
    /// Significance level of the marginal G² tests that build the pool.
    pub alpha: f64,
    /// Posterior draws per hypothesis and arm.
    pub niters: usize,
    /// BDeu equivalent sample size for structure learning and the posterior.
    pub ess: f64,
    pub seed: u64,
    /// Largest candidate subset to score; `None` scores all subsets.
    pub max_subset_size: Option<usize>,
    pub max_parents: usize,
    pub restarts: usize,
    /// Marginal residual accepted by the selection solver.
    pub selection_tol: f64,
}

impl Default for FasConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            niters: 100,
            ess: 1.0,
            seed: 0,
            max_subset_size: None,
            max_parents: 4,
            restarts: 5,
            selection_tol: 1e-6,
        }
    }
}

impl FasConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.niters == 0 {
            return Err(Error::Validation("niters must be at least 1".into()));
        }
        if !(self.ess > 0.0 && self.ess.is_finite()) {
            return Err(Error::Validation(format!(
                "ess must be positive, got {}",
                self.ess
            )));
        }
        if !(self.selection_tol > 0.0) {
            return Err(Error::Validation(
                "selection tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmScore {
    pub x: u32,
    /// `log P(D_x | D_obs, H)`, without the multinomial coefficient.
    pub log_marginal: f64,
    /// Posterior-mean interventional outcome distribution reported as the
    /// estimate; absent for "no set" under selection.
    pub id_estimate: Option<Vec<f64>>,
    /// Posterior-mean distribution the arm was scored against. Differs from
    /// `id_estimate` only under selection.
    pub predicted: Option<Vec<f64>>,
    pub degenerate_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisScore {
    pub hypothesis: Hypothesis,
    pub log_prior: f64,
    pub log_likelihood: f64,
    pub total: f64,
    pub arms: Vec<ArmScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    Adjustment,
    Experimental,
    NotAvailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEstimate {
    pub x: u32,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub source: EstimateSource,
    pub arms: Vec<ArmEstimate>,
}

impl Estimate {
    pub fn is_available(&self) -> bool {
        self.source != EstimateSource::NotAvailable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FasResult {
    pub treatment: String,
    pub outcome: String,
    pub population: Population,
    pub best: Hypothesis,
    pub estimate: Estimate,
    /// Hypotheses by decreasing total score, `best` first.
    pub ranked: Vec<HypothesisScore>,
    pub pool: Vec<String>,
    /// Learned observational network the scores were computed on.
    pub network: GraphJson,
    pub config: FasConfig,
}

impl FasResult {
    /// Best hypothesis after replacing the uniform prior by `log_prior`.
    pub fn best_under_prior(&self, log_prior: impl Fn(&Hypothesis) -> f64) -> Hypothesis {
        let mut scored: Vec<((usize, Vec<usize>), &HypothesisScore)> = self
            .ranked
            .iter()
            .map(|h| (self.canonical_index(&h.hypothesis), h))
            .collect();
        scored.sort_by(|a, b| a.0.cmp(&b.0));
        let totals: Vec<f64> = scored
            .iter()
            .map(|(_, h)| h.log_likelihood + log_prior(&h.hypothesis))
            .collect();
        scored[argmax_with_ties(&totals)].1.hypothesis.clone()
    }

    fn canonical_index(&self, h: &Hypothesis) -> (usize, Vec<usize>) {
        match h {
            Hypothesis::NotExists => (usize::MAX, Vec::new()),
            Hypothesis::AdjustmentSet(z) => (
                z.len(),
                z.iter()
                    .map(|v| self.pool.iter().position(|p| p == v).unwrap_or(usize::MAX))
                    .collect(),
            ),
        }
    }

    pub fn score_of(&self, h: &Hypothesis) -> Option<&HypothesisScore> {
        self.ranked.iter().find(|s| &s.hypothesis == h)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Index of the maximum, preferring earlier entries within [`TIE_TOL`].
fn argmax_with_ties(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] + TIE_TOL || (values[best] == f64::NEG_INFINITY && v > values[best]) {
            best = i;
        }
    }
    best
}

pub(crate) fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Variables marginally dependent (G² at level `alpha`) on both `x` and `y`,
/// in table order.
pub fn candidate_pool(table: &CategoricalTable, x: usize, y: usize, alpha: f64) -> Vec<usize> {
    assert_ne!(x, y);
    (0..table.n_vars())
        .filter(|&v| v != x && v != y)
        .filter(|&v| {
            g2_independence_test(table, v, x, &[]) < alpha
                && g2_independence_test(table, v, y, &[]) < alpha
        })
        .collect()
}

/// Uniform prior over every subset of the pool plus "no set".
pub fn prior_log_prob<S: AsRef<str>>(h: &Hypothesis, pool: &[S]) -> Result<f64> {
    if let Hypothesis::AdjustmentSet(z) = h {
        if let Some(v) = z
            .iter()
            .find(|v| !pool.iter().any(|p| p.as_ref() == v.as_str()))
        {
            return Err(Error::Validation(format!(
                "`{v}` is not in the candidate pool"
            )));
        }
    }
    Ok(-((pool.len() as f64).exp2() + 1.0).ln())
}

/// `log P(D_x | no adjustment set)`: Dirichlet(1)-multinomial evidence of the
/// arm's counts, `log Γ(K) + Σ_y log Γ(N_y + 1) − log Γ(N + K)`.
pub fn score_not_exists(arm: &Arm) -> f64 {
    let k = arm.counts.len() as f64;
    let n = arm.total() as f64;
    let mut s = ln_gamma(k) - ln_gamma(n + k);
    for &c in &arm.counts {
        s += ln_gamma(c as f64 + 1.0);
    }
    s
}

/// `Σ_z P(y | x = x_value, z) P(z)` computed from `P(z, x, y)`, optionally
/// under extra factors (selection indicators). `None` when some stratum with
/// `P(z) > 0` has `P(x_value, z) = 0`.
pub(crate) fn adjusted_id(
    params: &ParamInstantiation,
    extra: &[Factor],
    x: usize,
    x_value: u32,
    y: usize,
    z: &[usize],
) -> Result<Option<Vec<f64>>> {
    let mut vars = z.to_vec();
    vars.push(x);
    vars.push(y);
    let joint = match query(params, extra, &vars, &[]) {
        Ok(j) => j,
        Err(Error::ZeroProbabilityEvidence) => return Ok(None),
        Err(e) => return Err(e),
    };
    let kx = params.cardinalities()[x];
    let ky = params.cardinalities()[y];
    let block = kx * ky;
    let xv = x_value as usize;
    let mut theta = vec![0.0; ky];
    for zb in joint.chunks(block) {
        let pz: f64 = zb.iter().sum();
        if pz <= 0.0 {
            continue;
        }
        let row = &zb[xv * ky..(xv + 1) * ky];
        let pxz: f64 = row.iter().sum();
        if pxz <= 0.0 {
            return Ok(None);
        }
        for (t, r) in theta.iter_mut().zip(row) {
            *t += pz * r / pxz;
        }
    }
    let s: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|t| *t /= s);
    Ok(Some(theta))
}

/// How a parameter draw turns into arm predictions.
pub(crate) trait ArmModel: Sync {
    /// `(distribution the arm is scored against, distribution reported as
    /// the estimate)`, or `None` for a zero-probability stratum.
    fn thetas(
        &self,
        params: &ParamInstantiation,
        x: usize,
        x_value: u32,
        y: usize,
        z: &[usize],
    ) -> Result<Option<(Vec<f64>, Vec<f64>)>>;
}

pub(crate) struct PlainAdjustment;

impl ArmModel for PlainAdjustment {
    fn thetas(
        &self,
        params: &ParamInstantiation,
        x: usize,
        x_value: u32,
        y: usize,
        z: &[usize],
    ) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        Ok(adjusted_id(params, &[], x, x_value, y, z)?.map(|t| (t.clone(), t)))
    }
}

fn multinomial_log_kernel(counts: &[u64], theta: &[f64]) -> f64 {
    counts
        .iter()
        .zip(theta)
        .filter(|(&n, _)| n > 0)
        .map(|(&n, &t)| n as f64 * t.ln())
        .sum()
}

fn mean_of(sum: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    if n == 0 {
        return None;
    }
    let mut v: Vec<f64> = sum.into_iter().map(|s| s / n as f64).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= total);
    Some(v)
}

pub(crate) fn score_arm_with(
    model: &dyn ArmModel,
    post: &BayesNetPosterior,
    x: usize,
    y: usize,
    z: &[usize],
    arm: &Arm,
    niters: usize,
    seed: u64,
) -> Result<ArmScore> {
    let ky = post.cardinalities()[y];
    let mut lls = Vec::with_capacity(niters);
    let mut score_sum = vec![0.0; ky];
    let mut report_sum = vec![0.0; ky];
    let mut ok = 0usize;
    for it in 0..niters {
        let params = post.sample(&mut rng_from(seed, &[it as u64]));
        match model.thetas(&params, x, arm.x, y, z)? {
            Some((scored, reported)) => {
                lls.push(multinomial_log_kernel(&arm.counts, &scored));
                score_sum.iter_mut().zip(&scored).for_each(|(s, v)| *s += v);
                report_sum
                    .iter_mut()
                    .zip(&reported)
                    .for_each(|(s, v)| *s += v);
                ok += 1;
            }
            None => lls.push(f64::NEG_INFINITY),
        }
    }
    if ok == 0 {
        return Err(Error::DegenerateScore(niters));
    }
    let log_marginal = if arm.total() == 0 {
        0.0
    } else {
        logsumexp(&lls) - (niters as f64).ln()
    };
    Ok(ArmScore {
        x: arm.x,
        log_marginal,
        id_estimate: mean_of(report_sum, ok),
        predicted: mean_of(score_sum, ok),
        degenerate_iterations: niters - ok,
    })
}

/// Monte-Carlo `log P(D_x | D_obs, H_Z)` for one arm, with `x`, `y` and `z`
/// given as node indices of `post`'s network.
///
/// Iteration `i` draws its parameters from the stream `(seed, i)`, so the
/// result is a pure function of the inputs.
pub fn score_exp_arm(
    post: &BayesNetPosterior,
    x: usize,
    y: usize,
    z: &[usize],
    arm: &Arm,
    niters: usize,
    seed: u64,
) -> Result<ArmScore> {
    if niters == 0 {
        return Err(Error::Validation("niters must be at least 1".into()));
    }
    score_arm_with(&PlainAdjustment, post, x, y, z, arm, niters, seed)
}

/// Lexicographic `k`-subsets of `0..n`.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Subsets of `pool` by size then lexicographic position; "no set" last.
pub(crate) fn enumerate_hypotheses(
    pool_len: usize,
    max_size: Option<usize>,
) -> Vec<Option<Vec<usize>>> {
    let top = max_size.map_or(pool_len, |m| m.min(pool_len));
    let mut out: Vec<Option<Vec<usize>>> = (0..=top)
        .flat_map(|k| combinations(pool_len, k).into_iter().map(Some))
        .collect();
    out.push(None);
    out
}

/// Everything the scoring stage needs once the network is learned.
pub(crate) struct Prepared {
    pub pool: Vec<usize>,
    pub net_vars: Vec<usize>,
    pub x: usize,
    pub y: usize,
    pub post: BayesNetPosterior,
}

impl Prepared {
    /// Network index of table column `v`.
    pub fn net_index(&self, v: usize) -> usize {
        self.net_vars
            .iter()
            .position(|&u| u == v)
            .expect("variable is in the network")
    }
}

pub(crate) fn check_inputs(
    table: &CategoricalTable,
    exp: &ExperimentSummary,
    config: &FasConfig,
) -> Result<(usize, usize)> {
    config.validate()?;
    exp.validate()?;
    let x = table.index_of(&exp.treatment)?;
    let y = table.index_of(&exp.outcome)?;
    let ky = table.cardinality(y);
    if exp.outcome_cardinality() != ky {
        return Err(Error::Validation(format!(
            "arms report {} outcome categories but `{}` has {ky}",
            exp.outcome_cardinality(),
            exp.outcome
        )));
    }
    for arm in &exp.arms {
        if arm.x as usize >= table.cardinality(x) {
            return Err(Error::Validation(format!(
                "arm x = {} is not a category of `{}`",
                arm.x, exp.treatment
            )));
        }
    }
    for (name, probs) in &exp.marginals {
        let v = table.index_of(name)?;
        if probs.len() != table.cardinality(v) {
            return Err(Error::Validation(format!(
                "marginal of `{name}` has {} entries but the variable has {} categories",
                probs.len(),
                table.cardinality(v)
            )));
        }
    }
    if table.n_rows() == 0 {
        return Err(Error::Validation("observational table is empty".into()));
    }
    Ok((x, y))
}

/// Builds the pool, enforces the enumeration limit, and learns the network
/// over `pool ∪ {x, y} ∪ extra`.
pub(crate) fn prepare(
    table: &CategoricalTable,
    x: usize,
    y: usize,
    extra: &[usize],
    config: &FasConfig,
) -> Result<Prepared> {
    let pool = candidate_pool(table, x, y, config.alpha);
    if pool.len() > MAX_FULL_POOL && config.max_subset_size.is_none() {
        return Err(Error::EnumerationLimit {
            pool_size: pool.len(),
            max_pool: MAX_FULL_POOL,
        });
    }
    prepare_with_pool(table, x, y, pool, extra, config)
}

pub(crate) fn prepare_with_pool(
    table: &CategoricalTable,
    x: usize,
    y: usize,
    pool: Vec<usize>,
    extra: &[usize],
    config: &FasConfig,
) -> Result<Prepared> {
    let mut net_vars: Vec<usize> = pool
        .iter()
        .copied()
        .chain([x, y])
        .chain(extra.iter().copied())
        .collect();
    net_vars.sort_unstable();
    net_vars.dedup();
    let sub = table.select(&net_vars);
    let dag = learn_structure(
        &sub,
        &StructureConfig {
            ess: config.ess,
            max_parents: config.max_parents,
            restarts: config.restarts,
            seed: derive_seed(config.seed, &[TAG_STRUCTURE]),
        },
    );
    let post = fit_posterior(&dag, &sub, config.ess)?;
    let pos = |v: usize| net_vars.iter().position(|&u| u == v).unwrap();
    let (xn, yn) = (pos(x), pos(y));
    Ok(Prepared {
        pool,
        net_vars,
        x: xn,
        y: yn,
        post,
    })
}

/// Scores every hypothesis on every arm, in parallel; results follow the
/// order of `hypotheses`.
pub(crate) fn score_hypotheses(
    model: &dyn ArmModel,
    prep: &Prepared,
    table: &CategoricalTable,
    exp: &ExperimentSummary,
    hypotheses: &[Option<Vec<usize>>],
    indices: &[usize],
    config: &FasConfig,
) -> Result<Vec<HypothesisScore>> {
    let pool_names: Vec<&str> = prep.pool.iter().map(|&v| table.name(v)).collect();
    hypotheses
        .par_iter()
        .zip(indices.par_iter())
        .map(|(h, &hidx)| {
            let (hypothesis, arms) = match h {
                None => {
                    let arms = exp
                        .arms
                        .iter()
                        .map(|arm| {
                            let report = match exp.population {
                                Population::Same => Some(arm.empirical()),
                                Population::Selected => None,
                            };
                            ArmScore {
                                x: arm.x,
                                log_marginal: score_not_exists(arm),
                                id_estimate: report,
                                predicted: Some(arm.empirical()),
                                degenerate_iterations: 0,
                            }
                        })
                        .collect();
                    (Hypothesis::NotExists, arms)
                }
                Some(members) => {
                    let z_table: Vec<usize> = members.iter().map(|&i| prep.pool[i]).collect();
                    let z_net: Vec<usize> = z_table.iter().map(|&v| prep.net_index(v)).collect();
                    let arms = exp
                        .arms
                        .iter()
                        .enumerate()
                        .map(|(a, arm)| {
                            let seed =
                                derive_seed(config.seed, &[TAG_SCORE, hidx as u64, a as u64]);
                            score_arm_with(
                                model,
                                &prep.post,
                                prep.x,
                                prep.y,
                                &z_net,
                                arm,
                                config.niters,
                                seed,
                            )
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let names = z_table.iter().map(|&v| table.name(v).to_string()).collect();
                    (Hypothesis::AdjustmentSet(names), arms)
                }
            };
            let log_prior = prior_log_prob(&hypothesis, &pool_names)?;
            let log_likelihood: f64 = arms.iter().map(|a| a.log_marginal).sum();
            Ok(HypothesisScore {
                hypothesis,
                log_prior,
                log_likelihood,
                total: log_likelihood + log_prior,
                arms,
            })
        })
        .collect()
}

/// Picks the best hypothesis (scores in canonical order), ranks the rest and
/// attaches the estimate.
pub(crate) fn assemble(
    table: &CategoricalTable,
    exp: &ExperimentSummary,
    prep: &Prepared,
    scores: Vec<HypothesisScore>,
    config: &FasConfig,
) -> FasResult {
    let totals: Vec<f64> = scores.iter().map(|s| s.total).collect();
    let best_idx = argmax_with_ties(&totals);
    let best = scores[best_idx].hypothesis.clone();
    let estimate = match (&best, exp.population) {
        (Hypothesis::NotExists, Population::Selected) => Estimate {
            source: EstimateSource::NotAvailable,
            arms: Vec::new(),
        },
        (Hypothesis::NotExists, Population::Same) => Estimate {
            source: EstimateSource::Experimental,
            arms: exp
                .arms
                .iter()
                .map(|a| ArmEstimate {
                    x: a.x,
                    probs: a.empirical(),
                })
                .collect(),
        },
        (Hypothesis::AdjustmentSet(_), _) => Estimate {
            source: EstimateSource::Adjustment,
            arms: scores[best_idx]
                .arms
                .iter()
                .map(|a| ArmEstimate {
                    x: a.x,
                    probs: a
                        .id_estimate
                        .clone()
                        .expect("adjustment hypotheses always report an estimate"),
                })
                .collect(),
        },
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]).then(a.cmp(&b)));
    order.retain(|&i| i != best_idx);
    order.insert(0, best_idx);
    let mut slots: Vec<Option<HypothesisScore>> = scores.into_iter().map(Some).collect();
    let ranked = order
        .into_iter()
        .map(|i| slots[i].take().unwrap())
        .collect();

    let mut network = prep.post.dag().to_json();
    network.observed.clear();
    FasResult {
        treatment: exp.treatment.clone(),
        outcome: exp.outcome.clone(),
        population: exp.population,
        best,
        estimate,
        ranked,
        pool: prep
            .pool
            .iter()
            .map(|&v| table.name(v).to_string())
            .collect(),
        network,
        config: *config,
    }
}

/// Finds the most probable adjustment set when the experiment was run on the
/// same population as the observational data.
pub fn find_adjustment_set(
    table: &CategoricalTable,
    exp: &ExperimentSummary,
    config: &FasConfig,
) -> Result<FasResult> {
    if exp.population != Population::Same {
        return Err(Error::Validation(
            "experiment population is `selected`; use the selection-aware search".into(),
        ));
    }
    let (x, y) = check_inputs(table, exp, config)?;
    let prep = prepare(table, x, y, &[], config)?;
    let hypotheses = enumerate_hypotheses(prep.pool.len(), config.max_subset_size);
    let indices: Vec<usize> = (0..hypotheses.len()).collect();
    let scores = score_hypotheses(
        &PlainAdjustment,
        &prep,
        table,
        exp,
        &hypotheses,
        &indices,
        config,
    )?;
    Ok(assemble(table, exp, &prep, scores, config))
}

/// Dispatches on the experiment's population flag.
pub fn run_fas(
    table: &CategoricalTable,
    exp: &ExperimentSummary,
    config: &FasConfig,
) -> Result<FasResult> {
    match exp.population {
        Population::Same => find_adjustment_set(table, exp, config),
        Population::Selected => crate::selection::find_adjustment_set_selected(table, exp, config),
    }
}

/// Scores one named hypothesis with the same seeds the full search uses.
///
/// Sets reaching outside the candidate pool are scored on a network and prior
/// whose pool is extended by the set's members.
pub fn score_hypothesis(
    table: &CategoricalTable,
    exp: &ExperimentSummary,
    config: &FasConfig,
    hypothesis: &Hypothesis,
) -> Result<HypothesisScore> {
    let (x, y) = check_inputs(table, exp, config)?;
    let mut pool = candidate_pool(table, x, y, config.alpha);
    if let Hypothesis::AdjustmentSet(z) = hypothesis {
        for v in table.indices_of(z)? {
            if v == x || v == y {
                return Err(Error::Validation(
                    "an adjustment set cannot contain X or Y".into(),
                ));
            }
            if !pool.contains(&v) {
                pool.push(v);
            }
        }
        pool.sort_unstable();
    }
    let extra: Vec<usize> = match exp.population {
        Population::Same => Vec::new(),
        Population::Selected => table.indices_of(&exp.marginals.keys().collect::<Vec<_>>())?,
    };
    let prep = prepare_with_pool(table, x, y, pool, &extra, config)?;
    let all = enumerate_hypotheses(prep.pool.len(), None);
    let target: Option<Vec<usize>> = match hypothesis {
        Hypothesis::NotExists => None,
        Hypothesis::AdjustmentSet(z) => {
            let mut m: Vec<usize> = table
                .indices_of(z)?
                .into_iter()
                .map(|v| prep.pool.iter().position(|&p| p == v).unwrap())
                .collect();
            m.sort_unstable();
            m.dedup();
            Some(m)
        }
    };
    let hidx = all
        .iter()
        .position(|h| *h == target)
        .expect("hypothesis is enumerated");
    let mut scores = match exp.population {
        Population::Same => score_hypotheses(
            &PlainAdjustment,
            &prep,
            table,
            exp,
            &[target],
            &[hidx],
            config,
        )?,
        Population::Selected => {
            let model = crate::selection::SelectedAdjustment::solve(exp, &prep, config)?;
            score_hypotheses(&model, &prep, table, exp, &[target], &[hidx], config)?
        }
    };
    Ok(scores.remove(0))
}

/// Outcome of the KL-divergence baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlResult {
    pub best: Hypothesis,
    /// `Σ_x KL(empirical_x ‖ predicted_x)` per candidate set.
    pub divergences: BTreeMap<String, f64>,
    pub estimate: Vec<ArmEstimate>,
}

pub(crate) fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| {
            if qi > 0.0 {
                pi * (pi / qi).ln()
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// Baseline: the set whose predicted arm distributions are closest in KL to
/// the empirical ones. It never answers "no set".
pub fn kl_from_scores(result: &FasResult, exp: &ExperimentSummary) -> KlResult {
    let mut candidates: Vec<(&HypothesisScore, f64)> = result
        .ranked
        .iter()
        .filter(|h| !h.hypothesis.is_not_exists())
        .map(|h| {
            let kl: f64 = h
                .arms
                .iter()
                .zip(&exp.arms)
                .filter(|(_, arm)| arm.total() > 0)
                .map(|(a, arm)| kl_divergence(&arm.empirical(), a.predicted.as_deref().unwrap()))
                .sum();
            (h, kl)
        })
        .collect();
    // canonical order: by size, then by pool position
    let key = |h: &Hypothesis| -> (usize, Vec<usize>) {
        let z = h.set().unwrap();
        (
            z.len(),
            z.iter()
                .map(|v| {
                    result
                        .pool
                        .iter()
                        .position(|p| p == v)
                        .unwrap_or(usize::MAX)
                })
                .collect(),
        )
    };
    candidates.sort_by_key(|(h, _)| key(&h.hypothesis));
    let negated: Vec<f64> = candidates.iter().map(|(_, kl)| -kl).collect();
    let (best, _) = candidates[argmax_with_ties(&negated)];
    KlResult {
        best: best.hypothesis.clone(),
        divergences: candidates
            .iter()
            .map(|(h, kl)| (h.hypothesis.to_string(), *kl))
            .collect(),
        estimate: best
            .arms
            .iter()
            .map(|a| ArmEstimate {
                x: a.x,
                probs: a.id_estimate.clone().unwrap(),
            })
            .collect(),
    }
}

/// Runs the scoring stage and applies the KL baseline to it.
pub fn kl_select(
    table: &CategoricalTable,
    exp: &ExperimentSummary,
    config: &FasConfig,
) -> Result<KlResult> {
    let result = run_fas(table, exp, config)?;
    Ok(kl_from_scores(&result, exp))
}
