//! Random causal worlds with latent variables, datasets drawn from them, and
//! the benchmark comparing the search against simple baselines.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayesnet::{
    eliminate, fit_posterior, learn_structure, query, sample_dirichlet, Factor, ParamInstantiation,
    StructureConfig,
};
use crate::data::{Arm, CategoricalTable, ExperimentSummary, Population};
use crate::error::{Error, Result};
use crate::graph::Admg;
use crate::score::{
    adjusted_id, kl_from_scores, run_fas, ArmEstimate, EstimateSource, FasConfig, Hypothesis,
};
use crate::seed::{derive_seed, rng_from, Rng};

/// Largest joint state space [`true_interventional`] will enumerate.
pub const MAX_ENUMERATED_STATES: f64 = 1_594_323.0; // 3^13

/// Smallest `P(S = 1)` the trial sampler accepts.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

const TAG_WORLD: u64 = 10;
const TAG_SELECTION: u64 = 11;
const TAG_OBS: u64 = 12;
const TAG_ARM: u64 = 13;
const TAG_REPORTED: u64 = 14;
const TAG_REPLICATE: u64 = 15;
const TAG_METHOD: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorldMode {
    /// Random topological order (with `X` before `Y`).
    Random,
    /// Every covariate precedes `X`.
    Pretreatment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    None,
    /// Trial selected on covariates whose marginals are all reported.
    Observed,
    /// At least one selected covariate is missing from the report.
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_observed: usize,
    pub n_latent: usize,
    pub mean_in_degree: f64,
    pub min_card: usize,
    pub max_card: usize,
    pub n_obs: usize,
    pub n_per_arm: usize,
    pub mode: WorldMode,
    pub selection: SelectionMode,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_observed: 6,
            n_latent: 4,
            mean_in_degree: 2.0,
            min_card: 2,
            max_card: 3,
            n_obs: 10_000,
            n_per_arm: 500,
            mode: WorldMode::Random,
            selection: SelectionMode::None,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_card < 2 || self.max_card < self.min_card {
            return Err(Error::Validation(format!(
                "cardinality range {}..={} is invalid (need 2 <= min <= max)",
                self.min_card, self.max_card
            )));
        }
        if !(self.mean_in_degree >= 0.0 && self.mean_in_degree.is_finite()) {
            return Err(Error::Validation(
                "mean in-degree must be non-negative".into(),
            ));
        }
        if self.n_obs == 0 || self.n_per_arm == 0 {
            return Err(Error::Validation("sample sizes must be positive".into()));
        }
        if self.selection != SelectionMode::None && self.n_observed < 2 {
            return Err(Error::Validation(
                "selection needs at least two observed covariates".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Full graph over `X, Y, V1.., L1..` with latent nodes flagged.
    pub dag: Admg,
    pub params: ParamInstantiation,
    pub x: usize,
    pub y: usize,
    /// `P(S_i = 1 | v)` per selected covariate.
    pub selection: BTreeMap<String, Vec<f64>>,
    /// Exact `P(Y | do(X = x))` in the unselected population, per `x`.
    pub true_id: Vec<Vec<f64>>,
}

impl GroundTruth {
    /// Observed covariates that are not descendants of `X`.
    pub fn pretreatment_covariates(&self) -> Vec<usize> {
        let de = self.dag.descendants_mask(&[self.x]);
        (0..self.dag.n())
            .filter(|&v| v != self.x && v != self.y && self.dag.is_observed(v) && !de[v])
            .collect()
    }

    fn selection_factors(&self) -> Result<Vec<Factor>> {
        self.selection
            .iter()
            .map(|(name, t)| Ok(Factor::unary(self.dag.index_of(name)?, t.clone())))
            .collect()
    }

    /// Node indices of a hypothesis given by table column names.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<usize>> {
        self.dag.resolve(names)
    }

    /// Whether the hypothesis holds in this world: a set must satisfy the
    /// adjustment criterion, "no set" must mean none exists.
    pub fn is_valid(&self, h: &Hypothesis) -> bool {
        match h {
            Hypothesis::NotExists => !self.dag.adjustment_set_exists(self.x, self.y),
            Hypothesis::AdjustmentSet(z) => match self.resolve(z) {
                Ok(z) => self.dag.satisfies_adjustment_criterion(self.x, self.y, &z),
                Err(_) => false,
            },
        }
    }
}

fn node_names(n_observed: usize, n_latent: usize) -> Vec<String> {
    let mut names = vec!["X".to_string(), "Y".to_string()];
    names.extend((1..=n_observed).map(|i| format!("V{i}")));
    names.extend((1..=n_latent).map(|i| format!("L{i}")));
    names
}

fn draw_structure(cfg: &SimConfig, rng: &mut Rng) -> Admg {
    let n_cov = cfg.n_observed + cfg.n_latent;
    let n = n_cov + 2;
    let mut observed = vec![true; n];
    observed[2 + cfg.n_observed..]
        .iter_mut()
        .for_each(|o| *o = false);
    let mut covariates: Vec<usize> = (2..n).collect();
    covariates.shuffle(rng);
    let order: Vec<usize> = match cfg.mode {
        WorldMode::Pretreatment => covariates.into_iter().chain([0, 1]).collect(),
        WorldMode::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            let (px, py) = (
                order.iter().position(|&v| v == 0).unwrap(),
                order.iter().position(|&v| v == 1).unwrap(),
            );
            if px > py {
                order.swap(px, py);
            }
            order
        }
    };
    let p_edge = (2.0 * cfg.mean_in_degree / (n as f64 - 1.0)).min(1.0);
    let mut dag = Admg::empty(node_names(cfg.n_observed, cfg.n_latent))
        .with_observed(observed)
        .expect("flag count matches");
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p_edge {
                dag.add_directed(order[i], order[j])
                    .expect("edges follow the order");
            }
        }
    }
    dag
}

/// Draws a world: structure, `Dirichlet(1)` CPT rows, and (in selection
/// modes) the selection mechanism. Structures without a directed path from
/// `X` to `Y` are redrawn, as are selection worlds with fewer than two
/// pre-treatment covariates.
pub fn generate_world(cfg: &SimConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    for attempt in 0u64.. {
        let mut rng = rng_from(cfg.seed, &[TAG_WORLD, attempt]);
        let dag = draw_structure(cfg, &mut rng);
        if !dag.is_ancestor(0, 1) {
            continue;
        }
        let n = dag.n();
        let cards: Vec<usize> = (0..n)
            .map(|_| rng.random_range(cfg.min_card..=cfg.max_card))
            .collect();
        let cpts: Vec<Vec<f64>> = (0..n)
            .map(|v| {
                let k = cards[v];
                let q: usize = dag.parents(v).iter().map(|&p| cards[p]).product();
                (0..q)
                    .flat_map(|_| sample_dirichlet(&vec![1.0; k], &mut rng))
                    .collect()
            })
            .collect();
        let params = ParamInstantiation::new(dag.clone(), cards, cpts)?;
        let mut gt = GroundTruth {
            dag,
            params,
            x: 0,
            y: 1,
            selection: BTreeMap::new(),
            true_id: Vec::new(),
        };
        if cfg.selection != SelectionMode::None {
            let eligible = gt.pretreatment_covariates();
            if eligible.len() < 2 {
                continue;
            }
            let mut srng = rng_from(cfg.seed, &[TAG_SELECTION, attempt]);
            let k = srng.random_range(1..=2usize);
            let chosen: Vec<usize> = eligible.choose_multiple(&mut srng, k).copied().collect();
            for v in chosen {
                let theta = (0..gt.params.cardinalities()[v])
                    .map(|_| srng.random_range(0.2..1.0))
                    .collect();
                gt.selection.insert(gt.dag.name(v).to_string(), theta);
            }
        }
        gt.true_id = (0..gt.params.cardinalities()[0] as u32)
            .map(|x| true_interventional(&gt, x))
            .collect::<Result<_>>()?;
        return Ok(gt);
    }
    unreachable!("the attempt counter is unbounded")
}

/// Exact `P(Y | do(X = x_value))` by summing the mutilated joint over every
/// assignment.
pub fn true_interventional(gt: &GroundTruth, x_value: u32) -> Result<Vec<f64>> {
    let cards = gt.params.cardinalities();
    let states: f64 = cards.iter().map(|&k| k as f64).product();
    if states > MAX_ENUMERATED_STATES {
        return Err(Error::StateSpaceTooLarge(states));
    }
    let m = gt.params.mutilate(gt.x, x_value);
    let mut out = vec![0.0; cards[gt.y]];
    let mut a = vec![0u32; cards.len()];
    a[gt.x] = x_value;
    loop {
        out[a[gt.y] as usize] += m.joint_prob(&a);
        // odometer over every node except X
        let mut i = 0;
        loop {
            if i == a.len() {
                let s: f64 = out.iter().sum();
                return Ok(out.into_iter().map(|p| p / s).collect());
            }
            if i != gt.x {
                a[i] += 1;
                if (a[i] as usize) < cards[i] {
                    break;
                }
                a[i] = 0;
            }
            i += 1;
        }
    }
}

/// `P(S = 1)` in the unselected population.
pub fn acceptance_probability(gt: &GroundTruth) -> Result<f64> {
    if gt.selection.is_empty() {
        return Ok(1.0);
    }
    let mut factors: Vec<Factor> = (0..gt.params.n())
        .map(|v| gt.params.cpt_factor(v))
        .collect();
    factors.extend(gt.selection_factors()?);
    Ok(eliminate(factors, &[], None).values[0])
}

/// Observational table (latent columns dropped) and trial summary.
///
/// Trial units are drawn from the mutilated network and, under selection,
/// accepted with probability `∏ θ_i(v_i)`. Reported marginals are exact
/// `P(V_i | S = 1)` for a random set of pre-treatment covariates: a superset
/// of the selected ones in `observed` mode, missing at least one selected
/// covariate in `latent` mode.
pub fn sample_datasets(
    gt: &GroundTruth,
    cfg: &SimConfig,
) -> Result<(CategoricalTable, ExperimentSummary)> {
    let n = gt.dag.n();
    let order = gt.dag.topological_order();
    let observed = gt.dag.observed_nodes();

    let mut rng = rng_from(cfg.seed, &[TAG_OBS]);
    let mut a = vec![0u32; n];
    let mut cells = Vec::with_capacity(cfg.n_obs * observed.len());
    for _ in 0..cfg.n_obs {
        gt.params.forward_sample(&order, &mut rng, &mut a);
        cells.extend(observed.iter().map(|&v| a[v]));
    }
    let names: Vec<String> = observed
        .iter()
        .map(|&v| gt.dag.name(v).to_string())
        .collect();
    let obs_cards: Vec<usize> = observed
        .iter()
        .map(|&v| gt.params.cardinalities()[v])
        .collect();
    let table = CategoricalTable::from_cells(names, obs_cards, cells)?;

    let p_accept = acceptance_probability(gt)?;
    if p_accept < MIN_ACCEPTANCE {
        return Err(Error::PathologicalSelection(p_accept));
    }
    let selected: Vec<(usize, &Vec<f64>)> = gt
        .selection
        .iter()
        .map(|(name, t)| Ok((gt.dag.index_of(name)?, t)))
        .collect::<Result<_>>()?;
    let ky = gt.params.cardinalities()[gt.y];
    let mut arms = Vec::new();
    for x in 0..gt.params.cardinalities()[gt.x] as u32 {
        let m = gt.params.mutilate(gt.x, x);
        let morder = m.dag().topological_order();
        let mut rng = rng_from(cfg.seed, &[TAG_ARM, x as u64]);
        let mut counts = vec![0u64; ky];
        let mut accepted = 0;
        while accepted < cfg.n_per_arm {
            m.forward_sample(&morder, &mut rng, &mut a);
            let w: f64 = selected.iter().map(|(v, t)| t[a[*v] as usize]).product();
            if selected.is_empty() || rng.random::<f64>() < w {
                counts[a[gt.y] as usize] += 1;
                accepted += 1;
            }
        }
        arms.push(Arm::new(x, counts));
    }

    let reported = reported_covariates(gt, cfg)?;
    let sel_factors = gt.selection_factors()?;
    let mut marginals = BTreeMap::new();
    for v in reported {
        marginals.insert(
            gt.dag.name(v).to_string(),
            query(&gt.params, &sel_factors, &[v], &[])?,
        );
    }
    let population = match cfg.selection {
        SelectionMode::None => Population::Same,
        _ => Population::Selected,
    };
    let exp = ExperimentSummary::new(
        gt.dag.name(gt.x),
        gt.dag.name(gt.y),
        population,
        arms,
        marginals,
    )?;
    Ok((table, exp))
}

fn reported_covariates(gt: &GroundTruth, cfg: &SimConfig) -> Result<Vec<usize>> {
    let mut rng = rng_from(cfg.seed, &[TAG_REPORTED]);
    let eligible = gt.pretreatment_covariates();
    let selected: Vec<usize> = gt.dag.resolve(&gt.selection.keys().collect::<Vec<_>>())?;
    let mut excluded: Vec<usize> = Vec::new();
    if cfg.selection == SelectionMode::Latent {
        let k = rng.random_range(1..=selected.len());
        excluded = selected.choose_multiple(&mut rng, k).copied().collect();
        if eligible.iter().all(|v| excluded.contains(v)) {
            excluded.pop();
        }
    }
    let mut reported: Vec<usize> = eligible
        .iter()
        .copied()
        .filter(|v| !excluded.contains(v))
        .filter(|v| {
            (cfg.selection == SelectionMode::Observed && selected.contains(v))
                || rng.random::<bool>()
        })
        .collect();
    if reported.is_empty() {
        let pool: Vec<usize> = eligible
            .iter()
            .copied()
            .filter(|v| !excluded.contains(v))
            .collect();
        if let Some(&v) = pool.choose(&mut rng) {
            reported.push(v);
        }
    }
    if cfg.selection != SelectionMode::None && reported.is_empty() {
        return Err(Error::Validation(
            "no covariate is available to report".into(),
        ));
    }
    reported.sort_unstable();
    Ok(reported)
}

/// Mean absolute difference over arms and outcome categories.
pub fn delta_theta(est: &[ArmEstimate], true_id: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for arm in est {
        let truth = &true_id[arm.x as usize];
        for (p, t) in arm.probs.iter().zip(truth) {
            sum += (p - t).abs();
            n += 1;
        }
    }
    sum / n as f64
}

/// Observed causes of `X` or `Y`, minus `X`, `Y` and descendants of `X`.
pub fn vws_baseline(gt: &GroundTruth) -> Vec<usize> {
    let an = gt.dag.ancestors_mask(&[gt.x, gt.y]);
    let de = gt.dag.descendants_mask(&[gt.x]);
    (0..gt.dag.n())
        .filter(|&v| an[v] && !de[v] && v != gt.y && gt.dag.is_observed(v))
        .collect()
}

/// Plug-in adjustment estimate over `z` (table columns) using the posterior
/// mean of a network learned on `z ∪ {x, y}`.
pub fn adjustment_estimate(
    table: &CategoricalTable,
    x: usize,
    y: usize,
    z: &[usize],
    arms: &[u32],
    config: &FasConfig,
) -> Result<Vec<ArmEstimate>> {
    let mut vars: Vec<usize> = z.iter().copied().chain([x, y]).collect();
    vars.sort_unstable();
    let sub = table.select(&vars);
    let dag = learn_structure(
        &sub,
        &StructureConfig {
            ess: config.ess,
            max_parents: config.max_parents,
            restarts: config.restarts,
            seed: config.seed,
        },
    );
    let mean = fit_posterior(&dag, &sub, config.ess)?.posterior_mean();
    let pos = |v: usize| vars.iter().position(|&u| u == v).unwrap();
    let zn: Vec<usize> = z.iter().map(|&v| pos(v)).collect();
    arms.iter()
        .map(|&xv| {
            let probs = adjusted_id(&mean, &[], pos(x), xv, pos(y), &zn)?
                .ok_or(Error::DegenerateScore(1))?;
            Ok(ArmEstimate { x: xv, probs })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "FAS")]
    Fas,
    #[serde(rename = "KL")]
    Kl,
    #[serde(rename = "DEXP")]
    Dexp,
    #[serde(rename = "VWS")]
    Vws,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fas, Method::Kl, Method::Dexp, Method::Vws];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fas => "FAS",
            Method::Kl => "KL",
            Method::Dexp => "DEXP",
            Method::Vws => "VWS",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FAS" => Ok(Method::Fas),
            "KL" => Ok(Method::Kl),
            "DEXP" => Ok(Method::Dexp),
            "VWS" => Ok(Method::Vws),
            _ => Err(Error::Validation(format!(
                "unknown method `{s}` (expected FAS, KL, DEXP or VWS)"
            ))),
        }
    }
}

/// One method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub replicate: usize,
    pub method: Method,
    /// Chosen hypothesis; empty for the trial estimate.
    pub hypothesis: String,
    pub not_exists: bool,
    /// Missing when the method gives no estimate or failed.
    pub delta_theta: Option<f64>,
    pub valid: Option<bool>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub replicates: usize,
    pub estimates: usize,
    pub missing: usize,
    pub failed: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub not_exists: usize,
    pub not_exists_freq: f64,
    pub valid: usize,
    pub valid_freq: Option<f64>,
    pub mean_wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub sim: SimConfig,
    pub fas: FasConfig,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub rows: Vec<BenchmarkRow>,
    pub summaries: Vec<MethodSummary>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn summarize(method: Method, rows: &[BenchmarkRow]) -> MethodSummary {
    let rows: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.method == method).collect();
    let mut deltas: Vec<f64> = rows.iter().filter_map(|r| r.delta_theta).collect();
    deltas.sort_by(f64::total_cmp);
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let judged: Vec<bool> = rows.iter().filter_map(|r| r.valid).collect();
    let valid = judged.iter().filter(|&&v| v).count();
    let not_exists = rows.iter().filter(|r| r.not_exists).count();
    let n = rows.len();
    MethodSummary {
        method,
        replicates: n,
        estimates: deltas.len(),
        missing: n - deltas.len() - failed,
        failed,
        median: quantile(&deltas, 0.5),
        q1: quantile(&deltas, 0.25),
        q3: quantile(&deltas, 0.75),
        not_exists,
        not_exists_freq: if n == 0 {
            0.0
        } else {
            not_exists as f64 / n as f64
        },
        valid,
        valid_freq: (!judged.is_empty()).then(|| valid as f64 / judged.len() as f64),
        mean_wall_time_s: if n == 0 {
            0.0
        } else {
            rows.iter().map(|r| r.wall_time_s).sum::<f64>() / n as f64
        },
    }
}

fn row(replicate: usize, method: Method) -> BenchmarkRow {
    BenchmarkRow {
        replicate,
        method,
        hypothesis: String::new(),
        not_exists: false,
        delta_theta: None,
        valid: None,
        error: None,
        wall_time_s: 0.0,
    }
}

/// Runs every method on one replicate. Failures become rows with `error`.
pub fn run_replicate(
    sim: &SimConfig,
    fas: &FasConfig,
    methods: &[Method],
    replicate: usize,
) -> Vec<BenchmarkRow> {
    let started = Instant::now();
    let cfg = SimConfig {
        seed: derive_seed(sim.seed, &[TAG_REPLICATE, replicate as u64]),
        ..*sim
    };
    let fail = |e: &Error| -> Vec<BenchmarkRow> {
        methods
            .iter()
            .map(|&m| BenchmarkRow {
                error: Some(e.to_string()),
                ..row(replicate, m)
            })
            .collect()
    };
    let world = generate_world(&cfg).and_then(|gt| sample_datasets(&gt, &cfg).map(|d| (gt, d)));
    let (gt, (table, exp)) = match world {
        Ok(w) => w,
        Err(e) => return fail(&e),
    };
    let setup = started.elapsed().as_secs_f64();
    let fas_cfg = FasConfig {
        seed: derive_seed(cfg.seed, &[TAG_METHOD]),
        ..*fas
    };

    let mut fas_result = None;
    let mut fas_time = 0.0;
    if methods
        .iter()
        .any(|m| matches!(m, Method::Fas | Method::Kl))
    {
        let t = Instant::now();
        fas_result = Some(run_fas(&table, &exp, &fas_cfg));
        fas_time = t.elapsed().as_secs_f64();
    }
    methods
        .iter()
        .map(|&method| {
            let t = Instant::now();
            let mut r = row(replicate, method);
            match method {
                Method::Fas => match fas_result.as_ref().unwrap() {
                    Ok(res) => {
                        r.hypothesis = res.best.to_string();
                        r.not_exists = res.best.is_not_exists();
                        r.valid = Some(gt.is_valid(&res.best));
                        if res.estimate.source != EstimateSource::NotAvailable {
                            r.delta_theta = Some(delta_theta(&res.estimate.arms, &gt.true_id));
                        }
                    }
                    Err(e) => r.error = Some(e.to_string()),
                },
                Method::Kl => match fas_result.as_ref().unwrap() {
                    Ok(res) => {
                        let kl = kl_from_scores(res, &exp);
                        r.hypothesis = kl.best.to_string();
                        r.valid = Some(gt.is_valid(&kl.best));
                        r.delta_theta = Some(delta_theta(&kl.estimate, &gt.true_id));
                    }
                    Err(e) => r.error = Some(e.to_string()),
                },
                Method::Dexp => {
                    let est: Vec<ArmEstimate> = exp
                        .arms
                        .iter()
                        .map(|a| ArmEstimate {
                            x: a.x,
                            probs: a.empirical(),
                        })
                        .collect();
                    r.delta_theta = Some(delta_theta(&est, &gt.true_id));
                }
                Method::Vws => {
                    let z_gt = vws_baseline(&gt);
                    let names: Vec<String> =
                        z_gt.iter().map(|&v| gt.dag.name(v).to_string()).collect();
                    let h = Hypothesis::AdjustmentSet(names.clone());
                    r.hypothesis = h.to_string();
                    r.valid = Some(gt.is_valid(&h));
                    let xs: Vec<u32> = exp.arms.iter().map(|a| a.x).collect();
                    let est = table.indices_of(&names).and_then(|z| {
                        let (x, y) = (
                            table.index_of(&exp.treatment)?,
                            table.index_of(&exp.outcome)?,
                        );
                        adjustment_estimate(&table, x, y, &z, &xs, &fas_cfg)
                    });
                    match est {
                        Ok(est) => r.delta_theta = Some(delta_theta(&est, &gt.true_id)),
                        Err(e) => r.error = Some(e.to_string()),
                    }
                }
            }
            let own = t.elapsed().as_secs_f64();
            r.wall_time_s = setup
                + own
                + if matches!(method, Method::Fas | Method::Kl) {
                    fas_time
                } else {
                    0.0
                };
            r
        })
        .collect()
}

/// Runs `replicates` independent worlds in parallel. Rows are ordered by
/// replicate, then by method as given.
pub fn run_benchmark(
    sim: &SimConfig,
    fas: &FasConfig,
    replicates: usize,
    methods: &[Method],
) -> Result<BenchmarkReport> {
    sim.validate()?;
    fas.validate()?;
    if replicates == 0 {
        return Err(Error::Validation("replicates must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::Validation("no methods selected".into()));
    }
    let per_replicate: Vec<Vec<BenchmarkRow>> = (0..replicates)
        .into_par_iter()
        .map(|r| run_replicate(sim, fas, methods, r))
        .collect();
    let rows: Vec<BenchmarkRow> = per_replicate.into_iter().flatten().collect();
    let summaries = methods.iter().map(|&m| summarize(m, &rows)).collect();
    Ok(BenchmarkReport {
        sim: *sim,
        fas: *fas,
        replicates,
        methods: methods.to_vec(),
        rows,
        summaries,
    })
}

impl BenchmarkReport {
    /// One row per replicate and method. Timing is left out so the file is
    /// reproducible; it is in the JSON summary.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "replicate",
            "method",
            "hypothesis",
            "not_exists",
            "delta_theta",
            "valid",
            "error",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.replicate.to_string(),
                r.method.as_str().to_string(),
                r.hypothesis.clone(),
                r.not_exists.to_string(),
                r.delta_theta.map(|d| d.to_string()).unwrap_or_default(),
                r.valid.map(|v| v.to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Validation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}
