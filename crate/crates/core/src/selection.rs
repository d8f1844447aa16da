//! Selection-biased trial populations.
//!
//! Each reported covariate `V_i` gets an indicator `S_i` with
//! `P(S_i = 1 | v_i) = θ_i(v_i)`, and a unit enters the trial iff all
//! indicators fire. The `θ_i` are solved so the network's `P(V_i | S = 1)`
//! reproduces the reported marginals. Only ratios within each `θ_i` matter;
//! every vector is scaled so its maximum is 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bayesnet::{joint_marginal, query, Factor, ParamInstantiation, ParamsJson};
use crate::data::{CategoricalTable, ExperimentSummary, Population};
use crate::error::{Error, Result};
use crate::graph::{Admg, GraphJson};
use crate::score::{
    adjusted_id, assemble, check_inputs, enumerate_hypotheses, prepare, score_hypotheses, ArmModel,
    FasConfig, FasResult, Prepared,
};

/// Damping exponent of the multiplicative update.
const DAMPING: f64 = 0.5;
pub const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionBn {
    base: ParamInstantiation,
    selected: Vec<usize>,
    theta_s: Vec<Vec<f64>>,
    residual: f64,
    sweeps: usize,
    p_selected: f64,
}

/// Joint of the selected variables with the selection weights applied.
struct Lattice {
    cards: Vec<usize>,
    strides: Vec<usize>,
    joint: Vec<f64>,
}

impl Lattice {
    fn state(&self, cell: usize, i: usize) -> usize {
        (cell / self.strides[i]) % self.cards[i]
    }

    /// Per-variable marginals of `joint · ∏ θ` and the total mass.
    fn selected_marginals(&self, theta: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
        let mut marg: Vec<Vec<f64>> = self.cards.iter().map(|&k| vec![0.0; k]).collect();
        let mut total = 0.0;
        for (cell, &p) in self.joint.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut w = p;
            for (i, t) in theta.iter().enumerate() {
                w *= t[self.state(cell, i)];
            }
            if w == 0.0 {
                continue;
            }
            total += w;
            for (i, m) in marg.iter_mut().enumerate() {
                m[self.state(cell, i)] += w;
            }
        }
        if total > 0.0 {
            marg.iter_mut().flatten().for_each(|m| *m /= total);
        }
        (marg, total)
    }
}

fn scale_to_unit_max(t: &mut [f64]) {
    let max = t.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        t.iter_mut().for_each(|v| *v /= max);
    }
}

fn max_residual(marg: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    marg.iter()
        .zip(targets)
        .flat_map(|(m, t)| m.iter().zip(t).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

/// Solves the selection parameters for `marginals` (keyed by node name) with
/// every `θ` starting at 1.
pub fn build_selection_bn(
    params: &ParamInstantiation,
    marginals: &BTreeMap<String, Vec<f64>>,
    tol: f64,
) -> Result<SelectionBn> {
    build_selection_bn_from(params, marginals, tol, None)
}

/// As [`build_selection_bn`], starting from `init` (same keys as
/// `marginals`; entries must be positive where the target is).
pub fn build_selection_bn_from(
    params: &ParamInstantiation,
    marginals: &BTreeMap<String, Vec<f64>>,
    tol: f64,
    init: Option<&BTreeMap<String, Vec<f64>>>,
) -> Result<SelectionBn> {
    if marginals.is_empty() {
        return Err(Error::Validation(
            "no reported marginals to select on".into(),
        ));
    }
    let mut selected = Vec::with_capacity(marginals.len());
    let mut targets = Vec::with_capacity(marginals.len());
    for (name, probs) in marginals {
        let v = params.index_of(name)?;
        if probs.len() != params.cardinalities()[v] {
            return Err(Error::Validation(format!(
                "marginal of `{name}` has {} entries but the variable has {} categories",
                probs.len(),
                params.cardinalities()[v]
            )));
        }
        selected.push(v);
        targets.push(probs.clone());
    }
    let cards: Vec<usize> = selected
        .iter()
        .map(|&v| params.cardinalities()[v])
        .collect();
    let mut strides = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * cards[i + 1];
    }
    let lattice = Lattice {
        joint: joint_marginal(params, &selected),
        cards,
        strides,
    };
    let infeasible = |i: usize, c: usize, reason: &str| Error::InfeasibleSelection {
        variable: params.names()[selected[i]].clone(),
        category: c,
        reason: reason.into(),
    };

    let mut theta: Vec<Vec<f64>> = match init {
        None => lattice.cards.iter().map(|&k| vec![1.0; k]).collect(),
        Some(init) => marginals
            .keys()
            .zip(&lattice.cards)
            .map(|(name, &k)| match init.get(name) {
                Some(t) if t.len() == k && t.iter().all(|v| v.is_finite() && *v >= 0.0) => {
                    Ok(t.clone())
                }
                _ => Err(Error::Validation(format!(
                    "bad initial selection parameters for `{name}`"
                ))),
            })
            .collect::<Result<_>>()?,
    };
    let (obs_marg, _) = lattice.selected_marginals(&[]);
    for (i, target) in targets.iter().enumerate() {
        for (c, &t) in target.iter().enumerate() {
            if t > 0.0 && obs_marg[i][c] <= 0.0 {
                return Err(infeasible(
                    i,
                    c,
                    "reported mass on a category with no observational support",
                ));
            }
            if t == 0.0 {
                theta[i][c] = 0.0;
            } else if theta[i][c] <= 0.0 {
                theta[i][c] = 1.0;
            }
        }
        scale_to_unit_max(&mut theta[i]);
    }

    let mut sweeps = 0;
    loop {
        let (marg, total) = lattice.selected_marginals(&theta);
        if total <= 0.0 {
            return Err(infeasible(0, 0, "no unit can be selected"));
        }
        let residual = max_residual(&marg, &targets);
        if residual <= tol {
            return Ok(SelectionBn {
                base: params.clone(),
                selected,
                theta_s: theta,
                residual,
                sweeps,
                p_selected: total,
            });
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::SolverNoConvergence { sweeps, residual });
        }
        for i in 0..theta.len() {
            let (marg, _) = lattice.selected_marginals(&theta);
            for c in 0..theta[i].len() {
                let t = targets[i][c];
                if t == 0.0 {
                    continue;
                }
                if marg[i][c] <= 0.0 {
                    return Err(infeasible(
                        i,
                        c,
                        "other selection constraints exclude every unit in this category",
                    ));
                }
                theta[i][c] *= (t / marg[i][c]).powf(DAMPING);
            }
            scale_to_unit_max(&mut theta[i]);
        }
        sweeps += 1;
    }
}

impl SelectionBn {
    pub fn base(&self) -> &ParamInstantiation {
        &self.base
    }

    pub fn selected_vars(&self) -> &[usize] {
        &self.selected
    }

    /// `θ_i(v) = P(S_i = 1 | V_i = v)`, in `selected_vars` order.
    pub fn theta_s(&self) -> &[Vec<f64>] {
        &self.theta_s
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// `P(S = 1)` under the base parameters the solver ran on.
    pub fn p_selected(&self) -> f64 {
        self.p_selected
    }

    /// The indicators as unary factors over base-network nodes.
    pub fn factors(&self) -> Vec<Factor> {
        self.selected
            .iter()
            .zip(&self.theta_s)
            .map(|(&v, t)| Factor::unary(v, t.clone()))
            .collect()
    }

    /// `P(target | evidence, S = 1)`.
    pub fn selected_conditional(
        &self,
        target: usize,
        evidence: &[(usize, u32)],
    ) -> Result<Vec<f64>> {
        query(&self.base, &self.factors(), &[target], evidence)
    }

    /// Base DAG plus `V_i → S_i → S` for every selected variable.
    pub fn selection_dag(&self) -> Admg {
        let base = self.base.dag();
        let mut names: Vec<String> = base.names().to_vec();
        for &v in &self.selected {
            names.push(format!("S_{}", base.name(v)));
        }
        names.push("S".into());
        let n = base.n();
        let mut g = Admg::empty(names);
        for (a, b) in base.directed_edges() {
            g.add_directed(a, b).expect("base graph is acyclic");
        }
        let s = n + self.selected.len();
        for (i, &v) in self.selected.iter().enumerate() {
            g.add_directed(v, n + i).expect("indicator is a sink");
            g.add_directed(n + i, s)
                .expect("indicator feeds the conjunction");
        }
        g
    }

    pub fn report(&self) -> SelectionReport {
        let names = self.base.names();
        SelectionReport {
            base: self.base.to_json(),
            theta_s: self
                .selected
                .iter()
                .zip(&self.theta_s)
                .map(|(&v, t)| (names[v].clone(), t.clone()))
                .collect(),
            selected_marginals: self
                .selected
                .iter()
                .map(|&v| {
                    let m = self
                        .selected_conditional(v, &[])
                        .expect("selection has positive mass");
                    (names[v].clone(), m)
                })
                .collect(),
            residual: self.residual,
            sweeps: self.sweeps,
            p_selected: self.p_selected,
            selection_graph: self.selection_dag().to_json(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub base: ParamsJson,
    pub theta_s: BTreeMap<String, Vec<f64>>,
    pub selected_marginals: BTreeMap<String, Vec<f64>>,
    pub residual: f64,
    pub sweeps: usize,
    pub p_selected: f64,
    pub selection_graph: GraphJson,
}

/// Scores arms against `Σ_z P(Y | x, z, S=1) P(z | S=1)` and reports the
/// unselected adjustment formula as the estimate.
pub(crate) struct SelectedAdjustment {
    factors: Vec<Factor>,
}

impl SelectedAdjustment {
    /// Solves the selection parameters once, on the posterior mean.
    pub(crate) fn solve(
        exp: &ExperimentSummary,
        prep: &Prepared,
        config: &FasConfig,
    ) -> Result<Self> {
        let sbn = solve_on_posterior_mean(exp, prep, config)?;
        Ok(Self {
            factors: sbn.factors(),
        })
    }
}

fn solve_on_posterior_mean(
    exp: &ExperimentSummary,
    prep: &Prepared,
    config: &FasConfig,
) -> Result<SelectionBn> {
    build_selection_bn(
        &prep.post.posterior_mean(),
        &exp.marginals,
        config.selection_tol,
    )
}

impl ArmModel for SelectedAdjustment {
    fn thetas(
        &self,
        params: &ParamInstantiation,
        x: usize,
        x_value: u32,
        y: usize,
        z: &[usize],
    ) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let Some(scored) = adjusted_id(params, &self.factors, x, x_value, y, z)? else {
            return Ok(None);
        };
        Ok(adjusted_id(params, &[], x, x_value, y, z)?.map(|reported| (scored, reported)))
    }
}

/// The search for a trial run on a selected population. The network covers
/// the pool, `X`, `Y` and every reported covariate.
pub fn find_adjustment_set_selected(
    table: &CategoricalTable,
    exp: &ExperimentSummary,
    config: &FasConfig,
) -> Result<FasResult> {
    if exp.population != Population::Selected {
        return Err(Error::Validation(
            "experiment population is not `selected`".into(),
        ));
    }
    let (x, y) = check_inputs(table, exp, config)?;
    let extra = table.indices_of(&exp.marginals.keys().collect::<Vec<_>>())?;
    let prep = prepare(table, x, y, &extra, config)?;
    let model = SelectedAdjustment::solve(exp, &prep, config)?;
    let hypotheses = enumerate_hypotheses(prep.pool.len(), config.max_subset_size);
    let indices: Vec<usize> = (0..hypotheses.len()).collect();
    let scores = score_hypotheses(&model, &prep, table, exp, &hypotheses, &indices, config)?;
    Ok(assemble(table, exp, &prep, scores, config))
}

/// Learns the network over `X`, `Y` and the reported covariates and solves
/// the selection parameters on its posterior mean.
pub fn selection_check(
    table: &CategoricalTable,
    exp: &ExperimentSummary,
    config: &FasConfig,
) -> Result<SelectionBn> {
    let (x, y) = check_inputs(table, exp, config)?;
    if exp.marginals.is_empty() {
        return Err(Error::Validation(
            "no reported marginals to select on".into(),
        ));
    }
    let extra = table.indices_of(&exp.marginals.keys().collect::<Vec<_>>())?;
    let prep = crate::score::prepare_with_pool(table, x, y, Vec::new(), &extra, config)?;
    solve_on_posterior_mean(exp, &prep, config)
}
