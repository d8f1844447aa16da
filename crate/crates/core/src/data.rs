//! Observational tables, experiment summaries and counting primitives.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Tolerance on the sum of a reported covariate marginal.
pub const MARGINAL_SUM_TOL: f64 = 1e-6;

/// A complete table of integer-coded discrete variables.
///
/// Codes in column `j` lie in `0..cardinalities[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoricalTable {
    names: Vec<String>,
    cardinalities: Vec<usize>,
    // row-major, `n_rows * names.len()`
    cells: Vec<u32>,
    n_rows: usize,
}

impl CategoricalTable {
    pub fn new(names: Vec<String>, cardinalities: Vec<usize>, rows: &[Vec<u32>]) -> Result<Self> {
        let width = names.len();
        let mut cells = Vec::with_capacity(rows.len() * width);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Parse {
                    row: r + 1,
                    column: String::from("*"),
                    message: format!("expected {width} cells, found {}", row.len()),
                });
            }
            cells.extend_from_slice(row);
        }
        Self::from_cells(names, cardinalities, cells)
    }

    /// Builds a table from row-major cells.
    pub fn from_cells(
        names: Vec<String>,
        cardinalities: Vec<usize>,
        cells: Vec<u32>,
    ) -> Result<Self> {
        let width = names.len();
        if cardinalities.len() != width {
            return Err(Error::Schema(format!(
                "{} variable names but {} cardinalities",
                width,
                cardinalities.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate variable name `{name}`")));
            }
        }
        if let Some(j) = cardinalities.iter().position(|&c| c == 0) {
            return Err(Error::Schema(format!(
                "variable `{}` has cardinality 0",
                names[j]
            )));
        }
        if width == 0 {
            if !cells.is_empty() {
                return Err(Error::Schema(
                    "cells given for a table without variables".into(),
                ));
            }
            return Ok(Self {
                names,
                cardinalities,
                cells,
                n_rows: 0,
            });
        }
        if cells.len() % width != 0 {
            return Err(Error::Schema(
                "cell count is not a multiple of the row width".into(),
            ));
        }
        for (i, &code) in cells.iter().enumerate() {
            let j = i % width;
            if code as usize >= cardinalities[j] {
                return Err(Error::Schema(format!(
                    "row {}: code {} of `{}` is not below its cardinality {}",
                    i / width + 1,
                    code,
                    names[j],
                    cardinalities[j]
                )));
            }
        }
        let n_rows = cells.len() / width;
        Ok(Self {
            names,
            cardinalities,
            cells,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.cardinalities[var]
    }

    pub fn name(&self, var: usize) -> &str {
        &self.names[var]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn indices_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.index_of(n.as_ref())).collect()
    }

    pub fn row(&self, r: usize) -> &[u32] {
        let w = self.n_vars();
        &self.cells[r * w..(r + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        let w = self.n_vars().max(1);
        self.cells.chunks(w)
    }

    /// Column subset in the given order.
    pub fn select(&self, vars: &[usize]) -> CategoricalTable {
        let names = vars.iter().map(|&v| self.names[v].clone()).collect();
        let cards = vars.iter().map(|&v| self.cardinalities[v]).collect();
        let mut cells = Vec::with_capacity(self.n_rows * vars.len());
        for row in self.rows() {
            cells.extend(vars.iter().map(|&v| row[v]));
        }
        CategoricalTable {
            names,
            cardinalities: cards,
            cells,
            n_rows: self.n_rows,
        }
    }

    /// Joint counts over `vars`, row-major in the given order.
    pub fn counts(&self, vars: &[usize]) -> CountTensor {
        let cards: Vec<usize> = vars.iter().map(|&v| self.cardinalities[v]).collect();
        let size: usize = cards.iter().product();
        let mut counts = vec![0u64; size];
        for row in self.rows().take(self.n_rows) {
            let mut idx = 0usize;
            for (&v, &c) in vars.iter().zip(&cards) {
                idx = idx * c + row[v] as usize;
            }
            counts[idx] += 1;
        }
        if vars.is_empty() {
            counts[0] = self.n_rows as u64;
        }
        CountTensor {
            vars: vars.to_vec(),
            cardinalities: cards,
            counts,
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.names.join(",");
        out.push('\n');
        for row in self.rows().take(self.n_rows) {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

/// Joint count tensor; cell order is row-major in `vars` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTensor {
    pub vars: Vec<usize>,
    pub cardinalities: Vec<usize>,
    pub counts: Vec<u64>,
}

impl CountTensor {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn get(&self, codes: &[u32]) -> u64 {
        let mut idx = 0usize;
        for (&code, &c) in codes.iter().zip(&self.cardinalities) {
            idx = idx * c + code as usize;
        }
        self.counts[idx]
    }
}

/// Reads an observational CSV: a header of variable names, then integer codes.
///
/// Without a schema each cardinality is inferred as the largest code plus one.
pub fn load_observational(
    path: impl AsRef<Path>,
    schema: Option<&[usize]>,
) -> Result<CategoricalTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_observational(&text, schema)
}

pub fn parse_observational(text: &str, schema: Option<&[usize]>) -> Result<CategoricalTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec?,
        None => {
            return Err(Error::Parse {
                row: 0,
                column: String::from("*"),
                message: "empty file: missing header row".into(),
            })
        }
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if names.iter().any(|n| n.is_empty()) {
        return Err(Error::Parse {
            row: 0,
            column: String::from("*"),
            message: "empty variable name in header".into(),
        });
    }
    let width = names.len();
    let mut cells = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != width {
            return Err(Error::Parse {
                row,
                column: String::from("*"),
                message: format!("expected {width} cells, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let code: u32 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                column: names[j].clone(),
                message: format!("`{cell}` is not a non-negative integer code"),
            })?;
            cells.push(code);
        }
    }
    let cards = match schema {
        Some(s) => {
            if s.len() != width {
                return Err(Error::Schema(format!(
                    "schema lists {} cardinalities for {} columns",
                    s.len(),
                    width
                )));
            }
            s.to_vec()
        }
        None => {
            let mut cards = vec![1usize; width];
            for (i, &code) in cells.iter().enumerate() {
                let j = i % width;
                cards[j] = cards[j].max(code as usize + 1);
            }
            cards
        }
    };
    CategoricalTable::from_cells(names, cards, cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    Same,
    Selected,
}

/// Outcome counts for one experimental arm `do(X = x)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arm {
    pub x: u32,
    /// `counts[y]` is the number of units with outcome `y`.
    pub counts: Vec<u64>,
}

impl Arm {
    pub fn new(x: u32, counts: Vec<u64>) -> Self {
        Self { x, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Empirical outcome frequencies; uniform when the arm is empty.
    pub fn empirical(&self) -> Vec<f64> {
        let n = self.total();
        if n == 0 {
            let k = self.counts.len() as f64;
            return vec![1.0 / k; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / n as f64).collect()
    }
}

#[derive(Debug, Deserialize)]
struct ArmRecord {
    x: u32,
    counts: Vec<u64>,
    #[serde(default)]
    total: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ExperimentRecord {
    treatment: String,
    outcome: String,
    population: Population,
    arms: Vec<ArmRecord>,
    #[serde(default)]
    marginals: BTreeMap<String, Vec<f64>>,
}

/// Summary-level experimental data plus reported covariate marginals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub treatment: String,
    pub outcome: String,
    pub population: Population,
    pub arms: Vec<Arm>,
    pub marginals: BTreeMap<String, Vec<f64>>,
}

impl ExperimentSummary {
    pub fn new(
        treatment: impl Into<String>,
        outcome: impl Into<String>,
        population: Population,
        arms: Vec<Arm>,
        marginals: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let exp = Self {
            treatment: treatment.into(),
            outcome: outcome.into(),
            population,
            arms,
            marginals,
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.treatment == self.outcome {
            return Err(Error::Validation(
                "treatment and outcome must differ".into(),
            ));
        }
        if self.arms.is_empty() {
            return Err(Error::Validation("experiment has no arms".into()));
        }
        let k = self.arms[0].counts.len();
        if k == 0 {
            return Err(Error::Validation("arm outcome counts are empty".into()));
        }
        let mut xs = HashSet::new();
        for arm in &self.arms {
            if !xs.insert(arm.x) {
                return Err(Error::Validation(format!("duplicate arm x = {}", arm.x)));
            }
            if arm.counts.len() != k {
                return Err(Error::Validation(format!(
                    "arm x = {} has {} outcome counts, expected {k}",
                    arm.x,
                    arm.counts.len()
                )));
            }
        }
        for (name, probs) in &self.marginals {
            if probs.is_empty() {
                return Err(Error::Validation(format!("marginal of `{name}` is empty")));
            }
            if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Validation(format!(
                    "marginal of `{name}` has a negative or non-finite entry"
                )));
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > MARGINAL_SUM_TOL {
                return Err(Error::Validation(format!(
                    "marginal of `{name}` sums to {sum}, not 1"
                )));
            }
            if name == &self.treatment || name == &self.outcome {
                return Err(Error::Validation(format!(
                    "reported marginal for `{name}` must be a covariate, not the treatment or outcome"
                )));
            }
        }
        if self.population == Population::Selected && self.marginals.is_empty() {
            return Err(Error::Validation(
                "population is `selected` but no covariate marginals are reported".into(),
            ));
        }
        Ok(())
    }

    pub fn outcome_cardinality(&self) -> usize {
        self.arms[0].counts.len()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json_string()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn load_experiment(path: impl AsRef<Path>) -> Result<ExperimentSummary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_experiment(&text)
}

pub fn parse_experiment(text: &str) -> Result<ExperimentSummary> {
    let rec: ExperimentRecord = serde_json::from_str(text)?;
    let mut arms = Vec::with_capacity(rec.arms.len());
    for a in rec.arms {
        let arm = Arm::new(a.x, a.counts);
        if let Some(total) = a.total {
            if total != arm.total() {
                return Err(Error::Validation(format!(
                    "arm x = {}: counts sum to {} but total is {total}",
                    arm.x,
                    arm.total()
                )));
            }
        }
        arms.push(arm);
    }
    ExperimentSummary::new(
        rec.treatment,
        rec.outcome,
        rec.population,
        arms,
        rec.marginals,
    )
}

/// Name-based form of [`CategoricalTable::counts`].
pub fn contingency_counts<S: AsRef<str>>(
    table: &CategoricalTable,
    vars: &[S],
) -> Result<CountTensor> {
    let idx = table.indices_of(vars)?;
    Ok(table.counts(&idx))
}

/// G² (likelihood-ratio) test of `a ⊥ b | cond`; returns the p-value.
///
/// Degrees of freedom are `(|a|-1)(|b|-1)∏|c|`. Empty strata add nothing to
/// the statistic.
pub fn g2_independence_test(table: &CategoricalTable, a: usize, b: usize, cond: &[usize]) -> f64 {
    assert_ne!(a, b, "G² test needs two distinct variables");
    debug_assert!(!cond.contains(&a) && !cond.contains(&b));
    let ra = table.cardinality(a);
    let rb = table.cardinality(b);
    let mut vars = cond.to_vec();
    vars.push(a);
    vars.push(b);
    let tensor = table.counts(&vars);
    let n_strata: usize = cond.iter().map(|&c| table.cardinality(c)).product();
    let cell = ra * rb;

    let mut g2 = 0.0;
    let mut row = vec![0u64; ra];
    let mut col = vec![0u64; rb];
    for s in 0..n_strata {
        let block = &tensor.counts[s * cell..(s + 1) * cell];
        let n: u64 = block.iter().sum();
        if n == 0 {
            continue;
        }
        row.iter_mut().for_each(|v| *v = 0);
        col.iter_mut().for_each(|v| *v = 0);
        for i in 0..ra {
            for j in 0..rb {
                let c = block[i * rb + j];
                row[i] += c;
                col[j] += c;
            }
        }
        for i in 0..ra {
            for j in 0..rb {
                let c = block[i * rb + j];
                if c > 0 {
                    let expected = row[i] as f64 * col[j] as f64 / n as f64;
                    g2 += 2.0 * c as f64 * (c as f64 / expected).ln();
                }
            }
        }
    }
    let df = ((ra - 1) * (rb - 1) * n_strata) as f64;
    if df == 0.0 || g2 <= 0.0 {
        return 1.0;
    }
    let chi2 = ChiSquared::new(df).expect("positive degrees of freedom");
    chi2.sf(g2).clamp(0.0, 1.0)
}
