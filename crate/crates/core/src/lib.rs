//! Covariate adjustment-set discovery from observational data plus
//! summary-level experimental data.
//!
//! A candidate set `Z` is scored by how well the interventional distribution
//! it implies through the adjustment formula, computed from a Bayesian network
//! posterior learned on the observational table, predicts the per-arm outcome
//! counts of the experiment. A closed-form "no adjustment set exists"
//! hypothesis competes against every candidate. Trials run on a selected
//! population are handled by augmenting the network with per-variable
//! selection indicators fitted to the trial's reported covariate marginals.
//!
//! Module map:
//! - [`data`]: observational tables, experiment summaries, counting, G² tests
//! - [`graph`]: mixed graphs, m-separation, the adjustment criterion
//! - [`bayesnet`]: BDeu structure learning, Dirichlet posteriors, exact inference
//! - [`score`]: hypothesis scoring and the adjustment-set search
//! - [`selection`]: selection networks and the selection-aware search
//! - [`sim`]: ground-truth worlds, dataset simulation and benchmarking

pub mod bayesnet;
pub mod data;
pub mod error;
pub mod graph;
pub mod score;
pub mod seed;
pub mod selection;
pub mod sim;

pub use error::{Error, ErrorKind, Result};
