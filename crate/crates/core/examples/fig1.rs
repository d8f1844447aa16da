//! Regenerates `data/fig1`: a drug `D`, adverse event `AE` and a single
//! confounder `C`. The search should return `{C}`.
//!
//! cargo run --example fig1 -- [out_dir]

use std::collections::BTreeMap;
use std::path::PathBuf;

use adjfas::bayesnet::ParamInstantiation;
use adjfas::graph::Admg;
use adjfas::sim::{sample_datasets, true_interventional, GroundTruth, SimConfig};

fn main() -> adjfas::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/fig1"));
    std::fs::create_dir_all(&out).map_err(|e| adjfas::Error::io(&out, e))?;

    let dag = Admg::from_edges(
        &["D", "AE", "C"],
        None,
        &[("C", "D"), ("C", "AE"), ("D", "AE")],
        &[],
    )?;
    // AE rows are indexed by (D, C) with D the most significant digit.
    let cpts = vec![
        vec![0.8, 0.2, 0.2, 0.8],
        vec![0.9, 0.1, 0.5, 0.5, 0.7, 0.3, 0.2, 0.8],
        vec![0.6, 0.4],
    ];
    let params = ParamInstantiation::new(dag.clone(), vec![2, 2, 2], cpts)?;
    let mut gt = GroundTruth {
        dag,
        params,
        x: 0,
        y: 1,
        selection: BTreeMap::new(),
        true_id: Vec::new(),
    };
    gt.true_id = (0..2)
        .map(|x| true_interventional(&gt, x))
        .collect::<adjfas::Result<_>>()?;

    let cfg = SimConfig {
        n_obs: 10_000,
        n_per_arm: 1_000,
        seed: 1,
        ..SimConfig::default()
    };
    let (table, mut exp) = sample_datasets(&gt, &cfg)?;
    exp.marginals.clear();
    table.write_csv(out.join("obs.csv"))?;
    exp.write_json(out.join("exp.json"))?;
    println!("P(AE=1 | do(D=0)) = {:.4}", gt.true_id[0][1]);
    println!("P(AE=1 | do(D=1)) = {:.4}", gt.true_id[1][1]);
    println!("wrote {}", out.display());
    Ok(())
}
