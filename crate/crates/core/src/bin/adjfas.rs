use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use adjfas::data::{load_experiment, load_observational, CategoricalTable, ExperimentSummary};
use adjfas::score::{run_fas, score_hypothesis, FasConfig, FasResult, Hypothesis};
use adjfas::selection::selection_check;
use adjfas::sim::{
    generate_world, run_benchmark, sample_datasets, BenchmarkReport, Method, SelectionMode,
    SimConfig, WorldMode,
};
use adjfas::{Error, ErrorKind};

/// Find covariate adjustment sets from observational data and experimental
/// summaries.
///
/// Exit codes: 0 success, 1 other failure, 2 invalid input, 3 infeasible
/// selection, 4 candidate pool too large to enumerate.
#[derive(Parser, Debug)]
#[command(name = "adjfas", version)]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "ADJFAS_THREADS", default_value_t = 0)]
    threads: usize,

    /// Output file (fas, score, selection-check) or directory (simulate,
    /// benchmark). Reports go to stdout when no file is given.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Monte-Carlo posterior draws per hypothesis and arm.
    #[arg(long, global = true, default_value_t = 100)]
    niters: usize,

    /// Significance level of the candidate-pool tests.
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,

    /// BDeu equivalent sample size.
    #[arg(long, global = true, default_value_t = 1.0)]
    ess: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score every candidate set and report the best one.
    Fas {
        /// Observational data (CSV of integer category codes).
        obs: PathBuf,
        /// Experimental summary (JSON).
        exp: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Score a single hypothesis.
    Score {
        obs: PathBuf,
        exp: PathBuf,
        /// Comma-separated adjustment set; give the flag with no value for
        /// the empty set.
        #[arg(long, value_delimiter = ',', num_args = 0.., conflicts_with = "not_exists", required_unless_present = "not_exists")]
        set: Option<Vec<String>>,
        /// Score the hypothesis that no adjustment set exists.
        #[arg(long)]
        not_exists: bool,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Solve the selection model for a selected trial population.
    SelectionCheck {
        obs: PathBuf,
        exp: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Generate a random world and datasets drawn from it.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Compare the search with baselines over random worlds.
    Benchmark {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 50)]
        replicates: usize,
        /// Methods to run: FAS, KL, DEXP, VWS.
        #[arg(long, value_delimiter = ',', default_value = "FAS,KL,DEXP,VWS")]
        methods: Vec<Method>,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Args, Debug, Clone)]
struct SearchArgs {
    /// Largest candidate subset to score (required for pools over 16).
    #[arg(long)]
    max_subset_size: Option<usize>,
    /// Parent limit for structure learning.
    #[arg(long, default_value_t = 4)]
    max_parents: usize,
    /// Hill-climbing restarts.
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    /// Marginal tolerance of the selection solver.
    #[arg(long, default_value_t = 1e-6)]
    selection_tol: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Random,
    Pretreatment,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SelectionArg {
    None,
    Observed,
    Latent,
}

#[derive(Args, Debug, Clone)]
struct SimArgs {
    #[arg(long, default_value_t = 6)]
    n_observed: usize,
    #[arg(long, default_value_t = 4)]
    n_latent: usize,
    #[arg(long, default_value_t = 2.0)]
    mean_in_degree: f64,
    #[arg(long, default_value_t = 2)]
    min_card: usize,
    #[arg(long, default_value_t = 3)]
    max_card: usize,
    /// Observational sample size.
    #[arg(long, default_value_t = 10_000)]
    n_obs: usize,
    /// Trial units per arm.
    #[arg(long, default_value_t = 500)]
    n_per_arm: usize,
    #[arg(long, value_enum, default_value = "random")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "none")]
    selection: SelectionArg,
}

impl SimArgs {
    fn config(&self, seed: u64) -> SimConfig {
        SimConfig {
            n_observed: self.n_observed,
            n_latent: self.n_latent,
            mean_in_degree: self.mean_in_degree,
            min_card: self.min_card,
            max_card: self.max_card,
            n_obs: self.n_obs,
            n_per_arm: self.n_per_arm,
            mode: match self.mode {
                ModeArg::Random => WorldMode::Random,
                ModeArg::Pretreatment => WorldMode::Pretreatment,
            },
            selection: match self.selection {
                SelectionArg::None => SelectionMode::None,
                SelectionArg::Observed => SelectionMode::Observed,
                SelectionArg::Latent => SelectionMode::Latent,
            },
            seed,
        }
    }
}

impl Cli {
    fn fas_config(&self, search: &SearchArgs) -> FasConfig {
        FasConfig {
            alpha: self.alpha,
            niters: self.niters,
            ess: self.ess,
            seed: self.seed,
            max_subset_size: search.max_subset_size,
            max_parents: search.max_parents,
            restarts: search.restarts,
            selection_tol: search.selection_tol,
        }
    }
}

fn load_inputs(obs: &Path, exp: &Path) -> adjfas::Result<(CategoricalTable, ExperimentSummary)> {
    Ok((load_observational(obs, None)?, load_experiment(exp)?))
}

fn write_text(path: &Path, text: &str) -> adjfas::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// JSON to `--out` (with the human summary on stdout), or JSON to stdout
/// (with the summary on stderr).
fn emit<T: Serialize>(out: Option<&Path>, value: &T, summary: &str) -> adjfas::Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    match out {
        Some(path) => {
            write_text(path, &json)?;
            print!("{summary}");
        }
        None => {
            eprint!("{summary}");
            print!("{json}");
        }
    }
    Ok(())
}

fn fmt_probs(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fas_summary(res: &FasResult) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "treatment {}  outcome {}  population {:?}\n",
        res.treatment, res.outcome, res.population
    ));
    s.push_str(&format!("candidate pool: {{{}}}\n", res.pool.join(",")));
    s.push_str(&format!(
        "{:>4}  {:<24} {:>14} {:>14}\n",
        "rank", "hypothesis", "log score", "log lik"
    ));
    for (i, h) in res.ranked.iter().take(10).enumerate() {
        s.push_str(&format!(
            "{:>4}  {:<24} {:>14.4} {:>14.4}\n",
            i + 1,
            h.hypothesis.to_string(),
            h.total,
            h.log_likelihood
        ));
    }
    if res.ranked.len() > 10 {
        s.push_str(&format!("      ... {} more\n", res.ranked.len() - 10));
    }
    s.push_str(&format!("best: {}\n", res.best));
    if res.estimate.arms.is_empty() {
        s.push_str("estimate: N/A\n");
    }
    for a in &res.estimate.arms {
        s.push_str(&format!(
            "P({} | do({} = {})) = {}  [{:?}]\n",
            res.outcome,
            res.treatment,
            a.x,
            fmt_probs(&a.probs),
            res.estimate.source
        ));
    }
    s
}

fn benchmark_summary(report: &BenchmarkReport) -> String {
    let mut s = format!(
        "{:<6} {:>6} {:>10} {:>10} {:>10} {:>8} {:>8} {:>7}\n",
        "method", "n", "median", "q1", "q3", "H_none", "valid", "failed"
    );
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for m in &report.summaries {
        s.push_str(&format!(
            "{:<6} {:>6} {:>10} {:>10} {:>10} {:>8} {:>8} {:>7}\n",
            m.method.as_str(),
            m.estimates,
            f(m.median),
            f(m.q1),
            f(m.q3),
            m.not_exists,
            m.valid_freq
                .map_or("-".to_string(), |v| format!("{:.0}%", 100.0 * v)),
            m.failed
        ));
    }
    s
}

fn run(cli: &Cli) -> adjfas::Result<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Fas { obs, exp, search } => {
            let (table, exp) = load_inputs(obs, exp)?;
            let res = run_fas(&table, &exp, &cli.fas_config(search))?;
            emit(out, &res, &fas_summary(&res))
        }
        Command::Score {
            obs,
            exp,
            set,
            not_exists,
            search,
        } => {
            let (table, exp) = load_inputs(obs, exp)?;
            let h = if *not_exists {
                Hypothesis::NotExists
            } else {
                let mut names: Vec<String> = set
                    .clone()
                    .unwrap_or_default()
                    .into_iter()
                    .filter(|s| !s.is_empty())
                    .collect();
                let idx = table.indices_of(&names)?;
                let mut pairs: Vec<(usize, String)> =
                    idx.into_iter().zip(names.drain(..)).collect();
                pairs.sort();
                pairs.dedup();
                Hypothesis::AdjustmentSet(pairs.into_iter().map(|(_, n)| n).collect())
            };
            let score = score_hypothesis(&table, &exp, &cli.fas_config(search), &h)?;
            let mut summary = format!(
                "{}: log score {:.4} (log likelihood {:.4}, log prior {:.4})\n",
                score.hypothesis, score.total, score.log_likelihood, score.log_prior
            );
            for a in &score.arms {
                summary.push_str(&format!(
                    "  arm x = {}: log marginal {:.4}\n",
                    a.x, a.log_marginal
                ));
            }
            emit(out, &score, &summary)
        }
        Command::SelectionCheck { obs, exp, search } => {
            let (table, exp) = load_inputs(obs, exp)?;
            let sbn = selection_check(&table, &exp, &cli.fas_config(search))?;
            let report = sbn.report();
            let mut summary = format!(
                "residual {:.3e} after {} sweeps, P(S=1) = {:.4}\n",
                report.residual, report.sweeps, report.p_selected
            );
            for (name, t) in &report.theta_s {
                summary.push_str(&format!(
                    "  {name}: theta {}  selected marginal {}\n",
                    fmt_probs(t),
                    fmt_probs(&report.selected_marginals[name])
                ));
            }
            emit(out, &report, &summary)
        }
        Command::Simulate { sim } => {
            let cfg = sim.config(cli.seed);
            let gt = generate_world(&cfg)?;
            let (table, exp) = sample_datasets(&gt, &cfg)?;
            let dir = out.unwrap_or(Path::new("."));
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            gt.dag.write_json(dir.join("graph.json"))?;
            table.write_csv(dir.join("obs.csv"))?;
            exp.write_json(dir.join("exp.json"))?;
            let truth = serde_json::json!({
                "treatment": gt.dag.name(gt.x),
                "outcome": gt.dag.name(gt.y),
                "true_id": gt.true_id,
                "selection": gt.selection,
                "adjustment_set_exists": gt.dag.adjustment_set_exists(gt.x, gt.y),
                "params": gt.params.to_json(),
            });
            write_text(
                &dir.join("truth.json"),
                &(serde_json::to_string_pretty(&truth)? + "\n"),
            )?;
            println!(
                "wrote graph.json, obs.csv, exp.json, truth.json to {} ({} rows, {} arms)",
                dir.display(),
                table.n_rows(),
                exp.arms.len()
            );
            Ok(())
        }
        Command::Benchmark {
            sim,
            replicates,
            methods,
            search,
        } => {
            let report = run_benchmark(
                &sim.config(cli.seed),
                &cli.fas_config(search),
                *replicates,
                methods,
            )?;
            let dir = out.unwrap_or(Path::new("."));
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_text(&dir.join("benchmark.csv"), &report.to_csv_string()?)?;
            write_text(
                &dir.join("benchmark.json"),
                &(report.to_json_string()? + "\n"),
            )?;
            print!("{}", benchmark_summary(&report));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: cannot configure threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Infeasible => 3,
                ErrorKind::Enumeration => 4,
                ErrorKind::Io | ErrorKind::Other => 1,
            })
        }
    }
}
