use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use musbo::bounds_verifier::{verify_bounds, VerifyOptions, BOUND_ROW_HEADER};
use musbo::environments::Env;
use musbo::explorer::GaussianPolicy;
use musbo::harness::{aggregate, emit_curves, load_config, CurveGroup, RunDir, SeedStreams, Table};
use musbo::orchestrator::{evaluate, mean_std, resume, run_in, AblationMode, METRIC_COLUMNS};

#[derive(Parser)]
#[command(name = "musbo", version, about = "Deployment-constrained model-based RL with uncertainty-weighted TRPO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Csv,
    Svg,
}

#[derive(Subcommand)]
enum Command {
    /// Run every deployment of a configuration.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// full, coeff_only, explore_only or none
        #[arg(long)]
        ablation: Option<AblationMode>,
        /// Explicit run directory instead of a timestamped one under the output root.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Continue a halted run in this directory.
        #[arg(long, conflicts_with_all = ["config", "seed", "ablation", "run_dir"])]
        resume: Option<PathBuf>,
    },
    /// Evaluate a saved policy with the deterministic mean action.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        /// Needed when the checkpoint is not inside a run directory.
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print aggregated metrics or render learning curves for one or more runs.
    Metrics {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        emit: Emit,
    },
    /// Check the value-difference bounds on random tabular MDP pairs.
    VerifyBounds {
        #[arg(long, default_value_t = 100)]
        draws: usize,
        #[arg(long, default_value_t = 8)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        emit: Emit,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, seed, ablation, run_dir, resume: resume_dir } => {
            let (dir, outcome) = if let Some(path) = resume_dir {
                let dir = RunDir::open(&path)?;
                let outcome = resume(&dir)?;
                (dir, outcome)
            } else {
                let Some(config) = config else { bail!("--config is required") };
                let mut cfg = load_config(&config)?;
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                if let Some(m) = ablation {
                    cfg.ablation = m;
                }
                let dir = match run_dir {
                    Some(p) => RunDir::create(&p)?,
                    None => RunDir::create_timestamped(&format!("{}-{}-seed{}", cfg.env, cfg.ablation, cfg.seed))?,
                };
                println!("run directory: {}", dir.root().display());
                let outcome = run_in(&cfg, &dir)?;
                (dir, outcome)
            };
            let table = Table::parse(&outcome.metrics.to_csv())?;
            emit_curves(&[CurveGroup { label: dir.run_id(), tables: vec![table] }], &dir.plots())?;
            for d in &outcome.metrics.deployments {
                println!(
                    "deployment {}: eval return {:.3} +- {:.3}",
                    d.deployment, d.eval_return_mean, d.eval_return_std
                );
            }
        }
        Command::Eval { checkpoint, episodes, env, seed } => {
            let bytes = std::fs::read(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let policy = GaussianPolicy::from_bytes(&bytes)?;
            let run_cfg = checkpoint
                .parent()
                .and_then(Path::parent)
                .map(|p| p.join("config.json"))
                .filter(|p| p.is_file())
                .map(|p| load_config(&p))
                .transpose()?;
            let env_name = env
                .or_else(|| run_cfg.as_ref().map(|c| c.env.clone()))
                .context("--env is required outside a run directory")?;
            let seed = seed.or(run_cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            // policy_<i>.bin was evaluated with the deployment-i stream
            let index = checkpoint
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.rsplit('_').next())
                .and_then(|s| s.parse::<u64>().ok())
                .unwrap_or(0);
            let env = Env::by_name(&env_name)?;
            let returns = evaluate(&env, &policy, episodes, &mut SeedStreams::new(seed).stream("eval", index))?;
            let (m, s) = mean_std(&returns);
            println!("episodes: {episodes}\nreturn_mean: {m}\nreturn_std: {s}");
        }
        Command::Metrics { run_dir, emit } => {
            let groups = collect_groups(&run_dir)?;
            match emit {
                Emit::Svg => {
                    let out = run_dir.join("plots");
                    let files = emit_curves(&groups, &out)?;
                    for f in files {
                        println!("{}", f.display());
                    }
                }
                Emit::Csv => {
                    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
                    w.write_record(["group", "runs", "metric", "deployment", "mean", "std"])?;
                    for g in &groups {
                        for metric in METRIC_COLUMNS.iter().skip(1) {
                            if let Some(a) = aggregate(&g.tables, metric) {
                                for k in 0..a.x.len() {
                                    w.write_record([
                                        g.label.clone(),
                                        a.runs.to_string(),
                                        metric.to_string(),
                                        a.x[k].to_string(),
                                        a.mean[k].to_string(),
                                        a.std[k].to_string(),
                                    ])?;
                                }
                            }
                        }
                    }
                    w.flush()?;
                }
            }
        }
        Command::VerifyBounds { draws, states, actions, gamma, seed, emit } => {
            if matches!(emit, Emit::Svg) {
                bail!("verify-bounds only emits csv");
            }
            let rows = verify_bounds(&VerifyOptions { draws, n_states: states, n_actions: actions, gamma, seed })?;
            let stdout = std::io::stdout();
            let mut w = csv::Writer::from_writer(stdout.lock());
            w.write_record(BOUND_ROW_HEADER)?;
            for r in &rows {
                w.write_record(r.csv_record())?;
            }
            w.flush()?;
            let violations = rows.iter().filter(|r| r.report.applicable && !r.report.holds).count();
            let mut err = std::io::stderr();
            writeln!(err, "{} rows, {violations} violations", rows.len())?;
        }
    }
    Ok(())
}

fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Table::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

/// One run directory gives one group. A directory of runs is grouped by the
/// ablation mode recorded in each run's config.
fn collect_groups(dir: &Path) -> Result<Vec<CurveGroup>> {
    if dir.join("metrics.csv").is_file() {
        let label = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(vec![CurveGroup { label, tables: vec![read_table(&dir.join("metrics.csv"))?] }]);
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("metrics.csv").is_file())
        .collect();
    entries.sort();
    if entries.is_empty() {
        bail!("{} contains no metrics.csv", dir.display());
    }
    let mut groups: Vec<CurveGroup> = Vec::new();
    for run in entries {
        let label = load_config(&run.join("config.json"))
            .map(|c| c.ablation.to_string())
            .unwrap_or_else(|_| "runs".into());
        let table = read_table(&run.join("metrics.csv"))?;
        match groups.iter_mut().find(|g| g.label == label) {
            Some(g) => g.tables.push(table),
            None => groups.push(CurveGroup { label, tables: vec![table] }),
        }
    }
    Ok(groups)
}
