//! `nsg`: grid generation, training, evaluation and plotting.
//!
//! Exit status is 0 on success, 1 for usage or configuration errors and 2
//! for failures while running.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nsg_core::attacker::UniformAttacker;
use nsg_core::eval::{self, EvalOptions, MctsDefender, ReportRow};
use nsg_core::graph::{self, GameConfig, GridScenario};
use nsg_core::nets::{load_checkpoint, CheckpointError};
use nsg_core::train::{self, MetricsRow, TrainConfig, TrainError, TrainOptions};
use nsg_core::{derive_seed, seeded_rng};

#[derive(Parser, Debug)]
#[command(name = "nsg", version, about = "Network security games with a neural MCTS defender")]
struct Cli {
    /// Seed for generation, training (overrides the config file) and evaluation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a random grid game config.
    GenGrid(GenGridArgs),
    /// Train a defender.
    Train(TrainArgs),
    /// Evaluate a trained defender.
    Eval(EvalArgs),
    /// Draw learning curves from a metrics CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct GenGridArgs {
    #[arg(long, default_value_t = 7)]
    size: usize,
    #[arg(long, default_value_t = 0.5)]
    p_edge: f64,
    #[arg(long, default_value_t = 0.1)]
    p_diag: f64,
    #[arg(long, default_value_t = 10)]
    targets: usize,
    #[arg(long, default_value_t = 4)]
    resources: usize,
    /// Defaults to the grid size.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Game config JSON.
    #[arg(long)]
    game: PathBuf,
    /// Training config TOML; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    /// Continue from a checkpoint written for the same game.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// One run per value, e.g. `n_simulations=5,10,15`.
    #[arg(long)]
    sweep: Option<String>,
    /// Override the episode count.
    #[arg(long)]
    episodes: Option<u64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    Uniform,
    Enumerate,
    Shortest,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMode::Enumerate)]
    mode: EvalMode,
    /// Training config whose search settings the evaluator reuses.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Episodes against the uniform attacker.
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 20)]
    episodes_per_path: usize,
    #[arg(long, default_value_t = graph::DEFAULT_PATH_CAP)]
    path_cap: usize,
    /// Report CSV.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Columns to draw against `episode`.
    #[arg(long, value_delimiter = ',', default_value = "win_rate_uniform,worst_case_reward")]
    columns: Vec<String>,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::GenGrid(args) => gen_grid(&cli, args),
        Command::Train(args) => run_train(&cli, args),
        Command::Eval(args) => run_eval(&cli, args),
        Command::Plot(args) => run_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn gen_grid(cli: &Cli, args: &GenGridArgs) -> Result<(), Failure> {
    let scenario = GridScenario {
        size: args.size,
        p_edge: args.p_edge,
        p_diag: args.p_diag,
        targets: args.targets,
        resources: args.resources,
        horizon: args.horizon.unwrap_or(args.size),
        seed: cli.seed.unwrap_or(0),
    };
    let config = graph::grid_scenario(&scenario).usage()?;
    graph::save_config(&config, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))
        .runtime()?;
    if !cli.quiet {
        println!(
            "wrote {}: {} nodes, {} edges, attacker at {}, {} of {} targets reachable",
            args.out.display(),
            config.graph().node_count(),
            config.graph().edge_count(),
            config.attacker_starts()[0],
            config.reachable_targets(config.attacker_starts()[0]).len(),
            config.targets().len()
        );
    }
    Ok(())
}

fn load_game(path: &Path) -> Result<GameConfig, Failure> {
    graph::load_config(path)
        .with_context(|| format!("game config {}", path.display()))
        .usage()
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig, Failure> {
    match path {
        Some(p) => TrainConfig::load(p)
            .with_context(|| format!("training config {}", p.display()))
            .usage(),
        None => Ok(TrainConfig::default()),
    }
}

fn classify_train(err: TrainError) -> Failure {
    match err {
        TrainError::Config { .. } | TrainError::Parse(_) | TrainError::ResumePastEnd { .. } => Failure::Usage(err.into()),
        other => Failure::Runtime(other.into()),
    }
}

fn run_train(cli: &Cli, args: &TrainArgs) -> Result<(), Failure> {
    let game = load_game(&args.game)?;
    let mut base = load_train_config(args.config.as_deref())?;
    if let Some(seed) = cli.seed {
        base.seed = seed;
    }
    if let Some(threads) = cli.threads {
        base.threads = threads;
    }
    if let Some(n) = args.episodes {
        base.episodes_total = n;
    }
    base.validate().usage()?;

    let runs: Vec<(PathBuf, TrainConfig)> = match &args.sweep {
        None => vec![(args.out.clone(), base)],
        Some(spec) => {
            if args.resume.is_some() {
                return Err(Failure::Usage(anyhow!("--sweep cannot be combined with --resume")));
            }
            let (key, values) = spec
                .split_once('=')
                .ok_or_else(|| Failure::Usage(anyhow!("--sweep expects key=v1,v2,...")))?;
            values
                .split(',')
                .filter(|v| !v.is_empty())
                .map(|v| {
                    let config = base.with_override(key, v).map_err(classify_train)?;
                    Ok((args.out.join(format!("{key}={v}")), config))
                })
                .collect::<Result<_, Failure>>()?
        }
    };

    for (out_dir, config) in runs {
        fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))
            .runtime()?;
        fs::write(out_dir.join("train_config.toml"), config.to_toml()).runtime()?;
        let resume = match &args.resume {
            Some(path) => Some(load_checkpoint(path, Some(&game.digest())).map_err(|e| match e {
                CheckpointError::Io(_) | CheckpointError::Digest { .. } | CheckpointError::Version { .. } => {
                    Failure::Usage(anyhow!(e).context(format!("checkpoint {}", path.display())))
                }
                other => Failure::Runtime(other.into()),
            })?),
            None => None,
        };
        let quiet = cli.quiet;
        let label = out_dir.display().to_string();
        let progress = move |row: &MetricsRow| {
            if !quiet {
                println!("{label}: {}", format_row(row));
            }
        };
        let outcome = train::train_loop(
            &game,
            &config,
            TrainOptions {
                out_dir: Some(out_dir.clone()),
                resume,
                progress: Some(Box::new(progress)),
            },
        )
        .map_err(classify_train)?;
        if !cli.quiet {
            println!(
                "{}: finished at episode {}; checkpoint {}",
                out_dir.display(),
                outcome.episodes_done,
                out_dir.join(train::FINAL_CHECKPOINT).display()
            );
        }
    }
    Ok(())
}

fn format_row(row: &MetricsRow) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    format!(
        "episode {} prior {} value {} dynamics {} win_rate_uniform {} worst_case {}",
        row.episode,
        cell(row.prior_loss),
        cell(row.value_loss),
        cell(row.dynamics_loss),
        cell(row.win_rate_uniform),
        cell(row.worst_case_reward)
    )
}

fn run_eval(cli: &Cli, args: &EvalArgs) -> Result<(), Failure> {
    let game = load_game(&args.game)?;
    let config = load_train_config(args.config.as_deref())?;
    let checkpoint = load_checkpoint(&args.checkpoint, Some(&game.digest()))
        .with_context(|| format!("checkpoint {}", args.checkpoint.display()))
        .usage()?;
    if checkpoint.params.dims.node_count != game.graph().node_count() {
        return Err(Failure::Usage(anyhow!("checkpoint was trained on a different graph")));
    }
    let seed = cli.seed.unwrap_or(0);
    let defender = MctsDefender::greedy(&checkpoint.params, config.search_config());
    let options = EvalOptions {
        episodes_per_path: args.episodes_per_path,
        path_cap: args.path_cap,
        threads: cli.threads.unwrap_or(1),
    };
    if options.episodes_per_path == 0 || args.episodes == 0 || options.threads == 0 {
        return Err(Failure::Usage(anyhow!("episode and thread counts must be positive")));
    }

    let (rows, summary) = match args.mode {
        EvalMode::Uniform => {
            let mut rng = seeded_rng(derive_seed(seed, 0));
            let mut d = defender.clone();
            let stats = eval::play_matches(&game, &mut d, &mut UniformAttacker::new(), args.episodes, &mut rng).runtime()?;
            let row = ReportRow {
                path_id: "summary".into(),
                path_nodes: String::new(),
                mean_reward: stats.mean,
                n_episodes: stats.episodes,
            };
            let line = format!(
                "uniform attacker: mean defender reward {:.4} ± {:.4} over {} episodes",
                stats.mean, stats.half_width, stats.episodes
            );
            (vec![row], line)
        }
        EvalMode::Enumerate | EvalMode::Shortest => {
            let result = if args.mode == EvalMode::Enumerate {
                eval::best_response_value(&game, &defender, seed, &options)
            } else {
                eval::shortest_path_panel(&game, &defender, seed, &options)
            };
            let worst = result.map_err(|e| match e {
                eval::EvalError::Paths(_) => Failure::Usage(e.into()),
                other => Failure::Runtime(other.into()),
            })?;
            let rows = eval::worst_case_rows(&worst);
            let label = if args.mode == EvalMode::Enumerate {
                "best-response enumeration"
            } else {
                "shortest-path panel (an upper bound on the worst case)"
            };
            let line = match worst.argmin {
                Some(k) => format!(
                    "{label}: worst-case defender reward {:.4} ± {:.4} over {} paths; worst path {}",
                    worst.value,
                    worst.paths[k].stats.half_width,
                    worst.paths.len(),
                    eval::format_path(&worst.paths[k].path)
                ),
                None => format!("{label}: no target is reachable; defender reward 1"),
            };
            (rows, line)
        }
    };
    if let Some(out) = &args.out {
        eval::write_report(out, &rows)
            .with_context(|| format!("writing {}", out.display()))
            .runtime()?;
    }
    println!("{summary}");
    Ok(())
}

fn run_plot(args: &PlotArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.metrics)
        .with_context(|| format!("reading {}", args.metrics.display()))
        .usage()?;
    let svg = plot::render_svg(&text, &args.columns).usage()?;
    fs::write(&args.out, svg)
        .with_context(|| format!("writing {}", args.out.display()))
        .runtime()?;
    Ok(())
}
