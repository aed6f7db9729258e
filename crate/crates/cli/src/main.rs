//! `yauyau` command-line driver.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 for run-time
//! failures.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use yauyau::bench::io::{read_trajectory_csv, write_result_json, write_trajectory_csv};
use yauyau::bench::{
    format_summary, large_scale_samples, run_experiment, run_method, simulate_trial, sweep_dimension,
    ExperimentConfig, ExperimentKind, Method,
};
use yauyau::models::{ObservationPath, Trajectory};
use yauyau::qmc::{generate_unit, pseudo_random_unit, star_discrepancy_exact_2d, SequenceKind};
use yauyau::Error;

#[derive(Parser, Debug)]
#[command(name = "yauyau", version, about = "Quasi-Monte Carlo kernel filter and baselines")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ExperimentArgs {
    /// TOML experiment file; overrides the preset it names.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset used when no config file is given.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for cached transition operators.
    #[arg(long)]
    op_cache: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a unit-cube point set as CSV.
    Sample {
        #[arg(long, default_value = "halton")]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        skip: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one trial and write truth.csv and obs.csv.
    Simulate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run the Yau-Yau filter on one trial (simulated, or read with --truth/--obs).
    Filter {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long, requires = "obs")]
        truth: Option<PathBuf>,
        #[arg(long, requires = "truth")]
        obs: Option<PathBuf>,
    },
    /// Run every enabled method over all trials and print the summary.
    Compare {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Time the large-scale preset over a list of dimensions.
    SweepDim {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated dimensions (default 10,50,100).
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        /// Comma-separated sample counts (default: paired with each dimension).
        #[arg(long, value_delimiter = ',')]
        samples: Option<Vec<usize>>,
        /// Append r = 300, 600, 1000.
        #[arg(long)]
        long: bool,
    },
    /// Exact 2-D star discrepancy of Sobol, Halton and pseudo-random sets.
    Discrepancy {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn load_experiment(args: &ExperimentArgs, default: ExperimentKind) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(_), Some(_)) => return Err(Failure::Config("use either --config or --preset".into())),
        (Some(path), None) => ExperimentConfig::from_file(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name.parse()?),
        (None, None) => ExperimentConfig::preset(default),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(dir) = &args.op_cache {
        cfg.op_cache = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_sample(kind: &str, n: usize, r: usize, skip: Option<u64>, seed: u64, out: Option<&Path>) -> CliResult {
    let set = if kind == "random" {
        pseudo_random_unit(n, r, seed)?
    } else {
        let kind: SequenceKind = kind.parse()?;
        generate_unit(kind, n, r, skip.unwrap_or(kind.default_skip()), seed)?
    };
    let mut text = (1..=r).map(|i| format!("u{i}")).collect::<Vec<_>>().join(",");
    text.push('\n');
    for p in set.iter() {
        text.push_str(&p.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_simulate(exp: &ExperimentArgs, trial: usize) -> CliResult {
    let cfg = load_experiment(exp, ExperimentKind::SmallCubic)?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let model = cfg.build_model()?;
    let (truth, obs) = simulate_trial(&cfg, &model, trial)?;
    std::fs::create_dir_all(&dir)?;
    write_trajectory_csv(&dir.join("truth.csv"), truth.as_slice(), truth.r(), truth.dt(), 0)?;
    write_trajectory_csv(&dir.join("obs.csv"), obs.increments(), obs.m(), obs.dt(), 1)?;
    println!("wrote {} steps to {}", truth.steps(), dir.display());
    Ok(())
}

fn load_paths(truth: &Path, obs: &Path, dt: f64) -> Result<(Trajectory, ObservationPath), Failure> {
    let (states, r, _) = read_trajectory_csv(truth)?;
    let (incr, m, _) = read_trajectory_csv(obs)?;
    Ok((
        Trajectory::from_rows(states, r, dt, 0.0)?,
        ObservationPath::from_increments(incr, m, dt)?,
    ))
}

fn cmd_filter(exp: &ExperimentArgs, trial: usize, truth: Option<&Path>, obs: Option<&Path>) -> CliResult {
    let cfg = load_experiment(exp, ExperimentKind::SmallCubic)?;
    let model = cfg.build_model()?;
    let (truth, obs) = match (truth, obs) {
        (Some(t), Some(o)) => load_paths(t, o, cfg.simulation.dt())?,
        _ => simulate_trial(&cfg, &model, trial)?,
    };
    let res = run_method(&cfg, &model, Method::YauYau, trial, &truth, &obs)?;
    println!(
        "rmse {:.6}  me {:.6}  offline {:.3}s  online {:.3}s  restarts {}",
        res.rmse, res.me, res.time_offline_s, res.time_online_s, res.diagnostics.restarts
    );
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        write_trajectory_csv(&dir.join("estimates.csv"), &res.estimates, res.r, truth.dt(), 1)?;
        #[derive(serde::Serialize)]
        struct Summary<'a> {
            method: &'static str,
            trial: usize,
            rmse: f64,
            me: f64,
            time_offline_s: f64,
            time_online_s: f64,
            time_total_s: f64,
            diverged: bool,
            diagnostics: &'a yauyau::filter::Diagnostics,
        }
        write_result_json(
            &dir.join("result.json"),
            &Summary {
                method: Method::YauYau.name(),
                trial,
                rmse: res.rmse,
                me: res.me,
                time_offline_s: res.time_offline_s,
                time_online_s: res.time_online_s,
                time_total_s: res.time_total_s,
                diverged: res.diverged,
                diagnostics: &res.diagnostics,
            },
        )?;
    }
    if res.diverged {
        return Err(Failure::Runtime("filter diverged".into()));
    }
    Ok(())
}

fn cmd_compare(exp: &ExperimentArgs) -> CliResult {
    let cfg = load_experiment(exp, ExperimentKind::SmallCubic)?;
    let report = run_experiment(&cfg)?;
    println!("{} ({} trials, seed {})", cfg.experiment.name(), cfg.trials, cfg.seed);
    print!("{}", format_summary(&report.summary));
    Ok(())
}

fn cmd_sweep(exp: &ExperimentArgs, dims: Option<Vec<usize>>, samples: Option<Vec<usize>>, long: bool) -> CliResult {
    let mut exp = exp.clone();
    if exp.config.is_none() && exp.preset.is_none() {
        exp.preset = Some("large_scale".into());
    }
    if exp.trials.is_none() && exp.config.is_none() {
        exp.trials = Some(5);
    }
    let cfg = load_experiment(&exp, ExperimentKind::LargeScale)?;
    let mut dims = dims.unwrap_or_else(|| vec![10, 50, 100]);
    if long {
        dims.extend([300, 600, 1000]);
    }
    let samples = match samples {
        Some(s) if !long => s,
        Some(_) => return Err(Failure::Config("--samples cannot be combined with --long".into())),
        None => dims.iter().map(|&r| large_scale_samples(r)).collect(),
    };
    let report = sweep_dimension(&cfg, &dims, &samples)?;
    println!("{:>6} {:>6} {:>12} {:>10} {:>10}", "r", "n", "time (s)", "RMSE", "ME");
    for p in &report.points {
        match &p.error {
            None => println!("{:>6} {:>6} {:>12.4} {:>10.4} {:>10.4}", p.r, p.n, p.time_s, p.rmse, p.me),
            Some(e) => println!("{:>6} {:>6} failed: {e}", p.r, p.n),
        }
    }
    match report.slope {
        Some(s) => println!("log-log time slope: {s:.3}"),
        None => println!("log-log time slope: n/a"),
    }
    Ok(())
}

fn cmd_discrepancy(n: usize, seeds: u64) -> CliResult {
    let sobol = star_discrepancy_exact_2d(&generate_unit(SequenceKind::Sobol, n, 2, 1, 0)?)?;
    let halton = star_discrepancy_exact_2d(&generate_unit(SequenceKind::Halton, n, 2, 0, 0)?)?;
    println!("sobol  D* = {sobol:.6}");
    println!("halton D* = {halton:.6}");
    let (mut sobol_wins, mut halton_wins) = (0, 0);
    for seed in 0..seeds {
        let random = star_discrepancy_exact_2d(&pseudo_random_unit(n, 2, seed)?)?;
        sobol_wins += usize::from(sobol < random);
        halton_wins += usize::from(halton < random);
        println!("seed {seed:>3}: random D* = {random:.6}");
    }
    println!("sobol below random in {sobol_wins}/{seeds}, halton in {halton_wins}/{seeds}");
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Sample {
            kind,
            n,
            r,
            skip,
            seed,
            out,
        } => cmd_sample(&kind, n, r, skip, seed, out.as_deref()),
        Command::Simulate { exp, trial } => cmd_simulate(&exp, trial),
        Command::Filter { exp, trial, truth, obs } => cmd_filter(&exp, trial, truth.as_deref(), obs.as_deref()),
        Command::Compare { exp } => cmd_compare(&exp),
        Command::SweepDim {
            exp,
            dims,
            samples,
            long,
        } => cmd_sweep(&exp, dims, samples, long),
        Command::Discrepancy { n, seeds } => cmd_discrepancy(n, seeds),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
