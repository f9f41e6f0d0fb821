use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ebna::bayesnet::pls_sample;
use ebna::eda::{ModelBuilder, Strategy};
use ebna::harness::{
    build_report, default_results_path, parse_cardinalities, read_dataset, read_results, render_report, run_experiment,
    trace_path_for, ExperimentConfig, OutputOptions, CONFIG_KEYS, OUTPUT_DIR_ENV,
};
use ebna::scores::{parent_bound, Penalty};
use ebna::Error;

/// Estimation of distribution algorithms over discrete Bayesian networks.
#[derive(Parser, Debug)]
#[command(name = "ebna", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run seeded repetitions of algorithms on benchmark problems.
    Run(Box<RunArgs>),
    /// Aggregate a results file into mean and rank-group tables.
    Report(ReportArgs),
    /// Learn a model from a dataset and draw samples from it.
    Sample(SampleArgs),
    /// Print the per-variable parent bound for the K2+penalty score.
    Bound(BoundArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Problem name(s): onemax, checkerboard, sixpeaks, equalproducts or all.
    #[arg(long)]
    problem: Option<String>,
    /// Algorithm name(s), comma separated, or `all`.
    #[arg(long)]
    algo: Option<String>,
    /// Run every problem with its standard settings.
    #[arg(long)]
    table1_defaults: bool,
    /// Flat key = value configuration file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Results file [default: $EBNA_OUTPUT_DIR/results.csv or ./results.csv].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-generation traces to <out stem>.trace.csv.
    #[arg(long)]
    trace: bool,
    /// Worker threads [default: available cores].
    #[arg(long)]
    jobs: Option<usize>,
    /// Dimension n (grid side s for checkerboard).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t_fraction: Option<f64>,
    #[arg(long)]
    weights_seed: Option<u64>,
    /// Population size N.
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    max_evals: Option<u64>,
    /// Stagnation threshold, or `off`.
    #[arg(long)]
    stagnation_eps: Option<String>,
    #[arg(long)]
    elitism: bool,
    /// K2+pen penalty weight: aic, bic or a number.
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    pc_alpha: Option<f64>,
    #[arg(long)]
    pc_max_cond: Option<usize>,
    #[arg(long)]
    max_parents: Option<usize>,
    /// Learn every generation's structure from scratch.
    #[arg(long)]
    no_carry_forward: bool,
    #[arg(long)]
    mutation_rate: Option<f64>,
    #[arg(long)]
    bias: Option<f64>,
    /// Any configuration key, as KEY=VALUE (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Fill the wall_ms column (makes the file non-reproducible).
    #[arg(long)]
    record_timing: bool,
    /// Suppress per-run progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    results: PathBuf,
    /// Significance level of the adjacent-pair tests.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Dataset: one row per line, integer values.
    #[arg(long)]
    data: PathBuf,
    /// Cardinalities, e.g. `2x5,3` [default: inferred from the data].
    #[arg(long)]
    cards: Option<String>,
    #[arg(long, default_value = "ebna_bic")]
    algo: String,
    #[arg(long, default_value_t = 10)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the learned network before the samples.
    #[arg(long)]
    dump_model: bool,
    #[arg(long, default_value = "aic")]
    f: String,
    #[arg(long, default_value_t = 0.01)]
    pc_alpha: f64,
}

#[derive(Args, Debug)]
struct BoundArgs {
    /// Cardinalities, e.g. `3x7,4,3x5,4,3x5,4`.
    #[arg(long)]
    cards: String,
    /// Number of cases N.
    #[arg(long)]
    rows: usize,
    /// Penalty weight f(N): aic, bic or a number.
    #[arg(long, default_value = "1")]
    f: String,
    /// 1-based variable; all variables when omitted.
    #[arg(long)]
    variable: Option<usize>,
}

fn run_help() -> String {
    let mut s = String::from("Configuration keys (file lines `key = value`, or --set key=value):\n");
    for (key, doc) in CONFIG_KEYS {
        s.push_str(&format!("  {key:<26} {doc}\n"));
    }
    s.push_str(&format!(
        "\nResults go to ${OUTPUT_DIR_ENV}/results.csv when --out is absent.\n"
    ));
    s
}

fn command() -> clap::Command {
    let help = run_help();
    Cli::command().mut_subcommand("run", |c| c.after_long_help(help))
}

fn experiment_config(args: &RunArgs) -> ebna::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        cfg.load_file(path)?;
    }
    let mut flags: Vec<(&str, String)> = Vec::new();
    if args.table1_defaults {
        flags.push(("problem.name", "all".into()));
    }
    let opt = |v: Option<String>| v;
    let pairs = [
        ("problem.name", opt(args.problem.clone())),
        ("run.algorithms", args.algo.clone()),
        ("run.reps", args.reps.map(|v| v.to_string())),
        ("run.seed", args.seed.map(|v| v.to_string())),
        ("run.jobs", args.jobs.map(|v| v.to_string())),
        ("problem.n", args.n.map(|v| v.to_string())),
        ("problem.t_fraction", args.t_fraction.map(|v| v.to_string())),
        ("problem.weights_seed", args.weights_seed.map(|v| v.to_string())),
        ("problem.population", args.population.map(|v| v.to_string())),
        ("problem.max_evaluations", args.max_evals.map(|v| v.to_string())),
        ("run.stagnation_epsilon", args.stagnation_eps.clone()),
        ("run.elitism", args.elitism.then(|| "true".to_string())),
        ("algo.ebna_k2pen.f", args.f.clone()),
        ("algo.ebna_pc.alpha", args.pc_alpha.map(|v| v.to_string())),
        ("algo.ebna_pc.max_cond", args.pc_max_cond.map(|v| v.to_string())),
        ("algo.max_parents", args.max_parents.map(|v| v.to_string())),
        ("algo.carry_forward", args.no_carry_forward.then(|| "false".to_string())),
        ("algo.ga.mutation_rate", args.mutation_rate.map(|v| v.to_string())),
        ("algo.ga.bias", args.bias.map(|v| v.to_string())),
    ];
    flags.extend(pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
    for (key, value) in flags {
        cfg.set(key, &value)?;
    }
    for kv in &args.set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> ebna::Result<()> {
    let cfg = experiment_config(&args)?;
    if cfg.problems.is_empty() {
        command()
            .find_subcommand_mut("run")
            .expect("run subcommand exists")
            .error(
                ErrorKind::MissingRequiredArgument,
                "no problem given: use --problem, --table1-defaults or problem.name in --config",
            )
            .exit();
    }
    let results = args.out.clone().unwrap_or_else(default_results_path);
    let mut out = OutputOptions::new(results.clone());
    out.trace = args.trace.then(|| trace_path_for(&results));
    out.record_timing = args.record_timing;
    out.progress = !args.quiet;
    let rows = run_experiment(&cfg, &out)?;
    eprintln!("wrote {} runs to {}", rows.len(), results.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> ebna::Result<()> {
    let rows = read_results(&args.results)?;
    let report = build_report(&rows, args.alpha)?;
    print!("{}", render_report(&report));
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> ebna::Result<()> {
    let cards = args.cards.as_deref().map(parse_cardinalities).transpose()?;
    let data = read_dataset(&args.data, cards)?;
    let strategy: Strategy = args.algo.parse()?;
    let mut builder = ModelBuilder::new(strategy);
    builder.penalty = args.f.parse::<Penalty>()?;
    builder.pc.alpha = args.pc_alpha;
    let model = builder.build(&data)?;
    if args.dump_model {
        println!("# model learner={} rows={}", model.learner.as_str(), data.len());
        print!("{}", model.network.dump());
        println!("# samples");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let samples = pls_sample(&model.network, args.samples, &mut rng);
    for row in samples.rows() {
        let line: Vec<String> = row.iter().map(|g| g.to_string()).collect();
        println!("{}", line.join(" "));
    }
    Ok(())
}

fn cmd_bound(args: BoundArgs) -> ebna::Result<()> {
    let cards = parse_cardinalities(&args.cards)?;
    let penalty: Penalty = args.f.parse()?;
    let variables: Vec<usize> = match args.variable {
        Some(0) => return Err(Error::InvalidArgument("variables are numbered from 1".into())),
        Some(v) => vec![v - 1],
        None => (0..cards.len()).collect(),
    };
    println!("n={} N={} f={}", cards.len(), args.rows, penalty.weight(args.rows));
    for i in variables {
        let b = parent_bound(i, &cards, args.rows, penalty)?;
        println!(
            "variable {} r={} m={} l={} rhs={:.4} pa={}{}",
            i + 1,
            cards[i],
            b.m,
            b.l,
            b.rhs,
            b.max_parents,
            if b.restricted { "" } else { " (unrestricted)" }
        );
    }
    Ok(())
}

fn parse_cli() -> Cli {
    let matches: ArgMatches = command().get_matches();
    Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())
}

fn main() -> ExitCode {
    let cli = parse_cli();
    let result = match cli.command {
        Command::Run(a) => cmd_run(*a),
        Command::Report(a) => cmd_report(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Bound(a) => cmd_bound(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::UnknownName { .. } | Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
