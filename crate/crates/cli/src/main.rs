//! `hashpower`: evaluate, optimize and simulate hashpower allocations.

mod scenario;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hashpower_core::dividends::{optimal_barrier, optimize_allocation, value_function, OptimizerOptions};
use hashpower_core::mean_variance::{frontier_csv, frontier_curve};
use hashpower_core::network::{run_study, NetworkConfig};
use hashpower_core::validation::{run_validation, Level, DEFAULT_Z_THRESHOLD};
use hashpower_core::{build_model, Allocation, ScaleEvaluator};
use serde::Serialize;
use serde_json::{json, Map, Value};

use scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "hashpower",
    version,
    about = "Hashpower allocation across Pay-per-Share mining pools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one quantity for a scenario and print a JSON record.
    Eval(EvalArgs),
    /// Search the allocation maximizing expected discounted dividends.
    Optimize(OptimizeArgs),
    /// Mean-variance efficient frontier as CSV.
    Frontier(FrontierArgs),
    /// Run the network study and write report.json and shares.csv.
    Simulate(SimulateArgs),
    /// Compare analytic results with Monte Carlo estimates.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Quantity {
    Psi,
    Phi,
    Ruin,
    #[value(name = "W")]
    W,
    #[value(name = "Z")]
    Z,
    #[value(name = "Zbar")]
    Zbar,
    Value,
}

impl Quantity {
    fn key(self) -> &'static str {
        match self {
            Quantity::Psi => "psi",
            Quantity::Phi => "phi",
            Quantity::Ruin => "ruin",
            Quantity::W => "W",
            Quantity::Z => "Z",
            Quantity::Zbar => "Zbar",
            Quantity::Value => "value",
        }
    }
}

#[derive(clap::Args)]
struct EvalArgs {
    what: Quantity,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x: Option<f64>,
    /// Barrier level or `auto` for the optimal barrier.
    #[arg(long, default_value = "auto")]
    a: String,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    /// Comma-separated allocation weights; defaults to the first destination.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(clap::Args)]
struct OptimizeArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_active: Option<usize>,
    /// Also write the candidate table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(clap::Args)]
struct FrontierArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 50)]
    n_points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(clap::Args)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value = "quick")]
    level: LevelArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_Z_THRESHOLD)]
    z_threshold: f64,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let scenario = Scenario::load(&args.scenario)?;
    let terms = scenario.terms()?;
    let weights = match &args.weights {
        Some(w) => Allocation::new(w.clone())?,
        None => Allocation::vertex(terms.len(), 0),
    };
    let mut record = Map::new();
    record.insert("quantity".into(), json!(args.what.key()));
    record.insert("weights".into(), json!(weights.weights()));

    let needs_x = matches!(
        args.what,
        Quantity::Ruin | Quantity::W | Quantity::Z | Quantity::Zbar | Quantity::Value
    );
    let x = if needs_x { Some(scenario.wealth(args.x)?) } else { None };
    // the surplus process does not depend on the starting point
    let miner = scenario.miner(Some(0.0))?;
    let model = build_model(&miner, &terms, &weights)?;
    if let Some(x) = x {
        record.insert("x".into(), json!(x));
    }

    let output = match args.what {
        Quantity::Psi => {
            let Some(theta) = args.theta else {
                bail!("eval psi needs --theta")
            };
            record.insert("theta".into(), json!(theta));
            model.laplace_exponent(theta)
        }
        Quantity::Phi => {
            let q = args.q.or(scenario.q).unwrap_or(0.0);
            record.insert("q".into(), json!(q));
            model.phi(q)?
        }
        Quantity::Ruin => model.ruin_probability(x.unwrap()),
        Quantity::W | Quantity::Z | Quantity::Zbar | Quantity::Value => {
            let q = scenario.discount(args.q)?;
            record.insert("q".into(), json!(q));
            let ev = ScaleEvaluator::new(model, q)?;
            let x = x.unwrap();
            match args.what {
                Quantity::W => ev.w(x)?,
                Quantity::Z => ev.z(x)?,
                Quantity::Zbar => ev.z_bar(x)?,
                _ => {
                    let a = if args.a == "auto" {
                        optimal_barrier(&ev)?
                    } else {
                        args.a
                            .parse()
                            .with_context(|| format!("--a expects a number or auto, got {}", args.a))?
                    };
                    record.insert("a".into(), json!(a));
                    value_function(&ev, x, a)?
                }
            }
        }
    };
    record.insert(args.what.key().into(), json!(output));
    println!("{}", Value::Object(record));
    Ok(())
}

#[derive(Serialize)]
struct Candidate {
    pool: usize,
    share_rate: f64,
    share_reward: f64,
    fee: Option<f64>,
    difficulty_reduction: Option<f64>,
    barrier: f64,
    value: f64,
}

fn optimize(args: &OptimizeArgs) -> Result<()> {
    let scenario = Scenario::load(&args.scenario)?;
    let q = scenario.discount(args.q)?;
    let miner = scenario.miner(args.x)?;
    let dest = scenario.destinations()?;
    let terms: Vec<_> = dest.iter().map(|d| d.terms).collect();
    let mut options = OptimizerOptions::default();
    options.pso.seed = args.seed;
    if let Some(k) = args.max_active {
        options.max_active = k;
    }
    let search = optimize_allocation(&miner, &terms, q, &options)?;
    let candidates: Vec<Candidate> = dest
        .iter()
        .zip(&search.single_pools)
        .enumerate()
        .map(|(k, (d, r))| Candidate {
            pool: k,
            share_rate: d.terms.share_rate,
            share_reward: d.terms.share_reward,
            fee: d.fee,
            difficulty_reduction: d.difficulty_reduction,
            barrier: r.barrier,
            value: r.value,
        })
        .collect();

    let csv = || -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &candidates {
            w.serialize(c)?;
        }
        Ok(w.into_inner()?)
    };
    if let Some(path) = &args.out {
        fs::write(path, csv()?).with_context(|| format!("writing {}", path.display()))?;
    }
    match args.format {
        Format::Json => print_json(&json!({
            "q": q,
            "initial_wealth": miner.initial_wealth,
            "best": search.best,
            "candidates": candidates,
            "stages": search.stages,
        })),
        Format::Csv => {
            std::io::stdout().write_all(&csv()?)?;
            Ok(())
        }
    }
}

fn frontier(args: &FrontierArgs) -> Result<()> {
    let scenario = Scenario::load(&args.scenario)?;
    let points = frontier_curve(&scenario.terms()?, args.n_points)?;
    let csv = frontier_csv(&points);
    match &args.out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut config: NetworkConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => NetworkConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let report = run_study(&config)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    fs::write(args.out.join("shares.csv"), report.shares_csv())?;

    println!(
        "{:<12} {:>8} {:>9}  shares (solo, pool 1, ...)",
        "criterion", "hhi", "nakamoto"
    );
    for c in &report.criteria {
        let shares: Vec<String> = c.shares.iter().map(|s| format!("{s:.3}")).collect();
        println!(
            "{:<12} {:>8.4} {:>9}  {}",
            c.criterion.name(),
            c.hhi,
            c.nakamoto,
            shares.join(" ")
        );
    }
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<bool> {
    let level = match args.level {
        LevelArg::Quick => Level::Quick,
        LevelArg::Full => Level::Full,
    };
    let report = run_validation(level, args.seed, args.z_threshold)?;
    for c in &report.checks {
        println!(
            "{} {:<18} analytic={:.6} estimate={:.6} se={:.6} z={:+.3}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.analytic,
            c.estimate,
            c.std_error,
            c.z
        );
    }
    Ok(report.all_pass())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Optimize(a) => optimize(a).map(|_| true),
        Command::Frontier(a) => frontier(a).map(|_| true),
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Validate(a) => validate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
