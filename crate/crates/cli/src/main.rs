use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nosub::harness::{
    self, DataSource, GenSpec, OraclePolicy, OutputFormat, StreamOrder, TrialSpec,
};
use nosub::lower::{lower_exact_with_limit, lower_greedy, LOWER_EXACT_LIMIT};
use nosub::{Mode, RadiusSchedule};
use serde_json::json;

#[derive(Parser)]
#[command(name = "nosub", version, about = "Online no-substitution k-means experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-trial reports plus an aggregate.
    Run(RunArgs),
    /// Emit a synthetic dataset as headerless CSV.
    Gen(GenArgs),
    /// Estimate the longest (alpha, k)-sequence in a dataset.
    Lower(LowerArgs),
    /// Run the invariant suites.
    Check(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Given,
    Shuffled,
    Adversarial,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    #[value(name = "type1_only", alias = "type1-only")]
    Type1Only,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Exact,
    Lloyd,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Certified,
    Doubling,
}

#[derive(Args)]
struct RunArgs {
    /// Headerless CSV, one point per row.
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    input: Option<PathBuf>,
    /// Generator: gaussian_mixture, uniform_box or alpha_k_sequence.
    #[arg(long)]
    gen: Option<String>,
    /// Generator parameters as K=V,...
    #[arg(long, default_value = "", requires = "gen")]
    gen_params: String,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "given")]
    order: OrderArg,
    /// alpha for adversarial ordering.
    #[arg(long, default_value_t = 9.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "full")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "exact")]
    oracle: OracleArg,
    /// Restarts for the lloyd oracle.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Report path; JSON goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Number of arrivals always selected (defaults to k).
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long, value_enum, default_value = "certified")]
    schedule: ScheduleArg,
    /// Add wall_time_ms to each report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct GenArgs {
    kind: String,
    #[arg(long, default_value = "")]
    params: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LowerArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 9.0)]
    alpha: f64,
    /// Largest n searched exactly; bigger inputs use the greedy estimate.
    #[arg(long, default_value_t = LOWER_EXACT_LIMIT)]
    exact_limit: usize,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per suite.
    #[arg(long, default_value_t = 200)]
    cases: usize,
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let source = match (&args.input, &args.gen) {
        (Some(path), None) => DataSource::File(path.clone()),
        (None, Some(kind)) => DataSource::Generated(GenSpec::parse(kind, &args.gen_params)?),
        _ => bail!("exactly one of --input and --gen is required"),
    };
    let spec = TrialSpec {
        order: match args.order {
            OrderArg::Given => StreamOrder::Given,
            OrderArg::Shuffled => StreamOrder::Shuffled,
            OrderArg::Adversarial => StreamOrder::Adversarial { alpha: args.alpha },
        },
        mode: match args.mode {
            ModeArg::Full => Mode::Full,
            ModeArg::Type1Only => Mode::Type1Only,
        },
        schedule: match args.schedule {
            ScheduleArg::Certified => RadiusSchedule::Certified,
            ScheduleArg::Doubling => RadiusSchedule::Doubling,
        },
        oracle: match args.oracle {
            OracleArg::Exact => OraclePolicy::Exact,
            OracleArg::Lloyd => OraclePolicy::Lloyd { restarts: args.restarts },
        },
        bootstrap: args.bootstrap,
        seed: args.seed,
        timing: args.timing,
        ..TrialSpec::new(source, args.k)
    };
    let format = match args.format {
        FormatArg::Json => OutputFormat::Json,
        FormatArg::Csv => OutputFormat::Csv,
    };
    let output = harness::run_experiment(&spec, args.trials)?;
    match &args.out {
        Some(path) => harness::write_output(&output, path, format)
            .with_context(|| format!("writing report to {}", path.display()))?,
        None if matches!(format, OutputFormat::Json) => {
            println!("{}", serde_json::to_string_pretty(&output)?);
        }
        None => bail!("--format csv needs --out"),
    }
    if args.out.is_some() {
        eprintln!("{}", serde_json::to_string_pretty(&output.aggregate)?);
    }
    Ok(())
}

fn gen(args: GenArgs) -> anyhow::Result<()> {
    let points = GenSpec::parse(&args.kind, &args.params)?.generate(args.seed)?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            harness::write_points(&points, std::io::BufWriter::new(file))?;
        }
        None => harness::write_points(&points, std::io::stdout().lock())?,
    }
    Ok(())
}

fn lower(args: LowerArgs) -> anyhow::Result<()> {
    let points = harness::load_points(&args.input)?;
    let seq = if points.len() <= args.exact_limit {
        lower_exact_with_limit(&points, args.alpha, args.k, args.exact_limit)?
    } else {
        lower_greedy(&points, args.alpha, args.k)?
    };
    let report = json!({
        "n": points.len(),
        "k": args.k,
        "alpha": args.alpha,
        "length": seq.len(),
        "exact": seq.exact,
        "certified": seq.certified,
        "indices": seq.indices,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn check(args: CheckArgs) -> anyhow::Result<bool> {
    let suites = harness::run_checks(args.seed, args.cases)?;
    let mut out = std::io::stdout().lock();
    for s in &suites {
        let status = if s.passed() { "PASS" } else { "FAIL" };
        writeln!(out, "{status} {:<12} {}/{} cases", s.name, s.cases - s.failures, s.cases)?;
        if let Some(msg) = &s.first_failure {
            writeln!(out, "     first failure: {msg}")?;
        }
    }
    Ok(suites.iter().all(|s| s.passed()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Gen(a) => gen(a).map(|_| true),
        Command::Lower(a) => lower(a).map(|_| true),
        Command::Check(a) => check(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
