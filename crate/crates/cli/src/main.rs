use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use visits_cli::config::{ConfigFile, ExperimentKind};
use visits_cli::error::{CliError, CliResult};
use visits_cli::{bound_profile, conditions, oscillate, sweep};
use visits_core::dist::{CountDistribution, DistParams, Kind};

#[derive(Parser)]
#[command(
    name = "visits",
    about = "Exact and simulated visit-count statistics for cylinder sets of mixing shift spaces",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides [output].dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides any seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for grid cells and Monte Carlo chunks (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct DistArgs {
    /// Which law to evaluate.
    #[arg(long, value_parser = parse_kind)]
    kind: Kind,
    /// Rescaled time t >= 0.
    #[arg(long)]
    t: f64,
    /// Cluster parameter p in [0, 1).
    #[arg(long)]
    p: f64,
    /// Largest count to print.
    #[arg(long, default_value_t = 10)]
    r_max: usize,
    /// Emit the distribution as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn parse_kind(s: &str) -> Result<Kind, String> {
    match s {
        "entry" => Ok(Kind::Entry),
        "return" => Ok(Kind::Return),
        _ => Err(format!("unknown kind '{s}' (use entry or return)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact/MC entry-count distributions vs the limit law over an (n, t) grid.
    EntrySweep(RunArgs),
    /// Conditioned return-count distributions vs the return law.
    ReturnSweep(RunArgs),
    /// Alternating-block construction oscillating between two laws.
    Oscillate(RunArgs),
    /// Verify the approximation hypotheses on a concrete target.
    CheckConditions(RunArgs),
    /// Evaluate error-bound shapes across cylinder lengths.
    BoundProfile(RunArgs),
    /// Print PMF values of an entry or return law directly.
    Dist(DistArgs),
}

fn load_config(args: &RunArgs, expected: ExperimentKind) -> CliResult<ConfigFile> {
    if let Some(threads) = args.threads {
        // ignore failure when a pool already exists (repeated invocations in tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let config = ConfigFile::load(&args.config)?;
    if config.kind != expected {
        return Err(CliError::config(format!(
            "config kind {:?} does not match this subcommand",
            config.kind
        )));
    }
    Ok(config)
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::EntrySweep(args) => {
            let config = load_config(&args, ExperimentKind::EntrySweep)?;
            let out = config.output_dir(args.out.as_deref());
            let outcome = sweep::run_sweep(Kind::Entry, &config, &out, args.seed)?;
            println!(
                "entry sweep: {} cells -> {} and {}",
                outcome.cells,
                outcome.detail_path.display(),
                outcome.summary_path.display()
            );
        }
        Command::ReturnSweep(args) => {
            let config = load_config(&args, ExperimentKind::ReturnSweep)?;
            let out = config.output_dir(args.out.as_deref());
            let outcome = sweep::run_sweep(Kind::Return, &config, &out, args.seed)?;
            println!(
                "return sweep: {} cells -> {} and {}",
                outcome.cells,
                outcome.detail_path.display(),
                outcome.summary_path.display()
            );
        }
        Command::Oscillate(args) => {
            let config = load_config(&args, ExperimentKind::Oscillation)?;
            let out = config.output_dir(args.out.as_deref());
            let outcome = oscillate::run_oscillation(&config, &out)?;
            println!(
                "oscillation: {} block(s), verdict {:?} -> {}",
                outcome.report.blocks.len(),
                outcome.report.verdict,
                outcome.report_path.display()
            );
            if !outcome.report.note.is_empty() {
                println!("note: {}", outcome.report.note);
            }
            if outcome.report.verdict == oscillate::Verdict::BudgetExhausted {
                return Err(CliError::Budget(
                    "oscillation block search exhausted its budget; partial results written"
                        .into(),
                ));
            }
        }
        Command::CheckConditions(args) => {
            let config = load_config(&args, ExperimentKind::ConditionCheck)?;
            let out = config.output_dir(args.out.as_deref());
            let outcome = conditions::run_condition_check(&config, &out, args.seed)?;
            println!(
                "condition check: pass = {} -> {}",
                outcome.report.pass,
                outcome.report_path.display()
            );
        }
        Command::BoundProfile(args) => {
            let config = load_config(&args, ExperimentKind::BoundProfile)?;
            let out = config.output_dir(args.out.as_deref());
            let outcome = bound_profile::run_bound_profile(&config, &out)?;
            println!(
                "bound profile: {} rows -> {}",
                outcome.rows,
                outcome.csv_path.display()
            );
        }
        Command::Dist(args) => {
            let params = DistParams::new(args.t, args.p)?;
            let dist = CountDistribution::limit_law(params, args.kind, args.r_max);
            if args.json {
                println!("{}", dist.to_json());
            } else {
                println!("r,pmf");
                for (r, prob) in dist.probs.iter().enumerate() {
                    println!("{r},{prob:.16e}");
                }
                println!("tail,{:.16e}", dist.tail_mass);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
