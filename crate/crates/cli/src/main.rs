use std::path::PathBuf;
use std::process::ExitCode;

use aucrac_cli::experiment::{parse_seeds, parse_strategies};
use aucrac_cli::{emit_plot_data, exit, load_config, run_experiment, CliError, ExperimentSpec, Figure, Sweep};
use aucrac_core::{AuctionMode, SimConfig, WinRule};
use clap::Parser;

/// Run multi-seed scheduling experiments and write CSV results.
#[derive(Debug, Parser)]
#[command(name = "aucrac", version)]
struct Args {
    /// JSON config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sweep variable and values, e.g. `devices=10,20,30`. Variables: devices, workers, strategy.
    #[arg(long)]
    sweep: Option<String>,
    /// Seeds as an inclusive range `a..b` or a comma-separated list.
    #[arg(long, default_value = "0..29")]
    seeds: String,
    /// Strategy name, comma-separated names, or `all`.
    #[arg(long, default_value = "all")]
    strategy: String,
    /// Auction allocation mode.
    #[arg(long, value_parser = ["literal", "repaired"])]
    mode: Option<String>,
    /// Which bid wins the auction.
    #[arg(long = "win-rule", value_parser = ["highest", "lowest"])]
    win_rule: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Parallel simulation threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Plot data files to emit after the runs.
    #[arg(long = "emit-plots", value_enum, value_delimiter = ',')]
    emit_plots: Vec<Figure>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    dump_config: bool,
}

fn base_config(args: &Args) -> Result<SimConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => SimConfig::default(),
    };
    if let Some(mode) = &args.mode {
        cfg.auction_mode = if mode == "literal" { AuctionMode::Literal } else { AuctionMode::Repaired };
    }
    if let Some(rule) = &args.win_rule {
        cfg.win_rule = if rule == "highest" { WinRule::Highest } else { WinRule::Lowest };
    }
    Ok(cfg)
}

fn run(args: Args) -> Result<(), CliError> {
    let base = base_config(&args)?;
    if args.dump_config {
        println!("{}", base.to_json_string());
        return Ok(());
    }
    let mut spec = ExperimentSpec::new(base.clone(), &args.out);
    if let Some(sweep) = &args.sweep {
        spec.sweep = sweep.parse::<Sweep>()?;
    }
    spec.seeds = parse_seeds(&args.seeds)?;
    spec.strategies = parse_strategies(&args.strategy)?;
    spec.jobs = args.jobs;

    let out = run_experiment(&spec)?;
    println!("{} runs", out.rows.len());
    println!("wrote {}", out.results_path.display());
    println!("wrote {}", out.aggregate_path.display());
    if !args.emit_plots.is_empty() {
        let dir = args.out.join("plots");
        for path in emit_plot_data(&out.results_path, &args.emit_plots, &base, &dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AUCRAC_LOG", "warn")).init();
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
