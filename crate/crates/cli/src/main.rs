use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dioph_cli::{run, write_report, ExperimentConfig, Format, Kind};

#[derive(Parser)]
#[command(name = "dioph", version, about = "Rational points of bounded height: experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output.dir, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Maximum working precision in bits for certified evaluation.
    #[arg(long)]
    precision: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Count rational points of bounded height on a set.
    Count(Common),
    /// Cover the points by hypersurfaces of bounded degree.
    Cover(Common),
    /// Verify and derive mildness certificates.
    Mild(Common),
    /// Propagate Pfaffian complexities and validate chains.
    Pfaff(Common),
    /// Analyze a holomorphic family.
    Holo(Common),
    /// Combinatorial identities and bounds.
    Comb(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Count(c) => (Kind::Count, c),
        Command::Cover(c) => (Kind::Cover, c),
        Command::Mild(c) => (Kind::Mild, c),
        Command::Pfaff(c) => (Kind::Pfaff, c),
        Command::Holo(c) => (Kind::Holo, c),
        Command::Comb(c) => (Kind::Comb, c),
    };
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match ExperimentConfig::from_toml(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    let report = match pool.install(|| run(&cfg, Some(kind), common.precision)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let dir = common
        .out
        .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    match write_report(&report, &dir, &[Format::Json, Format::Csv]) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: a check in the experiment failed; see report.json");
        ExitCode::from(1)
    }
}
