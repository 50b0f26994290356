use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use matchbandit::environment::{oracle_matching, read_instance};
use matchbandit::harness::{run_experiment, run_selftest, solve_design_file, write_outputs, DesignFile, ExperimentConfig};
use matchbandit::Error;

/// Stochastic matching bandits under multinomial-logit choice.
#[derive(Parser, Debug)]
#[command(name = "matchbandit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment config and write results.csv, regret.svg and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Half-open seed range `a..b`; overrides the config's seeds.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<SeedRange>,
        /// Keep every k-th round.
        #[arg(long)]
        decimate: Option<usize>,
    },
    /// Print the optimal matching of an instance file as JSON.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the G-optimal design of a points file and print weights and certificate.
    Design {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Debug, Clone)]
struct SeedRange(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedRange, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got {s:?}"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad start {a:?}: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("bad end {b:?}: {e}"))?;
    if a >= b {
        return Err(format!("empty seed range {s}"));
    }
    Ok(SeedRange((a..b).collect()))
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn read_text(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            decimate,
        } => {
            let mut cfg = ExperimentConfig::read(&config)?;
            if let Some(SeedRange(seeds)) = seeds {
                cfg.seeds = seeds;
            }
            if decimate.is_some() {
                cfg.decimate = decimate;
            }
            cfg.validate()?;
            let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            if !cli.quiet {
                eprintln!(
                    "running {} algorithm(s) x {} seed(s), T = {}",
                    cfg.algorithms.len(),
                    cfg.seeds.len(),
                    cfg.horizon
                );
            }
            let result = run_experiment(&cfg)?;
            write_outputs(&result, &dir)?;
            if !cli.quiet {
                for c in &result.curves {
                    let last = c.mean_regret.last().copied().unwrap_or(f64::NAN);
                    let secs = c.mean_seconds.last().copied().unwrap_or(f64::NAN);
                    eprintln!("{:<12} mean regret {last:10.3}  mean seconds {secs:8.3}", c.algorithm);
                }
                eprintln!("wrote {}", dir.display());
            }
            if !result.failures.is_empty() {
                let lines: Vec<String> = result
                    .failures
                    .iter()
                    .map(|f| format!("{} seed {}: {}", f.algorithm, f.seed, f.error))
                    .collect();
                return Err(Failure::Runtime(lines.join("\n")));
            }
        }
        Command::Oracle { config } => {
            let instance = read_instance(&config).map_err(|e| match e {
                Error::Io(io) => Failure::Config(format!("cannot read {}: {io}", config.display())),
                other => Failure::from(other),
            })?;
            let solution = oracle_matching(&instance)?;
            println!("{}", serde_json::to_string_pretty(&solution).map_err(Error::from)?);
        }
        Command::Design { config } => {
            let file: DesignFile = serde_json::from_str(&read_text(&config)?)
                .map_err(|e| Failure::Config(format!("{}: {e}", config.display())))?;
            let report = solve_design_file(&file)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
        }
        Command::Selftest => {
            let checks = run_selftest();
            for c in &checks {
                if !cli.quiet || !c.passed {
                    println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
                }
            }
            if checks.iter().any(|c| !c.passed) {
                return Err(Failure::Runtime("self test failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
