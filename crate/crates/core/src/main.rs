use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairmc::cli::pipeline::{EXIT_ERROR, EXIT_FAIL, EXIT_NON_PAC, EXIT_PASS};
use fairmc::cli::{chain_to_dot, load_config, run_verify_repair, Mode, RunConfig};
use fairmc::learner::LabeledChain;
use fairmc::Result;

/// Verify group fairness of a neural network through a learned Markov chain
/// abstraction, and repair it when it fails.
#[derive(Debug, Parser)]
#[command(name = "fairmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a chain, check fairness and rank targets on failure.
    Verify(RunArgs),
    /// As verify, then repair a failing network and re-verify it.
    Repair(RunArgs),
    /// Render a chain in the text format as Graphviz DOT.
    Export {
        /// Chain file written by verify or repair.
        dtmc: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    mu_eps: Option<f64>,
    #[arg(long)]
    mu_delta: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_traces: Option<u64>,
    /// Stop after ranking; never modify the network.
    #[arg(long)]
    no_repair: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.model {
            config.model = m.clone();
        }
        if config.model.as_os_str().is_empty() {
            return Err(fairmc::Error::InvalidConfig(
                "no model given (--model or config `model`)".into(),
            ));
        }
        config.mu_eps = self.mu_eps.unwrap_or(config.mu_eps);
        config.mu_delta = self.mu_delta.unwrap_or(config.mu_delta);
        config.xi = self.xi.unwrap_or(config.xi);
        config.seed = self.seed.unwrap_or(config.seed);
        config.max_traces = self.max_traces.unwrap_or(config.max_traces);
        Ok(config)
    }
}

fn run(args: &RunArgs, mode: Mode) -> Result<i32> {
    let config = args.config()?;
    let mode = if args.no_repair { Mode::Verify } else { mode };
    let outcome = run_verify_repair(&config, mode, &args.out_dir)?;
    let r = &outcome.report;
    println!(
        "verdict {} max_diff {} xi {} traces {}",
        r.verdict, r.max_diff, r.xi, r.traces_used
    );
    if let Some(rep) = &r.repair {
        println!(
            "repaired verdict {} max_diff {} accuracy {} -> {} iterations {}",
            rep.verdict, rep.after, rep.accuracy_before, rep.accuracy_after, rep.iterations
        );
    }
    match outcome.exit_code {
        EXIT_NON_PAC => {
            eprintln!("warning: trace budget exhausted before the sample bound was met")
        }
        EXIT_FAIL if r.repair.is_none() => eprintln!("fairness violated; see sensitivity ranking"),
        _ => {}
    }
    Ok(outcome.exit_code)
}

fn export(dtmc: &PathBuf, output: Option<&PathBuf>) -> Result<i32> {
    let text = std::fs::read_to_string(dtmc).map_err(|e| fairmc::Error::Io {
        path: dtmc.clone(),
        source: e,
    })?;
    let dot = chain_to_dot(&LabeledChain::parse(&text)?);
    match output {
        Some(path) => std::fs::write(path, dot).map_err(|e| fairmc::Error::Io {
            path: path.clone(),
            source: e,
        })?,
        None => print!("{dot}"),
    }
    Ok(EXIT_PASS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(args) => run(args, Mode::Verify),
        Command::Repair(args) => run(args, Mode::Repair),
        Command::Export { dtmc, output } => export(dtmc, output.as_ref()),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
