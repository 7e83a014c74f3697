use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sls_deploy::experiment::{run, Command, ExperimentSpec, Overrides};

#[derive(Parser)]
#[command(name = "slsdeploy", version, about = "Synthesize, deploy and simulate FIR state-feedback controllers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment JSON file.
    #[arg(long, global = true)]
    experiment: Option<PathBuf>,
    /// Architecture name or `all`; overrides the file.
    #[arg(long, global = true)]
    arch: Option<String>,
    /// Disturbance and failure-sweep seed; overrides the file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the file. Nothing is written without one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Pass/fail tolerance; overrides the file.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Solve for the system response and report achievability.
    Synthesize,
    /// Build architecture graphs.
    Build,
    /// Simulate the closed loop on each architecture.
    Simulate,
    /// Cost, equivalence and failure comparison across architectures.
    Compare,
    /// Internal stability under injections at every summing junction.
    Stability,
    /// Memory, computation and communication counts.
    Cost,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> sls_deploy::Result<u8> {
    let Some(path) = &cli.experiment else {
        return Err(sls_deploy::Error::InvalidExperiment(vec!["--experiment <path> is required".into()]));
    };
    let mut spec = ExperimentSpec::from_path(path)?;
    spec.apply(&Overrides {
        architecture: cli.arch.clone(),
        seed: cli.seed,
        out: cli.out.clone(),
        tol: cli.tol,
    });
    let exp = spec.resolve()?;
    let command = match cli.command {
        Cmd::Synthesize => Command::Synthesize,
        Cmd::Build => Command::Build,
        Cmd::Simulate => Command::Simulate,
        Cmd::Compare => Command::Compare,
        Cmd::Stability => Command::Stability,
        Cmd::Cost => Command::Cost,
    };
    let output = run(command, &exp)?;
    print!("{}", output.stdout);
    // A path given on the command line is relative to the working directory,
    // one from the file is relative to the file.
    let out_dir = match (&cli.out, &spec.out) {
        (Some(dir), _) => Some(dir.clone()),
        (None, Some(dir)) => Some(spec.base_dir.join(dir)),
        (None, None) => None,
    };
    if let Some(dir) = out_dir {
        output.write_to(&dir)?;
    }
    Ok(output.exit_code as u8)
}
