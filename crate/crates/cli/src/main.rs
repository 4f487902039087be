use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use paracflow_cli::{checkpoint_roundtrip, run, CliError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "paracflow", version, about = "Para-CFlow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// BO steps per trial.
        #[arg(long)]
        steps: Option<usize>,
        /// Trials for BO and KT.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run every invariant suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Load, save and reload a model checkpoint and compare probe outputs.
    Checkpoint { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out_dir, workers, steps, trials } => RunConfig::load(&config).and_then(|mut cfg| {
            cfg.apply(&Overrides { seed, out_dir, workers, steps, trials });
            run(&cfg)
        }),
        Command::Verify { seed, out_dir } => {
            let cfg = RunConfig::from_json(&format!(r#"{{"experiment": "verify", "seed": {seed}}}"#))
                .map(|c| RunConfig { out_dir, ..c });
            cfg.and_then(|c| run(&c))
        }
        Command::Checkpoint { path } => checkpoint_roundtrip(&path).and_then(|r| {
            let line = format!(
                "checkpoint {}: identical {}, max param diff {:.3e}, max output diff {:.3e}",
                path.display(),
                r.identical,
                r.max_param_diff,
                r.max_output_diff
            );
            if r.identical {
                Ok(vec![line])
            } else {
                Err(CliError::Verify(line))
            }
        }),
    };
    match result {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
