use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deepmatch::harness::{
    cmd_compare, cmd_eval, cmd_predict, cmd_train, curve_tsv, gen_synthetic, RunConfig, SyntheticSpec,
};
use deepmatch::Result;

/// Click-through-rate prediction for query-ad pairs.
#[derive(Parser)]
#[command(name = "deepmatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its checkpoint and loss history.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score the test set and write report.tsv and report.json.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write one click probability per input record.
    Predict {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic train/test split and word vectors.
    GenData {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learning curves over training-set sizes for one or more models.
    Compare {
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
}

fn load(path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::read(path)?;
    cfg.apply_env()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config } => {
            let out = cmd_train(&load(&config)?)?;
            if let Some(loss) = out.history.final_loss() {
                eprintln!("final loss {loss:.6}");
            }
            println!("{}", out.checkpoint.display());
        }
        Command::Eval { config, checkpoint } => {
            let report = cmd_eval(&load(&config)?, &checkpoint)?;
            print!("{}", report.to_tsv());
        }
        Command::Predict {
            config,
            checkpoint,
            input,
            output,
        } => {
            let n = cmd_predict(&load(&config)?, &checkpoint, &input, &output)?;
            eprintln!("scored {n} records");
        }
        Command::GenData { spec, out } => {
            let spec = match spec {
                Some(p) => SyntheticSpec::read(&p)?,
                None => SyntheticSpec::default(),
            };
            let files = gen_synthetic(&spec, &out)?;
            for p in [files.train, files.test, files.embeddings] {
                println!("{}", p.display());
            }
        }
        Command::Compare { config, sizes } => {
            let cfgs = config.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
            print!("{}", curve_tsv(&cmd_compare(&cfgs, &sizes)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
