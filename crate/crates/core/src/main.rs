use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cibm::runner::{self, parse_overrides, TrainConfig};
use cibm::Result;

/// Concept bottleneck experiments.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per seed and write checkpoints and logs.
    Train(Common),
    /// Test metrics of trained checkpoints.
    Eval(Common),
    /// Intervention curve of trained checkpoints.
    Intervene(Common),
    /// OIS/NIS table over complete, selective and random concept sets.
    Leakage(Common),
    /// Intervention AUC/NAUC under concept corruption.
    CorruptSweep(Common),
    /// Train with information-plane snapshots.
    Infoplane(Common),
    /// Write the configured synthetic dataset as CSV.
    GenData(Common),
}

fn config(c: &Common) -> Result<TrainConfig> {
    TrainConfig::load(c.config.as_deref(), &parse_overrides(&c.overrides)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let rec = runner::cmd_train(&config(&c)?)?;
            print!("{}", rec.summary.to_csv());
        }
        Command::Eval(c) => print!("{}", runner::cmd_eval(&config(&c)?)?.to_csv()),
        Command::Intervene(c) => {
            let p = runner::cmd_intervene(&config(&c)?)?;
            for (t, (x, s)) in p.curve.values.iter().zip(&p.curve.stds).enumerate() {
                println!("t={t} acc={x:.4} ± {s:.4}");
            }
            println!("AUC_TTI={:.4} NAUC_TTI={:.4}", p.auc()?, p.nauc()?);
        }
        Command::Leakage(c) => print!("{}", runner::cmd_leakage(&config(&c)?)?.render()),
        Command::CorruptSweep(c) => {
            println!("k,auc_tti,nauc_tti,negative_nauc");
            for r in runner::cmd_corrupt_sweep(&config(&c)?)? {
                println!("{},{:.4},{:.4},{}", r.k, r.auc_tti, r.nauc_tti, r.leakage_flag());
            }
        }
        Command::Infoplane(c) => {
            for (seed, points) in runner::cmd_infoplane(&config(&c)?)? {
                let bad = points.iter().filter(|p| p.suspicious()).count();
                println!("seed {seed}: {} snapshots, {bad} suspicious", points.len());
            }
        }
        Command::GenData(c) => println!("{}", runner::cmd_gendata(&config(&c)?)?.display()),
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
