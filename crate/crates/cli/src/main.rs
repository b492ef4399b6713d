use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use puncture_cli::commands::{self, CliError};
use puncture_cli::RunConfig;

#[derive(Parser)]
#[command(name = "puncture", about = "URLLC puncturing simulator with learned and baseline policies")]
struct Cli {
    /// TOML configuration; omitted keys take reference defaults.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Curriculum pre-training; writes agent.ckpt and reward_curve.csv.
    Pretrain,
    /// Online training from a checkpoint.
    Run {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Frozen evaluation of the configured policy.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides the configured policy.
        #[arg(long)]
        policy: Option<String>,
    },
    /// All policies on the same seed.
    Compare {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Prints the effective configuration as TOML.
    ShowConfig,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.cmd {
        Cmd::Pretrain => {
            let path = commands::pretrain(&cfg, &cli.out)?;
            println!("checkpoint written to {}", path.display());
        }
        Cmd::Run { checkpoint } => {
            let s = commands::run(&cfg, &checkpoint, &cli.out)?;
            println!("cyrus: mean reward {:.4}, mean goodput {:.2} SCs", s.mean_reward, s.mean_goodput_scs);
        }
        Cmd::Eval { checkpoint, policy } => {
            if let Some(p) = policy {
                cfg.policy = p;
                cfg.validate()?;
            }
            let s = commands::eval(&cfg, checkpoint.as_deref(), &cli.out)?;
            println!("{}: mean reward {:.4}, mean goodput {:.2} SCs", cfg.policy, s.mean_reward, s.mean_goodput_scs);
        }
        Cmd::Compare { checkpoint } => {
            for (name, s) in commands::compare(&cfg, checkpoint.as_deref(), &cli.out)? {
                println!("{name}: mean reward {:.4}, mean goodput {:.2} SCs", s.mean_reward, s.mean_goodput_scs);
            }
        }
        Cmd::ShowConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
