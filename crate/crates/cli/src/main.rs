//! `riskpoa`: experiment runner for the price-of-anarchy laboratory.
//!
//! Exit codes: 0 pass, 1 usage or input error, 2 falsified, 3 uncertified.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::*;
use config::{ExperimentConfig, Status};

#[derive(Debug, Parser)]
#[command(name = "riskpoa", version, about = "Welfare and price-of-anarchy experiments for auctions with risk-averse bidders")]
struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the all-pay lower-bound construction for one M.
    VerifyTheorem6(Theorem6Args),
    /// Learn a (coarse) correlated equilibrium and certify it.
    Learn(LearnArgs),
    /// Certify or refute a smoothness inequality on finite grids.
    Certify(CertifyArgs),
    /// Empirical price of anarchy over a random game family.
    PoaSweep(PoaSweepArgs),
    /// Check the normalization properties of a utility model.
    CheckNormalization(NormalizationArgs),
    /// Certify the anti-coordinated second-price equilibrium.
    VerifyObservation1(Observation1Args),
    /// Check the two-item instance with mean-variance bidders.
    VerifyTwoItem(TwoItemArgs),
    /// Compare OPT with the value-welfare benchmark on random instances.
    Lemma1Test(Lemma1Args),
}

fn run(cli: Cli) -> Result<Status> {
    let cfg = ExperimentConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::VerifyTheorem6(a) => verify_theorem6_cmd(cfg.verify_theorem6, a),
        Command::Learn(a) => learn_cmd(cfg.learn, a),
        Command::Certify(a) => certify_cmd(cfg.certify, a),
        Command::PoaSweep(a) => poa_sweep_cmd(cfg.poa_sweep, a),
        Command::CheckNormalization(a) => check_normalization_cmd(cfg.check_normalization, a),
        Command::VerifyObservation1(a) => verify_observation1_cmd(cfg.verify_observation1, a),
        Command::VerifyTwoItem(a) => verify_two_item_cmd(cfg.verify_two_item, a),
        Command::Lemma1Test(a) => lemma1_test_cmd(cfg.lemma1_test, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(status) => {
            if status != Status::Pass {
                log::warn!("finished with status {status:?}");
            }
            ExitCode::from(status.code())
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
