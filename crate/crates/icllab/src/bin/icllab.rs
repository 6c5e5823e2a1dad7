//! Audit-campaign CLI.
//!
//! Exit status: 0 when every check holds, 1 when an audited inequality
//! failed, 2 on configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};

use icllab::harness::{run, RunConfig, RunContext, Subcommand, SEED_ENV_VAR};
use icllab::Error;

#[derive(Parser)]
#[command(
    name = "icllab",
    about = "Bound-audit campaigns: Bernstein/Remez, path bounds, latent-task decay, CoT propagation, attention padding, and varying-instruction amplification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Key-value config file; defaults are built in.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the JSON run report.
    #[arg(long)]
    json: bool,
    /// Overwrite the golden copies beside the config instead of comparing.
    #[arg(long)]
    regen_golden: bool,
}

#[derive(ClapSubcommand, Clone)]
enum Command {
    /// Bernstein error-law audit on random piecewise-linear functions.
    Bernstein(CommonArgs),
    /// Remez inequality audit on random bounded-degree polynomials.
    RemezVerify(CommonArgs),
    /// Path-bound soundness audit on synthetic loss fields.
    PathAudit(CommonArgs),
    /// Posterior-predictive decay experiment across prompt formats.
    Decay(CommonArgs),
    /// Gradient identity, gradient decay, and the coupled-channel contrast.
    Sensitivity(CommonArgs),
    /// Expected instruction stability of a log-space perturbed predictor.
    Stability(CommonArgs),
    /// Error-propagation audit on synthetic multi-step rollouts.
    CotAudit(CommonArgs),
    /// Attention padding-stability audit on random scenes.
    PaddingAudit(CommonArgs),
    /// Non-vanishing scan of the varying-instruction total bound.
    Format6Bound(CommonArgs),
    /// Run every campaign with its defaults and aggregate one ledger.
    Report(CommonArgs),
}

impl Command {
    fn split(&self) -> (Subcommand, &CommonArgs) {
        match self {
            Command::Bernstein(a) => (Subcommand::Bernstein, a),
            Command::RemezVerify(a) => (Subcommand::RemezVerify, a),
            Command::PathAudit(a) => (Subcommand::PathAudit, a),
            Command::Decay(a) => (Subcommand::Decay, a),
            Command::Sensitivity(a) => (Subcommand::Sensitivity, a),
            Command::Stability(a) => (Subcommand::Stability, a),
            Command::CotAudit(a) => (Subcommand::CotAudit, a),
            Command::PaddingAudit(a) => (Subcommand::PaddingAudit, a),
            Command::Format6Bound(a) => (Subcommand::Format6Bound, a),
            Command::Report(a) => (Subcommand::Report, a),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (sub, args) = cli.command.split();

    let cfg = match &args.config {
        None => Ok(RunConfig::default_for(sub)),
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))
            .and_then(|text| RunConfig::from_text(sub, &text)),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("icllab: {e}");
            return ExitCode::from(2);
        }
    };

    let ctx = RunContext {
        out_dir: args.out.clone(),
        emit_json: args.json,
        golden_dir: args.config.as_ref().and_then(|p| p.parent()).map(|d| d.join("golden")),
        regen_golden: args.regen_golden,
    };

    match run(&cfg, &ctx) {
        Ok(report) => {
            if report.seed_overridden {
                println!("seed {} (overridden via {SEED_ENV_VAR})", report.seed);
            } else {
                println!("seed {}", report.seed);
            }
            print!("{}", report.render_ledger());
            for f in &report.files {
                println!("wrote {} ({})", args.out.join(&f.path).display(), &f.digest[..12]);
            }
            println!(
                "{}: {} checks, {} in {:.2}s",
                report.subcommand,
                report.checks.len(),
                if report.all_hold() { "all hold" } else { "FAILURES PRESENT" },
                report.wall_time_s
            );
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("icllab: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("icllab: {e}");
            ExitCode::from(1)
        }
    }
}
