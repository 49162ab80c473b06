//! Command-line front end: seeded MSE and SER sweeps driven by a TOML
//! scenario file, plus quick prototype-pulse diagnostics.

use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fbmc_sim::harness::{emit_report, run_mse_experiment, run_ser_experiment, SimConfig};
use fbmc_sim::pulse::{eta_table, pr_projected_phydyas, pr_residual, PrototypePulse};

#[derive(Parser)]
#[command(name = "sim", version, about = "Multi-user MIMO FBMC-OQAM link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML scenario file; missing keys take the documented defaults.
    #[arg(long)]
    config: PathBuf,
    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the CSV table, run manifest and plots.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also render a self-contained SVG plot.
    #[arg(long)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate per-subcarrier MSE and pair it with the closed-form curve.
    Mse(RunArgs),
    /// Sweep symbol error rate across the configured SNR grid.
    Ser(RunArgs),
    /// Reconstruction diagnostics for the prototype pulse.
    PulseCheck {
        /// Half the subcarrier count (the pulse spans 2*M*kappa samples).
        #[arg(long = "M", default_value_t = 64)]
        m: usize,
        #[arg(long, default_value_t = 4)]
        kappa: usize,
    },
    /// Print the pulse cross-correlation table and the asymptotic weights.
    EtaTable {
        #[arg(long = "M", default_value_t = 64)]
        m: usize,
        #[arg(long, default_value_t = 4)]
        kappa: usize,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Mse(args) => run_experiment(args, true),
        Command::Ser(args) => run_experiment(args, false),
        Command::PulseCheck { m, kappa } => pulse_check(m, kappa),
        Command::EtaTable { m, kappa } => print_eta_table(m, kappa),
    }
}

fn run_experiment(args: RunArgs, mse: bool) -> anyhow::Result<()> {
    let mut cfg = SimConfig::from_toml_file(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let res = if mse {
        run_mse_experiment(&cfg)?
    } else {
        run_ser_experiment(&cfg)?
    };
    println!(
        "{} rows in {:.1} s (config {})",
        res.rows.len(),
        res.wall_time.as_secs_f64(),
        &res.config_hash[..12],
    );
    for file in emit_report(&res, &args.out, args.plot)? {
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn pulse_check(m: usize, kappa: usize) -> anyhow::Result<()> {
    let pulse = PrototypePulse::phydyas(m, kappa)?;
    let samples = pulse.samples();
    let symmetry = (0..samples.len() / 2)
        .map(|n| (samples[n] - samples[samples.len() - 1 - n]).abs())
        .fold(0.0f64, f64::max);
    let energy: f64 = samples.iter().map(|s| s * s).sum();
    let res = pr_residual(&pulse)?;
    println!("prototype M={m} kappa={kappa}: {} samples", samples.len());
    println!("  symmetry deviation      {symmetry:.3e}");
    println!("  energy / M              {:.12}", energy / m as f64);
    println!("  center column deviation {:.3e}", res.max_center_deviation);
    println!("  off-center leakage      {:.3e}", res.max_off_center);
    println!("  quadrature leakage      {:.3e}", res.max_s_entry);
    println!("  back-to-back MSE        {:.3e}", res.energy);
    println!("  worst entry             {:.3e}", res.max_abs());
    let repaired = pr_projected_phydyas(m, kappa)?;
    let rep = pr_residual(&repaired)?;
    println!("  worst entry, repaired   {:.3e}", rep.max_abs());
    Ok(())
}

fn print_eta_table(m: usize, kappa: usize) -> anyhow::Result<()> {
    let pulse = PrototypePulse::phydyas(m, kappa)?;
    let table = eta_table(&pulse)?;
    // Tolerate a closed pipe so the table can feed head/grep.
    let mut out = io::BufWriter::new(io::stdout().lock());
    let written = (|| -> io::Result<()> {
        writeln!(out, "eta table for M={m} kappa={kappa}")?;
        writeln!(out, "  alpha {:.16e}", table.alpha)?;
        writeln!(out, "  beta  {:.16e}", table.beta)?;
        writeln!(out, "  (p q r s)      eta_pm            eta_mp")?;
        for (&(p, q, r, s), &(pm, mp)) in table.entries() {
            writeln!(out, "  ({p} {q} {r} {s})  {pm:+.9e}  {mp:+.9e}")?;
        }
        out.flush()
    })();
    match written {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}
