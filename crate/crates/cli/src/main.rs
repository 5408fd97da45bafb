use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dweuler::Scheme;
use dweuler_cli::{cmd_analyze, cmd_consistency, cmd_convergence, cmd_run, CliError, ExperimentConfig, Problem};

const OUT_ENV: &str = "DWEULER_OUT";

#[derive(Parser)]
#[command(name = "dweuler", version, about = "Finite-volume Euler solver and K-convergence diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a resolution ladder and write snapshots, stability and consistency tables.
    Run(RunArgs),
    /// Post-process a finished run directory.
    Analyze {
        /// Run directory (falls back to $DWEULER_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a ladder and tabulate weak-form residuals across resolutions.
    Consistency(RunArgs),
    /// Vortex ladder against the exact translated solution, with rates.
    Convergence(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (falls back to $DWEULER_OUT, then the config file).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    problem: Option<Problem>,
    /// lf or vfv.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long = "tend")]
    t_end: Option<f64>,
    #[arg(long)]
    n_lo: Option<u32>,
    #[arg(long)]
    n_hi: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Dump the state every k accepted steps (0: final state only).
    #[arg(long)]
    snapshot_every: Option<usize>,
    #[arg(long)]
    alpha_u: Option<f64>,
    #[arg(long)]
    alpha_rho: Option<f64>,
    /// Any other configuration key, e.g. `--set kh.eps=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(dir) = std::env::var_os(OUT_ENV) {
            cfg.out = dir.into();
        }
        if let Some(path) = &self.config {
            cfg.load_file(path)?;
        }
        let s = &mut cfg.scheme;
        if let Some(v) = self.problem {
            cfg.problem = v;
        }
        if let Some(v) = self.scheme {
            s.scheme = v;
        }
        if let Some(v) = self.cfl {
            s.cfl = v;
        }
        if let Some(v) = self.t_end {
            s.t_end = v;
        }
        if let Some(v) = self.alpha_u {
            s.vfv_alpha_velocity = v;
        }
        if let Some(v) = self.alpha_rho {
            s.vfv_alpha_density = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.n_lo {
            cfg.n_lo = v;
        }
        if let Some(v) = self.n_hi {
            cfg.n_hi = v;
        }
        if let Some(v) = self.seed {
            cfg.kh.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.snapshot_every {
            cfg.snapshot_every = v;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            cmd_run(&cfg).context("run failed")?;
            println!("wrote {}", cfg.out.display());
        }
        Command::Consistency(args) => {
            let cfg = args.resolve()?;
            let rows = cmd_consistency(&cfg).context("consistency ladder failed")?;
            let worst = rows
                .iter()
                .filter_map(|r| r.ratio)
                .fold(f64::INFINITY, f64::min);
            println!("wrote {}; smallest residual ratio {worst:.3}", cfg.out.display());
        }
        Command::Convergence(args) => {
            let cfg = args.resolve()?;
            for r in cmd_convergence(&cfg).context("convergence ladder failed")? {
                println!(
                    "n={} n_x={:4} L1(rho)={:.3e} L1_xt(rho)={:.3e} rel.energy={:.3e} order={}",
                    r.level,
                    r.n_x,
                    r.l1_density,
                    r.l1_density_spacetime,
                    r.relative_energy,
                    r.order_density.map_or("-".into(), |o| format!("{o:.3}"))
                );
            }
        }
        Command::Analyze { out } => {
            let dir = out
                .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
                .ok_or_else(|| CliError::Config(format!("pass --out or set {OUT_ENV}")))?;
            let a = cmd_analyze(&dir).with_context(|| format!("analysis of {} failed", dir.display()))?;
            for d in &a.defects {
                println!(
                    "N={} trace compatibility {} (min eigenvalue {:.3e}, min energy defect {:.3e})",
                    d.level,
                    if d.trace.passes() { "passes" } else { "FAILS" },
                    d.trace.min_eigenvalue,
                    d.trace.min_energy_defect
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(2, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
