use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use orthotopo::driver::{default_out_dir, format_sweep, run_config, sweep_p};
use orthotopo::{build_case_study, load_config, ProblemConfig};
use orthotopo_core::gradcheck::{run_gradcheck, Function, VarClass};

#[derive(Parser)]
#[command(name = "orthotopo", version, about = "Density and fiber-angle topology optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunFlags {
    /// Output directory for fields, images and the convergence history.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Print only errors.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the problem described by a TOML file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a built-in case study (1 to 4).
    Case {
        id: u32,
        /// Case 1: constrained | unconstrained. Case 2: n40 | n80.
        /// Case 4: p4 | p6 | p8 | p10.
        #[arg(long)]
        variant: Option<String>,
        /// Write the preset as TOML to this path instead of running it.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Compare analytic sensitivities with finite differences.
    Gradcheck {
        /// Cantilever size as WIDTHxHEIGHT in elements.
        #[arg(long, default_value = "4x3")]
        mesh: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a configuration once per P-norm exponent.
    SweepP {
        config: PathBuf,
        /// Comma-separated even exponents.
        #[arg(long, value_delimiter = ',', default_values_t = [4u32, 6, 8, 10])]
        values: Vec<u32>,
        #[command(flatten)]
        flags: RunFlags,
    },
}

fn apply(cfg: &mut ProblemConfig, flags: &RunFlags) -> PathBuf {
    if let Some(n) = flags.max_iter {
        cfg.optimization.max_iter = n;
    }
    flags.out.clone().unwrap_or_else(|| default_out_dir(cfg))
}

fn run_one(mut cfg: ProblemConfig, flags: &RunFlags) -> Result<ExitCode> {
    let out = apply(&mut cfg, flags);
    let outcome = run_config(&cfg, Some(&out), flags.quiet)?;
    if !flags.quiet {
        println!("results written to {}", out.display());
    }
    Ok(if outcome.converged() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn parse_mesh(spec: &str) -> Result<(usize, usize)> {
    let (w, h) = spec.split_once(['x', 'X']).context("mesh must look like 4x3")?;
    let (w, h): (usize, usize) = (w.trim().parse()?, h.trim().parse()?);
    if w == 0 || h == 0 || w > 10 || h > 10 {
        bail!("gradient check meshes must be between 1x1 and 10x10");
    }
    Ok((w, h))
}

fn label(f: Function) -> &'static str {
    match f {
        Function::Compliance => "compliance",
        Function::PNorm(orthotopo_core::Direction::Fiber) => "sigma1 P-norm",
        Function::PNorm(orthotopo_core::Direction::Transverse) => "sigma2 P-norm",
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            e.print()?;
            return Ok(ExitCode::SUCCESS);
        }
        Err(e) => {
            e.print()?;
            return Ok(ExitCode::from(1));
        }
    };
    match cli.command {
        Command::Run { config, flags } => {
            let cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            run_one(cfg, &flags)
        }
        Command::Case { id, variant, dump, flags } => {
            let cfg = build_case_study(id, variant.as_deref())?;
            if let Some(path) = dump {
                std::fs::write(&path, cfg.to_toml()).with_context(|| format!("writing {}", path.display()))?;
                return Ok(ExitCode::SUCCESS);
            }
            run_one(cfg, &flags)
        }
        Command::Gradcheck { mesh, seed } => {
            let (w, h) = parse_mesh(&mesh)?;
            let report = run_gradcheck(w, h, seed)?;
            println!("{:<14} {:<8} {:>12} {:>8} {:>8}", "function", "vars", "max rel err", "element", "step");
            for e in &report.entries {
                let class = match e.class {
                    VarClass::Density => "density",
                    VarClass::Angle => "angle",
                };
                println!(
                    "{:<14} {:<8} {:>12.3e} {:>8} {:>8.0e}",
                    label(e.function),
                    class,
                    e.max_rel_error,
                    e.argmax,
                    e.step
                );
            }
            let ok = report.passed();
            println!("{}", if ok { "PASS" } else { "FAIL" });
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::SweepP { config, values, flags } => {
            let mut cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            let out = apply(&mut cfg, &flags);
            std::fs::create_dir_all(&out)?;
            let rows = sweep_p(&cfg, &values, &out, flags.quiet)?;
            print!("{}", format_sweep(&rows));
            Ok(if rows.iter().all(|r| r.converged) { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
