//! Runs a configuration end to end and writes its results.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use orthotopo_core::{run_optimization, OptimizationResult, TerminationStatus};

use crate::config::ProblemConfig;
use crate::export::export_fields;

/// Iterations between progress lines.
const REPORT_EVERY: usize = 50;

#[derive(Debug)]
pub struct RunOutcome {
    pub result: OptimizationResult,
    /// Largest `|σ1|`, `|σ2|` at the final design, skipping the load zone and
    /// the elements at the ends of each support.
    pub max_sigma: [f64; 2],
    pub out_dir: Option<PathBuf>,
}

impl RunOutcome {
    pub fn converged(&self) -> bool {
        self.result.status == TerminationStatus::Converged
    }
}

/// Default output directory: `out/<name>`.
pub fn default_out_dir(cfg: &ProblemConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| Path::new("out").join(cfg.name.as_deref().unwrap_or("run")))
}

/// Optimizes `cfg`, printing progress unless `quiet`, and exports the
/// results to `out` when given.
pub fn run_config(cfg: &ProblemConfig, out: Option<&Path>, quiet: bool) -> Result<RunOutcome> {
    let problem = cfg.build_problem()?;
    let max_iter = problem.settings.max_iter;
    let result = run_optimization(&problem, |rec| {
        if !quiet && (rec.iter % REPORT_EVERY == 0 || rec.iter == 1) {
            let g: Vec<String> = rec
                .stress_constraints
                .iter()
                .filter(|v| !v.is_nan())
                .map(|v| format!("{v:+.3}"))
                .collect();
            println!(
                "it {:5}/{max_iter}  c {:.6e}  vol {:.4}  change {:.2e}  max|s1| {:.4e}  max|s2| {:.4e}  g [{}]",
                rec.iter,
                rec.compliance,
                rec.volume,
                rec.change,
                rec.max_sigma[0],
                rec.max_sigma[1],
                g.join(" ")
            );
        }
    })?;
    let mut skip = result.excluded.clone();
    skip.extend(cfg.support_end_elements(problem.model.mesh()));
    let max_sigma = [result.max_abs_stress(0, &skip), result.max_abs_stress(1, &skip)];
    if let Some(dir) = out {
        export_fields(&result, problem.model.mesh(), dir)
            .with_context(|| format!("writing results to {}", dir.display()))?;
    }
    if !quiet {
        let status = match result.status {
            TerminationStatus::Converged => "converged",
            TerminationStatus::MaxIterations => "stopped at the iteration cap",
        };
        println!(
            "{status} after {} iterations: c {:.6e}, volume {:.4}, max|s1| {:.4e} Pa, max|s2| {:.4e} Pa",
            result.iterations(),
            result.compliance,
            result.volume,
            max_sigma[0],
            max_sigma[1]
        );
    }
    Ok(RunOutcome { result, max_sigma, out_dir: out.map(Path::to_path_buf) })
}

/// One line of the P-exponent sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p_norm: u32,
    pub iterations: usize,
    pub converged: bool,
    pub compliance: f64,
    pub max_sigma: [f64; 2],
    pub limits: [f64; 2],
}

/// Runs `cfg` once per exponent, each into `out/P<p>`, and writes
/// `out/sweep.csv`.
pub fn sweep_p(cfg: &ProblemConfig, values: &[u32], out: &Path, quiet: bool) -> Result<Vec<SweepRow>> {
    let stress = cfg.stress.clone().context("the sweep needs a [stress] section")?;
    let mut rows = Vec::new();
    for &p in values {
        let mut c = cfg.clone();
        c.stress = Some(crate::config::StressConfig { p_norm: p, ..stress.clone() });
        c.validate()?;
        if !quiet {
            println!("--- P = {p} ---");
        }
        let run = run_config(&c, Some(&out.join(format!("P{p}"))), quiet)?;
        rows.push(SweepRow {
            p_norm: p,
            iterations: run.result.iterations(),
            converged: run.converged(),
            compliance: run.result.compliance,
            max_sigma: run.max_sigma,
            limits: stress.limits(),
        });
    }
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record(["P", "iterations", "converged", "compliance", "max_sigma1", "max_sigma2"])?;
    for r in &rows {
        w.write_record([
            r.p_norm.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.compliance.to_string(),
            r.max_sigma[0].to_string(),
            r.max_sigma[1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

/// Plain-text table of a sweep.
pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>3}  {:>10}  {:>14}  {:>14}  {:>14}\n",
        "P", "iterations", "compliance", "max|s1| (kPa)", "max|s2| (kPa)"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>3}  {:>10}  {:>14.6e}  {:>14.3}  {:>14.3}\n",
            r.p_norm,
            if r.converged { r.iterations.to_string() } else { format!("{}*", r.iterations) },
            r.compliance,
            r.max_sigma[0] / 1e3,
            r.max_sigma[1] / 1e3
        ));
    }
    s
}
