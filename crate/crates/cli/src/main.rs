use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use linkis::dragging::{toy_model, total_variation, DragChain};
use linkis::harness::{aggregate, calibration_report, equal_budget_scan, parse_spec, run_experiment, write_rows, write_summaries, ExperimentSpec};
use linkis::oracles::{nested_optimal_n, predictions, validate_suite};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "linkis", version, about = "Estimate ratios of normalizing constants with linked and annealed importance sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (`key = value` lines).
    #[arg(long)]
    spec: PathBuf,
    /// Output path; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `replications`.
    #[arg(long)]
    replications: Option<usize>,
    /// Run 2000 replications.
    #[arg(long)]
    full: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write per-method MSE summaries to this CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// One replication of the first method in the spec, as JSON.
    Estimate(Common),
    /// Every method and replication of the spec, as CSV rows.
    Experiment(Common),
    /// Equal-budget scan over the spec's `scan_n`, as CSV rows.
    Scan(Common),
    /// Closed-form predictions for uniform ladders, as JSON.
    Oracle {
        /// Shrink factor of the nested uniforms.
        #[arg(long, default_value_t = 0.1)]
        s: f64,
        /// Shift of the shifted uniforms.
        #[arg(long, default_value_t = 4.0)]
        t: f64,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact enumeration checks on random finite families.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linked dragging on the 6 x 4 discrete toy model.
    DragDemo {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 200_000)]
        steps: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(c: &Common) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(&c.spec).with_context(|| format!("reading {}", c.spec.display()))?;
    let mut spec = parse_spec(&text)?;
    if let Some(s) = c.seed {
        spec.master_seed = s;
    }
    if c.full {
        spec.replications = 2000;
    }
    if let Some(r) = c.replications {
        spec.replications = r;
    }
    if let Some(t) = c.threads {
        spec.threads = t;
    }
    spec.validate()?;
    Ok(spec)
}

fn emit_rows(c: &Common, rows: &[linkis::harness::ResultRow]) -> Result<()> {
    let mut out = output(c.out.as_deref())?;
    write_rows(rows, &mut out)?;
    out.flush()?;
    let summaries = aggregate(rows);
    if let Some(p) = &c.summary {
        write_summaries(&summaries, File::create(p).with_context(|| format!("creating {}", p.display()))?)?;
    }
    for s in &summaries {
        eprintln!(
            "{:>3} {:>7} {:>9} n={:<4} K={:<4} M={:<3} mse={:.5} (se {:.5}) zeros={:.3} calib={:.3}",
            s.method, s.direction, s.bridge, s.n, s.k, s.m, s.mse, s.mse_se, s.zero_fraction, s.calibration_fraction
        );
    }
    eprintln!("calibration fraction over all rows: {:.3}", calibration_report(rows));
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Estimate(c) => {
            let mut spec = load(&c)?;
            spec.methods.truncate(1);
            spec.replications = 1;
            let rows = run_experiment(&spec)?;
            let mut out = output(c.out.as_deref())?;
            serde_json::to_writer_pretty(&mut out, &rows[0])?;
            writeln!(out)?;
        }
        Command::Experiment(c) => {
            let spec = load(&c)?;
            emit_rows(&c, &run_experiment(&spec)?)?;
        }
        Command::Scan(c) => {
            let spec = load(&c)?;
            if spec.scan_n.is_empty() {
                bail!("the spec has no `scan_n` list");
            }
            emit_rows(&c, &equal_budget_scan(&spec, &spec.scan_n)?)?;
        }
        Command::Oracle { s, t, n, m, out } => {
            let value = json!({
                "predictions": predictions(s, t, n, m)?,
                "nested_optimal_n": nested_optimal_n(s)?,
            });
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &value)?;
            writeln!(w)?;
        }
        Command::Validate { seed, out } => {
            let checks = validate_suite(seed)?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            let mut w = output(out.as_deref())?;
            for c in &checks {
                writeln!(w, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
            writeln!(w, "{} of {} checks passed", checks.len() - failed, checks.len())?;
            w.flush()?;
            if failed > 0 {
                std::process::exit(1);
            }
        }
        Command::DragDemo { seed, steps, out } => {
            let model = toy_model()?;
            let pi = model.energy.stationary();
            let nx = model.energy.num_fast();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut chain = DragChain::new(&model, 0, 0);
            let mut counts = vec![0u64; pi.len()];
            for _ in 0..steps {
                chain.step(&mut rng)?;
                counts[chain.slow * nx + chain.fast] += 1;
            }
            let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / steps.max(1) as f64).collect();
            let value = json!({
                "steps": steps,
                "acceptance_rate": chain.acceptance_rate(),
                "total_variation": total_variation(&freq, &pi),
                "slow_evaluations": model.slow_evaluations(),
                "empirical": freq,
                "stationary": pi,
            });
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &value)?;
            writeln!(w)?;
        }
    }
    Ok(())
}
