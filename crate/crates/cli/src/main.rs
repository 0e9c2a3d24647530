use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use impulse_core::config::{Command, RunConfig};
use impulse_core::pipeline;
use impulse_core::Error;

/// Solve and verify threshold equilibria of impulse-control games.
///
/// Exit status: 0 on success, 1 on invalid input, 2 when the solver reports a
/// regime or no-solution failure. Log verbosity comes from `IMPULSE_LOG`.
#[derive(Parser)]
#[command(name = "impulse", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve the zero-sum consumption game's free boundaries.
    SolveZeroSum(Common),
    /// Solve the advertising duopoly's six-equation system.
    SolveDuopoly(Common),
    /// Simulate one controlled path.
    Simulate(Common),
    /// Monte Carlo payoffs, deviation tests and admissibility statistics.
    Verify(Common),
    /// QVI residuals and region labels on a grid.
    RegionMap(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing); overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
}

fn load(c: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let text = fs::read_to_string(&c.config)
        .map_err(|e| Error::input("--config", format!("cannot read {}: {e}", c.config.display())))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(s) = c.seed {
        cfg.numerics.seed = s;
    }
    if let Some(n) = c.paths {
        cfg.numerics.n_paths = n;
    }
    if let Some(dt) = c.dt {
        cfg.numerics.dt = dt;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Error> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)?)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<(), Error> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    log::info!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct FailureReport<'a> {
    command: String,
    error: String,
    residuals: &'a [f64],
}

fn run(command: Command, c: &Common) -> Result<(), Error> {
    let (cfg, out) = load(c)?;
    let result = dispatch(command, &cfg, &out);
    if let Err(e @ Error::NoSolution { residuals, .. }) = &result {
        write_json(
            &out,
            "residual_report.json",
            &FailureReport {
                command: command.to_string(),
                error: e.to_string(),
                residuals,
            },
        )?;
    }
    result
}

fn dispatch(command: Command, cfg: &RunConfig, out: &Path) -> Result<(), Error> {
    match command {
        Command::SolveZeroSum => {
            let r = pipeline::solve_zero_sum(cfg)?;
            write_json(out, "zero_sum_solution.json", &r.solution)?;
            write_csv(
                out,
                "zero_sum_value.csv",
                &["x".into(), "psi".into(), "branch".into()],
                r.value_table
                    .iter()
                    .map(|v| vec![v.x.to_string(), v.psi.to_string(), format!("{:?}", v.branch)]),
            )
        }
        Command::SolveDuopoly => {
            let r = pipeline::solve_duopoly(cfg)?;
            write_json(out, "duopoly_solution.json", &r.solution)?;
            write_json(out, "policies.json", &r.policies)
        }
        Command::Simulate => {
            let rec = pipeline::simulate(cfg)?;
            write_json(out, "path.json", &rec)?;
            let d = rec.states.first().map_or(0, |s| s.len());
            let mut header = vec!["t".to_string()];
            header.extend((1..=d).map(|i| format!("x{i}")));
            write_csv(
                out,
                "path.csv",
                &header,
                rec.times.iter().zip(&rec.states).map(|(t, x)| {
                    let mut row = vec![t.to_string()];
                    row.extend(x.iter().map(|v| v.to_string()));
                    row
                }),
            )
        }
        Command::Verify => {
            let r = pipeline::verify(cfg)?;
            for e in &r.estimates {
                println!(
                    "player {}: estimate {:.6} ± {:.6} (analytic {:.6}, z = {:.2})",
                    e.player, e.estimate.mean, e.estimate.se, e.analytic, e.z_score
                );
            }
            if let Some(d) = &r.deviations {
                for e in &d.entries {
                    println!(
                        "player {} {:?} {:+.0}%: gap {:+.6} ± {:.6} -> {:?}",
                        e.edit.player,
                        e.edit.field,
                        e.edit.rel * 100.0,
                        e.gap,
                        e.gap_se,
                        e.verdict
                    );
                }
            }
            if let Some(a) = &r.admissibility {
                println!("admissibility: spread {:?}, blow-up {} -> {:?}", a.spread, a.blow_up, a.verdict);
            }
            write_json(out, "verification.json", &r)
        }
        Command::RegionMap => {
            let rows = pipeline::region_map(cfg)?;
            let d = rows.first().map_or(0, |r| r.x.len());
            let k = rows.first().map_or(0, |r| r.residuals.len());
            let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
            for j in 1..=k {
                let suffix = if k > 1 { j.to_string() } else { String::new() };
                header.push(format!("residual{suffix}"));
                header.push(format!("branch{suffix}"));
            }
            header.push("label".into());
            header.push("ambiguous".into());
            write_csv(
                out,
                "region_map.csv",
                &header,
                rows.iter().map(|r| {
                    let mut row: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
                    for (res, b) in r.residuals.iter().zip(&r.branches) {
                        row.push(res.to_string());
                        row.push(b.clone());
                    }
                    row.push(r.label.to_string());
                    row.push(r.ambiguous.to_string());
                    row
                }),
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IMPULSE_LOG", "warn")).init();
    let cli = Cli::parse();
    let (command, common) = match &cli.command {
        Sub::SolveZeroSum(c) => (Command::SolveZeroSum, c),
        Sub::SolveDuopoly(c) => (Command::SolveDuopoly, c),
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::Verify(c) => (Command::Verify, c),
        Sub::RegionMap(c) => (Command::RegionMap, c),
    };
    match run(command, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_solver_failure() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
