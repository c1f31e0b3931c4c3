use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use homlab::cell::{solve_cell_1d, solve_cell_2d};
use homlab::coefficients::{parse_coefficient, reperiodize_with_cap, CoefficientSpec, FieldExpr, MultiscaleCoefficient};
use homlab::diophantine::{simultaneous_approx, verify_approx, DEFAULT_SEARCH_CAP};
use homlab::elliptic::{Domain, Forcing, Scalar, SolveOptions, Vector};
use homlab::grid::{save_grid, GridFile};
use homlab::harness::{emit_report, parse_config, run_cz_sweep, run_lipschitz, run_quasiperiodic, ExperimentReport, SweepConfig};
use homlab::reduction::{rate_locally_periodic, reduce_one_scale, schedule_q, RateOptions, ReductionOptions};
use homlab::{Error, Result};

/// Multiscale homogenization laboratory.
#[derive(Parser)]
#[command(name = "homlab", version, about)]
struct Cli {
    /// Worker threads for sweeps and cell tables.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simultaneous rational approximation of a vector of reals.
    Approx {
        /// Comma-separated reals.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        alpha: Vec<f64>,
        #[arg(long = "Q")]
        big_q: f64,
        #[arg(long, default_value_t = DEFAULT_SEARCH_CAP)]
        cap: u64,
    },
    /// Rewrite a multiscale coefficient with a Q-separated finest scale.
    Reperiodize {
        #[command(flatten)]
        coef: CoefArgs,
        #[arg(long = "Q")]
        big_q: f64,
        #[arg(long, default_value_t = DEFAULT_SEARCH_CAP)]
        cap: u64,
    },
    /// Periodic cell problem and effective matrix of a one-slot kernel.
    Cell {
        /// Expression in `y1` (or `y1[1]`, `y1[2]` in two dimensions).
        #[arg(long)]
        expr: String,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 256)]
        cells: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Dirichlet problem on the unit interval or square.
    Solve {
        #[command(flatten)]
        coef: CoefArgs,
        #[command(flatten)]
        rhs: RhsArgs,
        /// Cells per axis; sixteen per finest period when absent.
        #[arg(long)]
        cells: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// One-scale reduction on a box around the domain center.
    Reduce {
        #[command(flatten)]
        coef: CoefArgs,
        #[command(flatten)]
        rhs: RhsArgs,
        /// Separation target; the `(r/eps_n)^(theta/(n-1))` schedule when absent.
        #[arg(long = "Q")]
        big_q: Option<f64>,
        #[arg(long, default_value_t = 0.25)]
        r: f64,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 32)]
        lattice: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Convergence rates for a locally periodic coefficient.
    Rate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Uniform W^{1,p} sweep across a scale family.
    SweepCz(SweepArgs),
    /// Large-scale Lipschitz profiles across a scale family.
    SweepLip(SweepArgs),
    /// Uniform W^{1,p} sweep for a quasiperiodic coefficient.
    SweepQp(SweepArgs),
}

#[derive(Args)]
struct CoefArgs {
    /// TOML file with `expr`, `dim`, `scales` and optionally `lambda`.
    #[arg(long, conflicts_with_all = ["expr", "scales"])]
    coef: Option<PathBuf>,
    #[arg(long)]
    expr: Option<String>,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, value_delimiter = ',')]
    scales: Vec<f64>,
    #[arg(long, default_value_t = 0.25)]
    lambda: f64,
}

impl CoefArgs {
    fn build(&self) -> Result<MultiscaleCoefficient> {
        match (&self.coef, &self.expr) {
            (Some(path), _) => {
                let text = fs::read_to_string(path)?;
                let spec: CoefficientSpec = toml::from_str(&text).map_err(|e| Error::Config {
                    path: path.display().to_string(),
                    msg: e.message().to_string(),
                })?;
                spec.build()
            }
            (None, Some(expr)) => MultiscaleCoefficient::from_expr(expr, self.dim, self.scales.clone(), self.lambda),
            (None, None) => Err(Error::InvalidInput("give --coef <file> or --expr with --scales".into())),
        }
    }
}

#[derive(Args)]
struct RhsArgs {
    /// Source `F` as an expression in `x`.
    #[arg(long = "F")]
    big_f: Option<String>,
    /// Flux `f` (`[.., ..]` in two dimensions) for the `div f` term.
    #[arg(long = "f")]
    f: Option<String>,
    /// Boundary values as an expression in `x`.
    #[arg(long)]
    boundary: Option<String>,
}

impl RhsArgs {
    fn build(&self, dim: usize) -> Result<Forcing> {
        let scalar = |t: &Option<String>| -> Result<Scalar> {
            t.as_ref().map_or(Ok(Scalar::Zero), |t| Ok(Scalar::expr(FieldExpr::parse(t, dim)?)))
        };
        let f = match &self.f {
            None => Vector::Zero,
            Some(t) => Vector::expr(FieldExpr::parse(t, dim)?),
        };
        Ok(Forcing { f, big_f: scalar(&self.big_f)?, boundary: scalar(&self.boundary)? })
    }
}

#[derive(Args)]
struct OutArgs {
    /// Directory for output files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    out: OutArgs,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

/// Config file of the `rate` subcommand.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RateConfig {
    /// Expression in `x` and `y1`.
    expr: String,
    #[serde(default = "one")]
    dim: usize,
    #[serde(default = "lambda")]
    lambda: f64,
    eps: Vec<f64>,
    #[serde(rename = "F", default)]
    big_f: Option<String>,
    #[serde(default)]
    boundary: Option<String>,
    #[serde(default)]
    cells_per_period: Option<f64>,
}

fn one() -> usize {
    1
}

fn lambda() -> f64 {
    0.25
}

enum Outcome {
    Done(Value),
    Verdict(Value, bool),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.cmd) {
        Ok(Outcome::Done(v)) => {
            print_json(&v);
            ExitCode::SUCCESS
        }
        Ok(Outcome::Verdict(v, pass)) => {
            print_json(&v);
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn print_json(v: &Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn run(cmd: Cmd) -> Result<Outcome> {
    match cmd {
        Cmd::Approx { alpha, big_q, cap } => {
            let a = simultaneous_approx(&alpha, big_q, cap)?;
            let cert = verify_approx(&a, &alpha, big_q)?;
            Ok(Outcome::Done(json!({ "approximation": a, "certificate": cert })))
        }
        Cmd::Reperiodize { coef, big_q, cap } => {
            let c = coef.build()?;
            let r = reperiodize_with_cap(&c, big_q, cap)?;
            Ok(Outcome::Done(json!({ "scales": c.scales, "result": r.summary(), "separated": r.is_separated() })))
        }
        Cmd::Cell { expr, dim, cells, out } => {
            let e = parse_coefficient(&expr, dim)?;
            if e.n_slots() > 1 {
                return Err(Error::InvalidInput("cell kernels have one fast slot `y1`".into()));
            }
            let (chi, eff) = if dim == 1 {
                let a = |y: f64| e.eval_scalar(&[0.0], &[y]);
                solve_cell_1d(&a, cells)?
            } else {
                let a = |y: &[f64]| {
                    let mut m = [[0.0; 2]; 2];
                    e.eval_entries(&[0.0, 0.0], y, &mut m);
                    homlab::coefficients::Mat::new(m[0][0], m[0][1], m[1][0], m[1][1])
                };
                solve_cell_2d(&a, cells)?
            };
            let v = json!({ "effective": eff, "mean_residual": chi.mean_residual });
            if let Some(dir) = out.out {
                fs::create_dir_all(&dir)?;
                save_grid(&dir.join("corrector.hlg"), &GridFile::single(chi.values))?;
                write_json(&dir, "cell.json", &v)?;
            }
            Ok(Outcome::Done(v))
        }
        Cmd::Solve { coef, rhs, cells, out } => {
            let c = coef.build()?;
            let domain = Domain::unit(c.dim());
            let forcing = rhs.build(c.dim())?;
            let opts = match cells {
                Some(n) => SolveOptions::new(n),
                None => SolveOptions::resolving(&c, &domain, 64),
            };
            let sol = homlab::elliptic::solve_dirichlet(&c, &domain, &forcing, &opts)?;
            let v = json!({
                "cells": opts.cells,
                "h": domain.length / opts.cells as f64,
                "iterations": sol.stats.iterations,
                "residual": sol.stats.residual,
            });
            if let Some(dir) = out.out {
                fs::create_dir_all(&dir)?;
                save_grid(&dir.join("u.hlg"), &GridFile::single(sol.u))?;
                write_json(&dir, "solve.json", &v)?;
            }
            Ok(Outcome::Done(v))
        }
        Cmd::Reduce { coef, rhs, big_q, r, theta, lattice, out } => {
            let c = coef.build()?;
            let forcing = rhs.build(c.dim())?;
            let q = big_q.unwrap_or_else(|| schedule_q(r, c.finest(), theta, c.scales.len()));
            let opts = ReductionOptions { lattice, ..Default::default() };
            let red = reduce_one_scale(&c, &forcing, r, q, &opts)?;
            let v = serde_json::to_value(&red.report)?;
            if let Some(dir) = out.out {
                fs::create_dir_all(&dir)?;
                save_grid(&dir.join("u_eps.hlg"), &GridFile::single(red.u_eps))?;
                save_grid(&dir.join("u_flat.hlg"), &GridFile::single(red.u_flat))?;
                write_json(&dir, "report.json", &v)?;
            }
            Ok(Outcome::Done(v))
        }
        Cmd::Rate { config, out } => {
            let text = fs::read_to_string(&config)?;
            let de = toml::Deserializer::parse(&text).map_err(|e| Error::Config { path: String::new(), msg: e.message().into() })?;
            let cfg: RateConfig = serde_path_to_error::deserialize(de)
                .map_err(|e| Error::Config { path: e.path().to_string(), msg: e.inner().message().into() })?;
            let coef = MultiscaleCoefficient::from_expr(&cfg.expr, cfg.dim, vec![cfg.eps[0]], cfg.lambda)?;
            let rhs = RhsArgs { big_f: cfg.big_f, f: None, boundary: cfg.boundary }.build(cfg.dim)?;
            let mut opts = RateOptions::default();
            if let Some(c) = cfg.cells_per_period {
                opts.cells_per_period = c;
            }
            let table = rate_locally_periodic(&coef, &rhs, &cfg.eps, &opts)?;
            if let Some(dir) = out.out {
                fs::create_dir_all(&dir)?;
                let mut w = csv::Writer::from_path(dir.join("rates.csv"))?;
                for row in &table.rows {
                    w.serialize(row)?;
                }
                w.flush()?;
                write_json(&dir, "report.json", &serde_json::to_value(&table)?)?;
            }
            Ok(Outcome::Done(serde_json::to_value(&table)?))
        }
        Cmd::SweepCz(a) => sweep(a, run_cz_sweep),
        Cmd::SweepLip(a) => sweep(a, run_lipschitz),
        Cmd::SweepQp(a) => sweep(a, run_quasiperiodic),
    }
}

fn sweep(args: SweepArgs, f: fn(&SweepConfig) -> Result<ExperimentReport>) -> Result<Outcome> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let report = f(&cfg)?;
    let dir = args.out.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let files = emit_report(&report, &dir, &cfg.output)?;
    let verdicts: Vec<Value> = report
        .verdicts
        .iter()
        .map(|v| json!({ "name": v.name, "pass": v.pass, "detail": v.detail }))
        .collect();
    Ok(Outcome::Verdict(
        json!({
            "kind": report.kind,
            "config_hash": report.config_hash,
            "pass": report.pass,
            "verdicts": verdicts,
            "report": files.report,
        }),
        report.pass,
    ))
}
