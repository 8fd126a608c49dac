//! Command-line front end. `run` parses argv, reads CSV/JSON inputs, and
//! writes JSON results (or CSV rows for risk simulations).
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 on numerical failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::additive::{backfit_additive, fit_monotone_single_index, ComponentShape};
use crate::error::ShapeError;
use crate::inference::{
    bootstrap_ci, lrs_ci, lrs_null_cached, simulate_chernoff, simulate_lrs_null, BootstrapScheme, NullTable,
};
use crate::isotonic::{isotonic_kkt, pava, Direction};
use crate::partial_order::{fit_isotonic_po_with, parse_edge_list, OrderRelation};
use crate::projection::{Block, Series, DEFAULT_TOL};
use crate::risklab::{rate_slope, write_rows, Experiment, DEFAULT_SEED};
use crate::shapes::{
    fit_convex1d, fit_k_monotone_series, fit_k_monotone_with, fit_matrix_isotonic_with, fit_unimodal,
    verify_convex_characterization,
};

pub const SCHEMA: &str = "shapereg/1";

#[derive(Debug, Parser)]
#[command(name = "shapereg", version, about = "Shape-restricted least squares")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Random seed [default: 20170601; risk-sim: the experiment file's seed].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Solver tolerance for iterative projections.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output path (stdout when absent; the table file for sim-* commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo or bootstrap replications.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// 1 − confidence level.
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    /// Smoothing bandwidth; defaults to 0.5·n^(-1/5).
    #[arg(long, global = true)]
    bandwidth: Option<f64>,
    /// Bootstrap scheme.
    #[arg(long, global = true, default_value = "smoothed")]
    scheme: BootstrapScheme,
    /// Loss exponent for risk-sim (overrides the experiment file).
    #[arg(long, global = true)]
    p: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OrderArg {
    Coordinatewise,
    Majorization,
    Explicit,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Nondecreasing fit of x,y (or a single y column).
    FitIso { input: PathBuf },
    /// Valley-shaped unimodal fit.
    FitUnimodal { input: PathBuf },
    /// Convex fit of x,y.
    FitConvex { input: PathBuf },
    /// k-monotone fit.
    FitKmono {
        input: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Bivariate isotonic fit of a grid CSV.
    FitMatrix { input: PathBuf },
    /// Isotonic fit over a partial order on x1..xd,y rows.
    FitPo {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "coordinatewise")]
        order: OrderArg,
        /// Edge list "i j" (0-based, x_i ≼ x_j) for --order explicit.
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Shape-restricted additive fit on x1..xd,y rows.
    FitAdditive {
        input: PathBuf,
        /// Comma-separated shapes, one per coordinate: inc, dec, cvx.
        #[arg(long)]
        shapes: String,
    },
    /// Monotone single-index fit on x1..xd,y rows.
    FitSindex {
        input: PathBuf,
        #[arg(long)]
        directions: Option<usize>,
        #[arg(long, default_value_t = 50)]
        refine: usize,
    },
    /// Pointwise bootstrap confidence interval.
    CiBootstrap {
        input: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
    },
    /// Likelihood-ratio confidence interval.
    CiLrs {
        input: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        /// Existing LRS null table; simulated (and cached) when absent.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Simulate a Chernoff null table.
    SimChernoff {
        #[arg(long, default_value_t = 0.001)]
        grid: f64,
        #[arg(long, default_value_t = 3.0)]
        horizon: f64,
    },
    /// Simulate an LRS null table.
    SimLrsNull {
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Monte Carlo risks for an experiment file, as CSV rows.
    RiskSim { spec: PathBuf },
    /// Log-log slope of risk on n from a CSV with n and risk columns.
    RateSlope { input: PathBuf },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numeric(String),
}

impl From<ShapeError> for CliError {
    fn from(e: ShapeError) -> Self {
        match e {
            ShapeError::NonConvergence {
                iterations,
                violation,
                gap,
                ..
            } => CliError::Numeric(format!(
                "solver did not converge: {iterations} iterations, violation {violation:e}, sweep gap {gap:e}"
            )),
            ShapeError::DegenerateProjection => CliError::Numeric(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn usage<E: std::fmt::Display>(ctx: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Usage(format!("{ctx}: {e}"))
}

/// Numeric CSV with an optional header line.
struct Table {
    header: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let ctx = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(usage(&ctx))?;
    let mut header = None;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(usage(&ctx))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => header = Some(rec.iter().map(str::to_string).collect()),
            Err(e) => return Err(CliError::Usage(format!("{ctx}: line {}: {e}", i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{ctx}: no data rows")));
    }
    Ok(Table { header, rows })
}

/// x,y columns (or a single y column on the grid i/n).
fn read_series(path: &Path) -> Result<Series, CliError> {
    let t = read_table(path)?;
    match t.rows[0].len() {
        1 => Ok(Series::equispaced(t.rows.iter().map(|r| r[0]).collect())?),
        2 => Ok(Series::new(
            t.rows.iter().map(|r| r[0]).collect(),
            t.rows.iter().map(|r| r[1]).collect(),
        )?),
        c => Err(CliError::Usage(format!(
            "{}: expected columns x,y or y, found {c}",
            path.display()
        ))),
    }
}

/// Rows x1..xd,y split into covariates and response.
fn read_xy(path: &Path, min_d: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>), CliError> {
    let t = read_table(path)?;
    let c = t.rows[0].len();
    if c < min_d + 1 {
        return Err(CliError::Usage(format!(
            "{}: expected at least {} covariate columns plus y",
            path.display(),
            min_d
        )));
    }
    let x = t.rows.iter().map(|r| r[..c - 1].to_vec()).collect();
    let y = t.rows.iter().map(|r| r[c - 1]).collect();
    Ok((x, y))
}

fn blocks_json(blocks: &[Block]) -> Value {
    Value::Array(
        blocks
            .iter()
            .map(|b| json!({"start": b.start, "end": b.end, "value": b.value}))
            .collect(),
    )
}

fn with_schema(command: &str, mut body: Value) -> Value {
    let obj = body.as_object_mut().expect("object body");
    obj.insert("schema".into(), json!(SCHEMA));
    obj.insert("command".into(), json!(command));
    body
}

enum Output {
    Json(Value),
    Text(String),
}

fn execute(cli: &Cli) -> Result<Output, CliError> {
    let tol = cli.tol.unwrap_or(DEFAULT_TOL);
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    if !(tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {tol}")));
    }
    let out = match &cli.cmd {
        Cmd::FitIso { input } => {
            let s = read_series(input)?;
            let w = vec![1.0; s.len()];
            let fit = pava(s.y(), &w, Direction::Nondecreasing)?.with_breakpoints(s.x());
            let theta = fit.fitted();
            let blocks: Vec<Block> = fit
                .blocks
                .iter()
                .zip(&fit.values)
                .map(|(r, &v)| Block {
                    start: r.start,
                    end: r.end,
                    value: v,
                })
                .collect();
            let sse = crate::projection::sse(s.y(), &theta);
            json!({
                "n": s.len(),
                "x": s.x(),
                "theta_hat": theta,
                "blocks": blocks_json(&blocks),
                "sse": sse,
                "kkt_residual": isotonic_kkt(s.y(), &w, &theta, Direction::Nondecreasing),
            })
        }
        Cmd::FitUnimodal { input } => {
            let s = read_series(input)?;
            let f = fit_unimodal(s.y())?;
            json!({"n": s.len(), "x": s.x(), "theta_hat": f.values, "mode": f.mode, "sse": f.sse})
        }
        Cmd::FitConvex { input } => {
            let s = read_series(input)?;
            let f = fit_convex1d(&s)?;
            let knot_x: Vec<f64> = f.knots.iter().map(|&q| s.x()[q]).collect();
            json!({
                "n": s.len(),
                "x": s.x(),
                "theta_hat": f.theta_hat,
                "knots": f.knots,
                "knot_x": knot_x,
                "sse": f.sse,
                "kkt_residual": f.kkt_residual,
                "characterization_residual": verify_convex_characterization(&s, &f),
                "iterations": f.iterations,
            })
        }
        Cmd::FitKmono { input, k } => {
            let s = read_series(input)?;
            let f = if *k >= 3 {
                if !s.is_equispaced() {
                    return Err(CliError::Usage("k >= 3 needs an equispaced design".into()));
                }
                fit_k_monotone_with(s.y(), *k, tol)?
            } else {
                fit_k_monotone_series(&s, *k)?
            };
            json!({
                "n": s.len(),
                "k": k,
                "x": s.x(),
                "theta_hat": f.theta_hat,
                "knots": f.knots,
                "sse": f.sse,
                "kkt_residual": f.kkt_residual,
                "iterations": f.iterations,
            })
        }
        Cmd::FitMatrix { input } => {
            let t = read_table(input)?;
            let f = fit_matrix_isotonic_with(&t.rows, tol, None)?;
            json!({
                "rows": t.rows.len(),
                "cols": t.rows[0].len(),
                "theta_hat": f.theta_hat,
                "kkt_residual": f.kkt_residual,
                "iterations": f.iterations,
            })
        }
        Cmd::FitPo { input, order, edges } => {
            let (x, y) = read_xy(input, 0)?;
            let (rel, points) = match order {
                OrderArg::Coordinatewise => (OrderRelation::coordinatewise(), x),
                OrderArg::Majorization => (OrderRelation::weak_majorization(), x),
                OrderArg::Explicit => {
                    let path = edges
                        .as_ref()
                        .ok_or_else(|| CliError::Usage("--order explicit needs --edges".into()))?;
                    let text = std::fs::read_to_string(path).map_err(usage(&path.display().to_string()))?;
                    (OrderRelation::explicit(parse_edge_list(&text)?), Vec::new())
                }
            };
            if points.first().is_some_and(|p| p.is_empty()) {
                return Err(CliError::Usage("comparator orders need covariate columns".into()));
            }
            let f = fit_isotonic_po_with(&points, &y, &rel, tol)?;
            json!({
                "n": y.len(),
                "order": rel.kind,
                "theta_hat": f.theta_hat,
                "constraints": f.constraints,
                "kkt_residual": f.kkt_residual,
                "iterations": f.iterations,
            })
        }
        Cmd::FitAdditive { input, shapes } => {
            let (x, y) = read_xy(input, 1)?;
            let shapes: Vec<ComponentShape> =
                shapes.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?;
            let f = backfit_additive(&x, &y, &shapes, 1e-10, 500)?;
            json!({
                "n": y.len(),
                "mu_hat": f.mu_hat,
                "components": f.components,
                "fitted": f.fitted,
                "sse": f.sse,
                "backfit_iterations": f.backfit_iterations,
            })
        }
        Cmd::FitSindex {
            input,
            directions,
            refine,
        } => {
            let (x, y) = read_xy(input, 2)?;
            let d = x[0].len();
            let m = directions.unwrap_or(if d == 2 { 720 } else { 512 });
            let f = fit_monotone_single_index(&x, &y, m, *refine)?;
            json!({
                "n": y.len(),
                "beta_hat": f.beta_hat,
                "index": f.psi_hat.breakpoints,
                "psi_hat": f.psi_hat.fitted(),
                "sse": f.sse,
            })
        }
        Cmd::CiBootstrap { input, t } => {
            let s = read_series(input)?;
            let reps = cli.reps.unwrap_or(1000);
            let ci = bootstrap_ci(&s, *t, cli.alpha, reps, cli.scheme, cli.bandwidth, seed)?;
            serde_json::to_value(ci).expect("serializable interval")
        }
        Cmd::CiLrs { input, t, table } => {
            let s = read_series(input)?;
            let tab = match table {
                Some(p) => NullTable::read_from(p)?,
                None => lrs_null_cached(cli.reps.unwrap_or(10_000), s.len().max(200), seed)?,
            };
            let ci = lrs_ci(&s, *t, cli.alpha, &tab)?;
            serde_json::to_value(ci).expect("serializable interval")
        }
        Cmd::SimChernoff { grid, horizon } => {
            let tab = simulate_chernoff(cli.reps.unwrap_or(100_000), *grid, *horizon, seed)?;
            table_summary(&tab, cli.out.as_deref(), json!({"grid_step": grid, "horizon": horizon}))?
        }
        Cmd::SimLrsNull { n } => {
            let tab = simulate_lrs_null(cli.reps.unwrap_or(10_000), *n, seed)?;
            table_summary(&tab, cli.out.as_deref(), json!({"n": n}))?
        }
        Cmd::RiskSim { spec } => {
            let text = std::fs::read_to_string(spec).map_err(usage(&spec.display().to_string()))?;
            let mut exp: Experiment = serde_json::from_str(&text).map_err(usage(&spec.display().to_string()))?;
            if let Some(r) = cli.reps {
                exp.reps = r;
            }
            if let Some(p) = cli.p {
                exp.p = vec![p];
            }
            if let Some(seed) = cli.seed {
                exp.seed = seed;
            }
            let rows = exp.run()?;
            let mut buf = Vec::new();
            write_rows(&mut buf, &rows)?;
            return Ok(Output::Text(String::from_utf8(buf).expect("utf-8 csv")));
        }
        Cmd::RateSlope { input } => {
            let t = read_table(input)?;
            let (ni, ri) = match &t.header {
                Some(h) => {
                    let find = |name: &str| {
                        h.iter()
                            .position(|c| c == name)
                            .ok_or_else(|| CliError::Usage(format!("missing column {name:?}")))
                    };
                    (find("n")?, find("risk")?)
                }
                None if t.rows[0].len() == 2 => (0, 1),
                None => return Err(CliError::Usage("headerless input needs exactly two columns n,risk".into())),
            };
            let pairs: Vec<(f64, f64)> = t.rows.iter().map(|r| (r[ni], r[ri])).collect();
            let slope = rate_slope(&pairs)?;
            json!({"points": pairs, "slope": slope})
        }
    };
    Ok(Output::Json(out))
}

fn table_summary(tab: &NullTable, out: Option<&Path>, extra: Value) -> Result<Value, CliError> {
    if let Some(p) = out {
        tab.write_to(p)?;
    }
    let mut v = json!({
        "kind": tab.kind(),
        "reps": tab.len(),
        "seed": tab.seed(),
        "mean": tab.mean(),
        "quantiles": {
            "0.025": tab.quantile(0.025),
            "0.05": tab.quantile(0.05),
            "0.5": tab.quantile(0.5),
            "0.95": tab.quantile(0.95),
            "0.975": tab.quantile(0.975),
            "0.99": tab.quantile(0.99),
        },
        "table": out.map(|p| p.display().to_string()),
    });
    for (k, val) in extra.as_object().expect("object").iter() {
        v.as_object_mut().unwrap().insert(k.clone(), val.clone());
    }
    Ok(v)
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::FitIso { .. } => "fit-iso",
        Cmd::FitUnimodal { .. } => "fit-unimodal",
        Cmd::FitConvex { .. } => "fit-convex",
        Cmd::FitKmono { .. } => "fit-kmono",
        Cmd::FitMatrix { .. } => "fit-matrix",
        Cmd::FitPo { .. } => "fit-po",
        Cmd::FitAdditive { .. } => "fit-additive",
        Cmd::FitSindex { .. } => "fit-sindex",
        Cmd::CiBootstrap { .. } => "ci-bootstrap",
        Cmd::CiLrs { .. } => "ci-lrs",
        Cmd::SimChernoff { .. } => "sim-chernoff",
        Cmd::SimLrsNull { .. } => "sim-lrs-null",
        Cmd::RiskSim { .. } => "risk-sim",
        Cmd::RateSlope { .. } => "rate-slope",
    }
}

/// Runs the CLI with explicit output streams and returns the exit code.
pub fn run_with<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let name = command_name(&cli.cmd);
    let result = execute(&cli).map(|o| match o {
        Output::Json(v) => {
            let mut s = serde_json::to_string_pretty(&with_schema(name, v)).expect("json");
            s.push('\n');
            s
        }
        Output::Text(t) => t,
    });
    match result {
        Ok(text) => {
            let sink_is_table = matches!(cli.cmd, Cmd::SimChernoff { .. } | Cmd::SimLrsNull { .. });
            match (&cli.out, sink_is_table) {
                (Some(p), false) => {
                    if let Err(e) = std::fs::write(p, text) {
                        let _ = writeln!(stderr, "error: {}: {e}", p.display());
                        return 1;
                    }
                }
                _ => {
                    let _ = stdout.write_all(text.as_bytes());
                }
            }
            0
        }
        Err(CliError::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            1
        }
        Err(CliError::Numeric(m)) => {
            let _ = writeln!(stderr, "numerical failure: {m}");
            2
        }
    }
}

/// Runs the CLI on the process streams.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
