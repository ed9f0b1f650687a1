//! Command-line front end: `simulate`, `identify`, `bias-check`, `validate`.
//!
//! Model files are JSON documents
//! `{"n_h":…, "n_v":…, "n_y":…, "A1":[[…]], "A2", "A3", "A4", "C1", "C2",
//! "K1", "K2", "Re", optional "Q", "R", "S"}` with row-major nested arrays.
//! A dimension of zero takes empty arrays for the matrices it removes.
//!
//! Grid files come in three formats, detected on read:
//! - text: header `R2D1 n N M`, then one line `r s v_0 … v_{n−1}` per grid
//!   point with `r` as the outer loop;
//! - binary: `R2DB`, then `n`, `N`, `M` as little-endian `u64`, then the
//!   values as little-endian `f64` in the same order;
//! - json: `{"n":…, "N":…, "M":…, "values":[…]}`, values flat in the same order.
//!
//! Every command writes a JSON report with a `schema_version` field, to
//! stdout or to `<out>/report.json`. Non-finite numbers are written as `null`.
//! Exit codes: 0 success, 1 input or configuration error, 2 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::bias::{bias_monte_carlo, decay_exponent, BiasRow};
use crate::error::{Error, Result};
use crate::grid::GridData;
use crate::hankel::{required_rows, Extent};
use crate::ident::{eigen_pairs, identify, IdentificationResult, IdentifyConfig};
use crate::linalg::Mat;
use crate::model::{mat_to_rows, simulate, solve_riccati, validate_model, InitialCondition, RoesserModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "roesser2d", version, about = "Subspace identification of 2-D Roesser models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the innovations form of a model on a grid.
    Simulate(SimulateArgs),
    /// Identify a model from an output grid.
    Identify(IdentifyArgs),
    /// Compare the closed-form state cross covariance with Monte Carlo estimates.
    BiasCheck(BiasArgs),
    /// Check a model's stability, positivity conditions and covariance equations.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Binary,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Text => "r2d",
            Format::Binary => "r2db",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    Zero,
    Stationary,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub i: usize,
    #[arg(long, default_value_t = 200)]
    pub j: usize,
    /// Last column index `M`.
    #[arg(long = "m", default_value_t = 20)]
    pub big_m: usize,
    /// Last row index `N`; defaults to `2i + j − 2`.
    #[arg(long = "n")]
    pub big_n: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Init::Zero)]
    pub init: Init,
    /// Also write the state and innovation grids.
    #[arg(long)]
    pub emit_states: bool,
    /// Directory for the grid files and the report.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, clap::Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub i: usize,
    /// Defaults to `N − 2i + 2`.
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long)]
    pub order_h: Option<usize>,
    #[arg(long)]
    pub order_v: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub iterations: usize,
    /// Caps the worker threads of the per-column solves.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Accept `N > 2i + j − 2` and drop trailing rows.
    #[arg(long)]
    pub truncate: bool,
    /// True model; adds an eigenvalue error table to the report.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Write the estimated state grids (requires --out).
    #[arg(long)]
    pub emit_states: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, clap::Args)]
pub struct BiasArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub i: Vec<usize>,
    #[arg(long = "m", value_delimiter = ',', default_value = "1,2")]
    pub big_m: Vec<usize>,
    /// Total column counts `j̄ = j·(M+1)`; `j` is rounded to the nearest integer.
    #[arg(long, value_delimiter = ',', default_value = "500,2000,8000")]
    pub jbar: Vec<usize>,
    /// Number of Monte Carlo grids.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// First seed; grids use `seed..seed+seeds`.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Reports go to `stdout`, errors to stderr.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cmd: &Command, stdout: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Identify(a) => cmd_identify(a, stdout),
        Command::BiasCheck(a) => cmd_bias_check(a, stdout),
        Command::Validate(a) => cmd_validate(a, stdout),
    }
}

pub fn load_model(path: &Path) -> Result<RoesserModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    RoesserModel::from_json(&text)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonGrid {
    n: usize,
    #[serde(rename = "N")]
    big_n: usize,
    #[serde(rename = "M")]
    big_m: usize,
    values: Vec<f64>,
}

pub fn read_grid(path: &Path) -> Result<GridData> {
    let bytes = fs::read(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    if bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{') {
        let g: JsonGrid = serde_json::from_slice(&bytes)?;
        if g.values.len() != g.n * (g.big_n + 1) * (g.big_m + 1) {
            return Err(Error::Input(format!("json grid has {} values, expected n(N+1)(M+1)", g.values.len())));
        }
        let (n, m1) = (g.n, g.big_m + 1);
        return Ok(GridData::from_fn(g.n, g.big_n, g.big_m, |r, s, c| g.values[(r * m1 + s) * n + c]));
    }
    GridData::read(&bytes[..])
}

pub fn write_grid(g: &GridData, path: &Path, format: Format) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        Format::Text => g.write_text(&mut buf)?,
        Format::Binary => g.write_binary(&mut buf)?,
        Format::Json => {
            let mut values = Vec::with_capacity(g.as_slice().len());
            for r in 0..=g.rows() {
                for s in 0..=g.cols() {
                    values.extend_from_slice(g.get(r, s));
                }
            }
            let doc = json!({ "n": g.dim(), "N": g.rows(), "M": g.cols(), "values": values });
            buf = serde_json::to_vec(&doc)?;
        }
    }
    fs::write(path, buf).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn report(command: &str, config: Value, result: Value) -> Value {
    json!({ "schema_version": SCHEMA_VERSION, "command": command, "config": config, "result": result })
}

fn emit(doc: &Value, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("report.json"), text + "\n")?;
        }
        None => writeln!(stdout, "{text}")?,
    }
    Ok(())
}

fn model_value(m: &RoesserModel) -> Value {
    serde_json::from_str(&m.to_json()).expect("model json round-trips")
}

fn rows(m: &Mat) -> Value {
    json!(mat_to_rows(m))
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let m = load_model(&a.model)?;
    let validation = validate_model(&m);
    if !validation.pass {
        let doc = report("simulate", json!({ "model": a.model }), json!({ "validation": validation }));
        emit(&doc, None, stdout)?;
        return Err(Error::Input(format!("invalid model: {}", validation.failures.join("; "))));
    }
    let big_n = a.big_n.unwrap_or_else(|| required_rows(a.i, a.j));
    let init = match a.init {
        Init::Zero => InitialCondition::Zero,
        Init::Stationary => InitialCondition::Stationary,
    };
    let sim = simulate(&m, big_n, a.big_m, a.seed, init)?;
    fs::create_dir_all(&a.out)?;
    let ext = a.format.extension();
    let mut files = vec![];
    let mut grids = vec![("y", &sim.y)];
    if a.emit_states {
        grids.extend([("xh", &sim.xh), ("xv", &sim.xv), ("e", &sim.e)]);
    }
    for (name, g) in grids {
        let file = format!("{name}.{ext}");
        write_grid(g, &a.out.join(&file), a.format)?;
        files.push(file);
    }
    let config = json!({
        "model": a.model, "i": a.i, "j": a.j, "N": big_n, "M": a.big_m, "seed": a.seed,
        "init": init, "emit_states": a.emit_states, "format": ext,
    });
    let result = json!({
        "files": files,
        "n_y": m.n_y,
        "recurrence_residual": crate::model::recurrence_residual(&m, &sim),
    });
    emit(&report("simulate", config, result), Some(&a.out), stdout)?;
    Ok(0)
}

/// Pairs eigenvalues of a true and an estimated block in the order of
/// decreasing magnitude.
fn eigen_table(name: &str, truth: &Mat, est: &Mat) -> Value {
    let (t, e) = (eigen_pairs(truth), eigen_pairs(est));
    let errors: Option<Vec<f64>> =
        (t.len() == e.len()).then(|| t.iter().zip(&e).map(|(x, y)| (x.0 - y.0).hypot(x.1 - y.1)).collect());
    json!({ "block": name, "true": t, "estimated": e, "abs_error": errors })
}

fn identification_value(r: &IdentificationResult) -> Value {
    let p = &r.params;
    json!({
        "n_h": r.n_h,
        "n_v": r.n_v,
        "model": model_value(&p.model),
        "Pi": rows(&p.pi),
        "Q": rows(&p.q),
        "R": rows(&p.r),
        "S": rows(&p.s),
        "G": rows(&p.g),
        "Lambda00": rows(&p.lambda00),
        "initial_h": rows(&r.initial_h),
        "initial_v": rows(&r.initial_v),
        "diagnostics": r.diagnostics,
    })
}

fn cmd_identify(a: &IdentifyArgs, stdout: &mut dyn Write) -> Result<i32> {
    if a.emit_states && a.out.is_none() {
        return Err(Error::Input("--emit-states needs --out".into()));
    }
    let t0 = Instant::now();
    let y = read_grid(&a.data)?;
    let truth = a.model.as_deref().map(load_model).transpose()?;
    let j = match a.j {
        Some(j) => j,
        None => (y.rows() + 2).checked_sub(2 * a.i).filter(|&j| j > 0).ok_or_else(|| {
            Error::Input(format!("grid has N={} which is too small for N=2i+j-2 with i={}", y.rows(), a.i))
        })?,
    };
    let cfg = IdentifyConfig {
        i: a.i,
        j,
        order_h: a.order_h,
        order_v: a.order_v,
        iterations: a.iterations,
        extent: if a.truncate { Extent::Truncate } else { Extent::Exact },
    };
    let read_time = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let res = match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Input(format!("thread pool: {e}")))?
            .install(|| identify(&y, &cfg))?,
        None => identify(&y, &cfg)?,
    };
    let ident_time = t1.elapsed().as_secs_f64();

    let mut result = identification_value(&res);
    if let Some(m) = &truth {
        let est = res.model();
        let lambda_true = solve_riccati(m)?.lambda00;
        result["eigenvalue_errors"] = json!([eigen_table("A1", &m.a1, &est.a1), eigen_table("A4", &m.a4, &est.a4)]);
        result["lambda00_relative_error"] =
            json!((&res.params.lambda00 - &lambda_true).norm() / lambda_true.norm().max(f64::MIN_POSITIVE));
    }
    if let (true, Some(dir)) = (a.emit_states, &a.out) {
        fs::create_dir_all(dir)?;
        let ext = a.format.extension();
        write_grid(&res.xh_grid, &dir.join(format!("xh.{ext}")), a.format)?;
        write_grid(&res.xv_grid, &dir.join(format!("xv.{ext}")), a.format)?;
        result["files"] = json!([format!("xh.{ext}"), format!("xv.{ext}")]);
    }
    let config = json!({
        "data": a.data, "i": a.i, "j": j, "N": y.rows(), "M": y.cols(),
        "order_h": a.order_h, "order_v": a.order_v, "iterations": a.iterations,
        "truncate": a.truncate, "threads": a.threads, "model": a.model,
    });
    let mut doc = report("identify", config, result);
    if a.timings {
        doc["timings"] = json!({ "read_seconds": read_time, "identify_seconds": ident_time });
    }
    emit(&doc, a.out.as_deref(), stdout)?;
    Ok(0)
}

fn cmd_bias_check(a: &BiasArgs, stdout: &mut dyn Write) -> Result<i32> {
    let m = load_model(&a.model)?;
    let validation = validate_model(&m);
    if !validation.stable {
        return Err(Error::Input(format!("invalid model: {}", validation.failures.join("; "))));
    }
    if a.i.is_empty() || a.big_m.is_empty() || a.jbar.is_empty() {
        return Err(Error::Input("--i, --m and --jbar need at least one value".into()));
    }
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
    let mut table: Vec<BiasRow> = Vec::new();
    let mut fits = Vec::new();
    for &i in &a.i {
        for &big_m in &a.big_m {
            let mut group = Vec::new();
            for &jbar in &a.jbar {
                let j = ((jbar as f64 / (big_m + 1) as f64).round() as usize).max(1);
                group.push(bias_monte_carlo(&m, i, big_m, j, &seeds)?);
            }
            if group.len() >= 2 {
                let x: Vec<f64> = group.iter().map(|r| r.jbar as f64).collect();
                let y: Vec<f64> = group.iter().map(|r| r.deviation_norm).collect();
                fits.push(json!({ "i": i, "M": big_m, "decay_exponent": decay_exponent(&x, &y) }));
            }
            table.extend(group);
        }
    }
    let uncorrelated = table.iter().all(|r| r.assumed_uncorrelated);
    let mut note = if uncorrelated {
        "P_hv is zero: the closed-form cross covariance vanishes".to_string()
    } else {
        "P_hv is nonzero: the closed form leaves a nonzero analytic floor".to_string()
    };
    if !uncorrelated && m.a2.iter().any(|x| *x != 0.0) {
        note.push_str("; A2 is nonzero, so the closed form omits the horizontal-to-vertical path and is approximate");
    }
    let config = json!({ "model": a.model, "i": a.i, "M": a.big_m, "jbar": a.jbar, "seeds": seeds });
    let result = json!({
        "p_hv_norm": validation.pi_hv_norm,
        "rows": table,
        "decay": fits,
        "all_within_band": table.iter().all(|r| r.within_band),
        "note": note,
    });
    emit(&report("bias-check", config, result), a.out.as_deref(), stdout)?;
    Ok(0)
}

fn cmd_validate(a: &ValidateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let m = load_model(&a.model)?;
    let validation = validate_model(&m);
    let mut notes = Vec::new();
    if !m.has_noise() {
        notes.push("Q, R, S not supplied: only the forward Riccati form was checked");
    }
    if m.has_noise() && validation.pi_hv_norm.is_some_and(|x| x > 1e-10) {
        notes.push("Pi_hv is nonzero: the block-diagonal Pi is not the stationary state covariance, so Sigma = Pi - P is not expected");
    }
    let covariance = if validation.stable {
        match solve_riccati(&m) {
            Ok(c) => json!({ "residuals": c.residuals, "riccati_p_hv_norm": c.p_hv.norm(), "Lambda00": rows(&c.lambda00) }),
            Err(e) => json!({ "error": e.to_string() }),
        }
    } else {
        notes.push("unstable model: covariance equations not solved");
        Value::Null
    };
    let result = json!({ "validation": validation, "covariances": covariance, "notes": notes });
    emit(&report("validate", json!({ "model": a.model }), result), a.out.as_deref(), stdout)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("roesser2d-cli-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn grid_formats_round_trip() {
        let d = tmp("formats");
        let g = GridData::from_fn(2, 4, 3, |r, s, c| (r as f64 + 0.1 * s as f64) * if c == 0 { 1.0 } else { -1.0 / 3.0 });
        for f in [Format::Text, Format::Binary, Format::Json] {
            let p = d.join(format!("g.{}", f.extension()));
            write_grid(&g, &p, f).unwrap();
            assert_eq!(read_grid(&p).unwrap(), g, "{f:?}");
        }
    }

    #[test]
    fn usage_errors_exit_one() {
        let mut out = Vec::new();
        assert_eq!(run(["roesser2d", "simulate"], &mut out), 1);
        assert_eq!(run(["roesser2d", "frobnicate"], &mut out), 1);
        assert_eq!(run(["roesser2d", "validate", "--model", "/nonexistent/model.json"], &mut out), 1);
    }

    #[test]
    fn eigen_table_pairs_by_magnitude() {
        let t = Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.2]);
        let e = Mat::from_row_slice(2, 2, &[-0.25, 0.0, 0.0, 0.45]);
        let v = eigen_table("A1", &t, &e);
        let errs: Vec<f64> = serde_json::from_value(v["abs_error"].clone()).unwrap();
        assert!((errs[0] - 0.05).abs() < 1e-15 && (errs[1] - 0.05).abs() < 1e-15);
        let short = eigen_table("A1", &t, &Mat::from_element(1, 1, 0.5));
        assert!(short["abs_error"].is_null());
    }
}
