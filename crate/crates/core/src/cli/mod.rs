//! Command-line front end: `isac solve | sweep | verify | compare`.
//!
//! Exit codes: 0 success, 2 schema or usage error, 3 infeasible,
//! 4 numerical failure, 5 verification failed.

pub mod schema;
pub mod table;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::allocators::{allocate, AllocationResult, Auxiliary, Scheme, StopReason};
use crate::allocators::{PowerAllocation, RobustnessModel};
use crate::channel::rate;
use crate::fisher::fim;
use crate::geometry::Scenario;
use crate::montecarlo::{empirical_outage, outage_threshold, Family, LseSampler, OutageEstimate};

pub use schema::{MonteCarloSection, Robustness, ScenarioFile, SchemaError, SweepParameter, SweepSection};
pub use table::{classify, write_csv, ResultRow, SAMPLERS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

/// Version of the JSON document written by `verify`.
pub const VERIFY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "isac", version, about = "Robust power allocation for multi-UAV ISAC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `montecarlo.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one allocator and print a report.
    Solve {
        #[command(flatten)]
        common: Common,
        /// nonrobust, s-ao, bi-sca or cvar-ao; defaults to `allocator.scheme`.
        #[arg(long)]
        scheme: Option<String>,
        /// Fill the wall_time_s column.
        #[arg(long)]
        timing: bool,
    },
    /// Re-run schemes over a parameter grid and write CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// rate_floor, total_power, delta or p_out; defaults to `sweep.parameter`.
        #[arg(long)]
        parameter: Option<String>,
        /// Comma-separated grid; defaults to `sweep.grid`.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        /// Scheme to run (repeatable); defaults to `sweep.schemes`.
        #[arg(long)]
        scheme: Vec<String>,
        /// Worker threads.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        timing: bool,
    },
    /// Solve, then check outage by Monte-Carlo; writes a JSON report.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Run all four schemes on one scenario and write CSV.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        timing: bool,
    },
}

/// Failure before any allocator ran.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Schema(SchemaError),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Schema(e) => write!(f, "schema error: {e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::Schema(e)
    }
}

fn schema(path: &str, message: impl Into<String>) -> CliError {
    CliError::Schema(SchemaError {
        path: path.into(),
        message: message.into(),
    })
}

pub fn load(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(ScenarioFile::parse(&text)?)
}

fn pick_scheme(file: &ScenarioFile, flag: Option<&str>) -> Result<Scheme, CliError> {
    let scheme = match flag {
        Some(s) => Scheme::parse(s).ok_or_else(|| schema("--scheme", format!("unknown scheme {s:?}")))?,
        None => file
            .scheme
            .ok_or_else(|| schema("allocator.scheme", "missing; pass --scheme"))?,
    };
    file.check_robustness(scheme)?;
    Ok(scheme)
}

fn run(file: &ScenarioFile, scheme: Scheme) -> AllocationResult {
    allocate(scheme, &file.scenario, &file.config, file.delta(), file.p_out())
}

/// Sampler for one outage column, or `None` when its parameter is missing.
fn column_sampler(file: &ScenarioFile, column: &str, fim: nalgebra::Matrix3<f64>, seed: u64) -> Option<LseSampler> {
    let moments = RobustnessModel::ArbitraryMoments {
        p_out: file.robustness.p_out.unwrap_or(0.5),
    };
    let built = match column {
        "ellipsoid" => LseSampler::new(
            RobustnessModel::Ellipsoid {
                delta: file.robustness.delta?,
            },
            fim,
            seed,
            None,
        ),
        other => LseSampler::new(moments, fim, seed, Some(other.parse::<Family>().ok()?)),
    };
    built.ok()
}

fn batch(sampler: &LseSampler, mc: &MonteCarloSection) -> crate::Result<Vec<nalgebra::Vector3<f64>>> {
    let mut s = sampler.sample(mc.samples)?;
    if matches!(sampler.model(), RobustnessModel::Ellipsoid { .. }) && mc.boundary_samples > 0 {
        s.extend(sampler.boundary_samples(mc.boundary_samples)?);
    }
    Ok(s)
}

fn max_fraction(o: &[OutageEstimate]) -> f64 {
    o.iter().map(|e| e.fraction).fold(0.0, f64::max)
}

fn fill_outage(file: &ScenarioFile, mc: &MonteCarloSection, row: &mut ResultRow) {
    let alloc = PowerAllocation {
        sensing: row.sensing.clone(),
        comm: row.comm.clone(),
    };
    let Ok(info) = fim(&file.scenario, &alloc.sensing) else {
        return;
    };
    for (i, col) in SAMPLERS.iter().enumerate() {
        let Some(sampler) = column_sampler(file, col, info.matrix, mc.seed) else {
            continue;
        };
        if let Ok(samples) = batch(&sampler, mc) {
            if let Ok(o) = empirical_outage(&file.scenario, &alloc, &samples, file.config.rate_floor) {
                row.outage[i] = Some(max_fraction(&o));
            }
        }
    }
}

fn row_for(file: &ScenarioFile, scheme: Scheme, timing: bool) -> ResultRow {
    let start = Instant::now();
    let result = run(file, scheme);
    let elapsed = start.elapsed().as_secs_f64();
    let mut row = match &result {
        Ok(o) => ResultRow::success(scheme, o),
        Err(f) => ResultRow::failure(scheme, f),
    };
    if row.is_success() {
        if let Some(mc) = &file.montecarlo {
            fill_outage(file, mc, &mut row);
        }
    }
    if timing {
        row.wall_time = Some(elapsed);
    }
    row
}

fn checked_row(file: &ScenarioFile, scheme: Scheme, timing: bool) -> ResultRow {
    match file.check_robustness(scheme) {
        Ok(()) => row_for(file, scheme, timing),
        Err(e) => ResultRow {
            scheme,
            parameter: None,
            value: None,
            status: "invalid-input".into(),
            message: e.to_string(),
            crb: None,
            sensing: Vec::new(),
            comm: Vec::new(),
            iterations: None,
            outage: [None; 4],
            wall_time: None,
        },
    }
}

fn with_seed(mut file: ScenarioFile, seed: Option<u64>) -> ScenarioFile {
    if let (Some(s), Some(mc)) = (seed, file.montecarlo.as_mut()) {
        mc.seed = s;
    }
    file
}

fn exit_for(rows: &[ResultRow]) -> i32 {
    if rows.is_empty() || rows.iter().any(ResultRow::is_success) {
        return EXIT_OK;
    }
    match rows[0].status.as_str() {
        "infeasible" => EXIT_INFEASIBLE,
        "invalid-input" => EXIT_SCHEMA,
        _ => EXIT_NUMERICAL,
    }
}

fn pool(workers: Option<usize>) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("thread pool")
}

/// Output of `solve`: its row, a readable report and the exit code.
pub struct SolveOutput {
    pub row: ResultRow,
    pub report: String,
    pub exit_code: i32,
}

pub fn cmd_solve(file: &ScenarioFile, scheme: Scheme, timing: bool) -> SolveOutput {
    let start = Instant::now();
    let result = run(file, scheme);
    let elapsed = start.elapsed().as_secs_f64();
    let mut report = String::new();
    let _ = writeln!(report, "scheme: {}", scheme.name());
    let (mut row, exit_code) = match &result {
        Ok(o) => {
            let _ = writeln!(report, "status: optimal");
            let _ = writeln!(report, "crb (m^2): {:.9e}", o.crb);
            let _ = writeln!(
                report,
                "{:>4} {:>16} {:>16} {:>16}",
                "uav", "P_s (W)", "P_c (W)", "rate at u_hat"
            );
            for k in 0..file.scenario.uav_count() {
                let r = rate(&file.scenario, k, o.allocation.comm[k], &nalgebra::Vector3::zeros()).unwrap_or(f64::NAN);
                let _ = writeln!(
                    report,
                    "{:>4} {:>16.9e} {:>16.9e} {:>16.9}",
                    k + 1,
                    o.allocation.sensing[k],
                    o.allocation.comm[k],
                    r
                );
            }
            let _ = writeln!(
                report,
                "total power (W): {:.9e} of {:.9e}",
                o.allocation.total(),
                file.config.total_power
            );
            let _ = writeln!(
                report,
                "iterations: {} ({})",
                o.trace.iterations(),
                stop_text(&o.trace.stop)
            );
            for rec in &o.trace.records {
                let aux = match &rec.auxiliary {
                    Auxiliary::None => String::new(),
                    Auxiliary::Multipliers(l) => format!("  lambda [{}]", short(l)),
                    Auxiliary::Bernstein { omega, rho } => format!("  omega [{}] rho {rho:.6e}", short(omega)),
                    Auxiliary::Cvar { chi, .. } => format!("  chi [{}]", short(chi)),
                };
                let _ = writeln!(
                    report,
                    "  #{:<3} tr(J^-1) {:.12e}  step {:.3e}{aux}",
                    rec.iteration, rec.objective, rec.step
                );
            }
            (ResultRow::success(scheme, o), EXIT_OK)
        }
        Err(f) => {
            let (status, code) = classify(&f.error);
            let _ = writeln!(report, "status: {status}");
            let _ = writeln!(report, "error: {f}");
            if let Some(last) = &f.last_feasible {
                let _ = writeln!(report, "last feasible sensing: {:?}", last.sensing);
                let _ = writeln!(report, "last feasible comm: {:?}", last.comm);
            }
            (ResultRow::failure(scheme, f), code)
        }
    };
    if row.is_success() {
        if let Some(mc) = &file.montecarlo {
            fill_outage(file, mc, &mut row);
            for (name, o) in SAMPLERS.iter().zip(&row.outage) {
                if let Some(v) = o {
                    let _ = writeln!(report, "outage [{name}]: {v:.6}");
                }
            }
        }
    }
    if timing {
        row.wall_time = Some(elapsed);
    }
    SolveOutput { row, report, exit_code }
}

fn short(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(", ")
}

fn stop_text(stop: &StopReason) -> String {
    match stop {
        StopReason::Converged => "converged".into(),
        StopReason::MaxIterations => "iteration limit".into(),
        StopReason::Stalled(why) => format!("stopped: {why}"),
        StopReason::Direct => "single convex program".into(),
    }
}

/// Applies one sweep value to a copy of `file`.
pub fn with_parameter(file: &ScenarioFile, parameter: SweepParameter, value: f64) -> ScenarioFile {
    let mut f = file.clone();
    match parameter {
        SweepParameter::RateFloor => f.config.rate_floor = value,
        SweepParameter::TotalPower => f.config.total_power = value,
        SweepParameter::Delta => f.robustness.delta = Some(value),
        SweepParameter::POut => f.robustness.p_out = Some(value),
    }
    f
}

pub fn cmd_sweep(
    file: &ScenarioFile,
    parameter: SweepParameter,
    grid: &[f64],
    schemes: &[Scheme],
    workers: Option<usize>,
    timing: bool,
) -> Vec<ResultRow> {
    let jobs: Vec<(f64, Scheme)> = grid
        .iter()
        .flat_map(|v| schemes.iter().map(move |s| (*v, *s)))
        .collect();
    pool(workers).install(|| {
        jobs.par_iter()
            .map(|(v, s)| {
                let f = with_parameter(file, parameter, *v);
                let mut row = checked_row(&f, *s, timing);
                row.parameter = Some(parameter.name().to_string());
                row.value = Some(*v);
                row
            })
            .collect()
    })
}

/// Runs every scheme; a scheme whose robustness parameter is missing gets an
/// `invalid-input` row.
pub fn cmd_compare(file: &ScenarioFile, workers: Option<usize>, timing: bool) -> Vec<ResultRow> {
    pool(workers).install(|| Scheme::ALL.par_iter().map(|s| checked_row(file, *s, timing)).collect())
}

/// Verification checks a scheme must pass: `(label, sampler, zero_required)`.
fn verify_plan(
    file: &ScenarioFile,
    scheme: Scheme,
    mc: &MonteCarloSection,
    info: nalgebra::Matrix3<f64>,
) -> crate::Result<Vec<(String, LseSampler, bool)>> {
    let p_out = file.robustness.p_out;
    Ok(match scheme {
        Scheme::SAo => vec![(
            "ellipsoid".into(),
            LseSampler::new(RobustnessModel::Ellipsoid { delta: file.delta() }, info, mc.seed, None)?,
            true,
        )],
        Scheme::NonRobust | Scheme::BiSca => vec![(
            "gaussian".into(),
            LseSampler::new(
                RobustnessModel::Gaussian {
                    p_out: p_out.unwrap_or(f64::NAN),
                },
                info,
                mc.seed,
                None,
            )?,
            false,
        )],
        Scheme::CvarAo => mc
            .families
            .iter()
            .map(|f| {
                let model = RobustnessModel::ArbitraryMoments { p_out: file.p_out() };
                Ok((
                    f.name().to_string(),
                    LseSampler::new(model, info, mc.seed, Some(*f))?,
                    false,
                ))
            })
            .collect::<crate::Result<Vec<_>>>()?,
    })
}

/// Output of `verify`: the JSON report and the exit code.
pub struct VerifyOutput {
    pub report: Value,
    pub exit_code: i32,
}

pub fn cmd_verify(file: &ScenarioFile, scheme: Scheme) -> Result<VerifyOutput, CliError> {
    let mc = file
        .montecarlo
        .as_ref()
        .ok_or_else(|| schema("montecarlo", "missing required key for verify"))?;
    if scheme != Scheme::SAo && file.robustness.p_out.is_none() {
        return Err(schema("robustness.p_out", "missing required key for verify"));
    }
    let mut report = json!({
        "schema_version": VERIFY_SCHEMA_VERSION,
        "scheme": scheme.name(),
        "rate_floor": file.config.rate_floor,
        "total_power": file.config.total_power,
        "delta": file.robustness.delta,
        "p_out": file.robustness.p_out,
        "samples": mc.samples,
        "boundary_samples": if scheme == Scheme::SAo { mc.boundary_samples } else { 0 },
        "seed": mc.seed,
    });
    let outcome = match run(file, scheme) {
        Ok(o) => o,
        Err(f) => {
            let (status, code) = classify(&f.error);
            report["status"] = json!(status);
            report["message"] = json!(f.to_string());
            report["pass"] = json!(false);
            return Ok(VerifyOutput {
                report,
                exit_code: code,
            });
        }
    };
    report["status"] = json!("optimal");
    report["crb"] = json!(outcome.crb);
    report["allocation"] = json!({
        "sensing": outcome.allocation.sensing,
        "comm": outcome.allocation.comm,
    });
    let numerical = |e: crate::Error| VerifyOutput {
        report: json!({ "schema_version": VERIFY_SCHEMA_VERSION, "status": "numerical-failure", "message": e.to_string(), "pass": false }),
        exit_code: EXIT_NUMERICAL,
    };
    let info = match fim(&file.scenario, &outcome.allocation.sensing) {
        Ok(i) => i.matrix,
        Err(e) => return Ok(numerical(e)),
    };
    let plan = match verify_plan(file, scheme, mc, info) {
        Ok(p) => p,
        Err(e) => return Ok(numerical(e)),
    };
    let mut checks = Vec::new();
    let mut all_pass = true;
    for (label, sampler, zero) in plan {
        let samples = match batch(&sampler, mc) {
            Ok(s) => s,
            Err(e) => return Ok(numerical(e)),
        };
        let per_uav = match empirical_outage(&file.scenario, &outcome.allocation, &samples, file.config.rate_floor) {
            Ok(o) => o,
            Err(e) => return Ok(numerical(e)),
        };
        let threshold = if zero {
            0.0
        } else {
            outage_threshold(file.p_out(), samples.len())
        };
        let worst = max_fraction(&per_uav);
        let pass = worst <= threshold;
        all_pass &= pass;
        checks.push(json!({
            "sampler": label,
            "samples": samples.len(),
            "threshold": threshold,
            "max_outage": worst,
            "pass": pass,
            "per_uav": per_uav.iter().enumerate().map(|(k, o)| json!({
                "uav": k + 1,
                "violations": o.violations,
                "outage": o.fraction,
                "half_width": o.half_width,
            })).collect::<Vec<_>>(),
        }));
    }
    report["checks"] = Value::Array(checks);
    report["pass"] = json!(all_pass);
    Ok(VerifyOutput {
        report,
        exit_code: if all_pass { EXIT_OK } else { EXIT_VERIFY },
    })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::Io(format!("cannot write stdout: {e}")))
        }
    }
}

fn csv_bytes(scenario: &Scenario, rows: &[ResultRow]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, scenario.uav_count(), rows).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(buf)
}

fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| schema("--grid", format!("not a number: {s:?}")))
        })
        .collect()
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Solve { common, scheme, timing } => {
            let file = with_seed(load(&common.scenario)?, common.seed);
            let scheme = pick_scheme(&file, scheme.as_deref())?;
            let out = cmd_solve(&file, scheme, timing);
            print!("{}", out.report);
            if let Some(p) = &common.out {
                emit(Some(p), &csv_bytes(&file.scenario, &[out.row])?)?;
            }
            Ok(out.exit_code)
        }
        Command::Sweep {
            common,
            parameter,
            grid,
            scheme,
            workers,
            timing,
        } => {
            let file = with_seed(load(&common.scenario)?, common.seed);
            let section = file.sweep.clone();
            let parameter = match parameter {
                Some(p) => SweepParameter::parse(&p)
                    .ok_or_else(|| schema("--parameter", format!("unknown parameter {p:?}")))?,
                None => section
                    .as_ref()
                    .map(|s| s.parameter)
                    .ok_or_else(|| schema("sweep.parameter", "missing; pass --parameter"))?,
            };
            let grid = match grid {
                Some(g) => parse_grid(&g)?,
                None => section
                    .as_ref()
                    .map(|s| s.grid.clone())
                    .ok_or_else(|| schema("sweep.grid", "missing; pass --grid"))?,
            };
            let schemes = if scheme.is_empty() {
                section.map(|s| s.schemes).unwrap_or_else(|| Scheme::ALL.to_vec())
            } else {
                scheme
                    .iter()
                    .map(|s| Scheme::parse(s).ok_or_else(|| schema("--scheme", format!("unknown scheme {s:?}"))))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let rows = cmd_sweep(&file, parameter, &grid, &schemes, workers, timing);
            emit(common.out.as_deref(), &csv_bytes(&file.scenario, &rows)?)?;
            Ok(exit_for(&rows))
        }
        Command::Verify { common, scheme } => {
            let file = with_seed(load(&common.scenario)?, common.seed);
            let scheme = pick_scheme(&file, scheme.as_deref())?;
            let out = cmd_verify(&file, scheme)?;
            let mut text = serde_json::to_string_pretty(&out.report).expect("serializable report");
            text.push('\n');
            emit(common.out.as_deref(), text.as_bytes())?;
            Ok(out.exit_code)
        }
        Command::Compare {
            common,
            workers,
            timing,
        } => {
            let file = with_seed(load(&common.scenario)?, common.seed);
            let rows = cmd_compare(&file, workers, timing);
            emit(common.out.as_deref(), &csv_bytes(&file.scenario, &rows)?)?;
            Ok(exit_for(&rows))
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SCHEMA } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_SCHEMA
        }
    }
}
