//! Command-line experiment runner: `run`, `rates`, `psi`, `verify`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{
    classify_setting, default_eps_grid, envelope_candidates, envelope, fit_loglog, fit_rate, log_space,
    predicted_alpha_exponent, theoretical_exponent, Classification, FitWindow, RateFit, RateModel,
};
use crate::dgf::Dgf;
use crate::error::Error;
use crate::registry::{build_problem, estimate_inf, ProblemKind, ProblemParams};
use crate::objective::{Problem, Regularizer};
use crate::solver::{run, Method, RecordSchedule, SolverConfig, Trace};
use crate::trace::{columns_csv, read_trace, write_atomic, write_trace};
use crate::verify::{run_all, DebugHooks};

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "MPGM_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0} verification check(s) failed")]
    Verification(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Verification(_) => EXIT_VERIFY,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "measure-pgm", version, about = "Bregman proximal gradient methods over measures on grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run PGM/APGM and write trace CSVs.
    Run(RunArgs),
    /// Fit gap exponents of existing traces against the predicted rates.
    Rates(RatesArgs),
    /// Upper envelope of the approximation function from mollified minimizers.
    Psi(PsiArgs),
    /// Run every oracle and print a pass/fail table.
    Verify(VerifyArgs),
}

/// Options shared by `run` and `psi`. Every flag may also be given as
/// `key=value` (underscored name) in the `--config` file; flags win.
#[derive(Debug, Args, Default)]
pub struct ProblemArgs {
    /// Flat `key=value` file; `#` starts a comment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// deconv1d | deconv2d | lb:I | lb:I* | lb:II | lb:II* | relu
    #[arg(long)]
    pub problem: Option<String>,
    /// Points per axis (torus) or on the circle (relu).
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// nonneg | nonneg_tv:<l> | simplex | tv:<l> | tv_ball:<K>
    #[arg(long)]
    pub reg: Option<String>,
    /// Number of ReLU samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Seed of the ReLU label noise.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Comma-separated dgf tokens: p:<p>, ent, hyp, hyp:<beta>.
    #[arg(long)]
    pub dgf: Option<String>,
    /// Comma-separated: pgm, apgm.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Step size (default: the guarantee rule).
    #[arg(long)]
    pub step: Option<f64>,
    /// A priori L1 bound used by the step rule.
    #[arg(long)]
    pub k_bound: Option<f64>,
    /// Recorded rows per decade of iterations.
    #[arg(long)]
    pub per_decade: Option<usize>,
    /// Trace path (single run only).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for automatically named traces.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Two-column `k,gap` plot data (single run only).
    #[arg(long)]
    pub xy: Option<PathBuf>,
    /// Comma-separated iterations whose densities are saved.
    #[arg(long)]
    pub snapshots: Option<String>,
    /// Density snapshot CSV (single run only; default: next to the trace).
    #[arg(long)]
    pub snapshot_out: Option<PathBuf>,
    /// Record wall-clock time.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,
    /// Optimal value override.
    #[arg(long)]
    pub inf: Option<f64>,
    /// Iterations of the reference run for problems without a known optimum
    /// (default: 10x `iters`).
    #[arg(long)]
    pub ref_iters: Option<usize>,
    /// Cache directory for reference optimal values.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args, Default, Clone)]
pub struct FitArgs {
    /// First iteration of the rate fit.
    #[arg(long)]
    pub fit_lo: Option<usize>,
    /// Last iteration of the rate fit.
    #[arg(long)]
    pub fit_hi: Option<usize>,
    /// Fit `gap / log k` instead of `gap`.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strip_log: Option<bool>,
    /// Gaps at or below this value end the fit window.
    #[arg(long)]
    pub gap_floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    /// Trace files.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Machine-readable report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct PsiArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Single dgf token.
    #[arg(long)]
    pub dgf: Option<String>,
    #[arg(long)]
    pub alpha_lo: Option<f64>,
    #[arg(long)]
    pub alpha_hi: Option<f64>,
    #[arg(long)]
    pub alpha_count: Option<usize>,
    /// Number of mollification radii.
    #[arg(long)]
    pub eps_count: Option<usize>,
    /// Envelope CSV `alpha,psi_hat,eps_star`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct VerifyArgs {
    /// Debug hook: negate the analytic gradient.
    #[arg(long)]
    pub flip_gradient_sign: bool,
    /// Debug hook: dual root-finding tolerance of the KKT sweep.
    #[arg(long)]
    pub kappa_tol: Option<f64>,
}

/// Parsed config file; values are consumed as they are resolved.
#[derive(Debug, Default)]
struct ConfigFile {
    path: Option<PathBuf>,
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
            values.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            values,
        })
    }

    /// The flag value if given, else the file value.
    fn pick<T: FromStr>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        let from_file = self.values.remove(key);
        if flag.is_some() {
            return Ok(flag);
        }
        from_file
            .map(|v| v.parse().map_err(|e| usage(format!("config key {key}: {e}"))))
            .transpose()
    }

    fn finish(self) -> CliResult<()> {
        match self.values.keys().next() {
            Some(k) => Err(usage(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }
}

fn parse_list<T: FromStr>(text: &str) -> CliResult<Vec<T>>
where
    T::Err: Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(usage))
        .collect()
}

/// Fully resolved problem options with their echo for trace metadata.
struct ResolvedProblem {
    kind: ProblemKind,
    params: ProblemParams,
    echo: Vec<(String, String)>,
}

fn resolve_problem(args: ProblemArgs, file: &mut ConfigFile) -> CliResult<ResolvedProblem> {
    let token: String = file
        .pick("problem", args.problem)?
        .ok_or_else(|| usage("--problem is required"))?;
    let kind: ProblemKind = token.parse().map_err(usage)?;
    let grid_n = file.pick("grid_n", args.grid_n)?;
    let reg: Option<Regularizer> = file
        .pick::<String>("reg", args.reg)?
        .map(|s| s.parse().map_err(usage))
        .transpose()?;
    let defaults = ProblemParams::default();
    let params = ProblemParams {
        grid_n,
        reg,
        samples: file.pick("samples", args.samples)?.unwrap_or(defaults.samples),
        seed: file.pick("seed", args.seed)?.unwrap_or(defaults.seed),
    };
    let mut echo = vec![
        ("problem".to_string(), kind.to_string()),
        ("grid_n".to_string(), grid_n.unwrap_or(kind.default_grid_n()).to_string()),
        ("reg".to_string(), reg.unwrap_or(kind.default_reg()).to_string()),
    ];
    if kind == ProblemKind::Relu {
        echo.push(("samples".into(), params.samples.to_string()));
        echo.push(("seed".into(), params.seed.to_string()));
    }
    if let Some(p) = &file.path {
        echo.push(("config_file".into(), p.display().to_string()));
    }
    Ok(ResolvedProblem { kind, params, echo })
}

fn resolve_fit(args: FitArgs, file: &mut ConfigFile) -> CliResult<FitWindow> {
    let d = FitWindow::default();
    let window = FitWindow {
        k_lo: file.pick("fit_lo", args.fit_lo)?.unwrap_or(d.k_lo),
        k_hi: file.pick("fit_hi", args.fit_hi)?,
        gap_floor: file.pick("gap_floor", args.gap_floor)?.unwrap_or(d.gap_floor),
        strip_log: file.pick("strip_log", args.strip_log)?.unwrap_or(d.strip_log),
    };
    if window.k_hi.is_some_and(|hi| hi <= window.k_lo) {
        return Err(usage("empty fit window (fit_hi <= fit_lo)"));
    }
    Ok(window)
}

/// Settings of one `run` invocation after merging flags and config file.
struct RunPlan {
    problem: ResolvedProblem,
    dgfs: Vec<Dgf>,
    methods: Vec<Method>,
    iters: usize,
    step: Option<f64>,
    k_bound: Option<f64>,
    per_decade: usize,
    out: Option<PathBuf>,
    out_dir: PathBuf,
    xy: Option<PathBuf>,
    snapshots: Vec<usize>,
    snapshot_out: Option<PathBuf>,
    timing: bool,
    inf: Option<f64>,
    ref_iters: Option<usize>,
    cache_dir: PathBuf,
    window: FitWindow,
}

fn resolve_run(args: RunArgs) -> CliResult<RunPlan> {
    let mut file = ConfigFile::load(args.problem.config.as_deref())?;
    let problem = resolve_problem(args.problem, &mut file)?;
    let dgfs = parse_list(&file.pick("dgf", args.dgf)?.ok_or_else(|| usage("--dgf is required"))?)?;
    let methods = parse_list(&file.pick("method", args.method)?.unwrap_or_else(|| "pgm".into()))?;
    let iters = file.pick("iters", args.iters)?.ok_or_else(|| usage("--iters is required"))?;
    if iters == 0 {
        return Err(usage("--iters must be at least 1"));
    }
    let snapshots = match file.pick::<String>("snapshots", args.snapshots)? {
        Some(s) => parse_list(&s)?,
        None => Vec::new(),
    };
    let plan = RunPlan {
        problem,
        dgfs,
        methods,
        iters,
        step: file.pick("step", args.step)?,
        k_bound: file.pick("k_bound", args.k_bound)?,
        per_decade: file.pick("per_decade", args.per_decade)?.unwrap_or(100),
        out: file.pick("out", args.out)?,
        out_dir: file.pick("out_dir", args.out_dir)?.unwrap_or_else(|| PathBuf::from(".")),
        xy: file.pick("xy", args.xy)?,
        snapshots,
        snapshot_out: file.pick("snapshot_out", args.snapshot_out)?,
        timing: file.pick("timing", args.timing)?.unwrap_or(false),
        inf: file.pick("inf", args.inf)?,
        ref_iters: file.pick("ref_iters", args.ref_iters)?,
        cache_dir: file.pick("cache_dir", args.cache_dir)?.unwrap_or_else(|| PathBuf::from(".mpgm-cache")),
        window: resolve_fit(args.fit, &mut file)?,
    };
    file.finish()?;
    if plan.dgfs.is_empty() || plan.methods.is_empty() {
        return Err(usage("need at least one dgf and one method"));
    }
    let multi = plan.dgfs.len() * plan.methods.len() > 1;
    if multi && (plan.out.is_some() || plan.xy.is_some() || plan.snapshot_out.is_some()) {
        return Err(usage("--out, --xy and --snapshot-out need a single dgf and method"));
    }
    if plan.per_decade == 0 {
        return Err(usage("--per-decade must be at least 1"));
    }
    Ok(plan)
}

fn file_stem(problem: &str, dgf: &Dgf, method: Method) -> String {
    format!("{problem}_{dgf}_{method}")
        .replace(':', "-")
        .replace('*', "star")
}

fn cached_reference(problem: &Problem, plan: &RunPlan, ref_iters: usize) -> CliResult<f64> {
    let key = format!(
        "{}_{}.txt",
        plan.problem.echo.iter().filter(|(k, _)| k != "config_file").map(|(k, v)| format!("{k}-{v}")).collect::<Vec<_>>().join("_"),
        ref_iters
    )
    .replace([':', '/', '*'], "-");
    let path = plan.cache_dir.join(key);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(v) = text.trim().parse::<f64>() {
            return Ok(v);
        }
    }
    eprintln!("computing reference optimum ({ref_iters} accelerated iterations)...");
    let value = estimate_inf(problem, ref_iters)?;
    fs::create_dir_all(&plan.cache_dir).map_err(|e| CliError::Runtime(format!("cache: {e}")))?;
    write_atomic(&path, &format!("{value:e}\n"))?;
    Ok(value)
}

fn model_for(problem: &Problem, method: Method, dgf: &Dgf) -> CliResult<RateModel> {
    let q = match classify_setting(problem)? {
        Classification::Determined(s) => s.q(),
        Classification::Ambiguous { .. } => problem.setting.q(),
    };
    Ok(theoretical_exponent(method, dgf, q, problem.dim())?)
}

fn annotate_fit(trace: &mut Trace, window: &FitWindow, fit: &Result<RateFit, Error>, model: &Result<RateModel, CliError>) {
    trace.set_meta("fit_k_lo", window.k_lo);
    trace.set_meta("fit_k_hi", window.k_hi.map_or("end".to_string(), |k| k.to_string()));
    trace.set_meta("fit_strip_log", window.strip_log);
    trace.set_meta("fit_gap_floor", window.gap_floor);
    match fit {
        Ok(f) => {
            trace.set_meta("fit_slope", f.slope);
            trace.set_meta("fit_r2", f.r2);
            trace.set_meta("fit_rows", f.n);
            trace.set_meta("fit_truncated", f.truncated);
        }
        Err(e) => trace.set_meta("fit_error", e),
    }
    if let Ok(m) = model {
        trace.set_meta("theory_exponent", m.exponent);
        trace.set_meta("theory_log_factor", m.log_factor);
    }
}

fn write_snapshots(path: &Path, problem: &Problem, trace: &Trace) -> CliResult<()> {
    let dim = problem.dim();
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    header.extend(trace.snapshots.iter().map(|(k, _)| format!("f_{k}")));
    let rows: Vec<Vec<f64>> = (0..problem.grid.len())
        .map(|j| {
            let mut row = problem.grid.point(j).to_vec();
            row.extend(trace.snapshots.iter().map(|(_, f)| f[j]));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    Ok(write_atomic(path, &columns_csv(&header, &rows))?)
}

/// `run`: returns the written trace paths.
pub fn cmd_run(args: RunArgs) -> CliResult<Vec<PathBuf>> {
    let plan = resolve_run(args)?;
    let mut problem = build_problem(plan.problem.kind, &plan.problem.params).map_err(usage)?;
    let inf_source = match (plan.inf, problem.inf_value) {
        (Some(v), _) => {
            problem.inf_value = Some(v);
            "override".to_string()
        }
        (None, Some(_)) => "closed_form".to_string(),
        (None, None) => {
            let ref_iters = plan.ref_iters.unwrap_or(10 * plan.iters);
            problem.inf_value = Some(cached_reference(&problem, &plan, ref_iters)?);
            format!("reference_apgm_hyp_{ref_iters}")
        }
    };
    if plan.out.is_none() {
        fs::create_dir_all(&plan.out_dir).map_err(|e| usage(format!("{}: {e}", plan.out_dir.display())))?;
    }
    let jobs: Vec<(Dgf, Method)> = plan
        .dgfs
        .iter()
        .flat_map(|d| plan.methods.iter().map(move |m| (*d, *m)))
        .collect();
    let f0 = vec![1.0; problem.grid.len()];
    let outcomes: Vec<CliResult<(PathBuf, Trace)>> = jobs
        .par_iter()
        .map(|&(dgf, method)| {
            let mut config = SolverConfig::new(method, plan.iters)
                .with_record(RecordSchedule::Geometric { per_decade: plan.per_decade })
                .with_snapshots(plan.snapshots.clone());
            config.timing = plan.timing;
            if let Some(s) = plan.step {
                config = config.with_step(s);
            }
            if let Some(k) = plan.k_bound {
                config = config.with_k_bound(k);
            }
            let mut trace = run(&problem, &dgf, &f0, &config).map_err(|e| match e {
                Error::InvalidArgument(_) => usage(e),
                other => other.into(),
            })?;
            for (k, v) in &plan.problem.echo {
                if trace.meta_value(k).is_none() {
                    trace.set_meta(k, v);
                }
            }
            trace.set_meta("inf_source", &inf_source);
            trace.set_meta("per_decade", plan.per_decade);
            let model = model_for(&problem, method, &dgf);
            let fit = fit_rate(&trace, &plan.window);
            annotate_fit(&mut trace, &plan.window, &fit, &model);
            let path = plan
                .out
                .clone()
                .unwrap_or_else(|| plan.out_dir.join(format!("{}.csv", file_stem(&problem.name, &dgf, method))));
            write_trace(&path, &trace)?;
            Ok((path, trace))
        })
        .collect();

    let mut paths = Vec::new();
    let mut aborted = Vec::new();
    for outcome in outcomes {
        let (path, trace) = outcome?;
        let last = trace.last();
        let gap = last.and_then(|r| r.gap).map_or("n/a".into(), |g| format!("{g:.6e}"));
        let slope = trace.meta_value("fit_slope").unwrap_or("n/a");
        let theory = trace.meta_value("theory_exponent").unwrap_or("n/a");
        println!(
            "{}  dgf={} method={} k={} final_gap={gap} fitted_slope={slope} theory={theory}{}",
            path.display(),
            trace.meta_value("dgf").unwrap_or("?"),
            trace.meta_value("method").unwrap_or("?"),
            last.map_or(0, |r| r.k),
            if trace.meta_value("theory_log_factor") == Some("true") { " (x log k)" } else { "" }
        );
        if let Some(xy) = &plan.xy {
            let rows: Vec<Vec<f64>> = trace
                .rows
                .iter()
                .filter_map(|r| r.gap.map(|g| vec![r.k as f64, g]))
                .collect();
            write_atomic(xy, &columns_csv(&["k", "gap"], &rows))?;
        }
        if !plan.snapshots.is_empty() {
            let snap = plan.snapshot_out.clone().unwrap_or_else(|| path.with_extension("snapshots.csv"));
            write_snapshots(&snap, &problem, &trace)?;
        }
        if let Some(reason) = &trace.aborted {
            aborted.push(format!("{}: {reason}", path.display()));
        }
        paths.push(path);
    }
    if !aborted.is_empty() {
        return Err(CliError::Runtime(format!("run aborted (partial trace written): {}", aborted.join("; "))));
    }
    Ok(paths)
}

/// One line of the `rates` report.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub file: String,
    pub problem: String,
    pub dgf: String,
    pub method: String,
    pub fit: RateFit,
    pub theory: f64,
    pub log_factor: bool,
}

fn meta<'a>(trace: &'a Trace, key: &str, file: &Path) -> CliResult<&'a str> {
    trace
        .meta_value(key)
        .ok_or_else(|| CliError::Runtime(format!("{}: missing metadata `{key}`", file.display())))
}

/// `rates`: fitted against predicted exponents for each trace.
pub fn cmd_rates(args: RatesArgs) -> CliResult<Vec<RateRow>> {
    let mut file = ConfigFile::default();
    let window = resolve_fit(args.fit, &mut file)?;
    let mut rows = Vec::new();
    for path in &args.traces {
        let trace = read_trace(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let dgf: Dgf = meta(&trace, "dgf", path)?.parse()?;
        let method: Method = meta(&trace, "method", path)?.parse()?;
        let q: u32 = meta(&trace, "q", path)?.parse().map_err(|_| CliError::Runtime("bad q".into()))?;
        let d: usize = meta(&trace, "dim", path)?.parse().map_err(|_| CliError::Runtime("bad dim".into()))?;
        let model = theoretical_exponent(method, &dgf, q, d)?;
        let fit = fit_rate(&trace, &window).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        rows.push(RateRow {
            file: path.display().to_string(),
            problem: meta(&trace, "problem", path)?.to_string(),
            dgf: dgf.to_string(),
            method: method.to_string(),
            fit,
            theory: model.exponent,
            log_factor: model.log_factor,
        });
    }
    println!(
        "{:<12} {:<10} {:<6} {:>9} {:>9} {:>9} {:>7}  window",
        "problem", "dgf", "method", "fitted", "theory", "diff", "r2"
    );
    let mut csv = String::from("file,problem,dgf,method,slope,r2,rows,k_first,k_last,truncated,theory,log_factor,discrepancy\n");
    for r in &rows {
        println!(
            "{:<12} {:<10} {:<6} {:>9.4} {:>9.4} {:>9.4} {:>7.4}  [{}, {}]{}",
            r.problem,
            r.dgf,
            r.method,
            r.fit.slope,
            r.theory,
            r.fit.slope - r.theory,
            r.fit.r2,
            r.fit.k_first,
            r.fit.k_last,
            if r.log_factor { "  theory x log k" } else { "" }
        );
        csv.push_str(&format!(
            "{},{},{},{},{:e},{:e},{},{},{},{},{:e},{},{:e}\n",
            r.file,
            r.problem,
            r.dgf,
            r.method,
            r.fit.slope,
            r.fit.r2,
            r.fit.n,
            r.fit.k_first,
            r.fit.k_last,
            r.fit.truncated,
            r.theory,
            r.log_factor,
            r.fit.slope - r.theory
        ));
    }
    if let Some(out) = &args.out {
        write_atomic(out, &csv)?;
    }
    Ok(rows)
}

/// Result of `psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiReport {
    pub fitted_exponent: f64,
    pub predicted_exponent: f64,
    pub out: PathBuf,
}

/// `psi`: envelope CSV and its fitted exponent in `alpha`.
pub fn cmd_psi(args: PsiArgs) -> CliResult<PsiReport> {
    let mut file = ConfigFile::load(args.problem.config.as_deref())?;
    let resolved = resolve_problem(args.problem, &mut file)?;
    let dgf: Dgf = file.pick::<String>("dgf", args.dgf)?.unwrap_or_else(|| "p:2".into()).parse().map_err(usage)?;
    let alpha_lo = file.pick("alpha_lo", args.alpha_lo)?.unwrap_or(1e-6);
    let alpha_hi = file.pick("alpha_hi", args.alpha_hi)?.unwrap_or(1e-2);
    let alpha_count = file.pick("alpha_count", args.alpha_count)?.unwrap_or(40);
    let eps_count = file.pick("eps_count", args.eps_count)?.unwrap_or(30);
    let out = file.pick("out", args.out)?.unwrap_or_else(|| PathBuf::from("psi.csv"));
    file.finish()?;
    if !(alpha_lo > 0.0 && alpha_hi > alpha_lo) || alpha_count < 2 || eps_count < 1 {
        return Err(usage("need 0 < alpha_lo < alpha_hi, alpha_count >= 2, eps_count >= 1"));
    }
    let problem = build_problem(resolved.kind, &resolved.params).map_err(usage)?;
    if problem.mu_star.is_none() || problem.inf_value.is_none() {
        return Err(usage(format!("{} has no known minimizer", problem.name)));
    }
    let f0 = vec![1.0; problem.grid.len()];
    let candidates = envelope_candidates(&problem, &dgf, &f0, &default_eps_grid(&problem, eps_count))?;
    let alphas = log_space(alpha_lo, alpha_hi, alpha_count);
    let mut with_zero = vec![0.0];
    with_zero.extend(&alphas);
    let points = envelope(&candidates, &with_zero);
    let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.alpha, p.psi_hat, p.eps_star]).collect();
    write_atomic(&out, &columns_csv(&["alpha", "psi_hat", "eps_star"], &rows))?;
    let psi: Vec<f64> = points[1..].iter().map(|p| p.psi_hat).collect();
    let fitted = fit_loglog(&alphas, &psi)?.slope;
    let predicted = predicted_alpha_exponent(&dgf, problem.setting.q(), problem.dim())?;
    println!(
        "{}  problem={} dgf={dgf} alpha in [{alpha_lo:e}, {alpha_hi:e}] fitted_exponent={fitted:.4} predicted={predicted:.4}",
        out.display(),
        problem.name
    );
    Ok(PsiReport {
        fitted_exponent: fitted,
        predicted_exponent: predicted,
        out,
    })
}

/// `verify`: prints the table; fails with the number of failed checks.
pub fn cmd_verify(args: VerifyArgs) -> CliResult<()> {
    let hooks = DebugHooks {
        flip_gradient_sign: args.flip_gradient_sign,
        kappa_tol: args.kappa_tol,
    };
    let results = run_all(&hooks);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        return Err(CliError::Verification(failed));
    }
    Ok(())
}

/// Sizes the global thread pool from [`WORKERS_ENV`].
pub fn configure_workers() -> CliResult<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| usage(format!("{WORKERS_ENV} must be a positive integer (got `{v}`)")))?;
        if n == 0 {
            return Err(usage(format!("{WORKERS_ENV} must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = configure_workers().and_then(|()| match cli.command {
        Command::Run(a) => cmd_run(a).map(|_| ()),
        Command::Rates(a) => cmd_rates(a).map(|_| ()),
        Command::Psi(a) => cmd_psi(a).map(|_| ()),
        Command::Verify(a) => cmd_verify(a),
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
