//! `drem`: list scenarios, check gains, certify monotonicity, run simulations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use drem_core::nlpre::{check_demidovich, check_lipschitz, check_strong_monotonicity, CERT_SLACK};
use drem_core::plants::robot;
use drem_core::sim::{export_csv, parse_value, run_scenario, scenario_description, Scenario, Trace, SCENARIO_NAMES};
use drem_core::{change_by_name, validate_dt_gains, DMatrix, DVector, DremError, CHANGE_NAMES};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "drem", version, about = "DREM parameter estimation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the registered scenarios.
    List,
    /// Sample the monotonicity and Lipschitz conditions of a parameter change.
    Certify(CertifyArgs),
    /// Run one or more scenarios, write CSV traces and print summaries.
    Run(RunArgs),
    /// Check discrete-time gains (rho, nu, P, gamma, kappa).
    ValidateGains(GainArgs),
}

#[derive(Args)]
struct CertifyArgs {
    /// Scenario or change name.
    name: String,
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight a in P = diag(a, a, 1, 1) for the arm.
    #[arg(long)]
    a: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario names; may be omitted when the config file names one.
    scenarios: Vec<String>,
    /// File of `key = value` lines; `#` starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any key, e.g. `--set P_diag=[1,1,2,2]`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (default: $DREM_OUT_DIR, then the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenarios run in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    controller: Option<String>,
}

#[derive(Args)]
struct GainArgs {
    #[arg(long, default_value_t = 2.0)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 3.0)]
    kappa: f64,
    /// Diagonal of P as `[a, b, ...]` or a single number.
    #[arg(long, default_value = "1")]
    p: String,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<DremError> for Failure {
    fn from(e: DremError) -> Self {
        match e {
            DremError::Config(_) | DremError::Unknown(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List => {
            cmd_list();
            Ok(())
        }
        Command::Certify(a) => cmd_certify(&a),
        Command::Run(a) => cmd_run(&a),
        Command::ValidateGains(a) => cmd_validate_gains(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_list() {
    for name in SCENARIO_NAMES {
        println!("{name:<20} {}", scenario_description(name).unwrap_or(""));
    }
}

fn change_for(name: &str) -> Option<&'static str> {
    match name {
        "robot2dof-drem" | "robot2dof-overparam" | "robot2dof" => Some("robot2dof"),
        _ => CHANGE_NAMES.iter().copied().find(|c| *c == name),
    }
}

fn fmt_point(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn cmd_certify(args: &CertifyArgs) -> CmdResult {
    let change = change_for(&args.name).ok_or_else(|| {
        Failure::Usage(format!(
            "unknown scenario or change '{}' (available: {}, {})",
            args.name,
            SCENARIO_NAMES.join(", "),
            CHANGE_NAMES.join(", ")
        ))
    })?;
    let npre = match (change, args.a) {
        ("robot2dof", Some(a)) => robot::npre(a)?,
        (_, Some(_)) => return Err(Failure::Usage("--a only applies to the arm".into())),
        _ => change_by_name(change)?,
    };
    let dem = check_demidovich(&npre, args.samples, args.seed)?;
    let mono = check_strong_monotonicity(&npre, args.samples, args.seed)?;
    let lip = check_lipschitz(&npre, args.samples, args.seed)?;
    println!("change: {change} ({} samples, seed {})", args.samples, args.seed);
    println!(
        "demidovich min eigenvalue: {:.6} vs rho = {}  {}",
        dem.value,
        dem.bound,
        verdict(dem.passed)
    );
    // P·J + Jᵀ·P ≥ ρI gives the pairwise inequality with ρ/2.
    let mono_bound = 0.5 * mono.bound;
    let mono_ok = mono.value >= mono_bound * (1.0 - CERT_SLACK);
    println!(
        "monotonicity min ratio:    {:.6} vs rho/2 = {}  {}",
        mono.value,
        mono_bound,
        verdict(mono_ok)
    );
    println!("lipschitz max ratio:       {:.6} vs nu = {}  {}", lip.value, lip.bound, verdict(lip.passed));
    if !dem.passed {
        println!("witness eta: {}", fmt_point(&dem.worst_point));
    }
    if dem.passed && mono_ok && lip.passed {
        println!("result: pass");
        Ok(())
    } else {
        Err(Failure::Runtime("certificate failed".into()))
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn parse_diag(raw: &str) -> std::result::Result<Vec<f64>, Failure> {
    match parse_value(raw).map_err(|e| Failure::Usage(e.to_string()))? {
        drem_core::sim::Value::Num(x) => Ok(vec![x]),
        drem_core::sim::Value::Vec(v) if !v.is_empty() => Ok(v),
        _ => Err(Failure::Usage(format!("bad --p value '{raw}'"))),
    }
}

fn cmd_validate_gains(args: &GainArgs) -> CmdResult {
    let d = parse_diag(&args.p)?;
    let p = DMatrix::from_diagonal(&DVector::from_vec(d));
    match validate_dt_gains(args.rho, args.nu, &p, args.gamma, args.kappa) {
        Ok(r) => {
            println!("sigma = {}", r.sigma);
            println!("kappa required >= {}", r.kappa_required);
            println!("gamma < {} keeps sigma positive", r.gamma_bound);
            match r.gamma_interval {
                Some((a, b)) => println!("gamma in [{a}, {b}] gives sigma >= 1"),
                None => println!("no gamma gives sigma >= 1 (nu > rho / lambda_max(P))"),
            }
            println!("result: accepted");
            Ok(())
        }
        Err(e @ DremError::InvalidGain(_)) => Err(Failure::Usage(e.to_string())),
        Err(e) => {
            println!("result: rejected");
            Err(Failure::Runtime(e.to_string()))
        }
    }
}

/// `key = value` pairs in file order.
fn read_config(path: &Path) -> std::result::Result<Vec<(String, String)>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Failure::Usage(format!("{}:{}: expected key = value", path.display(), i + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn split_set(s: &str) -> std::result::Result<(String, String), Failure> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got '{s}'")))
}

impl RunArgs {
    fn flag_overrides(&self) -> Vec<(String, String)> {
        let nums = [
            ("horizon", self.horizon),
            ("seed", self.seed),
            ("h", self.h),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("kappa", self.kappa),
            ("lambda", self.lambda),
        ];
        let mut out: Vec<(String, String)> =
            nums.iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v.to_string()))).collect();
        for (k, v) in [("estimator", &self.estimator), ("controller", &self.controller)] {
            if let Some(v) = v {
                out.push((k.to_string(), v.clone()));
            }
        }
        out
    }
}

fn build_scenario(
    name: &str,
    file: &[(String, String)],
    flags: &[(String, String)],
) -> std::result::Result<Scenario, Failure> {
    let mut sc = Scenario::new(name)?;
    // File first, then flags, so flags win.
    for (k, v) in file.iter().chain(flags) {
        if k == "scenario" {
            continue;
        }
        sc.set_raw(k, v)?;
    }
    Ok(sc)
}

fn out_dir(args: &RunArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os("DREM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6e}"))
}

fn report(trace: &Trace, path: &Path) -> String {
    let s = &trace.summary;
    let mut lines = Vec::new();
    for w in &trace.warnings {
        lines.push(format!("warning: {}: {w}", trace.scenario));
    }
    let excitation = if trace.scenario.starts_with("robot") { "int Delta^2" } else { "sum Delta^2" };
    lines.push(format!("scenario: {}", trace.scenario));
    lines.push(format!("  final |eta~|:          {}", fmt_opt(s.final_eta_tilde)));
    lines.push(format!("  final tracking error:  {}", fmt_opt(s.final_tracking_error)));
    lines.push(format!("  {excitation}:{:>width$}{}", "", fmt_opt(s.excitation), width = 23 - excitation.len()));
    lines.push(format!("  singular events:       {}", s.singular_events));
    lines.push(format!("  samples:               {}", trace.rows.len()));
    lines.push(format!("  csv:                   {}", path.display()));
    lines.join("\n")
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let file = match &args.config {
        Some(p) => read_config(p)?,
        None => Vec::new(),
    };
    let mut flags = Vec::new();
    for s in &args.sets {
        flags.push(split_set(s)?);
    }
    flags.extend(args.flag_overrides());

    let mut names = args.scenarios.clone();
    if names.is_empty() {
        match file.iter().find(|(k, _)| k == "scenario") {
            Some((_, v)) => names.push(v.clone()),
            None => return Err(Failure::Usage("no scenario given (positional or `scenario =` in config)".into())),
        }
    }
    if args.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let scenarios = names
        .iter()
        .map(|n| build_scenario(n, &file, &flags))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let dir = out_dir(args);
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let results: Vec<std::result::Result<String, Failure>> = pool.install(|| {
        scenarios
            .par_iter()
            .map(|sc| {
                let trace = run_scenario(sc).map_err(|e| Failure::Runtime(format!("{}: {e}", sc.name())))?;
                let path = dir.join(format!("{}.csv", sc.name()));
                export_csv(&trace, &path)
                    .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
                Ok(report(&trace, &path))
            })
            .collect()
    });

    let mut first_err = None;
    for r in results {
        match r {
            Ok(text) => println!("{text}"),
            Err(e) => {
                let (Failure::Runtime(m) | Failure::Usage(m)) = &e;
                eprintln!("error: {m}");
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        None => Ok(()),
        Some(Failure::Runtime(_)) => Err(Failure::Runtime("one or more scenarios failed".into())),
        Some(e) => Err(e),
    }
}
