//! Command-line front end. Exit codes: 0 success or certified, 2 input
//! error, 3 negative certification or failed assumption check, 4 solver
//! failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::convexity::{self, RiskObjective};
use crate::error::Error;
use crate::geometry::{check_assumptions, enumerate_dual_vertices, RecourseData};
use crate::measures::{check_a3_a4, Measure, PerturbationPlan, RegionV};
use crate::risk::{self, Quadrature, RiskSpec};
use crate::solver::{solve_two_stage, FirstStage, SolveOptions, TwoStageProblem};
use crate::stability::{self, ArgminMode, PlanSpec, StabilityOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NEGATIVE: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

/// Problem file: recourse data and measure are required; the rest depends
/// on the subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub recourse: RecourseData,
    pub measure: Measure,
    #[serde(default)]
    pub risk: Option<RiskSpec>,
    #[serde(default)]
    pub first_stage: Option<FirstStage>,
    #[serde(default)]
    pub region: Option<RegionV>,
}

impl ProblemFile {
    pub fn risk(&self) -> RiskSpec {
        self.risk.unwrap_or(RiskSpec::Expectation)
    }

    pub fn two_stage(&self) -> Result<TwoStageProblem, Error> {
        let first_stage = self
            .first_stage
            .clone()
            .ok_or_else(|| Error::input("problem file has no first_stage"))?;
        Ok(TwoStageProblem {
            first_stage,
            recourse: self.recourse.clone(),
            measure: self.measure.clone(),
            risk: self.risk(),
        })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "recourse",
    version,
    about = "Two-stage recourse models: geometry, risk functionals, convexity certification, solving and stability"
)]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dual vertices, adjacency and assumption verdicts.
    Inspect(Common),
    /// Assumption verdicts only; exit 3 when A1, A2 or A5 fails.
    Check(Common),
    /// Value, gradient and cell masses at a point.
    Eval(EvalArgs),
    /// Estimate the strong-convexity modulus on a region.
    Certify(CertifyArgs),
    /// Solve the two-stage problem.
    Solve(SolveArgs),
    /// Perturb the measure, re-solve and write a CSV of distances.
    Stability(StabilityArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub problem: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Quadrature cells per axis for box densities.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Region lower corner, comma separated (overrides the file).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lo: Option<Vec<f64>>,
    /// Region upper corner, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub hi: Option<Vec<f64>>,
    /// Margin ρ of the region.
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Evaluation point in transformed coordinates.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub x: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 500)]
    pub pairs: usize,
    /// Also sweep the expected excess over these targets.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eta_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub common: Common,
    /// `shift:v1,..,vs`, `jitter:sigma` or `resample:n`; repeatable.
    #[arg(long = "plan", required = true)]
    pub plans: Vec<String>,
    /// Flag runs whose W1 exceeds this.
    #[arg(long)]
    pub delta_max: Option<f64>,
    /// Approximate solution sets on a grid of this step instead of assuming singletons.
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Summary JSON path (holder exponent, ratio statistics).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Dimension(_) | Error::InvalidInput(_) | Error::Assumption { .. } | Error::OracleDimension(_) => {
                EXIT_INPUT
            }
            _ => EXIT_SOLVER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

pub fn load_problem(path: &Path) -> Result<ProblemFile, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let pf: ProblemFile = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    pf.recourse
        .validate()
        .map_err(|e| format!("{}: recourse: {e}", path.display()))?;
    if pf.measure.dim() != pf.recourse.dim() {
        return Err(format!(
            "{}: measure dimension {} differs from recourse dimension {}",
            path.display(),
            pf.measure.dim(),
            pf.recourse.dim()
        ));
    }
    Ok(pf)
}

fn region(common: &Common, pf: &ProblemFile) -> Result<Option<RegionV>, Failure> {
    match (&common.lo, &common.hi) {
        (Some(lo), Some(hi)) => Ok(Some(RegionV::new(lo.clone(), hi.clone(), common.rho)?)),
        (None, None) => Ok(pf.region.clone()),
        _ => Err(input_failure("--lo and --hi must be given together")),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| input_failure(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn cmd_inspect(c: &Common, verdict_exit: bool) -> Result<i32, Failure> {
    let pf = load_problem(&c.problem).map_err(input_failure)?;
    let fan = enumerate_dual_vertices(&pf.recourse);
    let report = check_assumptions(&pf.recourse, fan.as_ref().ok())?;
    let reg = region(c, &pf)?;
    let measure_report = reg.as_ref().map(|r| check_a3_a4(&pf.measure, r));
    let mut out = json!({
        "assumptions": report,
        "measure": measure_report,
    });
    if !verdict_exit {
        out["fan"] = match &fan {
            Ok(f) => f.to_json(),
            Err(_) => serde_json::Value::Null,
        };
    }
    if let Err(e) = &fan {
        out["fan_error"] = json!(e.to_string());
    }
    emit(&c.out, &pretty(&out))?;
    let ok = report.a1 && report.a2 && report.a5 && measure_report.as_ref().is_none_or(|m| m.a3 && m.a4);
    Ok(if verdict_exit && !ok { EXIT_NEGATIVE } else { EXIT_OK })
}

fn cmd_eval(a: &EvalArgs) -> Result<i32, Failure> {
    let c = &a.common;
    let pf = load_problem(&c.problem).map_err(input_failure)?;
    let fan = enumerate_dual_vertices(&pf.recourse)?;
    let quad = Quadrature::new(&pf.measure, c.resolution)?;
    let spec = pf.risk();
    let value = risk::eval_q(&fan, &quad, spec, &a.x)?;
    let grad = risk::grad_q_detailed(&fan, &quad, spec, &a.x)?;
    let out = json!({
        "risk": spec,
        "x": a.x,
        "value": value,
        "gradient": grad.gradient,
        "cells": grad.cells,
        "ties": grad.has_ties(),
    });
    emit(&c.out, &pretty(&out))?;
    Ok(EXIT_OK)
}

fn cmd_certify(a: &CertifyArgs) -> Result<i32, Failure> {
    let c = &a.common;
    let pf = load_problem(&c.problem).map_err(input_failure)?;
    let reg = region(c, &pf)?.ok_or_else(|| input_failure("certify needs a region (file or --lo/--hi)"))?;
    let fan = enumerate_dual_vertices(&pf.recourse)?;
    let report = check_assumptions(&pf.recourse, Some(&fan))?;
    let mreport = check_a3_a4(&pf.measure, &reg);
    let spec = pf.risk();
    if !(report.a1 && report.a2 && report.a5) {
        log::warn!("assumption check failed: {:?}", report.diagnostics);
    }
    if !mreport.a4 {
        log::warn!("A4 fails: {}", mreport.diagnostics.join("; "));
    }
    if spec == RiskSpec::UpperSemideviation && !report.a6 {
        log::warn!("A6 fails (q has negative entries); certification proceeds");
    }
    let quad = Quadrature::new(&pf.measure, c.resolution)?;
    let obj = RiskObjective::new(&fan, &quad, spec);
    let mut rep = convexity::monotonicity_modulus(&obj, &reg, a.pairs, c.seed)?;
    if let Some(grid) = &a.eta_grid {
        rep.eta_sweep = convexity::eta_threshold_sweep(&fan, &quad, &reg, grid, a.pairs, c.seed)?.points;
    }
    emit(&c.out, &pretty(&rep))?;
    Ok(if rep.verdict.is_positive() {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    })
}

fn cmd_solve(a: &SolveArgs) -> Result<i32, Failure> {
    let c = &a.common;
    let pf = load_problem(&c.problem).map_err(input_failure)?;
    let p = pf.two_stage()?;
    let opts = SolveOptions {
        tol: a.tol,
        max_iters: a.max_iters,
        resolution: c.resolution,
        ..Default::default()
    };
    let r = solve_two_stage(&p, &opts)?;
    let mut out = serde_json::to_value(&r).expect("serializable");
    if let Some(reg) = region(c, &pf)? {
        out["region_ok"] = json!(reg.contains_closed(&p.first_stage.t.mul_vec(&r.x)));
    }
    emit(&c.out, &pretty(&out))?;
    Ok(EXIT_OK)
}

/// Parses `kind:params`.
pub fn parse_plan(text: &str) -> Result<PerturbationPlan, String> {
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| format!("plan '{text}': expected kind:param"))?;
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("plan '{text}': {e}"));
    match kind {
        "shift" => Ok(PerturbationPlan::Shift {
            v: rest.split(',').map(num).collect::<Result<_, _>>()?,
        }),
        "jitter" => Ok(PerturbationPlan::Jitter { sigma: num(rest)? }),
        "resample" => Ok(PerturbationPlan::Resample {
            n: rest.trim().parse().map_err(|e| format!("plan '{text}': {e}"))?,
        }),
        other => Err(format!("plan '{text}': unknown kind '{other}'")),
    }
}

fn cmd_stability(a: &StabilityArgs) -> Result<i32, Failure> {
    let c = &a.common;
    let pf = load_problem(&c.problem).map_err(input_failure)?;
    let p = pf.two_stage()?;
    let plans: Vec<PlanSpec> = a
        .plans
        .iter()
        .enumerate()
        .map(|(i, t)| {
            parse_plan(t).map(|plan| PlanSpec {
                plan,
                seed: c.seed.wrapping_add(i as u64),
            })
        })
        .collect::<Result<_, _>>()
        .map_err(input_failure)?;
    let opts = StabilityOptions {
        solve: SolveOptions {
            tol: a.tol,
            resolution: c.resolution,
            ..Default::default()
        },
        mode: match a.grid_step {
            Some(grid_step) => ArgminMode::GridApprox {
                grid_step,
                value_tol: 1e-6,
            },
            None => ArgminMode::Singleton,
        },
        delta_max: a.delta_max,
        region: region(c, &pf)?,
    };
    let records = stability::run_stability_experiment(&p, &plans, &opts)?;
    let mut buf = Vec::new();
    stability::write_csv(&records, &mut buf)?;
    emit(&c.out, std::str::from_utf8(&buf).expect("csv is utf-8").trim_end())?;

    let mut ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let summary = json!({
        "records": records.len(),
        "holder_exponent": stability::estimate_holder_exponent(&records).ok(),
        "max_ratio": ratios.last(),
        "median_ratio": (!ratios.is_empty()).then(|| ratios[ratios.len() / 2]),
        "beyond_delta": records.iter().filter(|r| r.beyond_delta).count(),
    });
    match &a.summary {
        Some(_) => emit(&a.summary, &pretty(&summary))?,
        None => eprintln!("{}", serde_json::to_string(&summary).expect("serializable")),
    }
    Ok(EXIT_OK)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let go = || match &cli.command {
        Command::Inspect(c) => cmd_inspect(c, false),
        Command::Check(c) => cmd_inspect(c, true),
        Command::Eval(a) => cmd_eval(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Stability(a) => cmd_stability(a),
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(go),
            Err(e) => Err(input_failure(format!("thread pool: {e}"))),
        },
        None => go(),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
