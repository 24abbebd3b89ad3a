mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use renewal_core::asym::{check_conditions, ConditionId};
use renewal_core::cramer::{admissible_q, lambda_min};
use renewal_core::dist::{JumpModel, ModelSpec};
use renewal_core::exact::{cumulative_exact, h_exact_with, h_mc, EvalResult, ExactOptions, McOptions, Method};
use renewal_core::harness::{
    catalogue, lemma3_check, predict, run_comparison, stone_shepp_scan, GammaOptions, PredictorSpec, Report,
    Scenario,
};
use renewal_core::weights::{check_psi_lc_avg, AveragedSeq, AveragingWindow, WeightSeq};
use serde::Serialize;
use serde_json::json;

use config::{parse_arg, Config};
use output::{csv_bytes, json_bytes, write_atomic};

const ROW_HEADER: &[&str] = &[
    "x",
    "delta",
    "value",
    "residual_bound",
    "n_max",
    "method",
    "predicted",
    "ratio",
    "pass",
];

#[derive(Debug)]
pub enum CliError {
    /// Malformed input; exit code 2.
    Schema(String),
    /// A computation or check failed; exit code 1.
    Failure(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<renewal_core::Error> for CliError {
    fn from(e: renewal_core::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "renewal", version, about = "Weighted renewal sums: exact values, predictors and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios and write one CSV per scenario plus summary.json.
    Run(RunArgs),
    /// Moments, span and exponential-moment facts of a jump law.
    DistInfo {
        #[arg(long)]
        model: String,
    },
    /// Weights, averaged weights and partial sums at chosen indices.
    WeightsInfo {
        #[arg(long)]
        weights: String,
        #[arg(long)]
        window: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        n: Vec<usize>,
    },
    /// Exact (or Monte Carlo) h(x,Δ), or H(x) with --cumulative, as CSV.
    Exact(ExactArgs),
    /// One prediction as JSON.
    Predict(PredictArgs),
    /// Run scenarios and print the reports as JSON.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Local limit errors sup_x |ψ P(S_n ∈ [x,x+Δ))/Δ - φ| for each n.
    Scan {
        #[arg(long)]
        model: String,
        #[arg(long, value_delimiter = ',', default_value = "25,100,400")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
    },
    /// A side condition, or the visit-count inequalities with --lemma3.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with_all = ["scenario", "all_bundled"])]
    config: Option<PathBuf>,
    /// Bundled scenario by id (repeatable).
    #[arg(long)]
    scenario: Vec<String>,
    /// Every bundled scenario.
    #[arg(long)]
    all_bundled: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed; replaces the scenario seeds.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Replaces every scenario tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Print the bundled catalogue and exit.
    #[arg(long)]
    list_scenarios: bool,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    weights: String,
    #[arg(long, value_delimiter = ',', required = true)]
    x: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// direct, tilted or mc.
    #[arg(long, default_value = "tilted")]
    method: String,
    #[arg(long)]
    cumulative: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// blackwell, weighted, H_rvf, lrv_sum, h_plus, cramer_nonlattice, cramer_arith.
    #[arg(long)]
    formula: String,
    #[arg(long)]
    model: String,
    #[arg(long)]
    weights: String,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    x: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    c_minus: Option<f64>,
    #[arg(long)]
    c_plus: Option<f64>,
    #[arg(long)]
    n_width: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    window: Option<String>,
    /// lin, VaA, VaA+, aW, aW+ or F+o.
    #[arg(long, required_unless_present = "lemma3")]
    condition: Option<String>,
    #[arg(long, value_delimiter = ',')]
    x: Vec<f64>,
    /// Constant of the monotonicity condition used by F+o.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    lemma3: bool,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            match &e {
                CliError::Schema(m) => eprintln!("error: invalid input: {m}"),
                CliError::Failure(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(e.code())
        }
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<(), CliError> {
    let bytes = json_bytes(v)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

/// JSON has no infinities; spell them out instead of emitting null.
fn num(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn model_arg(arg: &str) -> Result<JumpModel, CliError> {
    let spec: ModelSpec = parse_arg("model", arg)?;
    JumpModel::from_spec(&spec).map_err(|e| CliError::Schema(format!("--model: {e}")))
}

fn averaged_arg(weights: &str, window: Option<&str>) -> Result<AveragedSeq, CliError> {
    let seq: WeightSeq = parse_arg("weights", weights)?;
    let window = match window {
        Some(w) => parse_arg::<AveragingWindow>("window", w)?,
        None => seq.default_window(),
    };
    AveragedSeq::new(seq, window).map_err(|e| CliError::Schema(e.to_string()))
}

fn dispatch(cmd: Command) -> Result<u8, CliError> {
    match cmd {
        Command::Run(args) => run(args),
        Command::DistInfo { model } => {
            let m = model_arg(&model)?;
            let lmin = lambda_min(&m).ok();
            let q = admissible_q(&m).ok();
            let pair = |p: (f64, f64)| json!([num(p.0), num(p.1)]);
            print_json(&json!({
                "family": format!("{:?}", m.family()).split([' ', '(', '{']).next(),
                "moments": m.moments(),
                "lattice": m.is_lattice(),
                "span": m.span(),
                "max_span": m.max_span(),
                "cut_mass": m.cut_mass(),
                "mgf_domain": pair(m.mgf_domain()),
                "right_tail": m.right_tail(),
                "left_tail": m.left_tail(),
                "lambda_min": lmin.map(|v| num(v.0)),
                "l_min": lmin.map(|v| num(v.1)),
                "admissible_q": q.map(pair),
            }))?;
            Ok(0)
        }
        Command::WeightsInfo { weights, window, n } => {
            let mut avg = averaged_arg(&weights, window.as_deref())?;
            let rows: Vec<_> = n
                .iter()
                .map(|&k| {
                    json!({
                        "n": k,
                        "a": avg.weight(k),
                        "tilde": avg.tilde(k),
                        "sums": avg.partial_sums(k),
                    })
                })
                .collect();
            let xs: Vec<f64> = n.iter().filter(|&&k| k >= 1).map(|&k| k as f64).collect();
            let psi_lc = check_psi_lc_avg(&avg, &|x: f64| x.sqrt(), &xs, &[-1.0, -0.5, 0.5, 1.0]).ok();
            print_json(&json!({
                "window": avg.window(),
                "envelope": avg.seq().envelope(),
                "growth_index": avg.seq().growth_index(),
                "nonnegative": avg.seq().is_nonnegative(),
                "values": rows,
                "psi_lc_sqrt": psi_lc,
            }))?;
            Ok(0)
        }
        Command::Exact(a) => exact(a),
        Command::Predict(a) => {
            let model = model_arg(&a.model)?;
            let avg = averaged_arg(&a.weights, a.window.as_deref())?;
            let need = |v: Option<f64>, name: &str| {
                v.ok_or_else(|| CliError::Schema(format!("--{name} is required for --formula {}", a.formula)))
            };
            let spec = match a.formula.as_str() {
                "blackwell" => PredictorSpec::Blackwell,
                "weighted" => PredictorSpec::Weighted,
                "H_rvf" => PredictorSpec::HRvf {
                    gamma: need(a.gamma, "gamma")?,
                },
                "lrv_sum" => PredictorSpec::LrvSum {
                    c_minus: a.c_minus,
                    c_plus: a.c_plus,
                    n_width: a.n_width,
                },
                "h_plus" => PredictorSpec::HPlus { r: a.r.unwrap_or(2.0) },
                "cramer_nonlattice" => PredictorSpec::CramerNonlattice { q: need(a.q, "q")? },
                "cramer_arith" => PredictorSpec::CramerArith { q: need(a.q, "q")? },
                other => return Err(CliError::Schema(format!("--formula: unknown formula '{other}'"))),
            };
            print_json(&predict(&spec, &model, &avg, a.x, a.delta)?)?;
            Ok(0)
        }
        Command::Compare { config } => {
            let cfg = Config::load(&config)?;
            let reports: Vec<Report> = cfg
                .scenarios
                .iter()
                .map(run_comparison)
                .collect::<Result<_, _>>()?;
            let pass = reports.iter().all(|r| r.summary.pass);
            print_json(&reports)?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Scan { model, n, delta } => {
            let m = model_arg(&model)?;
            print_json(&stone_shepp_scan(&m, &n, delta)?)?;
            Ok(0)
        }
        Command::Check(a) => check(a),
    }
}

fn exact(a: ExactArgs) -> Result<u8, CliError> {
    let model = model_arg(&a.model)?;
    let weights: WeightSeq = parse_arg("weights", &a.weights)?;
    let results: Vec<EvalResult> = if a.cumulative {
        cumulative_exact(&model, &weights, &a.x)?
    } else {
        match a.method.as_str() {
            "direct" | "tilted" => {
                let opts = ExactOptions {
                    force_direct: a.method == "direct",
                    ..ExactOptions::default()
                };
                h_exact_with(&model, &weights, &a.x, a.delta, &opts)?
            }
            "mc" => a
                .x
                .iter()
                .map(|&x| {
                    let opts = McOptions {
                        paths: a.paths,
                        seed: a.seed,
                        ..McOptions::default()
                    };
                    h_mc(&model, &weights, x, a.delta, &opts).map(|m| EvalResult {
                        value: m.estimate,
                        residual_bound: m.stderr + m.drift_bound,
                        n_max: m.horizon,
                        method: Method::Mc,
                    })
                })
                .collect::<Result<_, _>>()?,
            other => return Err(CliError::Schema(format!("--method: unknown method '{other}'"))),
        }
    };
    #[derive(Serialize)]
    struct Row {
        x: f64,
        delta: Option<f64>,
        value: f64,
        residual_bound: f64,
        n_max: usize,
        method: Method,
    }
    let rows: Vec<Row> = a
        .x
        .iter()
        .zip(&results)
        .map(|(&x, r)| Row {
            x,
            delta: (!a.cumulative).then_some(a.delta),
            value: r.value,
            residual_bound: r.residual_bound,
            n_max: r.n_max,
            method: r.method,
        })
        .collect();
    let bytes = csv_bytes(&rows, &ROW_HEADER[..6])?;
    match a.out {
        Some(p) => write_atomic(&p, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(0)
}

fn check(a: CheckArgs) -> Result<u8, CliError> {
    let model = model_arg(&a.model)?;
    if a.lemma3 {
        let n = a.n.ok_or_else(|| CliError::Schema("--n is required with --lemma3".into()))?;
        let &[x] = a.x.as_slice() else {
            return Err(CliError::Schema("--lemma3 takes exactly one --x".into()));
        };
        let rec = lemma3_check(&model, n, x, a.delta, &GammaOptions::seeded(a.seed))?;
        print_json(&rec)?;
        return Ok(if rec.holds() { 0 } else { 1 });
    }
    let which: ConditionId = a
        .condition
        .as_deref()
        .unwrap_or_default()
        .parse()
        .map_err(|e: renewal_core::Error| CliError::Schema(format!("--condition: {e}")))?;
    let weights = a
        .weights
        .as_deref()
        .ok_or_else(|| CliError::Schema("--weights is required with --condition".into()))?;
    if a.x.is_empty() {
        return Err(CliError::Schema("--x needs at least one grid point".into()));
    }
    let mut avg = averaged_arg(weights, a.window.as_deref())?;
    let rep = check_conditions(&model, &mut avg, which, &a.x, a.r)?;
    print_json(&rep)?;
    Ok(if rep.pass { 0 } else { 1 })
}

fn run(args: RunArgs) -> Result<u8, CliError> {
    if args.list_scenarios {
        for s in catalogue() {
            println!("{:<16} {}", s.id, s.description);
        }
        return Ok(0);
    }
    let mut cfg = match (&args.config, args.all_bundled, args.scenario.is_empty()) {
        (Some(p), _, _) => Config::load(p)?,
        (None, true, _) => bundled(&[])?,
        (None, false, false) => bundled(&args.scenario)?,
        (None, false, true) => {
            return Err(CliError::Schema(
                "give --config, --scenario or --all-bundled (see --list-scenarios)".into(),
            ))
        }
    };
    let tolerance = match args.tolerance {
        Some(t) => Some(
            renewal_core::harness::Positive::new(t).map_err(|e| CliError::Schema(format!("--tolerance: {e}")))?,
        ),
        None => cfg.tolerance,
    };
    let seed = args.seed.or(cfg.seed);
    for s in &mut cfg.scenarios {
        if let Some(t) = cfg.tolerances.get(&s.id) {
            s.tolerance = *t;
        }
        if let Some(t) = tolerance {
            s.tolerance = t;
        }
        if let Some(seed) = seed {
            s.seed = seed;
        }
    }
    let out = args.out.or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let results = pool.install(|| renewal_core::harness::run_all(&cfg.scenarios));
    write_outputs(&out, &cfg.scenarios, &results)
}

fn bundled(ids: &[String]) -> Result<Config, CliError> {
    let all = catalogue();
    let scenarios = if ids.is_empty() {
        all
    } else {
        ids.iter()
            .map(|id| {
                all.iter()
                    .find(|s| &s.id == id)
                    .cloned()
                    .ok_or_else(|| CliError::Schema(format!("--scenario: no bundled scenario '{id}'")))
            })
            .collect::<Result<_, _>>()?
    };
    Ok(Config {
        scenarios,
        out: None,
        seed: None,
        tolerance: None,
        tolerances: Default::default(),
    })
}

fn write_outputs(
    out: &Path,
    scenarios: &[Scenario],
    results: &[renewal_core::Result<Report>],
) -> Result<u8, CliError> {
    let mut summary = Vec::with_capacity(results.len());
    let mut all_pass = true;
    for (s, r) in scenarios.iter().zip(results) {
        match r {
            Ok(rep) => {
                write_atomic(&out.join(format!("{}.csv", rep.id)), &csv_bytes(&rep.rows, ROW_HEADER)?)?;
                all_pass &= rep.summary.pass;
                eprintln!(
                    "{:<16} {}  max|ratio-1| = {:.3e}",
                    rep.id,
                    if rep.summary.pass { "pass" } else { "FAIL" },
                    rep.summary.max_dev_top_half
                );
                summary.push(json!({ "id": rep.id, "pass": rep.summary.pass, "seed": rep.seed, "summary": rep.summary }));
            }
            Err(e) => {
                all_pass = false;
                eprintln!("{:<16} ERROR {e}", s.id);
                summary.push(json!({ "id": s.id, "pass": false, "error": e.to_string() }));
            }
        }
    }
    write_atomic(&out.join("summary.json"), &json_bytes(&summary)?)?;
    Ok(if all_pass { 0 } else { 1 })
}
