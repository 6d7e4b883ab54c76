mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use curveflow::estimates::{
    distance_monitor, lemma52_monitor, monitor_flow, smoothing_bound, volume_continuity,
};
use curveflow::flow::{FlowState, Stepper};
use curveflow::gh::{cone_convergence_experiment, ConvergenceOptions, Lattice};
use curveflow::profiles::write_csv;
use curveflow::reaction::{pinching_sweep, verify_n11, PinchingMode, PinchingParams};
use curveflow::taming::{tame, verify_taming, CutoffProfile, ExpComparison, TamingOptions};
use curveflow::{jacobi_sweep, run, selftest, Error, FlowConfig, FlowTrace, MonitorPair, Profile, RadialGrid, WarpedMetric};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use output::{envelope, to_json, write_atomic, write_dir_atomic, write_report, TOOL, VERSION};

/// Rotationally symmetric Ricci flow laboratory.
#[derive(Parser, Debug)]
#[command(name = "curveflow", version, about, after_help = "Exit status: 0 pass, 1 violations or failed run, 2 usage error.\nCURVEFLOW_THREADS caps the worker pool.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the flow or check estimates on a saved trace.
    #[command(subcommand)]
    Flow(FlowCmd),
    /// Reaction ODE sweeps.
    #[command(subcommand)]
    Ode(OdeCmd),
    /// Conformal taming of a noncompact warped metric.
    #[command(subcommand)]
    Tame(TameCmd),
    /// Comparison geometry checks.
    #[command(subcommand)]
    Compare(CompareCmd),
    /// Gromov-Hausdorff experiments.
    #[command(subcommand)]
    Gh(GhCmd),
    /// Closed-form example suite.
    Selftest(SelftestArgs),
}

#[derive(Subcommand, Debug)]
enum FlowCmd {
    Run(FlowRunArgs),
    Monitor(FlowMonitorArgs),
}

#[derive(Subcommand, Debug)]
enum OdeCmd {
    Sweep(OdeSweepArgs),
}

#[derive(Subcommand, Debug)]
enum TameCmd {
    Build(TameBuildArgs),
    Verify(TameVerifyArgs),
}

#[derive(Subcommand, Debug)]
enum CompareCmd {
    Jacobi(JacobiArgs),
}

#[derive(Subcommand, Debug)]
enum GhCmd {
    Converge(GhArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct MetricArgs {
    /// sphere:<r0>, euclidean, cone:<c>[:<s_moll>], wild or custom:<file.csv>
    #[arg(long = "initial", visible_alias = "base")]
    initial: String,
    /// Grid nodes (ignored for custom profiles).
    #[arg(long, default_value_t = 400)]
    nodes: usize,
    /// Domain length for open profiles.
    #[arg(long, default_value_t = 8.0)]
    s_max: f64,
    /// Smallest spacing of a graded grid; uniform when absent.
    #[arg(long)]
    h_min: Option<f64>,
}

impl MetricArgs {
    fn build(&self) -> Result<WarpedMetric, Error> {
        let profile: Profile = self.initial.parse()?;
        match self.h_min {
            Some(h) if !matches!(profile, Profile::Sphere { .. } | Profile::Custom(_)) => {
                let h_max = self.s_max / (self.nodes.max(2) - 1) as f64;
                profile.build_on(RadialGrid::graded(h, h_max.max(h), self.s_max)?)
            }
            _ => profile.build(self.nodes, self.s_max),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum StepperArg {
    Rk2,
    SemiImplicit,
}

#[derive(Args, Debug, Serialize)]
struct FlowRunArgs {
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long)]
    t_end: f64,
    /// Snapshot times; five evenly spaced times when absent.
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<f64>,
    /// Distance pairs `x1:psi:x2` in initial arclength.
    #[arg(long, value_delimiter = ',')]
    monitor: Vec<String>,
    /// Material points (initial arclength) to track.
    #[arg(long, value_delimiter = ',')]
    track: Vec<f64>,
    #[arg(long, value_enum, default_value = "rk2")]
    stepper: StepperArg,
    #[arg(long, default_value_t = 0.4)]
    safety: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct FlowMonitorArgs {
    /// Directory written by `flow run`.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    eps0: f64,
    #[arg(long, default_value_t = 100.0)]
    k: f64,
    /// Volume floor for unit balls; the smallest initial one when absent.
    #[arg(long)]
    v0: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OdeMode {
    Ricci,
    Sectional,
    N11,
}

#[derive(Args, Debug, Serialize)]
struct OdeSweepArgs {
    #[arg(long, value_enum)]
    mode: OdeMode,
    #[arg(long)]
    eps0: f64,
    #[arg(long, default_value_t = 100.0)]
    k: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TameBuildArgs {
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long, default_value_t = 1)]
    h_depth: usize,
    #[arg(long)]
    index: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TameVerifyArgs {
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long, default_value_t = 1)]
    h_depth: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 4.0, 8.0])]
    indices: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct JacobiArgs {
    /// Bound on the normal curvature operator.
    #[arg(long, default_value_t = 2.0)]
    k: f64,
    /// Largest geodesic length.
    #[arg(long, default_value_t = 3.0)]
    l: f64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GhArgs {
    #[arg(long, default_value_t = 0.25)]
    c: f64,
    #[arg(long, default_value_t = curveflow::profiles::DEFAULT_S_MOLL)]
    s_moll: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 4.0, 16.0, 64.0])]
    scales: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    rmax: f64,
    #[arg(long, default_value_t = 12)]
    radial: usize,
    #[arg(long, default_value_t = 16)]
    angular: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SelftestArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure modes mapped onto the exit-code contract.
enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Parse(_) => Failure::Usage(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

fn parse_pair(s: &str) -> Result<MonitorPair, Failure> {
    let v: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("bad monitor pair '{s}', expected x1:psi:x2")))?;
    match v.as_slice() {
        &[x1, psi, x2] => Ok(MonitorPair { x1, psi, x2 }),
        _ => Err(Failure::Usage(format!("bad monitor pair '{s}', expected x1:psi:x2"))),
    }
}

fn snapshot_csv(snap: &curveflow::flow::Snapshot) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let run_err = |e: csv::Error| Failure::Run(e.to_string());
    w.write_record(["s", "w", "phi", "k_rad", "k_sph", "ric_min", "scalar_r"]).map_err(run_err)?;
    let (m, cf) = (&snap.metric, &snap.curvature);
    for j in 0..m.s().len() {
        let row = [m.s()[j], m.w()[j], snap.state.phi[j], cf.k_rad[j], cf.k_sph[j], cf.ric_min(j), cf.scalar_r[j]];
        w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(run_err)?;
    }
    w.into_inner().map_err(|e| Failure::Run(e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct TraceFile {
    tool: String,
    version: String,
    config: FlowConfig,
    initial: String,
    times: Vec<f64>,
    snapshots: Vec<String>,
    diagnostics: Vec<curveflow::flow::Diagnostics>,
    history: Vec<(f64, f64)>,
    steps: usize,
    states: Vec<FlowState>,
}

fn flow_run(a: &FlowRunArgs) -> Outcome {
    let m = a.metric.build()?;
    let mut cfg = FlowConfig::new(a.t_end);
    cfg.snapshot_times = a.snapshots.clone();
    cfg.monitor_pairs = a.monitor.iter().map(|s| parse_pair(s)).collect::<Result<_, _>>()?;
    cfg.tracked_points = a.track.clone();
    cfg.safety = a.safety;
    cfg.stepper = match a.stepper {
        StepperArg::Rk2 => Stepper::Rk2,
        StepperArg::SemiImplicit => Stepper::SemiImplicit,
    };
    let trace = run(&m, &cfg)?;
    let names: Vec<String> = (0..trace.snapshots.len()).map(|k| format!("snapshot_{k:03}.csv")).collect();
    let csvs = trace.snapshots.iter().map(snapshot_csv).collect::<Result<Vec<_>, _>>()?;
    let file = TraceFile {
        tool: TOOL.into(),
        version: VERSION.into(),
        config: cfg,
        initial: a.metric.initial.clone(),
        times: trace.snapshots.iter().map(|s| s.state.t).collect(),
        snapshots: names.clone(),
        diagnostics: trace.snapshots.iter().map(|s| s.diagnostics.clone()).collect(),
        history: trace.history.clone(),
        steps: trace.steps,
        states: trace.snapshots.iter().map(|s| s.state.clone()).collect(),
    };
    write_dir_atomic(&a.out, |dir| {
        let io = |e: std::io::Error| e.to_string();
        for (name, bytes) in names.iter().zip(&csvs) {
            fs::write(dir.join(name), bytes).map_err(io)?;
        }
        fs::write(dir.join("trace.json"), to_json(&file)).map_err(io)?;
        fs::write(dir.join("schema.json"), to_json(&output::schema())).map_err(io)
    })
    .map_err(Failure::Run)?;
    println!("{} snapshots, {} steps -> {}", names.len(), trace.steps, a.out.display());
    Ok(true)
}

fn load_trace(dir: &Path) -> Result<FlowTrace, Failure> {
    let bytes = fs::read(dir.join("trace.json")).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    let file: TraceFile = serde_json::from_slice(&bytes).map_err(|e| Failure::Usage(format!("trace.json: {e}")))?;
    let mut trace = FlowTrace::from_states(file.config, file.states)?;
    trace.history = file.history;
    trace.steps = file.steps;
    Ok(trace)
}

fn flow_monitor(a: &FlowMonitorArgs) -> Outcome {
    let trace = load_trace(&a.trace)?;
    let window = (0.0, trace.config.t_end);
    let estimates = monitor_flow(&trace, window);
    let smoothing = smoothing_bound(&trace, window);
    let pinching = match lemma52_monitor(&trace, a.eps0, a.k) {
        Ok(r) => serde_json::to_value(&r).unwrap(),
        Err(e @ Error::HypothesisViolated(_)) => json!({ "skipped": e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    let distances = distance_monitor(&trace);
    let volume = volume_continuity(&trace, a.v0)?;
    let pinching_ok = pinching.get("pass").and_then(Value::as_bool).unwrap_or(true);
    let pass = estimates.pass && pinching_ok && distances.pass && volume.pass;
    let report = json!({
        "estimates": estimates,
        "smoothing": smoothing,
        "pinching": pinching,
        "distances": distances,
        "volume": volume,
    });
    write_report(&a.out, &envelope("flow monitor", a, &report, pass))?;
    println!(
        "K2 = {:.4} ({}), c0 = {:.4}, c1 = {:.4}, c2 = {:.4}, S = {}",
        estimates.k2, estimates.binding, smoothing.c0, distances.c1, distances.c2, volume.s_horizon
    );
    Ok(pass)
}

fn ode_sweep(a: &OdeSweepArgs) -> Outcome {
    let (report, pass) = match a.mode {
        OdeMode::N11 => {
            let r = verify_n11(a.samples, a.eps0, a.k, a.seed);
            println!("min N11 = {:.6e} over {} samples", r.min_n11, r.samples);
            (serde_json::to_value(&r).unwrap(), r.pass)
        }
        OdeMode::Ricci | OdeMode::Sectional => {
            if a.k.is_nan() || a.k <= 0.0 {
                return Err(Failure::Usage(format!("k = {}", a.k)));
            }
            let mut params = PinchingParams::new(a.eps0)?;
            params.k = a.k;
            params.t_horizon = 1.0 / a.k;
            let mode = if matches!(a.mode, OdeMode::Ricci) { PinchingMode::Ricci } else { PinchingMode::Sectional };
            let r = pinching_sweep(&params, mode, a.samples, a.seed)?;
            println!("{} violations, min margin {:.6e}", r.violations.len(), r.min_margin);
            (serde_json::to_value(&r).unwrap(), r.pass)
        }
    };
    write_report(&a.out, &envelope("ode sweep", a, &report, pass))?;
    Ok(pass)
}

fn tame_build(a: &TameBuildArgs) -> Outcome {
    let m = a.metric.build()?;
    let tamed = tame(&m, &CutoffProfile::new(ExpComparison::new(a.h_depth)?, a.index)?)?;
    let mut bytes = Vec::new();
    write_csv(&tamed, &mut bytes)?;
    write_atomic(&a.out, &bytes)?;
    println!("{} nodes, s_max = {} -> {}", tamed.s().len(), tamed.s_max(), a.out.display());
    Ok(true)
}

fn tame_verify(a: &TameVerifyArgs) -> Outcome {
    let m = a.metric.build()?;
    let r = verify_taming(&m, ExpComparison::new(a.h_depth)?, &a.indices, a.k, &TamingOptions::default())?;
    write_report(&a.out, &envelope("tame verify", a, &r, r.pass))?;
    println!(
        "Ric >= -{:.4} (spread {:.2}%), v0 = {:.4} (spread {:.2}%)",
        r.ricci_lower,
        100.0 * r.ricci_spread,
        r.vtilde0,
        100.0 * r.vtilde0_spread
    );
    Ok(r.pass)
}

fn compare_jacobi(a: &JacobiArgs) -> Outcome {
    if !(a.k >= 0.0 && a.l > 0.0) {
        return Err(Failure::Usage(format!("need k >= 0 and l > 0, got k = {}, l = {}", a.k, a.l)));
    }
    let r = jacobi_sweep(a.k, a.l, a.samples, a.seed);
    write_report(&a.out, &envelope("compare jacobi", a, &r, r.pass))?;
    println!("{} solved, {} degenerate, {} violations", r.solved, r.degenerate, r.violations.len());
    Ok(r.pass)
}

fn gh_converge(a: &GhArgs) -> Outcome {
    let opts = ConvergenceOptions {
        c: a.c,
        s_moll: a.s_moll,
        scales: a.scales.clone(),
        lattice: Lattice::new(a.radial, a.angular, a.rmax)?,
        ..Default::default()
    };
    let r = cone_convergence_experiment(&opts)?;
    write_report(&a.out, &envelope("gh converge", a, &r, r.pass))?;
    for (i, u) in a.scales.iter().zip(&r.upper) {
        println!("i = {i}: gh_upper = {u:.5}");
    }
    Ok(r.pass)
}

fn run_selftest(a: &SelftestArgs) -> Outcome {
    let r = selftest();
    for c in r.cases.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: observed {} expected {} ({:?})", c.name, c.observed, c.expected, c.error);
    }
    if let Some(out) = &a.out {
        write_report(out, &envelope("selftest", a, &r, r.pass))?;
    }
    println!("{}/{} cases pass", r.passed, r.cases.len());
    Ok(r.pass)
}

fn threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("CURVEFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("CURVEFLOW_THREADS = '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Run(e.to_string()))
}

fn print_schema() {
    eprint!("\noutput schema:\n{}", String::from_utf8_lossy(&to_json(&output::schema())));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            if !usage {
                return ExitCode::SUCCESS;
            }
            print_schema();
            return ExitCode::from(2);
        }
    };
    let outcome = threads().and_then(|()| match &cli.command {
        Command::Flow(FlowCmd::Run(a)) => flow_run(a),
        Command::Flow(FlowCmd::Monitor(a)) => flow_monitor(a),
        Command::Ode(OdeCmd::Sweep(a)) => ode_sweep(a),
        Command::Tame(TameCmd::Build(a)) => tame_build(a),
        Command::Tame(TameCmd::Verify(a)) => tame_verify(a),
        Command::Compare(CompareCmd::Jacobi(a)) => compare_jacobi(a),
        Command::Gh(GhCmd::Converge(a)) => gh_converge(a),
        Command::Selftest(a) => run_selftest(a),
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            print_schema();
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
