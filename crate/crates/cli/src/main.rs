use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use dynfl::experiment::{
    availability_check, estimate, loglog_slope, martingale_check, offline_opt, run_trials, structural_check,
    trial_seed, ultrametric_violations, Check, OptReference, OracleMode, RatioEstimate, TrialRow,
};
use dynfl::gen::GeneratorSpec;
use dynfl::oracle::{OracleError, CAP_LIMIT, UNCAP_LIMIT};
use dynfl::sim::tree_for;
use dynfl::{Algorithm, ClientId, Instance, PolicyConfig, ReassignOrder, RunOptions, SimError, TraceMode};

const SCHEMA: &str = "\
OUTPUT

  run, csv: one row per (policy, trial)
    policy,trial,seed,opening,connection,total,flips,openings,cascades,
    reassignments,max_cascade,availability_failures
  The summary (one RatioEstimate per policy) goes to <out>.summary.json,
  or to stderr when writing to stdout.

  sweep, csv: one row per (grid value, policy)
    param,policy,trials,mean,std_err,opt_lower,opt_upper,ratio_lower,ratio_upper
  Log-log slopes of mean cost against the parameter go to
  <out>.summary.json, or to stderr.

  --format json writes a single document with the rows and the summary.

ORACLE
  Exact optima are enumerated for at most 20 distinct client locations
  (uncapacitated) or 14 clients (capacitated). Larger end states fall back
  to bounds with --oracle auto and fail with --oracle exact.

EXIT CODES
  0 ok, 1 usage or input error, 2 invariant failure, 3 oracle limit";

#[derive(Parser)]
#[command(name = "dynfl", version, about = "Fully dynamic online facility location experiments", after_long_help = SCHEMA)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials and estimate competitive ratios.
    Run(Common),
    /// Repeat `run` over a grid of generator sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Values substituted for the generator's size parameter
        /// (k for claim3, upsilon for claim2cap, events for random).
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
    },
    /// Run the probe and invariant suites; non-zero exit on any failure.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Client ids probed by the martingale check (defaults to the leaf
        /// clients of a claim3 instance).
        #[arg(long, value_delimiter = ',')]
        cluster: Vec<u32>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Instance file (JSON).
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    instance: Option<PathBuf>,
    /// Generator spec, e.g. claim3:k=16, claim2cap:upsilon=8,
    /// random:n=40,events=1000,pdel=0.3,metric=square.
    #[arg(long)]
    gen: Option<String>,
    /// Comma-separated policies: m, mstar, alg1, capm, naive, alg2.
    #[arg(long, value_delimiter = ',', default_value = "mstar,alg1")]
    policy: Vec<String>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Master seed; trial i uses a seed derived from it.
    #[arg(long, env = "DYNFL_SEED", default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Capacity for the capacitated policies.
    #[arg(long)]
    upsilon: Option<u32>,
    /// Declared stream length for alg2 (defaults to the actual length).
    #[arg(long)]
    q: Option<usize>,
    /// Orphan reassignment order; defaults to the instance's own, else fifo.
    #[arg(long, value_enum)]
    reassign: Option<Order>,
    /// `full` also dumps the first trial's trace per policy as JSON lines.
    #[arg(long, value_enum, default_value_t = TraceArg::Counters)]
    trace: TraceArg,
    #[arg(long, value_enum, default_value_t = OracleArg::Auto)]
    oracle: OracleArg,
    /// Write the instance as JSON to this path.
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Fifo,
    Lifo,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceArg {
    Full,
    Counters,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Auto,
    Exact,
    Bounds,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Invariant(String),
    #[error("{0}")]
    Oracle(#[from] OracleError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input(_) | CliError::Io { .. } => 1,
            CliError::Invariant(_) => 2,
            CliError::Oracle(_) => 3,
        }
    }
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Invariant { .. } | SimError::CostMismatch { .. } => CliError::Invariant(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

struct Setup {
    instance: Instance,
    spec: Option<GeneratorSpec>,
    policies: Vec<Algorithm>,
}

impl Common {
    fn setup(&self) -> Result<Setup, CliError> {
        if self.trials == 0 {
            return Err(CliError::Usage("--trials must be at least 1".into()));
        }
        let policies = self
            .policy
            .iter()
            .map(|p| p.parse::<Algorithm>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if policies.is_empty() {
            return Err(CliError::Usage("no policy given".into()));
        }
        let (instance, spec) = match (&self.instance, &self.gen) {
            (Some(path), _) => (dynfl::io::read_instance(path).map_err(|e| CliError::Input(e.to_string()))?, None),
            (None, Some(g)) => {
                let spec: GeneratorSpec = g.parse().map_err(|e: dynfl::gen::GenError| CliError::Usage(e.to_string()))?;
                (spec.generate(self.seed), Some(spec))
            }
            (None, None) => return Err(CliError::Usage("give --instance or --gen".into())),
        };
        if let Some(path) = &self.emit {
            fs::write(path, dynfl::io::instance_to_json(&instance)).map_err(io_err(path))?;
        }
        Ok(Setup { instance, spec, policies })
    }

    fn upsilon(&self, spec: Option<&GeneratorSpec>) -> Option<u32> {
        self.upsilon.or_else(|| spec.and_then(GeneratorSpec::upsilon))
    }

    fn config(&self, algo: Algorithm, instance: &Instance, upsilon: Option<u32>) -> PolicyConfig {
        let reassign = match self.reassign {
            Some(Order::Fifo) => ReassignOrder::Fifo,
            Some(Order::Lifo) => ReassignOrder::Lifo,
            Some(Order::Random) => ReassignOrder::Random,
            None => instance.reassign.unwrap_or_default(),
        };
        let mut cfg = PolicyConfig::new(algo).with_reassign(reassign);
        if let (true, Some(u)) = (algo.is_capacitated(), upsilon) {
            cfg = cfg.with_upsilon(u);
        }
        if let Some(q) = self.q {
            cfg = cfg.with_horizon(q);
        }
        cfg
    }

    fn oracle_mode(&self) -> OracleMode {
        match self.oracle {
            OracleArg::Auto => OracleMode::Auto,
            OracleArg::Exact => OracleMode::Exact,
            OracleArg::Bounds => OracleMode::Bounds,
        }
    }
}

#[derive(Serialize)]
struct PolicyFailure {
    policy: String,
    error: String,
}

#[derive(Serialize)]
struct RunSummary {
    instance: String,
    events: usize,
    n_final: usize,
    seed: u64,
    estimates: Vec<RatioEstimate>,
    failures: Vec<PolicyFailure>,
}

/// Output sink: a file or stdout; the summary goes beside the file or to
/// stderr.
fn write_outputs(common: &Common, body: &[u8], summary: &impl Serialize) -> Result<(), CliError> {
    let summary = serde_json::to_string_pretty(summary).expect("summary serializes");
    match &common.out {
        Some(path) => {
            fs::write(path, body).map_err(io_err(path))?;
            if matches!(common.format, Format::Csv) {
                let side = sidecar(path, "summary.json");
                fs::write(&side, summary).map_err(io_err(&side))?;
            }
        }
        None => {
            io::stdout().write_all(body).map_err(io_err(Path::new("<stdout>")))?;
            if matches!(common.format, Format::Csv) {
                eprintln!("{summary}");
            }
        }
    }
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn csv_bytes<R: Serialize>(rows: &[R]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize");
    }
    w.into_inner().expect("in-memory writer")
}

struct PolicyResult {
    rows: Vec<TrialRow>,
    estimate: RatioEstimate,
}

/// Trials and ratio estimate for each policy; incompatible policies are
/// reported and skipped.
fn evaluate(
    common: &Common,
    instance: &Instance,
    spec: Option<&GeneratorSpec>,
    policies: &[Algorithm],
) -> Result<(Vec<PolicyResult>, Vec<PolicyFailure>), CliError> {
    let upsilon = common.upsilon(spec);
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut opt_uncap = None;
    let mut opt_cap = None;
    for &algo in policies {
        let cfg = common.config(algo, instance, upsilon);
        let rows = match run_trials(&cfg, instance, common.trials, common.seed) {
            Ok(rows) => rows,
            Err(e @ (SimError::Invariant { .. } | SimError::CostMismatch { .. })) => return Err(sim_error(e)),
            Err(e) => {
                eprintln!("dynfl: skipping {algo}: {e}");
                failures.push(PolicyFailure { policy: algo.id().into(), error: e.to_string() });
                continue;
            }
        };
        let slot = if algo.is_capacitated() { &mut opt_cap } else { &mut opt_uncap };
        let opt = match slot {
            Some(o) => *o,
            None => {
                let o = offline_opt(instance, if algo.is_capacitated() { upsilon } else { None }, common.oracle_mode())?;
                *slot = Some(o);
                o
            }
        };
        if matches!(common.trace, TraceArg::Full) {
            dump_trace(common, &cfg, instance, algo)?;
        }
        let estimate = estimate(algo, &rows, opt);
        results.push(PolicyResult { rows, estimate });
    }
    Ok((results, failures))
}

fn dump_trace(common: &Common, cfg: &PolicyConfig, instance: &Instance, algo: Algorithm) -> Result<(), CliError> {
    let out = dynfl::run_with(cfg, instance, trial_seed(common.seed, 0), RunOptions { trace: TraceMode::Full, check_invariants: false }).map_err(sim_error)?;
    let base = common.out.clone().unwrap_or_else(|| PathBuf::from("dynfl"));
    let path = sidecar(&base, &format!("{algo}.trace.jsonl"));
    fs::write(&path, out.trace.expect("full trace").to_json_lines()).map_err(io_err(&path))
}

fn describe(common: &Common, spec: Option<&GeneratorSpec>) -> String {
    match (spec, &common.instance) {
        (Some(s), _) => s.to_string(),
        (None, Some(p)) => p.display().to_string(),
        (None, None) => String::new(),
    }
}

fn cmd_run(common: &Common) -> Result<(), CliError> {
    let Setup { instance, spec, policies } = common.setup()?;
    let (results, failures) = evaluate(common, &instance, spec.as_ref(), &policies)?;
    let summary = RunSummary {
        instance: describe(common, spec.as_ref()),
        events: instance.stream.len(),
        n_final: instance.stream.n_final(),
        seed: common.seed,
        estimates: results.iter().map(|r| r.estimate.clone()).collect(),
        failures,
    };
    let rows: Vec<&TrialRow> = results.iter().flat_map(|r| &r.rows).collect();
    let body = match common.format {
        Format::Csv => csv_bytes(&rows),
        Format::Json => {
            let doc = serde_json::json!({ "rows": rows, "summary": summary });
            serde_json::to_vec_pretty(&doc).expect("json")
        }
    };
    write_outputs(common, &body, &summary)?;
    if results.is_empty() {
        return Err(CliError::Input("no policy could run on this instance".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    param: usize,
    policy: String,
    trials: usize,
    mean: f64,
    std_err: f64,
    opt_lower: f64,
    opt_upper: f64,
    ratio_lower: f64,
    ratio_upper: f64,
}

#[derive(Serialize)]
struct SweepSummary {
    generator: String,
    grid: Vec<usize>,
    slopes: Vec<(String, f64)>,
    failures: Vec<PolicyFailure>,
}

fn cmd_sweep(common: &Common, grid: &[usize]) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::Usage("empty grid".into()));
    }
    let Some(g) = &common.gen else {
        return Err(CliError::Usage("sweep needs --gen".into()));
    };
    let base: GeneratorSpec = g.parse().map_err(|e: dynfl::gen::GenError| CliError::Usage(e.to_string()))?;
    let policies: Vec<Algorithm> = common
        .policy
        .iter()
        .map(|p| p.parse().map_err(|e: dynfl::PolicyError| CliError::Usage(e.to_string())))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &value in grid {
        let spec = base.with_scale(value);
        let spec_text = spec.to_string();
        let point = Common { gen: Some(spec_text.clone()), upsilon: common.upsilon.or(spec.upsilon()), emit: None, ..common.clone() };
        let instance: Instance = spec.generate(common.seed);
        let (results, fails) = evaluate(&point, &instance, Some(&spec), &policies)?;
        failures.extend(fails.into_iter().map(|f| PolicyFailure { error: format!("{spec_text}: {}", f.error), ..f }));
        for r in results {
            let e = r.estimate;
            let (lo, hi) = match e.opt {
                OptReference::Exact { opt } => (opt, opt),
                OptReference::Bounds { lower, upper } => (lower, upper),
            };
            rows.push(SweepRow {
                param: value,
                policy: e.policy,
                trials: e.trials,
                mean: e.mean,
                std_err: e.std_err,
                opt_lower: lo,
                opt_upper: hi,
                ratio_lower: e.ratio.0,
                ratio_upper: e.ratio.1,
            });
        }
    }
    let slopes = policies
        .iter()
        .filter_map(|p| {
            let pts: Vec<(f64, f64)> =
                rows.iter().filter(|r| r.policy == p.id()).map(|r| (r.param as f64, r.mean)).collect();
            (pts.len() >= 2).then(|| (p.id().to_owned(), loglog_slope(&pts)))
        })
        .collect();
    let summary = SweepSummary { generator: base.to_string(), grid: grid.to_vec(), slopes, failures };
    let body = match common.format {
        Format::Csv => csv_bytes(&rows),
        Format::Json => serde_json::to_vec_pretty(&serde_json::json!({ "rows": rows, "summary": summary })).expect("json"),
    };
    write_outputs(common, &body, &summary)
}

#[derive(Serialize)]
struct VerifyReport {
    pass: bool,
    checks: Vec<Check>,
}

fn cmd_verify(common: &Common, cluster: &[u32]) -> Result<(), CliError> {
    let Setup { instance, spec, policies } = common.setup()?;
    let upsilon = common.upsilon(spec.as_ref());
    let mut checks = Vec::new();

    for &algo in &policies {
        let cfg = common.config(algo, &instance, upsilon);
        let mut failures = Vec::new();
        let mut skipped = None;
        for t in 0..common.trials {
            match structural_check(&cfg, &instance, trial_seed(common.seed, t)) {
                Ok(()) => {}
                Err(e) if !algo.supports_deletions() && !instance.stream.is_insertion_only() => {
                    skipped = Some(e);
                    break;
                }
                Err(e) if algo.is_capacitated() && upsilon.is_none() => {
                    skipped = Some(e);
                    break;
                }
                Err(e) => failures.push(format!("trial {t}: {e}")),
            }
        }
        checks.push(Check {
            name: format!("structure:{algo}"),
            pass: failures.is_empty(),
            stats: serde_json::json!({ "trials": common.trials, "failures": failures, "skipped": skipped }),
        });
    }

    let cluster: BTreeSet<ClientId> = if !cluster.is_empty() {
        cluster.iter().map(|&c| ClientId(c)).collect()
    } else if let Some(GeneratorSpec::Claim3 { k }) = spec {
        (0..k).map(|i| ClientId((k * k + i) as u32)).collect()
    } else {
        BTreeSet::new()
    };
    if !cluster.is_empty() {
        for &algo in policies.iter().filter(|a| matches!(a, Algorithm::Alg1 | Algorithm::MStar)) {
            let cfg = common.config(algo, &instance, upsilon);
            let mut c = martingale_check(&cfg, &instance, &cluster, common.trials, common.seed).map_err(sim_error)?;
            c.name = format!("martingale:{algo}");
            checks.push(c);
        }
    }

    if let (true, Some(u)) = (policies.contains(&Algorithm::Alg2), upsilon) {
        let cfg = common.config(Algorithm::Alg2, &instance, Some(u));
        checks.push(availability_check(&cfg, &instance, common.trials, common.seed, 0.01).map_err(sim_error)?);
    }

    if instance.metric.len() <= 64 && instance.metric.len() >= 2 {
        let u = upsilon.filter(|&u| u >= 2).unwrap_or(16);
        let tree = tree_for(&instance.metric, u, common.seed).map_err(|e| CliError::Input(e.to_string()))?;
        let bad = ultrametric_violations(&tree);
        checks.push(Check {
            name: "bucket-ultrametric".into(),
            pass: bad == 0,
            stats: serde_json::json!({ "points": instance.metric.len(), "upsilon": u, "violations": bad }),
        });
    }

    let report = VerifyReport { pass: checks.iter().all(|c| c.pass), checks };
    let body = serde_json::to_vec_pretty(&report).expect("json");
    match &common.out {
        Some(path) => fs::write(path, &body).map_err(io_err(path))?,
        None => io::stdout().write_all(&body).map_err(io_err(Path::new("<stdout>")))?,
    }
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(CliError::Invariant(format!("failed checks: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(common) => cmd_run(common),
        Command::Sweep { common, grid } => cmd_sweep(common, grid),
        Command::Verify { common, cluster } => cmd_verify(common, cluster),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dynfl: {e}");
            if let CliError::Oracle(OracleError::TooLarge { .. }) = e {
                eprintln!("dynfl: exact limits are {UNCAP_LIMIT} locations / {CAP_LIMIT} clients; try --oracle bounds");
            }
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar(Path::new("out/a.csv"), "summary.json"), PathBuf::from("out/a.csv.summary.json"));
    }
}
