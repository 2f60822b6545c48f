//! Seeded trials, competitive-ratio estimates, sweeps and verification suites.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hst::Hst;
use crate::oracle::{opt_bounds, opt_cap, opt_uncap, OfflineInstance, OracleError};
use crate::policy::{Algorithm, PolicyConfig};
use crate::scalar::Scalar;
use crate::seed::derive_seed;
use crate::sim::{
    availability_summary, check_bucket_discipline, check_monotone_flips, martingale_probe, replay, run_with, Instance,
    RunOptions, SimError,
};
use crate::stream::ClientId;
use crate::trace::TraceMode;

/// Seed of trial `index` under `master`. Every policy sees the same seed for
/// the same trial.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, index as u64)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub policy: String,
    pub trial: usize,
    pub seed: u64,
    pub opening: usize,
    pub connection: f64,
    pub total: f64,
    pub flips: u64,
    pub openings: u64,
    pub cascades: u64,
    pub reassignments: u64,
    pub max_cascade: u64,
    pub availability_failures: u64,
}

/// Runs `trials` independent trials, in parallel, returned in trial order.
pub fn run_trials<T: Scalar>(
    config: &PolicyConfig,
    instance: &Instance<T>,
    trials: usize,
    master: u64,
) -> Result<Vec<TrialRow>, SimError> {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(master, trial);
            let out = run_with(config, instance, seed, RunOptions::counters_only())?;
            let r = out.report;
            let c = r.counters;
            Ok(TrialRow {
                policy: config.algorithm.id().to_owned(),
                trial,
                seed,
                opening: r.opening_cost,
                connection: r.connection_cost.as_f64(),
                total: r.total.as_f64(),
                flips: c.flips,
                openings: c.openings,
                cascades: c.cascades,
                reassignments: c.reassignments,
                max_cascade: c.max_cascade,
                availability_failures: c.availability_failures,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Exact optimum, falling back to bounds above the exhaustive limits.
    #[default]
    Auto,
    Exact,
    Bounds,
}

/// Offline optimum of an instance's end state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptReference {
    Exact { opt: f64 },
    Bounds { lower: f64, upper: f64 },
}

impl OptReference {
    pub fn exact(&self) -> Option<f64> {
        match *self {
            Self::Exact { opt } => Some(opt),
            Self::Bounds { .. } => None,
        }
    }
}

/// Optimum for the clients active at the end of the stream; capacitated when
/// `upsilon` is given. Bounds that coincide are reported as exact.
pub fn offline_opt<T: Scalar>(
    instance: &Instance<T>,
    upsilon: Option<u32>,
    mode: OracleMode,
) -> Result<OptReference, OracleError> {
    let inst = OfflineInstance::from_stream(&instance.metric, &instance.stream);
    if inst.is_empty() {
        return Ok(OptReference::Exact { opt: 0.0 });
    }
    if mode != OracleMode::Bounds {
        let exact = match upsilon {
            Some(u) => opt_cap(&inst, u),
            None => opt_uncap(&inst),
        };
        match exact {
            Ok(s) => return Ok(OptReference::Exact { opt: s.cost.as_f64() }),
            Err(e @ OracleError::TooLarge { .. }) if mode == OracleMode::Exact => return Err(e),
            Err(OracleError::TooLarge { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let b = opt_bounds(&inst, upsilon);
    let (lower, upper) = (b.lower.as_f64(), b.upper.as_f64());
    if upper - lower <= 1e-9 * upper.max(1.0) {
        Ok(OptReference::Exact { opt: lower })
    } else {
        Ok(OptReference::Bounds { lower, upper })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub policy: String,
    pub trials: usize,
    pub mean: f64,
    pub std_err: f64,
    pub opt: OptReference,
    /// `mean / opt`, or `[mean / upper, mean / lower]` from bounds.
    pub ratio: (f64, f64),
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn estimate(policy: Algorithm, rows: &[TrialRow], opt: OptReference) -> RatioEstimate {
    let totals: Vec<f64> = rows.iter().map(|r| r.total).collect();
    let (mean, std_err) = mean_se(&totals);
    let ratio = match opt {
        OptReference::Exact { opt } => (mean / opt, mean / opt),
        OptReference::Bounds { lower, upper } => (mean / upper, mean / lower),
    };
    RatioEstimate { policy: policy.id().to_owned(), trials: rows.len(), mean, std_err, opt, ratio }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Outcome of one verification check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub stats: serde_json::Value,
}

/// Flip-probability sums of `cluster`, truncated at its first opening, over
/// `trials` seeded runs. Passes when the mean is at most `1 + 3 SE`.
pub fn martingale_check<T: Scalar>(
    config: &PolicyConfig,
    instance: &Instance<T>,
    cluster: &BTreeSet<ClientId>,
    trials: usize,
    master: u64,
) -> Result<Check, SimError> {
    let sums: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let out = run_with(config, instance, trial_seed(master, t), RunOptions::default())?;
            Ok(martingale_probe(out.trace.as_ref().expect("full trace"), cluster))
        })
        .collect::<Result<_, SimError>>()?;
    let (mean, se) = mean_se(&sums);
    Ok(Check {
        name: "martingale".into(),
        pass: mean <= 1.0 + 3.0 * se,
        stats: serde_json::json!({ "trials": trials, "cluster": cluster.len(), "mean": mean, "std_err": se }),
    })
}

/// Fraction of probed `(connect, reference facility)` pairs with no suitable
/// facility available, over `trials` runs of the HST policy.
pub fn availability_check<T: Scalar>(
    config: &PolicyConfig,
    instance: &Instance<T>,
    trials: usize,
    master: u64,
    max_rate: f64,
) -> Result<Check, SimError> {
    let per: Vec<(u64, u64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let out = run_with(config, instance, trial_seed(master, t), RunOptions::default())?;
            let tree = out.tree.as_ref().expect("HST policy builds a tree");
            let s = availability_summary(out.trace.as_ref().expect("full trace"), tree);
            Ok((s.probed, s.violations))
        })
        .collect::<Result<_, SimError>>()?;
    let probed: u64 = per.iter().map(|p| p.0).sum();
    let violations: u64 = per.iter().map(|p| p.1).sum();
    let rate = if probed == 0 { 0.0 } else { violations as f64 / probed as f64 };
    Ok(Check {
        name: "availability".into(),
        pass: rate <= max_rate,
        stats: serde_json::json!({ "trials": trials, "probed": probed, "violations": violations, "rate": rate }),
    })
}

/// Structural checks for one run: per-event invariants, cost consistency,
/// bucket discipline, flip monotonicity of the memory policies, replay and
/// seed determinism. Returns the first failure.
pub fn structural_check<T: Scalar>(config: &PolicyConfig, instance: &Instance<T>, seed: u64) -> Result<(), String> {
    let out = run_with(config, instance, seed, RunOptions::checked()).map_err(|e| e.to_string())?;
    let trace = out.trace.as_ref().expect("full trace");
    if let Some(tree) = &out.tree {
        check_bucket_discipline(trace, tree).map_err(|e| e.to_string())?;
    }
    if matches!(config.algorithm, Algorithm::Alg1 | Algorithm::NaiveCap | Algorithm::Alg2) {
        check_monotone_flips(trace).map_err(|e| e.to_string())?;
    }
    let mut cfg = config.clone();
    if cfg.algorithm == Algorithm::Alg2 && cfg.horizon.is_none() {
        cfg.horizon = Some(instance.stream.len());
    }
    let rebuilt = replay(&cfg, out.tree.as_ref(), instance.stream.id_bound(), trace);
    if rebuilt != out.state {
        return Err("replayed state differs from the final state".into());
    }
    let again = run_with(config, instance, seed, RunOptions { trace: TraceMode::Full, check_invariants: false })
        .map_err(|e| e.to_string())?;
    if again.trace != out.trace || again.report != out.report {
        return Err("rerun with the same seed diverged".into());
    }
    let model_total = out.report.total.as_f64();
    if instance.stream.n_final() > 0 && model_total < 1.0 {
        return Err(format!("total cost {model_total} below 1 with active clients"));
    }
    Ok(())
}

/// Triples `(u, v, w)` of distinct points with
/// `lca(u, w) < min(lca(u, v), lca(v, w))`.
pub fn ultrametric_violations<T: Scalar>(tree: &Hst<T>) -> usize {
    let n = tree.num_points();
    let mut bad = 0;
    for u in 0..n {
        for v in 0..n {
            if v == u {
                continue;
            }
            let uv = tree.lca_depth(u, v);
            for w in 0..n {
                if w == u || w == v {
                    continue;
                }
                if tree.lca_depth(u, w) < uv.min(tree.lca_depth(v, w)) {
                    bad += 1;
                }
            }
        }
    }
    bad
}
