//! Drives a policy over an instance and accounts its cost.
//!
//! Costs are always measured in the original metric: the number of
//! facilities open at the end plus the distance from every active client to
//! its facility. The HST policy runs on a tree built from the normalized
//! metric but is charged the same way, so its cost is comparable with the
//! offline optimum.

mod probe;
mod replay;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hst::{Hst, HstError};
use crate::metric::{MetricError, MetricSpace};
use crate::policy::{Algorithm, Engine, PolicyConfig, PolicyError, ReassignOrder, SolutionState, Violation};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, HST_STREAM};
use crate::stream::EventStream;
use crate::trace::{Counters, Trace, TraceMode};

pub use probe::{
    availability_probe, availability_summary, check_bucket_discipline, check_monotone_flips, martingale_probe,
    AvailabilitySummary, AvailabilityViolation, ProbeError, TraceViolation,
};
pub use replay::replay;

/// A metric together with a stream over its points.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T> {
    pub metric: MetricSpace<T>,
    pub stream: EventStream,
    /// Reassignment order the instance was designed for, if any.
    pub reassign: Option<ReassignOrder>,
}

impl<T: Scalar> Instance<T> {
    pub fn new(metric: MetricSpace<T>, stream: EventStream) -> Self {
        Self { metric, stream, reassign: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport<T> {
    /// Facilities open at the end.
    pub opening_cost: usize,
    pub connection_cost: T,
    pub total: T,
    pub counters: Counters,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub trace: TraceMode,
    /// Check assignment and capacity invariants after every event.
    pub check_invariants: bool,
}

impl RunOptions {
    pub fn counters_only() -> Self {
        Self { trace: TraceMode::Counters, check_invariants: false }
    }

    pub fn checked() -> Self {
        Self { trace: TraceMode::Full, check_invariants: true }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub report: CostReport<T>,
    pub trace: Option<Trace<T>>,
    pub state: SolutionState<T>,
    /// Tree used by the HST policy.
    pub tree: Option<Hst<T>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Hst(#[from] HstError),
    #[error("declared horizon q = {declared} is shorter than the stream ({actual} events)")]
    HorizonTooShort { declared: usize, actual: usize },
    #[error("invariant violated after event {event}: {violation}")]
    Invariant { event: usize, violation: Violation },
    #[error("incremental connection cost {running} disagrees with recomputed {recomputed}")]
    CostMismatch { running: f64, recomputed: f64 },
}

/// Builds the tree the HST policy runs on for this instance and seed.
pub fn tree_for<T: Scalar>(metric: &MetricSpace<T>, upsilon: u32, seed: u64) -> Result<Hst<T>, SimError> {
    let normalized = metric.normalize(upsilon)?;
    Ok(Hst::build(&normalized, derive_seed(seed, HST_STREAM))?)
}

pub fn run<T: Scalar>(config: &PolicyConfig, instance: &Instance<T>, seed: u64) -> Result<RunOutcome<T>, SimError> {
    run_with(config, instance, seed, RunOptions::default())
}

/// Runs one trial. Deterministic in `(config, instance, seed)`.
pub fn run_with<T: Scalar>(
    config: &PolicyConfig,
    instance: &Instance<T>,
    seed: u64,
    options: RunOptions,
) -> Result<RunOutcome<T>, SimError> {
    let q = instance.stream.len();
    let mut config = config.clone();
    let tree = if config.algorithm == Algorithm::Alg2 {
        let upsilon = config.upsilon.ok_or(PolicyError::MissingCapacity(Algorithm::Alg2))?;
        if upsilon < 2 {
            return Err(PolicyError::CapacityTooSmall { algorithm: Algorithm::Alg2, min: 2, got: upsilon }.into());
        }
        let declared = *config.horizon.get_or_insert(q);
        if declared < q {
            return Err(SimError::HorizonTooShort { declared, actual: q });
        }
        Some(tree_for(&instance.metric, upsilon, seed)?)
    } else {
        None
    };
    if !config.algorithm.supports_deletions() && !instance.stream.is_insertion_only() {
        return Err(PolicyError::DeletionUnsupported(config.algorithm).into());
    }

    let metric = &instance.metric;
    let mut engine =
        Engine::new(config, metric, tree.as_ref(), instance.stream.id_bound(), seed, options.trace)?;
    for (index, event) in instance.stream.events().iter().enumerate() {
        engine.apply(index, event)?;
        if options.check_invariants {
            engine
                .state()
                .check_invariants(engine.capacity_model())
                .map_err(|violation| SimError::Invariant { event: index, violation })?;
        }
    }

    let running = engine.running_connection_cost();
    let (state, counters, trace) = engine.finish();
    let report = cost_report(&state, metric, counters);
    let scale = T::one().max(report.connection_cost.abs());
    if (running - report.connection_cost).abs() > T::tolerance().sqrt() * scale {
        return Err(SimError::CostMismatch { running: running.as_f64(), recomputed: report.connection_cost.as_f64() });
    }
    Ok(RunOutcome { report, trace, state, tree })
}

/// Cost of a solution state measured in `metric`.
pub fn cost_report<T: Scalar>(state: &SolutionState<T>, metric: &MetricSpace<T>, counters: Counters) -> CostReport<T> {
    let opening_cost = state.open_count();
    let connection_cost = state.connection_cost(metric);
    CostReport { opening_cost, connection_cost, total: T::from_usize_lossy(opening_cost) + connection_cost, counters }
}
