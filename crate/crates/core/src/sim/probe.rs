//! Trace probes: the flip-probability martingale, facility availability in
//! the HST policy, and per-step structural checks.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::hst::Hst;
use crate::metric::Point;
use crate::policy::capacity_bucket;
use crate::scalar::Scalar;
use crate::stream::{ClientId, Event};
use crate::trace::{Step, Trace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProbeError {
    #[error("client {0} never opened a facility")]
    NeverOpened(ClientId),
    #[error("client {0} is deleted during the run")]
    Deleted(ClientId),
}

/// Sum of the flip probabilities of `cluster` members up to and including the
/// first flip that opens a facility; the full sum if none ever does.
pub fn martingale_probe<T: Scalar>(trace: &Trace<T>, cluster: &BTreeSet<ClientId>) -> f64 {
    let mut sum = 0.0;
    for (_, step) in trace.steps() {
        if let Step::Flip { client, probability, heads } = step {
            if cluster.contains(client) {
                sum += probability.as_f64();
                if *heads {
                    break;
                }
            }
        }
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AvailabilityViolation {
    pub event: usize,
    pub client: ClientId,
    /// LCA depth from the client to the reference facility.
    pub required_depth: usize,
    /// LCA depth to the facility actually found, if any.
    pub found_depth: Option<usize>,
}

fn locations<T>(trace: &Trace<T>) -> BTreeMap<ClientId, Point> {
    trace
        .records
        .iter()
        .filter_map(|r| match r.event {
            Event::Insert { client, at } => Some((client, at)),
            Event::Delete { .. } => None,
        })
        .collect()
}

fn deleted<T>(trace: &Trace<T>) -> BTreeSet<ClientId> {
    trace
        .records
        .iter()
        .filter_map(|r| match r.event {
            Event::Delete { client } => Some(client),
            Event::Insert { .. } => None,
        })
        .collect()
}

/// For a facility opened at `v` and never deleted, lists every later connect
/// of another client `u` at which no open facility `v'` with
/// `dist_T(u, v') <= dist_T(u, v)` had capacity in the bucket `u` would use.
///
/// Relies on the HST policy's `Search` steps, which record the closest
/// facility with capacity at the moment of each connect.
pub fn availability_probe<T: Scalar>(
    trace: &Trace<T>,
    tree: &Hst<T>,
    v: ClientId,
) -> Result<Vec<AvailabilityViolation>, ProbeError> {
    if deleted(trace).contains(&v) {
        return Err(ProbeError::Deleted(v));
    }
    let loc = locations(trace);
    let mut opened = false;
    let mut out = Vec::new();
    for (event, step) in trace.steps() {
        match *step {
            Step::Open { client } if client == v => opened = true,
            Step::Search { client, found } if opened && client != v => {
                let required_depth = tree.lca_depth(loc[&client], loc[&v]);
                let found_depth = found.map(|(_, d)| d);
                if found_depth.is_none_or(|d| d < required_depth) {
                    out.push(AvailabilityViolation { event, client, required_depth, found_depth });
                }
            }
            _ => {}
        }
    }
    if opened {
        Ok(out)
    } else {
        Err(ProbeError::NeverOpened(v))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AvailabilitySummary {
    /// Reference facilities: opened and never deleted.
    pub references: usize,
    /// `(connect, reference)` pairs checked.
    pub probed: u64,
    pub violations: u64,
}

/// Runs [`availability_probe`] for every client that opens a facility and is
/// never deleted, in one pass over the trace.
pub fn availability_summary<T: Scalar>(trace: &Trace<T>, tree: &Hst<T>) -> AvailabilitySummary {
    let gone = deleted(trace);
    let loc = locations(trace);
    let mut refs: Vec<(ClientId, Point)> = Vec::new();
    let mut summary = AvailabilitySummary::default();
    for (_, step) in trace.steps() {
        match *step {
            Step::Open { client } if !gone.contains(&client) => {
                if !refs.iter().any(|(c, _)| *c == client) {
                    refs.push((client, loc[&client]));
                }
            }
            Step::Search { client, found } => {
                let at = loc[&client];
                let found_depth = found.map(|(_, d)| d);
                for &(v, vloc) in &refs {
                    if v == client {
                        continue;
                    }
                    summary.probed += 1;
                    let required = tree.lca_depth(at, vloc);
                    if found_depth.is_none_or(|d| d < required) {
                        summary.violations += 1;
                    }
                }
            }
            _ => {}
        }
    }
    summary.references = refs.len();
    summary
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceViolation {
    #[error("event {event}: {client} charged bucket {charged} at {facility}, expected {expected}")]
    Bucket { event: usize, client: ClientId, facility: ClientId, charged: usize, expected: usize },
    #[error("event {event}: flip of {client} at {probability} does not exceed twice the previous {previous}")]
    NonMonotoneFlip { event: usize, client: ClientId, probability: f64, previous: f64 },
}

/// Every capacity charge must go to the bucket of the pair's LCA depth.
pub fn check_bucket_discipline<T: Scalar>(trace: &Trace<T>, tree: &Hst<T>) -> Result<(), TraceViolation> {
    let loc = locations(trace);
    for (event, step) in trace.steps() {
        if let Step::Connect { client, facility, bucket: Some(charged), .. } = *step {
            let expected = capacity_bucket(tree, loc[&client], loc[&facility]);
            if charged != expected {
                return Err(TraceViolation::Bucket { event, client, facility, charged, expected });
            }
        }
    }
    Ok(())
}

/// Successive flips of one client must more than double in probability.
pub fn check_monotone_flips<T: Scalar>(trace: &Trace<T>) -> Result<(), TraceViolation> {
    let mut last: BTreeMap<ClientId, f64> = BTreeMap::new();
    for (event, step) in trace.steps() {
        if let Step::Flip { client, probability, .. } = *step {
            let p = probability.as_f64();
            if let Some(&previous) = last.get(&client) {
                if p <= 2.0 * previous {
                    return Err(TraceViolation::NonMonotoneFlip { event, client, probability: p, previous });
                }
            }
            last.insert(client, p);
        }
    }
    Ok(())
}
