//! Per-event records of a simulation run.

use serde::{Deserialize, Serialize};

use crate::stream::{ClientId, Event};

/// One observable action taken by a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step<T> {
    /// Biased coin with `P[heads] = probability`; heads opens a facility.
    Flip { client: ClientId, probability: T, heads: bool },
    Open { client: ClientId },
    /// `distance` is measured in the policy's own metric (tree distance for
    /// the HST policy). `bucket` is the capacity pool charged, if any.
    Connect { client: ClientId, facility: ClientId, distance: T, bucket: Option<usize> },
    /// Result of the HST policy's capacity-aware search: the chosen facility
    /// and the LCA depth to it (`h` for a co-located facility).
    Search { client: ClientId, found: Option<(ClientId, usize)> },
    /// A deleted facility; its orphans follow in reassignment order.
    Close { facility: ClientId, orphans: Vec<ClientId> },
    Remove { client: ClientId },
    /// One unit of capacity handed back to `facility` by a departing client.
    Restore { facility: ClientId, bucket: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord<T> {
    pub index: usize,
    pub event: Event,
    pub steps: Vec<Step<T>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub flips: u64,
    pub openings: u64,
    pub connections: u64,
    pub cascades: u64,
    pub reassignments: u64,
    pub max_cascade: u64,
    /// Connects that found no eligible facility while some facility was open.
    pub availability_failures: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    #[default]
    Full,
    Counters,
}

/// Ordered records of a whole run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace<T> {
    pub records: Vec<EventRecord<T>>,
}

impl<T> Trace<T> {
    pub fn steps(&self) -> impl Iterator<Item = (usize, &Step<T>)> {
        self.records.iter().flat_map(|r| r.steps.iter().map(move |s| (r.index, s)))
    }
}

impl<T: Serialize> Trace<T> {
    /// JSON lines, one record per event.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Collects steps and counters while a policy runs.
#[derive(Debug, Clone)]
pub(crate) struct Recorder<T> {
    mode: TraceMode,
    pub counters: Counters,
    trace: Trace<T>,
    current: Vec<Step<T>>,
}

impl<T> Recorder<T> {
    pub fn new(mode: TraceMode) -> Self {
        Self { mode, counters: Counters::default(), trace: Trace { records: Vec::new() }, current: Vec::new() }
    }

    pub fn push(&mut self, step: Step<T>) {
        match &step {
            Step::Flip { .. } => self.counters.flips += 1,
            Step::Open { .. } => self.counters.openings += 1,
            Step::Connect { .. } => self.counters.connections += 1,
            Step::Close { orphans, .. } => {
                self.counters.cascades += 1;
                self.counters.reassignments += orphans.len() as u64;
                self.counters.max_cascade = self.counters.max_cascade.max(orphans.len() as u64);
            }
            _ => {}
        }
        if self.mode == TraceMode::Full {
            self.current.push(step);
        }
    }

    pub fn end_event(&mut self, index: usize, event: Event) {
        if self.mode == TraceMode::Full {
            let steps = std::mem::take(&mut self.current);
            self.trace.records.push(EventRecord { index, event, steps });
        }
    }

    pub fn finish(self) -> (Counters, Option<Trace<T>>) {
        let trace = (self.mode == TraceMode::Full).then_some(self.trace);
        (self.counters, trace)
    }
}
