//! Online facility location policies over a shared [`SolutionState`].
//!
//! | id      | rule                                                              |
//! |---------|-------------------------------------------------------------------|
//! | `m`     | Meyerson: open with probability `min(d, 1)`, insertions only      |
//! | `mstar` | Meyerson, orphans of a deleted facility are re-inserted           |
//! | `alg1`  | Meyerson with per-client memory `p_x`; re-flip only past `2 p_x`  |
//! | `capm`  | capacitated Meyerson (nearest unsaturated facility), insertions only |
//! | `naive` | `alg1` on unsaturated facilities with probability floor `10/U`    |
//! | `alg2`  | HST policy with capacity split into `h` LCA-depth buckets         |
//!
//! Every coin flip draws one `f64` from the policy RNG, heads iff the draw is
//! below the probability, so policies that make the same decisions consume
//! the same random stream.

mod index;
pub mod state;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hst::Hst;
use crate::metric::{MetricSpace, Point};
use crate::scalar::{self, Scalar};
use crate::stream::{ClientId, Event};
use crate::trace::{Counters, Recorder, Step, Trace, TraceMode};

use index::{MetricIndex, TreeIndex};
pub use state::{capacity_bucket, Capacity, CapacityModel, ClientRecord, FacilityRecord, SolutionState, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    M,
    MStar,
    Alg1,
    CapMeyerson,
    NaiveCap,
    Alg2,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] =
        [Algorithm::M, Algorithm::MStar, Algorithm::Alg1, Algorithm::CapMeyerson, Algorithm::NaiveCap, Algorithm::Alg2];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::M => "m",
            Algorithm::MStar => "mstar",
            Algorithm::Alg1 => "alg1",
            Algorithm::CapMeyerson => "capm",
            Algorithm::NaiveCap => "naive",
            Algorithm::Alg2 => "alg2",
        }
    }

    pub fn is_capacitated(self) -> bool {
        matches!(self, Algorithm::CapMeyerson | Algorithm::NaiveCap | Algorithm::Alg2)
    }

    pub fn supports_deletions(self) -> bool {
        !matches!(self, Algorithm::M | Algorithm::CapMeyerson)
    }

    pub fn needs_tree(self) -> bool {
        self == Algorithm::Alg2
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| PolicyError::UnknownAlgorithm(s.to_string()))
    }
}

/// Order in which the orphans of a deleted facility are reconnected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReassignOrder {
    #[default]
    Fifo,
    Lifo,
    Random,
}

impl FromStr for ReassignOrder {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fifo" => Ok(Self::Fifo),
            "lifo" => Ok(Self::Lifo),
            "random" => Ok(Self::Random),
            _ => Err(PolicyError::UnknownOrder(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub algorithm: Algorithm,
    /// Capacity `U`, required by the capacitated policies.
    pub upsilon: Option<u32>,
    /// Declared stream length `q` for the HST policy; defaults to the actual
    /// length when run through the harness.
    pub horizon: Option<usize>,
    pub reassign: ReassignOrder,
}

impl PolicyConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self { algorithm, upsilon: None, horizon: None, reassign: ReassignOrder::Fifo }
    }

    pub fn with_upsilon(mut self, upsilon: u32) -> Self {
        self.upsilon = Some(upsilon);
        self
    }

    pub fn with_horizon(mut self, q: usize) -> Self {
        self.horizon = Some(q);
        self
    }

    pub fn with_reassign(mut self, order: ReassignOrder) -> Self {
        self.reassign = order;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("unknown algorithm '{0}' (expected one of m, mstar, alg1, capm, naive, alg2)")]
    UnknownAlgorithm(String),
    #[error("unknown reassignment order '{0}' (expected fifo, lifo or random)")]
    UnknownOrder(String),
    #[error("{0} requires a capacity")]
    MissingCapacity(Algorithm),
    #[error("{algorithm} needs capacity at least {min}, got {got}")]
    CapacityTooSmall { algorithm: Algorithm, min: u32, got: u32 },
    #[error("{0} requires a declared horizon q")]
    MissingHorizon(Algorithm),
    #[error("{0} requires an HST")]
    MissingTree(Algorithm),
    #[error("{0} handles insertions only")]
    DeletionUnsupported(Algorithm),
    #[error("client {0} is already active or was seen before")]
    DuplicateClient(ClientId),
    #[error("client {0} is not active")]
    UnknownClient(ClientId),
    #[error("point {0} is outside the metric")]
    UnknownPoint(Point),
}

/// One policy running over one metric; owns its state, RNG and recorder.
pub struct Engine<'a, T: Scalar> {
    config: PolicyConfig,
    metric: &'a MetricSpace<T>,
    tree: Option<&'a Hst<T>>,
    state: SolutionState<T>,
    rng: ChaCha8Rng,
    nearest: MetricIndex,
    buckets: Option<TreeIndex>,
    recorder: Recorder<T>,
    /// `10/U` floor of the naive variant.
    floor: T,
    /// `12 h ln q / U` term of the HST policy.
    slack: T,
    per_bucket: usize,
    connection_cost: T,
    seen: Vec<bool>,
}

impl<'a, T: Scalar> Engine<'a, T> {
    /// `id_bound` is one past the largest client id that will be inserted.
    pub fn new(
        config: PolicyConfig,
        metric: &'a MetricSpace<T>,
        tree: Option<&'a Hst<T>>,
        id_bound: usize,
        seed: u64,
        mode: TraceMode,
    ) -> Result<Self, PolicyError> {
        let algo = config.algorithm;
        let upsilon = if algo.is_capacitated() {
            let u = config.upsilon.ok_or(PolicyError::MissingCapacity(algo))?;
            let min = if algo == Algorithm::Alg2 { 2 } else { 1 };
            if u < min {
                return Err(PolicyError::CapacityTooSmall { algorithm: algo, min, got: u });
            }
            u
        } else {
            0
        };
        let mut floor = T::zero();
        let mut slack = T::zero();
        let mut per_bucket = 0;
        let mut buckets = None;
        match algo {
            Algorithm::NaiveCap => floor = T::lit(10.0) / T::from_usize_lossy(upsilon as usize),
            Algorithm::Alg2 => {
                let tree = tree.ok_or(PolicyError::MissingTree(algo))?;
                let q = config.horizon.ok_or(PolicyError::MissingHorizon(algo))?;
                let h = tree.height();
                per_bucket = upsilon as usize / h;
                slack = T::lit(hst_slack(h, q, upsilon));
                buckets = Some(TreeIndex::new(tree));
            }
            _ => {}
        }
        Ok(Self {
            config,
            metric,
            tree,
            state: SolutionState::with_id_bound(id_bound),
            rng: ChaCha8Rng::seed_from_u64(seed),
            nearest: MetricIndex::default(),
            buckets,
            recorder: Recorder::new(mode),
            floor,
            slack,
            per_bucket,
            connection_cost: T::zero(),
            seen: vec![false; id_bound],
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn state(&self) -> &SolutionState<T> {
        &self.state
    }

    pub fn counters(&self) -> &Counters {
        &self.recorder.counters
    }

    /// Connection cost maintained incrementally, in the original metric.
    pub fn running_connection_cost(&self) -> T {
        self.connection_cost
    }

    /// `12 h ln q / U`, zero for other policies.
    pub fn alg2_slack(&self) -> T {
        self.slack
    }

    pub fn capacity_model(&self) -> CapacityModel<'a, T> {
        match self.config.algorithm {
            Algorithm::CapMeyerson | Algorithm::NaiveCap => {
                CapacityModel::Total { upsilon: self.config.upsilon.unwrap_or(0) as usize }
            }
            Algorithm::Alg2 => CapacityModel::PerBucket {
                per_bucket: self.per_bucket,
                tree: self.tree.expect("alg2 has a tree"),
            },
            _ => CapacityModel::Uncapacitated,
        }
    }

    pub fn apply(&mut self, index: usize, event: &Event) -> Result<(), PolicyError> {
        match *event {
            Event::Insert { client, at } => self.on_insert(client, at)?,
            Event::Delete { client } => self.on_delete(client)?,
        }
        self.recorder.end_event(index, *event);
        Ok(())
    }

    pub fn on_insert(&mut self, client: ClientId, at: Point) -> Result<(), PolicyError> {
        if at >= self.metric.len() {
            return Err(PolicyError::UnknownPoint(at));
        }
        if client.index() >= self.seen.len() {
            self.seen.resize(client.index() + 1, false);
            self.state.ensure_bound(client.index() + 1);
        }
        if self.seen[client.index()] {
            return Err(PolicyError::DuplicateClient(client));
        }
        self.seen[client.index()] = true;
        self.state.add_client(client, at);
        self.connect(client);
        Ok(())
    }

    pub fn on_delete(&mut self, client: ClientId) -> Result<(), PolicyError> {
        if !self.config.algorithm.supports_deletions() {
            return Err(PolicyError::DeletionUnsupported(self.config.algorithm));
        }
        let rec = self.state.client(client).ok_or(PolicyError::UnknownClient(client))?;
        let location = rec.location;
        if self.state.is_facility(client) {
            self.unindex(client);
            let mut orphans = self.state.close_facility(client);
            match self.config.reassign {
                ReassignOrder::Fifo => {}
                ReassignOrder::Lifo => orphans.reverse(),
                ReassignOrder::Random => orphans.shuffle(&mut self.rng),
            }
            for &o in &orphans {
                let at = self.state.client(o).expect("orphan is active").location;
                self.connection_cost = self.connection_cost - self.metric.dist(at, location);
            }
            self.recorder.push(Step::Close { facility: client, orphans: orphans.clone() });
            for o in orphans {
                self.connect(o);
            }
        } else {
            let facility = rec.facility.expect("plain client is assigned");
            let floc = self.state.facility(facility).expect("assigned facility is open").location;
            let bucket = self.tree.map(|t| capacity_bucket(t, location, floc));
            let (_, left) = self.state.remove_plain(client, bucket);
            self.connection_cost = self.connection_cost - self.metric.dist(location, floc);
            self.recorder.push(Step::Remove { client });
            if let Some(left) = left {
                self.recorder.push(Step::Restore { facility, bucket });
                if left == 1 {
                    self.make_available(facility, floc, bucket);
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> (SolutionState<T>, Counters, Option<Trace<T>>) {
        let (counters, trace) = self.recorder.finish();
        (self.state, counters, trace)
    }

    fn connect(&mut self, x: ClientId) {
        match self.config.algorithm {
            Algorithm::M | Algorithm::MStar | Algorithm::CapMeyerson => self.connect_meyerson(x),
            Algorithm::Alg1 | Algorithm::NaiveCap => self.connect_with_memory(x),
            Algorithm::Alg2 => self.connect_tree(x),
        }
    }

    fn location(&self, x: ClientId) -> Point {
        self.state.client(x).expect("active client").location
    }

    fn nearest_eligible(&mut self, at: Point) -> Option<(ClientId, T)> {
        let found = self.nearest.nearest(self.metric, at);
        if found.is_none() && self.state.open_count() > 0 {
            self.recorder.counters.availability_failures += 1;
        }
        found
    }

    fn flip(&mut self, x: ClientId, probability: T) -> bool {
        let draw: f64 = self.rng.gen();
        let heads = draw < probability.as_f64();
        self.recorder.push(Step::Flip { client: x, probability, heads });
        heads
    }

    fn connect_meyerson(&mut self, x: ClientId) {
        let at = self.location(x);
        let target = self.nearest_eligible(at);
        let d = target.map_or(T::one(), |(_, d)| scalar::min(d, T::one()));
        if self.flip(x, d) {
            self.open(x);
        } else {
            let (f, dist) = target.expect("tails implies a facility exists");
            self.attach(x, f, dist, None);
        }
    }

    fn connect_with_memory(&mut self, x: ClientId) {
        let at = self.location(x);
        let target = self.nearest_eligible(at);
        let d = match target {
            Some((_, dist)) => scalar::min(T::one(), scalar::max(dist, self.floor)),
            None => T::one(),
        };
        let memory = self.state.client(x).and_then(|c| c.memory);
        match (target, memory) {
            (Some((f, dist)), Some(p)) if d <= p + p => self.attach(x, f, dist, None),
            (None, Some(p)) if d <= p + p => self.open(x),
            _ => {
                if self.flip(x, d) {
                    self.open(x);
                } else {
                    let (f, dist) = target.expect("tails implies a facility exists");
                    *self.state.memory_mut(x) = Some(d);
                    self.attach(x, f, dist, None);
                }
            }
        }
    }

    fn connect_tree(&mut self, x: ClientId) {
        let tree = self.tree.expect("alg2 has a tree");
        let at = self.location(x);
        let max_v = *self.state.memory_mut(x).get_or_insert(T::zero());
        let found = self.buckets.as_ref().expect("alg2 has a bucket index").nearest(tree, at);
        self.recorder.push(Step::Search { client: x, found });
        let Some((u, depth)) = found else {
            if self.state.open_count() > 0 {
                self.recorder.counters.availability_failures += 1;
            }
            self.open(x);
            return;
        };
        let bucket = Some(depth.min(tree.height() - 1));
        let dist_t = tree.level_distance(depth);
        let p = scalar::min(T::one(), dist_t + self.slack);
        if p <= max_v + max_v {
            self.attach(x, u, dist_t, bucket);
            return;
        }
        *self.state.memory_mut(x) = Some(p);
        if self.flip(x, p) {
            self.open(x);
        } else {
            self.attach(x, u, dist_t, bucket);
        }
    }

    fn open(&mut self, x: ClientId) {
        let at = self.location(x);
        let capacity = initial_capacity(&self.config, self.tree.map_or(0, Hst::height));
        let available = match &capacity {
            Capacity::Unlimited => true,
            Capacity::Residual(r) => *r > 0,
            Capacity::Buckets(_) => self.per_bucket > 0,
        };
        self.recorder.push(Step::Open { client: x });
        self.state.open_facility(x, capacity);
        if available {
            match (self.tree, self.buckets.as_mut()) {
                (Some(tree), Some(index)) => {
                    for b in 0..tree.height() {
                        index.set(tree, x, at, b, true);
                    }
                }
                _ => self.nearest.insert(x, at),
            }
        }
    }

    /// Connects `x` to `f`; `distance` is in the policy metric.
    fn attach(&mut self, x: ClientId, f: ClientId, distance: T, bucket: Option<usize>) {
        self.recorder.push(Step::Connect { client: x, facility: f, distance, bucket });
        let at = self.location(x);
        let floc = self.state.facility(f).expect("open facility").location;
        self.connection_cost = self.connection_cost + self.metric.dist(at, floc);
        if self.state.assign(x, f, bucket) == Some(0) {
            match (self.tree, self.buckets.as_mut()) {
                (Some(tree), Some(index)) => index.set(tree, f, floc, bucket.expect("bucketed"), false),
                _ => self.nearest.remove(f),
            }
        }
    }

    fn make_available(&mut self, f: ClientId, floc: Point, bucket: Option<usize>) {
        match (self.tree, self.buckets.as_mut()) {
            (Some(tree), Some(index)) => index.set(tree, f, floc, bucket.expect("bucketed"), true),
            _ => self.nearest.insert(f, floc),
        }
    }

    fn unindex(&mut self, f: ClientId) {
        match (self.tree, self.buckets.as_mut()) {
            (Some(tree), Some(index)) => index.forget(tree, f),
            _ => self.nearest.remove(f),
        }
    }
}

/// `12 h ln q / U`, added to the tree distance in the HST policy's flip
/// probability.
pub fn hst_slack(height: usize, q: usize, upsilon: u32) -> f64 {
    12.0 * height as f64 * (q.max(1) as f64).ln() / upsilon as f64
}

/// Capacity of a freshly opened facility: `U - 1` external slots for the
/// capacitated Meyerson variants (the facility serves itself), `floor(U/h)`
/// per bucket for the HST policy, whose self-service is free.
pub fn initial_capacity(config: &PolicyConfig, height: usize) -> Capacity {
    match config.algorithm {
        Algorithm::CapMeyerson | Algorithm::NaiveCap => {
            Capacity::Residual(config.upsilon.expect("capacitated policy has a capacity") as usize - 1)
        }
        Algorithm::Alg2 => {
            let u = config.upsilon.expect("capacitated policy has a capacity") as usize;
            Capacity::Buckets(vec![u / height; height])
        }
        _ => Capacity::Unlimited,
    }
}
