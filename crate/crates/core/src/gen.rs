//! Adversarial and random instance generators.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{MetricSpace, Point};
use crate::policy::ReassignOrder;
use crate::scalar::Scalar;
use crate::sim::Instance;
use crate::stream::{ClientId, Event, EventStream};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("unknown generator {0:?}; expected claim3, claim2cap or random")]
    UnknownKind(String),
    #[error("generator parameter {key:?}: {reason}")]
    BadParameter { key: String, reason: String },
    #[error("missing generator parameter {0:?}")]
    Missing(&'static str),
}

fn bad(key: &str, reason: impl Into<String>) -> GenError {
    GenError::BadParameter { key: key.to_owned(), reason: reason.into() }
}

/// Where the random generator draws its metric from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Uniform points in the unit square, Euclidean distances.
    Square,
    /// Random edge weights in `(0, 1]` closed under shortest paths.
    Matrix,
}

impl FromStr for MetricKind {
    type Err = GenError;
    fn from_str(s: &str) -> Result<Self, GenError> {
        match s {
            "square" | "euclid" => Ok(Self::Square),
            "matrix" | "graph" => Ok(Self::Matrix),
            other => Err(bad("metric", format!("{other:?} is not square or matrix"))),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Square => "square",
            Self::Matrix => "matrix",
        })
    }
}

/// Parsed form of `claim3:k=16`, `claim2cap:upsilon=8,rounds=8` or
/// `random:n=40,events=1000,pdel=0.3,metric=square,seed=7`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Claim3 { k: usize },
    Claim2cap { upsilon: u32, rounds: Option<usize> },
    Random { n_points: usize, n_events: usize, p_delete: f64, metric: MetricKind, seed: Option<u64> },
}

impl GeneratorSpec {
    /// Builds the instance. `seed` is used by the random generator unless the
    /// spec pins its own.
    pub fn generate<T: Scalar>(&self, seed: u64) -> Instance<T> {
        match *self {
            Self::Claim3 { k } => gen_claim3(k),
            Self::Claim2cap { upsilon, rounds } => gen_claim2cap(upsilon, rounds.unwrap_or(upsilon as usize)),
            Self::Random { n_points, n_events, p_delete, metric, seed: pinned } => {
                gen_random(n_points, n_events, p_delete, metric, pinned.unwrap_or(seed))
            }
        }
    }

    /// Capacity the instance is designed for.
    pub fn upsilon(&self) -> Option<u32> {
        match *self {
            Self::Claim2cap { upsilon, .. } => Some(upsilon),
            _ => None,
        }
    }

    /// Same spec with its size parameter replaced, for sweeps.
    pub fn with_scale(&self, value: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Claim3 { k } => *k = value,
            Self::Claim2cap { upsilon, rounds } => {
                *upsilon = value as u32;
                *rounds = None;
            }
            Self::Random { n_events, .. } => *n_events = value,
        }
        out
    }

    pub fn scale(&self) -> usize {
        match *self {
            Self::Claim3 { k } => k,
            Self::Claim2cap { upsilon, .. } => upsilon as usize,
            Self::Random { n_events, .. } => n_events,
        }
    }
}

impl FromStr for GeneratorSpec {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, GenError> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params: Vec<(&str, &str)> = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| bad(part, "expected key=value"))?;
            params.push((k.trim(), v.trim()));
        }
        let get = |names: &[&str]| params.iter().find(|(k, _)| names.contains(k)).map(|&(_, v)| v);
        fn num<N: FromStr>(key: &str, v: &str) -> Result<N, GenError> {
            v.parse().map_err(|_| bad(key, format!("{v:?} is not a valid number")))
        }
        let known: &[&str] = match kind {
            "claim3" => &["k"],
            "claim2cap" => &["upsilon", "u", "rounds"],
            "random" => &["n", "n_points", "events", "n_events", "q", "pdel", "p_delete", "metric", "seed"],
            other => return Err(GenError::UnknownKind(other.to_owned())),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !known.contains(k)) {
            return Err(bad(k, "unknown parameter"));
        }
        match kind {
            "claim3" => {
                let k: usize = num("k", get(&["k"]).ok_or(GenError::Missing("k"))?)?;
                if k < 2 {
                    return Err(bad("k", "must be at least 2"));
                }
                Ok(Self::Claim3 { k })
            }
            "claim2cap" => {
                let upsilon: u32 = num("upsilon", get(&["upsilon", "u"]).ok_or(GenError::Missing("upsilon"))?)?;
                if upsilon < 2 {
                    return Err(bad("upsilon", "must be at least 2"));
                }
                let rounds = get(&["rounds"]).map(|v| num("rounds", v)).transpose()?;
                Ok(Self::Claim2cap { upsilon, rounds })
            }
            _ => {
                let n_points: usize = num("n", get(&["n", "n_points"]).ok_or(GenError::Missing("n"))?)?;
                let n_events: usize = num("events", get(&["events", "n_events", "q"]).ok_or(GenError::Missing("events"))?)?;
                let p_delete: f64 = get(&["pdel", "p_delete"]).map(|v| num("pdel", v)).transpose()?.unwrap_or(0.0);
                if !(0.0..1.0).contains(&p_delete) {
                    return Err(bad("pdel", "must lie in [0, 1)"));
                }
                if n_points == 0 {
                    return Err(bad("n", "must be positive"));
                }
                let metric = get(&["metric"]).map(str::parse).transpose()?.unwrap_or(MetricKind::Square);
                let seed = get(&["seed"]).map(|v| num("seed", v)).transpose()?;
                Ok(Self::Random { n_points, n_events, p_delete, metric, seed })
            }
        }
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Claim3 { k } => write!(f, "claim3:k={k}"),
            Self::Claim2cap { upsilon, rounds: None } => write!(f, "claim2cap:upsilon={upsilon}"),
            Self::Claim2cap { upsilon, rounds: Some(r) } => write!(f, "claim2cap:upsilon={upsilon},rounds={r}"),
            Self::Random { n_points, n_events, p_delete, metric, seed } => {
                write!(f, "random:n={n_points},events={n_events},pdel={p_delete},metric={metric}")?;
                if let Some(s) = seed {
                    write!(f, ",seed={s}")?;
                }
                Ok(())
            }
        }
    }
}

/// Star with `k` leaves at distance `1/k` from the center. Inserts `k^2`
/// clients at the center, one client per leaf, then deletes every center
/// client but the last. Client `a_i` has id `i - 1`, `b_i` has id `k^2 + i - 1`.
pub fn gen_claim3<T: Scalar>(k: usize) -> Instance<T> {
    assert!(k >= 2, "claim3 needs k >= 2");
    let eps = T::one() / T::from_usize_lossy(k);
    let metric = MetricSpace::star(k, eps).expect("valid star");
    let a = k * k;
    let mut events = Vec::with_capacity(2 * a + k - 1);
    events.extend((0..a).map(|i| Event::Insert { client: ClientId(i as u32), at: 0 }));
    events.extend((1..=k).map(|leaf| Event::Insert { client: ClientId((a + leaf - 1) as u32), at: leaf }));
    events.extend((0..a - 1).map(|i| Event::Delete { client: ClientId(i as u32) }));
    let stream = EventStream::new(events, metric.len()).expect("claim3 stream is well formed");
    Instance { metric, stream, reassign: Some(ReassignOrder::Fifo) }
}

/// Star with `10 U^2` leaves at distance 1/2. Each round inserts one client at
/// the center and one client on each of `10 U` fresh leaves; leaves are used
/// in order and wrap around only after all are used. All leaf clients are
/// deleted at the end.
pub fn gen_claim2cap<T: Scalar>(upsilon: u32, rounds: usize) -> Instance<T> {
    assert!(upsilon >= 2, "claim2cap needs upsilon >= 2");
    let u = upsilon as usize;
    let leaves = 10 * u * u;
    let half = T::one() / T::lit(2.0);
    let metric = MetricSpace::star(leaves, half).expect("valid star");
    let per_round = 10 * u;
    let mut events = Vec::with_capacity(rounds * (2 * per_round + 1));
    let mut next = 0u32;
    let mut leaf_clients = Vec::with_capacity(rounds * per_round);
    let mut cursor = 0usize;
    for _ in 0..rounds {
        events.push(Event::Insert { client: ClientId(next), at: 0 });
        next += 1;
        for _ in 0..per_round {
            let at: Point = 1 + cursor % leaves;
            cursor += 1;
            events.push(Event::Insert { client: ClientId(next), at });
            leaf_clients.push(ClientId(next));
            next += 1;
        }
    }
    events.extend(leaf_clients.into_iter().map(|client| Event::Delete { client }));
    let stream = EventStream::new(events, metric.len()).expect("claim2cap stream is well formed");
    Instance { metric, stream, reassign: None }
}

/// Random metric and fully dynamic stream. Each event deletes a uniformly
/// random active client with probability `p_delete` (when one exists) and
/// otherwise inserts a fresh client at a uniformly random point.
pub fn gen_random<T: Scalar>(
    n_points: usize,
    n_events: usize,
    p_delete: f64,
    metric: MetricKind,
    seed: u64,
) -> Instance<T> {
    assert!(n_points >= 1, "need at least one point");
    assert!((0.0..1.0).contains(&p_delete), "p_delete must lie in [0, 1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let metric = match metric {
        MetricKind::Square => unit_square(n_points, &mut rng),
        MetricKind::Matrix => shortest_path_matrix(n_points, &mut rng),
    };
    let mut active: Vec<ClientId> = Vec::new();
    let mut events = Vec::with_capacity(n_events);
    let mut next = 0u32;
    for _ in 0..n_events {
        if !active.is_empty() && rng.gen::<f64>() < p_delete {
            let i = rng.gen_range(0..active.len());
            let client = active.swap_remove(i);
            events.push(Event::Delete { client });
        } else {
            let at = rng.gen_range(0..n_points);
            events.push(Event::Insert { client: ClientId(next), at });
            active.push(ClientId(next));
            next += 1;
        }
    }
    let stream = EventStream::new(events, metric.len()).expect("random stream is well formed");
    Instance::new(metric, stream)
}

/// `n` uniform points in the unit square with Euclidean distances.
pub fn unit_square<T: Scalar>(n: usize, rng: &mut impl Rng) -> MetricSpace<T> {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    let mut flat = Vec::with_capacity(n * n);
    for a in &pts {
        for b in &pts {
            flat.push(T::lit((a.0 - b.0).hypot(a.1 - b.1)));
        }
    }
    MetricSpace::from_flat(n, flat).expect("Euclidean distances form a metric")
}

/// Complete graph with weights uniform in `(0, 1]`, closed under shortest
/// paths.
pub fn shortest_path_matrix<T: Scalar>(n: usize, rng: &mut impl Rng) -> MetricSpace<T> {
    let mut d = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w = 1.0 - rng.gen::<f64>();
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    for via in 0..n {
        for i in 0..n {
            for j in 0..n {
                let alt = d[i][via] + d[via][j];
                if alt < d[i][j] {
                    d[i][j] = alt;
                }
            }
        }
    }
    let flat = d.into_iter().flatten().map(T::lit).collect();
    MetricSpace::from_flat(n, flat).expect("shortest paths form a metric")
}
