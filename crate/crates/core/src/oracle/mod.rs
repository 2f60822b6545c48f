//! Exact offline optimum for the clients active at the end of a stream.
//!
//! Facilities may only be opened at client locations, each at cost 1.

mod flow;

use serde::Serialize;
use thiserror::Error;

use crate::metric::{MetricSpace, Point};
use crate::scalar::{self, Scalar};
use crate::stream::{ClientId, EventStream};

pub use flow::min_cost_assignment;

/// Largest number of distinct client locations `opt_uncap` enumerates.
pub const UNCAP_LIMIT: usize = 20;
/// Largest number of clients `opt_cap` enumerates.
pub const CAP_LIMIT: usize = 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{size} exceeds the exhaustive limit of {limit}; use opt_bounds instead")]
    TooLarge { size: usize, limit: usize },
    #[error("the instance has no active clients")]
    Empty,
    #[error("capacity must be at least 1")]
    InvalidCapacity,
}

/// End state of a stream: active clients with their locations.
#[derive(Debug, Clone)]
pub struct OfflineInstance<'a, T> {
    pub metric: &'a MetricSpace<T>,
    pub clients: Vec<(ClientId, Point)>,
}

impl<'a, T: Scalar> OfflineInstance<'a, T> {
    pub fn new(metric: &'a MetricSpace<T>, clients: Vec<(ClientId, Point)>) -> Self {
        Self { metric, clients }
    }

    pub fn from_stream(metric: &'a MetricSpace<T>, stream: &EventStream) -> Self {
        Self { metric, clients: stream.final_active() }
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineSolution<T> {
    pub cost: T,
    pub facilities: Vec<ClientId>,
    /// `(client, facility)` for every client, facilities included.
    pub assignment: Vec<(ClientId, ClientId)>,
}

/// Uncapacitated optimum by enumerating every non-empty set of distinct
/// client locations. Ties go to the smallest location bitmask.
pub fn opt_uncap<T: Scalar>(inst: &OfflineInstance<'_, T>) -> Result<OfflineSolution<T>, OracleError> {
    if inst.is_empty() {
        return Err(OracleError::Empty);
    }
    // distinct locations, their multiplicity and a representative client
    let mut sites: Vec<(Point, usize, ClientId)> = Vec::new();
    for &(id, p) in &inst.clients {
        match sites.iter_mut().find(|s| s.0 == p) {
            Some(s) => {
                s.1 += 1;
                s.2 = s.2.min(id);
            }
            None => sites.push((p, 1, id)),
        }
    }
    sites.sort_unstable_by_key(|s| s.0);
    let k = sites.len();
    if k > UNCAP_LIMIT {
        return Err(OracleError::TooLarge { size: k, limit: UNCAP_LIMIT });
    }
    let d: Vec<Vec<T>> = sites.iter().map(|a| sites.iter().map(|b| inst.metric.dist(a.0, b.0)).collect()).collect();

    struct Search<'s, T> {
        d: &'s [Vec<T>],
        weight: Vec<T>,
        best: Option<(T, u32)>,
    }
    impl<T: Scalar> Search<'_, T> {
        fn visit(&mut self, i: usize, mask: u32, open: usize, near: &[T]) {
            let k = self.d.len();
            if i == k {
                if open == 0 {
                    return;
                }
                let conn: T = near.iter().zip(&self.weight).map(|(&n, &w)| n * w).sum();
                let cost = T::from_usize_lossy(open) + conn;
                let better = match self.best {
                    None => true,
                    Some((b, m)) => cost < b || (cost == b && mask < m),
                };
                if better {
                    self.best = Some((cost, mask));
                }
                return;
            }
            self.visit(i + 1, mask, open, near);
            let with: Vec<T> = near.iter().zip(&self.d[i]).map(|(&a, &b)| scalar::min(a, b)).collect();
            self.visit(i + 1, mask | (1 << i), open + 1, &with);
        }
    }
    let mut search = Search { d: &d, weight: sites.iter().map(|s| T::from_usize_lossy(s.1)).collect(), best: None };
    search.visit(0, 0, 0, &vec![T::infinity(); k]);
    let (cost, mask) = search.best.expect("at least one non-empty subset");

    let chosen: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
    let facilities: Vec<ClientId> = chosen.iter().map(|&i| sites[i].2).collect();
    let assignment = inst
        .clients
        .iter()
        .map(|&(id, p)| {
            let here = sites.iter().position(|s| s.0 == p).expect("site exists");
            let best = chosen
                .iter()
                .copied()
                .min_by(|&a, &b| d[here][a].partial_cmp(&d[here][b]).expect("finite").then(a.cmp(&b)))
                .expect("non-empty");
            let f = if best == here { if facilities.contains(&id) { id } else { sites[best].2 } } else { sites[best].2 };
            (id, f)
        })
        .collect();
    Ok(OfflineSolution { cost, facilities, assignment })
}

/// Capacitated optimum: every client set `F` with `|F| >= ceil(n / U)` is
/// scored by an exact minimum-cost assignment of the remaining clients, each
/// facility serving itself plus at most `U - 1` others.
pub fn opt_cap<T: Scalar>(inst: &OfflineInstance<'_, T>, upsilon: u32) -> Result<OfflineSolution<T>, OracleError> {
    if upsilon == 0 {
        return Err(OracleError::InvalidCapacity);
    }
    if inst.is_empty() {
        return Err(OracleError::Empty);
    }
    let n = inst.len();
    if n > CAP_LIMIT {
        return Err(OracleError::TooLarge { size: n, limit: CAP_LIMIT });
    }
    let u = upsilon as usize;
    let d: Vec<Vec<T>> = inst
        .clients
        .iter()
        .map(|a| inst.clients.iter().map(|b| inst.metric.dist(a.1, b.1)).collect())
        .collect();
    let min_open = n.div_ceil(u);

    let mut masks: Vec<u32> = (1..(1u32 << n)).filter(|m| m.count_ones() as usize >= min_open).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));

    let mut best: Option<(T, u32, Vec<usize>)> = None;
    for mask in masks {
        let open = mask.count_ones() as usize;
        let opening = T::from_usize_lossy(open);
        if let Some((b, _, _)) = &best {
            if opening > *b {
                break;
            }
        }
        let fac: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let rest: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
        // uncapacitated relaxation as a cheap lower bound
        let relax: T = rest.iter().map(|&r| fac.iter().map(|&f| d[r][f]).fold(T::infinity(), scalar::min)).sum();
        if let Some((b, _, _)) = &best {
            if opening + relax > *b {
                continue;
            }
        }
        let cost_rows: Vec<Vec<T>> = rest.iter().map(|&r| fac.iter().map(|&f| d[r][f]).collect()).collect();
        let Some((conn, pick)) = min_cost_assignment(&cost_rows, fac.len(), u - 1) else { continue };
        let total = opening + conn;
        let better = match &best {
            None => true,
            Some((b, m, _)) => total < *b || (total == *b && mask < *m),
        };
        if better {
            let mut target: Vec<usize> = (0..n).collect();
            for (row, &r) in rest.iter().enumerate() {
                target[r] = fac[pick[row]];
            }
            best = Some((total, mask, target));
        }
    }
    let (cost, mask, target) = best.expect("ceil(n/U) facilities always suffice");
    let facilities = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| inst.clients[i].0).collect();
    let assignment = (0..n).map(|i| (inst.clients[i].0, inst.clients[target[i]].0)).collect();
    Ok(OfflineSolution { cost, facilities, assignment })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds<T> {
    pub lower: T,
    pub upper: T,
}

/// Bounds on the optimum at any size. The lower bound is the largest of 1,
/// `ceil(n / U)` (capacitated only) and `sum_x min(1, nn(x))` where `nn(x)` is
/// the distance to the nearest other client. The upper bound is the cost of a
/// greedy solution that connects each client, in id order, to the nearest
/// open facility with spare capacity when it is closer than 1 and opens
/// otherwise.
pub fn opt_bounds<T: Scalar>(inst: &OfflineInstance<'_, T>, upsilon: Option<u32>) -> Bounds<T> {
    let n = inst.len();
    if n == 0 {
        return Bounds { lower: T::zero(), upper: T::zero() };
    }
    let m = inst.metric;
    let nn_sum: T = inst
        .clients
        .iter()
        .enumerate()
        .map(|(i, &(_, p))| {
            let nn = inst
                .clients
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, &(_, q))| m.dist(p, q))
                .fold(T::one(), scalar::min);
            nn
        })
        .sum();
    let mut lower = scalar::max(T::one(), nn_sum);
    if let Some(u) = upsilon {
        lower = scalar::max(lower, T::from_usize_lossy(n.div_ceil(u.max(1) as usize)));
    }

    let cap = upsilon.map_or(usize::MAX, |u| u.max(1) as usize);
    let mut open: Vec<(Point, usize)> = Vec::new();
    let mut upper = T::zero();
    let mut order = inst.clients.clone();
    order.sort_unstable_by_key(|c| c.0);
    for &(_, p) in &order {
        let target = open
            .iter()
            .enumerate()
            .filter(|(_, f)| f.1 < cap)
            .map(|(i, f)| (i, m.dist(p, f.0)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"));
        match target {
            Some((i, dist)) if dist < T::one() => {
                open[i].1 += 1;
                upper = upper + dist;
            }
            _ => {
                open.push((p, 1));
                upper = upper + T::one();
            }
        }
    }
    Bounds { lower, upper }
}
