//! Nearest eligible facility lookups.
//!
//! Ties are broken by smallest client id. Both indexes only hold facilities
//! that are currently eligible (open, and with capacity where it applies);
//! the engine keeps them in sync.

use std::collections::{BTreeMap, BTreeSet};

use crate::hst::Hst;
use crate::metric::{Layout, MetricSpace, Point};
use crate::scalar::Scalar;
use crate::stream::ClientId;

/// Eligible facilities grouped by location, searched in the original metric.
#[derive(Debug, Clone, Default)]
pub(crate) struct MetricIndex {
    by_location: BTreeMap<Point, BTreeSet<ClientId>>,
    all: BTreeSet<ClientId>,
    location: BTreeMap<ClientId, Point>,
}

impl MetricIndex {
    pub fn insert(&mut self, id: ClientId, at: Point) {
        self.by_location.entry(at).or_default().insert(id);
        self.all.insert(id);
        self.location.insert(id, at);
    }

    pub fn remove(&mut self, id: ClientId) {
        if let Some(at) = self.location.remove(&id) {
            self.all.remove(&id);
            if let Some(set) = self.by_location.get_mut(&at) {
                set.remove(&id);
                if set.is_empty() {
                    self.by_location.remove(&at);
                }
            }
        }
    }

    #[cfg(test)]
    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }

    /// Nearest eligible facility to a client at `x`, with its distance.
    pub fn nearest<T: Scalar>(&self, metric: &MetricSpace<T>, x: Point) -> Option<(ClientId, T)> {
        let mut best: Option<(ClientId, T)> = None;
        let mut offer = |id: ClientId, d: T| match best {
            Some((bid, bd)) if bd < d || (bd == d && bid < id) => {}
            _ => best = Some((id, d)),
        };
        match metric.layout() {
            Layout::Dense { .. } => {
                if !metric.has_coincident_points() {
                    if let Some(set) = self.by_location.get(&x) {
                        return set.first().map(|&id| (id, T::zero()));
                    }
                }
                for (&loc, set) in &self.by_location {
                    if let Some(&id) = set.first() {
                        offer(id, metric.dist(x, loc));
                    }
                }
            }
            Layout::Star { spoke, rim, .. } => {
                if let Some(&id) = self.by_location.get(&x).and_then(|s| s.first()) {
                    offer(id, T::zero());
                }
                if x != 0 {
                    if let Some(&id) = self.by_location.get(&0).and_then(|s| s.first()) {
                        offer(id, *spoke);
                    }
                }
                // smallest id located on a leaf other than x
                let other = self.all.iter().copied().find(|id| {
                    let loc = self.location[id];
                    loc != 0 && loc != x
                });
                if let Some(id) = other {
                    offer(id, if x == 0 { *spoke } else { *rim });
                }
            }
        }
        best
    }
}

/// Facilities with free capacity per bucket, organized along the HST.
///
/// `per_node[a]` for a depth-`j` node `a` holds the facilities below `a`
/// whose `cap_j` is positive; `per_point[p]` holds facilities located at `p`
/// whose deepest bucket is positive (used by co-located clients).
#[derive(Debug, Clone)]
pub(crate) struct TreeIndex {
    per_node: Vec<BTreeSet<ClientId>>,
    per_point: Vec<BTreeSet<ClientId>>,
    location: BTreeMap<ClientId, Point>,
}

impl TreeIndex {
    pub fn new<T: Scalar>(tree: &Hst<T>) -> Self {
        Self {
            per_node: vec![BTreeSet::new(); tree.nodes().len()],
            per_point: vec![BTreeSet::new(); tree.num_points()],
            location: BTreeMap::new(),
        }
    }

    pub fn set<T: Scalar>(&mut self, tree: &Hst<T>, id: ClientId, at: Point, bucket: usize, available: bool) {
        let node = tree.ancestor(at, bucket);
        let deepest = bucket + 1 == tree.height();
        if available {
            self.per_node[node].insert(id);
            if deepest {
                self.per_point[at].insert(id);
            }
            self.location.insert(id, at);
        } else {
            self.per_node[node].remove(&id);
            if deepest {
                self.per_point[at].remove(&id);
            }
        }
    }

    pub fn forget<T: Scalar>(&mut self, tree: &Hst<T>, id: ClientId) {
        if let Some(at) = self.location.remove(&id) {
            for b in 0..tree.height() {
                self.per_node[tree.ancestor(at, b)].remove(&id);
            }
            self.per_point[at].remove(&id);
        }
    }

    /// Closest facility (by tree distance) with capacity in the bucket a
    /// client at `x` would use, and the LCA depth to it (`h` if co-located).
    pub fn nearest<T: Scalar>(&self, tree: &Hst<T>, x: Point) -> Option<(ClientId, usize)> {
        let h = tree.height();
        if let Some(&id) = self.per_point[x].first() {
            return Some((id, h));
        }
        for depth in (0..h).rev() {
            let node = tree.ancestor(x, depth);
            let child = tree.ancestor(x, depth + 1);
            let hit = self.per_node[node]
                .iter()
                .copied()
                .find(|id| tree.ancestor(self.location[id], depth + 1) != child);
            if let Some(id) = hit {
                return Some((id, depth));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute<T: Scalar>(metric: &MetricSpace<T>, facilities: &[(ClientId, Point)], x: Point) -> Option<(ClientId, T)> {
        facilities
            .iter()
            .map(|&(id, loc)| (id, metric.dist(x, loc)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
    }

    #[test]
    fn star_and_dense_agree_with_brute_force() {
        let star = MetricSpace::star(6, 0.25f64).unwrap();
        let dense = MetricSpace::validate(&star.to_matrix()).unwrap();
        let layouts = [
            vec![],
            vec![(ClientId(5), 0)],
            vec![(ClientId(5), 0), (ClientId(2), 3)],
            vec![(ClientId(9), 3), (ClientId(2), 3), (ClientId(7), 4)],
            vec![(ClientId(1), 2), (ClientId(4), 0), (ClientId(0), 6)],
        ];
        for facilities in layouts {
            let mut idx = MetricIndex::default();
            for &(id, loc) in &facilities {
                idx.insert(id, loc);
            }
            for x in 0..7 {
                let expected = brute(&star, &facilities, x);
                assert_eq!(idx.nearest(&star, x), expected, "star x={x} {facilities:?}");
                assert_eq!(idx.nearest(&dense, x), expected, "dense x={x} {facilities:?}");
            }
        }
    }

    #[test]
    fn removal_keeps_index_consistent() {
        let star = MetricSpace::star(3, 0.5f64).unwrap();
        let mut idx = MetricIndex::default();
        idx.insert(ClientId(1), 1);
        idx.insert(ClientId(2), 0);
        assert_eq!(idx.nearest(&star, 1), Some((ClientId(1), 0.0)));
        idx.remove(ClientId(1));
        assert_eq!(idx.nearest(&star, 1), Some((ClientId(2), 0.5)));
        idx.remove(ClientId(2));
        assert!(idx.is_empty());
        assert_eq!(idx.nearest(&star, 1), None);
    }
}
