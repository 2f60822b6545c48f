//! Random embedding of a normalized metric into a 2-HST.
//!
//! The tree has every leaf at depth `h`, one leaf per metric point, and the
//! edge between depths `i` and `i + 1` has length `2^-i`. Two leaves whose
//! lowest common ancestor sits at depth `j` are therefore
//! `2^(2-j) - 2^(2-h)` apart.
//!
//! Construction is the usual random hierarchical decomposition: one random
//! permutation of the points and one radius multiplier `beta` in `[1, 2)`.
//! At depth `j >= 1` every point joins the cluster of the first point in the
//! permutation within distance `beta * 2^-(j+1)`, intersected with its
//! parent cluster. Cluster diameters stay below `2^(1-j)`, which is at most
//! the tree distance of a pair split below depth `j`, so the tree dominates
//! the metric.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::marker::PhantomData;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::metric::{Layout, MetricSpace, NormalizedMetric, Point};
use crate::scalar::Scalar;
use crate::seed::derive_seed;

pub type NodeId = usize;

/// Number of rebuild attempts before giving up on a non-dominating tree.
const MAX_BUILD_ATTEMPTS: u64 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HstError {
    #[error("point {0} is not a leaf of this tree")]
    UnknownPoint(Point),
    #[error("bucket is undefined for a point paired with itself ({0})")]
    SamePoint(Point),
    #[error("capacity {0} is too small for an HST (need at least 2)")]
    CapacityTooSmall(u32),
    #[error("tree failed dominance after {attempts} attempts (pair {u}, {v})")]
    NotDominating { attempts: u64, u: Point, v: Point },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Node {
    pub depth: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Set on leaves only.
    pub point: Option<Point>,
}

/// A rooted 2-HST over the points of a metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Hst<T> {
    height: usize,
    points: usize,
    nodes: Vec<Node>,
    /// `ancestors[p * (height + 1) + j]` is the depth-`j` ancestor of `p`'s leaf.
    ancestors: Vec<NodeId>,
    /// Tree distance of a pair by LCA depth; index `height` is 0.
    level_dist: Vec<T>,
    _scalar: PhantomData<T>,
}

/// `max(1, ceil(log2 upsilon))`.
pub fn height_for(upsilon: u32) -> usize {
    let mut h = 0usize;
    while (1u64 << h) < upsilon as u64 {
        h += 1;
    }
    h.max(1)
}

impl<T: Scalar> Hst<T> {
    /// Builds a random HST of depth `height_for(upsilon)`. Deterministic in
    /// `(metric, seed)`.
    pub fn build(metric: &NormalizedMetric<T>, seed: u64) -> Result<Self, HstError> {
        if metric.upsilon() < 2 {
            return Err(HstError::CapacityTooSmall(metric.upsilon()));
        }
        let height = height_for(metric.upsilon());
        let base = metric.base();
        let mut last = (0, 0);
        for attempt in 0..MAX_BUILD_ATTEMPTS {
            let sub = if attempt == 0 { seed } else { derive_seed(seed, attempt) };
            let tree = Self::decompose(base, height, sub);
            match tree.verify_dominance(base) {
                Ok(()) => return Ok(tree),
                Err(pair) => last = pair,
            }
        }
        Err(HstError::NotDominating { attempts: MAX_BUILD_ATTEMPTS, u: last.0, v: last.1 })
    }

    fn decompose(metric: &MetricSpace<T>, height: usize, seed: u64) -> Self {
        let n = metric.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<Point> = (0..n).collect();
        order.shuffle(&mut rng);
        let beta: f64 = rng.gen_range(1.0..2.0);

        let stride = height + 1;
        let mut ancestors = vec![0; n * stride];
        let mut nodes = vec![Node { depth: 0, parent: None, children: Vec::new(), point: None }];
        let mut current = vec![0usize; n];
        let mut center = vec![usize::MAX; n];
        let mut ball = Vec::new();

        for depth in 1..height {
            let radius = T::lit(beta * 0.5f64.powi(depth as i32 + 1));
            center.iter_mut().for_each(|c| *c = usize::MAX);
            let mut remaining = n;
            for &c in &order {
                if remaining == 0 {
                    break;
                }
                metric.ball(c, radius, &mut ball);
                for &y in &ball {
                    if center[y] == usize::MAX {
                        center[y] = c;
                        remaining -= 1;
                    }
                }
            }
            let mut clusters: HashMap<(NodeId, Point), NodeId> = HashMap::new();
            for p in 0..n {
                let parent = current[p];
                let id = *clusters.entry((parent, center[p])).or_insert_with(|| {
                    let id = nodes.len();
                    nodes.push(Node { depth, parent: Some(parent), children: Vec::new(), point: None });
                    nodes[parent].children.push(id);
                    id
                });
                current[p] = id;
                ancestors[p * stride + depth] = id;
            }
        }
        for p in 0..n {
            let parent = current[p];
            let id = nodes.len();
            nodes.push(Node { depth: height, parent: Some(parent), children: Vec::new(), point: Some(p) });
            nodes[parent].children.push(id);
            ancestors[p * stride + height] = id;
        }

        let mut level_dist = Vec::with_capacity(stride);
        for j in 0..height {
            level_dist.push(T::lit(2f64.powi(2 - j as i32) - 2f64.powi(2 - height as i32)));
        }
        level_dist.push(T::zero());

        Self { height, points: n, nodes, ancestors, level_dist, _scalar: PhantomData }
    }

    /// Depth `h` of the leaves.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_points(&self) -> usize {
        self.points
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_of(&self, p: Point) -> Result<NodeId, HstError> {
        self.check(p)?;
        Ok(self.ancestor(p, self.height))
    }

    /// Depth-`depth` ancestor of the leaf of `p` (the leaf itself at `height`).
    #[inline]
    pub fn ancestor(&self, p: Point, depth: usize) -> NodeId {
        self.ancestors[p * (self.height + 1) + depth]
    }

    /// Depth of the lowest common ancestor; `height` when `u == v`.
    #[inline]
    pub fn lca_depth(&self, u: Point, v: Point) -> usize {
        let stride = self.height + 1;
        let a = &self.ancestors[u * stride..(u + 1) * stride];
        let b = &self.ancestors[v * stride..(v + 1) * stride];
        // ancestors agree on a prefix of depths
        a.iter().zip(b).take_while(|(x, y)| x == y).count() - 1
    }

    /// Tree distance of a pair with the given LCA depth.
    #[inline]
    pub fn level_distance(&self, depth: usize) -> T {
        self.level_dist[depth]
    }

    pub fn tree_dist(&self, u: Point, v: Point) -> Result<T, HstError> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.level_dist[self.lca_depth(u, v)])
    }

    /// LCA depth of two distinct points, in `[0, h)`.
    pub fn bucket(&self, u: Point, v: Point) -> Result<usize, HstError> {
        self.check(u)?;
        self.check(v)?;
        if u == v {
            return Err(HstError::SamePoint(u));
        }
        Ok(self.lca_depth(u, v))
    }

    /// `floor(-log2 dist_T(u, v))`, kept for comparison with [`bucket`](Self::bucket).
    pub fn distlog_floor(&self, u: Point, v: Point) -> Result<i64, HstError> {
        let d = self.tree_dist(u, v)?;
        if u == v {
            return Err(HstError::SamePoint(u));
        }
        Ok((-d.as_f64().log2()).floor() as i64)
    }

    /// Sum of edge lengths along the tree path, walking parent links.
    pub fn path_length(&self, u: Point, v: Point) -> Result<T, HstError> {
        let mut a = self.leaf_of(u)?;
        let mut b = self.leaf_of(v)?;
        let mut total = T::zero();
        let edge = |node: &Node| T::lit(0.5f64.powi(node.depth as i32 - 1));
        while a != b {
            total = total + edge(&self.nodes[a]) + edge(&self.nodes[b]);
            a = self.nodes[a].parent.expect("leaves share the root");
            b = self.nodes[b].parent.expect("leaves share the root");
        }
        Ok(total)
    }

    /// Checks `dist_T >= dist` for every pair, returning an offending pair.
    pub fn verify_dominance(&self, metric: &MetricSpace<T>) -> Result<(), (Point, Point)> {
        let tol = T::tolerance();
        match metric.layout() {
            Layout::Dense { n, .. } => {
                for u in 0..*n {
                    for v in (u + 1)..*n {
                        if self.level_dist[self.lca_depth(u, v)] + tol < metric.dist(u, v) {
                            return Err((u, v));
                        }
                    }
                }
                Ok(())
            }
            Layout::Star { leaves, spoke, rim } => {
                for leaf in 1..=*leaves {
                    if self.level_dist[self.lca_depth(0, leaf)] + tol < *spoke {
                        return Err((0, leaf));
                    }
                }
                // deepest depth at which two leaves still share an ancestor
                let mut owner: Vec<Point> = vec![usize::MAX; self.nodes.len()];
                for depth in (0..self.height).rev() {
                    for leaf in 1..=*leaves {
                        let node = self.ancestor(leaf, depth);
                        if owner[node] == usize::MAX {
                            owner[node] = leaf;
                        } else if owner[node] != leaf {
                            if self.level_dist[depth] + tol < *rim {
                                return Err((owner[node], leaf));
                            }
                            return Ok(());
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Mean of `dist_T / dist` over distinct pairs at positive distance.
    pub fn mean_stretch(&self, metric: &MetricSpace<T>) -> f64 {
        let n = metric.len();
        let mut sum = 0.0;
        let mut count = 0usize;
        for u in 0..n {
            for v in (u + 1)..n {
                let d = metric.dist(u, v).as_f64();
                if d > 0.0 {
                    sum += self.level_dist[self.lca_depth(u, v)].as_f64() / d;
                    count += 1;
                }
            }
        }
        if count == 0 {
            1.0
        } else {
            sum / count as f64
        }
    }

    /// Indented text rendering, one node per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let indent = "  ".repeat(node.depth);
            match node.point {
                Some(p) => writeln!(out, "{indent}leaf {id} point {p}").unwrap(),
                None => writeln!(out, "{indent}node {id} depth {} ({} children)", node.depth, node.children.len())
                    .unwrap(),
            }
            stack.extend(node.children.iter().rev());
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "height": self.height, "nodes": self.nodes })
    }

    fn check(&self, p: Point) -> Result<(), HstError> {
        if p < self.points {
            Ok(())
        } else {
            Err(HstError::UnknownPoint(p))
        }
    }
}
