//! Finite metric spaces over dense point indices.
//!
//! Two storage layouts are supported: an explicit distance matrix, and a
//! structured star (center at index 0, `leaves` points around it) that the
//! adversarial constructions need at sizes where a matrix would not fit in
//! memory.

use thiserror::Error;

use crate::scalar::{self, Scalar};

/// Index of a point of the ground set, `0..len()`.
pub type Point = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric must contain at least one point")]
    Empty,
    #[error("row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("distance ({i}, {j}) is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("distance ({i}, {j}) is negative")]
    Negative { i: usize, j: usize },
    #[error("diagonal entry ({i}, {i}) is non-zero")]
    NonZeroDiagonal { i: usize },
    #[error("asymmetric distance: d({i}, {j}) != d({j}, {i})")]
    Asymmetric { i: usize, j: usize },
    #[error("triangle inequality violated: d({a}, {c}) > d({a}, {via}) + d({via}, {c})")]
    Triangle { a: usize, via: usize, c: usize },
    #[error("invalid star metric: {0}")]
    InvalidStar(&'static str),
    #[error("capacity must be at least 1")]
    InvalidCapacity,
    #[error("all points coincide; the metric cannot be rescaled")]
    Degenerate,
}

/// Storage of the distance function.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout<T> {
    /// Row-major `n x n` matrix.
    Dense { n: usize, dist: Vec<T> },
    /// Center at point 0, leaves `1..=leaves`; center to leaf is `spoke`,
    /// leaf to leaf is `rim`.
    Star { leaves: usize, spoke: T, rim: T },
}

/// A validated finite metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpace<T> {
    layout: Layout<T>,
    coincident: bool,
}

impl<T: Scalar> MetricSpace<T> {
    /// Checks the metric axioms on a square matrix and reports the first
    /// violation found.
    pub fn validate(rows: &[Vec<T>]) -> Result<Self, MetricError> {
        let n = rows.len();
        if n == 0 {
            return Err(MetricError::Empty);
        }
        let mut dist = Vec::with_capacity(n * n);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(MetricError::NotSquare { row, len: r.len(), expected: n });
            }
            dist.extend_from_slice(r);
        }
        Self::from_flat(n, dist)
    }

    /// Same as [`validate`](Self::validate) on a row-major buffer.
    pub fn from_flat(n: usize, dist: Vec<T>) -> Result<Self, MetricError> {
        if n == 0 {
            return Err(MetricError::Empty);
        }
        assert_eq!(dist.len(), n * n, "flat buffer must hold n*n entries");
        let at = |i: usize, j: usize| dist[i * n + j];
        for i in 0..n {
            for j in 0..n {
                let d = at(i, j);
                if !d.is_finite() {
                    return Err(MetricError::NonFinite { i, j });
                }
                if d < T::zero() {
                    return Err(MetricError::Negative { i, j });
                }
            }
        }
        for i in 0..n {
            if at(i, i) != T::zero() {
                return Err(MetricError::NonZeroDiagonal { i });
            }
        }
        let tol = T::tolerance();
        for i in 0..n {
            for j in (i + 1)..n {
                if (at(i, j) - at(j, i)).abs() > tol {
                    return Err(MetricError::Asymmetric { i, j });
                }
            }
        }
        for a in 0..n {
            for via in 0..n {
                let left = at(a, via);
                for c in 0..n {
                    if at(a, c) > left + at(via, c) + tol {
                        return Err(MetricError::Triangle { a, via, c });
                    }
                }
            }
        }
        let coincident = (0..n).any(|i| (0..n).any(|j| i != j && at(i, j) == T::zero()));
        Ok(Self { layout: Layout::Dense { n, dist }, coincident })
    }

    /// Star with center 0 and `k` leaves at distance `eps`; leaves are `2 eps`
    /// apart.
    pub fn star(k: usize, eps: T) -> Result<Self, MetricError> {
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(MetricError::InvalidStar("radius must be positive and finite"));
        }
        Self::star_with(k, eps, eps + eps)
    }

    /// Generalized star where the leaf-to-leaf distance is set independently.
    pub fn star_with(k: usize, spoke: T, rim: T) -> Result<Self, MetricError> {
        if k == 0 {
            return Err(MetricError::InvalidStar("at least one leaf is required"));
        }
        if !spoke.is_finite() || !rim.is_finite() || spoke < T::zero() || rim < T::zero() {
            return Err(MetricError::InvalidStar("distances must be finite and non-negative"));
        }
        if k >= 2 && rim > spoke + spoke + T::tolerance() {
            return Err(MetricError::Triangle { a: 1, via: 0, c: 2 });
        }
        if k >= 2 && spoke > spoke + rim + T::tolerance() {
            return Err(MetricError::Triangle { a: 0, via: 1, c: 2 });
        }
        let coincident = spoke == T::zero() || (k >= 2 && rim == T::zero());
        Ok(Self { layout: Layout::Star { leaves: k, spoke, rim }, coincident })
    }

    pub fn layout(&self) -> &Layout<T> {
        &self.layout
    }

    /// Number of points `N`.
    pub fn len(&self) -> usize {
        match &self.layout {
            Layout::Dense { n, .. } => *n,
            Layout::Star { leaves, .. } => leaves + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// True when two distinct points are at distance zero.
    pub fn has_coincident_points(&self) -> bool {
        self.coincident
    }

    #[inline]
    pub fn dist(&self, a: Point, b: Point) -> T {
        match &self.layout {
            Layout::Dense { n, dist } => dist[a * n + b],
            Layout::Star { leaves, spoke, rim } => {
                debug_assert!(a <= *leaves && b <= *leaves);
                if a == b {
                    T::zero()
                } else if a == 0 || b == 0 {
                    *spoke
                } else {
                    *rim
                }
            }
        }
    }

    pub fn diameter(&self) -> T {
        match &self.layout {
            Layout::Dense { dist, .. } => dist.iter().copied().fold(T::zero(), scalar::max),
            Layout::Star { leaves, spoke, rim } => {
                if *leaves >= 2 {
                    scalar::max(*spoke, *rim)
                } else {
                    *spoke
                }
            }
        }
    }

    /// Smallest distance between two distinct points, `None` for `N = 1`.
    pub fn min_separation(&self) -> Option<T> {
        match &self.layout {
            Layout::Dense { n, dist } => {
                let n = *n;
                let mut best: Option<T> = None;
                for i in 0..n {
                    for j in (i + 1)..n {
                        let d = dist[i * n + j];
                        best = Some(best.map_or(d, |b| scalar::min(b, d)));
                    }
                }
                best
            }
            Layout::Star { leaves, spoke, rim } => {
                Some(if *leaves >= 2 { scalar::min(*spoke, *rim) } else { *spoke })
            }
        }
    }

    /// Points within distance `radius` of `center` (inclusive), written to
    /// `out` in increasing order.
    pub fn ball(&self, center: Point, radius: T, out: &mut Vec<Point>) {
        out.clear();
        match &self.layout {
            Layout::Dense { n, dist } => {
                let row = &dist[center * n..(center + 1) * n];
                out.extend(row.iter().enumerate().filter(|(_, d)| **d <= radius).map(|(p, _)| p));
            }
            Layout::Star { leaves, spoke, rim } => {
                let leaves = *leaves;
                if center == 0 {
                    if *spoke <= radius {
                        out.extend(0..=leaves);
                    } else {
                        out.push(0);
                    }
                } else {
                    if *spoke <= radius {
                        out.push(0);
                    }
                    if *rim <= radius {
                        out.extend(1..=leaves);
                    } else {
                        out.push(center);
                    }
                }
            }
        }
    }

    /// Full matrix copy. Allocates `N^2` entries.
    pub fn to_matrix(&self) -> Vec<Vec<T>> {
        let n = self.len();
        (0..n).map(|i| (0..n).map(|j| self.dist(i, j)).collect()).collect()
    }

    /// Rescales to diameter 1, then raises every distinct-pair distance below
    /// `1/upsilon` to exactly `1/upsilon`.
    pub fn normalize(&self, upsilon: u32) -> Result<NormalizedMetric<T>, MetricError> {
        if upsilon == 0 {
            return Err(MetricError::InvalidCapacity);
        }
        if self.len() == 1 {
            return Ok(NormalizedMetric { base: self.clone(), upsilon });
        }
        let diameter = self.diameter();
        if diameter <= T::zero() {
            return Err(MetricError::Degenerate);
        }
        let floor = T::one() / T::from_usize_lossy(upsilon as usize);
        let squash = |d: T| scalar::max(d / diameter, floor);
        let base = match &self.layout {
            Layout::Dense { n, dist } => {
                let n = *n;
                let scaled = dist
                    .iter()
                    .enumerate()
                    .map(|(idx, &d)| if idx / n == idx % n { T::zero() } else { squash(d) })
                    .collect();
                Self::from_flat(n, scaled)?
            }
            Layout::Star { leaves, spoke, rim } => Self::star_with(*leaves, squash(*spoke), squash(*rim))?,
        };
        Ok(NormalizedMetric { base, upsilon })
    }
}

/// A metric rescaled to diameter 1 with distinct points at least `1/upsilon`
/// apart.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMetric<T> {
    base: MetricSpace<T>,
    upsilon: u32,
}

impl<T: Scalar> NormalizedMetric<T> {
    pub fn base(&self) -> &MetricSpace<T> {
        &self.base
    }

    pub fn upsilon(&self) -> u32 {
        self.upsilon
    }

    pub fn into_base(self) -> MetricSpace<T> {
        self.base
    }
}
