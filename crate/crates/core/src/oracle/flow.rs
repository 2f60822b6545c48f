//! Minimum-cost transportation by successive shortest paths.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
struct Edge<T> {
    to: usize,
    cap: usize,
    cost: T,
}

/// Small dense min-cost flow network; Dijkstra with potentials per
/// augmentation. Costs must be non-negative.
struct Network<T> {
    edges: Vec<Edge<T>>,
    adj: Vec<Vec<usize>>,
}

impl<T: Scalar> Network<T> {
    fn new(nodes: usize) -> Self {
        Self { edges: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    fn add(&mut self, from: usize, to: usize, cap: usize, cost: T) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.adj[from].push(id);
        self.edges.push(Edge { to: from, cap: 0, cost: -cost });
        self.adj[to].push(id + 1);
        id
    }

    /// Pushes up to `want` units from `s` to `t`; returns (flow, cost).
    fn run(&mut self, s: usize, t: usize, want: usize) -> (usize, T) {
        let n = self.adj.len();
        let mut potential = vec![T::zero(); n];
        let mut flow = 0;
        let mut total = T::zero();
        while flow < want {
            let mut dist: Vec<Option<T>> = vec![None; n];
            let mut via = vec![usize::MAX; n];
            let mut done = vec![false; n];
            dist[s] = Some(T::zero());
            loop {
                let mut u = None;
                for v in 0..n {
                    if done[v] {
                        continue;
                    }
                    if let Some(dv) = dist[v] {
                        if u.is_none_or(|w: usize| dv < dist[w].unwrap()) {
                            u = Some(v);
                        }
                    }
                }
                let Some(u) = u else { break };
                done[u] = true;
                let du = dist[u].unwrap();
                for &e in &self.adj[u] {
                    let edge = self.edges[e];
                    if edge.cap == 0 {
                        continue;
                    }
                    let reduced = edge.cost + potential[u] - potential[edge.to];
                    // clamp rounding noise, reduced costs are non-negative in exact arithmetic
                    let nd = du + if reduced < T::zero() { T::zero() } else { reduced };
                    if dist[edge.to].is_none_or(|d| nd < d) {
                        dist[edge.to] = Some(nd);
                        via[edge.to] = e;
                    }
                }
            }
            let Some(_) = dist[t] else { break };
            for v in 0..n {
                if let Some(d) = dist[v] {
                    potential[v] = potential[v] + d;
                }
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.edges[e].cap -= 1;
                self.edges[e ^ 1].cap += 1;
                total = total + self.edges[e].cost;
                v = self.edges[e ^ 1].to;
            }
            flow += 1;
        }
        (flow, total)
    }
}

/// Assigns every row to a column, at most `capacity` rows per column, at
/// minimum total `cost[row][col]`. Returns the cost and each row's column,
/// or `None` if infeasible.
pub fn min_cost_assignment<T: Scalar>(cost: &[Vec<T>], columns: usize, capacity: usize) -> Option<(T, Vec<usize>)> {
    let rows = cost.len();
    if rows == 0 {
        return Some((T::zero(), Vec::new()));
    }
    if columns * capacity < rows {
        return None;
    }
    let source = rows + columns;
    let sink = source + 1;
    let mut net = Network::new(rows + columns + 2);
    let mut arcs = vec![Vec::with_capacity(columns); rows];
    for (r, row) in cost.iter().enumerate() {
        net.add(source, r, 1, T::zero());
        for (c, &w) in row.iter().enumerate().take(columns) {
            arcs[r].push(net.add(r, rows + c, 1, w));
        }
    }
    for c in 0..columns {
        net.add(rows + c, sink, capacity, T::zero());
    }
    let (flow, total) = net.run(source, sink, rows);
    if flow < rows {
        return None;
    }
    let choice = arcs
        .iter()
        .map(|row| row.iter().position(|&e| net.edges[e].cap == 0).expect("every row is routed"))
        .collect();
    Some((total, choice))
}
