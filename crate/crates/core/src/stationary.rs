//! Stationary measure, cycle bases and the drift of the walk.
//!
//! The stationary measure `m` on the quotient is found by a dense solve of
//! `(I - P^T) m = 0` with one row replaced by the normalization; a lazy power
//! iteration is kept as an independent cross-check. The homological direction
//! is the 1-cycle `sum m~(e) e` with `m~(e) = p(e) m(o(e))`, and its image in
//! `Z^d (x) R` (the asymptotic direction) is the `m~`-weighted voltage sum.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CrystalLattice, DartId, QuotientGraph, TransitionKernel, VertexId};

/// Tolerance for algebraic identities (stationarity, flow balance, symmetry).
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryMeasure {
    pub weight: Vec<f64>,
}

impl StationaryMeasure {
    pub fn get(&self, x: VertexId) -> f64 {
        self.weight[x.index()]
    }

    /// Dart weights `m~(e) = p(e) m(o(e))`.
    pub fn edge_flow(&self, graph: &QuotientGraph, kernel: &TransitionKernel) -> Vec<f64> {
        graph
            .darts()
            .iter()
            .map(|d| kernel.prob(d.id) * self.get(d.origin))
            .collect()
    }

    /// Largest violation of `m(x) = sum_{e in out(x)} p(~e) m(t(e))`.
    pub fn residual(&self, graph: &QuotientGraph, kernel: &TransitionKernel) -> f64 {
        graph
            .vertices()
            .map(|x| {
                let inflow: f64 = graph
                    .outgoing(x)
                    .iter()
                    .map(|&e| kernel.prob(graph.inverse(e)) * self.get(graph.terminus(e)))
                    .sum();
                (inflow - self.get(x)).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn transition_matrix(graph: &QuotientGraph, kernel: &TransitionKernel) -> DMatrix<f64> {
    let n = graph.vertex_count();
    let mut p = DMatrix::zeros(n, n);
    for d in graph.darts() {
        p[(d.origin.index(), d.terminus.index())] += kernel.prob(d.id);
    }
    p
}

/// Solves for the unique invariant probability vector.
pub fn stationary_measure(graph: &QuotientGraph, kernel: &TransitionKernel) -> Result<StationaryMeasure> {
    let n = graph.vertex_count();
    let mut a = DMatrix::identity(n, n) - transition_matrix(graph, kernel).transpose();
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let sol = a.lu().solve(&b).ok_or(Error::Solve {
        what: "stationary measure",
        residual: f64::INFINITY,
    })?;
    let m = StationaryMeasure {
        weight: sol.iter().copied().collect(),
    };
    let residual = m.residual(graph, kernel);
    let mass: f64 = m.weight.iter().sum();
    if residual > IDENTITY_TOLERANCE || (mass - 1.0).abs() > 1e-13 || m.weight.iter().any(|&w| w <= 0.0) {
        return Err(Error::Solve {
            what: "stationary measure",
            residual,
        });
    }
    Ok(m)
}

/// Power iteration on the lazy chain `(I + P) / 2`, which has the same
/// invariant measure and no periodicity.
pub fn stationary_by_power_iteration(
    graph: &QuotientGraph,
    kernel: &TransitionKernel,
    tolerance: f64,
    max_iter: usize,
) -> StationaryMeasure {
    let n = graph.vertex_count();
    let mut mu = vec![1.0 / n as f64; n];
    for _ in 0..max_iter {
        let mut next: Vec<f64> = mu.iter().map(|w| 0.5 * w).collect();
        for d in graph.darts() {
            next[d.terminus.index()] += 0.5 * mu[d.origin.index()] * kernel.prob(d.id);
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|w| *w /= total);
        let diff = mu.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        mu = next;
        if diff < tolerance {
            break;
        }
    }
    StationaryMeasure { weight: mu }
}

/// Tree–cotree basis of the first homology of the quotient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleBasis {
    /// Forward darts of the spanning-tree edges.
    pub tree: Vec<DartId>,
    /// Forward darts of the cotree edges, ordered by id.
    pub cotree: Vec<DartId>,
    /// For each cotree dart `e`: `e` followed by the tree path from `t(e)` back to `o(e)`.
    pub cycles: Vec<Vec<DartId>>,
}

/// Breadth-first spanning tree from the first vertex, darts taken in id order.
pub fn cycle_basis(graph: &QuotientGraph) -> CycleBasis {
    cycle_basis_by(graph, |_| 0)
}

/// Like [`cycle_basis`], but at each vertex darts are visited in order of
/// `(priority(e), id)`.
pub fn cycle_basis_by(graph: &QuotientGraph, priority: impl Fn(DartId) -> u8) -> CycleBasis {
    let n = graph.vertex_count();
    // parent[x] = dart used to reach x from its parent
    let mut parent: Vec<Option<DartId>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut in_tree = vec![false; graph.edge_count()];
    let mut queue = VecDeque::from([VertexId(0)]);
    visited[0] = true;
    while let Some(x) = queue.pop_front() {
        let mut out = graph.outgoing(x).to_vec();
        out.sort_by_key(|&e| (priority(e), e));
        for e in out {
            let t = graph.terminus(e);
            if !visited[t.index()] {
                visited[t.index()] = true;
                parent[t.index()] = Some(e);
                in_tree[e.edge()] = true;
                queue.push_back(t);
            }
        }
    }
    // path from the root down to x, as darts
    let root_path = |mut x: VertexId| {
        let mut path = Vec::new();
        while let Some(e) = parent[x.index()] {
            path.push(e);
            x = graph.origin(e);
        }
        path.reverse();
        path
    };
    let tree = (0..graph.edge_count())
        .filter(|&k| in_tree[k])
        .map(|k| DartId(2 * k))
        .collect();
    let cotree: Vec<DartId> = (0..graph.edge_count())
        .filter(|&k| !in_tree[k])
        .map(|k| DartId(2 * k))
        .collect();
    let cycles = cotree
        .iter()
        .map(|&e| {
            // t(e) -> root -> o(e), then cancel the shared prefix
            let up = root_path(graph.terminus(e));
            let down = root_path(graph.origin(e));
            let common = up.iter().zip(&down).take_while(|(a, b)| a == b).count();
            let mut cycle = vec![e];
            cycle.extend(up[common..].iter().rev().map(|&d| graph.inverse(d)));
            cycle.extend(down[common..].iter().copied());
            cycle
        })
        .collect();
    CycleBasis {
        tree,
        cotree,
        cycles,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    /// `m~(e)` per dart.
    pub edge_flow: Vec<f64>,
    /// Coefficients of the homological direction on the cycle basis.
    pub homology_coords: Vec<f64>,
    /// Asymptotic direction in generator coordinates.
    pub asymptotic: Vec<f64>,
}

impl DirectionReport {
    /// Largest net flow `sum_{out(x)} (m~(e) - m~(~e))` over vertices.
    pub fn max_net_flow(&self, graph: &QuotientGraph) -> f64 {
        graph
            .vertices()
            .map(|x| {
                graph
                    .outgoing(x)
                    .iter()
                    .map(|&e| self.edge_flow[e.index()] - self.edge_flow[graph.inverse(e).index()])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn homological_direction(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    m: &StationaryMeasure,
    basis: &CycleBasis,
) -> DirectionReport {
    let graph = lattice.graph();
    let edge_flow = m.edge_flow(graph, kernel);
    let homology_coords = basis
        .cotree
        .iter()
        .map(|&e| edge_flow[e.index()] - edge_flow[graph.inverse(e).index()])
        .collect();
    let mut asymptotic = vec![0.0; lattice.rank()];
    for d in graph.darts() {
        for (a, &v) in asymptotic.iter_mut().zip(lattice.voltage(d.id)) {
            *a += edge_flow[d.id.index()] * v as f64;
        }
    }
    DirectionReport {
        edge_flow,
        homology_coords,
        asymptotic,
    }
}

/// Whether the walk satisfies detailed balance with respect to `m`.
pub fn is_symmetric(graph: &QuotientGraph, kernel: &TransitionKernel, m: &StationaryMeasure) -> bool {
    graph.darts().iter().all(|d| {
        let fwd = kernel.prob(d.id) * m.get(d.origin);
        let rev = kernel.prob(d.inverse) * m.get(d.terminus);
        (fwd - rev).abs() <= IDENTITY_TOLERANCE
    })
}

/// Exact `E[(1/n) sum_{i=1..n} f(e_i)]` for the quotient walk started from
/// the vertex distribution `start`.
pub fn expected_edge_average(
    graph: &QuotientGraph,
    kernel: &TransitionKernel,
    f: &[f64],
    n: usize,
    start: &[f64],
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("expected_edge_average needs n >= 1".into()));
    }
    if f.len() != graph.dart_count() {
        return Err(Error::Dimension {
            expected: graph.dart_count(),
            found: f.len(),
        });
    }
    if start.len() != graph.vertex_count() {
        return Err(Error::Dimension {
            expected: graph.vertex_count(),
            found: start.len(),
        });
    }
    // one-step expected f from each vertex
    let local: Vec<f64> = graph
        .vertices()
        .map(|x| graph.outgoing(x).iter().map(|&e| kernel.prob(e) * f[e.index()]).sum())
        .collect();
    let mut mu = start.to_vec();
    let mut next = vec![0.0; mu.len()];
    let mut total = 0.0;
    for _ in 0..n {
        total += mu.iter().zip(&local).map(|(a, b)| a * b).sum::<f64>();
        next.iter_mut().for_each(|w| *w = 0.0);
        for d in graph.darts() {
            next[d.terminus.index()] += mu[d.origin.index()] * kernel.prob(d.id);
        }
        std::mem::swap(&mut mu, &mut next);
    }
    Ok(total / n as f64)
}
