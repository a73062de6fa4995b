//! Modified harmonic realization and the Albanese metric.
//!
//! The realization is obtained from one dense linear system per generator
//! coordinate: the mean displacement out of every vertex must equal the
//! asymptotic direction. Pinning the base vertex removes the translation
//! freedom; the pinned equation is then checked as a residual.
//!
//! The coordinate 1-forms of the increments are the harmonic representatives
//! of the generator duals `u_i`, so their Gram matrix under the energy inner
//! product is the Gram matrix of `u_1..u_d`. The Albanese metric on
//! generator coordinates is its inverse, and the Cholesky factor `G = L L^T`
//! encodes Gram–Schmidt of `u_1, u_2, ...` in index order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CrystalLattice, DartId, LatticeState, QuotientGraph, TransitionKernel, VertexId};
use crate::stationary::StationaryMeasure;

/// Residual allowed in the harmonicity equations.
pub const HARMONIC_TOLERANCE: f64 = 1e-10;

/// An antisymmetric function on darts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneForm {
    pub value: Vec<f64>,
}

impl OneForm {
    pub fn zero(graph: &QuotientGraph) -> Self {
        OneForm {
            value: vec![0.0; graph.dart_count()],
        }
    }

    /// Form with the given values on forward darts, negated on inverses.
    pub fn from_forward(forward: &[f64]) -> Self {
        let value = forward.iter().flat_map(|&v| [v, -v]).collect();
        OneForm { value }
    }

    pub fn at(&self, e: DartId) -> f64 {
        self.value[e.index()]
    }

    /// `<gamma, omega> = sum_e m~(e) omega(e)`.
    pub fn pair_chain(&self, chain: &[f64]) -> f64 {
        self.value.iter().zip(chain).map(|(w, c)| w * c).sum()
    }
}

/// Coboundary `df(e) = f(t(e)) - f(o(e))`.
pub fn difference(graph: &QuotientGraph, f: &[f64]) -> OneForm {
    OneForm {
        value: graph
            .darts()
            .iter()
            .map(|d| f[d.terminus.index()] - f[d.origin.index()])
            .collect(),
    }
}

/// Sum of `omega` along a connected dart path.
pub fn line_integral(graph: &QuotientGraph, omega: &OneForm, path: &[DartId]) -> Result<f64> {
    for (i, w) in path.windows(2).enumerate() {
        if graph.terminus(w[0]) != graph.origin(w[1]) {
            return Err(Error::BrokenPath(i, i + 1));
        }
    }
    Ok(path.iter().map(|&e| omega.at(e)).sum())
}

/// Energy inner product `<<omega, eta>> = sum m~ omega eta - <gamma, omega><gamma, eta>`.
pub fn energy_inner(omega: &OneForm, eta: &OneForm, edge_flow: &[f64]) -> f64 {
    let quad: f64 = edge_flow
        .iter()
        .zip(omega.value.iter().zip(&eta.value))
        .map(|(m, (a, b))| m * a * b)
        .sum();
    quad - omega.pair_chain(edge_flow) * eta.pair_chain(edge_flow)
}

/// Vertex positions on a fundamental domain and per-dart increments, both
/// in generator coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub base: VertexId,
    pub position: Vec<Vec<f64>>,
    pub increment: Vec<Vec<f64>>,
}

impl Realization {
    pub fn rank(&self) -> usize {
        self.position[0].len()
    }

    pub fn increment(&self, e: DartId) -> &[f64] {
        &self.increment[e.index()]
    }

    /// Position of a covering-graph point.
    pub fn locate(&self, state: &LatticeState) -> Vec<f64> {
        self.position[state.vertex.index()]
            .iter()
            .zip(&state.cell)
            .map(|(p, c)| p + *c as f64)
            .collect()
    }

    /// The i-th generator coordinate of the increments as a 1-form.
    pub fn coordinate_form(&self, i: usize) -> OneForm {
        OneForm {
            value: self.increment.iter().map(|w| w[i]).collect(),
        }
    }

    /// Largest deviation of `sum_{out(x)} p(e) dPhi(e)` from `target`.
    pub fn harmonicity_residual(&self, graph: &QuotientGraph, kernel: &TransitionKernel, target: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for x in graph.vertices() {
            for (i, t) in target.iter().enumerate() {
                let mean: f64 = graph
                    .outgoing(x)
                    .iter()
                    .map(|&e| kernel.prob(e) * self.increment(e)[i])
                    .sum();
                worst = worst.max((mean - t).abs());
            }
        }
        worst
    }
}

/// `sum_e m~(e) voltage(e)`.
pub(crate) fn flow_voltage_sum(lattice: &CrystalLattice, edge_flow: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; lattice.rank()];
    for d in lattice.graph().darts() {
        for (a, &v) in acc.iter_mut().zip(lattice.voltage(d.id)) {
            *a += edge_flow[d.id.index()] * v as f64;
        }
    }
    acc
}

/// Solves for the realization whose mean one-step displacement is the
/// asymptotic direction at every vertex, pinned to zero at `base`.
pub fn modified_harmonic_realization(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    m: &StationaryMeasure,
    base: VertexId,
) -> Result<Realization> {
    let graph = lattice.graph();
    let n = graph.vertex_count();
    let d = lattice.rank();
    if base.index() >= n {
        return Err(Error::UnknownVertex(format!("#{}", base.index())));
    }
    let drift = flow_voltage_sum(lattice, &m.edge_flow(graph, kernel));

    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, d);
    for x in graph.vertices() {
        let xi = x.index();
        for i in 0..d {
            b[(xi, i)] = drift[i];
        }
        for &e in graph.outgoing(x) {
            let p = kernel.prob(e);
            a[(xi, graph.terminus(e).index())] += p;
            a[(xi, xi)] -= p;
            for (i, &v) in lattice.voltage(e).iter().enumerate() {
                b[(xi, i)] -= p * v as f64;
            }
        }
    }
    let mut pinned = a.clone();
    let mut rhs = b.clone();
    pinned.row_mut(base.index()).fill(0.0);
    pinned[(base.index(), base.index())] = 1.0;
    rhs.row_mut(base.index()).fill(0.0);
    let pos = pinned.lu().solve(&rhs).ok_or(Error::Solve {
        what: "harmonic realization",
        residual: f64::INFINITY,
    })?;
    let residual = (&a * &pos - &b).abs().max();
    if !(residual <= HARMONIC_TOLERANCE) {
        return Err(Error::Solve {
            what: "harmonic realization",
            residual,
        });
    }
    // pivoting can leave rounding noise in the pinned row; translate it away
    let pin: Vec<f64> = pos.row(base.index()).iter().copied().collect();
    let position: Vec<Vec<f64>> = (0..n)
        .map(|x| pos.row(x).iter().zip(&pin).map(|(p, q)| p - q).collect())
        .collect();
    let increment = graph
        .darts()
        .iter()
        .map(|dart| {
            (0..d)
                .map(|i| {
                    position[dart.terminus.index()][i] - position[dart.origin.index()][i]
                        + lattice.voltage(dart.id)[i] as f64
                })
                .collect()
        })
        .collect();
    Ok(Realization {
        base,
        position,
        increment,
    })
}

/// Gram matrix of the generator duals, the Albanese metric and an
/// orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbaneseMetric {
    /// `G_ij = <<u_i, u_j>>`.
    pub gram: DMatrix<f64>,
    /// `<sigma_i, sigma_j>` in the Albanese metric, i.e. `G^{-1}`.
    pub metric: DMatrix<f64>,
    /// Lower-triangular `T = L^{-1}` with `T G T^T = I`; row `i` holds the
    /// orthonormal form `v_i` in the `u` basis, and `T w` are the coordinates
    /// of a generator-coordinate vector `w` in the dual frame.
    pub to_orthonormal: DMatrix<f64>,
}

impl AlbaneseMetric {
    pub fn from_gram(gram: DMatrix<f64>) -> Result<Self> {
        let chol = gram.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let d = gram.nrows();
        let l = chol.l();
        let to_orthonormal = l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or(Error::NotPositiveDefinite)?;
        let inverse = chol.inverse();
        let metric = (&inverse + inverse.transpose()) * 0.5;
        Ok(AlbaneseMetric {
            gram,
            metric,
            to_orthonormal,
        })
    }

    pub fn rank(&self) -> usize {
        self.gram.nrows()
    }

    /// Coordinates of `sum w_i sigma_i` in the orthonormal dual frame.
    pub fn to_orthonormal_coords(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.rank() {
            return Err(Error::Dimension {
                expected: self.rank(),
                found: w.len(),
            });
        }
        Ok((&self.to_orthonormal * DVector::from_column_slice(w)).iter().copied().collect())
    }

    /// Squared Albanese length of `sum w_i sigma_i`.
    pub fn squared_length(&self, w: &[f64]) -> f64 {
        let v = DVector::from_column_slice(w);
        (v.transpose() * &self.metric * &v)[(0, 0)]
    }
}

/// Albanese metric of `kernel` for a realization harmonic with respect to it.
pub fn albanese(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    m: &StationaryMeasure,
    realization: &Realization,
) -> Result<AlbaneseMetric> {
    let d = lattice.rank();
    if realization.rank() != d {
        return Err(Error::Dimension {
            expected: d,
            found: realization.rank(),
        });
    }
    let flow = m.edge_flow(lattice.graph(), kernel);
    let forms: Vec<OneForm> = (0..d).map(|i| realization.coordinate_form(i)).collect();
    let gram = DMatrix::from_fn(d, d, |i, j| energy_inner(&forms[i], &forms[j], &flow));
    AlbaneseMetric::from_gram(gram)
}
