//! Crystal lattices as voltage-labelled finite quotient graphs.
//!
//! The infinite periodic graph is never materialized. A [`CrystalLattice`]
//! stores the finite quotient (vertices and darts, each geometric edge
//! contributing a dart and its inverse) together with an integer voltage per
//! dart: the translation in `Z^d`, written in the generator basis, that the
//! dart induces between fundamental domains. A point of the covering graph is
//! a [`LatticeState`], i.e. a quotient vertex plus a cell vector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stationary::cycle_basis_by;

/// Row sums of a kernel must be within this distance of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DartId(pub usize);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl DartId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }

    /// Index of the geometric edge this dart belongs to.
    #[inline]
    pub fn edge(self) -> usize {
        self.0 / 2
    }

    /// Whether this dart is the orientation listed in the input.
    #[inline]
    pub fn is_forward(self) -> bool {
        self.0 % 2 == 0
    }
}

/// An oriented edge of the quotient graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dart {
    pub id: DartId,
    pub name: String,
    pub origin: VertexId,
    pub terminus: VertexId,
    pub inverse: DartId,
}

/// Finite quotient multigraph. Dart `2k` is the k-th input edge and dart
/// `2k + 1` its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientGraph {
    vertex_names: Vec<String>,
    darts: Vec<Dart>,
    outgoing: Vec<Vec<DartId>>,
}

impl QuotientGraph {
    /// Builds a connected graph from vertex names and named edges
    /// `(name, from, to)`. Inverse darts are named `~name`.
    pub fn new(vertex_names: Vec<String>, edges: &[(String, VertexId, VertexId)]) -> Result<Self> {
        if vertex_names.is_empty() {
            return Err(Error::Description("no vertices".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &vertex_names {
            if !seen.insert(name.clone()) {
                return Err(Error::DuplicateId(name.clone()));
            }
        }
        let n = vertex_names.len();
        let mut darts = Vec::with_capacity(2 * edges.len());
        let mut outgoing = vec![Vec::new(); n];
        let mut dart_names = std::collections::HashSet::new();
        for (k, (name, from, to)) in edges.iter().enumerate() {
            for v in [from, to] {
                if v.index() >= n {
                    return Err(Error::UnknownVertex(format!("#{}", v.index())));
                }
            }
            if !dart_names.insert(name.clone()) {
                return Err(Error::DuplicateId(name.clone()));
            }
            let fwd = DartId(2 * k);
            let rev = DartId(2 * k + 1);
            darts.push(Dart {
                id: fwd,
                name: name.clone(),
                origin: *from,
                terminus: *to,
                inverse: rev,
            });
            darts.push(Dart {
                id: rev,
                name: format!("~{name}"),
                origin: *to,
                terminus: *from,
                inverse: fwd,
            });
            outgoing[from.index()].push(fwd);
            outgoing[to.index()].push(rev);
        }
        for list in &mut outgoing {
            list.sort();
        }
        let graph = QuotientGraph {
            vertex_names,
            darts,
            outgoing,
        };
        graph.check_connected()?;
        Ok(graph)
    }

    fn check_connected(&self) -> Result<()> {
        let mut seen = vec![false; self.vertex_count()];
        let mut stack = vec![VertexId(0)];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &e in self.outgoing(x) {
                let t = self.terminus(e);
                if !seen[t.index()] {
                    seen[t.index()] = true;
                    stack.push(t);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Disconnected(self.vertex_names[i].clone())),
            None => Ok(()),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_names.len()
    }

    pub fn dart_count(&self) -> usize {
        self.darts.len()
    }

    pub fn edge_count(&self) -> usize {
        self.darts.len() / 2
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertex_count()).map(VertexId)
    }

    pub fn darts(&self) -> &[Dart] {
        &self.darts
    }

    pub fn dart(&self, e: DartId) -> &Dart {
        &self.darts[e.index()]
    }

    pub fn outgoing(&self, x: VertexId) -> &[DartId] {
        &self.outgoing[x.index()]
    }

    #[inline]
    pub fn origin(&self, e: DartId) -> VertexId {
        self.darts[e.index()].origin
    }

    #[inline]
    pub fn terminus(&self, e: DartId) -> VertexId {
        self.darts[e.index()].terminus
    }

    #[inline]
    pub fn inverse(&self, e: DartId) -> DartId {
        self.darts[e.index()].inverse
    }

    pub fn vertex_name(&self, x: VertexId) -> &str {
        &self.vertex_names[x.index()]
    }

    pub fn vertex_names(&self) -> &[String] {
        &self.vertex_names
    }

    pub fn vertex_by_name(&self, name: &str) -> Option<VertexId> {
        self.vertex_names.iter().position(|v| v == name).map(VertexId)
    }

    pub fn dart_by_name(&self, name: &str) -> Option<DartId> {
        self.darts.iter().find(|d| d.name == name).map(|d| d.id)
    }
}

/// A quotient graph with a `Z^d` voltage on every dart.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalLattice {
    graph: QuotientGraph,
    rank: usize,
    voltage: Vec<Vec<i64>>,
}

impl CrystalLattice {
    /// `forward_voltages[k]` is the voltage of input edge `k`; the inverse
    /// dart receives its negation.
    pub fn new(graph: QuotientGraph, rank: usize, forward_voltages: Vec<Vec<i64>>) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Description("rank must be positive".into()));
        }
        if forward_voltages.len() != graph.edge_count() {
            return Err(Error::Description(format!(
                "{} voltages for {} edges",
                forward_voltages.len(),
                graph.edge_count()
            )));
        }
        let mut voltage = Vec::with_capacity(graph.dart_count());
        for (k, v) in forward_voltages.into_iter().enumerate() {
            if v.len() != rank {
                return Err(Error::VoltageLength {
                    dart: graph.dart(DartId(2 * k)).name.clone(),
                    found: v.len(),
                    rank,
                });
            }
            let inverse = v.iter().map(|c| -c).collect();
            voltage.push(v);
            voltage.push(inverse);
        }
        let lattice = CrystalLattice {
            graph,
            rank,
            voltage,
        };
        lattice.check_surjective()?;
        Ok(lattice)
    }

    fn check_surjective(&self) -> Result<()> {
        let basis = self.cycle_basis();
        let rows: Vec<Vec<i64>> = basis
            .cycles
            .iter()
            .map(|c| self.cycle_voltage(c))
            .collect();
        match lattice_index(&rows, self.rank) {
            Some(1) => Ok(()),
            Some(i) => Err(Error::NotSurjective {
                rank: self.rank,
                index: i.to_string(),
            }),
            None => Err(Error::NotSurjective {
                rank: self.rank,
                index: "infinite".into(),
            }),
        }
    }

    pub fn graph(&self) -> &QuotientGraph {
        &self.graph
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn voltage(&self, e: DartId) -> &[i64] {
        &self.voltage[e.index()]
    }

    /// Sum of voltages along a dart sequence.
    pub fn cycle_voltage(&self, path: &[DartId]) -> Vec<i64> {
        let mut acc = vec![0; self.rank];
        for &e in path {
            for (a, v) in acc.iter_mut().zip(self.voltage(e)) {
                *a += v;
            }
        }
        acc
    }

    /// Spanning-tree cycle basis. The breadth-first tree prefers darts with
    /// zero voltage, so cycle voltages reduce to cotree voltages whenever the
    /// fundamental domain allows it.
    pub fn cycle_basis(&self) -> crate::stationary::CycleBasis {
        cycle_basis_by(&self.graph, |e| u8::from(self.voltage(e).iter().any(|&c| c != 0)))
    }

    /// Moves along `dart` in the covering graph.
    pub fn lift_step(&self, state: &LatticeState, dart: DartId) -> Result<LatticeState> {
        if dart.index() >= self.graph.dart_count() || self.graph.origin(dart) != state.vertex {
            let name = self
                .graph
                .darts
                .get(dart.index())
                .map_or_else(|| format!("#{}", dart.index()), |d| d.name.clone());
            return Err(Error::DartNotOutgoing {
                dart: name,
                vertex: self.graph.vertex_name(state.vertex).to_string(),
            });
        }
        if state.cell.len() != self.rank {
            return Err(Error::Dimension {
                expected: self.rank,
                found: state.cell.len(),
            });
        }
        let cell = state
            .cell
            .iter()
            .zip(self.voltage(dart))
            .map(|(c, v)| c + v)
            .collect();
        Ok(LatticeState {
            vertex: self.graph.terminus(dart),
            cell,
        })
    }
}

/// Index of the sublattice of `Z^rank` spanned by `rows`, or `None` when the
/// rows do not have full rank. Integer row reduction keeps entries exact.
pub(crate) fn lattice_index(rows: &[Vec<i64>], rank: usize) -> Option<i128> {
    let mut m: Vec<Vec<i128>> = rows
        .iter()
        .map(|r| r.iter().map(|&c| c as i128).collect())
        .collect();
    let mut index: i128 = 1;
    let mut top = 0;
    for col in 0..rank {
        // Euclid on the column below `top` until one nonzero entry remains.
        loop {
            let mut best: Option<usize> = None;
            for r in top..m.len() {
                if m[r][col] != 0 && best.is_none_or(|b| m[r][col].abs() < m[b][col].abs()) {
                    best = Some(r);
                }
            }
            let Some(p) = best else { return None };
            m.swap(top, p);
            let mut done = true;
            for r in top + 1..m.len() {
                if m[r][col] != 0 {
                    let q = m[r][col] / m[top][col];
                    for c in col..rank {
                        m[r][c] -= q * m[top][c];
                    }
                    if m[r][col] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        index *= m[top][col].abs();
        top += 1;
    }
    Some(index)
}

/// Strictly positive, row-stochastic weights on darts.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    prob: Vec<f64>,
    source: Option<Vec<String>>,
}

impl TransitionKernel {
    /// Validates positivity and row sums. Rows off by more than rounding but
    /// within [`ROW_SUM_TOLERANCE`] of 1 are rescaled; anything further off
    /// is rejected.
    pub fn new(graph: &QuotientGraph, prob: Vec<f64>) -> Result<Self> {
        if prob.len() != graph.dart_count() {
            return Err(Error::Dimension {
                expected: graph.dart_count(),
                found: prob.len(),
            });
        }
        for d in graph.darts() {
            let p = prob[d.id.index()];
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::NonPositive {
                    dart: d.name.clone(),
                    value: p,
                });
            }
        }
        let mut prob = prob;
        for x in graph.vertices() {
            let sum: f64 = graph.outgoing(x).iter().map(|e| prob[e.index()]).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::RowSum {
                    vertex: graph.vertex_name(x).to_string(),
                    sum,
                });
            }
            if (sum - 1.0).abs() > 4.0 * f64::EPSILON {
                for e in graph.outgoing(x) {
                    prob[e.index()] /= sum;
                }
            }
        }
        Ok(TransitionKernel { prob, source: None })
    }

    pub fn with_source(mut self, source: Vec<String>) -> Self {
        self.source = Some(source);
        self
    }

    #[inline]
    pub fn prob(&self, e: DartId) -> f64 {
        self.prob[e.index()]
    }

    pub fn probs(&self) -> &[f64] {
        &self.prob
    }

    /// The textual form each probability was parsed from, if it came from a
    /// lattice description.
    pub fn source(&self) -> Option<&[String]> {
        self.source.as_deref()
    }

    /// Largest `|sum - 1|` over vertices.
    pub fn max_row_deviation(&self, graph: &QuotientGraph) -> f64 {
        graph
            .vertices()
            .map(|x| {
                let s: f64 = graph.outgoing(x).iter().map(|&e| self.prob(e)).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// A point of the covering graph: quotient vertex plus translation cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeState {
    pub vertex: VertexId,
    pub cell: Vec<i64>,
}

impl LatticeState {
    pub fn origin(vertex: VertexId, rank: usize) -> Self {
        LatticeState {
            vertex,
            cell: vec![0; rank],
        }
    }
}

/// A probability given either as a JSON number or as a string such as
/// `"1/6"` or `"0.25"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Probability {
    Number(f64),
    Text(String),
}

impl Probability {
    pub fn value(&self) -> Result<f64> {
        match self {
            Probability::Number(v) => Ok(*v),
            Probability::Text(s) => parse_probability(s),
        }
    }

    pub fn source(&self) -> String {
        match self {
            Probability::Number(v) => format!("{v}"),
            Probability::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Probability {
    fn from(v: f64) -> Self {
        Probability::Number(v)
    }
}

impl From<&str> for Probability {
    fn from(s: &str) -> Self {
        Probability::Text(s.to_string())
    }
}

fn parse_probability(s: &str) -> Result<f64> {
    let bad = || Error::BadProbability(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0.0 {
                return Err(bad());
            }
            Ok(num / den)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDescription {
    pub id: String,
    pub from: String,
    pub to: String,
    pub voltage: Vec<i64>,
    pub p: Probability,
    pub p_rev: Probability,
}

/// The JSON lattice file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeDescription {
    pub rank: usize,
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeDescription>,
}

impl LatticeDescription {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Description(e.to_string()))
    }
}

/// Builds and validates a lattice and its kernel from a description.
pub fn build_lattice(desc: &LatticeDescription) -> Result<(CrystalLattice, TransitionKernel)> {
    let lookup = |name: &str| {
        desc.vertices
            .iter()
            .position(|v| v == name)
            .map(VertexId)
            .ok_or_else(|| Error::UnknownVertex(name.to_string()))
    };
    let mut edges = Vec::with_capacity(desc.edges.len());
    for e in &desc.edges {
        if e.id.starts_with('~') {
            return Err(Error::Description(format!(
                "edge id `{}` may not start with `~`",
                e.id
            )));
        }
        edges.push((e.id.clone(), lookup(&e.from)?, lookup(&e.to)?));
    }
    let graph = QuotientGraph::new(desc.vertices.clone(), &edges)?;
    let mut prob = Vec::with_capacity(graph.dart_count());
    let mut source = Vec::with_capacity(graph.dart_count());
    for e in &desc.edges {
        prob.push(e.p.value()?);
        prob.push(e.p_rev.value()?);
        source.push(e.p.source());
        source.push(e.p_rev.source());
    }
    let voltages = desc.edges.iter().map(|e| e.voltage.clone()).collect();
    let lattice = CrystalLattice::new(graph, desc.rank, voltages)?;
    let kernel = TransitionKernel::new(lattice.graph(), prob)?.with_source(source);
    Ok((lattice, kernel))
}

/// Lattices shipped with the library.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    /// Honeycomb lattice: two vertices, three parallel edges.
    Hexagonal,
    /// Dice lattice: one degree-six vertex joined to two degree-three ones.
    Dice,
    /// One vertex with a single loop over `Z`, forward probability `p`.
    Bouquet1(f64),
    /// Simple symmetric walk on `Z^2`.
    Square,
}

impl FromStr for Builtin {
    type Err = Error;

    /// Parses `hexagonal`, `dice`, `square`, `bouquet1` (p = 1/2) or
    /// `bouquet1(p)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "hexagonal" => Ok(Builtin::Hexagonal),
            "dice" => Ok(Builtin::Dice),
            "square" => Ok(Builtin::Square),
            "bouquet1" => Ok(Builtin::Bouquet1(0.5)),
            _ => {
                let p = s
                    .strip_prefix("bouquet1(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::UnknownBuiltin(s.to_string()))?;
                Ok(Builtin::Bouquet1(parse_probability(p)?))
            }
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Hexagonal => write!(f, "hexagonal"),
            Builtin::Dice => write!(f, "dice"),
            Builtin::Square => write!(f, "square"),
            Builtin::Bouquet1(p) => write!(f, "bouquet1({p})"),
        }
    }
}

impl Builtin {
    pub fn description(&self) -> Result<LatticeDescription> {
        let edge = |id: &str, from: &str, to: &str, voltage: &[i64], p: Probability, p_rev: Probability| {
            EdgeDescription {
                id: id.into(),
                from: from.into(),
                to: to.into(),
                voltage: voltage.to_vec(),
                p,
                p_rev,
            }
        };
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let desc = match *self {
            Builtin::Hexagonal => LatticeDescription {
                rank: 2,
                vertices: names(&["x1", "x2"]),
                edges: vec![
                    edge("e1", "x1", "x2", &[1, 0], "1/2".into(), "1/6".into()),
                    edge("e2", "x1", "x2", &[0, 0], "1/3".into(), "1/3".into()),
                    edge("e3", "x1", "x2", &[0, 1], "1/6".into(), "1/2".into()),
                ],
            },
            Builtin::Dice => LatticeDescription {
                rank: 2,
                vertices: names(&["x", "y", "z"]),
                edges: vec![
                    edge("e1", "x", "y", &[1, -1], "1/4".into(), "1/6".into()),
                    edge("e2", "x", "y", &[0, 0], "1/6".into(), "1/3".into()),
                    edge("e3", "x", "y", &[0, -1], "1/12".into(), "1/2".into()),
                    edge("e4", "x", "z", &[0, 1], "1/4".into(), "1/6".into()),
                    edge("e5", "x", "z", &[0, 0], "1/6".into(), "1/3".into()),
                    edge("e6", "x", "z", &[-1, 1], "1/12".into(), "1/2".into()),
                ],
            },
            Builtin::Square => LatticeDescription {
                rank: 2,
                vertices: names(&["x"]),
                edges: vec![
                    edge("e1", "x", "x", &[1, 0], "1/4".into(), "1/4".into()),
                    edge("e2", "x", "x", &[0, 1], "1/4".into(), "1/4".into()),
                ],
            },
            Builtin::Bouquet1(p) => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Config(format!("bouquet probability {p} not in (0, 1)")));
                }
                LatticeDescription {
                    rank: 1,
                    vertices: names(&["x"]),
                    edges: vec![edge("e", "x", "x", &[1], p.into(), (1.0 - p).into())],
                }
            }
        };
        Ok(desc)
    }
}

pub fn builtin(which: Builtin) -> Result<(CrystalLattice, TransitionKernel)> {
    build_lattice(&which.description()?)
}
