//! Exponential change of measure that removes the drift.
//!
//! At each quotient vertex `x` the free energy
//! `F_x(lambda) = sum_{e in out(x)} p(e) exp(lambda[dPhi(e)])` is strictly
//! convex and coercive, so it has a unique minimizer `lambda*(x)`. Tilting
//! each outgoing probability by `exp(lambda*(x)[dPhi(e)]) / F_x(lambda*(x))`
//! yields a kernel for which the same realization is harmonic (zero mean
//! displacement everywhere). `M_p` is the exponential rate relating the
//! n-step kernels of the two walks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::{albanese, AlbaneseMetric, Realization};
use crate::lattice::{CrystalLattice, QuotientGraph, TransitionKernel, VertexId};
use crate::stationary::{stationary_measure, StationaryMeasure};

/// Stop when the gradient norm is at or below this.
pub const GRADIENT_TOLERANCE: f64 = 1e-12;
pub const MAX_NEWTON_ITERATIONS: usize = 200;
/// Exponent arguments beyond this magnitude are rejected instead of clamped.
pub const EXPONENT_GUARD: f64 = 700.0;

/// Coordinates in which `lambda` is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// `lambda_i = lambda(sigma_i)`; pairings use generator coordinates.
    SigmaDual,
    /// `lambda = sum lambda_i v_i` with `v` the orthonormalized generator duals.
    Orthonormal,
}

/// Per-vertex `(p(e), dPhi(e))` with increments already expressed in the
/// evaluation frame, so that `lambda[dPhi(e)]` is a dot product.
#[derive(Debug, Clone)]
pub struct FreeEnergyContext {
    rank: usize,
    frame: Frame,
    to_frame: Option<DMatrix<f64>>,
    vertex_names: Vec<String>,
    terms: Vec<Vec<(f64, Vec<f64>)>>,
}

impl FreeEnergyContext {
    /// `metric` is required for [`Frame::Orthonormal`] and ignored otherwise.
    pub fn new(
        lattice: &CrystalLattice,
        kernel: &TransitionKernel,
        realization: &Realization,
        frame: Frame,
        metric: Option<&AlbaneseMetric>,
    ) -> Result<Self> {
        let graph = lattice.graph();
        let to_frame = match frame {
            Frame::SigmaDual => None,
            Frame::Orthonormal => Some(
                metric
                    .ok_or_else(|| Error::Config("orthonormal frame needs an Albanese metric".into()))?
                    .to_orthonormal
                    .clone(),
            ),
        };
        let mut ctx = FreeEnergyContext {
            rank: lattice.rank(),
            frame,
            to_frame,
            vertex_names: graph.vertex_names().to_vec(),
            terms: Vec::new(),
        };
        ctx.terms = graph
            .vertices()
            .map(|x| {
                graph
                    .outgoing(x)
                    .iter()
                    .map(|&e| (kernel.prob(e), ctx.to_frame(realization.increment(e))))
                    .collect()
            })
            .collect();
        Ok(ctx)
    }

    /// Context from explicit `(p, increment)` lists, increments taken as
    /// already expressed in the evaluation frame.
    pub fn from_terms(rank: usize, terms: Vec<Vec<(f64, Vec<f64>)>>) -> Self {
        let vertex_names = (0..terms.len()).map(|i| format!("#{i}")).collect();
        FreeEnergyContext {
            rank,
            frame: Frame::SigmaDual,
            to_frame: None,
            vertex_names,
            terms,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn vertex_count(&self) -> usize {
        self.terms.len()
    }

    /// Expresses a generator-coordinate vector in the evaluation frame.
    pub fn to_frame(&self, w: &[f64]) -> Vec<f64> {
        match &self.to_frame {
            None => w.to_vec(),
            Some(t) => (t * DVector::from_column_slice(w)).iter().copied().collect(),
        }
    }

    fn check(&self, x: VertexId, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.rank {
            return Err(Error::Dimension {
                expected: self.rank,
                found: lambda.len(),
            });
        }
        if x.index() >= self.terms.len() {
            return Err(Error::UnknownVertex(format!("#{}", x.index())));
        }
        Ok(())
    }

    /// `p(e) exp(lambda[dPhi(e)])` for every outgoing dart, with the overflow guard.
    fn weights(&self, x: VertexId, lambda: &[f64]) -> Result<Vec<f64>> {
        self.check(x, lambda)?;
        self.terms[x.index()]
            .iter()
            .map(|(p, w)| {
                let arg = dot(lambda, w);
                if arg.abs() > EXPONENT_GUARD || !arg.is_finite() {
                    Err(Error::Overflow(arg))
                } else {
                    Ok(p * arg.exp())
                }
            })
            .collect()
    }

    pub fn free_energy(&self, x: VertexId, lambda: &[f64]) -> Result<f64> {
        Ok(self.weights(x, lambda)?.iter().sum())
    }

    pub fn gradient(&self, x: VertexId, lambda: &[f64]) -> Result<Vec<f64>> {
        let weights = self.weights(x, lambda)?;
        let mut g = vec![0.0; self.rank];
        for (q, (_, w)) in weights.iter().zip(&self.terms[x.index()]) {
            for (gi, wi) in g.iter_mut().zip(w) {
                *gi += q * wi;
            }
        }
        Ok(g)
    }

    pub fn hessian(&self, x: VertexId, lambda: &[f64]) -> Result<DMatrix<f64>> {
        let weights = self.weights(x, lambda)?;
        let mut h = DMatrix::zeros(self.rank, self.rank);
        for (q, (_, w)) in weights.iter().zip(&self.terms[x.index()]) {
            let v = DVector::from_column_slice(w);
            h += *q * &v * v.transpose();
        }
        Ok(h)
    }

    /// Whether `F_x` attains its infimum, i.e. zero is interior to the convex
    /// hull of the increments at `x`. Otherwise some `u != 0` has
    /// `u[w] >= 0` for every increment; such a `u` can be taken orthogonal to
    /// `rank - 1` independent increments, so those normals are tried.
    pub fn has_minimizer(&self, x: VertexId) -> bool {
        let d = self.rank;
        let points: Vec<&Vec<f64>> = self.terms[x.index()].iter().map(|(_, w)| w).collect();
        let all = DMatrix::from_fn(points.len(), d, |i, j| points[i][j]);
        if all.rank(1e-12) < d {
            return false;
        }
        let scale = points.iter().map(|w| norm(w)).fold(0.0, f64::max);
        let one_sided = |u: &[f64]| {
            let un = norm(u);
            if un <= 1e-12 * scale.powi(d as i32 - 1) {
                return false;
            }
            let tol = 1e-12 * un * scale;
            let dots: Vec<f64> = points.iter().map(|w| dot(u, w)).collect();
            dots.iter().all(|v| *v >= -tol) || dots.iter().all(|v| *v <= tol)
        };
        let mut subset: Vec<usize> = (0..d.saturating_sub(1)).collect();
        loop {
            // generalized cross product of the chosen increments
            let u: Vec<f64> = if d == 1 {
                vec![1.0]
            } else {
                (0..d)
                    .map(|col| {
                        let minor = DMatrix::from_fn(d - 1, d - 1, |i, j| {
                            let jj = if j < col { j } else { j + 1 };
                            points[subset[i]][jj]
                        });
                        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
                        sign * minor.determinant()
                    })
                    .collect()
            };
            if one_sided(&u) {
                return false;
            }
            // next (d - 1)-subset in lexicographic order
            let k = subset.len();
            let mut i = k;
            while i > 0 && subset[i - 1] == points.len() - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                return true;
            }
            subset[i - 1] += 1;
            for j in i..k {
                subset[j] = subset[j - 1] + 1;
            }
        }
    }

    /// Damped Newton from `lambda = 0`. Steps are halved until `F` decreases.
    pub fn minimize(&self, x: VertexId) -> Result<VertexMinimizer> {
        if x.index() < self.terms.len() && !self.has_minimizer(x) {
            return Err(Error::Unbounded {
                vertex: self.vertex_names[x.index()].clone(),
            });
        }
        let mut lambda = vec![0.0; self.rank];
        let mut f = self.free_energy(x, &lambda)?;
        let mut g = self.gradient(x, &lambda)?;
        let mut trace = vec![f];
        for iterations in 0..=MAX_NEWTON_ITERATIONS {
            let gnorm = norm(&g);
            // F <= F(0) = 1, so this is at least as strict as an absolute
            // test, and it cannot be met by sliding down an unbounded ray
            if gnorm <= GRADIENT_TOLERANCE * f {
                return Ok(VertexMinimizer {
                    lambda,
                    f_min: f,
                    iterations,
                    gradient_norm: gnorm,
                    trace,
                });
            }
            if iterations == MAX_NEWTON_ITERATIONS {
                break;
            }
            let h = self.hessian(x, &lambda)?;
            let step = h
                .cholesky()
                .ok_or(Error::NotPositiveDefinite)?
                .solve(&DVector::from_column_slice(&g));
            let mut t = 1.0;
            let accepted = loop {
                let cand: Vec<f64> = lambda.iter().zip(step.iter()).map(|(l, s)| l - t * s).collect();
                if let Ok(fc) = self.free_energy(x, &cand) {
                    if fc < f {
                        break Some((cand, fc));
                    }
                    // flat to rounding: accept only if the gradient improves
                    if fc <= f * (1.0 + 4.0 * f64::EPSILON) {
                        let gc = self.gradient(x, &cand)?;
                        if norm(&gc) < gnorm {
                            break Some((cand, fc));
                        }
                    }
                }
                t *= 0.5;
                if t < 1e-30 {
                    break None;
                }
            };
            let Some((cand, fc)) = accepted else { break };
            lambda = cand;
            f = fc;
            g = self.gradient(x, &lambda)?;
            trace.push(f);
        }
        Err(Error::NoConvergence {
            vertex: self.vertex_names[x.index()].clone(),
            gradient_norm: norm(&g),
        })
    }

    pub fn minimize_all(&self) -> Result<MinimizerResult> {
        let vertices = (0..self.vertex_count())
            .map(|x| self.minimize(VertexId(x)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MinimizerResult {
            frame: self.frame,
            vertices,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexMinimizer {
    pub lambda: Vec<f64>,
    pub f_min: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// `F` at every accepted iterate, starting from `F(0) = 1`.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerResult {
    pub frame: Frame,
    pub vertices: Vec<VertexMinimizer>,
}

/// The tilted kernel with its invariant measure, metric and rate constant.
#[derive(Debug, Clone)]
pub struct ChangedKernel {
    pub kernel: TransitionKernel,
    pub stationary: StationaryMeasure,
    pub m_p: f64,
    pub albanese: AlbaneseMetric,
    pub minimizers: MinimizerResult,
}

/// Tilted kernel with `lambda` in generator-dual coordinates.
pub fn change_kernel(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    m: &StationaryMeasure,
    realization: &Realization,
) -> Result<ChangedKernel> {
    let ctx = FreeEnergyContext::new(lattice, kernel, realization, Frame::SigmaDual, None)?;
    change_kernel_with(lattice, kernel, m, realization, &ctx)
}

/// Tilted kernel using the minimizers of a prepared context.
pub fn change_kernel_with(
    lattice: &CrystalLattice,
    kernel: &TransitionKernel,
    m: &StationaryMeasure,
    realization: &Realization,
    ctx: &FreeEnergyContext,
) -> Result<ChangedKernel> {
    let graph = lattice.graph();
    let minimizers = ctx.minimize_all()?;
    let mut prob = vec![0.0; graph.dart_count()];
    for x in graph.vertices() {
        let vm = &minimizers.vertices[x.index()];
        let weights = ctx.weights(x, &vm.lambda)?;
        for (&e, q) in graph.outgoing(x).iter().zip(weights) {
            prob[e.index()] = q / vm.f_min;
        }
    }
    let changed = TransitionKernel::new(graph, prob)?;
    let stationary = stationary_measure(graph, &changed)?;

    let drift = ctx.to_frame(&crate::harmonic::flow_voltage_sum(lattice, &m.edge_flow(graph, kernel)));
    let m_p = graph
        .vertices()
        .map(|x| {
            let vm = &minimizers.vertices[x.index()];
            m.get(x) * (dot(&vm.lambda, &drift) - vm.f_min.ln())
        })
        .sum();
    let albanese = albanese(lattice, &changed, &stationary, realization)?;
    Ok(ChangedKernel {
        kernel: changed,
        stationary,
        m_p,
        albanese,
        minimizers,
    })
}

/// `p_eps = p0 + eps q`, where `p0` is the `m`-reversible part of `p` and
/// `q` the antisymmetric remainder.
pub fn interpolation_family(
    graph: &QuotientGraph,
    kernel: &TransitionKernel,
    m: &StationaryMeasure,
    epsilon: f64,
) -> Result<TransitionKernel> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} not in [0, 1]")));
    }
    let mut prob = Vec::with_capacity(graph.dart_count());
    for d in graph.darts() {
        let fwd = kernel.prob(d.id);
        let back = m.get(d.terminus) / m.get(d.origin) * kernel.prob(d.inverse);
        let p0 = 0.5 * (fwd + back);
        let q = 0.5 * (fwd - back);
        let p = if epsilon == 1.0 { fwd } else { p0 + epsilon * q };
        if p <= 0.0 {
            return Err(Error::NonPositive {
                dart: d.name.clone(),
                value: p,
            });
        }
        prob.push(p);
    }
    TransitionKernel::new(graph, prob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::modified_harmonic_realization;
    use crate::lattice::{builtin, Builtin};
    use crate::stationary::{homological_direction, is_symmetric};

    struct Setup {
        lattice: CrystalLattice,
        kernel: TransitionKernel,
        m: StationaryMeasure,
        r: Realization,
        metric: AlbaneseMetric,
    }

    fn setup(b: Builtin) -> Setup {
        let (lattice, kernel) = builtin(b).unwrap();
        let m = stationary_measure(lattice.graph(), &kernel).unwrap();
        let r = modified_harmonic_realization(&lattice, &kernel, &m, VertexId(0)).unwrap();
        let metric = albanese(&lattice, &kernel, &m, &r).unwrap();
        Setup {
            lattice,
            kernel,
            m,
            r,
            metric,
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn free_energy_at_zero_is_one() {
        for b in [Builtin::Hexagonal, Builtin::Dice, Builtin::Bouquet1(0.3)] {
            let s = setup(b);
            let ctx = FreeEnergyContext::new(&s.lattice, &s.kernel, &s.r, Frame::SigmaDual, None).unwrap();
            for x in s.lattice.graph().vertices() {
                let f = ctx.free_energy(x, &vec![0.0; s.lattice.rank()]).unwrap();
                assert!(close(f, 1.0, 1e-15));
            }
        }
    }

    #[test]
    fn bouquet_free_energy_in_orthonormal_frame() {
        let p: f64 = 0.3;
        let s = setup(Builtin::Bouquet1(p));
        let ctx = FreeEnergyContext::new(&s.lattice, &s.kernel, &s.r, Frame::Orthonormal, Some(&s.metric)).unwrap();
        let scale = (4.0 * p * (1.0 - p)).sqrt();
        for lam in [-1.5, -0.2, 0.0, 0.4, 2.0] {
            let want = p * (lam / scale).exp() + (1.0 - p) * (-lam / scale).exp();
            assert!(close(ctx.free_energy(VertexId(0), &[lam]).unwrap(), want, 1e-14));
        }
    }

    #[test]
    fn gradient_at_zero_is_drift() {
        let s = setup(Builtin::Dice);
        let ctx = FreeEnergyContext::new(&s.lattice, &s.kernel, &s.r, Frame::SigmaDual, None).unwrap();
        for x in s.lattice.graph().vertices() {
            let g = ctx.gradient(x, &[0.0, 0.0]).unwrap();
            assert!(close(g[0], 1.0 / 6.0, 1e-14) && close(g[1], 0.0, 1e-14));
        }
        let s = setup(Builtin::Bouquet1(0.5));
        let ctx = FreeEnergyContext::new(&s.lattice, &s.kernel, &s.r, Frame::SigmaDual, None).unwrap();
        assert_eq!(ctx.gradient(VertexId(0), &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn symmetric_bouquet_hessian_is_identity_in_orthonormal_frame() {
        let s = setup(Builtin::Bouquet1(0.5));
        let ctx = FreeEnergyContext::new(&s.lattice, &s.kernel, &s.r, Frame::Orthonormal, Some(&s.metric)).unwrap();
        let h = ctx.hessian(VertexId(0), &[0.0]).unwrap();
        assert!(close(h[(0, 0)], 1.0, 1e-15));
    }

    #[test]
    fn overflow_guard_trips() {
        let s = setup(Builtin::Hexagonal);
        let ctx = FreeEnergyContext::new(&s.lattice, &s.kernel, &s.r, Frame::SigmaDual, None).unwrap();
        assert!(matches!(ctx.free_energy(VertexId(0), &[5000.0, 0.0]), Err(Error::Overflow(_))));
        assert!(matches!(ctx.free_energy(VertexId(0), &[0.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn bouquet_minimizer_closed_form() {
        for p in [0.2, 1.0 / 3.0, 0.6667, 0.9] {
            let s = setup(Builtin::Bouquet1(p));
            let ctx =
                FreeEnergyContext::new(&s.lattice, &s.kernel, &s.r, Frame::Orthonormal, Some(&s.metric)).unwrap();
            let vm = ctx.minimize(VertexId(0)).unwrap();
            let q = 1.0 - p;
            assert!(close(vm.lambda[0], (p * q).sqrt() * (q / p).ln(), 1e-11), "p={p}");
            assert!(close(vm.f_min, (4.0 * p * q).sqrt(), 1e-14));
            assert!(vm.gradient_norm <= GRADIENT_TOLERANCE);
        }
    }

    #[test]
    fn minimizer_existence_is_geometric() {
        let ctx = FreeEnergyContext::from_terms(
            2,
            vec![
                // triangle around the origin
                vec![(0.2, vec![1.0, 0.0]), (0.3, vec![-1.0, 1.0]), (0.5, vec![-1.0, -1.0])],
                // all above the horizontal axis
                vec![(0.4, vec![-0.64, 0.02]), (0.1, vec![-0.64, 1.02]), (0.5, vec![0.36, 0.02])],
                // origin on an edge
                vec![(0.5, vec![1.0, 0.0]), (0.25, vec![-1.0, 0.0]), (0.25, vec![0.0, 1.0])],
                // collinear
                vec![(0.5, vec![1.0, 1.0]), (0.5, vec![-1.0, -1.0])],
            ],
        );
        assert!(ctx.has_minimizer(VertexId(0)));
        for x in 1..4 {
            assert!(!ctx.has_minimizer(VertexId(x)), "{x}");
            assert!(matches!(ctx.minimize(VertexId(x)), Err(Error::Unbounded { .. })));
        }
        let one = FreeEnergyContext::from_terms(1, vec![vec![(0.5, vec![2.0]), (0.5, vec![0.5])]]);
        assert!(!one.has_minimizer(VertexId(0)));
        let three = FreeEnergyContext::from_terms(
            3,
            vec![vec![
                (0.25, vec![1.0, 0.0, 0.0]),
                (0.25, vec![0.0, 1.0, 0.0]),
                (0.25, vec![0.0, 0.0, 1.0]),
                (0.25, vec![-1.0, -1.0, -1.0]),
            ]],
        );
        assert!(three.has_minimizer(VertexId(0)));
        assert!(three.minimize(VertexId(0)).is_ok());
    }

    #[test]
    fn newton_trace_is_monotone() {
        for b in [Builtin::Hexagonal, Builtin::Dice, Builtin::Bouquet1(0.9)] {
            let s = setup(b);
            let ctx = FreeEnergyContext::new(&s.lattice, &s.kernel, &s.r, Frame::SigmaDual, None).unwrap();
            for vm in ctx.minimize_all().unwrap().vertices {
                assert!(close(vm.trace[0], 1.0, 1e-15));
                for w in vm.trace.windows(2) {
                    assert!(w[1] <= w[0] * (1.0 + 4.0 * f64::EPSILON));
                }
                assert!(vm.f_min <= 1.0);
            }
        }
    }

    #[test]
    fn hexagonal_changed_kernel() {
        // three increments out of each vertex: the zero-mean tilt is uniform
        let s = setup(Builtin::Hexagonal);
        let ch = change_kernel(&s.lattice, &s.kernel, &s.m, &s.r).unwrap();
        let g = s.lattice.graph();
        for &p in ch.kernel.probs() {
            assert!(close(p, 1.0 / 3.0, 1e-12), "{:?}", ch.kernel.probs());
        }
        assert!(ch.stationary.weight.iter().all(|w| close(*w, 0.5, 1e-12)));
        assert!(is_symmetric(g, &ch.kernel, &ch.stationary));
        let f = 3.0 * 6f64.powf(-2.0 / 3.0);
        assert!(close(ch.minimizers.vertices[0].f_min, f, 1e-12));
        assert!(close(ch.minimizers.vertices[1].f_min, f, 1e-12));
    }

    #[test]
    fn dice_changed_kernel() {
        let s = setup(Builtin::Dice);
        let ch = change_kernel(&s.lattice, &s.kernel, &s.m, &s.r).unwrap();
        let g = s.lattice.graph();
        let r3 = 3f64.sqrt();
        let a = (3.0 - r3) / 8.0;
        let b = (r3 - 1.0) / 4.0;
        for (name, v) in [("e1", a), ("e2", b), ("e3", a), ("e4", a), ("e5", b), ("e6", a)] {
            let e = g.dart_by_name(name).unwrap();
            assert!(close(ch.kernel.prob(e), v, 1e-10), "{name} {:?}", ch.kernel.probs());
            assert!(close(ch.kernel.prob(g.inverse(e)), 1.0 / 3.0, 1e-10));
        }
        let fx = (r3 + 1.0) / 3.0;
        let fy = 3.0 * 6f64.powf(-2.0 / 3.0);
        let mins: Vec<f64> = ch.minimizers.vertices.iter().map(|v| v.f_min).collect();
        assert!(close(mins[0], fx, 1e-12) && close(mins[1], fy, 1e-12) && close(mins[2], fy, 1e-12));
        let dir = homological_direction(&s.lattice, &ch.kernel, &ch.stationary, &s.lattice.cycle_basis());
        let c = (5.0 - 3.0 * r3) / 48.0;
        assert!(dir.homology_coords.iter().all(|h| close(*h, c, 1e-10)));
        assert!(dir.asymptotic.iter().all(|a| a.abs() < 1e-10));
        assert!(!is_symmetric(g, &ch.kernel, &ch.stationary));
    }

    #[test]
    fn symmetric_input_is_unchanged() {
        let s = setup(Builtin::Square);
        let ch = change_kernel(&s.lattice, &s.kernel, &s.m, &s.r).unwrap();
        assert_eq!(ch.m_p, 0.0);
        for (a, b) in ch.kernel.probs().iter().zip(s.kernel.probs()) {
            assert!(close(*a, *b, 1e-15));
        }
        assert!(ch.minimizers.vertices[0].lambda.iter().all(|l| *l == 0.0));
        assert!((&ch.albanese.gram - &s.metric.gram).abs().max() < 1e-15);
    }

    #[test]
    fn frames_give_identical_tilts() {
        for b in [Builtin::Hexagonal, Builtin::Dice] {
            let s = setup(b);
            let sigma = change_kernel(&s.lattice, &s.kernel, &s.m, &s.r).unwrap();
            let ctx =
                FreeEnergyContext::new(&s.lattice, &s.kernel, &s.r, Frame::Orthonormal, Some(&s.metric)).unwrap();
            let ortho = change_kernel_with(&s.lattice, &s.kernel, &s.m, &s.r, &ctx).unwrap();
            for (a, b) in sigma.kernel.probs().iter().zip(ortho.kernel.probs()) {
                assert!(close(*a, *b, 1e-10));
            }
            assert!(close(sigma.m_p, ortho.m_p, 1e-12));
        }
    }

    #[test]
    fn interpolation_endpoints() {
        let s = setup(Builtin::Dice);
        let g = s.lattice.graph();
        let one = interpolation_family(g, &s.kernel, &s.m, 1.0).unwrap();
        assert_eq!(one.probs(), s.kernel.probs());
        let zero = interpolation_family(g, &s.kernel, &s.m, 0.0).unwrap();
        assert!(is_symmetric(g, &zero, &s.m));
        assert!(interpolation_family(g, &s.kernel, &s.m, 1.5).is_err());
    }

    #[test]
    fn interpolation_scales_drift() {
        let s = setup(Builtin::Hexagonal);
        let g = s.lattice.graph();
        let basis = s.lattice.cycle_basis();
        for eps in [0.0, 0.01, 0.3, 0.77] {
            let k = interpolation_family(g, &s.kernel, &s.m, eps).unwrap();
            let m = stationary_measure(g, &k).unwrap();
            let dir = homological_direction(&s.lattice, &k, &m, &basis);
            assert!(close(dir.asymptotic[0], eps / 6.0, 1e-12));
            assert!(close(dir.asymptotic[1], -eps / 6.0, 1e-12));
        }
    }
}
