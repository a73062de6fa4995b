#![allow(dead_code)]

use crystal_walk::girsanov::{change_kernel, change_kernel_with, Frame, FreeEnergyContext};
use crystal_walk::harmonic::{albanese, modified_harmonic_realization};
use crystal_walk::stationary::homological_direction;
use crystal_walk::{
    builtin, interpolation_family, stationary_measure, Builtin, CrystalLattice, TransitionKernel, VertexId,
};
use proptest::prelude::*;

pub const BUILTINS: [Builtin; 4] = [Builtin::Hexagonal, Builtin::Dice, Builtin::Square, Builtin::Bouquet1(0.3)];

/// Positive kernel on `lattice` from raw weights, normalized per vertex.
pub fn kernel_from_weights(lattice: &CrystalLattice, weights: &[f64]) -> TransitionKernel {
    let g = lattice.graph();
    let mut prob = weights.to_vec();
    for x in g.vertices() {
        let s: f64 = g.outgoing(x).iter().map(|e| prob[e.index()]).sum();
        for e in g.outgoing(x) {
            prob[e.index()] /= s;
        }
    }
    TransitionKernel::new(g, prob).expect("normalized kernel")
}

/// Whether the origin is interior to the convex hull of `points` (rank 1 or 2):
/// in the plane, no angular gap between consecutive nonzero points reaches pi.
pub fn origin_is_interior(points: &[Vec<f64>]) -> bool {
    match points[0].len() {
        1 => points.iter().any(|w| w[0] > 0.0) && points.iter().any(|w| w[0] < 0.0),
        2 => {
            let mut angles: Vec<f64> = points
                .iter()
                .filter(|w| w[0] != 0.0 || w[1] != 0.0)
                .map(|w| w[1].atan2(w[0]))
                .collect();
            if angles.len() < 3 {
                return false;
            }
            angles.sort_by(f64::total_cmp);
            let wrap = angles[0] + 2.0 * std::f64::consts::PI - angles[angles.len() - 1];
            angles.windows(2).map(|w| w[1] - w[0]).chain([wrap]).all(|gap| gap < std::f64::consts::PI - 1e-9)
        }
        d => panic!("rank {d} not supported"),
    }
}

/// Whether every free energy of `(l, k)` has a minimizer.
pub fn minimizers_exist(l: &CrystalLattice, k: &TransitionKernel) -> bool {
    let g = l.graph();
    let m = stationary_measure(g, k).unwrap();
    let r = modified_harmonic_realization(l, k, &m, VertexId(0)).unwrap();
    g.vertices().all(|x| {
        let pts: Vec<Vec<f64>> = g.outgoing(x).iter().map(|&e| r.increment(e).to_vec()).collect();
        origin_is_interior(&pts)
    })
}

/// A builtin lattice with a random positive kernel whose free energies all
/// have minimizers.
pub fn random_lattice() -> impl Strategy<Value = (CrystalLattice, TransitionKernel)> {
    any_random_lattice().prop_filter("free energy unbounded", |(l, k)| minimizers_exist(l, k))
}

/// A builtin lattice with a random positive kernel, weights uniform in [0.05, 1].
pub fn any_random_lattice() -> impl Strategy<Value = (CrystalLattice, TransitionKernel)> {
    (0..BUILTINS.len()).prop_flat_map(|i| {
        let (l, _) = builtin(BUILTINS[i]).unwrap();
        let darts = l.graph().dart_count();
        proptest::collection::vec(0.05f64..1.0, darts).prop_map(move |w| {
            let (l, _) = builtin(BUILTINS[i]).unwrap();
            let k = kernel_from_weights(&l, &w);
            (l, k)
        })
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v.abs()).fold(1.0, f64::max);
    max_abs_diff(a, b) / scale
}

/// Every invariant of the deterministic pipeline on one input. Returns a
/// description of the first violation.
pub fn check_invariants(l: &CrystalLattice, k: &TransitionKernel, lambda_probe: &[f64]) -> Result<(), String> {
    let g = l.graph();
    let m = stationary_measure(g, k).map_err(|e| e.to_string())?;
    let r = modified_harmonic_realization(l, k, &m, VertexId(0)).map_err(|e| e.to_string())?;
    let dir = homological_direction(l, k, &m, &l.cycle_basis());
    let harm = r.harmonicity_residual(g, k, &dir.asymptotic);
    if harm > 1e-10 {
        return Err(format!("realization residual {harm}"));
    }
    let metric = albanese(l, k, &m, &r).map_err(|e| e.to_string())?;
    let eig = metric.gram.clone().symmetric_eigenvalues();
    if eig.iter().any(|v| *v <= 0.0) || (&metric.gram - metric.gram.transpose()).abs().max() > 1e-15 {
        return Err(format!("gram not SPD: {eig}"));
    }

    let ch = change_kernel(l, k, &m, &r).map_err(|e| e.to_string())?;
    let dev = ch.kernel.max_row_deviation(g);
    if dev > 1e-12 {
        return Err(format!("changed row deviation {dev}"));
    }
    let zero = vec![0.0; l.rank()];
    let mean = r.harmonicity_residual(g, &ch.kernel, &zero);
    if mean > 1e-10 {
        return Err(format!("changed mean increment {mean}"));
    }
    let ch_dir = homological_direction(l, &ch.kernel, &ch.stationary, &l.cycle_basis());
    if ch_dir.asymptotic.iter().any(|v| v.abs() > 1e-10) {
        return Err(format!("changed drift {:?}", ch_dir.asymptotic));
    }

    let ortho = FreeEnergyContext::new(l, k, &r, Frame::Orthonormal, Some(&metric)).map_err(|e| e.to_string())?;
    let ch2 = change_kernel_with(l, k, &m, &r, &ortho).map_err(|e| e.to_string())?;
    let frame_gap = max_abs_diff(ch.kernel.probs(), ch2.kernel.probs());
    if frame_gap > 1e-10 {
        return Err(format!("frame dependence {frame_gap}"));
    }

    // derivatives against central differences
    let sigma = FreeEnergyContext::new(l, k, &r, Frame::SigmaDual, None).map_err(|e| e.to_string())?;
    let h = 1e-5;
    for ctx in [&sigma, &ortho] {
        for x in g.vertices() {
            let grad = ctx.gradient(x, lambda_probe).map_err(|e| e.to_string())?;
            let hess = ctx.hessian(x, lambda_probe).map_err(|e| e.to_string())?;
            let mut fd_grad = vec![0.0; l.rank()];
            for i in 0..l.rank() {
                let mut a = lambda_probe.to_vec();
                let mut b = lambda_probe.to_vec();
                a[i] += h;
                b[i] -= h;
                let fa = ctx.free_energy(x, &a).map_err(|e| e.to_string())?;
                let fb = ctx.free_energy(x, &b).map_err(|e| e.to_string())?;
                fd_grad[i] = (fa - fb) / (2.0 * h);
                let ga = ctx.gradient(x, &a).map_err(|e| e.to_string())?;
                let gb = ctx.gradient(x, &b).map_err(|e| e.to_string())?;
                let fd_col: Vec<f64> = ga.iter().zip(&gb).map(|(p, q)| (p - q) / (2.0 * h)).collect();
                let col: Vec<f64> = hess.column(i).iter().copied().collect();
                if rel_err(&fd_col, &col) > 1e-6 {
                    return Err(format!("hessian column {i}: {col:?} vs {fd_col:?}"));
                }
            }
            if rel_err(&fd_grad, &grad) > 1e-6 {
                return Err(format!("gradient {grad:?} vs {fd_grad:?}"));
            }
        }
    }

    // the reversible part is left unchanged
    let p0 = interpolation_family(g, k, &m, 0.0).map_err(|e| e.to_string())?;
    let m0 = stationary_measure(g, &p0).map_err(|e| e.to_string())?;
    let r0 = modified_harmonic_realization(l, &p0, &m0, VertexId(0)).map_err(|e| e.to_string())?;
    let ch0 = change_kernel(l, &p0, &m0, &r0).map_err(|e| e.to_string())?;
    let sym_gap = max_abs_diff(ch0.kernel.probs(), p0.probs());
    if sym_gap > 1e-12 {
        return Err(format!("symmetric input changed by {sym_gap}"));
    }
    Ok(())
}
