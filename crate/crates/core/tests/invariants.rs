mod common;

use common::{any_random_lattice, check_invariants, max_abs_diff, minimizers_exist, random_lattice};
use crystal_walk::girsanov::{Frame, FreeEnergyContext};
use crystal_walk::harmonic::{albanese, modified_harmonic_realization};
use crystal_walk::stationary::{homological_direction, is_symmetric, stationary_by_power_iteration};
use crystal_walk::transition::n_step;
use crystal_walk::{change_kernel, interpolation_family, stationary_measure, Error, LatticeState, VertexId};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pipeline_invariants(
        (l, k) in random_lattice(),
        probe in proptest::collection::vec(-1.0f64..1.0, 2),
    ) {
        let probe = &probe[..l.rank()];
        if let Err(msg) = check_invariants(&l, &k, probe) {
            prop_assert!(false, "{}", msg);
        }
    }

    #[test]
    fn stationary_measure_is_fixed_and_normalized((l, k) in random_lattice()) {
        let g = l.graph();
        let m = stationary_measure(g, &k).unwrap();
        prop_assert!(m.residual(g, &k) <= 1e-12);
        prop_assert!((m.weight.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(m.weight.iter().all(|w| *w > 0.0));
        let pi = stationary_by_power_iteration(g, &k, 1e-14, 1_000_000);
        prop_assert!(max_abs_diff(&pi.weight, &m.weight) <= 1e-10);
    }

    #[test]
    fn net_flow_vanishes_and_direction_matches_cycles((l, k) in random_lattice()) {
        let g = l.graph();
        let m = stationary_measure(g, &k).unwrap();
        let basis = l.cycle_basis();
        let dir = homological_direction(&l, &k, &m, &basis);
        prop_assert!(dir.max_net_flow(g) <= 1e-12);
        // rho from homology coordinates and cycle voltages
        let mut rho = vec![0.0; l.rank()];
        for (c, cycle) in dir.homology_coords.iter().zip(&basis.cycles) {
            for (r, v) in rho.iter_mut().zip(l.cycle_voltage(cycle)) {
                *r += c * v as f64;
            }
        }
        prop_assert!(max_abs_diff(&rho, &dir.asymptotic) <= 1e-12);
    }

    #[test]
    fn interpolation_scales_drift(
        (l, k) in random_lattice(),
        eps in 0.0f64..=1.0,
    ) {
        let g = l.graph();
        let m = stationary_measure(g, &k).unwrap();
        let pe = interpolation_family(g, &k, &m, eps).unwrap();
        let me = stationary_measure(g, &pe).unwrap();
        prop_assert!(max_abs_diff(&me.weight, &m.weight) <= 1e-12);
        let rho = homological_direction(&l, &k, &m, &l.cycle_basis()).asymptotic;
        let rho_e = homological_direction(&l, &pe, &me, &l.cycle_basis()).asymptotic;
        let scaled: Vec<f64> = rho.iter().map(|r| eps * r).collect();
        prop_assert!(max_abs_diff(&rho_e, &scaled) <= 1e-12);
        let p0 = interpolation_family(g, &k, &m, 0.0).unwrap();
        prop_assert!(is_symmetric(g, &p0, &m));
    }

    #[test]
    fn newton_trace_is_monotone((l, k) in random_lattice()) {
        let g = l.graph();
        let m = stationary_measure(g, &k).unwrap();
        let r = modified_harmonic_realization(&l, &k, &m, VertexId(0)).unwrap();
        let a = albanese(&l, &k, &m, &r).unwrap();
        for frame in [Frame::SigmaDual, Frame::Orthonormal] {
            let ctx = FreeEnergyContext::new(&l, &k, &r, frame, Some(&a)).unwrap();
            for vm in ctx.minimize_all().unwrap().vertices {
                for w in vm.trace.windows(2) {
                    prop_assert!(w[1] <= w[0] * (1.0 + 4.0 * f64::EPSILON));
                }
                prop_assert!(vm.gradient_norm <= 1e-12);
                prop_assert!(vm.f_min <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn realization_increments_are_translation_consistent((l, k) in random_lattice()) {
        // dPhi(e) = Phi(t(e)) + voltage(e) - Phi(o(e)) and dPhi(~e) = -dPhi(e)
        let g = l.graph();
        let m = stationary_measure(g, &k).unwrap();
        let r = modified_harmonic_realization(&l, &k, &m, VertexId(0)).unwrap();
        prop_assert!(r.position[0].iter().all(|v| *v == 0.0));
        for d in g.darts() {
            let want: Vec<f64> = r.position[d.terminus.index()]
                .iter()
                .zip(l.voltage(d.id))
                .zip(&r.position[d.origin.index()])
                .map(|((t, v), o)| t + *v as f64 - o)
                .collect();
            prop_assert!(max_abs_diff(r.increment(d.id), &want) <= 1e-12);
            let back: Vec<f64> = r.increment(d.inverse).iter().map(|v| -v).collect();
            prop_assert!(max_abs_diff(r.increment(d.id), &back) <= 1e-12);
        }
    }

    #[test]
    fn changed_chain_conserves_mass(
        (l, k) in random_lattice(),
        n in 1usize..8,
    ) {
        let g = l.graph();
        let m = stationary_measure(g, &k).unwrap();
        let r = modified_harmonic_realization(&l, &k, &m, VertexId(0)).unwrap();
        let ch = change_kernel(&l, &k, &m, &r).unwrap();
        let d = n_step(&l, &ch.kernel, &LatticeState::origin(VertexId(0), l.rank()), n).unwrap();
        prop_assert!((d.total_mass() - 1.0).abs() <= 1e-12);
        // the changed walk has zero mean displacement from every start
        let mut mean = vec![0.0; l.rank()];
        for (s, w) in &d.mass {
            for (a, p) in mean.iter_mut().zip(r.locate(s)) {
                *a += w * p;
            }
        }
        prop_assert!(mean.iter().all(|v| v.abs() <= 1e-10), "{:?}", mean);
    }

    #[test]
    fn missing_minimizer_is_reported((l, k) in any_random_lattice()) {
        let g = l.graph();
        let m = stationary_measure(g, &k).unwrap();
        let r = modified_harmonic_realization(&l, &k, &m, VertexId(0)).unwrap();
        let result = change_kernel(&l, &k, &m, &r);
        if minimizers_exist(&l, &k) {
            prop_assert!(result.is_ok(), "{:?}", result.err());
        } else {
            prop_assert!(matches!(result, Err(Error::Unbounded { .. })), "{:?}", result.map(|c| c.m_p));
        }
    }
}
