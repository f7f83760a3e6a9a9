use std::sync::Arc;

use proptest::prelude::*;
use starkscatter_core::gauge::{apply_gauge_t, free_propagate};
use starkscatter_core::propagator::propagate;
use starkscatter_core::*;

fn line() -> Arc<Grid> {
    Arc::new(Grid::cubic(1, 30.0, 256).unwrap())
}

fn field_strategy() -> impl Strategy<Value = ElectricField> {
    (-1.0f64..1.0, -2.0f64..2.0, -2.0f64..2.0, -0.5f64..0.5).prop_map(|(mean, c1, s1, c3)| {
        ElectricField::harmonic(
            vec![mean],
            vec![
                Harmonic {
                    k: 1,
                    cos: vec![c1],
                    sin: vec![s1],
                },
                Harmonic {
                    k: 3,
                    cos: vec![c3],
                    sin: vec![0.0],
                },
            ],
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coefficients_are_periodic_with_zero_mean_b(field in field_strategy(), t in -2.0f64..2.0) {
        let g = GaugeCoefficients::compute(&field, 512).unwrap();
        prop_assert!((g.c(t + 1.0)[0] - g.c(t)[0]).abs() <= 1e-10);
        prop_assert!((g.b(t + 1.0)[0] - g.b(t)[0]).abs() <= 1e-10);
        prop_assert!(g.mean_b()[0].abs() <= 1e-10);
        // the residual is measured by finite differences, so the third harmonic needs a finer mesh
        let fine = GaugeCoefficients::compute(&field, 2048).unwrap();
        prop_assert!(fine.ode_residuals().max() <= 1e-8);
    }

    #[test]
    fn gaussian_packets_are_normalised(x in -5.0f64..5.0, sigma in 0.5f64..2.0, k in -3.0f64..3.0) {
        let psi = make_gaussian(&line(), &WavePacketSpec::isotropic(vec![x], sigma, vec![k])).unwrap();
        prop_assert!((psi.norm() - 1.0).abs() <= 1e-12);
        prop_assert!((psi.expectation_x()[0] - x).abs() <= 1e-9);
        prop_assert!((psi.expectation_p()[0] - k).abs() <= 1e-9);
    }

    #[test]
    fn free_flow_is_a_unitary_group(field in field_strategy(), s in -1.0f64..1.0, a in -0.7f64..0.7, b in -0.7f64..0.7) {
        let g = GaugeCoefficients::compute(&field, 512).unwrap();
        let psi = make_gaussian(&line(), &WavePacketSpec::at_rest(vec![0.0], 1.0)).unwrap();
        let mid = free_propagate(&psi, s + a, s, &field, &g).unwrap();
        let two = free_propagate(&mid, s + a + b, s + a, &field, &g).unwrap();
        let one = free_propagate(&psi, s + a + b, s, &field, &g).unwrap();
        prop_assert!((mid.norm() - 1.0).abs() <= 1e-12);
        prop_assert!(two.distance(&one).unwrap() <= 1e-10);
    }

    #[test]
    fn gauge_map_is_inverted_by_its_adjoint(field in field_strategy(), t in -1.0f64..1.0) {
        let g = GaugeCoefficients::compute(&field, 512).unwrap();
        let psi = make_gaussian(&line(), &WavePacketSpec::isotropic(vec![1.0], 1.0, vec![0.5])).unwrap();
        let there = apply_gauge_t(&psi, t, &g, false).unwrap();
        let back = apply_gauge_t(&there, t, &g, true).unwrap();
        prop_assert!(back.distance(&psi).unwrap() <= 1e-12);
    }

    #[test]
    fn strang_steps_run_backwards(field in field_strategy(), t0 in -1.0f64..1.0, amp in -2.0f64..2.0) {
        let v = PotentialModel::gaussian(amp, 0.5, vec![0.5], 1.0);
        let ham = Hamiltonian::full(&field, &v).unwrap();
        let psi = make_gaussian(&line(), &WavePacketSpec::isotropic(vec![-1.0], 1.0, vec![1.0])).unwrap();
        let fwd = propagate(&psi, &PropagationPlan::new(t0, t0 + 0.25, 5e-3).unwrap(), &ham).unwrap();
        let back = propagate(&fwd, &PropagationPlan::new(t0 + 0.25, t0, 5e-3).unwrap(), &ham).unwrap();
        prop_assert!((fwd.norm() - 1.0).abs() <= 1e-12);
        prop_assert!(back.distance(&psi).unwrap() <= 1e-11);
    }
}
