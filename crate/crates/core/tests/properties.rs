mod common;

use nalgebra::DVector;
use proptest::prelude::*;

use qgrad_core::config::parse_list;
use qgrad_core::deformation::{
    alpha_quadratic_bound, energy_value_and_gradient, field, lambda_one, lambda_star, lambda_zero,
};
use qgrad_core::dynamics::integrate;
use qgrad_core::io::fmt_f64;
use qgrad_core::potential::catalog;
use qgrad_core::{DeformedEnergy, Desingularizer, DynamicsConfig, PhaseState};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_round_trips(c in 0.1f64..10.0, theta in 0.05f64..1.0, s in 1e-10f64..1e3) {
        let d = Desingularizer::power(c, theta).unwrap();
        let back = d.psi(d.phi(s).unwrap()).unwrap();
        prop_assert!((back - s).abs() <= 1e-10 * s);
        prop_assert!(d.phi_prime(s).unwrap() > 0.0);
        let m = d.mu(s).unwrap();
        let again = d.mu_inverse(m).unwrap();
        prop_assert!((again - s).abs() <= 1e-8 * s, "{again} vs {s}");
    }

    #[test]
    fn worst_case_matches_separable_solution(
        c in 0.2f64..5.0,
        theta in 0.1f64..0.5,
        gamma0 in 0.01f64..2.0,
        t in 0.0f64..50.0,
    ) {
        let d = Desingularizer::power(c, theta).unwrap();
        let got = d.worst_case_at(gamma0, t).unwrap();
        let want = common::worst_case_power(c, theta, gamma0, t);
        prop_assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
        prop_assert!(got <= gamma0 * (1.0 + 1e-15));
        let back = d.worst_case_time_to(gamma0, got).unwrap();
        prop_assert!((back - t).abs() <= 1e-6 * (1.0 + t), "{back} vs {t}");
    }

    #[test]
    fn half_power_worst_case(c in 0.2f64..5.0, gamma0 in 0.01f64..2.0, t in 0.0f64..20.0) {
        let d = Desingularizer::power(c, 0.5).unwrap();
        let want = gamma0 * (-2.0 * t / (c * c)).exp();
        let got = d.worst_case_at(gamma0, t).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * gamma0);
    }

    #[test]
    fn admissible_lambda(gamma in 0.05f64..10.0, m in 0.0f64..100.0) {
        let ls = lambda_star(gamma, m);
        prop_assert!(ls > 0.0 && ls < lambda_zero(gamma, m) && ls <= lambda_one(m));
        prop_assert!(alpha_quadratic_bound(gamma, m, ls).unwrap() > 0.0);
    }

    #[test]
    fn lambda_zero_decreases_in_m(gamma in 0.05f64..10.0, m in 0.0f64..100.0, dm in 0.01f64..10.0) {
        prop_assert!(lambda_zero(gamma, m + dm) < lambda_zero(gamma, m));
    }

    #[test]
    fn deformed_gradient_matches_differences(
        a1 in 0.5f64..3.0,
        a2 in -2.0f64..3.0,
        lambda in 0.0f64..0.3,
        x in prop::array::uniform4(-1.0f64..1.0),
    ) {
        let spec = catalog::quadratic_diag(&[a1, a2]).unwrap();
        let de = DeformedEnergy::new(spec, 1.0, lambda).unwrap();
        let s = PhaseState {
            u: DVector::from_column_slice(&x[..2]),
            v: DVector::from_column_slice(&x[2..]),
        };
        let (_, g) = energy_value_and_gradient(&de, &s).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut plus = x;
            let mut minus = x;
            plus[i] += h;
            minus[i] -= h;
            let st = |y: [f64; 4]| PhaseState {
                u: DVector::from_column_slice(&y[..2]),
                v: DVector::from_column_slice(&y[2..]),
            };
            let fd = (energy_value_and_gradient(&de, &st(plus)).unwrap().0
                - energy_value_and_gradient(&de, &st(minus)).unwrap().0)
                / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "component {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn field_and_energy_gradient_share_rest_points(u in prop::array::uniform2(-1.0f64..1.0), lambda in 0.01f64..0.2) {
        let spec = catalog::quadratic_diag(&[1.0, 2.0]).unwrap();
        let de = DeformedEnergy::new(spec.clone(), 1.0, lambda).unwrap();
        let moving = PhaseState::at_rest(DVector::from_column_slice(&u));
        let f = field(&spec, 1.0, &moving);
        let (_, g) = energy_value_and_gradient(&de, &moving).unwrap();
        prop_assert_eq!(f.norm() == 0.0, g.norm() == 0.0);
        let at_rest = PhaseState::at_rest(DVector::zeros(2));
        prop_assert_eq!(field(&spec, 1.0, &at_rest).norm(), 0.0);
        prop_assert_eq!(energy_value_and_gradient(&de, &at_rest).unwrap().1.norm(), 0.0);
    }

    #[test]
    fn list_round_trip(xs in prop::collection::vec(-1e300f64..1e300, 1..8)) {
        let text = xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ");
        prop_assert_eq!(parse_list(&text).unwrap(), xs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linear_oscillator_matches_closed_form(
        gamma in 0.3f64..4.0,
        a in 0.2f64..4.0,
        u0 in -1.0f64..1.0,
        v0 in -1.0f64..1.0,
    ) {
        let spec = catalog::quadratic_diag(&[a]).unwrap();
        let cfg = DynamicsConfig {
            gamma,
            abs_tol: 1e-12,
            rel_tol: 1e-11,
            t_max: 15.0,
            stop_at_convergence: false,
            sample_times: (1..=15).map(f64::from).collect(),
            ..DynamicsConfig::default()
        };
        let init = PhaseState {
            u: DVector::from_element(1, u0),
            v: DVector::from_element(1, v0),
        };
        let traj = integrate(&spec, &cfg, &init).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let (u, v) = common::linear_1d(gamma, a, u0, v0, *t);
            prop_assert!((s.u[0] - u).abs() <= 1e-8 && (s.v[0] - v).abs() <= 1e-8, "t = {t}");
        }
    }

    #[test]
    fn total_energy_never_rises(
        gamma in 0.3f64..4.0,
        u in prop::array::uniform2(-1.0f64..1.0),
        v in prop::array::uniform2(-1.0f64..1.0),
    ) {
        let spec = catalog::power(2, 2.0, 1.0).unwrap();
        let cfg = DynamicsConfig { gamma, t_max: 50.0, ..DynamicsConfig::default() };
        let init = PhaseState { u: DVector::from_column_slice(&u), v: DVector::from_column_slice(&v) };
        let traj = integrate(&spec, &cfg, &init).unwrap();
        for w in traj.energies.windows(2) {
            prop_assert!(w[1] <= w[0] + 10.0 * (cfg.abs_tol + cfg.rel_tol * w[0].abs()));
        }
    }
}
