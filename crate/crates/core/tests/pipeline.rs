mod common;

use approx::assert_relative_eq;
use nalgebra::DVector;

use qgrad_core::deformation::{asfast_bound, certify_quasigradient, lambda_star};
use qgrad_core::dynamics::{integrate, integrate_gradient_flow, velocity_l1};
use qgrad_core::levelset::{implied_desingularizer_bound, psi_profile, LevelOptions};
use qgrad_core::potential::catalog;
use qgrad_core::rates::{
    check_distance_envelope, check_worstcase_envelope, default_t_start, end_to_end, energy_desingularizer, fit_decay,
    DecayLaw, RatesOptions,
};
use qgrad_core::{Classification, DeformedEnergy, Desingularizer, DynamicsConfig, PhaseState};

fn rest(u: &[f64]) -> PhaseState {
    PhaseState::at_rest(DVector::from_column_slice(u))
}

fn opts() -> LevelOptions {
    LevelOptions {
        seed: 1,
        ..LevelOptions::default()
    }
}

#[test]
fn velocity_l1_matches_closed_form_quadrature() {
    let spec = catalog::quadratic_diag(&[2.0]).unwrap();
    let cfg = DynamicsConfig {
        gamma: 3.0,
        abs_tol: 1e-12,
        rel_tol: 1e-10,
        ..DynamicsConfig::default()
    };
    let traj = integrate(&spec, &cfg, &rest(&[1.0])).unwrap();
    assert!(matches!(traj.classification, Classification::Converged { .. }));
    let horizon = traj.final_time();
    let oracle = common::simpson(|t| common::linear_1d(3.0, 2.0, 1.0, 0.0, t).1.abs(), 0.0, horizon, 200_000);
    let (total, tail) = velocity_l1(&traj, 0.5 * horizon).unwrap();
    assert!((total - oracle).abs() <= 1e-4, "{total} vs {oracle}");
    assert!(tail >= 0.0 && tail < total);
}

#[test]
fn velocity_l1_at_rest_is_zero() {
    let spec = catalog::quadratic_diag(&[1.0, 1.0]).unwrap();
    let traj = integrate(&spec, &DynamicsConfig::default(), &rest(&[0.0, 0.0])).unwrap();
    assert_eq!(velocity_l1(&traj, 0.0).unwrap(), (0.0, 0.0));
}

#[test]
fn trajectory_matches_underdamped_closed_form() {
    let spec = catalog::quadratic_diag(&[1.0, 1.0]).unwrap();
    let cfg = DynamicsConfig {
        abs_tol: 1e-12,
        rel_tol: 1e-11,
        ..DynamicsConfig::default()
    };
    let traj = integrate(&spec, &cfg, &rest(&[1.0, 1.0])).unwrap();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let (u, v) = common::linear_1d(1.0, 1.0, 1.0, 0.0, *t);
        assert!((s.u[0] - u).abs() <= 1e-8 && (s.v[1] - v).abs() <= 1e-8, "t = {t}");
    }
    let Classification::Converged { limit } = &traj.classification else {
        panic!("{:?}", traj.classification)
    };
    assert!(limit.iter().all(|x| x.abs() < 1e-7));
}

#[test]
fn distance_envelope_quadratic_and_sabotage() {
    let spec = catalog::quadratic_diag(&[1.0]).unwrap();
    let gamma = 3.0;
    let traj = integrate(&spec, &DynamicsConfig::with_gamma(gamma), &rest(&[1.0])).unwrap();
    let limit = DVector::zeros(1);
    let lam = lambda_star(gamma, 1.0);
    let energy = DeformedEnergy::new(spec.clone(), gamma, lam).unwrap();
    let cert = certify_quasigradient(&energy, 1.0, 4000, 0).unwrap();
    assert!(cert.valid());
    let phi = spec.known_desingularizer.clone().unwrap();
    let t_s = default_t_start(&traj, &limit);
    let phi_e = energy_desingularizer(&traj, &limit, &phi, &energy, t_s).unwrap();
    let ok = check_distance_envelope(&traj, &limit, &phi_e, cert.alpha_sampled, &energy, None).unwrap();
    assert!(ok.pass && ok.max_violation < 0.0, "{ok:?}");
    assert!(ok.checked > 10);
    let bad = check_distance_envelope(&traj, &limit, &phi_e, 100.0 * cert.alpha_sampled, &energy, None).unwrap();
    assert!(!bad.pass);
}

#[test]
fn distance_envelope_rest_trajectory_is_trivial() {
    let spec = catalog::quadratic_diag(&[1.0]).unwrap();
    let traj = integrate(&spec, &DynamicsConfig::default(), &rest(&[0.0])).unwrap();
    let energy = DeformedEnergy::new(spec, 1.0, 0.1).unwrap();
    let phi = Desingularizer::power(1.0, 0.5).unwrap();
    let v = check_distance_envelope(&traj, &DVector::zeros(1), &phi, 0.1, &energy, Some(0.0)).unwrap();
    assert!(v.pass);
}

#[test]
fn radial_gradient_flow_is_its_own_worst_case() {
    let phi = Desingularizer::power(1.0, 1.0 / 3.0).unwrap();
    let spec = catalog::radial(DVector::zeros(2), phi.clone()).unwrap();
    let cfg = DynamicsConfig {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        ..DynamicsConfig::default()
    };
    let traj = integrate_gradient_flow(&spec, &cfg, &DVector::from_column_slice(&[0.6, 0.0])).unwrap();
    assert!(matches!(traj.classification, Classification::Converged { .. }));
    let fit = check_worstcase_envelope(&traj, &DVector::zeros(2), &phi, None).unwrap();
    assert!(fit.pass);
    assert_eq!(fit.c_time, 1.0);
    assert_relative_eq!(fit.d, 1.0, max_relative = 1e-4);
    assert!(fit.t0.abs() <= 1e-4 * fit.t_start.max(1.0), "t0 = {}", fit.t0);
}

#[test]
fn envelope_passes_for_any_larger_d() {
    let spec = catalog::quadratic_diag(&[1.0, 1.0]).unwrap();
    let traj = integrate(&spec, &DynamicsConfig::default(), &rest(&[1.0, -0.5])).unwrap();
    let limit = DVector::zeros(2);
    let phi = spec.known_desingularizer.clone().unwrap();
    let fit = check_worstcase_envelope(&traj, &limit, &phi, None).unwrap();
    assert!(fit.pass);
    for scale in [1.0, 1.5, 10.0] {
        let bigger = qgrad_core::rates::WorstCaseFit {
            d: fit.d * scale,
            ..fit
        };
        for (t, s) in traj.times.iter().zip(&traj.states) {
            if *t >= fit.t_start {
                let env = bigger.envelope(&phi, *t).unwrap();
                assert!((&s.u - &limit).norm() <= env * (1.0 + 1e-9), "t = {t}");
            }
        }
    }
}

#[test]
fn overdamped_fit_finds_slowest_mode() {
    let spec = catalog::quadratic_diag(&[1.0]).unwrap();
    let traj = integrate(&spec, &DynamicsConfig::with_gamma(3.0), &rest(&[1.0])).unwrap();
    // Characteristic roots of r² + 3r + 1 are (−3 ± √5)/2; the slow one is −0.382.
    let slow = (3.0 - 5f64.sqrt()) / 2.0;
    let fit = fit_decay(&traj, &DVector::zeros(1), (2.0, 30.0)).unwrap();
    let DecayLaw::Exponential { rate } = fit.law else {
        panic!("{:?}", fit.law)
    };
    assert_relative_eq!(rate, slow, max_relative = 0.05);
}

#[test]
fn overdamped_fit_with_a_equals_two() {
    // u'' + 3u' + 2u = 0 has roots −1 and −2.
    let spec = catalog::quadratic_diag(&[2.0]).unwrap();
    let traj = integrate(&spec, &DynamicsConfig::with_gamma(3.0), &rest(&[1.0])).unwrap();
    let fit = fit_decay(&traj, &DVector::zeros(1), (2.0, 20.0)).unwrap();
    let DecayLaw::Exponential { rate } = fit.law else {
        panic!("{:?}", fit.law)
    };
    assert_relative_eq!(rate, 1.0, max_relative = 0.05);
}

#[test]
fn end_to_end_quadratic() {
    let spec = catalog::quadratic_diag(&[1.0, 1.0]).unwrap();
    let rep = end_to_end(&spec, &DynamicsConfig::with_gamma(1.0), &rest(&[1.0, 1.0]), None, &RatesOptions::default())
        .unwrap();
    assert_eq!(rep.classification.label(), "Converged");
    assert!(rep.envelope_automaj.unwrap().pass);
    assert!(rep.envelope_majgrad1.unwrap().pass);
    assert!(rep.envelope_majval.unwrap().pass);
    assert!(matches!(rep.empirical_law.unwrap().law, DecayLaw::Exponential { .. }));
    let l1 = rep.velocity_l1.unwrap();
    assert!(l1.cauchy && l1.tail_monotone);
}

#[test]
fn end_to_end_escape_has_no_envelopes() {
    let spec = catalog::neg_quadratic(2).unwrap();
    let rep = end_to_end(&spec, &DynamicsConfig::default(), &rest(&[1.0, 0.0]), None, &RatesOptions::default()).unwrap();
    assert_eq!(rep.classification.label(), "Escaped");
    assert!(rep.envelope_automaj.is_none() && rep.envelope_majgrad1.is_none() && rep.empirical_law.is_none());
    assert!(rep.certificate.is_none());
}

#[test]
fn end_to_end_quartic_with_estimated_exponent() {
    let spec = catalog::power(2, 2.0, 1.0).unwrap();
    let cfg = DynamicsConfig {
        t_max: 1e4,
        conv_tol_v: 1e-5,
        conv_tol_g: 1e-5,
        conv_window: 100.0,
        stop_at_convergence: false,
        ..DynamicsConfig::default()
    };
    let opts = RatesOptions {
        fit_window: Some((1e2, 1e4)),
        ..RatesOptions::default()
    };
    let rep = end_to_end(&spec, &cfg, &rest(&[0.08, 0.06]), None, &opts).unwrap();
    assert_eq!(rep.desingularizer_source.as_deref(), Some("estimated"));
    let theta = rep.theta_hat.unwrap();
    assert!((theta - 0.25).abs() <= 0.02, "theta_hat {theta}");
    assert!(rep.envelope_automaj.unwrap().pass);
    assert!(rep.envelope_majgrad1.unwrap().pass);
    let DecayLaw::Power { exponent } = rep.empirical_law.unwrap().law else {
        panic!("{:?}", rep.empirical_law)
    };
    assert!((exponent - 0.5).abs() <= 0.075);
}

#[test]
fn certificate_ratio_bound_identity_quadratic() {
    let spec = catalog::quadratic_diag(&[1.0, 1.0]).unwrap();
    let de = DeformedEnergy::new(spec, 1.0, 1.0 / 6.0).unwrap();
    let b = asfast_bound(&de, 1.0, 10_000, 0).unwrap();
    assert!(b.b_sampled.is_finite() && b.b_sampled <= b.b_algebraic);
}

#[test]
fn quartic_profile_ratio_vanishes() {
    let spec = catalog::power(2, 2.0, 1.0).unwrap();
    let p = psi_profile(&spec, &DVector::zeros(2), 1e-2, 1e-8, 2, &opts()).unwrap();
    for (&r, &psi) in p.r_grid.iter().zip(&p.psi_values) {
        assert_relative_eq!(psi, 8.0 * r.powf(1.5), max_relative = 1e-6);
    }
    assert!(p.bounded);
    assert!(p.ratios().last().unwrap() < &1e-3);
}

#[test]
fn diag_profile_matches_smallest_eigenvalue() {
    let spec = catalog::quadratic_diag(&[1.0, 3.0]).unwrap();
    let p = psi_profile(&spec, &DVector::zeros(2), 1e-2, 1e-8, 2, &opts()).unwrap();
    for (&r, &psi) in p.r_grid.iter().zip(&p.psi_values) {
        let oracle = common::diag_quadratic_psi_grid([1.0, 3.0], r, 20_000);
        assert_relative_eq!(psi, oracle, max_relative = 1e-6);
    }
    assert_eq!(p.verdict(), "bounded");
}

#[test]
fn nonsmooth_profile_grows_like_cube_root() {
    let spec = catalog::nonsmooth_32();
    let p = psi_profile(&spec, &DVector::zeros(1), 1e-4, 1e-8, 2, &opts()).unwrap();
    let ratios = p.ratios();
    let growth = ratios.last().unwrap() / ratios[0];
    assert_relative_eq!(growth, 10f64.powf(4.0 / 3.0), max_relative = 1e-6);
    for (&r, &psi) in p.r_grid.iter().zip(&p.psi_values) {
        assert_relative_eq!(psi, 1.125 * r.powf(2.0 / 3.0), max_relative = 1e-6);
    }
    assert!(!p.bounded);
    // The implied bound on φ' decays like r^{−1/3}, weaker than r^{−1/2}.
    let bound = implied_desingularizer_bound(&p).unwrap();
    let (r0, b0) = bound[0];
    let (r1, b1) = *bound.last().unwrap();
    let slope = (b1 / b0).ln() / (r1 / r0).ln();
    assert_relative_eq!(slope, -1.0 / 3.0, max_relative = 1e-6);
}

#[test]
fn identity_implied_bound_is_inverse_root() {
    let spec = catalog::quadratic_diag(&[1.0, 1.0]).unwrap();
    let p = psi_profile(&spec, &DVector::zeros(2), 1e-2, 1e-8, 2, &opts()).unwrap();
    for (r, b) in implied_desingularizer_bound(&p).unwrap() {
        assert_relative_eq!(b, 1.0 / (2.0 * r).sqrt(), max_relative = 1e-6);
    }
}
