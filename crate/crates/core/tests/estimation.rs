use cmps_core::correlators::CorrelationTensor;
use cmps_core::estimation::{
    self, build_hankel, estimate_order, Estimator, EstimatorConfig, PoleEstimate, PronyVariant,
};
use cmps_core::linalg::c;
use cmps_core::simulation::pole_error;
use cmps_core::Error;
use num_complex::Complex64 as c64;
use proptest::prelude::*;

fn signal(poles: &[c64], residues: &[c64], n: usize, dt: f64) -> Vec<c64> {
    (0..n)
        .map(|l| {
            poles
                .iter()
                .zip(residues)
                .map(|(p, r)| r * (p * (l as f64 * dt)).exp())
                .sum()
        })
        .collect()
}

fn conjugate_closed_poles() -> (Vec<c64>, Vec<c64>) {
    let poles = vec![
        c(0.0, 0.0),
        c(-0.3, 0.0),
        c(-0.1, 1.2),
        c(-0.1, -1.2),
        c(-0.25, 2.1),
        c(-0.25, -2.1),
    ];
    let residues = vec![
        c(1.0, 0.0),
        c(0.4, 0.0),
        c(0.3, 0.2),
        c(0.3, -0.2),
        c(0.2, -0.1),
        c(0.2, 0.1),
    ];
    (poles, residues)
}

#[test]
fn every_estimator_recovers_noiseless_poles() {
    let (poles, residues) = conjugate_closed_poles();
    let dt = 0.5;
    let s = signal(&poles, &residues, 40, dt);
    for estimator in [Estimator::Prony, Estimator::PronyKernel, Estimator::Mpm, Estimator::Ssmpm] {
        let cfg = EstimatorConfig {
            estimator,
            order: Some(poles.len()),
            ..EstimatorConfig::default()
        };
        let est = estimation::estimate_poles(&s, dt, &cfg).unwrap();
        let (_, max) = pole_error(&poles, &est.lambdas, true).unwrap();
        assert!(max < 1e-8, "{estimator}: {max:e}");
    }
}

#[test]
fn order_is_read_from_the_hankel_spectrum() {
    let (poles, residues) = conjugate_closed_poles();
    let s = signal(&poles, &residues, 40, 0.5);
    let hp = build_hankel(&s, 16).unwrap();
    assert_eq!(estimate_order(&hp, 1e-8).unwrap(), poles.len());
    let est = estimation::estimate_poles(&s, 0.5, &EstimatorConfig::default()).unwrap();
    assert_eq!(est.order, poles.len());
}

#[test]
fn exactly_twice_the_order_samples_suffice_for_prony() {
    let (poles, residues) = conjugate_closed_poles();
    let s = signal(&poles, &residues, 2 * poles.len(), 0.5);
    let est = estimation::prony_poles(&s, poles.len(), 0.5, PronyVariant::Solve).unwrap();
    let (_, max) = pole_error(&poles, &est.lambdas, true).unwrap();
    assert!(max < 1e-8);
    assert!(estimation::prony_poles(&s[..2 * poles.len() - 1], poles.len(), 0.5, PronyVariant::Solve).is_err());
}

#[test]
fn residues_follow_from_known_poles() {
    let (poles, residues) = conjugate_closed_poles();
    let dt = 0.5;
    let s = signal(&poles, &residues, 30, dt);
    let ct = CorrelationTensor::new(2, 30, dt, false, s).unwrap();
    let rm = estimation::solve_residues(&PoleEstimate::from_lambdas(poles.clone(), dt), &ct).unwrap();
    for (a, b) in rm.residues.iter().zip(&residues) {
        assert!((a - b).norm() < 1e-10);
    }
    assert!(rm.rms_fit_error < 1e-12);
    let wrong = PoleEstimate::from_lambdas(poles, 0.6);
    assert!(matches!(
        estimation::solve_residues(&wrong, &ct),
        Err(Error::DeltaTauMismatch { .. })
    ));
}

#[test]
fn three_point_residues_from_the_kronecker_system() {
    let poles = vec![c(0.0, 0.0), c(-0.2, 0.9), c(-0.2, -0.9)];
    let dt = 0.4;
    let n = 12;
    let rho = |i: usize, j: usize| c(1.0 + i as f64, 0.5 * j as f64 - 0.3 * i as f64);
    let mut values = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let mut v = c(0.0, 0.0);
            for i in 0..3 {
                for j in 0..3 {
                    v += rho(i, j) * (poles[i] * (a as f64 * dt) + poles[j] * (b as f64 * dt)).exp();
                }
            }
            values.push(v);
        }
    }
    let ct = CorrelationTensor::new(3, n, dt, false, values).unwrap();
    let rm = estimation::solve_residues(&PoleEstimate::from_lambdas(poles, dt), &ct).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((rm.get(&[i, j]) - rho(i, j)).norm() < 1e-9);
        }
    }
    let avg = estimation::project_average(&ct).unwrap();
    assert_eq!(avg.len(), n);
}

#[test]
fn refinement_recovers_perturbed_poles() {
    let (poles, residues) = conjugate_closed_poles();
    let dt = 0.5;
    let s = signal(&poles, &residues, 40, dt);
    let start: Vec<c64> = poles.iter().map(|p| p + c(1e-4, -2e-4)).collect();
    let refined = estimation::refine_poles(&PoleEstimate::from_lambdas(start, dt), &s, 30).unwrap();
    let (_, max) = pole_error(&poles, &refined.lambdas, true).unwrap();
    assert!(max < 1e-9, "{max:e}");
}

#[test]
fn estimator_names_round_trip() {
    for e in [Estimator::Prony, Estimator::PronyKernel, Estimator::Mpm, Estimator::Ssmpm] {
        assert_eq!(e.to_string().parse::<Estimator>().unwrap(), e);
    }
    assert!("esprit".parse::<Estimator>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polynomial_roots_reproduce_their_factors(
        roots in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..7)
    ) {
        let roots: Vec<c64> = roots.into_iter().map(|(a, b)| c(a, b)).collect();
        // coefficients in ascending powers, monic
        let mut coeffs = vec![c(1.0, 0.0)];
        for r in &roots {
            let mut next = vec![c(0.0, 0.0); coeffs.len() + 1];
            for (i, a) in coeffs.iter().enumerate() {
                next[i + 1] += a;
                next[i] -= a * r;
            }
            coeffs = next;
        }
        let found = estimation::polynomial_roots(&coeffs).unwrap();
        prop_assert_eq!(found.len(), roots.len());
        for z in &found {
            let value: c64 = coeffs.iter().rev().fold(c(0.0, 0.0), |acc, a| acc * z + a);
            let scale: f64 = coeffs.iter().enumerate().map(|(i, a)| a.norm() * z.norm().powi(i as i32)).sum();
            prop_assert!(value.norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn symmetrized_poles_are_conjugation_closed(
        pts in proptest::collection::vec((-1.0f64..0.0, 0.05f64..3.0, -1e-3f64..1e-3), 1..5)
    ) {
        let mut poles = vec![c(-0.5, 1e-4)];
        for (re, im, jitter) in pts {
            poles.push(c(re, im));
            poles.push(c(re + jitter, -im + jitter));
        }
        let sym = estimation::conjugate_symmetrize(&poles);
        for z in &sym {
            prop_assert!(sym.iter().any(|w| (w - z.conj()).norm() < 1e-15));
        }
    }

    #[test]
    fn estimated_order_matches_number_of_exponentials(k in 1usize..5, seed in 0u64..1000) {
        let poles: Vec<c64> = (0..k).map(|i| c(-0.1 - 0.13 * i as f64 - 1e-3 * (seed % 7) as f64, 0.0)).collect();
        let residues: Vec<c64> = (0..k).map(|i| c(1.0 + 0.2 * i as f64, 0.0)).collect();
        let s = signal(&poles, &residues, 30, 0.7);
        let hp = build_hankel(&s, 12).unwrap();
        prop_assert_eq!(estimate_order(&hp, 1e-10).unwrap(), k);
    }
}
