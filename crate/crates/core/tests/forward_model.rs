mod common;

use approx::assert_relative_eq;
use cmps_core::correlators::{self, SpectralData};
use cmps_core::linalg::{self, c};
use cmps_core::model::{self, build_transfer, Cmps};
use cmps_core::simulation::{self, EnsembleSpec};
use proptest::prelude::*;

use common::{oracle_correlator, rel_err, transfer_by_entries};

fn spectral(state: &Cmps) -> SpectralData {
    correlators::spectral_decompose(&build_transfer(state), state.r()).unwrap()
}

fn states() -> Vec<Cmps> {
    let mut out = Vec::new();
    for d in 1..=3 {
        for seed in 0..3 {
            out.push(simulation::random_cmps(&EnsembleSpec::naive(d, 0.7, seed)).unwrap());
            out.push(simulation::random_cmps(&EnsembleSpec::refined(d, 0.01, 0.1, seed)).unwrap());
        }
    }
    out
}

#[test]
fn transfer_matrix_matches_entrywise_definition() {
    for s in states() {
        let t = build_transfer(&s);
        let oracle = transfer_by_entries(s.q(), s.r());
        assert!(linalg::max_abs_diff(t.matrix(), &oracle) <= 1e-15 * linalg::max_abs(&oracle));
    }
}

#[test]
fn spectral_correlator_matches_matrix_exponential() {
    for s in states() {
        let sd = spectral(&s);
        let scale = sd.poles.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let unit = if scale > 0.0 { 1.0 / scale } else { 1.0 };
        for taus in [vec![0.3 * unit], vec![0.2 * unit, 1.1 * unit], vec![0.7 * unit, 0.0, 0.4 * unit]] {
            let got = correlators::correlate(&sd, &taus).unwrap();
            let want = oracle_correlator(&s, &taus);
            assert!(rel_err(got, want) < 1e-8, "d={} taus={taus:?}: {got} vs {want}", s.d());
        }
    }
}

#[test]
fn density_is_the_equal_time_one_point_value() {
    for s in states() {
        let sd = spectral(&s);
        let t = transfer_by_entries(s.q(), s.r());
        let (l, r) = common::fixed_points(&t);
        let gamma = linalg::kron(&linalg::conj(s.r()), s.r());
        let rho: num_complex::Complex64 = l.iter().zip(linalg::mat_vec(&gamma, &r)).map(|(a, b)| a * b).sum();
        assert_relative_eq!(sd.density, rho.re, max_relative = 1e-9);
        assert!(rho.im.abs() < 1e-9 * rho.re.abs());
    }
}

#[test]
fn sampled_grid_agrees_with_pointwise_evaluation() {
    let s = simulation::random_cmps(&EnsembleSpec::naive(2, 0.8, 7)).unwrap();
    let sd = spectral(&s);
    let dt = 0.37;
    let ct = correlators::sample(&sd, 3, 5, dt).unwrap();
    for (i, j) in [(0, 0), (1, 3), (4, 2)] {
        let want = correlators::correlate(&sd, &[i as f64 * dt, j as f64 * dt]).unwrap();
        assert!(rel_err(ct.get(&[i, j]), want) < 1e-12);
    }
    let c2 = correlators::sample(&sd, 2, 6, dt).unwrap();
    let amputated = correlators::amputate(&c2, sd.density).unwrap();
    assert!(amputated.amputated);
    for l in 0..6 {
        let diff = c2.values[l] - amputated.values[l];
        assert_relative_eq!(diff.re, sd.density * sd.density, max_relative = 1e-12);
    }
}

#[test]
fn correlators_decay_to_density_powers() {
    let s = simulation::random_cmps(&EnsembleSpec::naive(2, 0.8, 3)).unwrap();
    let sd = spectral(&s);
    let far = 200.0 / sd.poles[1..].iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    let c3 = correlators::correlate(&sd, &[far, far]).unwrap();
    assert!(rel_err(c3, c(sd.density.powi(3), 0.0)) < 1e-10);
}

#[test]
fn gauge_phase_and_shift_leave_correlators_unchanged() {
    let s = simulation::random_cmps(&EnsembleSpec::naive(3, 0.8, 11)).unwrap();
    let g = common::random_gauge(3, 5);
    let moved = model::gauge_transform(&s, &g).unwrap();
    let phase = c(0.0, 0.9).exp();
    let mut q = moved.q().clone();
    for i in 0..3 {
        q[(i, i)] += c(0.0, 0.4);
    }
    let moved = Cmps::new(q, linalg::scale(moved.r(), phase)).unwrap();
    let (a, b) = (spectral(&s), spectral(&moved));
    for taus in [vec![0.5], vec![0.25, 0.8]] {
        let x = correlators::correlate(&a, &taus).unwrap();
        let y = correlators::correlate(&b, &taus).unwrap();
        assert!(rel_err(y, x) < 1e-9);
    }
}

#[test]
fn tensor_size_limit_is_enforced() {
    let s = simulation::random_cmps(&EnsembleSpec::naive(2, 0.8, 3)).unwrap();
    let sd = spectral(&s);
    assert!(correlators::sample(&sd, 5, 1000, 0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stationarized_states_have_a_zero_pole(seed in 0u64..10_000, d in 1usize..4) {
        let s = simulation::random_cmps(&EnsembleSpec::naive(d, 1.0, seed)).unwrap();
        let poles = build_transfer(&s).eigenvalues().unwrap();
        let top = poles.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let scale = linalg::max_abs(s.r()).powi(2) + linalg::max_abs(s.q());
        prop_assert!(top.abs() <= 1e-10 * scale);
    }

    #[test]
    fn transfer_matrix_has_lambda_symmetry(seed in 0u64..10_000, d in 1usize..5) {
        let s = simulation::random_cmps(&EnsembleSpec::naive(d, 1.0, seed)).unwrap();
        let t = build_transfer(&s);
        prop_assert_eq!(model::conj_permuted(t.matrix(), &model::lambda_map(d)), t.matrix().clone());
    }

    #[test]
    fn m_has_xi_symmetry(seed in 0u64..10_000, d in 1usize..4) {
        let s = simulation::random_cmps(&EnsembleSpec::refined(d, 0.01, 0.1, seed)).unwrap();
        prop_assert!(spectral(&s).symmetry_defect() < 1e-8);
    }
}
