use std::sync::Arc;

use proptest::prelude::*;

use qheat::direct::{solve_direct, Source};
use qheat::inverse::{affine_shape, recover_source, SourceProfile};
use qheat::operators::{involution_spectrum, landau_spectrum};
use qheat::qlattice::{big_e_q, QParams};
use qheat::spectral::{CoeffVec, Spectrum};
use qheat::{CoefficientProfile, DirectProblem, GrowthEvaluator, InverseProblem};

const HORIZON: f64 = 1.0;

fn affine_profile(a: f64, b: f64, params: &QParams) -> CoefficientProfile {
    let end = a + b * HORIZON;
    CoefficientProfile::new(Arc::new(move |t| a + b * t), a.min(end), a.max(end), HORIZON, params).unwrap()
}

fn direct(spectrum: &Spectrum, phi: &[f64], amplitudes: &[f64], q: f64) -> DirectProblem {
    let params = QParams::new(q).unwrap();
    DirectProblem::new(
        spectrum.clone(),
        affine_profile(1.0, 0.5, &params),
        phi.to_vec().into(),
        Source::separable(amplitudes.to_vec(), affine_shape(1.0, 0.5)),
        HORIZON,
        params,
        0.0,
    )
    .unwrap()
}

fn inverse(spectrum: &Spectrum, phi: &[f64], eta: &[f64], q: f64) -> InverseProblem {
    let params = QParams::new(q).unwrap();
    let g = SourceProfile::new(affine_shape(1.0, 0.5), 0.5, 2.0, HORIZON, &params).unwrap();
    InverseProblem::new(
        spectrum.clone(),
        affine_profile(1.0, 0.5, &params),
        phi.to_vec().into(),
        eta.to_vec().into(),
        g,
        HORIZON,
        params,
        0.0,
    )
    .unwrap()
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gamma_times_gamma_inv_is_one(
        q in 0.2f64..0.95, a in 0.5f64..2.0, b in 0.0f64..2.0, lambda in 0.1f64..200.0, frac in 0.0f64..=1.0,
    ) {
        let params = QParams::new(q).unwrap();
        let ev = GrowthEvaluator::new(affine_profile(a, b, &params), params, HORIZON).unwrap();
        let t = frac * HORIZON;
        let product = ev.gamma(lambda, t).unwrap() * ev.gamma_inv(lambda, t).unwrap();
        prop_assert!((product - 1.0).abs() <= 1e-14, "{product}");
    }

    #[test]
    fn memo_is_transparent(q in 0.2f64..0.95, lambda in 0.1f64..50.0, frac in 0.0f64..=1.0) {
        let params = QParams::new(q).unwrap();
        let cached = GrowthEvaluator::new(affine_profile(1.0, 1.0, &params), params, HORIZON).unwrap();
        let plain = GrowthEvaluator::new(affine_profile(1.0, 1.0, &params), params, HORIZON).unwrap().without_memo();
        let t = frac * HORIZON;
        let first = cached.gamma_inv(lambda, t).unwrap();
        let second = cached.gamma_inv(lambda, t).unwrap();
        prop_assert_eq!(first.to_bits(), second.to_bits());
        prop_assert_eq!(first.to_bits(), plain.gamma_inv(lambda, t).unwrap().to_bits());
    }

    #[test]
    fn gamma_inv_is_sandwiched(
        q in 0.2f64..0.95, a in 0.5f64..2.0, b in -0.4f64..2.0, lambda in 0.1f64..100.0, frac in 0.0f64..=1.0,
    ) {
        let params = QParams::new(q).unwrap();
        let ev = GrowthEvaluator::new(affine_profile(a, b, &params), params, HORIZON).unwrap();
        let (low, high) = ev.sandwich_margins(lambda, frac * HORIZON).unwrap();
        prop_assert!(low >= -1e-12 && high >= -1e-12, "margins {low}, {high}");
    }

    #[test]
    fn big_e_q_is_increasing(q in 0.1f64..0.99, x in 0.0f64..50.0, dx in 1e-3f64..10.0) {
        let params = QParams::new(q).unwrap();
        prop_assert!(big_e_q(x + dx, &params).unwrap() > big_e_q(x, &params).unwrap());
    }

    #[test]
    fn involution_spectrum_is_sorted_and_positive(eps in -0.99f64..0.99, modes in 1usize..40) {
        let s = involution_spectrum(eps, modes).unwrap();
        prop_assert_eq!(s.len(), modes);
        prop_assert!(s.eigenvalues().iter().all(|&l| l > 0.0));
        prop_assert!(s.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(s.lambda0() > 0.0 && s.lambda0() <= s.eigenvalues()[0]);
        for (&l, &n) in s.eigenvalues().iter().zip(s.labels()) {
            let factor = if n.is_multiple_of(2) { 1.0 + eps } else { 1.0 - eps };
            prop_assert!((l - factor * (n * n) as f64).abs() <= 1e-12 * l);
        }
    }

    #[test]
    fn homogeneous_modes_decay_faster_for_larger_eigenvalues(
        q in 0.3f64..0.9, b in 0.5f64..3.0, modes in 2usize..10,
    ) {
        let spectrum = landau_spectrum(b, modes).unwrap();
        let p = direct(&spectrum, &vec![1.0; modes], &vec![0.0; modes], q);
        let end = solve_direct(&p).unwrap().trajectory.at_horizon().clone();
        prop_assert!(end.as_slice().iter().all(|&u| u > 0.0 && u <= 1.0));
        prop_assert!(end.as_slice().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn direct_solution_is_linear(
        q in prop::sample::select(vec![0.5, 0.9]),
        phi1 in coeffs(6), phi2 in coeffs(6), f1 in coeffs(6), f2 in coeffs(6), c in -3.0f64..3.0,
    ) {
        let spectrum = involution_spectrum(0.3, 6).unwrap();
        let combo = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a + c * b).collect::<Vec<_>>();
        let u1 = solve_direct(&direct(&spectrum, &phi1, &f1, q)).unwrap().trajectory;
        let u2 = solve_direct(&direct(&spectrum, &phi2, &f2, q)).unwrap().trajectory;
        let u = solve_direct(&direct(&spectrum, &combo(&phi1, &phi2), &combo(&f1, &f2), q)).unwrap().trajectory;
        for idx in 0..u.states().len() {
            for k in 0..6 {
                let expected = u1.at(idx).get(k) + c * u2.at(idx).get(k);
                prop_assert!(close(u.at(idx).get(k), expected, expected.abs() + 10.0));
            }
        }
    }

    #[test]
    fn recovered_source_is_linear(
        phi1 in coeffs(5), phi2 in coeffs(5), eta1 in coeffs(5), eta2 in coeffs(5), c in -3.0f64..3.0,
    ) {
        let spectrum = involution_spectrum(-0.4, 5).unwrap();
        let combo = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a + c * b).collect::<Vec<_>>();
        let f1 = recover_source(&inverse(&spectrum, &phi1, &eta1, 0.5)).unwrap();
        let f2 = recover_source(&inverse(&spectrum, &phi2, &eta2, 0.5)).unwrap();
        let f = recover_source(&inverse(&spectrum, &combo(&phi1, &phi2), &combo(&eta1, &eta2), 0.5)).unwrap();
        for k in 0..5 {
            let expected = f1.get(k) + c * f2.get(k);
            let scale = f1.get(k).abs() + c.abs() * f2.get(k).abs();
            prop_assert!((f.get(k) - expected).abs() <= 1e-10 * scale.max(1.0), "mode {k}");
        }
    }

    #[test]
    fn solvers_are_deterministic(phi in coeffs(4), f in coeffs(4)) {
        let spectrum = involution_spectrum(0.5, 4).unwrap();
        let a = solve_direct(&direct(&spectrum, &phi, &f, 0.5)).unwrap().trajectory;
        let b = solve_direct(&direct(&spectrum, &phi, &f, 0.5)).unwrap().trajectory;
        prop_assert_eq!(a.states(), b.states());
        let eta: Vec<f64> = a.at_horizon().as_slice().to_vec();
        let x: CoeffVec = recover_source(&inverse(&spectrum, &phi, &eta, 0.5)).unwrap();
        let y: CoeffVec = recover_source(&inverse(&spectrum, &phi, &eta, 0.5)).unwrap();
        prop_assert_eq!(x, y);
    }
}
