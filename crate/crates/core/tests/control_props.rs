//! Admissible controls on the Heisenberg chart: sign of the drift, energy bound,
//! and regularity of the endpoint map.

use kropina_core::control::{
    build_frame, drift_sign_violations, endpoint, energy_bound_check, integrate_control, ControlSignal,
};
use kropina_core::Catalog;
use proptest::prelude::*;

fn signal_strategy(c: f64) -> impl Strategy<Value = ControlSignal> {
    (1usize..5).prop_flat_map(move |n| {
        (
            proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..0.6], n),
            proptest::collection::vec(proptest::collection::vec((0.0f64..1.0, 0.0f64..std::f64::consts::TAU), 1..4), n),
        )
            .prop_map(move |(xi, blocks)| {
                let alpha = blocks
                    .into_iter()
                    .map(|b| b.into_iter().map(|(r, a)| vec![c * r * a.cos(), c * r * a.sin()]).collect())
                    .collect();
                let breakpoints = (0..=n).map(|i| i as f64 / n as f64).collect();
                ControlSignal { breakpoints, xi, alpha }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn admissible_curves_obey_sign_and_energy_bound(u in signal_strategy(build_frame(&Catalog::heisenberg()).unwrap().c)) {
        let f = build_frame(&Catalog::heisenberg()).unwrap();
        let x0 = [0.0, 0.0, 0.0];
        let Ok(path) = integrate_control(&f, &x0, &u) else {
            // left the unit cube; nothing to check
            return Ok(());
        };
        prop_assert_eq!(drift_sign_violations(&f, &path).unwrap(), 0);
        let r = energy_bound_check(&f, &u, &path).unwrap();
        prop_assert!(r.pass);
        prop_assert!(r.sharp_bound <= r.bound);
        prop_assert!(r.energy <= r.sharp_bound);
    }
}

#[test]
fn generators_realize_the_sub_riemannian_norm() {
    // For an orthonormal frame of ker omega the least-squares representation of
    // v = sum u_i X_i has sum u_i^2 = g0(v, v).
    let f = build_frame(&Catalog::heisenberg()).unwrap();
    for x in [[0.0, 0.0, 0.0], [0.7, -0.4, 0.2], [-1.0, 1.0, -1.0]] {
        let fr = f.fields_at(&x).unwrap();
        for (a, b) in [(1.0, 0.0), (0.3, -2.0), (-1.5, 0.25)] {
            let v: Vec<f64> = (0..3).map(|k| a * fr[1][k] + b * fr[2][k]).collect();
            let gvv: f64 = v.iter().map(|c| c * c).sum();
            // solve the 2x2 normal equations
            let g = |i: usize, j: usize| (0..3).map(|k| fr[i][k] * fr[j][k]).sum::<f64>();
            let r = |i: usize| (0..3).map(|k| fr[i][k] * v[k]).sum::<f64>();
            let det = g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1);
            let u1 = (r(1) * g(2, 2) - r(2) * g(1, 2)) / det;
            let u2 = (g(1, 1) * r(2) - g(2, 1) * r(1)) / det;
            assert!((u1 * u1 + u2 * u2 - gvv).abs() < 1e-8);
        }
    }
}

#[test]
fn endpoint_map_is_differentiable() {
    let f = build_frame(&Catalog::heisenberg()).unwrap();
    let x0 = [0.1, 0.1, 0.0];
    let base =
        |t: f64| ControlSignal::piecewise_constant(&[0.5 + t, 0.4], &[vec![1.0, -0.5 + 2.0 * t], vec![0.3, 0.8]]);
    let e = |t: f64| endpoint(&f, &x0, &base(t)).unwrap();
    let h = 1e-4;
    let central: Vec<f64> = (0..3).map(|k| (e(h)[k] - e(-h)[k]) / (2.0 * h)).collect();
    for t in [1e-2, 1e-3] {
        let secant: Vec<f64> = (0..3).map(|k| (e(t)[k] - e(0.0)[k]) / t).collect();
        let err: f64 = (0..3).map(|k| (secant[k] - central[k]).abs()).fold(0.0, f64::max);
        // first order in t
        assert!(err < 50.0 * t, "t = {t}: {err}");
    }
}
