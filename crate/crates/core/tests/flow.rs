//! Lifted geodesic flow: conservation, causal character and the Fermat correspondence.

use kropina_core::bvp::{shoot, straight_guess, ShootOptions, ShootingProblem};
use kropina_core::finsler::{eval_f, eval_f_eps, lightlike_root};
use kropina_core::geodesics::{
    fermat_lift, fermat_project, integrate_geodesic_with, pregeodesic_residual, FlowOptions,
};
use kropina_core::spacetime::{classify, CausalKind, Orientation, SpacetimeState};
use kropina_core::{ChartManifold, DomainBounds, Topology};
use proptest::prelude::*;

fn hills() -> ChartManifold {
    ChartManifold::from_sources(
        "hills",
        &["x", "y"],
        &["1 + 0.3 * exp(-(x^2 + y^2))", "0", "1 + 0.3 * exp(-(x^2 + y^2))"],
        &["-0.4 - 0.2 * sin(y)", "0.3 * cos(x)"],
        "0.2 + 0.2 * cos(x + y)^2",
        Topology::Plane,
        DomainBounds::cube(2, 4.0),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lightlike_flow_conserves_and_stays_future(
        x in -0.5f64..0.5, y in -0.5f64..0.5, ang in 0.0f64..std::f64::consts::TAU, eps in prop_oneof![Just(0.0), 0.0f64..0.5],
    ) {
        let m = hills();
        let v = [ang.cos(), ang.sin()];
        let tau = lightlike_root(&m, &[x, y], &v, eps).unwrap().unwrap();
        let init = SpacetimeState::new(&[x, y], 0.0, &v, tau);
        let tol = 1e-9;
        let p = integrate_geodesic_with(&m, &init, eps, 1.0, &FlowOptions::uniform(tol, 41)).unwrap();
        let c0 = p.samples[0].conserved.unwrap();
        prop_assert!(p.conserved_drift.unwrap() <= tol * (1.0 + c0.abs()));
        prop_assert!(p.norm_drift.unwrap() <= tol * (1.0 + 1.0 + tau * tau));
        for s in &p.samples {
            let l = classify(&m, &s.x, (&s.v, s.tdot.unwrap()), eps).unwrap();
            prop_assert_eq!(l.kind, CausalKind::Lightlike);
            prop_assert_eq!(l.orientation, Orientation::Future);
        }
        for s in fermat_project(&p).unwrap().samples {
            let f = if eps == 0.0 {
                eval_f(&m, &s.x, &s.v).unwrap().value.unwrap()
            } else {
                eval_f_eps(&m, &s.x, &s.v, eps).unwrap()
            };
            prop_assert!((f - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shooting_solutions_lift_to_pregeodesics(
        x in -1.0f64..1.0, y in -1.0f64..1.0, eps in 0.01f64..0.5,
    ) {
        let m = hills();
        let p = ShootingProblem::new(m.clone(), &[0.0, 0.0], &[x + 1.5, y], eps).unwrap();
        let s = shoot(&p, &straight_guess(&p).unwrap(), &ShootOptions::default()).unwrap();
        prop_assert!(s.endpoint_error < 1e-9);
        let lift = fermat_lift(&m, &s.path, eps, 0.0).unwrap();
        prop_assert!(pregeodesic_residual(&m, &lift, eps).unwrap() < 1e-6);
        for q in &lift.samples {
            prop_assert!(q.lightlike_residual.unwrap().abs() < 1e-8);
        }
    }
}

#[test]
fn affine_geodesic_residual_is_small() {
    let m = hills();
    let v = [0.6, 0.8];
    let tau = lightlike_root(&m, &[0.1, 0.2], &v, 0.05).unwrap().unwrap();
    let init = SpacetimeState::new(&[0.1, 0.2], 0.0, &v, tau);
    let tol = 1e-9;
    let p = integrate_geodesic_with(&m, &init, 0.05, 2.0, &FlowOptions::uniform(tol, 401)).unwrap();
    assert!(pregeodesic_residual(&m, &p, 0.05).unwrap() < 10.0 * tol);
}
