mod common;

use common::*;
use sparselq::backend::{self, BackendError, SolveStatus};
use sparselq::formulation::{build_program, verify_feasibility, LinearizationPoint, ProgramParams, Tolerances};
use sparselq::rng::NormalStream;
use sparselq::{gen_cyclic, gen_decaying, initial_point, CyclicSpec, DecayingSpec, PlantModel};

fn seeded_plant(seed: u64) -> PlantModel {
    let n = 2 + (seed % 5) as usize;
    let a = if seed % 2 == 0 {
        gen_cyclic(&CyclicSpec { n: n.max(3), seed }).unwrap()
    } else {
        gen_decaying(&DecayingSpec { n, alpha_a: 2.0, beta_a: 0.6, seed }).unwrap()
    };
    PlantModel::with_identity_weights(a).unwrap()
}

#[test]
fn solutions_verify_within_ten_times_accuracy() {
    let accuracy = 1e-8;
    let mut rng = NormalStream::new(31);
    for seed in 0..50u64 {
        let plant = seeded_plant(seed);
        let n = plant.n();
        let p0 = initial_point(&plant).unwrap().p0;
        let params = ProgramParams { alpha1: 0.01 + rng.uniform(), delta: 1e-3, eps1: 1e-6 };
        let eps = n as f64 * 1e-5 * (0.2 + rng.uniform());
        let prog = build_program(&plant, &params, &LinearizationPoint::new(p0.clone()).unwrap(), eps).unwrap();
        let out = backend::solve(&prog, accuracy).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal, "seed {seed}");
        assert!(out.values.iter().all(|v| v.is_finite()));
        let c = prog.candidate(&out.values);
        let tol = Tolerances { feas: 10.0 * accuracy, eq: 10.0 * accuracy };
        let report = verify_feasibility(&plant, &params, &p0, eps, &c, tol).unwrap();
        assert!(report.feasible, "seed {seed}: {report:?}");
        // The reported objective is the program objective at the returned point.
        let t: f64 = c.k.iter().map(|v| v.abs()).sum();
        assert!(out.objective <= c.x.trace() + params.alpha1 * t + 1e-6);
    }
}

#[test]
fn repeated_solves_are_identical() {
    let plant = seeded_plant(4);
    let p0 = initial_point(&plant).unwrap().p0;
    let params = ProgramParams { alpha1: 0.05, delta: 1e-3, eps1: 1e-6 };
    let prog = build_program(&plant, &params, &LinearizationPoint::new(p0).unwrap(), 5e-5).unwrap();
    let a = backend::solve(&prog, 1e-8).unwrap();
    let b = backend::solve(&prog, 1e-8).unwrap();
    assert!((a.objective - b.objective).abs() <= 1e-6);
    assert_eq!(a.values, b.values);
}

#[test]
fn scalar_restriction_recovers_lqr_value() {
    let plant = PlantModel::with_identity_weights(M::from_element(1, 1, -1.0)).unwrap();
    let p0 = initial_point(&plant).unwrap().p0;
    let params = ProgramParams { alpha1: 0.0, delta: 1e-3, eps1: 1e-6 };
    let prog = build_program(&plant, &params, &LinearizationPoint::new(p0).unwrap(), 1e-5).unwrap();
    let out = backend::solve(&prog, 1e-8).unwrap();
    assert!(out.status.is_usable());
    let x_lqr = 2f64.sqrt() - 1.0;
    assert!((out.objective - x_lqr).abs() <= 1e-3, "{}", out.objective);
}

#[test]
fn accuracy_outside_range_is_rejected() {
    let plant = seeded_plant(1);
    let p0 = initial_point(&plant).unwrap().p0;
    let params = ProgramParams { alpha1: 0.0, delta: 1e-3, eps1: 1e-6 };
    let prog = build_program(&plant, &params, &LinearizationPoint::new(p0).unwrap(), 1e-5).unwrap();
    assert!(matches!(backend::solve(&prog, 1e-2), Err(BackendError::InvalidAccuracy(_))));
}
