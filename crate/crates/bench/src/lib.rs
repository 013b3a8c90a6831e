//! Shared fixtures for the criterion benches.

use sparselq::formulation::{build_program, ConicProgram, LinearizationPoint};
use sparselq::{gen_cyclic, initial_point, CyclicSpec, Matrix, PlantModel, SynthesisParams};

/// Seeded cyclic plant with `B = Q = R = I`.
pub fn cyclic_plant(n: usize, seed: u64) -> PlantModel {
    let a = gen_cyclic(&CyclicSpec { n, seed }).expect("valid cyclic spec");
    PlantModel::with_identity_weights(a).expect("identity weights are valid")
}

/// Closed-loop matrix and right-hand side of the LQR Lyapunov equation.
pub fn lyapunov_case(n: usize, seed: u64) -> (Matrix, Matrix) {
    let plant = cyclic_plant(n, seed);
    let init = initial_point(&plant).expect("lqr solves");
    let acl = plant.a() + plant.b() * &init.lqr.k;
    let rhs = plant.q() + init.lqr.k.transpose() * plant.r() * &init.lqr.k;
    (acl, rhs)
}

/// First restriction of the synthesis loop at default parameters.
pub fn first_program(plant: &PlantModel) -> ConicProgram {
    let params = SynthesisParams::default();
    let init = initial_point(plant).expect("lqr solves");
    let eps = sparselq::epsilon_schedule(plant.n(), params.alpha, params.beta, 1);
    build_program(
        plant,
        &params.program_params(),
        &LinearizationPoint::new(init.p0).expect("finite"),
        eps,
    )
    .expect("valid program")
}
