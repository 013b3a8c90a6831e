//! Dense kernels checked against independent reference computations.

mod common;

use common::*;
use sparselq::densela::{self, norms};
use sparselq::rng::NormalStream;
use sparselq::{evaluate_gain, lqr_gain, solve_lyapunov, validate_plant, PlantModel};

#[test]
fn lyapunov_matches_kronecker_on_random_hurwitz() {
    let mut rng = NormalStream::new(11);
    for case in 0..100 {
        let n = 1 + case % 8;
        let a = rand_hurwitz(&mut rng, n, 0.05);
        let q = rand_spd(&mut rng, n, 0.1);
        let x = solve_lyapunov(&a, &q).unwrap();
        let oracle = kron_lyapunov(&a, &q);
        let rel = (&x - &oracle).norm() / oracle.norm();
        assert!(rel <= 1e-8, "case {case} (n={n}): relative error {rel:e}");
    }
}

#[test]
fn lyapunov_accepts_indefinite_rhs() {
    let mut rng = NormalStream::new(12);
    for n in 2..6 {
        let a = rand_hurwitz(&mut rng, n, 0.2);
        let q = rand_sym(&mut rng, n);
        let x = solve_lyapunov(&a, &q).unwrap();
        let oracle = kron_lyapunov(&a, &q);
        assert!((&x - &oracle).norm() <= 1e-8 * (1.0 + oracle.norm()));
    }
}

fn seeded_plant(rng: &mut NormalStream, n: usize, m: usize) -> PlantModel {
    loop {
        let a = randn(rng, n, n);
        let b = randn(rng, n, m);
        let q = rand_spd(rng, n, 0.5);
        let r = rand_spd(rng, m, 0.5);
        if let Ok(p) = validate_plant(a, b, q, r) {
            return p;
        }
    }
}

fn care_residual(p: &PlantModel, x: &M) -> f64 {
    let r_inv = p.r().clone().try_inverse().unwrap();
    let res = p.a().transpose() * x + x * p.a() - x * p.b() * r_inv * p.b().transpose() * x + p.q();
    res.norm()
}

#[test]
fn care_residual_small_on_seeded_plants() {
    let mut rng = NormalStream::new(13);
    for case in 0..50 {
        let n = 2 + case % 7;
        let m = 1 + case % n.min(3);
        let plant = seeded_plant(&mut rng, n, m);
        let sol = lqr_gain(&plant).unwrap();
        let res = care_residual(&plant, &sol.x);
        assert!(res <= 1e-6 * (1.0 + sol.x.norm()), "case {case}: residual {res:e}");
        assert!(densela::is_hurwitz(&(plant.a() + plant.b() * &sol.k)));
        assert!(max_real_eig(&(plant.a() + plant.b() * &sol.k)) < 0.0);
    }
}

#[test]
fn care_matches_kleinman_on_stable_plants() {
    let mut rng = NormalStream::new(14);
    for _ in 0..10 {
        let a = rand_hurwitz(&mut rng, 3, 0.1);
        let b = randn(&mut rng, 3, 2);
        let plant = validate_plant(a.clone(), b.clone(), M::identity(3, 3), M::identity(2, 2)).unwrap();
        let oracle = kleinman(&a, &b, plant.q(), plant.r(), &M::zeros(2, 3), 40);
        let sol = lqr_gain(&plant).unwrap();
        assert!((&sol.x - &oracle).norm() <= 1e-8 * (1.0 + oracle.norm()));
        let k_oracle = -(b.transpose() * &oracle);
        assert!((&sol.k - k_oracle).norm() <= 1e-8 * (1.0 + sol.k.norm()));
    }
}

#[test]
fn lqr_cost_equals_lyapunov_cost_of_its_gain() {
    let mut rng = NormalStream::new(15);
    for _ in 0..10 {
        let plant = seeded_plant(&mut rng, 4, 2);
        let sol = lqr_gain(&plant).unwrap();
        let ev = evaluate_gain(&plant, &sol.k, densela::DEFAULT_TAU);
        let cost = ev.cost.expect("LQR gain is stabilizing");
        assert!((cost - sol.cost).abs() <= 1e-6 * sol.cost.abs());
        assert!((sol.cost - sol.x.trace()).abs() <= 1e-12 * sol.cost.abs());
    }
}

#[test]
fn norms_match_jacobi_svd() {
    let mut rng = NormalStream::new(16);
    for case in 0..100 {
        let rows = 1 + case % 6;
        let cols = 1 + (case / 6) % 6;
        let u = randn(&mut rng, rows, cols);
        let sv = jacobi_singular_values(&u);
        let nr = norms(&u);
        let nuc: f64 = sv.iter().sum();
        assert!((nr.operator - sv[0]).abs() <= 1e-10 * (1.0 + sv[0]));
        assert!((nr.nuclear - nuc).abs() <= 1e-10 * (1.0 + nuc));
        assert!((nr.frobenius - u.norm()).abs() <= 1e-12 * (1.0 + u.norm()));
    }
}

#[test]
fn nuclear_bounded_by_dimension_times_operator() {
    let mut rng = NormalStream::new(17);
    for case in 0..100 {
        let n = 1 + case % 8;
        let u = randn(&mut rng, n, n);
        let nr = norms(&u);
        assert!(nr.nuclear <= n as f64 * nr.operator, "case {case}");
        assert!(nr.operator <= nr.frobenius && nr.frobenius <= nr.nuclear + 1e-12);
    }
}

#[test]
fn unstable_gain_has_no_cost() {
    let plant = PlantModel::with_identity_weights(M::identity(2, 2)).unwrap();
    let ev = evaluate_gain(&plant, &M::zeros(2, 2), 0.0);
    assert!(!ev.stable);
    assert!(ev.cost.is_none());
    assert_eq!(ev.cardinality, 0);
}
