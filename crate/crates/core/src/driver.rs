//! Sequential re-linearization: start from the LQR point, solve the
//! restriction around `Pbar`, move `Pbar` to the new `P`, and shrink the
//! linearization radius `eps = n * alpha * beta^(i-1)` until both relative
//! changes fall below `eps2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ClarabelSolver, ConicSolver, SolveStatus, DEFAULT_ACCURACY};
use crate::densela::{self, DenseError, LqrSolution};
use crate::formulation::{
    build_program, verify_feasibility, Candidate, FormulationError, LinearizationPoint,
    ProgramParams, Tolerances,
};
use crate::io::to_rows;
use crate::model::PlantModel;
use crate::Matrix;

pub const RESULT_SCHEMA: &str = "sparselq.synthesis/1";
/// Consecutive solver failures tolerated before giving up.
pub const MAX_CONSECUTIVE_FAILURES: usize = 3;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no restriction was solved successfully ({0} consecutive failures)")]
    NoFeasibleIterate(usize),
}

/// Every scalar that drives a synthesis run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    /// Weight of the l1 penalty on `K`.
    pub alpha1: f64,
    /// Initial radius scale of the schedule.
    pub alpha: f64,
    /// Geometric shrink factor of the schedule, in (0, 1).
    pub beta: f64,
    pub delta: f64,
    /// Floor in `X >= eps1 I`.
    pub eps1: f64,
    /// Stopping tolerance on both relative changes.
    pub eps2: f64,
    /// Cardinality threshold.
    pub tau: f64,
    pub max_iters: usize,
    pub solver_accuracy: f64,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        Self {
            alpha1: 0.005,
            alpha: 1e-5,
            beta: 0.99,
            delta: 0.001,
            eps1: 1e-6,
            eps2: 5e-5,
            tau: densela::DEFAULT_TAU,
            max_iters: 200,
            solver_accuracy: DEFAULT_ACCURACY,
        }
    }
}

impl SynthesisParams {
    pub fn validate(&self) -> Result<(), DriverError> {
        let checks = [
            (self.alpha1 >= 0.0 && self.alpha1.is_finite(), "alpha1 >= 0"),
            (self.alpha > 0.0 && self.alpha.is_finite(), "alpha > 0"),
            (self.beta > 0.0 && self.beta < 1.0, "0 < beta < 1"),
            (self.delta > 0.0 && self.delta.is_finite(), "delta > 0"),
            (self.eps1 > 0.0 && self.eps1.is_finite(), "eps1 > 0"),
            (self.eps2 > 0.0, "eps2 > 0"),
            (self.tau >= 0.0, "tau >= 0"),
            (self.max_iters >= 1, "max_iters >= 1"),
            (
                (crate::backend::MIN_ACCURACY..=crate::backend::MAX_ACCURACY)
                    .contains(&self.solver_accuracy),
                "solver_accuracy in [1e-10, 1e-4]",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, what)) => Err(DriverError::InvalidParams(format!("{what} violated"))),
            None => Ok(()),
        }
    }

    pub fn program_params(&self) -> ProgramParams {
        ProgramParams {
            alpha1: self.alpha1,
            delta: self.delta,
            eps1: self.eps1,
        }
    }
}

/// `n * alpha * beta^(i-1)` for `i >= 1`.
pub fn epsilon_schedule(n: usize, alpha: f64, beta: f64, i: usize) -> f64 {
    assert!(i >= 1, "schedule index starts at 1");
    n as f64 * alpha * beta.powi(i as i32 - 1)
}

/// Starting point: LQR gain and cost, `P0 = X0 - (A + B K0)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPoint {
    pub lqr: LqrSolution,
    pub p0: Matrix,
}

pub fn initial_point(plant: &PlantModel) -> Result<InitialPoint, DenseError> {
    let lqr = densela::lqr_gain(plant)?;
    let acl = plant.a() + plant.b() * &lqr.k;
    let p0 = &lqr.x - acl * 0.5;
    Ok(InitialPoint { lqr, p0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub epsilon: f64,
    pub status: SolveStatus,
    /// `Tr(X) + alpha1 * sum T`; NaN when the solve failed.
    pub objective: f64,
    /// `||P* - Pbar||_F / ||P*||_F`.
    pub rel_p_change: f64,
    /// `||Y - (1+delta) P*^T P*||_F / ||Y||_F`.
    pub rel_y_gap: f64,
    /// Smallest block eigenvalue reported by the independent verifier.
    pub worst_block_eig: f64,
    pub equality_residual: f64,
    pub solver_iterations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynthesisStatus {
    Converged,
    IterationCap,
    StalledInfeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub k_opt: Matrix,
    pub x_opt: Matrix,
    /// `Tr(X)` of the final solve, an upper-bound estimate of the cost.
    pub j_opt: f64,
    /// Lyapunov-recomputed cost of `K_opt`; `None` if not stabilizing.
    pub j_eval: Option<f64>,
    pub j_lqr: f64,
    pub cardinality: usize,
    pub status: SynthesisStatus,
    pub iterations: Vec<IterationRecord>,
    /// Primal point of the final accepted solve.
    pub final_candidate: Candidate,
    /// Linearization point and radius of the final accepted solve.
    pub final_pbar: Matrix,
    pub final_epsilon: f64,
}

impl SynthesisResult {
    pub fn stabilizing(&self) -> bool {
        self.j_eval.is_some()
    }

    /// `J_eval` when stabilizing, else `J_opt`.
    pub fn reported_cost(&self) -> f64 {
        self.j_eval.unwrap_or(self.j_opt)
    }

    pub fn accepted_iterations(&self) -> usize {
        self.iterations.iter().filter(|r| r.status.is_usable()).count()
    }

    pub fn to_json(&self, params: &SynthesisParams) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            schema: &'static str,
            params: &'a SynthesisParams,
            status: SynthesisStatus,
            #[serde(rename = "K_opt")]
            k_opt: Vec<Vec<f64>>,
            #[serde(rename = "J_opt")]
            j_opt: f64,
            #[serde(rename = "J_eval")]
            j_eval: Option<f64>,
            #[serde(rename = "J_lqr")]
            j_lqr: f64,
            cardinality: usize,
            stabilizing: bool,
            final_epsilon: f64,
            iterations: &'a [IterationRecord],
        }
        serde_json::to_string_pretty(&Report {
            schema: RESULT_SCHEMA,
            params,
            status: self.status,
            k_opt: to_rows(&self.k_opt),
            j_opt: self.j_opt,
            j_eval: self.j_eval,
            j_lqr: self.j_lqr,
            cardinality: self.cardinality,
            stabilizing: self.stabilizing(),
            final_epsilon: self.final_epsilon,
            iterations: &self.iterations,
        })
        .expect("result serializes")
    }
}

/// Run the synthesis loop with the default Clarabel backend.
pub fn synthesize(plant: &PlantModel, params: &SynthesisParams) -> Result<SynthesisResult, DriverError> {
    synthesize_with(plant, params, &ClarabelSolver::default())
}

struct Accepted {
    candidate: Candidate,
    pbar: Matrix,
    epsilon: f64,
}

pub fn synthesize_with(
    plant: &PlantModel,
    params: &SynthesisParams,
    solver: &dyn ConicSolver,
) -> Result<SynthesisResult, DriverError> {
    params.validate()?;
    let n = plant.n();
    let init = initial_point(plant)?;
    let pp = params.program_params();

    let mut pbar = init.p0.clone();
    let mut records = Vec::new();
    let mut last: Option<Accepted> = None;
    let mut schedule_index = 1usize;
    let mut failures = 0usize;
    let mut status = SynthesisStatus::IterationCap;

    for iter in 1..=params.max_iters {
        let epsilon = epsilon_schedule(n, params.alpha, params.beta, schedule_index);
        let lin = LinearizationPoint::new(pbar.clone())?;
        let program = build_program(plant, &pp, &lin, epsilon)?;
        let out = solver.solve(&program, params.solver_accuracy)?;

        if !out.status.is_usable() {
            records.push(IterationRecord {
                iter,
                epsilon,
                status: out.status,
                objective: f64::NAN,
                rel_p_change: f64::NAN,
                rel_y_gap: f64::NAN,
                worst_block_eig: f64::NAN,
                equality_residual: f64::NAN,
                solver_iterations: out.iterations,
            });
            failures += 1;
            if failures >= MAX_CONSECUTIVE_FAILURES {
                status = SynthesisStatus::StalledInfeasible;
                break;
            }
            // Fall back to the previous (larger) radius around the same Pbar.
            schedule_index = schedule_index.saturating_sub(1).max(1);
            continue;
        }
        failures = 0;

        let cand = program.candidate(&out.values);
        let report = verify_feasibility(plant, &pp, &pbar, epsilon, &cand, Tolerances::default())?;
        let rel_p_change = (&cand.p - &pbar).norm() / cand.p.norm();
        let y_norm = cand.y.norm();
        let rel_y_gap = (&cand.y - cand.p.transpose() * &cand.p * (1.0 + params.delta)).norm() / y_norm;
        records.push(IterationRecord {
            iter,
            epsilon,
            status: out.status,
            objective: out.objective,
            rel_p_change,
            rel_y_gap,
            worst_block_eig: report.worst_block(),
            equality_residual: report.equality_residual,
            solver_iterations: out.iterations,
        });

        let next_pbar = cand.p.clone();
        last = Some(Accepted {
            candidate: cand,
            pbar: std::mem::replace(&mut pbar, next_pbar),
            epsilon,
        });
        if rel_p_change < params.eps2 && rel_y_gap < params.eps2 {
            status = SynthesisStatus::Converged;
            break;
        }
        schedule_index += 1;
    }

    let Some(last) = last else {
        return Err(DriverError::NoFeasibleIterate(failures));
    };
    let k_opt = last.candidate.k.clone();
    let eval = densela::evaluate_gain(plant, &k_opt, params.tau);
    Ok(SynthesisResult {
        x_opt: last.candidate.x.clone(),
        j_opt: last.candidate.x.trace(),
        j_eval: eval.cost,
        j_lqr: init.lqr.cost,
        cardinality: eval.cardinality,
        status,
        iterations: records,
        k_opt,
        final_candidate: last.candidate,
        final_pbar: last.pbar,
        final_epsilon: last.epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_plant;

    #[test]
    fn schedule_values() {
        assert!((epsilon_schedule(6, 1e-5, 0.99, 1) - 6e-5).abs() < 1e-20);
        assert!((epsilon_schedule(6, 1e-5, 0.99, 2) - 5.94e-5).abs() < 1e-18);
        let eps: Vec<f64> = (1..50).map(|i| epsilon_schedule(4, 1e-3, 0.9, i)).collect();
        assert!(eps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn scalar_initial_point() {
        let one = Matrix::from_element(1, 1, 1.0);
        let p = validate_plant(-one.clone(), one.clone(), one.clone(), one).unwrap();
        let init = initial_point(&p).unwrap();
        let root = 2f64.sqrt() - 1.0;
        assert!((init.p0[(0, 0)] - (root + (1.0 + root) / 2.0)).abs() < 1e-12);
        assert!((init.p0[(0, 0)] - 1.12132).abs() < 1e-5);
    }

    #[test]
    fn decoupled_initial_point_is_diagonal() {
        let a = Matrix::identity(2, 2) * -2.0;
        let p = PlantModel::with_identity_weights(a).unwrap();
        let init = initial_point(&p).unwrap();
        assert!(init.p0[(0, 1)].abs() < 1e-12 && init.p0[(1, 0)].abs() < 1e-12);
        // Scalar root of x^2 + 4x - 1 = 0.
        let x = -2.0 + 5f64.sqrt();
        assert!((init.lqr.x[(0, 0)] - x).abs() < 1e-12);
        assert!((init.p0[(0, 0)] - (x - (-2.0 - x) / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(SynthesisParams::default().validate().is_ok());
        let bad = [
            SynthesisParams { beta: 1.0, ..Default::default() },
            SynthesisParams { alpha1: -1.0, ..Default::default() },
            SynthesisParams { delta: 0.0, ..Default::default() },
            SynthesisParams { solver_accuracy: 1e-2, ..Default::default() },
            SynthesisParams { max_iters: 0, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }
}
