//! Solver contract for [`ConicProgram`] and the Clarabel adapter behind it.
//!
//! Correctness claims never rest on the solver: callers re-check returned
//! points with [`crate::formulation::verify_feasibility`].

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::ConicProgram;

pub const DEFAULT_ACCURACY: f64 = 1e-8;
pub const MIN_ACCURACY: f64 = 1e-10;
pub const MAX_ACCURACY: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl SolveStatus {
    /// Optimal or NearOptimal.
    pub fn is_usable(self) -> bool {
        matches!(self, Self::Optimal | Self::NearOptimal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Primal value of every catalog scalar.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Largest of the relative duality gap and the primal/dual residuals.
    pub accuracy: f64,
    pub iterations: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("accuracy {0:e} outside [{MIN_ACCURACY:e}, {MAX_ACCURACY:e}]")]
    InvalidAccuracy(f64),
    #[error("solver rejected program data: {0}")]
    InvalidProgram(String),
}

/// Anything that can solve a [`ConicProgram`] to a requested accuracy.
pub trait ConicSolver: Send + Sync {
    fn solve(&self, program: &ConicProgram, accuracy: f64) -> Result<SolveOutcome, BackendError>;
}

/// Interior-point solve through Clarabel's PSD-triangle cones. Single
/// threaded and deterministic for identical inputs.
#[derive(Debug, Clone, Copy)]
pub struct ClarabelSolver {
    pub max_iter: u32,
    /// Print the interior-point log to stdout.
    pub verbose: bool,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        Self {
            max_iter: 200,
            verbose: false,
        }
    }
}

/// Solve with the default adapter.
pub fn solve(program: &ConicProgram, accuracy: f64) -> Result<SolveOutcome, BackendError> {
    ClarabelSolver::default().solve(program, accuracy)
}

fn svec_index(row: usize, col: usize) -> usize {
    col * (col + 1) / 2 + row
}

/// Clarabel standard form `A x + s = b`, `s` in the cone product.
struct StandardForm {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

fn standard_form(p: &ConicProgram) -> StandardForm {
    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut row = 0;

    for rows in [&p.equalities, &p.inequalities] {
        for r in rows.iter() {
            for &(var, coef) in &r.terms {
                ii.push(row);
                jj.push(var);
                vv.push(coef);
            }
            b.push(r.rhs);
            row += 1;
        }
    }
    if !p.equalities.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(p.equalities.len()));
    }
    if !p.inequalities.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(p.inequalities.len()));
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    for block in &p.psd_blocks {
        let len = block.dim * (block.dim + 1) / 2;
        let mut rhs = vec![0.0; len];
        for e in &block.entries {
            let scale = if e.row == e.col { 1.0 } else { sqrt2 };
            let idx = svec_index(e.row, e.col);
            rhs[idx] = scale * e.expr.constant;
            for &(var, coef) in &e.expr.terms {
                ii.push(row + idx);
                jj.push(var);
                vv.push(-scale * coef);
            }
        }
        b.extend(rhs);
        cones.push(SupportedConeT::PSDTriangleConeT(block.dim));
        row += len;
    }

    StandardForm {
        a: CscMatrix::new_from_triplets(row, p.num_scalars, ii, jj, vv),
        b,
        cones,
    }
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, program: &ConicProgram, accuracy: f64) -> Result<SolveOutcome, BackendError> {
        if !(MIN_ACCURACY..=MAX_ACCURACY).contains(&accuracy) {
            return Err(BackendError::InvalidAccuracy(accuracy));
        }
        let form = standard_form(program);
        let n = program.num_scalars;
        let hessian = CscMatrix::<f64>::zeros((n, n));
        let settings = DefaultSettingsBuilder::default()
            .verbose(self.verbose)
            .max_iter(self.max_iter)
            .tol_gap_abs(accuracy)
            .tol_gap_rel(accuracy)
            .tol_feas(accuracy)
            // The blocks are small and dense; decomposition only adds cones.
            .chordal_decomposition_enable(false)
            .direct_solve_method("faer".into())
            .max_threads(1)
            .build()
            .map_err(|e| BackendError::InvalidProgram(e.to_string()))?;
        let mut solver = DefaultSolver::new(
            &hessian,
            &program.objective,
            &form.a,
            &form.b,
            &form.cones,
            settings,
        )
        .map_err(|e| BackendError::InvalidProgram(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::NearOptimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            _ => SolveStatus::NumericalFailure,
        };
        let values = sol.x.clone();
        let finite = values.iter().all(|v| v.is_finite());
        let status = if status.is_usable() && !finite {
            SolveStatus::NumericalFailure
        } else {
            status
        };
        let gap = (sol.obj_val - sol.obj_val_dual).abs() / (1.0 + sol.obj_val.abs());
        Ok(SolveOutcome {
            status,
            objective: program.objective_value(&values),
            values,
            accuracy: gap.max(sol.r_prim).max(sol.r_dual),
            iterations: sol.iterations,
        })
    }
}
