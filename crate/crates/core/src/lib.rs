//! Sparse state-feedback synthesis for continuous-time linear systems.
//!
//! The crate computes sub-optimal sparse gains `u = Kx` for the
//! l1-regularized linear-quadratic problem
//!
//! ```text
//! minimize  Tr(X) + alpha1 * sum |K_ij|
//! s.t.      (A+BK)^T X + X (A+BK) + Q + K^T R K = 0,  X > 0
//! ```
//!
//! by solving a sequence of convex SDP restrictions, each built around a
//! linearization of the quadratic term `(1+delta) P^T P`, where
//! `P = X - (A+BK)/2`.
//!
//! Module map:
//!
//! * [`model`]: plant validation, seeded generators, secant bounds.
//! * [`densela`]: Lyapunov, Riccati (LQR baseline), gain evaluation, norms.
//! * [`formulation`]: the conic program and its independent verifier.
//! * [`backend`]: solver contract and the Clarabel adapter.
//! * [`driver`]: the sequential re-linearization loop.
//! * [`harness`]: penalty sweeps, CSV records, gray-scale spectra.
//! * [`io`]: matrix CSV and JSON envelopes.

// `!(x > 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

// openblas is linked for the PSD cone kernels inside clarabel.
extern crate openblas_src;

pub mod backend;
pub mod densela;
pub mod driver;
pub mod formulation;
pub mod harness;
pub mod io;
pub mod model;
pub mod rng;

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;

pub use backend::{ClarabelSolver, ConicSolver, SolveOutcome, SolveStatus};
pub use densela::{evaluate_gain, lqr_gain, norms, solve_lyapunov, GainEvaluation, LqrSolution};
pub use driver::{
    epsilon_schedule, initial_point, synthesize, IterationRecord, SynthesisParams,
    SynthesisResult, SynthesisStatus,
};
pub use formulation::{
    build_program, linearize_n, restriction_chain_check, verify_feasibility, Candidate,
    ConicProgram, FeasibilityReport, LinearizationPoint,
};
pub use harness::{emit_spectrum, sweep, SweepRecord};
pub use model::{
    gen_cyclic, gen_decaying, secant_bounds, validate_plant, CyclicSpec, DecayingSpec,
    PlantModel, SecantBounds,
};
