//! Plant representation, seeded instance generators and the secant-condition
//! analyzer for cyclic systems.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::NormalStream;
use crate::Matrix;

/// Minimum eigenvalue accepted for the state weight `Q`.
pub const Q_PSD_TOL: f64 = -1e-10;

/// A validated continuous-time plant `dx/dt = Ax + Bu` with LQ weights.
///
/// Construct through [`validate_plant`]; the fields are private so every
/// value of this type satisfies the plant invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: Matrix,
    b: Matrix,
    q: Matrix,
    r: Matrix,
}

impl PlantModel {
    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Plant with `B = Q = I` (n×n) and `R = I` (n×n), the setting used for
    /// the generated decaying and cyclic families.
    pub fn with_identity_weights(a: Matrix) -> Result<Self, PlantError> {
        let n = a.nrows();
        validate_plant(
            a,
            Matrix::identity(n, n),
            Matrix::identity(n, n),
            Matrix::identity(n, n),
        )
    }
}

/// One violated plant invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantViolation {
    DimensionMismatch { detail: String },
    NonSymmetricWeight { weight: char, asymmetry: f64 },
    IndefiniteQ { min_eigenvalue: f64 },
    NonPositiveDefiniteR { min_eigenvalue: f64 },
    Uncontrollable { rank: usize, n: usize },
    NonFinite { matrix: char },
}

impl fmt::Display for PlantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch { detail } => write!(f, "dimension mismatch: {detail}"),
            Self::NonSymmetricWeight { weight, asymmetry } => {
                write!(f, "{weight} is not symmetric (max |{weight}-{weight}^T| = {asymmetry:e})")
            }
            Self::IndefiniteQ { min_eigenvalue } => {
                write!(f, "Q is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")
            }
            Self::NonPositiveDefiniteR { min_eigenvalue } => {
                write!(f, "R is not positive definite (min eigenvalue {min_eigenvalue:e})")
            }
            Self::Uncontrollable { rank, n } => {
                write!(f, "(A, B) is not controllable (rank {rank} < {n})")
            }
            Self::NonFinite { matrix } => write!(f, "{matrix} has a non-finite entry"),
        }
    }
}

/// Structured rejection from [`validate_plant`], listing every violation.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid plant: {}", list(.violations))]
pub struct PlantError {
    pub violations: Vec<PlantViolation>,
}

fn list(v: &[PlantViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl PlantError {
    pub fn has(&self, pred: impl Fn(&PlantViolation) -> bool) -> bool {
        self.violations.iter().any(pred)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("matrix does not have the cyclic sign pattern: {0}")]
    NotCyclicPattern(String),
    #[error("degenerate product in secant bounds: {0}")]
    DegenerateProduct(String),
}

/// Validate `(A, B, Q, R)` and wrap it in a [`PlantModel`].
pub fn validate_plant(a: Matrix, b: Matrix, q: Matrix, r: Matrix) -> Result<PlantModel, PlantError> {
    let n = a.nrows();
    let mut dims = Vec::new();
    if a.ncols() != n {
        dims.push(format!("A is {}x{}, expected square", n, a.ncols()));
    }
    if b.nrows() != n {
        dims.push(format!("B has {} rows, expected {n}", b.nrows()));
    }
    let m = b.ncols();
    if q.shape() != (n, n) {
        dims.push(format!("Q is {}x{}, expected {n}x{n}", q.nrows(), q.ncols()));
    }
    if r.shape() != (m, m) {
        dims.push(format!("R is {}x{}, expected {m}x{m}", r.nrows(), r.ncols()));
    }
    if n == 0 || m == 0 {
        dims.push("empty state or input dimension".into());
    }
    if !dims.is_empty() {
        return Err(PlantError {
            violations: dims
                .into_iter()
                .map(|detail| PlantViolation::DimensionMismatch { detail })
                .collect(),
        });
    }
    let non_finite: Vec<_> = [('A', &a), ('B', &b), ('Q', &q), ('R', &r)]
        .into_iter()
        .filter(|(_, w)| w.iter().any(|v| !v.is_finite()))
        .map(|(matrix, _)| PlantViolation::NonFinite { matrix })
        .collect();
    if !non_finite.is_empty() {
        return Err(PlantError { violations: non_finite });
    }
    let mut violations = Vec::new();

    for (name, w) in [('Q', &q), ('R', &r)] {
        let asym = max_asymmetry(w);
        if asym > 1e-10 * (1.0 + w.amax()) {
            violations.push(PlantViolation::NonSymmetricWeight {
                weight: name,
                asymmetry: asym,
            });
        }
    }
    let q_min = min_sym_eig(&q);
    if q_min < Q_PSD_TOL {
        violations.push(PlantViolation::IndefiniteQ { min_eigenvalue: q_min });
    }
    let r_min = min_sym_eig(&r);
    if r_min <= 0.0 {
        violations.push(PlantViolation::NonPositiveDefiniteR { min_eigenvalue: r_min });
    }
    let rank = controllability_rank(&a, &b);
    if rank < n {
        violations.push(PlantViolation::Uncontrollable { rank, n });
    }

    if violations.is_empty() {
        Ok(PlantModel { a, b, q, r })
    } else {
        Err(PlantError { violations })
    }
}

fn max_asymmetry(w: &Matrix) -> f64 {
    (w - w.transpose()).amax()
}

fn min_sym_eig(w: &Matrix) -> f64 {
    let sym = (w + w.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Numerical rank of `[B, AB, ..., A^{n-1}B]` with tolerance
/// `sigma_max * n * machine_eps`.
pub fn controllability_rank(a: &Matrix, b: &Matrix) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = Matrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    let sv = ctrb.singular_values();
    let smax = sv.max();
    let tol = smax * n as f64 * f64::EPSILON;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Sub-exponentially decaying family: `A_ij = c_i exp(-alpha_a |i-j|^beta_a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayingSpec {
    pub n: usize,
    pub alpha_a: f64,
    pub beta_a: f64,
    pub seed: u64,
}

impl DecayingSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n == 0 {
            return Err(ModelError::InvalidSpec("n must be positive".into()));
        }
        if !(self.alpha_a > 0.0 && self.alpha_a.is_finite()) {
            return Err(ModelError::InvalidSpec(format!("alpha_a = {} must be > 0", self.alpha_a)));
        }
        if !(self.beta_a > 0.0 && self.beta_a <= 1.0) {
            return Err(ModelError::InvalidSpec(format!(
                "beta_a = {} must lie in (0, 1]",
                self.beta_a
            )));
        }
        Ok(())
    }
}

/// Magnitude profile `exp(-alpha_a d^beta_a)` at band distance `d`.
pub fn decay_profile(alpha_a: f64, beta_a: f64, distance: usize) -> f64 {
    (-alpha_a * (distance as f64).powf(beta_a)).exp()
}

/// Draw a decaying state matrix. Row scales `c_1..c_n` are consumed from the
/// seeded normal stream in row order; `A_ii = c_i` exactly.
pub fn gen_decaying(spec: &DecayingSpec) -> Result<Matrix, ModelError> {
    spec.validate()?;
    let mut stream = NormalStream::new(spec.seed);
    let c: Vec<f64> = (0..spec.n).map(|_| stream.normal()).collect();
    Ok(decaying_from_scales(&c, spec.alpha_a, spec.beta_a))
}

/// Decaying matrix from explicit row scales.
pub fn decaying_from_scales(c: &[f64], alpha_a: f64, beta_a: f64) -> Matrix {
    let n = c.len();
    Matrix::from_fn(n, n, |i, j| c[i] * decay_profile(alpha_a, beta_a, i.abs_diff(j)))
}

/// Cyclic family: negative diagonal, positive sub-diagonal, negative `A_1n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicSpec {
    pub n: usize,
    pub seed: u64,
}

/// Draw a cyclic state matrix. Each structural magnitude is `0.5 + |z|` with
/// `z` standard normal, drawn in the order: diagonal (rows 1..n), sub-diagonal
/// (rows 2..n), corner.
pub fn gen_cyclic(spec: &CyclicSpec) -> Result<Matrix, ModelError> {
    let n = spec.n;
    if n < 3 {
        return Err(ModelError::InvalidSpec(format!("cyclic systems need n >= 3, got {n}")));
    }
    let mut stream = NormalStream::new(spec.seed);
    let mut mag = || 0.5 + stream.normal().abs();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = -mag();
    }
    for i in 1..n {
        a[(i, i - 1)] = mag();
    }
    a[(0, n - 1)] = -mag();
    Ok(a)
}

/// Check the strict cyclic sign pattern (all other entries exactly zero).
pub fn check_cyclic_pattern(a: &Matrix) -> Result<(), ModelError> {
    let n = a.nrows();
    if a.ncols() != n || n < 3 {
        return Err(ModelError::NotCyclicPattern(format!(
            "expected square n >= 3, got {}x{}",
            n,
            a.ncols()
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            let ok = if i == j {
                v < 0.0
            } else if j + 1 == i {
                v > 0.0
            } else if i == 0 && j == n - 1 {
                v < 0.0
            } else {
                v == 0.0
            };
            if !ok {
                return Err(ModelError::NotCyclicPattern(format!("entry ({}, {}) = {v}", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

/// `sec(pi/n)^n`, the secant stability threshold.
pub fn secant_threshold(n: usize) -> f64 {
    (PI / n as f64).cos().powi(n as i32).recip()
}

/// Loop-gain ratio `(prod A_{i,i-1}) (-A_1n) / prod(-A_ii)` of a cyclic matrix.
pub fn secant_ratio(a: &Matrix) -> f64 {
    let n = a.nrows();
    let sub: f64 = (1..n).map(|i| a[(i, i - 1)]).product();
    let diag: f64 = (0..n).map(|i| -a[(i, i)]).product();
    sub * -a[(0, n - 1)] / diag
}

/// True when `a` has the cyclic sign pattern and its loop-gain ratio is
/// strictly below `sec(pi/n)^n`.
pub fn satisfies_secant(a: &Matrix) -> bool {
    check_cyclic_pattern(a).is_ok() && secant_ratio(a) < secant_threshold(a.nrows())
}

/// Single-entry gain bounds that keep a cyclic closed loop `A + K` inside the
/// secant condition (with `B = I`).
///
/// Each bound assumes the corresponding entry is the only nonzero structural
/// entry of `K`. Indices are 0-based: `subdiag_*[k]` bounds `K[(k+1, k)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecantBounds {
    pub n: usize,
    /// `sec(pi/n)^n`.
    pub threshold: f64,
    pub diag_upper: Vec<f64>,
    pub subdiag_lower: Vec<f64>,
    pub subdiag_upper: Vec<f64>,
    pub corner_lower: f64,
    pub corner_upper: f64,
}

pub fn secant_bounds(a: &Matrix) -> Result<SecantBounds, ModelError> {
    check_cyclic_pattern(a)?;
    let n = a.nrows();
    let sec_n = secant_threshold(n);
    let cos_n = sec_n.recip();
    let neg_diag: Vec<f64> = (0..n).map(|i| -a[(i, i)]).collect();
    let sub: Vec<f64> = (1..n).map(|i| a[(i, i - 1)]).collect();
    let corner = -a[(0, n - 1)];

    let prod_except = |v: &[f64], skip: usize| -> f64 {
        v.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, x)| *x).product()
    };
    let prod_diag: f64 = neg_diag.iter().product();
    let prod_sub: f64 = sub.iter().product();

    let diag_upper = (0..n)
        .map(|j| -cos_n * prod_sub * corner / prod_except(&neg_diag, j) - a[(j, j)])
        .collect::<Vec<_>>();
    let subdiag_lower = sub.iter().map(|s| -s).collect::<Vec<_>>();
    let mut subdiag_upper = Vec::with_capacity(n - 1);
    for (k, s) in sub.iter().enumerate() {
        let others = prod_except(&sub, k);
        if others == 0.0 || corner == 0.0 {
            return Err(ModelError::DegenerateProduct(format!(
                "zero denominator for K({}, {})",
                k + 2,
                k + 1
            )));
        }
        subdiag_upper.push(sec_n * prod_diag / (others * corner) - s);
    }
    if prod_sub == 0.0 {
        return Err(ModelError::DegenerateProduct("zero sub-diagonal product".into()));
    }
    let corner_lower = -sec_n * prod_diag / prod_sub + corner;
    let corner_upper = corner;

    let bounds = SecantBounds {
        n,
        threshold: sec_n,
        diag_upper,
        subdiag_lower,
        subdiag_upper,
        corner_lower,
        corner_upper,
    };
    let finite = bounds.diag_upper.iter().chain(&bounds.subdiag_upper).all(|v| v.is_finite())
        && bounds.corner_lower.is_finite();
    if !finite {
        return Err(ModelError::DegenerateProduct("non-finite bound".into()));
    }
    Ok(bounds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_plant_is_valid() {
        let p = validate_plant(scalar(-1.0), scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
        assert_eq!((p.n(), p.m()), (1, 1));
    }

    #[test]
    fn zero_input_matrix_is_uncontrollable() {
        let err = validate_plant(
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 1),
            Matrix::identity(2, 2),
            scalar(1.0),
        )
        .unwrap_err();
        assert!(err.has(|v| matches!(v, PlantViolation::Uncontrollable { rank: 0, n: 2 })));
    }

    #[test]
    fn every_violation_is_listed() {
        let q = Matrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, 1.0]);
        let err = validate_plant(Matrix::zeros(2, 2), Matrix::zeros(2, 1), q, scalar(-2.0)).unwrap_err();
        assert!(err.has(|v| matches!(v, PlantViolation::NonSymmetricWeight { weight: 'Q', .. })));
        assert!(err.has(|v| matches!(v, PlantViolation::IndefiniteQ { .. })));
        assert!(err.has(|v| matches!(v, PlantViolation::NonPositiveDefiniteR { .. })));
        assert!(err.has(|v| matches!(v, PlantViolation::Uncontrollable { .. })));
    }

    #[test]
    fn dimension_mismatch_short_circuits() {
        let err = validate_plant(Matrix::zeros(2, 3), scalar(1.0), scalar(1.0), scalar(1.0)).unwrap_err();
        assert!(err.violations.iter().all(|v| matches!(v, PlantViolation::DimensionMismatch { .. })));
    }

    #[test]
    fn decaying_diagonal_is_the_row_scale() {
        let a = decaying_from_scales(&[0.3, -1.2, 2.0], 5.0, 0.5);
        for i in 0..3 {
            assert_eq!(a[(i, i)], [0.3, -1.2, 2.0][i]);
        }
    }

    #[test]
    fn decaying_matches_four_decimal_display() {
        let a = decaying_from_scales(&[0.5377, 1.8339], 5.0, 0.5077);
        assert!((a[(0, 1)] - 0.0036).abs() < 5e-5);
        assert!((a[(1, 0)] - 0.0124).abs() < 5e-5);
    }

    #[test]
    fn decaying_rejects_bad_spec() {
        for (alpha_a, beta_a) in [(0.0, 0.5), (1.0, 0.0), (1.0, 1.5), (-1.0, 0.5)] {
            let spec = DecayingSpec { n: 4, alpha_a, beta_a, seed: 1 };
            assert!(matches!(gen_decaying(&spec), Err(ModelError::InvalidSpec(_))));
        }
    }

    #[test]
    fn cyclic_rejects_small_n() {
        assert!(gen_cyclic(&CyclicSpec { n: 2, seed: 0 }).is_err());
    }

    #[test]
    fn cyclic_n3_has_six_nonzeros_and_magnitude_floor() {
        for seed in 0..20 {
            let a = gen_cyclic(&CyclicSpec { n: 3, seed }).unwrap();
            assert_eq!(a.iter().filter(|v| **v != 0.0).count(), 6);
            assert!((0..3).all(|i| -a[(i, i)] >= 0.5));
        }
    }

    #[test]
    fn cyclic_seed42_n10_pattern_by_full_scan() {
        let a = gen_cyclic(&CyclicSpec { n: 10, seed: 42 }).unwrap();
        let mut nonzeros = 0;
        for i in 0..10 {
            for j in 0..10 {
                let v = a[(i, j)];
                if i == j {
                    assert!(v <= -0.5);
                } else if i == j + 1 {
                    assert!(v >= 0.5);
                } else if (i, j) == (0, 9) {
                    assert!(v <= -0.5);
                } else {
                    assert_eq!(v, 0.0);
                }
                nonzeros += (v != 0.0) as usize;
            }
        }
        assert_eq!(nonzeros, 20);
    }

    #[test]
    fn sec_threshold_n3_is_eight() {
        assert!((secant_threshold(3) - 8.0).abs() < 1e-12);
        assert!((secant_threshold(4) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn secant_rejects_wrong_pattern() {
        let mut a = gen_cyclic(&CyclicSpec { n: 4, seed: 5 }).unwrap();
        a[(2, 0)] = 0.1;
        assert!(matches!(secant_bounds(&a), Err(ModelError::NotCyclicPattern(_))));
    }

    #[test]
    fn secant_intervals_are_nonempty() {
        for seed in 0..10 {
            let a = gen_cyclic(&CyclicSpec { n: 6, seed }).unwrap();
            let b = secant_bounds(&a).unwrap();
            for (lo, hi) in b.subdiag_lower.iter().zip(&b.subdiag_upper) {
                assert!(lo < hi);
            }
            assert!(b.corner_lower < b.corner_upper);
        }
    }

    #[test]
    fn secant_bounds_are_tight_for_single_entries() {
        // At each single-entry bound the closed-loop ratio sits exactly on the threshold.
        let a = gen_cyclic(&CyclicSpec { n: 5, seed: 9 }).unwrap();
        let b = secant_bounds(&a).unwrap();
        let thr = b.threshold;
        let mut k = a.clone();
        k[(2, 2)] += b.diag_upper[2];
        assert!((secant_ratio(&k) - thr).abs() < 1e-9 * thr);
        let mut k = a.clone();
        k[(3, 2)] += b.subdiag_upper[2];
        assert!((secant_ratio(&k) - thr).abs() < 1e-9 * thr);
        let mut k = a.clone();
        k[(0, 4)] += b.corner_lower;
        assert!((secant_ratio(&k) - thr).abs() < 1e-9 * thr);
    }
}
