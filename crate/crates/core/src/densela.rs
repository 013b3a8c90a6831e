//! Dense control kernels: stability, Lyapunov and Riccati solves, gain
//! evaluation and matrix norms. Sized for desk-scale problems (n up to ~32).

use nalgebra::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PlantModel;
use crate::Matrix;

/// A matrix is Hurwitz when its spectral abscissa is below this margin.
pub const HURWITZ_MARGIN: f64 = -1e-9;
/// Relative Lyapunov residual accepted by [`solve_lyapunov`].
pub const LYAP_TOL: f64 = 1e-8;
/// Relative Riccati residual accepted by [`lqr_gain`].
pub const CARE_TOL: f64 = 1e-6;
/// Default cardinality threshold: "0.0000" counts as zero, "-0.0001" does not.
pub const DEFAULT_TAU: f64 = 5e-5;
/// Largest condition number accepted for the control weight `R`.
pub const MAX_R_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenseError {
    #[error("matrix is not Hurwitz (spectral abscissa {0:e})")]
    NotHurwitz(f64),
    #[error("Lyapunov residual {residual:e} exceeds tolerance {tolerance:e}")]
    IllConditioned { residual: f64, tolerance: f64 },
    #[error("Riccati solve failed: {0}")]
    CareSolveFailed(String),
    #[error("weight matrix is singular or ill-conditioned: {0}")]
    SingularWeight(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Largest real part of the eigenvalues of `m`.
pub fn spectral_abscissa(m: &Matrix) -> f64 {
    if m.is_empty() {
        return f64::NEG_INFINITY;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(m: &Matrix) -> bool {
    spectral_abscissa(m) < HURWITZ_MARGIN
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// `||Acl^T X + X Acl + M||_F`.
pub fn lyapunov_residual(acl: &Matrix, x: &Matrix, m: &Matrix) -> f64 {
    (acl.transpose() * x + x * acl + m).norm()
}

/// Solve `Acl^T X + X Acl + M = 0` for Hurwitz `Acl` and symmetric `M`.
///
/// Bartels-Stewart on the real Schur form of `Acl`, followed by one pass of
/// iterative refinement.
pub fn solve_lyapunov(acl: &Matrix, m: &Matrix) -> Result<Matrix, DenseError> {
    let (x, residual) = lyapunov_unchecked(acl, m)?;
    let tolerance = LYAP_TOL * (1.0 + x.norm());
    if residual > tolerance || !residual.is_finite() {
        return Err(DenseError::IllConditioned { residual, tolerance });
    }
    Ok(x)
}

/// Lyapunov solve that reports the residual instead of enforcing it.
pub(crate) fn lyapunov_unchecked(acl: &Matrix, m: &Matrix) -> Result<(Matrix, f64), DenseError> {
    let n = acl.nrows();
    if acl.ncols() != n || m.shape() != (n, n) {
        return Err(DenseError::DimensionMismatch(format!(
            "Acl is {:?}, M is {:?}",
            acl.shape(),
            m.shape()
        )));
    }
    let abscissa = spectral_abscissa(acl);
    if abscissa >= HURWITZ_MARGIN {
        return Err(DenseError::NotHurwitz(abscissa));
    }
    let schur = nalgebra::Schur::new(acl.clone());
    let (u, t) = schur.unpack();
    let solve = |rhs: &Matrix| -> Result<Matrix, DenseError> {
        let c = -(u.transpose() * rhs * &u);
        let y = solve_quasi_triangular(&t, &c)?;
        Ok(symmetrize(&(&u * y * u.transpose())))
    };
    let m_sym = symmetrize(m);
    let mut x = solve(&m_sym)?;
    let mut residual = lyapunov_residual(acl, &x, &m_sym);
    for _ in 0..2 {
        let r = acl.transpose() * &x + &x * acl + &m_sym;
        let candidate = &x + solve(&r)?;
        let res = lyapunov_residual(acl, &candidate, &m_sym);
        if res < residual {
            x = candidate;
            residual = res;
        } else {
            break;
        }
    }
    Ok((x, residual))
}

/// Solve `T^T Y + Y T = C` for upper quasi-triangular `T`, sweeping the
/// diagonal blocks of `T` left to right.
fn solve_quasi_triangular(t: &Matrix, c: &Matrix) -> Result<Matrix, DenseError> {
    let n = t.nrows();
    let tt = t.transpose();
    let scale = t.amax().max(1.0);
    let mut y = Matrix::zeros(n, n);
    let mut j = 0;
    while j < n {
        let two_by_two = j + 1 < n && t[(j + 1, j)].abs() > 1e-14 * scale;
        if two_by_two {
            let mut lhs = Matrix::zeros(2 * n, 2 * n);
            let eye = Matrix::identity(n, n);
            lhs.view_mut((0, 0), (n, n)).copy_from(&(&tt + &eye * t[(j, j)]));
            lhs.view_mut((0, n), (n, n)).copy_from(&(&eye * t[(j + 1, j)]));
            lhs.view_mut((n, 0), (n, n)).copy_from(&(&eye * t[(j, j + 1)]));
            lhs.view_mut((n, n), (n, n)).copy_from(&(&tt + &eye * t[(j + 1, j + 1)]));
            let mut rhs = nalgebra::DVector::zeros(2 * n);
            for (off, col) in [(0, j), (n, j + 1)] {
                let mut r = c.column(col).clone_owned();
                for k in 0..j {
                    r -= y.column(k) * t[(k, col)];
                }
                rhs.rows_mut(off, n).copy_from(&r);
            }
            let sol = lhs
                .lu()
                .solve(&rhs)
                .ok_or(DenseError::NotHurwitz(0.0))?;
            y.set_column(j, &sol.rows(0, n));
            y.set_column(j + 1, &sol.rows(n, n));
            j += 2;
        } else {
            let lhs = &tt + Matrix::identity(n, n) * t[(j, j)];
            let mut r = c.column(j).clone_owned();
            for k in 0..j {
                r -= y.column(k) * t[(k, j)];
            }
            let sol = lhs.lu().solve(&r).ok_or(DenseError::NotHurwitz(0.0))?;
            y.set_column(j, &sol);
            j += 1;
        }
    }
    Ok(y)
}

/// Inverse of a symmetric positive definite weight via Cholesky, refusing
/// condition numbers above [`MAX_R_CONDITION`].
pub fn spd_inverse(r: &Matrix) -> Result<Matrix, DenseError> {
    let eig = SymmetricEigen::new(symmetrize(r)).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        return Err(DenseError::SingularWeight(format!("min eigenvalue {lo:e}")));
    }
    if hi / lo > MAX_R_CONDITION {
        return Err(DenseError::SingularWeight(format!("condition number {:e}", hi / lo)));
    }
    let chol = Cholesky::new(symmetrize(r))
        .ok_or_else(|| DenseError::SingularWeight("Cholesky failed".into()))?;
    Ok(symmetrize(&chol.inverse()))
}

/// `||A^T X + X A - X B R^-1 B^T X + Q||_F`.
pub fn care_residual(a: &Matrix, b: &Matrix, q: &Matrix, r_inv: &Matrix, x: &Matrix) -> f64 {
    let s = b * r_inv * b.transpose();
    (a.transpose() * x + x * a - x * s * x + q).norm()
}

/// Dense LQR baseline: `X0` solves the CARE, `K0 = -R^-1 B^T X0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    pub k: Matrix,
    pub x: Matrix,
    /// `J_lqr = Tr(X0)`.
    pub cost: f64,
    pub care_residual: f64,
}

pub fn lqr_gain(plant: &PlantModel) -> Result<LqrSolution, DenseError> {
    let (a, b, q) = (plant.a(), plant.b(), plant.q());
    let r_inv = spd_inverse(plant.r())?;
    let gain = |x: &Matrix| -(&r_inv * b.transpose() * x);

    let x = match care_sign_function(a, b, q, &r_inv) {
        Some(x) if is_hurwitz(&(a + b * gain(&x))) => kleinman_polish(plant, &r_inv, x),
        _ => kleinman_from_bass(plant, &r_inv)?,
    };
    let residual = care_residual(a, b, q, &r_inv, &x);
    if !(residual <= CARE_TOL * (1.0 + x.norm())) {
        return Err(DenseError::CareSolveFailed(format!("residual {residual:e}")));
    }
    let k = gain(&x);
    if !is_hurwitz(&(a + b * &k)) {
        return Err(DenseError::CareSolveFailed("closed loop is not Hurwitz".into()));
    }
    Ok(LqrSolution {
        cost: x.trace(),
        k,
        x,
        care_residual: residual,
    })
}

/// Stable invariant subspace of the Hamiltonian `[[A, -S], [-Q, -A^T]]` via
/// the scaled Newton iteration for the matrix sign function.
fn care_sign_function(a: &Matrix, b: &Matrix, q: &Matrix, r_inv: &Matrix) -> Option<Matrix> {
    let n = a.nrows();
    let s = b * r_inv * b.transpose();
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&-s);
    h.view_mut((n, 0), (n, n)).copy_from(&-q);
    h.view_mut((n, n), (n, n)).copy_from(&-a.transpose());

    let dim = (2 * n) as f64;
    let mut z = h;
    let mut scaled = true;
    let mut converged = false;
    let mut prev_change = f64::INFINITY;
    for _ in 0..100 {
        let lu = z.clone().lu();
        let zinv = lu.try_inverse()?;
        let c = if scaled {
            let log_det: f64 = z.clone().lu().u().diagonal().iter().map(|d| d.abs().ln()).sum();
            (-log_det / dim).exp()
        } else {
            1.0
        };
        let next = (&z * c + zinv / c) * 0.5;
        let change = (&next - &z).norm() / next.norm();
        z = next;
        if change < 1e-2 {
            scaled = false;
        }
        // Rounding stalls the quadratic phase; Kleinman polishing finishes the job.
        if change < 1e-12 || (!scaled && change < 1e-6 && change >= prev_change) {
            converged = true;
            break;
        }
        prev_change = change;
    }
    if !converged || !z.iter().all(|v| v.is_finite()) {
        return None;
    }
    // sign(H) + I annihilates the stable subspace [I; X]:
    // [W12; W22 + I] X = -[W11 + I; W21].
    let eye = Matrix::identity(n, n);
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(z.view((n, n), (n, n)) + &eye));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&-(z.view((0, 0), (n, n)) + &eye));
    rhs.view_mut((n, 0), (n, n)).copy_from(&-z.view((n, 0), (n, n)));
    let x = lhs.svd(true, true).solve(&rhs, 1e-14).ok()?;
    Some(symmetrize(&x))
}

/// Kleinman-Newton steps from `x`, keeping the iterate with the smallest
/// Riccati residual.
fn kleinman_polish(plant: &PlantModel, r_inv: &Matrix, x: Matrix) -> Matrix {
    let (a, b, q, r) = (plant.a(), plant.b(), plant.q(), plant.r());
    let mut best_res = care_residual(a, b, q, r_inv, &x);
    let mut best = x;
    for _ in 0..8 {
        let k = -(r_inv * b.transpose() * &best);
        let acl = a + b * &k;
        let Ok((next, _)) = lyapunov_unchecked(&acl, &(q + k.transpose() * r * &k)) else {
            break;
        };
        let res = care_residual(a, b, q, r_inv, &next);
        if res < best_res {
            let done = res > 0.5 * best_res;
            best = next;
            best_res = res;
            if done {
                break;
            }
        } else {
            break;
        }
    }
    best
}

/// Fallback: Bass stabilization followed by Kleinman-Newton to convergence.
fn kleinman_from_bass(plant: &PlantModel, r_inv: &Matrix) -> Result<Matrix, DenseError> {
    let (a, b, q, r) = (plant.a(), plant.b(), plant.q(), plant.r());
    let n = a.nrows();
    let shift = a.norm() + 1.0;
    // -(A + shift I) Z - Z (A + shift I)^T + 2 B B^T = 0
    let anti = -(a + Matrix::identity(n, n) * shift).transpose();
    let (z, _) = lyapunov_unchecked(&anti, &(b * b.transpose() * 2.0))?;
    let zinv = z
        .try_inverse()
        .ok_or_else(|| DenseError::CareSolveFailed("Bass Gramian is singular".into()))?;
    let mut k = -(b.transpose() * zinv);
    let mut x = Matrix::zeros(n, n);
    for it in 0..100 {
        let acl = a + b * &k;
        let (next, _) = lyapunov_unchecked(&acl, &(q + k.transpose() * r * &k))
            .map_err(|e| DenseError::CareSolveFailed(format!("Kleinman step {it}: {e}")))?;
        let change = (&next - &x).norm();
        x = next;
        k = -(r_inv * b.transpose() * &x);
        if change <= 1e-13 * (1.0 + x.norm()) {
            break;
        }
    }
    Ok(kleinman_polish(plant, r_inv, x))
}

/// Closed-loop assessment of a gain `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEvaluation {
    pub stable: bool,
    pub spectral_abscissa: f64,
    /// `J(K) = Tr(X)`; `None` when the closed loop is not Hurwitz.
    pub cost: Option<f64>,
    pub cardinality: usize,
    pub lyap_residual: Option<f64>,
}

/// Number of entries with `|K_ij| > tau`.
pub fn cardinality(k: &Matrix, tau: f64) -> usize {
    k.iter().filter(|v| v.abs() > tau).count()
}

pub fn evaluate_gain(plant: &PlantModel, k: &Matrix, tau: f64) -> GainEvaluation {
    let acl = plant.a() + plant.b() * k;
    let abscissa = spectral_abscissa(&acl);
    let card = cardinality(k, tau);
    let stable = abscissa < HURWITZ_MARGIN;
    let (cost, lyap_residual) = if stable {
        let m = plant.q() + k.transpose() * plant.r() * k;
        match lyapunov_unchecked(&acl, &m) {
            Ok((x, res)) => (Some(x.trace()), Some(res)),
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };
    GainEvaluation {
        stable: stable && cost.is_some(),
        spectral_abscissa: abscissa,
        cost,
        cardinality: card,
        lyap_residual,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixNorms {
    pub operator: f64,
    pub nuclear: f64,
    pub frobenius: f64,
}

/// Operator, nuclear and Frobenius norms from the singular values.
pub fn norms(u: &Matrix) -> MatrixNorms {
    if u.is_empty() {
        return MatrixNorms {
            operator: 0.0,
            nuclear: 0.0,
            frobenius: 0.0,
        };
    }
    let sv = u.singular_values();
    MatrixNorms {
        operator: sv.max(),
        nuclear: sv.sum(),
        frobenius: sv.iter().map(|s| s * s).sum::<f64>().sqrt(),
    }
}

/// Nuclear norm of a symmetric matrix: sum of absolute eigenvalues.
pub fn sym_nuclear_norm(m: &Matrix) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().map(|v| v.abs()).sum()
}

/// Operator norm of a symmetric matrix: largest absolute eigenvalue.
pub fn sym_operator_norm(m: &Matrix) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_plant;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_lyapunov() {
        let x = solve_lyapunov(&scalar(-1.0), &scalar(1.0)).unwrap();
        assert_relative_eq!(x[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn decoupled_lyapunov() {
        let x = solve_lyapunov(&-Matrix::identity(2, 2), &Matrix::identity(2, 2)).unwrap();
        assert_relative_eq!(x, Matrix::identity(2, 2) * 0.5, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_complex_pair() {
        let acl = Matrix::from_row_slice(2, 2, &[-0.5, 3.0, -3.0, -0.5]);
        let m = Matrix::identity(2, 2);
        let x = solve_lyapunov(&acl, &m).unwrap();
        assert!(lyapunov_residual(&acl, &x, &m) < 1e-12);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let err = solve_lyapunov(&scalar(0.5), &scalar(1.0)).unwrap_err();
        assert!(matches!(err, DenseError::NotHurwitz(_)));
        assert!(solve_lyapunov(&scalar(0.0), &scalar(1.0)).is_err());
    }

    #[test]
    fn psd_rhs_gives_psd_solution() {
        let acl = Matrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, -3.0, 1.0, 0.5, 0.0, -2.0]);
        let m = Matrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let x = solve_lyapunov(&acl, &m).unwrap();
        assert!(min_sym_eigenvalue(&x) > -1e-12);
    }

    #[test]
    fn scalar_lqr_matches_quadratic_root() {
        let p = validate_plant(scalar(-1.0), scalar(1.0), scalar(1.0), scalar(1.0)).unwrap();
        let lqr = lqr_gain(&p).unwrap();
        let root = 2f64.sqrt() - 1.0;
        assert_relative_eq!(lqr.x[(0, 0)], root, epsilon = 1e-12);
        assert_relative_eq!(lqr.k[(0, 0)], -root, epsilon = 1e-12);
        assert_relative_eq!(lqr.cost, root, epsilon = 1e-12);
    }

    #[test]
    fn lqr_handles_unstable_double_integrator() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let p = validate_plant(a, b, Matrix::identity(2, 2), scalar(1.0)).unwrap();
        let lqr = lqr_gain(&p).unwrap();
        // Closed form: X = [[sqrt3, 1], [1, sqrt3]].
        let s3 = 3f64.sqrt();
        assert_relative_eq!(lqr.x, Matrix::from_row_slice(2, 2, &[s3, 1.0, 1.0, s3]), epsilon = 1e-10);
    }

    #[test]
    fn bass_fallback_agrees_with_sign_function() {
        let a = Matrix::from_row_slice(3, 3, &[0.2, 1.0, 0.0, 0.0, 0.1, 1.0, -0.4, 0.0, 0.3]);
        let p = PlantModel::with_identity_weights(a).unwrap();
        let r_inv = spd_inverse(p.r()).unwrap();
        let via_sign = lqr_gain(&p).unwrap().x;
        let via_bass = kleinman_from_bass(&p, &r_inv).unwrap();
        assert_relative_eq!(via_sign, via_bass, epsilon = 1e-9);
    }

    #[test]
    fn unstable_gain_is_reported_not_rejected() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let p = PlantModel::with_identity_weights(a).unwrap();
        let ev = evaluate_gain(&p, &Matrix::zeros(2, 2), DEFAULT_TAU);
        assert!(!ev.stable);
        assert!(ev.cost.is_none());
        assert_eq!(ev.cardinality, 0);
    }

    #[test]
    fn cardinality_threshold_is_strict() {
        let k = Matrix::from_row_slice(1, 3, &[5e-5, -1e-4, 0.0]);
        assert_eq!(cardinality(&k, 5e-5), 1);
    }

    #[test]
    fn identity_and_zero_norms() {
        let n = norms(&Matrix::identity(3, 3));
        assert_relative_eq!(n.operator, 1.0, epsilon = 1e-14);
        assert_relative_eq!(n.nuclear, 3.0, epsilon = 1e-14);
        assert_relative_eq!(n.frobenius, 3f64.sqrt(), epsilon = 1e-14);
        let z = norms(&Matrix::zeros(2, 3));
        assert_eq!((z.operator, z.nuclear, z.frobenius), (0.0, 0.0, 0.0));
    }

    #[test]
    fn singular_r_is_refused() {
        assert!(spd_inverse(&Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-13])).is_err());
        assert!(spd_inverse(&Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
    }
}
