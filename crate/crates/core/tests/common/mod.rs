//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the kernels under test.

#![allow(dead_code)]

use nalgebra::DMatrix;
use sparselq::rng::NormalStream;

pub type M = DMatrix<f64>;

pub fn randn(rng: &mut NormalStream, rows: usize, cols: usize) -> M {
    M::from_fn(rows, cols, |_, _| rng.normal())
}

pub fn rand_sym(rng: &mut NormalStream, n: usize) -> M {
    let g = randn(rng, n, n);
    (&g + g.transpose()) * 0.5
}

pub fn rand_spd(rng: &mut NormalStream, n: usize, floor: f64) -> M {
    let g = randn(rng, n, n);
    &g * g.transpose() + M::identity(n, n) * floor
}

/// Largest real part of the eigenvalues, via the characteristic roots that
/// nalgebra's general eigen solver reports.
pub fn max_real_eig(a: &M) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Random matrix shifted so every eigenvalue has real part <= -margin.
pub fn rand_hurwitz(rng: &mut NormalStream, n: usize, margin: f64) -> M {
    let g = randn(rng, n, n);
    let shift = max_real_eig(&g) + margin + rng.uniform();
    g - M::identity(n, n) * shift
}

/// Solve `A^T X + X A + Q = 0` through the n²×n² Kronecker system
/// `(I ⊗ A^T + A^T ⊗ I) vec(X) = -vec(Q)`.
pub fn kron_lyapunov(a: &M, q: &M) -> M {
    let n = a.nrows();
    let at = a.transpose();
    let eye = M::identity(n, n);
    let big = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, q.as_slice());
    let v = big.lu().solve(&rhs).expect("Kronecker system is nonsingular");
    let x = M::from_column_slice(n, n, v.as_slice());
    (&x + x.transpose()) * 0.5
}

/// Kleinman–Newton iteration for the CARE from a stabilizing `k0`.
pub fn kleinman(a: &M, b: &M, q: &M, r: &M, k0: &M, steps: usize) -> M {
    let r_inv = r.clone().try_inverse().expect("R invertible");
    let mut k = k0.clone();
    let mut x = M::zeros(a.nrows(), a.nrows());
    for _ in 0..steps {
        let acl = a + b * &k;
        x = kron_lyapunov(&acl, &(q + k.transpose() * r * &k));
        k = -&r_inv * b.transpose() * &x;
    }
    x
}

/// Singular values by one-sided Jacobi rotations, sorted descending.
pub fn jacobi_singular_values(u: &M) -> Vec<f64> {
    let mut a = if u.nrows() >= u.ncols() { u.clone() } else { u.transpose() };
    let cols = a.ncols();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = a.column(p).norm_squared();
                let beta: f64 = a.column(q).norm_squared();
                let gamma: f64 = a.column(p).dot(&a.column(q));
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..a.nrows() {
                    let (ap, aq) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Smallest eigenvalue of a symmetric matrix by Jacobi rotations.
pub fn jacobi_min_eig(s: &M) -> f64 {
    let n = s.nrows();
    let mut a = (s + s.transpose()) * 0.5;
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + a.norm()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                let mut rot = M::identity(n, n);
                rot[(p, p)] = c;
                rot[(q, q)] = c;
                rot[(p, q)] = sn;
                rot[(q, p)] = -sn;
                a = rot.transpose() * &a * &rot;
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).fold(f64::INFINITY, f64::min)
}

pub fn block2(a: &M, b: &M, c: &M, d: &M) -> M {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut out = M::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR")))
        .expect("fixture exists")
}
