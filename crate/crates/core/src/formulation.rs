//! The convex restriction solved at every step of the synthesis loop, in a
//! solver-neutral form, together with an independent feasibility verifier.
//!
//! Matrix unknowns: `X, Y, F` (symmetric n×n), `K` (m×n), `P` (n×n) and the
//! epigraph slack `T` (m×n). With `Acl = A + BK` and the affine model
//! `N = (1+delta)(P^T Pbar + Pbar^T P - Pbar^T Pbar)` of `M = (1+delta) P^T P`,
//! the restriction is
//!
//! ```text
//! minimize  Tr(X) + alpha1 * sum T_ij
//! (1)  [[-Q-F+Y, 2X-P^T, P^T], [2X-P, I, 0], [P, 0, I/delta]]  >= 0
//! (2)  P = X - Acl/2
//! (3)  X >= eps1 I
//! (4)  [[Y, P^T], [P, I/(1+delta)]]                           >= 0
//! (5)  [[F, K^T], [K, R^-1]]                                   >= 0
//! (6)  [[(eps/n) I, Y-N], [Y-N, (eps/n) I]]                    >= 0
//! (7)  -T <= K <= T
//!      Y >= 0                                                  (domain)
//! ```
//!
//! Block (6) is the operator-norm ball `||Y - N|| <= eps/n`; since
//! `M - N = (1+delta)(P-Pbar)^T (P-Pbar) >= 0`, any feasible point also has
//! `||Y - M||_* <= eps`.
//!
//! The ball is only `eps/n` wide, which interior-point methods handle
//! poorly when `Y` is a free variable. [`build_program`] therefore carries
//! `D = (Y - N) n / eps` instead of `Y`, so that (6) reads
//! `[[I, D], [D, I]] >= 0` and `Y = N(P) + (eps/n) D` is substituted
//! everywhere else. Block (1) is also scaled by the congruence
//! `diag(I, I, sqrt(delta) I)`, giving `[.., sqrt(delta) P^T; .., I]` in the
//! last block row and column. Block (4) uses the identity
//! `Y - M = (eps/n) D - (1+delta)(P-Pbar)^T (P-Pbar)` and is scaled by
//! `n/eps`, giving `[[D, (P-Pbar)^T/sqrt(eps/n)], [.., I/(1+delta)]]`.
//! All three are exact reformulations of the same set;
//! [`verify_feasibility`] checks candidates against the unscaled blocks.
//!
//! PSD blocks are stored in the order (1), (4), (5), (6), (3), domain, i.e.
//! sizes `3n, 2n, n+m, 2n, n, n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densela::{self, min_sym_eigenvalue, spd_inverse, sym_nuclear_norm, sym_operator_norm};
use crate::model::PlantModel;
use crate::Matrix;

/// Minimum block eigenvalue accepted by [`verify_feasibility`].
pub const TOL_FEAS: f64 = 1e-6;
/// Maximum `||P - (X - Acl/2)||_F` accepted by [`verify_feasibility`].
pub const TOL_EQ: f64 = 1e-7;
/// Slack allowed on each link of [`restriction_chain_check`].
pub const CHAIN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulationError {
    #[error("control weight R cannot be inverted: {0}")]
    SingularR(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Scalars that shape the restriction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgramParams {
    pub alpha1: f64,
    pub delta: f64,
    pub eps1: f64,
}

/// The current estimate `Pbar` of `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationPoint {
    pub pbar: Matrix,
}

impl LinearizationPoint {
    pub fn new(pbar: Matrix) -> Result<Self, FormulationError> {
        if !pbar.iter().all(|v| v.is_finite()) {
            return Err(FormulationError::InvalidParams("Pbar has non-finite entries".into()));
        }
        Ok(Self { pbar })
    }
}

/// Evaluate `N = (1+delta)(P^T Pbar + Pbar^T P - Pbar^T Pbar)`.
pub fn linearize_n(p: &Matrix, pbar: &Matrix, delta: f64) -> Matrix {
    let pt_pbar = p.transpose() * pbar;
    (&pt_pbar + pt_pbar.transpose() - pbar.transpose() * pbar) * (1.0 + delta)
}

/// Storage class of a matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    /// Upper triangle stored column by column: `(i, j), i <= j` at
    /// `j(j+1)/2 + i`.
    Symmetric,
    /// Row-major.
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableBlock {
    pub name: String,
    pub kind: VarKind,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub len: usize,
}

impl VariableBlock {
    /// Scalar index of entry `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        match self.kind {
            VarKind::Symmetric => {
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                self.offset + hi * (hi + 1) / 2 + lo
            }
            VarKind::General => self.offset + i * self.cols + j,
        }
    }

    /// Rebuild the matrix value from a full solution vector.
    pub fn extract(&self, values: &[f64]) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| values[self.index(i, j)])
    }
}

/// `constant + sum coef * x[var]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineExpr {
    fn add(&mut self, var: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
        self
    }

    /// Merge duplicate variables and drop zero coefficients.
    fn compress(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * x[*v]).sum::<f64>()
    }
}

/// One upper-triangle entry of a PSD block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEntry {
    pub row: usize,
    pub col: usize,
    pub expr: AffineExpr,
}

/// Symmetric block `G(x) >= 0`; only nonzero upper-triangle entries are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdBlock {
    pub label: String,
    pub dim: usize,
    pub entries: Vec<PsdEntry>,
}

impl PsdBlock {
    pub fn evaluate(&self, x: &[f64]) -> Matrix {
        let mut g = Matrix::zeros(self.dim, self.dim);
        for e in &self.entries {
            let v = e.expr.eval(x);
            g[(e.row, e.col)] = v;
            g[(e.col, e.row)] = v;
        }
        g
    }
}

/// `sum coef * x[var]  (= or <=)  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub label: String,
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Solver-neutral linear-objective program over PSD blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub params: ProgramParams,
    /// Linearization point, row-major.
    pub pbar: Vec<Vec<f64>>,
    pub variables: Vec<VariableBlock>,
    pub num_scalars: usize,
    /// Dense objective coefficients, one per scalar.
    pub objective: Vec<f64>,
    pub psd_blocks: Vec<PsdBlock>,
    pub equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
}

/// Primal point of the restriction (the epigraph slack is implied by `K`).
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: Matrix,
    pub y: Matrix,
    pub f: Matrix,
    pub k: Matrix,
    pub p: Matrix,
}

impl Candidate {
    /// Exact point built from a stabilizing gain: `X` solves the closed-loop
    /// Lyapunov equation, `P = X - Acl/2`, `Y = (1+delta) P^T P`,
    /// `F = K^T R K`.
    pub fn from_gain(plant: &PlantModel, k: &Matrix, delta: f64) -> Result<Self, densela::DenseError> {
        let acl = plant.a() + plant.b() * k;
        let f = densela::symmetrize(&(k.transpose() * plant.r() * k));
        let x = densela::solve_lyapunov(&acl, &(plant.q() + &f))?;
        let p = &x - &acl * 0.5;
        let y = densela::symmetrize(&(p.transpose() * &p * (1.0 + delta)));
        Ok(Self {
            x,
            y,
            f,
            k: k.clone(),
            p,
        })
    }
}

impl ConicProgram {
    pub fn variable(&self, name: &str) -> &VariableBlock {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .unwrap_or_else(|| panic!("unknown variable {name}"))
    }

    fn pbar_matrix(&self) -> Matrix {
        let n = self.n;
        Matrix::from_fn(n, n, |i, j| self.pbar[i][j])
    }

    /// `eps / n`, the scale between `D` and `Y - N`.
    pub fn radius(&self) -> f64 {
        self.epsilon / self.n as f64
    }

    pub fn candidate(&self, values: &[f64]) -> Candidate {
        let p = self.variable("P").extract(values);
        let d = self.variable("D").extract(values);
        let y = linearize_n(&p, &self.pbar_matrix(), self.params.delta) + d * self.radius();
        Candidate {
            x: self.variable("X").extract(values),
            y: densela::symmetrize(&y),
            f: self.variable("F").extract(values),
            k: self.variable("K").extract(values),
            p,
        }
    }

    /// Pack a candidate into a solution vector, with `T = |K|`.
    pub fn pack(&self, c: &Candidate) -> Vec<f64> {
        let mut out = vec![0.0; self.num_scalars];
        let d = (&c.y - linearize_n(&c.p, &self.pbar_matrix(), self.params.delta)) / self.radius();
        for (name, mat) in [("X", &c.x), ("D", &d), ("F", &c.f), ("K", &c.k), ("P", &c.p)] {
            let var = self.variable(name);
            for i in 0..var.rows {
                for j in 0..var.cols {
                    out[var.index(i, j)] = mat[(i, j)];
                }
            }
        }
        let t = self.variable("T");
        for i in 0..t.rows {
            for j in 0..t.cols {
                out[t.index(i, j)] = c.k[(i, j)].abs();
            }
        }
        out
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.psd_blocks.iter().map(|b| b.dim).collect()
    }

    /// Check the structural invariants: six PSD blocks of the expected
    /// sizes, finite data and every scalar referenced by some constraint.
    pub fn check_invariants(&self) -> Result<(), String> {
        let (n, m) = (self.n, self.m);
        let expected = [3 * n, 2 * n, n + m, 2 * n, n, n];
        let mut sizes = self.block_sizes();
        let mut want = expected.to_vec();
        sizes.sort_unstable();
        want.sort_unstable();
        if sizes != want {
            return Err(format!("block sizes {:?}, expected {:?}", self.block_sizes(), expected));
        }
        let mut used = vec![false; self.num_scalars];
        let mut finite = self.objective.iter().all(|v| v.is_finite());
        for b in &self.psd_blocks {
            for e in &b.entries {
                finite &= e.expr.constant.is_finite();
                for (v, c) in &e.expr.terms {
                    used[*v] = true;
                    finite &= c.is_finite();
                }
            }
        }
        for r in self.equalities.iter().chain(&self.inequalities) {
            finite &= r.rhs.is_finite();
            for (v, c) in &r.terms {
                used[*v] = true;
                finite &= c.is_finite();
            }
        }
        if !finite {
            return Err("non-finite program data".into());
        }
        if let Some(idx) = used.iter().position(|u| !u) {
            return Err(format!("scalar {idx} appears in no constraint"));
        }
        Ok(())
    }

    /// Pretty JSON dump for cross-implementation diffing.
    pub fn to_json_dump(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            schema: &'static str,
            #[serde(flatten)]
            program: &'a ConicProgram,
        }
        serde_json::to_string_pretty(&Dump {
            schema: "sparselq.program/1",
            program: self,
        })
        .expect("program serializes")
    }
}

fn catalog(n: usize, m: usize) -> (Vec<VariableBlock>, usize) {
    let sym = n * (n + 1) / 2;
    let layout = [
        ("X", VarKind::Symmetric, n, n, sym),
        ("D", VarKind::Symmetric, n, n, sym),
        ("F", VarKind::Symmetric, n, n, sym),
        ("K", VarKind::General, m, n, m * n),
        ("P", VarKind::General, n, n, n * n),
        ("T", VarKind::General, m, n, m * n),
    ];
    let mut offset = 0;
    let vars = layout
        .into_iter()
        .map(|(name, kind, rows, cols, len)| {
            let v = VariableBlock {
                name: name.into(),
                kind,
                rows,
                cols,
                offset,
                len,
            };
            offset += len;
            v
        })
        .collect();
    (vars, offset)
}

/// Dense grid of affine entries, turned into a [`PsdBlock`] at the end.
struct BlockBuilder {
    dim: usize,
    cells: Vec<AffineExpr>,
}

impl BlockBuilder {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            cells: vec![AffineExpr::default(); dim * dim],
        }
    }

    /// Upper-triangle cell; callers only address `row <= col`.
    fn at(&mut self, row: usize, col: usize) -> &mut AffineExpr {
        debug_assert!(row <= col);
        &mut self.cells[col * self.dim + row]
    }

    fn identity(&mut self, start: usize, len: usize, scale: f64) {
        for i in 0..len {
            self.at(start + i, start + i).constant += scale;
        }
    }

    fn finish(self, label: &str) -> PsdBlock {
        let dim = self.dim;
        let mut entries = Vec::new();
        for (idx, expr) in self.cells.into_iter().enumerate() {
            let (col, row) = (idx / dim, idx % dim);
            if row > col {
                continue;
            }
            let expr = expr.compress();
            if !expr.is_zero() {
                entries.push(PsdEntry { row, col, expr });
            }
        }
        PsdBlock {
            label: label.into(),
            dim,
            entries,
        }
    }
}

/// Assemble the restriction around `lin` for the given `epsilon`.
pub fn build_program(
    plant: &PlantModel,
    params: &ProgramParams,
    lin: &LinearizationPoint,
    epsilon: f64,
) -> Result<ConicProgram, FormulationError> {
    let (n, m) = (plant.n(), plant.m());
    if !(params.delta > 0.0) || !(epsilon > 0.0) || !(params.eps1 > 0.0) || !(params.alpha1 >= 0.0) {
        return Err(FormulationError::InvalidParams(format!(
            "need delta > 0, eps > 0, eps1 > 0, alpha1 >= 0 (got {}, {epsilon}, {}, {})",
            params.delta, params.eps1, params.alpha1
        )));
    }
    if ![params.delta, epsilon, params.eps1, params.alpha1].iter().all(|v| v.is_finite()) {
        return Err(FormulationError::InvalidParams("non-finite parameter".into()));
    }
    if lin.pbar.shape() != (n, n) {
        return Err(FormulationError::DimensionMismatch(format!(
            "Pbar is {:?}, expected ({n}, {n})",
            lin.pbar.shape()
        )));
    }
    let r_inv = spd_inverse(plant.r()).map_err(|e| FormulationError::SingularR(e.to_string()))?;
    let (a, b, q) = (plant.a(), plant.b(), plant.q());
    let pbar = &lin.pbar;
    let delta = params.delta;

    let (variables, num_scalars) = catalog(n, m);
    let [xv, dv, fv, kv, pv, tv] = [0, 1, 2, 3, 4, 5].map(|i| variables[i].clone());

    let radius = epsilon / n as f64;
    let pbar_gram = pbar.transpose() * pbar;
    // Y_ij = radius D_ij + (1+delta) (sum_k P_ki Pbar_kj + Pbar_ki P_kj - Gram_ij)
    let add_y = |e: &mut AffineExpr, i: usize, j: usize, coef: f64| {
        e.add(dv.index(i, j), coef * radius);
        e.constant -= coef * (1.0 + delta) * pbar_gram[(i, j)];
        for k in 0..n {
            e.add(pv.index(k, i), coef * (1.0 + delta) * pbar[(k, j)]);
            e.add(pv.index(k, j), coef * (1.0 + delta) * pbar[(k, i)]);
        }
    };

    let mut objective = vec![0.0; num_scalars];
    for i in 0..n {
        objective[xv.index(i, i)] += 1.0;
    }
    for i in 0..m {
        for j in 0..n {
            objective[tv.index(i, j)] += params.alpha1;
        }
    }

    // (1) rows/cols: [0, n) | [n, 2n) | [2n, 3n)
    let mut b1 = BlockBuilder::new(3 * n);
    for j in 0..n {
        for i in 0..=j {
            let e = b1.at(i, j);
            e.constant -= q[(i, j)];
            e.add(fv.index(i, j), -1.0);
            add_y(e, i, j, 1.0);
        }
    }
    for i in 0..n {
        for j in 0..n {
            // (row i, col n+j) of 2X - P^T
            b1.at(i, n + j).add(xv.index(i, j), 2.0).add(pv.index(j, i), -1.0);
            // (row i, col 2n+j) of sqrt(delta) P^T
            b1.at(i, 2 * n + j).add(pv.index(j, i), delta.sqrt());
        }
    }
    b1.identity(n, n, 1.0);
    b1.identity(2 * n, n, 1.0);

    // (3)
    let mut b3 = BlockBuilder::new(n);
    for j in 0..n {
        for i in 0..=j {
            b3.at(i, j).add(xv.index(i, j), 1.0);
        }
    }
    b3.identity(0, n, -params.eps1);

    // (4) via Y - M = radius D - (1+delta) (P-Pbar)^T (P-Pbar), scaled by
    // 1/sqrt(radius): [[D, (P-Pbar)^T / sqrt(radius)], [.., I/(1+delta)]]
    let inv_sqrt_r = radius.sqrt().recip();
    let mut b4 = BlockBuilder::new(2 * n);
    for j in 0..n {
        for i in 0..=j {
            b4.at(i, j).add(dv.index(i, j), 1.0);
        }
    }
    for i in 0..n {
        for j in 0..n {
            let e = b4.at(i, n + j);
            e.add(pv.index(j, i), inv_sqrt_r);
            e.constant -= inv_sqrt_r * pbar[(j, i)];
        }
    }
    b4.identity(n, n, 1.0 / (1.0 + delta));

    // (5)
    let mut b5 = BlockBuilder::new(n + m);
    for j in 0..n {
        for i in 0..=j {
            b5.at(i, j).add(fv.index(i, j), 1.0);
        }
    }
    for i in 0..n {
        for j in 0..m {
            b5.at(i, n + j).add(kv.index(j, i), 1.0);
        }
    }
    for j in 0..m {
        for i in 0..=j {
            b5.at(n + i, n + j).constant += r_inv[(i, j)];
        }
    }

    // (6) in the scaled form [[I, D], [D, I]]
    let mut b6 = BlockBuilder::new(2 * n);
    b6.identity(0, 2 * n, 1.0);
    for i in 0..n {
        for j in 0..n {
            b6.at(i, n + j).add(dv.index(i, j), 1.0);
        }
    }

    // Domain Y in S+ (implied by block (4), kept explicit).
    let mut by = BlockBuilder::new(n);
    for j in 0..n {
        for i in 0..=j {
            add_y(by.at(i, j), i, j, 1.0);
        }
    }

    let psd_blocks = vec![
        b1.finish("lyapunov_3n"),
        b4.finish("y_schur"),
        b5.finish("f_schur"),
        b6.finish("linearization_ball"),
        b3.finish("x_floor"),
        by.finish("y_domain"),
    ];

    // (2) P - X + B K / 2 = -A/2
    let mut equalities = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut e = AffineExpr::default();
            e.add(pv.index(i, j), 1.0).add(xv.index(i, j), -1.0);
            for l in 0..m {
                e.add(kv.index(l, j), 0.5 * b[(i, l)]);
            }
            let e = e.compress();
            equalities.push(LinearRow {
                label: format!("P[{i},{j}]"),
                terms: e.terms,
                rhs: -0.5 * a[(i, j)],
            });
        }
    }

    // (7) K - T <= 0, -K - T <= 0
    let mut inequalities = Vec::with_capacity(2 * m * n);
    for i in 0..m {
        for j in 0..n {
            for sign in [1.0, -1.0] {
                inequalities.push(LinearRow {
                    label: format!("{}K[{i},{j}]<=T", if sign > 0.0 { "" } else { "-" }),
                    terms: vec![(kv.index(i, j), sign), (tv.index(i, j), -1.0)],
                    rhs: 0.0,
                });
            }
        }
    }

    Ok(ConicProgram {
        n,
        m,
        epsilon,
        params: *params,
        pbar: crate::io::to_rows(pbar),
        variables,
        num_scalars,
        objective,
        psd_blocks,
        equalities,
        inequalities,
    })
}

/// Independent check of a candidate against the restriction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Minimum eigenvalue of blocks (1), (3), (4), (5), (6).
    pub block_min_eig: [f64; 5],
    /// `||P - (X - Acl/2)||_F`.
    pub equality_residual: f64,
    /// `||Y - (1+delta) P^T P||_F`.
    pub gap_frobenius: f64,
    /// `||Y - (1+delta) P^T P||_*`.
    pub gap_nuclear: f64,
    /// `||Y - N||` (operator norm).
    pub linearization_gap: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn worst_block(&self) -> f64 {
        self.block_min_eig.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Feasibility tolerances; defaults are [`TOL_FEAS`] and [`TOL_EQ`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feas: f64,
    pub eq: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feas: TOL_FEAS,
            eq: TOL_EQ,
        }
    }
}

fn block_matrix(blocks: &[&[&Matrix]]) -> Matrix {
    let rows: usize = blocks.iter().map(|r| r[0].nrows()).sum();
    let cols: usize = blocks[0].iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r0 = 0;
    for row in blocks {
        let mut c0 = 0;
        for b in row.iter() {
            out.view_mut((r0, c0), b.shape()).copy_from(b);
            c0 += b.ncols();
        }
        r0 += row[0].nrows();
    }
    out
}

/// Evaluate every constraint of the restriction directly from the candidate
/// matrices, without going through [`ConicProgram`].
pub fn verify_feasibility(
    plant: &PlantModel,
    params: &ProgramParams,
    pbar: &Matrix,
    epsilon: f64,
    c: &Candidate,
    tol: Tolerances,
) -> Result<FeasibilityReport, FormulationError> {
    let (n, m) = (plant.n(), plant.m());
    let shapes = [
        (c.x.shape(), (n, n)),
        (c.y.shape(), (n, n)),
        (c.f.shape(), (n, n)),
        (c.k.shape(), (m, n)),
        (c.p.shape(), (n, n)),
        (pbar.shape(), (n, n)),
    ];
    if let Some((got, want)) = shapes.iter().find(|(g, w)| g != w) {
        return Err(FormulationError::DimensionMismatch(format!("{got:?} vs {want:?}")));
    }
    let r_inv = spd_inverse(plant.r()).map_err(|e| FormulationError::SingularR(e.to_string()))?;
    let delta = params.delta;
    let eye = Matrix::identity(n, n);
    let zero = Matrix::zeros(n, n);
    let x = densela::symmetrize(&c.x);
    let y = densela::symmetrize(&c.y);
    let f = densela::symmetrize(&c.f);
    let p = &c.p;
    let pt = p.transpose();

    let top_left = -plant.q() - &f + &y;
    let two_x_minus_p = &x * 2.0 - p;
    let b1 = block_matrix(&[
        &[&top_left, &two_x_minus_p.transpose(), &pt],
        &[&two_x_minus_p, &eye, &zero],
        &[p, &zero, &(&eye / delta)],
    ]);
    let b3 = &x - &eye * params.eps1;
    let b4 = block_matrix(&[&[&y, &pt], &[p, &(&eye / (1.0 + delta))]]);
    let b5 = block_matrix(&[&[&f, &c.k.transpose()], &[&c.k, &r_inv]]);
    let n_mat = densela::symmetrize(&linearize_n(p, pbar, delta));
    let y_minus_n = &y - &n_mat;
    let radius = &eye * (epsilon / n as f64);
    let b6 = block_matrix(&[&[&radius, &y_minus_n], &[&y_minus_n, &radius]]);

    let block_min_eig = [&b1, &b3, &b4, &b5, &b6].map(min_sym_eigenvalue);
    let acl = plant.a() + plant.b() * &c.k;
    let equality_residual = (p - (&x - acl * 0.5)).norm();
    let gap = &y - (&pt * p) * (1.0 + delta);
    let report = FeasibilityReport {
        block_min_eig,
        equality_residual,
        gap_frobenius: gap.norm(),
        gap_nuclear: sym_nuclear_norm(&gap),
        linearization_gap: sym_operator_norm(&y_minus_n),
        feasible: block_min_eig.iter().all(|&e| e >= -tol.feas) && equality_residual <= tol.eq,
    };
    Ok(report)
}

/// Links of the argument that places every feasible point of the
/// restriction inside the nuclear-norm relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainLinks {
    /// `min eig(Y - M)`; `Y >= M` from block (4).
    pub y_minus_m: f64,
    /// `min eig(M - N)`; always `>= 0` up to rounding.
    pub m_minus_n: f64,
    pub nuclear_y_minus_n: f64,
    pub operator_y_minus_n: f64,
    pub nuclear_y_minus_m: f64,
}

pub fn restriction_chain(c: &Candidate, pbar: &Matrix, delta: f64) -> ChainLinks {
    let y = densela::symmetrize(&c.y);
    let m = densela::symmetrize(&(c.p.transpose() * &c.p * (1.0 + delta)));
    let n = densela::symmetrize(&linearize_n(&c.p, pbar, delta));
    ChainLinks {
        y_minus_m: min_sym_eigenvalue(&(&y - &m)),
        m_minus_n: min_sym_eigenvalue(&(&m - &n)),
        nuclear_y_minus_n: sym_nuclear_norm(&(&y - &n)),
        operator_y_minus_n: sym_operator_norm(&(&y - &n)),
        nuclear_y_minus_m: sym_nuclear_norm(&(&y - &m)),
    }
}

/// True iff `Y >= M >= N`, `||Y-N||_* <= n||Y-N|| <= eps` and
/// `||Y-M||_* <= ||Y-N||_* <= eps`, each within [`CHAIN_TOL`].
pub fn restriction_chain_check(c: &Candidate, pbar: &Matrix, delta: f64, epsilon: f64) -> bool {
    let n = c.x.nrows() as f64;
    let l = restriction_chain(c, pbar, delta);
    let t = CHAIN_TOL;
    l.y_minus_m >= -t
        && l.m_minus_n >= -t
        && l.nuclear_y_minus_n <= n * l.operator_y_minus_n + t
        && n * l.operator_y_minus_n <= epsilon + t
        && l.nuclear_y_minus_m <= l.nuclear_y_minus_n + t
        && l.nuclear_y_minus_m <= epsilon + t
}
