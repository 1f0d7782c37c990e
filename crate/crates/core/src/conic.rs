//! A small modelling layer for real symmetric-cone programs.
//!
//! Variables are named blocks of real parameters: scalars, real symmetric
//! matrices and complex Hermitian matrices (`n^2` real parameters each). Every
//! constraint is an affine expression in those parameters that must be zero,
//! nonnegative, or positive semidefinite. Hermitian PSD constraints are lowered
//! through [`hermitian_embed`] so the backend only ever sees real PSD cones.
//!
//! The backend is Clarabel; only [`ConicProgram::solve`] knows about it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Real 2n x 2n embedding `[[Re H, -Im H], [Im H, Re H]]` of a Hermitian matrix.
pub fn hermitian_embed(h: &CMatrix) -> Result<DMatrix<f64>> {
    if !h.is_square() {
        return Err(Error::Contract("hermitian_embed needs a square matrix".into()));
    }
    let scale = h.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    let defect = linalg::hermitian_defect(h);
    if defect > 1e-10 * scale {
        return Err(Error::Contract(format!(
            "matrix is not Hermitian (max |H - H^H| = {defect:e})"
        )));
    }
    let n = h.nrows();
    Ok(DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let z = h[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Scalar,
    Symmetric(usize),
    Hermitian(usize),
}

impl BlockKind {
    fn len(self) -> usize {
        match self {
            BlockKind::Scalar => 1,
            BlockKind::Symmetric(n) => n * (n + 1) / 2,
            BlockKind::Hermitian(n) => n * n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    pub offset: usize,
}

/// Handle to a declared variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

/// Affine real functional `constant + sum coef * x[param]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr { constant: c, terms: Vec::new() }
    }

    pub fn param(index: usize, coef: f64) -> Self {
        LinExpr { constant: 0.0, terms: vec![(index, coef)] }
    }

    pub fn add_term(&mut self, index: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
        self
    }

    pub fn add_scaled(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        self.constant += scale * other.constant;
        for &(i, c) in &other.terms {
            self.add_term(i, scale * c);
        }
        self
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        let mut out = LinExpr::default();
        out.add_scaled(self, scale);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    /// Merges duplicate parameters and drops zeros.
    pub fn compact(&self) -> LinExpr {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, c) in &self.terms {
            *acc.entry(i).or_default() += c;
        }
        LinExpr {
            constant: self.constant,
            terms: acc.into_iter().filter(|&(_, c)| c != 0.0).collect(),
        }
    }
}

type Entries = Vec<(usize, usize, Complex64)>;

/// Affine Hermitian (or real symmetric) matrix expression, stored by upper
/// triangle: `constant + sum_i x[i] * coef_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixExpr {
    pub dim: usize,
    pub complex: bool,
    pub constant: Entries,
    pub terms: BTreeMap<usize, Entries>,
}

fn upper(r: usize, c: usize, z: Complex64) -> (usize, usize, Complex64) {
    if r <= c {
        (r, c, z)
    } else {
        (c, r, z.conj())
    }
}

impl MatrixExpr {
    pub fn real(dim: usize) -> Self {
        MatrixExpr { dim, complex: false, constant: Vec::new(), terms: BTreeMap::new() }
    }

    pub fn hermitian(dim: usize) -> Self {
        MatrixExpr { dim, complex: true, constant: Vec::new(), terms: BTreeMap::new() }
    }

    /// Adds `z` at (r, c) (and its conjugate at (c, r)).
    pub fn add_constant(&mut self, r: usize, c: usize, z: Complex64) -> &mut Self {
        if z != Complex64::new(0.0, 0.0) {
            self.constant.push(upper(r, c, z));
        }
        self
    }

    pub fn add_param(&mut self, index: usize, r: usize, c: usize, z: Complex64) -> &mut Self {
        if z != Complex64::new(0.0, 0.0) {
            self.terms.entry(index).or_default().push(upper(r, c, z));
        }
        self
    }

    /// Adds `z * lin` at (r, c).
    pub fn add_lin(&mut self, r: usize, c: usize, lin: &LinExpr, z: Complex64) -> &mut Self {
        self.add_constant(r, c, z * lin.constant);
        for &(i, coef) in &lin.terms {
            self.add_param(i, r, c, z * coef);
        }
        self
    }

    fn densify(dim: usize, entries: &Entries, out: &mut CMatrix, scale: f64) {
        for &(r, c, z) in entries {
            out[(r, c)] += z * scale;
            if r != c {
                out[(c, r)] += z.conj() * scale;
            }
        }
        debug_assert_eq!(out.nrows(), dim);
    }

    pub fn eval(&self, x: &[f64]) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        Self::densify(self.dim, &self.constant, &mut m, 1.0);
        for (&i, entries) in &self.terms {
            Self::densify(self.dim, entries, &mut m, x[i]);
        }
        m
    }

    fn lowered_dim(&self) -> usize {
        if self.complex {
            2 * self.dim
        } else {
            self.dim
        }
    }

    /// Upper-triangle entries of the real (embedded) matrix for one coefficient list.
    fn lower_entries(&self, entries: &Entries) -> Vec<(usize, usize, f64)> {
        let n = self.dim;
        let mut out = Vec::with_capacity(entries.len() * 4);
        for &(r, c, z) in entries {
            if !self.complex {
                out.push((r, c, z.re));
                continue;
            }
            out.push((r, c, z.re));
            out.push((n + r, n + c, z.re));
            if r != c {
                out.push((r, n + c, -z.im));
                out.push((c, n + r, z.im));
            }
        }
        out
    }

    fn validate(&self, num_params: usize) -> Result<()> {
        let check = |entries: &Entries| -> Result<()> {
            for &(r, c, z) in entries {
                if r >= self.dim || c >= self.dim {
                    return Err(Error::Contract(format!("matrix entry ({r},{c}) outside dimension {}", self.dim)));
                }
                if r == c && z.im != 0.0 {
                    return Err(Error::Contract("diagonal entries must be real".into()));
                }
                if !self.complex && z.im != 0.0 {
                    return Err(Error::Contract("real matrix expression has an imaginary entry".into()));
                }
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return Err(Error::Contract("non-finite matrix coefficient".into()));
                }
            }
            Ok(())
        };
        check(&self.constant)?;
        for (&i, entries) in &self.terms {
            if i >= num_params {
                return Err(Error::Contract(format!("matrix expression references undeclared parameter {i}")));
            }
            check(entries)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// expr == 0
    Eq(LinExpr),
    /// expr >= 0
    Nonneg(LinExpr),
    /// expr is PSD
    Psd(MatrixExpr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Present iff `status == Optimal`.
    pub objective_value: Option<f64>,
    pub x: Vec<f64>,
    pub solve_time: f64,
    pub iterations: u32,
    /// Worst relative constraint violation re-measured on the returned point.
    pub primal_residual: f64,
    /// Relative primal/dual objective gap reported by the backend.
    pub duality_gap: f64,
    pub backend_status: String,
}

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    blocks: Vec<Block>,
    num_params: usize,
    objective: LinExpr,
    constraints: Vec<(String, Constraint)>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_block(&mut self, name: &str, kind: BlockKind) -> VarId {
        let offset = self.num_params;
        self.num_params += kind.len();
        self.blocks.push(Block { name: name.to_string(), kind, offset });
        VarId(self.blocks.len() - 1)
    }

    pub fn add_scalar(&mut self, name: &str) -> VarId {
        self.add_block(name, BlockKind::Scalar)
    }

    pub fn add_symmetric(&mut self, name: &str, n: usize) -> VarId {
        self.add_block(name, BlockKind::Symmetric(n))
    }

    pub fn add_hermitian(&mut self, name: &str, n: usize) -> VarId {
        self.add_block(name, BlockKind::Hermitian(n))
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn constraints(&self) -> &[(String, Constraint)] {
        &self.constraints
    }

    pub fn block(&self, v: VarId) -> &Block {
        &self.blocks[v.0]
    }

    /// Parameter index of a scalar variable.
    pub fn param(&self, v: VarId) -> usize {
        let b = self.block(v);
        assert_eq!(b.kind, BlockKind::Scalar, "{} is not a scalar", b.name);
        b.offset
    }

    pub fn var(&self, v: VarId) -> LinExpr {
        LinExpr::param(self.param(v), 1.0)
    }

    /// `(param, row, col, coefficient)` for every parameter of a matrix block:
    /// the block equals the sum of `x[param] * coefficient` placed at (row, col)
    /// and mirrored Hermitian-wise.
    pub fn matrix_basis(&self, v: VarId) -> Vec<(usize, usize, usize, Complex64)> {
        let b = self.block(v);
        let mut out = Vec::new();
        let mut idx = b.offset;
        match b.kind {
            BlockKind::Scalar => panic!("{} is not a matrix", b.name),
            BlockKind::Symmetric(n) => {
                for c in 0..n {
                    for r in 0..=c {
                        out.push((idx, r, c, Complex64::new(1.0, 0.0)));
                        idx += 1;
                    }
                }
            }
            BlockKind::Hermitian(n) => {
                for c in 0..n {
                    for r in 0..=c {
                        out.push((idx, r, c, Complex64::new(1.0, 0.0)));
                        idx += 1;
                        if r != c {
                            out.push((idx, r, c, Complex64::new(0.0, 1.0)));
                            idx += 1;
                        }
                    }
                }
            }
        }
        out
    }

    /// The matrix variable itself as an affine expression.
    pub fn matrix_expr(&self, v: VarId) -> MatrixExpr {
        let (dim, complex) = match self.block(v).kind {
            BlockKind::Symmetric(n) => (n, false),
            BlockKind::Hermitian(n) => (n, true),
            BlockKind::Scalar => panic!("not a matrix"),
        };
        let mut e = MatrixExpr { dim, complex, constant: Vec::new(), terms: BTreeMap::new() };
        for (i, r, c, z) in self.matrix_basis(v) {
            e.add_param(i, r, c, z);
        }
        e
    }

    /// Re Tr(X Q) for matrix variable X and a fixed square matrix Q.
    pub fn trace_inner(&self, v: VarId, q: &CMatrix) -> LinExpr {
        let mut out = LinExpr::default();
        for (i, r, c, z) in self.matrix_basis(v) {
            // X has z at (r,c) and conj(z) at (c,r).
            let mut val = (z * q[(c, r)]).re;
            if r != c {
                val += (z.conj() * q[(r, c)]).re;
            }
            out.add_term(i, val);
        }
        out
    }

    pub fn trace(&self, v: VarId) -> LinExpr {
        let n = match self.block(v).kind {
            BlockKind::Symmetric(n) | BlockKind::Hermitian(n) => n,
            BlockKind::Scalar => panic!("not a matrix"),
        };
        self.trace_inner(v, &CMatrix::identity(n, n))
    }

    pub fn minimize(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn add_eq(&mut self, label: impl Into<String>, e: LinExpr) {
        self.constraints.push((label.into(), Constraint::Eq(e)));
    }

    pub fn add_nonneg(&mut self, label: impl Into<String>, e: LinExpr) {
        self.constraints.push((label.into(), Constraint::Nonneg(e)));
    }

    pub fn add_psd(&mut self, label: impl Into<String>, e: MatrixExpr) {
        self.constraints.push((label.into(), Constraint::Psd(e)));
    }

    pub fn validate(&self) -> Result<()> {
        let check_lin = |e: &LinExpr| -> Result<()> {
            if !e.constant.is_finite() {
                return Err(Error::Contract("non-finite constant".into()));
            }
            for &(i, c) in &e.terms {
                if i >= self.num_params {
                    return Err(Error::Contract(format!("expression references undeclared parameter {i}")));
                }
                if !c.is_finite() {
                    return Err(Error::Contract("non-finite coefficient".into()));
                }
            }
            Ok(())
        };
        check_lin(&self.objective)?;
        for (label, c) in &self.constraints {
            match c {
                Constraint::Eq(e) | Constraint::Nonneg(e) => check_lin(e),
                Constraint::Psd(m) => m.validate(self.num_params),
            }
            .map_err(|e| Error::Contract(format!("constraint `{label}`: {e}")))?;
        }
        Ok(())
    }

    /// Worst relative violation of all constraints at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rel = |v: f64, scale: f64| v / (1.0 + scale);
        let lin_scale = |e: &LinExpr| {
            e.terms
                .iter()
                .map(|&(i, c)| (c * x[i]).abs())
                .fold(e.constant.abs(), f64::max)
        };
        let mut worst = 0.0f64;
        for (_, c) in &self.constraints {
            let v = match c {
                Constraint::Eq(e) => rel(e.eval(x).abs(), lin_scale(e)),
                Constraint::Nonneg(e) => rel((-e.eval(x)).max(0.0), lin_scale(e)),
                Constraint::Psd(m) => {
                    let s = m.eval(x);
                    let scale = s.iter().map(|z| z.norm()).fold(0.0, f64::max);
                    rel((-linalg::min_eigenvalue(&s)).max(0.0), scale)
                }
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Reads a scalar from a solution vector.
    pub fn scalar_value(&self, v: VarId, x: &[f64]) -> f64 {
        x[self.param(v)]
    }

    /// Reads a matrix block from a solution vector.
    pub fn matrix_value(&self, v: VarId, x: &[f64]) -> CMatrix {
        self.matrix_expr(v).eval(x)
    }

    pub fn solve(&self, tol: f64) -> Result<SolveReport> {
        self.validate()?;
        let n = self.num_params;
        let svec_index = |r: usize, c: usize| c * (c + 1) / 2 + r;

        // Zero cones first, then nonnegatives, then PSD blocks.
        let mut rows_i = Vec::new();
        let mut cols_j = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        let push_lin = |e: &LinExpr, rows_i: &mut Vec<usize>, cols_j: &mut Vec<usize>, vals: &mut Vec<f64>, b: &mut Vec<f64>| {
            let row = b.len();
            b.push(e.constant);
            for &(i, c) in &e.compact().terms {
                rows_i.push(row);
                cols_j.push(i);
                vals.push(-c);
            }
        };
        let eqs: Vec<&LinExpr> = self
            .constraints
            .iter()
            .filter_map(|(_, c)| if let Constraint::Eq(e) = c { Some(e) } else { None })
            .collect();
        if !eqs.is_empty() {
            for e in &eqs {
                push_lin(e, &mut rows_i, &mut cols_j, &mut vals, &mut b);
            }
            cones.push(SupportedConeT::ZeroConeT(eqs.len()));
        }
        let ineqs: Vec<&LinExpr> = self
            .constraints
            .iter()
            .filter_map(|(_, c)| if let Constraint::Nonneg(e) = c { Some(e) } else { None })
            .collect();
        if !ineqs.is_empty() {
            for e in &ineqs {
                push_lin(e, &mut rows_i, &mut cols_j, &mut vals, &mut b);
            }
            cones.push(SupportedConeT::NonnegativeConeT(ineqs.len()));
        }
        for (_, c) in &self.constraints {
            let Constraint::Psd(m) = c else { continue };
            let dim = m.lowered_dim();
            let base = b.len();
            b.extend(std::iter::repeat_n(0.0, dim * (dim + 1) / 2));
            let sv = |r: usize, c: usize, v: f64| -> (usize, f64) {
                let s = if r == c { v } else { v * std::f64::consts::SQRT_2 };
                (base + svec_index(r, c), s)
            };
            for (r, c, v) in m.lower_entries(&m.constant) {
                let (row, s) = sv(r, c, v);
                b[row] += s;
            }
            for (&i, entries) in &m.terms {
                for (r, c, v) in m.lower_entries(entries) {
                    let (row, s) = sv(r, c, v);
                    rows_i.push(row);
                    cols_j.push(i);
                    vals.push(-s);
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(dim));
        }

        let m_rows = b.len();
        let a = CscMatrix::new_from_triplets(m_rows, n, rows_i, cols_j, vals);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(i, c) in &self.objective.compact().terms {
            q[i] += c;
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .tol_feas(tol)
            .max_iter(200)
            .equilibrate_enable(false)
            .chordal_decomposition_enable(false)
            .build()
            .map_err(|e| Error::Solver(format!("settings: {e:?}")))?;

        let start = Instant::now();
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
        solver.solve();
        let elapsed = start.elapsed().as_secs_f64();
        let sol = &solver.solution;
        let x = sol.x.clone();
        let gap = (sol.obj_val - sol.obj_val_dual).abs()
            / (1.0 + sol.obj_val.abs().min(sol.obj_val_dual.abs()));
        let backend_status = format!("{:?}", sol.status);

        let mut report = SolveReport {
            status: SolveStatus::NumericalFailure,
            objective_value: None,
            primal_residual: f64::NAN,
            duality_gap: gap,
            x,
            solve_time: elapsed,
            iterations: sol.iterations,
            backend_status,
        };
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                report.primal_residual = self.max_violation(&report.x);
                // The backend measures residuals on its equilibrated problem, so
                // re-check on the original data with a little headroom.
                let admissible = 1e3 * tol;
                if report.primal_residual <= admissible && gap <= admissible {
                    report.status = SolveStatus::Optimal;
                    report.objective_value = Some(self.objective.eval(&report.x));
                }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                report.status = SolveStatus::Infeasible;
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                report.status = SolveStatus::Unbounded;
            }
            _ => {}
        }
        Ok(report)
    }

    /// Sparse text dump for cross-checking with external solvers.
    ///
    /// ```text
    /// # conic-program v1
    /// params <n>
    /// var <name> <scalar|symmetric|hermitian> <dim> <offset>
    /// objective <constant>
    /// t <param> <coef>
    /// constraint <label> <eq|nonneg>
    /// k <constant>
    /// t <param> <coef>
    /// constraint <label> psd <dim> <real|hermitian>
    /// k <row> <col> <re> <im>
    /// t <param> <row> <col> <re> <im>
    /// end
    /// ```
    /// Matrix entries are upper-triangle; the lower triangle is the conjugate.
    pub fn to_sparse_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# conic-program v1");
        let _ = writeln!(s, "params {}", self.num_params);
        for b in &self.blocks {
            let (kind, dim) = match b.kind {
                BlockKind::Scalar => ("scalar", 1),
                BlockKind::Symmetric(n) => ("symmetric", n),
                BlockKind::Hermitian(n) => ("hermitian", n),
            };
            let _ = writeln!(s, "var {} {kind} {dim} {}", b.name.replace(' ', "_"), b.offset);
        }
        let obj = self.objective.compact();
        let _ = writeln!(s, "objective {:e}", obj.constant);
        for (i, c) in &obj.terms {
            let _ = writeln!(s, "t {i} {c:e}");
        }
        for (label, c) in &self.constraints {
            let label = label.replace(' ', "_");
            match c {
                Constraint::Eq(e) | Constraint::Nonneg(e) => {
                    let kind = if matches!(c, Constraint::Eq(_)) { "eq" } else { "nonneg" };
                    let e = e.compact();
                    let _ = writeln!(s, "constraint {label} {kind}");
                    let _ = writeln!(s, "k {:e}", e.constant);
                    for (i, v) in &e.terms {
                        let _ = writeln!(s, "t {i} {v:e}");
                    }
                }
                Constraint::Psd(m) => {
                    let kind = if m.complex { "hermitian" } else { "real" };
                    let _ = writeln!(s, "constraint {label} psd {} {kind}", m.dim);
                    for (r, col, z) in &m.constant {
                        let _ = writeln!(s, "k {r} {col} {:e} {:e}", z.re, z.im);
                    }
                    for (i, entries) in &m.terms {
                        for (r, col, z) in entries {
                            let _ = writeln!(s, "t {i} {r} {col} {:e} {:e}", z.re, z.im);
                        }
                    }
                }
            }
        }
        s.push_str("end\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn embed_identity_and_pauli() {
        let e = hermitian_embed(&CMatrix::identity(3, 3)).unwrap();
        assert_eq!(e, DMatrix::identity(6, 6));
        let h = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)]);
        let ev = linalg::real_eigenvalues(&hermitian_embed(&h).unwrap());
        let expected = [-1.0, -1.0, 1.0, 1.0];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_rejects_non_hermitian() {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(hermitian_embed(&h), Err(Error::Contract(_))));
    }

    #[test]
    fn lp_lower_bound() {
        let mut prog = ConicProgram::new();
        let x = prog.add_scalar("x");
        let mut e = prog.var(x);
        e.constant = -3.0;
        prog.add_nonneg("x>=3", e);
        prog.minimize(prog.var(x));
        let rep = prog.solve(DEFAULT_TOL).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!((rep.objective_value.unwrap() - 3.0).abs() < 1e-7);
    }

    #[test]
    fn psd_floor() {
        let mut prog = ConicProgram::new();
        let x = prog.add_symmetric("X", 2);
        let mut e = prog.matrix_expr(x);
        e.add_constant(0, 0, c(-1.0, 0.0)).add_constant(1, 1, c(-1.0, 0.0));
        prog.add_psd("X>=I", e);
        prog.minimize(prog.trace(x));
        let rep = prog.solve(DEFAULT_TOL).unwrap();
        assert_eq!(rep.status, SolveStatus::Optimal);
        assert!((rep.objective_value.unwrap() - 2.0).abs() < 1e-7);
    }

    #[test]
    fn hermitian_variable_trace_inner() {
        let mut prog = ConicProgram::new();
        let w = prog.add_hermitian("W", 3);
        let q = CMatrix::from_fn(3, 3, |r, col| c((r + 2 * col) as f64, r as f64 - col as f64));
        let x: Vec<f64> = (0..prog.num_params()).map(|i| (i as f64 * 0.37).sin()).collect();
        let wm = prog.matrix_value(w, &x);
        assert!(linalg::hermitian_defect(&wm) == 0.0);
        let direct = (wm * &q).trace().re;
        assert!((prog.trace_inner(w, &q).eval(&x) - direct).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut prog = ConicProgram::new();
        let x = prog.add_scalar("x");
        prog.add_nonneg("x>=1", { let mut e = prog.var(x); e.constant = -1.0; e });
        prog.add_nonneg("x<=0", prog.var(x).scaled(-1.0));
        prog.minimize(prog.var(x));
        assert_eq!(prog.solve(DEFAULT_TOL).unwrap().status, SolveStatus::Infeasible);

        let mut prog = ConicProgram::new();
        let x = prog.add_scalar("x");
        prog.minimize(prog.var(x));
        prog.add_nonneg("x<=0", prog.var(x).scaled(-1.0));
        assert_eq!(prog.solve(DEFAULT_TOL).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn undeclared_parameter_rejected() {
        let mut prog = ConicProgram::new();
        prog.add_scalar("x");
        prog.add_nonneg("bad", LinExpr::param(5, 1.0));
        assert!(matches!(prog.solve(DEFAULT_TOL), Err(Error::Contract(_))));
    }

    #[test]
    fn sparse_text_header() {
        let mut prog = ConicProgram::new();
        let x = prog.add_hermitian("W", 2);
        prog.add_psd("W psd", prog.matrix_expr(x));
        prog.minimize(prog.trace(x));
        let text = prog.to_sparse_text();
        assert!(text.starts_with("# conic-program v1\nparams 4\nvar W hermitian 2 0\n"));
        assert!(text.contains("constraint W_psd psd 2 hermitian"));
        assert!(text.ends_with("end\n"));
    }

    fn random_hermitian(vals: &[f64], n: usize) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |r, col| c(vals[2 * (r * n + col)], vals[2 * (r * n + col) + 1]));
        linalg::hermitian_part(&a)
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(1000))]

        #[test]
        fn embedding_preserves_psd(vals in proptest::collection::vec(-1.0f64..1.0, 32), shift in -0.5f64..0.5) {
            let h = random_hermitian(&vals, 4);
            let (ev, _) = linalg::hermitian_eigen(&h);
            let h = &h - CMatrix::identity(4, 4).scale(ev[0] + shift);
            let lam = linalg::min_eigenvalue(&h);
            let emb = hermitian_embed(&h).unwrap();
            proptest::prop_assert!((&emb - emb.transpose()).amax() == 0.0);
            let mut ev = linalg::real_eigenvalues(&emb);
            ev.sort_by(f64::total_cmp);
            proptest::prop_assert!((ev[0] - lam).abs() < 1e-9 && (ev[1] - lam).abs() < 1e-9);
            proptest::prop_assert_eq!(ev[0] >= -1e-12, lam >= -1e-12);
        }
    }

    fn min_trace_inner(q: &CMatrix) -> SolveReport {
        let mut prog = ConicProgram::new();
        let w = prog.add_hermitian("W", q.nrows());
        let mut unit = prog.trace(w);
        unit.constant = -1.0;
        prog.add_eq("trace", unit);
        prog.add_psd("W psd", prog.matrix_expr(w));
        prog.minimize(prog.trace_inner(w, q));
        prog.solve(DEFAULT_TOL).unwrap()
    }

    #[test]
    fn random_sdp_matches_eigenvalue_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in [2, 3, 4] {
            for _ in 0..5 {
                let vals: Vec<f64> = (0..2 * n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q = random_hermitian(&vals, n);
                let rep = min_trace_inner(&q);
                assert_eq!(rep.status, SolveStatus::Optimal);
                // independent oracle: smallest eigenvalue from the Hermitian eigensolver
                let (ev, _) = linalg::hermitian_eigen(&q);
                let obj = rep.objective_value.unwrap();
                assert!((obj - ev[0]).abs() <= 1e-6 * (1.0 + ev[0].abs()), "n={n}: {obj} vs {}", ev[0]);
            }
        }
    }

    #[test]
    fn small_sdp_matches_grid_search() {
        // min a x + b y  s.t. [[x, 1], [1, y]] >= 0
        for (a, b) in [(1.0, 1.0), (2.0, 0.5), (0.3, 3.0)] {
            let mut prog = ConicProgram::new();
            let x = prog.add_scalar("x");
            let y = prog.add_scalar("y");
            let mut m = MatrixExpr::real(2);
            m.add_param(prog.param(x), 0, 0, c(1.0, 0.0))
                .add_param(prog.param(y), 1, 1, c(1.0, 0.0))
                .add_constant(0, 1, c(1.0, 0.0));
            prog.add_psd("lmi", m);
            let mut obj = prog.var(x).scaled(a);
            obj.add_scaled(&prog.var(y), b);
            prog.minimize(obj);
            let rep = prog.solve(DEFAULT_TOL).unwrap();
            assert_eq!(rep.status, SolveStatus::Optimal);
            let grid = (1..=200_000)
                .map(|i| i as f64 * 5e-5)
                .map(|x| a * x + b / x)
                .fold(f64::INFINITY, f64::min);
            let obj = rep.objective_value.unwrap();
            assert!((obj - grid).abs() < 1e-6 * grid, "{obj} vs grid {grid}");
        }
    }

    #[test]
    fn solves_are_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let vals: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q = random_hermitian(&vals, 4);
        let a = min_trace_inner(&q);
        let b = min_trace_inner(&q);
        assert_eq!(a.status, b.status);
        assert_eq!(a.iterations, b.iterations);
        assert!((a.objective_value.unwrap() - b.objective_value.unwrap()).abs() <= 1e-12);
        assert_eq!(a.x, b.x);
    }
}
