//! Compressed sparse row storage and Krylov solvers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("entry ({row}, {col}) is outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is numerically singular at column {column}")]
    Singular { column: usize },
    #[error("{solver} broke down after {iterations} iterations")]
    Breakdown { solver: &'static str, iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Triplet accumulator; duplicates are summed by [`CooBuilder::finalize`].
#[derive(Debug, Clone)]
pub struct CooBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, capacity: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorts triples canonically (row, column, then value) and sums
    /// duplicates, so the result does not depend on insertion order.
    pub fn finalize(mut self) -> Result<CsrMatrix, LinalgError> {
        for &(row, col, value) in &self.entries {
            if row >= self.n_rows || col >= self.n_cols {
                return Err(LinalgError::IndexOutOfRange {
                    row,
                    col,
                    n_rows: self.n_rows,
                    n_cols: self.n_cols,
                });
            }
            if !value.is_finite() {
                return Err(LinalgError::NonFinite { row, col });
            }
        }
        self.entries
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));

        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (row, col, value) in self.entries {
            if last == Some((row, col)) {
                *values.last_mut().unwrap() += value;
            } else {
                col_idx.push(col);
                values.push(value);
                row_ptr[row + 1] += 1;
                last = Some((row, col));
            }
        }
        for r in 0..self.n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from its dense representation, dropping exact zeros.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut coo = CooBuilder::new(n_rows, n_cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(LinalgError::DimensionMismatch {
                    expected: n_cols,
                    found: row.len(),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    coo.push(r, c, v);
                }
            }
        }
        coo.finalize()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates the stored `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|r| self.get(r, r)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, row) in dense.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        dense
    }

    /// Checks the structural invariants of the storage.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.row_ptr.len() != self.n_rows + 1 || self.row_ptr[0] != 0 {
            return Err("row_ptr has the wrong shape".into());
        }
        if *self.row_ptr.last().unwrap() != self.values.len() || self.col_idx.len() != self.values.len() {
            return Err("row_ptr does not end at nnz".into());
        }
        for r in 0..self.n_rows {
            if self.row_ptr[r] > self.row_ptr[r + 1] {
                return Err(format!("row_ptr decreases at row {r}"));
            }
            let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("columns of row {r} not strictly increasing"));
            }
            if cols.iter().any(|&c| c >= self.n_cols) {
                return Err(format!("column index out of range in row {r}"));
            }
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err("non-finite stored value".into());
        }
        Ok(())
    }

    /// `y = A x`, accumulating each row left to right.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<(), LinalgError> {
        if x.len() != self.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_cols,
                found: x.len(),
            });
        }
        if y.len() != self.n_rows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_rows,
                found: y.len(),
            });
        }
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
        Ok(())
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64, LinalgError> {
        let ax = self.spmv(x)?;
        Ok(dot(x, &ax))
    }

    /// Frobenius norm.
    pub fn norm_frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖b - A x‖₂ / ‖b‖₂` (or `‖A x‖₂` when `b = 0`).
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> Result<f64, LinalgError> {
        let ax = self.spmv(x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let nb = norm2(b);
        Ok(if nb > 0.0 { norm2(&r) / nb } else { norm2(&r) })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Preconditioner choice for the Krylov solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precond {
    None,
    #[default]
    Jacobi,
    /// Inverts the 3x3 diagonal blocks of a node-interleaved vector system.
    BlockJacobi3,
}

enum Applied {
    Identity,
    Diagonal(Vec<f64>),
    Blocks(Vec<[[f64; 3]; 3]>),
}

impl Applied {
    fn build(a: &CsrMatrix, kind: Precond) -> Self {
        match kind {
            Precond::None => Applied::Identity,
            Precond::Jacobi => Applied::Diagonal(
                a.diagonal()
                    .into_iter()
                    .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
                    .collect(),
            ),
            Precond::BlockJacobi3 => {
                if !a.n_rows.is_multiple_of(3) {
                    return Self::build(a, Precond::Jacobi);
                }
                let blocks = (0..a.n_rows / 3)
                    .map(|node| {
                        let mut block = [[0.0; 3]; 3];
                        for (i, row) in block.iter_mut().enumerate() {
                            for (j, entry) in row.iter_mut().enumerate() {
                                *entry = a.get(3 * node + i, 3 * node + j);
                            }
                        }
                        invert3(&block).unwrap_or([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
                    })
                    .collect();
                Applied::Blocks(blocks)
            }
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Applied::Identity => z.copy_from_slice(r),
            Applied::Diagonal(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
            Applied::Blocks(blocks) => {
                for (node, b) in blocks.iter().enumerate() {
                    let rr = &r[3 * node..3 * node + 3];
                    for i in 0..3 {
                        z[3 * node + i] = b[i][0] * rr[0] + b[i][1] * rr[1] + b[i][2] * rr[2];
                    }
                }
            }
        }
    }
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    Some([
        [
            c00 * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            c01 * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            c02 * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// True relative residual `‖b - A x‖₂ / ‖b‖₂` of the returned iterate.
    pub final_relative_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub precond: Precond,
}

impl SolverOptions {
    pub fn new(tol: f64, max_iter: usize, precond: Precond) -> Self {
        Self { tol, max_iter, precond }
    }
}

fn check_square(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>) -> Result<(), LinalgError> {
    if a.n_rows != a.n_cols {
        return Err(LinalgError::DimensionMismatch {
            expected: a.n_rows,
            found: a.n_cols,
        });
    }
    if b.len() != a.n_rows {
        return Err(LinalgError::DimensionMismatch {
            expected: a.n_rows,
            found: b.len(),
        });
    }
    if let Some(x0) = x0 {
        if x0.len() != a.n_rows {
            return Err(LinalgError::DimensionMismatch {
                expected: a.n_rows,
                found: x0.len(),
            });
        }
    }
    Ok(())
}

fn true_residual(a: &CsrMatrix, x: &[f64], b: &[f64], r: &mut [f64]) {
    a.spmv_into(x, r).expect("dimensions checked");
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Preconditioned conjugate gradients for symmetric positive definite `A`.
pub fn solve_cg(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    precond: Precond,
) -> Result<(Vec<f64>, SolveStats), LinalgError> {
    solve_cg_from(a, b, None, SolverOptions::new(tol, max_iter, precond))
}

pub fn solve_cg_from(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: SolverOptions,
) -> Result<(Vec<f64>, SolveStats), LinalgError> {
    check_square(a, b, x0)?;
    let n = b.len();
    let b_norm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                final_relative_residual: 0.0,
                converged: true,
            },
        ));
    }
    let pc = Applied::build(a, opts.precond);
    let mut r = vec![0.0; n];
    true_residual(a, &x, b, &mut r);
    let mut res = norm2(&r) / b_norm;
    if res <= opts.tol {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                final_relative_residual: res,
                converged: true,
            },
        ));
    }
    let mut z = vec![0.0; n];
    pc.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        a.spmv_into(&p, &mut ap)?;
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(LinalgError::Breakdown {
                solver: "cg",
                iterations,
            });
        }
        let step = rz / curvature;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        if norm2(&r) / b_norm <= opts.tol {
            // Confirm against the true residual before declaring success.
            true_residual(a, &x, b, &mut r);
            res = norm2(&r) / b_norm;
            if res <= opts.tol {
                return Ok((
                    x,
                    SolveStats {
                        iterations,
                        final_relative_residual: res,
                        converged: true,
                    },
                ));
            }
        }
        pc.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    true_residual(a, &x, b, &mut r);
    res = norm2(&r) / b_norm;
    Ok((
        x,
        SolveStats {
            iterations,
            final_relative_residual: res,
            converged: res <= opts.tol,
        },
    ))
}

/// Right-preconditioned BiCGStab for general nonsingular `A`.
///
/// A breakdown restarts the iteration once from the current iterate; a second
/// breakdown is an error.
pub fn solve_bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    precond: Precond,
) -> Result<(Vec<f64>, SolveStats), LinalgError> {
    solve_bicgstab_from(a, b, None, SolverOptions::new(tol, max_iter, precond))
}

pub fn solve_bicgstab_from(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: SolverOptions,
) -> Result<(Vec<f64>, SolveStats), LinalgError> {
    check_square(a, b, x0)?;
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                final_relative_residual: 0.0,
                converged: true,
            },
        ));
    }
    let pc = Applied::build(a, opts.precond);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    let mut iterations = 0;
    let mut restarts = 0;

    'outer: loop {
        true_residual(a, &x, b, &mut r);
        let res = norm2(&r) / b_norm;
        if res <= opts.tol || iterations >= opts.max_iter {
            return Ok((
                x,
                SolveStats {
                    iterations,
                    final_relative_residual: res,
                    converged: res <= opts.tol,
                },
            ));
        }
        let r_hat = r.clone();
        let mut rho = 1.0;
        let mut alpha = 1.0;
        let mut omega = 1.0;
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut p_hat = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut s_hat = vec![0.0; n];
        let mut t = vec![0.0; n];

        while iterations < opts.max_iter {
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            let breakdown = rho_new == 0.0 || omega == 0.0 || !rho_new.is_finite();
            if breakdown {
                restarts += 1;
                if restarts > 1 {
                    return Err(LinalgError::Breakdown {
                        solver: "bicgstab",
                        iterations,
                    });
                }
                continue 'outer;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            pc.apply(&p, &mut p_hat);
            a.spmv_into(&p_hat, &mut v)?;
            let denom = dot(&r_hat, &v);
            if denom == 0.0 || !denom.is_finite() {
                restarts += 1;
                if restarts > 1 {
                    return Err(LinalgError::Breakdown {
                        solver: "bicgstab",
                        iterations,
                    });
                }
                continue 'outer;
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm2(&s) / b_norm <= opts.tol {
                axpy(alpha, &p_hat, &mut x);
                true_residual(a, &x, b, &mut r);
                let res = norm2(&r) / b_norm;
                if res <= opts.tol {
                    return Ok((
                        x,
                        SolveStats {
                            iterations,
                            final_relative_residual: res,
                            converged: true,
                        },
                    ));
                }
                continue 'outer;
            }
            pc.apply(&s, &mut s_hat);
            a.spmv_into(&s_hat, &mut t)?;
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            axpy(alpha, &p_hat, &mut x);
            axpy(omega, &s_hat, &mut x);
            for i in 0..n {
                r[i] = s[i] - omega * t[i];
            }
            if norm2(&r) / b_norm <= opts.tol {
                // Recompute the true residual; a stale recurrence restarts.
                continue 'outer;
            }
        }
        continue 'outer;
    }
}

/// LU factorisation with partial pivoting of a banded matrix.
///
/// Row `i` is stored over columns `i - kl ..= i + kl + ku`, which leaves room
/// for the fill created by row interchanges. Multipliers stay where they were
/// computed, so solves interleave the interchanges with the forward sweep.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    /// Lower and upper bandwidths of `a`.
    pub fn bandwidths(a: &CsrMatrix) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for r in 0..a.n_rows {
            for (c, _) in a.row(r) {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width + (col + self.kl - row)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self, LinalgError> {
        if a.n_rows != a.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: a.n_rows,
                found: a.n_cols,
            });
        }
        let n = a.n_rows;
        let (kl, ku) = Self::bandwidths(a);
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            piv: vec![0; n],
        };
        for r in 0..n {
            for (c, v) in a.row(r) {
                let k = lu.idx(r, c);
                lu.data[k] = v;
            }
        }
        let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            let last_row = (j + kl).min(n - 1);
            let last_col = (j + kl + ku).min(n - 1);
            let mut p = j;
            let mut best = lu.data[lu.idx(j, j)].abs();
            for r in j + 1..=last_row {
                let v = lu.data[lu.idx(r, j)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || best <= f64::EPSILON * scale * 1e-6 || !best.is_finite() {
                return Err(LinalgError::Singular { column: j });
            }
            lu.piv[j] = p;
            if p != j {
                for c in j..=last_col {
                    let (ij, ip) = (lu.idx(j, c), lu.idx(p, c));
                    lu.data.swap(ij, ip);
                }
            }
            let d = lu.data[lu.idx(j, j)];
            for r in j + 1..=last_row {
                let rj = lu.idx(r, j);
                let l = lu.data[rj] / d;
                lu.data[rj] = l;
                if l != 0.0 {
                    let (row_j, row_r) = (lu.idx(j, j + 1), lu.idx(r, j + 1));
                    let len = last_col - j;
                    for c in 0..len {
                        lu.data[row_r + c] -= l * lu.data[row_j + c];
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut x = b.to_vec();
        for j in 0..n {
            x.swap(j, self.piv[j]);
            let xj = x[j];
            if xj != 0.0 {
                for r in j + 1..=(j + self.kl).min(n - 1) {
                    x[r] -= self.data[self.idx(r, j)] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            let last_col = (j + self.kl + self.ku).min(n - 1);
            let mut acc = x[j];
            for c in j + 1..=last_col {
                acc -= self.data[self.idx(j, c)] * x[c];
            }
            x[j] = acc / self.data[self.idx(j, j)];
        }
        Ok(x)
    }
}

/// Direct banded solve followed by up to three sweeps of iterative
/// refinement. `converged` reports whether the true relative residual meets
/// `tol`; `iterations` counts the solves performed.
pub fn solve_banded(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, SolveStats), LinalgError> {
    check_square(a, b, None)?;
    let lu = BandedLu::factor(a)?;
    let mut x = lu.solve(b)?;
    let b_norm = norm2(b);
    let mut r = vec![0.0; b.len()];
    let mut iterations = 1;
    loop {
        true_residual(a, &x, b, &mut r);
        let res = if b_norm > 0.0 { norm2(&r) / b_norm } else { norm2(&r) };
        if res <= tol || iterations > 3 {
            return Ok((
                x,
                SolveStats {
                    iterations,
                    final_relative_residual: res,
                    converged: res <= tol,
                },
            ));
        }
        let dx = lu.solve(&r)?;
        axpy(1.0, &dx, &mut x);
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finalize_identity() {
        let mut coo = CooBuilder::new(2, 2);
        coo.push(0, 0, 1.0);
        coo.push(1, 1, 1.0);
        assert_eq!(coo.finalize().unwrap(), CsrMatrix::identity(2));
    }

    #[test]
    fn finalize_sums_duplicates() {
        let mut coo = CooBuilder::new(2, 2);
        coo.push(0, 0, 1.0);
        coo.push(0, 0, 2.0);
        let a = coo.finalize().unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 3.0);
        a.check_invariants().unwrap();
    }

    #[test]
    fn finalize_rejects_out_of_range() {
        let mut coo = CooBuilder::new(2, 2);
        coo.push(2, 0, 1.0);
        assert!(matches!(
            coo.finalize(),
            Err(LinalgError::IndexOutOfRange { row: 2, .. })
        ));
    }

    #[test]
    fn spmv_small() {
        assert_eq!(
            CsrMatrix::identity(3).spmv(&[1.0, -2.0, 3.5]).unwrap(),
            vec![1.0, -2.0, 3.5]
        );
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(a.spmv(&[1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
        assert!(matches!(a.spmv(&[1.0]), Err(LinalgError::DimensionMismatch { .. })));
    }

    #[test]
    fn cg_identity_one_iteration() {
        let b = vec![1.0, -4.0, 2.5, 0.25];
        let (x, stats) = solve_cg(&CsrMatrix::identity(4), &b, 1e-12, 40, Precond::None).unwrap();
        assert_eq!(x, b);
        assert_eq!(stats.iterations, 1);
        assert!(stats.converged);
    }

    #[test]
    fn cg_diagonal() {
        let dense: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|j| if i == j { (i + 1) as f64 } else { 0.0 }).collect())
            .collect();
        let a = CsrMatrix::from_dense(&dense).unwrap();
        let (x, stats) = solve_cg(&a, &[1.0; 5], 1e-12, 50, Precond::None).unwrap();
        assert!(stats.converged);
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - 1.0 / (i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_zero_rhs() {
        let (x, stats) = solve_cg(&CsrMatrix::identity(3), &[0.0; 3], 1e-12, 10, Precond::Jacobi).unwrap();
        assert_eq!(x, vec![0.0; 3]);
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn cg_detects_indefinite() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(matches!(
            solve_cg(&a, &[0.0, 1.0], 1e-12, 10, Precond::None),
            Err(LinalgError::Breakdown { solver: "cg", .. })
        ));
    }

    #[test]
    fn bicgstab_identity_and_nonsymmetric() {
        let b = vec![1.0, 2.0, 3.0];
        let (x, stats) = solve_bicgstab(&CsrMatrix::identity(3), &b, 1e-12, 30, Precond::None).unwrap();
        assert!(stats.converged);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
        let a = CsrMatrix::from_dense(&[vec![2.0, -1.0], vec![1.0, 2.0]]).unwrap();
        for precond in [Precond::None, Precond::Jacobi] {
            let (x, stats) = solve_bicgstab(&a, &[1.0, 3.0], 1e-12, 30, precond).unwrap();
            assert!(stats.converged);
            assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn block_jacobi_solves_rotation_dominated_system() {
        // Two nodes, each block = I + 1e6 [e_z]x, weakly coupled.
        let w = 1e6;
        let block = [[1.0, -w, 0.0], [w, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut dense = vec![vec![0.0; 6]; 6];
        for node in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    dense[3 * node + i][3 * node + j] = block[i][j];
                }
            }
        }
        for i in 0..3 {
            dense[i][3 + i] = 0.25;
            dense[3 + i][i] = 0.25;
        }
        let a = CsrMatrix::from_dense(&dense).unwrap();
        let b = [1.0, 0.5, -1.0, 0.2, 0.3, 0.4];
        let (x, stats) = solve_bicgstab(&a, &b, 1e-12, 100, Precond::BlockJacobi3).unwrap();
        assert!(stats.converged);
        assert!(a.relative_residual(&x, &b).unwrap() <= 1e-12);
    }

    #[test]
    fn invert3_roundtrip() {
        let m = [[4.0, 1.0, -2.0], [0.5, 3.0, 1.0], [1.0, -1.0, 5.0]];
        let inv = invert3(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        assert!(invert3(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).is_none());
    }
}
