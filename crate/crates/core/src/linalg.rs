//! Sparse and banded linear solvers used by the finite-difference code.

use crate::error::{Error, Result};

/// Square band matrix with `kl` sub- and `ku` super-diagonals, with room
/// for the fill-in produced by partial pivoting.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` at `(i, j)`; panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "({i}, {j}) outside band ({}, {})",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Gaussian elimination with partial pivoting; consumes the matrix.
    pub fn solve(mut self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut b = rhs.to_vec();
        let reach = self.kl + self.ku;
        let scale = self
            .data
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + reach).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-300 * scale {
                return Err(Error::LinearSolver {
                    iterations: k,
                    residual: f64::INFINITY,
                    history: Vec::new(),
                });
            }
            if p != k {
                for j in k..=last_col {
                    let (sk, sp) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(sk, sp);
                }
                b.swap(k, p);
            }
            let pivot = self.data[self.slot(k, k)];
            for i in k + 1..=last_row {
                let sik = self.slot(i, k);
                let factor = self.data[sik] / pivot;
                if factor == 0.0 {
                    continue;
                }
                self.data[sik] = 0.0;
                // slot(r, j) = r * (width - 1) + kl + j
                let row_k = k * (self.width - 1) + self.kl;
                let row_i = i * (self.width - 1) + self.kl;
                for j in k + 1..=last_col {
                    let src = row_k + j;
                    let dst = row_i + j;
                    let v = self.data[src];
                    if v != 0.0 {
                        self.data[dst] -= factor * v;
                    }
                }
                b[i] -= factor * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut acc = b[k];
            for j in k + 1..=last_col {
                acc -= self.data[self.slot(k, j)] * x[j];
            }
            x[k] = acc / self.data[self.slot(k, k)];
        }
        Ok(x)
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicates are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }
}

/// Incomplete LU factorization with zero fill on the pattern of `a`.
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "ILU(0): missing diagonal in row {i}"
                )));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.cols[k]] = k;
            }
            for k in start..end {
                let j = lu.cols[k];
                if j >= i {
                    break;
                }
                let pivot = lu.vals[diag[j]];
                if pivot == 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "ILU(0): zero pivot in row {j}"
                    )));
                }
                let factor = lu.vals[k] / pivot;
                lu.vals[k] = factor;
                for m in diag[j] + 1..lu.row_ptr[j + 1] {
                    let c = lu.cols[m];
                    let p = pos[c];
                    if p != usize::MAX {
                        lu.vals[p] -= factor * lu.vals[m];
                    }
                }
            }
            for k in start..end {
                pos[lu.cols[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let mut y = r.to_vec();
        for i in 0..n {
            let mut acc = y[i];
            for k in self.lu.row_ptr[i]..self.diag[i] {
                acc -= self.lu.vals[k] * y[self.lu.cols[k]];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                acc -= self.lu.vals[k] * y[self.lu.cols[k]];
            }
            y[i] = acc / self.lu.vals[self.diag[i]];
        }
        y
    }
}

/// Outcome of an iterative solve.
#[derive(Clone, Debug)]
pub struct IterativeResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB with ILU(0). Fails with the residual
/// history if `rel_tol` is not reached.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<IterativeResult> {
    bicgstab_from(a, b, &vec![0.0; a.n], rel_tol, max_iter)
}

/// [`bicgstab`] started from the iterate `x0`.
pub fn bicgstab_from(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<IterativeResult> {
    let n = a.n;
    if x0.len() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if x0.len() != n { x0.len() } else { b.len() },
        });
    }
    let pre = Ilu0::new(a)?;
    let bnorm = norm(b);
    let mut x = x0.to_vec();
    if bnorm == 0.0 {
        return Ok(IterativeResult {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            history: vec![0.0],
        });
    }
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    if norm(&r) / bnorm <= rel_tol {
        let residual = norm(&r) / bnorm;
        return Ok(IterativeResult {
            x,
            iterations: 0,
            residual,
            history: vec![residual],
        });
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut history = vec![norm(&r) / bnorm];
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = pre.apply(&p);
        v = a.mul_vec(&p_hat);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm(&s) / bnorm <= rel_tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            let res = norm(&s) / bnorm;
            history.push(res);
            return Ok(IterativeResult {
                x,
                iterations: it,
                residual: res,
                history,
            });
        }
        let s_hat = pre.apply(&s);
        let t = a.mul_vec(&s_hat);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = norm(&r) / bnorm;
        history.push(res);
        if res <= rel_tol {
            return Ok(IterativeResult {
                x,
                iterations: it,
                residual: res,
                history,
            });
        }
        if !res.is_finite() || omega == 0.0 {
            break;
        }
    }
    let residual = *history.last().unwrap();
    Err(Error::LinearSolver {
        iterations: history.len() - 1,
        residual,
        history,
    })
}
