//! Coefficient models for `A u = -x_d tr(a D^2 u) - b . Du + c u`, the
//! Heston instance, grid application of A, and exact coefficient
//! transforms (shear, isotropizing change of variables, exponential
//! conjugation, differentiated operators).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::{check_stencil_grid, vertical_d1, vertical_d2};
use crate::error::{Error, Result};
use crate::geometry::{make_slab_grid, GridFunction, SlabGrid};

/// Coefficients at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSample {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

pub type SampleFn = Arc<dyn Fn(&[f64]) -> CoefficientSample + Send + Sync>;

#[derive(Clone)]
enum Source {
    Constant(CoefficientSample),
    Variable(SampleFn),
}

/// Operator data `(a, b, c)` with ellipticity and drift floors.
///
/// `lambda0` is the smallest eigenvalue of `a` seen on the sample set, `b0`
/// the smallest `b^d` on the bottom boundary, and `lambda_budget` the sum of
/// coefficient sup norms.
#[derive(Clone)]
pub struct CoefficientField {
    d: usize,
    source: Source,
    lambda0: f64,
    b0: f64,
    lambda_budget: f64,
    label: String,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("CoefficientField");
        s.field("d", &self.d)
            .field("label", &self.label)
            .field("lambda0", &self.lambda0)
            .field("b0", &self.b0)
            .field("lambda_budget", &self.lambda_budget);
        if let Source::Constant(k) = &self.source {
            s.field("a", &k.a).field("b", &k.b).field("c", &k.c);
        }
        s.finish()
    }
}

fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.min()
}

fn check_sample(d: usize, s: &CoefficientSample) -> Result<()> {
    if s.a.nrows() != d || s.a.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: s.a.nrows(),
        });
    }
    if s.b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: s.b.len(),
        });
    }
    let scale = s.a.amax().max(1.0);
    for i in 0..d {
        for j in 0..i {
            if (s.a[(i, j)] - s.a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Hypothesis(format!(
                    "a is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

impl CoefficientField {
    /// Constant coefficients. Requires symmetric positive definite `a` and
    /// `b^d > 0`.
    pub fn constant(a: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        let d = b.len();
        if d < 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: d,
            });
        }
        let sample = CoefficientSample { a, b, c };
        check_sample(d, &sample)?;
        let lambda0 = min_eigenvalue(&sample.a);
        if !(lambda0 > 0.0) {
            return Err(Error::Hypothesis(format!(
                "a is not positive definite (lambda0 = {lambda0})"
            )));
        }
        let b0 = sample.b[d - 1];
        if !(b0 > 0.0) {
            return Err(Error::Hypothesis(format!("b^d = {b0} must be positive")));
        }
        let lambda_budget = sample.a.iter().map(|v| v.abs()).sum::<f64>()
            + sample.b.iter().map(|v| v.abs()).sum::<f64>()
            + c.abs();
        Ok(CoefficientField {
            d,
            source: Source::Constant(sample),
            lambda0,
            b0,
            lambda_budget,
            label: "constant".into(),
        })
    }

    /// Convenience constructor from row slices.
    pub fn from_rows(a: &[&[f64]], b: &[f64], c: f64) -> Result<Self> {
        let d = b.len();
        if a.len() != d || a.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: a.len(),
            });
        }
        CoefficientField::constant(
            DMatrix::from_fn(d, d, |i, j| a[i][j]),
            DVector::from_column_slice(b),
            c,
        )
    }

    /// Variable coefficients; the floors and budget are measured on the
    /// nodes of `probe`.
    pub fn variable(d: usize, label: &str, f: SampleFn, probe: &SlabGrid) -> Result<Self> {
        let mut field = CoefficientField {
            d,
            source: Source::Variable(f),
            lambda0: f64::NAN,
            b0: f64::NAN,
            lambda_budget: f64::NAN,
            label: label.into(),
        };
        field.measure(probe)?;
        Ok(field)
    }

    /// Re-measures `lambda0`, `b0` and the budget on another grid.
    pub fn with_domain(mut self, probe: &SlabGrid) -> Result<Self> {
        if let Source::Variable(_) = self.source {
            self.measure(probe)?;
        }
        Ok(self)
    }

    fn measure(&mut self, probe: &SlabGrid) -> Result<()> {
        if probe.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: probe.dim(),
            });
        }
        let d = self.d;
        let samples: Vec<(f64, CoefficientSample)> = (0..probe.node_count())
            .into_par_iter()
            .map(|n| {
                let x = probe.coords(n);
                (x[d - 1], self.sample(&x))
            })
            .collect();
        let mut lambda0 = f64::INFINITY;
        let mut b0 = f64::INFINITY;
        let mut a_sup = DMatrix::<f64>::zeros(d, d);
        let mut b_sup = vec![0.0f64; d];
        let mut c_sup = 0.0f64;
        for (xd, s) in &samples {
            check_sample(d, s)?;
            lambda0 = lambda0.min(min_eigenvalue(&s.a));
            if *xd == 0.0 {
                b0 = b0.min(s.b[d - 1]);
            }
            for (m, v) in a_sup.iter_mut().zip(s.a.iter()) {
                *m = m.max(v.abs());
            }
            for (m, v) in b_sup.iter_mut().zip(s.b.iter()) {
                *m = m.max(v.abs());
            }
            c_sup = c_sup.max(s.c.abs());
        }
        if !(lambda0 > 0.0) {
            return Err(Error::Hypothesis(format!(
                "a is not positive definite (sampled lambda0 = {lambda0})"
            )));
        }
        if !(b0 > 0.0) {
            return Err(Error::Hypothesis(format!(
                "b^d must be positive on x_d = 0 (sampled b0 = {b0})"
            )));
        }
        self.lambda0 = lambda0;
        self.b0 = b0;
        self.lambda_budget = a_sup.iter().sum::<f64>() + b_sup.iter().sum::<f64>() + c_sup;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }
    pub fn b0(&self) -> f64 {
        self.b0
    }
    pub fn lambda_budget(&self) -> f64 {
        self.lambda_budget
    }
    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn is_constant(&self) -> bool {
        matches!(self.source, Source::Constant(_))
    }

    pub fn sample(&self, x: &[f64]) -> CoefficientSample {
        match &self.source {
            Source::Constant(s) => s.clone(),
            Source::Variable(f) => f(x),
        }
    }

    /// The constant `(a, b, c)`, or an error for variable fields.
    pub fn constant_parts(&self) -> Result<&CoefficientSample> {
        match &self.source {
            Source::Constant(s) => Ok(s),
            Source::Variable(_) => Err(Error::InvalidArgument(format!(
                "operation needs constant coefficients, got '{}'",
                self.label
            ))),
        }
    }

    /// Same field with `c = 0`.
    pub fn without_zeroth_order(&self) -> CoefficientField {
        let mut out = self.clone();
        match &self.source {
            Source::Constant(s) => {
                let mut s = s.clone();
                out.lambda_budget -= s.c.abs();
                s.c = 0.0;
                out.source = Source::Constant(s);
            }
            Source::Variable(f) => {
                let f = f.clone();
                out.source = Source::Variable(Arc::new(move |x| {
                    let mut s = f(x);
                    s.c = 0.0;
                    s
                }));
            }
        }
        out
    }

    /// Smallest `c` on the nodes of `grid`.
    pub fn min_c(&self, grid: &SlabGrid) -> f64 {
        (0..grid.node_count())
            .into_par_iter()
            .map(|n| self.sample(&grid.coords(n)).c)
            .reduce(|| f64::INFINITY, f64::min)
    }
}

/// Heston parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub q: f64,
    pub c0: f64,
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub rho: f64,
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.q.is_finite()
            && self.c0 >= 0.0
            && self.kappa > 0.0
            && self.theta > 0.0
            && self.sigma != 0.0
            && self.sigma.is_finite()
            && self.rho > -1.0
            && self.rho < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Hypothesis(format!(
                "invalid Heston parameters {self:?}"
            )))
        }
    }
}

/// The Heston operator in variables `(x1, x2)`, `x2` the variance.
///
/// The floors are measured on `x2` in `[0, 1]`; use
/// [`CoefficientField::with_domain`] for other slabs.
pub fn heston_coefficients(p: HestonParams) -> Result<CoefficientField> {
    p.validate()?;
    let a = DMatrix::from_row_slice(
        2,
        2,
        &[
            0.5,
            0.5 * p.rho * p.sigma,
            0.5 * p.rho * p.sigma,
            0.5 * p.sigma * p.sigma,
        ],
    );
    let f: SampleFn = Arc::new(move |x: &[f64]| CoefficientSample {
        a: a.clone(),
        b: DVector::from_column_slice(&[p.c0 - p.q - 0.5 * x[1], p.kappa * (p.theta - x[1])]),
        c: p.c0,
    });
    let probe = make_slab_grid(2, 1.0, 1.0, 2, 32)?;
    CoefficientField::variable(2, "heston", f, &probe)
}

/// Coefficients as written in JSON configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSpec {
    Constant {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: f64,
    },
    Heston(HestonParams),
    /// Diagonal `a` and drift modulated by `1 + amplitude * sin(...)` along
    /// the first tangential axis; `c` stays nonnegative.
    Oscillating {
        a_diag: Vec<f64>,
        b: Vec<f64>,
        c: f64,
        amplitude: f64,
        period: f64,
    },
}

impl CoefficientSpec {
    /// Builds the field; variable fields are measured on `probe`.
    pub fn build(&self, probe: &SlabGrid) -> Result<CoefficientField> {
        match self {
            CoefficientSpec::Constant { a, b, c } => {
                let rows: Vec<&[f64]> = a.iter().map(|r| r.as_slice()).collect();
                CoefficientField::from_rows(&rows, b, *c)
            }
            CoefficientSpec::Heston(p) => heston_coefficients(*p)?.with_domain(probe),
            CoefficientSpec::Oscillating {
                a_diag,
                b,
                c,
                amplitude,
                period,
            } => oscillating_coefficients(a_diag, b, *c, *amplitude, *period, probe),
        }
    }
}

/// Smooth variable coefficients with diagonal `a` (see
/// [`CoefficientSpec::Oscillating`]).
pub fn oscillating_coefficients(
    a_diag: &[f64],
    b: &[f64],
    c: f64,
    amplitude: f64,
    period: f64,
    probe: &SlabGrid,
) -> Result<CoefficientField> {
    let d = b.len();
    if a_diag.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: a_diag.len(),
        });
    }
    if !(amplitude.abs() < 1.0) || !(period > 0.0) || c < 0.0 {
        return Err(Error::Hypothesis(format!(
            "oscillating family needs |amplitude| < 1, period > 0, c >= 0 (got {amplitude}, {period}, {c})"
        )));
    }
    let a_diag = a_diag.to_vec();
    let b = b.to_vec();
    let k = std::f64::consts::TAU / period;
    let f: SampleFn = Arc::new(move |x: &[f64]| {
        let xd = x[d - 1];
        let phase = k * x[0];
        let a = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                a_diag[i] * (1.0 + amplitude * (phase + i as f64).sin() * (1.0 + xd).cos().abs())
            } else {
                0.0
            }
        });
        let bv = DVector::from_fn(d, |i, _| {
            b[i] * (1.0 + amplitude * (phase + 0.5 * xd).cos())
        });
        CoefficientSample {
            a,
            b: bv,
            c: c * (1.0 + amplitude * (2.0 * phase).sin()),
        }
    });
    CoefficientField::variable(d, "oscillating", f, probe)
}

/// Applies `-x_d a^{ij} D_ij - sum_i beta^i D_i + c` given pointwise
/// coefficients `(a, beta, c)` and derivative grids.
fn combine(
    grid: &SlabGrid,
    coeff_at: impl Fn(&[f64]) -> CoefficientSample + Sync,
    first: &[Vec<f64>],
    second: &[Vec<Vec<f64>>],
    u: &[f64],
) -> Vec<f64> {
    let d = grid.dim();
    (0..grid.node_count())
        .into_par_iter()
        .map(|n| {
            let x = grid.coords(n);
            let s = coeff_at(&x);
            let xd = x[d - 1];
            let mut acc = s.c * u[n];
            for i in 0..d {
                acc -= s.b[i] * first[i][n];
                if xd != 0.0 {
                    for j in 0..d {
                        acc -= xd * s.a[(i, j)] * second[i.min(j)][i.max(j) - i.min(j)][n];
                    }
                }
            }
            acc
        })
        .collect()
}

/// All first and second derivative grids; `second[i][j - i]` is `D_{ij}`
/// for `j >= i`.
fn derivative_grids(u: &GridFunction) -> Result<(Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)> {
    let grid = u.grid();
    check_stencil_grid(grid)?;
    let d = grid.dim();
    let m = grid.level_size();
    let last = grid.n_vertical();
    let v = u.values();
    let ht = grid.h_tangential();
    let hv = grid.h_vertical();
    let d1 = |w: &[f64], axis: usize| -> Vec<f64> {
        (0..grid.node_count())
            .into_par_iter()
            .map(|n| {
                if axis == d - 1 {
                    let (j, t) = (n / m, n % m);
                    vertical_d1(|k| w[k * m + t], j, last, hv)
                } else {
                    (w[grid.shift_tangential(n, axis, 1)] - w[grid.shift_tangential(n, axis, -1)])
                        / (2.0 * ht)
                }
            })
            .collect()
    };
    let first: Vec<Vec<f64>> = (0..d).map(|i| d1(v, i)).collect();
    let mut second = Vec::with_capacity(d);
    for i in 0..d {
        let mut row = Vec::with_capacity(d - i);
        for j in i..d {
            if i == j {
                let col: Vec<f64> = (0..grid.node_count())
                    .into_par_iter()
                    .map(|n| {
                        if i == d - 1 {
                            let (l, t) = (n / m, n % m);
                            vertical_d2(|k| v[k * m + t], l, last, hv)
                        } else {
                            (v[grid.shift_tangential(n, i, 1)] - 2.0 * v[n]
                                + v[grid.shift_tangential(n, i, -1)])
                                / (ht * ht)
                        }
                    })
                    .collect();
                row.push(col);
            } else {
                row.push(d1(&first[i], j));
            }
        }
        second.push(row);
    }
    Ok((first, second))
}

/// Grid evaluation of `A u`: central differences inside, second-order
/// one-sided differences at `x_d = 0` and `x_d = nu`, periodic tangentially.
/// The second-order term is dropped exactly on the bottom level.
pub fn apply_operator(coeffs: &CoefficientField, u: &GridFunction) -> Result<GridFunction> {
    if coeffs.dim() != u.grid().dim() {
        return Err(Error::DimensionMismatch {
            expected: coeffs.dim(),
            got: u.grid().dim(),
        });
    }
    let (first, second) = derivative_grids(u)?;
    let out = combine(u.grid(), |x| coeffs.sample(x), &first, &second, u.values());
    GridFunction::new(u.grid().clone(), out)
}

/// Differentiated operator `A_(l) v = -x_d a^{ij} v_ij - sum_{i != d} (b^i +
/// 2 l a^{id}) v_i - (b^d + l a^{dd}) v_d + c v` for constant coefficients,
/// with the same stencils as [`apply_operator`]. It satisfies
/// `D^beta (A u) = A_(beta_d) D^beta u - beta_d sum_{i,j<d} a^{ij}
/// D^{beta - e_d} u_ij`.
pub fn commuted_operator_apply(
    coeffs: &CoefficientField,
    l: usize,
    u: &GridFunction,
) -> Result<GridFunction> {
    let s = commuted_coefficients(coeffs, l)?;
    let (first, second) = derivative_grids(u)?;
    let out = combine(u.grid(), |_| s.clone(), &first, &second, u.values());
    GridFunction::new(u.grid().clone(), out)
}

/// Coefficients of `A_(l)` as a plain sample (the drift may lose its sign
/// floor, so no field invariants are imposed).
pub fn commuted_coefficients(coeffs: &CoefficientField, l: usize) -> Result<CoefficientSample> {
    let base = coeffs.constant_parts()?;
    let d = coeffs.dim();
    let lf = l as f64;
    let mut s = base.clone();
    for i in 0..d - 1 {
        s.b[i] += 2.0 * lf * base.a[(i, d - 1)];
    }
    s.b[d - 1] += lf * base.a[(d - 1, d - 1)];
    Ok(s)
}

/// Pointwise finite-difference evaluation of the operator with coefficients
/// `s` on a smooth function, step `h`: central differences (4-point cross
/// stencil for mixed terms), switching to one-sided second-order vertical
/// stencils when `x_d < h`.
pub fn apply_at(s: &CoefficientSample, u: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> f64 {
    let d = x.len();
    let xd = x[d - 1];
    let one_sided = xd < h;
    let mut p = x.to_vec();
    let mut eval = |shifts: &[(usize, f64)]| -> f64 {
        p.copy_from_slice(x);
        for &(k, t) in shifts {
            p[k] += t;
        }
        u(&p)
    };
    let u0 = eval(&[]);
    let mut first = vec![0.0; d];
    for i in 0..d {
        first[i] = if i == d - 1 && one_sided {
            (-3.0 * u0 + 4.0 * eval(&[(i, h)]) - eval(&[(i, 2.0 * h)])) / (2.0 * h)
        } else {
            (eval(&[(i, h)]) - eval(&[(i, -h)])) / (2.0 * h)
        };
    }
    let mut acc = s.c * u0;
    for i in 0..d {
        acc -= s.b[i] * first[i];
    }
    if xd == 0.0 {
        return acc;
    }
    let last = d - 1;
    for i in 0..d {
        for j in 0..d {
            let aij = s.a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            let dij = if i == j {
                if i == last && one_sided {
                    (2.0 * u0 - 5.0 * eval(&[(i, h)]) + 4.0 * eval(&[(i, 2.0 * h)])
                        - eval(&[(i, 3.0 * h)]))
                        / (h * h)
                } else {
                    (eval(&[(i, h)]) - 2.0 * u0 + eval(&[(i, -h)])) / (h * h)
                }
            } else if one_sided && (i == last || j == last) {
                let t = if i == last { j } else { i };
                let dt = |e: &mut dyn FnMut(&[(usize, f64)]) -> f64, v: f64| {
                    (e(&[(t, h), (last, v)]) - e(&[(t, -h), (last, v)])) / (2.0 * h)
                };
                (-3.0 * dt(&mut eval, 0.0) + 4.0 * dt(&mut eval, h) - dt(&mut eval, 2.0 * h))
                    / (2.0 * h)
            } else {
                (eval(&[(i, h), (j, h)]) - eval(&[(i, h), (j, -h)]) - eval(&[(i, -h), (j, h)])
                    + eval(&[(i, -h), (j, -h)]))
                    / (4.0 * h * h)
            };
            acc -= xd * aij * dij;
        }
    }
    acc
}

/// Coefficients after the shear `y = x + xi x_d` (`xi_d = 0`), so that
/// `A u(x) = A~ v(y)` with `v(y) = u(x)`.
pub fn shear_coefficients(coeffs: &CoefficientField, xi: &[f64]) -> Result<CoefficientField> {
    let s = coeffs.constant_parts()?;
    let d = coeffs.dim();
    if xi.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: xi.len(),
        });
    }
    if xi[d - 1] != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "shear needs xi_d = 0, got {}",
            xi[d - 1]
        )));
    }
    let map = AffineMap::shear(xi);
    let a = &map.matrix * &s.a * map.matrix.transpose();
    let b = &map.matrix * &s.b;
    let mut out = CoefficientField::constant(symmetrize(a), b, s.c)?;
    out.label = format!("{}+shear", coeffs.label);
    Ok(out)
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Linear map `y = J x` of the closed half-space onto itself (it fixes
/// `x_d = 0` and scales `x_d`).
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
}

impl AffineMap {
    pub fn identity(d: usize) -> Self {
        AffineMap {
            matrix: DMatrix::identity(d, d),
        }
    }

    pub fn shear(xi: &[f64]) -> Self {
        let d = xi.len();
        let mut m = DMatrix::identity(d, d);
        for i in 0..d - 1 {
            m[(i, d - 1)] = xi[i];
        }
        AffineMap { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x))
            .iter()
            .copied()
            .collect()
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        self.matrix
            .clone()
            .try_inverse()
            .map(|matrix| AffineMap { matrix })
            .ok_or_else(|| Error::InvalidArgument("singular map".into()))
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &AffineMap) -> AffineMap {
        AffineMap {
            matrix: &self.matrix * &first.matrix,
        }
    }

    /// Scale of the vertical coordinate, `y_d = t x_d`.
    pub fn vertical_scale(&self) -> f64 {
        let d = self.dim();
        self.matrix[(d - 1, d - 1)]
    }

    /// Tangential block `L` of `y' = L x' + w x_d`.
    pub fn tangential_block(&self) -> DMatrix<f64> {
        let d = self.dim();
        self.matrix.view((0, 0), (d - 1, d - 1)).into_owned()
    }

    /// Column `w` of `y' = L x' + w x_d`.
    pub fn tilt(&self) -> DVector<f64> {
        let d = self.dim();
        self.matrix
            .view((0, d - 1), (d - 1, 1))
            .column(0)
            .into_owned()
    }
}

/// Output of [`isotropize`].
#[derive(Clone, Debug)]
pub struct Isotropized {
    pub coeffs: CoefficientField,
    pub map: AffineMap,
    /// Shear vector `xi'` with `xi_i = -a^{id} / a^{dd}`.
    pub shear: Vec<f64>,
    /// Tangential change `L` with `L S L^T = I / a^{dd}`, S the Schur
    /// complement of `a^{dd}`.
    pub tangential: DMatrix<f64>,
    /// Vertical factor `t = 1 / a^{dd}`.
    pub vertical_scale: f64,
}

/// Three-stage change of variables taking constant `a` to the identity:
/// shear away the mixed tangential-normal terms, normalize the tangential
/// block, rescale `x_d`. The map is `y' = L (x' + xi' x_d)`, `y_d = t x_d`.
pub fn isotropize(coeffs: &CoefficientField) -> Result<Isotropized> {
    let s = coeffs.constant_parts()?;
    let d = coeffs.dim();
    let add = s.a[(d - 1, d - 1)];
    let t = 1.0 / add;
    let mut xi = vec![0.0; d];
    for i in 0..d - 1 {
        xi[i] = -s.a[(i, d - 1)] / add;
    }
    let shear = AffineMap::shear(&xi);
    let sheared = &shear.matrix * &s.a * shear.matrix.transpose();
    let schur = symmetrize(sheared.view((0, 0), (d - 1, d - 1)).into_owned());
    let chol = schur
        .cholesky()
        .ok_or_else(|| Error::Hypothesis("a is not positive definite".into()))?;
    let r_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Hypothesis("a is not positive definite".into()))?;
    let l = r_inv * t.sqrt();
    let mut scale = DMatrix::zeros(d, d);
    scale.view_mut((0, 0), (d - 1, d - 1)).copy_from(&l);
    scale[(d - 1, d - 1)] = t;
    let map = AffineMap { matrix: scale }.compose(&shear);
    let b = &map.matrix * &s.b;
    let mut out = CoefficientField::constant(DMatrix::identity(d, d), b, s.c)?;
    out.label = format!("{}+isotropic", coeffs.label);
    xi.truncate(d - 1);
    Ok(Isotropized {
        coeffs: out,
        map,
        shear: xi,
        tangential: l,
        vertical_scale: t,
    })
}

/// Coefficients of `A~ v = e^{sigma x_d} A(e^{-sigma x_d} v)`:
/// `b~^i = b^i - 2 sigma x_d a^{id}`, `c~ = c + sigma b^d - sigma^2 x_d
/// a^{dd}`. The result always has variable coefficients. With the full
/// second-order coefficient `x_d a`, this is the non-degenerate form
/// `b^i - 2 sigma a^{id}`, `c + sigma b^d - sigma^2 a^{dd}`; on `x_d = 0`
/// the zeroth-order coefficient is `c + sigma b^d`.
pub fn exponential_transform(coeffs: &CoefficientField, sigma: f64) -> Result<CoefficientField> {
    let d = coeffs.dim();
    let base = coeffs.clone();
    let f: SampleFn = Arc::new(move |x: &[f64]| {
        let mut s = base.sample(x);
        let xd = x[d - 1];
        s.c += sigma * s.b[d - 1] - sigma * sigma * xd * s.a[(d - 1, d - 1)];
        for i in 0..d {
            s.b[i] -= 2.0 * sigma * xd * s.a[(i, d - 1)];
        }
        s
    });
    Ok(CoefficientField {
        d,
        source: Source::Variable(f),
        lambda0: coeffs.lambda0,
        b0: coeffs.b0,
        lambda_budget: coeffs.lambda_budget,
        label: format!("{}+exp({sigma})", coeffs.label),
    })
}

/// Constants of the weak maximum principle on a slab of height `nu`:
/// `Lambda = sup x_d a^{dd}`, `b0 = inf b^d`, `sigma = b0 / (2 Lambda)` and
/// the estimate constant `4 Lambda e^{sigma nu} / b0^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleConstants {
    pub lambda: f64,
    pub b0: f64,
    pub sigma: f64,
    pub constant: f64,
}

pub fn max_principle_constant(lambda: f64, b0: f64, nu: f64) -> MaxPrincipleConstants {
    let sigma = b0 / (2.0 * lambda);
    MaxPrincipleConstants {
        lambda,
        b0,
        sigma,
        constant: 4.0 * lambda * (sigma * nu).exp() / (b0 * b0),
    }
}

/// Measures the maximum-principle constants on the nodes of `grid`.
pub fn max_principle_constants(
    coeffs: &CoefficientField,
    grid: &SlabGrid,
) -> Result<MaxPrincipleConstants> {
    let d = grid.dim();
    let (lambda, b0) = (0..grid.node_count())
        .into_par_iter()
        .map(|n| {
            let x = grid.coords(n);
            let s = coeffs.sample(&x);
            (x[d - 1] * s.a[(d - 1, d - 1)], s.b[d - 1])
        })
        .reduce(|| (0.0, f64::INFINITY), |p, q| (p.0.max(q.0), p.1.min(q.1)));
    if !(b0 > 0.0) {
        return Err(Error::Hypothesis(format!(
            "inf b^d = {b0} must be positive on the slab"
        )));
    }
    Ok(max_principle_constant(lambda, b0, grid.nu()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso2(b: [f64; 2], c: f64) -> CoefficientField {
        CoefficientField::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]], &b, c).unwrap()
    }

    #[test]
    fn constants_annihilated() {
        let g = make_slab_grid(2, 1.0, 2.0, 8, 8).unwrap();
        let u = GridFunction::from_fn(&g, |_| 1.0);
        let au = apply_operator(&iso2([0.3, 1.0], 0.0), &u).unwrap();
        assert!(au.max_abs() < 1e-12);
    }

    #[test]
    fn quadratic_in_xd() {
        let g = make_slab_grid(2, 1.0, 2.0, 8, 8).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[1] * x[1]);
        let au = apply_operator(&iso2([0.0, 1.0], 0.0), &u).unwrap();
        for n in 0..g.node_count() {
            let xd = g.coords(n)[1];
            assert!((au.values()[n] + 4.0 * xd).abs() < 1e-10, "{xd}");
        }
    }

    #[test]
    fn heston_linear_function() {
        let p = HestonParams {
            q: 0.02,
            c0: 0.1,
            kappa: 2.0,
            theta: 0.3,
            sigma: 0.4,
            rho: -0.5,
        };
        let h = heston_coefficients(p).unwrap();
        assert!((h.b0() - 0.6).abs() < 1e-15);
        let g = make_slab_grid(2, 1.0, 1.0, 8, 8).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[1]);
        let au = apply_operator(&h, &u).unwrap();
        for n in 0..g.node_count() {
            let x2 = g.coords(n)[1];
            assert!((au.values()[n] - (-2.0 * (0.3 - x2) + 0.1 * x2)).abs() < 1e-12);
        }
    }

    #[test]
    fn heston_floors() {
        let base = HestonParams {
            q: 0.0,
            c0: 0.0,
            kappa: 2.0,
            theta: 0.3,
            sigma: 1.0,
            rho: 0.0,
        };
        let h = heston_coefficients(base).unwrap();
        assert!((h.lambda0() - 0.5).abs() < 1e-14);
        let h = heston_coefficients(HestonParams {
            sigma: 2.0,
            rho: 0.5,
            ..base
        })
        .unwrap();
        let a = h.sample(&[0.0, 0.0]).a;
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 2.0]));
        let exact = (2.5 - (1.5f64 * 1.5 + 1.0).sqrt()) / 2.0;
        assert!((h.lambda0() - exact).abs() < 1e-14);
        assert!((h.lambda0() - 0.3486).abs() < 1e-4);
        assert!(heston_coefficients(HestonParams { rho: 1.0, ..base }).is_err());
        assert!(heston_coefficients(HestonParams { sigma: 0.0, ..base }).is_err());
    }

    #[test]
    fn shear_examples() {
        let f = CoefficientField::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]], &[2.0, 4.0], 0.0).unwrap();
        let s = shear_coefficients(&f, &[-0.5, 0.0]).unwrap();
        let k = s.constant_parts().unwrap();
        assert!((k.b[0]).abs() < 1e-15 && (k.b[1] - 4.0).abs() < 1e-15);
        assert!((k.a[(0, 0)] - 1.25).abs() < 1e-15);
        assert!((k.a[(0, 1)] + 0.5).abs() < 1e-15);
        let same = shear_coefficients(&f, &[0.0, 0.0]).unwrap();
        assert_eq!(same.constant_parts().unwrap(), f.constant_parts().unwrap());
        assert!(shear_coefficients(&f, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn isotropize_examples() {
        let f = CoefficientField::from_rows(&[&[1.0, 0.0], &[0.0, 4.0]], &[0.0, 1.0], 0.0).unwrap();
        let iso = isotropize(&f).unwrap();
        assert!((iso.vertical_scale - 0.25).abs() < 1e-15);
        assert!((iso.tangential[(0, 0)] - 0.5).abs() < 1e-15);
        let k = iso.coeffs.constant_parts().unwrap();
        assert!((k.b[1] - 0.25).abs() < 1e-15);
        let id = isotropize(&iso2([0.3, 1.0], 0.5)).unwrap();
        assert_eq!(id.map, AffineMap::identity(2));
        let diag =
            CoefficientField::from_rows(&[&[3.0, 0.0], &[0.0, 1.0]], &[0.0, 1.0], 0.0).unwrap();
        let iso = isotropize(&diag).unwrap();
        assert_eq!(iso.vertical_scale, 1.0);
        assert!(iso.shear.iter().all(|&v| v == 0.0));
        assert!((iso.tangential[(0, 0)] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exponential_examples() {
        let f = iso2([0.0, 1.0], 0.0);
        let e = exponential_transform(&f, 0.0).unwrap();
        assert_eq!(e.sample(&[0.3, 0.7]), f.sample(&[0.3, 0.7]));
        let e = exponential_transform(&f, 0.5).unwrap();
        assert!((e.sample(&[0.0, 1.0]).c - 0.25).abs() < 1e-15);
        assert!((e.sample(&[0.0, 0.0]).c - 0.5).abs() < 1e-15);
    }

    #[test]
    fn commuted_examples() {
        let f = iso2([0.0, 1.0], 0.0);
        let g = make_slab_grid(2, 1.0, 2.0, 8, 8).unwrap();
        let v = GridFunction::from_fn(&g, |x| 2.0 * x[1]);
        let w = commuted_operator_apply(&f, 1, &v).unwrap();
        assert!(w.values().iter().all(|x| (x + 4.0).abs() < 1e-12));
        let u = GridFunction::from_fn(&g, |x| (std::f64::consts::PI * x[0]).sin() * x[1]);
        let a0 = apply_operator(&f, &u).unwrap();
        let a1 = commuted_operator_apply(&f, 0, &u).unwrap();
        assert_eq!(a0, a1);
        let one = GridFunction::from_fn(&g, |_| 3.0);
        assert!(commuted_operator_apply(&f, 2, &one).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn max_principle_constant_example() {
        let k = max_principle_constant(1.0, 1.0, 1.0);
        assert!((k.constant - 4.0 * 0.5f64.exp()).abs() < 1e-14);
        assert!((k.constant - 6.5949).abs() < 1e-4);
    }

    #[test]
    fn spec_json() {
        let g = make_slab_grid(2, 1.0, 1.0, 4, 4).unwrap();
        let spec: CoefficientSpec = serde_json::from_str(
            r#"{"heston": {"q": 0, "c0": 0.1, "kappa": 2, "theta": 0.3, "sigma": 0.4, "rho": -0.5}}"#,
        )
        .unwrap();
        assert_eq!(spec.build(&g).unwrap().label(), "heston");
        let bad: CoefficientSpec =
            serde_json::from_str(r#"{"constant": {"a": [[1,0],[0,1]], "b": [0, 0], "c": 0}}"#)
                .unwrap();
        assert!(matches!(bad.build(&g), Err(Error::Hypothesis(_))));
    }
}
