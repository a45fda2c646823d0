//! Finite-difference solver on the periodic slab: Dirichlet data on the top
//! level, the degenerate first-order equation on the bottom level.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridFunction, SlabGrid};
use crate::linalg::{bicgstab_from, BandMatrix, CsrMatrix};
use crate::operators::{apply_operator, CoefficientField, CoefficientSample};

/// First-derivative discretization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// One-sided differences against the drift; first order, monotone when
    /// the mixed second-order terms are absent.
    Upwind,
    /// Central differences wherever the diffusion weight keeps the
    /// off-diagonal entries nonpositive (`|b_i| h_i <= 2 x_d a^{ii}`),
    /// upwind elsewhere and on the bottom level. Monotone under the same
    /// conditions as `Upwind`.
    #[default]
    Hybrid,
    /// Central differences inside, the three-point one-sided vertical
    /// stencil on the bottom level.
    Central,
}

/// Linear solver selection. `Auto` picks the banded direct solver for
/// `d = 2` and preconditioned BiCGSTAB otherwise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Auto,
    Banded,
    Iterative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdmOptions {
    pub scheme: Scheme,
    pub backend: Backend,
    /// Relative linear residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting iterate for the iterative backend, one value per unknown.
    #[serde(skip)]
    pub initial: Option<Vec<f64>>,
}

impl Default for FdmOptions {
    fn default() -> Self {
        FdmOptions {
            scheme: Scheme::default(),
            backend: Backend::Auto,
            tol: 1e-12,
            max_iter: 5000,
            initial: None,
        }
    }
}

/// Assembled system. Unknowns are the nodes below the top level, ordered
/// level by level; in two dimensions the tangential index is interleaved
/// (0, N-1, 1, N-2, ...) so periodic neighbours stay close to the diagonal.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Grid node of each unknown.
    pub nodes: Vec<usize>,
    scheme: Scheme,
    coeffs: CoefficientField,
    f: GridFunction,
    g_top: Vec<f64>,
}

impl LinearSystem {
    pub fn unknowns(&self) -> usize {
        self.nodes.len()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn grid(&self) -> &SlabGrid {
        self.f.grid()
    }

    /// Grid function from a vector of unknowns, with the top level filled
    /// from the Dirichlet data.
    pub fn scatter(&self, x: &[f64]) -> Result<GridFunction> {
        let grid = self.grid();
        let mut values = vec![0.0; grid.node_count()];
        for (&n, &v) in self.nodes.iter().zip(x) {
            values[n] = v;
        }
        let top = grid.n_vertical() * grid.level_size();
        values[top..].copy_from_slice(&self.g_top);
        GridFunction::new(grid.clone(), values)
    }

    /// Unknown vector of a grid function (top level dropped).
    pub fn gather(&self, u: &GridFunction) -> Vec<f64> {
        self.nodes.iter().map(|&n| u.values()[n]).collect()
    }

    /// `row col value` lines, zero-based.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::with_capacity(self.matrix.nnz() * 32);
        for i in 0..self.matrix.n {
            for (j, v) in self.matrix.row(i) {
                let _ = writeln!(out, "{i} {j} {v:.17e}");
            }
        }
        out
    }
}

fn interleaved(i: usize, n: usize) -> usize {
    if i < n.div_ceil(2) {
        2 * i
    } else {
        2 * (n - 1 - i) + 1
    }
}

/// Stencil entries `(grid node, weight)` of the row for `node`.
fn row_entries(
    grid: &SlabGrid,
    s: &CoefficientSample,
    node: usize,
    scheme: Scheme,
) -> Vec<(usize, f64)> {
    let d = grid.dim();
    let level = grid.level_of(node);
    let ls = grid.level_size() as isize;
    let h: Vec<f64> = (0..d)
        .map(|k| {
            if k + 1 < d {
                grid.h_tangential()
            } else {
                grid.h_vertical()
            }
        })
        .collect();
    let shift = |n: usize, axis: usize, delta: isize| -> usize {
        if axis + 1 < d {
            grid.shift_tangential(n, axis, delta)
        } else {
            (n as isize + delta * ls) as usize
        }
    };
    let mut out = vec![(node, s.c)];
    let drift = |out: &mut Vec<(usize, f64)>, i: usize, diffusion: f64| {
        let (b, hi) = (s.b[i], h[i]);
        let scheme = match scheme {
            Scheme::Hybrid if b.abs() * hi <= 2.0 * diffusion => Scheme::Central,
            Scheme::Hybrid => Scheme::Upwind,
            other => other,
        };
        match scheme {
            Scheme::Upwind | Scheme::Hybrid if b >= 0.0 => {
                out.push((node, b / hi));
                out.push((shift(node, i, 1), -b / hi));
            }
            Scheme::Upwind | Scheme::Hybrid => {
                out.push((node, -b / hi));
                out.push((shift(node, i, -1), b / hi));
            }
            Scheme::Central => {
                out.push((shift(node, i, 1), -b / (2.0 * hi)));
                out.push((shift(node, i, -1), b / (2.0 * hi)));
            }
        }
    };
    if level == 0 {
        for i in 0..d - 1 {
            drift(&mut out, i, 0.0);
        }
        let (b, hv) = (s.b[d - 1], h[d - 1]);
        match scheme {
            Scheme::Upwind | Scheme::Hybrid => {
                out.push((node, b / hv));
                out.push((shift(node, d - 1, 1), -b / hv));
            }
            Scheme::Central => {
                out.push((node, 3.0 * b / (2.0 * hv)));
                out.push((shift(node, d - 1, 1), -4.0 * b / (2.0 * hv)));
                out.push((shift(node, d - 1, 2), b / (2.0 * hv)));
            }
        }
        return out;
    }
    let xd = grid.x_d(level);
    for i in 0..d {
        let w = xd * s.a[(i, i)] / (h[i] * h[i]);
        out.push((node, 2.0 * w));
        out.push((shift(node, i, 1), -w));
        out.push((shift(node, i, -1), -w));
        for j in i + 1..d {
            let w = xd * 2.0 * s.a[(i, j)] / (4.0 * h[i] * h[j]);
            if w == 0.0 {
                continue;
            }
            for (di, dj, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                out.push((shift(shift(node, i, di), j, dj), -sign * w));
            }
        }
        drift(&mut out, i, xd * s.a[(i, i)]);
    }
    out
}

/// Discretizes `A u = f` with `u = g_top` on the top level.
pub fn assemble_system(
    coeffs: &CoefficientField,
    f: &GridFunction,
    g_top: &[f64],
    scheme: Scheme,
) -> Result<LinearSystem> {
    let grid = f.grid();
    let d = grid.dim();
    if coeffs.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: coeffs.dim(),
        });
    }
    if grid.levels() < 3 {
        return Err(Error::GridTooCoarse(format!(
            "{} vertical levels, need at least 3",
            grid.levels()
        )));
    }
    if g_top.len() != grid.level_size() {
        return Err(Error::DimensionMismatch {
            expected: grid.level_size(),
            got: g_top.len(),
        });
    }
    let ls = grid.level_size();
    let nt = grid.n_tangential();
    let mut unknown_of = vec![usize::MAX; grid.node_count()];
    let mut nodes = vec![0; grid.n_vertical() * ls];
    for node in 0..grid.n_vertical() * ls {
        let within = node % ls;
        let pos = if d == 2 {
            interleaved(within, nt)
        } else {
            within
        };
        let u = grid.level_of(node) * ls + pos;
        unknown_of[node] = u;
        nodes[u] = node;
    }

    let rows: Vec<(Vec<(usize, f64)>, f64)> = nodes
        .par_iter()
        .map(|&node| {
            let x = grid.coords(node);
            let s = coeffs.sample(&x);
            if grid.level_of(node) == 0 && s.b[d - 1] <= 0.0 {
                return Err(Error::Hypothesis(format!(
                    "b^d = {} <= 0 at bottom node {:?}",
                    s.b[d - 1],
                    x
                )));
            }
            let mut rhs = f.values()[node];
            let mut row = Vec::new();
            for (n, w) in row_entries(grid, &s, node, scheme) {
                match unknown_of[n] {
                    usize::MAX => rhs -= w * g_top[n % ls],
                    u => row.push((u, w)),
                }
            }
            Ok((row, rhs))
        })
        .collect::<Result<_>>()?;
    let (rows, rhs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(LinearSystem {
        matrix: CsrMatrix::from_rows(rows),
        rhs,
        nodes,
        scheme,
        coeffs: coeffs.clone(),
        f: f.clone(),
        g_top: g_top.to_vec(),
    })
}

/// Outcome of a finite-difference solve.
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub u: GridFunction,
    pub scheme: Scheme,
    pub backend: Backend,
    pub unknowns: usize,
    pub nonzeros: usize,
    /// `|A x - b| / |b|` in the Euclidean norm.
    pub linear_residual: f64,
    /// `apply_operator(u) - f` below the top level.
    pub pde_residual_sup: f64,
    pub pde_residual_l2: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub wall_time_s: f64,
    pub residual_history: Vec<f64>,
}

impl SolveReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: f64 = ax
        .iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bn == 0.0 {
        r
    } else {
        r / bn
    }
}

fn banded_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let (mut kl, mut ku) = (0, 0);
    for i in 0..a.n {
        for (j, _) in a.row(i) {
            kl = kl.max(i.saturating_sub(j));
            ku = ku.max(j.saturating_sub(i));
        }
    }
    let mut band = BandMatrix::zeros(a.n, kl, ku);
    for i in 0..a.n {
        for (j, v) in a.row(i) {
            band.add(i, j, v);
        }
    }
    band.solve(b)
}

/// Solves an assembled system to relative residual `opts.tol`.
pub fn solve_slab_fdm(system: &LinearSystem, opts: &FdmOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let d = system.grid().dim();
    let backend = match opts.backend {
        Backend::Auto if d == 2 => Backend::Banded,
        Backend::Auto => Backend::Iterative,
        b => b,
    };
    let (a, b) = (&system.matrix, &system.rhs);
    let (x, iterations, history) = match backend {
        Backend::Banded => {
            let x = banded_solve(a, b)?;
            let res = relative_residual(a, &x, b);
            if res <= opts.tol {
                (x, 0, vec![res])
            } else {
                let it = bicgstab_from(a, b, &x, opts.tol, opts.max_iter)?;
                (it.x, it.iterations, it.history)
            }
        }
        _ => {
            let x0 = match &opts.initial {
                Some(x0) => x0.clone(),
                None => vec![0.0; a.n],
            };
            let it = bicgstab_from(a, b, &x0, opts.tol, opts.max_iter)?;
            (it.x, it.iterations, it.history)
        }
    };
    let linear_residual = relative_residual(a, &x, b);
    if linear_residual > opts.tol {
        return Err(Error::LinearSolver {
            iterations,
            residual: linear_residual,
            history,
        });
    }
    let u = system.scatter(&x)?;
    let au = apply_operator(&system.coeffs, &u)?;
    let below = system.grid().n_vertical() * system.grid().level_size();
    let diff: Vec<f64> = au.values()[..below]
        .iter()
        .zip(&system.f.values()[..below])
        .map(|(p, q)| (p - q).abs())
        .collect();
    let pde_residual_sup = diff.iter().fold(0.0, |m: f64, v| m.max(*v));
    let pde_residual_l2 = (diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64).sqrt();
    Ok(SolveReport {
        u,
        scheme: system.scheme,
        backend,
        unknowns: system.unknowns(),
        nonzeros: a.nnz(),
        linear_residual,
        pde_residual_sup,
        pde_residual_l2,
        iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
        residual_history: history,
    })
}

/// Assembles and solves in one step.
pub fn solve_fdm(
    coeffs: &CoefficientField,
    f: &GridFunction,
    g_top: &[f64],
    opts: &FdmOptions,
) -> Result<SolveReport> {
    let system = assemble_system(coeffs, f, g_top, opts.scheme)?;
    solve_slab_fdm(&system, opts)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::geometry::make_slab_grid;
    use crate::operators::{heston_coefficients, HestonParams};

    fn iso() -> CoefficientField {
        CoefficientField::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 1.0], 0.0).unwrap()
    }

    #[test]
    fn interleaving_is_a_permutation() {
        for n in [1usize, 2, 5, 8] {
            let mut seen: Vec<usize> = (0..n).map(|i| interleaved(i, n)).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            for i in 0..n {
                let j = (i + 1) % n;
                assert!(interleaved(i, n).abs_diff(interleaved(j, n)) <= 2);
            }
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = make_slab_grid(2, 1.0, 1.0, 16, 16).unwrap();
        let f = GridFunction::zeros(&g);
        let r = solve_fdm(&iso(), &f, &[0.0; 16], &FdmOptions::default()).unwrap();
        assert!(r.u.max_abs() <= 1e-10);
    }

    #[test]
    fn constants_and_affine_are_exact() {
        let g = make_slab_grid(2, 1.0, 1.0, 12, 10).unwrap();
        let field =
            CoefficientField::from_rows(&[&[1.0, 0.3], &[0.3, 0.7]], &[0.4, 1.5], 0.0).unwrap();
        for scheme in [Scheme::Upwind, Scheme::Hybrid, Scheme::Central] {
            let opts = FdmOptions {
                scheme,
                ..Default::default()
            };
            let r = solve_fdm(&field, &GridFunction::zeros(&g), &[1.0; 12], &opts).unwrap();
            assert!(
                r.u.values().iter().all(|v| (v - 1.0).abs() < 1e-10),
                "{scheme:?}"
            );
            let f = GridFunction::from_fn(&g, |_| 1.0);
            let r = solve_fdm(&iso(), &f, &[0.0; 12], &opts).unwrap();
            let err =
                r.u.zip_with(&GridFunction::from_fn(&g, |x| 1.0 - x[1]), |p, q| p - q)
                    .unwrap();
            assert!(err.max_abs() < 1e-10, "{scheme:?}: {}", err.max_abs());
        }
    }

    #[test]
    fn nonpositive_bottom_drift_rejected() {
        use std::sync::Arc;

        use nalgebra::{DMatrix, DVector};

        // the probe grid only sees x_1 in {0, 1/2}, where the drift is positive
        let probe = make_slab_grid(2, 1.0, 1.0, 2, 4).unwrap();
        let field = CoefficientField::variable(
            2,
            "sign-changing drift",
            Arc::new(|x: &[f64]| CoefficientSample {
                a: DMatrix::identity(2, 2),
                b: DVector::from_column_slice(&[0.0, 1.0 + 2.0 * (2.0 * PI * x[0]).sin()]),
                c: 0.0,
            }),
            &probe,
        )
        .unwrap();
        let g = make_slab_grid(2, 1.0, 1.0, 8, 8).unwrap();
        assert!(matches!(
            assemble_system(&field, &GridFunction::zeros(&g), &[0.0; 8], Scheme::Upwind),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn operator_roundtrip_central() {
        let g = make_slab_grid(2, 1.0, 2.0, 32, 32).unwrap();
        let field =
            CoefficientField::from_rows(&[&[1.0, 0.2], &[0.2, 0.8]], &[0.3, 1.2], 0.5).unwrap();
        let exact = |x: &[f64]| (PI * x[0]).sin() * (1.0 - x[1]) + 0.2 * (1.0 - x[1] * x[1]);
        let ustar = GridFunction::from_fn(&g, exact);
        let f = apply_operator(&field, &ustar).unwrap();
        let top: Vec<f64> = ustar.level(g.n_vertical()).to_vec();
        let r = solve_fdm(
            &field,
            &f,
            &top,
            &FdmOptions {
                scheme: Scheme::Central,
                ..Default::default()
            },
        )
        .unwrap();
        let err = r.u.zip_with(&ustar, |p, q| p - q).unwrap().max_abs();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn iterative_matches_banded() {
        let g = make_slab_grid(2, 1.0, 1.0, 16, 16).unwrap();
        let field =
            CoefficientField::from_rows(&[&[1.0, 0.2], &[0.2, 0.8]], &[0.3, 1.2], 0.5).unwrap();
        let f = GridFunction::from_fn(&g, |x| (2.0 * PI * x[0]).cos() + x[1]);
        let top = vec![0.5; 16];
        let a = solve_fdm(&field, &f, &top, &FdmOptions::default()).unwrap();
        let mut opts = FdmOptions {
            backend: Backend::Iterative,
            ..Default::default()
        };
        let b = solve_fdm(&field, &f, &top, &opts).unwrap();
        opts.initial = Some(vec![3.0; 16 * 16]);
        let c = solve_fdm(&field, &f, &top, &opts).unwrap();
        let diff =
            |p: &GridFunction, q: &GridFunction| p.zip_with(q, |s, t| s - t).unwrap().max_abs();
        assert!(diff(&a.u, &b.u) < 1e-9 && diff(&b.u, &c.u) < 1e-9);
        assert!(b.iterations > 0);
    }

    #[test]
    fn three_dimensional_iterative() {
        let g = make_slab_grid(3, 1.0, 1.0, 8, 8).unwrap();
        let field = CoefficientField::from_rows(
            &[&[1.0, 0.0, 0.1], &[0.0, 1.0, 0.0], &[0.1, 0.0, 1.0]],
            &[0.2, -0.1, 1.0],
            0.3,
        )
        .unwrap();
        let f = GridFunction::from_fn(&g, |_| 1.0);
        let r = solve_fdm(&field, &f, &vec![0.0; 64], &FdmOptions::default()).unwrap();
        assert_eq!(r.backend, Backend::Iterative);
        assert!(r.linear_residual <= 1e-12);
        let tangentially_constant = (0..g.levels()).all(|j| {
            let l = r.u.level(j);
            l.iter().all(|v| (v - l[0]).abs() < 1e-9)
        });
        assert!(tangentially_constant);
    }

    #[test]
    fn heston_first_order() {
        let p = HestonParams {
            q: 0.0,
            c0: 0.1,
            kappa: 2.0,
            theta: 0.3,
            sigma: 0.4,
            rho: -0.5,
        };
        let field = heston_coefficients(p).unwrap();
        let l = 1.0;
        let k = 2.0 * PI / l;
        let exact = |x: &[f64]| (k * x[0]).cos() * (1.0 - x[1]);
        let forcing = |x: &[f64]| {
            let (cs, sn, w) = ((k * x[0]).cos(), (k * x[0]).sin(), 1.0 - x[1]);
            let b1 = p.c0 - p.q - 0.5 * x[1];
            let b2 = p.kappa * (p.theta - x[1]);
            -x[1] * (0.5 * (-k * k * cs * w) + p.rho * p.sigma * k * sn)
                + b1 * k * sn * w
                + b2 * cs
                + p.c0 * cs * w
        };
        let errs: Vec<f64> = [16usize, 32]
            .iter()
            .map(|&n| {
                let g = make_slab_grid(2, 1.0, l, n, n).unwrap();
                let f = GridFunction::from_fn(&g, forcing);
                let r = solve_fdm(&field, &f, &vec![0.0; n], &FdmOptions::default()).unwrap();
                r.u.zip_with(&GridFunction::from_fn(&g, exact), |p, q| p - q)
                    .unwrap()
                    .max_abs()
            })
            .collect();
        let rate = (errs[0] / errs[1]).log2();
        assert!(rate > 0.8, "{errs:?}");
    }

    #[test]
    fn coordinate_dump() {
        let g = make_slab_grid(2, 1.0, 1.0, 4, 4).unwrap();
        let s =
            assemble_system(&iso(), &GridFunction::zeros(&g), &[0.0; 4], Scheme::Upwind).unwrap();
        let text = s.to_coordinate_text();
        assert_eq!(text.lines().count(), s.matrix.nnz());
        let first: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
        assert_eq!(first.len(), 3);
    }
}
