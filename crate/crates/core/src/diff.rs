//! Finite-difference derivatives of grid functions.
//!
//! Tangential axes use periodic central differences. The vertical axis uses
//! central differences inside and second-order one-sided stencils at both
//! ends.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{GridFunction, SlabGrid};

fn check_axis(grid: &SlabGrid, axis: usize) -> Result<()> {
    if axis >= grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for d = {}",
            grid.dim()
        )));
    }
    Ok(())
}

/// Rejects grids whose stencils would overlap themselves.
pub fn check_stencil_grid(grid: &SlabGrid) -> Result<()> {
    if grid.n_tangential() < 3 {
        return Err(Error::GridTooCoarse(format!(
            "{} tangential nodes, need at least 3",
            grid.n_tangential()
        )));
    }
    if grid.levels() < 3 {
        return Err(Error::GridTooCoarse(format!(
            "{} vertical levels, need at least 3",
            grid.levels()
        )));
    }
    Ok(())
}

/// Vertical first derivative at `level`, from a column accessor.
#[inline]
pub(crate) fn vertical_d1(col: impl Fn(usize) -> f64, level: usize, last: usize, h: f64) -> f64 {
    if level == 0 {
        (-3.0 * col(0) + 4.0 * col(1) - col(2)) / (2.0 * h)
    } else if level == last {
        (3.0 * col(last) - 4.0 * col(last - 1) + col(last - 2)) / (2.0 * h)
    } else {
        (col(level + 1) - col(level - 1)) / (2.0 * h)
    }
}

/// Vertical second derivative at `level`, from a column accessor.
#[inline]
pub(crate) fn vertical_d2(col: impl Fn(usize) -> f64, level: usize, last: usize, h: f64) -> f64 {
    let h2 = h * h;
    if level == 0 {
        if last >= 3 {
            (2.0 * col(0) - 5.0 * col(1) + 4.0 * col(2) - col(3)) / h2
        } else {
            (col(0) - 2.0 * col(1) + col(2)) / h2
        }
    } else if level == last {
        if last >= 3 {
            (2.0 * col(last) - 5.0 * col(last - 1) + 4.0 * col(last - 2) - col(last - 3)) / h2
        } else {
            (col(last) - 2.0 * col(last - 1) + col(last - 2)) / h2
        }
    } else {
        (col(level + 1) - 2.0 * col(level) + col(level - 1)) / h2
    }
}

/// First derivative along `axis`.
pub fn d1(u: &GridFunction, axis: usize) -> Result<GridFunction> {
    let grid = u.grid();
    check_axis(grid, axis)?;
    check_stencil_grid(grid)?;
    let v = u.values();
    let d = grid.dim();
    let m = grid.level_size();
    let last = grid.n_vertical();
    let out: Vec<f64> = if axis == d - 1 {
        let h = grid.h_vertical();
        (0..grid.node_count())
            .into_par_iter()
            .map(|n| {
                let (j, t) = (n / m, n % m);
                vertical_d1(|k| v[k * m + t], j, last, h)
            })
            .collect()
    } else {
        let h = grid.h_tangential();
        (0..grid.node_count())
            .into_par_iter()
            .map(|n| {
                let p = grid.shift_tangential(n, axis, 1);
                let q = grid.shift_tangential(n, axis, -1);
                (v[p] - v[q]) / (2.0 * h)
            })
            .collect()
    };
    GridFunction::new(grid.clone(), out)
}

/// Second derivative along axes `i` and `j`.
pub fn d2(u: &GridFunction, i: usize, j: usize) -> Result<GridFunction> {
    let grid = u.grid();
    check_axis(grid, i)?;
    check_axis(grid, j)?;
    check_stencil_grid(grid)?;
    if i != j {
        return d1(&d1(u, i)?, j);
    }
    let v = u.values();
    let d = grid.dim();
    let m = grid.level_size();
    let last = grid.n_vertical();
    let out: Vec<f64> = if i == d - 1 {
        let h = grid.h_vertical();
        (0..grid.node_count())
            .into_par_iter()
            .map(|n| {
                let (l, t) = (n / m, n % m);
                vertical_d2(|k| v[k * m + t], l, last, h)
            })
            .collect()
    } else {
        let h = grid.h_tangential();
        (0..grid.node_count())
            .into_par_iter()
            .map(|n| {
                let p = grid.shift_tangential(n, i, 1);
                let q = grid.shift_tangential(n, i, -1);
                (v[p] - 2.0 * v[n] + v[q]) / (h * h)
            })
            .collect()
    };
    GridFunction::new(grid.clone(), out)
}

/// Derivative for a multi-index given as per-axis orders. Pure second
/// derivatives are taken with the three-point stencil; the rest by
/// composition of first differences.
pub fn derivative(u: &GridFunction, orders: &[usize]) -> Result<GridFunction> {
    if orders.len() != u.grid().dim() {
        return Err(Error::DimensionMismatch {
            expected: u.grid().dim(),
            got: orders.len(),
        });
    }
    let mut w = u.clone();
    for (axis, &k) in orders.iter().enumerate() {
        let mut left = k;
        while left >= 2 {
            w = d2(&w, axis, axis)?;
            left -= 2;
        }
        if left == 1 {
            w = d1(&w, axis)?;
        }
    }
    Ok(w)
}
