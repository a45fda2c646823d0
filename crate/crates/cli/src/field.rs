//! Solution CSVs: `x1,...,xd,u[,extra...]`, one row per grid node.

use std::path::Path;

use degenlab::geometry::{make_slab_grid, GridDescriptor, GridFunction, SlabGrid};

use crate::error::{io_err, CliError, Result};

/// A field read back from CSV, reindexed onto the inferred slab grid.
#[derive(Clone, Debug)]
pub struct FieldCsv {
    pub u: GridFunction,
    pub columns: Vec<String>,
}

pub fn write_field(path: &Path, u: &GridFunction, extra: &[(&str, &[f64])]) -> Result<()> {
    std::fs::write(path, u.to_csv(extra)).map_err(io_err(path))
}

pub fn read_field(path: &Path) -> Result<FieldCsv> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let csv_err = |line: usize, message: String| CliError::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| csv_err(1, "empty file".into()))?;
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let d = columns
        .iter()
        .position(|c| c == "u")
        .ok_or_else(|| csv_err(1, "no `u` column".into()))?;
    if d < 2 || (0..d).any(|k| columns[k] != format!("x{}", k + 1)) {
        return Err(csv_err(
            1,
            format!("expected columns x1..xd before u, got {header:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| csv_err(i + 1, e.to_string()))?;
        if vals.len() != columns.len() {
            return Err(csv_err(
                i + 1,
                format!("{} fields, header has {}", vals.len(), columns.len()),
            ));
        }
        rows.push((i + 1, vals));
    }
    let coords: Vec<&[f64]> = rows.iter().map(|(_, v)| &v[..d]).collect();
    let grid = infer_grid(d, &coords).map_err(|m| csv_err(1, m))?;
    if grid.node_count() != rows.len() {
        return Err(csv_err(
            1,
            format!(
                "{} rows for a grid of {} nodes",
                rows.len(),
                grid.node_count()
            ),
        ));
    }
    let mut values = vec![f64::NAN; grid.node_count()];
    let ht = grid.h_tangential();
    let hv = grid.h_vertical();
    for (line, v) in &rows {
        let tangential: Vec<usize> = v[..d - 1]
            .iter()
            .map(|x| (x / ht).round() as usize)
            .collect();
        let level = (v[d - 1] / hv).round() as usize;
        let node = grid.index(&tangential, level);
        let expected = grid.coords(node);
        let off = expected
            .iter()
            .zip(&v[..d])
            .any(|(p, q)| (p - q).abs() > 1e-9 * (1.0 + p.abs()));
        if off || !values[node].is_nan() {
            return Err(csv_err(
                *line,
                format!("coordinates {:?} are not a distinct grid node", &v[..d]),
            ));
        }
        values[node] = v[d];
    }
    Ok(FieldCsv {
        u: GridFunction::new(grid, values)?,
        columns,
    })
}

/// Uniform slab grid through the given nodes: tangential coordinates
/// `i L / n` and vertical levels `j nu / n_v`.
pub fn infer_grid(d: usize, coords: &[&[f64]]) -> std::result::Result<SlabGrid, String> {
    let distinct = |k: usize| {
        let mut v: Vec<f64> = coords.iter().map(|x| x[k]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        v
    };
    let tangential = distinct(0);
    let vertical = distinct(d - 1);
    if tangential.len() < 2 || vertical.len() < 2 {
        return Err("need at least two distinct values per axis".into());
    }
    if tangential[0].abs() > 1e-12 || vertical[0].abs() > 1e-12 {
        return Err("grid must start at the origin".into());
    }
    let uniform = |v: &[f64]| {
        let h = v[1] - v[0];
        v.iter()
            .enumerate()
            .all(|(i, x)| (x - i as f64 * h).abs() <= 1e-9 * (1.0 + x.abs()))
    };
    if !uniform(&tangential) || !uniform(&vertical) {
        return Err("node coordinates are not uniformly spaced".into());
    }
    for k in 1..d - 1 {
        let other = distinct(k);
        if other.len() != tangential.len() || !uniform(&other) {
            return Err(format!("axis x{} differs from x1", k + 1));
        }
    }
    let n_t = tangential.len();
    let period = n_t as f64 * (tangential[1] - tangential[0]);
    let nu = *vertical.last().expect("nonempty");
    make_slab_grid(d, nu, period, n_t, vertical.len() - 1).map_err(|e| e.to_string())
}

pub fn same_grid(a: &SlabGrid, b: &SlabGrid) -> bool {
    let (p, q) = (
        GridDescriptor::from(a.clone()),
        GridDescriptor::from(b.clone()),
    );
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs());
    p.d == q.d
        && p.n_tangential == q.n_tangential
        && p.n_vertical == q.n_vertical
        && close(p.nu, q.nu)
        && close(p.period, q.period)
}
