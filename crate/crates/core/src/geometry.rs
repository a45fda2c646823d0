//! Slab grids, point sets and the cycloidal metric.
//!
//! A slab `S = R^{d-1} x (0, nu)` is truncated tangentially to a torus of
//! length `period` per axis. Vertical levels run from the degenerate boundary
//! `x_d = 0` up to the Dirichlet boundary `x_d = nu`; tangential nodes wrap.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the closed upper half-space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: coords.len(),
            });
        }
        let xd = *coords.last().unwrap();
        if !(xd >= 0.0) {
            return Err(Error::OutsideHalfSpace(xd));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn xd(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0
    }
}

/// Cycloidal distance `|x1 - x2| / sqrt(x1_d + x2_d + |x1 - x2|)`.
pub fn cycloidal_distance(x1: &Point, x2: &Point) -> Result<f64> {
    if x1.dim() != x2.dim() {
        return Err(Error::DimensionMismatch {
            expected: x1.dim(),
            got: x2.dim(),
        });
    }
    Ok(cycloidal(x1.coords(), x2.coords()))
}

/// Unchecked cycloidal distance on raw coordinates. Coincident points give 0.
#[inline]
pub fn cycloidal(x1: &[f64], x2: &[f64]) -> f64 {
    let dist = euclidean(x1, x2);
    if dist == 0.0 {
        return 0.0;
    }
    let d = x1.len();
    dist / (x1[d - 1] + x2[d - 1] + dist).sqrt()
}

#[inline]
pub fn euclidean(x1: &[f64], x2: &[f64]) -> f64 {
    x1.iter()
        .zip(x2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Uniform slab grid, periodic in the first `d - 1` coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDescriptor", into = "GridDescriptor")]
pub struct SlabGrid {
    d: usize,
    nu: f64,
    period: f64,
    n_tangential: usize,
    n_vertical: usize,
}

/// JSON form of a [`SlabGrid`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub d: usize,
    pub nu: f64,
    pub period: f64,
    pub n_tangential: usize,
    pub n_vertical: usize,
}

impl TryFrom<GridDescriptor> for SlabGrid {
    type Error = Error;
    fn try_from(g: GridDescriptor) -> Result<Self> {
        make_slab_grid(g.d, g.nu, g.period, g.n_tangential, g.n_vertical)
    }
}

impl From<SlabGrid> for GridDescriptor {
    fn from(g: SlabGrid) -> Self {
        GridDescriptor {
            d: g.d,
            nu: g.nu,
            period: g.period,
            n_tangential: g.n_tangential,
            n_vertical: g.n_vertical,
        }
    }
}

/// Builds a slab grid with `n_tangential` nodes per tangential axis and
/// `n_vertical + 1` vertical levels `x_d = j nu / n_vertical`.
pub fn make_slab_grid(
    d: usize,
    nu: f64,
    period: f64,
    n_tangential: usize,
    n_vertical: usize,
) -> Result<SlabGrid> {
    if d < 2 {
        return Err(Error::InvalidGrid(format!("dimension {d} < 2")));
    }
    if !(nu > 0.0 && nu.is_finite()) || !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "slab height {nu} and period {period} must be positive"
        )));
    }
    if n_tangential < 2 || n_vertical < 2 {
        return Err(Error::InvalidGrid(format!(
            "node counts ({n_tangential}, {n_vertical}) must be at least 2"
        )));
    }
    Ok(SlabGrid {
        d,
        nu,
        period,
        n_tangential,
        n_vertical,
    })
}

impl SlabGrid {
    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn n_tangential(&self) -> usize {
        self.n_tangential
    }
    pub fn n_vertical(&self) -> usize {
        self.n_vertical
    }
    pub fn h_tangential(&self) -> f64 {
        self.period / self.n_tangential as f64
    }
    pub fn h_vertical(&self) -> f64 {
        self.nu / self.n_vertical as f64
    }
    /// Number of nodes on one vertical level.
    pub fn level_size(&self) -> usize {
        self.n_tangential.pow(self.d as u32 - 1)
    }
    pub fn levels(&self) -> usize {
        self.n_vertical + 1
    }
    pub fn node_count(&self) -> usize {
        self.level_size() * self.levels()
    }
    pub fn x_d(&self, level: usize) -> f64 {
        if level == self.n_vertical {
            self.nu
        } else {
            level as f64 * self.h_vertical()
        }
    }
    pub fn vertical_nodes(&self) -> Vec<f64> {
        (0..self.levels()).map(|j| self.x_d(j)).collect()
    }
    pub fn tangential_coord(&self, i: usize) -> f64 {
        i as f64 * self.h_tangential()
    }

    /// Node index for a tangential multi-index (axis 0 slowest) and level.
    pub fn index(&self, tangential: &[usize], level: usize) -> usize {
        let mut t = 0;
        for &i in tangential {
            t = t * self.n_tangential + i;
        }
        level * self.level_size() + t
    }

    pub fn level_of(&self, node: usize) -> usize {
        node / self.level_size()
    }

    pub fn tangential_of(&self, node: usize) -> Vec<usize> {
        let mut t = node % self.level_size();
        let mut out = vec![0; self.d - 1];
        for k in (0..self.d - 1).rev() {
            out[k] = t % self.n_tangential;
            t /= self.n_tangential;
        }
        out
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .tangential_of(node)
            .into_iter()
            .map(|i| self.tangential_coord(i))
            .collect();
        x.push(self.x_d(self.level_of(node)));
        x
    }

    /// Index of the node shifted by `delta` cells along tangential `axis`,
    /// wrapping periodically.
    pub fn shift_tangential(&self, node: usize, axis: usize, delta: isize) -> usize {
        let n = self.n_tangential as isize;
        let stride = self.n_tangential.pow((self.d - 2 - axis) as u32);
        let level_base = node - node % self.level_size();
        let t = node % self.level_size();
        let i = ((t / stride) % self.n_tangential) as isize;
        let j = (i + delta).rem_euclid(n) as usize;
        level_base + t - (i as usize) * stride + j * stride
    }

    /// Wraps a tangential offset into `[-period/2, period/2)`.
    pub fn minimum_image(&self, delta: f64) -> f64 {
        let l = self.period;
        delta - l * (delta / l + 0.5).floor()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Real scalar field sampled at every node of a [`SlabGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: SlabGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: SlabGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: &SlabGrid) -> Self {
        GridFunction {
            values: vec![0.0; grid.node_count()],
            grid: grid.clone(),
        }
    }

    pub fn from_fn(grid: &SlabGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|n| f(&grid.coords(n))).collect();
        GridFunction {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &SlabGrid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn level(&self, j: usize) -> &[f64] {
        let m = self.grid.level_size();
        &self.values[j * m..(j + 1) * m]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid(
                "grid functions live on different grids".into(),
            ));
        }
        Ok(GridFunction {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Writes `coords..., value` rows, one node per line.
    pub fn to_csv(&self, extra: &[(&str, &[f64])]) -> String {
        let mut out = String::new();
        let d = self.grid.dim();
        for k in 0..d {
            let _ = write!(out, "x{},", k + 1);
        }
        out.push('u');
        for (name, _) in extra {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for n in 0..self.grid.node_count() {
            for x in self.grid.coords(n) {
                let _ = write!(out, "{x:.17e},");
            }
            let _ = write!(out, "{:.17e}", self.values[n]);
            for (_, col) in extra {
                let _ = write!(out, ",{:.17e}", col[n]);
            }
            out.push('\n');
        }
        out
    }
}

/// Where a point set came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PointSetTag {
    HalfBall { center: Vec<f64>, radius: f64 },
    Layer { level: usize },
    FullGrid,
    Custom,
}

/// Nonempty finite set of half-space points, optionally tied to grid nodes.
///
/// Coordinates of grid-backed sets are unwrapped (minimum image around the
/// set's anchor), so Euclidean and cycloidal distances between members are
/// the torus distances.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    nodes: Option<Vec<usize>>,
    pub tag: PointSetTag,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty point set".into()))?;
        let dim = first.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
            coords.extend_from_slice(p.coords());
        }
        Ok(PointSet {
            dim,
            coords,
            nodes: None,
            tag: PointSetTag::Custom,
        })
    }

    /// Convenience constructor from raw coordinate rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        PointSet::new(
            rows.iter()
                .map(|r| Point::new(r.to_vec()))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    fn from_nodes(
        grid: &SlabGrid,
        nodes: Vec<usize>,
        coords: Vec<f64>,
        tag: PointSetTag,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("empty point set".into()));
        }
        Ok(PointSet {
            dim: grid.dim(),
            coords,
            nodes: Some(nodes),
            tag,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
    /// Grid node of each member, when the set was cut from a grid.
    pub fn nodes(&self) -> Option<&[usize]> {
        self.nodes.as_deref()
    }

    /// Members with the given indices, keeping node links.
    pub fn select(&self, keep: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(keep.len() * self.dim);
        for &i in keep {
            coords.extend_from_slice(self.point(i));
        }
        PointSet {
            dim: self.dim,
            coords,
            nodes: self
                .nodes
                .as_ref()
                .map(|n| keep.iter().map(|&i| n[i]).collect()),
            tag: self.tag.clone(),
        }
    }

    /// One CSV row per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in self.iter() {
            let row: Vec<String> = p.iter().map(|x| format!("{x:.17e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Grid nodes in the open half-ball `B_r^+(center)`, with tangential
/// minimum-image distances.
pub fn half_ball_points(grid: &SlabGrid, center: &Point, radius: f64) -> Result<PointSet> {
    if center.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: center.dim(),
        });
    }
    if center.xd() != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "half-ball center must lie on x_d = 0, got x_d = {}",
            center.xd()
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius {radius} must be positive"
        )));
    }
    if radius > 0.5 * grid.period() {
        return Err(Error::InvalidArgument(format!(
            "radius {radius} exceeds half the period {}",
            grid.period()
        )));
    }
    let d = grid.dim();
    let c = center.coords();
    let mut nodes = Vec::new();
    let mut coords = Vec::new();
    let mut x = vec![0.0; d];
    for node in 0..grid.node_count() {
        let level = grid.level_of(node);
        let xd = grid.x_d(level);
        if xd >= radius {
            break;
        }
        let mut r2 = xd * xd;
        for (k, i) in grid.tangential_of(node).into_iter().enumerate() {
            let delta = grid.minimum_image(grid.tangential_coord(i) - c[k]);
            x[k] = c[k] + delta;
            r2 += delta * delta;
        }
        x[d - 1] = xd;
        if r2 < radius * radius {
            nodes.push(node);
            coords.extend_from_slice(&x);
        }
    }
    PointSet::from_nodes(
        grid,
        nodes,
        coords,
        PointSetTag::HalfBall {
            center: c.to_vec(),
            radius,
        },
    )
}

/// All nodes of one vertical level.
pub fn layer_points(grid: &SlabGrid, level: usize) -> Result<PointSet> {
    if level > grid.n_vertical() {
        return Err(Error::InvalidArgument(format!(
            "level {level} out of range"
        )));
    }
    let m = grid.level_size();
    let nodes: Vec<usize> = (level * m..(level + 1) * m).collect();
    let coords = nodes.iter().flat_map(|&n| grid.coords(n)).collect();
    PointSet::from_nodes(grid, nodes, coords, PointSetTag::Layer { level })
}

/// Every node of the grid (fundamental domain coordinates).
pub fn full_grid_points(grid: &SlabGrid) -> PointSet {
    let nodes: Vec<usize> = (0..grid.node_count()).collect();
    let coords = nodes.iter().flat_map(|&n| grid.coords(n)).collect();
    PointSet::from_nodes(grid, nodes, coords, PointSetTag::FullGrid).expect("grid is nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn cycloidal_examples() {
        let s = cycloidal_distance(&p(&[0.0, 1.0]), &p(&[0.0, 0.0])).unwrap();
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
        let q = p(&[0.3, 0.7]);
        assert_eq!(cycloidal_distance(&q, &q).unwrap(), 0.0);
        let s = cycloidal_distance(&p(&[0.0, 1.0]), &p(&[3.0, 1.0])).unwrap();
        assert!((s - 3.0 / 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cycloidal_errors() {
        assert!(matches!(
            cycloidal_distance(&p(&[0.0, 1.0]), &p(&[0.0, 0.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            Point::new(vec![0.0, -1e-3]),
            Err(Error::OutsideHalfSpace(_))
        ));
    }

    #[test]
    fn grid_construction() {
        let g = make_slab_grid(2, 1.0, std::f64::consts::TAU, 8, 8).unwrap();
        let v = g.vertical_nodes();
        assert_eq!(v.len(), 9);
        assert_eq!(v[1], 0.125);
        assert_eq!(*v.last().unwrap(), 1.0);
        assert!(make_slab_grid(2, 1.0, std::f64::consts::TAU, 1, 8).is_err());
        assert!(make_slab_grid(2, 0.0, 1.0, 4, 8).is_err());
        let g3 = make_slab_grid(3, 0.5, 4.0, 16, 32).unwrap();
        assert_eq!(g3.node_count(), 16 * 16 * 33);
    }

    #[test]
    fn node_indexing_roundtrip() {
        let g = make_slab_grid(3, 1.0, 2.0, 5, 4).unwrap();
        for n in 0..g.node_count() {
            assert_eq!(g.index(&g.tangential_of(n), g.level_of(n)), n);
        }
        let n = g.index(&[4, 2], 3);
        assert_eq!(g.tangential_of(g.shift_tangential(n, 0, 1)), vec![0, 2]);
        assert_eq!(g.tangential_of(g.shift_tangential(n, 1, -3)), vec![4, 4]);
        assert_eq!(g.level_of(g.shift_tangential(n, 1, 7)), 3);
    }

    #[test]
    fn half_ball_enumeration() {
        // spacing 0.25 in both directions
        let g = make_slab_grid(2, 1.0, 4.0, 16, 4).unwrap();
        let set = half_ball_points(&g, &p(&[0.0, 0.0]), 0.6).unwrap();
        let mut rows: Vec<(i64, i64)> = set
            .iter()
            .map(|x| ((x[0] * 4.0).round() as i64, (x[1] * 4.0).round() as i64))
            .collect();
        rows.sort();
        let mut expected = vec![];
        for i in -2..=2 {
            expected.push((i, 0));
            expected.push((i, 1));
        }
        for i in -1..=1 {
            expected.push((i, 2));
        }
        expected.sort();
        assert_eq!(rows, expected);
    }

    #[test]
    fn half_ball_small_and_invalid() {
        let g = make_slab_grid(2, 1.0, 4.0, 16, 4).unwrap();
        let set = half_ball_points(&g, &p(&[1.0, 0.0]), 0.1).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.nodes().unwrap(), &[g.index(&[4], 0)]);
        assert!(half_ball_points(&g, &p(&[0.0, 0.0]), 2.5).is_err());
        assert!(half_ball_points(&g, &p(&[0.0, 0.5]), 0.3).is_err());
    }

    #[test]
    fn grid_json_roundtrip() {
        let g = make_slab_grid(3, 0.5, 4.0, 16, 32).unwrap();
        let back = SlabGrid::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(g, back);
        assert!(SlabGrid::from_json(
            r#"{"d":2,"nu":-1,"period":1,"n_tangential":4,"n_vertical":4}"#
        )
        .is_err());
    }

    #[test]
    fn point_set_csv() {
        let s = PointSet::from_rows(&[&[0.0, 1.0], &[2.0, 0.5]]).unwrap();
        let csv = s.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("0.00000000000000000e0,1.00000000000000000e0"));
    }
}
