//! Weighted Hölder seminorms and norms built on the cycloidal distance,
//! evaluated over finite point sets.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::derivative;
use crate::error::{Error, Result};
use crate::geometry::{cycloidal, GridFunction, PointSet};

/// Per-axis derivative orders.
pub type MultiIndex = Vec<usize>;

/// All multi-indices in `d` variables of total order `order`, in
/// lexicographic order.
pub fn multi_indices(d: usize, order: usize) -> Vec<MultiIndex> {
    fn rec(d: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if prefix.len() == d - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(d, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, order, &mut Vec::with_capacity(d), &mut out);
    out
}

/// Supplies `D^beta u` at the points of a set.
pub trait DerivativeSource: Sync {
    fn values(&self, beta: &[usize], points: &PointSet) -> Result<Vec<f64>>;
}

/// Closed-form derivatives: the closure returns `None` for multi-indices it
/// does not provide.
pub struct Analytic<F>(pub F);

impl<F> DerivativeSource for Analytic<F>
where
    F: Fn(&[usize], &[f64]) -> Option<f64> + Sync,
{
    fn values(&self, beta: &[usize], points: &PointSet) -> Result<Vec<f64>> {
        points
            .iter()
            .map(|x| (self.0)(beta, x).ok_or_else(|| Error::MissingDerivative(beta.to_vec())))
            .collect()
    }
}

/// Finite-difference derivatives of a grid function, read at grid nodes.
/// The point set must carry node indices.
pub struct GridDerivatives<'a> {
    u: &'a GridFunction,
    cache: Mutex<HashMap<MultiIndex, GridFunction>>,
}

impl<'a> GridDerivatives<'a> {
    pub fn new(u: &'a GridFunction) -> Self {
        GridDerivatives {
            u,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn grid_function(&self, beta: &[usize]) -> Result<GridFunction> {
        if let Some(g) = self.cache.lock().expect("cache lock").get(beta) {
            return Ok(g.clone());
        }
        let g = derivative(self.u, beta)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(beta.to_vec(), g.clone());
        Ok(g)
    }
}

impl DerivativeSource for GridDerivatives<'_> {
    fn values(&self, beta: &[usize], points: &PointSet) -> Result<Vec<f64>> {
        let nodes = points.nodes().ok_or_else(|| {
            Error::InvalidArgument("grid derivatives need a point set of grid nodes".into())
        })?;
        let g = self.grid_function(beta)?;
        Ok(nodes.iter().map(|&n| g.values()[n]).collect())
    }
}

/// Evaluation settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderOptions {
    pub alpha: f64,
    pub k: usize,
    /// Point sets larger than this are subsampled.
    pub cap: usize,
    pub seed: u64,
}

impl Default for HolderOptions {
    fn default() -> Self {
        HolderOptions {
            alpha: 0.5,
            k: 0,
            cap: 4096,
            seed: 0,
        }
    }
}

impl HolderOptions {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha = {} must lie in (0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Deterministic subsample of at most `cap` points; returns the seed used
/// when subsampling happened.
pub fn subsample(points: &PointSet, cap: usize, seed: u64) -> (PointSet, Option<u64>) {
    if points.len() <= cap {
        return (points.clone(), None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = sample(&mut rng, points.len(), cap).into_vec();
    keep.sort_unstable();
    (points.select(&keep), Some(seed))
}

/// `max |u(x1) - u(x2)| / s(x1, x2)^alpha` over distinct pairs; coincident
/// points are skipped.
pub fn holder_seminorm(values: &[f64], points: &PointSet, alpha: f64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "seminorm needs at least 2 points".into(),
        ));
    }
    if values.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: values.len(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} must lie in (0, 1)"
        )));
    }
    let n = points.len();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let xi = points.point(i);
            let mut best = 0.0f64;
            for j in i + 1..n {
                let s = cycloidal(xi, points.point(j));
                if s > 0.0 {
                    best = best.max((values[i] - values[j]).abs() / s.powf(alpha));
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max))
}

/// Seminorm of a vector-valued function with the Euclidean norm on values;
/// `values` holds `width` components per point.
pub fn holder_seminorm_vector(
    values: &[f64],
    width: usize,
    points: &PointSet,
    alpha: f64,
) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "seminorm needs at least 2 points".into(),
        ));
    }
    if width == 0 || values.len() != points.len() * width {
        return Err(Error::DimensionMismatch {
            expected: points.len() * width,
            got: values.len(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} must lie in (0, 1)"
        )));
    }
    let n = points.len();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let (xi, vi) = (points.point(i), &values[i * width..(i + 1) * width]);
            let mut best = 0.0f64;
            for j in i + 1..n {
                let s = cycloidal(xi, points.point(j));
                if s > 0.0 {
                    let vj = &values[j * width..(j + 1) * width];
                    let diff = vi
                        .iter()
                        .zip(vj)
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>()
                        .sqrt();
                    best = best.max(diff / s.powf(alpha));
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max))
}

/// Seminorm of a closure over a point set.
pub fn holder_seminorm_fn(u: impl Fn(&[f64]) -> f64, points: &PointSet, alpha: f64) -> Result<f64> {
    let values: Vec<f64> = points.iter().map(u).collect();
    holder_seminorm(&values, points, alpha)
}

fn sup_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// One summand `sup + seminorm` of `D^beta u` (or of `x_d D^beta u` when
/// `weighted`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderTerm {
    pub beta: MultiIndex,
    pub weighted: bool,
    pub sup: f64,
    pub seminorm: f64,
}

impl HolderTerm {
    pub fn norm(&self) -> f64 {
        self.sup + self.seminorm
    }
}

/// Itemized norm evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub alpha: f64,
    pub k: usize,
    pub points: usize,
    pub subsample_seed: Option<u64>,
    pub sup_norm: f64,
    pub terms: Vec<HolderTerm>,
    /// `C^{k,alpha}_s` norm.
    pub c_k_alpha: f64,
    /// `C^{k,2+alpha}_s` norm, when requested.
    pub c_k_2alpha: Option<f64>,
}

impl HolderReport {
    pub fn term(&self, beta: &[usize], weighted: bool) -> Option<&HolderTerm> {
        self.terms
            .iter()
            .find(|t| t.beta == beta && t.weighted == weighted)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn term(
    src: &dyn DerivativeSource,
    beta: MultiIndex,
    weighted: bool,
    points: &PointSet,
    alpha: f64,
) -> Result<HolderTerm> {
    let mut values = src.values(&beta, points)?;
    if weighted {
        let d = points.dim();
        for (v, x) in values.iter_mut().zip(points.iter()) {
            *v *= x[d - 1];
        }
    }
    Ok(HolderTerm {
        sup: sup_abs(&values),
        seminorm: holder_seminorm(&values, points, alpha)?,
        beta,
        weighted,
    })
}

fn terms_up_to(
    src: &dyn DerivativeSource,
    k: usize,
    points: &PointSet,
    alpha: f64,
) -> Result<Vec<HolderTerm>> {
    let d = points.dim();
    let mut out = Vec::new();
    for order in 0..=k {
        for beta in multi_indices(d, order) {
            out.push(term(src, beta, false, points, alpha)?);
        }
    }
    Ok(out)
}

/// `C^{k,alpha}_s` norm: the sum over `|beta| <= k` of sup plus seminorm of
/// `D^beta u`.
pub fn ck_alpha_norm(
    src: &dyn DerivativeSource,
    points: &PointSet,
    opts: &HolderOptions,
) -> Result<HolderReport> {
    opts.validate()?;
    let (pts, seed) = subsample(points, opts.cap, opts.seed);
    let terms = terms_up_to(src, opts.k, &pts, opts.alpha)?;
    let c_k_alpha = terms.iter().map(HolderTerm::norm).sum();
    Ok(HolderReport {
        alpha: opts.alpha,
        k: opts.k,
        points: pts.len(),
        subsample_seed: seed,
        sup_norm: terms[0].sup,
        terms,
        c_k_alpha,
        c_k_2alpha: None,
    })
}

/// `C^{k,2+alpha}_s` norm: the `C^{k+1,alpha}_s` norm plus, for `|beta| =
/// k + 2`, the `C^alpha_s` norms of `x_d D^beta u`. The report's
/// `c_k_alpha` field holds the `C^{k,alpha}_s` part.
pub fn ck_2alpha_norm(
    src: &dyn DerivativeSource,
    points: &PointSet,
    opts: &HolderOptions,
) -> Result<HolderReport> {
    opts.validate()?;
    let (pts, seed) = subsample(points, opts.cap, opts.seed);
    let d = pts.dim();
    let mut terms = terms_up_to(src, opts.k + 1, &pts, opts.alpha)?;
    let c_k_alpha = terms
        .iter()
        .filter(|t| t.beta.iter().sum::<usize>() <= opts.k)
        .map(HolderTerm::norm)
        .sum();
    for beta in multi_indices(d, opts.k + 2) {
        terms.push(term(src, beta, true, &pts, opts.alpha)?);
    }
    let total = terms.iter().map(HolderTerm::norm).sum();
    Ok(HolderReport {
        alpha: opts.alpha,
        k: opts.k,
        points: pts.len(),
        subsample_seed: seed,
        sup_norm: terms[0].sup,
        terms,
        c_k_alpha,
        c_k_2alpha: Some(total),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{half_ball_points, make_slab_grid, Point};

    fn pts(rows: &[&[f64]]) -> PointSet {
        PointSet::from_rows(rows).unwrap()
    }

    /// Derivatives of x_d^p in two variables.
    fn power_of_xd(p: i32) -> Analytic<impl Fn(&[usize], &[f64]) -> Option<f64> + Sync> {
        Analytic(move |beta: &[usize], x: &[f64]| {
            if beta[0] > 0 {
                return Some(0.0);
            }
            let m = beta[1] as i32;
            if m > p {
                return Some(0.0);
            }
            let coef: f64 = (0..m).map(|i| (p - i) as f64).product();
            Some(coef * x[1].powi(p - m))
        })
    }

    #[test]
    fn indices() {
        assert_eq!(
            multi_indices(2, 2),
            vec![vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        assert_eq!(multi_indices(3, 1).len(), 3);
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert_eq!(multi_indices(2, 0), vec![vec![0, 0]]);
    }

    #[test]
    fn seminorm_examples() {
        let two = pts(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let s = holder_seminorm_fn(|x| x[1], &two, 0.5).unwrap();
        assert!((s - 2f64.powf(0.25)).abs() < 1e-15);
        assert_eq!(holder_seminorm_fn(|_| 3.0, &two, 0.5).unwrap(), 0.0);
        let three = pts(&[&[0.0, 0.0], &[0.0, 0.5], &[0.0, 1.0]]);
        let brute = [(0.0, 0.5), (0.0, 1.0), (0.5, 1.0)]
            .iter()
            .map(|&(a, b): &(f64, f64)| {
                let s = (b - a) / (a + b + (b - a)).sqrt();
                (b - a) / s.sqrt()
            })
            .fold(0.0, f64::max);
        assert!((holder_seminorm_fn(|x| x[1], &three, 0.5).unwrap() - brute).abs() < 1e-15);
        let v = holder_seminorm_vector(&[0.0, 0.0, 3.0, 4.0], 2, &two, 0.5).unwrap();
        assert!((v - 5.0 * 2f64.powf(0.25)).abs() < 1e-14);
        let one = pts(&[&[0.0, 0.0]]);
        assert!(holder_seminorm_fn(|x| x[1], &one, 0.5).is_err());
        assert!(holder_seminorm_fn(|x| x[1], &two, 1.0).is_err());
    }

    #[test]
    fn norm_examples() {
        let two = pts(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let q = 2f64.powf(0.25);
        let r = ck_alpha_norm(
            &power_of_xd(1),
            &two,
            &HolderOptions {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.c_k_alpha - (2.0 + q)).abs() < 1e-14);
        let r0 = ck_alpha_norm(&power_of_xd(1), &two, &HolderOptions::default()).unwrap();
        assert!((r0.c_k_alpha - (1.0 + q)).abs() < 1e-14);
        let five = Analytic(|beta: &[usize], _: &[f64]| {
            Some(if beta.iter().sum::<usize>() == 0 {
                5.0
            } else {
                0.0
            })
        });
        let r = ck_alpha_norm(
            &five,
            &two,
            &HolderOptions {
                k: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.c_k_alpha, 5.0);
        let r = ck_2alpha_norm(&power_of_xd(2), &two, &HolderOptions::default()).unwrap();
        let w = r.term(&[0, 2], true).unwrap();
        assert!((w.sup - 2.0).abs() < 1e-15 && (w.seminorm - 2.0 * q).abs() < 1e-14);
        assert!((r.c_k_2alpha.unwrap() - (5.0 + 5.0 * q)).abs() < 1e-13);
        let lin = ck_2alpha_norm(&power_of_xd(1), &two, &HolderOptions::default()).unwrap();
        let c1 = ck_alpha_norm(
            &power_of_xd(1),
            &two,
            &HolderOptions {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((lin.c_k_2alpha.unwrap() - c1.c_k_alpha).abs() < 1e-15);
    }

    #[test]
    fn missing_derivative() {
        let two = pts(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let partial =
            Analytic(|beta: &[usize], x: &[f64]| (beta.iter().sum::<usize>() == 0).then(|| x[1]));
        let r = ck_alpha_norm(
            &partial,
            &two,
            &HolderOptions {
                k: 1,
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::MissingDerivative(_))));
    }

    #[test]
    fn grid_source_on_half_ball() {
        let g = make_slab_grid(2, 1.0, 4.0, 32, 16).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[1] * x[1]);
        let ball = half_ball_points(&g, &Point::new(vec![2.0, 0.0]).unwrap(), 0.6).unwrap();
        let src = GridDerivatives::new(&u);
        let r = ck_2alpha_norm(&src, &ball, &HolderOptions::default()).unwrap();
        let exact = ck_2alpha_norm(&power_of_xd(2), &ball, &HolderOptions::default()).unwrap();
        assert!((r.c_k_2alpha.unwrap() - exact.c_k_2alpha.unwrap()).abs() < 1e-9);
        let no_nodes = pts(&[&[0.0, 0.0], &[0.0, 1.0]]);
        assert!(src.values(&[0, 0], &no_nodes).is_err());
    }

    #[test]
    fn subsampling_is_seeded() {
        let g = make_slab_grid(2, 1.0, 1.0, 64, 64).unwrap();
        let all = crate::geometry::full_grid_points(&g);
        let (a, sa) = subsample(&all, 100, 7);
        let (b, _) = subsample(&all, 100, 7);
        assert_eq!(sa, Some(7));
        assert_eq!(a.len(), 100);
        assert_eq!(a.nodes(), b.nodes());
        let (c, sc) = subsample(&all, 10_000, 7);
        assert_eq!((c.len(), sc), (all.len(), None));
    }
}
