//! Empirical checks of the a priori estimates and of the boundary behaviour
//! of computed solutions. Each probe returns a [`ProbeReport`] carrying the
//! measured quantities and everything needed to replay it.

use std::collections::BTreeMap;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::diff::{d1, d2};
use crate::error::{Error, Result};
use crate::fdm::{solve_fdm, FdmOptions, Scheme};
use crate::geometry::{
    full_grid_points, half_ball_points, GridDescriptor, GridFunction, Point, PointSet, SlabGrid,
};
use crate::holder::{
    ck_2alpha_norm, ck_alpha_norm, holder_seminorm, holder_seminorm_vector, subsample,
    GridDerivatives, HolderOptions,
};
use crate::operators::{apply_operator, max_principle_constants, CoefficientField};
use crate::spectral::{solve_constant_slab, SpectralOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub name: String,
    pub quotients: BTreeMap<String, f64>,
    /// Cap or tolerance the pass flag was compared against.
    pub cap: Option<f64>,
    pub pass: bool,
    /// Set when a quotient is undefined.
    pub anomaly: Option<String>,
    pub metadata: serde_json::Value,
}

impl ProbeReport {
    fn new(name: &str) -> Self {
        ProbeReport {
            name: name.to_string(),
            quotients: BTreeMap::new(),
            cap: None,
            pass: true,
            anomaly: None,
            metadata: json!({}),
        }
    }

    fn set(&mut self, key: &str, value: f64) {
        self.quotients.insert(key.to_string(), value);
    }

    pub fn quotient(&self, key: &str) -> Option<f64> {
        self.quotients.get(key).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Header and row of the CSV summary table for a batch of reports.
pub fn summary_csv(reports: &[ProbeReport]) -> String {
    let mut out = String::from("name,pass,cap,anomaly,quotients\n");
    for r in reports {
        let q: Vec<String> = r
            .quotients
            .iter()
            .map(|(k, v)| format!("{k}={v:e}"))
            .collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.name,
            r.pass,
            r.cap.map_or(String::new(), |c| format!("{c:e}")),
            r.anomaly.clone().unwrap_or_default().replace(',', ";"),
            q.join(";")
        ));
    }
    out
}

fn descriptor(grid: &SlabGrid) -> GridDescriptor {
    grid.clone().into()
}

fn holder_opts(alpha: f64, k: usize) -> HolderOptions {
    HolderOptions {
        alpha,
        k,
        ..Default::default()
    }
}

fn sup_on(values: &[f64], points: &PointSet) -> f64 {
    let nodes = points.nodes().expect("grid point set");
    nodes.iter().fold(0.0, |m, &n| m.max(values[n].abs()))
}

fn check_radii(r: f64, r0: f64) -> Result<()> {
    if !(r > 0.0 && r < r0) {
        return Err(Error::InvalidArgument(format!(
            "radii must satisfy 0 < r < r0, got r = {r}, r0 = {r0}"
        )));
    }
    Ok(())
}

/// Local quotient `|u|_{C^{2+alpha}_s(B_r^+)} / (|Au|_{C^alpha_s(B_r0^+)} +
/// |u|_{C(B_r0^+)})` around the boundary point `x0`.
pub fn schauder_quotient(
    u: &GridFunction,
    coeffs: &CoefficientField,
    x0: &Point,
    r: f64,
    r0: f64,
    alpha: f64,
    cap: Option<f64>,
) -> Result<ProbeReport> {
    check_radii(r, r0)?;
    let grid = u.grid();
    let inner = half_ball_points(grid, x0, r)?;
    let outer = half_ball_points(grid, x0, r0)?;
    let num = ck_2alpha_norm(&GridDerivatives::new(u), &inner, &holder_opts(alpha, 0))?
        .c_k_2alpha
        .expect("requested");
    let au = apply_operator(coeffs, u)?;
    let au_norm =
        ck_alpha_norm(&GridDerivatives::new(&au), &outer, &holder_opts(alpha, 0))?.c_k_alpha;
    let u_sup = sup_on(u.values(), &outer);
    let mut rep = ProbeReport::new("schauder");
    rep.cap = cap;
    rep.set("numerator", num);
    rep.set("au_norm", au_norm);
    rep.set("u_sup", u_sup);
    let den = au_norm + u_sup;
    quotient_or_anomaly(&mut rep, "q", num, den);
    rep.metadata = json!({
        "grid": descriptor(grid),
        "coefficients": coeffs.label(),
        "x0": x0.coords(),
        "r": r,
        "r0": r0,
        "alpha": alpha,
        "k": 0,
        "points_inner": inner.len(),
        "points_outer": outer.len(),
    });
    Ok(rep)
}

/// Stores `num / den`, or flags the report when the quotient is undefined.
/// A vanishing pair (`0 / 0`) is flagged without failing.
fn quotient_or_anomaly(rep: &mut ProbeReport, key: &str, num: f64, den: f64) {
    if den <= 1e-13 * num.abs() || den == 0.0 {
        if num == 0.0 {
            rep.anomaly = Some(format!("{key}: numerator and denominator vanish"));
        } else {
            rep.anomaly = Some(format!(
                "{key}: degenerate denominator {den:e} with numerator {num:e}"
            ));
            rep.pass = false;
        }
        return;
    }
    let q = num / den;
    rep.set(key, q);
    if !q.is_finite() || rep.cap.is_some_and(|c| q > c) {
        rep.pass = false;
    }
}

/// Global quotient over the whole slab: `|u|_{C^{k,2+alpha}_s} /
/// (|Au|_{C^{k,alpha}_s} + |u|_C)` and, for `c >= 0`, the quotient with
/// `|Au|_{C^{k,alpha}_s}` alone in the denominator (`q_f`). Requires `u = 0`
/// on the top level.
pub fn global_schauder_quotient(
    u: &GridFunction,
    coeffs: &CoefficientField,
    alpha: f64,
    k: usize,
    cap: Option<f64>,
) -> Result<ProbeReport> {
    let grid = u.grid();
    let top = u
        .level(grid.n_vertical())
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if top > 1e-9 * u.max_abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "u does not vanish on the top level (max {top:e})"
        )));
    }
    let points = full_grid_points(grid);
    let opts = holder_opts(alpha, k);
    let num_rep = ck_2alpha_norm(&GridDerivatives::new(u), &points, &opts)?;
    let num = num_rep.c_k_2alpha.expect("requested");
    let au = apply_operator(coeffs, u)?;
    let au_norm = ck_alpha_norm(&GridDerivatives::new(&au), &points, &opts)?.c_k_alpha;
    let u_sup = u.max_abs();
    let c_nonneg = coeffs.min_c(grid) >= 0.0;
    let mut rep = ProbeReport::new("global");
    rep.cap = cap;
    rep.set("numerator", num);
    rep.set("au_norm", au_norm);
    rep.set("u_sup", u_sup);
    quotient_or_anomaly(&mut rep, "q", num, au_norm + u_sup);
    if c_nonneg {
        let full_anomaly = rep.anomaly.take();
        quotient_or_anomaly(&mut rep, "q_f", num, au_norm);
        if let Some(a) = full_anomaly {
            rep.anomaly = Some(a);
        }
    }
    let f_dominates = match (rep.quotient("q"), rep.quotient("q_f")) {
        (Some(q), Some(qf)) => Some(qf >= q),
        _ => None,
    };
    rep.metadata = json!({
        "grid": descriptor(grid),
        "coefficients": coeffs.label(),
        "alpha": alpha,
        "k": k,
        "points": num_rep.points,
        "subsample_seed": num_rep.subsample_seed,
        "c_nonnegative": c_nonneg,
        "f_only_quotient_dominates": f_dominates,
    });
    Ok(rep)
}

/// Node index of a point on the bottom level, which must coincide with a
/// grid node.
fn bottom_node(grid: &SlabGrid, x0: &Point) -> Result<usize> {
    if x0.xd() != 0.0 {
        return Err(Error::InvalidArgument("x0 must lie on x_d = 0".into()));
    }
    let h = grid.h_tangential();
    let mut t = Vec::with_capacity(grid.dim() - 1);
    for &c in &x0.coords()[..grid.dim() - 1] {
        let i = (c / h).round();
        if (c - i * h).abs() > 1e-9 * h {
            return Err(Error::InvalidArgument(format!(
                "x0 coordinate {c} is not a grid node"
            )));
        }
        t.push((i as i64).rem_euclid(grid.n_tangential() as i64) as usize);
    }
    Ok(grid.index(&t, 0))
}

/// Sup-norm best affine fit error, by linear programming over at most 512
/// sampled points. Coordinates are centred at `x0` and scaled by `r`.
fn affine_fit_error(values: &[f64], points: &PointSet, x0: &[f64], r: f64) -> Result<f64> {
    let d = points.dim();
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let t = problem.add_var(1.0, (0.0, f64::INFINITY));
    let p: Vec<_> = (0..=d)
        .map(|_| problem.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    for (v, x) in values.iter().zip(points.iter()) {
        let mut row = vec![(p[0], 1.0)];
        for k in 0..d {
            row.push((p[k + 1], (x[k] - x0[k]) / r));
        }
        let mut upper = row.clone();
        upper.push((t, 1.0));
        problem.add_constraint(&upper[..], ComparisonOp::Ge, *v);
        row.push((t, -1.0));
        problem.add_constraint(&row[..], ComparisonOp::Le, *v);
    }
    let solution = problem
        .solve()
        .map_err(|e| Error::NoConvergence(format!("affine fit linear program: {e}")))?;
    Ok(solution.objective())
}

/// Degree-1 Taylor remainder and best affine fit on half-balls of the
/// given radii around the boundary node `x0`. The ratios
/// `|u - p|_C / (r/r0)^2` and `|R u|_C / r^{1+alpha/2}` must not grow by
/// more than `cap` between consecutive radii.
pub fn taylor_remainder_probe(
    u: &GridFunction,
    x0: &Point,
    radii: &[f64],
    r0: f64,
    alpha: f64,
    cap: f64,
) -> Result<ProbeReport> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("empty radius sequence".into()));
    }
    for &r in radii {
        check_radii(r, r0)?;
    }
    let grid = u.grid();
    let d = grid.dim();
    let center = bottom_node(grid, x0)?;
    let du: Vec<f64> = (0..d)
        .map(|i| d1(u, i).map(|g| g.values()[center]))
        .collect::<Result<_>>()?;
    let u0 = u.values()[center];
    let zero_floor = 1e-12 * u.max_abs().max(1.0);
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let (mut fit, mut rem, mut fit_ratio, mut rem_ratio) = (vec![], vec![], vec![], vec![]);
    for &r in &sorted {
        let ball = half_ball_points(grid, x0, r)?;
        let (sample, _) = subsample(&ball, 512, 0);
        let nodes = sample.nodes().expect("grid point set");
        let values: Vec<f64> = nodes.iter().map(|&n| u.values()[n]).collect();
        let e = affine_fit_error(&values, &sample, x0.coords(), r)?;
        let remainder = ball
            .iter()
            .zip(ball.nodes().expect("grid point set"))
            .map(|(x, &n)| {
                let lin: f64 = (0..d).map(|k| du[k] * (x[k] - x0.coords()[k])).sum();
                (u.values()[n] - u0 - lin).abs()
            })
            .fold(0.0, f64::max);
        let e = if e <= zero_floor { 0.0 } else { e };
        let remainder = if remainder <= zero_floor {
            0.0
        } else {
            remainder
        };
        fit.push(e);
        rem.push(remainder);
        fit_ratio.push(e / (r / r0).powi(2));
        rem_ratio.push(remainder / r.powf(1.0 + 0.5 * alpha));
    }
    let grows = |q: &[f64]| q.windows(2).any(|w| w[1] > cap * w[0]);
    let (slope, intercept) =
        least_squares_line(&sorted.iter().map(|r| r * r).collect::<Vec<_>>(), &fit);
    let mut rep = ProbeReport::new("taylor");
    rep.cap = Some(cap);
    rep.set(
        "max_fit_ratio",
        fit_ratio.iter().copied().fold(0.0, f64::max),
    );
    rep.set(
        "max_remainder_ratio",
        rem_ratio.iter().copied().fold(0.0, f64::max),
    );
    rep.set("fit_r2_coefficient", slope);
    rep.set("fit_constant", intercept);
    rep.pass = !grows(&fit_ratio) && !grows(&rem_ratio);
    rep.metadata = json!({
        "grid": descriptor(grid),
        "x0": x0.coords(),
        "radii": sorted,
        "r0": r0,
        "alpha": alpha,
        "fit_error": fit,
        "remainder": rem,
        "fit_ratio": fit_ratio,
        "remainder_ratio": rem_ratio,
    });
    Ok(rep)
}

/// Least-squares `y ~ slope * x + intercept`.
fn least_squares_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return (0.0, my);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Max over the first interior level of `|x_d D_ij u|`.
pub fn first_layer_flatness(u: &GridFunction) -> Result<f64> {
    let grid = u.grid();
    let d = grid.dim();
    let xd = grid.x_d(1);
    let mut best = 0.0f64;
    for i in 0..d {
        for j in i..d {
            let g = d2(u, i, j)?;
            best = g.level(1).iter().fold(best, |m, v| m.max((xd * v).abs()));
        }
    }
    Ok(best)
}

/// Flatness sequence over solutions on successively refined grids; passes
/// when every step decreases up to a 10% noise band.
pub fn boundary_flatness_probe(us: &[GridFunction]) -> Result<ProbeReport> {
    if us.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 refinement levels".into(),
        ));
    }
    let seq: Vec<f64> = us.iter().map(first_layer_flatness).collect::<Result<_>>()?;
    let mut rep = ProbeReport::new("flatness");
    rep.cap = Some(1.1);
    rep.pass = seq.windows(2).all(|w| w[1] <= 1.1 * w[0] + 1e-14);
    rep.set("first", seq[0]);
    rep.set("last", *seq.last().expect("nonempty"));
    rep.metadata = json!({
        "sequence": seq,
        "strictly_decreasing": seq.windows(2).all(|w| w[1] < w[0]),
        "grids": us.iter().map(|u| descriptor(u.grid())).collect::<Vec<_>>(),
    });
    Ok(rep)
}

/// Left-hand sides of the four interpolation inequalities and the two
/// norms on the right, on one point set.
struct InterpolationTerms {
    lhs: [f64; 4],
    top: f64,
    sup: f64,
}

fn interpolation_terms(
    u: &GridFunction,
    points: &PointSet,
    alpha: f64,
) -> Result<InterpolationTerms> {
    let d = u.grid().dim();
    let src = GridDerivatives::new(u);
    let report = ck_2alpha_norm(&src, points, &holder_opts(alpha, 0))?;
    let nodes = points.nodes().expect("grid point set");
    let mut xd_du = 0.0;
    let mut du_sup = 0.0f64;
    for i in 0..d {
        let mut e = vec![0; d];
        e[i] = 1;
        let g = src.grid_function(&e)?;
        let values: Vec<f64> = nodes
            .iter()
            .zip(points.iter())
            .map(|(&n, x)| x[d - 1] * g.values()[n])
            .collect();
        du_sup = du_sup.max(sup_on(g.values(), points));
        xd_du += values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            + holder_seminorm(&values, points, alpha)?;
    }
    let xd_d2 = report
        .terms
        .iter()
        .filter(|t| t.weighted)
        .fold(0.0f64, |m, t| m.max(t.sup));
    Ok(InterpolationTerms {
        lhs: [report.terms[0].norm(), du_sup, xd_du, xd_d2],
        top: report.c_k_2alpha.expect("requested"),
        sup: report.sup_norm,
    })
}

/// Minimal constants `C(eps)` in `lhs <= eps |u|_{C^{2+alpha}_s} + C eps^{-m}
/// |u|_C` for the four interpolation inequalities over a battery of
/// functions, with a fitted exponent `m` and a single covering pair.
pub fn interpolation_probe(
    battery: &[GridFunction],
    x0: &Point,
    r0: f64,
    alpha: f64,
    eps: &[f64],
) -> Result<ProbeReport> {
    if eps.is_empty() {
        return Err(Error::InvalidArgument("empty epsilon grid".into()));
    }
    if eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidArgument(
            "epsilon values must lie in (0, 1)".into(),
        ));
    }
    let mut terms = Vec::with_capacity(battery.len());
    for u in battery {
        let ball = half_ball_points(u.grid(), x0, r0)?;
        terms.push(interpolation_terms(u, &ball, alpha)?);
    }
    let mut c_eps = [
        vec![0.0; eps.len()],
        vec![0.0; eps.len()],
        vec![0.0; eps.len()],
        vec![0.0; eps.len()],
    ];
    for t in terms.iter().filter(|t| t.sup > 0.0) {
        for (j, c) in c_eps.iter_mut().enumerate() {
            for (ce, &e) in c.iter_mut().zip(eps) {
                *ce = f64::max(*ce, (t.lhs[j] - e * t.top) / t.sup);
            }
        }
    }
    let mut exponents = [0.0; 4];
    let mut constants = [0.0; 4];
    for j in 0..4 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = eps
            .iter()
            .zip(&c_eps[j])
            .filter(|(_, c)| **c > 0.0)
            .map(|(e, c)| ((1.0 / e).ln(), c.ln()))
            .unzip();
        exponents[j] = if xs.len() >= 2 {
            least_squares_line(&xs, &ys).0.max(0.0)
        } else {
            0.0
        };
        constants[j] = covering_constant(eps, &c_eps[j], exponents[j]);
    }
    let m = exponents.iter().copied().fold(0.0, f64::max);
    let c = (0..4)
        .map(|j| covering_constant(eps, &c_eps[j], m))
        .fold(0.0, f64::max);
    let mut rep = ProbeReport::new("interp");
    rep.set("m", m);
    rep.set("c", c);
    for j in 0..4 {
        rep.set(&format!("m_{}", j + 1), exponents[j]);
        rep.set(&format!("c_{}", j + 1), constants[j]);
    }
    rep.pass = m.is_finite() && c.is_finite();
    rep.metadata = json!({
        "x0": x0.coords(),
        "r0": r0,
        "alpha": alpha,
        "eps": eps,
        "c_of_eps": c_eps,
        "battery": battery.len(),
    });
    Ok(rep)
}

fn covering_constant(eps: &[f64], c_eps: &[f64], m: f64) -> f64 {
    eps.iter()
        .zip(c_eps)
        .map(|(e, c)| c * e.powf(m))
        .fold(0.0, f64::max)
}

/// Checks `[x_d Du]_{C^alpha_s(B_r^+)} <= (|Du|_C + |x_d D^2 u|_C) * 2
/// r^{1-alpha/2}` on half-balls, with Euclidean and Frobenius norms on
/// values. The bound without the factor 2 is recorded as `literal_ratio`
/// but does not affect the pass flag.
pub fn xd_du_holder_probe(
    u: &GridFunction,
    x0: &Point,
    radii: &[f64],
    alpha: f64,
) -> Result<ProbeReport> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("empty radius sequence".into()));
    }
    let grid = u.grid();
    let d = grid.dim();
    let first: Vec<GridFunction> = (0..d).map(|i| d1(u, i)).collect::<Result<_>>()?;
    let mut second = Vec::new();
    for i in 0..d {
        for j in i..d {
            second.push((if i == j { 1.0 } else { 2.0 }, d2(u, i, j)?));
        }
    }
    let (mut worst, mut worst_literal) = (0.0f64, 0.0f64);
    let mut rows = Vec::new();
    let mut pass = true;
    for &r in radii {
        let ball = half_ball_points(grid, x0, r)?;
        let (ball, _) = subsample(&ball, 4096, 0);
        let nodes = ball.nodes().expect("grid point set");
        let mut values = Vec::with_capacity(nodes.len() * d);
        let (mut du_sup, mut xd_d2) = (0.0f64, 0.0f64);
        for (&n, x) in nodes.iter().zip(ball.iter()) {
            let mut norm2 = 0.0;
            for g in &first {
                let v = g.values()[n];
                values.push(x[d - 1] * v);
                norm2 += v * v;
            }
            du_sup = du_sup.max(norm2.sqrt());
            let frob: f64 = second
                .iter()
                .map(|(w, g)| w * g.values()[n] * g.values()[n])
                .sum::<f64>()
                .sqrt();
            xd_d2 = xd_d2.max(x[d - 1] * frob);
        }
        let lhs = if ball.len() >= 2 {
            holder_seminorm_vector(&values, d, &ball, alpha)?
        } else {
            0.0
        };
        let literal = (du_sup + xd_d2) * r.powf(1.0 - 0.5 * alpha);
        let bound = 2.0 * literal;
        if lhs > bound * (1.0 + 1e-12) + 1e-14 {
            pass = false;
        }
        if bound > 0.0 {
            worst = worst.max(lhs / bound);
            worst_literal = worst_literal.max(lhs / literal);
        }
        rows.push(
            json!({"r": r, "seminorm": lhs, "du_sup": du_sup, "xd_d2_sup": xd_d2, "bound": bound}),
        );
    }
    let mut rep = ProbeReport::new("xddu");
    rep.cap = Some(1.0);
    rep.pass = pass;
    rep.set("max_ratio", worst);
    rep.set("literal_ratio", worst_literal);
    rep.metadata = json!({
        "grid": descriptor(grid),
        "x0": x0.coords(),
        "alpha": alpha,
        "balls": rows,
    });
    Ok(rep)
}

/// Solves with the finite-difference scheme and checks the sign property
/// (`f <= 0`, `g <= 0` gives `u <= tol`) and the bound `|u|_C <= C (|f|_C +
/// |g|_C)` with `C = 4 Lambda e^{sigma nu} / b0^2`. With mixed second-order
/// coefficients or the central scheme the discretization is not monotone
/// and the sign check is recorded only.
pub fn max_principle_probe(
    coeffs: &CoefficientField,
    f: &GridFunction,
    g_top: &[f64],
    opts: &FdmOptions,
    tol: f64,
) -> Result<ProbeReport> {
    let grid = f.grid();
    let min_c = coeffs.min_c(grid);
    if min_c < 0.0 {
        return Err(Error::Hypothesis(format!("c = {min_c} < 0 sampled")));
    }
    let consts = max_principle_constants(coeffs, grid)?;
    let solved = solve_fdm(coeffs, f, g_top, opts)?;
    let u = &solved.u;
    let d = grid.dim();
    let report_only = opts.scheme == Scheme::Central
        || (0..grid.node_count()).any(|n| {
            let s = coeffs.sample(&grid.coords(n));
            (0..d).any(|i| (0..d).any(|j| i != j && s.a[(i, j)] != 0.0))
        });
    let g_max = g_top.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let g_sup = g_top.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sign_applicable = f.max() <= 0.0 && g_max <= 0.0;
    let sign_ok = u.max() <= tol;
    let bound = consts.constant * (f.max_abs() + g_sup);
    let bound_ok = u.max_abs() <= bound * (1.0 + 1e-12) + tol;
    let mut rep = ProbeReport::new("maxp");
    rep.cap = Some(tol);
    rep.set("u_max", u.max());
    rep.set("u_sup", u.max_abs());
    rep.set("bound", bound);
    rep.set("constant", consts.constant);
    if bound > 0.0 {
        rep.set("bound_ratio", u.max_abs() / bound);
    }
    rep.pass = bound_ok && (!sign_applicable || report_only || sign_ok);
    rep.metadata = json!({
        "grid": descriptor(grid),
        "coefficients": coeffs.label(),
        "lambda": consts.lambda,
        "b0": consts.b0,
        "sigma": consts.sigma,
        "scheme": opts.scheme,
        "sign_check_applicable": sign_applicable,
        "sign_check_report_only": report_only,
        "sign_ok": sign_ok,
        "bound_ok": bound_ok,
        "linear_residual": solved.linear_residual,
    });
    Ok(rep)
}

/// Smooth forcing band-limited in the tangential variables with a
/// quadratic vertical profile per mode; coefficients uniform in [-1, 1].
pub fn band_limited_forcing(grid: &SlabGrid, seed: u64, max_mode: usize) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let mut terms = Vec::new();
    for axis in 0..d - 1 {
        for m in 0..=max_mode {
            let c: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            terms.push((axis, m as f64, c));
        }
    }
    let k = 2.0 * std::f64::consts::PI / grid.period();
    GridFunction::from_fn(grid, |x| {
        let xd = x[d - 1];
        terms
            .iter()
            .map(|&(axis, m, c)| {
                let phase = k * m * x[axis];
                (c[0] * phase.cos() + c[1] * phase.sin()) * (c[2] + c[3] * xd + c[4] * xd * xd)
            })
            .sum()
    })
}

/// Grids `(n_t * 2^k, n_v * 2^k)` for `k < levels`; with `vertical_only`
/// the tangential count stays fixed.
pub fn refinements(base: &SlabGrid, levels: usize, vertical_only: bool) -> Result<Vec<SlabGrid>> {
    (0..levels)
        .map(|k| {
            let nt = if vertical_only {
                base.n_tangential()
            } else {
                base.n_tangential() << k
            };
            crate::geometry::make_slab_grid(
                base.dim(),
                base.nu(),
                base.period(),
                nt,
                base.n_vertical() << k,
            )
        })
        .collect()
}

/// Settings shared by the spectral batteries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryOptions {
    pub seeds: Vec<u64>,
    pub max_mode: usize,
    pub alpha: f64,
    pub r: f64,
    pub r0: f64,
    /// Relative change allowed between refinements.
    pub tolerance: f64,
    pub spectral: SpectralOptions,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions {
            seeds: (0..20).collect(),
            max_mode: 3,
            alpha: 0.5,
            r: 0.125,
            r0: 0.25,
            tolerance: 0.2,
            spectral: SpectralOptions::default(),
        }
    }
}

fn spectral_solution(
    coeffs: &CoefficientField,
    grid: &SlabGrid,
    seed: u64,
    opts: &BatteryOptions,
) -> Result<GridFunction> {
    let f = band_limited_forcing(grid, seed, opts.max_mode);
    Ok(solve_constant_slab(coeffs, &f, &opts.spectral)?.u)
}

fn center_of(grid: &SlabGrid) -> Result<Point> {
    let mut x = vec![0.5 * grid.period(); grid.dim() - 1];
    x.push(0.0);
    Point::new(x)
}

/// Max local Schauder quotient over the seed battery on each grid; passes
/// when consecutive maxima differ by at most `tolerance` (relative).
pub fn schauder_battery(
    coeffs: &CoefficientField,
    grids: &[SlabGrid],
    opts: &BatteryOptions,
) -> Result<ProbeReport> {
    if grids.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 grids".into()));
    }
    let mut maxima = Vec::new();
    for grid in grids {
        let x0 = center_of(grid)?;
        let mut best = 0.0f64;
        for &seed in &opts.seeds {
            let u = spectral_solution(coeffs, grid, seed, opts)?;
            let rep = schauder_quotient(&u, coeffs, &x0, opts.r, opts.r0, opts.alpha, None)?;
            best = best.max(rep.quotient("q").unwrap_or(0.0));
        }
        maxima.push(best);
    }
    let changes: Vec<f64> = maxima
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / w[0])
        .collect();
    let mut rep = ProbeReport::new("schauder");
    rep.cap = Some(opts.tolerance);
    rep.pass = changes.iter().all(|&c| c <= opts.tolerance);
    rep.set("max_q", maxima.iter().copied().fold(0.0, f64::max));
    rep.set(
        "max_relative_change",
        changes.iter().copied().fold(0.0, f64::max),
    );
    rep.metadata = json!({
        "coefficients": coeffs.label(),
        "grids": grids.iter().map(descriptor).collect::<Vec<_>>(),
        "max_q_per_grid": maxima,
        "relative_changes": changes,
        "seeds": opts.seeds,
        "r": opts.r,
        "r0": opts.r0,
        "alpha": opts.alpha,
    });
    Ok(rep)
}

/// Flatness probe for every seed of the battery, on vertical refinements
/// of `base`.
pub fn flatness_battery(
    coeffs: &CoefficientField,
    base: &SlabGrid,
    levels: usize,
    opts: &BatteryOptions,
) -> Result<ProbeReport> {
    let grids = refinements(base, levels, true)?;
    let mut sequences = Vec::new();
    let mut pass = true;
    for &seed in &opts.seeds {
        let us: Vec<GridFunction> = grids
            .iter()
            .map(|g| spectral_solution(coeffs, g, seed, opts))
            .collect::<Result<_>>()?;
        let rep = boundary_flatness_probe(&us)?;
        pass &= rep.pass;
        sequences.push(rep.metadata["sequence"].clone());
    }
    let mut rep = ProbeReport::new("flatness");
    rep.cap = Some(1.1);
    rep.pass = pass;
    rep.metadata = json!({
        "coefficients": coeffs.label(),
        "grids": grids.iter().map(descriptor).collect::<Vec<_>>(),
        "seeds": opts.seeds,
        "sequences": sequences,
    });
    Ok(rep)
}
