//! Constant-coefficient solves on slabs and the half-space: tangential
//! Fourier transform, one Kummer-function solution per frequency, and a
//! one-dimensional finite-difference solve for the zero frequency.
//!
//! Mode equations are written in the isotropic vertical variable `s`:
//! `-s w'' - b w' + (2 k a - b k + k^2 s) w = F(s)`, which becomes the
//! Kummer equation `-y v'' - (b - y) v' + a v = g` under
//! `w(s) = e^{-k s} v(2 k s)`.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64 as C;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridFunction, SlabGrid};
use crate::linalg::BandMatrix;
use crate::operators::{apply_operator, isotropize, CoefficientField};
use crate::quadrature::{adaptive_tol, graded_from_zero_tol, grading_exponent};
use crate::special::{hyp1f1_scaled, ln_gamma, KummerOptions, TricomiU};

const ZERO: C = C { re: 0.0, im: 0.0 };

/// Kummer data of one nonzero frequency.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KummerMode {
    pub xi: Vec<f64>,
    /// `a(xi)`, complex.
    pub a: C,
    /// Kummer `b`, equal to the normal drift `b^d`.
    pub b: f64,
    /// `|xi|`.
    pub k: f64,
}

impl KummerMode {
    /// Scale `2 |xi|` between `x_d` and the Kummer variable.
    pub fn scale(&self) -> f64 {
        2.0 * self.k
    }

    /// Zeroth-order coefficient `c - i b'.xi` of the mode equation.
    pub fn zeroth_order(&self) -> C {
        2.0 * self.k * self.a - self.b * self.k
    }

    /// Kummer-variable forcing `g(y) = e^{y/2} F(y / 2k) / 2k`.
    pub fn g(&self, forcing: &Profile, y: f64) -> C {
        (0.5 * y).exp() * forcing.eval(y / self.scale()) / self.scale()
    }
}

/// Kummer data for isotropic constant coefficients (`a = I`) and frequency
/// `xi != 0`: `a(xi) = (c + b^d |xi| + i sum_k b^k xi_k) / (2 |xi|)`.
pub fn mode_params(coeffs: &CoefficientField, xi: &[f64]) -> Result<KummerMode> {
    let s = coeffs.constant_parts()?;
    let d = coeffs.dim();
    if xi.len() != d - 1 {
        return Err(Error::DimensionMismatch {
            expected: d - 1,
            got: xi.len(),
        });
    }
    let identity = (0..d)
        .all(|i| (0..d).all(|j| (s.a[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12));
    if !identity {
        return Err(Error::InvalidArgument(
            "mode_params needs isotropized coefficients (a = I)".into(),
        ));
    }
    let k = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if k == 0.0 {
        return Err(Error::InvalidArgument(
            "zero frequency has no Kummer mode; use solve_zero_mode".into(),
        ));
    }
    let bd = s.b[d - 1];
    let tangential: f64 = xi.iter().enumerate().map(|(i, x)| s.b[i] * x).sum();
    Ok(KummerMode {
        xi: xi.to_vec(),
        a: C::new(s.c + bd * k, tangential) / (2.0 * k),
        b: bd,
        k,
    })
}

/// Complex samples at `s_j = j h`, interpolated by piecewise cubics and
/// multiplied by `e^{i phase s}`; zero outside `[0, top]`.
#[derive(Clone, Debug)]
pub struct Profile {
    h: f64,
    values: Vec<C>,
    phase: f64,
}

impl Profile {
    pub fn new(h: f64, values: Vec<C>, phase: f64) -> Result<Self> {
        if values.len() < 2 || !(h > 0.0) {
            return Err(Error::InvalidArgument(
                "profile needs at least 2 samples and h > 0".into(),
            ));
        }
        Ok(Profile { h, values, phase })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn top(&self) -> f64 {
        self.h * (self.values.len() - 1) as f64
    }

    pub fn knot(&self, j: usize) -> f64 {
        self.h * j as f64
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == ZERO)
    }

    pub fn eval(&self, s: f64) -> C {
        let n = self.values.len();
        if !(0.0..=self.top() * (1.0 + 1e-14)).contains(&s) {
            return ZERO;
        }
        let x = s / self.h;
        let j = (x.floor() as usize).min(n - 2);
        let width = n.min(4);
        let start = (j as isize - 1).clamp(0, (n - width) as isize) as usize;
        let mut acc = ZERO;
        for p in start..start + width {
            let mut w = 1.0;
            for q in start..start + width {
                if q != p {
                    w *= (x - q as f64) / (p as f64 - q as f64);
                }
            }
            acc += w * self.values[p];
        }
        if self.phase != 0.0 {
            acc *= C::new(0.0, self.phase * s).exp();
        }
        acc
    }

    /// Supremum of `|F|` over `per_segment` samples per knot interval.
    pub fn sup_abs(&self, per_segment: usize) -> f64 {
        let n = (self.values.len() - 1) * per_segment.max(1);
        (0..=n)
            .map(|i| self.eval(self.top() * i as f64 / n as f64).norm())
            .fold(0.0, f64::max)
    }
}

/// Tuning of the spectral solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralOptions {
    /// Relative quadrature tolerance for the variation-of-parameters
    /// integrals.
    pub quad_tol: f64,
    /// Modes whose forcing is below this fraction of the largest are
    /// skipped.
    pub skip_floor: f64,
    /// Zero-mode resolution as a multiple of the vertical grid.
    pub zero_mode_refine: usize,
    /// Points per mode for the ODE-residual check (0 disables it).
    pub residual_points: usize,
    /// Extra evaluation points per vertical interval for the mode bound.
    pub bound_samples: usize,
    pub kummer: KummerOptions,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            quad_tol: 1e-12,
            skip_floor: 1e-14,
            zero_mode_refine: 16,
            residual_points: 0,
            bound_samples: 1,
            kummer: KummerOptions::default(),
        }
    }
}

/// Weighted Kummer functions `(2 k s)^{b-1} e^{-y} M` and `(2 k s)^{b-1} U`.
struct Kernels {
    a: C,
    b: f64,
    k: f64,
    u: TricomiU,
}

impl Kernels {
    fn new(mode: &KummerMode, opts: KummerOptions) -> Result<Self> {
        Ok(Kernels {
            a: mode.a,
            b: mode.b,
            k: mode.k,
            u: TricomiU::new(mode.a, mode.b, opts)?,
        })
    }

    fn m_hat(&self, s: f64) -> Result<C> {
        Ok(hyp1f1_scaled(self.a, self.b, 2.0 * self.k * s)?.value)
    }

    fn m_weighted(&self, s: f64) -> Result<C> {
        let y = 2.0 * self.k * s;
        Ok(hyp1f1_scaled(self.a, self.b, y)?.value * y.powf(self.b - 1.0))
    }

    fn u(&self, s: f64) -> Result<C> {
        self.u.eval(2.0 * self.k * s)
    }

    fn u_weighted(&self, s: f64) -> Result<C> {
        self.u.eval_weighted(2.0 * self.k * s)
    }
}

/// Solution of one nonzero mode in the isotropic variable `s`.
pub struct ModeSolution {
    mode: KummerMode,
    forcing: Profile,
    kernels: Kernels,
    halfspace: bool,
    ratio: C,
    i1: Vec<C>,
    i2: Vec<C>,
    correction: C,
    quad_tol: f64,
}

fn solve_mode(
    mode: &KummerMode,
    forcing: &Profile,
    halfspace: bool,
    opts: &SpectralOptions,
) -> Result<ModeSolution> {
    if !(mode.a.re > 0.0) || !(mode.b > 0.0) {
        return Err(Error::Hypothesis(format!(
            "mode needs Re a > 0 and b > 0 (a = {}, b = {})",
            mode.a, mode.b
        )));
    }
    let kernels = Kernels::new(mode, opts.kummer)?;
    let ratio = (ln_gamma(mode.a)? - ln_gamma(C::new(mode.b, 0.0))?).exp();
    let n = forcing.len();
    let h = forcing.spacing();
    let k = mode.k;
    let decay = (-k * h).exp();
    let q = grading_exponent(mode.b);
    let tol = opts.quad_tol;
    let mut i1 = vec![ZERO; n];
    let mut i2 = vec![ZERO; n];
    if !forcing.is_zero() {
        let mut seg1 = vec![ZERO; n - 1];
        let mut seg2 = vec![ZERO; n - 1];
        for j in 0..n - 1 {
            let (lo, hi) = (forcing.knot(j), forcing.knot(j + 1));
            let f1 = |x: f64| Ok((k * (lo - x)).exp() * kernels.u_weighted(x)? * forcing.eval(x));
            let f2 = |x: f64| Ok((k * (x - hi)).exp() * kernels.m_weighted(x)? * forcing.eval(x));
            if j == 0 {
                seg1[j] = graded_from_zero_tol(hi, q, 0.0, tol, f1)?;
                seg2[j] = graded_from_zero_tol(hi, q, 0.0, tol, f2)?;
            } else {
                seg1[j] = adaptive_tol(lo, hi, 0.0, tol, f1)?;
                seg2[j] = adaptive_tol(lo, hi, 0.0, tol, f2)?;
            }
        }
        for j in (0..n - 1).rev() {
            i1[j] = seg1[j] + decay * i1[j + 1];
        }
        for j in 0..n - 1 {
            i2[j + 1] = decay * i2[j] + seg2[j];
        }
    }
    let mut sol = ModeSolution {
        mode: mode.clone(),
        forcing: forcing.clone(),
        kernels,
        halfspace,
        ratio,
        i1,
        i2,
        correction: ZERO,
        quad_tol: tol,
    };
    if !halfspace {
        let top = forcing.top();
        let m_top = sol.kernels.m_hat(top)?;
        if m_top.norm() < 1e-300 {
            return Err(Error::Hypothesis(format!(
                "M vanishes at the slab top for a = {}",
                mode.a
            )));
        }
        sol.correction = sol.particular_at_knot(n - 1)? / m_top;
    }
    Ok(sol)
}

/// Bounded solution on `[0, top]` with `w(top) = 0`, `top = forcing.top()`.
pub fn solve_mode_slab(
    mode: &KummerMode,
    forcing: &Profile,
    opts: &SpectralOptions,
) -> Result<ModeSolution> {
    solve_mode(mode, forcing, false, opts)
}

/// Bounded solution on `[0, inf)` decaying at infinity, with the forcing
/// taken as zero above `forcing.top()`.
pub fn solve_mode_halfspace(
    mode: &KummerMode,
    forcing: &Profile,
    opts: &SpectralOptions,
) -> Result<ModeSolution> {
    if !(mode.a.re > 0.0) {
        return Err(Error::Hypothesis("half-space mode needs Re a > 0".into()));
    }
    solve_mode(mode, forcing, true, opts)
}

impl ModeSolution {
    pub fn mode(&self) -> &KummerMode {
        &self.mode
    }

    pub fn forcing(&self) -> &Profile {
        &self.forcing
    }

    pub fn top(&self) -> f64 {
        self.forcing.top()
    }

    fn particular_at_knot(&self, j: usize) -> Result<C> {
        let s = self.forcing.knot(j);
        let mut acc = self.kernels.m_hat(s)? * self.i1[j];
        if j > 0 {
            acc += self.kernels.u(s)? * self.i2[j];
        }
        Ok(self.ratio * acc)
    }

    fn finish(&self, s: f64, particular: C) -> Result<C> {
        if self.halfspace || self.correction == ZERO {
            return Ok(particular);
        }
        Ok(particular
            - self.correction * (self.mode.k * (s - self.top())).exp() * self.kernels.m_hat(s)?)
    }

    /// Values at the forcing knots.
    pub fn knot_values(&self) -> Result<Vec<C>> {
        (0..self.forcing.len())
            .map(|j| {
                let p = self.particular_at_knot(j)?;
                self.finish(self.forcing.knot(j), p)
            })
            .collect()
    }

    /// `w(s)` for `s >= 0` (`s <= top` on a slab).
    pub fn eval(&self, s: f64) -> Result<C> {
        let top = self.top();
        let k = self.mode.k;
        if s < 0.0 || (!self.halfspace && s > top * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "mode evaluation at s = {s} outside [0, {top}]"
            )));
        }
        if s >= top {
            if !self.halfspace {
                let p = self.particular_at_knot(self.forcing.len() - 1)?;
                return self.finish(top, p);
            }
            let tail = self.ratio
                * self.kernels.u(s)?
                * (k * (top - s)).exp()
                * self.i2[self.forcing.len() - 1];
            return Ok(tail);
        }
        let h = self.forcing.spacing();
        let n = self.forcing.len();
        let j = ((s / h).floor() as usize).min(n - 2);
        let (lo, hi) = (self.forcing.knot(j), self.forcing.knot(j + 1));
        if s == lo {
            let p = self.particular_at_knot(j)?;
            return self.finish(s, p);
        }
        let tol = self.quad_tol;
        let kern = &self.kernels;
        let f = &self.forcing;
        let part1 = adaptive_tol(s, hi, 0.0, tol, |x| {
            Ok((k * (s - x)).exp() * kern.u_weighted(x)? * f.eval(x))
        })?;
        let part2 = if j == 0 {
            graded_from_zero_tol(s, grading_exponent(self.mode.b), 0.0, tol, |x| {
                Ok((k * (x - s)).exp() * kern.m_weighted(x)? * f.eval(x))
            })?
        } else {
            adaptive_tol(lo, s, 0.0, tol, |x| {
                Ok((k * (x - s)).exp() * kern.m_weighted(x)? * f.eval(x))
            })?
        };
        let i1 = part1 + (k * (s - hi)).exp() * self.i1[j + 1];
        let i2 = (k * (lo - s)).exp() * self.i2[j] + part2;
        let p = self.ratio * (kern.m_hat(s)? * i1 + kern.u(s)? * i2);
        self.finish(s, p)
    }

    /// Kummer-variable solution `v(y) = e^{y/2} w(y / 2k)`.
    pub fn v(&self, y: f64) -> Result<C> {
        Ok((0.5 * y).exp() * self.eval(y / self.mode.scale())?)
    }

    /// Relative residual of the mode equation at `points` interior points,
    /// by five-point fourth-order differences.
    pub fn residual(&self, points: usize) -> Result<f64> {
        let top = self.top();
        let k = self.mode.k;
        let h = (top / (8.0 * points.max(1) as f64)).min(0.02 / k.max(1.0));
        let zeroth = self.mode.zeroth_order();
        let b = self.mode.b;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..points {
            let s = 2.0 * h + (top - 4.0 * h) * (i as f64 + 0.5) / points as f64;
            let w: Vec<C> = (-2..=2)
                .map(|m| self.eval(s + m as f64 * h))
                .collect::<Result<_>>()?;
            let d1 = (w[0] - 8.0 * w[1] + 8.0 * w[3] - w[4]) / (12.0 * h);
            let d2 = (-w[0] + 16.0 * w[1] - 30.0 * w[2] + 16.0 * w[3] - w[4]) / (12.0 * h * h);
            let f = self.forcing.eval(s);
            let res = -s * d2 - b * d1 + (zeroth + k * k * s) * w[2] - f;
            worst = worst.max(res.norm());
            scale = scale
                .max(f.norm())
                .max(((zeroth + k * k * s) * w[2]).norm());
        }
        Ok(if scale == 0.0 { worst } else { worst / scale })
    }
}

/// Zero-frequency solution on a fine uniform grid.
#[derive(Clone, Debug)]
pub struct ZeroModeSolution {
    h: f64,
    values: Vec<C>,
    /// Relative change of the extrapolated solution under doubling.
    pub change: f64,
    /// Half-space only: relative change when the truncation height doubles.
    pub tail: Option<f64>,
}

impl ZeroModeSolution {
    /// Cubic interpolation of the fine-grid values.
    pub fn eval(&self, s: f64) -> C {
        Profile {
            h: self.h,
            values: self.values.clone(),
            phase: 0.0,
        }
        .eval(s)
    }

    pub fn values(&self) -> &[C] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }
}

/// Second-order scheme for `-s u'' - b u' + c u = F` on `[0, top]`, one
/// sided at `s = 0` without a boundary condition, `u(top) = 0`.
fn zero_mode_fd(b: f64, c: f64, forcing: &dyn Fn(f64) -> C, top: f64, n: usize) -> Result<Vec<C>> {
    let h = top / n as f64;
    let mut m = BandMatrix::zeros(n, 1, 2);
    let mut rhs_re = vec![0.0; n];
    let mut rhs_im = vec![0.0; n];
    m.add(0, 0, 3.0 * b / (2.0 * h) + c);
    m.add(0, 1, -4.0 * b / (2.0 * h));
    if n > 2 {
        m.add(0, 2, b / (2.0 * h));
    }
    for i in 1..n {
        let s = i as f64 * h;
        let diff = s / (h * h);
        let adv = b / (2.0 * h);
        m.add(i, i - 1, -diff + adv);
        m.add(i, i, 2.0 * diff + c);
        if i + 1 < n {
            m.add(i, i + 1, -diff - adv);
        }
    }
    for (i, (re, im)) in rhs_re.iter_mut().zip(rhs_im.iter_mut()).enumerate() {
        let f = forcing(i as f64 * h);
        *re = f.re;
        *im = f.im;
    }
    let re = m.clone().solve(&rhs_re)?;
    let im = if rhs_im.iter().any(|v| *v != 0.0) {
        m.solve(&rhs_im)?
    } else {
        vec![0.0; n]
    };
    let mut out: Vec<C> = re.into_iter().zip(im).map(|(r, i)| C::new(r, i)).collect();
    out.push(ZERO);
    Ok(out)
}

fn richardson(coarse: &[C], fine: &[C]) -> Vec<C> {
    coarse
        .iter()
        .enumerate()
        .map(|(i, c)| (4.0 * fine[2 * i] - c) / 3.0)
        .collect()
}

fn extrapolated(
    b: f64,
    c: f64,
    forcing: &dyn Fn(f64) -> C,
    top: f64,
    n: usize,
) -> Result<(Vec<C>, f64)> {
    let u1 = zero_mode_fd(b, c, forcing, top, n)?;
    let u2 = zero_mode_fd(b, c, forcing, top, 2 * n)?;
    let u4 = zero_mode_fd(b, c, forcing, top, 4 * n)?;
    let r1 = richardson(&u1, &u2);
    let r2 = richardson(&u2, &u4);
    let scale = r2.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let diff = r1
        .iter()
        .enumerate()
        .fold(0.0f64, |m, (i, v)| m.max((v - r2[2 * i]).norm()));
    let change = if scale > 0.0 { diff / scale } else { diff };
    Ok((r2, change))
}

/// Zero-frequency equation `-s u'' - b u' + c u = F` on `[0, top]`
/// (`top = forcing.top()`), with `u(top) = 0` on a slab and boundedness on
/// the half-space (realized by doubling the truncation height). Uses
/// `refine` fine cells per forcing interval and Richardson extrapolation.
pub fn solve_zero_mode(
    b: f64,
    c: f64,
    forcing: &Profile,
    halfspace: bool,
    refine: usize,
) -> Result<ZeroModeSolution> {
    if !(b > 0.0) || c < 0.0 {
        return Err(Error::Hypothesis(format!(
            "zero mode needs b > 0 and c >= 0 (b = {b}, c = {c})"
        )));
    }
    if halfspace && c <= 0.0 {
        return Err(Error::Hypothesis("half-space zero mode needs c > 0".into()));
    }
    let top = forcing.top();
    let n = (forcing.len() - 1) * refine.max(1);
    let f = |s: f64| forcing.eval(s);
    if !halfspace {
        let (values, change) = extrapolated(b, c, &f, top, n)?;
        return Ok(ZeroModeSolution {
            h: top / (2 * n) as f64,
            values,
            change,
            tail: None,
        });
    }
    let (short, _) = extrapolated(b, c, &f, top, n)?;
    let (tall, change) = extrapolated(b, c, &f, 2.0 * top, 2 * n)?;
    let kept: Vec<C> = tall[..=2 * n].to_vec();
    let scale = kept.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let diff = short
        .iter()
        .zip(&kept)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
    Ok(ZeroModeSolution {
        h: top / (2 * n) as f64,
        values: kept,
        change,
        tail: Some(if scale > 0.0 { diff / scale } else { diff }),
    })
}

/// Per-mode diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct ModeReport {
    /// Flat index into the tangential FFT array.
    pub index: usize,
    pub omega: Vec<f64>,
    pub k: f64,
    pub a: Option<[f64; 2]>,
    pub sup_u: f64,
    pub sup_f: f64,
    /// `sup |u| <= sup |f| / c` (only meaningful for `c > 0`).
    pub bound_holds: Option<bool>,
    /// `|w(top)| / sup |w|` on slabs.
    pub endpoint: Option<f64>,
    pub residual: Option<f64>,
    /// Half-space: `|w(2 top)| / sup |w|`.
    pub decay: Option<f64>,
}

/// Aggregate diagnostics of a spectral solve.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralDiagnostics {
    pub halfspace: bool,
    pub modes_total: usize,
    pub modes_solved: usize,
    pub modes_skipped: usize,
    pub max_imaginary: f64,
    pub fd_residual_max: Option<f64>,
    pub bound_violations: usize,
    pub max_mode_residual: Option<f64>,
    pub max_endpoint: Option<f64>,
    pub zero_mode_change: Option<f64>,
    pub tail_estimate: Option<f64>,
    pub modes: Vec<ModeReport>,
}

/// Output of [`solve_constant_slab`] and [`solve_constant_halfspace`].
#[derive(Clone, Debug)]
pub struct SpectralSolution {
    pub u: GridFunction,
    /// `A u - f` with the grid stencils (absent on grids too coarse for
    /// them).
    pub residual: Option<GridFunction>,
    pub diagnostics: SpectralDiagnostics,
}

struct Transform {
    n: usize,
    axes: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Transform {
    fn new(n: usize, axes: usize) -> Self {
        let mut planner = FftPlanner::new();
        Transform {
            n,
            axes,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn run(&self, data: &mut [C], inverse: bool) {
        let n = self.n;
        let fft = if inverse {
            &self.inverse
        } else {
            &self.forward
        };
        let mut line = vec![ZERO; n];
        for axis in 0..self.axes {
            let stride = n.pow((self.axes - 1 - axis) as u32);
            let block = stride * n;
            for base in (0..data.len()).step_by(block) {
                for off in 0..stride {
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = data[base + off + i * stride];
                    }
                    fft.process(&mut line);
                    for (i, v) in line.iter().enumerate() {
                        data[base + off + i * stride] = *v;
                    }
                }
            }
        }
        if !inverse {
            let norm = 1.0 / data.len() as f64;
            for v in data.iter_mut() {
                *v *= norm;
            }
        }
    }
}

fn multi_index(flat: usize, n: usize, axes: usize) -> Vec<usize> {
    let mut out = vec![0; axes];
    let mut r = flat;
    for a in (0..axes).rev() {
        out[a] = r % n;
        r /= n;
    }
    out
}

/// Signed frequency variants of a multi-index: one, or one per sign choice
/// of each Nyquist component.
fn frequency_variants(m: &[usize], n: usize, period: f64) -> Vec<Vec<f64>> {
    let unit = TAU / period;
    let mut variants = vec![Vec::with_capacity(m.len())];
    for &mi in m {
        let signed = if 2 * mi < n {
            mi as f64
        } else {
            mi as f64 - n as f64
        };
        if n.is_multiple_of(2) && 2 * mi == n {
            let mut next = Vec::with_capacity(variants.len() * 2);
            for v in &variants {
                for sign in [1.0, -1.0] {
                    let mut w = v.clone();
                    w.push(sign * signed.abs() * unit);
                    next.push(w);
                }
            }
            variants = next;
        } else {
            for v in variants.iter_mut() {
                v.push(signed * unit);
            }
        }
    }
    variants
}

struct ModeOutcome {
    values: Vec<C>,
    report: ModeReport,
    zero_change: Option<f64>,
    tail: Option<f64>,
}

fn solve_constant(
    coeffs: &CoefficientField,
    f: &GridFunction,
    halfspace: bool,
    opts: &SpectralOptions,
) -> Result<SpectralSolution> {
    let grid = f.grid();
    let d = grid.dim();
    if coeffs.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: coeffs.dim(),
            got: d,
        });
    }
    let base = coeffs.constant_parts()?;
    let c = base.c;
    if c < 0.0 {
        return Err(Error::Hypothesis(format!("c = {c} must be nonnegative")));
    }
    if halfspace && c <= 0.0 {
        return Err(Error::Hypothesis(
            "the half-space problem needs c > 0".into(),
        ));
    }
    let iso = isotropize(coeffs)?;
    let t = iso.vertical_scale;
    let shear = iso.shear.clone();
    let iso_coeffs = iso.coeffs.clone();
    let l_inv_t = iso
        .tangential
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Hypothesis("singular tangential map".into()))?
        .transpose();
    let bd = t * base.b[d - 1];

    let n = grid.n_tangential();
    let axes = d - 1;
    let m_count = grid.level_size();
    let levels = grid.levels();
    let transform = Transform::new(n, axes);
    let hat: Vec<Vec<C>> = (0..levels)
        .into_par_iter()
        .map(|j| {
            let mut data: Vec<C> = f.level(j).iter().map(|v| C::new(*v, 0.0)).collect();
            transform.run(&mut data, false);
            data
        })
        .collect();
    let magnitude: Vec<f64> = (0..m_count)
        .map(|m| (0..levels).map(|j| hat[j][m].norm()).fold(0.0, f64::max))
        .collect();
    let global = magnitude.iter().cloned().fold(0.0, f64::max);
    let hs = t * grid.h_vertical();

    let outcomes: Vec<std::result::Result<Option<ModeOutcome>, (usize, String)>> = (0..m_count)
        .into_par_iter()
        .map(|m| {
            if global == 0.0 || magnitude[m] < opts.skip_floor * global {
                return Ok(None);
            }
            let column: Vec<C> = (0..levels).map(|j| hat[j][m]).collect();
            let idx = multi_index(m, n, axes);
            let variants = frequency_variants(&idx, n, grid.period());
            let solve = || -> Result<ModeOutcome> {
                let mut values = vec![ZERO; levels];
                let mut report = None;
                let mut zero_change = None;
                let mut tail = None;
                for omega in &variants {
                    let (vals, rep, zc, tl) = solve_one(
                        m,
                        omega,
                        &column,
                        t,
                        hs,
                        &shear,
                        &l_inv_t,
                        bd,
                        c,
                        &iso_coeffs,
                        grid,
                        halfspace,
                        opts,
                    )?;
                    for (acc, v) in values.iter_mut().zip(vals) {
                        *acc += v / variants.len() as f64;
                    }
                    report.get_or_insert(rep);
                    zero_change = zero_change.or(zc);
                    tail = tail.or(tl);
                }
                Ok(ModeOutcome {
                    values,
                    report: report.expect("at least one variant"),
                    zero_change,
                    tail,
                })
            };
            solve().map(Some).map_err(|e| (m, e.to_string()))
        })
        .collect();

    let mut failures = Vec::new();
    let mut spectrum = vec![vec![ZERO; m_count]; levels];
    let mut reports = Vec::new();
    let mut skipped = 0;
    let mut zero_mode_change = None;
    let mut tail_estimate: Option<f64> = None;
    for (m, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Err(e) => failures.push(e),
            Ok(None) => skipped += 1,
            Ok(Some(o)) => {
                for (j, v) in o.values.iter().enumerate() {
                    spectrum[j][m] = *v;
                }
                if o.zero_change.is_some() {
                    zero_mode_change = o.zero_change;
                }
                if let Some(tl) = o.tail {
                    tail_estimate = Some(tail_estimate.unwrap_or(0.0).max(tl));
                }
                reports.push(o.report);
            }
        }
    }
    if !failures.is_empty() {
        return Err(Error::Modes(failures));
    }

    let mut values = vec![0.0; grid.node_count()];
    let mut max_imag = 0.0f64;
    let rows: Vec<(Vec<f64>, f64)> = spectrum
        .into_par_iter()
        .map(|mut data| {
            transform.run(&mut data, true);
            let imag = data.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
            (data.into_iter().map(|v| v.re).collect(), imag)
        })
        .collect();
    for (j, (row, imag)) in rows.into_iter().enumerate() {
        values[j * m_count..(j + 1) * m_count].copy_from_slice(&row);
        max_imag = max_imag.max(imag);
    }
    let u = GridFunction::new(grid.clone(), values)?;
    let residual = if grid.n_tangential() >= 3 && grid.levels() >= 3 {
        let au = apply_operator(coeffs, &u)?;
        Some(au.zip_with(f, |a, b| a - b)?)
    } else {
        None
    };
    let max_of =
        |sel: fn(&ModeReport) -> Option<f64>| reports.iter().filter_map(sel).reduce(f64::max);
    let diagnostics = SpectralDiagnostics {
        halfspace,
        modes_total: m_count,
        modes_solved: reports.len(),
        modes_skipped: skipped,
        max_imaginary: max_imag,
        fd_residual_max: residual.as_ref().map(|r| r.max_abs()),
        bound_violations: reports
            .iter()
            .filter(|r| r.bound_holds == Some(false))
            .count(),
        max_mode_residual: max_of(|r| r.residual),
        max_endpoint: max_of(|r| r.endpoint),
        zero_mode_change,
        tail_estimate,
        modes: reports,
    };
    Ok(SpectralSolution {
        u,
        residual,
        diagnostics,
    })
}

type OneMode = (Vec<C>, ModeReport, Option<f64>, Option<f64>);

#[allow(clippy::too_many_arguments)]
fn solve_one(
    index: usize,
    omega: &[f64],
    column: &[C],
    t: f64,
    hs: f64,
    shear: &[f64],
    l_inv_t: &nalgebra::DMatrix<f64>,
    bd: f64,
    c: f64,
    iso_coeffs: &CoefficientField,
    grid: &SlabGrid,
    halfspace: bool,
    opts: &SpectralOptions,
) -> Result<OneMode> {
    let levels = column.len();
    let tilt: f64 = omega.iter().zip(shear).map(|(w, x)| w * x).sum();
    // F(s) = f(s / t) e^{-i omega.xi' s / t}; solution u(x_d) = w(t x_d) e^{i omega.xi' x_d}
    let forcing = Profile::new(hs, column.to_vec(), -tilt / t)?;
    let sup_f = forcing.sup_abs(8);
    let omega_v = nalgebra::DVector::from_column_slice(omega);
    let eta = l_inv_t * &omega_v;
    let k = eta.norm();
    let phase = |j: usize| C::new(0.0, tilt * grid.x_d(j)).exp();
    if k == 0.0 {
        let zero = solve_zero_mode(bd, c, &forcing, halfspace, opts.zero_mode_refine)?;
        let values: Vec<C> = (0..levels).map(|j| zero.eval(t * grid.x_d(j))).collect();
        let sup_u = zero.values().iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let report = ModeReport {
            index,
            omega: omega.to_vec(),
            k: 0.0,
            a: None,
            sup_u,
            sup_f,
            bound_holds: (c > 0.0).then(|| sup_u <= (1.0 + 1e-6) * sup_f / c + 1e-300),
            endpoint: None,
            residual: None,
            decay: None,
        };
        return Ok((values, report, Some(zero.change), zero.tail));
    }
    let neg: Vec<f64> = eta.iter().map(|v| -v).collect();
    let mode = mode_params(iso_coeffs, &neg)?;
    let sol = if halfspace {
        solve_mode_halfspace(&mode, &forcing, opts)?
    } else {
        solve_mode_slab(&mode, &forcing, opts)?
    };
    let knots = sol.knot_values()?;
    let mut sup_u = knots.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if opts.bound_samples > 0 {
        for j in 0..levels - 1 {
            for p in 1..=opts.bound_samples {
                let s = hs * (j as f64 + p as f64 / (opts.bound_samples + 1) as f64);
                sup_u = sup_u.max(sol.eval(s)?.norm());
            }
        }
    }
    let values: Vec<C> = knots
        .iter()
        .enumerate()
        .map(|(j, w)| w * phase(j))
        .collect();
    let endpoint = (!halfspace).then(|| {
        let top = sol.eval(sol.top()).map(|v| v.norm()).unwrap_or(f64::NAN);
        if sup_u > 0.0 {
            top / sup_u
        } else {
            top
        }
    });
    let residual = if opts.residual_points > 0 {
        Some(sol.residual(opts.residual_points)?)
    } else {
        None
    };
    let decay = if halfspace {
        let far = sol.eval(2.0 * sol.top())?.norm();
        Some(if sup_u > 0.0 { far / sup_u } else { far })
    } else {
        None
    };
    let report = ModeReport {
        index,
        omega: omega.to_vec(),
        k,
        a: Some([mode.a.re, mode.a.im]),
        sup_u,
        sup_f,
        bound_holds: (c > 0.0).then(|| sup_u <= (1.0 + 1e-9) * sup_f / c),
        endpoint,
        residual,
        decay,
    };
    Ok((values, report, None, None))
}

/// Slab solve `A u = f` on `0 <= x_d <= nu` with `u = 0` at the top, for
/// constant coefficients with `b^d > 0`, `c >= 0`.
pub fn solve_constant_slab(
    coeffs: &CoefficientField,
    f: &GridFunction,
    opts: &SpectralOptions,
) -> Result<SpectralSolution> {
    solve_constant(coeffs, f, false, opts)
}

/// Half-space solve with `c > 0`: `f` is taken as zero above the grid top
/// and each mode uses the decaying solution.
pub fn solve_constant_halfspace(
    coeffs: &CoefficientField,
    f: &GridFunction,
    opts: &SpectralOptions,
) -> Result<SpectralSolution> {
    solve_constant(coeffs, f, true, opts)
}
