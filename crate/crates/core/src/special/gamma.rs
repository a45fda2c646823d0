//! Complex gamma, reciprocal gamma, log-gamma and digamma.
//!
//! Lanczos approximation (g = 7, nine terms) on `Re z >= 1/2`, reflection
//! elsewhere.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// sin(πz) and cos(πz) with the real part reduced exactly first, so values
/// near the integers keep full relative accuracy.
pub fn sin_cos_pi(z: Complex64) -> (Complex64, Complex64) {
    let n = z.re.round();
    let r = z.re - n;
    let sign = if (n as i64) % 2 == 0 { 1.0 } else { -1.0 };
    let (sr, cr) = (PI * r).sin_cos();
    let (sr, cr) = (sign * sr, sign * cr);
    let y = PI * z.im;
    (
        Complex64::new(sr * y.cosh(), cr * y.sinh()),
        Complex64::new(cr * y.cosh(), -sr * y.sinh()),
    )
}

fn is_pole(z: Complex64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round()
}

/// ln Γ(z) for Re z >= 1/2.
fn lanczos_ln(z: Complex64) -> Complex64 {
    let zz = z - 1.0;
    let mut x = Complex64::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (zz + i as f64);
    }
    let t = zz + LANCZOS_G + 0.5;
    HALF_LN_TWO_PI + (zz + 0.5) * t.ln() - t + x.ln()
}

/// Γ(z). Nonpositive integers are poles.
pub fn gamma(z: Complex64) -> Result<Complex64> {
    if is_pole(z) {
        return Err(Error::GammaPole(format!("gamma({z})")));
    }
    if z.re < 0.5 {
        let s = sin_cos_pi(z).0;
        Ok(PI / (s * lanczos_ln(1.0 - z).exp()))
    } else {
        Ok(lanczos_ln(z).exp())
    }
}

pub fn gamma_real(x: f64) -> Result<f64> {
    gamma(Complex64::new(x, 0.0)).map(|g| g.re)
}

/// 1/Γ(z), entire: exactly zero at the poles of Γ.
pub fn rgamma(z: Complex64) -> Complex64 {
    if is_pole(z) {
        return Complex64::new(0.0, 0.0);
    }
    if z.re < 0.5 {
        sin_cos_pi(z).0 * lanczos_ln(1.0 - z).exp() / PI
    } else {
        (-lanczos_ln(z)).exp()
    }
}

/// A logarithm of Γ(z) (principal branch for Re z >= 1/2; elsewhere correct
/// modulo 2πi).
pub fn ln_gamma(z: Complex64) -> Result<Complex64> {
    if is_pole(z) {
        return Err(Error::GammaPole(format!("ln_gamma({z})")));
    }
    if z.re < 0.5 {
        Ok(Complex64::new(PI.ln(), 0.0) - sin_cos_pi(z).0.ln() - lanczos_ln(1.0 - z))
    } else {
        Ok(lanczos_ln(z))
    }
}

/// Digamma ψ(z) = Γ'(z)/Γ(z).
pub fn digamma(z: Complex64) -> Result<Complex64> {
    if is_pole(z) {
        return Err(Error::GammaPole(format!("digamma({z})")));
    }
    if z.re < 0.5 {
        let (s, c) = sin_cos_pi(z);
        let cot = c / s;
        return Ok(digamma(1.0 - z)? - PI * cot);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    let mut w = z;
    while w.norm() < 10.0 {
        acc -= 1.0 / w;
        w += 1.0;
    }
    // Bernoulli tail B_{2k} / (2k)
    const TAIL: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
    ];
    let inv2 = 1.0 / (w * w);
    let mut p = inv2;
    let mut series = Complex64::new(0.0, 0.0);
    for c in TAIL {
        series += c * p;
        p *= inv2;
    }
    Ok(acc + w.ln() - 0.5 / w - series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Γ(z) = ∫_0^∞ t^{z-1} e^{-t} dt with t = e^s, trapezoid in s.
    fn gamma_oracle(z: Complex64) -> Complex64 {
        let h = 1e-3;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut s = -40.0 / z.re;
        while s < 5.0 {
            let t: f64 = f64::exp(s);
            sum += (z * s).exp() * (-t).exp();
            s += h;
        }
        sum * h
    }

    #[test]
    fn known_values() {
        assert!((gamma(c(1.0, 0.0)).unwrap() - 1.0).norm() < 1e-14);
        assert!((gamma_real(0.5).unwrap() - PI.sqrt()).abs() < 1e-13);
        assert!((gamma_real(1.5).unwrap() - PI.sqrt() / 2.0).abs() < 1e-13);
        assert!((gamma_real(10.0).unwrap() - 362_880.0).abs() < 1e-7);
        assert!((gamma_real(-0.5).unwrap() + 2.0 * PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn matches_quadrature_oracle() {
        for z in [
            c(1.0, 1.0),
            c(0.5, 0.0),
            c(2.3, -4.1),
            c(0.2, 0.7),
            c(7.5, 3.0),
        ] {
            let g = gamma(z).unwrap();
            let o = gamma_oracle(z);
            assert!((g - o).norm() <= 1e-10 * o.norm(), "{z}: {g} vs {o}");
        }
        // Γ(1+i) reference
        let g = gamma(c(1.0, 1.0)).unwrap();
        assert!((g - c(0.498_015_668_118_356, -0.154_949_828_301_810_68)).norm() < 1e-13);
    }

    #[test]
    fn reflection_and_recurrence() {
        for z in [c(-2.5, 0.3), c(-0.3, -1.2), c(0.1, 5.0), c(-7.2, 0.0)] {
            let lhs = gamma(z + 1.0).unwrap();
            let rhs = z * gamma(z).unwrap();
            assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm(), "{z}");
        }
        let z = c(3.3, 45.0);
        let g = gamma(z).unwrap();
        let l = ln_gamma(z).unwrap().exp();
        assert!((g - l).norm() <= 1e-10 * g.norm());
    }

    #[test]
    fn near_pole_accuracy() {
        let delta = 2f64.powi(-20);
        let g = gamma_real(-1.0 - delta).unwrap();
        let expected = gamma_real(1.0 - delta).unwrap() / ((-1.0 - delta) * -delta);
        assert!((g / expected - 1.0).abs() < 1e-13);
        let z = c(3.5, 0.2);
        let (sn, cs) = sin_cos_pi(z);
        assert!((sn - (PI * z).sin()).norm() < 1e-14);
        assert!((cs - (PI * z).cos()).norm() < 1e-14);
    }

    #[test]
    fn poles() {
        assert!(matches!(gamma(c(0.0, 0.0)), Err(Error::GammaPole(_))));
        assert!(matches!(gamma(c(-3.0, 0.0)), Err(Error::GammaPole(_))));
        assert_eq!(rgamma(c(-4.0, 0.0)), c(0.0, 0.0));
        let r = rgamma(c(-4.0 + 1e-9, 0.0));
        assert!(r.norm() < 1e-6 && r.norm() > 0.0);
    }

    #[test]
    fn digamma_values() {
        assert!((digamma(c(1.0, 0.0)).unwrap().re + EULER_GAMMA).abs() < 1e-14);
        let half = digamma(c(0.5, 0.0)).unwrap().re;
        assert!((half - (-EULER_GAMMA - 2.0 * 2f64.ln())).abs() < 1e-14);
        // derivative of ln Γ by central differences
        let z = c(1.7, 2.2);
        let h = 1e-5;
        let fd = (ln_gamma(z + h).unwrap() - ln_gamma(z - h).unwrap()) / (2.0 * h);
        assert!((digamma(z).unwrap() - fd).norm() < 1e-8);
        let z = c(-1.3, 0.4);
        let lhs = digamma(z + 1.0).unwrap();
        assert!((lhs - digamma(z).unwrap() - 1.0 / z).norm() < 1e-12);
    }
}
