//! Special functions behind the coefficient integrals.
//!
//! The dispersion kernels are written in terms of the scaled argument
//! `A = 4 * beta * a`, so `cal_g2(a, b, beta)` integrates
//! `exp(i (A z1 + B z2))` over `0 < z2 < z1 < 1`.

use crate::error::{invalid, Result};
use crate::quad::{adaptive, AdaptiveOpts};
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_4, PI};

const I: Complex64 = Complex64::new(0.0, 1.0);
const SERIES_CUTOFF: f64 = 0.25;

/// `sin(x) / x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Complex `sin(z) / z`.
pub fn csinc(z: Complex64) -> Complex64 {
    if z.norm() < 1e-3 {
        let z2 = z * z;
        Complex64::new(1.0, 0.0) - z2 / 6.0 + z2 * z2 / 120.0 - z2 * z2 * z2 / 5040.0
    } else {
        z.sin() / z
    }
}

/// `G(x) = -i * int_0^1 exp(-i z x) dz`.
pub fn cal_g(x: f64) -> Complex64 {
    if x.abs() < SERIES_CUTOFF {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 0..20 {
            sum += term / (k as f64 + 1.0);
            term *= -I * x / (k as f64 + 1.0);
        }
        -I * sum
    } else {
        Complex64::new((x.cos() - 1.0) / x, -x.sin() / x)
    }
}

/// `G1(x) = -i * int_0^1 z exp(-i z x) dz`.
pub fn cal_g1(x: f64) -> Complex64 {
    if x.abs() < SERIES_CUTOFF {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 0..20 {
            sum += term / (k as f64 + 2.0);
            term *= -I * x / (k as f64 + 1.0);
        }
        -I * sum
    } else {
        let (s, c) = x.sin_cos();
        let x2 = x * x;
        Complex64::new((c - 1.0) / x + (x - s) / x2, (1.0 - c - x * s) / x2)
    }
}

/// Moments `psi_n(u) = int_0^1 z^n exp(i u z) dz` for `n = 0..=nmax`.
pub fn exp_moments(u: f64, nmax: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); nmax + 1];
    if u.abs() <= 1.0 {
        // power series, all terms positive in magnitude and rapidly decaying
        for (n, o) in out.iter_mut().enumerate() {
            let mut term = Complex64::new(1.0, 0.0);
            let mut sum = Complex64::new(0.0, 0.0);
            for k in 0..40 {
                sum += term / (n + k + 1) as f64;
                term *= I * u / (k + 1) as f64;
                if term.norm() < 1e-18 {
                    break;
                }
            }
            *o = sum;
        }
        return out;
    }
    // upward recurrence is stable for n <= |u|, downward (Miller) above that
    let eiu = Complex64::from_polar(1.0, u);
    let iu = I * u;
    let nlow = nmax.min(u.abs().floor() as usize);
    out[0] = (eiu - 1.0) / iu;
    for n in 1..=nlow {
        out[n] = (eiu - out[n - 1] * n as f64) / iu;
    }
    if nmax > nlow {
        let start = nmax + 2 * u.abs().ceil() as usize + 40;
        let mut psi = eiu / (start as f64 + 1.0);
        for n in (nlow + 2..=start).rev() {
            psi = (eiu - iu * psi) / n as f64;
            if n - 1 <= nmax {
                out[n - 1] = psi;
            }
        }
    }
    out
}

/// `G2(a, b) = int_0^1 dz1 int_0^z1 dz2 exp(4 i beta (z1 a + z2 b))`.
pub fn cal_g2(a: f64, b: f64, beta: f64) -> Complex64 {
    let aa = 4.0 * beta * a;
    let bb = 4.0 * beta * b;
    if bb.abs() >= SERIES_CUTOFF {
        let p = |u: f64| exp_moments(u, 0)[0];
        (p(aa + bb) - p(aa)) / (I * bb)
    } else {
        let psi = exp_moments(aa, 22);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut coef = Complex64::new(1.0, 0.0);
        for n in 0..21 {
            sum += coef * psi[n + 1];
            coef *= I * bb / (n as f64 + 2.0);
        }
        sum
    }
}

/// Inner integral of `z2 exp(i (A z1 + B z2))` over `0 < z2 < z1 < 1`.
fn lower_weighted(aa: f64, bb: f64) -> Complex64 {
    if bb.abs() >= SERIES_CUTOFF {
        let ps = exp_moments(aa + bb, 1);
        let p0 = exp_moments(aa, 0)[0];
        ps[1] / (I * bb) + (ps[0] - p0) / (bb * bb)
    } else {
        let psi = exp_moments(aa, 24);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut coef = Complex64::new(1.0, 0.0);
        for n in 0..22 {
            sum += coef * psi[n + 2] / (n as f64 + 2.0);
            coef *= I * bb / (n as f64 + 1.0);
        }
        sum
    }
}

/// `G3(a, b) = int_0^1 int_0^1 min(z1, z2) exp(4 i beta (z1 a + z2 b)) dz1 dz2`.
pub fn cal_g3(a: f64, b: f64, beta: f64) -> Complex64 {
    let aa = 4.0 * beta * a;
    let bb = 4.0 * beta * b;
    lower_weighted(aa, bb) + lower_weighted(bb, aa)
}

/// Number of terms kept in the Salzer series.
pub const SALZER_TERMS: usize = 12;

/// Largest `|b|` accepted by the Salzer path.
pub const SALZER_MAX_B: f64 = 15.0;

/// Precomputed b-dependent parts of the Salzer series for `E(a, b)`.
#[derive(Debug, Clone)]
pub struct SalzerTable {
    b: f64,
    conj: bool,
    cosh_terms: [Complex64; SALZER_TERMS],
    sinh_terms: [Complex64; SALZER_TERMS],
    denom_shift: [Complex64; SALZER_TERMS],
}

impl SalzerTable {
    /// Builds the table; negative `b` is handled through `E(a,-b) = conj(E(conj a, b))`.
    pub fn new(b: f64) -> Result<SalzerTable> {
        if b.abs() > SALZER_MAX_B {
            return Err(invalid(format!(
                "Salzer path requires |b| <= {SALZER_MAX_B}, got {b}"
            )));
        }
        let conj = b < 0.0;
        let bp = b.abs();
        let sb = bp.sqrt();
        let rot = Complex64::from_polar(1.0, FRAC_PI_4);
        let mut cosh_terms = [Complex64::new(0.0, 0.0); SALZER_TERMS];
        let mut sinh_terms = cosh_terms;
        let mut denom_shift = cosh_terms;
        for k in 0..SALZER_TERMS {
            let n = (k + 1) as f64;
            let damp = (-n * n / 4.0).exp();
            let arg = rot * (0.5 * sb * n);
            cosh_terms[k] = arg.cosh() * damp;
            sinh_terms[k] = rot * (sb * n) * arg.sinh() * damp;
            denom_shift[k] = Complex64::new(0.0, bp * n * n);
        }
        Ok(SalzerTable {
            b,
            conj,
            cosh_terms,
            sinh_terms,
            denom_shift,
        })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `E(a, b)` for the tabulated `b`.
    pub fn eval(&self, a: Complex64) -> Complex64 {
        if self.conj {
            return self.eval_positive(a.conj()).conj();
        }
        self.eval_positive(a)
    }

    /// `E~(a, b) = int exp(-i b y^2 - i a y) dy` for the tabulated `b`.
    pub fn eval_tilde(&self, a: Complex64) -> Complex64 {
        // y -> -y and conjugation give E~(a, b) = conj(E(conj a, b)) for real b
        self.eval(a.conj()).conj()
    }

    fn eval_positive(&self, a: Complex64) -> Complex64 {
        let half = a * 0.5;
        if self.b == 0.0 {
            return csinc(half);
        }
        let (s, c) = (half.sin(), half.cos());
        let a2 = a * a;
        let asin = a * s;
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 0..SALZER_TERMS {
            sum += (asin * self.cosh_terms[k] + c * self.sinh_terms[k]) / (a2 + self.denom_shift[k]);
        }
        (csinc(half) * 0.5 + sum * 2.0) / PI.sqrt()
    }
}

/// `E(a, b) = int_{-1/2}^{1/2} exp(i b y^2 + i a y) dy`.
///
/// Uses the Salzer series for `|b| <= 15` and adaptive quadrature otherwise.
pub fn fresnel_e(a: Complex64, b: f64) -> Complex64 {
    match SalzerTable::new(b) {
        Ok(t) => t.eval(a),
        Err(_) => fresnel_e_quad(a, b).expect("quadrature fallback for E(a,b)"),
    }
}

/// `E~(a, b) = int_{-1/2}^{1/2} exp(-i b y^2 - i a y) dy`.
pub fn fresnel_e_tilde(a: Complex64, b: f64) -> Complex64 {
    fresnel_e(a.conj(), b).conj()
}

/// Salzer-only variant that refuses arguments outside the validity box.
pub fn fresnel_e_salzer(a: Complex64, b: f64) -> Result<Complex64> {
    Ok(SalzerTable::new(b)?.eval(a))
}

/// `E(a, b)` by adaptive Gauss-Kronrod quadrature.
pub fn fresnel_e_quad(a: Complex64, b: f64) -> Result<Complex64> {
    let opts = AdaptiveOpts {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        max_intervals: 4000,
    };
    adaptive(|y| (I * (b * y * y + a * y)).exp(), -0.5, 0.5, opts)
}

/// `E~(a, b)` by adaptive quadrature of its own integrand.
pub fn fresnel_e_tilde_quad(a: Complex64, b: f64) -> Result<Complex64> {
    let opts = AdaptiveOpts {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        max_intervals: 4000,
    };
    adaptive(|y| (-I * (b * y * y + a * y)).exp(), -0.5, 0.5, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gauss_legendre;
    use proptest::prelude::*;

    fn g2_brute(a: f64, b: f64, beta: f64) -> Complex64 {
        let r = gauss_legendre(60).mapped(0.0, 1.0);
        let mut s = Complex64::new(0.0, 0.0);
        for (z1, w1) in r.iter() {
            let inner = gauss_legendre(60).mapped(0.0, z1);
            for (z2, w2) in inner.iter() {
                s += (I * 4.0 * beta * (z1 * a + z2 * b)).exp() * (w1 * w2);
            }
        }
        s
    }

    fn g3_brute(a: f64, b: f64, beta: f64) -> Complex64 {
        let r = gauss_legendre(60).mapped(0.0, 1.0);
        let mut s = Complex64::new(0.0, 0.0);
        for (z1, w1) in r.iter() {
            for (lo, hi) in [(0.0, z1), (z1, 1.0)] {
                for (z2, w2) in gauss_legendre(60).mapped(lo, hi).iter() {
                    s += (I * 4.0 * beta * (z1 * a + z2 * b)).exp() * (w1 * w2 * z1.min(z2));
                }
            }
        }
        s
    }

    #[test]
    fn g_values_at_origin() {
        assert!((cal_g(0.0) + I).norm() < 1e-15);
        assert!((cal_g1(0.0) + I * 0.5).norm() < 1e-15);
        assert!((cal_g2(0.0, 0.0, 1.0) - 0.5).norm() < 1e-15);
        assert!((cal_g3(0.0, 0.0, 1.0) - 1.0 / 3.0).norm() < 1e-15);
    }

    #[test]
    fn g_branches_are_continuous() {
        for &x in &[0.2499999, 0.2500001, -0.25, 1e-9] {
            let direct = -I * crate::quad::adaptive(|z| (-I * z * x).exp(), 0.0, 1.0, Default::default()).unwrap();
            assert!((cal_g(x) - direct).norm() < 1e-12);
            let direct1 = -I * crate::quad::adaptive(|z| (-I * z * x).exp() * z, 0.0, 1.0, Default::default()).unwrap();
            assert!((cal_g1(x) - direct1).norm() < 1e-12);
        }
    }

    #[test]
    fn g2_matches_brute_force_near_singular_sets() {
        let cases = [
            (0.3, 0.0, 1.0),
            (0.3, -0.3, 1.0),
            (0.0, 0.7, 2.0),
            (0.01, 0.02, 0.5),
            (2.0, 1e-5, 5.0),
            (-1.3, 1.3 + 1e-7, 3.0),
            (0.9, -0.4, 10.0),
        ];
        for &(a, b, beta) in &cases {
            let d = (cal_g2(a, b, beta) - g2_brute(a, b, beta)).norm();
            assert!(d < 1e-12, "G2({a},{b},{beta}) off by {d}");
        }
    }

    #[test]
    fn g3_matches_brute_force() {
        let cases = [(0.3, 0.0, 1.0), (0.3, -0.3, 1.0), (0.0, 0.7, 2.0), (0.9, -0.4, 10.0), (1e-6, 1e-6, 1.0)];
        for &(a, b, beta) in &cases {
            let d = (cal_g3(a, b, beta) - g3_brute(a, b, beta)).norm();
            assert!(d < 1e-12, "G3({a},{b},{beta}) off by {d}");
        }
    }

    #[test]
    fn moments_match_both_branches() {
        for &u in &[0.5, 1.0, 1.0001, 7.0, -23.0, 60.0] {
            let m = exp_moments(u, 10);
            for (n, v) in m.iter().enumerate() {
                let q = crate::quad::adaptive(|z| (I * u * z).exp() * z.powi(n as i32), 0.0, 1.0, Default::default()).unwrap();
                assert!((v - q).norm() < 1e-13, "psi_{n}({u})");
            }
        }
    }

    #[test]
    fn salzer_real_arguments() {
        let mut worst: f64 = 0.0;
        for ia in -20..=20 {
            for ib in -6..=6 {
                let a = Complex64::new(ia as f64 * 5.0 + 0.37, 0.0);
                let b = ib as f64 * 2.5;
                let d = (fresnel_e(a, b) - fresnel_e_quad(a, b).unwrap()).norm();
                worst = worst.max(d);
            }
        }
        assert!(worst < 1e-6, "max error {worst}");
    }

    #[test]
    fn salzer_complex_shift_and_tilde() {
        for &(re, im, b) in &[(3.0, 1.5, 4.0), (-10.0, -2.0, 9.0), (0.0, 3.0, 1.0)] {
            let a = Complex64::new(re, im);
            let e = fresnel_e(a, b);
            let q = fresnel_e_quad(a, b).unwrap();
            assert!((e - q).norm() < 1e-6 * q.norm().max(1.0), "E({a},{b})");
            let t = fresnel_e_tilde(a, b);
            let tq = fresnel_e_tilde_quad(a, b).unwrap();
            assert!((t - tq).norm() < 1e-6 * tq.norm().max(1.0), "E~({a},{b})");
        }
    }

    #[test]
    fn zero_b_is_sinc() {
        let a = Complex64::new(2.3, 0.0);
        assert!((fresnel_e(a, 0.0) - sinc(1.15)).norm() < 1e-15);
    }

    #[test]
    fn large_a_asymptotics() {
        for &a in &[60.0, 80.0, 100.0] {
            for &b in &[1.0, 5.0, 12.0] {
                let e = fresnel_e(Complex64::new(a, 0.0), b);
                let asym = Complex64::from_polar(1.0, b / 4.0) * sinc(a / 2.0);
                assert!((e - asym).norm() * a * a < 4.0 * b + 1.0);
            }
        }
    }

    proptest! {
        #[test]
        fn salzer_out_of_box_is_rejected(b in 15.01f64..100.0) {
            prop_assert!(fresnel_e_salzer(Complex64::new(1.0, 0.0), b).is_err());
        }

        #[test]
        fn g2_symmetric_identity(a in -1.0f64..1.0, b in -1.0f64..1.0, beta in 0.0f64..5.0) {
            // G2(a,b) + G2(b,a) with the roles of z1, z2 swapped covers the square
            let sq = exp_moments(4.0 * beta * a, 0)[0] * exp_moments(4.0 * beta * b, 0)[0];
            let swapped = cal_g2(b, a, beta);
            prop_assert!((cal_g2(a, b, beta) + swapped - sq).norm() < 1e-12);
        }
    }
}
