//! First-order coefficients `a1` and `b1` for the sinc pulse.

use crate::quad::{gauss_legendre, Rule};
use crate::specfun::{cal_g, cal_g1};
use num_complex::Complex64;
use std::f64::consts::PI;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Which propagation weight a first-order coefficient carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstOrderWeight {
    /// weight 1: `a1`
    Flat,
    /// weight `zeta`: `b1`
    Linear,
}

impl FirstOrderWeight {
    fn kernel(self, x: f64) -> Complex64 {
        match self {
            FirstOrderWeight::Flat => cal_g(x),
            FirstOrderWeight::Linear => cal_g1(x),
        }
    }
}

fn two_fold_order(idx: [i64; 4], beta: f64) -> usize {
    let [n, m, p, k] = idx;
    let spread = [k - p, k + p - 2 * m, k + p - 2 * n, m - n, m + n - 2 * p, m + n - 2 * k]
        .iter()
        .map(|d| d.abs())
        .max()
        .unwrap_or(0) as f64;
    (20.0 + 4.0 * spread + 3.0 * beta.abs()).ceil() as usize
}

/// Two-fold `(y, t)` triangle representation of `a1` / `b1`.
pub fn first_order(n: i64, m: i64, p: i64, k: i64, beta: f64, weight: FirstOrderWeight) -> Complex64 {
    let order = two_fold_order([n, m, p, k], beta);
    let rule = gauss_legendre(order);
    let big_n = n + m - p - k;
    let (nf, mf, pf, kf) = (n as f64, m as f64, p as f64, k as f64);
    let h = PI / 2.0;
    let mut acc = Complex64::new(0.0, 0.0);
    for (y, wy) in rule.mapped(0.0, 2.0).iter() {
        let inner: Rule = rule.mapped(0.0, 2.0 - y);
        for (t, wt) in inner.iter() {
            let g = weight.kernel(beta * y * t);
            let c1 = (h * (kf - pf) * (t + y)).cos();
            let c2 = (h * (mf - nf) * (t + y)).cos();
            let arg1 = h * t * (kf + pf - 2.0 * mf) + h * y * (kf + pf - 2.0 * nf);
            let arg2 = h * t * (mf + nf - 2.0 * pf) + h * y * (mf + nf - 2.0 * kf);
            let term = if big_n != 0 {
                g * c1 * arg1.sin() + g.conj() * c2 * arg2.sin()
            } else {
                (g * c1 * arg1.cos() - g.conj() * c2 * arg2.cos()) * (1.0 - y)
            };
            acc += term * (wy * wt);
        }
    }
    if big_n != 0 {
        let sign = if big_n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        acc * I * (sign / (2.0 * PI * big_n as f64))
    } else {
        acc * I * 0.5
    }
}

/// `a1[n, m; p, k]` for the sinc pulse.
pub fn a1(n: i64, m: i64, p: i64, k: i64, beta: f64) -> Complex64 {
    first_order(n, m, p, k, beta, FirstOrderWeight::Flat)
}

/// `b1[n, m; p, k]` for the sinc pulse.
pub fn b1(n: i64, m: i64, p: i64, k: i64, beta: f64) -> Complex64 {
    first_order(n, m, p, k, beta, FirstOrderWeight::Linear)
}

/// Direct three-fold cube integral, used as an independent check of the
/// triangle representation.
pub fn first_order_cube(n: i64, m: i64, p: i64, k: i64, beta: f64, weight: FirstOrderWeight, order: usize) -> Complex64 {
    let rule = gauss_legendre(order);
    let (dn, dm, dk) = ((n - p) as f64, (m - p) as f64, (k - p) as f64);
    let mut acc = Complex64::new(0.0, 0.0);
    for (x1, w1) in rule.mapped(-1.0, 1.0).iter() {
        // the x-range depends on x1 + x2 with a kink at x2 = -x1
        for (lo2, hi2) in [(-1.0, -x1), (-x1, 1.0)] {
            if hi2 <= lo2 {
                continue;
            }
            for (x2, w2) in rule.mapped(lo2, hi2).iter() {
                let s = x1 + x2;
                let (lo, hi) = ((s - 1.0).max(-1.0), (s + 1.0).min(1.0));
                for (x, w) in rule.mapped(lo, hi).iter() {
                    let phase = PI * (x1 * dn + x2 * dm - x * dk);
                    let g = weight.kernel(beta * (x1 - x) * (x2 - x));
                    acc += Complex64::from_polar(1.0, phase) * g * (w1 * w2 * w);
                }
            }
        }
    }
    acc * I / 8.0
}
