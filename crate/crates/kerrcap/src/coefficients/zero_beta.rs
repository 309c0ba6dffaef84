//! Closed forms for the coefficients without dispersion.
//!
//! Without dispersion every coefficient reduces to a time integral of a
//! product of shifted envelopes. For the sinc pulse the product
//! `prod_j sinc(pi (t - k_j))` is `(-1)^{sum k} sin^{2n}(pi t) / (pi^{2n} prod (t - k_j))`,
//! which is integrated exactly by partial fractions.

use crate::envelope::EnvelopeKind;
use crate::error::{invalid, Result};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// `int sin^{2n}(pi x) / x^r dx` over the real line for even `r <= 2n`.
fn sin_power_kernel(n: usize, r: usize) -> f64 {
    debug_assert!(r % 2 == 0 && r >= 2 && r <= 2 * n);
    // sin^{2n}(pi x) = sum_j c_j cos(2 pi j x)
    let two_n = 2 * n;
    let binom = |k: usize| -> f64 {
        let mut b = 1.0;
        for i in 0..k {
            b *= (two_n - i) as f64 / (i + 1) as f64;
        }
        b
    };
    let k = r / 2;
    let mut fact = 1.0;
    for i in 1..r {
        fact *= i as f64;
    }
    let mut sum = 0.0;
    for j in 1..=n {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let cj = sign * binom(n - j) / 2f64.powi(two_n as i32 - 1);
        sum += cj * (2.0 * PI * j as f64).powi(r as i32 - 1);
    }
    let sign_k = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign_k * PI * sum / fact
}

/// `int prod_j sinc(pi (t - k_j)) dt` for an even number (2, 4 or 6) of integer shifts.
pub fn sinc_product_integral(shifts: &[i64]) -> f64 {
    let len = shifts.len();
    assert!(len >= 2 && len % 2 == 0, "need an even number of factors");
    let n = len / 2;
    let mut poles: BTreeMap<i64, usize> = BTreeMap::new();
    for &k in shifts {
        *poles.entry(k).or_default() += 1;
    }
    let mut total = 0.0;
    for (&q, &mult) in &poles {
        if mult < 2 {
            continue;
        }
        // Taylor coefficients of prod_{q' != q} (q - q' + h)^{-r'} up to h^{mult-2}
        let order = mult - 2;
        let mut series = vec![0.0; order + 1];
        series[0] = 1.0;
        for (&qp, &rp) in &poles {
            if qp == q {
                continue;
            }
            let d = (q - qp) as f64;
            // (d + h)^{-rp} = d^{-rp} sum_j binom(-rp, j) (h/d)^j
            let mut factor = vec![0.0; order + 1];
            let mut coef = d.powi(-(rp as i32));
            for (j, f) in factor.iter_mut().enumerate() {
                *f = coef;
                coef *= -((rp + j) as f64) / ((j + 1) as f64 * d);
            }
            let mut next = vec![0.0; order + 1];
            for i in 0..=order {
                for j in 0..=order - i {
                    next[i + j] += series[i] * factor[j];
                }
            }
            series = next;
        }
        for (j, c) in series.iter().enumerate() {
            let r = mult - j;
            if r >= 2 && r % 2 == 0 {
                total += c * sin_power_kernel(n, r);
            }
        }
    }
    let sign = if shifts.iter().sum::<i64>().rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    sign * total / PI.powi(len as i32)
}

/// `int prod_j s(t - k_j) dt` for any supported envelope.
pub fn envelope_product_integral(env: EnvelopeKind, shifts: &[i64]) -> f64 {
    match env {
        EnvelopeKind::Sinc => sinc_product_integral(shifts),
        EnvelopeKind::Rect => {
            if shifts.iter().all(|&k| k == shifts[0]) {
                1.0
            } else {
                0.0
            }
        }
        EnvelopeKind::Gaussian { tau } => {
            let n = shifts.len() as f64;
            let s1: f64 = shifts.iter().map(|&k| k as f64).sum();
            let s2: f64 = shifts.iter().map(|&k| (k * k) as f64).sum();
            let norm = (tau * PI.sqrt()).powf(-n / 2.0);
            norm * (2.0 * PI * tau * tau / n).sqrt() * (-(s2 - s1 * s1 / n) / (2.0 * tau * tau)).exp()
        }
    }
}

/// Dispersion-free coefficient values for a given envelope.
#[derive(Debug, Clone, Copy)]
pub struct ZeroBeta {
    pub envelope: EnvelopeKind,
}

impl ZeroBeta {
    pub fn new(envelope: EnvelopeKind) -> ZeroBeta {
        ZeroBeta { envelope }
    }

    pub fn a1(&self, n: i64, m: i64, p: i64, k: i64) -> f64 {
        envelope_product_integral(self.envelope, &[n, m, p, k])
    }

    pub fn b1(&self, n: i64, m: i64, p: i64, k: i64) -> f64 {
        0.5 * self.a1(n, m, p, k)
    }

    /// Single second-order coefficient: half the six-fold product integral.
    pub fn a2(&self, idx: [i64; 6]) -> f64 {
        0.5 * envelope_product_integral(self.envelope, &idx)
    }

    /// `sum_r A2[r, s1, s2; s3, s4, r]`.
    pub fn a2_left(&self, s: [i64; 4], m: usize) -> f64 {
        let mi = m as i64;
        (-mi..=mi).map(|r| self.a2([r, s[0], s[1], s[2], s[3], r])).sum()
    }

    /// `sum_r A2[s1, s2, r; r, s3, s4]`.
    pub fn a2_pair(&self, s: [i64; 4], m: usize) -> f64 {
        let mi = m as i64;
        (-mi..=mi).map(|r| self.a2([s[0], s[1], r, r, s[2], s[3]])).sum()
    }

    /// `b2 = (2/3) sum_r A2[k1, k2, r; k3, k4, r]`.
    pub fn b2(&self, s: [i64; 4], m: usize) -> f64 {
        let mi = m as i64;
        (2.0 / 3.0) * (-mi..=mi).map(|r| self.a2([s[0], s[1], r, s[2], s[3], r])).sum::<f64>()
    }
}

/// Closed form for the dispersion-free `a1` in terms of index differences,
/// valid when `m - p`, `k - p` and `m - k` are all non-zero.
pub fn a1_zero_beta_generic(n: i64, m: i64, p: i64, k: i64) -> Result<f64> {
    let (u, v, w) = ((n - p) as f64, (m - p) as f64, (k - p) as f64);
    if v == 0.0 || w == 0.0 || v == w {
        return Err(invalid("generic closed form needs distinct m, p, k"));
    }
    let s = |x: f64| crate::specfun::sinc(PI * x);
    let c = |x: f64| (PI * x).cos();
    let bracket = s(u) * c(w + v) / (PI * v) - s(u - v) * c(w) / (PI * v) - s(u - w) * c(v) / (PI * (v - w))
        + s(u - v) * c(w) / (PI * (v - w));
    Ok(s(u) * s(v) * s(w) + bracket / (2.0 * PI * w))
}
