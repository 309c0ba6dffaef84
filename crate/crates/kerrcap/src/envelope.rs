//! Pulse envelopes in units where the symbol period is 1.

use crate::error::{invalid, Error, Result};
use crate::quad::{adaptive_real, composite_gl, AdaptiveOpts};
use crate::specfun::sinc;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Default Gaussian width relative to the symbol period.
pub const DEFAULT_GAUSS_TAU: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnvelopeKind {
    Sinc,
    Gaussian { tau: f64 },
    Rect,
}

impl EnvelopeKind {
    pub fn gaussian(tau: f64) -> Result<EnvelopeKind> {
        if !(tau > 0.0 && tau <= 0.5) {
            return Err(invalid(format!("gaussian tau must lie in (0, 0.5], got {tau}")));
        }
        Ok(EnvelopeKind::Gaussian { tau })
    }

    /// Time-domain pulse `s(t)`, normalized to unit energy.
    pub fn eval_time(&self, t: f64) -> f64 {
        match *self {
            EnvelopeKind::Sinc => sinc(PI * t),
            EnvelopeKind::Gaussian { tau } => {
                (tau * PI.sqrt()).powf(-0.5) * (-t * t / (2.0 * tau * tau)).exp()
            }
            EnvelopeKind::Rect => {
                if t.abs() < 0.5 {
                    1.0
                } else if t.abs() == 0.5 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// Spectrum `int s(t) exp(2 pi i nu t) dt` at normalized frequency `nu`.
    pub fn spectrum(&self, nu: f64) -> f64 {
        match *self {
            EnvelopeKind::Sinc => {
                if nu.abs() < 0.5 {
                    1.0
                } else if nu.abs() == 0.5 {
                    0.5
                } else {
                    0.0
                }
            }
            EnvelopeKind::Gaussian { tau } => {
                (tau * PI.sqrt()).powf(-0.5)
                    * tau
                    * (2.0 * PI).sqrt()
                    * (-2.0 * PI * PI * nu * nu * tau * tau).exp()
            }
            EnvelopeKind::Rect => sinc(PI * nu),
        }
    }

    /// `N_lambda = int s(t)^lambda dt` for even `lambda >= 2`.
    pub fn moment(&self, lambda: u32) -> Result<f64> {
        if lambda < 2 || lambda % 2 != 0 {
            return Err(invalid(format!("moment order must be even and >= 2, got {lambda}")));
        }
        let l = lambda as f64;
        Ok(match *self {
            EnvelopeKind::Rect => 1.0,
            EnvelopeKind::Gaussian { tau } => {
                (tau * PI.sqrt()).powf(-l / 2.0) * tau * (2.0 * PI / l).sqrt()
            }
            EnvelopeKind::Sinc => sinc_power_integral(lambda),
        })
    }

    /// `|int s(t-k) s(t-m) dt - delta_km|`.
    pub fn orthogonality_defect(&self, k: i64, m: i64) -> f64 {
        let d = (k - m) as f64;
        let delta = if k == m { 1.0 } else { 0.0 };
        let overlap = match *self {
            EnvelopeKind::Sinc => {
                // Parseval on the flat band
                let r = composite_gl(-0.5, 0.5, 8, 16);
                r.iter().map(|(nu, w)| w * (2.0 * PI * nu * d).cos()).sum::<f64>()
            }
            EnvelopeKind::Gaussian { tau } => (-d * d / (4.0 * tau * tau)).exp(),
            EnvelopeKind::Rect => (1.0 - d.abs()).max(0.0),
        };
        (overlap - delta).abs()
    }

    /// `int |spectrum(nu)|^2 d nu`, which equals 1 for a unit-energy pulse.
    pub fn parseval_norm(&self) -> f64 {
        let opts = AdaptiveOpts {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_intervals: 20000,
        };
        match *self {
            EnvelopeKind::Sinc => 1.0,
            EnvelopeKind::Gaussian { tau } => {
                let cut = 8.0 / (PI * tau);
                adaptive_real(|nu| self.spectrum(nu).powi(2), -cut, cut, opts).unwrap_or(f64::NAN)
            }
            EnvelopeKind::Rect => {
                // integrate sinc^2 on [-L, L] and add the averaged tail 2/(pi^2 L)
                let l = 2000.0;
                let body = composite_gl(-l, l, 4000, 12)
                    .iter()
                    .map(|(nu, w)| w * self.spectrum(nu).powi(2))
                    .sum::<f64>();
                body + 1.0 / (PI * PI * l)
            }
        }
    }

    /// Short tag used in file names and metadata.
    pub fn tag(&self) -> String {
        self.to_string()
    }
}

/// `int sinc(pi t)^lambda dt` on the real line, truncated at |t| = 1000 with
/// the averaged algebraic tail added back.
fn sinc_power_integral(lambda: u32) -> f64 {
    let cut = 1000.0;
    let body: f64 = composite_gl(0.0, cut, 2000, 12)
        .iter()
        .map(|(t, w)| w * sinc(PI * t).powi(lambda as i32))
        .sum();
    // mean of sin^lambda is binom(lambda, lambda/2) / 2^lambda
    let n = lambda as usize;
    let mut binom = 1.0;
    for j in 0..n / 2 {
        binom *= (n - j) as f64 / (j + 1) as f64;
    }
    let mean = binom / 2f64.powi(lambda as i32);
    let tail = mean * cut.powf(1.0 - lambda as f64)
        / (PI.powi(lambda as i32) * (lambda as f64 - 1.0));
    2.0 * (body + tail)
}

impl fmt::Display for EnvelopeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvelopeKind::Sinc => write!(f, "sinc"),
            EnvelopeKind::Gaussian { tau } => write!(f, "gauss:{tau}"),
            EnvelopeKind::Rect => write!(f, "rect"),
        }
    }
}

impl FromStr for EnvelopeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinc" => Ok(EnvelopeKind::Sinc),
            "rect" => Ok(EnvelopeKind::Rect),
            "gauss" => EnvelopeKind::gaussian(DEFAULT_GAUSS_TAU),
            _ => match s.strip_prefix("gauss:") {
                Some(t) => {
                    let tau: f64 = t
                        .parse()
                        .map_err(|_| invalid(format!("bad gaussian width '{t}'")))?;
                    EnvelopeKind::gaussian(tau)
                }
                None => Err(invalid(format!("unknown envelope '{s}'"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples() {
        assert_eq!(EnvelopeKind::Sinc.eval_time(0.0), 1.0);
        assert!(EnvelopeKind::Sinc.eval_time(3.0).abs() < 1e-15);
        assert_eq!(EnvelopeKind::Rect.eval_time(0.4), 1.0);
        assert_eq!(EnvelopeKind::Rect.eval_time(0.6), 0.0);
    }

    #[test]
    fn moments() {
        let g = EnvelopeKind::gaussian(0.125).unwrap();
        for kind in [EnvelopeKind::Sinc, EnvelopeKind::Rect, g] {
            assert!((kind.moment(2).unwrap() - 1.0).abs() < 1e-7, "{kind}");
        }
        assert!((EnvelopeKind::Sinc.moment(4).unwrap() - 2.0 / 3.0).abs() < 1e-9);
        assert!((EnvelopeKind::Sinc.moment(6).unwrap() - 11.0 / 20.0).abs() < 1e-9);
        assert!(EnvelopeKind::Sinc.moment(3).is_err());
    }

    #[test]
    fn orthogonality() {
        assert!(EnvelopeKind::Sinc.orthogonality_defect(0, 1) < 1e-9);
        assert!(EnvelopeKind::Sinc.orthogonality_defect(2, 2) < 1e-12);
        assert_eq!(EnvelopeKind::Rect.orthogonality_defect(0, 1), 0.0);
        let g = EnvelopeKind::gaussian(0.125).unwrap();
        assert!((g.orthogonality_defect(0, 1) - (-16.0f64).exp()).abs() < 1e-20);
    }

    #[test]
    fn parseval() {
        let g = EnvelopeKind::gaussian(0.2).unwrap();
        for kind in [EnvelopeKind::Sinc, EnvelopeKind::Rect, g] {
            assert!((kind.parseval_norm() - 1.0).abs() < 1e-8, "{kind}: {}", kind.parseval_norm());
        }
        assert_eq!(EnvelopeKind::Sinc.spectrum(0.51), 0.0);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["sinc", "rect", "gauss:0.2"] {
            let k: EnvelopeKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert!("gauss:0.9".parse::<EnvelopeKind>().is_err());
        assert!("rrc".parse::<EnvelopeKind>().is_err());
    }
}
