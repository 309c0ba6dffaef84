//! Mutual information and entropies at second order in the nonlinearity.
//!
//! Units: average power `P = 1`, so symbols are measured in `sqrt(P)` and
//! the noise variance per complex symbol is `1 / snr`. All entropies are in
//! nats.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::coefficients::Tensor4;
use crate::envelope::EnvelopeKind;
use crate::error::{invalid, Result};
use crate::quad::composite_gl;
use crate::specfun::sinc;

/// Dimensionless channel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Symbols run over `-m..=m`.
    pub m: usize,
    /// Dimensionless dispersion `beta L W^2 / 2`.
    pub beta: f64,
    /// Dimensionless nonlinearity `gamma L P`.
    pub gamma: f64,
    /// `P T0 / (Q L)`.
    pub snr: f64,
    /// Noise bandwidth over signal bandwidth.
    pub noise_band_ratio: f64,
    /// Receiver bandwidth over signal bandwidth.
    pub rx_band_ratio: f64,
}

impl ChannelParams {
    pub fn new(m: usize, beta: f64, gamma: f64, snr: f64) -> ChannelParams {
        ChannelParams {
            m,
            beta,
            gamma,
            snr,
            noise_band_ratio: 8.0,
            rx_band_ratio: 1.0,
        }
    }

    pub fn symbols(&self) -> usize {
        2 * self.m + 1
    }

    /// Rejects parameters outside the model's domain.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(invalid(format!("snr must be positive, got {}", self.snr)));
        }
        if self.rx_band_ratio < 1.0 {
            return Err(invalid("receiver band ratio must be >= 1"));
        }
        if self.noise_band_ratio < self.rx_band_ratio {
            return Err(invalid("noise band ratio must be >= receiver band ratio"));
        }
        Ok(())
    }

    /// Soft warnings for a valid but questionable regime.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.snr < 10.0 {
            out.push(format!("snr {} is not large; leading-order noise expansion is rough", self.snr));
        }
        if self.noise_band_ratio < 2.0 * self.rx_band_ratio {
            out.push("noise band is not much wider than the receiver band".into());
        }
        out
    }
}

pub fn snr_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn nats_to_bits(x: f64) -> f64 {
    x / std::f64::consts::LN_2
}

/// `sum_{r,s} (T[r,s;r,s] + T[r,s;s,r])`: the average of the quartic form
/// `T C C conj(C) conj(C)` over unit-power circular Gaussian symbols.
pub fn gaussian_quartic_trace(t: &Tensor4) -> f64 {
    let m = t.order() as i64;
    let mut acc = 0.0;
    for r in -m..=m {
        for s in -m..=m {
            acc += (t.get(r, s, r, s) + t.get(r, s, s, r)).re;
        }
    }
    acc
}

/// Mutual information of the optimal input, `(2M+1)(ln snr + gamma^2 J_Sigma)`.
pub fn mutual_info_opt(params: &ChannelParams, j_sigma: f64) -> f64 {
    params.symbols() as f64 * (params.snr.ln() + params.gamma * params.gamma * j_sigma)
}

/// Output entropy for Gaussian input: the Gaussian value plus the averaged
/// log-Jacobian of the noiseless map.
pub fn output_entropy_gaussian_input(j: &Tensor4, params: &ChannelParams) -> f64 {
    params.symbols() as f64 * (PI * E).ln() + params.gamma.powi(2) * gaussian_quartic_trace(j)
}

/// Conditional entropy `H[out | in]` for Gaussian input:
/// `(2M+1) ln(pi e / snr) - gamma^2 <J_Lambda C C conj(C) conj(C)>`.
pub fn cond_entropy_gaussian_input(j_lambda: &Tensor4, params: &ChannelParams) -> f64 {
    params.symbols() as f64 * (PI * E / params.snr).ln() - params.gamma.powi(2) * gaussian_quartic_trace(j_lambda)
}

/// `I(P_opt) - I(P0)` at fourth order, from the symmetrised `J_I`.
pub fn mi_gap(j_sym: &Tensor4, params: &ChannelParams) -> f64 {
    let m = j_sym.order() as i64;
    let d = j_sym.dim() as f64;
    let g = |a, b, c, e| j_sym.get(a, b, c, e);
    let range = || -m..=m;
    let mut chain = 0.0;
    let mut full = 0.0;
    for a in range() {
        for b in range() {
            for c in range() {
                for e in range() {
                    full += (g(a, b, c, e) * g(c, e, a, b)).re;
                }
            }
            for e in range() {
                let left = g(a, b, b, e);
                let mut inner = num_complex::Complex64::new(0.0, 0.0);
                for k in range() {
                    inner += g(e, k, a, k);
                }
                chain += (left * inner).re;
            }
        }
    }
    let mut trace = 0.0;
    for a in range() {
        for b in range() {
            trace += g(a, b, b, a).re;
        }
    }
    2.0 * params.gamma.powi(4) * (4.0 * chain + full - 4.0 / d * trace * trace)
}

/// `22 N6 - 21 N4^2` for an envelope with negligible overlap between slots.
pub fn nonoverlap_defect(envelope: EnvelopeKind) -> Result<f64> {
    if envelope == EnvelopeKind::Sinc {
        return Err(invalid("sinc pulses overlap; use the sinc zero-dispersion path"));
    }
    let n4 = envelope.moment(4)?;
    let n6 = envelope.moment(6)?;
    Ok(22.0 * n6 - 21.0 * n4 * n4)
}

/// `sum_r sinc(pi (t1 + r)) sinc(pi (t2 + r))`.
fn sinc_gram(m: i64, t1: f64, t2: f64) -> f64 {
    (-m..=m).map(|r| sinc(PI * (t1 + r as f64)) * sinc(PI * (t2 + r as f64))).sum()
}

/// `int (sum_r sinc^2(pi (t + r)))^3 dt` over the real line.
pub fn sinc_gram_cube_integral(m: usize) -> f64 {
    let mi = m as i64;
    let cut = m as f64 + 400.0;
    let panels = (2.0 * cut) as usize;
    let body: f64 = composite_gl(-cut, cut, panels, 12)
        .iter()
        .map(|(t, w)| w * sinc_gram(mi, t, t).powi(3))
        .sum();
    // beyond the cut the integrand is (2M+1)^3 <sin^6> / (pi t)^6 on average
    let tail = 2.0 * (2 * m + 1).pow(3) as f64 * (10.0 / 32.0) / (PI.powi(6) * 5.0 * cut.powi(5));
    body + tail
}

/// Zero-dispersion sinc correction coefficient `c` in `I / (2M+1) = ln snr + c gamma^2`.
///
/// The double integral of the Gram kernel is replaced by its finite sums over
/// `b1 = a1 / 2`; the single integral of its cube is done by quadrature.
pub fn sinc_zero_beta_coefficient(m: usize, a1: &Tensor4) -> Result<f64> {
    if a1.order() != m || a1.meta.beta != 0.0 {
        return Err(invalid("need the dispersion-free a1 tensor of matching order"));
    }
    let mi = m as i64;
    let b = |n, p, q, k| 0.5 * a1.get(n, p, q, k).re;
    let range = || -mi..=mi;
    let mut cross = 0.0;
    let mut chain = 0.0;
    for u in range() {
        for p in range() {
            for r in range() {
                for q in range() {
                    cross += b(u, p, r, q) * b(q, r, u, p);
                }
            }
            for v in range() {
                for s in range() {
                    chain += b(u, p, p, v) * b(u, s, s, v);
                }
            }
        }
    }
    let sum = 12.0 * cross + 16.0 * chain - 22.0 / 3.0 * sinc_gram_cube_integral(m);
    Ok(sum / (2 * m + 1) as f64)
}

/// Per-symbol mutual information at zero dispersion.
pub fn zero_beta_mi(envelope: EnvelopeKind, params: &ChannelParams, a1_zero: Option<&Tensor4>) -> Result<f64> {
    let g2 = params.gamma * params.gamma;
    let c = match envelope {
        EnvelopeKind::Sinc => {
            let a1 = a1_zero.ok_or_else(|| invalid("sinc path needs the dispersion-free a1 tensor"))?;
            sinc_zero_beta_coefficient(params.m, a1)?
        }
        _ => -nonoverlap_defect(envelope)? / 3.0,
    };
    Ok(params.snr.ln() + g2 * c)
}

/// Fourth-order gap for non-overlapping envelopes at zero dispersion.
pub fn zero_beta_gap(envelope: EnvelopeKind, params: &ChannelParams) -> Result<f64> {
    let d = nonoverlap_defect(envelope)?;
    Ok(params.symbols() as f64 * params.gamma.powi(4) * d * d / 18.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{build_coefficients, Coverage};
    use crate::exec::ExecPolicy;
    use crate::jtensors::{build_jtensors, symmetrized};

    #[test]
    fn shannon_limit_without_nonlinearity() {
        let p = ChannelParams::new(3, 1.0, 0.0, 1000.0);
        assert!((mutual_info_opt(&p, -1.2) - 7.0 * 1000f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rect_zero_beta_matches_tensor_path() {
        let p = ChannelParams::new(2, 0.0, 0.2, 100.0);
        let set = build_coefficients(2, 0.0, EnvelopeKind::Rect, Coverage::Full, ExecPolicy::Sequential).unwrap();
        let jt = build_jtensors(&set, ExecPolicy::Sequential).unwrap();
        let direct = zero_beta_mi(EnvelopeKind::Rect, &p, None).unwrap();
        assert!((mutual_info_opt(&p, jt.j_sigma) / 5.0 - direct).abs() < 1e-12);
        let gap = mi_gap(&symmetrized(&jt.j_info), &p);
        assert!((gap - zero_beta_gap(EnvelopeKind::Rect, &p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn entropy_decomposition() {
        let p = ChannelParams::new(1, 0.0, 0.3, 500.0);
        let set = build_coefficients(1, 0.0, EnvelopeKind::Sinc, Coverage::Full, ExecPolicy::Sequential).unwrap();
        let jt = build_jtensors(&set, ExecPolicy::Sequential).unwrap();
        let i = output_entropy_gaussian_input(&jt.j, &p) - cond_entropy_gaussian_input(&jt.j_lambda, &p);
        assert!((i - mutual_info_opt(&p, jt.j_sigma)).abs() < 1e-10);
    }

    #[test]
    fn sinc_single_integral_path_agrees_with_tensors() {
        let set = build_coefficients(2, 0.0, EnvelopeKind::Sinc, Coverage::Full, ExecPolicy::Sequential).unwrap();
        let jt = build_jtensors(&set, ExecPolicy::Sequential).unwrap();
        let c = sinc_zero_beta_coefficient(2, &set.a1).unwrap();
        assert!((c - jt.j_sigma).abs() < 1e-6, "{c} vs {}", jt.j_sigma);
    }
}
