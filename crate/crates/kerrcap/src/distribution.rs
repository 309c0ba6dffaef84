//! Input densities: the Gaussian reference, the optimal density with its
//! quartic correction, and its one- and two-symbol marginals.
//!
//! Power is normalised to `P = 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coefficients::Tensor4;
use crate::error::{invalid, Result};
use crate::information::gaussian_quartic_trace;

/// Complex symbol amplitudes `C_{-M} ..= C_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSequence {
    m: usize,
    coeffs: Vec<Complex64>,
}

impl SymbolSequence {
    pub fn new(m: usize, coeffs: Vec<Complex64>) -> Result<SymbolSequence> {
        if coeffs.len() != 2 * m + 1 {
            return Err(invalid(format!("expected {} symbols for M={m}, got {}", 2 * m + 1, coeffs.len())));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(invalid("symbols must be finite"));
        }
        Ok(SymbolSequence { m, coeffs })
    }

    pub fn zeros(m: usize) -> SymbolSequence {
        SymbolSequence {
            m,
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * m + 1],
        }
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Symbol at slot `k` in `-M..=M`.
    pub fn get(&self, k: i64) -> Complex64 {
        self.coeffs[(k + self.m as i64) as usize]
    }

    pub fn set(&mut self, k: i64, v: Complex64) {
        let i = (k + self.m as i64) as usize;
        self.coeffs[i] = v;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Multiplies every symbol by `exp(i phi)`.
    pub fn rotated(&self, phi: f64) -> SymbolSequence {
        let r = Complex64::from_polar(1.0, phi);
        SymbolSequence {
            m: self.m,
            coeffs: self.coeffs.iter().map(|c| c * r).collect(),
        }
    }
}

/// `ln P0` of the unit-power circular Gaussian.
pub fn p0_log_density(seq: &SymbolSequence) -> f64 {
    -(seq.len() as f64) * PI.ln() - seq.energy()
}

/// Single-symbol Gaussian density `exp(-|c|^2) / pi`.
pub fn p0_symbol(c: Complex64) -> f64 {
    (-c.norm_sqr()).exp() / PI
}

/// A first-order perturbed density `P0 (1 + correction)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbed {
    /// `P0 (1 + correction)`, possibly negative outside the perturbative region.
    pub value: f64,
    /// The `O(gamma^2)` correction inside the bracket.
    pub correction: f64,
}

impl Perturbed {
    pub fn is_valid(&self) -> bool {
        1.0 + self.correction >= 0.0
    }

    /// `ln value` where the bracket is positive.
    pub fn ln(&self) -> Option<f64> {
        (self.value > 0.0).then(|| self.value.ln())
    }
}

/// Optimal input statistics for a given `J_I` and nonlinearity.
#[derive(Debug, Clone)]
pub struct OptimalInput {
    j_info: Tensor4,
    gamma2: f64,
    trace: f64,
}

impl OptimalInput {
    pub fn new(j_info: Tensor4, gamma: f64) -> OptimalInput {
        let trace = gaussian_quartic_trace(&j_info);
        OptimalInput {
            j_info,
            gamma2: gamma * gamma,
            trace,
        }
    }

    pub fn order(&self) -> usize {
        self.j_info.order()
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn j_info(&self) -> &Tensor4 {
        &self.j_info
    }

    fn j(&self, a: i64, b: i64, c: i64, d: i64) -> Complex64 {
        self.j_info.get(a, b, c, d)
    }

    fn check_index(&self, q: i64) -> Result<()> {
        let m = self.order() as i64;
        if q.abs() > m {
            return Err(invalid(format!("symbol index {q} outside -{m}..={m}")));
        }
        Ok(())
    }

    /// `sum_r J[r,q;r,q] + J[r,q;q,r] + J[q,r;r,q] + J[q,r;q,r]`.
    fn row_sum(&self, q: i64) -> f64 {
        let m = self.order() as i64;
        (-m..=m)
            .map(|r| (self.j(r, q, r, q) + self.j(r, q, q, r) + self.j(q, r, r, q) + self.j(q, r, q, r)).re)
            .sum()
    }

    /// Bracket of the joint density without the leading one.
    pub fn joint_correction(&self, seq: &SymbolSequence) -> Result<f64> {
        if seq.order() != self.order() {
            return Err(invalid("sequence order does not match J_I"));
        }
        let q = crate::jtensors::contract_quartic(&self.j_info, seq.as_slice())?.re;
        let d = seq.len() as f64;
        Ok(self.gamma2 * (q + self.trace * (1.0 - 2.0 / d * seq.energy())))
    }

    /// Joint optimal density.
    pub fn joint_density(&self, seq: &SymbolSequence) -> Result<Perturbed> {
        let correction = self.joint_correction(seq)?;
        Ok(Perturbed {
            value: p0_log_density(seq).exp() * (1.0 + correction),
            correction,
        })
    }

    /// Radial polynomial of the one-symbol marginal, `x = |C_q|`.
    pub fn d1(&self, q: i64, x: f64) -> Result<f64> {
        self.check_index(q)?;
        let d = self.j_info.dim() as f64;
        let x2 = x * x;
        let jqqqq = self.j(q, q, q, q).re;
        Ok((1.0 - x2) * (2.0 * self.trace / d - self.row_sum(q)) + jqqqq * (x2 * x2 - 4.0 * x2 + 2.0))
    }

    /// One-symbol marginal density.
    pub fn marginal(&self, q: i64, c: Complex64) -> Result<Perturbed> {
        let correction = self.gamma2 * self.d1(q, c.norm())?;
        Ok(Perturbed {
            value: p0_symbol(c) * (1.0 + correction),
            correction,
        })
    }

    /// Coefficients of the pair polynomial `D^{i,j}`.
    pub fn pair_coefficients(&self, i: i64, j: i64) -> Result<PairCoefficients> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(invalid("pair polynomial needs distinct slots"));
        }
        let m = self.order() as i64;
        let g = |a, b, c, e| self.j(a, b, c, e);
        let mut linear = Complex64::new(0.0, 0.0);
        for r in -m..=m {
            linear += g(i, r, j, r) + g(i, r, r, j) + g(r, i, j, r) + g(r, i, r, j);
        }
        Ok(PairCoefficients {
            quartic: g(i, i, j, j),
            radial: (g(i, j, i, j) + g(i, j, j, i) + g(j, i, i, j) + g(j, i, j, i)).re,
            cubic_x: g(i, i, i, j) + g(i, i, j, i),
            cubic_y: g(i, j, j, j) + g(j, i, j, j),
            linear,
        })
    }

    /// Pair polynomial `D^{i,j}(x, y)`; real by the conjugation symmetry of `J_I`.
    pub fn d_pair(&self, i: i64, j: i64, x: Complex64, y: Complex64) -> Result<f64> {
        Ok(self.pair_coefficients(i, j)?.eval(x, y))
    }

    /// Two-symbol marginal `P(C_i) P(C_j) (1 + gamma^2 D^{i,j})`.
    pub fn pair(&self, i: i64, j: i64, ci: Complex64, cj: Complex64) -> Result<Perturbed> {
        let pi = self.marginal(i, ci)?;
        let pj = self.marginal(j, cj)?;
        let correction = self.gamma2 * self.d_pair(i, j, ci, cj)?;
        Ok(Perturbed {
            value: pi.value * pj.value * (1.0 + correction),
            correction,
        })
    }

    /// Conditional density of `C_i` given `C_j`: `P(C_i) (1 + gamma^2 D^{i,j})`.
    pub fn conditional(&self, i: i64, j: i64, ci: Complex64, cj: Complex64) -> Result<Perturbed> {
        let pi = self.marginal(i, ci)?;
        let dij = self.gamma2 * self.d_pair(i, j, ci, cj)?;
        Ok(Perturbed {
            value: pi.value * (1.0 + dij),
            correction: (1.0 + pi.correction) * (1.0 + dij) - 1.0,
        })
    }

    /// `<C_k conj(C_m)>` under the optimal density.
    pub fn pair_correlator(&self, k: i64, m: i64) -> Result<Complex64> {
        self.check_index(k)?;
        self.check_index(m)?;
        let mm = self.order() as i64;
        let d = self.j_info.dim() as f64;
        let mut v = Complex64::new(0.0, 0.0);
        if k == m {
            v += 1.0 - self.gamma2 * 2.0 / d * self.trace;
        }
        let g = |a, b, c, e| self.j(a, b, c, e);
        for r in -mm..=mm {
            v += self.gamma2 * (g(r, m, r, k) + g(r, m, k, r) + g(m, r, r, k) + g(m, r, k, r));
        }
        Ok(v)
    }

    /// Gaussian average of the joint bracket over every slot not in `kept`.
    ///
    /// Independent of the closed-form marginals, so it serves as their oracle
    /// and as the exact small-M marginal.
    pub fn averaged_correction(&self, kept: &[(i64, Complex64)]) -> f64 {
        let m = self.order() as i64;
        let value = |k: i64| kept.iter().find(|(q, _)| *q == k).map(|(_, c)| *c);
        let mut q = Complex64::new(0.0, 0.0);
        for s1 in -m..=m {
            for s2 in -m..=m {
                for s3 in -m..=m {
                    for s4 in -m..=m {
                        let e = wick([s1, s2], [s3, s4], &value);
                        if e != Complex64::new(0.0, 0.0) {
                            q += self.j(s1, s2, s3, s4) * e;
                        }
                    }
                }
            }
        }
        let d = self.j_info.dim() as f64;
        let energy: f64 = kept.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>() + (d - kept.len() as f64);
        self.gamma2 * (q.re + self.trace * (1.0 - 2.0 / d * energy))
    }
}

/// Coefficients of `D^{i,j}(x, y)`. Terms with `conj(x) y` use the complex
/// conjugates of the `x conj(y)` coefficients, by the symmetry of `J_I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCoefficients {
    /// Coefficient of `x^2 conj(y)^2`.
    pub quartic: Complex64,
    /// Coefficient of `(|x|^2 - 1)(|y|^2 - 1)`.
    pub radial: f64,
    /// Coefficient of `x conj(y) (|x|^2 - 2)`.
    pub cubic_x: Complex64,
    /// Coefficient of `x conj(y) (|y|^2 - 2)`.
    pub cubic_y: Complex64,
    /// Coefficient of `x conj(y)` from the slot sum.
    pub linear: Complex64,
}

impl PairCoefficients {
    pub fn eval(&self, x: Complex64, y: Complex64) -> f64 {
        let (xx, yy) = (x.norm_sqr(), y.norm_sqr());
        let xy = x * y.conj();
        let quartic = self.quartic * xy * xy;
        let mixed = xy * (self.cubic_x * (xx - 2.0) + self.cubic_y * (yy - 2.0) + self.linear);
        2.0 * (quartic.re + mixed.re) + self.radial * (xx - 1.0) * (yy - 1.0)
    }
}

/// `E[C_u1 C_u2 conj(C_d1) conj(C_d2)]` with some slots pinned and the rest
/// unit-power circular Gaussian.
fn wick<F: Fn(i64) -> Option<Complex64>>(up: [i64; 2], down: [i64; 2], value: &F) -> Complex64 {
    let mut fixed = Complex64::new(1.0, 0.0);
    let mut free_up = Vec::with_capacity(2);
    let mut free_down = Vec::with_capacity(2);
    for u in up {
        match value(u) {
            Some(c) => fixed *= c,
            None => free_up.push(u),
        }
    }
    for d in down {
        match value(d) {
            Some(c) => fixed *= c.conj(),
            None => free_down.push(d),
        }
    }
    let pairing = match (free_up.as_slice(), free_down.as_slice()) {
        ([], []) => 1.0,
        ([a], [c]) => f64::from(u8::from(a == c)),
        ([a, b], [c, d]) => f64::from(u8::from(a == c && b == d)) + f64::from(u8::from(a == d && b == c)),
        _ => 0.0,
    };
    fixed * pairing
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{build_coefficients, Coverage};
    use crate::envelope::EnvelopeKind;
    use crate::exec::ExecPolicy;
    use crate::jtensors::build_jtensors;

    fn input(m: usize, beta: f64, gamma: f64) -> OptimalInput {
        let set = build_coefficients(m, beta, EnvelopeKind::Sinc, Coverage::Full, ExecPolicy::Sequential).unwrap();
        OptimalInput::new(build_jtensors(&set, ExecPolicy::Sequential).unwrap().j_info, gamma)
    }

    #[test]
    fn marginal_polynomial_matches_wick_average() {
        let opt = input(2, 0.0, 0.3);
        for (q, c) in [(0, Complex64::new(0.7, -0.4)), (2, Complex64::new(-1.3, 0.9))] {
            let closed = opt.marginal(q, c).unwrap().correction;
            let wick = opt.averaged_correction(&[(q, c)]);
            assert!((closed - wick).abs() < 1e-12, "{closed} vs {wick}");
        }
    }

    #[test]
    fn pair_polynomial_matches_wick_average() {
        let opt = input(2, 0.0, 0.3);
        let (i, j) = (0, -1);
        let (x, y) = (Complex64::new(0.8, 0.3), Complex64::new(-0.2, 1.1));
        let exact = opt.averaged_correction(&[(i, x), (j, y)]);
        let di = opt.marginal(i, x).unwrap().correction;
        let dj = opt.marginal(j, y).unwrap().correction;
        let dij = opt.gamma2() * opt.d_pair(i, j, x, y).unwrap();
        assert!((exact - (di + dj + dij)).abs() < 1e-12);
    }

    #[test]
    fn correlator_is_hermitian() {
        let opt = input(1, 0.0, 0.2);
        let a = opt.pair_correlator(-1, 1).unwrap();
        let b = opt.pair_correlator(1, -1).unwrap();
        assert!((a - b.conj()).norm() < 1e-14);
    }
}
