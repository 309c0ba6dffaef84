//! Conditional statistics of the received symbols for a given input sequence.
//!
//! Everything here depends on the input only through the field
//! `X = sum_k C_k u_k`, so the second-order propagation integrals are
//! evaluated by contracting lattice profiles of `X` directly instead of
//! summing six-index tensors.
//!
//! Units: `P = 1`, `T0 = 1`, noise variance per received symbol `1 / snr`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coefficients::lattice::{richardson, Lattice, LatticeSpec, Profile, ZetaWeight};
use crate::coefficients::Tensor4;
use crate::distribution::SymbolSequence;
use crate::error::{invalid, Result};
use crate::exec::ExecPolicy;
use crate::jtensors::contract_quartic;
use crate::quad::gauss_legendre;

pub type CMatrix = DMatrix<Complex64>;

/// Received symbols share the layout of the input sequence.
pub type ReceivedSymbols = SymbolSequence;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Cubic and quintic contractions entering the noiseless forward map.
#[derive(Debug, Clone)]
pub struct ForwardTerms {
    /// `sum C C conj(C) a1[., .; ., k]`.
    pub cubic: Vec<Complex64>,
    /// `sum C C C conj(C) conj(C) a2[., ., .; ., ., k]`.
    pub quintic: Vec<Complex64>,
}

/// Sequence-dependent integrals behind the conditional density.
#[derive(Debug, Clone)]
pub struct ConditionalTerms {
    pub forward: ForwardTerms,
    /// `P[k, r] = sum C C b1[., .; k, r]`; symmetric.
    pub b1_pair: CMatrix,
    /// Second-order part of `H` without the `gamma^2` factor.
    pub h2: CMatrix,
    /// `K[a, b]`: the `min(zeta_1, zeta_2)` kernel between `X X conj(u_a)`
    /// and `X X conj(u_b)`; Hermitian.
    pub min_kernel: CMatrix,
}

/// Lattice evaluator for the per-sequence integrals.
///
/// [`SequenceKernels::new`] extrapolates two lattice sizes to the
/// infinite line; [`SequenceKernels::periodic`] keeps a single period so
/// results can be compared with a simulation on the same periodic grid.
pub struct SequenceKernels {
    m: usize,
    beta: f64,
    lattices: Vec<Lattice>,
}

impl SequenceKernels {
    pub fn new(m: usize, beta: f64, policy: ExecPolicy) -> Result<SequenceKernels> {
        let (s1, s2) = LatticeSpec::pair_for(beta, m);
        Ok(SequenceKernels {
            m,
            beta,
            lattices: vec![Lattice::new(beta, s1, policy)?, Lattice::new(beta, s2, policy)?],
        })
    }

    pub fn periodic(m: usize, beta: f64, periods: usize, policy: ExecPolicy) -> Result<SequenceKernels> {
        if periods < 2 * m + 3 {
            return Err(invalid(format!("period {periods} too short for M={m}")));
        }
        let zeta_degree = LatticeSpec::pair_for(beta, m).0.zeta_degree;
        let lattice = Lattice::new(beta, LatticeSpec { periods, zeta_degree }, policy)?;
        Ok(SequenceKernels {
            m,
            beta,
            lattices: vec![lattice],
        })
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Period of the finest lattice.
    pub fn periods(&self) -> usize {
        self.lattices.last().map(|l| l.periods()).unwrap_or(0)
    }

    fn check(&self, seq: &SymbolSequence) -> Result<()> {
        if seq.order() != self.m {
            return Err(invalid(format!("sequence has M={}, kernels built for M={}", seq.order(), self.m)));
        }
        Ok(())
    }

    fn combine<T, F>(&self, per_lattice: Vec<T>, mut each: F) -> T
    where
        F: FnMut(&T, &T, usize, usize) -> T,
        T: Clone,
    {
        match per_lattice.len() {
            1 => per_lattice[0].clone(),
            _ => {
                let (t1, t2) = (self.lattices[0].periods(), self.lattices[1].periods());
                each(&per_lattice[0], &per_lattice[1], t1, t2)
            }
        }
    }

    pub fn forward_terms(&self, seq: &SymbolSequence) -> Result<ForwardTerms> {
        self.check(seq)?;
        let per: Vec<ForwardTerms> = self
            .lattices
            .iter()
            .map(|lat| LatticeFields::new(lat, seq).forward())
            .collect();
        Ok(self.combine(per, |a, b, t1, t2| ForwardTerms {
            cubic: extrapolate_vec(&a.cubic, &b.cubic, t1, t2),
            quintic: extrapolate_vec(&a.quintic, &b.quintic, t1, t2),
        }))
    }

    pub fn conditional_terms(&self, seq: &SymbolSequence) -> Result<ConditionalTerms> {
        self.check(seq)?;
        let per: Vec<ConditionalTerms> = self
            .lattices
            .iter()
            .map(|lat| LatticeFields::new(lat, seq).conditional())
            .collect();
        Ok(self.combine(per, |a, b, t1, t2| ConditionalTerms {
            forward: ForwardTerms {
                cubic: extrapolate_vec(&a.forward.cubic, &b.forward.cubic, t1, t2),
                quintic: extrapolate_vec(&a.forward.quintic, &b.forward.quintic, t1, t2),
            },
            b1_pair: extrapolate_mat(&a.b1_pair, &b.b1_pair, t1, t2),
            h2: extrapolate_mat(&a.h2, &b.h2, t1, t2),
            min_kernel: extrapolate_mat(&a.min_kernel, &b.min_kernel, t1, t2),
        }))
    }
}

fn extrapolate_vec(a: &[Complex64], b: &[Complex64], t1: usize, t2: usize) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| richardson(t1, *x, t2, *y)).collect()
}

fn extrapolate_mat(a: &CMatrix, b: &CMatrix, t1: usize, t2: usize) -> CMatrix {
    a.zip_map(b, |x, y| richardson(t1, x, t2, y))
}

/// The field `X` at every propagation node of one lattice.
struct LatticeFields<'a> {
    lat: &'a Lattice,
    m: i64,
    x: Vec<Vec<Complex64>>,
}

impl<'a> LatticeFields<'a> {
    fn new(lat: &'a Lattice, seq: &SymbolSequence) -> LatticeFields<'a> {
        let m = seq.order() as i64;
        let nt = lat.n_time();
        let x = (0..lat.zeta().len())
            .map(|j| {
                (0..nt)
                    .map(|n| (-m..=m).map(|k| seq.get(k) * lat.pulse(j, k, n)).sum())
                    .collect()
            })
            .collect();
        LatticeFields { lat, m, x }
    }

    fn dim(&self) -> usize {
        (2 * self.m + 1) as usize
    }

    fn slots(&self) -> impl Iterator<Item = (usize, i64)> {
        (-self.m..=self.m).enumerate()
    }

    fn profile<F>(&self, f: F) -> Profile
    where
        F: Fn(usize, usize, Complex64) -> Complex64 + Sync + Send,
    {
        self.lat.profile(|j, out| {
            for (n, o) in out.iter_mut().enumerate() {
                *o = f(j, n, self.x[j][n]);
            }
        })
    }

    /// Profiles `X X conj(X)` and, per slot, `|X|^2 u_k` and `X X conj(u_k)`.
    fn base_profiles(&self) -> (Profile, Vec<Profile>, Vec<Profile>) {
        let lat = self.lat;
        let xxx = self.profile(|_, _, x| x * x * x.conj());
        let xkx = self
            .slots()
            .map(|(_, k)| self.profile(move |j, n, x| x.norm_sqr() * lat.pulse(j, k, n)))
            .collect();
        let xxk = self
            .slots()
            .map(|(_, k)| self.profile(move |j, n, x| x * x * lat.pulse(j, k, n).conj()))
            .collect();
        (xxx, xkx, xxk)
    }

    fn cubic(&self) -> Vec<Complex64> {
        let zeta = self.lat.zeta();
        let dt = self.lat.dt();
        self.slots()
            .map(|(_, k)| {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..zeta.len() {
                    let s: Complex64 = self.x[j]
                        .iter()
                        .enumerate()
                        .map(|(n, x)| x * x * x.conj() * self.lat.pulse(j, k, n).conj())
                        .sum();
                    acc += s * zeta.weights[j];
                }
                acc * dt
            })
            .collect()
    }

    fn quintic(&self, xxx: &Profile, xkx: &[Profile], xxk: &[Profile]) -> Vec<Complex64> {
        let ordered = self.lat.weighted(xxx, ZetaWeight::Ordered);
        (0..self.dim())
            .map(|i| 2.0 * self.lat.contract(&xkx[i], &ordered, 0) - self.lat.contract(&xxk[i], &ordered, 0).conj())
            .collect()
    }

    fn forward(&self) -> ForwardTerms {
        let (xxx, xkx, xxk) = self.base_profiles();
        ForwardTerms {
            cubic: self.cubic(),
            quintic: self.quintic(&xxx, &xkx, &xxk),
        }
    }

    fn b1_pair(&self) -> CMatrix {
        let d = self.dim();
        let zeta = self.lat.zeta();
        let mut out = CMatrix::zeros(d, d);
        for (a, ka) in self.slots() {
            for (b, kb) in self.slots().skip(a) {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..zeta.len() {
                    let s: Complex64 = self.x[j]
                        .iter()
                        .enumerate()
                        .map(|(n, x)| x * x * (self.lat.pulse(j, ka, n) * self.lat.pulse(j, kb, n)).conj())
                        .sum();
                    acc += s * zeta.weights[j] * zeta.nodes[j];
                }
                out[(a, b)] = acc * self.lat.dt();
                out[(b, a)] = out[(a, b)];
            }
        }
        out
    }

    fn conditional(&self) -> ConditionalTerms {
        let lat = self.lat;
        let d = self.dim();
        let (xxx, xkx, xxk) = self.base_profiles();
        let forward = ForwardTerms {
            cubic: self.cubic(),
            quintic: self.quintic(&xxx, &xkx, &xxk),
        };
        let inner: Vec<_> = xxk.iter().map(|p| lat.weighted(p, ZetaWeight::OrderedInner)).collect();
        let mins: Vec<_> = xxk.iter().map(|p| lat.weighted(p, ZetaWeight::Min)).collect();
        let outer_xxx = lat.weighted(&xxx, ZetaWeight::OrderedOuter);
        let mut h2 = CMatrix::zeros(d, d);
        let mut min_kernel = CMatrix::zeros(d, d);
        for (a, ka) in self.slots() {
            for (b, kb) in self.slots() {
                min_kernel[(a, b)] = lat.contract(&xxk[a], &mins[b], 0);
                if b < a {
                    continue;
                }
                let kk = self.profile(move |j, n, x| lat.pulse(j, ka, n) * lat.pulse(j, kb, n) * x.conj());
                let v = lat.contract(&xkx[a], &inner[b], 0)
                    + lat.contract(&xkx[b], &inner[a], 0)
                    + lat.contract(&kk, &outer_xxx, 0);
                h2[(a, b)] = 2.0 * v;
                h2[(b, a)] = 2.0 * v;
            }
        }
        ConditionalTerms {
            forward,
            b1_pair: self.b1_pair(),
            h2,
            min_kernel,
        }
    }
}

/// `sum C C conj(C) a1[., .; ., k]` from a dense `a1` tensor.
pub fn cubic_from_tensor(a1: &Tensor4, seq: &SymbolSequence) -> Result<Vec<Complex64>> {
    if a1.order() != seq.order() {
        return Err(invalid("a1 order does not match the sequence"));
    }
    let m = seq.order() as i64;
    Ok((-m..=m)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k1 in -m..=m {
                for k2 in -m..=m {
                    let up = seq.get(k1) * seq.get(k2);
                    for k3 in -m..=m {
                        acc += a1.get(k1, k2, k3, k) * up * seq.get(k3).conj();
                    }
                }
            }
            acc
        })
        .collect())
}

fn map_terms(seq: &SymbolSequence, terms: &ForwardTerms, gamma: f64) -> Result<ReceivedSymbols> {
    let g2 = gamma * gamma;
    let v = seq
        .as_slice()
        .iter()
        .zip(terms.cubic.iter().zip(&terms.quintic))
        .map(|(c, (n1, n2))| c + I * gamma * n1 - g2 * n2)
        .collect();
    SymbolSequence::new(seq.order(), v)
}

/// Noiseless received symbols to second order in `gamma`.
pub fn forward_map(kernels: &SequenceKernels, seq: &SymbolSequence, gamma: f64) -> Result<ReceivedSymbols> {
    map_terms(seq, &kernels.forward_terms(seq)?, gamma)
}

/// Perturbative inverse of [`forward_map`], accurate to `O(gamma^3)`.
pub fn inverse_map(kernels: &SequenceKernels, rec: &ReceivedSymbols, gamma: f64) -> Result<SymbolSequence> {
    let at_rec = kernels.forward_terms(rec)?;
    let first: Vec<Complex64> = rec
        .as_slice()
        .iter()
        .zip(&at_rec.cubic)
        .map(|(c, n1)| c - I * gamma * n1)
        .collect();
    let first = SymbolSequence::new(rec.order(), first)?;
    let at_first = kernels.forward_terms(&first)?;
    let v = rec
        .as_slice()
        .iter()
        .zip(at_first.cubic.iter().zip(&at_rec.quintic))
        .map(|(c, (n1, n2))| c - I * gamma * n1 + gamma * gamma * n2)
        .collect();
    SymbolSequence::new(rec.order(), v)
}

/// Coefficients of the quadratic form in the conditional density.
#[derive(Debug, Clone)]
pub struct CondPdfCoeffs {
    pub h1: CMatrix,
    pub h2: CMatrix,
    pub f2: CMatrix,
    /// `O(gamma^2)` bracket of the normalisation factor.
    pub lambda_factor: f64,
}

impl CondPdfCoeffs {
    pub fn new(terms: &ConditionalTerms, gamma: f64) -> CondPdfCoeffs {
        let g2 = gamma * gamma;
        let h1 = terms.b1_pair.map(|p| -I * gamma * p);
        let g1 = h1.map(|h| h.conj());
        let f2 = (&g1 * &h1) * Complex64::new(4.0, 0.0) - terms.min_kernel.map(|k| 2.0 * g2 * k);
        let lambda_factor = (f2.trace() - (&g1 * &h1).trace() * 2.0).re;
        CondPdfCoeffs {
            h1,
            h2: terms.h2.map(|h| g2 * h),
            f2,
            lambda_factor,
        }
    }

    pub fn dim(&self) -> usize {
        self.h1.nrows()
    }

    pub fn h(&self) -> CMatrix {
        &self.h1 + &self.h2
    }

    pub fn g(&self) -> CMatrix {
        self.h().map(|h| h.conj())
    }

    pub fn f(&self) -> CMatrix {
        CMatrix::identity(self.dim(), self.dim()) + &self.f2
    }

    /// `sum d_k' F[k', k] conj(d_k) + d G d + conj(d) H conj(d)`.
    pub fn quadratic_form(&self, delta: &[Complex64]) -> f64 {
        let d = nalgebra::DVector::from_column_slice(delta);
        let dc = d.map(|z| z.conj());
        let f = (d.transpose() * self.f() * &dc)[(0, 0)];
        let h = (dc.transpose() * self.h() * &dc)[(0, 0)];
        f.re + 2.0 * h.re
    }

    /// True when the quadratic form is positive definite on the real
    /// coordinates of `delta`.
    pub fn is_positive_definite(&self) -> bool {
        let d = self.dim();
        let basis = |i: usize| -> Vec<Complex64> {
            let mut v = vec![Complex64::new(0.0, 0.0); d];
            v[i / 2] = if i % 2 == 0 { Complex64::new(1.0, 0.0) } else { I };
            v
        };
        let n = 2 * d;
        let diag: Vec<f64> = (0..n).map(|i| self.quadratic_form(&basis(i))).collect();
        let mut real = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            real[(i, i)] = diag[i];
            for j in 0..i {
                let s: Vec<Complex64> = basis(i).iter().zip(basis(j)).map(|(a, b)| a + b).collect();
                let v = 0.5 * (self.quadratic_form(&s) - diag[i] - diag[j]);
                real[(i, j)] = v;
                real[(j, i)] = v;
            }
        }
        real.cholesky().is_some()
    }
}

/// Channel conditions needed by the noise-dependent statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub gamma: f64,
    pub snr: f64,
    /// Noise bandwidth over signal bandwidth.
    pub noise_band_ratio: f64,
}

/// `<dC_m dC_k>` and `<dC_m conj(dC_k)>`.
#[derive(Debug, Clone)]
pub struct PredictedCov {
    pub cov_cc: CMatrix,
    pub cov_cc_bar: CMatrix,
}

pub fn predicted_cov(terms: &ConditionalTerms, noise: NoiseSpec) -> PredictedCov {
    let coeffs = CondPdfCoeffs::new(terms, noise.gamma);
    let d = coeffs.dim();
    let g2 = noise.gamma * noise.gamma;
    PredictedCov {
        cov_cc: coeffs.h().transpose().map(|h| -2.0 / noise.snr * h),
        cov_cc_bar: (CMatrix::identity(d, d) + terms.min_kernel.transpose().map(|k| 2.0 * g2 * k))
            .map(|v| v / noise.snr),
    }
}

/// Mean received symbols: the noiseless map, the phase from the noise power
/// in the whole noise band, and the noise loop correction.
pub fn predicted_mean(
    kernels: &SequenceKernels,
    seq: &SymbolSequence,
    noise: NoiseSpec,
    policy: ExecPolicy,
) -> Result<ReceivedSymbols> {
    let c0 = forward_map(kernels, seq, noise.gamma)?;
    let g = noise.gamma;
    let phase = I * g * noise.noise_band_ratio / noise.snr;
    let lp = if noise.gamma == 0.0 {
        vec![Complex64::new(0.0, 0.0); seq.len()]
    } else {
        noise_loop(seq, kernels.beta(), noise.noise_band_ratio, kernels.periods(), policy)?
    };
    let v = c0
        .as_slice()
        .iter()
        .zip(&lp)
        .map(|(c, l)| c + phase * c - 2.0 * g * g / noise.snr * l)
        .collect();
    SymbolSequence::new(seq.order(), v)
}

/// Loop integral of the mean:
/// `int_{z2 < z1} z2 int dnu_a dnu_b conj(q_k) p exp(i (z1 - z2) (phi_a + phi_b))`
/// with `p` the spectrum of `X X` at `z2`, `q_k` that of `X u_k` at `z1`,
/// and both `nu_a`, `nu_b` inside the noise band.
pub fn noise_loop(
    seq: &SymbolSequence,
    beta: f64,
    noise_band_ratio: f64,
    periods: usize,
    policy: ExecPolicy,
) -> Result<Vec<Complex64>> {
    if periods % 2 == 0 || periods < seq.len() + 2 {
        return Err(invalid(format!("loop lattice needs an odd period > {}", seq.len() + 1)));
    }
    if noise_band_ratio < 1.0 {
        return Err(invalid("noise band must contain the signal band"));
    }
    let t = periods as f64;
    let h = (periods as i64 - 1) / 2;
    let m = seq.order() as i64;
    let phi = |l: i64| 2.0 * beta * (l as f64 / t).powi(2);
    let spectrum = |k: i64, l: i64| Complex64::from_polar(1.0 / t, 2.0 * PI * (l * k) as f64 / t);
    let x_hat: Vec<Complex64> = (-h..=h).map(|l| (-m..=m).map(|k| seq.get(k) * spectrum(k, l)).sum()).collect();
    let xh = |l: i64| x_hat[(l + h) as usize];
    // band-limited pair spectra at one propagation coordinate
    let pair = |z: f64, other: &dyn Fn(i64) -> Complex64| -> Vec<Complex64> {
        (-2 * h..=2 * h)
            .map(|s| {
                let lo = (s - h).max(-h);
                let hi = (s + h).min(h);
                (lo..=hi)
                    .map(|l| xh(l) * other(s - l) * Complex64::from_polar(1.0, z * (phi(l) + phi(s - l))))
                    .sum()
            })
            .collect()
    };
    let band = (noise_band_ratio * t / 2.0).ceil() as i64 - 1;
    let band = if (band + 1) as f64 / t < noise_band_ratio / 2.0 { band + 1 } else { band };
    let loop_kernel = |s: i64, dz: f64| -> Complex64 {
        let lo = (s - band).max(-band);
        let hi = (s + band).min(band);
        (lo..=hi).map(|a| Complex64::from_polar(1.0, dz * (phi(a) + phi(s - a)))).sum()
    };
    // z1 by Gauss-Legendre; z2 = z1 (1 - u^2) clusters nodes at the diagonal
    let outer = gauss_legendre(24).mapped(0.0, 1.0);
    let inner = gauss_legendre(32).mapped(0.0, 1.0);
    let nodes: Vec<(f64, f64)> = outer.iter().collect();
    let per_node = policy.map_slice(&nodes, |&(z1, w1)| {
        let qs: Vec<Vec<Complex64>> = (-m..=m).map(|k| pair(z1, &|l| if l.abs() <= h { spectrum(k, l) } else { Complex64::new(0.0, 0.0) })).collect();
        let mut acc = vec![Complex64::new(0.0, 0.0); (2 * m + 1) as usize];
        for (u, wu) in inner.iter() {
            let z2 = z1 * (1.0 - u * u);
            let w = w1 * wu * 2.0 * u * z1 * z2;
            let p = pair(z2, &|l| if l.abs() <= h { xh(l) } else { Complex64::new(0.0, 0.0) });
            let dz = z1 - z2;
            let kern: Vec<Complex64> = (-2 * h..=2 * h).map(|s| loop_kernel(s, dz)).collect();
            for (a, q) in acc.iter_mut().zip(&qs) {
                let s: Complex64 = q.iter().zip(&p).zip(&kern).map(|((q, p), k)| q.conj() * p * k).sum();
                *a += s * w;
            }
        }
        acc
    });
    let mut out = vec![Complex64::new(0.0, 0.0); (2 * m + 1) as usize];
    for v in per_node {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    Ok(out)
}

/// `ln P(rec | seq)` with the exponent expanded as a series to `O(gamma^2)`.
///
/// Returns negative infinity where the truncated series is not positive.
pub fn cond_log_pdf(rec: &ReceivedSymbols, mean: &ReceivedSymbols, coeffs: &CondPdfCoeffs, snr: f64) -> Result<f64> {
    if rec.len() != mean.len() || rec.len() != coeffs.dim() {
        return Err(invalid("received symbols, mean and coefficients differ in size"));
    }
    let delta: Vec<Complex64> = rec.as_slice().iter().zip(mean.as_slice()).map(|(r, m)| r - m).collect();
    let d = nalgebra::DVector::from_column_slice(&delta);
    let dc = d.map(|z| z.conj());
    let q0: f64 = delta.iter().map(|z| z.norm_sqr()).sum();
    let e1 = 2.0 * (dc.transpose() * &coeffs.h1 * &dc)[(0, 0)].re;
    let e2 = (d.transpose() * &coeffs.f2 * &dc)[(0, 0)].re + 2.0 * (dc.transpose() * &coeffs.h2 * &dc)[(0, 0)].re;
    let bracket = 1.0 + coeffs.lambda_factor - snr * (e1 + e2) + 0.5 * (snr * e1).powi(2);
    let n = rec.len() as f64;
    if bracket <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(n * (snr / PI).ln() - snr * q0 + bracket.ln())
}

/// `gamma^2 sum J C C conj(C) conj(C)`: the predicted log-Jacobian.
pub fn log_jacobian_prediction(j: &Tensor4, seq: &SymbolSequence, gamma: f64) -> Result<f64> {
    Ok(gamma * gamma * contract_quartic(j, seq.as_slice())?.re)
}

/// `ln |det|` of the real Jacobian of the forward map, by central differences.
pub fn jacobian_log_det(kernels: &SequenceKernels, seq: &SymbolSequence, gamma: f64, step: f64) -> Result<f64> {
    let d = seq.len();
    let n = 2 * d;
    let to_real = |s: &SymbolSequence| -> Vec<f64> { s.as_slice().iter().flat_map(|c| [c.re, c.im]).collect() };
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for col in 0..n {
        let shifted = |sign: f64| -> Result<Vec<f64>> {
            let mut s = seq.clone();
            let k = (col / 2) as i64 - seq.order() as i64;
            let dz = if col % 2 == 0 { Complex64::new(sign * step, 0.0) } else { Complex64::new(0.0, sign * step) };
            s.set(k, s.get(k) + dz);
            Ok(to_real(&forward_map(kernels, &s, gamma)?))
        };
        let plus = shifted(1.0)?;
        let minus = shifted(-1.0)?;
        for row in 0..n {
            jac[(row, col)] = (plus[row] - minus[row]) / (2.0 * step);
        }
    }
    let det = jac.lu().determinant();
    if det <= 0.0 {
        return Err(invalid("forward map Jacobian is not orientation preserving"));
    }
    Ok(det.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{build_coefficients, Coverage};
    use crate::envelope::EnvelopeKind;

    fn seq(m: usize, vals: &[(f64, f64)]) -> SymbolSequence {
        SymbolSequence::new(m, vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap()
    }

    #[test]
    fn zero_gamma_is_identity() {
        let k = SequenceKernels::new(1, 0.5, ExecPolicy::Sequential).unwrap();
        let s = seq(1, &[(0.3, -0.2), (1.1, 0.4), (-0.5, 0.9)]);
        assert_eq!(forward_map(&k, &s, 0.0).unwrap(), s);
        assert_eq!(inverse_map(&k, &s, 0.0).unwrap(), s);
    }

    #[test]
    fn single_symbol_zero_dispersion() {
        // a1 = 2/3, b1 = 1/3, A2 = 11/40 so a2 = 2 A2 - A2 = 11/40
        let k = SequenceKernels::new(0, 0.0, ExecPolicy::Sequential).unwrap();
        let c = Complex64::new(0.8, 0.5);
        let s = seq(0, &[(c.re, c.im)]);
        let t = k.conditional_terms(&s).unwrap();
        let n = c.norm_sqr();
        assert!((t.forward.cubic[0] - c * n * 2.0 / 3.0).norm() < 1e-6);
        assert!((t.forward.quintic[0] - c * n * n * 11.0 / 40.0).norm() < 1e-6);
        let h1 = CondPdfCoeffs::new(&t, 0.2).h1[(0, 0)];
        assert!((h1 + I * 0.1 * (2.0 / 3.0) * c * c).norm() < 1e-6);
    }

    #[test]
    fn lattice_cubic_matches_tensor() {
        let set = build_coefficients(1, 1.0, EnvelopeKind::Sinc, Coverage::Full, ExecPolicy::Sequential).unwrap();
        let k = SequenceKernels::new(1, 1.0, ExecPolicy::Sequential).unwrap();
        let s = seq(1, &[(0.3, -0.2), (1.1, 0.4), (-0.5, 0.9)]);
        let lat = k.forward_terms(&s).unwrap().cubic;
        let ten = cubic_from_tensor(&set.a1, &s).unwrap();
        for (a, b) in lat.iter().zip(&ten) {
            assert!((a - b).norm() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_map_commutes_with_phase() {
        let k = SequenceKernels::new(1, 1.0, ExecPolicy::Sequential).unwrap();
        let s = seq(1, &[(0.3, -0.2), (1.1, 0.4), (-0.5, 0.9)]);
        let a = forward_map(&k, &s.rotated(0.7), 0.3).unwrap();
        let b = forward_map(&k, &s, 0.3).unwrap().rotated(0.7);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn coefficient_symmetries() {
        let k = SequenceKernels::new(1, 1.0, ExecPolicy::Sequential).unwrap();
        let s = seq(1, &[(0.3, -0.2), (1.1, 0.4), (-0.5, 0.9)]);
        let c = CondPdfCoeffs::new(&k.conditional_terms(&s).unwrap(), 0.2);
        let h = c.h();
        assert!((&h - h.transpose()).norm() < 1e-12);
        let f = c.f();
        assert!((&f - f.adjoint()).norm() < 1e-9);
        assert!(c.is_positive_definite());
    }

    #[test]
    fn lambda_factor_matches_j_lambda() {
        let set = build_coefficients(1, 1.0, EnvelopeKind::Sinc, Coverage::Full, ExecPolicy::Sequential).unwrap();
        let jt = crate::jtensors::build_jtensors(&set, ExecPolicy::Sequential).unwrap();
        let k = SequenceKernels::new(1, 1.0, ExecPolicy::Sequential).unwrap();
        let s = seq(1, &[(0.3, -0.2), (1.1, 0.4), (-0.5, 0.9)]);
        let c = CondPdfCoeffs::new(&k.conditional_terms(&s).unwrap(), 0.3);
        let tensor = log_jacobian_prediction(&jt.j_lambda, &s, 0.3).unwrap();
        assert!((c.lambda_factor - tensor).abs() < 1e-6, "{} vs {tensor}", c.lambda_factor);
    }

    #[test]
    fn noise_loop_without_dispersion_is_local() {
        // at beta = 0 the loop reduces to (band / 6) int |X|^2 X conj(u_k) dt
        let s = seq(1, &[(0.3, -0.2), (1.1, 0.4), (-0.5, 0.9)]);
        let t = 31;
        let nbr = 40.0;
        let got = noise_loop(&s, 0.0, nbr, t, ExecPolicy::Sequential).unwrap();
        let lat = Lattice::new(0.0, LatticeSpec { periods: t, zeta_degree: 2 }, ExecPolicy::Sequential).unwrap();
        let cubic = LatticeFields::new(&lat, &s).cubic();
        for (g, c) in got.iter().zip(&cubic) {
            // the band overlap count is 2B + 1 - |s|, so the local limit holds to O(1 / nbr)
            assert!((g - c * nbr / 6.0).norm() < 0.03 * (c * nbr / 6.0).norm(), "{g} vs {}", c * nbr / 6.0);
        }
    }

    #[test]
    fn single_symbol_density_is_normalised() {
        let k = SequenceKernels::new(0, 1.0, ExecPolicy::Sequential).unwrap();
        let s = seq(0, &[(0.9, -0.6)]);
        let c = CondPdfCoeffs::new(&k.conditional_terms(&s).unwrap(), 0.1);
        let snr: f64 = 50.0;
        let mean = s.clone();
        let radius = 9.0 / snr.sqrt();
        let radial = gauss_legendre(60).mapped(0.0, radius);
        let n_angle = 64;
        let mut total = 0.0;
        for (r, w) in radial.iter() {
            for a in 0..n_angle {
                let th = 2.0 * PI * a as f64 / n_angle as f64;
                let rec = seq(0, &[(0.9 + r * th.cos(), -0.6 + r * th.sin())]);
                let lp = cond_log_pdf(&rec, &mean, &c, snr).unwrap();
                total += w * r * (2.0 * PI / n_angle as f64) * lp.exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }
}
