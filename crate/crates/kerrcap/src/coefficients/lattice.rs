//! Periodic-lattice evaluation of the second-order propagation kernels.
//!
//! The sinc pulse is replaced by its periodic version on `T` (odd) symbol
//! slots, so the band `|nu| < 1/2` carries the `T` discrete frequencies
//! `l / T`, `|l| <= (T - 1) / 2`. On that lattice every frequency integral
//! becomes a finite sum and products of dispersed pulses are handled by FFT
//! on a time grid with `4 T` samples, which is alias free for cubic products.
//! The propagation coordinate uses Chebyshev-Lobatto nodes with a spectral
//! cumulative-integration matrix, so the ordered double integrals over
//! `zeta_2 < zeta_1` reduce to matrix products.
//!
//! The periodisation error decays as `1/T^2`; [`richardson`] removes the
//! leading term from two lattice sizes.

use crate::error::{invalid, Result};
use crate::exec::ExecPolicy;
use crate::quad::ChebyshevGrid;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Weight attached to the ordered pair of propagation coordinates
/// `(zeta_1, zeta_2)`, where `zeta_1` belongs to the outer vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZetaWeight {
    /// `theta(zeta_1 > zeta_2)`
    Ordered,
    /// `theta(zeta_1 > zeta_2) * zeta_2`
    OrderedInner,
    /// `theta(zeta_1 > zeta_2) * zeta_1`
    OrderedOuter,
    /// `min(zeta_1, zeta_2)` over the full square
    Min,
}

/// Lattice size and propagation-grid resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    /// Number of symbol slots in one period; odd.
    pub periods: usize,
    /// Chebyshev polynomial degree in the propagation coordinate.
    pub zeta_degree: usize,
}

impl LatticeSpec {
    /// Default pair of lattice sizes used for Richardson extrapolation.
    pub fn pair_for(beta: f64, m: usize) -> (LatticeSpec, LatticeSpec) {
        let zeta_degree = 20 + (7.0 * beta.abs()).ceil() as usize;
        let base = 4 * m + 8 + (3.0 * beta.abs()).ceil() as usize;
        let t1 = (2 * base + 1).max(21) | 1;
        let t2 = ((t1 as f64 * 1.5) as usize) | 1;
        (
            LatticeSpec { periods: t1, zeta_degree },
            LatticeSpec { periods: t2, zeta_degree },
        )
    }
}

/// Removes the `1/T^2` periodisation error from two lattice results.
pub fn richardson(t1: usize, v1: Complex64, t2: usize, v2: Complex64) -> Complex64 {
    let (a, b) = ((t1 * t1) as f64, (t2 * t2) as f64);
    (v2 * b - v1 * a) / (b - a)
}

/// Dispersed pulses on the periodic lattice at every propagation node.
pub struct Lattice {
    beta: f64,
    periods: usize,
    n_time: usize,
    band: usize,
    zeta: ChebyshevGrid,
    pulses: Vec<Vec<Complex64>>,
    fft: Arc<dyn Fft<f64>>,
    policy: ExecPolicy,
}

/// Phase-stripped spectra of one cubic product at every propagation node.
///
/// Row `j` holds `F(nu_l, zeta_j) exp(-2 i beta zeta_j nu_l^2)` for
/// `|l| <= band`, stored at column `l + band`.
#[derive(Debug, Clone)]
pub struct Profile {
    width: usize,
    data: Vec<Complex64>,
}

impl Profile {
    pub fn row(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.width..(j + 1) * self.width]
    }

    pub fn conj(&self) -> Profile {
        Profile {
            width: self.width,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }
}

/// An inner profile already integrated against a [`ZetaWeight`] and the
/// outer quadrature weights, ready for [`Lattice::contract`].
#[derive(Debug, Clone)]
pub struct Weighted {
    width: usize,
    data: Vec<Complex64>,
}

impl Lattice {
    pub fn new(beta: f64, spec: LatticeSpec, policy: ExecPolicy) -> Result<Lattice> {
        let t = spec.periods;
        if t < 3 || t % 2 == 0 {
            return Err(invalid(format!("lattice period must be odd and >= 3, got {t}")));
        }
        if spec.zeta_degree < 2 {
            return Err(invalid("zeta degree must be at least 2"));
        }
        if !beta.is_finite() {
            return Err(invalid("beta must be finite"));
        }
        let n_time = 4 * t;
        let half = (t - 1) / 2;
        let zeta = ChebyshevGrid::new(spec.zeta_degree);
        let fft = FftPlanner::new().plan_fft_forward(n_time);
        let pulses = policy.map(zeta.len(), |j| {
            let z = zeta.nodes[j];
            let mut buf = vec![Complex64::new(0.0, 0.0); n_time];
            for l in -(half as i64)..=(half as i64) {
                let nu = l as f64 / t as f64;
                let idx = l.rem_euclid(n_time as i64) as usize;
                buf[idx] = Complex64::from_polar(1.0 / t as f64, 2.0 * beta * z * nu * nu);
            }
            fft.process(&mut buf);
            buf
        });
        Ok(Lattice {
            beta,
            periods: t,
            n_time,
            band: 3 * half,
            zeta,
            pulses,
            fft,
            policy,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn zeta(&self) -> &ChebyshevGrid {
        &self.zeta
    }

    /// Time step of the sampling grid in symbol slots.
    pub fn dt(&self) -> f64 {
        self.periods as f64 / self.n_time as f64
    }

    /// Sample `n` of the pulse centred on slot `k` at propagation node `j`.
    #[inline]
    pub fn pulse(&self, j: usize, k: i64, n: usize) -> Complex64 {
        let idx = (n as i64 - 4 * k).rem_euclid(self.n_time as i64) as usize;
        self.pulses[j][idx]
    }

    /// The full time series of pulse `k` at node `j`.
    pub fn pulse_series(&self, j: usize, k: i64) -> Vec<Complex64> {
        (0..self.n_time).map(|n| self.pulse(j, k, n)).collect()
    }

    /// Profile of `u_a u_b conj(u_c)`.
    pub fn triple(&self, a: i64, b: i64, c: i64) -> Profile {
        self.profile(|j, out| {
            for (n, o) in out.iter_mut().enumerate() {
                *o = self.pulse(j, a, n) * self.pulse(j, b, n) * self.pulse(j, c, n).conj();
            }
        })
    }

    /// Profile of an arbitrary time signal built per node by `fill`.
    ///
    /// The signal must be band limited to `|nu| <= 3/2`.
    pub fn profile<F>(&self, fill: F) -> Profile
    where
        F: Fn(usize, &mut [Complex64]) + Sync + Send,
    {
        let width = 2 * self.band + 1;
        let t = self.periods as f64;
        let scale = t / self.n_time as f64;
        let rows = self.policy.map(self.zeta.len(), |j| {
            let mut buf = vec![Complex64::new(0.0, 0.0); self.n_time];
            fill(j, &mut buf);
            self.fft.process(&mut buf);
            let z = self.zeta.nodes[j];
            let mut row = vec![Complex64::new(0.0, 0.0); width];
            for (c, r) in row.iter_mut().enumerate() {
                let l = c as i64 - self.band as i64;
                let nu = l as f64 / t;
                let idx = (-l).rem_euclid(self.n_time as i64) as usize;
                *r = buf[idx] * scale * Complex64::from_polar(1.0, -2.0 * self.beta * z * nu * nu);
            }
            row
        });
        Profile {
            width,
            data: rows.concat(),
        }
    }

    /// Integrates an inner profile over `zeta_2` against `weight` and folds in
    /// the outer quadrature weights.
    pub fn weighted(&self, inner: &Profile, weight: ZetaWeight) -> Weighted {
        let nz = self.zeta.len();
        let width = inner.width;
        let cum = |scale_by_zeta: bool| -> Vec<Complex64> {
            let mut out = vec![Complex64::new(0.0, 0.0); nz * width];
            for i in 0..nz {
                let dst = &mut out[i * width..(i + 1) * width];
                for j in 0..nz {
                    let mut c = self.zeta.cumulative[i][j];
                    if c == 0.0 {
                        continue;
                    }
                    if scale_by_zeta {
                        c *= self.zeta.nodes[j];
                    }
                    for (d, s) in dst.iter_mut().zip(inner.row(j)) {
                        *d += s * c;
                    }
                }
            }
            out
        };
        let mut data = match weight {
            ZetaWeight::Ordered => cum(false),
            ZetaWeight::OrderedInner => cum(true),
            ZetaWeight::OrderedOuter => {
                let mut v = cum(false);
                for i in 0..nz {
                    let z = self.zeta.nodes[i];
                    v[i * width..(i + 1) * width].iter_mut().for_each(|x| *x *= z);
                }
                v
            }
            ZetaWeight::Min => {
                let plain = cum(false);
                let mut v = cum(true);
                let total = &plain[(nz - 1) * width..];
                for i in 0..nz {
                    let z = self.zeta.nodes[i];
                    for c in 0..width {
                        v[i * width + c] += (total[c] - plain[i * width + c]) * z;
                    }
                }
                v
            }
        };
        for i in 0..nz {
            let w = self.zeta.weights[i];
            data[i * width..(i + 1) * width].iter_mut().for_each(|x| *x *= w);
        }
        Weighted { width, data }
    }

    /// `(1/T) sum_l exp(2 pi i nu_l shift) sum_j conj(outer_jl) inner_jl`.
    ///
    /// With `outer` the profile of `u_{m5-m3} u_{m6-m3} conj(u_0)` and `inner`
    /// the weighted profile of `u_{m1-m4} u_{m2-m4} conj(u_0)`, and
    /// `shift = m4 - m3`, this is the kernel with index layout
    /// `(m1, m2, m3; m4, m5, m6)`.
    pub fn contract(&self, outer: &Profile, inner: &Weighted, shift: i64) -> Complex64 {
        let width = outer.width;
        debug_assert_eq!(width, inner.width);
        let mut per_l = vec![Complex64::new(0.0, 0.0); width];
        for (o, w) in outer.data.chunks_exact(width).zip(inner.data.chunks_exact(width)) {
            for ((p, a), b) in per_l.iter_mut().zip(o).zip(w) {
                *p += a.conj() * b;
            }
        }
        self.phase_sum(&per_l, shift)
    }

    fn phase_sum(&self, per_l: &[Complex64], shift: i64) -> Complex64 {
        let t = self.periods as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        if shift == 0 {
            acc = per_l.iter().sum();
        } else {
            let step = Complex64::from_polar(1.0, 2.0 * PI * shift as f64 / t);
            let mut ph = Complex64::from_polar(1.0, -2.0 * PI * shift as f64 * self.band as f64 / t);
            for p in per_l {
                acc += p * ph;
                ph *= step;
            }
        }
        acc / t
    }

    /// `int_0^1 dzeta w(zeta) int dt u_n u_m conj(u_p) conj(u_k)` with `w = 1`
    /// (`linear = false`) or `w = zeta` (`linear = true`).
    pub fn first_order(&self, idx: [i64; 4], linear: bool) -> Complex64 {
        let [n, m, p, k] = idx;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..self.zeta.len() {
            let mut s = Complex64::new(0.0, 0.0);
            for t in 0..self.n_time {
                s += self.pulse(j, n, t)
                    * self.pulse(j, m, t)
                    * (self.pulse(j, p, t) * self.pulse(j, k, t)).conj();
            }
            let mut w = self.zeta.weights[j];
            if linear {
                w *= self.zeta.nodes[j];
            }
            acc += s * w;
        }
        acc * self.dt()
    }
}

/// Canonical triple profiles `u_a u_b conj(u_0)` for `|a|, |b| <= reach`,
/// with cached weighted versions.
pub struct TripleTable {
    lattice: Lattice,
    reach: i64,
    profiles: Vec<Profile>,
}

impl TripleTable {
    pub fn new(lattice: Lattice, reach: usize) -> TripleTable {
        let reach = reach as i64;
        let lat = &lattice;
        let profiles = ExecPolicy::Sequential.map_slice(&canonical_pairs(reach), |&(a, b)| lat.triple(a, b, 0));
        TripleTable {
            lattice,
            reach,
            profiles,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn reach(&self) -> i64 {
        self.reach
    }

    fn slot(&self, a: i64, b: i64) -> usize {
        assert!(a.abs() <= self.reach && b.abs() <= self.reach, "triple ({a},{b}) outside table");
        canonical_slot(self.reach, a, b)
    }

    pub fn profile(&self, a: i64, b: i64) -> &Profile {
        &self.profiles[self.slot(a, b)]
    }

    /// Weighted versions of every canonical profile.
    pub fn weighted_all(&self, weight: ZetaWeight, policy: ExecPolicy) -> WeightedTable {
        let data = policy.map_slice(&self.profiles, |p| self.lattice.weighted(p, weight));
        WeightedTable {
            reach: self.reach,
            weight,
            data,
        }
    }

    /// Kernel with layout `(m1, m2, m3; m4, m5, m6)`: inner vertex
    /// `(m1, m2; m4)`, outer vertex `(m3; m5, m6)`.
    pub fn kernel(&self, weighted: &WeightedTable, m: [i64; 6]) -> Complex64 {
        let [m1, m2, m3, m4, m5, m6] = m;
        let outer = self.profile(m5 - m3, m6 - m3);
        let inner = weighted.get(m1 - m4, m2 - m4);
        self.lattice.contract(outer, inner, m4 - m3)
    }
}

/// Weighted canonical profiles for one [`ZetaWeight`].
pub struct WeightedTable {
    reach: i64,
    weight: ZetaWeight,
    data: Vec<Weighted>,
}

impl WeightedTable {
    pub fn weight(&self) -> ZetaWeight {
        self.weight
    }

    pub fn get(&self, a: i64, b: i64) -> &Weighted {
        assert!(a.abs() <= self.reach && b.abs() <= self.reach, "triple ({a},{b}) outside table");
        &self.data[canonical_slot(self.reach, a, b)]
    }
}

/// Unordered pairs `a <= b` in `[-reach, reach]`, in storage order.
fn canonical_pairs(reach: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for a in -reach..=reach {
        for b in a..=reach {
            out.push((a, b));
        }
    }
    out
}

/// Storage slot of the pair; `u_a u_b` is symmetric so `(a, b)` and `(b, a)` share it.
fn canonical_slot(reach: i64, a: i64, b: i64) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let side = 2 * reach + 1;
    let i = a + reach;
    // rows before `i` hold side, side - 1, ... entries
    let before = i * side - i * (i - 1) / 2;
    (before + (b - a)) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{a1, b1, ZeroBeta};
    use crate::envelope::EnvelopeKind;

    fn lattice(beta: f64, t: usize, deg: usize) -> Lattice {
        Lattice::new(
            beta,
            LatticeSpec {
                periods: t,
                zeta_degree: deg,
            },
            ExecPolicy::Sequential,
        )
        .unwrap()
    }

    #[test]
    fn first_order_matches_two_fold_form() {
        let idx = [1, 0, 0, 1];
        let exact = a1(idx[0], idx[1], idx[2], idx[3], 1.0);
        let (t1, t2) = (31, 45);
        let v1 = lattice(1.0, t1, 24).first_order(idx, false);
        let v2 = lattice(1.0, t2, 24).first_order(idx, false);
        let r = richardson(t1, v1, t2, v2);
        assert!((r - exact).norm() < 2e-5, "{r} vs {exact} (raw {v2})");
        let exact_b = b1(1, 2, 0, 3, 1.0);
        let v1 = lattice(1.0, t1, 24).first_order([1, 2, 0, 3], true);
        let v2 = lattice(1.0, t2, 24).first_order([1, 2, 0, 3], true);
        let r = richardson(t1, v1, t2, v2);
        assert!((r - exact_b).norm() < 2e-5, "{r} vs {exact_b}");
    }

    #[test]
    fn zero_beta_kernel_matches_closed_form() {
        let zb = ZeroBeta::new(EnvelopeKind::Sinc);
        let (t1, t2) = (31, 45);
        let m = [1, 0, 0, 1, 0, -1];
        let vals: Vec<Complex64> = [t1, t2]
            .iter()
            .map(|&t| {
                let tab = TripleTable::new(lattice(0.0, t, 4), 2);
                let w = tab.weighted_all(ZetaWeight::Ordered, ExecPolicy::Sequential);
                tab.kernel(&w, m)
            })
            .collect();
        let r = richardson(t1, vals[0], t2, vals[1]);
        let exact = zb.a2(m);
        assert!((r.re - exact).abs() < 2e-5 && r.im.abs() < 1e-9, "{r} vs {exact}");
    }
}
