//! Split-step simulation of the noisy channel on a periodic time grid.
//!
//! The field lives on `periods` symbol slots with `n_time` samples. Its
//! spectrum uses `psi(t_n) = sum_l psi_hat_l exp(-2 pi i nu_l t_n)` with
//! `nu_l = l / periods`, so a forward FFT of the spectrum gives the samples.
//! Pulses are the periodic images of the envelope, which makes the sinc
//! basis exactly orthonormal when the period is odd.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::condpdf::ReceivedSymbols;
use crate::distribution::SymbolSequence;
use crate::envelope::EnvelopeKind;
use crate::error::{invalid, Error, Result};
use crate::exec::ExecPolicy;
use crate::information::ChannelParams;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Energy growth beyond this factor aborts a propagation.
const GROWTH_LIMIT: f64 = 10.0;

/// Discretisation of one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    /// Samples per period; a power of two.
    pub n_time: usize,
    /// Period in symbol slots.
    pub periods: usize,
    /// Propagation steps over the unit length.
    pub n_steps: usize,
}

impl SimGrid {
    /// Production grid: 4096 samples, eight guard slots each side, 2000 steps.
    pub fn standard(m: usize) -> SimGrid {
        SimGrid {
            n_time: 4096,
            periods: 2 * m + 1 + 16,
            n_steps: 2000,
        }
    }

    /// Coarser grid that keeps Monte-Carlo runs cheap.
    pub fn monte_carlo(m: usize) -> SimGrid {
        SimGrid {
            n_time: 512,
            periods: 2 * m + 1 + 16,
            n_steps: 200,
        }
    }

    /// Empty slots on each side of the symbol block.
    pub fn guard(&self, m: usize) -> f64 {
        (self.periods as f64 - (2 * m + 1) as f64) / 2.0
    }

    pub fn dt(&self) -> f64 {
        self.periods as f64 / self.n_time as f64
    }

    /// Signed frequency index of FFT bin `j`.
    pub fn mode(&self, j: usize) -> i64 {
        if j < self.n_time / 2 {
            j as i64
        } else {
            j as i64 - self.n_time as i64
        }
    }

    pub fn frequency(&self, j: usize) -> f64 {
        self.mode(j) as f64 / self.periods as f64
    }

    pub fn validate(&self, params: &ChannelParams, envelope: EnvelopeKind) -> Result<()> {
        if !self.n_time.is_power_of_two() || self.n_time < 8 {
            return Err(invalid(format!("n_time must be a power of two >= 8, got {}", self.n_time)));
        }
        if self.n_steps == 0 {
            return Err(invalid("n_steps must be positive"));
        }
        if self.periods < params.symbols() + 2 {
            return Err(invalid(format!(
                "time span {} leaves no guard around {} symbols",
                self.periods,
                params.symbols()
            )));
        }
        if envelope == EnvelopeKind::Sinc && self.periods % 2 == 0 {
            return Err(invalid("sinc pulses need an odd period to stay orthonormal"));
        }
        let span = self.n_time as f64 / self.periods as f64;
        if span < params.noise_band_ratio.max(params.rx_band_ratio) {
            return Err(invalid(format!(
                "frequency span {span} does not contain the noise band {}",
                params.noise_band_ratio
            )));
        }
        Ok(())
    }
}

/// Field samples at propagation coordinate `zeta` (units of the length).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub samples: Vec<Complex64>,
    pub zeta: f64,
}

impl FieldState {
    pub fn energy(&self, grid: &SimGrid) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dt()
    }
}

/// Noise injection for one propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSource {
    Off,
    /// ChaCha stream `stream` of generator `seed`.
    Seeded { seed: u64, stream: u64 },
}

/// FFT plans and per-grid tables shared by every propagation.
pub struct Simulator {
    grid: SimGrid,
    params: ChannelParams,
    envelope: EnvelopeKind,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    half_step: Vec<Complex64>,
    noise_modes: Vec<usize>,
}

impl Simulator {
    pub fn new(grid: SimGrid, params: ChannelParams, envelope: EnvelopeKind) -> Result<Simulator> {
        params.validate()?;
        grid.validate(&params, envelope)?;
        let mut planner = FftPlanner::new();
        let dz = 1.0 / grid.n_steps as f64;
        let half_step = (0..grid.n_time)
            .map(|j| Complex64::from_polar(1.0, dispersion_phase(params.beta, grid.frequency(j)) * dz / 2.0))
            .collect();
        let noise_modes = (0..grid.n_time)
            .filter(|&j| grid.frequency(j).abs() < params.noise_band_ratio / 2.0)
            .collect();
        Ok(Simulator {
            grid,
            params,
            envelope,
            fwd: planner.plan_fft_forward(grid.n_time),
            inv: planner.plan_fft_inverse(grid.n_time),
            half_step,
            noise_modes,
        })
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    fn to_time(&self, spectrum: &mut [Complex64]) {
        self.fwd.process(spectrum);
    }

    fn to_spectrum(&self, samples: &mut [Complex64]) {
        self.inv.process(samples);
        let scale = 1.0 / self.grid.n_time as f64;
        samples.iter_mut().for_each(|z| *z *= scale);
    }

    /// Spectrum `psi_hat_l` of a state, in FFT bin order.
    pub fn spectrum(&self, state: &FieldState) -> Vec<Complex64> {
        let mut s = state.samples.clone();
        self.to_spectrum(&mut s);
        s
    }

    /// Envelope coefficient `(1 / T) S(nu_l) exp(2 pi i nu_l k)` of slot `k`.
    fn pulse_coefficient(&self, j: usize, k: i64) -> Complex64 {
        let nu = self.grid.frequency(j);
        let s = self.envelope.spectrum(nu) / self.grid.periods as f64;
        Complex64::from_polar(s, 2.0 * PI * nu * k as f64)
    }

    /// `X(t) = sum_k C_k s(t - k)` on the grid.
    pub fn synthesize(&self, seq: &SymbolSequence) -> Result<FieldState> {
        if seq.order() != self.params.m {
            return Err(invalid("sequence order does not match the channel parameters"));
        }
        let m = seq.order() as i64;
        let mut spec: Vec<Complex64> = (0..self.grid.n_time)
            .map(|j| (-m..=m).map(|k| seq.get(k) * self.pulse_coefficient(j, k)).sum())
            .collect();
        self.to_time(&mut spec);
        Ok(FieldState { samples: spec, zeta: 0.0 })
    }

    /// Symmetrised split-step propagation to `zeta = 1`.
    pub fn propagate(&self, state: &FieldState, noise: NoiseSource) -> Result<FieldState> {
        let n = self.grid.n_time;
        let dz = 1.0 / self.grid.n_steps as f64;
        let gamma = self.params.gamma;
        let mut rng = match noise {
            NoiseSource::Off => None,
            NoiseSource::Seeded { seed, stream } => {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(stream);
                Some(r)
            }
        };
        // per-mode variance so that the received symbols carry 1 / snr at gamma = 0
        let sigma = (dz / (self.params.snr * self.grid.periods as f64) / 2.0).sqrt();
        let e0 = state.energy(&self.grid);
        let noise_energy = match noise {
            NoiseSource::Off => 0.0,
            NoiseSource::Seeded { .. } => {
                self.noise_modes.len() as f64 * 2.0 * sigma * sigma * self.grid.periods as f64 * self.grid.n_steps as f64
            }
        };
        let limit = GROWTH_LIMIT * (e0 + noise_energy).max(f64::MIN_POSITIVE);
        let mut spec = state.samples.clone();
        self.to_spectrum(&mut spec);
        for step in 0..self.grid.n_steps {
            spec.iter_mut().zip(&self.half_step).for_each(|(z, h)| *z *= h);
            if gamma != 0.0 {
                self.to_time(&mut spec);
                for z in spec.iter_mut() {
                    *z *= Complex64::from_polar(1.0, gamma * z.norm_sqr() * dz);
                }
                self.to_spectrum(&mut spec);
            }
            spec.iter_mut().zip(&self.half_step).for_each(|(z, h)| *z *= h);
            if let Some(r) = rng.as_mut() {
                for &j in &self.noise_modes {
                    let re: f64 = r.sample(StandardNormal);
                    let im: f64 = r.sample(StandardNormal);
                    spec[j] += Complex64::new(re, im) * sigma;
                }
            }
            let energy = spec.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.periods as f64;
            if !energy.is_finite() || energy > limit {
                return Err(Error::Unstable(format!(
                    "energy {energy:.3e} exceeds {GROWTH_LIMIT}x the input at step {step}"
                )));
            }
        }
        debug_assert_eq!(spec.len(), n);
        self.to_time(&mut spec);
        Ok(FieldState {
            samples: spec,
            zeta: state.zeta + 1.0,
        })
    }

    /// Receiver filter, dispersion removal and projection onto the pulses.
    pub fn receive(&self, state: &FieldState) -> Result<ReceivedSymbols> {
        let m = self.params.m as i64;
        let spec = self.spectrum(state);
        // the band edge only exists for sinc pulses; time-limited pulses pass unfiltered
        let band_limited = self.envelope == EnvelopeKind::Sinc;
        let half_band = self.params.rx_band_ratio / 2.0;
        let filtered: Vec<(usize, Complex64)> = spec
            .iter()
            .enumerate()
            .filter(|&(j, _)| !band_limited || self.grid.frequency(j).abs() < half_band)
            .map(|(j, z)| {
                let undo = Complex64::from_polar(1.0, -dispersion_phase(self.params.beta, self.grid.frequency(j)) * state.zeta);
                (j, z * undo)
            })
            .collect();
        let t = self.grid.periods as f64;
        let v = (-m..=m)
            .map(|k| {
                filtered
                    .iter()
                    .map(|&(j, z)| z * self.pulse_coefficient(j, k).conj() * t)
                    .sum()
            })
            .collect();
        SymbolSequence::new(self.params.m, v)
    }

    /// One noisy channel use.
    pub fn run(&self, seq: &SymbolSequence, noise: NoiseSource) -> Result<ReceivedSymbols> {
        let x = self.synthesize(seq)?;
        self.receive(&self.propagate(&x, noise)?)
    }
}

/// Dispersion phase per unit length at normalised frequency `nu`.
pub fn dispersion_phase(beta: f64, nu: f64) -> f64 {
    2.0 * beta * nu * nu
}

/// Monte-Carlo estimates with block-jackknife standard errors.
///
/// Standard errors of complex entries are the jackknife spread of the complex
/// estimate, i.e. `sqrt(se_re^2 + se_im^2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelatorReport {
    pub runs: usize,
    pub mean: Vec<Complex64>,
    pub mean_se: Vec<f64>,
    /// `<dC_m dC_k>` about the sample mean.
    pub cov_cc: Vec<Vec<Complex64>>,
    pub cov_cc_se: Vec<Vec<f64>>,
    /// `<dC_m conj(dC_k)>` about the sample mean.
    pub cov_cc_bar: Vec<Vec<Complex64>>,
    pub cov_cc_bar_se: Vec<Vec<f64>>,
}

/// Sums over a block of samples, enough to rebuild every estimate.
#[derive(Clone)]
struct Moments {
    n: f64,
    first: Vec<Complex64>,
    cc: Vec<Complex64>,
    cc_bar: Vec<Complex64>,
}

impl Moments {
    fn zeros(d: usize) -> Moments {
        Moments {
            n: 0.0,
            first: vec![ZERO; d],
            cc: vec![ZERO; d * d],
            cc_bar: vec![ZERO; d * d],
        }
    }

    fn add(&mut self, x: &[Complex64]) {
        let d = x.len();
        self.n += 1.0;
        for a in 0..d {
            self.first[a] += x[a];
            for b in 0..d {
                self.cc[a * d + b] += x[a] * x[b];
                self.cc_bar[a * d + b] += x[a] * x[b].conj();
            }
        }
    }

    fn minus(&self, other: &Moments) -> Moments {
        let sub = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        Moments {
            n: self.n - other.n,
            first: sub(&self.first, &other.first),
            cc: sub(&self.cc, &other.cc),
            cc_bar: sub(&self.cc_bar, &other.cc_bar),
        }
    }

    /// Mean, `cov_cc` and `cov_cc_bar` flattened into one vector.
    fn estimates(&self) -> Vec<Complex64> {
        let d = self.first.len();
        let mean: Vec<Complex64> = self.first.iter().map(|s| s / self.n).collect();
        let mut out = mean.clone();
        for a in 0..d {
            for b in 0..d {
                out.push(self.cc[a * d + b] / self.n - mean[a] * mean[b]);
            }
        }
        for a in 0..d {
            for b in 0..d {
                out.push(self.cc_bar[a * d + b] / self.n - mean[a] * mean[b].conj());
            }
        }
        out
    }
}

impl CorrelatorReport {
    fn from_samples(samples: &[Vec<Complex64>], blocks: usize) -> CorrelatorReport {
        let d = samples[0].len();
        let per = samples.len().div_ceil(blocks);
        let block_sums: Vec<Moments> = samples
            .chunks(per)
            .map(|chunk| {
                let mut m = Moments::zeros(d);
                chunk.iter().for_each(|x| m.add(x));
                m
            })
            .collect();
        let mut total = Moments::zeros(d);
        for b in &block_sums {
            total.n += b.n;
            for (t, x) in total.first.iter_mut().zip(&b.first) {
                *t += x;
            }
            for (t, x) in total.cc.iter_mut().zip(&b.cc) {
                *t += x;
            }
            for (t, x) in total.cc_bar.iter_mut().zip(&b.cc_bar) {
                *t += x;
            }
        }
        let full = total.estimates();
        let leave_out: Vec<Vec<Complex64>> = block_sums.iter().map(|b| total.minus(b).estimates()).collect();
        let g = leave_out.len() as f64;
        let se: Vec<f64> = (0..full.len())
            .map(|i| {
                let avg = leave_out.iter().map(|v| v[i]).sum::<Complex64>() / g;
                ((g - 1.0) / g * leave_out.iter().map(|v| (v[i] - avg).norm_sqr()).sum::<f64>()).sqrt()
            })
            .collect();
        let square = |v: &[Complex64]| v.chunks(d).map(|r| r.to_vec()).collect::<Vec<_>>();
        let square_se = |v: &[f64]| v.chunks(d).map(|r| r.to_vec()).collect::<Vec<_>>();
        let dd = d * d;
        CorrelatorReport {
            runs: samples.len(),
            mean: full[..d].to_vec(),
            mean_se: se[..d].to_vec(),
            cov_cc: square(&full[d..d + dd]),
            cov_cc_se: square_se(&se[d..d + dd]),
            cov_cc_bar: square(&full[d + dd..]),
            cov_cc_bar_se: square_se(&se[d + dd..]),
        }
    }
}

/// Minimum number of runs for a correlator estimate.
pub const MIN_RUNS: usize = 1000;

/// Runs `n_runs` independent noisy channel uses of `seq`.
///
/// Run `r` draws from stream `r` of the seeded generator, so the result does
/// not depend on the execution policy.
pub fn mc_correlators(
    sim: &Simulator,
    seq: &SymbolSequence,
    n_runs: usize,
    seed: u64,
    policy: ExecPolicy,
) -> Result<CorrelatorReport> {
    if n_runs < MIN_RUNS {
        return Err(invalid(format!("need at least {MIN_RUNS} runs, got {n_runs}")));
    }
    let x = sim.synthesize(seq)?;
    let samples = policy.map(n_runs, |r| -> Result<Vec<Complex64>> {
        let noise = NoiseSource::Seeded {
            seed,
            stream: r as u64,
        };
        Ok(sim.receive(&sim.propagate(&x, noise)?)?.as_slice().to_vec())
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CorrelatorReport::from_samples(&samples, 100))
}

/// Second-moment bandwidths before and after noiseless propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Broadening {
    pub initial: f64,
    pub simulated: f64,
    /// First-order prediction from the conserved Hamiltonian.
    pub predicted: f64,
}

fn second_moment(sim: &Simulator, spec: &[Complex64]) -> f64 {
    let (num, den) = spec.iter().enumerate().fold((0.0, 0.0), |(n, d), (j, z)| {
        let nu = sim.grid.frequency(j);
        (n + nu * nu * z.norm_sqr(), d + z.norm_sqr())
    });
    num / den
}

fn quartic_integral(sim: &Simulator, state: &FieldState) -> f64 {
    state.samples.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() * sim.grid.dt()
}

/// Spectral width `sqrt(<nu^2>)` of the input and of the noiseless output.
pub fn spectral_broadening(sim: &Simulator, seq: &SymbolSequence) -> Result<Broadening> {
    let beta = sim.params.beta;
    if beta < 1e-9 {
        return Err(invalid("spectral broadening prediction needs beta > 0"));
    }
    let x = sim.synthesize(seq)?;
    let m2_in = second_moment(sim, &sim.spectrum(&x));
    let out = sim.propagate(&x, NoiseSource::Off)?;
    let m2_out = second_moment(sim, &sim.spectrum(&out));
    let linear = Simulator::new(
        sim.grid,
        ChannelParams { gamma: 0.0, ..sim.params },
        sim.envelope,
    )?
    .propagate(&x, NoiseSource::Off)?;
    let energy = x.energy(&sim.grid);
    let shift = sim.params.gamma * (quartic_integral(sim, &x) - quartic_integral(sim, &linear)) / (8.0 * beta * m2_in * energy);
    Ok(Broadening {
        initial: m2_in.sqrt(),
        simulated: m2_out.sqrt(),
        predicted: m2_in.sqrt() * (1.0 + shift),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: usize, beta: f64, gamma: f64) -> ChannelParams {
        ChannelParams::new(m, beta, gamma, 1000.0)
    }

    fn seq() -> SymbolSequence {
        SymbolSequence::new(
            2,
            [(0.3, -0.2), (1.1, 0.4), (-0.5, 0.9), (0.2, 0.7), (-0.8, -0.1)]
                .iter()
                .map(|&(a, b)| Complex64::new(a, b))
                .collect(),
        )
        .unwrap()
    }

    fn small_grid() -> SimGrid {
        SimGrid {
            n_time: 256,
            periods: 21,
            n_steps: 50,
        }
    }

    #[test]
    fn round_trip_without_channel_effects() {
        for env in [EnvelopeKind::Sinc, EnvelopeKind::Gaussian { tau: 0.125 }] {
            let sim = Simulator::new(small_grid(), params(2, 0.0, 0.0), env).unwrap();
            let s = seq();
            let x = sim.synthesize(&s).unwrap();
            let back = sim.receive(&x).unwrap();
            let tol = if env == EnvelopeKind::Sinc { 1e-12 } else { 1e-6 };
            for (a, b) in back.as_slice().iter().zip(s.as_slice()) {
                assert!((a - b).norm() < tol, "{env:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn energy_matches_symbols() {
        let sim = Simulator::new(small_grid(), params(2, 0.0, 0.0), EnvelopeKind::Sinc).unwrap();
        let s = seq();
        assert!((sim.synthesize(&s).unwrap().energy(sim.grid()) - s.energy()).abs() < 1e-12);
    }

    #[test]
    fn sinc_spectrum_is_band_limited() {
        let sim = Simulator::new(small_grid(), params(2, 0.0, 0.0), EnvelopeKind::Sinc).unwrap();
        let spec = sim.spectrum(&sim.synthesize(&seq()).unwrap());
        for (j, z) in spec.iter().enumerate() {
            if sim.grid().frequency(j).abs() > 0.5 {
                assert!(z.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_propagation_is_a_phase() {
        let sim = Simulator::new(small_grid(), params(2, 1.5, 0.0), EnvelopeKind::Sinc).unwrap();
        let x = sim.synthesize(&seq()).unwrap();
        let before = sim.spectrum(&x);
        let after = sim.spectrum(&sim.propagate(&x, NoiseSource::Off).unwrap());
        for (j, (a, b)) in before.iter().zip(&after).enumerate() {
            let phase = Complex64::from_polar(1.0, dispersion_phase(1.5, sim.grid().frequency(j)));
            assert!((a * phase - b).norm() < 1e-12);
        }
        let back = sim.receive(&sim.propagate(&x, NoiseSource::Off).unwrap()).unwrap();
        for (a, b) in back.as_slice().iter().zip(seq().as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let sim = Simulator::new(small_grid(), params(2, 1.0, 0.1), EnvelopeKind::Sinc).unwrap();
        let noise = NoiseSource::Seeded { seed: 3, stream: 5 };
        assert_eq!(sim.run(&seq(), noise).unwrap(), sim.run(&seq(), noise).unwrap());
    }

    #[test]
    fn instability_guard_trips_on_non_finite_field() {
        let sim = Simulator::new(small_grid(), params(2, 1.0, 0.1), EnvelopeKind::Sinc).unwrap();
        let mut x = sim.synthesize(&seq()).unwrap();
        x.samples[7] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(sim.propagate(&x, NoiseSource::Off), Err(Error::Unstable(_))));
    }

    #[test]
    fn rejects_bad_grids() {
        let p = params(2, 1.0, 0.1);
        let even = SimGrid { periods: 20, ..small_grid() };
        assert!(Simulator::new(even, p, EnvelopeKind::Sinc).is_err());
        let narrow = SimGrid { n_time: 64, ..small_grid() };
        assert!(Simulator::new(narrow, p, EnvelopeKind::Sinc).is_err());
        let short = SimGrid { periods: 5, ..small_grid() };
        assert!(Simulator::new(short, p, EnvelopeKind::Sinc).is_err());
    }

    #[test]
    fn sinc_width_is_one_over_twelve() {
        let p = ChannelParams {
            noise_band_ratio: 1.0,
            ..params(0, 1.0, 0.0)
        };
        let grid = SimGrid {
            periods: 1001,
            n_time: 4096,
            n_steps: 1,
        };
        let sim = Simulator::new(grid, p, EnvelopeKind::Sinc).unwrap();
        let x = sim.synthesize(&SymbolSequence::new(0, vec![Complex64::new(1.0, 0.0)]).unwrap()).unwrap();
        let m2 = second_moment(&sim, &sim.spectrum(&x));
        assert!((m2 - 1.0 / 12.0).abs() < 1e-5, "{m2}");
    }
}
