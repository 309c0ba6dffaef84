//! Rejection samplers for the optimal input density.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distribution::{OptimalInput, SymbolSequence};
use crate::error::{invalid, Result};
use crate::exec::ExecPolicy;

/// Radius of the disk on which envelope constants are searched.
const ENVELOPE_RADIUS: f64 = 5.0;
/// Safety factor on searched envelope constants.
const ENVELOPE_MARGIN: f64 = 1.1;
/// Sequences drawn per independent random stream.
const STREAM_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainOrder {
    /// Every symbol from its own marginal.
    Independent,
    /// First symbol from its marginal, each next one conditioned on its left neighbour.
    NearestNeighbor,
    /// Whole sequence at once against the joint density; `M <= 2`.
    JointSmallM,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NegativityPolicy {
    /// Treat a negative bracket as zero density and count the event.
    ClipToZero,
    /// Fail on the first negative bracket.
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub order: ChainOrder,
    pub seed: u64,
    pub max_rejects: usize,
    pub negativity: NegativityPolicy,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            order: ChainOrder::NearestNeighbor,
            seed: 0,
            max_rejects: 100_000,
            negativity: NegativityPolicy::ClipToZero,
        }
    }
}

/// Counters accumulated while sampling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub proposals: u64,
    pub accepted: u64,
    /// Proposals whose bracket was negative.
    pub clipped: u64,
    /// Proposals whose bracket exceeded the envelope constant.
    pub envelope_violations: u64,
}

impl SamplerStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    fn merge(&mut self, o: &SamplerStats) {
        self.proposals += o.proposals;
        self.accepted += o.accepted;
        self.clipped += o.clipped;
        self.envelope_violations += o.envelope_violations;
    }
}

/// Unit-power circular complex Gaussian draw.
pub fn gaussian_symbol<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Reproducible unit-power Gaussian sequence for seed `seed`.
pub fn gaussian_sequence(m: usize, seed: u64) -> SymbolSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..2 * m + 1).map(|_| gaussian_symbol(&mut rng)).collect();
    SymbolSequence::new(m, coeffs).expect("length matches order")
}

/// Rejection sampler state for one `OptimalInput`.
pub struct Sampler<'a> {
    input: &'a OptimalInput,
    cfg: SamplerConfig,
    marginal_bound: Vec<f64>,
    stats: SamplerStats,
}

impl<'a> Sampler<'a> {
    pub fn new(input: &'a OptimalInput, cfg: SamplerConfig) -> Result<Sampler<'a>> {
        if cfg.order == ChainOrder::JointSmallM && input.order() > 2 {
            return Err(invalid("joint sampling supports M <= 2 only"));
        }
        let m = input.order() as i64;
        let mut marginal_bound = Vec::with_capacity(input.order() * 2 + 1);
        for q in -m..=m {
            let mut sup: f64 = 0.0;
            for i in 0..=500 {
                let x = ENVELOPE_RADIUS * i as f64 / 500.0;
                sup = sup.max(input.gamma2() * input.d1(q, x)?);
            }
            marginal_bound.push(1.0 + sup * ENVELOPE_MARGIN);
        }
        Ok(Sampler {
            input,
            cfg,
            marginal_bound,
            stats: SamplerStats::default(),
        })
    }

    pub fn stats(&self) -> SamplerStats {
        self.stats
    }

    /// Envelope constant for the marginal of slot `q`.
    pub fn marginal_bound(&self, q: i64) -> f64 {
        self.marginal_bound[(q + self.input.order() as i64) as usize]
    }

    /// Draws from the Gaussian proposal until `ratio(c) / bound` accepts.
    fn reject<R, F>(&mut self, rng: &mut R, bound: f64, mut bracket: F) -> Result<Complex64>
    where
        R: Rng + ?Sized,
        F: FnMut(Complex64) -> Result<f64>,
    {
        for _ in 0..self.cfg.max_rejects {
            let c = gaussian_symbol(rng);
            self.stats.proposals += 1;
            let mut b = bracket(c)?;
            if b < 0.0 {
                if self.cfg.negativity == NegativityPolicy::Abort {
                    return Err(invalid(format!("negative density at |c| = {:.3}", c.norm())));
                }
                self.stats.clipped += 1;
                b = 0.0;
            }
            if b > bound {
                self.stats.envelope_violations += 1;
            }
            if rng.gen::<f64>() * bound < b {
                self.stats.accepted += 1;
                return Ok(c);
            }
        }
        Err(invalid(format!("no acceptance after {} proposals", self.cfg.max_rejects)))
    }

    /// One draw from the marginal of slot `q`.
    pub fn sample_marginal<R: Rng + ?Sized>(&mut self, q: i64, rng: &mut R) -> Result<Complex64> {
        let bound = self.marginal_bound(q);
        let input = self.input;
        self.reject(rng, bound, |c| Ok(1.0 + input.marginal(q, c)?.correction))
    }

    /// Envelope for the pair factor `1 + gamma^2 D^{i,j}(c, cj)` over `|c| <= R`,
    /// from the absolute values of the polynomial's coefficients.
    fn pair_factor_bound(&self, i: i64, j: i64, cj: Complex64) -> Result<f64> {
        let r = ENVELOPE_RADIUS;
        let coeffs = self.input.pair_coefficients(i, j)?;
        let y = cj.norm();
        let (r2, y2) = (r * r, y * y);
        let bound = 2.0 * coeffs.quartic.norm() * r2 * y2
            + coeffs.radial.abs() * (r2 + 1.0) * (y2 + 1.0)
            + r * y * (coeffs.cubic_x.norm() * (r2 + 2.0) + coeffs.cubic_y.norm() * (y2 + 2.0) + coeffs.linear.norm());
        Ok((1.0 + self.input.gamma2() * bound) * ENVELOPE_MARGIN)
    }

    /// One draw of `C_i` conditioned on `C_j = cj`: a marginal draw thinned
    /// by the pair factor.
    pub fn sample_conditional<R: Rng + ?Sized>(&mut self, i: i64, j: i64, cj: Complex64, rng: &mut R) -> Result<Complex64> {
        let bound = self.pair_factor_bound(i, j, cj)?;
        for _ in 0..self.cfg.max_rejects {
            let c = self.sample_marginal(i, rng)?;
            let mut b = 1.0 + self.input.gamma2() * self.input.d_pair(i, j, c, cj)?;
            if b < 0.0 {
                if self.cfg.negativity == NegativityPolicy::Abort {
                    return Err(invalid(format!("negative conditional density at |c| = {:.3}", c.norm())));
                }
                self.stats.clipped += 1;
                b = 0.0;
            }
            if b > bound {
                self.stats.envelope_violations += 1;
            }
            if rng.gen::<f64>() * bound < b {
                return Ok(c);
            }
            // the marginal draw counted as accepted; undo it
            self.stats.accepted -= 1;
        }
        Err(invalid(format!("no acceptance after {} proposals", self.cfg.max_rejects)))
    }

    /// Envelope for the joint bracket: `|Q| <= lambda_max |C|^4` on `|C|^2 <= R^2`,
    /// with `R^2` the Gamma(2M+1) quantile leaving about 1e-7 of the mass outside.
    fn joint_bound(&self) -> f64 {
        let d = self.input.j_info().dim();
        let lam = hermitian_norm(self.input.j_info());
        let r2 = 2.0 * d as f64 + 16.0;
        let trace = crate::information::gaussian_quartic_trace(self.input.j_info());
        1.0 + self.input.gamma2() * (lam * r2 * r2 + trace.abs() * (1.0 + 2.0 * r2 / d as f64))
    }

    fn sample_joint<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<SymbolSequence> {
        let bound = self.joint_bound();
        let m = self.input.order();
        for _ in 0..self.cfg.max_rejects {
            let seq = SymbolSequence::new(m, (0..2 * m + 1).map(|_| gaussian_symbol(rng)).collect())?;
            self.stats.proposals += 1;
            let mut b = 1.0 + self.input.joint_correction(&seq)?;
            if b < 0.0 {
                if self.cfg.negativity == NegativityPolicy::Abort {
                    return Err(invalid("negative joint density"));
                }
                self.stats.clipped += 1;
                b = 0.0;
            }
            if b > bound {
                self.stats.envelope_violations += 1;
            }
            if rng.gen::<f64>() * bound < b {
                self.stats.accepted += 1;
                return Ok(seq);
            }
        }
        Err(invalid(format!("no acceptance after {} proposals", self.cfg.max_rejects)))
    }

    /// One sequence with the configured chain order.
    pub fn sample_sequence<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<SymbolSequence> {
        let m = self.input.order() as i64;
        let mut seq = SymbolSequence::zeros(m as usize);
        match self.cfg.order {
            ChainOrder::Independent => {
                for q in -m..=m {
                    let c = self.sample_marginal(q, rng)?;
                    seq.set(q, c);
                }
            }
            ChainOrder::NearestNeighbor => {
                let mut prev = self.sample_marginal(-m, rng)?;
                seq.set(-m, prev);
                for k in -m + 1..=m {
                    prev = self.sample_conditional(k, k - 1, prev, rng)?;
                    seq.set(k, prev);
                }
            }
            ChainOrder::JointSmallM => return self.sample_joint(rng),
        }
        Ok(seq)
    }
}

/// Largest `|eigenvalue|` of `J` viewed as a Hermitian matrix on `C (x) C`.
fn hermitian_norm(t: &crate::coefficients::Tensor4) -> f64 {
    let d = t.dim();
    let n = d * d;
    let m = t.order() as i64;
    let idx = |i: usize| ((i / d) as i64 - m, (i % d) as i64 - m);
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    let mut lam = 0.0;
    for _ in 0..200 {
        let mut w = vec![Complex64::new(0.0, 0.0); n];
        for (a, wa) in w.iter_mut().enumerate() {
            let (s1, s2) = idx(a);
            for (b, vb) in v.iter().enumerate() {
                let (s3, s4) = idx(b);
                *wa += t.get(s1, s2, s3, s4) * vb;
            }
        }
        let norm = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let prev = lam;
        lam = norm / v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
        if (lam - prev).abs() < 1e-10 * lam {
            break;
        }
    }
    lam
}

/// Draws `n` sequences using fixed-size chunks on seed-derived streams, so the
/// output does not depend on the number of workers.
pub fn sample_many(
    input: &OptimalInput,
    cfg: SamplerConfig,
    n: usize,
    policy: ExecPolicy,
) -> Result<(Vec<SymbolSequence>, SamplerStats)> {
    let chunks = n.div_ceil(STREAM_CHUNK);
    let results = policy.map(chunks, |c| -> Result<(Vec<SymbolSequence>, SamplerStats)> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(c as u64);
        let mut sampler = Sampler::new(input, cfg)?;
        let count = STREAM_CHUNK.min(n - c * STREAM_CHUNK);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(sampler.sample_sequence(&mut rng)?);
        }
        Ok((out, sampler.stats()))
    });
    let mut all = Vec::with_capacity(n);
    let mut stats = SamplerStats::default();
    for r in results {
        let (seqs, s) = r?;
        all.extend(seqs);
        stats.merge(&s);
    }
    Ok((all, stats))
}
