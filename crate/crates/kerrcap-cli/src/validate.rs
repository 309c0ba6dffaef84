use std::f64::consts::PI;

use anyhow::Result;
use clap::Args;
use num_complex::Complex64;

use kerrcap::channel_sim::{mc_correlators, NoiseSource, SimGrid, Simulator};
use kerrcap::coefficients::{build_coefficients, Coverage};
use kerrcap::condpdf::{cond_log_pdf, forward_map, inverse_map, CondPdfCoeffs, SequenceKernels};
use kerrcap::distribution::{OptimalInput, SymbolSequence};
use kerrcap::envelope::EnvelopeKind;
use kerrcap::information::ChannelParams;
use kerrcap::jtensors::build_jtensors;
use kerrcap::quad::composite_gl;
use kerrcap::sampler::gaussian_sequence;
use kerrcap::specfun::{fresnel_e_quad, fresnel_e_salzer};
use kerrcap::ExecPolicy;

use crate::{Context, ToleranceFailure};

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Only the fast structural checks.
    #[arg(long)]
    quick: bool,
}

struct Check {
    name: &'static str,
    quick: bool,
    run: fn(&Context) -> Result<(bool, String)>,
}

fn max_diff(a: &SymbolSequence, b: &SymbolSequence) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn within(value: f64, tol: f64) -> (bool, String) {
    (value <= tol, format!("{value:.3e} (tol {tol:.0e})"))
}

fn forward_identity(ctx: &Context) -> Result<(bool, String)> {
    let k = SequenceKernels::new(1, 1.0, ctx.policy)?;
    let s = gaussian_sequence(1, 11);
    Ok(within(max_diff(&forward_map(&k, &s, 0.0)?, &s), 0.0))
}

fn phase_covariance(ctx: &Context) -> Result<(bool, String)> {
    let k = SequenceKernels::new(1, 1.0, ctx.policy)?;
    let s = gaussian_sequence(1, 12);
    let a = forward_map(&k, &s.rotated(0.9), 0.2)?;
    let b = forward_map(&k, &s, 0.2)?.rotated(0.9);
    Ok(within(max_diff(&a, &b), 1e-12))
}

fn inverse_round_trip(ctx: &Context) -> Result<(bool, String)> {
    let k = SequenceKernels::new(1, 1.0, ctx.policy)?;
    let s = gaussian_sequence(1, 13);
    let err = |g: f64| -> Result<f64> { Ok(max_diff(&inverse_map(&k, &forward_map(&k, &s, g)?, g)?, &s)) };
    let slope = (err(0.04)? / err(0.02)?).log2();
    Ok(((slope - 3.0).abs() < 0.3, format!("slope {slope:.3}")))
}

fn coefficient_symmetry(ctx: &Context) -> Result<(bool, String)> {
    let k = SequenceKernels::new(1, 1.0, ctx.policy)?;
    let c = CondPdfCoeffs::new(&k.conditional_terms(&gaussian_sequence(1, 14))?, 0.2);
    let h = c.h();
    let f = c.f();
    let defect = (&h - h.transpose()).norm().max((&f - f.adjoint()).norm());
    Ok(within(defect, 1e-9))
}

fn gaussian_limit(_: &Context) -> Result<(bool, String)> {
    let s = gaussian_sequence(1, 15);
    let rec = gaussian_sequence(1, 16);
    let k = SequenceKernels::new(1, 0.0, ExecPolicy::Sequential)?;
    let c = CondPdfCoeffs::new(&k.conditional_terms(&s)?, 0.0);
    let snr = 20.0;
    let got = cond_log_pdf(&rec, &s, &c, snr)?;
    let dist: f64 = rec.as_slice().iter().zip(s.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
    let want = 3.0 * (snr / PI).ln() - snr * dist;
    Ok(within((got - want).abs(), 1e-12))
}

fn tensor_symmetry(ctx: &Context) -> Result<(bool, String)> {
    let set = build_coefficients(1, 0.5, EnvelopeKind::Sinc, Coverage::Full, ctx.policy)?;
    let jt = build_jtensors(&set, ctx.policy)?;
    let defect = [&set.a1, &set.b1, &set.b2, &jt.j, &jt.j_lambda, &jt.j_info]
        .iter()
        .map(|t| t.symmetry_defect())
        .fold(0.0, f64::max);
    Ok(within(defect, 1e-8))
}

fn rect_limit(ctx: &Context) -> Result<(bool, String)> {
    let set = build_coefficients(2, 0.0, EnvelopeKind::Rect, Coverage::Full, ctx.policy)?;
    let js = build_jtensors(&set, ctx.policy)?.j_sigma;
    Ok(within((js + 1.0 / 3.0).abs(), 1e-12))
}

fn marginal_normalisation(ctx: &Context) -> Result<(bool, String)> {
    let set = build_coefficients(1, 0.0, EnvelopeKind::Sinc, Coverage::Full, ctx.policy)?;
    let input = OptimalInput::new(build_jtensors(&set, ctx.policy)?.j_info, 0.3);
    let mut total = 0.0;
    for (r, w) in composite_gl(0.0, 9.0, 18, 16).iter() {
        total += w * 2.0 * PI * r * input.marginal(0, Complex64::new(r, 0.0))?.value;
    }
    Ok(within((total - 1.0).abs(), 1e-10))
}

fn fresnel_paths(_: &Context) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for &(a, b) in &[(0.0, 1.0), (3.5, 2.0), (-40.0, 7.5), (90.0, 14.0)] {
        let a = Complex64::new(a, 0.0);
        worst = worst.max((fresnel_e_salzer(a, b)? - fresnel_e_quad(a, b)?).norm());
    }
    Ok(within(worst, 1e-6))
}

fn sim_grid() -> SimGrid {
    SimGrid {
        n_time: 256,
        periods: 21,
        n_steps: 100,
    }
}

fn projection_round_trip(_: &Context) -> Result<(bool, String)> {
    let sim = Simulator::new(sim_grid(), ChannelParams::new(2, 1.0, 0.0, 100.0), EnvelopeKind::Sinc)?;
    let s = gaussian_sequence(2, 17);
    let direct = sim.receive(&sim.synthesize(&s)?)?;
    let linear = sim.run(&s, NoiseSource::Off)?;
    Ok(within(max_diff(&direct, &s).max(max_diff(&linear, &s)), 1e-10))
}

fn policies_agree(_: &Context) -> Result<(bool, String)> {
    let k1 = SequenceKernels::new(1, 1.0, ExecPolicy::Sequential)?;
    let k2 = SequenceKernels::new(1, 1.0, ExecPolicy::Parallel)?;
    let s = gaussian_sequence(1, 18);
    let d = max_diff(&forward_map(&k1, &s, 0.3)?, &forward_map(&k2, &s, 0.3)?);
    Ok(within(d, 0.0))
}

fn noise_calibration(ctx: &Context) -> Result<(bool, String)> {
    let sim = Simulator::new(sim_grid(), ChannelParams::new(2, 1.0, 0.0, 100.0), EnvelopeKind::Sinc)?;
    let rep = mc_correlators(&sim, &gaussian_sequence(2, 19), 2000, 5, ctx.policy)?;
    let worst = (0..5)
        .map(|k| (rep.cov_cc_bar[k][k].re - 0.01).abs() / rep.cov_cc_bar_se[k][k])
        .fold(0.0, f64::max);
    Ok((worst < 3.5, format!("max z {worst:.2}")))
}

const CHECKS: &[Check] = &[
    Check { name: "forward map identity at zero nonlinearity", quick: true, run: forward_identity },
    Check { name: "forward map phase covariance", quick: true, run: phase_covariance },
    Check { name: "H symmetric and F Hermitian", quick: true, run: coefficient_symmetry },
    Check { name: "conditional density Gaussian limit", quick: true, run: gaussian_limit },
    Check { name: "rect zero-dispersion J_Sigma = -1/3", quick: true, run: rect_limit },
    Check { name: "marginal normalisation", quick: true, run: marginal_normalisation },
    Check { name: "sinc projection round trip", quick: true, run: projection_round_trip },
    Check { name: "execution policies agree", quick: true, run: policies_agree },
    Check { name: "tensor symmetry classes", quick: false, run: tensor_symmetry },
    Check { name: "inverse map error slope", quick: false, run: inverse_round_trip },
    Check { name: "fresnel series vs quadrature", quick: false, run: fresnel_paths },
    Check { name: "noise calibration at zero nonlinearity", quick: false, run: noise_calibration },
];

pub fn run(ctx: &Context, a: &ValidateArgs) -> Result<()> {
    let mut failed = Vec::new();
    for c in CHECKS.iter().filter(|c| c.quick || !a.quick) {
        let (ok, detail) = (c.run)(ctx)?;
        println!("{} {}: {detail}", if ok { "PASS" } else { "FAIL" }, c.name);
        if !ok {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(ToleranceFailure(failed.join(", ")).into())
    }
}
