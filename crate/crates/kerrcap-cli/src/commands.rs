use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use clap::{Args, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use kerrcap::channel_sim::{mc_correlators, CorrelatorReport, SimGrid, Simulator};
use kerrcap::coefficients::{cached_coefficients, CoefficientSet, Coverage};
use kerrcap::coefficients::cache::{file_name, write_tensor};
use kerrcap::condpdf::{predicted_cov, predicted_mean, NoiseSpec, SequenceKernels};
use kerrcap::distribution::{p0_symbol, OptimalInput, SymbolSequence};
use kerrcap::envelope::EnvelopeKind;
use kerrcap::information::{mi_gap, mutual_info_opt, snr_from_db, ChannelParams};
use kerrcap::jtensors::{build_jtensors, symmetrized, JTensorSet};
use kerrcap::sampler::{gaussian_sequence, sample_many, ChainOrder, NegativityPolicy, SamplerConfig};

use crate::output::{write_csv, write_json};
use crate::{Context, TensorArgs};

const SCHEMA: u32 = 1;

fn envelope(s: &str) -> Result<EnvelopeKind> {
    Ok(s.parse::<EnvelopeKind>()?)
}

fn check_order(m: usize) -> Result<()> {
    if m > 12 {
        return Err(kerrcap::Error::InvalidArgument(format!("M={m} is beyond the supported range 0..=12")).into());
    }
    Ok(())
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(kerrcap::Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")).into());
    }
    Ok(())
}

fn coefficient_set(ctx: &Context, m: usize, beta: f64, env: EnvelopeKind, coverage: Coverage) -> Result<CoefficientSet> {
    check_order(m)?;
    check_nonneg("beta", beta)?;
    log::info!("coefficients M={m} beta={beta} envelope={env} ({})", coverage.tag());
    Ok(cached_coefficients(&ctx.cache_dir, m, beta, env, coverage, ctx.policy)?)
}

fn jtensors(ctx: &Context, m: usize, beta: f64, env: EnvelopeKind, coverage: Coverage) -> Result<JTensorSet> {
    let set = coefficient_set(ctx, m, beta, env, coverage)?;
    Ok(build_jtensors(&set, ctx.policy)?)
}

#[derive(Serialize)]
struct TensorSummary {
    schema: u32,
    m: usize,
    beta: f64,
    envelope: String,
    coverage: &'static str,
    files: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    j_sigma: Option<f64>,
}

pub fn coeffs(ctx: &Context, a: &TensorArgs) -> Result<()> {
    let env = envelope(&a.envelope)?;
    let coverage: Coverage = a.coverage.into();
    let set = coefficient_set(ctx, a.m, a.beta, env, coverage)?;
    let files = set
        .tensors()
        .iter()
        .map(|t| ctx.cache_dir.join(file_name(t.meta.kind, a.m, a.beta, &env.tag(), coverage.tag())))
        .collect();
    write_json(
        a.out.as_deref(),
        &TensorSummary {
            schema: SCHEMA,
            m: a.m,
            beta: a.beta,
            envelope: env.tag(),
            coverage: coverage.tag(),
            files,
            j_sigma: None,
        },
    )
}

pub fn jtensor(ctx: &Context, a: &TensorArgs) -> Result<()> {
    let env = envelope(&a.envelope)?;
    let coverage: Coverage = a.coverage.into();
    let jt = jtensors(ctx, a.m, a.beta, env, coverage)?;
    let mut files = Vec::new();
    for t in [&jt.j, &jt.j_lambda, &jt.j_info] {
        let p = ctx.cache_dir.join(file_name(t.meta.kind, a.m, a.beta, &env.tag(), coverage.tag()));
        write_tensor(&p, t)?;
        files.push(p);
    }
    write_json(
        a.out.as_deref(),
        &TensorSummary {
            schema: SCHEMA,
            m: a.m,
            beta: a.beta,
            envelope: env.tag(),
            coverage: coverage.tag(),
            files,
            j_sigma: Some(jt.j_sigma),
        },
    )
}

/// `start:stop:step` (inclusive) or a comma-separated list.
fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || kerrcap::Error::InvalidArgument(format!("bad grid '{s}'"));
    if let Some((head, step)) = s.rsplit_once(':') {
        let (start, stop) = head.split_once(':').ok_or_else(bad)?;
        let (start, stop, step): (f64, f64, f64) = (
            start.parse().map_err(|_| bad())?,
            stop.parse().map_err(|_| bad())?,
            step.parse().map_err(|_| bad())?,
        );
        if !(step > 0.0) || stop < start {
            return Err(bad().into());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + step * i as f64).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad().into()))
        .collect()
}

#[derive(Args, Debug)]
pub struct MiCurveArgs {
    #[arg(long = "M", short = 'M')]
    m: usize,
    /// Dispersions as start:stop:step or a comma-separated list.
    #[arg(long)]
    beta_grid: String,
    /// Nonlinearity `gamma L P`.
    #[arg(long)]
    gamma_lp: f64,
    #[arg(long)]
    snr_db: f64,
    #[arg(long, default_value = "sinc")]
    envelope: String,
    /// Also evaluate the fourth-order gap (needs full tensors).
    #[arg(long)]
    with_gap: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct MiRow {
    beta: f64,
    j_sigma: f64,
    mi_per_symbol_nats: f64,
    shannon_per_symbol_nats: f64,
    mi_gap_per_symbol_nats: Option<f64>,
}

pub fn mi_curve(ctx: &Context, a: &MiCurveArgs) -> Result<()> {
    let env = envelope(&a.envelope)?;
    let grid = parse_grid(&a.beta_grid)?;
    let coverage = if a.with_gap { Coverage::Full } else { Coverage::CrossedDiagonal };
    let mut rows = Vec::with_capacity(grid.len());
    for &beta in &grid {
        let params = ChannelParams::new(a.m, beta, a.gamma_lp, snr_from_db(a.snr_db));
        params.validate()?;
        let jt = jtensors(ctx, a.m, beta, env, coverage)?;
        let d = params.symbols() as f64;
        rows.push(MiRow {
            beta,
            j_sigma: jt.j_sigma,
            mi_per_symbol_nats: mutual_info_opt(&params, jt.j_sigma) / d,
            shannon_per_symbol_nats: params.snr.ln(),
            mi_gap_per_symbol_nats: a.with_gap.then(|| mi_gap(&symmetrized(&jt.j_info), &params) / d),
        });
    }
    write_csv(a.out.as_deref(), &rows)
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdfKind {
    /// One-symbol marginal against `|C_q|`.
    Marginal,
    /// Density of `C_q` on the real axis given `C_j`.
    Conditional,
}

#[derive(Args, Debug)]
pub struct PdfArgs {
    #[arg(value_enum)]
    kind: PdfKind,
    #[arg(long = "M", short = 'M', default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long)]
    gamma_lp: f64,
    /// Slot of the plotted symbol.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    q: i64,
    /// Conditioning slot for `conditional`.
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    j: i64,
    /// Conditioning value `re,im` for `conditional`.
    #[arg(long, default_value = "1,0", allow_hyphen_values = true)]
    given: String,
    #[arg(long, default_value_t = 3.0)]
    r_max: f64,
    #[arg(long, default_value_t = 121)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PdfRow {
    x: f64,
    gaussian: f64,
    optimal: f64,
}

fn parse_complex(s: &str) -> Result<Complex64> {
    let bad = || kerrcap::Error::InvalidArgument(format!("expected 're,im', got '{s}'"));
    let (re, im) = s.split_once(',').ok_or_else(bad)?;
    Ok(Complex64::new(
        re.trim().parse().map_err(|_| bad())?,
        im.trim().parse().map_err(|_| bad())?,
    ))
}

pub fn pdf(ctx: &Context, a: &PdfArgs) -> Result<()> {
    check_nonneg("gamma-lp", a.gamma_lp)?;
    if a.points < 2 || !(a.r_max > 0.0) {
        return Err(kerrcap::Error::InvalidArgument("need at least two points and a positive range".into()).into());
    }
    let coverage = match a.kind {
        PdfKind::Marginal => Coverage::CrossedDiagonal,
        PdfKind::Conditional => Coverage::Full,
    };
    let jt = jtensors(ctx, a.m, a.beta, EnvelopeKind::Sinc, coverage)?;
    let input = OptimalInput::new(jt.j_info, a.gamma_lp);
    let given = parse_complex(&a.given)?;
    let lo = if a.kind == PdfKind::Marginal { 0.0 } else { -a.r_max };
    let mut rows = Vec::with_capacity(a.points);
    for i in 0..a.points {
        let x = lo + (a.r_max - lo) * i as f64 / (a.points - 1) as f64;
        let c = Complex64::new(x, 0.0);
        let optimal = match a.kind {
            PdfKind::Marginal => input.marginal(a.q, c)?.value,
            PdfKind::Conditional => input.conditional(a.q, a.j, c, given)?.value,
        };
        rows.push(PdfRow {
            x,
            gaussian: p0_symbol(c),
            optimal,
        });
    }
    let sup = rows.iter().map(|r| (r.gaussian - r.optimal).abs()).fold(0.0, f64::max);
    log::info!("sup |P0 - Popt| = {sup:.6e}");
    write_csv(a.out.as_deref(), &rows)
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainArg {
    Independent,
    Nn,
    Joint,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativityArg {
    Clip,
    Abort,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long = "M", short = 'M')]
    m: usize,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    gamma_lp: f64,
    #[arg(long, short = 'n')]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ChainArg::Nn)]
    chain: ChainArg,
    /// What to do where the perturbed density dips below zero.
    #[arg(long, value_enum, default_value_t = NegativityArg::Clip)]
    negativity: NegativityArg,
    /// Samples CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sampler statistics JSON.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Serialize)]
struct SampleRow {
    sample: usize,
    k: i64,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct SampleStatsOut {
    schema: u32,
    n: usize,
    seed: u64,
    proposals: u64,
    accepted: u64,
    clipped: u64,
    envelope_violations: u64,
    acceptance_rate: f64,
}

pub fn sample(ctx: &Context, a: &SampleArgs) -> Result<()> {
    check_nonneg("gamma-lp", a.gamma_lp)?;
    let order = match a.chain {
        ChainArg::Independent => ChainOrder::Independent,
        ChainArg::Nn => ChainOrder::NearestNeighbor,
        ChainArg::Joint => ChainOrder::JointSmallM,
    };
    let negativity = match a.negativity {
        NegativityArg::Clip => NegativityPolicy::ClipToZero,
        NegativityArg::Abort => NegativityPolicy::Abort,
    };
    let jt = jtensors(ctx, a.m, a.beta, EnvelopeKind::Sinc, Coverage::Full)?;
    let input = OptimalInput::new(jt.j_info, a.gamma_lp);
    let cfg = SamplerConfig {
        order,
        seed: a.seed,
        negativity,
        ..SamplerConfig::default()
    };
    let (seqs, stats) = sample_many(&input, cfg, a.n, ctx.policy)?;
    if stats.clipped > 0 {
        log::warn!("{} proposals had a negative density bracket and were clipped", stats.clipped);
    }
    let m = a.m as i64;
    let rows: Vec<SampleRow> = seqs
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            (-m..=m).map(move |k| {
                let c = s.get(k);
                SampleRow { sample: i, k, re: c.re, im: c.im }
            })
        })
        .collect();
    write_csv(a.out.as_deref(), &rows)?;
    if let Some(p) = &a.stats {
        write_json(
            Some(p),
            &SampleStatsOut {
                schema: SCHEMA,
                n: a.n,
                seed: a.seed,
                proposals: stats.proposals,
                accepted: stats.accepted,
                clipped: stats.clipped,
                envelope_violations: stats.envelope_violations,
                acceptance_rate: stats.acceptance_rate(),
            },
        )?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long = "M", short = 'M', default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.05)]
    gamma_lp: f64,
    #[arg(long, default_value_t = 30.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Input symbols `re,im;re,im;...`; drawn from a Gaussian with `seed` if omitted.
    #[arg(long, allow_hyphen_values = true)]
    symbols: Option<String>,
    #[arg(long, default_value_t = 8.0)]
    noise_band: f64,
    #[arg(long, default_value_t = 1.0)]
    rx_band: f64,
    #[arg(long, default_value_t = 512)]
    n_time: usize,
    /// Period in symbol slots (default 2M + 17).
    #[arg(long)]
    periods: Option<usize>,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Analytic {
    mean: Vec<Complex64>,
    cov_cc: Vec<Vec<Complex64>>,
    cov_cc_bar: Vec<Vec<Complex64>>,
}

#[derive(Serialize)]
struct ZScores {
    mean: Vec<f64>,
    cov_cc: Vec<Vec<f64>>,
    cov_cc_bar: Vec<Vec<f64>>,
    max: f64,
}

#[derive(Serialize)]
struct SimulateReport {
    schema: u32,
    params: ChannelParams,
    grid: SimGrid,
    envelope: String,
    seed: u64,
    sequence: Vec<Complex64>,
    monte_carlo: CorrelatorReport,
    analytic: Analytic,
    z_scores: ZScores,
}

fn parse_symbols(m: usize, s: &str) -> Result<SymbolSequence> {
    let v = s.split(';').map(parse_complex).collect::<Result<Vec<_>>>()?;
    Ok(SymbolSequence::new(m, v)?)
}

fn rows(mat: &kerrcap::condpdf::CMatrix) -> Vec<Vec<Complex64>> {
    (0..mat.nrows()).map(|i| (0..mat.ncols()).map(|j| mat[(i, j)]).collect()).collect()
}

fn z_matrix(mc: &[Vec<Complex64>], se: &[Vec<f64>], pred: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    mc.iter()
        .zip(se)
        .zip(pred)
        .map(|((a, s), p)| a.iter().zip(s).zip(p).map(|((x, s), y)| (x - y).norm() / s).collect())
        .collect()
}

pub fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<()> {
    check_order(a.m)?;
    let params = ChannelParams {
        noise_band_ratio: a.noise_band,
        rx_band_ratio: a.rx_band,
        ..ChannelParams::new(a.m, a.beta, a.gamma_lp, snr_from_db(a.snr_db))
    };
    params.validate()?;
    for w in params.warnings() {
        log::warn!("{w}");
    }
    let grid = SimGrid {
        n_time: a.n_time,
        periods: a.periods.unwrap_or(2 * a.m + 17),
        n_steps: a.steps,
    };
    let seq = match &a.symbols {
        Some(s) => parse_symbols(a.m, s)?,
        None => gaussian_sequence(a.m, a.seed),
    };
    let sim = Simulator::new(grid, params, EnvelopeKind::Sinc)?;
    log::info!("running {} channel uses", a.runs);
    let mc = mc_correlators(&sim, &seq, a.runs, a.seed, ctx.policy)?;
    let kernels = SequenceKernels::periodic(a.m, a.beta, grid.periods, ctx.policy)?;
    let noise = NoiseSpec {
        gamma: a.gamma_lp,
        snr: params.snr,
        noise_band_ratio: a.noise_band,
    };
    let mean = predicted_mean(&kernels, &seq, noise, ctx.policy)?;
    let cov = predicted_cov(&kernels.conditional_terms(&seq)?, noise);
    let analytic = Analytic {
        mean: mean.as_slice().to_vec(),
        cov_cc: rows(&cov.cov_cc),
        cov_cc_bar: rows(&cov.cov_cc_bar),
    };
    let z_mean: Vec<f64> = mc
        .mean
        .iter()
        .zip(&mc.mean_se)
        .zip(&analytic.mean)
        .map(|((x, s), y)| (x - y).norm() / s)
        .collect();
    let z_cc = z_matrix(&mc.cov_cc, &mc.cov_cc_se, &analytic.cov_cc);
    let z_cc_bar = z_matrix(&mc.cov_cc_bar, &mc.cov_cc_bar_se, &analytic.cov_cc_bar);
    let max = z_mean
        .iter()
        .chain(z_cc.iter().flatten())
        .chain(z_cc_bar.iter().flatten())
        .fold(0.0_f64, |m, z| m.max(*z));
    if !max.is_finite() {
        bail!("non-finite z-score; the standard errors collapsed");
    }
    let report = SimulateReport {
        schema: SCHEMA,
        params,
        grid,
        envelope: EnvelopeKind::Sinc.tag(),
        seed: a.seed,
        sequence: seq.as_slice().to_vec(),
        monte_carlo: mc,
        analytic,
        z_scores: ZScores {
            mean: z_mean,
            cov_cc: z_cc,
            cov_cc_bar: z_cc_bar,
            max,
        },
    };
    write_json(a.out.as_deref(), &report).context("writing the simulation report")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("0:1:0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0, 2,5").unwrap(), vec![0.0, 2.0, 5.0]);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn complex_values() {
        assert_eq!(parse_complex("-1.5, 2").unwrap(), Complex64::new(-1.5, 2.0));
        assert!(parse_complex("3").is_err());
        assert_eq!(parse_symbols(0, "1,0").unwrap().get(0), Complex64::new(1.0, 0.0));
        assert!(parse_symbols(1, "1,0").is_err());
    }
}
