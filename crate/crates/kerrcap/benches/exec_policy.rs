//! Parallel vs sequential execution of the main data-parallel workloads.
//!
//! Build with `--no-default-features` to compare against a binary that has
//! no rayon at all.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use kerrcap::channel_sim::{mc_correlators, SimGrid, Simulator};
use kerrcap::coefficients::{build_coefficients, Coverage};
use kerrcap::condpdf::SequenceKernels;
use kerrcap::distribution::OptimalInput;
use kerrcap::envelope::EnvelopeKind;
use kerrcap::information::ChannelParams;
use kerrcap::jtensors::build_jtensors;
use kerrcap::sampler::{gaussian_sequence, sample_many, SamplerConfig};
use kerrcap::ExecPolicy;

const POLICIES: [(&str, ExecPolicy); 2] = [("parallel", ExecPolicy::Parallel), ("sequential", ExecPolicy::Sequential)];

fn coefficient_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("coefficients_m2_beta1");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| build_coefficients(2, 1.0, EnvelopeKind::Sinc, Coverage::CrossedDiagonal, policy).unwrap())
        });
    }
    g.finish();
}

fn sequence_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("sequence_kernels_m2");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| SequenceKernels::new(2, 1.0, policy).unwrap())
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let grid = SimGrid {
        n_time: 256,
        periods: 21,
        n_steps: 50,
    };
    let sim = Simulator::new(grid, ChannelParams::new(2, 1.0, 0.05, 1000.0), EnvelopeKind::Sinc).unwrap();
    let seq = gaussian_sequence(2, 1);
    let mut g = c.benchmark_group("monte_carlo_1000_runs");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| mc_correlators(&sim, &seq, 1000, 3, policy).unwrap())
        });
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let set = build_coefficients(2, 1.0, EnvelopeKind::Sinc, Coverage::Full, ExecPolicy::Parallel).unwrap();
    let input = OptimalInput::new(build_jtensors(&set, ExecPolicy::Parallel).unwrap().j_info, 0.2);
    let mut g = c.benchmark_group("sampler_8192_sequences");
    g.sample_size(10);
    for (name, policy) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sample_many(&input, SamplerConfig::default(), 8192, policy).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, coefficient_build, sequence_kernels, monte_carlo, sampling);
criterion_main!(benches);
