use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fragwave_core::frag_sim::simulate;
use fragwave_core::martingales::additive_w;
use fragwave_core::spine::PassageSampler;
use fragwave_core::stopping_lines::sweep_line;
use fragwave_core::waves::{estimate_wave, fkpp_residuals};
use fragwave_core::{DislocationMeasure, Seed, SimControls, SpectralProfile, SweepControls};

fn uniform() -> SpectralProfile {
    SpectralProfile::new(DislocationMeasure::uniform_binary()).unwrap()
}

fn spectral(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectral");
    for (name, m) in [
        ("uniform_binary", DislocationMeasure::uniform_binary()),
        ("binary_half", DislocationMeasure::binary_half()),
    ] {
        let prof = SpectralProfile::new(m.clone()).unwrap();
        g.bench_function(BenchmarkId::new("phi", name), |b| {
            b.iter(|| prof.phi(black_box(0.7)).unwrap())
        });
        g.bench_function(BenchmarkId::new("profile", name), |b| {
            b.iter(|| SpectralProfile::new(black_box(m.clone())).unwrap().p_bar())
        });
    }
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let prof = uniform();
    let controls = SimControls::default();
    let mut g = c.benchmark_group("simulate");
    for t in [2.0, 4.0, 6.0] {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            let mut i = 0;
            b.iter(|| {
                i += 1;
                let traj =
                    simulate(prof.measure(), t, Seed::new(1).replicate(i), &controls).unwrap();
                additive_w(&prof, &traj.final_population(), 1.0).unwrap()
            })
        });
    }
    g.finish();
}

fn lines(c: &mut Criterion) {
    let prof = uniform();
    let controls = SweepControls::default();
    let mut g = c.benchmark_group("sweep_line");
    for z in [1.0, 3.0] {
        g.bench_with_input(BenchmarkId::new("p=1", z), &z, |b, &z| {
            let mut i = 0;
            b.iter(|| {
                i += 1;
                sweep_line(&prof, 1.0, z, Seed::new(2).replicate(i), &controls)
                    .unwrap()
                    .fragments
                    .len()
            })
        });
    }
    let sampler = PassageSampler::new(&prof, 1.0).unwrap();
    g.bench_function("spine_passage_z=5", |b| {
        let mut i = 0;
        b.iter(|| {
            i += 1;
            sampler
                .sample(5.0, &mut Seed::new(3).replicate(i).rng())
                .overshoot
        })
    });
    g.finish();
}

fn waves(c: &mut Criterion) {
    let prof = uniform();
    let samples: Vec<f64> = (0..2000)
        .map(|k| 0.2 + 1.6 * (k as f64 + 0.5) / 2000.0)
        .collect();
    let wave = estimate_wave(&samples, 1.0, None).unwrap();
    let xs: Vec<f64> = wave.xs()[wave.central_half()]
        .iter()
        .step_by(8)
        .copied()
        .collect();
    let c1 = prof.wave_speed(1.0).unwrap();
    let mut g = c.benchmark_group("wave");
    g.bench_function("estimate_2000", |b| {
        b.iter(|| estimate_wave(black_box(&samples), 1.0, None).unwrap())
    });
    g.bench_function("residuals", |b| {
        b.iter(|| fkpp_residuals(&wave, &prof, &xs, c1).unwrap())
    });
    g.finish();
}

criterion_group!(benches, spectral, simulation, lines, waves);
criterion_main!(benches);
