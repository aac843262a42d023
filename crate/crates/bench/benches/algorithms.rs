use criterion::{black_box, criterion_group, criterion_main, Criterion};

use hybeam::cmdd::cmdd_precode;
use hybeam::digital::{mses, receivers, random_digital_set, solve_socp_step, update_factors, wmmse_step};
use hybeam::framework::{default_solver, run_algorithm, FrameworkOptions};
use hybeam::harness::trial_channel;
use hybeam::manifold::{euclidean_gradient, optimize_analog, CgOptions, ManifoldPoint};
use hybeam::rng::{stream, Stream};
use hybeam::{Algorithm, AnalogPrecoder, SystemConfig};

fn desk() -> SystemConfig {
    let mut cfg = SystemConfig::desk();
    cfg.seed = 1;
    cfg
}

fn kernels(c: &mut Criterion) {
    let cfg = desk();
    let h = trial_channel(&cfg, 0).unwrap();
    let mut rng = stream(cfg.seed, 0, Stream::Init);
    let a = AnalogPrecoder::random(cfg.antennas, cfg.rf_chains, &mut rng);
    let f = a.matrix().clone();
    let w = random_digital_set(&f, cfg.users, cfg.subcarriers, &mut rng);
    let z = cfg.weights.clone();
    let theta = cfg.theta;

    c.bench_function("euclidean_gradient desk", |b| {
        b.iter(|| euclidean_gradient(black_box(&f), &h, &w, &z, theta))
    });

    c.bench_function("optimize_analog desk", |b| {
        let x0 = ManifoldPoint::from_analog(&a);
        b.iter(|| optimize_analog(black_box(&x0), &h, &w, &z, theta, &CgOptions::default()).unwrap())
    });

    let g = f.adjoint() * h.subcarrier(0);
    let w0 = w.subcarrier(0);
    let bs = receivers(&g, w0, theta);
    let eta = update_factors(&mses(&g, w0, theta), &z).unwrap().eta;
    let solver = default_solver();
    c.bench_function("socp step", |b| {
        b.iter(|| solve_socp_step(black_box(&g), &bs, &eta, &f, &solver).unwrap())
    });
    c.bench_function("wmmse step", |b| {
        b.iter(|| wmmse_step(black_box(&g), &bs, &z, &f, theta).unwrap())
    });
    c.bench_function("cmdd desk", |b| b.iter(|| cmdd_precode(black_box(&h), &cfg).unwrap()));
}

fn full_runs(c: &mut Criterion) {
    let cfg = desk();
    let h = trial_channel(&cfg, 0).unwrap();
    let solver = default_solver();
    let mut opts = FrameworkOptions::default();
    opts.locally_optimal.max_iters = 20;
    let mut group = c.benchmark_group("desk trial");
    group.sample_size(10);
    for alg in [Algorithm::Aohb, Algorithm::Laohb] {
        group.bench_function(alg.name(), |b| {
            b.iter(|| run_algorithm(alg, black_box(&h), &cfg, &opts, &solver, 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernels, full_runs);
criterion_main!(benches);
