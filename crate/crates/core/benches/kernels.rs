//! Sequential vs rayon-parallel execution of the hot loops.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use betis::filter::{poisson_binomial, time_update, BetisFilter, NonUserContactModel, Prior};
use betis::harness::{simulate, Preset, ScenarioConfig};
use betis::mobility::{compute_contacts, init_locations};
use betis::rng::RngStreams;
use betis::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench_contacts(c: &mut Criterion) {
    let mut group = c.benchmark_group("compute_contacts");
    for n in [2_000usize, 10_000] {
        let locs = init_locations(n, &RngStreams::new(1), Exec::default()).unwrap();
        let d = 0.007 * (1e4 / n as f64).sqrt();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &locs, |b, locs| {
                b.iter(|| compute_contacts(black_box(locs), d, n * 6 / 10, 1, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_filter_step(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::defaults(Preset::Paper);
    cfg.horizon = 40;
    let gt = simulate(&cfg, 1, Exec::default()).unwrap();
    let f = NonUserContactModel::poisson(0.6).unwrap();
    let frame = gt.log.frames().last().unwrap();
    let mut warm = BetisFilter::new(gt.n_users, &Prior::seeded(0.1), cfg.params, f.clone(), Exec::default()).unwrap();
    for fr in gt.log.frames() {
        warm.measure(fr).unwrap();
        if fr.time < frame.time {
            warm.predict(fr).unwrap();
        }
    }
    let state = warm.state().clone();

    let mut group = c.benchmark_group("time_update_n10000");
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| time_update(black_box(&state), &frame.contacts, &cfg.params, &f, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_end_to_end(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::defaults(Preset::Desk);
    cfg.horizon = 60;
    let mut group = c.benchmark_group("run_seed_desk_k60");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| betis::harness::run_seed(&cfg, 3, exec, false).unwrap()));
    }
    group.finish();
}

fn bench_poisson_binomial(c: &mut Criterion) {
    let probs: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).fract()).collect();
    c.bench_function("poisson_binomial_32", |b| b.iter(|| poisson_binomial(black_box(&probs))));
}

criterion_group!(benches, bench_contacts, bench_filter_step, bench_end_to_end, bench_poisson_binomial);
criterion_main!(benches);
