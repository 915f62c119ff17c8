use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use urnsa_core::models::{bhs_model, wei_model};
use urnsa_core::montecarlo::{map_replications, run_path};

fn replications(c: &mut Criterion) {
    let models = [
        ("wei", wei_model(&[0.5, 0.7]).unwrap()),
        ("bhs3", bhs_model(&[0.5, 0.6, 0.7], &[1.0 / 3.0; 3]).unwrap()),
    ];
    let horizon = 10_000;
    let paths = 64;
    let mut group = c.benchmark_group("replications");
    group.sample_size(10);
    for (name, model) in &models {
        for (label, workers) in [("sequential", Some(1)), ("parallel", None)] {
            group.bench_with_input(BenchmarkId::new(label, name), &workers, |b, &w| {
                b.iter(|| {
                    map_replications(paths, w, |r| run_path(model, 7, r, horizon, &[horizon]).unwrap()).unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, replications);
criterion_main!(benches);
