use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use growthcast::{bundled_dataset, generate_with, qc_correct, EnsembleConfig, Execution};

fn ensemble_generation(c: &mut Criterion) {
    let cases = [
        ("china", 25, 20),
        ("italy", 32, 30),
        ("south_korea", 33, 30),
    ];
    let mut group = c.benchmark_group("generate");
    for (name, issuance, horizon) in cases {
        let raw = bundled_dataset(name).unwrap();
        let (series, _) = qc_correct(&raw, growthcast::DEFAULT_QC_THRESHOLD).unwrap();
        for members in [30usize, 300] {
            let mut config = EnsembleConfig::new(issuance, horizon, 7);
            config.n_members = members;
            config.n_lag_forward = members / 3;
            config.n_lag_backward = members / 3;
            let id = format!("{name}/{members}");
            for (label, exec) in [
                ("sequential", Execution::Sequential),
                ("parallel", Execution::Parallel),
            ] {
                group.bench_with_input(BenchmarkId::new(label, &id), &config, |b, cfg| {
                    b.iter(|| generate_with(black_box(&series), cfg, exec).unwrap())
                });
            }
        }
    }
    group.finish();
}

criterion_group!(benches, ensemble_generation);
criterion_main!(benches);
