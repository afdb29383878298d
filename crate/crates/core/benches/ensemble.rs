use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qsd::{preset, run_ensemble_opts, EnsembleOptions, Execution, PresetOverrides, ScenarioName};

fn sequential_vs_parallel(c: &mut Criterion) {
    let s = preset(
        ScenarioName::Fig5,
        &PresetOverrides {
            dim: Some(8),
            t_final: Some(0.5),
            record_stride: Some(50),
            leak_check: Some(false),
            ..Default::default()
        },
    )
    .expect("preset");
    let mut group = c.benchmark_group("fig5-ensemble");
    group.sample_size(10);
    for m in [64usize, 256] {
        for (label, execution) in [
            ("sequential", Execution::Sequential),
            ("parallel", Execution::Parallel),
        ] {
            let opts = EnsembleOptions {
                execution,
                keep_snapshots: false,
            };
            group.bench_with_input(BenchmarkId::new(label, m), &m, |b, &m| {
                b.iter(|| run_ensemble_opts(&s.model, &s.psi0, &s.cfg, m, opts).expect("ensemble"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sequential_vs_parallel);
criterion_main!(benches);
