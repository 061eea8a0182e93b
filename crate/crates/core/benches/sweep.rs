use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use relpose::harness::{run_scenario, RunConfig};
use relpose::observability::{sweep_observability, SweepSettings};
use relpose::parallel::Execution;
use relpose::riccati::OutputMode;

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep_observability");
    group.sample_size(10);
    for mode in [OutputMode::Position, OutputMode::Bearing] {
        let mut cfg = RunConfig::ship_landing(mode);
        cfg.sweep.enabled = false;
        let out = run_scenario(&cfg).expect("ship-landing run");
        let settings = SweepSettings {
            delta: if mode == OutputMode::Bearing {
                2.0 * std::f64::consts::PI / 0.4
            } else {
                std::f64::consts::PI
            },
            ..SweepSettings::default()
        };
        for exec in [Execution::Sequential, Execution::Parallel] {
            group.bench_with_input(
                BenchmarkId::new(format!("{mode}"), format!("{exec:?}")),
                &exec,
                |b, &exec| {
                    b.iter(|| {
                        sweep_observability(mode, &out.a_tz, Some(&out.y0), &settings, &cfg.scenario, exec).unwrap()
                    })
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
