//! Sequential vs rayon execution of the batch drivers. Build with
//! `--no-default-features` to bench the sequential fallback alone.

use std::f64::consts::TAU;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use optochaos::integrator::IntegratorConfig;
use optochaos::lyapunov::{LyapunovConfig, DEFAULT_CHAOS_THRESHOLD};
use optochaos::poincare::{generate_section, SectionConfig};
use optochaos::scenarios::{chaos_fraction, preset};
use optochaos::Exec;

fn modes() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    if cfg!(feature = "parallel") {
        v.push(("parallel", Exec::Parallel));
    }
    v
}

fn section(c: &mut Criterion) {
    let params = preset("fig2k").unwrap().params;
    let cfg = SectionConfig {
        ic_count: 16,
        horizon: 40.0 * TAU,
        ..SectionConfig::default()
    };
    let icfg = IntegratorConfig::default();
    let mut g = c.benchmark_group("section_16_ics");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| generate_section(black_box(&params), &cfg, &icfg, exec).unwrap())
        });
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let params = preset("fig7-3").unwrap().params;
    let cfg = SectionConfig {
        ic_count: 4,
        ..SectionConfig::default()
    };
    let lyap = LyapunovConfig::with_total(101.0 * TAU);
    let icfg = IntegratorConfig::default();
    let mut g = c.benchmark_group("sweep_2x4");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                chaos_fraction(black_box(&params), &[0.0, 8.0], &cfg, &lyap, &icfg, DEFAULT_CHAOS_THRESHOLD, exec)
                    .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, section, sweep);
criterion_main!(benches);
