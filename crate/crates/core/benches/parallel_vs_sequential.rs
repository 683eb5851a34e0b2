use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use parisi_core::control::{estimate_value, simulate, ControlPolicy, McConfig};
use parisi_core::optimizer::{convexity_scan, Evaluator};
use parisi_core::pde::{self, Backend, GridConfig};
use parisi_core::{DiscreteMeasure, Execution, MixtureModel};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn model_and_measure() -> (MixtureModel, DiscreteMeasure) {
    let model = MixtureModel::sk(1.0, 0.5).unwrap();
    let mu = DiscreteMeasure::new(vec![0.1, 0.4, 0.7], vec![0.2, 0.6, 1.0]).unwrap();
    (model, mu)
}

fn monte_carlo(c: &mut Criterion) {
    let (model, mu) = model_and_measure();
    let sol = pde::solve(&model, &mu, &GridConfig::for_model(&model, Backend::SemiImplicitFd)).unwrap();
    let mut group = c.benchmark_group("simulate_optimal_feedback");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for paths in [2_000, 20_000] {
        for (name, execution) in MODES {
            let mc = McConfig { execution, ..McConfig::new(paths, 1) };
            group.bench_with_input(BenchmarkId::new(name, paths), &mc, |b, mc| {
                b.iter(|| estimate_value(&simulate(&sol, &ControlPolicy::optimal(), 0.5, 0.0, black_box(mc)).unwrap()))
            });
        }
    }
    group.finish();
}

fn scan(c: &mut Criterion) {
    let (model, mu) = model_and_measure();
    let nu = DiscreteMeasure::dirac(0.5).unwrap();
    let mut group = c.benchmark_group("convexity_scan");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for (name, execution) in MODES {
        group.bench_function(BenchmarkId::new(name, 5), |b| {
            b.iter(|| convexity_scan(&model, black_box(&mu), &nu, 5, &Evaluator::Pde, execution).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, scan);
criterion_main!(benches);
