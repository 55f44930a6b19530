//! Sequential vs data-parallel calibration trials.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use privexp::evaluation::{calibration_trial, ExperimentConfig};
use privexp::parallel::map_indices;
use privexp::Execution;

const CONFIG: &str = r#"{"family":"bernoulli","prior":{"alpha":1,"beta":1},"n":[100],"epsilon":[0.1],
    "trials":16,"iters":600,"burnin":100,"seed":1,"methods":["gibbs","naive","nonprivate"],
    "posterior_samples":200}"#;

fn trials(c: &mut Criterion) {
    let config = ExperimentConfig::from_json(CONFIG).expect("bench config parses");
    let mut group = c.benchmark_group("calibration_trials");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| map_indices(config.trials, exec, |t| calibration_trial(&config, 0, 100, 0.1, t).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, trials);
criterion_main!(benches);
