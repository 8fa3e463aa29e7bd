use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use palmcluster::coverage::{evaluate_grid, Mode};
use palmcluster::palm::{verify_exchange, BallCount};
use palmcluster::sinr::estimate_sinr_grid;
use palmcluster::{ClusterSpec, Execution, NetworkSpec, OffspringKernel, QuadPolicy, SimConfig};

fn spec() -> ClusterSpec {
    ClusterSpec::new(1.0 / PI, 10.0, OffspringKernel::thomas(1.0).unwrap()).unwrap()
}

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn sinr_replications(c: &mut Criterion) {
    let net = NetworkSpec::new(0.5, 4.0, 0.0).unwrap();
    let mut g = c.benchmark_group("sinr_mc_512_reps");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SimConfig {
            execution: exec,
            ..SimConfig::new(30.0, 512, 1)
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_sinr_grid(&spec(), &net, &[0.1, 1.0, 10.0], &cfg).unwrap())
        });
    }
    g.finish();
}

fn exchange_replications(c: &mut Criterion) {
    let mut g = c.benchmark_group("exchange_2048_reps");
    g.sample_size(10);
    for (name, exec) in MODES {
        let cfg = SimConfig {
            execution: exec,
            ..SimConfig::new(7.0, 2048, 1)
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| verify_exchange(&spec(), &BallCount { radius: 1.0 }, &cfg).unwrap())
        });
    }
    g.finish();
}

fn analytic_theta_grid(c: &mut Criterion) {
    let net = NetworkSpec::new(0.5, 4.0, 0.0).unwrap();
    let pol = QuadPolicy::default();
    let thetas = [0.1, 1.0, 10.0, 100.0];
    let mut g = c.benchmark_group("coverage_4_thetas");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_grid(&thetas, &spec(), &net, &pol, Mode::Nearest, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sinr_replications, exchange_replications, analytic_theta_grid);
criterion_main!(benches);
