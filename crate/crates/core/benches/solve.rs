use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use varcontract::{solve_with, ContractProblem, Exec, LossModel, SolverConfig, UtilityModel};

fn problem(n: usize, rho: f64) -> ContractProblem {
    let measure = LossModel::uniform(1.0).discretize(n).unwrap();
    let utility = if rho == 0.0 { UtilityModel::Log } else { UtilityModel::Cara { a: 1.0 } };
    let (w0, nu) = if rho == 0.0 { (3.0, 0.04) } else { (2.0, 0.005) };
    ContractProblem::new(measure, utility, w0, rho, nu).unwrap()
}

fn bench_solve(c: &mut Criterion) {
    for (name, rho) in [("fair", 0.0), ("loaded", 0.1)] {
        let mut group = c.benchmark_group(format!("solve/{name}"));
        group.sample_size(20);
        for n in [401, 1601, 6401] {
            let p = problem(n, rho);
            for exec in [Exec::Sequential, Exec::Parallel] {
                let config = SolverConfig { exec, ..Default::default() };
                group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), n), &p, |b, p| {
                    b.iter(|| solve_with(p, &config).unwrap())
                });
            }
        }
        group.finish();
    }
}

criterion_group!(benches, bench_solve);
criterion_main!(benches);
