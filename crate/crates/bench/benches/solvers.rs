use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use reluocp::grid::assemble;
use reluocp::{
    fixture_single_max, fixture_two_layer, pdas_linear, run, solve_state, BoxBounds, DescentConfig, Field, Grid,
    NetKind, NetModel, NewtonConfig, PdasConfig, QuadraticModel, ReluNet,
};

fn band_cholesky(c: &mut Criterion) {
    let mut group = c.benchmark_group("band_cholesky");
    for n in [32usize, 64, 128] {
        let grid = Grid::square(0.0, 1.0, 1.0 / n as f64).unwrap();
        let band = assemble(&grid, &Field::constant(&grid, 1.0)).unwrap().band_matrix();
        group.bench_with_input(BenchmarkId::from_parameter(n), &band, |b, m| {
            b.iter(|| black_box(m.clone().cholesky().unwrap()))
        });
    }
    group.finish();
}

fn state_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("state_solve");
    for n in [32usize, 64] {
        let fx = fixture_two_layer(NetKind::Nonmonotone, 2.0 / n as f64, 1e-2).unwrap();
        let model = fx.problem.model();
        let u = fx.u_data.clone().unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| solve_state(&fx.problem.grid, &model, u, None, &NewtonConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn pdas(c: &mut Criterion) {
    let mut group = c.benchmark_group("pdas");
    for n in [32usize, 64] {
        let grid = Grid::square(0.0, 1.0, 1.0 / n as f64).unwrap();
        let model = NetModel::new(ReluNet::relu()).unwrap();
        let y = Field::from_fn(&grid, |a, b| a - b);
        let u = Field::zeros(&grid);
        let p0 = Field::from_fn(&grid, |a, b| 5.0 * (3.0 * a + b).sin());
        let bounds = BoxBounds::constant(&grid, -0.2, 0.2).unwrap();
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| {
                let mut qm = QuadraticModel::new(&grid, &model, &y, 1e-2).unwrap();
                pdas_linear(&mut qm, &u, &p0, &bounds, 1e-2, &PdasConfig::default()).unwrap()
            })
        });
    }
    group.finish();
}

fn descent(c: &mut Criterion) {
    let mut group = c.benchmark_group("descent");
    group.sample_size(10);
    let fx = fixture_single_max(1.0 / 16.0, 1e-1).unwrap();
    let cfg = DescentConfig { nu: 0.9, ..DescentConfig::default() };
    group.bench_function("single_max_16", |b| b.iter(|| run(&fx.problem, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, band_cholesky, state_solve, pdas, descent);
criterion_main!(benches);
