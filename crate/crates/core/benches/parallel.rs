//! Sequential vs rayon throughput on the batch workloads: parametric
//! dispatch sweeps and per-area worst-case MILPs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use rayon::prelude::*;
use tiesched::harness::{brute, shipped};
use tiesched::lp::{self, LpConfig};
use tiesched::netmodel;
use tiesched::robust::{self, UncertaintyBox};

fn dispatch_sweep(c: &mut Criterion) {
    let case = shipped::small2();
    let (areas, coupling) = netmodel::assemble(&case).unwrap();
    let cfg = LpConfig::default();
    let ys = brute::sample_polytope(&coupling.g, &coupling.h, 64, 9, &cfg).unwrap();
    let jobs: Vec<(usize, DVector<f64>)> = ys
        .into_iter()
        .enumerate()
        .map(|(i, y)| (i % areas.len(), y))
        .collect();

    let run_one = |(ai, y): &(usize, DVector<f64>)| {
        let area = &areas[*ai];
        lp::solve_parametric_point(area, y, &area.xi_mid(), &cfg)
            .unwrap()
            .j_star
    };

    let mut group = c.benchmark_group("dispatch_sweep_64");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("sequential", jobs.len()), |b| {
        b.iter(|| jobs.iter().map(run_one).sum::<f64>())
    });
    group.bench_function(BenchmarkId::new("rayon", jobs.len()), |b| {
        b.iter(|| jobs.par_iter().map(run_one).sum::<f64>())
    });
    group.finish();
}

fn worst_case_step(c: &mut Criterion) {
    let case = shipped::small2();
    let (areas, coupling) = netmodel::assemble(&case).unwrap();
    let cfg = LpConfig::default();
    let boxes: Vec<UncertaintyBox> = areas.iter().map(UncertaintyBox::from_area).collect();
    let y = DVector::zeros(coupling.dim);
    let ms: Vec<f64> = areas
        .iter()
        .zip(&boxes)
        .map(|(a, b)| robust::choose_big_m(a, &coupling, b, &cfg).unwrap().0)
        .collect();
    let jobs: Vec<usize> = (0..areas.len()).collect();

    let run_one = |&i: &usize| {
        robust::worst_case(&areas[i], &y, &boxes[i], ms[i], &cfg)
            .unwrap()
            .0
    };

    let mut group = c.benchmark_group("worst_case_milp_per_area");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| jobs.iter().map(run_one).sum::<f64>())
    });
    group.bench_function("rayon", |b| {
        b.iter(|| jobs.par_iter().map(run_one).sum::<f64>())
    });
    group.finish();
}

criterion_group!(benches, dispatch_sweep, worst_case_step);
criterion_main!(benches);
