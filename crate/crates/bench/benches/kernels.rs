use std::f64::consts::PI;
use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use lmmg_core::fespace::{assemble_gram, FeSpace};
use lmmg_core::problem::builtin_problem;
use lmmg_core::sparse::{cg_solve, DEFAULT_CG_TOL};
use lmmg_core::{create_square_mesh, element_indicators, nodal_interpolant, peak_select_1d, Discretization};

fn setup(divisions: usize) -> Discretization {
    let p = builtin_problem("lane_emden").unwrap();
    let mesh = create_square_mesh([0.0, 0.0], [1.0, 1.0], divisions).unwrap();
    Discretization::new(Arc::new(p), FeSpace::new(Arc::new(mesh))).unwrap()
}

fn kernels(c: &mut Criterion) {
    let d = setup(64);
    let sine = nodal_interpolant(d.space(), |x| (PI * x[0]).sin() * (PI * x[1]).sin());
    let v = sine.scaled(1.0 / d.eps_norm(&sine).unwrap());
    let w = peak_select_1d(&d, &v).unwrap().w;

    c.bench_function("assemble_gram_8k", |b| b.iter(|| assemble_gram(black_box(d.space()), 1.0, 0.0).unwrap()));
    let rhs = d.residual_vector(&w).unwrap();
    c.bench_function("cg_solve_8k", |b| b.iter(|| cg_solve(d.gram(), black_box(&rhs), DEFAULT_CG_TOL, None).unwrap()));
    c.bench_function("peak_select_8k", |b| b.iter(|| peak_select_1d(&d, black_box(&v)).unwrap()));
    c.bench_function("indicators_8k", |b| b.iter(|| element_indicators(&d, black_box(&w), false).unwrap()));

    let mesh = d.space().mesh().clone();
    let marked: Vec<usize> = (0..mesh.num_elements()).step_by(7).collect();
    c.bench_function("refine_8k", |b| b.iter(|| mesh.refine(black_box(&marked)).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = kernels
}
criterion_main!(benches);
