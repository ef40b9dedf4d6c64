use std::sync::Arc;

use lmmg_core::fespace::FeSpace;
use lmmg_core::problem::ClosureNonlinearity;
use lmmg_core::{
    create_square_mesh, dorfler_mark, element_indicators, Discretization, FeFunction, IndicatorField, Rectangle,
    SemilinearProblem, Triangulation,
};
use proptest::prelude::*;

/// `-ε Δu + u = 1` with homogeneous Dirichlet data.
fn reaction_diffusion(eps: f64) -> SemilinearProblem {
    let one = ClosureNonlinearity {
        f: Arc::new(|_, _| 1.0),
        f_t: Arc::new(|_, _| 0.0),
        antiderivative: Arc::new(|_, t| t),
        degree: 2,
    };
    SemilinearProblem::new("reaction_diffusion", eps, 1.0, one, Rectangle::unit()).unwrap()
}

/// Galerkin solution: the residual is affine with derivative `G`, so one
/// gradient step from zero solves the discrete problem.
fn galerkin_solution(d: &Discretization) -> FeFunction {
    let zero = FeFunction::zeros(d.space().clone());
    d.discrete_residual(&zero).unwrap().d
}

fn discretize(p: &Arc<SemilinearProblem>, mesh: Triangulation) -> Discretization {
    Discretization::new(p.clone(), FeSpace::new(Arc::new(mesh))).unwrap()
}

#[test]
fn galerkin_solution_has_zero_residual() {
    let p = Arc::new(reaction_diffusion(1e-2));
    let d = discretize(&p, create_square_mesh([0.0, 0.0], [1.0, 1.0], 8).unwrap());
    let u = galerkin_solution(&d);
    let r = d.discrete_residual(&u).unwrap();
    assert!(r.norm_eps <= 1e-8 * d.eps_norm(&u).unwrap(), "{}", r.norm_eps);
}

#[test]
fn indicator_is_robust_in_epsilon() {
    // η is compared with the error in the ε-norm against a fine reference,
    // computed the same way for every ε
    let mut ratios = Vec::new();
    for eps in [1.0, 1e-3, 1e-6] {
        let p = Arc::new(reaction_diffusion(eps));
        let coarse = create_square_mesh([0.0, 0.0], [1.0, 1.0], 8).unwrap();
        let mut fine = coarse.clone();
        for _ in 0..4 {
            fine = fine.refine_all().unwrap();
        }
        let dc = discretize(&p, coarse);
        let df = discretize(&p, fine);
        let uc = galerkin_solution(&dc);
        let uf = galerkin_solution(&df);
        let uc_fine = lmmg_core::fespace::interpolate_function(&uc, df.space()).unwrap();
        let err = df.eps_norm(&uf.axpy(-1.0, &uc_fine).unwrap()).unwrap();
        let eta = element_indicators(&dc, &uc, false).unwrap().global();
        ratios.push(eta / err);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi / lo <= 10.0, "η / error ratios {ratios:?}");
}

#[test]
fn adaptive_cycles_reduce_eta() {
    let p = Arc::new(reaction_diffusion(1e-4));
    let mut mesh = create_square_mesh([0.0, 0.0], [1.0, 1.0], 4).unwrap();
    let mut etas = Vec::new();
    for _ in 0..10 {
        let d = discretize(&p, mesh.clone());
        let u = galerkin_solution(&d);
        let field = element_indicators(&d, &u, false).unwrap();
        etas.push(field.global());
        let marked = dorfler_mark(&field, 0.5);
        mesh = mesh.refine(&marked).unwrap();
    }
    assert!(etas.last().unwrap() < &(0.5 * etas[0]), "{etas:?}");
    // no cycle increases η by more than a little
    for w in etas.windows(2) {
        assert!(w[1] <= 1.05 * w[0], "{etas:?}");
    }
}

proptest! {
    #[test]
    fn dorfler_set_is_minimal(values in prop::collection::vec(0.0f64..1.0, 1..150), theta in 0.01f64..0.99) {
        let field = IndicatorField::new(values);
        let marked = dorfler_mark(&field, theta);
        let total = field.total_sq();
        prop_assume!(total > 0.0);
        let mut chosen: Vec<f64> = marked.iter().map(|&e| field.values[e]).collect();
        chosen.sort_by(|a, b| b.total_cmp(a));
        let sum: f64 = chosen.iter().sum();
        prop_assert!(sum >= theta * total);
        let without: f64 = chosen[..chosen.len() - 1].iter().sum();
        prop_assert!(without < theta * total);
        // nothing left out is larger than what was taken
        let smallest = *chosen.last().unwrap();
        for (i, &v) in field.values.iter().enumerate() {
            if !marked.contains(&i) {
                prop_assert!(v <= smallest);
            }
        }
    }

    #[test]
    fn dorfler_is_monotone_in_theta(values in prop::collection::vec(0.0f64..1.0, 1..150), a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let field = IndicatorField::new(values);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = dorfler_mark(&field, lo);
        let large = dorfler_mark(&field, hi);
        prop_assert!(small.len() <= large.len());
        prop_assert!(small.iter().all(|e| large.contains(e)));
    }
}
