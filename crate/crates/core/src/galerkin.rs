//! A problem discretized on one P1 space: energy, residual, Riesz
//! representative of the residual, and the ε-norm.

use std::sync::Arc;

use crate::error::{LmmgError, Result};
use crate::fespace::{assemble_gram, assemble_stiffness, ElementQuadrature, FeFunction, FeSpace};
use crate::mesh::NONE;
use crate::problem::SemilinearProblem;
use crate::quadrature::QuadratureRule;
use crate::sparse::{cg_solve, dot, CsrMatrix, DEFAULT_CG_TOL};

/// `d = -R_N(u)` and `‖R_N(u)‖_ε`.
#[derive(Debug, Clone)]
pub struct DiscreteResidual {
    pub d: FeFunction,
    pub norm_eps: f64,
    /// `⟨E'(u), φ_i⟩` over free basis functions.
    pub residual: Vec<f64>,
    pub cg_iterations: usize,
}

impl DiscreteResidual {
    /// `⟨E'(u), d⟩`, which equals `-‖R_N(u)‖²_ε` up to the solver tolerance.
    pub fn dual_product(&self) -> f64 {
        dot(&self.residual, self.d.coefficients())
    }
}

/// Assembled operators and cached quadrature for one space.
#[derive(Debug, Clone)]
pub struct Discretization {
    problem: Arc<SemilinearProblem>,
    space: Arc<FeSpace>,
    stiffness: CsrMatrix,
    gram: CsrMatrix,
    quad: ElementQuadrature,
    q_values: Vec<f64>,
    cg_tol: f64,
}

impl Discretization {
    pub fn new(problem: Arc<SemilinearProblem>, space: Arc<FeSpace>) -> Result<Self> {
        let rule = QuadratureRule::with_degree(problem.quad_degree);
        Self::with_rule(problem, space, rule)
    }

    pub fn with_rule(
        problem: Arc<SemilinearProblem>,
        space: Arc<FeSpace>,
        rule: QuadratureRule,
    ) -> Result<Self> {
        let required = problem.nonlinearity.quadrature_degree();
        if rule.degree < required {
            return Err(LmmgError::Configuration(format!(
                "quadrature degree {} is below the {} required by problem `{}`",
                rule.degree, required, problem.name
            )));
        }
        let stiffness = assemble_stiffness(&space);
        let gram = assemble_gram(&space, problem.epsilon, problem.nu)?;
        let quad = ElementQuadrature::new(&space, rule);
        let q_values = quad.points.iter().map(|&x| problem.q(x)).collect();
        Ok(Discretization { problem, space, stiffness, gram, quad, q_values, cg_tol: DEFAULT_CG_TOL })
    }

    pub fn with_cg_tolerance(mut self, tol: f64) -> Self {
        self.cg_tol = tol;
        self
    }

    pub fn problem(&self) -> &Arc<SemilinearProblem> {
        &self.problem
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn gram(&self) -> &CsrMatrix {
        &self.gram
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn quadrature(&self) -> &ElementQuadrature {
        &self.quad
    }

    pub fn cg_tolerance(&self) -> f64 {
        self.cg_tol
    }

    /// Values of `u` at every quadrature point.
    pub fn values_at_quadrature(&self, u: &FeFunction) -> Vec<f64> {
        self.quad.values(&self.space, &u.nodal_values())
    }

    fn check(&self, u: &FeFunction) -> Result<()> {
        if Arc::ptr_eq(u.space(), &self.space) {
            Ok(())
        } else {
            Err(LmmgError::InvalidInput("function does not belong to this discretization".into()))
        }
    }

    /// `E(u) = ε/2 ∫|∇u|² + 1/2 ∫q u² - ∫F(x, u)`.
    pub fn energy(&self, u: &FeFunction) -> Result<f64> {
        self.check(u)?;
        let c = u.coefficients();
        let grad = self.stiffness.bilinear(c, c)?;
        let vals = self.values_at_quadrature(u);
        Ok(0.5 * self.problem.epsilon * grad + self.reaction_minus_potential(&vals))
    }

    /// `Σ_q w_q (q u_q² / 2 - F(x_q, u_q))`.
    pub(crate) fn reaction_minus_potential(&self, vals: &[f64]) -> f64 {
        let p = &self.problem;
        let mut total = 0.0;
        for (i, &uq) in vals.iter().enumerate() {
            let x = self.quad.points[i];
            total += self.quad.weights[i] * (0.5 * self.q_values[i] * uq * uq - p.big_f(x, uq));
        }
        total
    }

    /// Entry `i` is `ε∫∇u·∇φ_i + ∫q u φ_i - ∫f(x, u) φ_i`.
    pub fn residual_vector(&self, u: &FeFunction) -> Result<Vec<f64>> {
        self.check(u)?;
        let p = &self.problem;
        let mut r = self.stiffness.spmv(u.coefficients())?;
        r.iter_mut().for_each(|x| *x *= p.epsilon);
        let vals = self.values_at_quadrature(u);
        let bary = &self.quad.rule().points;
        let nq = bary.len();
        for e in 0..self.space.num_elements() {
            let dofs = self.space.element_dofs(e);
            let mut local = [0.0; 3];
            for (k, b) in bary.iter().enumerate() {
                let i = e * nq + k;
                let uq = vals[i];
                let x = self.quad.points[i];
                let g = self.quad.weights[i] * (self.q_values[i] * uq - p.f(x, uq));
                local[0] += g * b[0];
                local[1] += g * b[1];
                local[2] += g * b[2];
            }
            for j in 0..3 {
                if dofs[j] != NONE {
                    r[dofs[j]] += local[j];
                }
            }
        }
        Ok(r)
    }

    /// Solves `G r = residual` and returns `d = -r` with `‖r‖_ε`.
    pub fn discrete_residual(&self, u: &FeFunction) -> Result<DiscreteResidual> {
        let residual = self.residual_vector(u)?;
        let sol = cg_solve(&self.gram, &residual, self.cg_tol, None)?;
        let norm_sq = self.gram.bilinear(&sol.x, &sol.x)?;
        let d: Vec<f64> = sol.x.iter().map(|x| -x).collect();
        Ok(DiscreteResidual {
            d: FeFunction::from_coefficients(self.space.clone(), d)?,
            norm_eps: norm_sq.max(0.0).sqrt(),
            residual,
            cg_iterations: sol.iterations,
        })
    }

    pub fn eps_inner(&self, u: &FeFunction, v: &FeFunction) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        self.gram.bilinear(u.coefficients(), v.coefficients())
    }

    pub fn eps_norm(&self, u: &FeFunction) -> Result<f64> {
        Ok(self.eps_inner(u, u)?.max(0.0).sqrt())
    }

    /// `⦀u⦀² = ε∫|∇u|² + ∫q u²`, the quadratic part of the energy times two.
    pub fn triple_norm_sq(&self, u: &FeFunction) -> Result<f64> {
        self.check(u)?;
        let c = u.coefficients();
        let vals = self.values_at_quadrature(u);
        Ok(self.problem.epsilon * self.stiffness.bilinear(c, c)? + self.weighted_q_sum(&vals, &vals))
    }

    /// `⦀u, v⦀ = ε∫∇u·∇v + ∫q u v`.
    pub fn triple_inner(&self, u: &FeFunction, v: &FeFunction) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        let a = self.values_at_quadrature(u);
        let b = self.values_at_quadrature(v);
        Ok(self.problem.epsilon * self.stiffness.bilinear(u.coefficients(), v.coefficients())?
            + self.weighted_q_sum(&a, &b))
    }

    fn weighted_q_sum(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += self.quad.weights[i] * self.q_values[i] * a[i] * b[i];
        }
        s
    }

    /// Energy restricted to the ray `t ↦ t v`.
    pub fn ray(&self, v: &FeFunction) -> Result<RayProfile<'_>> {
        let triple_sq = self.triple_norm_sq(v)?;
        Ok(RayProfile { disc: self, values: self.values_at_quadrature(v), triple_sq })
    }
}

/// `g_v(t) = E(t v)` with `v` fixed; quadrature values of `v` are cached.
#[derive(Debug, Clone)]
pub struct RayProfile<'a> {
    disc: &'a Discretization,
    values: Vec<f64>,
    triple_sq: f64,
}

impl RayProfile<'_> {
    pub fn triple_norm_sq(&self) -> f64 {
        self.triple_sq
    }

    /// `∫ h(x, t v) ...` helper over quadrature points.
    fn sum<H: Fn([f64; 2], f64) -> f64>(&self, h: H) -> f64 {
        let quad = self.disc.quadrature();
        let mut s = 0.0;
        for (i, &vq) in self.values.iter().enumerate() {
            s += quad.weights[i] * h(quad.points[i], vq);
        }
        s
    }

    pub fn energy(&self, t: f64) -> f64 {
        let p = &self.disc.problem;
        0.5 * t * t * self.triple_sq - self.sum(|x, v| p.big_f(x, t * v))
    }

    /// `g_v'(t) = t ⦀v⦀² - ∫f(x, t v) v`.
    pub fn derivative(&self, t: f64) -> f64 {
        let p = &self.disc.problem;
        t * self.triple_sq - self.sum(|x, v| p.f(x, t * v) * v)
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let p = &self.disc.problem;
        self.triple_sq - self.sum(|x, v| p.f_t(x, t * v) * v * v)
    }

    /// Derivative of `τ ↦ ε⁻¹ E(√ε τ v)`: `τ⦀v⦀² - ε^{-1/2} ∫f(x, √ε τ v) v`.
    pub fn scaled_derivative(&self, tau: f64) -> f64 {
        let p = &self.disc.problem;
        let se = p.epsilon.sqrt();
        tau * self.triple_sq - self.sum(|x, v| p.f(x, se * tau * v) * v) / se
    }

    pub fn scaled_second_derivative(&self, tau: f64) -> f64 {
        let p = &self.disc.problem;
        let se = p.epsilon.sqrt();
        self.triple_sq - self.sum(|x, v| p.f_t(x, se * tau * v) * v * v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::nodal_interpolant;
    use crate::mesh::create_square_mesh;
    use crate::problem::{builtin_problem, ClosureNonlinearity};
    use crate::mesh::Rectangle;
    use std::f64::consts::PI;

    fn disc(name: &str, divisions: usize) -> Discretization {
        let p = builtin_problem(name).unwrap();
        let mesh = create_square_mesh(p.domain.lo, p.domain.hi, divisions).unwrap();
        Discretization::new(Arc::new(p), FeSpace::new(Arc::new(mesh))).unwrap()
    }

    fn sine(space: &Arc<FeSpace>) -> FeFunction {
        nodal_interpolant(space, |x| (PI * x[0]).sin() * (PI * x[1]).sin())
    }

    fn zero_nonlinearity() -> ClosureNonlinearity {
        ClosureNonlinearity {
            f: Arc::new(|_, _| 0.0),
            f_t: Arc::new(|_, _| 0.0),
            antiderivative: Arc::new(|_, _| 0.0),
            degree: 2,
        }
    }

    #[test]
    fn zero_function() {
        let d = disc("lane_emden", 4);
        let u = FeFunction::zeros(d.space().clone());
        assert_eq!(d.energy(&u).unwrap(), 0.0);
        assert!(d.residual_vector(&u).unwrap().iter().all(|&r| r == 0.0));
        let r = d.discrete_residual(&u).unwrap();
        assert_eq!(r.norm_eps, 0.0);
        assert!(r.d.coefficients().iter().all(|&x| x == 0.0));
        assert_eq!(d.eps_norm(&u).unwrap(), 0.0);
    }

    #[test]
    fn linear_case_reduces_to_stiffness() {
        let p = SemilinearProblem::new("lin", 0.7, 0.0, zero_nonlinearity(), Rectangle::unit()).unwrap();
        let mesh = create_square_mesh([0.0, 0.0], [1.0, 1.0], 4).unwrap();
        let d = Discretization::new(Arc::new(p), FeSpace::new(Arc::new(mesh))).unwrap();
        let u = sine(d.space());
        let ku = d.stiffness().spmv(u.coefficients()).unwrap();
        let r = d.residual_vector(&u).unwrap();
        for (a, b) in r.iter().zip(&ku) {
            assert!((a - 0.7 * b).abs() < 1e-14);
        }
        let e = d.energy(&u).unwrap();
        let quad = 0.5 * 0.7 * d.stiffness().bilinear(u.coefficients(), u.coefficients()).unwrap();
        assert!((e - quad).abs() < 1e-14);
    }

    #[test]
    fn insufficient_quadrature_is_rejected() {
        let p = builtin_problem("lane_emden").unwrap();
        let mesh = create_square_mesh([0.0, 0.0], [1.0, 1.0], 2).unwrap();
        let err = Discretization::with_rule(
            Arc::new(p),
            FeSpace::new(Arc::new(mesh)),
            QuadratureRule::with_degree(2),
        )
        .unwrap_err();
        assert!(matches!(err, LmmgError::Configuration(_)));
    }

    #[test]
    fn directional_derivative_matches_central_difference() {
        for name in ["lane_emden", "henon_perturbed"] {
            let d = disc(name, 4);
            let s = d.space().clone();
            let u = nodal_interpolant(&s, |x| 3.0 * x[0] * (1.0 - x[0]) + x[1]);
            let v = nodal_interpolant(&s, |x| (2.0 * x[0] - x[1]).cos());
            let r = d.residual_vector(&u).unwrap();
            let exact = dot(&r, v.coefficients());
            let h = 1e-5;
            let fd = (d.energy(&u.axpy(h, &v).unwrap()).unwrap()
                - d.energy(&u.axpy(-h, &v).unwrap()).unwrap())
                / (2.0 * h);
            assert!(((exact - fd) / exact).abs() < 1e-6, "{name}: {exact} vs {fd}");
        }
    }

    #[test]
    fn linear_galerkin_solution_has_zero_residual() {
        // -ε Δu + u = g with g fixed, posed as f(x, t) = g(x)
        let g = |x: [f64; 2]| 1.0 + x[0] * x[1];
        let nl = ClosureNonlinearity {
            f: Arc::new(move |x, _| g(x)),
            f_t: Arc::new(|_, _| 0.0),
            antiderivative: Arc::new(move |x, t| g(x) * t),
            degree: 4,
        };
        let p = SemilinearProblem::new("lin", 1e-2, 1.0, nl, Rectangle::unit()).unwrap();
        let mesh = create_square_mesh([0.0, 0.0], [1.0, 1.0], 6).unwrap();
        let d = Discretization::new(Arc::new(p), FeSpace::new(Arc::new(mesh))).unwrap();
        let n = d.space().num_dofs();
        // dense oracle: load vector from the residual at zero, matrix from the Gram matrix
        let zero = FeFunction::zeros(d.space().clone());
        let b: Vec<f64> = d.residual_vector(&zero).unwrap().iter().map(|x| -x).collect();
        let a = nalgebra::DMatrix::from_fn(n, n, |i, j| d.gram().get(i, j));
        let x = a.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        let u = FeFunction::from_coefficients(d.space().clone(), x.as_slice().to_vec()).unwrap();
        let r = d.discrete_residual(&u).unwrap();
        assert!(r.norm_eps < 1e-9, "{}", r.norm_eps);
    }

    #[test]
    fn residual_duality() {
        let d = disc("lane_emden", 8);
        let u = sine(d.space()).scaled(10.0);
        let r = d.discrete_residual(&u).unwrap();
        let rel = (r.dual_product() + r.norm_eps * r.norm_eps).abs() / (r.norm_eps * r.norm_eps);
        assert!(rel < 1e-10, "{rel}");
    }

    #[test]
    fn normalized_sine_has_unit_norm() {
        let d = disc("henon_perturbed", 8);
        let s = sine(d.space());
        let v = s.scaled(1.0 / d.eps_norm(&s).unwrap());
        assert!((d.eps_norm(&v).unwrap() - 1.0).abs() < 1e-12);
        let ip = d.eps_inner(&v, &v).unwrap();
        assert!((ip - d.eps_norm(&v).unwrap().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn lane_emden_ray_maximum() {
        let d = disc("lane_emden", 64);
        let s = sine(d.space());
        let v = s.scaled(1.0 / d.eps_norm(&s).unwrap());
        let ray = d.ray(&v).unwrap();
        let best = (1..4000).map(|k| ray.energy(k as f64 * 0.01)).fold(f64::MIN, f64::max);
        let exact = 4.0 * PI.powi(4) / 9.0;
        assert!(((best - exact) / exact).abs() < 0.02, "{best} vs {exact}");
    }

    #[test]
    fn scaling_identity() {
        let p = builtin_problem("lane_emden_perturbed").unwrap();
        let eps = p.epsilon;
        let mesh = create_square_mesh([0.0, 0.0], [1.0, 1.0], 4).unwrap();
        let d = Discretization::new(Arc::new(p), FeSpace::new(Arc::new(mesh))).unwrap();
        let v = nodal_interpolant(d.space(), |x| x[0] * x[1] + 0.3);
        let ray = d.ray(&v).unwrap();
        for &t in &[0.3, 1.7, 12.0] {
            let lhs = d.energy(&v.scaled(eps.sqrt() * t)).unwrap();
            let vals = d.values_at_quadrature(&v);
            let quartic: f64 = vals
                .iter()
                .zip(&d.quadrature().weights)
                .map(|(x, w)| w * 0.25 * (eps.sqrt() * t * x).powi(4))
                .sum();
            let rhs = eps * (0.5 * t * t * ray.triple_norm_sq() - quartic / eps);
            assert!(((lhs - rhs) / lhs).abs() < 1e-12);
        }
    }
}
