//! Peak selection, the descent direction update and the step size rule of the
//! local minimax iteration.

use nalgebra::{DMatrix, DVector};

use crate::error::{LmmgError, Result};
use crate::fespace::{interpolate_function, prolongate, FeFunction};
use crate::galerkin::{DiscreteResidual, Discretization};
use crate::roots::{bracket_sign_change, newton_bisect};

/// Tuning knobs of the minimax iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxSettings {
    /// Step size control `λ`; trial steps are `λ / 2^m`.
    pub lambda: f64,
    /// Use the rescaled ray equation when `ε` is below this.
    pub scaled_threshold: f64,
    /// Iteration cap of the search over `L + t v`.
    pub nd_max_iter: usize,
    /// How far `m` may grow past its starting value.
    pub max_halvings: i32,
}

impl Default for MinimaxSettings {
    fn default() -> Self {
        MinimaxSettings { lambda: 0.5, scaled_threshold: 1e-4, nd_max_iter: 500, max_halvings: 60 }
    }
}

const RAY_LIMIT: f64 = 1e12;
const UNIT_TOL: f64 = 1e-8;

/// `L = span{w_1, ..., w_{n-1}}` with its ε-Gram matrix.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Vec<FeFunction>,
    gram: DMatrix<f64>,
}

impl Subspace {
    pub fn empty() -> Self {
        Subspace { basis: Vec::new(), gram: DMatrix::zeros(0, 0) }
    }

    /// Builds `L` on the discretization's space, ordering the basis by
    /// increasing energy. Fails if the basis is numerically dependent.
    pub fn new(disc: &Discretization, basis: Vec<FeFunction>) -> Result<Self> {
        let mut keyed = Vec::with_capacity(basis.len());
        for w in basis {
            keyed.push((disc.energy(&w)?, w));
        }
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
        let basis: Vec<FeFunction> = keyed.into_iter().map(|(_, w)| w).collect();
        let n = basis.len();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let g = disc.eps_inner(&basis[i], &basis[j])?;
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
        }
        if n > 0 {
            let max_diag = (0..n).map(|i| gram[(i, i)]).fold(0.0, f64::max);
            let chol = gram.clone().cholesky().ok_or_else(|| {
                LmmgError::InvalidInput("subspace basis is linearly dependent".into())
            })?;
            let min_pivot = (0..n).map(|i| chol.l()[(i, i)].powi(2)).fold(f64::INFINITY, f64::min);
            if !(min_pivot > 1e-12 * max_diag) {
                return Err(LmmgError::InvalidInput("subspace basis is linearly dependent".into()));
            }
        }
        Ok(Subspace { basis, gram })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &[FeFunction] {
        &self.basis
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Coefficients of the ε-orthogonal projection of `v` onto `L`.
    fn project_coefficients(&self, disc: &Discretization, v: &FeFunction) -> Result<DVector<f64>> {
        let mut b = DVector::zeros(self.dim());
        for (i, w) in self.basis.iter().enumerate() {
            b[i] = disc.eps_inner(w, v)?;
        }
        let chol = self.gram.clone().cholesky().expect("checked at construction");
        Ok(chol.solve(&b))
    }
}

/// Removes the `L` component of `v` in `(·,·)_ε` and normalizes.
pub fn project_unit_lperp(disc: &Discretization, l: &Subspace, v: &FeFunction) -> Result<FeFunction> {
    let scale = disc.eps_norm(v)?;
    let mut z = v.clone();
    // two passes of classical Gram-Schmidt keep the orthogonality at rounding level
    for _ in 0..if l.is_empty() { 0 } else { 2 } {
        let c = l.project_coefficients(disc, &z)?;
        for (ci, w) in c.iter().zip(l.basis()) {
            z = z.axpy(-ci, w)?;
        }
    }
    let norm = disc.eps_norm(&z)?;
    if !(norm >= 1e-12 * scale.max(1.0)) {
        return Err(LmmgError::DegenerateDirection { norm });
    }
    Ok(z.scaled(1.0 / norm))
}

/// Result of a peak selection: `w = Σ a_i w_i + t v`.
#[derive(Debug, Clone)]
pub struct PeakSelection {
    pub t: f64,
    pub coefficients: Vec<f64>,
    pub w: FeFunction,
    pub energy: f64,
}

fn check_unit(disc: &Discretization, v: &FeFunction) -> Result<()> {
    let n = disc.eps_norm(v)?;
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(LmmgError::InvalidInput(format!("direction must have unit ε-norm, got {n}")));
    }
    Ok(())
}

fn finish(disc: &Discretization, v: &FeFunction, t: f64) -> Result<PeakSelection> {
    if !(t > 0.0) {
        return Err(LmmgError::PeakSelection(format!("non-positive ray maximizer t = {t}")));
    }
    let w = v.scaled(t);
    let energy = disc.energy(&w)?;
    Ok(PeakSelection { t, coefficients: Vec::new(), w, energy })
}

/// Maximizer of `t ↦ E(t v)` for `L = {0}`: the positive root of
/// `g_v'(t) = t⦀v⦀² - ∫f(x, t v) v`.
pub fn peak_select_1d(disc: &Discretization, v: &FeFunction) -> Result<PeakSelection> {
    check_unit(disc, v)?;
    let t = ray_root(disc, v)?;
    finish(disc, v, t)
}

fn ray_root(disc: &Discretization, v: &FeFunction) -> Result<f64> {
    let ray = disc.ray(v)?;
    let tri = ray.triple_norm_sq();
    let (lo, hi) = bracket_sign_change(|t| ray.derivative(t), 1.0, RAY_LIMIT)?;
    newton_bisect(
        |t| (ray.derivative(t), ray.second_derivative(t)),
        lo,
        hi,
        hi,
        |t, g| g.abs() <= 1e-10 * tri * t,
        200,
    )
}

/// Same maximizer, found from the rescaled equation
/// `τ⦀v⦀² - ε^{-1/2}∫f(x, √ε τ v) v = 0` with `t = √ε τ`.
pub fn peak_select_scaled(disc: &Discretization, v: &FeFunction) -> Result<PeakSelection> {
    check_unit(disc, v)?;
    let ray = disc.ray(v)?;
    let tri = ray.triple_norm_sq();
    let (lo, hi) = bracket_sign_change(|tau| ray.scaled_derivative(tau), 1.0, RAY_LIMIT)?;
    let tau = newton_bisect(
        |tau| (ray.scaled_derivative(tau), ray.scaled_second_derivative(tau)),
        lo,
        hi,
        hi,
        |tau, g| g.abs() <= 1e-10 * tri * tau,
        200,
    )?;
    finish(disc, v, disc.problem().epsilon.sqrt() * tau)
}

/// A smooth function on coefficient space `c ∈ R^n`, maximized over
/// `c_{n-1} ≥ t_floor`.
pub trait SpanFunctional {
    fn dim(&self) -> usize;
    fn value(&self, c: &[f64]) -> f64;
    fn gradient(&self, c: &[f64]) -> DVector<f64>;
    fn hessian(&self, c: &[f64]) -> DMatrix<f64>;
    /// SPD metric used to precondition gradient steps and to measure
    /// directional derivatives along unit directions.
    fn metric(&self) -> &DMatrix<f64>;
}

/// `c ↦ E(Σ c_j b_j)` with basis values cached at quadrature points.
pub struct SpanEnergy<'a> {
    disc: &'a Discretization,
    values: Vec<Vec<f64>>,
    quadratic: DMatrix<f64>,
    metric: DMatrix<f64>,
}

impl<'a> SpanEnergy<'a> {
    pub fn new(disc: &'a Discretization, basis: &[&FeFunction]) -> Result<Self> {
        let n = basis.len();
        let mut quadratic = DMatrix::zeros(n, n);
        let mut metric = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let q = disc.triple_inner(basis[i], basis[j])?;
                quadratic[(i, j)] = q;
                quadratic[(j, i)] = q;
                let m = disc.eps_inner(basis[i], basis[j])?;
                metric[(i, j)] = m;
                metric[(j, i)] = m;
            }
        }
        let values = basis.iter().map(|b| disc.values_at_quadrature(b)).collect();
        Ok(SpanEnergy { disc, values, quadratic, metric })
    }

    fn combine(&self, c: &[f64], q: usize) -> f64 {
        let mut u = 0.0;
        for (cj, vals) in c.iter().zip(&self.values) {
            u += cj * vals[q];
        }
        u
    }
}

impl SpanFunctional for SpanEnergy<'_> {
    fn dim(&self) -> usize {
        self.values.len()
    }

    fn value(&self, c: &[f64]) -> f64 {
        let cv = DVector::from_column_slice(c);
        let quad = self.disc.quadrature();
        let p = self.disc.problem();
        let mut potential = 0.0;
        for q in 0..quad.points.len() {
            potential += quad.weights[q] * p.big_f(quad.points[q], self.combine(c, q));
        }
        0.5 * cv.dot(&(&self.quadratic * &cv)) - potential
    }

    fn gradient(&self, c: &[f64]) -> DVector<f64> {
        let cv = DVector::from_column_slice(c);
        let mut g = &self.quadratic * &cv;
        let quad = self.disc.quadrature();
        let p = self.disc.problem();
        for q in 0..quad.points.len() {
            let f = quad.weights[q] * p.f(quad.points[q], self.combine(c, q));
            for j in 0..c.len() {
                g[j] -= f * self.values[j][q];
            }
        }
        g
    }

    fn hessian(&self, c: &[f64]) -> DMatrix<f64> {
        let n = c.len();
        let mut h = self.quadratic.clone();
        let quad = self.disc.quadrature();
        let p = self.disc.problem();
        for q in 0..quad.points.len() {
            let ft = quad.weights[q] * p.f_t(quad.points[q], self.combine(c, q));
            for j in 0..n {
                for k in 0..n {
                    h[(j, k)] -= ft * self.values[j][q] * self.values[k][q];
                }
            }
        }
        h
    }

    fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }
}

/// Largest directional derivative along metric-unit coordinate directions,
/// ignoring the last coordinate when it sits on its bound and points out.
fn projected_slope(g: &DVector<f64>, metric: &DMatrix<f64>, pinned: bool) -> f64 {
    let n = g.len();
    (0..n)
        .filter(|&j| !(pinned && j == n - 1 && g[j] < 0.0))
        .map(|j| g[j].abs() / metric[(j, j)].sqrt())
        .fold(0.0, f64::max)
}

/// Local maximizer of `s` over `{c : c_{n-1} ≥ t_floor}` from `start`.
///
/// Newton ascent is used where the Hessian is negative definite; elsewhere
/// the step is the metric gradient. Every step is backtracked until the
/// value increases (Armijo) and projected onto the bound. Returns an error
/// if the maximizer sits on the bound.
pub fn maximize_over_span<S: SpanFunctional>(
    s: &S,
    start: &[f64],
    t_floor: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = s.dim();
    if start.len() != n || n == 0 {
        return Err(LmmgError::DimensionMismatch { expected: n, found: start.len() });
    }
    let metric = s.metric();
    let mut c = start.to_vec();
    c[n - 1] = c[n - 1].max(t_floor);
    let mut value = s.value(&c);
    let mut g = s.gradient(&c);
    for _ in 0..max_iter {
        let pinned = c[n - 1] <= t_floor;
        let slope = projected_slope(&g, metric, pinned);
        if slope <= tol {
            if pinned && g[n - 1] < 0.0 {
                return Err(LmmgError::BoundaryDegeneracy { t: c[n - 1] });
            }
            return Ok(c);
        }
        // free coordinates: all, or all but t when pinned and pushing outwards
        let free: Vec<usize> = (0..n).filter(|&j| !(pinned && j == n - 1 && g[j] < 0.0)).collect();
        let m = free.len();
        let gf = DVector::from_iterator(m, free.iter().map(|&j| g[j]));
        let h = s.hessian(&c);
        let neg_h = DMatrix::from_fn(m, m, |a, b| -h[(free[a], free[b])]);
        let (dir, newton) = match neg_h.cholesky() {
            Some(ch) => (ch.solve(&gf), true),
            None => {
                let mf = DMatrix::from_fn(m, m, |a, b| metric[(free[a], free[b])]);
                let ch = mf.cholesky().ok_or_else(|| {
                    LmmgError::PeakSelection("metric of the span is not positive definite".into())
                })?;
                (ch.solve(&gf), false)
            }
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = c.clone();
            for (a, &j) in free.iter().enumerate() {
                trial[j] += alpha * dir[a];
            }
            trial[n - 1] = trial[n - 1].max(t_floor);
            let tv = s.value(&trial);
            let predicted: f64 = (0..n).map(|j| g[j] * (trial[j] - c[j])).sum();
            let tg = s.gradient(&trial);
            let armijo = tv >= value + 1e-4 * predicted && tv >= value;
            // near the optimum value differences drown in rounding; accept
            // Newton steps that shrink the gradient
            let shrinks = newton && projected_slope(&tg, metric, trial[n - 1] <= t_floor) < 0.5 * slope;
            if armijo || shrinks {
                c = trial;
                value = tv;
                g = tg;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(LmmgError::PeakSelection(format!(
                "line search stalled with directional derivative {slope:.3e}"
            )));
        }
    }
    Err(LmmgError::PeakSelection(format!("no convergence in {max_iter} iterations")))
}

/// Local maximizer of `(a, t) ↦ E(Σ a_i w_i + t v)` over `t ≥ t_floor`.
///
/// `warm` is a previous `(a, t)`; without it the search starts from `a = 0`
/// and the ray maximizer along `v`.
pub fn peak_select_nd(
    disc: &Discretization,
    l: &Subspace,
    v: &FeFunction,
    warm: Option<&[f64]>,
    max_iter: usize,
) -> Result<PeakSelection> {
    check_unit(disc, v)?;
    if l.is_empty() {
        return peak_select_1d(disc, v);
    }
    let n = l.dim() + 1;
    let start = match warm {
        Some(c) if c.len() == n => c.to_vec(),
        _ => {
            let mut c = vec![0.0; n];
            c[n - 1] = ray_root(disc, v)?;
            c
        }
    };
    let mut basis: Vec<&FeFunction> = l.basis().iter().collect();
    basis.push(v);
    let span = SpanEnergy::new(disc, &basis)?;
    let t_floor = 1e-8 * disc.problem().domain.diameter();
    // scale-aware tolerance on unit directional derivatives
    let size = {
        let cv = DVector::from_column_slice(&start);
        cv.dot(&(span.metric() * &cv)).sqrt()
    };
    let c = maximize_over_span(&span, &start, t_floor, 1e-8 * size.max(1.0), max_iter)?;
    let mut w = v.scaled(c[n - 1]);
    for (ai, wi) in c.iter().zip(l.basis()) {
        w = w.axpy(*ai, wi)?;
    }
    let energy = disc.energy(&w)?;
    Ok(PeakSelection { t: c[n - 1], coefficients: c[..n - 1].to_vec(), w, energy })
}

/// Dispatches to the 1-D, rescaled or constrained search.
pub fn peak_select(
    disc: &Discretization,
    l: &Subspace,
    v: &FeFunction,
    settings: &MinimaxSettings,
    warm: Option<&[f64]>,
) -> Result<PeakSelection> {
    if !l.is_empty() {
        peak_select_nd(disc, l, v, warm, settings.nd_max_iter)
    } else if disc.problem().epsilon < settings.scaled_threshold {
        peak_select_scaled(disc, v)
    } else {
        peak_select_1d(disc, v)
    }
}

/// Current direction `v` and iterate `w = p(v)`.
#[derive(Debug, Clone)]
pub struct MinimaxState {
    pub v: FeFunction,
    pub w: FeFunction,
    pub t: f64,
    /// Coefficients of `w` along the basis of `L`.
    pub coefficients: Vec<f64>,
    pub energy: f64,
    pub k: usize,
}

impl MinimaxState {
    /// Projects `v0` onto the unit sphere of `L^⊥` and peak-selects.
    pub fn new(disc: &Discretization, l: &Subspace, v0: &FeFunction, settings: &MinimaxSettings) -> Result<Self> {
        let v = project_unit_lperp(disc, l, v0)?;
        let sel = peak_select(disc, l, &v, settings, None)?;
        Ok(Self::from_selection(v, sel, 0))
    }

    fn from_selection(v: FeFunction, sel: PeakSelection, k: usize) -> Self {
        MinimaxState { v, w: sel.w, t: sel.t, coefficients: sel.coefficients, energy: sel.energy, k }
    }

    fn warm(&self) -> Vec<f64> {
        let mut c = self.coefficients.clone();
        c.push(self.t);
        c
    }

    /// Moves the direction to a new (refined) space, re-projects it and
    /// peak-selects there. The step counter restarts.
    pub fn transfer(&self, disc: &Discretization, l: &Subspace, settings: &MinimaxSettings) -> Result<Self> {
        let space = disc.space();
        let v = if space.mesh().is_child_of(self.v.mesh()) {
            prolongate(&self.v, space)?
        } else {
            interpolate_function(&self.v, space)?
        };
        let v = project_unit_lperp(disc, l, &v)?;
        let warm = self.warm();
        let sel = peak_select(disc, l, &v, settings, Some(&warm))?;
        Ok(Self::from_selection(v, sel, 0))
    }
}

/// Accepted step of the step size rule.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub s: f64,
    pub m: i32,
    pub v: FeFunction,
    pub selection: PeakSelection,
}

/// Smallest integer `m` with `2^m > x`.
pub fn initial_exponent(x: f64) -> i32 {
    let mut m = x.log2().floor() as i32 + 1;
    // guard the float log near powers of two
    while 2f64.powi(m - 1) > x {
        m -= 1;
    }
    while 2f64.powi(m) <= x {
        m += 1;
    }
    m
}

/// Tries `s = λ / 2^m` for `m = m_0, m_0 + 1, ...` until
/// `E(p(v(s))) - E(w) ≤ -t ‖d‖_ε ‖v(s) - v‖_ε / 2`, with
/// `v(s)` the unit `L^⊥` projection of `v + s d`.
pub fn step_size(
    disc: &Discretization,
    l: &Subspace,
    state: &MinimaxState,
    d: &FeFunction,
    d_norm: f64,
    settings: &MinimaxSettings,
) -> Result<StepOutcome> {
    if !(d_norm > 0.0) {
        return Err(LmmgError::InvalidInput("step size needs a nonzero descent direction".into()));
    }
    let m0 = initial_exponent(d_norm);
    let warm = state.warm();
    for m in m0..=m0 + settings.max_halvings {
        let s = settings.lambda * 2f64.powi(-m);
        let v_new = match project_unit_lperp(disc, l, &state.v.axpy(s, d)?) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let sel = match peak_select(disc, l, &v_new, settings, Some(&warm)) {
            Ok(sel) => sel,
            Err(e) => {
                log::debug!("trial step m = {m} rejected: {e}");
                continue;
            }
        };
        let moved = disc.eps_norm(&v_new.axpy(-1.0, &state.v)?)?;
        let bound = -0.5 * state.t * d_norm * moved;
        let drop = sel.energy - state.energy;
        if drop <= bound && drop < 0.0 {
            return Ok(StepOutcome { s, m, v: v_new, selection: sel });
        }
    }
    Err(LmmgError::StepFailure { m: m0 + settings.max_halvings })
}

/// Diagnostics of one minimax step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// `‖R_N(w)‖_ε` at the iterate the step started from.
    pub res_norm: f64,
    /// `⟨E'(w), d⟩` for the same iterate.
    pub dual_product: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    pub m: i32,
    pub s: f64,
    pub t: f64,
}

/// One step of the local minimax iteration with a precomputed residual.
pub fn minimax_step_with(
    disc: &Discretization,
    l: &Subspace,
    state: &MinimaxState,
    residual: &DiscreteResidual,
    settings: &MinimaxSettings,
) -> Result<(MinimaxState, StepDiagnostics)> {
    let out = step_size(disc, l, state, &residual.d, residual.norm_eps, settings)?;
    let diag = StepDiagnostics {
        res_norm: residual.norm_eps,
        dual_product: residual.dual_product(),
        energy_before: state.energy,
        energy_after: out.selection.energy,
        m: out.m,
        s: out.s,
        t: state.t,
    };
    Ok((MinimaxState::from_selection(out.v, out.selection, state.k + 1), diag))
}

/// Steepest descent direction, step size rule and peak selection.
pub fn minimax_step(
    disc: &Discretization,
    l: &Subspace,
    state: &MinimaxState,
    settings: &MinimaxSettings,
) -> Result<(MinimaxState, StepDiagnostics)> {
    let residual = disc.discrete_residual(&state.w)?;
    minimax_step_with(disc, l, state, &residual, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{nodal_interpolant, FeSpace};
    use crate::mesh::create_square_mesh;
    use crate::problem::builtin_problem;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn disc(name: &str, divisions: usize) -> Discretization {
        let p = builtin_problem(name).unwrap();
        let mesh = create_square_mesh(p.domain.lo, p.domain.hi, divisions).unwrap();
        Discretization::new(Arc::new(p), FeSpace::new(Arc::new(mesh))).unwrap()
    }

    fn unit_sine(d: &Discretization) -> FeFunction {
        let lo = d.problem().domain.lo;
        let (w, h) = (d.problem().domain.width(), d.problem().domain.height());
        let s = nodal_interpolant(d.space(), |x| {
            (PI * (x[0] - lo[0]) / w).sin() * (PI * (x[1] - lo[1]) / h).sin()
        });
        s.scaled(1.0 / d.eps_norm(&s).unwrap())
    }

    #[test]
    fn exponent_rule() {
        assert_eq!(initial_exponent(3.0), 2);
        assert_eq!(initial_exponent(0.9), 0);
        assert_eq!(initial_exponent(4.0), 3);
        assert_eq!(initial_exponent(0.25), -1);
        assert_eq!(initial_exponent(0.2), -2);
    }

    #[test]
    fn projection_without_subspace_normalizes() {
        let d = disc("lane_emden", 4);
        let v = unit_sine(&d).scaled(3.0);
        let p = project_unit_lperp(&d, &Subspace::empty(), &v).unwrap();
        for (a, b) in p.coefficients().iter().zip(v.coefficients()) {
            assert!((a - b / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_removes_subspace_component() {
        let d = disc("henon_perturbed", 6);
        let s = d.space().clone();
        let w1 = nodal_interpolant(&s, |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]) * 16.0);
        let raw = nodal_interpolant(&s, |x| (2.0 * PI * x[0]).sin() * (PI * x[1]).sin());
        let l = Subspace::new(&d, vec![w1.clone()]).unwrap();
        // z ⊥ w1 by construction, then v = w1 + z
        let c = d.eps_inner(&raw, &w1).unwrap() / d.eps_inner(&w1, &w1).unwrap();
        let z = raw.axpy(-c, &w1).unwrap();
        let v = w1.axpy(1.0, &z).unwrap();
        let p = project_unit_lperp(&d, &l, &v).unwrap();
        let zn = d.eps_norm(&z).unwrap();
        for (a, b) in p.coefficients().iter().zip(z.coefficients()) {
            assert!((a - b / zn).abs() < 1e-12);
        }
        // idempotence
        let again = project_unit_lperp(&d, &l, &p).unwrap();
        for (a, b) in again.coefficients().iter().zip(p.coefficients()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            project_unit_lperp(&d, &l, &w1.scaled(2.0)),
            Err(LmmgError::DegenerateDirection { .. })
        ));
    }

    #[test]
    fn cubic_closed_form() {
        let d = disc("lane_emden", 8);
        let v = nodal_interpolant(d.space(), |x| x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1]) + 0.1 * x[0]);
        let v = v.scaled(1.0 / d.eps_norm(&v).unwrap());
        let sel = peak_select_1d(&d, &v).unwrap();
        let ray = d.ray(&v).unwrap();
        let v4: f64 = d
            .values_at_quadrature(&v)
            .iter()
            .zip(&d.quadrature().weights)
            .map(|(x, w)| w * x.powi(4))
            .sum();
        let exact = (ray.triple_norm_sq() / v4).sqrt();
        assert!(((sel.t - exact) / exact).abs() < 1e-9);
        assert!(sel.energy > 0.0);
    }

    #[test]
    fn rejects_non_unit_direction() {
        let d = disc("lane_emden", 4);
        let v = unit_sine(&d).scaled(2.0);
        assert!(matches!(peak_select_1d(&d, &v), Err(LmmgError::InvalidInput(_))));
    }

    #[test]
    fn scaled_variant_agrees() {
        let d = disc("lane_emden", 8);
        let v = unit_sine(&d);
        let a = peak_select_1d(&d, &v).unwrap();
        let b = peak_select_scaled(&d, &v).unwrap();
        assert!((a.t - b.t).abs() <= 1e-10 * a.t);

        let d = disc("lane_emden_perturbed", 8);
        let v = unit_sine(&d);
        let a = peak_select_1d(&d, &v).unwrap();
        let b = peak_select_scaled(&d, &v).unwrap();
        assert!((a.t - b.t).abs() <= 1e-9 * a.t);
        let r = d.residual_vector(&b.w).unwrap();
        let along = crate::sparse::dot(&r, v.coefficients());
        assert!(along.abs() <= 1e-8 * d.eps_norm(&b.w).unwrap());
    }

    #[test]
    fn nd_without_subspace_is_1d() {
        let d = disc("lane_emden", 4);
        let v = unit_sine(&d);
        let a = peak_select_nd(&d, &Subspace::empty(), &v, None, 500).unwrap();
        let b = peak_select_1d(&d, &v).unwrap();
        assert_eq!(a.t, b.t);
    }

    struct Quadratic {
        b: DMatrix<f64>,
        z: DVector<f64>,
    }

    impl SpanFunctional for Quadratic {
        fn dim(&self) -> usize {
            self.z.len()
        }
        fn value(&self, c: &[f64]) -> f64 {
            let e = DVector::from_column_slice(c) - &self.z;
            -e.dot(&(&self.b * &e))
        }
        fn gradient(&self, c: &[f64]) -> DVector<f64> {
            let e = DVector::from_column_slice(c) - &self.z;
            -2.0 * (&self.b * e)
        }
        fn hessian(&self, _: &[f64]) -> DMatrix<f64> {
            -2.0 * &self.b
        }
        fn metric(&self) -> &DMatrix<f64> {
            &self.b
        }
    }

    #[test]
    fn quadratic_surrogate() {
        // E(u) = -‖u - z‖²_ε on span{w1, v}, z = 0.3 w1 + 0.7 v
        let d = disc("henon_perturbed", 6);
        let s = d.space().clone();
        let w1 = nodal_interpolant(&s, |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]) * 16.0);
        let l = Subspace::new(&d, vec![w1.clone()]).unwrap();
        let v = project_unit_lperp(&d, &l, &nodal_interpolant(&s, |x| (PI * x[0]).sin() * x[1])).unwrap();
        let mut b = DMatrix::zeros(2, 2);
        let basis = [&w1, &v];
        for i in 0..2 {
            for j in 0..2 {
                b[(i, j)] = d.eps_inner(basis[i], basis[j]).unwrap();
            }
        }
        let q = Quadratic { b, z: DVector::from_vec(vec![0.3, 0.7]) };
        let c = maximize_over_span(&q, &[0.0, 1.0], 1e-8, 1e-12, 500).unwrap();
        assert!((c[0] - 0.3).abs() < 1e-12 && (c[1] - 0.7).abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn bound_maximizer_is_reported() {
        let q = Quadratic { b: DMatrix::identity(2, 2), z: DVector::from_vec(vec![0.3, -0.7]) };
        assert!(matches!(
            maximize_over_span(&q, &[0.0, 1.0], 1e-8, 1e-12, 500),
            Err(LmmgError::BoundaryDegeneracy { .. })
        ));
    }

    #[test]
    fn one_step_decreases_energy() {
        let d = disc("lane_emden", 4);
        let settings = MinimaxSettings::default();
        let state = MinimaxState::new(&d, &Subspace::empty(), &unit_sine(&d), &settings).unwrap();
        let (next, diag) = minimax_step(&d, &Subspace::empty(), &state, &settings).unwrap();
        assert!(next.energy < state.energy);
        assert_eq!(next.k, 1);
        assert_eq!(diag.energy_before, state.energy);
        assert!(diag.energy_after - diag.energy_before
            <= -0.5 * state.t * diag.res_norm * d.eps_norm(&next.v.axpy(-1.0, &state.v).unwrap()).unwrap());
        let r = d.discrete_residual(&state.w).unwrap();
        assert_eq!(diag.res_norm, d.eps_norm(&r.d).unwrap());
        assert!((d.eps_norm(&next.v).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_direction_is_rejected() {
        let d = disc("lane_emden", 4);
        let settings = MinimaxSettings::default();
        let state = MinimaxState::new(&d, &Subspace::empty(), &unit_sine(&d), &settings).unwrap();
        let z = FeFunction::zeros(d.space().clone());
        assert!(step_size(&d, &Subspace::empty(), &state, &z, 0.0, &settings).is_err());
    }
}
