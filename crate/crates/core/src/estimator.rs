//! Residual error indicators robust in ε, and Dörfler marking.

use crate::error::Result;
use crate::fespace::FeFunction;
use crate::galerkin::Discretization;
use crate::mesh::NONE;

/// Squared element indicators `η_T²`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub values: Vec<f64>,
}

impl IndicatorField {
    pub fn new(values: Vec<f64>) -> Self {
        IndicatorField { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_sq(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `η = (Σ η_T²)^{1/2}`.
    pub fn global(&self) -> f64 {
        self.total_sq().sqrt()
    }
}

/// `α_T = min(ν^{-1/2}, ε^{-1/2} h_T)`, or `ε^{-1/2} h_T` when `ν = 0`.
pub fn alpha(epsilon: f64, nu: f64, h: f64) -> f64 {
    let a = h / epsilon.sqrt();
    if nu > 0.0 {
        a.min(1.0 / nu.sqrt())
    } else {
        a
    }
}

/// `η_T² = α_T² ‖f(·,u) - q u‖²_T + ½ ε^{-1/2} α_T Σ_{e ⊂ ∂T interior} ‖⟦ε ∇u⟧‖²_e`.
///
/// For P1 functions `Δu` vanishes elementwise. With `oscillation` set the
/// volume term uses the local L²-projection of `f(·,u)` onto P1 and the
/// oscillation `α_T² ‖f - Π f‖²_T` is added; otherwise `f` is used as is
/// and there is no oscillation.
pub fn element_indicators(disc: &Discretization, u: &FeFunction, oscillation: bool) -> Result<IndicatorField> {
    let space = disc.space();
    let mesh = space.mesh();
    let problem = disc.problem();
    let (eps, nu) = (problem.epsilon, problem.nu);
    let quad = disc.quadrature();
    let bary = &quad.rule().points;
    let nq = bary.len();
    let vals = disc.values_at_quadrature(u);
    let nodal = u.nodal_values();
    let ne = space.num_elements();

    let alphas: Vec<f64> = (0..ne).map(|e| alpha(eps, nu, space.geometry(e).diameter)).collect();
    let mut eta = vec![0.0; ne];
    for e in 0..ne {
        let base = e * nq;
        let f: Vec<f64> = (0..nq).map(|k| problem.f(quad.points[base + k], vals[base + k])).collect();
        let mut volume = 0.0;
        if oscillation {
            let pf = local_projection(&f, &quad.weights[base..base + nq], bary, space.geometry(e).area);
            let mut osc = 0.0;
            for k in 0..nq {
                let b = bary[k];
                let proj = pf[0] * b[0] + pf[1] * b[1] + pf[2] * b[2];
                let r = proj - disc_q(disc, base + k) * vals[base + k];
                volume += quad.weights[base + k] * r * r;
                osc += quad.weights[base + k] * (f[k] - proj).powi(2);
            }
            volume += osc;
        } else {
            for k in 0..nq {
                let r = f[k] - disc_q(disc, base + k) * vals[base + k];
                volume += quad.weights[base + k] * r * r;
            }
        }
        eta[e] = alphas[e] * alphas[e] * volume;
    }

    let edges = space.edges();
    let grads: Vec<[f64; 2]> = (0..ne).map(|e| u.element_gradient(e, &nodal)).collect();
    let vertices = mesh.vertices();
    let scale = 0.5 / eps.sqrt();
    for (id, adj) in edges.elements.iter().enumerate() {
        if adj[1] == NONE {
            continue;
        }
        let [a, b] = edges.endpoints[id];
        let (pa, pb) = (vertices[a], vertices[b]);
        let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
        let n = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        let (g1, g2) = (grads[adj[0]], grads[adj[1]]);
        let jump = eps * ((g1[0] - g2[0]) * n[0] + (g1[1] - g2[1]) * n[1]);
        let edge_sq = jump * jump * len;
        for &t in adj {
            eta[t] += scale * alphas[t] * edge_sq;
        }
    }
    Ok(IndicatorField { values: eta })
}

#[inline]
fn disc_q(disc: &Discretization, i: usize) -> f64 {
    disc.problem().q(disc.quadrature().points[i])
}

/// Coefficients (in barycentric nodal form) of the L²(T) projection onto P1.
fn local_projection(f: &[f64], weights: &[f64], bary: &[[f64; 3]], area: f64) -> [f64; 3] {
    let mut rhs = nalgebra::Vector3::zeros();
    for k in 0..f.len() {
        for i in 0..3 {
            rhs[i] += weights[k] * f[k] * bary[k][i];
        }
    }
    let a = area / 12.0;
    let m = nalgebra::Matrix3::new(2.0 * a, a, a, a, 2.0 * a, a, a, a, 2.0 * a);
    let c = m.lu().solve(&rhs).unwrap_or_else(nalgebra::Vector3::zeros);
    [c[0], c[1], c[2]]
}

/// Minimal set of elements carrying a `θ` share of `Σ η_T²`: greedy by
/// decreasing `η_T²`, ties to the lower id. Returned ids are sorted.
pub fn dorfler_mark(field: &IndicatorField, theta: f64) -> Vec<usize> {
    let total = field.total_sq();
    if !(total > 0.0) {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..field.len()).collect();
    order.sort_by(|&a, &b| field.values[b].total_cmp(&field.values[a]).then(a.cmp(&b)));
    let target = theta * total;
    let mut sum = 0.0;
    let mut marked = Vec::new();
    for e in order {
        if sum >= target {
            break;
        }
        sum += field.values[e];
        marked.push(e);
    }
    marked.sort_unstable();
    marked
}
