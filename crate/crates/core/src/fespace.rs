//! Piecewise linear finite elements with homogeneous Dirichlet conditions.

use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use crate::error::{LmmgError, Result};
use crate::mesh::{EdgeTable, ElementGeometry, Point, PointLocator, Triangulation, NONE};
use crate::quadrature::QuadratureRule;
use crate::sparse::CsrMatrix;

/// P1 space over a triangulation. Interior vertices carry the degrees of
/// freedom; boundary vertices are pinned to zero.
#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Triangulation>,
    dof_of_vertex: Vec<usize>,
    vertex_of_dof: Vec<usize>,
    geometry: Vec<ElementGeometry>,
    gradients: Vec<[[f64; 2]; 3]>,
    edges: EdgeTable,
    locator: OnceLock<PointLocator>,
}

impl FeSpace {
    pub fn new(mesh: Arc<Triangulation>) -> Arc<Self> {
        let free: Vec<bool> = mesh.boundary_flags().iter().map(|b| !b).collect();
        Arc::new(Self::build(mesh, &free))
    }

    /// Every vertex is a degree of freedom. Used to inspect element matrices
    /// and for tests that need boundary values.
    pub fn unconstrained(mesh: Arc<Triangulation>) -> Arc<Self> {
        let free = vec![true; mesh.num_vertices()];
        Arc::new(Self::build(mesh, &free))
    }

    fn build(mesh: Arc<Triangulation>, free: &[bool]) -> Self {
        let mut dof_of_vertex = vec![NONE; mesh.num_vertices()];
        let mut vertex_of_dof = Vec::new();
        for (v, &f) in free.iter().enumerate() {
            if f {
                dof_of_vertex[v] = vertex_of_dof.len();
                vertex_of_dof.push(v);
            }
        }
        let geometry: Vec<ElementGeometry> =
            (0..mesh.num_elements()).map(|e| mesh.element_geometry(e)).collect();
        let gradients = geometry.iter().map(ElementGeometry::barycentric_gradients).collect();
        let edges = mesh.edges();
        FeSpace {
            mesh,
            dof_of_vertex,
            vertex_of_dof,
            geometry,
            gradients,
            edges,
            locator: OnceLock::new(),
        }
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        self.vertex_of_dof.len()
    }

    pub fn num_elements(&self) -> usize {
        self.mesh.num_elements()
    }

    /// Degree of freedom of a vertex, `None` on the Dirichlet boundary.
    pub fn dof(&self, vertex: usize) -> Option<usize> {
        match self.dof_of_vertex[vertex] {
            NONE => None,
            d => Some(d),
        }
    }

    pub fn vertex_of_dof(&self, dof: usize) -> usize {
        self.vertex_of_dof[dof]
    }

    pub fn element_dofs(&self, element: usize) -> [usize; 3] {
        self.mesh.elements()[element].map(|v| self.dof_of_vertex[v])
    }

    pub fn geometry(&self, element: usize) -> &ElementGeometry {
        &self.geometry[element]
    }

    pub fn gradients(&self, element: usize) -> &[[f64; 2]; 3] {
        &self.gradients[element]
    }

    pub fn edges(&self) -> &EdgeTable {
        &self.edges
    }

    pub fn locator(&self) -> &PointLocator {
        self.locator.get_or_init(|| PointLocator::new(&self.mesh))
    }

    /// Expands a dof vector to one value per mesh vertex.
    pub fn expand(&self, coefficients: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.mesh.num_vertices()];
        for (d, &v) in self.vertex_of_dof.iter().enumerate() {
            full[v] = coefficients[d];
        }
        full
    }
}

/// Local stiffness matrix `∫ ∇λ_i · ∇λ_j`.
pub fn local_stiffness(geometry: &ElementGeometry) -> [[f64; 3]; 3] {
    let g = geometry.barycentric_gradients();
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = geometry.area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

/// Local mass matrix `∫ λ_i λ_j` (exact).
pub fn local_mass(geometry: &ElementGeometry) -> [[f64; 3]; 3] {
    let a = geometry.area / 12.0;
    let mut m = [[a; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 2.0 * a;
    }
    m
}

fn assemble_local<F>(space: &FeSpace, mut local: F) -> CsrMatrix
where
    F: FnMut(usize) -> [[f64; 3]; 3],
{
    let mut triplets = Vec::with_capacity(9 * space.num_elements());
    for e in 0..space.num_elements() {
        let dofs = space.element_dofs(e);
        let m = local(e);
        for i in 0..3 {
            if dofs[i] == NONE {
                continue;
            }
            for j in 0..3 {
                if dofs[j] != NONE {
                    triplets.push((dofs[i], dofs[j], m[i][j]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(space.num_dofs(), &triplets).expect("dof indices are in range")
}

/// `K_ij = ∫ ∇φ_i · ∇φ_j` over free basis functions.
pub fn assemble_stiffness(space: &FeSpace) -> CsrMatrix {
    assemble_local(space, |e| local_stiffness(space.geometry(e)))
}

/// `M_ij = ∫ weight φ_i φ_j`, integrated with `rule`.
pub fn assemble_mass<W>(space: &FeSpace, weight: W, rule: &QuadratureRule) -> CsrMatrix
where
    W: Fn(Point) -> f64,
{
    let mesh = space.mesh();
    assemble_local(space, |e| {
        let pts = mesh.element_points(e);
        let area = space.geometry(e).area;
        let mut m = [[0.0; 3]; 3];
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = map_point(&pts, b);
            let c = w * area * weight(x);
            if c == 0.0 {
                continue;
            }
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += c * b[i] * b[j];
                }
            }
        }
        m
    })
}

/// Gram matrix of the ε-inner product: `ε K + ν M`.
pub fn assemble_gram(space: &FeSpace, epsilon: f64, nu: f64) -> Result<CsrMatrix> {
    if !(epsilon > 0.0) || !(nu >= 0.0) {
        return Err(LmmgError::InvalidInput(format!(
            "need epsilon > 0 and nu >= 0, got {epsilon}, {nu}"
        )));
    }
    Ok(assemble_local(space, |e| {
        let g = space.geometry(e);
        let k = local_stiffness(g);
        let m = local_mass(g);
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = epsilon * k[i][j] + nu * m[i][j];
            }
        }
        out
    }))
}

pub(crate) fn map_point(pts: &[Point; 3], bary: &[f64; 3]) -> Point {
    [
        bary[0] * pts[0][0] + bary[1] * pts[1][0] + bary[2] * pts[2][0],
        bary[0] * pts[0][1] + bary[1] * pts[1][1] + bary[2] * pts[2][1],
    ]
}

/// A P1 function: nodal values at the free vertices of its space.
#[derive(Debug, Clone)]
pub struct FeFunction {
    space: Arc<FeSpace>,
    coefficients: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(space: Arc<FeSpace>) -> Self {
        let n = space.num_dofs();
        FeFunction { space, coefficients: vec![0.0; n] }
    }

    pub fn from_coefficients(space: Arc<FeSpace>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.num_dofs() {
            return Err(LmmgError::DimensionMismatch {
                expected: space.num_dofs(),
                found: coefficients.len(),
            });
        }
        Ok(FeFunction { space, coefficients })
    }

    /// Builds a function from one value per mesh vertex; boundary entries are
    /// dropped.
    pub fn from_nodal_values(space: Arc<FeSpace>, values: &[f64]) -> Result<Self> {
        if values.len() != space.mesh().num_vertices() {
            return Err(LmmgError::DimensionMismatch {
                expected: space.mesh().num_vertices(),
                found: values.len(),
            });
        }
        let coefficients = (0..space.num_dofs()).map(|d| values[space.vertex_of_dof(d)]).collect();
        Ok(FeFunction { space, coefficients })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        self.space.mesh()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    /// One value per mesh vertex, zero on the boundary.
    pub fn nodal_values(&self) -> Vec<f64> {
        self.space.expand(&self.coefficients)
    }

    pub fn same_space(&self, other: &FeFunction) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
    }

    fn check_space(&self, other: &FeFunction) -> Result<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(LmmgError::InvalidInput("functions live on different spaces".into()))
        }
    }

    pub fn scaled(&self, factor: f64) -> FeFunction {
        FeFunction {
            space: self.space.clone(),
            coefficients: self.coefficients.iter().map(|c| c * factor).collect(),
        }
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &FeFunction) -> Result<FeFunction> {
        self.check_space(other)?;
        Ok(FeFunction {
            space: self.space.clone(),
            coefficients: self
                .coefficients
                .iter()
                .zip(&other.coefficients)
                .map(|(a, b)| a + factor * b)
                .collect(),
        })
    }

    /// Constant gradient on an element.
    pub fn element_gradient(&self, element: usize, nodal: &[f64]) -> [f64; 2] {
        let g = self.space.gradients(element);
        let tri = self.space.mesh().elements()[element];
        let mut out = [0.0; 2];
        for i in 0..3 {
            let u = nodal[tri[i]];
            out[0] += u * g[i][0];
            out[1] += u * g[i][1];
        }
        out
    }

    /// Value at an arbitrary point by barycentric interpolation.
    pub fn evaluate(&self, point: Point) -> Result<f64> {
        let mesh = self.space.mesh();
        let (e, bary) = self
            .space
            .locator()
            .locate(mesh, point)
            .ok_or_else(|| LmmgError::InvalidInput(format!("point {point:?} outside the domain")))?;
        let tri = mesh.elements()[e];
        let mut value = 0.0;
        for i in 0..3 {
            if let Some(d) = self.space.dof(tri[i]) {
                value += bary[i] * self.coefficients[d];
            }
        }
        Ok(value)
    }

    /// Vertex with the largest value of `|u|`, with that value.
    pub fn argmax_abs(&self) -> (Point, f64) {
        let nodal = self.nodal_values();
        let (v, val) = nodal
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, v)| (i, *v))
            .unwrap_or((0, 0.0));
        (self.space.mesh().vertices()[v], val)
    }
}

/// Nodal interpolant of `g`; boundary values are forced to zero.
pub fn nodal_interpolant<G>(space: &Arc<FeSpace>, g: G) -> FeFunction
where
    G: Fn(Point) -> f64,
{
    let vertices = space.mesh().vertices();
    let coefficients = (0..space.num_dofs()).map(|d| g(vertices[space.vertex_of_dof(d)])).collect();
    FeFunction { space: space.clone(), coefficients }
}

/// Interpolates a function living on another mesh of the same domain.
pub fn interpolate_function(u: &FeFunction, target: &Arc<FeSpace>) -> Result<FeFunction> {
    let vertices = target.mesh().vertices();
    let mut coefficients = Vec::with_capacity(target.num_dofs());
    for d in 0..target.num_dofs() {
        coefficients.push(u.evaluate(vertices[target.vertex_of_dof(d)])?);
    }
    Ok(FeFunction { space: target.clone(), coefficients })
}

/// Transfers `u` to the space of a mesh obtained by one refinement of its
/// mesh. The result is the same piecewise linear function.
pub fn prolongate(u: &FeFunction, child: &Arc<FeSpace>) -> Result<FeFunction> {
    let parent_mesh = u.space().mesh();
    let child_mesh = child.mesh();
    if !child_mesh.is_child_of(parent_mesh) {
        return Err(LmmgError::InvalidInput(
            "target mesh is not a refinement of the function's mesh".into(),
        ));
    }
    let mut nodal = u.nodal_values();
    nodal.resize(child_mesh.num_vertices(), 0.0);
    // midpoints are appended in creation order and only reference older vertices
    for v in parent_mesh.num_vertices()..child_mesh.num_vertices() {
        let [a, b] = child_mesh
            .vertex_parents(v)
            .expect("new vertices record their parent edge");
        nodal[v] = 0.5 * (nodal[a] + nodal[b]);
    }
    FeFunction::from_nodal_values(child.clone(), &nodal)
}

/// `∫_Ω g dx` with the given rule.
pub fn integrate<G>(space: &FeSpace, rule: &QuadratureRule, g: G) -> f64
where
    G: Fn(Point) -> f64,
{
    let mesh = space.mesh();
    let mut total = 0.0;
    for e in 0..space.num_elements() {
        let pts = mesh.element_points(e);
        let area = space.geometry(e).area;
        let mut local = 0.0;
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            local += w * g(map_point(&pts, b));
        }
        total += area * local;
    }
    total
}

/// `∫_Ω g(x, u(x)) dx` for a finite element function `u`.
pub fn integrate_function<G>(u: &FeFunction, rule: &QuadratureRule, g: G) -> f64
where
    G: Fn(Point, f64) -> f64,
{
    let space = u.space();
    let mesh = space.mesh();
    let nodal = u.nodal_values();
    let mut total = 0.0;
    for e in 0..space.num_elements() {
        let tri = mesh.elements()[e];
        let pts = mesh.element_points(e);
        let vals = tri.map(|v| nodal[v]);
        let mut local = 0.0;
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let uq = b[0] * vals[0] + b[1] * vals[1] + b[2] * vals[2];
            local += w * g(map_point(&pts, b), uq);
        }
        total += space.geometry(e).area * local;
    }
    total
}

/// Element quadrature data cached for one space and rule.
#[derive(Debug, Clone)]
pub struct ElementQuadrature {
    rule: QuadratureRule,
    /// Physical points, `num_elements * rule.len()` entries.
    pub points: Vec<Point>,
    /// Physical weights `w_q |T|`.
    pub weights: Vec<f64>,
}

impl ElementQuadrature {
    pub fn new(space: &FeSpace, rule: QuadratureRule) -> Self {
        let nq = rule.len();
        let mesh = space.mesh();
        let mut points = Vec::with_capacity(space.num_elements() * nq);
        let mut weights = Vec::with_capacity(space.num_elements() * nq);
        for e in 0..space.num_elements() {
            let pts = mesh.element_points(e);
            let area = space.geometry(e).area;
            for (b, w) in rule.points.iter().zip(&rule.weights) {
                points.push(map_point(&pts, b));
                weights.push(w * area);
            }
        }
        ElementQuadrature { rule, points, weights }
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn points_per_element(&self) -> usize {
        self.rule.len()
    }

    /// Values of a function (given by its nodal vector) at every quadrature point.
    pub fn values(&self, space: &FeSpace, nodal: &[f64]) -> Vec<f64> {
        let nq = self.rule.len();
        let mut out = Vec::with_capacity(self.points.len());
        for tri in space.mesh().elements() {
            let vals = tri.map(|v| nodal[v]);
            for b in &self.rule.points {
                out.push(b[0] * vals[0] + b[1] * vals[1] + b[2] * vals[2]);
            }
        }
        debug_assert_eq!(out.len(), nq * space.num_elements());
        out
    }
}

/// Writes one nodal value per mesh vertex, one per line, in shortest
/// round-trip decimal form.
pub fn write_solution<W: Write>(u: &FeFunction, mut out: W) -> Result<()> {
    for v in u.nodal_values() {
        writeln!(out, "{v:?}")?;
    }
    Ok(())
}

/// Reads a solution file for the given space (one value per mesh vertex).
pub fn read_solution<R: BufRead>(space: &Arc<FeSpace>, input: R) -> Result<FeFunction> {
    let mut values = Vec::with_capacity(space.mesh().num_vertices());
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| LmmgError::Parse {
            line: i + 1,
            message: format!("bad coefficient `{t}`"),
        })?;
        values.push(v);
    }
    FeFunction::from_nodal_values(space.clone(), &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::create_square_mesh;

    fn reference_triangle() -> Arc<FeSpace> {
        let mesh = Triangulation::from_labeled(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![true; 3],
        )
        .unwrap();
        FeSpace::unconstrained(Arc::new(mesh))
    }

    fn unit_space(n: usize) -> Arc<FeSpace> {
        FeSpace::new(Arc::new(create_square_mesh([0.0, 0.0], [1.0, 1.0], n).unwrap()))
    }

    #[test]
    fn reference_stiffness() {
        let k = assemble_stiffness(&reference_triangle());
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k.get(i, j) - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reference_mass() {
        let rule = QuadratureRule::with_degree(2);
        let m = assemble_mass(&reference_triangle(), |_| 1.0, &rule);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 / 24.0 } else { 1.0 / 24.0 };
                assert!((m.get(i, j) - e).abs() < 1e-15);
            }
        }
        let z = assemble_mass(&reference_triangle(), |_| 0.0, &rule);
        assert!((0..3).all(|i| (0..3).all(|j| z.get(i, j) == 0.0)));
    }

    #[test]
    fn mass_sums_to_area() {
        let mesh = Arc::new(create_square_mesh([-1.0, -1.0], [1.0, 1.0], 4).unwrap());
        let space = FeSpace::unconstrained(mesh);
        let m = assemble_mass(&space, |_| 1.0, &QuadratureRule::with_degree(2));
        let total: f64 = (0..m.dim()).flat_map(|i| m.row(i).map(|(_, v)| v).collect::<Vec<_>>()).sum();
        assert!((total - 4.0).abs() < 1e-13);
    }

    #[test]
    fn element_stiffness_rows_sum_to_zero() {
        let mesh = create_square_mesh([0.0, 0.0], [2.0, 1.0], 3).unwrap().refine(&[1, 4]).unwrap();
        for e in 0..mesh.num_elements() {
            let k = local_stiffness(&mesh.element_geometry(e));
            for row in k {
                assert!(row.iter().sum::<f64>().abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sine_energy_converges() {
        let space = unit_space(64);
        let pi = std::f64::consts::PI;
        let v = nodal_interpolant(&space, |p| (pi * p[0]).sin() * (pi * p[1]).sin());
        let k = assemble_stiffness(&space);
        let e = k.bilinear(v.coefficients(), v.coefficients()).unwrap();
        let exact = pi * pi / 2.0;
        assert!(((e - exact) / exact).abs() < 5e-3, "{e} vs {exact}");
    }

    #[test]
    fn gram_is_linear_combination() {
        let space = unit_space(4);
        let k = assemble_stiffness(&space);
        let m = assemble_mass(&space, |_| 1.0, &QuadratureRule::with_degree(2));
        assert_eq!(assemble_gram(&space, 1.0, 0.0).unwrap(), k);
        let g = assemble_gram(&space, 1e-3, 1.0).unwrap();
        for i in 0..g.dim() {
            for (j, v) in g.row(i) {
                assert!((v - (1e-3 * k.get(i, j) + m.get(i, j))).abs() < 1e-15);
            }
        }
        assert!(assemble_gram(&space, 0.0, 1.0).is_err());
    }

    #[test]
    fn interpolant_reproduces_affine_functions() {
        let space = unit_space(4);
        let z = nodal_interpolant(&space, |_| 0.0);
        assert!(z.coefficients().iter().all(|&c| c == 0.0));
        let g = |p: Point| 0.3 + 2.0 * p[0] - p[1];
        let u = nodal_interpolant(&space, g);
        for d in 0..space.num_dofs() {
            let p = space.mesh().vertices()[space.vertex_of_dof(d)];
            assert_eq!(u.coefficients()[d], g(p));
        }
        // boundary forced to zero
        assert_eq!(u.evaluate([0.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn prolongation_of_identity_refinement() {
        let space = unit_space(4);
        let u = nodal_interpolant(&space, |p| p[0] * (1.0 - p[0]) * p[1]);
        let child = FeSpace::new(Arc::new(space.mesh().refine(&[]).unwrap()));
        let w = prolongate(&u, &child).unwrap();
        assert_eq!(w.coefficients(), u.coefficients());
    }

    #[test]
    fn prolongation_inserts_midpoint_averages() {
        let mesh = Arc::new(create_square_mesh([0.0, 0.0], [1.0, 1.0], 1).unwrap());
        let space = FeSpace::unconstrained(mesh.clone());
        let u = FeFunction::from_coefficients(space.clone(), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let child_mesh = Arc::new(mesh.refine_all().unwrap());
        let child = FeSpace::unconstrained(child_mesh.clone());
        let w = prolongate(&u, &child).unwrap();
        let nodal = w.nodal_values();
        for v in mesh.num_vertices()..child_mesh.num_vertices() {
            let [a, b] = child_mesh.vertex_parents(v).unwrap();
            assert_eq!(nodal[v], 0.5 * (nodal[a] + nodal[b]));
        }
    }

    #[test]
    fn prolongation_rejects_unrelated_meshes() {
        let a = unit_space(2);
        let b = unit_space(2);
        let u = FeFunction::zeros(a);
        assert!(prolongate(&u, &b).is_err());
    }

    #[test]
    fn integration_basics() {
        let space = unit_space(4);
        let rule = QuadratureRule::with_degree(2);
        assert!((integrate(&space, &rule, |_| 1.0) - 1.0).abs() < 1e-14);
        let u = nodal_interpolant(&space, |p| p[0] + 3.0 * p[1]);
        let mesh = space.mesh();
        for d in 0..space.num_dofs() {
            let v = space.vertex_of_dof(d);
            assert_eq!(u.evaluate(mesh.vertices()[v]).unwrap(), u.coefficients()[d]);
        }
        assert!(u.evaluate([2.0, 0.0]).is_err());
    }

    #[test]
    fn solution_file_round_trip() {
        let space = unit_space(4);
        let u = nodal_interpolant(&space, |p| (p[0] * 7.3).sin() / 3.0 + p[1]);
        let mut buf = Vec::new();
        write_solution(&u, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), space.mesh().num_vertices());
        let back = read_solution(&space, &buf[..]).unwrap();
        assert_eq!(back.coefficients(), u.coefficients());
    }
}
