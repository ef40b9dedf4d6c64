//! Conforming triangulations of rectangles with newest vertex bisection.
//!
//! Every element is stored as `[apex, b, c]` in counter-clockwise order. The
//! apex is the newest vertex and `(b, c)` is the refinement edge. Bisection
//! inserts the midpoint `m` of `(b, c)` and produces the children
//! `[m, apex, b]` and `[m, c, apex]`, whose refinement edges are the two old
//! edges of the parent.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{LmmgError, Result};

pub type Point = [f64; 2];

/// Marker for "no element" in edge adjacency tables.
pub const NONE: usize = usize::MAX;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed)
}

/// Axis-aligned rectangle `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub lo: Point,
    pub hi: Point,
}

impl Rectangle {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        if !(lo[0] < hi[0] && lo[1] < hi[1]) || !lo.iter().chain(hi.iter()).all(|c| c.is_finite()) {
            return Err(LmmgError::InvalidInput(format!(
                "degenerate rectangle {lo:?} .. {hi:?}"
            )));
        }
        Ok(Rectangle { lo, hi })
    }

    /// The unit square `(0,1)^2`.
    pub fn unit() -> Self {
        Rectangle { lo: [0.0, 0.0], hi: [1.0, 1.0] }
    }

    /// The square `(-1,1)^2`.
    pub fn symmetric() -> Self {
        Rectangle { lo: [-1.0, -1.0], hi: [1.0, 1.0] }
    }

    pub fn width(&self) -> f64 {
        self.hi[0] - self.lo[0]
    }

    pub fn height(&self) -> f64 {
        self.hi[1] - self.lo[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

/// Geometric data of a single triangle. Edge `i` is opposite local vertex `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub diameter: f64,
    pub area: f64,
    pub edge_lengths: [f64; 3],
    pub normals: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(p: [Point; 3]) -> Self {
        let area = signed_area(p[0], p[1], p[2]);
        let mut edge_lengths = [0.0; 3];
        let mut normals = [[0.0; 2]; 3];
        for i in 0..3 {
            let a = p[(i + 1) % 3];
            let b = p[(i + 2) % 3];
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            edge_lengths[i] = len;
            // outward for counter-clockwise ordering
            normals[i] = [dy / len, -dx / len];
        }
        let diameter = edge_lengths.iter().cloned().fold(0.0, f64::max);
        ElementGeometry { diameter, area, edge_lengths, normals }
    }

    /// Gradients of the three barycentric coordinates.
    pub fn barycentric_gradients(&self) -> [[f64; 2]; 3] {
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let s = -self.edge_lengths[i] / (2.0 * self.area);
            g[i] = [s * self.normals[i][0], s * self.normals[i][1]];
        }
        g
    }
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Edge connectivity of a triangulation.
#[derive(Debug, Clone)]
pub struct EdgeTable {
    /// Endpoints, smaller index first.
    pub endpoints: Vec<[usize; 2]>,
    /// Adjacent elements; the second entry is [`NONE`] on the boundary.
    pub elements: Vec<[usize; 2]>,
    /// `element_edges[e][i]` is the edge opposite local vertex `i` of element `e`.
    pub element_edges: Vec<[usize; 3]>,
}

impl EdgeTable {
    fn build(elements: &[[usize; 3]]) -> Result<Self> {
        let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(elements.len() * 2);
        let mut endpoints = Vec::with_capacity(elements.len() * 3 / 2 + 8);
        let mut adjacency: Vec<[usize; 2]> = Vec::with_capacity(elements.len() * 3 / 2 + 8);
        let mut element_edges = Vec::with_capacity(elements.len());
        for (e, tri) in elements.iter().enumerate() {
            let mut local = [0usize; 3];
            for (i, slot) in local.iter_mut().enumerate() {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let key = (a.min(b), a.max(b));
                let id = *index.entry(key).or_insert_with(|| {
                    endpoints.push([key.0, key.1]);
                    adjacency.push([NONE, NONE]);
                    endpoints.len() - 1
                });
                let adj = &mut adjacency[id];
                if adj[0] == NONE {
                    adj[0] = e;
                } else if adj[1] == NONE {
                    adj[1] = e;
                } else {
                    return Err(LmmgError::InvalidInput(format!(
                        "edge ({}, {}) is shared by more than two elements",
                        key.0, key.1
                    )));
                }
                *slot = id;
            }
            element_edges.push(local);
        }
        Ok(EdgeTable { endpoints, elements: adjacency, element_edges })
    }

    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }

    pub fn is_boundary(&self, edge: usize) -> bool {
        self.elements[edge][1] == NONE
    }
}

/// Summary geometry of a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStatistics {
    pub min_angle: f64,
    pub max_h: f64,
    pub element_count: usize,
}

/// A conforming triangulation with refinement-edge labels and hierarchy links.
#[derive(Debug, Clone)]
pub struct Triangulation {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    parent_of: Vec<Option<usize>>,
    vertex_parents: Vec<Option<[usize; 2]>>,
    generation: usize,
    id: u64,
    parent: Option<(u64, usize)>,
}

impl Triangulation {
    /// Builds a mesh from unlabeled triangles. Orientation is fixed up, and
    /// the refinement edge of each element is its longest edge, ties broken
    /// by the smallest opposite-vertex index.
    pub fn from_triangles(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
    ) -> Result<Self> {
        let mut labeled = Vec::with_capacity(triangles.len());
        for tri in triangles {
            check_indices(&tri, vertices.len())?;
            let p = tri.map(|i| vertices[i]);
            let lens = [0usize, 1, 2].map(|i| {
                let a = p[(i + 1) % 3];
                let b = p[(i + 2) % 3];
                (b[0] - a[0]).hypot(b[1] - a[1])
            });
            let longest = lens.iter().cloned().fold(0.0, f64::max);
            let tol = 1e-12 * longest;
            let apex_local = (0..3)
                .filter(|&i| lens[i] >= longest - tol)
                .min_by_key(|&i| tri[i])
                .expect("a triangle has a longest edge");
            let mut t = [tri[apex_local], tri[(apex_local + 1) % 3], tri[(apex_local + 2) % 3]];
            let area = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if area < 0.0 {
                t.swap(1, 2);
            }
            labeled.push(t);
        }
        Self::from_labeled(vertices, labeled, boundary)
    }

    /// Builds a mesh whose elements already follow the `[apex, b, c]`
    /// counter-clockwise convention.
    pub fn from_labeled(
        vertices: Vec<Point>,
        elements: Vec<[usize; 3]>,
        boundary: Vec<bool>,
    ) -> Result<Self> {
        if boundary.len() != vertices.len() {
            return Err(LmmgError::DimensionMismatch {
                expected: vertices.len(),
                found: boundary.len(),
            });
        }
        for (e, tri) in elements.iter().enumerate() {
            check_indices(tri, vertices.len())?;
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(LmmgError::InvalidInput(format!(
                    "element {e} is not positively oriented (signed area {area:e})"
                )));
            }
        }
        let n = elements.len();
        let nv = vertices.len();
        Ok(Triangulation {
            vertices,
            elements,
            boundary,
            parent_of: vec![None; n],
            vertex_parents: vec![None; nv],
            generation: 0,
            id: next_id(),
            parent: None,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Element of the previous generation this element was cut from.
    pub fn parent_of(&self, element: usize) -> Option<usize> {
        self.parent_of[element]
    }

    /// Endpoints of the edge a vertex was inserted on during the refinement
    /// that produced this mesh; `None` for inherited vertices.
    pub fn vertex_parents(&self, vertex: usize) -> Option<[usize; 2]> {
        self.vertex_parents[vertex]
    }

    /// Whether `self` was produced by refining `parent` exactly once.
    pub fn is_child_of(&self, parent: &Triangulation) -> bool {
        matches!(self.parent, Some((id, nv)) if id == parent.id && nv == parent.num_vertices())
    }

    /// The refinement edge (opposite the newest vertex) of an element.
    pub fn refinement_edge(&self, element: usize) -> [usize; 2] {
        let t = self.elements[element];
        [t[1], t[2]]
    }

    pub fn element_points(&self, element: usize) -> [Point; 3] {
        self.elements[element].map(|i| self.vertices[i])
    }

    pub fn element_geometry(&self, element: usize) -> ElementGeometry {
        ElementGeometry::new(self.element_points(element))
    }

    pub fn edges(&self) -> EdgeTable {
        EdgeTable::build(&self.elements).expect("mesh invariants guarantee a valid edge table")
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Newest vertex bisection of all `marked` elements plus the conforming
    /// closure. Returns the next generation.
    pub fn refine(&self, marked: &[usize]) -> Result<Triangulation> {
        let edges = EdgeTable::build(&self.elements)?;
        let ne = self.elements.len();
        let mut edge_marked = vec![false; edges.len()];
        let mut queue: Vec<usize> = Vec::new();

        let mark_edge = |edge: usize, marks: &mut Vec<bool>, queue: &mut Vec<usize>| {
            if !marks[edge] {
                marks[edge] = true;
                for &nb in &edges.elements[edge] {
                    if nb != NONE {
                        queue.push(nb);
                    }
                }
            }
        };

        for &e in marked {
            if e >= ne {
                return Err(LmmgError::InvalidInput(format!(
                    "marked element {e} out of range (mesh has {ne} elements)"
                )));
            }
            mark_edge(edges.element_edges[e][0], &mut edge_marked, &mut queue);
        }
        // closure: an element with any marked edge must bisect its refinement edge
        while let Some(e) = queue.pop() {
            let local = edges.element_edges[e];
            if !edge_marked[local[0]] && (edge_marked[local[1]] || edge_marked[local[2]]) {
                mark_edge(local[0], &mut edge_marked, &mut queue);
            }
        }

        let mut vertices = self.vertices.clone();
        let mut boundary = self.boundary.clone();
        let mut vertex_parents = vec![None; self.vertices.len()];
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        for (edge, &m) in edge_marked.iter().enumerate() {
            if !m {
                continue;
            }
            let [a, b] = edges.endpoints[edge];
            let pa = self.vertices[a];
            let pb = self.vertices[b];
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            boundary.push(edges.is_boundary(edge));
            vertex_parents.push(Some([a, b]));
            midpoint.insert((a, b), vertices.len() - 1);
        }

        let mut elements = Vec::with_capacity(ne + 2 * midpoint.len());
        let mut parent_of = Vec::with_capacity(elements.capacity());
        let lookup = |a: usize, b: usize| midpoint.get(&(a.min(b), a.max(b))).copied();
        for (e, &tri) in self.elements.iter().enumerate() {
            bisect(tri, &lookup, &mut |t| {
                elements.push(t);
                parent_of.push(Some(e));
            });
        }

        Ok(Triangulation {
            vertices,
            elements,
            boundary,
            parent_of,
            vertex_parents,
            generation: self.generation + 1,
            id: next_id(),
            parent: Some((self.id, self.vertices.len())),
        })
    }

    /// Refines every element once.
    pub fn refine_all(&self) -> Result<Triangulation> {
        let all: Vec<usize> = (0..self.num_elements()).collect();
        self.refine(&all)
    }

    pub fn statistics(&self) -> MeshStatistics {
        let mut min_angle = f64::INFINITY;
        let mut max_h: f64 = 0.0;
        for e in 0..self.num_elements() {
            let p = self.element_points(e);
            for a in triangle_angles(p) {
                min_angle = min_angle.min(a);
            }
            max_h = max_h.max(ElementGeometry::new(p).diameter);
        }
        MeshStatistics { min_angle, max_h, element_count: self.num_elements() }
    }

    /// Number of distinct sorted angle triples, rounded to 1e-9 rad.
    pub fn similarity_class_count(&self) -> usize {
        let mut classes = HashSet::new();
        for e in 0..self.num_elements() {
            let mut a = triangle_angles(self.element_points(e));
            a.sort_by(f64::total_cmp);
            classes.insert(a.map(|x| (x / 1e-9).round() as i64));
        }
        classes.len()
    }

    /// Verifies that the mesh is conforming: every edge borders at most two
    /// elements, single-element edges join boundary vertices, and no vertex
    /// sits inside a single-element edge (a hanging node).
    pub fn check_conformity(&self) -> Result<()> {
        let edges = EdgeTable::build(&self.elements)?;
        let locator = VertexGrid::new(&self.vertices);
        for (id, [a, b]) in edges.endpoints.iter().copied().enumerate() {
            if !edges.is_boundary(id) {
                continue;
            }
            if !(self.boundary[a] && self.boundary[b]) {
                return Err(LmmgError::InvalidInput(format!(
                    "edge ({a}, {b}) has a single neighbour but is not on the boundary"
                )));
            }
            if let Some(v) = locator.vertex_inside_segment(&self.vertices, a, b) {
                return Err(LmmgError::InvalidInput(format!(
                    "hanging vertex {v} on edge ({a}, {b})"
                )));
            }
        }
        Ok(())
    }

    /// Writes the text mesh format: a header line `vertices <n> elements <m>`,
    /// `n` lines `x y boundary_flag`, then `m` lines `i j k` (0-based).
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "vertices {} elements {}", self.num_vertices(), self.num_elements())?;
        for (p, &b) in self.vertices.iter().zip(&self.boundary) {
            writeln!(out, "{} {} {}", p[0], p[1], u8::from(b))?;
        }
        for t in &self.elements {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Reads the text mesh format. Element vertex order is kept as written, so
    /// refinement-edge labels survive a round trip.
    pub fn read_text<R: BufRead>(input: R) -> Result<Triangulation> {
        let mut lines = input.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let parse_err = |line: usize, message: String| LmmgError::Parse { line, message };
        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty mesh file".into()))?;
        let header = header?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 4 || tok[0] != "vertices" || tok[2] != "elements" {
            return Err(parse_err(hline, format!("bad header `{header}`")));
        }
        let nv: usize = tok[1].parse().map_err(|_| parse_err(hline, "bad vertex count".into()))?;
        let ne: usize = tok[3].parse().map_err(|_| parse_err(hline, "bad element count".into()))?;
        let mut vertices = Vec::with_capacity(nv);
        let mut boundary = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(hline, "unexpected end of vertex list".into()))?;
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err(ln, format!("expected `x y flag`, got `{line}`")));
            }
            let x: f64 = f[0].parse().map_err(|_| parse_err(ln, format!("bad x `{}`", f[0])))?;
            let y: f64 = f[1].parse().map_err(|_| parse_err(ln, format!("bad y `{}`", f[1])))?;
            let b = match f[2] {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(ln, format!("bad boundary flag `{other}`"))),
            };
            vertices.push([x, y]);
            boundary.push(b);
        }
        let mut elements = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(hline, "unexpected end of element list".into()))?;
            let line = line?;
            let idx: std::result::Result<Vec<usize>, _> =
                line.split_whitespace().map(str::parse).collect();
            match idx {
                Ok(v) if v.len() == 3 => elements.push([v[0], v[1], v[2]]),
                _ => return Err(parse_err(ln, format!("expected `i j k`, got `{line}`"))),
            }
        }
        Triangulation::from_labeled(vertices, elements, boundary)
    }
}

fn check_indices(tri: &[usize; 3], nv: usize) -> Result<()> {
    if tri.iter().any(|&i| i >= nv) || tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
        return Err(LmmgError::InvalidInput(format!("bad element {tri:?} for {nv} vertices")));
    }
    Ok(())
}

fn bisect<L, F>(tri: [usize; 3], lookup: &L, emit: &mut F)
where
    L: Fn(usize, usize) -> Option<usize>,
    F: FnMut([usize; 3]),
{
    let [apex, b, c] = tri;
    match lookup(b, c) {
        Some(m) => {
            bisect([m, apex, b], lookup, emit);
            bisect([m, c, apex], lookup, emit);
        }
        None => emit(tri),
    }
}

/// Interior angles at the three vertices.
pub fn triangle_angles(p: [Point; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        let a = p[i];
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        out[i] = cross.abs().atan2(dot);
    }
    out
}

/// Uniform triangulation of a rectangle: `divisions x divisions` cells, each
/// split along its lower-left to upper-right diagonal.
pub fn create_square_mesh(lo: Point, hi: Point, divisions: usize) -> Result<Triangulation> {
    let rect = Rectangle::new(lo, hi)?;
    if divisions == 0 {
        return Err(LmmgError::InvalidInput("divisions must be positive".into()));
    }
    let n = divisions;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = if i == n { hi[0] } else { lo[0] + rect.width() * i as f64 / n as f64 };
            let y = if j == n { hi[1] } else { lo[1] + rect.height() * j as f64 / n as f64 };
            vertices.push([x, y]);
            boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Triangulation::from_triangles(vertices, triangles, boundary)
}

/// Bucket grid over vertices, for hanging-node detection.
struct VertexGrid {
    lo: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl VertexGrid {
    fn new(vertices: &[Point]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let per_side = ((vertices.len() as f64).sqrt().ceil() as usize).max(1);
        let cell = extent / per_side as f64;
        let nx = (((hi[0] - lo[0]) / cell) as usize + 1).max(1);
        let ny = (((hi[1] - lo[1]) / cell) as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (i, p) in vertices.iter().enumerate() {
            let (bx, by) = Self::coords(lo, cell, nx, ny, *p);
            buckets[by * nx + bx].push(i);
        }
        VertexGrid { lo, cell, nx, ny, buckets }
    }

    fn coords(lo: Point, cell: f64, nx: usize, ny: usize, p: Point) -> (usize, usize) {
        let bx = (((p[0] - lo[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
        let by = (((p[1] - lo[1]) / cell).floor().max(0.0) as usize).min(ny - 1);
        (bx, by)
    }

    fn vertex_inside_segment(&self, vertices: &[Point], a: usize, b: usize) -> Option<usize> {
        let pa = vertices[a];
        let pb = vertices[b];
        let (x0, y0) = Self::coords(self.lo, self.cell, self.nx, self.ny, [pa[0].min(pb[0]), pa[1].min(pb[1])]);
        let (x1, y1) = Self::coords(self.lo, self.cell, self.nx, self.ny, [pa[0].max(pb[0]), pa[1].max(pb[1])]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        for by in y0..=y1 {
            for bx in x0..=x1 {
                for &v in &self.buckets[by * self.nx + bx] {
                    if v == a || v == b {
                        continue;
                    }
                    let p = vertices[v];
                    let r = [p[0] - pa[0], p[1] - pa[1]];
                    let s = (r[0] * d[0] + r[1] * d[1]) / len2;
                    let cross = r[0] * d[1] - r[1] * d[0];
                    if s > 1e-12 && s < 1.0 - 1e-12 && cross.abs() <= 1e-12 * len2 {
                        return Some(v);
                    }
                }
            }
        }
        None
    }
}

/// Locates points in a triangulation through a uniform bucket grid.
#[derive(Debug, Clone)]
pub struct PointLocator {
    lo: Point,
    cell: [f64; 2],
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Triangulation) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let per_side = ((mesh.num_elements() as f64).sqrt().ceil() as usize).clamp(1, 4096);
        let nx = per_side;
        let ny = per_side;
        let cell = [
            ((hi[0] - lo[0]) / nx as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / ny as f64).max(f64::MIN_POSITIVE),
        ];
        let mut buckets = vec![Vec::new(); nx * ny];
        let clampx = |v: f64| (v.floor().max(0.0) as usize).min(nx - 1);
        let clampy = |v: f64| (v.floor().max(0.0) as usize).min(ny - 1);
        for e in 0..mesh.num_elements() {
            let p = mesh.element_points(e);
            let xmin = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
            let xmax = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
            let ymin = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
            let ymax = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
            for by in clampy((ymin - lo[1]) / cell[1])..=clampy((ymax - lo[1]) / cell[1]) {
                for bx in clampx((xmin - lo[0]) / cell[0])..=clampx((xmax - lo[0]) / cell[0]) {
                    buckets[by * nx + bx].push(e);
                }
            }
        }
        PointLocator { lo, cell, nx, ny, buckets }
    }

    /// Element containing `p` and the barycentric coordinates of `p` in it.
    pub fn locate(&self, mesh: &Triangulation, p: Point) -> Option<(usize, [f64; 3])> {
        let fx = (p[0] - self.lo[0]) / self.cell[0];
        let fy = (p[1] - self.lo[1]) / self.cell[1];
        let tol = 1e-9;
        if fx < -tol || fy < -tol || fx > self.nx as f64 + tol || fy > self.ny as f64 + tol {
            return None;
        }
        let bx = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let by = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &e in &self.buckets[by * self.nx + bx] {
            let bary = barycentric(mesh.element_points(e), p);
            let worst = bary.iter().cloned().fold(f64::INFINITY, f64::min);
            if worst >= -1e-12 {
                return Some((e, bary));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((e, bary, worst));
            }
        }
        // points on the outer boundary can round just outside every element
        best.filter(|b| b.2 >= -1e-9).map(|b| (b.0, b.1))
    }
}

/// Barycentric coordinates of `p` with respect to the triangle `t`.
pub fn barycentric(t: [Point; 3], p: Point) -> [f64; 3] {
    let area = signed_area(t[0], t[1], t[2]);
    let l0 = signed_area(p, t[1], t[2]) / area;
    let l1 = signed_area(t[0], p, t[2]) / area;
    [l0, l1, 1.0 - l0 - l1]
}
