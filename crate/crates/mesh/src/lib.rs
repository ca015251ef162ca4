//! Structured triangulations of a rectangle.
//!
//! Every square of an `nx × ny` grid is halved along one of its diagonals.
//! With the checkerboard pattern (main diagonal when `i + j` is even, anti
//! diagonal otherwise) the segment joining the barycenters of two
//! edge-neighbours is orthogonal to the shared edge whenever the grid cells
//! are squares. That orthogonality is what lets the chemical-potential flux be
//! approximated by a two-point difference `[Π0 μ] / D_e`.

use chns_base::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    /// `[-0.5, 0.5]²`, the domain of all built-in scenarios.
    pub fn centered_unit() -> Self {
        Rect::new(-0.5, 0.5, -0.5, 0.5)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p[0] >= self.x0 - tol && p[0] <= self.x1 + tol && p[1] >= self.y0 - tol && p[1] <= self.y1 + tol
    }
}

/// How each grid square is split into two triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiagonalPattern {
    /// Alternate main/anti diagonal like a checkerboard.
    #[default]
    Checkerboard,
    /// Main diagonal everywhere. Violates barycenter orthogonality across
    /// axis-parallel edges; kept as a negative fixture.
    Uniform,
}

/// 3-point Gauss–Legendre rule on `[0, 1]` (exact to degree 5).
pub const EDGE_GAUSS_POINTS: [f64; 3] = [0.5 - 0.387_298_334_620_741_7, 0.5, 0.5 + 0.387_298_334_620_741_7];
pub const EDGE_GAUSS_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

#[derive(Debug, Clone)]
pub struct Element {
    pub vertices: [usize; 3],
    /// `edges[k]` is the global edge opposite local vertex `k`.
    pub edges: [usize; 3],
    pub area: f64,
    pub barycenter: Point,
    /// Gradients of the barycentric coordinates (constant on the element).
    pub grad_lambda: [Point; 3],
    pub diameter: f64,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub vertices: [usize; 2],
    /// Owner (smaller index) first.
    pub elements: Vec<usize>,
}

/// An edge shared by two elements. `normal` points from `k` into `l`.
#[derive(Debug, Clone)]
pub struct InteriorEdge {
    pub edge: usize,
    pub k: usize,
    pub l: usize,
    /// Local edge index of this edge inside `k` and `l`.
    pub local_k: usize,
    pub local_l: usize,
    pub normal: Point,
    pub length: f64,
    /// Distance between the barycenters of `k` and `l`.
    pub d_e: f64,
    pub quad_points: [Point; 3],
    /// Gauss weights already scaled by the edge length.
    pub quad_weights: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct BoundaryEdge {
    pub edge: usize,
    pub element: usize,
    pub local: usize,
    /// Outward unit normal.
    pub normal: Point,
    pub length: f64,
}

/// Immutable triangulation with full edge connectivity.
#[derive(Debug, Clone)]
pub struct StructuredTriMesh {
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    pub pattern: DiagonalPattern,
    pub vertices: Vec<Point>,
    pub elements: Vec<Element>,
    pub edges: Vec<Edge>,
    pub interior_edges: Vec<InteriorEdge>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Elements touching each vertex, in increasing order.
    pub vertex_elements: Vec<Vec<usize>>,
    /// Interior edges (indices into `interior_edges`) of each element.
    pub element_interior_edges: Vec<Vec<usize>>,
    pub boundary_vertex: Vec<bool>,
    pub boundary_edge: Vec<bool>,
}

impl StructuredTriMesh {
    pub fn build(domain: Rect, nx: usize, ny: usize) -> Result<Self> {
        Self::build_with_pattern(domain, nx, ny, DiagonalPattern::Checkerboard)
    }

    pub fn build_with_pattern(domain: Rect, nx: usize, ny: usize, pattern: DiagonalPattern) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidMesh(format!("nx and ny must be at least 1 (got {nx}×{ny})")));
        }
        let (w, h) = (domain.x1 - domain.x0, domain.y1 - domain.y0);
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(Error::InvalidMesh(format!("degenerate rectangle {domain:?}")));
        }
        let (hx, hy) = (w / nx as f64, h / ny as f64);
        let vid = |i: usize, j: usize| j * (nx + 1) + i;

        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                // pin the far side to the exact bound
                let x = if i == nx { domain.x1 } else { domain.x0 + i as f64 * hx };
                let y = if j == ny { domain.y1 } else { domain.y0 + j as f64 * hy };
                vertices.push([x, y]);
            }
        }

        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                let main = match pattern {
                    DiagonalPattern::Checkerboard => (i + j) % 2 == 0,
                    DiagonalPattern::Uniform => true,
                };
                if main {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }

        let mut edge_index = std::collections::HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut elements = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local_edges = [0usize; 3];
            for (k, slot) in local_edges.iter_mut().enumerate() {
                let (va, vb) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let key = (va.min(vb), va.max(vb));
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(Edge { vertices: [key.0, key.1], elements: Vec::new() });
                    edges.len() - 1
                });
                edges[id].elements.push(t);
                *slot = id;
            }
            elements.push(element_geometry(&vertices, *tri, local_edges));
        }

        let mut interior_edges = Vec::new();
        let mut boundary_edges = Vec::new();
        let mut boundary_vertex = vec![false; vertices.len()];
        let mut boundary_edge = vec![false; edges.len()];
        for (id, edge) in edges.iter().enumerate() {
            let [va, vb] = edge.vertices;
            let (pa, pb) = (vertices[va], vertices[vb]);
            let length = dist(pa, pb);
            let tangent = [(pb[0] - pa[0]) / length, (pb[1] - pa[1]) / length];
            let k = edge.elements[0];
            let local_k = local_edge_of(&elements[k], id);
            // rotate the tangent, then flip so it leaves k
            let mut normal = [tangent[1], -tangent[0]];
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            let bk = elements[k].barycenter;
            if normal[0] * (mid[0] - bk[0]) + normal[1] * (mid[1] - bk[1]) < 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            match edge.elements.len() {
                1 => {
                    boundary_vertex[va] = true;
                    boundary_vertex[vb] = true;
                    boundary_edge[id] = true;
                    boundary_edges.push(BoundaryEdge { edge: id, element: k, local: local_k, normal, length });
                }
                2 => {
                    let l = edge.elements[1];
                    let bl = elements[l].barycenter;
                    let mut quad_points = [[0.0; 2]; 3];
                    let mut quad_weights = [0.0; 3];
                    for q in 0..3 {
                        let t = EDGE_GAUSS_POINTS[q];
                        quad_points[q] = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                        quad_weights[q] = EDGE_GAUSS_WEIGHTS[q] * length;
                    }
                    interior_edges.push(InteriorEdge {
                        edge: id,
                        k,
                        l,
                        local_k,
                        local_l: local_edge_of(&elements[l], id),
                        normal,
                        length,
                        d_e: dist(bk, bl),
                        quad_points,
                        quad_weights,
                    });
                }
                n => unreachable!("edge shared by {n} triangles"),
            }
        }

        let mut vertex_elements = vec![Vec::new(); vertices.len()];
        for (t, el) in elements.iter().enumerate() {
            for &v in &el.vertices {
                vertex_elements[v].push(t);
            }
        }
        let mut element_interior_edges = vec![Vec::new(); elements.len()];
        for (ie, e) in interior_edges.iter().enumerate() {
            element_interior_edges[e.k].push(ie);
            element_interior_edges[e.l].push(ie);
        }

        Ok(StructuredTriMesh {
            domain,
            nx,
            ny,
            pattern,
            vertices,
            elements,
            edges,
            interior_edges,
            boundary_edges,
            vertex_elements,
            element_interior_edges,
            boundary_vertex,
            boundary_edge,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Largest element diameter.
    pub fn h(&self) -> f64 {
        self.elements.iter().map(|e| e.diameter).fold(0.0, f64::max)
    }

    /// Largest `|(b_K − b_L)·t_e| / h` over interior edges.
    pub fn orthogonality_defect(&self) -> (f64, Option<usize>) {
        let h = self.h();
        let mut worst = (0.0, None);
        for (ie, e) in self.interior_edges.iter().enumerate() {
            let bk = self.elements[e.k].barycenter;
            let bl = self.elements[e.l].barycenter;
            let t = [-e.normal[1], e.normal[0]];
            let d = ((bk[0] - bl[0]) * t[0] + (bk[1] - bl[1]) * t[1]).abs() / h;
            if d > worst.0 {
                worst = (d, Some(ie));
            }
        }
        worst
    }

    /// Checks that barycenter segments are orthogonal to every interior
    /// edge. Returns the maximal relative defect.
    pub fn validate_hypothesis(&self) -> Result<f64> {
        match self.orthogonality_defect() {
            (d, Some(edge)) if d > 1e-10 => Err(Error::HypothesisViolation { edge, defect: d }),
            (d, _) => Ok(d),
        }
    }

    /// Barycentric coordinates of `p` with respect to element `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let el = &self.elements[t];
        let mut lam = [0.0; 3];
        for (i, l) in lam.iter_mut().enumerate() {
            let v = self.vertices[el.vertices[(i + 1) % 3]];
            // λ_i vanishes on the opposite edge and is affine
            let g = el.grad_lambda[i];
            *l = g[0] * (p[0] - v[0]) + g[1] * (p[1] - v[1]);
        }
        lam
    }

    /// Element containing `p` (ties resolved towards lower indices) together
    /// with its barycentric coordinates.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let d = &self.domain;
        if !d.contains(p, 1e-12 * (d.x1 - d.x0).max(d.y1 - d.y0)) {
            return None;
        }
        let hx = (d.x1 - d.x0) / self.nx as f64;
        let hy = (d.y1 - d.y0) / self.ny as f64;
        let i = (((p[0] - d.x0) / hx).floor().max(0.0) as usize).min(self.nx - 1);
        let j = (((p[1] - d.y0) / hy).floor().max(0.0) as usize).min(self.ny - 1);
        let first = 2 * (j * self.nx + i);
        let mut best = (first, self.barycentric(first, p));
        for t in [first, first + 1] {
            let lam = self.barycentric(t, p);
            let min = lam.iter().cloned().fold(f64::INFINITY, f64::min);
            if min >= -1e-12 {
                return Some((t, lam));
            }
            let best_min = best.1.iter().cloned().fold(f64::INFINITY, f64::min);
            if min > best_min {
                best = (t, lam);
            }
        }
        Some(best)
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn local_edge_of(el: &Element, edge: usize) -> usize {
    el.edges.iter().position(|&e| e == edge).expect("edge belongs to element")
}

fn element_geometry(vertices: &[Point], tri: [usize; 3], edges: [usize; 3]) -> Element {
    let [p0, p1, p2] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let area = 0.5 * det;
    // ∇λ_i = rot(p_{i+2} - p_{i+1}) / det
    let pts = [p0, p1, p2];
    let mut grad_lambda = [[0.0; 2]; 3];
    for (i, g) in grad_lambda.iter_mut().enumerate() {
        let a = pts[(i + 1) % 3];
        let b = pts[(i + 2) % 3];
        *g = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    }
    let barycenter = [(p0[0] + p1[0] + p2[0]) / 3.0, (p0[1] + p1[1] + p2[1]) / 3.0];
    let diameter = dist(p0, p1).max(dist(p1, p2)).max(dist(p2, p0));
    Element { vertices: tri, edges, area, barycenter, grad_lambda, diameter }
}
