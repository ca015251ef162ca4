//! Discrete function spaces, projections and the mass-lumped inner product.

pub mod basis;
pub mod quadrature;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

pub use basis::{LocalBasis, ShapeEval};
use chns_base::{Error, Result};
use chns_mesh::{Point, StructuredTriMesh};
pub use quadrature::TriangleRule;

/// Subdivision per edge used when projecting initial data.
pub const INITIAL_SUBDIVISION: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    P0Disc,
    P1Cont,
    P1Disc,
    P2Cont,
    /// Vector-valued continuous P2.
    P2Vec,
    /// Vector-valued continuous P2 enriched with a cubic bubble per element.
    P2BubbleVec,
}

impl SpaceKind {
    pub fn components(self) -> usize {
        match self {
            SpaceKind::P2Vec | SpaceKind::P2BubbleVec => 2,
            _ => 1,
        }
    }

    pub fn local_basis(self) -> Option<LocalBasis> {
        match self {
            SpaceKind::P0Disc => None,
            SpaceKind::P1Cont | SpaceKind::P1Disc => Some(LocalBasis::P1),
            SpaceKind::P2Cont | SpaceKind::P2Vec => Some(LocalBasis::P2),
            SpaceKind::P2BubbleVec => Some(LocalBasis::P2Bubble),
        }
    }
}

/// Inf-sup stable velocity/pressure pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocityPressurePair {
    /// (P2 + bubble)² × discontinuous P1.
    #[default]
    P2BubbleP1Disc,
    /// P2² × discontinuous P0. Cheaper; stable in 2D only.
    P2P0Disc,
}

impl VelocityPressurePair {
    pub fn velocity_kind(self) -> SpaceKind {
        match self {
            VelocityPressurePair::P2BubbleP1Disc => SpaceKind::P2BubbleVec,
            VelocityPressurePair::P2P0Disc => SpaceKind::P2Vec,
        }
    }

    pub fn pressure_kind(self) -> SpaceKind {
        match self {
            VelocityPressurePair::P2BubbleP1Disc => SpaceKind::P1Disc,
            VelocityPressurePair::P2P0Disc => SpaceKind::P0Disc,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VelocityPressurePair::P2BubbleP1Disc => "p2bubble_p1disc",
            VelocityPressurePair::P2P0Disc => "p2_p0disc",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "p2bubble_p1disc" => Some(VelocityPressurePair::P2BubbleP1Disc),
            "p2_p0disc" => Some(VelocityPressurePair::P2P0Disc),
            _ => None,
        }
    }
}

/// Degree-of-freedom map of one discrete space. Vector spaces store the
/// components blockwise: coefficient `c * scalar_count + dof`.
#[derive(Debug, Clone)]
pub struct Space {
    pub kind: SpaceKind,
    pub local: usize,
    pub scalar_count: usize,
    dof_map: Vec<usize>,
}

impl Space {
    pub fn new(kind: SpaceKind, mesh: &StructuredTriMesh) -> Self {
        let (nv, ned, nel) = (mesh.num_vertices(), mesh.num_edges(), mesh.num_elements());
        let local = kind.local_basis().map_or(1, LocalBasis::len);
        let mut dof_map = Vec::with_capacity(local * nel);
        for (t, el) in mesh.elements.iter().enumerate() {
            match kind {
                SpaceKind::P0Disc => dof_map.push(t),
                SpaceKind::P1Cont => dof_map.extend(el.vertices),
                SpaceKind::P1Disc => dof_map.extend((0..3).map(|i| 3 * t + i)),
                SpaceKind::P2Cont | SpaceKind::P2Vec | SpaceKind::P2BubbleVec => {
                    dof_map.extend(el.vertices);
                    dof_map.extend(el.edges.iter().map(|e| nv + e));
                    if kind == SpaceKind::P2BubbleVec {
                        dof_map.push(nv + ned + t);
                    }
                }
            }
        }
        let scalar_count = match kind {
            SpaceKind::P0Disc => nel,
            SpaceKind::P1Cont => nv,
            SpaceKind::P1Disc => 3 * nel,
            SpaceKind::P2Cont | SpaceKind::P2Vec => nv + ned,
            SpaceKind::P2BubbleVec => nv + ned + nel,
        };
        Space { kind, local, scalar_count, dof_map }
    }

    /// Scalar dofs of element `t`.
    #[inline]
    pub fn dofs(&self, t: usize) -> &[usize] {
        &self.dof_map[t * self.local..(t + 1) * self.local]
    }

    pub fn components(&self) -> usize {
        self.kind.components()
    }

    pub fn dof_count(&self) -> usize {
        self.scalar_count * self.components()
    }
}

/// Coefficient vector tagged with its space.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub kind: SpaceKind,
    pub coeffs: Vec<f64>,
}

impl Field {
    pub fn new(kind: SpaceKind, coeffs: Vec<f64>) -> Self {
        Field { kind, coeffs }
    }

    pub fn zeros(space: &Space) -> Self {
        Field { kind: space.kind, coeffs: vec![0.0; space.dof_count()] }
    }

    pub fn constant(space: &Space, c: f64) -> Self {
        Field { kind: space.kind, coeffs: vec![c; space.dof_count()] }
    }

    pub fn min(&self) -> f64 {
        self.coeffs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.coeffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Trapezoidal-rule diagonal of the P1 mass matrix.
#[derive(Debug, Clone)]
pub struct LumpedMass {
    pub diag: Vec<f64>,
}

impl LumpedMass {
    pub fn new(mesh: &StructuredTriMesh) -> Self {
        let mut diag = vec![0.0; mesh.num_vertices()];
        for el in &mesh.elements {
            for &v in &el.vertices {
                diag[v] += el.area / 3.0;
            }
        }
        LumpedMass { diag }
    }
}

/// Mesh, spaces, quadrature tables and the projection machinery shared by
/// every form and by the nonlinear system.
pub struct Discretization {
    pub mesh: StructuredTriMesh,
    pub pair: VelocityPressurePair,
    pub velocity: Space,
    pub pressure: Space,
    pub p1: Space,
    pub p0: Space,
    pub rule: TriangleRule,
    /// Velocity shape functions at the volume quadrature points.
    pub vel_tab: Vec<ShapeEval>,
    /// P1 shape functions at the volume quadrature points.
    pub p1_tab: Vec<ShapeEval>,
    /// Velocity shape functions of the owner element at each interior-edge
    /// quadrature point.
    pub edge_vel: Vec<[ShapeEval; 3]>,
    pub lumped: LumpedMass,
    p1_mass: SparseColMat<usize, f64>,
    p1_mass_llt: Llt<usize, f64>,
    /// Free (non-Dirichlet) index of each vector velocity coefficient.
    pub velocity_free: Vec<Option<usize>>,
    pub free_velocity: Vec<usize>,
}

impl std::fmt::Debug for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization")
            .field("nx", &self.mesh.nx)
            .field("ny", &self.mesh.ny)
            .field("pair", &self.pair)
            .finish()
    }
}

impl Discretization {
    pub fn new(mesh: StructuredTriMesh, pair: VelocityPressurePair) -> Result<Self> {
        let velocity = Space::new(pair.velocity_kind(), &mesh);
        let pressure = Space::new(pair.pressure_kind(), &mesh);
        let p1 = Space::new(SpaceKind::P1Cont, &mesh);
        let p0 = Space::new(SpaceKind::P0Disc, &mesh);
        let rule = TriangleRule::standard();
        let vb = pair.velocity_kind().local_basis().expect("velocity basis");
        let vel_tab = rule.points.iter().map(|&l| vb.eval(l)).collect();
        let p1_tab = rule.points.iter().map(|&l| LocalBasis::P1.eval(l)).collect();
        let edge_vel = mesh
            .interior_edges
            .iter()
            .map(|e| std::array::from_fn(|q| vb.eval(mesh.barycentric(e.k, e.quad_points[q]))))
            .collect();
        let lumped = LumpedMass::new(&mesh);

        let mut trip = Vec::with_capacity(9 * mesh.num_elements());
        for el in &mesh.elements {
            for i in 0..3 {
                for j in 0..3 {
                    let v = if i == j { el.area / 6.0 } else { el.area / 12.0 };
                    trip.push(Triplet::new(el.vertices[i], el.vertices[j], v));
                }
            }
        }
        let nv = mesh.num_vertices();
        let p1_mass = SparseColMat::try_new_from_triplets(nv, nv, &trip)
            .map_err(|e| Error::InvalidMesh(format!("mass matrix: {e:?}")))?;
        let sym = SymbolicLlt::try_new(p1_mass.symbolic(), Side::Lower)
            .map_err(|e| Error::InvalidMesh(format!("mass matrix: {e:?}")))?;
        let p1_mass_llt = Llt::try_new_with_symbolic(sym, p1_mass.as_ref(), Side::Lower)
            .map_err(|e| Error::InvalidMesh(format!("mass matrix not SPD: {e:?}")))?;

        let ns = velocity.scalar_count;
        let nvert = mesh.num_vertices();
        let mut velocity_free = vec![None; 2 * ns];
        let mut free_velocity = Vec::new();
        for c in 0..2 {
            for d in 0..ns {
                let boundary = if d < nvert {
                    mesh.boundary_vertex[d]
                } else if d < nvert + mesh.num_edges() {
                    mesh.boundary_edge[d - nvert]
                } else {
                    false
                };
                if !boundary {
                    velocity_free[c * ns + d] = Some(free_velocity.len());
                    free_velocity.push(c * ns + d);
                }
            }
        }

        Ok(Discretization {
            mesh,
            pair,
            velocity,
            pressure,
            p1,
            p0,
            rule,
            vel_tab,
            p1_tab,
            edge_vel,
            lumped,
            p1_mass,
            p1_mass_llt,
            velocity_free,
            free_velocity,
        })
    }

    pub fn nq(&self) -> usize {
        self.rule.len()
    }

    /// Physical coordinates of volume quadrature point `q` of element `t`.
    #[inline]
    pub fn quad_point(&self, t: usize, q: usize) -> Point {
        let el = &self.mesh.elements[t];
        let lam = self.rule.points[q];
        let mut x = [0.0; 2];
        for i in 0..3 {
            let v = self.mesh.vertices[el.vertices[i]];
            x[0] += lam[i] * v[0];
            x[1] += lam[i] * v[1];
        }
        x
    }

    #[inline]
    pub fn quad_weight(&self, t: usize, q: usize) -> f64 {
        self.rule.weights[q] * self.mesh.elements[t].area
    }

    /// P1 field value at volume quadrature point `q` of element `t`.
    #[inline]
    pub fn p1_at(&self, t: usize, q: usize, coeffs: &[f64]) -> f64 {
        let v = self.mesh.elements[t].vertices;
        let l = self.rule.points[q];
        l[0] * coeffs[v[0]] + l[1] * coeffs[v[1]] + l[2] * coeffs[v[2]]
    }

    /// Constant gradient of a P1 field on element `t`.
    #[inline]
    pub fn p1_grad(&self, t: usize, coeffs: &[f64]) -> [f64; 2] {
        let el = &self.mesh.elements[t];
        let mut g = [0.0; 2];
        for i in 0..3 {
            let c = coeffs[el.vertices[i]];
            g[0] += c * el.grad_lambda[i][0];
            g[1] += c * el.grad_lambda[i][1];
        }
        g
    }

    /// Velocity value and gradient (`grad[c][k] = ∂_k u_c`) from a shape
    /// table entry of element `t`.
    #[inline]
    pub fn velocity_eval(&self, t: usize, s: &ShapeEval, coeffs: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
        let ns = self.velocity.scalar_count;
        let gl = &self.mesh.elements[t].grad_lambda;
        let mut u = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        for (a, &d) in self.velocity.dofs(t).iter().enumerate() {
            let phi = s.values[a];
            let grad = s.grad(a, gl);
            for c in 0..2 {
                let cf = coeffs[c * ns + d];
                u[c] += cf * phi;
                g[c][0] += cf * grad[0];
                g[c][1] += cf * grad[1];
            }
        }
        (u, g)
    }

    /// Velocity at an arbitrary barycentric point of element `t`.
    pub fn velocity_at_lambda(&self, t: usize, lam: [f64; 3], coeffs: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
        let s = self.pair.velocity_kind().local_basis().expect("velocity basis").eval(lam);
        self.velocity_eval(t, &s, coeffs)
    }

    /// Normal velocity `u·n_e` at the quadrature points of interior edge `ie`.
    #[inline]
    pub fn edge_normal_velocity(&self, ie: usize, coeffs: &[f64]) -> [f64; 3] {
        let e = &self.mesh.interior_edges[ie];
        let ns = self.velocity.scalar_count;
        let dofs = self.velocity.dofs(e.k);
        let mut un = [0.0; 3];
        for (q, s) in self.edge_vel[ie].iter().enumerate() {
            let mut u = [0.0; 2];
            for (a, &d) in dofs.iter().enumerate() {
                u[0] += coeffs[d] * s.values[a];
                u[1] += coeffs[ns + d] * s.values[a];
            }
            un[q] = u[0] * e.normal[0] + u[1] * e.normal[1];
        }
        un
    }

    /// `‖u‖_{L²}` of a velocity field.
    pub fn velocity_l2(&self, coeffs: &[f64]) -> f64 {
        let mut s = 0.0;
        for t in 0..self.mesh.num_elements() {
            for q in 0..self.nq() {
                let (u, _) = self.velocity_eval(t, &self.vel_tab[q], coeffs);
                s += self.quad_weight(t, q) * (u[0] * u[0] + u[1] * u[1]);
            }
        }
        s.sqrt()
    }

    /// Pressure value on element `t` at barycentric point `lam`.
    #[inline]
    pub fn pressure_at_lambda(&self, t: usize, lam: [f64; 3], coeffs: &[f64]) -> f64 {
        match self.pair.pressure_kind() {
            SpaceKind::P0Disc => coeffs[t],
            _ => {
                let d = self.pressure.dofs(t);
                lam[0] * coeffs[d[0]] + lam[1] * coeffs[d[1]] + lam[2] * coeffs[d[2]]
            }
        }
    }

    /// Pressure shape-function values at barycentric point `lam`.
    #[inline]
    pub fn pressure_shapes(&self, lam: [f64; 3]) -> ([f64; 3], usize) {
        match self.pair.pressure_kind() {
            SpaceKind::P0Disc => ([1.0, 0.0, 0.0], 1),
            _ => (lam, 3),
        }
    }

    // ----- projections -------------------------------------------------

    /// Π0: elementwise mean computed by quadrature. `g` receives the element
    /// index so discontinuous integrands can be projected.
    pub fn project_p0(&self, g: impl Fn(usize, Point) -> f64) -> Field {
        let coeffs = (0..self.mesh.num_elements())
            .map(|t| (0..self.nq()).map(|q| self.rule.weights[q] * g(t, self.quad_point(t, q))).sum())
            .collect();
        Field::new(SpaceKind::P0Disc, coeffs)
    }

    /// Π0 of a continuous P1 field: mean of the three vertex values.
    pub fn p0_of_p1(&self, coeffs: &[f64]) -> Vec<f64> {
        self.mesh
            .elements
            .iter()
            .map(|el| (coeffs[el.vertices[0]] + coeffs[el.vertices[1]] + coeffs[el.vertices[2]]) / 3.0)
            .collect()
    }

    /// Load vector `b_i = (g, ψ_i)` for the P1 hat functions.
    pub fn p1_load(&self, g: impl Fn(usize, Point) -> f64) -> Vec<f64> {
        let mut b = vec![0.0; self.mesh.num_vertices()];
        for (t, el) in self.mesh.elements.iter().enumerate() {
            for q in 0..self.nq() {
                let w = self.quad_weight(t, q) * g(t, self.quad_point(t, q));
                let lam = self.rule.points[q];
                for i in 0..3 {
                    b[el.vertices[i]] += w * lam[i];
                }
            }
        }
        b
    }

    /// Solves the consistent P1 mass system `M c = b`.
    pub fn solve_p1_mass(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        self.p1_mass_llt.solve_in_place(rhs.as_mut());
        (0..b.len()).map(|i| rhs[(i, 0)]).collect()
    }

    pub fn p1_mass_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (j, col) in (0..self.p1_mass.ncols()).map(|j| (j, self.p1_mass.col_range(j))) {
            let rows = self.p1_mass.symbolic().row_idx();
            let vals = self.p1_mass.val();
            for k in col {
                y[rows[k]] += vals[k] * x[j];
            }
        }
        y
    }

    /// Π1: L² projection onto continuous P1.
    pub fn project_p1(&self, g: impl Fn(usize, Point) -> f64) -> Field {
        let b = self.p1_load(g);
        Field::new(SpaceKind::P1Cont, self.solve_p1_mass(&b))
    }

    /// Π1 applied componentwise to the elementwise-constant gradient of a P1
    /// field.
    pub fn project_p1_gradient(&self, mu: &[f64]) -> [Vec<f64>; 2] {
        let grads: Vec<[f64; 2]> = (0..self.mesh.num_elements()).map(|t| self.p1_grad(t, mu)).collect();
        let mut b = [vec![0.0; self.mesh.num_vertices()], vec![0.0; self.mesh.num_vertices()]];
        for (t, el) in self.mesh.elements.iter().enumerate() {
            for i in 0..3 {
                // ∫_K ψ_i = |K| / 3
                b[0][el.vertices[i]] += grads[t][0] * el.area / 3.0;
                b[1][el.vertices[i]] += grads[t][1] * el.area / 3.0;
            }
        }
        [self.solve_p1_mass(&b[0]), self.solve_p1_mass(&b[1])]
    }

    /// Π1ʰ: projection with respect to the lumped inner product. Nodal value
    /// `(g, ψ_i) / m_i`, no linear solve.
    pub fn project_p1_lumped(&self, g: impl Fn(usize, Point) -> f64) -> Field {
        let b = self.p1_load(g);
        let coeffs = b.iter().zip(&self.lumped.diag).map(|(b, m)| b / m).collect();
        Field::new(SpaceKind::P1Cont, coeffs)
    }

    /// Π1ʰ of a P0 field, evaluated exactly: a convex combination of the
    /// values on the elements around each vertex.
    pub fn lumped_from_p0(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.num_vertices()];
        for (v, els) in self.mesh.vertex_elements.iter().enumerate() {
            let mut s = 0.0;
            for &t in els {
                s += self.mesh.elements[t].area / 3.0 * phi[t];
            }
            out[v] = s / self.lumped.diag[v];
        }
        out
    }

    /// Weight of element `t` in the Π1ʰ value at vertex `v`.
    #[inline]
    pub fn lumped_weight(&self, v: usize, t: usize) -> f64 {
        self.mesh.elements[t].area / (3.0 * self.lumped.diag[v])
    }

    /// `(φ, ψ)_h = (1/3) Σ_K |K| Σ_j φ(x_j) ψ(x_j)`.
    pub fn lumped_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.lumped.diag).map(|((a, b), m)| a * b * m).sum()
    }

    /// `∫_Ω v` for a continuous P1 field.
    pub fn integral_p1(&self, coeffs: &[f64]) -> f64 {
        coeffs.iter().zip(&self.lumped.diag).map(|(c, m)| c * m).sum()
    }

    /// `∫_Ω v` for a P0 field.
    pub fn integral_p0(&self, coeffs: &[f64]) -> f64 {
        coeffs.iter().zip(&self.mesh.elements).map(|(c, el)| c * el.area).sum()
    }

    /// Nodal interpolation of a vector field at the P2 nodes; bubble and
    /// boundary coefficients are zero.
    pub fn interpolate_velocity(&self, f: impl Fn(Point) -> [f64; 2]) -> Field {
        let ns = self.velocity.scalar_count;
        let nv = self.mesh.num_vertices();
        let mut coeffs = vec![0.0; 2 * ns];
        for (v, &p) in self.mesh.vertices.iter().enumerate() {
            let u = f(p);
            coeffs[v] = u[0];
            coeffs[ns + v] = u[1];
        }
        for (e, edge) in self.mesh.edges.iter().enumerate() {
            let (a, b) = (self.mesh.vertices[edge.vertices[0]], self.mesh.vertices[edge.vertices[1]]);
            let u = f([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            coeffs[nv + e] = u[0];
            coeffs[ns + nv + e] = u[1];
        }
        for (i, free) in self.velocity_free.iter().enumerate() {
            if free.is_none() {
                coeffs[i] = 0.0;
            }
        }
        Field::new(self.velocity.kind, coeffs)
    }

    /// Initial phase field `Π0 φ0`. Element means use the volume rule on each
    /// of `INITIAL_SUBDIVISION²` congruent subtriangles, so steep or kinked
    /// initial profiles are integrated accurately on coarse meshes.
    pub fn interpolate_phase(&self, f: impl Fn(Point) -> f64) -> Field {
        let k = INITIAL_SUBDIVISION;
        let kf = k as f64;
        // Subtriangles as barycentric corner triples.
        let mut subs = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k - i {
                let b = |a: usize, c: usize| [1.0 - (a + c) as f64 / kf, a as f64 / kf, c as f64 / kf];
                subs.push([b(i, j), b(i + 1, j), b(i, j + 1)]);
                if i + j + 1 < k {
                    subs.push([b(i + 1, j), b(i + 1, j + 1), b(i, j + 1)]);
                }
            }
        }
        // Dividing by the accumulated weight keeps constants exact.
        let coeffs = (0..self.mesh.num_elements())
            .map(|t| {
                let vs = self.mesh.elements[t].vertices.map(|v| self.mesh.vertices[v]);
                let (mut sum, mut wacc) = (0.0, 0.0);
                for sub in &subs {
                    for (q, lam) in self.rule.points.iter().enumerate() {
                        let mut x = [0.0; 2];
                        for (c, bc) in sub.iter().enumerate() {
                            for (i, v) in vs.iter().enumerate() {
                                x[0] += lam[c] * bc[i] * v[0];
                                x[1] += lam[c] * bc[i] * v[1];
                            }
                        }
                        sum += self.rule.weights[q] * f(x);
                        wacc += self.rule.weights[q];
                    }
                }
                sum / wacc
            })
            .collect();
        Field::new(SpaceKind::P0Disc, coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chns_mesh::Rect;

    fn disc(n: usize) -> Discretization {
        let mesh = StructuredTriMesh::build(Rect::centered_unit(), n, n).unwrap();
        Discretization::new(mesh, VelocityPressurePair::default()).unwrap()
    }

    #[test]
    fn dof_counts() {
        let d = disc(2);
        assert_eq!(d.p0.dof_count(), 8);
        assert_eq!(d.p1.dof_count(), 9);
        assert_eq!(d.pressure.dof_count(), 24);
        assert_eq!(d.velocity.scalar_count, 9 + 16 + 8);
        assert_eq!(d.velocity.dof_count(), 2 * 33);
        // interior: 1 vertex + 8 interior edges + 8 bubbles per component
        assert_eq!(d.free_velocity.len(), 2 * 17);
    }

    #[test]
    fn p0_projection_of_x_squared() {
        let mesh = StructuredTriMesh::build(Rect::new(0.0, 1.0, 0.0, 1.0), 1, 1).unwrap();
        let d = Discretization::new(mesh, VelocityPressurePair::default()).unwrap();
        // element 0 is conv{(0,0),(1,0),(1,1)}: ∫x² = 1/4, area 1/2
        let f = d.project_p0(|_, x| x[0] * x[0]);
        assert!((f.coeffs[0] - 0.5).abs() < 1e-14);
        let g = d.project_p0(|_, x| x[1] * x[1]);
        // ∫y² = 1/12, the reflected image of x² on conv{(0,0),(1,0),(0,1)}
        assert!((g.coeffs[0] - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn p0_projection_of_linear_is_barycenter_value() {
        let d = disc(3);
        let f = d.project_p0(|_, x| 2.0 * x[0] - 3.0 * x[1] + 0.5);
        for (t, el) in d.mesh.elements.iter().enumerate() {
            let b = el.barycenter;
            assert!((f.coeffs[t] - (2.0 * b[0] - 3.0 * b[1] + 0.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn p1_projection_reproduces_p1() {
        let d = disc(4);
        let f = d.project_p1(|_, x| 1.0 + x[0] - 2.0 * x[1]);
        for (v, p) in d.mesh.vertices.iter().enumerate() {
            assert!((f.coeffs[v] - (1.0 + p[0] - 2.0 * p[1])).abs() < 1e-13);
        }
        let c = d.project_p1(|_, _| 3.5);
        assert!(c.coeffs.iter().all(|v| (v - 3.5).abs() < 1e-13));
    }

    #[test]
    fn lumped_projection_basics() {
        let d = disc(4);
        let c = d.project_p1_lumped(|_, _| -0.7);
        assert!(c.coeffs.iter().all(|v| (v + 0.7).abs() < 1e-14));
        let g = |_t: usize, x: Point| (3.0 * x[0]).sin() + x[1];
        let h = d.project_p1_lumped(g);
        let int_g: f64 = (0..d.mesh.num_elements())
            .map(|t| (0..d.nq()).map(|q| d.quad_weight(t, q) * g(t, d.quad_point(t, q))).sum::<f64>())
            .sum();
        assert!((d.integral_p1(&h.coeffs) - int_g).abs() <= 1e-13 * int_g.abs().max(1.0));
    }

    #[test]
    fn lumped_inner_properties() {
        let d = disc(3);
        let n = d.mesh.num_vertices();
        let one = vec![1.0; n];
        assert!((d.lumped_inner(&one, &one) - 1.0).abs() < 1e-14);
        let total: f64 = d.lumped.diag.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        for i in [0, 5, n - 1] {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            assert!((d.lumped_inner(&e, &e) - d.lumped.diag[i]).abs() < 1e-16);
            let mut f = vec![0.0; n];
            f[(i + 1) % n] = 1.0;
            assert_eq!(d.lumped_inner(&e, &f), 0.0);
        }
    }

    #[test]
    fn consistent_and_lumped_row_sums_agree() {
        let d = disc(5);
        let ones = vec![1.0; d.mesh.num_vertices()];
        let rows = d.p1_mass_apply(&ones);
        for (r, m) in rows.iter().zip(&d.lumped.diag) {
            assert!((r - m).abs() < 1e-15);
        }
    }

    #[test]
    fn lumped_from_p0_matches_quadrature_projection() {
        let d = disc(4);
        let phi: Vec<f64> = (0..d.mesh.num_elements()).map(|t| ((t * 37 % 11) as f64 / 5.0) - 1.0).collect();
        let a = d.lumped_from_p0(&phi);
        let b = d.project_p1_lumped(|t, _| phi[t]);
        for (x, y) in a.iter().zip(&b.coeffs) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn velocity_interpolation_is_exact_for_quadratics() {
        let d = disc(3);
        let f = |p: Point| {
            let b = 0.25 - p[0] * p[0];
            let c = 0.25 - p[1] * p[1];
            [b * c, -b * c * 0.5]
        };
        let u = d.interpolate_velocity(f);
        for t in [0, 4, 11] {
            let (val, _) = d.velocity_at_lambda(t, [0.2, 0.5, 0.3], &u.coeffs);
            let el = &d.mesh.elements[t];
            let mut x = [0.0; 2];
            for (i, l) in [0.2, 0.5, 0.3].iter().enumerate() {
                x[0] += l * d.mesh.vertices[el.vertices[i]][0];
                x[1] += l * d.mesh.vertices[el.vertices[i]][1];
            }
            // degree-4 field: nodal P2 interpolation is not exact, only close
            let exact = f(x);
            assert!((val[0] - exact[0]).abs() < 2e-2);
            assert!((val[1] - exact[1]).abs() < 2e-2);
        }
        let lin = d.interpolate_velocity(|p| [p[0] * p[1], 0.0]);
        // boundary dofs zeroed
        for (i, free) in d.velocity_free.iter().enumerate() {
            if free.is_none() {
                assert_eq!(lin.coeffs[i], 0.0);
            }
        }
    }
}
