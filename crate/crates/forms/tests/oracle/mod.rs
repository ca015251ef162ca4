//! Brute-force reference evaluation of the discrete forms.
//!
//! Works from vertex coordinates, element connectivity and the global dof
//! numbering only. Every field is rebuilt as a polynomial in physical
//! coordinates from its nodal values through a Vandermonde solve; volume
//! integrals use a 9 × 9 collapsed Gauss rule (exact to degree 16) with its own
//! node computation. Edge integrals use 3-point Gauss, which also defines the
//! discrete positive parts and signs.

#![allow(dead_code)]

use std::collections::HashMap;

use chns_mesh::StructuredTriMesh;

pub type P = [f64; 2];

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Gauss–Legendre on `[0, 1]` by Newton iteration from Chebyshev guesses.
fn gauss_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        for _ in 0..200 {
            let (p, dp) = legendre(n, x);
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-17 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        out.push((0.5 * (x + 1.0), 1.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p = [1.0, x];
    for k in 2..=n {
        let next = ((2 * k - 1) as f64 * x * p[1] - (k - 1) as f64 * p[0]) / k as f64;
        p = [p[1], next];
    }
    (p[1], n as f64 * (p[0] - x * p[1]) / (1.0 - x * x))
}

fn sub(a: P, b: P) -> P {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: P, b: P) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Monomials up to degree 2 and their gradients, centred at `c`.
fn mono2(x: P, c: P) -> ([f64; 6], [P; 6]) {
    let (a, b) = (x[0] - c[0], x[1] - c[1]);
    ([1.0, a, b, a * a, a * b, b * b], [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0 * a, 0.0], [b, a], [0.0, 2.0 * b]])
}

/// Scalar polynomial on one element, value and gradient.
#[derive(Clone, Copy)]
pub struct Local {
    centre: P,
    coef: [f64; 6],
    /// Coefficient of the cubic bubble `27 λ0 λ1 λ2`.
    bubble: f64,
    lam_grad: [P; 3],
    lam_off: [f64; 3],
}

impl Local {
    pub fn eval(&self, x: P) -> (f64, P) {
        let (m, g) = mono2(x, self.centre);
        let mut v = 0.0;
        let mut gr = [0.0, 0.0];
        for i in 0..6 {
            v += self.coef[i] * m[i];
            gr[0] += self.coef[i] * g[i][0];
            gr[1] += self.coef[i] * g[i][1];
        }
        if self.bubble != 0.0 {
            let l: [f64; 3] = std::array::from_fn(|i| self.lam_off[i] + dot(self.lam_grad[i], x));
            v += self.bubble * 27.0 * l[0] * l[1] * l[2];
            for k in 0..2 {
                gr[k] += self.bubble
                    * 27.0
                    * (self.lam_grad[0][k] * l[1] * l[2]
                        + l[0] * self.lam_grad[1][k] * l[2]
                        + l[0] * l[1] * self.lam_grad[2][k]);
            }
        }
        (v, gr)
    }
}

#[derive(Clone, Copy)]
pub struct Tri {
    pub v: [P; 3],
    pub area: f64,
    pub centre: P,
    lam_grad: [P; 3],
    lam_off: [f64; 3],
}

impl Tri {
    fn new(v: [P; 3]) -> Self {
        let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
        let centre = [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0];
        // λ_i(x) = off_i + g_i·x, from the 3 × 3 system λ_i(v_j) = δ_ij
        let mut lam_grad = [[0.0; 2]; 3];
        let mut lam_off = [0.0; 3];
        for i in 0..3 {
            let a: Vec<Vec<f64>> = (0..3).map(|j| vec![1.0, v[j][0], v[j][1]]).collect();
            let b: Vec<f64> = (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect();
            let c = dense_solve(a, b);
            lam_off[i] = c[0];
            lam_grad[i] = [c[1], c[2]];
        }
        Tri { v, area: 0.5 * det.abs(), centre, lam_grad, lam_off }
    }

    /// Polynomial of degree ≤ 2 through `(node, value)` pairs; linear data
    /// uses three pairs.
    fn fit(&self, nodes: &[P], values: &[f64], bubble: f64) -> Local {
        let n = nodes.len();
        let a: Vec<Vec<f64>> = nodes.iter().map(|&x| mono2(x, self.centre).0[..n].to_vec()).collect();
        let c = dense_solve(a, values.to_vec());
        let mut coef = [0.0; 6];
        coef[..n].copy_from_slice(&c);
        Local { centre: self.centre, coef, bubble, lam_grad: self.lam_grad, lam_off: self.lam_off }
    }
}

pub struct Oracle<'a> {
    pub m: &'a StructuredTriMesh,
    pub tris: Vec<Tri>,
    /// Global edge index of every element edge, keyed by its vertex pair.
    edge_of: HashMap<(usize, usize), usize>,
    rule: Vec<([f64; 2], f64)>,
    pub ns: usize,
}

/// An interior edge as seen by the oracle.
pub struct OEdge {
    pub k: usize,
    pub l: usize,
    pub normal: P,
    pub length: f64,
    pub d_e: f64,
    pub points: [P; 3],
    pub weights: [f64; 3],
}

impl<'a> Oracle<'a> {
    pub fn new(m: &'a StructuredTriMesh, bubble: bool) -> Self {
        let tris = m.elements.iter().map(|el| Tri::new(el.vertices.map(|v| m.vertices[v]))).collect();
        let mut edge_of = HashMap::new();
        for (i, e) in m.edges.iter().enumerate() {
            let (a, b) = (e.vertices[0], e.vertices[1]);
            edge_of.insert((a.min(b), a.max(b)), i);
        }
        let g = gauss_unit(9);
        let mut rule = Vec::new();
        for &(x, wx) in &g {
            for &(y, wy) in &g {
                // reference triangle (0,0), (1,0), (0,1)
                rule.push(([x, (1.0 - x) * y], wx * wy * (1.0 - x)));
            }
        }
        let ns = m.num_vertices() + m.num_edges() + if bubble { m.num_elements() } else { 0 };
        Oracle { m, tris, edge_of, rule, ns }
    }

    /// Physical quadrature points and weights of element `t`.
    pub fn points(&self, t: usize) -> impl Iterator<Item = (P, f64)> + '_ {
        let tri = self.tris[t];
        self.rule.iter().map(move |&([a, b], w)| {
            let x = [
                tri.v[0][0] + a * (tri.v[1][0] - tri.v[0][0]) + b * (tri.v[2][0] - tri.v[0][0]),
                tri.v[0][1] + a * (tri.v[1][1] - tri.v[0][1]) + b * (tri.v[2][1] - tri.v[0][1]),
            ];
            (x, 2.0 * tri.area * w)
        })
    }

    pub fn integrate(&self, f: impl Fn(usize, P) -> f64) -> (f64, f64) {
        let (mut s, mut abs) = (0.0, 0.0);
        for t in 0..self.tris.len() {
            for (x, w) in self.points(t) {
                let v = w * f(t, x);
                s += v;
                abs += v.abs();
            }
        }
        (s, abs)
    }

    /// Continuous P1 field on element `t`.
    pub fn p1(&self, t: usize, c: &[f64]) -> Local {
        let vs = self.m.elements[t].vertices;
        self.tris[t].fit(&self.tris[t].v, &vs.map(|v| c[v]), 0.0)
    }

    /// Discontinuous P1 field with dofs `3t + i` at the element vertices.
    pub fn p1_disc(&self, t: usize, c: &[f64]) -> Local {
        self.tris[t].fit(&self.tris[t].v, &[c[3 * t], c[3 * t + 1], c[3 * t + 2]], 0.0)
    }

    /// Component `comp` of a velocity: nodal P2 plus optional bubble.
    pub fn vel(&self, t: usize, c: &[f64], comp: usize) -> Local {
        let m = self.m;
        let vs = m.elements[t].vertices;
        let tri = self.tris[t];
        let off = comp * self.ns;
        let mut nodes = tri.v.to_vec();
        let mut vals: Vec<f64> = vs.iter().map(|&v| c[off + v]).collect();
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            let (va, vb) = (vs[a], vs[b]);
            let e = self.edge_of[&(va.min(vb), va.max(vb))];
            nodes.push([0.5 * (tri.v[a][0] + tri.v[b][0]), 0.5 * (tri.v[a][1] + tri.v[b][1])]);
            vals.push(c[off + m.num_vertices() + e]);
        }
        let bubble = if self.ns > m.num_vertices() + m.num_edges() {
            c[off + m.num_vertices() + m.num_edges() + t]
        } else {
            0.0
        };
        tri.fit(&nodes, &vals, bubble)
    }

    /// Velocity value and gradient `g[c][k] = ∂_k u_c` at `x` in element `t`.
    pub fn u_at(&self, t: usize, c: &[f64], x: P) -> (P, [P; 2]) {
        let (a, ga) = self.vel(t, c, 0).eval(x);
        let (b, gb) = self.vel(t, c, 1).eval(x);
        ([a, b], [ga, gb])
    }

    pub fn interior_edges(&self) -> Vec<OEdge> {
        let s = (0.6f64).sqrt();
        let mut out = Vec::new();
        for e in &self.m.edges {
            if e.elements.len() != 2 {
                continue;
            }
            let (k, l) = (e.elements[0].min(e.elements[1]), e.elements[0].max(e.elements[1]));
            let (a, b) = (self.m.vertices[e.vertices[0]], self.m.vertices[e.vertices[1]]);
            let tangent = sub(b, a);
            let length = dot(tangent, tangent).sqrt();
            let mut normal = [tangent[1] / length, -tangent[0] / length];
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            if dot(normal, sub(mid, self.tris[k].centre)) < 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            let d = sub(self.tris[l].centre, self.tris[k].centre);
            let at = |r: f64| [mid[0] + 0.5 * r * tangent[0], mid[1] + 0.5 * r * tangent[1]];
            out.push(OEdge {
                k,
                l,
                normal,
                length,
                d_e: dot(d, d).sqrt(),
                points: [at(-s), at(0.0), at(s)],
                weights: [5.0 / 18.0 * length, 8.0 / 18.0 * length, 5.0 / 18.0 * length],
            });
        }
        out
    }

    /// Element means of a P1 field.
    pub fn mean_p1(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.tris.len())
            .map(|t| {
                let f = self.p1(t, mu);
                self.points(t).map(|(x, w)| w * f.eval(x).0).sum::<f64>() / self.tris[t].area
            })
            .collect()
    }

    /// Consistent L² projection of `∇μ` onto continuous P1, per component.
    pub fn grad_projection(&self, mu: &[f64]) -> [Vec<f64>; 2] {
        let nv = self.m.num_vertices();
        let mut mass = vec![vec![0.0; nv]; nv];
        let mut rhs = [vec![0.0; nv], vec![0.0; nv]];
        for t in 0..self.tris.len() {
            let vs = self.m.elements[t].vertices;
            let hats: Vec<Local> = (0..3)
                .map(|i| {
                    let mut e = [0.0; 3];
                    e[i] = 1.0;
                    self.tris[t].fit(&self.tris[t].v, &e, 0.0)
                })
                .collect();
            let g = self.p1(t, mu);
            for (x, w) in self.points(t) {
                let gm = g.eval(x).1;
                for i in 0..3 {
                    let hi = hats[i].eval(x).0;
                    for j in 0..3 {
                        mass[vs[i]][vs[j]] += w * hi * hats[j].eval(x).0;
                    }
                    rhs[0][vs[i]] += w * hi * gm[0];
                    rhs[1][vs[i]] += w * hi * gm[1];
                }
            }
        }
        [dense_solve(mass.clone(), rhs[0].clone()), dense_solve(mass, rhs[1].clone())]
    }
}

// ----- scalar constitutive functions, written out from their definitions ----

pub fn m(z: f64) -> f64 {
    (1.0 - z * z).max(0.0)
}

pub fn m_up(z: f64) -> f64 {
    if z <= 0.0 {
        m(z)
    } else {
        m(0.0)
    }
}

pub fn m_down(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        m(z) - m(0.0)
    }
}

pub fn plus(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

pub fn minus(z: f64) -> f64 {
    if z < 0.0 {
        -z
    } else {
        0.0
    }
}

pub fn sign_delta(s: f64, delta: f64) -> f64 {
    if delta > 0.0 {
        s / (s.abs() + delta)
    } else {
        (s > 0.0) as i32 as f64 - (s < 0.0) as i32 as f64
    }
}

/// Constants entering the forms.
#[derive(Clone, Copy)]
pub struct Consts {
    pub rho1: f64,
    pub rho2: f64,
    pub dt: f64,
    pub eta: f64,
    pub g: P,
}

impl Consts {
    pub fn rho(&self, phi: f64) -> f64 {
        0.5 * (self.rho1 + self.rho2) + 0.5 * (self.rho2 - self.rho1) * phi
    }
    pub fn rho_dif(&self) -> f64 {
        0.5 * (self.rho2 - self.rho1)
    }
}

/// Value and magnitude `Σ|contribution|` of a form.
pub type Val = (f64, f64);

fn edge_sum(o: &Oracle, f: impl Fn(&OEdge, P) -> f64) -> Val {
    let (mut s, mut a) = (0.0, 0.0);
    for e in o.interior_edges() {
        for q in 0..3 {
            let v = e.weights[q] * f(&e, e.points[q]);
            s += v;
            a += v.abs();
        }
    }
    (s, a)
}

fn normal_velocity(o: &Oracle, e: &OEdge, u: &[f64], x: P) -> f64 {
    dot(o.u_at(e.k, u, x).0, e.normal)
}

pub fn a_upw(o: &Oracle, u: &[f64], phi: &[f64], phibar: &[f64]) -> Val {
    edge_sum(o, |e, x| {
        let s = normal_velocity(o, e, u, x);
        (plus(s) * phi[e.k] - minus(s) * phi[e.l]) * (phibar[e.k] - phibar[e.l])
    })
}

/// `Σ_e ∫ (u·n) ⟨φ⟩ [μ0] + ½ Σ_e ∫ |u·n| [φ] [μ0]`.
pub fn a_upw_split(o: &Oracle, u: &[f64], phi: &[f64], mu0: &[f64]) -> Val {
    edge_sum(o, |e, x| {
        let s = normal_velocity(o, e, u, x);
        let jm = mu0[e.k] - mu0[e.l];
        s * 0.5 * (phi[e.k] + phi[e.l]) * jm + 0.5 * s.abs() * (phi[e.k] - phi[e.l]) * jm
    })
}

pub fn b_upw(o: &Oracle, mu: &[f64], phi: &[f64], phibar: &[f64]) -> Val {
    let mu0 = o.mean_p1(mu);
    let mut s = 0.0;
    let mut a = 0.0;
    for e in o.interior_edges() {
        let j = mu0[e.k] - mu0[e.l];
        let wk = plus(m_up(phi[e.k]) + m_down(phi[e.l]));
        let wl = plus(m_up(phi[e.l]) + m_down(phi[e.k]));
        // integrand constant along the edge
        let v = e.length / e.d_e * (plus(j) * wk - minus(j) * wl) * (phibar[e.k] - phibar[e.l]);
        s += v;
        a += v.abs();
    }
    (s, a)
}

pub fn c_h(o: &Oracle, phi: &[f64], mu0: &[f64], ubar: &[f64]) -> Val {
    let vol = o.integrate(|t, x| {
        let g = o.u_at(t, ubar, x).1;
        -(g[0][0] + g[1][1]) * phi[t] * mu0[t]
    });
    let edge =
        edge_sum(o, |e, x| -normal_velocity(o, e, ubar, x) * 0.5 * (phi[e.k] + phi[e.l]) * (mu0[e.k] - mu0[e.l]));
    (vol.0 + edge.0, vol.1 + edge.1)
}

pub fn s_h(o: &Oracle, u: &[f64], phi: &[f64], mu0: &[f64], ubar: &[f64], delta: f64) -> Val {
    edge_sum(o, |e, x| {
        -0.5 * normal_velocity(o, e, ubar, x)
            * sign_delta(normal_velocity(o, e, u, x), delta)
            * (mu0[e.k] - mu0[e.l])
            * (phi[e.k] - phi[e.l])
    })
}

/// `ρ_dif M(φ0(x)) Π1(∇μ)(x)`.
pub fn j_h(o: &Oracle, c: &Consts, t: usize, x: P, phi0: &[f64], gproj: &[Vec<f64>; 2]) -> P {
    let mob = c.rho_dif() * m(o.p1(t, phi0).eval(x).0);
    [mob * o.p1(t, &gproj[0]).eval(x).0, mob * o.p1(t, &gproj[1]).eval(x).0]
}

pub struct OldFields<'a> {
    pub u0: &'a [f64],
    pub phi0: &'a [f64],
    pub mu: &'a [f64],
}

pub fn t_h(o: &Oracle, c: &Consts, u1: &[f64], phi1: &[f64], old: &OldFields, ubar: &[f64]) -> Val {
    let gp = o.grad_projection(old.mu);
    o.integrate(|t, x| {
        let (v1, g1) = o.u_at(t, u1, x);
        let (vb, gb) = o.u_at(t, ubar, x);
        let (v0, _) = o.u_at(t, old.u0, x);
        let p1 = o.p1(t, phi1).eval(x).0;
        let p0 = o.p1(t, old.phi0).eval(x).0;
        let j = j_h(o, c, t, x, old.phi0, &gp);
        let w = [c.rho(p0) * v0[0] - j[0], c.rho(p0) * v0[1] - j[1]];
        // ∇(u1·ū)
        let grad_dot: P = std::array::from_fn(|k| (0..2).map(|cc| g1[cc][k] * vb[cc] + v1[cc] * gb[cc][k]).sum());
        0.5 * ((c.rho(p1) - c.rho(p0)) / c.dt * dot(v1, vb) - dot(w, grad_dot))
    })
}

pub fn convection(o: &Oracle, c: &Consts, u: &[f64], old: &OldFields, ubar: &[f64]) -> Val {
    let gp = o.grad_projection(old.mu);
    o.integrate(|t, x| {
        let (_, g) = o.u_at(t, u, x);
        let (vb, _) = o.u_at(t, ubar, x);
        let (v0, _) = o.u_at(t, old.u0, x);
        let p0 = o.p1(t, old.phi0).eval(x).0;
        let j = j_h(o, c, t, x, old.phi0, &gp);
        let w = [c.rho(p0) * v0[0] - j[0], c.rho(p0) * v0[1] - j[1]];
        (0..2).map(|cc| (w[0] * g[cc][0] + w[1] * g[cc][1]) * vb[cc]).sum()
    })
}

pub fn viscous(o: &Oracle, eta: f64, u: &[f64], ubar: &[f64]) -> Val {
    o.integrate(|t, x| {
        let (_, g) = o.u_at(t, u, x);
        let (_, h) = o.u_at(t, ubar, x);
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                s += 0.5 * (g[i][j] + g[j][i]) * 0.5 * (h[i][j] + h[j][i]);
            }
        }
        2.0 * eta * s
    })
}

pub fn divergence(o: &Oracle, u: &[f64], pbar: &[f64]) -> Val {
    o.integrate(|t, x| {
        let g = o.u_at(t, u, x).1;
        let p = if pbar.len() == o.tris.len() { pbar[t] } else { o.p1_disc(t, pbar).eval(x).0 };
        (g[0][0] + g[1][1]) * p
    })
}

pub fn gravity(o: &Oracle, c: &Consts, phi_h: &[f64], ubar: &[f64]) -> Val {
    o.integrate(|t, x| c.rho(o.p1(t, phi_h).eval(x).0) * dot(c.g, o.u_at(t, ubar, x).0))
}

pub fn weighted_mass(o: &Oracle, c: &Consts, phi_h: &[f64], u: &[f64], ubar: &[f64]) -> Val {
    o.integrate(|t, x| c.rho(o.p1(t, phi_h).eval(x).0) * dot(o.u_at(t, u, x).0, o.u_at(t, ubar, x).0))
}

/// Library-versus-oracle comparison over random tuples.
pub mod check {
    use super::*;
    use chns_fespace::Discretization;
    use chns_forms::{self as forms, OldLevel, Params};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Worst relative discrepancy per form over all tuples.
    pub struct Report {
        pub worst: Vec<(&'static str, f64)>,
    }

    impl Report {
        pub fn max(&self) -> f64 {
            self.worst.iter().map(|w| w.1).fold(0.0, f64::max)
        }
    }

    fn rel(lib: f64, (val, mag): Val) -> f64 {
        (lib - val).abs() / val.abs().max(mag).max(1e-300)
    }

    fn vals(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    }

    pub fn compare(d: &Discretization, tuples: usize, seed: u64) -> Report {
        let o = Oracle::new(&d.mesh, d.velocity.scalar_count > d.mesh.num_vertices() + d.mesh.num_edges());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = [
            "a_upw",
            "b_upw",
            "c_h",
            "s_h_exact",
            "s_h_delta",
            "t_h",
            "convection",
            "viscous",
            "divergence",
            "pressure",
            "gravity",
            "weighted_mass",
            "j_h",
        ];
        let mut worst = vec![0.0f64; names.len()];
        let (nv, ne) = (d.mesh.num_vertices(), d.mesh.num_elements());
        let nu = d.velocity.dof_count();
        for _ in 0..tuples {
            let params = Params {
                rho1: rng.gen_range(0.5..2.0),
                rho2: rng.gen_range(5.0..100.0),
                dt: rng.gen_range(1e-4..1e-2),
                eta: rng.gen_range(0.1..2.0),
                delta: rng.gen_range(1e-3..1e-1),
                gravity: [rng.gen_range(-1.0..1.0), rng.gen_range(-10.0..10.0)],
                ..Params::default()
            };
            let c = Consts { rho1: params.rho1, rho2: params.rho2, dt: params.dt, eta: params.eta, g: params.gravity };
            let u = vals(&mut rng, nu, -1.0, 1.0);
            let ubar = vals(&mut rng, nu, -1.0, 1.0);
            let u0 = vals(&mut rng, nu, -1.0, 1.0);
            let phi = vals(&mut rng, ne, -1.0, 1.0);
            let phibar = vals(&mut rng, ne, -1.0, 1.0);
            let mu = vals(&mut rng, nv, -1.0, 1.0);
            let mu_old = vals(&mut rng, nv, -1.0, 1.0);
            let phi1_h = vals(&mut rng, nv, -1.0, 1.0);
            let phi0_h = vals(&mut rng, nv, -1.0, 1.0);
            let pbar = vals(&mut rng, d.pressure.dof_count(), -1.0, 1.0);
            let mu0 = o.mean_p1(&mu);

            let gmp = d.project_p1_gradient(&mu_old);
            let old = OldLevel { u: &u0, phi_h: &phi0_h, grad_mu_proj: &gmp };
            let oold = OldFields { u0: &u0, phi0: &phi0_h, mu: &mu_old };

            let r = [
                rel(forms::a_upw(d, &u, &phi, &phibar), a_upw(&o, &u, &phi, &phibar)),
                rel(forms::b_upw(d, &mu, &phi, &phibar), b_upw(&o, &mu, &phi, &phibar)),
                rel(forms::c_h(d, &phi, &mu0, &ubar), c_h(&o, &phi, &mu0, &ubar)),
                rel(forms::s_h(d, &u, &phi, &mu0, &ubar, 0.0), s_h(&o, &u, &phi, &mu0, &ubar, 0.0)),
                rel(forms::s_h(d, &u, &phi, &mu0, &ubar, params.delta), s_h(&o, &u, &phi, &mu0, &ubar, params.delta)),
                rel(forms::t_h(d, &params, &u, &phi1_h, old, &ubar), t_h(&o, &c, &u, &phi1_h, &oold, &ubar)),
                rel(forms::convection(d, &params, &u, old, &ubar), convection(&o, &c, &u, &oold, &ubar)),
                rel(forms::viscous(d, params.eta, &u, &ubar), viscous(&o, params.eta, &u, &ubar)),
                rel(forms::divergence(d, &u, &pbar), divergence(&o, &u, &pbar)),
                rel(forms::pressure(d, &pbar, &ubar), {
                    let v = divergence(&o, &ubar, &pbar);
                    (-v.0, v.1)
                }),
                rel(forms::gravity(d, &params, &phi1_h, &ubar), gravity(&o, &c, &phi1_h, &ubar)),
                rel(
                    forms::weighted_mass_vec(d, &params, &phi1_h, &u).iter().zip(&ubar).map(|(a, b)| a * b).sum(),
                    weighted_mass(&o, &c, &phi1_h, &u, &ubar),
                ),
                {
                    // pointwise at the library's quadrature points
                    let gp = o.grad_projection(&mu_old);
                    let mut w = 0.0f64;
                    for t in 0..ne {
                        for q in 0..d.nq() {
                            let x = d.quad_point(t, q);
                            let lib = forms::j_h_at(d, &params, t, q, &phi0_h, &gmp);
                            let ora = j_h(&o, &c, t, x, &phi0_h, &gp);
                            let scale =
                                params.rho_dif() * (gp[0].iter().chain(&gp[1]).fold(0.0f64, |m, v| m.max(v.abs())));
                            for k in 0..2 {
                                w = w.max((lib[k] - ora[k]).abs() / scale.max(1e-300));
                            }
                        }
                    }
                    w
                },
            ];
            for (w, v) in worst.iter_mut().zip(r) {
                *w = w.max(v);
            }
        }
        Report { worst: names.into_iter().zip(worst).collect() }
    }
}
