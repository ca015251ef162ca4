//! Constitutive functions and the discrete forms of the scheme.
//!
//! Every form comes in two flavours: `name(...)` evaluates the form at given
//! fields, `name_vec(...)` returns the coefficient vector of the functional
//! obtained by leaving the test argument free, so that
//! `name_vec(..) · v̄ = name(.., v̄)`. Bilinear forms additionally have a
//! `name_matrix` variant.
//!
//! Velocity arguments are full coefficient vectors (both components,
//! boundary dofs included). φ and μ0 are P0 coefficients, μ and Π1ʰφ are P1.

use chns_base::sparse::Csr;
use chns_base::{Error, Result};
use chns_fespace::Discretization;

/// Physical and numerical constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub eps: f64,
    pub lambda: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub eta: f64,
    pub dt: f64,
    /// Regularisation of `sign(u·n)`; zero selects the exact sign.
    pub delta: f64,
    /// Pressure penalty.
    pub xi: f64,
    pub gravity: [f64; 2],
}

impl Default for Params {
    fn default() -> Self {
        Params {
            eps: 0.01,
            lambda: 0.01,
            rho1: 1.0,
            rho2: 100.0,
            eta: 1.0,
            dt: 1e-3,
            delta: 1e-6,
            xi: 1e-10,
            gravity: [0.0, 0.0],
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let positive = [("eps", self.eps), ("lambda", self.lambda), ("dt", self.dt), ("eta", self.eta)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("delta", self.delta), ("xi", self.xi)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(self.rho1 > 0.0 && self.rho2 >= self.rho1 && self.rho2.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "densities must satisfy 0 < rho1 <= rho2, got rho1={} rho2={}",
                self.rho1, self.rho2
            )));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::InvalidParams("gravity must be finite".into()));
        }
        Ok(())
    }

    pub fn rho_avg(&self) -> f64 {
        0.5 * (self.rho1 + self.rho2)
    }

    pub fn rho_dif(&self) -> f64 {
        0.5 * (self.rho2 - self.rho1)
    }

    #[inline]
    pub fn density(&self, phi: f64) -> f64 {
        self.rho_avg() + self.rho_dif() * phi
    }

    pub fn has_gravity(&self) -> bool {
        self.gravity != [0.0, 0.0]
    }
}

#[inline]
pub fn pos(z: f64) -> f64 {
    z.max(0.0)
}

#[inline]
pub fn neg(z: f64) -> f64 {
    (-z).max(0.0)
}

/// Heaviside step with `H(0) = 0`: derivative of `pos`.
#[inline]
pub fn heaviside(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Degenerate mobility `(1 − z²)₊`.
#[inline]
pub fn mobility(z: f64) -> f64 {
    pos(1.0 - z * z)
}

#[inline]
pub fn mobility_up(z: f64) -> f64 {
    if z <= 0.0 {
        mobility(z)
    } else {
        1.0
    }
}

#[inline]
pub fn mobility_down(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        mobility(z) - 1.0
    }
}

/// One-sided derivative of the mobility (zero on the flat parts).
#[inline]
pub fn mobility_deriv(z: f64) -> f64 {
    if z.abs() < 1.0 {
        -2.0 * z
    } else {
        0.0
    }
}

#[inline]
pub fn mobility_up_deriv(z: f64) -> f64 {
    if z <= 0.0 {
        mobility_deriv(z)
    } else {
        0.0
    }
}

#[inline]
pub fn mobility_down_deriv(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        mobility_deriv(z)
    }
}

/// Ginzburg–Landau double well `(φ² − 1)² / 4`.
#[inline]
pub fn potential(phi: f64) -> f64 {
    let a = phi * phi - 1.0;
    0.25 * a * a
}

/// Convex-splitting derivative: implicit `2φ1`, explicit `φ0³ − 3φ0`.
#[inline]
pub fn potential_f(phi1: f64, phi0: f64) -> f64 {
    2.0 * phi1 + phi0 * phi0 * phi0 - 3.0 * phi0
}

/// Density applied coefficient-wise.
pub fn density_of(params: &Params, phi: &[f64]) -> Vec<f64> {
    phi.iter().map(|&p| params.density(p)).collect()
}

/// `s / (|s| + δ)`, or `sign(s)` with `sign(0) = 0` when `δ = 0`.
#[inline]
pub fn reg_sign(s: f64, delta: f64) -> f64 {
    if delta > 0.0 {
        s / (s.abs() + delta)
    } else if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `d/ds [s / (|s| + δ)] = δ / (|s| + δ)²`.
#[inline]
pub fn reg_sign_deriv(s: f64, delta: f64) -> f64 {
    if delta > 0.0 {
        let d = s.abs() + delta;
        delta / (d * d)
    } else {
        0.0
    }
}

// ----- edge kernels ------------------------------------------------------

/// Upwind transport flux `∫_e (u·n)₊ φ_K − (u·n)₋ φ_L` from sampled normal
/// velocities and length-scaled edge weights.
#[inline]
pub fn a_upw_edge_flux(un: &[f64], weights: &[f64], phi_k: f64, phi_l: f64) -> f64 {
    un.iter().zip(weights).map(|(&s, &w)| w * (pos(s) * phi_k - neg(s) * phi_l)).sum()
}

/// Upwind diffusive flux across an edge given `[Π0μ] = Π0μ_K − Π0μ_L`.
#[inline]
pub fn b_upw_edge_flux(jump_mu: f64, phi_k: f64, phi_l: f64, d_e: f64, length: f64) -> f64 {
    let down_k = pos(mobility_up(phi_k) + mobility_down(phi_l));
    let down_l = pos(mobility_up(phi_l) + mobility_down(phi_k));
    length / d_e * (pos(jump_mu) * down_k - neg(jump_mu) * down_l)
}

// ----- transport and diffusion of the phase ------------------------------

fn p0_pair_sum(d: &Discretization, flux: impl Fn(usize) -> f64, test: &[f64]) -> f64 {
    d.mesh.interior_edges.iter().enumerate().map(|(ie, e)| flux(ie) * (test[e.k] - test[e.l])).sum()
}

fn p0_pair_vec(d: &Discretization, flux: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut r = vec![0.0; d.mesh.num_elements()];
    for (ie, e) in d.mesh.interior_edges.iter().enumerate() {
        let f = flux(ie);
        r[e.k] += f;
        r[e.l] -= f;
    }
    r
}

fn a_flux(d: &Discretization, u: &[f64], phi: &[f64], ie: usize) -> f64 {
    let e = &d.mesh.interior_edges[ie];
    a_upw_edge_flux(&d.edge_normal_velocity(ie, u), &e.quad_weights, phi[e.k], phi[e.l])
}

fn b_flux(d: &Discretization, mu0: &[f64], phi: &[f64], ie: usize) -> f64 {
    let e = &d.mesh.interior_edges[ie];
    b_upw_edge_flux(mu0[e.k] - mu0[e.l], phi[e.k], phi[e.l], e.d_e, e.length)
}

/// `a_upw(u, φ, φ̄)`.
pub fn a_upw(d: &Discretization, u: &[f64], phi: &[f64], phibar: &[f64]) -> f64 {
    p0_pair_sum(d, |ie| a_flux(d, u, phi, ie), phibar)
}

pub fn a_upw_vec(d: &Discretization, u: &[f64], phi: &[f64]) -> Vec<f64> {
    p0_pair_vec(d, |ie| a_flux(d, u, phi, ie))
}

/// `b_upw(μ, φ, φ̄)` for P1 `μ`; the two-point flux uses `Π0μ`.
pub fn b_upw(d: &Discretization, mu: &[f64], phi: &[f64], phibar: &[f64]) -> f64 {
    let mu0 = d.p0_of_p1(mu);
    p0_pair_sum(d, |ie| b_flux(d, &mu0, phi, ie), phibar)
}

pub fn b_upw_vec(d: &Discretization, mu: &[f64], phi: &[f64]) -> Vec<f64> {
    let mu0 = d.p0_of_p1(mu);
    p0_pair_vec(d, |ie| b_flux(d, &mu0, phi, ie))
}

/// Centred part of the upwind form: `Σ_e ∫_e (u·n) ⟨φ⟩ [μ0]`.
pub fn centered_flux(d: &Discretization, u: &[f64], phi: &[f64], mu0: &[f64]) -> f64 {
    edge_sum(d, u, |e, s| s * 0.5 * (phi[e.k] + phi[e.l]) * (mu0[e.k] - mu0[e.l]))
}

/// Jump part of the upwind form: `½ Σ_e ∫_e |u·n| [φ] [μ0]`.
pub fn upwind_jump(d: &Discretization, u: &[f64], phi: &[f64], mu0: &[f64]) -> f64 {
    edge_sum(d, u, |e, s| 0.5 * s.abs() * (phi[e.k] - phi[e.l]) * (mu0[e.k] - mu0[e.l]))
}

fn edge_sum(d: &Discretization, u: &[f64], f: impl Fn(&chns_mesh::InteriorEdge, f64) -> f64) -> f64 {
    let mut total = 0.0;
    for (ie, e) in d.mesh.interior_edges.iter().enumerate() {
        let un = d.edge_normal_velocity(ie, u);
        for q in 0..3 {
            total += e.quad_weights[q] * f(e, un[q]);
        }
    }
    total
}

// ----- momentum coupling and stabilisation -------------------------------

/// Adds `coef(q) · ψ_a(x_q) n` over the velocity dofs of the owner element at
/// every quadrature point of interior edge `ie`.
fn scatter_edge_normal(d: &Discretization, ie: usize, coef: [f64; 3], out: &mut [f64]) {
    let e = &d.mesh.interior_edges[ie];
    let ns = d.velocity.scalar_count;
    for (q, s) in d.edge_vel[ie].iter().enumerate() {
        let c = coef[q] * e.quad_weights[q];
        for (a, &dof) in d.velocity.dofs(e.k).iter().enumerate() {
            out[dof] += c * s.values[a] * e.normal[0];
            out[ns + dof] += c * s.values[a] * e.normal[1];
        }
    }
}

/// `c_h(φ, μ0, ū) = −∫ (∇·ū) φ μ0 − Σ_e ∫_e (ū·n) ⟨φ⟩ [μ0]`.
pub fn c_h(d: &Discretization, phi: &[f64], mu0: &[f64], ubar: &[f64]) -> f64 {
    dot(&c_h_vec(d, phi, mu0), ubar)
}

pub fn c_h_vec(d: &Discretization, phi: &[f64], mu0: &[f64]) -> Vec<f64> {
    let ns = d.velocity.scalar_count;
    let mut out = vec![0.0; 2 * ns];
    for (t, el) in d.mesh.elements.iter().enumerate() {
        let c = phi[t] * mu0[t];
        if c == 0.0 {
            continue;
        }
        for q in 0..d.nq() {
            let w = d.quad_weight(t, q) * c;
            let s = &d.vel_tab[q];
            for (a, &dof) in d.velocity.dofs(t).iter().enumerate() {
                let g = s.grad(a, &el.grad_lambda);
                out[dof] -= w * g[0];
                out[ns + dof] -= w * g[1];
            }
        }
    }
    for (ie, e) in d.mesh.interior_edges.iter().enumerate() {
        let v = -0.5 * (phi[e.k] + phi[e.l]) * (mu0[e.k] - mu0[e.l]);
        scatter_edge_normal(d, ie, [v; 3], &mut out);
    }
    out
}

/// `s_h(u, φ, μ0, ū) = −½ Σ_e ∫_e (ū·n) σ_δ(u·n) [μ0] [φ]` with
/// `σ_δ(s) = s / (|s| + δ)`; `δ = 0` gives the exact sign.
pub fn s_h(d: &Discretization, u: &[f64], phi: &[f64], mu0: &[f64], ubar: &[f64], delta: f64) -> f64 {
    dot(&s_h_vec(d, u, phi, mu0, delta), ubar)
}

pub fn s_h_vec(d: &Discretization, u: &[f64], phi: &[f64], mu0: &[f64], delta: f64) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for (ie, e) in d.mesh.interior_edges.iter().enumerate() {
        let jj = (phi[e.k] - phi[e.l]) * (mu0[e.k] - mu0[e.l]);
        if jj == 0.0 {
            continue;
        }
        let un = d.edge_normal_velocity(ie, u);
        let coef = std::array::from_fn(|q| -0.5 * reg_sign(un[q], delta) * jj);
        scatter_edge_normal(d, ie, coef, &mut out);
    }
    out
}

/// Transport field of the explicit convection:
/// `W = ρ(Π1ʰφᵐ) uᵐ − J_hᵐ` at volume quadrature point `q` of element `t`.
#[inline]
pub fn transport_field(
    d: &Discretization,
    params: &Params,
    t: usize,
    q: usize,
    u0: [f64; 2],
    phi0_h: &[f64],
    grad_mu_proj: &[Vec<f64>; 2],
) -> [f64; 2] {
    let rho = params.density(d.p1_at(t, q, phi0_h));
    let j = j_h_at(d, params, t, q, phi0_h, grad_mu_proj);
    [rho * u0[0] - j[0], rho * u0[1] - j[1]]
}

/// `J_h = ρ_dif M(Π1ʰφᵐ) Π1(∇μᵐ)` at volume quadrature point `q` of
/// element `t`.
#[inline]
pub fn j_h_at(
    d: &Discretization,
    params: &Params,
    t: usize,
    q: usize,
    phi0_h: &[f64],
    grad_mu_proj: &[Vec<f64>; 2],
) -> [f64; 2] {
    let m = params.rho_dif() * mobility(d.p1_at(t, q, phi0_h));
    if m == 0.0 {
        return [0.0; 2];
    }
    [m * d.p1_at(t, q, &grad_mu_proj[0]), m * d.p1_at(t, q, &grad_mu_proj[1])]
}

/// Inputs of `t_h` that stay fixed within a time step.
#[derive(Debug, Clone, Copy)]
pub struct OldLevel<'a> {
    pub u: &'a [f64],
    pub phi_h: &'a [f64],
    pub grad_mu_proj: &'a [Vec<f64>; 2],
}

/// `t_h = ½ { (δ_t ρ(φ1), u1·ū) − (ρ(φ0) u0 − J_h, ∇(u1·ū)) }`.
pub fn t_h(d: &Discretization, params: &Params, u1: &[f64], phi1_h: &[f64], old: OldLevel<'_>, ubar: &[f64]) -> f64 {
    dot(&t_h_vec(d, params, u1, phi1_h, old), ubar)
}

pub fn t_h_vec(d: &Discretization, params: &Params, u1: &[f64], phi1_h: &[f64], old: OldLevel<'_>) -> Vec<f64> {
    let ns = d.velocity.scalar_count;
    let mut out = vec![0.0; 2 * ns];
    for (t, el) in d.mesh.elements.iter().enumerate() {
        for q in 0..d.nq() {
            let w = d.quad_weight(t, q);
            let s = &d.vel_tab[q];
            let (uv, ug) = d.velocity_eval(t, s, u1);
            let (u0v, _) = d.velocity_eval(t, s, old.u);
            let drho = params.rho_dif() * (d.p1_at(t, q, phi1_h) - d.p1_at(t, q, old.phi_h)) / params.dt;
            let wf = transport_field(d, params, t, q, u0v, old.phi_h, old.grad_mu_proj);
            for (a, &dof) in d.velocity.dofs(t).iter().enumerate() {
                let psi = s.values[a];
                let g = s.grad(a, &el.grad_lambda);
                let wg = wf[0] * g[0] + wf[1] * g[1];
                for c in 0..2 {
                    let wgu = wf[0] * ug[c][0] + wf[1] * ug[c][1];
                    out[c * ns + dof] += 0.5 * w * (drho * uv[c] * psi - wgu * psi - uv[c] * wg);
                }
            }
        }
    }
    out
}

/// `((W·∇) u, ū)` with the explicit transport field `W`.
pub fn convection(d: &Discretization, params: &Params, u: &[f64], old: OldLevel<'_>, ubar: &[f64]) -> f64 {
    dot(&convection_vec(d, params, u, old), ubar)
}

pub fn convection_vec(d: &Discretization, params: &Params, u: &[f64], old: OldLevel<'_>) -> Vec<f64> {
    let ns = d.velocity.scalar_count;
    let mut out = vec![0.0; 2 * ns];
    for t in 0..d.mesh.num_elements() {
        for q in 0..d.nq() {
            let w = d.quad_weight(t, q);
            let s = &d.vel_tab[q];
            let (_, ug) = d.velocity_eval(t, s, u);
            let (u0v, _) = d.velocity_eval(t, s, old.u);
            let wf = transport_field(d, params, t, q, u0v, old.phi_h, old.grad_mu_proj);
            for (a, &dof) in d.velocity.dofs(t).iter().enumerate() {
                for c in 0..2 {
                    out[c * ns + dof] += w * (wf[0] * ug[c][0] + wf[1] * ug[c][1]) * s.values[a];
                }
            }
        }
    }
    out
}

/// Weighted velocity mass `(ρ(Π1ʰφ) u, ū)`.
pub fn weighted_mass_vec(d: &Discretization, params: &Params, phi_h: &[f64], u: &[f64]) -> Vec<f64> {
    let ns = d.velocity.scalar_count;
    let mut out = vec![0.0; 2 * ns];
    for t in 0..d.mesh.num_elements() {
        for q in 0..d.nq() {
            let s = &d.vel_tab[q];
            let w = d.quad_weight(t, q) * params.density(d.p1_at(t, q, phi_h));
            let (uv, _) = d.velocity_eval(t, s, u);
            for (a, &dof) in d.velocity.dofs(t).iter().enumerate() {
                out[dof] += w * uv[0] * s.values[a];
                out[ns + dof] += w * uv[1] * s.values[a];
            }
        }
    }
    out
}

// ----- Stokes part -------------------------------------------------------

#[inline]
fn sym_grad(g: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let off = 0.5 * (g[0][1] + g[1][0]);
    [[g[0][0], off], [off, g[1][1]]]
}

/// `2 (η D u, D ū)` with constant `η`.
pub fn viscous(d: &Discretization, eta: f64, u: &[f64], ubar: &[f64]) -> f64 {
    let mut total = 0.0;
    for t in 0..d.mesh.num_elements() {
        for q in 0..d.nq() {
            let s = &d.vel_tab[q];
            let (_, gu) = d.velocity_eval(t, s, u);
            let (_, gv) = d.velocity_eval(t, s, ubar);
            let (du, dv) = (sym_grad(gu), sym_grad(gv));
            let contr: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| du[i][j] * dv[i][j]).sum();
            total += 2.0 * eta * d.quad_weight(t, q) * contr;
        }
    }
    total
}

/// Matrix of the viscous form: `A[i][j] = 2η (D φ_j, D φ_i)`.
pub fn viscous_matrix(d: &Discretization, eta: f64) -> Csr {
    let ns = d.velocity.scalar_count;
    let mut trip = Vec::new();
    for (t, el) in d.mesh.elements.iter().enumerate() {
        let dofs = d.velocity.dofs(t);
        let n = dofs.len();
        let mut local = vec![0.0; 4 * n * n];
        for q in 0..d.nq() {
            let s = &d.vel_tab[q];
            let w = 2.0 * eta * d.quad_weight(t, q);
            let grads: Vec<[f64; 2]> = (0..n).map(|a| s.grad(a, &el.grad_lambda)).collect();
            for a in 0..n {
                for b in 0..n {
                    let (ga, gb) = (grads[a], grads[b]);
                    let dot_ab = ga[0] * gb[0] + ga[1] * gb[1];
                    // D(ψ_b e_cb) : D(ψ_a e_ca) = ½ δ_{ca cb} ∇ψ_a·∇ψ_b + ½ ∂_{cb}ψ_a ∂_{ca}ψ_b
                    for ca in 0..2 {
                        for cb in 0..2 {
                            let mut v = 0.5 * ga[cb] * gb[ca];
                            if ca == cb {
                                v += 0.5 * dot_ab;
                            }
                            local[((ca * n + a) * 2 + cb) * n + b] += w * v;
                        }
                    }
                }
            }
        }
        for ca in 0..2 {
            for a in 0..n {
                for cb in 0..2 {
                    for b in 0..n {
                        trip.push((ca * ns + dofs[a], cb * ns + dofs[b], local[((ca * n + a) * 2 + cb) * n + b]));
                    }
                }
            }
        }
    }
    Csr::from_triplets(2 * ns, 2 * ns, &trip)
}

/// `(∇·u, p̄)`.
pub fn divergence(d: &Discretization, u: &[f64], pbar: &[f64]) -> f64 {
    divergence_matrix(d).bilinear(pbar, u)
}

/// Matrix `B` with `B[p][u] = (∇·φ_u, ψ_p)`, rows indexed by pressure dofs.
pub fn divergence_matrix(d: &Discretization) -> Csr {
    let ns = d.velocity.scalar_count;
    let mut trip = Vec::new();
    for (t, el) in d.mesh.elements.iter().enumerate() {
        let dofs = d.velocity.dofs(t);
        let pd = d.pressure.dofs(t);
        let mut local = vec![[0.0; 2]; pd.len() * dofs.len()];
        for q in 0..d.nq() {
            let s = &d.vel_tab[q];
            let w = d.quad_weight(t, q);
            let (ps, np) = d.pressure_shapes(d.rule.points[q]);
            for a in 0..dofs.len() {
                let g = s.grad(a, &el.grad_lambda);
                for i in 0..np {
                    local[i * dofs.len() + a][0] += w * ps[i] * g[0];
                    local[i * dofs.len() + a][1] += w * ps[i] * g[1];
                }
            }
        }
        for (i, &p) in pd.iter().enumerate() {
            for (a, &dof) in dofs.iter().enumerate() {
                trip.push((p, dof, local[i * dofs.len() + a][0]));
                trip.push((p, ns + dof, local[i * dofs.len() + a][1]));
            }
        }
    }
    Csr::from_triplets(d.pressure.dof_count(), 2 * ns, &trip)
}

/// `−(p, ∇·ū)`.
pub fn pressure(d: &Discretization, p: &[f64], ubar: &[f64]) -> f64 {
    -divergence(d, ubar, p)
}

/// Pressure mass matrix `(ψ_j, ψ_i)` for the penalty.
pub fn pressure_mass_matrix(d: &Discretization) -> Csr {
    let mut trip = Vec::new();
    for (t, el) in d.mesh.elements.iter().enumerate() {
        let pd = d.pressure.dofs(t);
        if pd.len() == 1 {
            trip.push((pd[0], pd[0], el.area));
        } else {
            for i in 0..3 {
                for j in 0..3 {
                    let v = if i == j { el.area / 6.0 } else { el.area / 12.0 };
                    trip.push((pd[i], pd[j], v));
                }
            }
        }
    }
    let n = d.pressure.dof_count();
    Csr::from_triplets(n, n, &trip)
}

/// `(ρ(Π1ʰφ) g, ū)`.
pub fn gravity(d: &Discretization, params: &Params, phi_h: &[f64], ubar: &[f64]) -> f64 {
    dot(&gravity_vec(d, params, phi_h), ubar)
}

pub fn gravity_vec(d: &Discretization, params: &Params, phi_h: &[f64]) -> Vec<f64> {
    let ns = d.velocity.scalar_count;
    let mut out = vec![0.0; 2 * ns];
    if !params.has_gravity() {
        return out;
    }
    for t in 0..d.mesh.num_elements() {
        for q in 0..d.nq() {
            let s = &d.vel_tab[q];
            let w = d.quad_weight(t, q) * params.density(d.p1_at(t, q, phi_h));
            for (a, &dof) in d.velocity.dofs(t).iter().enumerate() {
                out[dof] += w * params.gravity[0] * s.values[a];
                out[ns + dof] += w * params.gravity[1] * s.values[a];
            }
        }
    }
    out
}

// ----- energy ------------------------------------------------------------

/// Kinetic, interfacial and bulk parts of the discrete energy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Energy {
    pub kinetic: f64,
    pub gradient: f64,
    pub potential: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.gradient + self.potential
    }
}

/// `E(u, φ_h) = ∫ ρ(φ_h)|u|²/2 + (λε/2)∫|∇φ_h|² + (λ/ε)∫F(φ_h)`.
pub fn energy(d: &Discretization, params: &Params, u: &[f64], phi_h: &[f64]) -> Energy {
    let mut e = Energy::default();
    for t in 0..d.mesh.num_elements() {
        let g = d.p1_grad(t, phi_h);
        e.gradient += 0.5 * params.lambda * params.eps * (g[0] * g[0] + g[1] * g[1]) * d.mesh.elements[t].area;
        for q in 0..d.nq() {
            let w = d.quad_weight(t, q);
            let ph = d.p1_at(t, q, phi_h);
            let (uv, _) = d.velocity_eval(t, &d.vel_tab[q], u);
            e.kinetic += 0.5 * w * params.density(ph) * (uv[0] * uv[0] + uv[1] * uv[1]);
            e.potential += params.lambda / params.eps * w * potential(ph);
        }
    }
    e
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
