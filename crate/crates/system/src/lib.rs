//! Monolithic residual and Jacobian of one time step, unknown layout,
//! initial chemical potential and post-step diagnostics.

use rayon::prelude::*;

use chns_base::sparse::Csr;
use chns_base::{Error, Result};
use chns_fespace::Discretization;
use chns_forms::{self as forms, heaviside, neg, pos, OldLevel, Params};

/// One time level. `phi_h` and `grad_mu_proj` are caches of `Π1ʰφ` and
/// `Π1(∇μ)`; call [`State::refresh`] after mutating `phi` or `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub phi_h: Vec<f64>,
    pub grad_mu_proj: [Vec<f64>; 2],
}

impl State {
    pub fn new(d: &Discretization, u: Vec<f64>, p: Vec<f64>, phi: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let checks = [
            ("u", u.len(), d.velocity.dof_count()),
            ("p", p.len(), d.pressure.dof_count()),
            ("phi", phi.len(), d.p0.dof_count()),
            ("mu", mu.len(), d.p1.dof_count()),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::LayoutMismatch(format!("{name} has {got} coefficients, space has {want}")));
            }
        }
        let mut s = State { u, p, phi, mu, phi_h: Vec::new(), grad_mu_proj: [Vec::new(), Vec::new()] };
        s.refresh(d);
        Ok(s)
    }

    pub fn refresh(&mut self, d: &Discretization) {
        self.phi_h = d.lumped_from_p0(&self.phi);
        self.grad_mu_proj = d.project_p1_gradient(&self.mu);
    }

    pub fn old_level(&self) -> OldLevel<'_> {
        OldLevel { u: &self.u, phi_h: &self.phi_h, grad_mu_proj: &self.grad_mu_proj }
    }
}

/// Offsets of the four unknown blocks `[u_free | p | φ | μ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub nu: usize,
    pub np: usize,
    pub nphi: usize,
    pub nmu: usize,
}

impl BlockLayout {
    pub fn new(d: &Discretization) -> Self {
        BlockLayout {
            nu: d.free_velocity.len(),
            np: d.pressure.dof_count(),
            nphi: d.p0.dof_count(),
            nmu: d.p1.dof_count(),
        }
    }

    pub fn p_off(&self) -> usize {
        self.nu
    }

    pub fn phi_off(&self) -> usize {
        self.nu + self.np
    }

    pub fn mu_off(&self) -> usize {
        self.nu + self.np + self.nphi
    }

    pub fn total(&self) -> usize {
        self.nu + self.np + self.nphi + self.nmu
    }

    /// Name of the block containing flat index `i`.
    pub fn block_of(&self, i: usize) -> &'static str {
        if i < self.p_off() {
            "velocity"
        } else if i < self.phi_off() {
            "pressure"
        } else if i < self.mu_off() {
            "phase"
        } else {
            "potential"
        }
    }

    pub fn pack(&self, d: &Discretization, s: &State) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.total());
        x.extend(d.free_velocity.iter().map(|&i| s.u[i]));
        x.extend_from_slice(&s.p);
        x.extend_from_slice(&s.phi);
        x.extend_from_slice(&s.mu);
        x
    }

    pub fn unpack(&self, d: &Discretization, x: &[f64]) -> Result<State> {
        if x.len() != self.total() {
            return Err(Error::LayoutMismatch(format!(
                "vector has {} entries, layout needs {}",
                x.len(),
                self.total()
            )));
        }
        let mut u = vec![0.0; d.velocity.dof_count()];
        for (k, &i) in d.free_velocity.iter().enumerate() {
            u[i] = x[k];
        }
        State::new(
            d,
            u,
            x[self.p_off()..self.phi_off()].to_vec(),
            x[self.phi_off()..self.mu_off()].to_vec(),
            x[self.mu_off()..].to_vec(),
        )
    }
}

/// Old-level data sampled once per step at every volume quadrature point.
#[derive(Debug, Clone, Copy, Default)]
struct OldQuad {
    transport: [f64; 2],
    rho0: f64,
    phi0_h: f64,
    u0: [f64; 2],
}

/// Current iterate unpacked for assembly.
struct Current {
    u: Vec<f64>,
    p: Vec<f64>,
    phi: Vec<f64>,
    mu: Vec<f64>,
    mu0: Vec<f64>,
    phi_h: Vec<f64>,
    /// Emit `Π1ʰφ` derivatives into auxiliary columns instead of the chain rule.
    aux: bool,
}

#[derive(Default)]
struct Local {
    res: Vec<(usize, f64)>,
    jac: Vec<(usize, usize, f64)>,
}

impl Local {
    #[inline]
    fn r(&mut self, row: Option<usize>, v: f64) {
        if let Some(r) = row {
            self.res.push((r, v));
        }
    }

    #[inline]
    fn j(&mut self, row: Option<usize>, col: Option<usize>, v: f64) {
        if let (Some(r), Some(c)) = (row, col) {
            self.jac.push((r, c, v));
        }
    }
}

const CHUNK: usize = 512;
const MAXV: usize = 14;

/// Nonlinear system of one time step, `R(x) = 0` with `x` the new level.
pub struct StepSystem<'a> {
    pub d: &'a Discretization,
    pub params: Params,
    pub layout: BlockLayout,
    pub old: &'a State,
    old_q: Vec<OldQuad>,
    pattern: Option<Csr>,
}

impl<'a> StepSystem<'a> {
    pub fn new(d: &'a Discretization, params: Params, old: &'a State) -> Result<Self> {
        params.validate()?;
        let layout = BlockLayout::new(d);
        if old.phi_h.len() != d.p1.dof_count() || old.grad_mu_proj[0].len() != d.p1.dof_count() {
            return Err(Error::LayoutMismatch("old state caches are stale".into()));
        }
        let nq = d.nq();
        let old_q = (0..d.mesh.num_elements())
            .into_par_iter()
            .flat_map_iter(|t| {
                (0..nq).map(move |q| {
                    let (u0, _) = d.velocity_eval(t, &d.vel_tab[q], &old.u);
                    let phi0_h = d.p1_at(t, q, &old.phi_h);
                    OldQuad {
                        transport: forms::transport_field(d, &params, t, q, u0, &old.phi_h, &old.grad_mu_proj),
                        rho0: params.density(phi0_h),
                        phi0_h,
                        u0,
                    }
                })
            })
            .collect();
        Ok(StepSystem { d, params, layout, old, old_q, pattern: None })
    }

    /// Reuses a sparsity pattern computed by an earlier step on the same
    /// discretisation.
    pub fn with_pattern(mut self, pattern: Option<Csr>) -> Self {
        self.pattern = pattern;
        self
    }

    pub fn pattern(&self) -> Option<&Csr> {
        self.pattern.as_ref()
    }

    pub fn initial_guess(&self) -> Vec<f64> {
        self.layout.pack(self.d, self.old)
    }

    fn current(&self, x: &[f64]) -> Result<Current> {
        let l = &self.layout;
        if x.len() != l.total() {
            return Err(Error::LayoutMismatch(format!("vector has {} entries, layout needs {}", x.len(), l.total())));
        }
        let d = self.d;
        let mut u = vec![0.0; d.velocity.dof_count()];
        for (k, &i) in d.free_velocity.iter().enumerate() {
            u[i] = x[k];
        }
        let phi = x[l.phi_off()..l.mu_off()].to_vec();
        let mu = x[l.mu_off()..].to_vec();
        Ok(Current {
            mu0: d.p0_of_p1(&mu),
            phi_h: d.lumped_from_p0(&phi),
            u,
            p: x[l.p_off()..l.phi_off()].to_vec(),
            phi,
            mu,
            aux: false,
        })
    }

    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let cur = self.current(x)?;
        Ok(self.assemble(&cur, None).0)
    }

    pub fn residual_and_jacobian(&mut self, x: &[f64]) -> Result<(Vec<f64>, Csr)> {
        let cur = self.current(x)?;
        self.assemble_with_jacobian(cur)
    }

    /// Residual and the Jacobian of the system extended by `y = Π1ʰφ` as an
    /// auxiliary unknown, with rows `y_v − Σ_K w_vK φ_K`. Eliminating `y`
    /// recovers [`Self::residual_and_jacobian`]; the extended matrix is much
    /// sparser. Auxiliary unknowns are numbered after [`BlockLayout::total`].
    pub fn residual_and_extended_jacobian(&mut self, x: &[f64]) -> Result<(Vec<f64>, Csr)> {
        let mut cur = self.current(x)?;
        cur.aux = true;
        self.assemble_with_jacobian(cur)
    }

    /// Location of every unknown of the extended system: velocity dofs at
    /// the mean barycenter of their elements, element unknowns at the
    /// barycenter, vertex unknowns at the vertex.
    pub fn unknown_points(&self) -> Vec<[f64; 2]> {
        let (d, l) = (self.d, self.layout);
        let ns = d.velocity.scalar_count;
        let mut vel = vec![[0.0f64; 3]; ns];
        let mut out = vec![[0.0f64; 2]; l.total() + l.nmu];
        for (t, el) in d.mesh.elements.iter().enumerate() {
            let b = el.barycenter;
            for &dof in d.velocity.dofs(t) {
                let a = &mut vel[dof % ns];
                a[0] += b[0];
                a[1] += b[1];
                a[2] += 1.0;
            }
            for &dof in d.pressure.dofs(t) {
                out[l.p_off() + dof] = b;
            }
            out[l.phi_off() + t] = b;
        }
        for (k, &i) in d.free_velocity.iter().enumerate() {
            let a = vel[i % ns];
            out[k] = [a[0] / a[2], a[1] / a[2]];
        }
        for v in 0..l.nmu {
            out[l.mu_off() + v] = d.mesh.vertices[v];
            out[l.total() + v] = d.mesh.vertices[v];
        }
        out
    }

    fn assemble_with_jacobian(&mut self, cur: Current) -> Result<(Vec<f64>, Csr)> {
        let n = self.layout.total() + if cur.aux { self.layout.nmu } else { 0 };
        if self.pattern.as_ref().is_none_or(|p| p.nrows != n) {
            self.pattern = Some(self.build_pattern(&cur));
        }
        let mut jac = self.pattern.clone().expect("pattern");
        jac.vals.iter_mut().for_each(|v| *v = 0.0);
        let (r, _) = self.assemble(&cur, Some(&mut jac));
        Ok((r, jac))
    }

    /// Rows `y_v − Σ_K w_vK φ_K` of the extended system.
    fn projection_rows(&self, mut emit: impl FnMut(usize, usize, f64)) {
        let aux = self.layout.total();
        let off = self.layout.phi_off();
        for v in 0..self.layout.nmu {
            emit(aux + v, aux + v, 1.0);
            for &k in &self.d.mesh.vertex_elements[v] {
                emit(aux + v, off + k, -self.d.lumped_weight(v, k));
            }
        }
    }

    pub fn jacobian(&mut self, x: &[f64]) -> Result<Csr> {
        Ok(self.residual_and_jacobian(x)?.1)
    }

    fn for_each_chunk(&self, cur: &Current, mut sink: impl FnMut(Local)) {
        let ne = self.d.mesh.num_elements();
        let nie = self.d.mesh.interior_edges.len();
        for start in (0..ne).step_by(CHUNK) {
            let locals: Vec<Local> = (start..(start + CHUNK).min(ne))
                .into_par_iter()
                .map(|t| {
                    let mut l = Local::default();
                    self.element_kernel(t, cur, &mut l);
                    l
                })
                .collect();
            locals.into_iter().for_each(&mut sink);
        }
        for start in (0..nie).step_by(CHUNK) {
            let locals: Vec<Local> = (start..(start + CHUNK).min(nie))
                .into_par_iter()
                .map(|ie| {
                    let mut l = Local::default();
                    self.edge_kernel(ie, cur, &mut l);
                    l
                })
                .collect();
            locals.into_iter().for_each(&mut sink);
        }
    }

    fn build_pattern(&self, cur: &Current) -> Csr {
        let n = self.layout.total() + if cur.aux { self.layout.nmu } else { 0 };
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        self.for_each_chunk(cur, |l| {
            for (r, c, _) in l.jac {
                rows[r].push(c);
            }
            // keep rows compact while streaming
        });
        let mu_off = self.layout.mu_off();
        for v in 0..self.layout.nmu {
            rows[mu_off + v].push(mu_off + v);
        }
        if cur.aux {
            self.projection_rows(|r, c, _| rows[r].push(c));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Csr { nrows: n, ncols: n, row_ptr, col_idx, vals: vec![0.0; nnz] }
    }

    fn assemble(&self, cur: &Current, mut jac: Option<&mut Csr>) -> (Vec<f64>, ()) {
        let l = self.layout;
        let mut r = vec![0.0; l.total()];
        let want_jac = jac.is_some();
        self.for_each_chunk(cur, |loc| {
            for (i, v) in loc.res {
                r[i] += v;
            }
            if want_jac {
                let m = jac.as_deref_mut().expect("jacobian");
                for (i, j, v) in loc.jac {
                    scatter(m, i, j, v);
                }
            }
        });
        let mu_off = l.mu_off();
        for (v, &m) in self.d.lumped.diag.iter().enumerate() {
            r[mu_off + v] -= m * cur.mu[v];
            if let Some(m_) = jac.as_deref_mut() {
                scatter(m_, mu_off + v, mu_off + v, -m);
            }
        }
        if cur.aux {
            if let Some(m_) = jac.as_deref_mut() {
                self.projection_rows(|i, j, v| scatter(m_, i, j, v));
            }
        }
        (r, ())
    }

    fn element_kernel(&self, t: usize, cur: &Current, out: &mut Local) {
        let d = self.d;
        let prm = &self.params;
        let lay = &self.layout;
        let el = &d.mesh.elements[t];
        let ns = d.velocity.scalar_count;
        let dofs = d.velocity.dofs(t);
        let n = dofs.len();
        let pd = d.pressure.dofs(t);
        let npl = pd.len();
        let nq = d.nq();
        let (dt, rd) = (prm.dt, prm.rho_dif());
        let (lam_e, eps) = (prm.lambda, prm.eps);
        let phi_t = cur.phi[t];
        let mu0_t = cur.mu0[t];

        let mut r_u = [0.0; MAXV];
        let mut j_uu = [[0.0; MAXV]; MAXV];
        let mut j_up = [[0.0; 3]; MAXV];
        let mut j_uh = [[0.0; 3]; MAXV];
        let mut j_uphi = [0.0; MAXV];
        let mut j_umu = [0.0; MAXV];
        let mut r_p = [0.0; 3];
        let mut r_mu = [0.0; 3];
        let mut j_muh = [[0.0; 3]; 3];

        for q in 0..nq {
            let w = d.quad_weight(t, q);
            let s = &d.vel_tab[q];
            let lam = d.rule.points[q];
            let od = &self.old_q[t * nq + q];
            let mut grads = [[0.0; 2]; 7];
            for (a, g) in grads.iter_mut().enumerate().take(n) {
                *g = s.grad(a, &el.grad_lambda);
            }
            let (uv, ug) = d.velocity_eval(t, s, &cur.u);
            let ph = d.p1_at(t, q, &cur.phi_h);
            let rho1 = prm.density(ph);
            let drho = rd * (ph - od.phi0_h) / dt;
            let mass = od.rho0 / dt + 0.5 * drho;
            let wt = od.transport;
            let divu = ug[0][0] + ug[1][1];
            let pval = d.pressure_at_lambda(t, lam, &cur.p);
            let (ps, _) = d.pressure_shapes(lam);
            for a in 0..n {
                let psi = s.values[a];
                let ga = grads[a];
                let wga = wt[0] * ga[0] + wt[1] * ga[1];
                for c in 0..2 {
                    let row = c * n + a;
                    let wgu = wt[0] * ug[c][0] + wt[1] * ug[c][1];
                    let visc = prm.eta * ((ug[c][0] + ug[0][c]) * ga[0] + (ug[c][1] + ug[1][c]) * ga[1]);
                    r_u[row] += w
                        * (od.rho0 * (uv[c] - od.u0[c]) / dt * psi + 0.5 * drho * uv[c] * psi + 0.5 * wgu * psi
                            - 0.5 * uv[c] * wga
                            + rho1 * prm.gravity[c] * psi
                            + visc
                            - pval * ga[c]
                            - phi_t * mu0_t * ga[c]);
                    for b in 0..n {
                        let psib = s.values[b];
                        let gb = grads[b];
                        let wgb = wt[0] * gb[0] + wt[1] * gb[1];
                        j_uu[row][c * n + b] += w * (mass * psib * psi + 0.5 * wgb * psi - 0.5 * psib * wga)
                            + w * prm.eta * (gb[0] * ga[0] + gb[1] * ga[1]);
                        for cb in 0..2 {
                            j_uu[row][cb * n + b] += w * prm.eta * gb[c] * ga[cb];
                        }
                    }
                    for i in 0..npl {
                        j_up[row][i] -= w * ps[i] * ga[c];
                    }
                    for j in 0..3 {
                        j_uh[row][j] += w * rd * lam[j] * psi * (0.5 * uv[c] / dt + prm.gravity[c]);
                    }
                    j_uphi[row] -= w * mu0_t * ga[c];
                    j_umu[row] -= w * phi_t / 3.0 * ga[c];
                }
            }
            for i in 0..npl {
                r_p[i] += w * ps[i] * divu;
            }
            let fval = forms::potential_f(ph, od.phi0_h);
            for i in 0..3 {
                r_mu[i] += lam_e / eps * w * fval * lam[i];
                for j in 0..3 {
                    j_muh[i][j] += 2.0 * lam_e / eps * w * lam[i] * lam[j];
                }
            }
        }

        // pressure penalty
        let mut j_pp = [[0.0; 3]; 3];
        if npl == 1 {
            j_pp[0][0] = prm.xi * el.area;
        } else {
            for (i, row) in j_pp.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = prm.xi * el.area * if i == j { 1.0 / 6.0 } else { 1.0 / 12.0 };
                }
            }
        }
        for i in 0..npl {
            for j in 0..npl {
                r_p[i] += j_pp[i][j] * cur.p[pd[j]];
            }
        }
        // interfacial gradient term
        let gphi = d.p1_grad(t, &cur.phi_h);
        for i in 0..3 {
            let gi = el.grad_lambda[i];
            r_mu[i] += lam_e * eps * el.area * (gphi[0] * gi[0] + gphi[1] * gi[1]);
            for j in 0..3 {
                let gj = el.grad_lambda[j];
                j_muh[i][j] += lam_e * eps * el.area * (gi[0] * gj[0] + gi[1] * gj[1]);
            }
        }

        // scatter
        let vrow = |row: usize| -> Option<usize> {
            let (c, a) = (row / n, row % n);
            d.velocity_free[c * ns + dofs[a]]
        };
        let prow = |i: usize| Some(lay.p_off() + pd[i]);
        let phi_col = |k: usize| Some(lay.phi_off() + k);
        let mu_col = |v: usize| Some(lay.mu_off() + v);
        let verts = el.vertices;
        for row in 0..2 * n {
            let gr = vrow(row);
            if gr.is_none() {
                continue;
            }
            out.r(gr, r_u[row]);
            for col in 0..2 * n {
                out.j(gr, vrow(col), j_uu[row][col]);
            }
            for i in 0..npl {
                out.j(gr, prow(i), j_up[row][i]);
                // continuity is the negative transpose of the pressure term
                out.j(prow(i), gr, -j_up[row][i]);
            }
            for j in 0..3 {
                self.emit_phi_h(cur.aux, out, gr, verts[j], j_uh[row][j]);
                out.j(gr, mu_col(verts[j]), j_umu[row]);
            }
            out.j(gr, phi_col(t), j_uphi[row]);
        }
        for i in 0..npl {
            out.r(prow(i), r_p[i]);
            for j in 0..npl {
                out.j(prow(i), prow(j), j_pp[i][j]);
            }
        }
        for i in 0..3 {
            let row = mu_col(verts[i]);
            out.r(row, r_mu[i]);
            for j in 0..3 {
                self.emit_phi_h(cur.aux, out, row, verts[j], j_muh[i][j]);
            }
        }
        let rphi = phi_col(t);
        out.r(rphi, el.area * (phi_t - self.old.phi[t]) / dt);
        out.j(rphi, rphi, el.area / dt);
    }

    /// Chain rule through `Π1ʰ`: a derivative with respect to the nodal value
    /// at vertex `v` is distributed over the elements around `v`.
    #[inline]
    fn emit_phi_h(&self, aux: bool, out: &mut Local, row: Option<usize>, v: usize, val: f64) {
        if aux {
            out.j(row, Some(self.layout.total() + v), val);
            return;
        }
        let off = self.layout.phi_off();
        for &k in &self.d.mesh.vertex_elements[v] {
            out.j(row, Some(off + k), val * self.d.lumped_weight(v, k));
        }
    }

    fn edge_kernel(&self, ie: usize, cur: &Current, out: &mut Local) {
        let d = self.d;
        let prm = &self.params;
        let lay = &self.layout;
        let e = &d.mesh.interior_edges[ie];
        let (k, l) = (e.k, e.l);
        let ns = d.velocity.scalar_count;
        let dofs = d.velocity.dofs(k);
        let n = dofs.len();
        let un = d.edge_normal_velocity(ie, &cur.u);
        let (phik, phil) = (cur.phi[k], cur.phi[l]);
        let jm = cur.mu0[k] - cur.mu0[l];
        let jp = phik - phil;
        let avg = 0.5 * (phik + phil);
        let tab = &d.edge_vel[ie];

        let vcol = |c: usize, a: usize| d.velocity_free[c * ns + dofs[a]];
        let rk = Some(lay.phi_off() + k);
        let rl = Some(lay.phi_off() + l);
        let vk = d.mesh.elements[k].vertices;
        let vl = d.mesh.elements[l].vertices;
        let mu_col = |v: usize| Some(lay.mu_off() + v);

        // phase fluxes
        let fa = forms::a_upw_edge_flux(&un, &e.quad_weights, phik, phil);
        let (mut dfa_k, mut dfa_l) = (0.0, 0.0);
        let mut dfa_u = [0.0; MAXV];
        for q in 0..3 {
            let (w, s) = (e.quad_weights[q], un[q]);
            dfa_k += w * pos(s);
            dfa_l -= w * neg(s);
            let up = heaviside(s) * phik + heaviside(-s) * phil;
            for a in 0..n {
                for c in 0..2 {
                    dfa_u[c * n + a] += w * up * tab[q].values[a] * e.normal[c];
                }
            }
        }
        let ce = e.length / e.d_e;
        let am = forms::mobility_up(phik) + forms::mobility_down(phil);
        let bm = forms::mobility_up(phil) + forms::mobility_down(phik);
        let fb = ce * (pos(jm) * pos(am) - neg(jm) * pos(bm));
        let dfb_j = ce * (heaviside(jm) * pos(am) + heaviside(-jm) * pos(bm));
        let dfb_k = ce
            * (pos(jm) * heaviside(am) * forms::mobility_up_deriv(phik)
                - neg(jm) * heaviside(bm) * forms::mobility_down_deriv(phik));
        let dfb_l = ce
            * (pos(jm) * heaviside(am) * forms::mobility_down_deriv(phil)
                - neg(jm) * heaviside(bm) * forms::mobility_up_deriv(phil));
        let f = fa + fb;
        for (row, sign) in [(rk, 1.0), (rl, -1.0)] {
            out.r(row, sign * f);
            out.j(row, rk, sign * (dfa_k + dfb_k));
            out.j(row, rl, sign * (dfa_l + dfb_l));
            for i in 0..3 {
                out.j(row, mu_col(vk[i]), sign * dfb_j / 3.0);
                out.j(row, mu_col(vl[i]), -sign * dfb_j / 3.0);
            }
            for a in 0..n {
                for c in 0..2 {
                    out.j(row, vcol(c, a), sign * dfa_u[c * n + a]);
                }
            }
        }

        // momentum: centred coupling and stabilisation
        for a in 0..n {
            for c in 0..2 {
                let row = vcol(c, a);
                if row.is_none() {
                    continue;
                }
                let (mut r, mut dk, mut dl, mut dj) = (0.0, 0.0, 0.0, 0.0);
                let mut du = [0.0; MAXV];
                for q in 0..3 {
                    let w = e.quad_weights[q] * tab[q].values[a] * e.normal[c];
                    let sg = forms::reg_sign(un[q], prm.delta);
                    r += w * (-avg * jm - 0.5 * sg * jp * jm);
                    dk += w * (-0.5 * jm - 0.5 * sg * jm);
                    dl += w * (-0.5 * jm + 0.5 * sg * jm);
                    dj += w * (-avg - 0.5 * sg * jp);
                    let ds = forms::reg_sign_deriv(un[q], prm.delta);
                    for b in 0..n {
                        for cb in 0..2 {
                            du[cb * n + b] -= 0.5 * w * ds * jp * jm * tab[q].values[b] * e.normal[cb];
                        }
                    }
                }
                out.r(row, r);
                out.j(row, rk, dk);
                out.j(row, rl, dl);
                for i in 0..3 {
                    out.j(row, mu_col(vk[i]), dj / 3.0);
                    out.j(row, mu_col(vl[i]), -dj / 3.0);
                }
                for b in 0..n {
                    for cb in 0..2 {
                        out.j(row, vcol(cb, b), du[cb * n + b]);
                    }
                }
            }
        }
    }
}

#[inline]
fn scatter(m: &mut Csr, r: usize, c: usize, v: f64) {
    let (lo, hi) = (m.row_ptr[r], m.row_ptr[r + 1]);
    match m.col_idx[lo..hi].binary_search(&c) {
        Ok(k) => m.vals[lo + k] += v,
        Err(_) => panic!("entry ({r}, {c}) outside the Jacobian pattern"),
    }
}

/// `μ⁰` from the potential equation with `φ⁰` in both splitting slots.
pub fn initial_potential(d: &Discretization, params: &Params, phi: &[f64]) -> Vec<f64> {
    let phi_h = d.lumped_from_p0(phi);
    let mut b = vec![0.0; d.mesh.num_vertices()];
    for (t, el) in d.mesh.elements.iter().enumerate() {
        let g = d.p1_grad(t, &phi_h);
        for i in 0..3 {
            let gi = el.grad_lambda[i];
            b[el.vertices[i]] += params.lambda * params.eps * el.area * (g[0] * gi[0] + g[1] * gi[1]);
        }
        for q in 0..d.nq() {
            let ph = d.p1_at(t, q, &phi_h);
            let w = d.quad_weight(t, q) * params.lambda / params.eps * forms::potential_f(ph, ph);
            let lam = d.rule.points[q];
            for i in 0..3 {
                b[el.vertices[i]] += w * lam[i];
            }
        }
    }
    b.iter().zip(&d.lumped.diag).map(|(b, m)| b / m).collect()
}

/// Scalars recorded after every step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub mass_h: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub phi_h_min: f64,
    pub phi_h_max: f64,
    pub energy: forms::Energy,
    /// Left side minus right side of the regularised energy law; `≤ 0` up to
    /// solver tolerance.
    pub defect: f64,
    /// `|a_upw + c_h + s_h|` with the exact sign, divided by
    /// `max(1, |a_upw| + |c_h| + |s_h|)`.
    pub lemma34: f64,
    /// Largest elementwise net outflux `|Σ_e ∫(u·n)[1_K]|`.
    pub incompressibility: f64,
    pub u_l2: f64,
    pub newton_iters: usize,
    pub xi_p_inf: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str =
        "t,mass,phi_min,phi_max,phi_h_min,phi_h_max,E,E_kin,E_grad,E_pot,defect,lemma34,newton_iters,xi_p_inf";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e}",
            self.t,
            self.mass,
            self.phi_min,
            self.phi_max,
            self.phi_h_min,
            self.phi_h_max,
            self.energy.total(),
            self.energy.kinetic,
            self.energy.gradient,
            self.energy.potential,
            self.defect,
            self.lemma34,
            self.newton_iters,
            self.xi_p_inf
        )
    }

    pub fn values(&self) -> [f64; 14] {
        [
            self.t,
            self.mass,
            self.phi_min,
            self.phi_max,
            self.phi_h_min,
            self.phi_h_max,
            self.energy.total(),
            self.energy.kinetic,
            self.energy.gradient,
            self.energy.potential,
            self.defect,
            self.lemma34,
            self.newton_iters as f64,
            self.xi_p_inf,
        ]
    }
}

/// Tolerances for [`post_step_checks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckTolerances {
    pub bound: f64,
    /// Relative to `|Ω|`.
    pub mass: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        CheckTolerances { bound: 1e-8, mass: 1e-10 }
    }
}

/// Diagnostics of a step without any pass/fail decision.
pub fn diagnostics(d: &Discretization, params: &Params, new: &State, old: &State, t: f64) -> DiagnosticsRecord {
    let e1 = forms::energy(d, params, &new.u, &new.phi_h);
    let e0 = forms::energy(d, params, &old.u, &old.phi_h);
    let mu0 = d.p0_of_p1(&new.mu);
    let visc = forms::viscous(d, params.eta, &new.u, &new.u);
    let b = forms::b_upw(d, &new.mu, &new.phi, &mu0);
    let reg: f64 = d
        .mesh
        .interior_edges
        .iter()
        .enumerate()
        .map(|(ie, e)| {
            let un = d.edge_normal_velocity(ie, &new.u);
            let jj = (mu0[e.k] - mu0[e.l]) * (new.phi[e.k] - new.phi[e.l]);
            (0..3).map(|q| e.quad_weights[q] * un[q].abs() / (un[q].abs() + params.delta) * jj).sum::<f64>()
        })
        .sum();
    let defect = (e1.total() - e0.total()) / params.dt + visc + b + 0.5 * params.delta * reg;

    let a = forms::a_upw(d, &new.u, &new.phi, &mu0);
    let c = forms::c_h(d, &new.phi, &mu0, &new.u);
    let s = forms::s_h(d, &new.u, &new.phi, &mu0, &new.u, 0.0);
    let lemma34 = (a + c + s).abs() / (a.abs() + c.abs() + s.abs()).max(1.0);

    let mut net = vec![0.0; d.mesh.num_elements()];
    for (ie, e) in d.mesh.interior_edges.iter().enumerate() {
        let un = d.edge_normal_velocity(ie, &new.u);
        let flux: f64 = (0..3).map(|q| e.quad_weights[q] * un[q]).sum();
        net[e.k] += flux;
        net[e.l] -= flux;
    }
    let incompressibility = net.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let u_l2 = d.velocity_l2(&new.u);

    DiagnosticsRecord {
        t,
        mass: d.integral_p0(&new.phi),
        mass_h: d.integral_p1(&new.phi_h),
        phi_min: min(&new.phi),
        phi_max: max(&new.phi),
        phi_h_min: min(&new.phi_h),
        phi_h_max: max(&new.phi_h),
        energy: e1,
        defect,
        lemma34,
        incompressibility,
        u_l2,
        newton_iters: 0,
        xi_p_inf: params.xi * new.p.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    }
}

/// Diagnostics plus the hard invariants: pointwise bounds and mass.
pub fn post_step_checks(
    d: &Discretization,
    params: &Params,
    new: &State,
    old: &State,
    t: f64,
    step: usize,
    tol: CheckTolerances,
) -> Result<DiagnosticsRecord> {
    let rec = diagnostics(d, params, new, old, t);
    for (k, &v) in new.phi.iter().enumerate() {
        if !(v >= -1.0 - tol.bound && v <= 1.0 + tol.bound) {
            return Err(Error::BoundViolation { step, element: k, value: v });
        }
    }
    for &v in &new.phi_h {
        if !(v >= -1.0 - tol.bound && v <= 1.0 + tol.bound) {
            return Err(Error::InvariantViolation { step, detail: format!("lumped phase value {v:e} out of [-1, 1]") });
        }
    }
    let reference = d.integral_p0(&old.phi);
    if (rec.mass - reference).abs() > tol.mass * d.mesh.domain.area() {
        return Err(Error::MassDrift { step, mass: rec.mass, reference });
    }
    Ok(rec)
}

fn min(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn max(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}
