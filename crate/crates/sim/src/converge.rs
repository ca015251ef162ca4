//! Errors against a fine reference run and observed convergence orders.

use rayon::prelude::*;

use super::{steps_for, Setup, Simulation};
use chns_base::{Error, Result};
use chns_fespace::Discretization;
use chns_system::State;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSpec {
    pub meshes: Vec<usize>,
    pub reference: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Scenario and parameters; `nx`, `ny` and `dt` are overridden.
    pub base: Setup,
}

/// Errors of one mesh against the reference at the final time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub nx: usize,
    pub h: f64,
    pub phi_l2: f64,
    pub phi_h1: f64,
    pub u_l2: f64,
    pub u_h1: f64,
    /// Pressure error after removing the mean of each field.
    pub p_l2: f64,
}

impl ConvergenceRow {
    pub const NAMES: [&'static str; 5] = ["phi_h_L2", "phi_h_H1", "u_L2", "u_H1", "p_L2"];

    pub fn errors(&self) -> [f64; 5] {
        [self.phi_l2, self.phi_h1, self.u_l2, self.u_h1, self.p_l2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub reference: usize,
    pub rows: Vec<ConvergenceRow>,
    /// `orders[k]` compares `rows[k]` with `rows[k + 1]`.
    pub orders: Vec<[f64; 5]>,
}

impl ConvergenceTable {
    pub fn to_text(&self) -> String {
        let mut s = format!("# reference nx = {}\nnx,h", self.reference);
        for n in ConvergenceRow::NAMES {
            s.push_str(&format!(",{n},{n}_order"));
        }
        s.push('\n');
        for (k, r) in self.rows.iter().enumerate() {
            s.push_str(&format!("{},{:.6e}", r.nx, r.h));
            for (i, e) in r.errors().iter().enumerate() {
                let order = if k == 0 { String::from("-") } else { format!("{:.4}", self.orders[k - 1][i]) };
                s.push_str(&format!(",{e:.6e},{order}"));
            }
            s.push('\n');
        }
        s
    }
}

fn run_to_end(base: &Setup, nx: usize, dt: f64, t_end: f64) -> Result<(Discretization, State)> {
    let mut setup = base.clone();
    setup.nx = nx;
    setup.ny = nx;
    setup.params.dt = dt;
    let mut sim = Simulation::new(setup)?;
    for _ in 0..steps_for(t_end, dt) {
        sim.step()?;
    }
    Ok((sim.d, sim.state))
}

fn pressure_mean(d: &Discretization, p: &[f64]) -> f64 {
    let mut s = 0.0;
    for t in 0..d.mesh.num_elements() {
        for q in 0..d.nq() {
            s += d.quad_weight(t, q) * d.pressure_at_lambda(t, d.rule.points[q], p);
        }
    }
    s / d.mesh.domain.area()
}

/// Errors of a coarse solution against a reference evaluated at the coarse
/// quadrature points.
pub fn errors_against(dc: &Discretization, sc: &State, df: &Discretization, sf: &State) -> Result<ConvergenceRow> {
    let (pmc, pmf) = (pressure_mean(dc, &sc.p), pressure_mean(df, &sf.p));
    let per_element: Vec<Option<[f64; 5]>> = (0..dc.mesh.num_elements())
        .into_par_iter()
        .map(|t| {
            let mut acc = [0.0; 5];
            let gc = dc.p1_grad(t, &sc.phi_h);
            for q in 0..dc.nq() {
                let w = dc.quad_weight(t, q);
                let x = dc.quad_point(t, q);
                let (tf, lf) = df.mesh.locate(x)?;
                let vf = df.mesh.elements[tf].vertices;
                let phf: f64 = (0..3).map(|i| lf[i] * sf.phi_h[vf[i]]).sum();
                let gf = df.p1_grad(tf, &sf.phi_h);
                let (uc, guc) = dc.velocity_eval(t, &dc.vel_tab[q], &sc.u);
                let (uf, guf) = df.velocity_at_lambda(tf, lf, &sf.u);
                let pc = dc.pressure_at_lambda(t, dc.rule.points[q], &sc.p) - pmc;
                let pf = df.pressure_at_lambda(tf, lf, &sf.p) - pmf;
                let e = dc.p1_at(t, q, &sc.phi_h) - phf;
                acc[0] += w * e * e;
                acc[1] += w * ((gc[0] - gf[0]).powi(2) + (gc[1] - gf[1]).powi(2));
                for c in 0..2 {
                    acc[2] += w * (uc[c] - uf[c]).powi(2);
                    for k in 0..2 {
                        acc[3] += w * (guc[c][k] - guf[c][k]).powi(2);
                    }
                }
                acc[4] += w * (pc - pf).powi(2);
            }
            Some(acc)
        })
        .collect();
    let mut sum = [0.0; 5];
    for (t, acc) in per_element.iter().enumerate() {
        let acc = acc
            .ok_or_else(|| Error::InvalidMesh(format!("quadrature point of element {t} outside the reference mesh")))?;
        for i in 0..5 {
            sum[i] += acc[i];
        }
    }
    Ok(ConvergenceRow {
        nx: dc.mesh.nx,
        h: dc.mesh.h(),
        phi_l2: sum[0].sqrt(),
        phi_h1: (sum[0] + sum[1]).sqrt(),
        u_l2: sum[2].sqrt(),
        u_h1: (sum[2] + sum[3]).sqrt(),
        p_l2: sum[4].sqrt(),
    })
}

/// Runs every mesh and the reference to `t_end` with the same `dt` and
/// tabulates errors and orders `log(e₁/e₂) / log(h₁/h₂)`.
pub fn convergence_harness(spec: &ConvergenceSpec) -> Result<ConvergenceTable> {
    if spec.meshes.is_empty() {
        return Err(Error::InvalidParams("mesh list is empty".into()));
    }
    for &nx in &spec.meshes {
        if nx == 0 || !spec.reference.is_multiple_of(nx) {
            return Err(Error::InvalidParams(format!(
                "reference nx {} is not an integer multiple of nx {nx} (meshes must be nested)",
                spec.reference
            )));
        }
    }
    let (df, sf) = run_to_end(&spec.base, spec.reference, spec.dt, spec.t_end)?;
    let mut rows = Vec::new();
    for &nx in &spec.meshes {
        let row = if nx == spec.reference {
            errors_against(&df, &sf, &df, &sf)?
        } else {
            let (dc, sc) = run_to_end(&spec.base, nx, spec.dt, spec.t_end)?;
            errors_against(&dc, &sc, &df, &sf)?
        };
        rows.push(row);
    }
    let orders = rows
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].errors(), w[1].errors());
            std::array::from_fn(|i| (a[i] / b[i]).ln() / (w[0].h / w[1].h).ln())
        })
        .collect();
    Ok(ConvergenceTable { reference: spec.reference, rows, orders })
}
