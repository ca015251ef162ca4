use std::ops::Range;

use super::linear::{Backend, LinearSolver};
use chns_base::sparse::Csr;
use chns_base::{Error, Result};
use chns_system::StepSystem;

/// Settings of the nonlinear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub linear_backend: Backend,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    /// Backtracking by halving, at most `max_halvings` times.
    pub damping: bool,
    pub max_halvings: usize,
    /// Restart from the initial guess with damping when full steps fail.
    pub damped_retry: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_iter: 50,
            linear_backend: Backend::DirectLu,
            gmres_tol: 1e-12,
            gmres_restart: 200,
            damping: false,
            max_halvings: 8,
            damped_retry: true,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.gmres_tol > 0.0) {
            return Err(Error::InvalidParams("solver tolerances must be positive".into()));
        }
        if self.max_iter == 0 || self.gmres_restart == 0 {
            return Err(Error::InvalidParams("max_iter and gmres_restart must be at least 1".into()));
        }
        Ok(())
    }

    pub fn linear_solver(&self) -> LinearSolver {
        let mut s = LinearSolver::new(self.linear_backend);
        s.gmres_tol = self.gmres_tol;
        s.gmres_restart = self.gmres_restart;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    /// `‖R‖₂` of the initial guess followed by one entry per iteration.
    pub residual_history: Vec<f64>,
    /// Whether the result comes from the damped restart.
    pub damped_retry: bool,
}

/// A square nonlinear system `R(x) = 0`.
pub trait NonlinearSystem {
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn residual_and_jacobian(&mut self, x: &[f64]) -> Result<(Vec<f64>, Csr)>;
    /// Residual and the matrix used for the Newton update. The matrix may
    /// have trailing auxiliary rows and columns; their right-hand side is
    /// zero and their solution entries are dropped.
    fn newton_matrix(&mut self, x: &[f64]) -> Result<(Vec<f64>, Csr)> {
        self.residual_and_jacobian(x)
    }
    fn blocks(&self) -> Vec<(&'static str, Range<usize>)> {
        Vec::new()
    }
    /// Planar location of every unknown of the Newton matrix; steers the
    /// fill-reducing ordering of the direct solver.
    fn points(&self) -> Option<Vec<[f64; 2]>> {
        None
    }
}

impl NonlinearSystem for StepSystem<'_> {
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        StepSystem::residual(self, x)
    }

    fn residual_and_jacobian(&mut self, x: &[f64]) -> Result<(Vec<f64>, Csr)> {
        StepSystem::residual_and_jacobian(self, x)
    }

    fn newton_matrix(&mut self, x: &[f64]) -> Result<(Vec<f64>, Csr)> {
        StepSystem::residual_and_extended_jacobian(self, x)
    }

    fn blocks(&self) -> Vec<(&'static str, Range<usize>)> {
        let l = self.layout;
        vec![
            ("velocity", 0..l.p_off()),
            ("pressure", l.p_off()..l.phi_off()),
            ("phase", l.phi_off()..l.mu_off()),
            ("potential", l.mu_off()..l.total()),
            ("projection", l.total()..l.total() + l.nmu),
        ]
    }

    fn points(&self) -> Option<Vec<[f64; 2]>> {
        Some(self.unknown_points())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton's method with at least one update. Stops once
/// `‖R(x)‖₂ ≤ max(abs_tol, rel_tol ‖R(x₀)‖₂)`. Without damping, a solve that
/// fails to converge or hits a singular Jacobian is repeated with damping
/// when `damped_retry` is set.
pub fn newton_solve(
    sys: &mut impl NonlinearSystem,
    x0: Vec<f64>,
    cfg: &NewtonConfig,
    linear: &mut LinearSolver,
) -> Result<(Vec<f64>, NewtonReport)> {
    cfg.validate()?;
    if cfg.damping || !cfg.damped_retry {
        return iterate(sys, x0, cfg, linear);
    }
    match iterate(sys, x0.clone(), cfg, linear) {
        Err(Error::NonConvergence { .. } | Error::LinearSolveFailure { .. }) => {
            let damped = NewtonConfig { damping: true, ..*cfg };
            let (x, mut report) = iterate(sys, x0, &damped, linear)?;
            report.damped_retry = true;
            Ok((x, report))
        }
        other => other,
    }
}

fn iterate(
    sys: &mut impl NonlinearSystem,
    x0: Vec<f64>,
    cfg: &NewtonConfig,
    linear: &mut LinearSolver,
) -> Result<(Vec<f64>, NewtonReport)> {
    let mut x = x0;
    let (mut r, mut jac) = sys.newton_matrix(&x)?;
    let blocks: Vec<_> = sys.blocks().into_iter().filter(|(_, b)| b.end <= jac.ncols).collect();
    let mut rn = norm(&r);
    let mut report = NewtonReport { iterations: 0, residual_history: vec![rn], damped_retry: false };
    if !rn.is_finite() {
        return Err(Error::NonConvergence { iterations: 0, last_residual: rn });
    }
    let tol = cfg.abs_tol.max(cfg.rel_tol * rn);
    for it in 1..=cfg.max_iter {
        let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        rhs.resize(jac.nrows, 0.0);
        let mut dx = linear.solve_located(&jac, &rhs, &blocks, &|| sys.points())?;
        dx.truncate(x.len());
        let mut step = 1.0;
        let mut trial: Vec<f64>;
        let mut r_trial;
        loop {
            trial = x.iter().zip(&dx).map(|(a, b)| a + step * b).collect();
            r_trial = sys.residual(&trial)?;
            let n = norm(&r_trial);
            let halvings = (1.0 / step).log2().round() as usize;
            if !cfg.damping || n < rn || halvings >= cfg.max_halvings {
                break;
            }
            step *= 0.5;
        }
        x = trial;
        rn = norm(&r_trial);
        report.iterations = it;
        report.residual_history.push(rn);
        if !rn.is_finite() {
            return Err(Error::NonConvergence { iterations: it, last_residual: rn });
        }
        if rn <= tol {
            return Ok((x, report));
        }
        (r, jac) = sys.newton_matrix(&x)?;
    }
    Err(Error::NonConvergence { iterations: cfg.max_iter, last_residual: rn })
}
