//! Time loop, scenarios, run directories and the convergence harness.

mod converge;
mod dump;
mod scenario;
pub mod vtk;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub use converge::{convergence_harness, errors_against, ConvergenceRow, ConvergenceSpec, ConvergenceTable};
pub use dump::{read_state, write_state, StateDump};
pub use scenario::{ScenarioDefaults, ScenarioKind};

use chns_base::sparse::Csr;
use chns_base::{Error, Result};
use chns_fespace::{Discretization, VelocityPressurePair};
use chns_forms::Params;
use chns_mesh::{Rect, StructuredTriMesh};
use chns_solver::{newton_solve, LinearSolver, NewtonConfig};
use chns_system::{self as system, CheckTolerances, DiagnosticsRecord, State, StepSystem};

/// Everything that defines a run apart from output options.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub scenario: ScenarioKind,
    pub nx: usize,
    pub ny: usize,
    pub chi: f64,
    pub pair: VelocityPressurePair,
    pub params: Params,
    pub newton: NewtonConfig,
    pub tolerances: CheckTolerances,
}

impl Setup {
    /// Scenario defaults with the shared physical parameters.
    pub fn for_scenario(scenario: ScenarioKind) -> Self {
        let def = scenario.defaults();
        Setup {
            scenario,
            nx: def.nx,
            ny: def.nx,
            chi: def.chi,
            pair: VelocityPressurePair::default(),
            params: Params { dt: def.dt, gravity: def.gravity, ..Params::default() },
            newton: NewtonConfig::default(),
            tolerances: CheckTolerances::default(),
        }
    }

    pub fn discretization(&self) -> Result<Discretization> {
        let mesh = StructuredTriMesh::build(Rect::centered_unit(), self.nx, self.ny)?;
        mesh.validate_hypothesis()?;
        Discretization::new(mesh, self.pair)
    }
}

/// `φ⁰ = Π0 φ0`, nodal `u⁰`, `p⁰ = 0` and `μ⁰` from the potential equation.
pub fn initial_fields(d: &Discretization, setup: &Setup) -> Result<State> {
    let kind = setup.scenario;
    let eps = setup.params.eps;
    let phi = d.interpolate_phase(|x| kind.phi0(eps, x)).coeffs;
    let u = d.interpolate_velocity(|x| kind.u0(setup.chi, x)).coeffs;
    let mu = system::initial_potential(d, &setup.params, &phi);
    State::new(d, u, vec![0.0; d.pressure.dof_count()], phi, mu)
}

/// A running simulation.
pub struct Simulation {
    pub setup: Setup,
    pub d: Discretization,
    pub state: State,
    pub step: usize,
    linear: LinearSolver,
    pattern: Option<Csr>,
    /// Residual history of the most recent Newton solve.
    pub last_history: Vec<f64>,
}

impl Simulation {
    pub fn new(setup: Setup) -> Result<Self> {
        setup.params.validate()?;
        setup.newton.validate()?;
        let d = setup.discretization()?;
        let state = initial_fields(&d, &setup)?;
        Ok(Self::from_state(setup, d, state, 0))
    }

    pub fn from_state(setup: Setup, d: Discretization, state: State, step: usize) -> Self {
        let linear = setup.newton.linear_solver();
        Simulation { setup, d, state, step, linear, pattern: None, last_history: Vec::new() }
    }

    /// Resumes from a state dump written by [`run`].
    pub fn restart(setup: Setup, dump_path: &Path) -> Result<Self> {
        let d = setup.discretization()?;
        let dump = read_state(dump_path)?;
        let state = State::new(&d, dump.u, dump.p, dump.phi, dump.mu)
            .map_err(|e| Error::Parse { path: dump_path.into(), detail: e.to_string() })?;
        Ok(Self::from_state(setup, d, state, dump.step))
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.setup.params.dt
    }

    /// Advances one step and checks bounds and mass.
    pub fn step(&mut self) -> Result<DiagnosticsRecord> {
        let step = self.step + 1;
        let wrap = |e: Error| Error::Step { step, source: Box::new(e) };
        let (x, report) = {
            let mut sys = StepSystem::new(&self.d, self.setup.params, &self.state)
                .map_err(wrap)?
                .with_pattern(self.pattern.take());
            let x0 = sys.initial_guess();
            let out = newton_solve(&mut sys, x0, &self.setup.newton, &mut self.linear);
            self.pattern = sys.pattern().cloned();
            out.map_err(wrap)?
        };
        self.last_history = report.residual_history.clone();
        let new = system::BlockLayout::new(&self.d).unpack(&self.d, &x).map_err(wrap)?;
        let t = step as f64 * self.setup.params.dt;
        let mut rec =
            system::post_step_checks(&self.d, &self.setup.params, &new, &self.state, t, step, self.setup.tolerances)?;
        rec.newton_iters = report.iterations;
        self.state = new;
        self.step = step;
        Ok(rec)
    }
}

/// Output options of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub dir: PathBuf,
    pub steps: usize,
    /// Field and state snapshots every `stride` steps (and at the last step).
    pub stride: usize,
    /// Contents of `config.snapshot`.
    pub snapshot: String,
}

/// Summary of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub records: Vec<DiagnosticsRecord>,
}

pub fn snapshot_name(prefix: &str, step: usize, ext: &str) -> String {
    format!("{prefix}_{step:06}.{ext}")
}

fn write_snapshot(dir: &Path, sim: &Simulation) -> Result<()> {
    vtk::write_vtk(&dir.join(snapshot_name("fields", sim.step, "vtk")), &sim.d, &sim.state)?;
    write_state(&dir.join(snapshot_name("state", sim.step, "txt")), sim.step, sim.time(), &sim.state)
}

/// Runs `opts.steps` steps, writing `config.snapshot`, `diagnostics.csv`
/// and strided snapshots. Outputs written before a failure are kept.
pub fn run(sim: &mut Simulation, opts: &RunOptions) -> Result<RunSummary> {
    let dir = &opts.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let snap = dir.join("config.snapshot");
    std::fs::write(&snap, &opts.snapshot).map_err(|e| Error::io(&snap, e))?;
    let csv_path = dir.join("diagnostics.csv");
    let mut csv = BufWriter::new(File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?);
    writeln!(csv, "{}", DiagnosticsRecord::CSV_HEADER).map_err(|e| Error::io(&csv_path, e))?;
    let stride = opts.stride.max(1);
    if sim.step.is_multiple_of(stride) {
        write_snapshot(dir, sim)?;
    }
    let mut records = Vec::with_capacity(opts.steps);
    for k in 0..opts.steps {
        let rec = sim.step();
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                csv.flush().map_err(|e| Error::io(&csv_path, e))?;
                return Err(e);
            }
        };
        writeln!(csv, "{}", rec.csv_row()).map_err(|e| Error::io(&csv_path, e))?;
        csv.flush().map_err(|e| Error::io(&csv_path, e))?;
        if sim.step.is_multiple_of(stride) || k + 1 == opts.steps {
            write_snapshot(dir, sim)?;
        }
        records.push(rec);
    }
    Ok(RunSummary { steps: opts.steps, records })
}

/// Number of steps needed to reach `t_end` from zero.
pub fn steps_for(t_end: f64, dt: f64) -> usize {
    (t_end / dt - 1e-9).ceil().max(0.0) as usize
}
