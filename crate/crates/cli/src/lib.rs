//! Command-line entry point.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::{known_keys, parse_pairs, RunConfig};

use chns_base::{Error, Result};
use chns_mesh::{Rect, StructuredTriMesh};
use chns_sim::{self as sim, ConvergenceSpec, RunOptions, ScenarioKind, Simulation};
use chns_system::{self as system, DiagnosticsRecord};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NONCONVERGENCE: u8 = 3;
pub const EXIT_INVARIANT: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "chns",
    version,
    about = "Cahn-Hilliard-Navier-Stokes solver with bound-preserving upwind DG phase field"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write a run directory.
    Run(RunArgs),
    /// Convergence orders of the accuracy scenario against a fine reference.
    Converge(ConvergeArgs),
    /// Report the orthogonality defect of a mesh.
    ValidateMesh(MeshArgs),
    /// Replay the state snapshots of a run directory through the step checks.
    CheckInvariants(CheckArgs),
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub pair: Option<String>,
    /// Any config key, e.g. `--set delta=1e-8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Overrides {
    fn pairs(&self) -> Result<BTreeMap<String, String>> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("scenario", self.scenario.clone());
        put("nx", self.nx.map(|v| v.to_string()));
        put("ny", self.ny.map(|v| v.to_string()));
        put("dt", self.dt.map(|v| format!("{v:?}")));
        put("t_end", self.t_end.map(|v| format!("{v:?}")));
        put("backend", self.backend.clone());
        put("pair", self.pair.clone());
        for s in &self.set {
            let (k, v) =
                s.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{s}'")))?;
            m.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(m)
    }

    /// Scenario defaults, then file keys, then flags.
    pub fn resolve(&self, fallback: ScenarioKind) -> Result<RunConfig> {
        let flags = self.pairs()?;
        let file = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_pairs(&text)?
            }
            None => BTreeMap::new(),
        };
        let name = flags.get("scenario").or_else(|| file.get("scenario"));
        let scenario = match name {
            Some(s) => ScenarioKind::from_name(s).ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))?,
            None => fallback,
        };
        let mut cfg = RunConfig::for_scenario(scenario);
        cfg.apply(&file)?;
        cfg.apply(&flags)?;
        // an explicit nx without ny keeps the mesh square
        if flags.contains_key("nx") && !flags.contains_key("ny") && !file.contains_key("ny") {
            cfg.ny = cfg.nx;
        }
        if file.contains_key("nx") && !file.contains_key("ny") && !flags.contains_key("ny") && !flags.contains_key("nx")
        {
            cfg.ny = cfg.nx;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Number of steps; defaults to `t_end / dt`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Snapshot stride.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Comma-separated coarse meshes.
    #[arg(long, value_delimiter = ',', default_value = "16,24,32")]
    pub meshes: Vec<usize>,
    #[arg(long, default_value_t = 96)]
    pub reference: usize,
    /// Also write the table here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[arg(long)]
    pub nx: usize,
    #[arg(long)]
    pub ny: Option<usize>,
    /// Write the mesh as VTK.
    #[arg(long)]
    pub vtk: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Run directory.
    pub dir: PathBuf,
}

/// Process exit code of an error.
pub fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::InvalidParams(_) | Error::InvalidMesh(_) => EXIT_CONFIG,
        Error::NonConvergence { .. } | Error::LinearSolveFailure { .. } => EXIT_NONCONVERGENCE,
        Error::BoundViolation { .. }
        | Error::MassDrift { .. }
        | Error::InvariantViolation { .. }
        | Error::HypothesisViolation { .. } => EXIT_INVARIANT,
        _ => EXIT_OTHER,
    }
}

/// Caps the rayon pool at `CHNS_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("CHNS_THREADS") else {
        return Ok(());
    };
    let n: usize =
        v.trim().parse().map_err(|_| Error::Config(format!("CHNS_THREADS must be a positive integer, got '{v}'")))?;
    if n == 0 {
        return Err(Error::Config("CHNS_THREADS must be positive".into()));
    }
    // a pool built earlier in the process wins
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| execute(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Runs one subcommand, printing to stdout.
pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(a) => cmd_run(a).map(|_| ()),
        Command::Converge(a) => cmd_converge(a).map(|t| print!("{t}")),
        Command::ValidateMesh(a) => cmd_validate_mesh(a).map(|s| print!("{s}")),
        Command::CheckInvariants(a) => cmd_check(&a.dir).map(|s| print!("{s}")),
    }
}

pub fn cmd_run(a: RunArgs) -> Result<RunConfig> {
    let mut cfg = a.overrides.resolve(ScenarioKind::Circle)?;
    if let Some(s) = a.steps {
        cfg.steps = Some(s);
    }
    if let Some(s) = a.stride {
        cfg.stride = s;
    }
    if let Some(o) = a.out {
        cfg.out_dir = o;
    }
    cfg.validate()?;
    run_config(&cfg)?;
    Ok(cfg)
}

/// Executes a resolved configuration into `cfg.out_dir`.
pub fn run_config(cfg: &RunConfig) -> Result<sim::RunSummary> {
    let mut simulation = Simulation::new(cfg.setup())?;
    let opts =
        RunOptions { dir: cfg.out_dir.clone(), steps: cfg.num_steps(), stride: cfg.stride, snapshot: cfg.serialize() };
    let summary = sim::run(&mut simulation, &opts)?;
    if let Some(last) = summary.records.last() {
        println!(
            "{}: {} steps to t = {:e}, E = {:.9e}, phi_h in [{:.12}, {:.12}] -> {}",
            cfg.scenario.name(),
            summary.steps,
            last.t,
            last.energy.total(),
            last.phi_h_min,
            last.phi_h_max,
            cfg.out_dir.display()
        );
    }
    Ok(summary)
}

pub fn cmd_converge(a: ConvergeArgs) -> Result<String> {
    let cfg = a.overrides.resolve(ScenarioKind::Accuracy)?;
    if a.meshes.is_empty() {
        return Err(Error::Config("--meshes must list at least one mesh".into()));
    }
    let spec =
        ConvergenceSpec { meshes: a.meshes, reference: a.reference, dt: cfg.dt, t_end: cfg.t_end, base: cfg.setup() };
    let text = sim::convergence_harness(&spec)?.to_text();
    if let Some(p) = &a.out {
        std::fs::write(p, &text).map_err(|e| Error::io(p, e))?;
    }
    Ok(text)
}

pub fn cmd_validate_mesh(a: MeshArgs) -> Result<String> {
    let ny = a.ny.unwrap_or(a.nx);
    let mesh = StructuredTriMesh::build(Rect::centered_unit(), a.nx, ny)?;
    if let Some(p) = &a.vtk {
        chns_sim::vtk::write_mesh(p, &mesh)?;
    }
    let (defect, worst) = mesh.orthogonality_defect();
    let mut s = format!(
        "mesh {}x{}: {} vertices, {} elements, {} interior edges, h = {:.6e}\northogonality defect = {:e}{}\n",
        a.nx,
        ny,
        mesh.num_vertices(),
        mesh.num_elements(),
        mesh.interior_edges.len(),
        mesh.h(),
        defect,
        worst.map_or(String::new(), |e| format!(" (interior edge {e})"))
    );
    mesh.validate_hypothesis()?;
    s.push_str("hypothesis satisfied\n");
    Ok(s)
}

/// Replays consecutive state snapshots of `dir` and rescans its diagnostics.
pub fn cmd_check(dir: &Path) -> Result<String> {
    let cfg = RunConfig::load(&dir.join("config.snapshot"), ScenarioKind::Circle)?;
    let setup = cfg.setup();
    let d = setup.discretization()?;
    let mut dumps: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("state_") && n.ends_with(".txt"))
        })
        .collect();
    dumps.sort();
    if dumps.is_empty() {
        return Err(Error::Config(format!("{}: no state snapshots", dir.display())));
    }
    let load = |p: &Path| -> Result<(usize, f64, system::State)> {
        let dump = sim::read_state(p)?;
        let s = system::State::new(&d, dump.u, dump.p, dump.phi, dump.mu)
            .map_err(|e| Error::Parse { path: p.into(), detail: e.to_string() })?;
        Ok((dump.step, dump.t, s))
    };
    let (_, _, mut old) = load(&dumps[0])?;
    for p in &dumps[1..] {
        let (step, t, new) = load(p)?;
        system::post_step_checks(&d, &setup.params, &new, &old, t, step, setup.tolerances)?;
        old = new;
    }
    let rows = check_csv(&dir.join("diagnostics.csv"), setup.tolerances.bound)?;
    Ok(format!("{}: {} snapshots and {rows} diagnostics rows consistent\n", dir.display(), dumps.len()))
}

fn check_csv(path: &Path, bound: f64) -> Result<usize> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(DiagnosticsRecord::CSV_HEADER) {
        return Err(Error::Parse { path: path.into(), detail: "unexpected header".into() });
    }
    let mut n = 0;
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { path: path.into(), detail: format!("row {}: {e}", i + 1) })?;
        let step = i + 1;
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation { step, detail: format!("non-finite diagnostics column {k}") });
        }
        if vals[4] < -1.0 - bound || vals[5] > 1.0 + bound {
            return Err(Error::InvariantViolation { step, detail: format!("phi_h range [{}, {}]", vals[4], vals[5]) });
        }
        n += 1;
    }
    Ok(n)
}
