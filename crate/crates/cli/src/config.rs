//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chns_base::{Error, Result};
use chns_fespace::VelocityPressurePair;
use chns_forms::Params;
use chns_sim::{steps_for, ScenarioKind, Setup};
use chns_solver::{Backend, NewtonConfig};
use chns_system::CheckTolerances;

/// Every knob of a run. Serialized as one `key = value` per line; `#`
/// starts a comment and `[section]` headers are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Overrides `t_end / dt` when set.
    pub steps: Option<usize>,
    pub chi: f64,
    pub params: Params,
    pub pair: VelocityPressurePair,
    pub newton: NewtonConfig,
    pub tolerances: CheckTolerances,
    pub stride: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
}

const KEYS: &[&str] = &[
    "scenario",
    "nx",
    "ny",
    "dt",
    "t_end",
    "steps",
    "chi",
    "eps",
    "lambda",
    "rho1",
    "rho2",
    "eta",
    "delta",
    "xi",
    "gravity_x",
    "gravity_y",
    "pair",
    "backend",
    "abs_tol",
    "rel_tol",
    "max_iter",
    "gmres_tol",
    "gmres_restart",
    "damping",
    "max_halvings",
    "damped_retry",
    "bound_tol",
    "mass_tol",
    "stride",
    "out_dir",
    "seed",
];

impl RunConfig {
    pub fn for_scenario(scenario: ScenarioKind) -> Self {
        let def = scenario.defaults();
        let setup = Setup::for_scenario(scenario);
        RunConfig {
            scenario,
            nx: setup.nx,
            ny: setup.ny,
            dt: def.dt,
            t_end: def.t_end,
            steps: None,
            chi: setup.chi,
            params: setup.params,
            pair: setup.pair,
            newton: setup.newton,
            tolerances: setup.tolerances,
            stride: 10,
            out_dir: PathBuf::from(format!("runs/{}", scenario.name())),
            seed: 0,
        }
    }

    pub fn num_steps(&self) -> usize {
        self.steps.unwrap_or_else(|| steps_for(self.t_end, self.dt))
    }

    pub fn setup(&self) -> Setup {
        Setup {
            scenario: self.scenario,
            nx: self.nx,
            ny: self.ny,
            chi: self.chi,
            pair: self.pair,
            params: Params { dt: self.dt, ..self.params },
            newton: self.newton.clone(),
            tolerances: self.tolerances,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Config("nx and ny must be positive".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        if !(self.tolerances.bound >= 0.0 && self.tolerances.mass >= 0.0) {
            return Err(Error::Config("check tolerances must be nonnegative".into()));
        }
        self.setup().params.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.newton.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies one key. Unknown keys and malformed values are config errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "scenario" => self.scenario = ScenarioKind::from_name(v).ok_or_else(|| bad(key, v))?,
            "nx" => self.nx = num(key, v)?,
            "ny" => self.ny = num(key, v)?,
            "dt" => self.dt = num(key, v)?,
            "t_end" => self.t_end = num(key, v)?,
            "steps" => self.steps = if v == "auto" { None } else { Some(num(key, v)?) },
            "chi" => self.chi = num(key, v)?,
            "eps" => self.params.eps = num(key, v)?,
            "lambda" => self.params.lambda = num(key, v)?,
            "rho1" => self.params.rho1 = num(key, v)?,
            "rho2" => self.params.rho2 = num(key, v)?,
            "eta" => self.params.eta = num(key, v)?,
            "delta" => self.params.delta = num(key, v)?,
            "xi" => self.params.xi = num(key, v)?,
            "gravity_x" => self.params.gravity[0] = num(key, v)?,
            "gravity_y" => self.params.gravity[1] = num(key, v)?,
            "pair" => self.pair = VelocityPressurePair::from_name(v).ok_or_else(|| bad(key, v))?,
            "backend" => self.newton.linear_backend = Backend::from_name(v).ok_or_else(|| bad(key, v))?,
            "abs_tol" => self.newton.abs_tol = num(key, v)?,
            "rel_tol" => self.newton.rel_tol = num(key, v)?,
            "max_iter" => self.newton.max_iter = num(key, v)?,
            "gmres_tol" => self.newton.gmres_tol = num(key, v)?,
            "gmres_restart" => self.newton.gmres_restart = num(key, v)?,
            "damping" => self.newton.damping = num(key, v)?,
            "max_halvings" => self.newton.max_halvings = num(key, v)?,
            "damped_retry" => self.newton.damped_retry = num(key, v)?,
            "bound_tol" => self.tolerances.bound = num(key, v)?,
            "mass_tol" => self.tolerances.mass = num(key, v)?,
            "stride" => self.stride = num(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "seed" => self.seed = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Parses `text` on top of the defaults of the scenario it names
    /// (or `fallback` when it names none).
    pub fn parse(text: &str, fallback: ScenarioKind) -> Result<Self> {
        let map = parse_pairs(text)?;
        let scenario = match map.get("scenario") {
            Some(s) => ScenarioKind::from_name(s).ok_or_else(|| bad("scenario", s))?,
            None => fallback,
        };
        let mut cfg = RunConfig::for_scenario(scenario);
        cfg.apply(&map)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        // scenario first so later keys are not reset by it
        if let Some(s) = map.get("scenario") {
            self.set("scenario", s)?;
        }
        for (k, v) in map.iter().filter(|(k, _)| k.as_str() != "scenario") {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path, fallback: ScenarioKind) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, fallback)
    }

    /// All keys, floats in shortest round-trip form.
    pub fn serialize(&self) -> String {
        let p = &self.params;
        let n = &self.newton;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("scenario", self.scenario.name().into());
        kv("nx", self.nx.to_string());
        kv("ny", self.ny.to_string());
        kv("dt", f(self.dt));
        kv("t_end", f(self.t_end));
        kv("steps", self.steps.map_or("auto".into(), |s| s.to_string()));
        kv("chi", f(self.chi));
        kv("eps", f(p.eps));
        kv("lambda", f(p.lambda));
        kv("rho1", f(p.rho1));
        kv("rho2", f(p.rho2));
        kv("eta", f(p.eta));
        kv("delta", f(p.delta));
        kv("xi", f(p.xi));
        kv("gravity_x", f(p.gravity[0]));
        kv("gravity_y", f(p.gravity[1]));
        kv("pair", self.pair.name().into());
        kv("backend", n.linear_backend.name().into());
        kv("abs_tol", f(n.abs_tol));
        kv("rel_tol", f(n.rel_tol));
        kv("max_iter", n.max_iter.to_string());
        kv("gmres_tol", f(n.gmres_tol));
        kv("gmres_restart", n.gmres_restart.to_string());
        kv("damping", n.damping.to_string());
        kv("max_halvings", n.max_halvings.to_string());
        kv("damped_retry", n.damped_retry.to_string());
        kv("bound_tol", f(self.tolerances.bound));
        kv("mass_tol", f(self.tolerances.mass));
        kv("stride", self.stride.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("seed", self.seed.to_string());
        s
    }
}

pub fn known_keys() -> &'static [&'static str] {
    KEYS
}

/// Splits `key = value` lines into a map; duplicate keys are rejected.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{raw}'", i + 1)))?;
        let k = k.trim().to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", i + 1)));
        }
    }
    Ok(map)
}

fn f(x: f64) -> String {
    format!("{x:?}")
}

fn bad(key: &str, v: &str) -> Error {
    Error::Config(format!("invalid value '{v}' for '{key}'"))
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v))
}
