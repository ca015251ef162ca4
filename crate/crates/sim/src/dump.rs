//! Full-precision text dumps of a time level.

use std::fmt::Write as _;
use std::path::Path;

use chns_base::{Error, Result};
use chns_system::State;

/// Raw contents of a state dump.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDump {
    pub step: usize,
    pub t: f64,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Writes `step`, `t` and the four coefficient vectors. Values use the
/// shortest representation that parses back to the same bits.
pub fn write_state(path: &Path, step: usize, t: f64, s: &State) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "step {step}");
    let _ = writeln!(out, "t {t:?}");
    for (name, v) in [("u", &s.u), ("p", &s.p), ("phi", &s.phi), ("mu", &s.mu)] {
        let _ = writeln!(out, "{name} {}", v.len());
        for x in v.iter() {
            let _ = writeln!(out, "{x:?}");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_state(path: &Path) -> Result<StateDump> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |detail: String| Error::Parse { path: path.into(), detail };
    let mut lines = text.lines();
    let header = |lines: &mut std::str::Lines, key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("missing '{key}' line")))?;
        let (k, v) = line.split_once(' ').ok_or_else(|| bad(format!("malformed line '{line}'")))?;
        if k != key {
            return Err(bad(format!("expected '{key}', found '{k}'")));
        }
        Ok(v.to_string())
    };
    let step = header(&mut lines, "step")?.parse().map_err(|e| bad(format!("step: {e}")))?;
    let t = header(&mut lines, "t")?.parse().map_err(|e| bad(format!("t: {e}")))?;
    let mut vecs = Vec::new();
    for key in ["u", "p", "phi", "mu"] {
        let n: usize = header(&mut lines, key)?.parse().map_err(|e| bad(format!("{key} length: {e}")))?;
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let line = lines.next().ok_or_else(|| bad(format!("{key}: expected {n} values, found {i}")))?;
            v.push(line.trim().parse::<f64>().map_err(|e| bad(format!("{key}[{i}]: {e}")))?);
        }
        vecs.push(v);
    }
    let mu = vecs.pop().unwrap();
    let phi = vecs.pop().unwrap();
    let p = vecs.pop().unwrap();
    let u = vecs.pop().unwrap();
    Ok(StateDump { step, t, u, p, phi, mu })
}
