//! Legacy ASCII VTK output and a minimal reader for it.

use std::fmt::Write as _;
use std::path::Path;

use chns_base::{Error, Result};
use chns_fespace::Discretization;
use chns_mesh::StructuredTriMesh;
use chns_system::State;

/// Display cap of the scaled velocity.
pub const U_SCALE_CAP: f64 = 5e-2;

/// Scaled velocity samples: rescaled to `‖u_s‖∞ = 5e-2` when the largest
/// sample magnitude reaches the cap, unchanged otherwise.
pub fn scaled_velocity(samples: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let inf = samples.iter().fold(0.0f64, |m, u| m.max(u[0].hypot(u[1])));
    if inf >= U_SCALE_CAP {
        let s = U_SCALE_CAP / inf;
        samples.iter().map(|u| [u[0] * s, u[1] * s]).collect()
    } else {
        samples.to_vec()
    }
}

fn header(out: &mut String, mesh: &StructuredTriMesh, title: &str) {
    let _ = writeln!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", mesh.num_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:?} {:?} 0", v[0], v[1]);
    }
    let ne = mesh.num_elements();
    let _ = writeln!(out, "CELLS {ne} {}", 4 * ne);
    for el in &mesh.elements {
        let [a, b, c] = el.vertices;
        let _ = writeln!(out, "3 {a} {b} {c}");
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    for _ in 0..ne {
        let _ = writeln!(out, "5");
    }
}

fn scalars(out: &mut String, name: &str, v: impl Iterator<Item = f64>) {
    let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for x in v {
        let _ = writeln!(out, "{x:?}");
    }
}

fn vectors(out: &mut String, name: &str, v: &[[f64; 2]]) {
    let _ = writeln!(out, "VECTORS {name} double");
    for u in v {
        let _ = writeln!(out, "{:?} {:?} 0", u[0], u[1]);
    }
}

/// Mesh only, for inspection.
pub fn write_mesh(path: &Path, mesh: &StructuredTriMesh) -> Result<()> {
    let mut out = String::new();
    header(&mut out, mesh, "mesh");
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Cell data: `phi` and elementwise mean pressure `p`. Point data: `phi_h`,
/// `mu`, `u` and `u_s` sampled at the vertices.
pub fn write_vtk(path: &Path, d: &Discretization, s: &State) -> Result<()> {
    let mesh = &d.mesh;
    let mut out = String::new();
    header(&mut out, mesh, "chns fields");
    let ne = mesh.num_elements();
    let _ = writeln!(out, "CELL_DATA {ne}");
    scalars(&mut out, "phi", s.phi.iter().copied());
    let third = [1.0 / 3.0; 3];
    scalars(&mut out, "p", (0..ne).map(|t| d.pressure_at_lambda(t, third, &s.p)));
    let nv = mesh.num_vertices();
    let _ = writeln!(out, "POINT_DATA {nv}");
    scalars(&mut out, "phi_h", s.phi_h.iter().copied());
    scalars(&mut out, "mu", s.mu.iter().copied());
    let ns = d.velocity.scalar_count;
    let u: Vec<[f64; 2]> = (0..nv).map(|v| [s.u[v], s.u[ns + v]]).collect();
    vectors(&mut out, "u", &u);
    vectors(&mut out, "u_s", &scaled_velocity(&u));
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parsed contents of a file written by [`write_vtk`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_scalars: Vec<(String, Vec<f64>)>,
    pub point_scalars: Vec<(String, Vec<f64>)>,
    pub point_vectors: Vec<(String, Vec<[f64; 3]>)>,
}

impl VtkData {
    pub fn cell_scalar(&self, name: &str) -> Option<&[f64]> {
        self.cell_scalars.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn point_scalar(&self, name: &str) -> Option<&[f64]> {
        self.point_scalars.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn point_vector(&self, name: &str) -> Option<&[[f64; 3]]> {
        self.point_vectors.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Reads the subset of legacy VTK produced by this crate.
pub fn read_vtk(path: &Path) -> Result<VtkData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |detail: String| Error::Parse { path: path.into(), detail };
    let mut tok = text.lines().skip(4).flat_map(str::split_whitespace).peekable();
    let num = |what: &str, tok: &mut dyn Iterator<Item = &str>| -> Result<f64> {
        let t = tok.next().ok_or_else(|| bad(format!("unexpected end of file in {what}")))?;
        t.parse::<f64>().map_err(|e| bad(format!("{what}: '{t}': {e}")))
    };
    let mut data = VtkData::default();
    let mut in_cells = true;
    let mut count = 0usize;
    while let Some(key) = tok.next() {
        match key {
            "POINTS" => {
                let n = num("POINTS", &mut tok)? as usize;
                tok.next();
                for _ in 0..n {
                    data.points.push([num("point", &mut tok)?, num("point", &mut tok)?, num("point", &mut tok)?]);
                }
            }
            "CELLS" => {
                let n = num("CELLS", &mut tok)? as usize;
                num("CELLS", &mut tok)?;
                for _ in 0..n {
                    let k = num("cell", &mut tok)? as usize;
                    let mut c = Vec::with_capacity(k);
                    for _ in 0..k {
                        c.push(num("cell", &mut tok)? as usize);
                    }
                    data.cells.push(c);
                }
            }
            "CELL_TYPES" => {
                let n = num("CELL_TYPES", &mut tok)? as usize;
                for _ in 0..n {
                    num("cell type", &mut tok)?;
                }
            }
            "CELL_DATA" => {
                in_cells = true;
                count = num("CELL_DATA", &mut tok)? as usize;
            }
            "POINT_DATA" => {
                in_cells = false;
                count = num("POINT_DATA", &mut tok)? as usize;
            }
            "SCALARS" => {
                let name = tok.next().ok_or_else(|| bad("SCALARS without name".into()))?.to_string();
                tok.next();
                tok.next();
                if tok.next() != Some("LOOKUP_TABLE") {
                    return Err(bad(format!("SCALARS {name}: missing LOOKUP_TABLE")));
                }
                tok.next();
                let mut v = Vec::with_capacity(count);
                for _ in 0..count {
                    v.push(num(&name, &mut tok)?);
                }
                if in_cells {
                    data.cell_scalars.push((name, v));
                } else {
                    data.point_scalars.push((name, v));
                }
            }
            "VECTORS" => {
                let name = tok.next().ok_or_else(|| bad("VECTORS without name".into()))?.to_string();
                tok.next();
                let mut v = Vec::with_capacity(count);
                for _ in 0..count {
                    v.push([num(&name, &mut tok)?, num(&name, &mut tok)?, num(&name, &mut tok)?]);
                }
                data.point_vectors.push((name, v));
            }
            other => return Err(bad(format!("unexpected token '{other}'"))),
        }
    }
    Ok(data)
}
